//! Experiment configuration files.
//!
//! A config is a single TOML document with an explicit `version`. Tasks and
//! scenarios are either built-in names (`experiment`, `inspection`,
//! `transfer`; `scenario1` … `scenario4`) or inline tables. Unknown keys are
//! rejected everywhere.
//!
//! ```toml
//! version = 1
//! seed = 7
//! horizon = 180
//! n_planning_samples = 20
//! n_eval_trajectories = 5
//! n_runs = 5
//! method = "both"
//! tasks = ["experiment", "inspection", "transfer"]
//! scenarios = ["scenario1", "scenario2", "scenario3", "scenario4"]
//! ```
//!
//! [`ConfigFile`] is the document as written and serializes back to an
//! equivalent document. [`ConfigFile::resolve`] validates it and expands
//! presets into an [`ExperimentConfig`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmdp::ConstraintThresholds;
use crate::geometry::{BodyBox, CameraModel, CostParams, HumanPose};
use crate::harness::Method;
use crate::lp::{PricingRule, SolverOptions, DEFAULT_DEGENERATE_STREAK};
use crate::momdp::ScalarizationWeights;
use crate::smdp::Waypoint;
use crate::templates::{self, TaskTemplate};
use crate::trajectory::{SegmentMotion, TaskSegment, TrajectoryDistribution};

pub const CONFIG_VERSION: u32 = 1;

/// Built-in cost weighting scenarios: (name, weights, thresholds).
pub const SCENARIO_PRESETS: [(&str, [f64; 4], [f64; 3]); 4] = [
    ("scenario1", [0.67, 0.33, 0.0, 0.0], [1.0, 180.0, 180.0]),
    ("scenario2", [0.33, 0.41, 0.0, 0.26], [1.0, 180.0, 40.0]),
    ("scenario3", [0.35, 0.43, 0.22, 0.0], [1.0, 20.0, 180.0]),
    ("scenario4", [0.27, 0.34, 0.17, 0.22], [1.0, 20.0, 40.0]),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Momdp,
    Cmdp,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Momdp => vec![Method::Momdp],
            MethodChoice::Cmdp => vec![Method::Cmdp],
            MethodChoice::Both => vec![Method::Momdp, Method::Cmdp],
        }
    }
}

impl FromStr for MethodChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "momdp" => Ok(MethodChoice::Momdp),
            "cmdp" => Ok(MethodChoice::Cmdp),
            "both" => Ok(MethodChoice::Both),
            _ => Err(format!("unknown method `{s}` (expected momdp, cmdp or both)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pricing {
    Bland,
    /// Largest reduced cost with a fallback to Bland's rule on degenerate streaks.
    #[default]
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceDistance {
    Fixed(f64),
    Auto(Auto),
}

/// Camera parameters; omitted fields take the [`CameraModel`] defaults.
/// `reference_distance = "auto"` (the default) uses the distance from the
/// nearest waypoint to the task's mean region of interest.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizontal_fov: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertical_fov: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_distance: Option<ReferenceDistance>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointEntry {
    pub position: [f64; 3],
    #[serde(default)]
    pub handrail: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxEntry {
    pub offset: [f64; 3],
    pub half_extents: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub position: [f64; 3],
    /// Heading about +z, radians. Exclusive with `orientation`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw: Option<f64>,
    /// Quaternion `[w, x, y, z]`, normalized on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<[f64; 4]>,
    pub duration_mean: f64,
    #[serde(default)]
    pub duration_stddev: f64,
    pub motion: SegmentMotion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position_stddev: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_offset: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace_box: Option<BoxEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<BoxEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineTask {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation_stddev: Option<f64>,
    pub segments: Vec<SegmentEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskEntry {
    Template(String),
    Inline(InlineTask),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineScenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioEntry {
    Preset(String),
    Inline(InlineScenario),
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// The configuration document as written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub version: u32,
    pub seed: u64,
    /// Epochs; defaults to the longest evaluation trajectory of each task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub n_planning_samples: usize,
    pub n_eval_trajectories: usize,
    pub n_runs: usize,
    pub method: MethodChoice,
    #[serde(default)]
    pub pricing: Pricing,
    /// Solve the known-trajectory baseline for every evaluation trajectory.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub baseline: bool,
    /// Record wall times in the per-run CSV. Breaks byte-reproducibility.
    #[serde(default, skip_serializing_if = "is_false")]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_waypoint: Option<usize>,
    pub tasks: Vec<TaskEntry>,
    pub scenarios: Vec<ScenarioEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_params: Option<CostParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<WaypointEntry>>,
}

/// Camera with the reference distance possibly left to be derived per task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraSetting {
    pub model: CameraModel,
    pub auto_reference: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub distribution: TrajectoryDistribution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub weights: Option<ScalarizationWeights>,
    pub thresholds: Option<ConstraintThresholds>,
}

/// A validated configuration with presets expanded.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub horizon: Option<usize>,
    pub n_planning_samples: usize,
    pub n_eval_trajectories: usize,
    pub n_runs: usize,
    pub methods: Vec<Method>,
    pub solver: SolverOptions,
    pub baseline: bool,
    pub timing: bool,
    pub waypoints: Vec<Waypoint>,
    pub initial_waypoint: usize,
    pub tasks: Vec<TaskSpec>,
    pub scenarios: Vec<ScenarioSpec>,
    pub camera: CameraSetting,
    pub cost_params: CostParams,
}

/// Expands a built-in scenario name.
pub fn scenario_preset(name: &str) -> Option<ScenarioSpec> {
    SCENARIO_PRESETS
        .iter()
        .find(|(n, _, _)| *n == name)
        .map(|&(n, w, d)| ScenarioSpec {
            name: n.to_string(),
            weights: Some(ScalarizationWeights::try_from(w).expect("preset weights are valid")),
            thresholds: Some(ConstraintThresholds::try_from(d).expect("preset thresholds are valid")),
        })
}

impl FromStr for ConfigFile {
    type Err = ConfigError;
    fn from_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => line_column(text, span.start),
                None => (1, 1),
            };
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(
                "version",
                format!("unsupported version {} (expected {CONFIG_VERSION})", self.version),
            ));
        }
        for (field, n) in [
            ("n_planning_samples", self.n_planning_samples),
            ("n_eval_trajectories", self.n_eval_trajectories),
            ("n_runs", self.n_runs),
        ] {
            if n == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if self.horizon == Some(0) {
            return Err(invalid("horizon", "must be at least 1"));
        }

        let (waypoints, default_initial) = match &self.waypoints {
            None => (templates::lattice_waypoints(), templates::INITIAL_WAYPOINT),
            Some(list) if list.is_empty() => return Err(invalid("waypoints", "must not be empty")),
            Some(list) => {
                let mut out = Vec::with_capacity(list.len());
                for (i, w) in list.iter().enumerate() {
                    if w.position.iter().any(|v| !v.is_finite()) {
                        return Err(invalid(format!("waypoints[{i}].position"), "must be finite"));
                    }
                    out.push(Waypoint::new(i, w.position, w.handrail));
                }
                (out, 0)
            }
        };
        let initial_waypoint = self.initial_waypoint.unwrap_or(default_initial);
        if initial_waypoint >= waypoints.len() {
            return Err(invalid(
                "initial_waypoint",
                format!("{initial_waypoint} is not one of the {} waypoints", waypoints.len()),
            ));
        }

        let camera = self.resolve_camera()?;
        let cost_params = self.cost_params.unwrap_or_default();
        cost_params
            .validate()
            .map_err(|e| invalid("cost_params", e))?;

        let methods = self.method.methods();
        if self.tasks.is_empty() {
            return Err(invalid("tasks", "must list at least one task"));
        }
        let mut tasks = Vec::with_capacity(self.tasks.len());
        for (i, entry) in self.tasks.iter().enumerate() {
            let task = resolve_task(entry, i, self.seed)?;
            if tasks.iter().any(|t: &TaskSpec| t.name == task.name) {
                return Err(invalid(format!("tasks[{i}]"), format!("duplicate task `{}`", task.name)));
            }
            tasks.push(task);
        }
        if self.scenarios.is_empty() {
            return Err(invalid("scenarios", "must list at least one scenario"));
        }
        let mut scenarios = Vec::with_capacity(self.scenarios.len());
        for (i, entry) in self.scenarios.iter().enumerate() {
            let s = resolve_scenario(entry, i, &methods)?;
            if scenarios.iter().any(|o: &ScenarioSpec| o.name == s.name) {
                return Err(invalid(format!("scenarios[{i}]"), format!("duplicate scenario `{}`", s.name)));
            }
            scenarios.push(s);
        }

        let solver = match self.pricing {
            Pricing::Bland => SolverOptions::default(),
            Pricing::Hybrid => SolverOptions::with_pricing(PricingRule::DantzigWithBlandFallback {
                streak: DEFAULT_DEGENERATE_STREAK,
            }),
        };

        Ok(ExperimentConfig {
            seed: self.seed,
            horizon: self.horizon,
            n_planning_samples: self.n_planning_samples,
            n_eval_trajectories: self.n_eval_trajectories,
            n_runs: self.n_runs,
            methods,
            solver,
            baseline: self.baseline,
            timing: self.timing,
            waypoints,
            initial_waypoint,
            tasks,
            scenarios,
            camera,
            cost_params,
        })
    }

    fn resolve_camera(&self) -> Result<CameraSetting, ConfigError> {
        let section = self.camera.clone().unwrap_or_default();
        let mut model = CameraModel::default();
        model.horizontal_fov = section.horizontal_fov.unwrap_or(model.horizontal_fov);
        model.vertical_fov = section.vertical_fov.unwrap_or(model.vertical_fov);
        model.max_range = section.max_range.unwrap_or(model.max_range);
        model.min_range = section.min_range.unwrap_or(model.min_range);
        let auto_reference = match section.reference_distance {
            None | Some(ReferenceDistance::Auto(_)) => true,
            Some(ReferenceDistance::Fixed(d)) => {
                model.reference_distance = d;
                false
            }
        };
        model.validate().map_err(|e| invalid("camera", e))?;
        Ok(CameraSetting {
            model,
            auto_reference,
        })
    }
}

fn resolve_task(entry: &TaskEntry, index: usize, seed: u64) -> Result<TaskSpec, ConfigError> {
    let field = format!("tasks[{index}]");
    match entry {
        TaskEntry::Template(name) => {
            let template: TaskTemplate = name.parse().map_err(|e| invalid(&field, e))?;
            let distribution = template.distribution(seed).map_err(|e| invalid(&field, e))?;
            Ok(TaskSpec {
                name: template.name().to_string(),
                distribution,
            })
        }
        TaskEntry::Inline(task) => {
            check_name(&task.name, &format!("{field}.name"))?;
            if task.segments.is_empty() {
                return Err(invalid(format!("{field}.segments"), "must not be empty"));
            }
            let segments = task
                .segments
                .iter()
                .enumerate()
                .map(|(j, s)| resolve_segment(s, &format!("{field}.segments[{j}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let mut distribution =
                TrajectoryDistribution::new(segments, seed).map_err(|e| invalid(&field, e))?;
            if let Some(sd) = task.orientation_stddev {
                distribution.orientation_stddev = sd;
                distribution
                    .validate()
                    .map_err(|e| invalid(format!("{field}.orientation_stddev"), e))?;
            }
            Ok(TaskSpec {
                name: task.name.clone(),
                distribution,
            })
        }
    }
}

/// Names end up in file names and CSV cells.
fn check_name(name: &str, field: &str) -> Result<(), ConfigError> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(invalid(field, "names may use only ASCII letters, digits, `_` and `-`"))
    }
}

fn resolve_segment(s: &SegmentEntry, field: &str) -> Result<TaskSegment, ConfigError> {
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !finite(&s.position) {
        return Err(invalid(format!("{field}.position"), "must be finite"));
    }
    let orientation = match (s.yaw, s.orientation) {
        (Some(_), Some(_)) => {
            return Err(invalid(field, "give either `yaw` or `orientation`, not both"))
        }
        (Some(yaw), None) if yaw.is_finite() => {
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
        }
        (Some(_), None) => return Err(invalid(format!("{field}.yaw"), "must be finite")),
        (None, Some(q)) => {
            let q = Quaternion::new(q[0], q[1], q[2], q[3]);
            if !finite(q.coords.as_slice()) || q.norm() < 1e-9 {
                return Err(invalid(format!("{field}.orientation"), "must be a non-zero quaternion"));
            }
            UnitQuaternion::from_quaternion(q)
        }
        (None, None) => UnitQuaternion::identity(),
    };
    let boxed = |b: Option<BoxEntry>, offset, half, name: &str| {
        let b = b.unwrap_or(BoxEntry {
            offset,
            half_extents: half,
        });
        BodyBox::new(b.offset, b.half_extents).map_err(|e| invalid(format!("{field}.{name}"), e))
    };
    let workspace_box = boxed(
        s.workspace_box,
        templates::WORKSPACE_OFFSET,
        templates::WORKSPACE_HALF,
        "workspace_box",
    )?;
    let roi = boxed(s.roi, templates::ROI_OFFSET, templates::ROI_HALF, "roi")?;
    let position = Vector3::from(s.position);
    let head = Vector3::from(s.head_offset.unwrap_or(templates::HEAD_OFFSET));
    if !(s.duration_mean.is_finite() && s.duration_mean > 0.0) {
        return Err(invalid(format!("{field}.duration_mean"), "must be positive"));
    }
    if !(s.duration_stddev.is_finite() && s.duration_stddev >= 0.0) {
        return Err(invalid(format!("{field}.duration_stddev"), "must be non-negative"));
    }
    let position_stddev = s.position_stddev.unwrap_or(templates::KEY_POSITION_STDDEV);
    if position_stddev.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid(format!("{field}.position_stddev"), "must be non-negative"));
    }
    Ok(TaskSegment {
        key_pose: HumanPose {
            position,
            orientation,
            head_position: position + orientation * head,
            workspace_box,
            roi,
        },
        position_stddev: Vector3::from(position_stddev),
        duration_mean: s.duration_mean,
        duration_stddev: s.duration_stddev,
        motion: s.motion,
    })
}

fn resolve_scenario(
    entry: &ScenarioEntry,
    index: usize,
    methods: &[Method],
) -> Result<ScenarioSpec, ConfigError> {
    let field = format!("scenarios[{index}]");
    let spec = match entry {
        ScenarioEntry::Preset(name) => scenario_preset(name).ok_or_else(|| {
            invalid(
                &field,
                format!("unknown scenario `{name}` (expected scenario1 to scenario4 or an inline table)"),
            )
        })?,
        ScenarioEntry::Inline(s) => {
            check_name(&s.name, &format!("{field}.name"))?;
            let weights = s
                .weights
                .map(ScalarizationWeights::try_from)
                .transpose()
                .map_err(|e| invalid(format!("{field}.weights"), e))?;
            let thresholds = s
                .thresholds
                .map(ConstraintThresholds::try_from)
                .transpose()
                .map_err(|e| invalid(format!("{field}.thresholds"), e))?;
            ScenarioSpec {
                name: s.name.clone(),
                weights,
                thresholds,
            }
        }
    };
    if methods.contains(&Method::Momdp) && spec.weights.is_none() {
        return Err(invalid(format!("{field}.weights"), "required when method includes momdp"));
    }
    if methods.contains(&Method::Cmdp) && spec.thresholds.is_none() {
        return Err(invalid(format!("{field}.thresholds"), "required when method includes cmdp"));
    }
    Ok(spec)
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    ConfigFile::load(path)?.resolve()
}
