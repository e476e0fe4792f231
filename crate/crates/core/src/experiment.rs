//! End-to-end experiment pipeline: plan, solve, baseline, roll out,
//! aggregate, and write artifacts.
//!
//! Every artifact is first written to a staging directory inside the output
//! directory and moved into place only once the whole step succeeded, so a
//! failed run leaves no partial files behind.
//!
//! Output layout:
//!
//! | path | content |
//! |------|---------|
//! | `runs.csv` | one row per rollout |
//! | `aggregate.csv` | one row per (task, scenario, method) |
//! | `traces.csv` | every action taken in every rollout |
//! | `planned.csv` | solver-predicted expected totals per policy |
//! | `policies/{task}_{scenario}_{method}.csv` | serialized policies |
//! | `plots/{task}.svg` | grouped bar chart per task |
//! | `solver_times.json` | solve wall times, ms |
//! | `metadata.json` | seeds, horizons and statistics conventions |

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::cmdp::{solve_cmdp_with, CmdpError, StochasticPolicy};
use crate::config::{ExperimentConfig, ScenarioSpec, TaskSpec};
use crate::geometry::CameraModel;
use crate::harness::{self, AggregateResult, Cell, HarnessError, MatrixOptions, Method, Policy, RunResult};
use crate::lp::write_mps;
use crate::momdp::{solve_momdp, DeterministicPolicy, MomdpError};
use crate::objectives::Objectives;
use crate::plot::render_task_svg;
use crate::smdp::{ModelError, ObservationModel, RobotState};
use crate::templates::reference_distance;
use crate::trajectory::{
    exact_rates, expected_rates_over, sample_evaluation_set, sample_planning_set, ExpectedRateTable,
    SampledTrajectory, TrajectoryError,
};

const STAGING_DIR: &str = ".staging";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("task `{task}`: {source}")]
    Model { task: String, source: ModelError },
    #[error("task `{task}`: {source}")]
    Trajectory { task: String, source: TrajectoryError },
    #[error("task `{task}`, scenario `{scenario}`: {source}")]
    Momdp {
        task: String,
        scenario: String,
        source: MomdpError,
    },
    #[error("task `{task}`, scenario `{scenario}`: {source}")]
    Cmdp {
        task: String,
        scenario: String,
        source: CmdpError,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("writing output: {0}")]
    Io(#[from] io::Error),
}

/// Everything that depends on the task but not on the scenario.
pub struct TaskSetup {
    pub spec: TaskSpec,
    pub model: ObservationModel,
    pub camera: CameraModel,
    pub planning: Vec<SampledTrajectory>,
    pub planning_rates: ExpectedRateTable,
    pub evaluation: Vec<SampledTrajectory>,
    /// Exact rates of each evaluation trajectory.
    pub realized: Vec<ExpectedRateTable>,
}

pub fn prepare_task(cfg: &ExperimentConfig, spec: &TaskSpec) -> Result<TaskSetup, ExperimentError> {
    let task = || spec.name.clone();
    let evaluation = sample_evaluation_set(&spec.distribution, cfg.n_eval_trajectories);
    let horizon = cfg
        .horizon
        .unwrap_or_else(|| evaluation.iter().map(|t| t.total_epochs()).max().unwrap_or(1));
    let model = ObservationModel::with_defaults(
        cfg.waypoints.clone(),
        horizon,
        RobotState::new(cfg.initial_waypoint, false),
    )
    .map_err(|source| ExperimentError::Model { task: task(), source })?;
    let mut camera = cfg.camera.model;
    if cfg.camera.auto_reference {
        camera.reference_distance = reference_distance(&cfg.waypoints, &spec.distribution).max(1e-3);
    }
    let traj_err = |source| ExperimentError::Trajectory { task: task(), source };
    let planning = sample_planning_set(&spec.distribution, cfg.n_planning_samples);
    let planning_rates =
        expected_rates_over(&model, &planning, &camera, &cfg.cost_params).map_err(traj_err)?;
    let realized = evaluation
        .par_iter()
        .map(|t| exact_rates(&model, &t.extended_to(horizon), &camera, &cfg.cost_params))
        .collect::<Result<Vec<_>, _>>()
        .map_err(traj_err)?;
    Ok(TaskSetup {
        spec: spec.clone(),
        model,
        camera,
        planning,
        planning_rates,
        evaluation,
        realized,
    })
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Vec<TaskSetup>, ExperimentError> {
    cfg.tasks.iter().map(|t| prepare_task(cfg, t)).collect()
}

#[derive(Clone, Debug)]
pub enum SolvedPolicy {
    Deterministic(DeterministicPolicy),
    Stochastic(StochasticPolicy),
}

impl SolvedPolicy {
    pub fn as_policy(&self) -> &dyn Policy {
        match self {
            SolvedPolicy::Deterministic(p) => p,
            SolvedPolicy::Stochastic(p) => p,
        }
    }

    pub fn write_csv<W: Write>(&self, model: &ObservationModel, out: W) -> io::Result<()> {
        match self {
            SolvedPolicy::Deterministic(p) => p.write_csv(model, out),
            SolvedPolicy::Stochastic(p) => p.write_csv(model, out),
        }
    }
}

/// A solved (task, scenario, method) cell.
#[derive(Clone, Debug)]
pub struct SolvedCell {
    pub task: usize,
    pub scenario: usize,
    pub method: Method,
    pub policy: SolvedPolicy,
    /// Expected totals from the initial state under the planning rates.
    pub expected: Objectives,
    pub solve_ms: f64,
}

fn solve_one(
    cfg: &ExperimentConfig,
    setup: &TaskSetup,
    scenario: &ScenarioSpec,
    method: Method,
    rates: &ExpectedRateTable,
) -> Result<(SolvedPolicy, Objectives), ExperimentError> {
    let model = &setup.model;
    match method {
        Method::Momdp => {
            let err = |source| ExperimentError::Momdp {
                task: setup.spec.name.clone(),
                scenario: scenario.name.clone(),
                source,
            };
            let weights = scenario.weights.expect("validated config has weights for momdp");
            let policy = solve_momdp(model, rates, &weights).map_err(err)?;
            let value = policy.value(0, model.initial_index());
            Ok((SolvedPolicy::Deterministic(policy), value))
        }
        Method::Cmdp => {
            let thresholds = scenario.thresholds.expect("validated config has thresholds for cmdp");
            let solution = solve_cmdp_with(model, rates, &thresholds, &cfg.solver).map_err(|source| {
                ExperimentError::Cmdp {
                    task: setup.spec.name.clone(),
                    scenario: scenario.name.clone(),
                    source,
                }
            })?;
            let value = solution.policy.expected_value();
            Ok((SolvedPolicy::Stochastic(solution.policy), value))
        }
    }
}

/// Solves every (task, scenario, method) cell on the planning rates. Cells
/// are solved in parallel and returned in task, scenario, method order.
pub fn solve_policies(
    cfg: &ExperimentConfig,
    setups: &[TaskSetup],
) -> Result<Vec<SolvedCell>, ExperimentError> {
    let mut jobs = Vec::new();
    for t in 0..setups.len() {
        for s in 0..cfg.scenarios.len() {
            for &m in &cfg.methods {
                jobs.push((t, s, m));
            }
        }
    }
    jobs.par_iter()
        .map(|&(t, s, method)| {
            let setup = &setups[t];
            let started = Instant::now();
            let (policy, expected) =
                solve_one(cfg, setup, &cfg.scenarios[s], method, &setup.planning_rates)?;
            Ok(SolvedCell {
                task: t,
                scenario: s,
                method,
                policy,
                expected,
                solve_ms: started.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect()
}

/// Known-trajectory optimum for one scenario: the mean over evaluation
/// trajectories of the optimal expected totals under their exact rates,
/// with the scenario's thresholds when it has them and its weights
/// otherwise. Trajectories whose budgets cannot be met are left out; the
/// count of those kept is returned alongside.
pub fn baseline(
    cfg: &ExperimentConfig,
    setup: &TaskSetup,
    scenario: &ScenarioSpec,
) -> Result<Option<(Objectives, usize)>, ExperimentError> {
    let method = if scenario.thresholds.is_some() {
        Method::Cmdp
    } else {
        Method::Momdp
    };
    let values = setup
        .realized
        .par_iter()
        .map(|rates| match solve_one(cfg, setup, scenario, method, rates) {
            Ok((_, v)) => Ok(Some(v)),
            Err(ExperimentError::Cmdp {
                source: CmdpError::Unsatisfiable(_),
                ..
            }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let kept: Vec<Objectives> = values.into_iter().flatten().collect();
    if kept.is_empty() {
        return Ok(None);
    }
    let (mean, _) = harness::mean_and_stddev(&kept);
    Ok(Some((mean, kept.len())))
}

pub struct ExperimentReport {
    pub setups: Vec<TaskSetup>,
    pub solved: Vec<SolvedCell>,
    pub runs: Vec<RunResult>,
    pub aggregates: Vec<AggregateResult>,
}

/// Output directory with a staging area that is removed unless committed.
struct Staging {
    out: PathBuf,
    dir: PathBuf,
    committed: bool,
}

impl Staging {
    fn new(out: &Path) -> io::Result<Self> {
        fs::create_dir_all(out)?;
        let dir = out.join(STAGING_DIR);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(Staging {
            out: out.to_path_buf(),
            dir,
            committed: false,
        })
    }

    fn create(&self, relative: &str) -> io::Result<BufWriter<fs::File>> {
        let path = self.dir.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(BufWriter::new(fs::File::create(path)?))
    }

    fn write(&self, relative: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
        let mut f = self.create(relative)?;
        body(&mut f)?;
        f.flush()
    }

    /// Moves staged entries over their final paths.
    fn commit(mut self) -> io::Result<Vec<PathBuf>> {
        let mut names: Vec<_> = fs::read_dir(&self.dir)?
            .map(|e| e.map(|e| e.file_name()))
            .collect::<Result<_, _>>()?;
        names.sort();
        let mut moved = Vec::with_capacity(names.len());
        for name in names {
            let target = self.out.join(&name);
            if target.is_dir() {
                fs::remove_dir_all(&target)?;
            } else if target.exists() {
                fs::remove_file(&target)?;
            }
            fs::rename(self.dir.join(&name), &target)?;
            moved.push(target);
        }
        fs::remove_dir(&self.dir)?;
        self.committed = true;
        Ok(moved)
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

fn policy_path(cfg: &ExperimentConfig, setups: &[TaskSetup], cell: &SolvedCell) -> String {
    format!(
        "policies/{}_{}_{}.csv",
        setups[cell.task].spec.name, cfg.scenarios[cell.scenario].name, cell.method
    )
}

fn write_solutions(
    staging: &Staging,
    cfg: &ExperimentConfig,
    setups: &[TaskSetup],
    solved: &[SolvedCell],
) -> io::Result<()> {
    for cell in solved {
        let model = &setups[cell.task].model;
        let mut f = staging.create(&policy_path(cfg, setups, cell))?;
        cell.policy.write_csv(model, &mut f)?;
        f.flush()?;
    }
    staging.write("planned.csv", |out| {
        writeln!(out, "task,scenario,method,r,c0,c1,c2")?;
        for c in solved {
            let v = c.expected;
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                setups[c.task].spec.name, cfg.scenarios[c.scenario].name, c.method, v[0], v[1], v[2], v[3]
            )?;
        }
        Ok(())
    })?;
    let times: Vec<_> = solved
        .iter()
        .map(|c| {
            json!({
                "task": setups[c.task].spec.name,
                "scenario": cfg.scenarios[c.scenario].name,
                "method": c.method.name(),
                "solve_ms": c.solve_ms,
            })
        })
        .collect();
    staging.write("solver_times.json", |out| {
        serde_json::to_writer_pretty(&mut *out, &times)?;
        writeln!(out)
    })?;
    staging.write("metadata.json", |out| {
        serde_json::to_writer_pretty(&mut *out, &metadata(cfg, setups))?;
        writeln!(out)
    })
}

fn metadata(cfg: &ExperimentConfig, setups: &[TaskSetup]) -> serde_json::Value {
    let tasks: Vec<_> = setups
        .iter()
        .map(|s| {
            json!({
                "name": s.spec.name,
                "horizon": s.model.horizon(),
                "states": s.model.space().len(),
                "reference_distance": s.camera.reference_distance,
            })
        })
        .collect();
    let scenarios: Vec<_> = cfg
        .scenarios
        .iter()
        .map(|s| {
            json!({
                "name": s.name,
                "weights": s.weights.map(|w| w.to_array()),
                "thresholds": s.thresholds.map(|d| d.to_array()),
            })
        })
        .collect();
    json!({
        "seed": cfg.seed,
        "n_planning_samples": cfg.n_planning_samples,
        "n_eval_trajectories": cfg.n_eval_trajectories,
        "n_runs": cfg.n_runs,
        "methods": cfg.methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
        "tasks": tasks,
        "scenarios": scenarios,
        "stddev": "sample standard deviation (n - 1) pooled over every rollout of a cell: n_eval_trajectories x n_runs",
        "baseline": "mean over evaluation trajectories of the optimum under that trajectory's exact rates; trajectories with unattainable budgets are skipped and baseline_n counts the rest",
        "rollout_streams": "run r on evaluation trajectory i uses stream i * n_runs + r for every cell",
    })
}

/// Plans and solves every cell, writing policies, predicted values, solver
/// times and metadata.
pub fn run_solve(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SolvedCell>, ExperimentError> {
    let staging = Staging::new(out)?;
    let setups = prepare(cfg)?;
    let solved = solve_policies(cfg, &setups)?;
    write_solutions(&staging, cfg, &setups, &solved)?;
    staging.commit()?;
    Ok(solved)
}

/// The full pipeline: plan, solve, baseline, roll out, aggregate, plot.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport, ExperimentError> {
    let staging = Staging::new(out)?;
    let setups = prepare(cfg)?;
    let solved = solve_policies(cfg, &setups)?;

    let mut baselines = Vec::new();
    for setup in &setups {
        for scenario in &cfg.scenarios {
            baselines.push(if cfg.baseline {
                baseline(cfg, setup, scenario)?
            } else {
                None
            });
        }
    }

    let cells: Vec<Cell<'_>> = solved
        .iter()
        .map(|c| {
            let setup = &setups[c.task];
            Cell {
                task: &setup.spec.name,
                scenario: &cfg.scenarios[c.scenario].name,
                method: c.method,
                model: &setup.model,
                policy: c.policy.as_policy(),
                realized: &setup.realized,
                baseline: baselines[c.task * cfg.scenarios.len() + c.scenario],
            }
        })
        .collect();
    let options = MatrixOptions {
        n_runs: cfg.n_runs,
        seed: cfg.seed,
        timing: cfg.timing,
    };
    let (runs, aggregates) = harness::run_matrix(&cells, &options)?;
    drop(cells);

    write_solutions(&staging, cfg, &setups, &solved)?;
    staging.write("runs.csv", |out| harness::write_runs_csv(&runs, out))?;
    staging.write("aggregate.csv", |out| harness::write_aggregate_csv(&aggregates, out))?;
    staging.write("traces.csv", |out| harness::write_traces_csv(&runs, out))?;
    for setup in &setups {
        let svg = render_task_svg(&setup.spec.name, &aggregates, setup.model.horizon() as f64);
        staging.write(&format!("plots/{}.svg", setup.spec.name), |out| out.write_all(svg.as_bytes()))?;
    }
    staging.commit()?;
    Ok(ExperimentReport {
        setups,
        solved,
        runs,
        aggregates,
    })
}

/// Writes the occupancy LP of every (task, scenario) with thresholds to
/// `lp/{task}_{scenario}.mps`.
pub fn export_lps(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let staging = Staging::new(out)?;
    let mut written = Vec::new();
    for setup in prepare(cfg)? {
        for scenario in &cfg.scenarios {
            let Some(thresholds) = scenario.thresholds else {
                continue;
            };
            let program = crate::cmdp::build_cmdp_lp(&setup.model, &setup.planning_rates, &thresholds)
                .map_err(|source| ExperimentError::Cmdp {
                    task: setup.spec.name.clone(),
                    scenario: scenario.name.clone(),
                    source,
                })?;
            let rel = format!("lp/{}_{}.mps", setup.spec.name, scenario.name);
            staging.write(&rel, |mut w| write_mps(&program.lp, "CMDP", &mut w))?;
            written.push(out.join(rel));
        }
    }
    staging.commit()?;
    Ok(written)
}

/// Writes the planning and evaluation trajectories of every task to
/// `trajectories/{task}_{planning|eval}_{index}.csv`.
pub fn export_trajectories(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let staging = Staging::new(out)?;
    let mut written = Vec::new();
    for spec in &cfg.tasks {
        let sets = [
            ("planning", sample_planning_set(&spec.distribution, cfg.n_planning_samples)),
            ("eval", sample_evaluation_set(&spec.distribution, cfg.n_eval_trajectories)),
        ];
        for (kind, set) in sets {
            for (i, traj) in set.iter().enumerate() {
                let rel = format!("trajectories/{}_{kind}_{i:03}.csv", spec.name);
                staging.write(&rel, |w| traj.write_csv(w))?;
                written.push(out.join(rel));
            }
        }
    }
    staging.commit()?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;

    fn small_config(extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
version = 1
seed = 5
horizon = 24
n_planning_samples = 3
n_eval_trajectories = 2
n_runs = 2
method = "both"
tasks = ["experiment"]
scenarios = ["scenario1", {{ name = "loose", weights = [1, 0, 0, 0], thresholds = [24, 24, 24] }}]
{extra}
"#
        );
        text.parse::<ConfigFile>().unwrap().resolve().unwrap()
    }

    #[test]
    fn pipeline_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config("");
        let report = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(report.aggregates.len(), 4);
        assert_eq!(report.runs.len(), 4 * 2 * 2);
        for f in [
            "runs.csv",
            "aggregate.csv",
            "traces.csv",
            "planned.csv",
            "solver_times.json",
            "metadata.json",
            "plots/experiment.svg",
            "policies/experiment_scenario1_momdp.csv",
            "policies/experiment_loose_cmdp.csv",
        ] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        assert!(!dir.path().join(STAGING_DIR).exists());
        let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        assert_eq!(agg.lines().count(), 5);
        let loose = report
            .aggregates
            .iter()
            .find(|a| a.scenario == "loose")
            .unwrap();
        assert_eq!(loose.baseline_n, 2);
    }

    #[test]
    fn infeasible_budget_leaves_no_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config("");
        cfg.scenarios[1].thresholds = Some(crate::cmdp::ConstraintThresholds::new(24.0, 24.0, 0.0).unwrap());
        match run_experiment(&cfg, dir.path()) {
            Err(ExperimentError::Cmdp { scenario, source: CmdpError::Unsatisfiable(_), .. }) => {
                assert_eq!(scenario, "loose")
            }
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected infeasibility"),
        }
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn exports_lp_and_trajectories() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config("");
        let lps = export_lps(&cfg, dir.path()).unwrap();
        assert_eq!(lps.len(), 2);
        let text = fs::read_to_string(&lps[0]).unwrap();
        assert!(text.contains("ROWS") && text.trim_end().ends_with("ENDATA"));
        let trajs = export_trajectories(&cfg, dir.path()).unwrap();
        assert_eq!(trajs.len(), 5);
        assert!(dir.path().join("lp").is_dir());
    }
}
