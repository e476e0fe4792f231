//! Stochastic human task trajectories: Gaussian key poses and segment
//! timings, per-epoch pose sequences, and the per-epoch reward/cost rate
//! tables averaged over sampled trajectories.

use std::io::{self, Write};

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, BodyBox, CameraModel, CostParams, GeometryError, HumanPose};
use crate::objectives::Objectives;
use crate::smdp::ObservationModel;

/// Default stddev of the key-pose orientation perturbation, radians.
pub const DEFAULT_ORIENTATION_STDDEV: f64 = 0.1;

/// First RNG stream used for evaluation trajectories; planning samples use
/// streams `0..n`, so the two sets never share a stream.
pub const EVALUATION_STREAM_BASE: u64 = 1 << 32;

const TRUNCATION_SIGMAS: f64 = 3.0;
const MIN_SEGMENT_SECONDS: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory distribution needs at least one segment")]
    NoSegments,
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("trajectory covers {covered} epochs but the model horizon is {horizon}")]
    HorizonMismatch { covered: usize, horizon: usize },
    #[error("need at least one trajectory sample")]
    NoSamples,
    #[error("rate table shape mismatch")]
    ShapeMismatch,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMotion {
    /// Hold the key pose for the whole segment.
    Dwell,
    /// Interpolate from this key pose to the next one.
    LinearMoveToNext,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSegment {
    pub key_pose: HumanPose,
    pub position_stddev: Vector3<f64>,
    /// Seconds.
    pub duration_mean: f64,
    /// Seconds.
    pub duration_stddev: f64,
    pub motion: SegmentMotion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDistribution {
    pub segments: Vec<TaskSegment>,
    pub seed: u64,
    pub orientation_stddev: f64,
}

impl TrajectoryDistribution {
    pub fn new(segments: Vec<TaskSegment>, seed: u64) -> Result<Self, TrajectoryError> {
        let dist = TrajectoryDistribution {
            segments,
            seed,
            orientation_stddev: DEFAULT_ORIENTATION_STDDEV,
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.segments.is_empty() {
            return Err(TrajectoryError::NoSegments);
        }
        let bad = |index, reason: &str| TrajectoryError::InvalidSegment {
            index,
            reason: reason.to_string(),
        };
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration_mean > 0.0) {
                return Err(bad(i, "duration_mean must be positive"));
            }
            if !(s.duration_stddev >= 0.0) || s.position_stddev.iter().any(|v| !(*v >= 0.0)) {
                return Err(bad(i, "stddevs must be non-negative"));
            }
            if s.key_pose.workspace_box.half_extents.iter().any(|h| *h <= 0.0)
                || s.key_pose.roi.half_extents.iter().any(|h| *h <= 0.0)
            {
                return Err(bad(i, "box half-extents must be positive"));
            }
        }
        if !(self.orientation_stddev >= 0.0) {
            return Err(bad(0, "orientation stddev must be non-negative"));
        }
        Ok(())
    }

    /// The trajectory with every perturbation at zero.
    pub fn mean_trajectory(&self) -> SampledTrajectory {
        let keys: Vec<HumanPose> = self.segments.iter().map(|s| s.key_pose.clone()).collect();
        let durations = self
            .segments
            .iter()
            .map(|s| round_half_up(s.duration_mean.max(MIN_SEGMENT_SECONDS)))
            .collect::<Vec<_>>();
        build_trajectory(&self.segments, &keys, &durations)
    }

    /// Sum of the mean segment durations, seconds.
    pub fn mean_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_mean).sum()
    }
}

fn round_half_up(seconds: f64) -> usize {
    ((seconds + 0.5).floor() as usize).max(1)
}

/// Standard normal draw rejected outside ±3σ.
fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= TRUNCATION_SIGMAS {
            return z;
        }
    }
}

fn sample_duration(rng: &mut ChaCha8Rng, mean: f64, stddev: f64) -> f64 {
    for _ in 0..1000 {
        let z: f64 = rng.sample(StandardNormal);
        let d = mean + stddev * z;
        if d >= MIN_SEGMENT_SECONDS {
            return d;
        }
    }
    mean.max(MIN_SEGMENT_SECONDS)
}

/// A realized trajectory: one pose per epoch `0..=total_epochs`. Epochs past
/// the end hold the final pose.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledTrajectory {
    poses: Vec<HumanPose>,
}

impl SampledTrajectory {
    pub fn from_poses(poses: Vec<HumanPose>) -> Self {
        assert!(!poses.is_empty(), "trajectory needs at least one pose");
        SampledTrajectory { poses }
    }

    pub fn total_epochs(&self) -> usize {
        self.poses.len() - 1
    }

    pub fn pose(&self, epoch: usize) -> &HumanPose {
        &self.poses[epoch.min(self.poses.len() - 1)]
    }

    pub fn poses(&self) -> &[HumanPose] {
        &self.poses
    }

    /// Pads with the final pose so the trajectory covers `epochs`.
    pub fn extended_to(&self, epochs: usize) -> SampledTrajectory {
        let mut poses = self.poses.clone();
        let last = poses.last().cloned().expect("non-empty");
        while poses.len() < epochs + 1 {
            poses.push(last.clone());
        }
        SampledTrajectory { poses }
    }

    /// `epoch,x,y,z,qw,qx,qy,qz,head_x,head_y,head_z`, one row per epoch.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "epoch,x,y,z,qw,qx,qy,qz,head_x,head_y,head_z")?;
        for (t, p) in self.poses.iter().enumerate() {
            let q = p.orientation.quaternion();
            writeln!(
                out,
                "{t},{},{},{},{},{},{},{},{},{},{}",
                p.position.x,
                p.position.y,
                p.position.z,
                q.w,
                q.i,
                q.j,
                q.k,
                p.head_position.x,
                p.head_position.y,
                p.head_position.z
            )?;
        }
        Ok(())
    }
}

fn head_offset(pose: &HumanPose) -> Vector3<f64> {
    pose.orientation.inverse() * (pose.head_position - pose.position)
}

fn posed(
    position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
    head: &Vector3<f64>,
    workspace_box: BodyBox,
    roi: BodyBox,
) -> HumanPose {
    HumanPose {
        position,
        orientation,
        head_position: position + orientation * head,
        workspace_box,
        roi,
    }
}

fn build_trajectory(segments: &[TaskSegment], keys: &[HumanPose], durations: &[usize]) -> SampledTrajectory {
    let total: usize = durations.iter().sum();
    let mut poses = Vec::with_capacity(total + 1);
    for (i, seg) in segments.iter().enumerate() {
        let from = &keys[i];
        let head = head_offset(&seg.key_pose);
        let to = match seg.motion {
            SegmentMotion::LinearMoveToNext => keys.get(i + 1),
            SegmentMotion::Dwell => None,
        };
        let n = durations[i];
        for k in 0..n {
            let pose = match to {
                Some(next) => {
                    let frac = k as f64 / n as f64;
                    let position = from.position.lerp(&next.position, frac);
                    let orientation = from
                        .orientation
                        .try_slerp(&next.orientation, frac, 1e-12)
                        .unwrap_or(from.orientation);
                    posed(position, orientation, &head, from.workspace_box, from.roi)
                }
                None => from.clone(),
            };
            poses.push(pose);
        }
    }
    // The final epoch sits at the end of the last segment.
    let last = segments.len() - 1;
    let final_pose = match (segments[last].motion, keys.get(last + 1)) {
        (SegmentMotion::LinearMoveToNext, Some(next)) => next.clone(),
        _ => keys[last].clone(),
    };
    poses.push(final_pose);
    SampledTrajectory { poses }
}

/// Draws one trajectory. Key-pose positions get a ±3σ-truncated Gaussian
/// perturbation, orientations a Gaussian angle about a uniform random axis,
/// and segment durations a Gaussian draw floored at 1 s and rounded half up
/// to whole epochs. Reproducible for a given `(dist.seed, stream)`.
pub fn sample_trajectory(dist: &TrajectoryDistribution, stream: u64) -> SampledTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(dist.seed);
    rng.set_stream(stream);

    let mut keys = Vec::with_capacity(dist.segments.len());
    let mut durations = Vec::with_capacity(dist.segments.len());
    for seg in &dist.segments {
        let mean = &seg.key_pose;
        let offset = Vector3::from_fn(|i, _| seg.position_stddev[i] * truncated_normal(&mut rng));
        let axis = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let angle: f64 = dist.orientation_stddev * rng.sample::<f64, _>(StandardNormal);
        let rotation = match Unit::try_new(axis, 1e-12) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        let position = mean.position + offset;
        let orientation = if angle == 0.0 {
            mean.orientation
        } else {
            rotation * mean.orientation
        };
        if offset == Vector3::zeros() && angle == 0.0 {
            keys.push(mean.clone());
        } else {
            let head = head_offset(mean);
            keys.push(posed(position, orientation, &head, mean.workspace_box, mean.roi));
        }
        let seconds = sample_duration(&mut rng, seg.duration_mean, seg.duration_stddev);
        durations.push(round_half_up(seconds));
    }
    build_trajectory(&dist.segments, &keys, &durations)
}

/// Planning samples drawn from streams `0..n`.
pub fn sample_planning_set(dist: &TrajectoryDistribution, n: usize) -> Vec<SampledTrajectory> {
    (0..n as u64).map(|k| sample_trajectory(dist, k)).collect()
}

/// Evaluation trajectories drawn from streams disjoint from the planning set.
pub fn sample_evaluation_set(dist: &TrajectoryDistribution, n: usize) -> Vec<SampledTrajectory> {
    (0..n as u64)
        .map(|k| sample_trajectory(dist, EVALUATION_STREAM_BASE + k))
        .collect()
}

/// Per-epoch reward and cost rates for every `(epoch, state, action)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedRateTable {
    horizon: usize,
    slots: usize,
    rates: Vec<Objectives>,
}

impl ExpectedRateTable {
    pub fn from_fn(
        model: &ObservationModel,
        mut f: impl FnMut(usize, usize, usize) -> Objectives,
    ) -> Self {
        let space = model.space();
        let slots = space.slot_count();
        let mut rates = Vec::with_capacity(model.horizon() * slots);
        for t in 0..model.horizon() {
            for s in 0..space.len() {
                for a in 0..space.actions(s).len() {
                    rates.push(f(t, s, a));
                }
            }
        }
        ExpectedRateTable {
            horizon: model.horizon(),
            slots,
            rates,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn slot_count(&self) -> usize {
        self.slots
    }

    /// Rates at `epoch` for the state-action pair in `slot`.
    pub fn get(&self, epoch: usize, slot: usize) -> Objectives {
        self.rates[epoch * self.slots + slot]
    }

    pub fn covers(&self, model: &ObservationModel) -> bool {
        self.horizon == model.horizon() && self.slots == model.space().slot_count()
    }

    /// Arithmetic mean, summed in the given order.
    pub fn mean(tables: &[ExpectedRateTable]) -> Result<ExpectedRateTable, TrajectoryError> {
        let first = tables.first().ok_or(TrajectoryError::NoSamples)?;
        if tables
            .iter()
            .any(|t| t.horizon != first.horizon || t.slots != first.slots)
        {
            return Err(TrajectoryError::ShapeMismatch);
        }
        let n = tables.len() as f64;
        let rates = (0..first.rates.len())
            .map(|i| {
                let mut acc = Objectives::ZERO;
                for t in tables {
                    acc += t.rates[i];
                }
                acc * (1.0 / n)
            })
            .collect();
        Ok(ExpectedRateTable {
            horizon: first.horizon,
            slots: first.slots,
            rates,
        })
    }

    pub fn entries(&self) -> &[Objectives] {
        &self.rates
    }
}

/// Rates computed against one known trajectory.
pub fn exact_rates(
    model: &ObservationModel,
    traj: &SampledTrajectory,
    camera: &CameraModel,
    params: &CostParams,
) -> Result<ExpectedRateTable, TrajectoryError> {
    if traj.total_epochs() < model.horizon() {
        return Err(TrajectoryError::HorizonMismatch {
            covered: traj.total_epochs(),
            horizon: model.horizon(),
        });
    }
    let space = model.space();
    let mut error = None;
    let table = ExpectedRateTable::from_fn(model, |t, s, a| {
        let state = space.state(s);
        let position = model.waypoint(state.waypoint).position;
        let action = space.actions(s)[a];
        match geometry::step_rates(&position, state.perched, action, traj.pose(t), camera, params) {
            Ok(r) => r,
            Err(e) => {
                error.get_or_insert(e);
                Objectives::ZERO
            }
        }
    });
    match error {
        Some(e) => Err(e.into()),
        None => Ok(table),
    }
}

/// Mean of `exact_rates` over a trajectory set. Rows are evaluated in
/// parallel and reduced in input order, so the result is bit-stable.
pub fn expected_rates_over(
    model: &ObservationModel,
    trajectories: &[SampledTrajectory],
    camera: &CameraModel,
    params: &CostParams,
) -> Result<ExpectedRateTable, TrajectoryError> {
    let tables = trajectories
        .par_iter()
        .map(|traj| exact_rates(model, &traj.extended_to(model.horizon()), camera, params))
        .collect::<Result<Vec<_>, _>>()?;
    ExpectedRateTable::mean(&tables)
}

/// Samples `n_samples` planning trajectories and averages their rates.
pub fn expected_rates(
    model: &ObservationModel,
    dist: &TrajectoryDistribution,
    n_samples: usize,
    camera: &CameraModel,
    params: &CostParams,
) -> Result<ExpectedRateTable, TrajectoryError> {
    if n_samples == 0 {
        return Err(TrajectoryError::NoSamples);
    }
    expected_rates_over(model, &sample_planning_set(dist, n_samples), camera, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smdp::{RobotState, Waypoint};

    fn pose(x: f64, yaw: f64) -> HumanPose {
        let orientation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
        let position = Vector3::new(x, 0.0, 0.0);
        HumanPose {
            position,
            orientation,
            head_position: position + orientation * Vector3::new(0.0, 0.0, 0.6),
            workspace_box: BodyBox::new([0.3, 0.0, 0.0], [0.5, 0.5, 0.9]).unwrap(),
            roi: BodyBox::new([0.4, 0.0, 0.2], [0.3, 0.4, 0.5]).unwrap(),
        }
    }

    fn segment(x: f64, yaw: f64, secs: f64, motion: SegmentMotion, sd: f64) -> TaskSegment {
        TaskSegment {
            key_pose: pose(x, yaw),
            position_stddev: Vector3::repeat(sd),
            duration_mean: secs,
            duration_stddev: sd * 10.0,
            motion,
        }
    }

    fn dist(sd: f64) -> TrajectoryDistribution {
        let mut d = TrajectoryDistribution::new(
            vec![
                segment(1.0, 0.0, 5.0, SegmentMotion::Dwell, sd),
                segment(1.0, 0.0, 4.0, SegmentMotion::LinearMoveToNext, sd),
                segment(3.0, 1.0, 6.0, SegmentMotion::Dwell, sd),
            ],
            7,
        )
        .unwrap();
        d.orientation_stddev = sd;
        d
    }

    #[test]
    fn zero_stddev_gives_mean_trajectory() {
        let d = dist(0.0);
        let mean = d.mean_trajectory();
        assert_eq!(mean.total_epochs(), 15);
        for stream in [0, 3, 99] {
            assert_eq!(sample_trajectory(&d, stream), mean);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let d = dist(0.2);
        assert_eq!(sample_trajectory(&d, 4), sample_trajectory(&d, 4));
        assert_ne!(sample_trajectory(&d, 4), sample_trajectory(&d, 5));
    }

    #[test]
    fn linear_segment_interpolates() {
        let t = dist(0.0).mean_trajectory();
        // Segment 2 spans epochs 5..9 moving x from 1 to 3.
        assert_eq!(t.pose(5).position.x, 1.0);
        assert!((t.pose(7).position.x - 2.0).abs() < 1e-12);
        assert_eq!(t.pose(9).position.x, 3.0);
        let yaw = t.pose(7).orientation.euler_angles().2;
        assert!((yaw - 0.5).abs() < 1e-9);
        let head = t.pose(7).head_position - t.pose(7).position;
        assert!((head - Vector3::new(0.0, 0.0, 0.6)).norm() < 1e-12);
        // Past the end the final pose holds.
        assert_eq!(t.pose(40), t.pose(15));
    }

    #[test]
    fn duration_sampler_mean() {
        let mut d = dist(0.0);
        d.segments = vec![TaskSegment {
            duration_mean: 60.0,
            duration_stddev: 10.0,
            ..d.segments[0].clone()
        }];
        let n = 10_000;
        let total: usize = (0..n).map(|k| sample_trajectory(&d, k).total_epochs()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 60.0).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.49), 2);
        assert_eq!(round_half_up(0.2), 1);
    }

    #[test]
    fn invalid_distributions() {
        assert_eq!(
            TrajectoryDistribution::new(vec![], 0).unwrap_err(),
            TrajectoryError::NoSegments
        );
        let mut s = segment(0.0, 0.0, 0.0, SegmentMotion::Dwell, 0.0);
        assert!(TrajectoryDistribution::new(vec![s.clone()], 0).is_err());
        s.duration_mean = 1.0;
        s.duration_stddev = -1.0;
        assert!(TrajectoryDistribution::new(vec![s], 0).is_err());
    }

    fn small_model(horizon: usize) -> ObservationModel {
        let w = vec![
            Waypoint::new(0, [4.0, 0.0, 0.3], true),
            Waypoint::new(1, [1.0, 3.0, 0.0], false),
        ];
        ObservationModel::with_defaults(w, horizon, RobotState::new(0, false)).unwrap()
    }

    #[test]
    fn expected_rates_is_mean_of_exact_rates() {
        let m = small_model(12);
        let d = dist(0.3);
        let camera = CameraModel::default();
        let params = CostParams::default();
        let set = sample_planning_set(&d, 4);
        let tables: Vec<_> = set
            .iter()
            .map(|t| exact_rates(&m, &t.extended_to(12), &camera, &params).unwrap())
            .collect();
        let mean = ExpectedRateTable::mean(&tables).unwrap();
        assert_eq!(expected_rates(&m, &d, 4, &camera, &params).unwrap(), mean);
        let one = expected_rates(&m, &d, 1, &camera, &params).unwrap();
        assert_eq!(one, tables[0]);
        for r in mean.entries() {
            assert!(r.is_finite());
            assert!(r.0.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn degenerate_distribution_ignores_sample_count() {
        let m = small_model(10);
        let d = dist(0.0);
        let camera = CameraModel::default();
        let params = CostParams::default();
        let one = expected_rates(&m, &d, 1, &camera, &params).unwrap();
        let ten = expected_rates(&m, &d, 10, &camera, &params).unwrap();
        for (a, b) in one.entries().iter().zip(ten.entries()) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
    }

    #[test]
    fn static_human_gives_constant_reward() {
        let m = small_model(10);
        let still = TrajectoryDistribution::new(
            vec![segment(1.0, 0.0, 30.0, SegmentMotion::Dwell, 0.0)],
            1,
        )
        .unwrap();
        let camera = CameraModel::default();
        let table = exact_rates(&m, &still.mean_trajectory(), &camera, &CostParams::default()).unwrap();
        let slot = m.space().slot(0, 0);
        let first = table.get(0, slot);
        assert!(first.reward() > 0.0);
        for t in 1..10 {
            assert_eq!(table.get(t, slot), first);
        }
    }

    #[test]
    fn short_trajectory_is_a_horizon_mismatch() {
        let m = small_model(20);
        let t = dist(0.0).mean_trajectory();
        let err = exact_rates(&m, &t, &CameraModel::default(), &CostParams::default()).unwrap_err();
        assert_eq!(err, TrajectoryError::HorizonMismatch { covered: 15, horizon: 20 });
        assert!(exact_rates(&m, &t.extended_to(20), &CameraModel::default(), &CostParams::default()).is_ok());
    }

    #[test]
    fn csv_export_layout() {
        let t = dist(0.0).mean_trajectory();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), t.total_epochs() + 2);
        assert_eq!(lines[0], "epoch,x,y,z,qw,qx,qy,qz,head_x,head_y,head_z");
        assert!(lines[1].starts_with("0,1,0,0,1,0,0,0,"));
    }
}
