//! Built-in module geometry and task templates.
//!
//! The module is a 10 m × 4 m × 4 m box spanning `x ∈ [0, 10]`,
//! `y, z ∈ [-2, 2]`. Waypoints form a 3 × 2 × 2 lattice at
//! `x ∈ {1.5, 5, 8.5}`, `y, z ∈ {-1.5, 1.5}` with id `4·ix + 2·iy + iz`.
//! Crew stand on the deck (`z = -2`), so the handrails sit on the ceiling
//! side at waypoints 1, 5, 7 and 11. The robot starts unperched at
//! waypoint 5, mid-module below the ceiling.

use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{BodyBox, HumanPose};
use crate::smdp::Waypoint;
use crate::trajectory::{SegmentMotion, TaskSegment, TrajectoryDistribution, TrajectoryError};

pub const LATTICE_X: [f64; 3] = [1.5, 5.0, 8.5];
pub const LATTICE_YZ: [f64; 2] = [-1.5, 1.5];
pub const HANDRAIL_WAYPOINTS: [usize; 4] = [1, 5, 7, 11];
pub const INITIAL_WAYPOINT: usize = 5;

pub const WORKSPACE_OFFSET: [f64; 3] = [0.25, 0.0, 0.0];
pub const WORKSPACE_HALF: [f64; 3] = [0.45, 0.45, 0.9];
pub const ROI_OFFSET: [f64; 3] = [0.35, 0.0, 0.2];
pub const ROI_HALF: [f64; 3] = [0.3, 0.45, 0.55];
pub const HEAD_OFFSET: [f64; 3] = [0.0, 0.0, 0.6];

/// Torso height of a crew member standing on the deck (`z = -2`).
pub const DECK_STANCE_Z: f64 = -0.5;

pub const KEY_POSITION_STDDEV: [f64; 3] = [0.1, 0.1, 0.05];

pub fn lattice_waypoints() -> Vec<Waypoint> {
    let mut out = Vec::with_capacity(12);
    for (ix, &x) in LATTICE_X.iter().enumerate() {
        for (iy, &y) in LATTICE_YZ.iter().enumerate() {
            for (iz, &z) in LATTICE_YZ.iter().enumerate() {
                let id = 4 * ix + 2 * iy + iz;
                out.push(Waypoint::new(id, [x, y, z], HANDRAIL_WAYPOINTS.contains(&id)));
            }
        }
    }
    out
}

/// Upright pose at `position` facing `yaw` radians from +x about +z, with
/// the default body boxes.
pub fn standing_pose(position: [f64; 3], yaw: f64) -> HumanPose {
    let orientation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
    let position = Vector3::from(position);
    HumanPose {
        position,
        orientation,
        head_position: position + orientation * Vector3::from(HEAD_OFFSET),
        workspace_box: BodyBox::new(WORKSPACE_OFFSET, WORKSPACE_HALF).expect("positive extents"),
        roi: BodyBox::new(ROI_OFFSET, ROI_HALF).expect("positive extents"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTemplate {
    /// Three dwell stations along the module with short walks between.
    Experiment,
    /// Slow continuous sweep along one wall.
    Inspection,
    /// Repeated pickup and dropoff loop between the two ends, along the
    /// port half of the module.
    Transfer,
}

impl TaskTemplate {
    pub const ALL: [TaskTemplate; 3] = [
        TaskTemplate::Experiment,
        TaskTemplate::Inspection,
        TaskTemplate::Transfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskTemplate::Experiment => "experiment",
            TaskTemplate::Inspection => "inspection",
            TaskTemplate::Transfer => "transfer",
        }
    }

    /// Segments of the template; every template lasts 180 s on average.
    pub fn segments(self) -> Vec<TaskSegment> {
        use std::f64::consts::FRAC_PI_2;
        use SegmentMotion::{Dwell, LinearMoveToNext as Walk};
        let seg = |pose: HumanPose, mean: f64, stddev: f64, motion| TaskSegment {
            key_pose: pose,
            position_stddev: Vector3::from(KEY_POSITION_STDDEV),
            duration_mean: mean,
            duration_stddev: stddev,
            motion,
        };
        match self {
            TaskTemplate::Experiment => {
                let s1 = standing_pose([2.0, -1.3, DECK_STANCE_Z], FRAC_PI_2);
                let s2 = standing_pose([5.0, 1.3, DECK_STANCE_Z], -FRAC_PI_2);
                let s3 = standing_pose([8.0, -1.3, DECK_STANCE_Z], FRAC_PI_2);
                vec![
                    seg(s1.clone(), 50.0, 5.0, Dwell),
                    seg(s1, 7.0, 1.0, Walk),
                    seg(s2.clone(), 50.0, 5.0, Dwell),
                    seg(s2, 7.0, 1.0, Walk),
                    seg(s3, 66.0, 5.0, Dwell),
                ]
            }
            TaskTemplate::Inspection => {
                let at = |x: f64| standing_pose([x, 1.0, DECK_STANCE_Z], FRAC_PI_2);
                vec![
                    seg(at(1.0), 55.0, 4.0, Walk),
                    seg(at(11.0 / 3.0), 55.0, 4.0, Walk),
                    seg(at(19.0 / 3.0), 55.0, 4.0, Walk),
                    seg(at(9.0), 15.0, 2.0, Dwell),
                ]
            }
            TaskTemplate::Transfer => {
                let p1 = standing_pose([1.5, -0.3, DECK_STANCE_Z], std::f64::consts::PI);
                let p2 = standing_pose([1.5, -1.3, DECK_STANCE_Z], -FRAC_PI_2);
                let drop = standing_pose([8.5, -0.8, DECK_STANCE_Z], 0.0);
                let mut out = Vec::with_capacity(12);
                out.push(seg(drop.clone(), 20.0, 2.0, Walk));
                for (i, pickup) in [&p1, &p2, &p1].into_iter().enumerate() {
                    out.push(seg(pickup.clone(), 10.0, 2.0, Dwell));
                    out.push(seg(pickup.clone(), 20.0, 2.0, Walk));
                    out.push(seg(drop.clone(), 10.0, 2.0, Dwell));
                    if i < 2 {
                        out.push(seg(drop.clone(), 20.0, 2.0, Walk));
                    }
                }
                out
            }
        }
    }

    pub fn distribution(self, seed: u64) -> Result<TrajectoryDistribution, TrajectoryError> {
        TrajectoryDistribution::new(self.segments(), seed)
    }
}

impl fmt::Display for TaskTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskTemplate {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        TaskTemplate::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown task template `{s}` (expected experiment, inspection or transfer)"))
    }
}

/// Distance from the waypoint closest to the centroid of the mean
/// trajectory's region-of-interest centers. Used as the camera's reference
/// distance so that the best-placed viewpoint earns a rate near 1.
pub fn reference_distance(waypoints: &[Waypoint], dist: &TrajectoryDistribution) -> f64 {
    let mean = dist.mean_trajectory();
    let poses = mean.poses();
    let centroid = poses
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.region_of_interest().center)
        / poses.len() as f64;
    waypoints
        .iter()
        .map(|w| (w.position - centroid).norm())
        .fold(f64::INFINITY, f64::min)
}
