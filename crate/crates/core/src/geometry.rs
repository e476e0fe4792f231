//! Observation reward and cost rates for a robot position paired with a human
//! pose: frustum coverage of the region of interest, proxemic costs, and the
//! power lookup table.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::Objectives;
use crate::smdp::Action;

/// Samples per axis of the coverage grid.
pub const COVERAGE_GRID: usize = 5;

const AIM_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("camera position coincides with the ROI center")]
    DegenerateAim,
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("invalid cost parameters: {0}")]
    InvalidCostParams(String),
    #[error("invalid box: half-extents must be strictly positive")]
    InvalidBox,
}

/// Box expressed in the human body frame: center offset and half-extents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyBox {
    pub offset: Vector3<f64>,
    pub half_extents: Vector3<f64>,
}

impl BodyBox {
    pub fn new(offset: [f64; 3], half_extents: [f64; 3]) -> Result<Self, GeometryError> {
        let b = BodyBox {
            offset: offset.into(),
            half_extents: half_extents.into(),
        };
        if b.half_extents.iter().all(|&h| h > 0.0) {
            Ok(b)
        } else {
            Err(GeometryError::InvalidBox)
        }
    }
}

/// Human pose. `roi` is the body-frame prism in front of the torso and head
/// that the camera should capture.
#[derive(Clone, Debug, PartialEq)]
pub struct HumanPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub head_position: Vector3<f64>,
    pub workspace_box: BodyBox,
    pub roi: BodyBox,
}

impl HumanPose {
    pub fn region_of_interest(&self) -> RegionOfInterest {
        RegionOfInterest {
            center: self.position + self.orientation * self.roi.offset,
            half_extents: self.roi.half_extents,
            orientation: self.orientation,
        }
    }

    /// Euclidean distance from `point` to the surface of the workspace box,
    /// zero inside.
    pub fn distance_to_workspace(&self, point: &Vector3<f64>) -> f64 {
        let center = self.position + self.orientation * self.workspace_box.offset;
        let local = self.orientation.inverse() * (point - center);
        let h = &self.workspace_box.half_extents;
        let outside = Vector3::new(
            (local.x.abs() - h.x).max(0.0),
            (local.y.abs() - h.y).max(0.0),
            (local.z.abs() - h.z).max(0.0),
        );
        outside.norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionOfInterest {
    pub center: Vector3<f64>,
    pub half_extents: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl RegionOfInterest {
    /// World-frame point at local coordinates `u ∈ [-1, 1]³`.
    pub fn point_at(&self, u: &Vector3<f64>) -> Vector3<f64> {
        self.center + self.orientation * u.component_mul(&self.half_extents)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    /// Radians.
    pub horizontal_fov: f64,
    /// Radians.
    pub vertical_fov: f64,
    pub max_range: f64,
    pub min_range: f64,
    /// Distance at which full coverage earns a reward rate of exactly 1.
    pub reference_distance: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            horizontal_fov: 60f64.to_radians(),
            vertical_fov: 45f64.to_radians(),
            max_range: 10.0,
            min_range: 0.2,
            reference_distance: 1.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let fov_ok = |f: f64| f > 0.0 && f < std::f64::consts::PI;
        if !fov_ok(self.horizontal_fov) || !fov_ok(self.vertical_fov) {
            return Err(GeometryError::InvalidCamera(
                "field of view must lie in (0, pi)".into(),
            ));
        }
        if !(self.min_range >= 0.0 && self.min_range < self.max_range) {
            return Err(GeometryError::InvalidCamera(
                "ranges must satisfy 0 <= min_range < max_range".into(),
            ));
        }
        if !(self.reference_distance > 0.0) {
            return Err(GeometryError::InvalidCamera(
                "reference_distance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Power cost rate per action kind and perch status.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTable {
    pub hold_perched: f64,
    pub hold_unperched: f64,
    pub perch: f64,
    pub unperch: f64,
    #[serde(rename = "move")]
    pub move_: f64,
}

impl Default for PowerTable {
    fn default() -> Self {
        PowerTable {
            hold_perched: 0.125,
            hold_unperched: 0.25,
            perch: 0.5,
            unperch: 0.5,
            move_: 1.0,
        }
    }
}

impl PowerTable {
    pub fn rate(&self, perched: bool, action: Action) -> f64 {
        match action {
            Action::HoldPos if perched => self.hold_perched,
            Action::HoldPos => self.hold_unperched,
            Action::Perch => self.perch,
            Action::Unperch => self.unperch,
            Action::Move(_) => self.move_,
        }
    }

    fn entries(&self) -> [f64; 5] {
        [
            self.hold_perched,
            self.hold_unperched,
            self.perch,
            self.unperch,
            self.move_,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Collision decay, 1/m.
    pub alpha0: f64,
    /// Intrusion decay, 1/m.
    pub alpha1: f64,
    #[serde(default)]
    pub power: PowerTable,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            alpha0: 2.0,
            alpha1: 1.0,
            power: PowerTable::default(),
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.alpha0 > 0.0 && self.alpha1 > 0.0) {
            return Err(GeometryError::InvalidCostParams(
                "alpha0 and alpha1 must be positive".into(),
            ));
        }
        if self.power.entries().iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(GeometryError::InvalidCostParams(
                "power table entries must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Camera frame aimed at `target`: (forward, right, up). Roll is fixed by the
/// ROI's body up-axis so the frame moves rigidly with the scene.
fn aim(
    eye: &Vector3<f64>,
    target: &Vector3<f64>,
    body: &UnitQuaternion<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>, Vector3<f64>), GeometryError> {
    let to_target = target - eye;
    let dist = to_target.norm();
    if dist < AIM_EPSILON {
        return Err(GeometryError::DegenerateAim);
    }
    let forward = to_target / dist;
    let mut up_hint = body * Vector3::z();
    if forward.cross(&up_hint).norm() < 1e-6 {
        up_hint = body * Vector3::y();
    }
    let right = forward.cross(&up_hint).normalize();
    let up = right.cross(&forward);
    Ok((forward, right, up))
}

/// Fraction of the ROI volume inside the viewing frustum of a camera at
/// `robot_position` aimed at the ROI center, estimated on a fixed
/// `COVERAGE_GRID³` grid of cell centers.
pub fn coverage_fraction(
    camera: &CameraModel,
    robot_position: &Vector3<f64>,
    roi: &RegionOfInterest,
) -> Result<f64, GeometryError> {
    let frame = aim(robot_position, &roi.center, &roi.orientation)?;
    Ok(frustum_coverage(camera, robot_position, frame, roi))
}

fn frustum_coverage(
    camera: &CameraModel,
    robot_position: &Vector3<f64>,
    (forward, right, up): (Vector3<f64>, Vector3<f64>, Vector3<f64>),
    roi: &RegionOfInterest,
) -> f64 {
    let tan_h = (camera.horizontal_fov / 2.0).tan();
    let tan_v = (camera.vertical_fov / 2.0).tan();
    let k = COVERAGE_GRID;
    let coord = |i: usize| (2.0 * i as f64 + 1.0) / k as f64 - 1.0;
    let mut inside = 0usize;
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let q = roi.point_at(&Vector3::new(coord(i), coord(j), coord(l)));
                let v = q - robot_position;
                let depth = v.dot(&forward);
                if depth < camera.min_range || depth > camera.max_range {
                    continue;
                }
                if v.dot(&right).abs() <= depth * tan_h && v.dot(&up).abs() <= depth * tan_v {
                    inside += 1;
                }
            }
        }
    }
    inside as f64 / (k * k * k) as f64
}

/// Normalized observation reward rate: coverage over distance, scaled so
/// full coverage at the reference distance is 1, clamped to `[0, 1]`.
/// Only hold_pos observes; every other action earns nothing.
pub fn observation_reward_rate(
    robot_position: &Vector3<f64>,
    action: Action,
    human: &HumanPose,
    camera: &CameraModel,
) -> Result<f64, GeometryError> {
    if action != Action::HoldPos {
        return Ok(0.0);
    }
    let roi = human.region_of_interest();
    let coverage = coverage_fraction(camera, robot_position, &roi)?;
    let dist = (roi.center - robot_position).norm().max(camera.min_range);
    Ok((coverage * camera.reference_distance / dist).clamp(0.0, 1.0))
}

/// `exp(-alpha0 · dst)` with `dst` the distance to the workspace box.
pub fn collision_cost_rate(robot_position: &Vector3<f64>, human: &HumanPose, params: &CostParams) -> f64 {
    (-params.alpha0 * human.distance_to_workspace(robot_position)).exp()
}

/// `exp(-alpha1 · ‖x_r − head‖)`, halved while perched (fans off).
pub fn intrusion_cost_rate(
    robot_position: &Vector3<f64>,
    perched: bool,
    human: &HumanPose,
    params: &CostParams,
) -> f64 {
    let base = (-params.alpha1 * (robot_position - human.head_position).norm()).exp();
    if perched {
        base / 2.0
    } else {
        base
    }
}

pub fn power_cost_rate(perched: bool, action: Action, params: &CostParams) -> f64 {
    params.power.rate(perched, action)
}

/// All four per-epoch rates for one robot position, action and human pose.
pub fn step_rates(
    robot_position: &Vector3<f64>,
    perched: bool,
    action: Action,
    human: &HumanPose,
    camera: &CameraModel,
    params: &CostParams,
) -> Result<Objectives, GeometryError> {
    Ok(Objectives::new(
        observation_reward_rate(robot_position, action, human, camera)?,
        collision_cost_rate(robot_position, human, params),
        intrusion_cost_rate(robot_position, perched, human, params),
        power_cost_rate(perched, action, params),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn human_at_origin() -> HumanPose {
        HumanPose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            head_position: Vector3::new(0.0, 0.0, 0.6),
            workspace_box: BodyBox::new([0.0; 3], [1.0; 3]).unwrap(),
            roi: BodyBox::new([0.0; 3], [0.5; 3]).unwrap(),
        }
    }

    fn unit_roi() -> RegionOfInterest {
        RegionOfInterest {
            center: Vector3::zeros(),
            half_extents: Vector3::repeat(0.5),
            orientation: UnitQuaternion::identity(),
        }
    }

    #[test]
    fn full_and_zero_coverage() {
        let camera = CameraModel {
            horizontal_fov: 100f64.to_radians(),
            vertical_fov: 100f64.to_radians(),
            ..CameraModel::default()
        };
        let far = Vector3::new(-5.0, 0.0, 0.0);
        assert_eq!(coverage_fraction(&camera, &far, &unit_roi()).unwrap(), 1.0);
        // Looking away from the ROI.
        let away = (-Vector3::x(), Vector3::y(), Vector3::z());
        assert_eq!(frustum_coverage(&camera, &far, away, &unit_roi()), 0.0);
        // Whole ROI nearer than min_range.
        let close = CameraModel {
            min_range: 2.0,
            ..camera
        };
        let near = Vector3::new(-0.6, 0.0, 0.0);
        assert_eq!(coverage_fraction(&close, &near, &unit_roi()).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_aim() {
        let camera = CameraModel::default();
        assert_eq!(
            coverage_fraction(&camera, &Vector3::new(0.0, 0.0, 5e-7), &unit_roi()),
            Err(GeometryError::DegenerateAim)
        );
    }

    #[test]
    fn reward_zero_unless_holding() {
        let camera = CameraModel::default();
        let h = human_at_origin();
        let p = Vector3::new(3.0, 0.0, 0.0);
        for a in [Action::Move(2), Action::Perch, Action::Unperch] {
            assert_eq!(observation_reward_rate(&p, a, &h, &camera).unwrap(), 0.0);
        }
        assert!(observation_reward_rate(&p, Action::HoldPos, &h, &camera).unwrap() > 0.0);
    }

    #[test]
    fn reward_is_one_at_reference_distance_with_full_coverage() {
        let d = 4.0;
        let camera = CameraModel {
            reference_distance: d,
            ..CameraModel::default()
        };
        let h = human_at_origin();
        let p = Vector3::new(d, 0.0, 0.0);
        assert_eq!(coverage_fraction(&camera, &p, &h.region_of_interest()).unwrap(), 1.0);
        assert_relative_eq!(
            observation_reward_rate(&p, Action::HoldPos, &h, &camera).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn collision_closed_forms() {
        let params = CostParams::default();
        let h = human_at_origin();
        assert_eq!(collision_cost_rate(&Vector3::new(0.3, -0.2, 0.9), &h, &params), 1.0);
        assert_eq!(collision_cost_rate(&Vector3::new(1.0, 0.0, 0.0), &h, &params), 1.0);
        let at = Vector3::new(1.0 + 1.0 / params.alpha0, 0.0, 0.0);
        assert_relative_eq!(collision_cost_rate(&at, &h, &params), (-1f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn collision_point_to_box_distance() {
        // Box [-1, 1]^3, robot at (3, 0, 0): dst = 2.
        let params = CostParams {
            alpha0: 2.0,
            ..CostParams::default()
        };
        let h = human_at_origin();
        let cost = collision_cost_rate(&Vector3::new(3.0, 0.0, 0.0), &h, &params);
        assert_relative_eq!(cost, (-4f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(cost, 0.018315638888734, epsilon = 1e-12);
        // Diagonal corner distance.
        let corner = h.distance_to_workspace(&Vector3::new(2.0, 2.0, 1.0));
        assert_relative_eq!(corner, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn workspace_box_is_oriented() {
        let mut h = human_at_origin();
        h.workspace_box = BodyBox::new([1.0, 0.0, 0.0], [2.0, 0.5, 0.5]).unwrap();
        h.orientation = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        // Body +x is world +y, so the long axis spans world y in [-1, 3].
        assert_relative_eq!(h.distance_to_workspace(&Vector3::new(0.0, 2.9, 0.0)), 0.0);
        assert_relative_eq!(h.distance_to_workspace(&Vector3::new(0.0, 4.0, 0.0)), 1.0, epsilon = 1e-12);
        assert_relative_eq!(h.distance_to_workspace(&Vector3::new(1.5, 1.0, 0.0)), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn intrusion_closed_forms() {
        let params = CostParams::default();
        let h = human_at_origin();
        let head = h.head_position;
        assert_eq!(intrusion_cost_rate(&head, false, &h, &params), 1.0);
        assert_eq!(intrusion_cost_rate(&head, true, &h, &params), 0.5);
        let p = head + Vector3::new(0.0, 1.0 / params.alpha1, 0.0);
        assert_relative_eq!(intrusion_cost_rate(&p, false, &h, &params), (-1f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn power_lookup() {
        let params = CostParams::default();
        assert_eq!(power_cost_rate(true, Action::HoldPos, &params), 0.125);
        assert_eq!(power_cost_rate(false, Action::HoldPos, &params), 0.25);
        assert_eq!(power_cost_rate(false, Action::Perch, &params), 0.5);
        assert_eq!(power_cost_rate(true, Action::Unperch, &params), 0.5);
        assert_eq!(power_cost_rate(false, Action::Move(3), &params), 1.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(CameraModel::default().validate().is_ok());
        let bad = CameraModel {
            horizontal_fov: 4.0,
            ..CameraModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = CostParams {
            alpha0: 0.0,
            ..CostParams::default()
        };
        assert!(bad.validate().is_err());
        let mut bad = CostParams::default();
        bad.power.move_ = 1.5;
        assert!(bad.validate().is_err());
        assert_eq!(BodyBox::new([0.0; 3], [1.0, 0.0, 1.0]), Err(GeometryError::InvalidBox));
    }
}
