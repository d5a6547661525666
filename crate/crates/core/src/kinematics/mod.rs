//! Part-aware articulated tool model.
//!
//! The tool is a kinematic tree of four capsules: a shaft, a wrist and two
//! gripper jaws. The wrist frame is placed by the action's translation and
//! axis-angle rotation; the shaft hangs off the wrist through the
//! shaft-to-wrist hinge and each jaw is attached at the distal end of the
//! wrist through its own hinge.
//!
//! Frame conventions: right-handed, `z` forward into the scene. In the rest
//! configuration every part lies along the wrist frame's `+x` axis (the shaft
//! occupies `-x`), the shaft hinge turns about local `y` and the jaws turn
//! about `+z` (left) and `-z` (right) so that positive angles open them.

mod camera;
mod synth;

pub use camera::{CameraModel, Projection};
pub use synth::{synth_trajectory, SynthKind, SynthParams};

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("joint {joint} = {value} outside limits [{min}, {max}]")]
    JointLimitViolation {
        joint: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),
    #[error("invalid tool geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("point at depth {z} is behind the near plane")]
    BehindCamera { z: f64 },
    #[error("invalid trajectory parameters: {0}")]
    InvalidParams(String),
}

/// One frame of tool action: wrist pose plus three hinge angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArticulatedState {
    /// Wrist translation in meters.
    pub translation: Vector3<f64>,
    /// Wrist orientation as an axis-angle vector in radians.
    pub rotation: Vector3<f64>,
    pub shaft_wrist: f64,
    pub left_gripper: f64,
    pub right_gripper: f64,
}

impl ArticulatedState {
    pub fn rest() -> Self {
        Self::from_array([0.0; 9])
    }

    /// `[p(3), r(3), q_sw, q_lg, q_rg]`.
    pub fn to_array(&self) -> [f64; 9] {
        let p = self.translation;
        let r = self.rotation;
        [
            p.x,
            p.y,
            p.z,
            r.x,
            r.y,
            r.z,
            self.shaft_wrist,
            self.left_gripper,
            self.right_gripper,
        ]
    }

    pub fn from_array(a: [f64; 9]) -> Self {
        Self {
            translation: Vector3::new(a[0], a[1], a[2]),
            rotation: Vector3::new(a[3], a[4], a[5]),
            shaft_wrist: a[6],
            left_gripper: a[7],
            right_gripper: a[8],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Closed interval `[min, max]` for a joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limit {
    pub min: f64,
    pub max: f64,
}

impl Limit {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    fn check(&self, joint: &'static str, value: f64) -> Result<(), KinematicsError> {
        if self.contains(value) {
            Ok(())
        } else {
            Err(KinematicsError::JointLimitViolation {
                joint,
                value,
                min: self.min,
                max: self.max,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    /// Applied to each axis-angle component.
    pub rotation: Limit,
    pub shaft_wrist: Limit,
    pub gripper: Limit,
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            rotation: Limit::new(-PI, PI),
            shaft_wrist: Limit::new(-PI, PI),
            gripper: Limit::new(0.0, FRAC_PI_2),
        }
    }
}

impl JointLimits {
    pub fn check(&self, s: &ArticulatedState) -> Result<(), KinematicsError> {
        if !s.is_finite() {
            return Err(KinematicsError::NonFiniteInput("articulated state"));
        }
        for (name, v) in [("r.x", s.rotation.x), ("r.y", s.rotation.y), ("r.z", s.rotation.z)] {
            self.rotation.check(name, v)?;
        }
        self.shaft_wrist.check("q_sw", s.shaft_wrist)?;
        self.gripper.check("q_lg", s.left_gripper)?;
        self.gripper.check("q_rg", s.right_gripper)?;
        Ok(())
    }

    /// Clamps every joint into its interval.
    pub fn clamp(&self, s: &ArticulatedState) -> ArticulatedState {
        ArticulatedState {
            translation: s.translation,
            rotation: s.rotation.map(|v| self.rotation.clamp(v)),
            shaft_wrist: self.shaft_wrist.clamp(s.shaft_wrist),
            left_gripper: self.gripper.clamp(s.left_gripper),
            right_gripper: self.gripper.clamp(s.right_gripper),
        }
    }
}

/// The four rigid parts of the tool, in tree order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    Shaft,
    Wrist,
    LeftGripper,
    RightGripper,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::Shaft, Part::Wrist, Part::LeftGripper, Part::RightGripper];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Semantic channel: the two jaws share the gripper channel.
    pub fn semantic_channel(self) -> usize {
        match self {
            Part::Shaft => 0,
            Part::Wrist => 1,
            Part::LeftGripper | Part::RightGripper => 2,
        }
    }

    /// Mask label (1 shaft, 2 wrist, 3 gripper).
    pub fn label(self) -> u8 {
        self.semantic_channel() as u8 + 1
    }
}

/// Line segment swept by a sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub a: Point3<f64>,
    pub b: Point3<f64>,
    pub radius: f64,
}

impl Capsule {
    pub fn new(a: Point3<f64>, b: Point3<f64>, radius: f64) -> Self {
        Self { a, b, radius }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn centroid(&self) -> Point3<f64> {
        nalgebra::center(&self.a, &self.b)
    }

    /// Long axis, `a -> b`.
    pub fn axis(&self) -> Vector3<f64> {
        self.b - self.a
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        Self {
            a: iso * self.a,
            b: iso * self.b,
            radius: self.radius,
        }
    }

    /// Euclidean distance from `x` to the capsule's core segment.
    pub fn segment_distance(&self, x: &Point3<f64>) -> f64 {
        let ab = self.b - self.a;
        let t = ((x - self.a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        (x - (self.a + ab * t)).norm()
    }
}

/// Revolute joint: a fixed axis and pivot, both expressed in the parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    pub axis: Unit<Vector3<f64>>,
    pub origin: Point3<f64>,
}

impl Hinge {
    pub fn new(axis: Vector3<f64>, origin: Point3<f64>) -> Self {
        Self {
            axis: Unit::new_normalize(axis),
            origin,
        }
    }

    /// Parent-from-child transform for joint angle `q`.
    pub fn transform(&self, q: f64) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.origin.coords),
            UnitQuaternion::from_axis_angle(&self.axis, q),
        )
    }
}

/// Capsule primitives per part (in each part's local frame) plus the hinges
/// connecting them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolGeometry {
    pub shaft: Capsule,
    pub wrist: Capsule,
    pub left_gripper: Capsule,
    pub right_gripper: Capsule,
    pub shaft_hinge: Hinge,
    pub left_hinge: Hinge,
    pub right_hinge: Hinge,
    pub limits: JointLimits,
}

impl Default for ToolGeometry {
    fn default() -> Self {
        Self::with_dimensions(Dimensions::default())
    }
}

/// Lengths and radii of the default needle-driver-like tool, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dimensions {
    pub shaft_length: f64,
    pub shaft_radius: f64,
    pub wrist_length: f64,
    pub wrist_radius: f64,
    pub gripper_length: f64,
    pub gripper_radius: f64,
}

impl Default for Dimensions {
    fn default() -> Self {
        Self {
            shaft_length: 0.08,
            shaft_radius: 0.004,
            wrist_length: 0.02,
            wrist_radius: 0.003,
            gripper_length: 0.015,
            gripper_radius: 0.002,
        }
    }
}

impl ToolGeometry {
    pub fn with_dimensions(d: Dimensions) -> Self {
        let o = Point3::origin();
        let x = |l: f64| Point3::new(l, 0.0, 0.0);
        Self {
            shaft: Capsule::new(x(-d.shaft_length), o, d.shaft_radius),
            wrist: Capsule::new(o, x(d.wrist_length), d.wrist_radius),
            left_gripper: Capsule::new(o, x(d.gripper_length), d.gripper_radius),
            right_gripper: Capsule::new(o, x(d.gripper_length), d.gripper_radius),
            shaft_hinge: Hinge::new(Vector3::y(), o),
            left_hinge: Hinge::new(Vector3::z(), x(d.wrist_length)),
            right_hinge: Hinge::new(-Vector3::z(), x(d.wrist_length)),
            limits: JointLimits::default(),
        }
    }

    pub fn capsule(&self, part: Part) -> &Capsule {
        match part {
            Part::Shaft => &self.shaft,
            Part::Wrist => &self.wrist,
            Part::LeftGripper => &self.left_gripper,
            Part::RightGripper => &self.right_gripper,
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        for part in Part::ALL {
            let c = self.capsule(part);
            let finite = c.a.iter().chain(c.b.iter()).all(|v| v.is_finite());
            if !finite || !(c.radius > 0.0) || !(c.length() > 0.0) {
                return Err(KinematicsError::InvalidGeometry(format!(
                    "{part:?} capsule needs finite endpoints, radius > 0 and length > 0"
                )));
            }
        }
        Ok(())
    }
}

/// World placement of every part for one articulated state.
#[derive(Debug, Clone, PartialEq)]
pub struct PartPoses {
    /// Part-local to world transforms, indexed by [`Part::index`].
    pub poses: [Isometry3<f64>; 4],
    /// Capsules carried into the world frame.
    pub capsules: [Capsule; 4],
}

impl PartPoses {
    pub fn pose(&self, part: Part) -> &Isometry3<f64> {
        &self.poses[part.index()]
    }

    pub fn capsule(&self, part: Part) -> &Capsule {
        &self.capsules[part.index()]
    }

    /// Capsules expressed in the camera frame.
    pub fn camera_capsules(&self, cam: &CameraModel) -> [Capsule; 4] {
        let world_to_cam = cam.extrinsic();
        self.capsules.map(|c| c.transformed(&world_to_cam))
    }
}

/// Places every part of the tool for `state`.
pub fn forward_kinematics(state: &ArticulatedState, geom: &ToolGeometry) -> Result<PartPoses, KinematicsError> {
    geom.limits.check(state)?;
    geom.validate()?;

    let wrist = Isometry3::from_parts(
        Translation3::from(state.translation),
        UnitQuaternion::from_scaled_axis(state.rotation),
    );
    let shaft = wrist * geom.shaft_hinge.transform(state.shaft_wrist).inverse();
    let left = wrist * geom.left_hinge.transform(state.left_gripper);
    let right = wrist * geom.right_hinge.transform(state.right_gripper);

    let poses = [shaft, wrist, left, right];
    let capsules = [
        geom.shaft.transformed(&shaft),
        geom.wrist.transformed(&wrist),
        geom.left_gripper.transformed(&left),
        geom.right_gripper.transformed(&right),
    ];
    Ok(PartPoses { poses, capsules })
}

/// Ordered sequence of states sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<ArticulatedState>,
    dt: f64,
}

impl Trajectory {
    pub fn new(states: Vec<ArticulatedState>, dt: f64) -> Result<Self, KinematicsError> {
        if states.is_empty() {
            return Err(KinematicsError::InvalidParams(
                "trajectory needs at least one frame".into(),
            ));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(KinematicsError::InvalidParams(format!("dt must be positive, got {dt}")));
        }
        if states.iter().any(|s| !s.is_finite()) {
            return Err(KinematicsError::NonFiniteInput("trajectory state"));
        }
        Ok(Self { states, dt })
    }

    /// Checks every frame against `limits`.
    pub fn validate(&self, limits: &JointLimits) -> Result<(), KinematicsError> {
        self.states.iter().try_for_each(|s| limits.check(s))
    }

    pub fn states(&self) -> &[ArticulatedState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rest_state_places_parts_on_the_wrist_axis() {
        let geom = ToolGeometry::default();
        let poses = forward_kinematics(&ArticulatedState::rest(), &geom).unwrap();
        assert_eq!(*poses.pose(Part::Wrist), Isometry3::identity());
        assert_eq!(*poses.pose(Part::Shaft), Isometry3::identity());
        for jaw in [Part::LeftGripper, Part::RightGripper] {
            let p = poses.pose(jaw);
            assert_relative_eq!(p.rotation.angle(), 0.0);
            assert_relative_eq!(p.translation.vector, Vector3::new(0.02, 0.0, 0.0));
        }
        let shaft = poses.capsule(Part::Shaft);
        assert_relative_eq!(shaft.a, Point3::new(-0.08, 0.0, 0.0));
    }

    #[test]
    fn quarter_turn_on_left_jaw_maps_x_to_y() {
        let geom = ToolGeometry::default();
        let state = ArticulatedState {
            left_gripper: FRAC_PI_2,
            ..ArticulatedState::rest()
        };
        let poses = forward_kinematics(&state, &geom).unwrap();
        let x = poses.pose(Part::LeftGripper).rotation * Vector3::x();
        assert_relative_eq!(x, Vector3::y(), epsilon = 1e-15);
        // the mirrored jaw stays closed
        let x = poses.pose(Part::RightGripper).rotation * Vector3::x();
        assert_relative_eq!(x, Vector3::x(), epsilon = 1e-15);
    }

    #[test]
    fn zero_hinge_angle_is_identity_on_child() {
        let h = Hinge::new(Vector3::new(0.3, -1.0, 0.2), Point3::origin());
        assert_eq!(h.transform(0.0), Isometry3::identity());
    }

    #[test]
    fn joint_limits_are_enforced() {
        let geom = ToolGeometry::default();
        let mut s = ArticulatedState::rest();
        s.left_gripper = -0.1;
        assert!(matches!(
            forward_kinematics(&s, &geom),
            Err(KinematicsError::JointLimitViolation { joint: "q_lg", .. })
        ));
        s.left_gripper = 0.0;
        s.rotation.y = 4.0;
        assert!(matches!(
            forward_kinematics(&s, &geom),
            Err(KinematicsError::JointLimitViolation { joint: "r.y", .. })
        ));
        s.rotation.y = f64::NAN;
        assert_eq!(
            forward_kinematics(&s, &geom),
            Err(KinematicsError::NonFiniteInput("articulated state"))
        );
    }

    #[test]
    fn bad_geometry_is_rejected() {
        let mut geom = ToolGeometry::default();
        geom.wrist.radius = 0.0;
        assert!(geom.validate().is_err());
        let mut geom = ToolGeometry::default();
        geom.shaft.a = geom.shaft.b;
        assert!(geom.validate().is_err());
    }

    #[test]
    fn trajectory_invariants() {
        assert!(Trajectory::new(vec![], 1.0).is_err());
        assert!(Trajectory::new(vec![ArticulatedState::rest()], 0.0).is_err());
        assert!(Trajectory::new(vec![ArticulatedState::rest()], 0.1).is_ok());
    }
}
