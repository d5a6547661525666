//! Synthetic test trajectories.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ArticulatedState, JointLimits, KinematicsError, Trajectory};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    Static,
    LinearTransport,
    WristArticulation,
    GripperCycle,
    Composite,
}

impl SynthKind {
    pub const ALL: [SynthKind; 5] = [
        SynthKind::Static,
        SynthKind::LinearTransport,
        SynthKind::WristArticulation,
        SynthKind::GripperCycle,
        SynthKind::Composite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Static => "static",
            SynthKind::LinearTransport => "linear-transport",
            SynthKind::WristArticulation => "wrist-articulation",
            SynthKind::GripperCycle => "gripper-cycle",
            SynthKind::Composite => "composite",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = KinematicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| KinematicsError::InvalidParams(format!("unknown trajectory kind `{s}`")))
    }
}

/// Motion parameters shared by all trajectory kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub base: ArticulatedState,
    pub dt: f64,
    /// Wrist velocity in meters per second (linear transport).
    pub velocity: Vector3<f64>,
    /// Peak wrist rotation offset in radians (wrist articulation).
    pub wrist_amplitude: f64,
    /// Peak shaft-to-wrist swing in radians (wrist articulation).
    pub shaft_amplitude: f64,
    /// Peak jaw opening in radians (gripper cycle).
    pub gripper_amplitude: f64,
    /// Oscillation period in frames.
    pub period: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            base: ArticulatedState {
                translation: Vector3::new(0.01, 0.0, 0.15),
                rotation: Vector3::new(0.0, 0.0, 0.35),
                shaft_wrist: 0.2,
                left_gripper: 0.15,
                right_gripper: 0.15,
            },
            dt: 1.0,
            velocity: Vector3::new(0.002, 0.001, 0.0),
            wrist_amplitude: 0.4,
            shaft_amplitude: 0.3,
            gripper_amplitude: 0.6,
            period: 8.0,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<(), KinematicsError> {
        let scalars = [
            self.dt,
            self.wrist_amplitude,
            self.shaft_amplitude,
            self.gripper_amplitude,
            self.period,
        ];
        if !self.base.is_finite() || self.velocity.iter().chain(scalars.iter()).any(|v| !v.is_finite()) {
            return Err(KinematicsError::InvalidParams("non-finite synthesis parameter".into()));
        }
        if self.dt <= 0.0 {
            return Err(KinematicsError::InvalidParams("dt must be positive".into()));
        }
        if self.period <= 0.0 {
            return Err(KinematicsError::InvalidParams("period must be positive".into()));
        }
        Ok(())
    }
}

/// Generates `frames` states of the given kind. The seed only chooses
/// oscillation phases, so the output is a pure function of its inputs.
pub fn synth_trajectory(
    kind: SynthKind,
    params: &SynthParams,
    frames: usize,
    seed: u64,
    limits: &JointLimits,
) -> Result<Trajectory, KinematicsError> {
    if frames == 0 {
        return Err(KinematicsError::InvalidParams("frame count must be at least 1".into()));
    }
    params.validate()?;

    let mut rng = rng::stream(seed, rng::tags::SYNTH);
    let phases: [f64; 5] = std::array::from_fn(|_| rng.random::<f64>() * TAU);

    let (transport, wrist, gripper) = match kind {
        SynthKind::Static => (false, false, false),
        SynthKind::LinearTransport => (true, false, false),
        SynthKind::WristArticulation => (false, true, false),
        SynthKind::GripperCycle => (false, false, true),
        SynthKind::Composite => (true, true, true),
    };

    let omega = TAU / params.period;
    let states = (0..frames)
        .map(|i| {
            let t = i as f64;
            let mut s = params.base;
            if transport {
                s.translation += params.velocity * (params.dt * t);
            }
            if wrist {
                let a = params.wrist_amplitude;
                s.rotation += Vector3::new(
                    0.0,
                    a * (omega * t + phases[0]).sin(),
                    a * (omega * t + phases[1]).sin(),
                );
                s.shaft_wrist += params.shaft_amplitude * (omega * t + phases[2]).sin();
            }
            if gripper {
                let open = |phase: f64| 0.5 * params.gripper_amplitude * (1.0 - (omega * t + phase).cos());
                s.left_gripper += open(phases[3]);
                s.right_gripper += open(phases[4]);
            }
            limits.clamp(&s)
        })
        .collect();
    Trajectory::new(states, params.dt)
}
