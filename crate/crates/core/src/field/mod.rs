//! Pixel-aligned 9-channel action fields.
//!
//! A [`KvaField`] stores, per pixel, three part-semantic indicators (shaft,
//! wrist, gripper), rendered depth, a projected orientation descriptor,
//! projected velocity `(du, dv, dz)` and acceleration magnitude.

mod motion;
mod normalize;
mod raster;

pub use motion::{centroid_track, motion_channels, motion_from_track, MotionChannels, PartTrack};
pub use normalize::{compute_stats, denormalize, normalize, ChannelStats, STD_FLOOR};
pub use raster::{intersect_capsule, rasterize, rotation_channel, Raster};

use thiserror::Error;

use crate::kinematics::{forward_kinematics, CameraModel, KinematicsError, ToolGeometry, Trajectory};

/// Number of channels in a field.
pub const CHANNELS: usize = 9;

/// Channel offsets.
pub mod channel {
    pub const SEM_SHAFT: usize = 0;
    pub const SEM_WRIST: usize = 1;
    pub const SEM_GRIPPER: usize = 2;
    pub const DEPTH: usize = 3;
    pub const ROTATION: usize = 4;
    pub const VEL_X: usize = 5;
    pub const VEL_Y: usize = 6;
    pub const VEL_Z: usize = 7;
    pub const ACCEL: usize = 8;
    /// First non-semantic channel.
    pub const FIRST_CONTINUOUS: usize = DEPTH;
}

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("frame {frame} outside trajectory of {len} frames")]
    FrameOutOfRange { frame: usize, len: usize },
    #[error("cannot compute channel statistics from an empty corpus")]
    EmptyCorpus,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// `height x width x 9` control tensor for one frame, stored pixel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KvaField {
    height: usize,
    width: usize,
    frame: usize,
    data: Vec<f64>,
}

impl KvaField {
    pub fn zeros(height: usize, width: usize, frame: usize) -> Self {
        Self {
            height,
            width,
            frame,
            data: vec![0.0; height * width * CHANNELS],
        }
    }

    /// Builds a field from pixel-major data (`[y][x][c]`).
    pub fn from_pixel_major(height: usize, width: usize, frame: usize, data: Vec<f64>) -> Result<Self, FieldError> {
        if data.len() != height * width * CHANNELS {
            return Err(FieldError::ShapeMismatch(format!(
                "expected {} values for {height}x{width}x{CHANNELS}, got {}",
                height * width * CHANNELS,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            frame,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * CHANNELS + c] = v;
    }

    /// All nine channel values at pixel index `i` (row-major).
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * CHANNELS..(i + 1) * CHANNELS]
    }

    pub fn pixel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * CHANNELS..(i + 1) * CHANNELS]
    }

    /// One channel as a row-major image.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(CHANNELS).copied().collect()
    }

    /// True when any semantic channel is set at pixel `i`.
    pub fn is_tool(&self, i: usize) -> bool {
        self.pixel(i)[..3].iter().any(|&v| v != 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Assembles the full field for frame `t` (0-based) of a trajectory.
pub fn lift(traj: &Trajectory, geom: &ToolGeometry, cam: &CameraModel, t: usize) -> Result<KvaField, FieldError> {
    if t >= traj.len() {
        return Err(FieldError::FrameOutOfRange {
            frame: t,
            len: traj.len(),
        });
    }
    cam.validate()?;
    let poses = forward_kinematics(&traj.states()[t], geom)?;
    let raster = rasterize(&poses, cam);
    let rho = rotation_channel(&poses, &raster, cam);
    let motion = motion::motion_channels_on(traj, geom, cam, t, &raster)?;

    let mut field = KvaField::zeros(cam.height, cam.width, t);
    for i in 0..field.pixels() {
        let px = field.pixel_mut(i);
        if let Some(part) = raster.part[i] {
            px[part.semantic_channel()] = 1.0;
        }
        px[channel::DEPTH] = raster.depth[i];
        px[channel::ROTATION] = rho[i];
        px[channel::VEL_X..=channel::VEL_Z].copy_from_slice(&motion.velocity[i]);
        px[channel::ACCEL] = motion.acceleration[i];
    }
    Ok(field)
}

/// Lifts every frame of a trajectory.
pub fn lift_all(traj: &Trajectory, geom: &ToolGeometry, cam: &CameraModel) -> Result<Vec<KvaField>, FieldError> {
    (0..traj.len()).map(|t| lift(traj, geom, cam, t)).collect()
}
