//! Velocity and acceleration channels from consecutive articulated states.
//!
//! Each part is summarised by its projected centroid `(u, v, depth)`. The
//! velocity at frame `t` is the backward difference of that track divided by
//! `dt`; the acceleration magnitude is the norm of the velocity change divided
//! by `dt`. Both are painted on the frame-`t` pixels of the part that is
//! visible there.

use crate::kinematics::{forward_kinematics, CameraModel, Part, ToolGeometry, Trajectory};

use super::{rasterize, FieldError, Raster};

/// Projected centroid per frame; `None` when the centroid is behind the camera.
pub type PartTrack = Vec<Option<[f64; 3]>>;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionChannels {
    pub velocity: Vec<[f64; 3]>,
    pub acceleration: Vec<f64>,
}

/// Projected centroid tracks for all four parts over frames `0..=last`.
pub fn centroid_track(
    traj: &Trajectory,
    geom: &ToolGeometry,
    cam: &CameraModel,
    last: usize,
) -> Result<[PartTrack; 4], FieldError> {
    let to_cam = cam.extrinsic();
    let mut tracks: [PartTrack; 4] = Default::default();
    for state in &traj.states()[..=last] {
        let poses = forward_kinematics(state, geom)?;
        for part in Part::ALL {
            let c = to_cam * poses.capsule(part).centroid();
            let phi = cam.project(&c).ok().map(|p| [p.u, p.v, p.depth]);
            tracks[part.index()].push(phi);
        }
    }
    Ok(tracks)
}

fn diff(a: &[f64; 3], b: &[f64; 3], dt: f64) -> [f64; 3] {
    [(a[0] - b[0]) / dt, (a[1] - b[1]) / dt, (a[2] - b[2]) / dt]
}

/// Velocity and acceleration magnitude at frame `t` of a single track.
/// Frames without enough history (or with a centroid behind the camera)
/// yield zeros.
pub fn motion_from_track(track: &[Option<[f64; 3]>], t: usize, dt: f64) -> ([f64; 3], f64) {
    let velocity_at = |k: usize| -> Option<[f64; 3]> {
        if k == 0 {
            return None;
        }
        Some(diff(track[k].as_ref()?, track[k - 1].as_ref()?, dt))
    };
    let v = velocity_at(t);
    let alpha = match (v, t.checked_sub(1).and_then(velocity_at)) {
        (Some(v), Some(prev)) => {
            let d = diff(&v, &prev, 1.0);
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() / dt
        }
        _ => 0.0,
    };
    (v.unwrap_or([0.0; 3]), alpha)
}

pub(super) fn paint(raster: &Raster, tracks: &[PartTrack; 4], t: usize, dt: f64) -> MotionChannels {
    let per_part: [([f64; 3], f64); 4] = std::array::from_fn(|i| motion_from_track(&tracks[i], t, dt));
    let mut velocity = vec![[0.0; 3]; raster.pixels()];
    let mut acceleration = vec![0.0; raster.pixels()];
    for (i, part) in raster.part.iter().enumerate() {
        if let Some(p) = part {
            let (v, a) = per_part[p.index()];
            velocity[i] = v;
            acceleration[i] = a;
        }
    }
    MotionChannels { velocity, acceleration }
}

/// Motion channels for frame `t` (0-based), painted on the given raster of
/// that frame.
pub(super) fn motion_channels_on(
    traj: &Trajectory,
    geom: &ToolGeometry,
    cam: &CameraModel,
    t: usize,
    raster: &Raster,
) -> Result<MotionChannels, FieldError> {
    let tracks = centroid_track(traj, geom, cam, t)?;
    Ok(paint(raster, &tracks, t, traj.dt()))
}

/// Motion channels for frame `t` (0-based). Velocity needs `t >= 1` and
/// acceleration `t >= 2`; earlier frames are zero-padded.
pub fn motion_channels(
    traj: &Trajectory,
    geom: &ToolGeometry,
    cam: &CameraModel,
    t: usize,
) -> Result<MotionChannels, FieldError> {
    if t >= traj.len() {
        return Err(FieldError::FrameOutOfRange {
            frame: t,
            len: traj.len(),
        });
    }
    let poses = forward_kinematics(&traj.states()[t], geom)?;
    let raster = rasterize(&poses, cam);
    motion_channels_on(traj, geom, cam, t, &raster)
}
