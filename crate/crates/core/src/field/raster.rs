//! Analytic ray-capsule rasterization and the orientation channel.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use crate::kinematics::{CameraModel, Capsule, Part, PartPoses};

/// Per-pixel visible part and depth for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    /// Front-most part at each pixel (row-major).
    pub part: Vec<Option<Part>>,
    /// Depth of the front-most hit, 0 where nothing is hit.
    pub depth: Vec<f64>,
}

impl Raster {
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// One-hot semantic vector at pixel `i`.
    pub fn semantic(&self, i: usize) -> [f64; 3] {
        let mut s = [0.0; 3];
        if let Some(p) = self.part[i] {
            s[p.semantic_channel()] = 1.0;
        }
        s
    }

    /// Mask labels: 0 background, 1 shaft, 2 wrist, 3 gripper.
    pub fn labels(&self) -> Vec<u8> {
        self.part.iter().map(|p| p.map_or(0, Part::label)).collect()
    }

    pub fn tool_mask(&self) -> Vec<bool> {
        self.part.iter().map(Option::is_some).collect()
    }
}

/// Entry depth of a ray `t * dir` (origin at the camera center) into the
/// sphere of radius `r` centred at `c`.
fn sphere_entry(dir: &Vector3<f64>, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let dd = dir.norm_squared();
    let dc = dir.dot(c);
    let h = dc * dc - dd * (c.norm_squared() - r * r);
    (h >= 0.0).then(|| (dc - h.sqrt()) / dd)
}

/// First depth `t > z_near` at which the ray `t * dir` enters the capsule.
///
/// `dir` must have unit `z`, so the ray parameter is the camera depth. The
/// capsule is the union of a finite cylinder and two end spheres; its first
/// entry is the smallest of the lateral-cylinder entry (restricted to the
/// segment span) and the two sphere entries.
pub fn intersect_capsule(dir: &Vector3<f64>, cap: &Capsule, z_near: f64) -> Option<f64> {
    let a = cap.a.coords;
    let ba = cap.b - cap.a;
    let oa = -a;
    let r = cap.radius;

    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > z_near && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };

    let baba = ba.norm_squared();
    let bard = ba.dot(dir);
    let baoa = ba.dot(&oa);
    let k2 = baba * dir.norm_squared() - bard * bard;
    if k2 > 1e-18 * baba * dir.norm_squared() {
        let k1 = baba * dir.dot(&oa) - baoa * bard;
        let k0 = baba * oa.norm_squared() - baoa * baoa - r * r * baba;
        let h = k1 * k1 - k2 * k0;
        if h >= 0.0 {
            let t = (-k1 - h.sqrt()) / k2;
            let y = baoa + t * bard;
            if y > 0.0 && y < baba {
                consider(t);
            }
        }
    }
    for c in [a, cap.b.coords] {
        if let Some(t) = sphere_entry(dir, &c, r) {
            consider(t);
        }
    }
    best
}

/// Renders part labels and depth by casting one ray through each pixel
/// center against every part capsule; the nearest hit wins, ties going to
/// the lower part index.
pub fn rasterize(poses: &PartPoses, cam: &CameraModel) -> Raster {
    let caps = poses.camera_capsules(cam);
    let (h, w) = (cam.height, cam.width);
    let mut part = vec![None; h * w];
    let mut depth = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let dir = cam.ray(x as f64 + 0.5, y as f64 + 0.5);
            let mut best: Option<(Part, f64)> = None;
            for p in Part::ALL {
                if let Some(t) = intersect_capsule(&dir, &caps[p.index()], cam.z_near) {
                    if best.is_none_or(|(_, bt)| t < bt) {
                        best = Some((p, t));
                    }
                }
            }
            if let Some((p, t)) = best {
                part[y * w + x] = Some(p);
                depth[y * w + x] = t;
            }
        }
    }
    Raster {
        height: h,
        width: w,
        part,
        depth,
    }
}

/// Image-plane direction of a camera-frame capsule axis, via the projection
/// Jacobian at a visible point of the segment. `None` when the axis projects
/// to a point.
fn projected_axis(cap: &Capsule, cam: &CameraModel) -> Option<(f64, f64)> {
    let mid = cap.centroid();
    let at: Point3<f64> = if mid.z > cam.z_near {
        mid
    } else if cap.a.z > cap.b.z {
        cap.a
    } else {
        cap.b
    };
    if at.z <= cam.z_near {
        return None;
    }
    let d = cap.axis();
    let du = cam.fx * (d.x * at.z - at.x * d.z);
    let dv = cam.fy * (d.y * at.z - at.y * d.z);
    let scale = cam.fx.max(cam.fy) * d.norm() * at.z;
    if du.hypot(dv) <= 1e-12 * scale {
        None
    } else {
        Some((du, dv))
    }
}

/// Orientation descriptor: signed angle between the visible part's projected
/// long axis and the image `x` axis, divided by pi. Zero off the tool and for
/// parts seen end-on.
pub fn rotation_channel(poses: &PartPoses, raster: &Raster, cam: &CameraModel) -> Vec<f64> {
    let caps = poses.camera_capsules(cam);
    let rho: [f64; 4] = std::array::from_fn(|i| match projected_axis(&caps[i], cam) {
        Some((du, dv)) => dv.atan2(du) / PI,
        None => 0.0,
    });
    raster.part.iter().map(|p| p.map_or(0.0, |p| rho[p.index()])).collect()
}
