use super::MaskFrame;
use crate::kinematics::{CameraModel, Part, PartPoses, Projection};

/// Half-width in pixels of the rendered action tube.
pub const DEFAULT_TUBE_HALF_WIDTH: f64 = 3.0;

/// Rasterizes the projected skeleton of the tool: every pixel centre within
/// `half_width` of a projected part axis gets that part's label. Where
/// several parts qualify, the one whose closest axis point is nearest to the
/// camera wins, ties going to the lower part index.
pub fn tube_mask(poses: &PartPoses, cam: &CameraModel, half_width: f64) -> Result<MaskFrame, super::MetricsError> {
    let caps = poses.camera_capsules(cam);
    let mut segments: Vec<(Part, Projection, Projection)> = Vec::with_capacity(4);
    for p in Part::ALL {
        let c = &caps[p.index()];
        segments.push((p, cam.project(&c.a)?, cam.project(&c.b)?));
    }
    let (h, w) = (cam.height, cam.width);
    let mut labels = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut best: Option<(f64, u8)> = None;
            for (part, a, b) in &segments {
                let (du, dv) = (b.u - a.u, b.v - a.v);
                let len2 = du * du + dv * dv;
                let s = if len2 > 0.0 {
                    (((u - a.u) * du + (v - a.v) * dv) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (cu, cv) = (a.u + s * du, a.v + s * dv);
                if (u - cu).hypot(v - cv) > half_width {
                    continue;
                }
                let depth = a.depth + s * (b.depth - a.depth);
                if best.is_none_or(|(d, _)| depth < d) {
                    best = Some((depth, part.label()));
                }
            }
            if let Some((_, label)) = best {
                labels[y * w + x] = label;
            }
        }
    }
    Ok(MaskFrame {
        height: h,
        width: w,
        labels,
    })
}

/// One-pixel-wide skeleton.
pub fn centerline_mask(poses: &PartPoses, cam: &CameraModel) -> Result<MaskFrame, super::MetricsError> {
    tube_mask(poses, cam, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{forward_kinematics, ArticulatedState, ToolGeometry};
    use nalgebra::Vector3;

    fn scene() -> (PartPoses, CameraModel) {
        let mut s = ArticulatedState::rest();
        s.translation = Vector3::new(0.02, 0.0, 0.15);
        let poses = forward_kinematics(&s, &ToolGeometry::default()).unwrap();
        (poses, CameraModel::square(64))
    }

    #[test]
    fn tube_contains_centerline() {
        let (poses, cam) = scene();
        let tube = tube_mask(&poses, &cam, DEFAULT_TUBE_HALF_WIDTH).unwrap();
        let center = centerline_mask(&poses, &cam).unwrap();
        assert!(center.union().area() > 0);
        assert!(tube.union().area() > center.union().area());
        for (t, c) in tube.labels.iter().zip(&center.labels) {
            if *c != 0 {
                assert_ne!(*t, 0);
            }
        }
    }

    #[test]
    fn every_label_appears() {
        let (poses, cam) = scene();
        let tube = tube_mask(&poses, &cam, DEFAULT_TUBE_HALF_WIDTH).unwrap();
        for l in 1..=3 {
            assert!(tube.part(l).area() > 0, "label {l}");
        }
    }
}
