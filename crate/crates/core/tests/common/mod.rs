//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerical code; the oracles work on plain arrays.

#![allow(dead_code)]

use kvlr::kinematics::{ArticulatedState, CameraModel, Capsule, Dimensions};
use kvlr::metrics::BinaryMask;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat4 = [[f64; 4]; 4];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A state that keeps the default tool in front of a 64-pixel-focal camera.
pub fn random_state(r: &mut impl Rng) -> ArticulatedState {
    ArticulatedState {
        translation: Vector3::new(
            r.random_range(-0.02..0.02),
            r.random_range(-0.02..0.02),
            r.random_range(0.12..0.2),
        ),
        rotation: Vector3::new(
            r.random_range(-0.6..0.6),
            r.random_range(-0.6..0.6),
            r.random_range(-3.0..3.0),
        ),
        shaft_wrist: r.random_range(-0.8..0.8),
        left_gripper: r.random_range(0.0..1.5),
        right_gripper: r.random_range(0.0..1.5),
    }
}

pub fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Rodrigues rotation about a unit axis.
fn rodrigues(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let [x, y, z] = axis;
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}

fn homogeneous(r: [[f64; 3]; 3], p: [f64; 3]) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&r[i]);
        m[i][3] = p[i];
    }
    m[3][3] = 1.0;
    m
}

fn axis_angle(v: [f64; 3]) -> [[f64; 3]; 3] {
    let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if theta == 0.0 {
        return rodrigues([1.0, 0.0, 0.0], 0.0);
    }
    rodrigues([v[0] / theta, v[1] / theta, v[2] / theta], theta)
}

/// Part-to-world matrices in the order shaft, wrist, left jaw, right jaw.
pub fn fk_oracle(s: &ArticulatedState, d: &Dimensions) -> [Mat4; 4] {
    let wrist = homogeneous(
        axis_angle([s.rotation.x, s.rotation.y, s.rotation.z]),
        [s.translation.x, s.translation.y, s.translation.z],
    );
    // the shaft hangs off the wrist, so its hinge is traversed backwards
    let shaft = matmul(
        &wrist,
        &homogeneous(rodrigues([0.0, 1.0, 0.0], -s.shaft_wrist), [0.0; 3]),
    );
    let tip = [d.wrist_length, 0.0, 0.0];
    let left = matmul(&wrist, &homogeneous(rodrigues([0.0, 0.0, 1.0], s.left_gripper), tip));
    let right = matmul(&wrist, &homogeneous(rodrigues([0.0, 0.0, -1.0], s.right_gripper), tip));
    [shaft, wrist, left, right]
}

pub fn apply(m: &Mat4, p: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3])
}

/// Local capsule endpoints and radii in part order.
pub fn local_capsules(d: &Dimensions) -> [([f64; 3], [f64; 3], f64); 4] {
    [
        ([-d.shaft_length, 0.0, 0.0], [0.0; 3], d.shaft_radius),
        ([0.0; 3], [d.wrist_length, 0.0, 0.0], d.wrist_radius),
        ([0.0; 3], [d.gripper_length, 0.0, 0.0], d.gripper_radius),
        ([0.0; 3], [d.gripper_length, 0.0, 0.0], d.gripper_radius),
    ]
}

fn point_segment_distance(x: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab: [f64; 3] = std::array::from_fn(|i| b[i] - a[i]);
    let ax: [f64; 3] = std::array::from_fn(|i| x[i] - a[i]);
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = (ax.iter().zip(&ab).map(|(p, q)| p * q).sum::<f64>() / len2).clamp(0.0, 1.0);
    (0..3).map(|i| (ax[i] - t * ab[i]).powi(2)).sum::<f64>().sqrt()
}

/// Brute-force renderer: march every pixel ray in steps of `step` meters and
/// bisect each capsule's first inside sample down to its surface. Returns the
/// 0-based part index (or `None`) and the entry depth per pixel.
pub fn march_raster(caps: &[Capsule; 4], cam: &CameraModel, step: f64, t_max: f64) -> (Vec<Option<usize>>, Vec<f64>) {
    let mut labels = vec![None; cam.width * cam.height];
    let mut depth = vec![0.0; cam.width * cam.height];
    let steps = (t_max / step).ceil() as usize;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let dir = [
                (x as f64 + 0.5 - cam.cx) / cam.fx,
                (y as f64 + 0.5 - cam.cy) / cam.fy,
                1.0,
            ];
            let at = |t: f64| [dir[0] * t, dir[1] * t, t];
            let mut best: Option<(usize, f64)> = None;
            for (p, c) in caps.iter().enumerate() {
                let (a, b) = ([c.a.x, c.a.y, c.a.z], [c.b.x, c.b.y, c.b.z]);
                let inside = |t: f64| point_segment_distance(at(t), a, b) <= c.radius;
                let Some(k) = (1..=steps).find(|&k| inside(cam.z_near + k as f64 * step)) else {
                    continue;
                };
                let (mut lo, mut hi) = (cam.z_near + (k - 1) as f64 * step, cam.z_near + k as f64 * step);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if inside(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if best.is_none_or(|(_, t)| hi < t) {
                    best = Some((p, hi));
                }
            }
            if let Some((p, t)) = best {
                labels[y * cam.width + x] = Some(p);
                depth[y * cam.width + x] = t;
            }
        }
    }
    (labels, depth)
}

pub fn random_mask(r: &mut impl Rng, h: usize, w: usize, density: f64) -> BinaryMask {
    let mut m = BinaryMask::from_fn(h, w, |_, _| r.random_bool(density));
    if m.is_empty() {
        m.set(r.random_range(0..h), r.random_range(0..w), true);
    }
    m
}

/// Squared distance from every pixel to the nearest foreground pixel, by
/// exhaustive search. `None` everywhere for an empty mask.
pub fn brute_sq_distance(m: &BinaryMask) -> Vec<Option<u64>> {
    let fg: Vec<(i64, i64)> = (0..m.height * m.width)
        .filter(|&i| m.data[i])
        .map(|i| ((i / m.width) as i64, (i % m.width) as i64))
        .collect();
    (0..m.height * m.width)
        .map(|i| {
            let (y, x) = ((i / m.width) as i64, (i % m.width) as i64);
            fg.iter()
                .map(|&(fy, fx)| ((fy - y).pow(2) + (fx - x).pow(2)) as u64)
                .min()
        })
        .collect()
}

/// Symmetric mean nearest-pixel distance over all pixel pairs.
pub fn brute_chamfer(p: &BinaryMask, t: &BinaryMask) -> f64 {
    let pts = |m: &BinaryMask| -> Vec<(f64, f64)> {
        (0..m.height * m.width)
            .filter(|&i| m.data[i])
            .map(|i| ((i / m.width) as f64, (i % m.width) as f64))
            .collect()
    };
    let (a, b) = (pts(p), pts(t));
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| {
        from.iter()
            .map(|&(y, x)| {
                to.iter()
                    .map(|&(v, u)| ((y - v).powi(2) + (x - u).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (directed(&a, &b) + directed(&b, &a))
}

pub fn softmax_oracle(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}
