use nalgebra::{Isometry3, Matrix3, Point3, Rotation3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::KinematicsError;

/// Default near-plane distance in meters.
pub const DEFAULT_Z_NEAR: f64 = 1e-4;

/// Pinhole camera with a rigid world-to-camera extrinsic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
    #[serde(default = "default_z_near")]
    pub z_near: f64,
}

fn default_z_near() -> f64 {
    DEFAULT_Z_NEAR
}

/// Image-plane position plus depth of a camera-frame point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraModel {
    /// Camera with identity extrinsic.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            z_near: DEFAULT_Z_NEAR,
        }
    }

    /// Square image with focal length equal to its side and the principal
    /// point at the center.
    pub fn square(size: usize) -> Self {
        let s = size as f64;
        Self::new(s, s, s / 2.0, s / 2.0, size, size)
    }

    /// Same camera with intrinsics rescaled to a new resolution.
    pub fn resized(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        let bad = |m: &str| Err(KinematicsError::InvalidCamera(m.to_string()));
        let finite = [self.fx, self.fy, self.cx, self.cy, self.z_near]
            .iter()
            .chain(self.rotation.iter())
            .chain(self.translation.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(KinematicsError::NonFiniteInput("camera"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be positive");
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64 && self.cy > 0.0 && self.cy < self.height as f64) {
            return bad("principal point must lie inside the image");
        }
        let r = &self.rotation;
        if (r.transpose() * r - Matrix3::identity()).amax() > 1e-9 || (r.determinant() - 1.0).abs() > 1e-9 {
            return bad("extrinsic rotation must be orthonormal with determinant +1");
        }
        if !(self.z_near > 0.0) {
            return bad("z_near must be positive");
        }
        Ok(())
    }

    /// World-to-camera rigid transform.
    pub fn extrinsic(&self) -> Isometry3<f64> {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        Isometry3::from_parts(
            Translation3::from(self.translation),
            UnitQuaternion::from_rotation_matrix(&rot),
        )
    }

    /// Projects a camera-frame point.
    pub fn project(&self, x: &Point3<f64>) -> Result<Projection, KinematicsError> {
        if x.z <= self.z_near {
            return Err(KinematicsError::BehindCamera { z: x.z });
        }
        Ok(Projection {
            u: self.fx * x.x / x.z + self.cx,
            v: self.fy * x.y / x.z + self.cy,
            depth: x.z,
        })
    }

    /// Inverse of [`CameraModel::project`].
    pub fn unproject(&self, p: &Projection) -> Point3<f64> {
        Point3::new(
            (p.u - self.cx) / self.fx * p.depth,
            (p.v - self.cy) / self.fy * p.depth,
            p.depth,
        )
    }

    /// Camera-frame ray direction through pixel coordinates `(u, v)`, scaled
    /// so that its `z` component is 1 (ray parameter equals depth).
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optical_axis_hits_principal_point() {
        let cam = CameraModel::new(100.0, 100.0, 128.0, 128.0, 256, 256);
        let p = cam.project(&Point3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (128.0, 128.0, 2.0));
    }

    #[test]
    fn similar_triangles() {
        let mut cam = CameraModel::new(100.0, 100.0, 0.5, 0.5, 1, 1);
        cam.cx = 0.0;
        let p = cam.project(&Point3::new(1.0, 0.0, 1.0)).unwrap();
        assert_eq!(p.u, 100.0);
    }

    #[test]
    fn near_plane_rejects() {
        let cam = CameraModel::square(64);
        assert_eq!(
            cam.project(&Point3::new(0.0, 0.0, 1e-5)),
            Err(KinematicsError::BehindCamera { z: 1e-5 })
        );
        assert!(cam.project(&Point3::new(0.0, 0.0, -1.0)).is_err());
    }

    #[test]
    fn camera_validation() {
        assert!(CameraModel::square(64).validate().is_ok());
        let mut cam = CameraModel::square(64);
        cam.rotation[(0, 1)] = 0.1;
        assert!(cam.validate().is_err());
        let mut cam = CameraModel::square(64);
        cam.cx = 64.0;
        assert!(cam.validate().is_err());
        let mut cam = CameraModel::square(64);
        cam.rotation = -Matrix3::identity();
        assert!(cam.validate().is_err());
    }
}
