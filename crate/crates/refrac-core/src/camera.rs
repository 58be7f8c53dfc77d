//! Pinhole camera model.
//!
//! Convention: right handed, the camera looks down +z in camera space, y runs
//! down in image space. Pixel centers sit at integer + 0.5. `rotation` maps
//! world coordinates into camera coordinates; `translation` is the world
//! origin expressed in camera space (`x_cam = R x_world + t`).

use crate::vec3::{Mat3, Ray, Vec3};

#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -self.rotation.tr_mul_vec(self.translation)
    }

    /// World-space ray through the center of pixel `(px, py)`; sub-pixel
    /// coordinates are allowed.
    pub fn pixel_ray(&self, px: f64, py: f64) -> Ray {
        let dir_cam = Vec3::new(
            (px + 0.5 - self.cx) / self.fx,
            (py + 0.5 - self.cy) / self.fy,
            1.0,
        );
        let dir = self.rotation.tr_mul_vec(dir_cam).normalized();
        Ray::new(self.center(), dir)
    }

    /// Projects a world point to pixel coordinates. Returns `None` when the
    /// point is behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let pc = self.rotation.mul_vec(p) + self.translation;
        if pc.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * pc.x / pc.z + self.cx - 0.5,
            self.fy * pc.y / pc.z + self.cy - 0.5,
        ))
    }

    /// Builds a camera at `eye` looking at `target`, with `up` as the
    /// approximate world up direction.
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
    ) -> Camera {
        let forward = (target - eye).normalized();
        // Image y runs down, so the camera-space y axis opposes world up.
        let right = forward.cross(up).normalized();
        let down = forward.cross(right).normalized();
        let rotation = Mat3::from_rows(right, down, forward);
        let translation = -rotation.mul_vec(eye);
        Camera {
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation,
            translation,
            width,
            height,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam() -> Camera {
        Camera {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            rotation: Mat3::IDENTITY,
            translation: Vec3::ZERO,
            width: 4,
            height: 4,
        }
    }

    #[test]
    fn identity_pixel_zero() {
        let cam = identity_cam();
        let ray = cam.pixel_ray(0.0, 0.0);
        let expect = Vec3::new(0.5, 0.5, 1.0).normalized();
        assert!((ray.dir - expect).norm() < 1e-12);
        assert!((ray.origin - Vec3::ZERO).norm() < 1e-12);
    }

    #[test]
    fn adjacent_pixels_distinct() {
        let cam = Camera::look_at(
            Vec3::new(0.4, -0.7, 2.0),
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
            60.0,
            60.0,
            64,
            64,
        );
        let a = cam.pixel_ray(10.0, 10.0);
        let b = cam.pixel_ray(11.0, 10.0);
        assert!((a.dir - b.dir).norm() > 1e-6);
        assert!((a.dir.norm() - 1.0).abs() < 1e-12);
        assert!((b.dir.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn straight_down_center_pixel() {
        // Camera above the origin looking along -z. Built analytically:
        // camera z axis = (0,0,-1), x = (1,0,0), y = (0,-1,0).
        let rotation = Mat3::from_rows(
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, -1.0),
        );
        let eye = Vec3::new(0.0, 0.0, 3.0);
        let cam = Camera {
            fx: 50.0,
            fy: 50.0,
            cx: 32.0,
            cy: 32.0,
            rotation,
            translation: -rotation.mul_vec(eye),
            width: 64,
            height: 64,
        };
        assert!(cam.rotation.orthonormality_error() < 1e-12);
        let ray = cam.pixel_ray(31.5, 31.5);
        assert!((ray.dir - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((ray.origin - eye).norm() < 1e-12);
    }

    #[test]
    fn project_pixel_ray_roundtrip() {
        let cam = Camera::look_at(
            Vec3::new(1.2, 0.8, 2.5),
            Vec3::new(0.0, 0.1, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            80.0,
            75.0,
            64,
            48,
        );
        assert!(cam.rotation.orthonormality_error() < 1e-12);
        for &(px, py) in &[(0.0, 0.0), (13.25, 40.5), (63.0, 47.0)] {
            let ray = cam.pixel_ray(px, py);
            let p = ray.at(2.3);
            let (qx, qy) = cam.project(p).unwrap();
            assert!((qx - px).abs() < 1e-9, "px {px} -> {qx}");
            assert!((qy - py).abs() < 1e-9, "py {py} -> {qy}");
        }
    }
}
