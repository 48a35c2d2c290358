use nalgebra::{Matrix3, Vector2, Vector3};

use crate::error::{domain, Error, Result};
use crate::scalar::Real;

/// Distortion-free pinhole intrinsics. Pixel centres sit at half-integer
/// coordinates: pixel `(col, row)` covers `[col, col + 1) x [row, row + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Centred pinhole of the given horizontal field of view, square pixels.
    pub fn from_hfov(hfov_deg: T, width: u32, height: u32) -> Result<Self> {
        if !(hfov_deg > T::zero() && hfov_deg < T::lit(180.0)) {
            return Err(domain(format!(
                "horizontal field of view must lie in (0, 180) degrees, got {}",
                hfov_deg.as_f64()
            )));
        }
        if width == 0 || height == 0 {
            return Err(domain("image size must be positive"));
        }
        let w = T::from_u32(width).unwrap();
        let h = T::from_u32(height).unwrap();
        let half_deg = hfov_deg * T::lit(0.5);
        // tan(45 deg) does not round to exactly one
        let tan_half = if half_deg == T::lit(45.0) {
            T::one()
        } else {
            half_deg.deg_to_rad().tan()
        };
        let f = w / (T::lit(2.0) * tan_half);
        Self::new(f, f, w * T::lit(0.5), h * T::lit(0.5), width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let w = T::from_u32(self.width).unwrap();
        let h = T::from_u32(self.height).unwrap();
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(domain("focal lengths must be positive"));
        }
        if !(self.cx > T::zero() && self.cx < w && self.cy > T::zero() && self.cy < h) {
            return Err(domain("principal point must lie strictly inside the image"));
        }
        Ok(())
    }

    /// Horizontal field of view in degrees.
    pub fn hfov_deg(&self) -> T {
        let w = T::from_u32(self.width).unwrap();
        (T::lit(2.0) * (w / (T::lit(2.0) * self.fx)).atan()).rad_to_deg()
    }

    pub fn matrix(&self) -> Matrix3<T> {
        let (o, l) = (T::zero(), T::one());
        Matrix3::new(self.fx, o, self.cx, o, self.fy, self.cy, o, o, l)
    }

    /// True when `pixel` lies inside `[0, width) x [0, height)`.
    pub fn contains(&self, pixel: &Vector2<T>) -> bool {
        let w = T::from_u32(self.width).unwrap();
        let h = T::from_u32(self.height).unwrap();
        pixel.x >= T::zero() && pixel.x < w && pixel.y >= T::zero() && pixel.y < h
    }

    /// Pinhole projection of a camera-frame point.
    pub fn project(&self, p_cam: &Vector3<T>) -> Result<Vector2<T>> {
        if !(p_cam.z > T::zero()) {
            return Err(Error::BehindCamera { z: p_cam.z.as_f64() });
        }
        Ok(self.project_unchecked(p_cam))
    }

    #[inline]
    pub fn project_unchecked(&self, p_cam: &Vector3<T>) -> Vector2<T> {
        Vector2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }

    /// Back-projects `pixel` to the camera-frame point at z = `depth`.
    pub fn unproject(&self, pixel: &Vector2<T>, depth: T) -> Result<Vector3<T>> {
        if !(depth > T::zero()) {
            return Err(domain(format!("depth must be positive, got {}", depth.as_f64())));
        }
        if !self.contains(pixel) {
            return Err(domain("pixel outside image bounds"));
        }
        Ok(self.unproject_unchecked(pixel, depth))
    }

    #[inline]
    pub fn unproject_unchecked(&self, pixel: &Vector2<T>, depth: T) -> Vector3<T> {
        Vector3::new(
            (pixel.x - self.cx) * depth / self.fx,
            (pixel.y - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Normalised image coordinates (the bearing with z = 1).
    #[inline]
    pub fn normalize(&self, pixel: &Vector2<T>) -> Vector3<T> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            T::one(),
        )
    }

    /// Centre of pixel `(col, row)`.
    #[inline]
    pub fn pixel_center(col: u32, row: u32) -> Vector2<T> {
        Vector2::new(
            T::from_u32(col).unwrap() + T::lit(0.5),
            T::from_u32(row).unwrap() + T::lit(0.5),
        )
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        CameraIntrinsics {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            width: self.width,
            height: self.height,
        }
    }
}
