use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use super::pose::{canonical, CameraPose};
use crate::error::{domain, Result};
use crate::scalar::Real;

/// Similarity transform `y = s * R * x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3Transform<T: Real> {
    scale: T,
    rotation: UnitQuaternion<T>,
    translation: Vector3<T>,
}

impl<T: Real> Sim3Transform<T> {
    pub fn new(scale: T, rotation: UnitQuaternion<T>, translation: Vector3<T>) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(domain(format!(
                "similarity scale must be positive and finite, got {}",
                scale.as_f64()
            )));
        }
        Ok(Self {
            scale,
            rotation: canonical(rotation),
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: T::one(),
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_rigid(rotation: UnitQuaternion<T>, translation: Vector3<T>) -> Self {
        Self {
            scale: T::one(),
            rotation: canonical(rotation),
            translation,
        }
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn rotation(&self) -> &UnitQuaternion<T> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p * self.scale + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: canonical(self.rotation * other.rotation),
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        let s = T::one() / self.scale;
        Self {
            scale: s,
            rotation: canonical(r),
            translation: -(r * self.translation) * s,
        }
    }

    /// Re-expresses a world-to-camera pose in the transformed world frame.
    ///
    /// Camera centres map as points; camera-frame coordinates are scaled by `s`,
    /// which leaves every pinhole projection unchanged.
    pub fn transform_pose(&self, pose: &CameraPose<T>) -> CameraPose<T> {
        let r = pose.rotation() * self.rotation.inverse();
        let t = pose.translation() * self.scale - r * self.translation;
        CameraPose::new(r, t)
    }

    pub fn cast<U: Real>(&self) -> Sim3Transform<U> {
        let q = self.rotation.quaternion();
        let q = nalgebra::Quaternion::new(
            U::lit(q.w.as_f64()),
            U::lit(q.i.as_f64()),
            U::lit(q.j.as_f64()),
            U::lit(q.k.as_f64()),
        );
        Sim3Transform {
            scale: U::lit(self.scale.as_f64()),
            rotation: UnitQuaternion::from_quaternion(q),
            translation: self.translation.map(|c| U::lit(c.as_f64())),
        }
    }
}
