use nalgebra::{Matrix3, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};

use crate::scalar::Real;

/// Rigid world-to-camera transform: `x_cam = R * x_world + t`.
///
/// The rotation is stored as a unit quaternion with non-negative real part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose<T: Real> {
    rotation: UnitQuaternion<T>,
    translation: Vector3<T>,
}

pub(crate) fn canonical<T: Real>(q: UnitQuaternion<T>) -> UnitQuaternion<T> {
    if q.w < T::zero() {
        Unit::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Rotation angle of `q` in radians, in `[0, pi]`.
pub fn rotation_angle<T: Real>(q: &UnitQuaternion<T>) -> T {
    let v = q.imag().norm();
    T::lit(2.0) * v.atan2(q.w.abs())
}

pub fn rotation_from_matrix<T: Real>(m: &Matrix3<T>) -> UnitQuaternion<T> {
    canonical(UnitQuaternion::from_rotation_matrix(
        &Rotation3::from_matrix_unchecked(*m),
    ))
}

impl<T: Real> CameraPose<T> {
    pub fn new(rotation: UnitQuaternion<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation: canonical(rotation),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// From an orthonormal rotation matrix and translation.
    pub fn from_matrix(rotation: &Matrix3<T>, translation: Vector3<T>) -> Self {
        Self::new(rotation_from_matrix(rotation), translation)
    }

    /// From quaternion coefficients `(w, x, y, z)`, normalised on the way in.
    pub fn from_wxyz(q: [T; 4], translation: Vector3<T>) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        Self::new(q, translation)
    }

    /// Pose of a camera located at `center` with world-to-camera rotation `rotation`.
    pub fn from_center(rotation: UnitQuaternion<T>, center: &Vector3<T>) -> Self {
        let t = -(rotation * center);
        Self::new(rotation, t)
    }

    pub fn rotation(&self) -> &UnitQuaternion<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn wxyz(&self) -> [T; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    #[inline]
    pub fn transform_point(&self, x_world: &Vector3<T>) -> Vector3<T> {
        self.rotation * x_world + self.translation
    }

    #[inline]
    pub fn inverse_transform_point(&self, x_cam: &Vector3<T>) -> Vector3<T> {
        self.rotation.inverse_transform_vector(&(x_cam - self.translation))
    }

    /// Camera centre in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vector3<T> {
        -self.rotation.inverse_transform_vector(&self.translation)
    }

    /// Viewing direction (camera +z axis) in world coordinates.
    pub fn forward(&self) -> Vector3<T> {
        self.rotation.inverse_transform_vector(&Vector3::z())
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        Self::new(r, -(r * self.translation))
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn cast<U: Real>(&self) -> CameraPose<U> {
        let q = self.wxyz().map(|c| U::lit(c.as_f64()));
        let t = self.translation.map(|c| U::lit(c.as_f64()));
        CameraPose::from_wxyz(q, t)
    }
}

/// Pose of camera `b` expressed relative to camera `a`:
/// `R_rel = R_b R_a^T`, `t_rel = t_b - R_rel t_a`, so `relative_pose(a, b) ∘ a = b`.
pub fn relative_pose<T: Real>(a: &CameraPose<T>, b: &CameraPose<T>) -> CameraPose<T> {
    let r = b.rotation * a.rotation.inverse();
    CameraPose::new(r, b.translation - r * a.translation)
}
