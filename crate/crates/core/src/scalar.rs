//! Scalar abstraction shared by the geometry kernels.

use nalgebra as na;
use num_traits as nt;

/// Floating point type the geometry kernels are generic over (`f32` or `f64`).
pub trait Real: na::RealField + Copy + nt::FromPrimitive + nt::ToPrimitive {
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn deg_to_rad(self) -> Self {
        self * Self::pi() / Self::lit(180.0)
    }

    #[inline]
    fn rad_to_deg(self) -> Self {
        self * Self::lit(180.0) / Self::pi()
    }
}

impl Real for f32 {}
impl Real for f64 {}
