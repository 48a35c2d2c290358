//! WGS84 geodetic <-> ECEF conversion and local east-north-up frames.
//!
//! Altitudes are ellipsoidal heights.

use nalgebra::{Matrix3, Vector3};

use super::pose::rotation_from_matrix;
use super::sim3::Sim3Transform;
use crate::error::{domain, Result};
use crate::scalar::Real;

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;

const BOWRING_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodeticCoord<T: Real> {
    pub latitude_deg: T,
    pub longitude_deg: T,
    pub altitude_m: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcefCoord<T: Real> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> GeodeticCoord<T> {
    pub fn new(latitude_deg: T, longitude_deg: T, altitude_m: T) -> Result<Self> {
        let g = Self {
            latitude_deg,
            longitude_deg,
            altitude_m,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let lat = self.latitude_deg;
        let lon = self.longitude_deg;
        if !(lat >= T::lit(-90.0) && lat <= T::lit(90.0)) {
            return Err(domain(format!("latitude {} outside [-90, 90]", lat.as_f64())));
        }
        if !(lon >= T::lit(-180.0) && lon < T::lit(180.0)) {
            return Err(domain(format!("longitude {} outside [-180, 180)", lon.as_f64())));
        }
        if !self.altitude_m.is_finite() {
            return Err(domain("altitude must be finite"));
        }
        Ok(())
    }
}

impl<T: Real> EcefCoord<T> {
    pub fn to_vector(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<T>) -> Self {
        Self {
            x: v.x,
            y: v.y,
            z: v.z,
        }
    }
}

struct Ellipsoid<T> {
    a: T,
    b: T,
    e2: T,
    ep2: T,
}

fn wgs84<T: Real>() -> Ellipsoid<T> {
    let a = T::lit(WGS84_A);
    let f = T::lit(WGS84_F);
    let b = a * (T::one() - f);
    let e2 = f * (T::lit(2.0) - f);
    let ep2 = e2 / ((T::one() - f) * (T::one() - f));
    Ellipsoid { a, b, e2, ep2 }
}

pub fn geodetic_to_ecef<T: Real>(g: &GeodeticCoord<T>) -> Result<EcefCoord<T>> {
    g.validate()?;
    let el = wgs84::<T>();
    let lat = g.latitude_deg.deg_to_rad();
    let lon = g.longitude_deg.deg_to_rad();
    let (sin_lat, cos_lat) = lat.sin_cos();
    let (sin_lon, cos_lon) = lon.sin_cos();
    // exact trig values at the poles and axes keep the closed form on the axes
    let (sin_lat, cos_lat) = snap_axis(g.latitude_deg, sin_lat, cos_lat);
    let (sin_lon, cos_lon) = snap_axis(g.longitude_deg, sin_lon, cos_lon);
    let n = el.a / (T::one() - el.e2 * sin_lat * sin_lat).sqrt();
    let h = g.altitude_m;
    Ok(EcefCoord {
        x: (n + h) * cos_lat * cos_lon,
        y: (n + h) * cos_lat * sin_lon,
        z: (n * (T::one() - el.e2) + h) * sin_lat,
    })
}

fn snap_axis<T: Real>(deg: T, s: T, c: T) -> (T, T) {
    let (o, l) = (T::zero(), T::one());
    if deg == o {
        (o, l)
    } else if deg == T::lit(90.0) {
        (l, o)
    } else if deg == T::lit(-90.0) {
        (-l, o)
    } else if deg == T::lit(-180.0) {
        (o, -l)
    } else {
        (s, c)
    }
}

/// Inverse of [`geodetic_to_ecef`] by Bowring's iteration on the parametric
/// latitude, fixed iteration count. Longitude is reported as 0 on the polar axis.
pub fn ecef_to_geodetic<T: Real>(e: &EcefCoord<T>) -> Result<GeodeticCoord<T>> {
    let v = e.to_vector();
    if !(v.norm() >= T::one()) {
        return Err(domain("ECEF point too close to the Earth's centre"));
    }
    let el = wgs84::<T>();
    let p = (e.x * e.x + e.y * e.y).sqrt();
    let one_minus_f = el.b / el.a;
    let mut beta = e.z.atan2(one_minus_f * p);
    let mut lat = beta;
    for _ in 0..BOWRING_ITERATIONS {
        let (sb, cb) = beta.sin_cos();
        lat = (e.z + el.ep2 * el.b * sb * sb * sb).atan2(p - el.e2 * el.a * cb * cb * cb);
        let (sl, cl) = lat.sin_cos();
        beta = (one_minus_f * sl).atan2(cl);
    }
    let half_pi = T::frac_pi_2();
    lat = lat.max(-half_pi).min(half_pi);
    let (sl, cl) = lat.sin_cos();
    let h = p * cl + e.z * sl - el.a * (T::one() - el.e2 * sl * sl).sqrt();
    let mut lon = if p == T::zero() { T::zero() } else { e.y.atan2(e.x) }.rad_to_deg();
    if lon >= T::lit(180.0) {
        lon = T::lit(-180.0);
    }
    Ok(GeodeticCoord {
        latitude_deg: lat.rad_to_deg().max(T::lit(-90.0)).min(T::lit(90.0)),
        longitude_deg: lon,
        altitude_m: h,
    })
}

/// Rigid transform from ECEF into the east-north-up frame anchored at `origin`.
pub fn ecef_to_enu_transform<T: Real>(origin: &GeodeticCoord<T>) -> Result<Sim3Transform<T>> {
    let o = geodetic_to_ecef(origin)?.to_vector();
    let lat = origin.latitude_deg.deg_to_rad();
    let lon = origin.longitude_deg.deg_to_rad();
    let (sp, cp) = lat.sin_cos();
    let (sl, cl) = lon.sin_cos();
    let r = Matrix3::new(
        -sl,
        cl,
        T::zero(),
        -sp * cl,
        -sp * sl,
        cp,
        cp * cl,
        cp * sl,
        sp,
    );
    let q = rotation_from_matrix(&r);
    Ok(Sim3Transform::from_rigid(q, -(q * o)))
}
