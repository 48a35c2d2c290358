//! Look-at target sampling and altitude-varied virtual viewpoint generation.

use std::num::NonZeroUsize;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::geom::{rotation_from_matrix, CameraIntrinsics, CameraPose};
use crate::scalar::Real;

/// Neighbour count for statistical outlier removal.
pub const OUTLIER_NEIGHBORS: usize = 8;
/// Points whose mean neighbour distance exceeds mean + this many std devs are dropped.
pub const OUTLIER_STD_RATIO: f64 = 2.0;
/// Radius used for a target's support count.
pub const SUPPORT_RADIUS_M: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookAtTarget {
    pub position: Vector3<f64>,
    pub support_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointSpec {
    pub target_index: usize,
    pub eye: Vector3<f64>,
    pub target: Vector3<f64>,
    /// World up direction used to orient the image (rows grow along -up).
    pub up_hint: Vector3<f64>,
    pub altitude_above_ground_m: f64,
    pub hfov_deg: f64,
    pub time_tag: String,
}

impl ViewpointSpec {
    pub fn pose(&self) -> Result<CameraPose<f64>> {
        look_at(&self.eye, &self.target, &(-self.up_hint))
    }

    pub fn intrinsics(&self, width: u32, height: u32) -> Result<CameraIntrinsics<f64>> {
        CameraIntrinsics::from_hfov(self.hfov_deg, width, height)
    }
}

/// World-to-camera pose looking from `eye` at `target`.
///
/// Camera +z points at the target; `y_hint` fixes the roll: camera +y (the
/// direction of increasing image rows) is the component of `y_hint`
/// orthogonal to the viewing direction. Pass world-down for upright images.
pub fn look_at<T: Real>(
    eye: &Vector3<T>,
    target: &Vector3<T>,
    y_hint: &Vector3<T>,
) -> Result<CameraPose<T>> {
    let d = target - eye;
    let dist = d.norm();
    if !(dist > T::zero()) {
        return Err(Error::DegenerateFrame("eye coincides with target".into()));
    }
    let z = d / dist;
    let x = y_hint.cross(&z);
    let xn = x.norm();
    if !(xn > T::lit(1e-9) * y_hint.norm()) {
        return Err(Error::DegenerateFrame(
            "orientation hint is parallel to the viewing direction".into(),
        ));
    }
    let x = x / xn;
    let y = z.cross(&x);
    let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let q = rotation_from_matrix(&r);
    Ok(CameraPose::from_center(q, eye))
}

fn to_array(p: &Vector3<f64>) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Drops points whose mean distance to their nearest neighbours is more than
/// `OUTLIER_STD_RATIO` standard deviations above the cloud average.
pub fn remove_statistical_outliers(cloud: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = cloud.len();
    let k = OUTLIER_NEIGHBORS.min(n.saturating_sub(1));
    if k == 0 {
        return cloud.to_vec();
    }
    let entries: Vec<[f64; 3]> = cloud.iter().map(to_array).collect();
    let tree = ImmutableKdTree::<f64, 3>::new_from_slice(&entries)
        .expect("kd-tree construction");
    let want = NonZeroUsize::new(k + 1).unwrap();
    let mean_dist: Vec<f64> = entries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let found = tree
                .query(q)
                .nearest_n::<SquaredEuclidean<f64>>(want)
                .execute();
            let mut sum = 0.0;
            let mut used = 0;
            for r in found {
                if r.item as usize == i || used == k {
                    continue;
                }
                sum += r.distance.sqrt();
                used += 1;
            }
            sum / used.max(1) as f64
        })
        .collect();
    let mu = mean_dist.iter().sum::<f64>() / n as f64;
    let var = mean_dist.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n as f64;
    let limit = mu + OUTLIER_STD_RATIO * var.sqrt();
    cloud
        .iter()
        .zip(&mean_dist)
        .filter(|(_, &d)| d <= limit)
        .map(|(p, _)| *p)
        .collect()
}

/// Farthest-point sampling seeded at the point nearest the centroid.
/// Exact distance ties are broken with `seed`. Returns indices into `cloud`.
pub fn farthest_point_sampling(cloud: &[Vector3<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > cloud.len() {
        return Err(Error::InsufficientData {
            what: "farthest-point sampling",
            needed: k,
            got: cloud.len(),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroid = cloud.iter().fold(Vector3::zeros(), |a, p| a + p) / cloud.len() as f64;
    let dist_to_centroid: Vec<f64> = cloud.iter().map(|p| (p - centroid).norm_squared()).collect();
    let first = pick_extreme(&dist_to_centroid, false, &mut rng);
    let mut chosen = vec![first];
    let mut min_d: Vec<f64> = cloud.iter().map(|p| (p - cloud[first]).norm_squared()).collect();
    while chosen.len() < k {
        let next = pick_extreme(&min_d, true, &mut rng);
        chosen.push(next);
        let c = cloud[next];
        for (d, p) in min_d.iter_mut().zip(cloud) {
            let nd = (p - c).norm_squared();
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(chosen)
}

fn pick_extreme(values: &[f64], largest: bool, rng: &mut ChaCha8Rng) -> usize {
    let better = |a: f64, b: f64| if largest { a > b } else { a < b };
    let mut best = values[0];
    for &v in &values[1..] {
        if better(v, best) {
            best = v;
        }
    }
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// Samples `k` look-at targets: statistical outlier removal, then FPS.
pub fn sample_lookat_targets(
    cloud: &[Vector3<f64>],
    k: usize,
    seed: u64,
) -> Result<Vec<LookAtTarget>> {
    if k > cloud.len() {
        return Err(Error::InsufficientData {
            what: "look-at target sampling",
            needed: k,
            got: cloud.len(),
        });
    }
    let filtered = remove_statistical_outliers(cloud);
    let picks = farthest_point_sampling(&filtered, k, seed)?;
    if picks.is_empty() {
        return Ok(Vec::new());
    }
    let entries: Vec<[f64; 3]> = filtered.iter().map(to_array).collect();
    let tree = ImmutableKdTree::<f64, 3>::new_from_slice(&entries)
        .expect("kd-tree construction");
    let r2 = SUPPORT_RADIUS_M * SUPPORT_RADIUS_M;
    Ok(picks
        .into_iter()
        .map(|i| {
            let support = tree
                .query(&entries[i])
                .within::<SquaredEuclidean<f64>>(r2)
                .execute()
                .len();
            LookAtTarget {
                position: filtered[i],
                support_count: support.max(1),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewGenConfig {
    pub per_target: usize,
    pub altitude_range_m: (f64, f64),
    pub hfov_range_deg: (f64, f64),
    /// Horizontal standoff = factor * altitude + floor.
    pub standoff_factor: f64,
    pub standoff_floor_m: f64,
    /// Forces every azimuth to this value when set.
    pub fixed_azimuth_deg: Option<f64>,
    pub world_up: Vector3<f64>,
    pub time_tags: Vec<String>,
}

impl Default for ViewGenConfig {
    fn default() -> Self {
        Self {
            per_target: 3,
            altitude_range_m: (1.0, 350.0),
            hfov_range_deg: (45.0, 90.0),
            standoff_factor: 1.0,
            standoff_floor_m: 10.0,
            fixed_azimuth_deg: None,
            world_up: Vector3::z(),
            time_tags: ["morning", "noon", "afternoon", "dusk"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl ViewGenConfig {
    fn validate(&self) -> Result<()> {
        let (alo, ahi) = self.altitude_range_m;
        if !(1.0 <= alo && alo <= ahi && ahi <= 350.0) {
            return Err(domain(format!(
                "altitude range [{alo}, {ahi}] must lie within [1, 350] m"
            )));
        }
        let (flo, fhi) = self.hfov_range_deg;
        if !(45.0 <= flo && flo <= fhi && fhi <= 90.0) {
            return Err(domain(format!(
                "hfov range [{flo}, {fhi}] must lie within [45, 90] degrees"
            )));
        }
        if !(self.standoff_factor >= 0.0) || !(self.standoff_floor_m > 0.0) {
            return Err(domain("standoff must be positive"));
        }
        if !(self.world_up.norm() > 0.0) {
            return Err(domain("world up must be non-zero"));
        }
        Ok(())
    }
}

/// Per-target viewpoints: log-uniform altitude, uniform azimuth and hfov.
/// Each target draws from its own RNG stream of `seed`.
pub fn generate_viewpoints(
    targets: &[LookAtTarget],
    cfg: &ViewGenConfig,
    ground_z: f64,
    seed: u64,
) -> Result<Vec<ViewpointSpec>> {
    if targets.is_empty() {
        return Err(domain("no look-at targets"));
    }
    cfg.validate()?;
    let up = cfg.world_up.normalize();
    // horizontal basis orthogonal to up
    let east = if up.cross(&Vector3::x()).norm() > 1e-6 {
        Vector3::x() - up * up.x
    } else {
        Vector3::y() - up * up.y
    }
    .normalize();
    let north = up.cross(&east);
    let (alo, ahi) = cfg.altitude_range_m;
    let (ln_lo, ln_hi) = (alo.ln(), ahi.ln());
    let mut out = Vec::with_capacity(targets.len() * cfg.per_target);
    for (ti, target) in targets.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ti as u64);
        for _ in 0..cfg.per_target {
            let altitude = if ln_hi > ln_lo {
                rng.random_range(ln_lo..=ln_hi).exp().clamp(alo, ahi)
            } else {
                alo
            };
            let azimuth = match cfg.fixed_azimuth_deg {
                Some(a) => a,
                None => rng.random_range(0.0..360.0),
            }
            .to_radians();
            let hfov = if cfg.hfov_range_deg.1 > cfg.hfov_range_deg.0 {
                rng.random_range(cfg.hfov_range_deg.0..=cfg.hfov_range_deg.1)
            } else {
                cfg.hfov_range_deg.0
            };
            let time_tag = if cfg.time_tags.is_empty() {
                String::new()
            } else {
                cfg.time_tags[rng.random_range(0..cfg.time_tags.len())].clone()
            };
            let standoff = cfg.standoff_factor * altitude + cfg.standoff_floor_m;
            let along_up = target.position.dot(&up);
            let horizontal = target.position - up * along_up;
            let eye = horizontal
                + (east * azimuth.cos() + north * azimuth.sin()) * standoff
                + up * (ground_z + altitude);
            out.push(ViewpointSpec {
                target_index: ti,
                eye,
                target: target.position,
                up_hint: up,
                altitude_above_ground_m: altitude,
                hfov_deg: hfov,
                time_tag,
            });
        }
    }
    Ok(out)
}
