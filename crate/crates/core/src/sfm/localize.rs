use std::collections::HashMap;

use rayon::prelude::*;

use super::pnp::{ransac_pnp, reprojection_error, Match2D3D, PnpConfig};
use super::refine::{refine_pose, RefineConfig};
use super::tracks::{keypoint_key, KeypointKey};
use super::MatchSet;
use crate::error::Error;
use crate::geom::{CameraIntrinsics, CameraPose};
use crate::recon::{ImageId, SceneReconstruction};
use crate::scalar::Real;

/// Map-image keypoint -> index of the scene point observed there.
#[derive(Debug, Clone, Default)]
pub struct TrackIndex {
    map: HashMap<KeypointKey, usize>,
}

impl TrackIndex {
    pub fn new<T: Real>(scene: &SceneReconstruction<T>) -> Self {
        let mut map = HashMap::new();
        for (i, p) in scene.points.iter().enumerate() {
            for o in &p.track {
                map.entry(keypoint_key(o.image, &o.pixel)).or_insert(i);
            }
        }
        Self { map }
    }

    pub fn lookup<T: Real>(&self, image: ImageId, pixel: &nalgebra::Vector2<T>) -> Option<usize> {
        self.map.get(&keypoint_key(image, pixel)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Lifts query-to-map 2D matches to 2D-3D matches through the map's tracks.
///
/// The output is sorted and de-duplicated, so it does not depend on the order
/// of `matches`.
pub fn lift_matches<T: Real>(
    scene: &SceneReconstruction<T>,
    index: &TrackIndex,
    query: ImageId,
    matches: &[MatchSet<T>],
) -> Vec<Match2D3D<T>> {
    let mut lifted: Vec<(KeypointKey, usize, [u64; 2])> = Vec::new();
    let mut pixels = HashMap::new();
    for set in matches {
        let oriented;
        let set = if set.image_a == query {
            set
        } else if set.image_b == query {
            oriented = set.swapped();
            &oriented
        } else {
            continue;
        };
        for c in &set.correspondences {
            if let Some(pi) = index.lookup(set.image_b, &c.pixel_b) {
                let key = keypoint_key(query, &c.pixel_a);
                let bits = [c.pixel_a.x.as_f64().to_bits(), c.pixel_a.y.as_f64().to_bits()];
                pixels.insert(bits, c.pixel_a);
                lifted.push((key, pi, bits));
            }
        }
    }
    lifted.sort();
    lifted.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
    lifted
        .into_iter()
        .map(|(_, pi, bits)| {
            let p = &scene.points[pi];
            Match2D3D {
                pixel: pixels[&bits],
                point: p.position,
                track: p.id,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationQuery<T: Real> {
    pub image: ImageId,
    pub intrinsics: CameraIntrinsics<T>,
    pub shortlist: Vec<ImageId>,
    /// Matches between the query and shortlisted map images, either orientation.
    pub matches: Vec<MatchSet<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LocalizationConfig {
    pub pnp: PnpConfig,
    pub refine: RefineConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalizationStatus {
    Localized,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationReport<T: Real> {
    pub status: LocalizationStatus,
    pub lifted_matches: usize,
    pub inliers: usize,
    pub rms_px: Option<T>,
    pub refine_diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedQuery<T: Real> {
    pub image: ImageId,
    pub pose: Option<CameraPose<T>>,
    pub report: LocalizationReport<T>,
}

fn query_seed(base: u64, image: ImageId) -> u64 {
    base ^ (image.0 as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn localize_one<T: Real>(
    scene: &SceneReconstruction<T>,
    index: &TrackIndex,
    q: &LocalizationQuery<T>,
    cfg: &LocalizationConfig,
) -> LocalizedQuery<T> {
    let failed = |reason: String, lifted: usize| LocalizedQuery {
        image: q.image,
        pose: None,
        report: LocalizationReport {
            status: LocalizationStatus::Failed(reason),
            lifted_matches: lifted,
            inliers: 0,
            rms_px: None,
            refine_diverged: false,
        },
    };
    if q.shortlist.is_empty() {
        return failed("empty shortlist".into(), 0);
    }
    let usable: Vec<MatchSet<T>> = q
        .matches
        .iter()
        .filter(|m| {
            let other = if m.image_a == q.image { m.image_b } else { m.image_a };
            q.shortlist.contains(&other)
        })
        .cloned()
        .collect();
    let lifted = lift_matches(scene, index, q.image, &usable);
    let mut pnp_cfg = cfg.pnp;
    pnp_cfg.ransac.seed = query_seed(cfg.pnp.ransac.seed, q.image);
    let res = match ransac_pnp(&lifted, &q.intrinsics, &pnp_cfg) {
        Ok(r) => r,
        Err(e) => {
            let reason = match e {
                Error::InsufficientData { got, .. } => {
                    format!("localization failed: only {got} lifted 2D-3D matches")
                }
                other => other.to_string(),
            };
            return failed(reason, lifted.len());
        }
    };
    let inliers: Vec<Match2D3D<T>> = lifted
        .iter()
        .zip(&res.inliers)
        .filter(|(_, &b)| b)
        .map(|(m, _)| *m)
        .collect();
    let (pose, diverged) = match refine_pose(&res.pose, &inliers, &q.intrinsics, &cfg.refine) {
        Ok(out) => (out.pose, out.diverged),
        Err(_) => (res.pose, true),
    };
    let sq: T = inliers.iter().fold(T::zero(), |acc, m| {
        let e = reprojection_error(&pose, m, &q.intrinsics);
        acc + e * e
    });
    let rms = (sq / T::from_usize_lossy(inliers.len())).sqrt();
    LocalizedQuery {
        image: q.image,
        pose: Some(pose),
        report: LocalizationReport {
            status: LocalizationStatus::Localized,
            lifted_matches: lifted.len(),
            inliers: inliers.len(),
            rms_px: Some(rms),
            refine_diverged: diverged,
        },
    }
}

/// Localizes every query against the fixed map; failures are reported per query.
pub fn localize_queries<T: Real + Send + Sync>(
    scene: &SceneReconstruction<T>,
    queries: &[LocalizationQuery<T>],
    cfg: &LocalizationConfig,
) -> Vec<LocalizedQuery<T>> {
    let index = TrackIndex::new(scene);
    queries
        .par_iter()
        .map(|q| localize_one(scene, &index, q, cfg))
        .collect()
}
