//! Camera-pair accuracy, pose from predicted pointmaps, pointmap accuracy.

use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector2, Vector3};

use crate::covis::DepthMap;
use crate::error::{domain, Error, Result};
use crate::geom::{relative_pose, rotation_angle, CameraIntrinsics, CameraPose, Sim3Transform};
use crate::georeg::{ransac_sim3, CorrespondenceSet3D, RansacSim3Result};
use crate::ransac::RansacConfig;
use crate::recon::ImageId;
use crate::scalar::Real;
use crate::sfm::{ransac_pnp, Match2D3D, PnpConfig, PnpResult};

pub const DEFAULT_ANGLE_THRESHOLDS_DEG: [f64; 3] = [5.0, 10.0, 15.0];
pub const DEFAULT_DELTA_THRESHOLDS_M: [f64; 3] = [0.5, 1.0, 2.0];
pub const MIN_FOCAL_PIXELS: usize = 10;

/// Geodesic angle between two rotations, degrees in `[0, 180]`.
pub fn rotation_error_deg<T: Real>(pred: &UnitQuaternion<T>, gt: &UnitQuaternion<T>) -> T {
    rotation_angle(&(pred * gt.inverse())).rad_to_deg()
}

/// Angle between translation directions, `None` when either vector is
/// negligible relative to the larger of the two.
pub fn translation_angle_error_deg<T: Real>(pred: &Vector3<T>, gt: &Vector3<T>) -> Option<T> {
    let (np, ng) = (pred.norm(), gt.norm());
    let scale = np.max(ng);
    if !(scale > T::zero()) || np.min(ng) < T::lit(1e-9) * scale {
        return None;
    }
    Some(pred.cross(gt).norm().atan2(pred.dot(gt)).rad_to_deg())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseErrorRecord {
    pub pair: (ImageId, ImageId),
    pub rra_deg: f64,
    pub rta_deg: Option<f64>,
}

impl PoseErrorRecord {
    pub fn new<T: Real>(pair: (ImageId, ImageId), pred: &CameraPose<T>, gt: &CameraPose<T>) -> Self {
        Self {
            pair,
            rra_deg: rotation_error_deg(pred.rotation(), gt.rotation()).as_f64(),
            rta_deg: translation_angle_error_deg(pred.translation(), gt.translation()).map(|v| v.as_f64()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyCurve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl AccuracyCurve {
    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.values[i])
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() || thresholds.iter().any(|t| !t.is_finite()) {
        return Err(domain("at least one finite threshold required"));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(domain("thresholds must be non-decreasing"));
    }
    Ok(())
}

/// Fraction of errors strictly below each threshold; `None` never counts.
pub fn accuracy_at(errors: &[Option<f64>], thresholds: &[f64]) -> Result<AccuracyCurve> {
    if errors.is_empty() {
        return Err(domain("accuracy needs at least one record"));
    }
    check_thresholds(thresholds)?;
    let n = errors.len() as f64;
    let values = thresholds
        .iter()
        .map(|&t| errors.iter().filter(|e| matches!(e, Some(v) if *v < t)).count() as f64 / n)
        .collect();
    Ok(AccuracyCurve {
        thresholds: thresholds.to_vec(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraAccuracy {
    pub rra: AccuracyCurve,
    pub rta: AccuracyCurve,
    pub pairs: usize,
    pub undefined_rta: usize,
}

pub fn camera_accuracy(records: &[PoseErrorRecord], thresholds: &[f64]) -> Result<CameraAccuracy> {
    let rra: Vec<Option<f64>> = records.iter().map(|r| Some(r.rra_deg)).collect();
    let rta: Vec<Option<f64>> = records.iter().map(|r| r.rta_deg).collect();
    Ok(CameraAccuracy {
        rra: accuracy_at(&rra, thresholds)?,
        rta: accuracy_at(&rta, thresholds)?,
        pairs: records.len(),
        undefined_rta: rta.iter().filter(|r| r.is_none()).count(),
    })
}

/// Errors for every pair of predicted cameras. A camera predicted without a
/// pose contributes the worst rotation error and an undefined translation.
pub fn evaluate_poses(
    pred: &BTreeMap<ImageId, Option<CameraPose<f64>>>,
    gt: &BTreeMap<ImageId, CameraPose<f64>>,
) -> Result<Vec<PoseErrorRecord>> {
    if let Some(id) = pred.keys().find(|id| !gt.contains_key(id)) {
        return Err(domain(format!("predicted camera {id} has no ground truth")));
    }
    let ids: Vec<ImageId> = pred.keys().copied().collect();
    let mut out = Vec::new();
    let mut missing = 0;
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let gt_rel = relative_pose(&gt[a], &gt[b]);
            match (&pred[a], &pred[b]) {
                (Some(pa), Some(pb)) => {
                    out.push(PoseErrorRecord::new((*a, *b), &relative_pose(pa, pb), &gt_rel))
                }
                _ => {
                    missing += 1;
                    out.push(PoseErrorRecord {
                        pair: (*a, *b),
                        rra_deg: 180.0,
                        rta_deg: None,
                    });
                }
            }
        }
    }
    if missing > 0 {
        log::warn!("{missing} camera pairs lack a predicted pose and count as failures");
    }
    Ok(out)
}

/// Per-pixel 3D points in a reference camera frame, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointmap {
    pub width: u32,
    pub height: u32,
    pub points: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
}

impl Pointmap {
    pub fn new(width: u32, height: u32, points: Vec<Vector3<f64>>, valid: Vec<bool>) -> Result<Self> {
        let n = width as usize * height as usize;
        if points.len() != n || valid.len() != n {
            return Err(domain(format!(
                "pointmap {width}x{height} needs {n} entries, got {} points and {} mask values",
                points.len(),
                valid.len()
            )));
        }
        if points.iter().zip(&valid).any(|(p, v)| *v && !p.iter().all(|c| c.is_finite())) {
            return Err(domain("valid pointmap entries must be finite"));
        }
        Ok(Self {
            width,
            height,
            points,
            valid,
        })
    }

    /// Back-projects a depth map and expresses the points in the reference
    /// frame, where `view_wrt_ref` maps reference coordinates into the view.
    pub fn from_depth(depth: &DepthMap, k: &CameraIntrinsics<f64>, view_wrt_ref: &CameraPose<f64>) -> Result<Self> {
        if depth.width != k.width || depth.height != k.height {
            return Err(domain("depth map and intrinsics disagree on image size"));
        }
        let n = depth.width as usize * depth.height as usize;
        let mut points = Vec::with_capacity(n);
        let mut valid = Vec::with_capacity(n);
        for row in 0..depth.height {
            for col in 0..depth.width {
                match depth.get(col, row) {
                    Some(d) => {
                        let px = CameraIntrinsics::<f64>::pixel_center(col, row);
                        let x = k.unproject_unchecked(&px, d as f64);
                        points.push(view_wrt_ref.inverse_transform_point(&x));
                        valid.push(true);
                    }
                    None => {
                        points.push(Vector3::zeros());
                        valid.push(false);
                    }
                }
            }
        }
        Self::new(depth.width, depth.height, points, valid)
    }

    pub fn get(&self, col: u32, row: u32) -> Option<Vector3<f64>> {
        let i = row as usize * self.width as usize + col as usize;
        self.valid[i].then(|| self.points[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn transformed(&self, t: &Sim3Transform<f64>) -> Self {
        Self {
            points: self
                .points
                .iter()
                .zip(&self.valid)
                .map(|(p, v)| if *v { t.apply(p) } else { *p })
                .collect(),
            ..self.clone()
        }
    }

    fn pixel(&self, i: usize) -> Vector2<f64> {
        let w = self.width as usize;
        CameraIntrinsics::<f64>::pixel_center((i % w) as u32, (i / w) as u32)
    }
}

/// Median of per-pixel focal estimates under a centred principal point.
pub fn focal_from_pointmap(pm: &Pointmap) -> Result<f64> {
    let cx = pm.width as f64 / 2.0;
    let cy = pm.height as f64 / 2.0;
    let mut est: Vec<f64> = (0..pm.points.len())
        .filter(|&i| pm.valid[i])
        .filter_map(|i| {
            let p = pm.points[i];
            let px = pm.pixel(i);
            let r_px = ((px.x - cx).powi(2) + (px.y - cy).powi(2)).sqrt();
            let r_xy = (p.x * p.x + p.y * p.y).sqrt();
            let f = r_px * p.z / r_xy;
            (r_px > 1e-9 && r_xy > 0.0 && p.z > 0.0 && f.is_finite()).then_some(f)
        })
        .collect();
    if est.len() < MIN_FOCAL_PIXELS {
        return Err(Error::EstimationFailed(format!(
            "focal estimation needs {MIN_FOCAL_PIXELS} valid off-centre pixels, got {}",
            est.len()
        )));
    }
    est.sort_by(f64::total_cmp);
    let m = est.len() / 2;
    Ok(if est.len() % 2 == 1 { est[m] } else { 0.5 * (est[m - 1] + est[m]) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointmapPnpConfig {
    pub pnp: PnpConfig,
    /// Matches are thinned to at most this many by a regular pixel stride.
    pub max_matches: usize,
}

impl Default for PointmapPnpConfig {
    fn default() -> Self {
        Self {
            pnp: PnpConfig::default(),
            max_matches: 4000,
        }
    }
}

/// Pose of view B relative to view A from B's pointmap expressed in A's frame.
pub fn pose_from_pointmaps(
    pm_b_in_a: &Pointmap,
    k_b: &CameraIntrinsics<f64>,
    cfg: &PointmapPnpConfig,
) -> Result<PnpResult<f64>> {
    if pm_b_in_a.width != k_b.width || pm_b_in_a.height != k_b.height {
        return Err(domain("pointmap and intrinsics disagree on image size"));
    }
    let valid: Vec<usize> = (0..pm_b_in_a.points.len()).filter(|&i| pm_b_in_a.valid[i]).collect();
    let stride = valid.len().div_ceil(cfg.max_matches.max(1)).max(1);
    let matches: Vec<Match2D3D<f64>> = valid
        .iter()
        .step_by(stride)
        .map(|&i| Match2D3D {
            pixel: pm_b_in_a.pixel(i),
            point: pm_b_in_a.points[i],
            track: i as u64,
        })
        .collect();
    ransac_pnp(&matches, k_b, &cfg.pnp)
}

fn joint_pairs(pred: &[&Pointmap], gt: &[&Pointmap]) -> Result<Vec<(Vector3<f64>, Vector3<f64>)>> {
    if pred.len() != gt.len() {
        return Err(domain("prediction and ground truth pointmap counts differ"));
    }
    let mut out = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        if p.width != g.width || p.height != g.height {
            return Err(domain("prediction and ground truth pointmaps differ in size"));
        }
        for i in 0..p.points.len() {
            if p.valid[i] && g.valid[i] {
                out.push((p.points[i], g.points[i]));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignConfig {
    /// Inlier threshold in ground-truth meters.
    pub ransac: RansacConfig,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::with_threshold(0.5),
        }
    }
}

/// Robust similarity taking predictions onto ground truth. The inlier mask
/// lists jointly valid pixels, map by map, in row-major order.
pub fn ransac_umeyama_align(
    pred: &[&Pointmap],
    gt: &[&Pointmap],
    cfg: &AlignConfig,
) -> Result<RansacSim3Result<f64>> {
    let pairs = joint_pairs(pred, gt)?;
    if pairs.len() < 3 {
        return Err(Error::EstimationFailed(format!(
            "alignment needs 3 jointly valid pixels, got {}",
            pairs.len()
        )));
    }
    ransac_sim3(&CorrespondenceSet3D::new(pairs), &cfg.ransac)
}

/// Fraction of jointly valid pixels whose aligned error is within each threshold.
pub fn pointmap_delta(
    pred: &[&Pointmap],
    gt: &[&Pointmap],
    transform: &Sim3Transform<f64>,
    thresholds: &[f64],
) -> Result<AccuracyCurve> {
    let errors: Vec<f64> = joint_pairs(pred, gt)?
        .iter()
        .map(|(p, g)| (transform.apply(p) - g).norm())
        .collect();
    delta_from_errors(&errors, thresholds)
}

/// Fraction of errors within each threshold (inclusive).
pub fn delta_from_errors(errors: &[f64], thresholds: &[f64]) -> Result<AccuracyCurve> {
    if errors.is_empty() {
        return Err(domain("no jointly valid pixels"));
    }
    check_thresholds(thresholds)?;
    let n = errors.len() as f64;
    Ok(AccuracyCurve {
        thresholds: thresholds.to_vec(),
        values: thresholds
            .iter()
            .map(|&t| errors.iter().filter(|&&e| e <= t).count() as f64 / n)
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    /// One similarity per prediction/ground-truth pair.
    PerPair,
    /// A single similarity shared by every pair of the scene.
    PerScene,
}

impl AlignMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlignMode::PerPair => "per-pair",
            AlignMode::PerScene => "per-scene",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per-pair" => Some(AlignMode::PerPair),
            "per-scene" => Some(AlignMode::PerScene),
            _ => None,
        }
    }
}

/// Aligned per-pixel errors for each pair, jointly valid pixels only.
pub fn aligned_errors(pred: &[Pointmap], gt: &[Pointmap], mode: AlignMode, cfg: &AlignConfig) -> Result<Vec<Vec<f64>>> {
    if pred.len() != gt.len() {
        return Err(domain("prediction and ground truth pointmap counts differ"));
    }
    let pr: Vec<&Pointmap> = pred.iter().collect();
    let gr: Vec<&Pointmap> = gt.iter().collect();
    let shared = match mode {
        AlignMode::PerScene => Some(ransac_umeyama_align(&pr, &gr, cfg)?.transform),
        AlignMode::PerPair => None,
    };
    (0..pr.len())
        .map(|i| {
            let t = match &shared {
                Some(t) => *t,
                None => ransac_umeyama_align(&pr[i..=i], &gr[i..=i], cfg)?.transform,
            };
            Ok(joint_pairs(&pr[i..=i], &gr[i..=i])?
                .iter()
                .map(|(p, g)| (t.apply(p) - g).norm())
                .collect())
        })
        .collect()
}

/// Aligns then scores; pixel errors are pooled across all pairs.
pub fn evaluate_pointmaps(
    pred: &[Pointmap],
    gt: &[Pointmap],
    mode: AlignMode,
    cfg: &AlignConfig,
    thresholds: &[f64],
) -> Result<AccuracyCurve> {
    let errors: Vec<f64> = aligned_errors(pred, gt, mode, cfg)?.concat();
    delta_from_errors(&errors, thresholds)
}
