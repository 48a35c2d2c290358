//! Geo-registration of a local reconstruction into ECEF from noisy GPS tags.

use nalgebra::{Matrix3, Vector3};

use crate::error::{domain, Error, Result};
use crate::geom::{geodetic_to_ecef, rotation_from_matrix, Sim3Transform};
use crate::ransac::{required_iterations, sample_indices, RansacConfig};
use crate::recon::{FrameLabel, SceneReconstruction};
use crate::scalar::Real;

/// Paired 3D points `source -> target` with optional non-negative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet3D<T: Real> {
    pub source: Vec<Vector3<T>>,
    pub target: Vec<Vector3<T>>,
    pub weights: Option<Vec<T>>,
}

impl<T: Real> CorrespondenceSet3D<T> {
    pub fn new(pairs: impl IntoIterator<Item = (Vector3<T>, Vector3<T>)>) -> Self {
        let (source, target) = pairs.into_iter().unzip();
        Self {
            source,
            target,
            weights: None,
        }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn residual(&self, t: &Sim3Transform<T>, i: usize) -> T {
        (t.apply(&self.source[i]) - self.target[i]).norm()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            source: idx.iter().map(|&i| self.source[i]).collect(),
            target: idx.iter().map(|&i| self.target[i]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| idx.iter().map(|&i| w[i]).collect()),
        }
    }
}

/// Closed-form weighted least-squares similarity (Umeyama).
pub fn umeyama_sim3<T: Real>(c: &CorrespondenceSet3D<T>) -> Result<Sim3Transform<T>> {
    umeyama(c, true)
}

/// Same as [`umeyama_sim3`] with the scale pinned to one.
pub fn umeyama_rigid<T: Real>(c: &CorrespondenceSet3D<T>) -> Result<Sim3Transform<T>> {
    umeyama(c, false)
}

fn umeyama<T: Real>(c: &CorrespondenceSet3D<T>, with_scale: bool) -> Result<Sim3Transform<T>> {
    let n = c.len();
    if c.target.len() != n {
        return Err(domain("source and target lengths differ"));
    }
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "similarity estimation",
            needed: 3,
            got: n,
        });
    }
    let weights: Vec<T> = match &c.weights {
        Some(w) => {
            if w.len() != n {
                return Err(domain("weight count does not match pair count"));
            }
            if w.iter().any(|&x| !(x >= T::zero())) {
                return Err(domain("correspondence weights must be non-negative"));
            }
            w.clone()
        }
        None => vec![T::one(); n],
    };
    let total: T = weights.iter().fold(T::zero(), |a, &b| a + b);
    if !(total > T::zero()) {
        return Err(domain("correspondence weights sum to zero"));
    }

    let mut mu_x = Vector3::zeros();
    let mut mu_y = Vector3::zeros();
    for i in 0..n {
        mu_x += c.source[i] * weights[i];
        mu_y += c.target[i] * weights[i];
    }
    mu_x /= total;
    mu_y /= total;

    let mut cov = Matrix3::zeros();
    let mut scatter_x = Matrix3::zeros();
    let mut var_x = T::zero();
    for i in 0..n {
        let dx = c.source[i] - mu_x;
        let dy = c.target[i] - mu_y;
        cov += dy * dx.transpose() * weights[i];
        scatter_x += dx * dx.transpose() * weights[i];
        var_x += dx.norm_squared() * weights[i];
    }
    cov /= total;
    scatter_x /= total;
    var_x /= total;

    let mut eig = scatter_x.symmetric_eigen().eigenvalues;
    eig.as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let tol = T::default_epsilon() * T::lit(1e3);
    if !(eig[0] > T::zero()) || eig[1] <= tol * eig[0] {
        return Err(Error::RankDeficient(
            "source points are collinear or coincident".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::EstimationFailed("SVD failed".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::EstimationFailed("SVD failed".into()))?;
    let mut s = Matrix3::identity();
    if u.determinant() * v_t.determinant() < T::zero() {
        s[(2, 2)] = -T::one();
    }
    let r = u * s * v_t;
    let scale = if with_scale {
        let d = svd.singular_values;
        (d[0] * s[(0, 0)] + d[1] * s[(1, 1)] + d[2] * s[(2, 2)]) / var_x
    } else {
        T::one()
    };
    if !(scale > T::zero()) {
        return Err(Error::RankDeficient("non-positive similarity scale".into()));
    }
    let q = rotation_from_matrix(&r);
    let t = mu_y - q * mu_x * scale;
    Sim3Transform::new(scale, q, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacSim3Result<T: Real> {
    pub transform: Sim3Transform<T>,
    pub inliers: Vec<bool>,
    pub iterations: usize,
}

impl<T: Real> RansacSim3Result<T> {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Robust similarity from 3-point minimal samples, refit on the consensus set.
pub fn ransac_sim3<T: Real>(
    c: &CorrespondenceSet3D<T>,
    cfg: &RansacConfig,
) -> Result<RansacSim3Result<T>> {
    let n = c.len();
    if n < 3 {
        return Err(Error::InsufficientData {
            what: "robust similarity estimation",
            needed: 3,
            got: n,
        });
    }
    let threshold = cfg.threshold;
    let is_inlier = |t: &Sim3Transform<T>, i: usize| c.residual(t, i).as_f64() <= threshold;
    let score = |t: &Sim3Transform<T>| -> (usize, f64) {
        let mut count = 0;
        let mut cost = 0.0;
        for i in 0..n {
            let r = c.residual(t, i).as_f64();
            if r <= threshold {
                count += 1;
                cost += r * r;
            }
        }
        (count, cost)
    };

    let mut rng = cfg.rng();
    let mut best: Option<(Sim3Transform<T>, usize, f64)> = None;
    let mut needed = cfg.max_iterations;
    let mut iterations = 0;
    while iterations < needed.max(cfg.min_iterations).min(cfg.max_iterations) {
        iterations += 1;
        let sample = sample_indices(&mut rng, n, 3);
        let Ok(hyp) = umeyama_sim3(&c.subset(&sample)) else {
            continue;
        };
        let (count, cost) = score(&hyp);
        let better = match &best {
            None => true,
            Some((_, bc, bcost)) => count > *bc || (count == *bc && cost < *bcost),
        };
        if better {
            best = Some((hyp, count, cost));
            needed = required_iterations(count as f64 / n as f64, 3, cfg.confidence);
        }
    }

    let Some((mut model, mut count, _)) = best else {
        return Err(Error::EstimationFailed(
            "every minimal sample was degenerate".into(),
        ));
    };
    if count < 3 {
        return Err(Error::EstimationFailed(format!(
            "best similarity hypothesis has only {count} inliers"
        )));
    }

    let mut inliers: Vec<bool> = (0..n).map(|i| is_inlier(&model, i)).collect();
    for _ in 0..10 {
        let idx: Vec<usize> = (0..n).filter(|&i| inliers[i]).collect();
        let Ok(refit) = umeyama_sim3(&c.subset(&idx)) else {
            break;
        };
        let next: Vec<bool> = (0..n).map(|i| is_inlier(&refit, i)).collect();
        let next_count = next.iter().filter(|&&b| b).count();
        if next_count < count {
            break;
        }
        let stable = next == inliers;
        model = refit;
        inliers = next;
        count = next_count;
        if stable {
            break;
        }
    }
    if count < 3 {
        return Err(Error::EstimationFailed(format!(
            "refined similarity has only {count} inliers"
        )));
    }
    Ok(RansacSim3Result {
        transform: model,
        inliers,
        iterations,
    })
}

/// Maps a local reconstruction through `t`; points as `s R p + t`, cameras so
/// that centres map as points and projections are unchanged.
pub fn apply_sim3<T: Real>(
    recon: &SceneReconstruction<T>,
    t: &Sim3Transform<T>,
) -> Result<SceneReconstruction<T>> {
    if recon.frame != FrameLabel::Local {
        return Err(Error::FrameMismatch {
            expected: FrameLabel::Local.to_string(),
            found: recon.frame.to_string(),
        });
    }
    let mut out = recon.clone();
    for im in &mut out.images {
        im.pose = t.transform_pose(&im.pose);
    }
    for p in &mut out.points {
        p.position = t.apply(&p.position);
    }
    out.frame = FrameLabel::Ecef;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoregConfig {
    pub ransac: RansacConfig,
    /// GPS tags whose altitude deviates from the median by more than this are dropped.
    pub altitude_outlier_m: f64,
    /// Plain least squares on all pairs when false.
    pub robust: bool,
}

impl Default for GeoregConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig {
                threshold: 15.0,
                ..RansacConfig::default()
            },
            altitude_outlier_m: 200.0,
            robust: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoregReport<T: Real> {
    pub tagged_images: usize,
    pub used_pairs: usize,
    pub inliers: usize,
    pub rms_m: f64,
    pub transform: Sim3Transform<T>,
}

/// GPS-tagged camera centres -> ECEF target points, with the altitude pre-filter applied.
pub fn gps_correspondences<T: Real>(
    recon: &SceneReconstruction<T>,
    altitude_outlier_m: f64,
) -> Result<(CorrespondenceSet3D<T>, usize)> {
    let tagged: Vec<_> = recon
        .images
        .iter()
        .filter_map(|im| im.gps.map(|g| (im, g)))
        .collect();
    if tagged.len() < 4 {
        return Err(Error::InsufficientData {
            what: "geo-registration (GPS-tagged images)",
            needed: 4,
            got: tagged.len(),
        });
    }
    let mut alts: Vec<f64> = tagged.iter().map(|(_, g)| g.altitude_m.as_f64()).collect();
    alts.sort_by(|a, b| a.total_cmp(b));
    let m = alts.len();
    let median = if m % 2 == 1 {
        alts[m / 2]
    } else {
        0.5 * (alts[m / 2 - 1] + alts[m / 2])
    };
    let mut pairs = Vec::with_capacity(m);
    for (im, g) in &tagged {
        if (g.altitude_m.as_f64() - median).abs() > altitude_outlier_m {
            continue;
        }
        pairs.push((im.pose.center(), geodetic_to_ecef(g)?.to_vector()));
    }
    if pairs.len() < 4 {
        return Err(Error::InsufficientData {
            what: "geo-registration after altitude filtering",
            needed: 4,
            got: pairs.len(),
        });
    }
    Ok((CorrespondenceSet3D::new(pairs), tagged.len()))
}

/// Geo-references a local reconstruction into ECEF.
pub fn georegister<T: Real>(
    recon: &SceneReconstruction<T>,
    cfg: &GeoregConfig,
) -> Result<(SceneReconstruction<T>, GeoregReport<T>)> {
    if recon.frame != FrameLabel::Local {
        return Err(Error::FrameMismatch {
            expected: FrameLabel::Local.to_string(),
            found: recon.frame.to_string(),
        });
    }
    let (pairs, tagged) = gps_correspondences(recon, cfg.altitude_outlier_m)?;
    let (transform, inliers) = if cfg.robust {
        let r = ransac_sim3(&pairs, &cfg.ransac)?;
        (r.transform, r.inliers)
    } else {
        (umeyama_sim3(&pairs)?, vec![true; pairs.len()])
    };
    let mut sq = 0.0;
    let mut count = 0;
    for (i, &inl) in inliers.iter().enumerate() {
        if inl {
            let r = pairs.residual(&transform, i).as_f64();
            sq += r * r;
            count += 1;
        }
    }
    let out = apply_sim3(recon, &transform)?;
    let report = GeoregReport {
        tagged_images: tagged,
        used_pairs: pairs.len(),
        inliers: count,
        rms_m: if count > 0 { (sq / count as f64).sqrt() } else { f64::NAN },
        transform,
    };
    Ok((out, report))
}
