use nalgebra::{SMatrix, SVector};

use super::pnp::{apply_update, linearize, Match2D3D};
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, CameraPose};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    /// Cauchy loss scale in pixels.
    pub loss_scale_px: f64,
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub min_relative_decrease: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            loss_scale_px: 2.0,
            max_iterations: 100,
            min_relative_decrease: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome<T: Real> {
    pub pose: CameraPose<T>,
    pub initial_cost: T,
    pub final_cost: T,
    pub iterations: usize,
    /// Set when no damped step lowered the cost; `pose` is then the input.
    pub diverged: bool,
    /// Robust cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<T>,
}

/// Cauchy cost of one residual; points behind the camera pay a large constant.
fn cauchy<T: Real>(r2: Option<T>, s2: T) -> T {
    match r2 {
        Some(r2) => s2 * (T::one() + r2 / s2).ln(),
        None => s2 * T::lit(1e12).ln(),
    }
}

pub(crate) fn robust_cost<T: Real>(
    pose: &CameraPose<T>,
    matches: &[Match2D3D<T>],
    k: &CameraIntrinsics<T>,
    s2: T,
) -> T {
    matches.iter().fold(T::zero(), |acc, m| {
        let xc = pose.transform_point(&m.point);
        let r2 = (xc.z > T::zero()).then(|| (k.project_unchecked(&xc) - m.pixel).norm_squared());
        acc + cauchy(r2, s2)
    })
}

/// Levenberg-Marquardt on reprojection error under a Cauchy loss, with the
/// 3D points held fixed. Accepted steps never increase the robust cost.
pub fn refine_pose<T: Real>(
    pose: &CameraPose<T>,
    inliers: &[Match2D3D<T>],
    k: &CameraIntrinsics<T>,
    cfg: &RefineConfig,
) -> Result<RefineOutcome<T>> {
    if inliers.len() < 4 {
        return Err(Error::InsufficientData {
            what: "pose refinement",
            needed: 4,
            got: inliers.len(),
        });
    }
    let s2 = T::lit(cfg.loss_scale_px * cfg.loss_scale_px);
    let initial_cost = robust_cost(pose, inliers, k, s2);
    let mut current = *pose;
    let mut cost = initial_cost;
    let mut history = vec![cost];
    let mut lambda = T::lit(1e-3);
    let mut iterations = 0;
    let mut accepted_any = false;
    let mut exhausted = false;

    while iterations < cfg.max_iterations && cost > T::zero() {
        iterations += 1;
        let mut h = SMatrix::<T, 6, 6>::zeros();
        let mut g = SVector::<T, 6>::zeros();
        for m in inliers {
            if let Some((r, j)) = linearize(&current, m, k) {
                let w = T::one() / (T::one() + r.norm_squared() / s2);
                h += j.transpose() * j * w;
                g += j.transpose() * r * w;
            }
        }
        if !(g.norm() > T::default_epsilon() * T::lit(1e-2) * (T::one() + cost)) {
            break;
        }
        let mut stepped = false;
        while lambda < T::lit(1e12) {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lambda * (h[(i, i)] + T::lit(1e-12));
            }
            if let Some(delta) = damped.cholesky().map(|c| c.solve(&(-g))) {
                let candidate = apply_update(&current, &delta);
                let new_cost = robust_cost(&candidate, inliers, k, s2);
                if new_cost < cost {
                    let decrease = (cost - new_cost) / cost;
                    current = candidate;
                    cost = new_cost;
                    history.push(cost);
                    lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
                    stepped = true;
                    accepted_any = true;
                    if decrease < T::lit(cfg.min_relative_decrease) {
                        exhausted = true;
                    }
                    break;
                }
            }
            lambda *= T::lit(10.0);
        }
        if !stepped || exhausted {
            if !stepped && !accepted_any {
                exhausted = true;
            }
            break;
        }
    }
    let diverged = !accepted_any && exhausted && cost > T::zero();
    if diverged {
        log::warn!("pose refinement made no progress; keeping the input pose");
    }
    Ok(RefineOutcome {
        pose: if diverged { *pose } else { current },
        initial_cost,
        final_cost: if diverged { initial_cost } else { cost },
        iterations,
        diverged,
        cost_history: history,
    })
}
