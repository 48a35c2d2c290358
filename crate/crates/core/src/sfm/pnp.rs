use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, SMatrix, SVector, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::georeg::{umeyama_rigid, CorrespondenceSet3D};
use crate::geom::{CameraIntrinsics, CameraPose};
use crate::ransac::{required_iterations, sample_indices, RansacConfig};
use crate::scalar::Real;

/// A query pixel paired with a triangulated map point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match2D3D<T: Real> {
    pub pixel: Vector2<T>,
    pub point: Vector3<T>,
    pub track: u64,
}

/// Reprojection error in pixels, infinite behind the camera.
pub fn reprojection_error<T: Real>(
    pose: &CameraPose<T>,
    m: &Match2D3D<T>,
    k: &CameraIntrinsics<T>,
) -> T {
    let xc = pose.transform_point(&m.point);
    if !(xc.z > T::zero()) {
        return T::max_value().unwrap_or_else(T::one);
    }
    (k.project_unchecked(&xc) - m.pixel).norm()
}

/// Residual and Jacobian w.r.t. a left perturbation `[omega, dt]` of the pose,
/// where `x_c -> exp(omega) x_c + dt`.
pub(crate) fn linearize<T: Real>(
    pose: &CameraPose<T>,
    m: &Match2D3D<T>,
    k: &CameraIntrinsics<T>,
) -> Option<(Vector2<T>, SMatrix<T, 2, 6>)> {
    let xc = pose.transform_point(&m.point);
    if !(xc.z > T::zero()) {
        return None;
    }
    let iz = T::one() / xc.z;
    let r = k.project_unchecked(&xc) - m.pixel;
    let dproj = Matrix2x3::new(
        k.fx * iz,
        T::zero(),
        -k.fx * xc.x * iz * iz,
        T::zero(),
        k.fy * iz,
        -k.fy * xc.y * iz * iz,
    );
    let mut j = SMatrix::<T, 2, 6>::zeros();
    j.fixed_view_mut::<2, 3>(0, 0)
        .copy_from(&(dproj * -xc.cross_matrix()));
    j.fixed_view_mut::<2, 3>(0, 3).copy_from(&dproj);
    Some((r, j))
}

pub(crate) fn apply_update<T: Real>(pose: &CameraPose<T>, delta: &SVector<T, 6>) -> CameraPose<T> {
    let dq = UnitQuaternion::from_scaled_axis(Vector3::new(delta[0], delta[1], delta[2]));
    let dt = Vector3::new(delta[3], delta[4], delta[5]);
    CameraPose::new(dq * pose.rotation(), dq * pose.translation() + dt)
}

fn squared_cost<T: Real>(pose: &CameraPose<T>, matches: &[Match2D3D<T>], k: &CameraIntrinsics<T>) -> T {
    matches.iter().fold(T::zero(), |acc, m| {
        let e = reprojection_error(pose, m, k);
        acc + e * e
    })
}

/// Plain least-squares Gauss-Newton on reprojection error.
pub(crate) fn gauss_newton_pose<T: Real>(
    init: &CameraPose<T>,
    matches: &[Match2D3D<T>],
    k: &CameraIntrinsics<T>,
    max_iterations: usize,
) -> CameraPose<T> {
    let mut pose = *init;
    let mut cost = squared_cost(&pose, matches, k);
    for _ in 0..max_iterations {
        let mut h = SMatrix::<T, 6, 6>::zeros();
        let mut g = SVector::<T, 6>::zeros();
        for m in matches {
            if let Some((r, j)) = linearize(&pose, m, k) {
                h += j.transpose() * j;
                g += j.transpose() * r;
            }
        }
        let Some(delta) = h.cholesky().map(|c| c.solve(&(-g))) else {
            break;
        };
        let candidate = apply_update(&pose, &delta);
        let new_cost = squared_cost(&candidate, matches, k);
        // near the optimum the cost only resolves to rounding, so steps are
        // judged by size there
        if !(new_cost <= cost * (T::one() + T::lit(1e-9))) {
            break;
        }
        pose = candidate;
        cost = new_cost;
        if delta.norm() < T::lit(1e-13) {
            break;
        }
    }
    pose
}

fn insufficient(got: usize) -> Error {
    Error::InsufficientData {
        what: "PnP",
        needed: 4,
        got,
    }
}

/// Grunert's three-point solution. `bearings` are unit rays in the camera
/// frame. Returns every real pose candidate (up to four).
pub fn p3p<T: Real>(world: &[Vector3<T>; 3], bearings: &[Vector3<T>; 3]) -> Vec<CameraPose<T>> {
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let a2 = (world[1] - world[2]).norm_squared();
    let b2 = (world[0] - world[2]).norm_squared();
    let c2 = (world[0] - world[1]).norm_squared();
    if !(a2 > T::zero() && b2 > T::zero() && c2 > T::zero()) {
        return Vec::new();
    }
    let j: Vec<Vector3<T>> = bearings.iter().map(|b| b.normalize()).collect();
    let ca = j[1].dot(&j[2]);
    let cb = j[0].dot(&j[2]);
    let cg = j[0].dot(&j[1]);

    let amc = (a2 - c2) / b2;
    let apc = (a2 + c2) / b2;
    let bmc = (b2 - c2) / b2;
    let bma = (b2 - a2) / b2;
    let coeffs = [
        (T::one() + amc) * (T::one() + amc) - four * a2 / b2 * cg * cg,
        four * (-amc * (T::one() + amc) * cb + two * a2 / b2 * cg * cg * cb
            - (T::one() - apc) * ca * cg),
        two * (amc * amc - T::one() + two * amc * amc * cb * cb + two * bmc * ca * ca
            - four * apc * ca * cb * cg
            + two * bma * cg * cg),
        four * (amc * (T::one() - amc) * cb - (T::one() - apc) * ca * cg
            + two * c2 / b2 * ca * ca * cb),
        (amc - T::one()) * (amc - T::one()) - four * c2 / b2 * ca * ca,
    ];

    let mut out = Vec::new();
    for v in real_roots(&coeffs) {
        let denom = two * (cg - v * ca);
        if !(denom.abs() > T::default_epsilon()) {
            continue;
        }
        let u = ((amc - T::one()) * v * v - two * amc * cb * v + T::one() + amc) / denom;
        let d = T::one() + v * v - two * v * cb;
        if !(d > T::zero()) {
            continue;
        }
        let s1 = (b2 / d).sqrt();
        let mut s = Vector3::new(s1, u * s1, v * s1);
        polish_distances(&mut s, a2, b2, c2, ca, cb, cg);
        if !s.iter().all(|x| *x > T::zero() && x.is_finite()) {
            continue;
        }
        let pairs = (0..3).map(|i| (world[i], j[i] * s[i]));
        if let Ok(t) = umeyama_rigid(&CorrespondenceSet3D::new(pairs)) {
            out.push(CameraPose::new(*t.rotation(), *t.translation()));
        }
    }
    out
}

fn polish_distances<T: Real>(s: &mut Vector3<T>, a2: T, b2: T, c2: T, ca: T, cb: T, cg: T) {
    let two = T::lit(2.0);
    for _ in 0..3 {
        let f = Vector3::new(
            s[1] * s[1] + s[2] * s[2] - two * s[1] * s[2] * ca - a2,
            s[0] * s[0] + s[2] * s[2] - two * s[0] * s[2] * cb - b2,
            s[0] * s[0] + s[1] * s[1] - two * s[0] * s[1] * cg - c2,
        );
        let jac = Matrix3::new(
            T::zero(),
            two * (s[1] - s[2] * ca),
            two * (s[2] - s[1] * ca),
            two * (s[0] - s[2] * cb),
            T::zero(),
            two * (s[2] - s[0] * cb),
            two * (s[0] - s[1] * cg),
            two * (s[1] - s[0] * cg),
            T::zero(),
        );
        match jac.lu().solve(&f) {
            Some(step) if step.iter().all(|x| x.is_finite()) => *s -= step,
            _ => return,
        }
    }
}

/// Real roots of `c[4] x^4 + c[3] x^3 + c[2] x^2 + c[1] x + c[0]` by Ferrari's
/// method, each polished with Newton steps on the original polynomial.
fn real_roots<T: Real>(c: &[T; 5]) -> Vec<T> {
    let scale = c.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if !(scale > T::zero()) || !(c[4].abs() > scale * T::lit(1e-12)) {
        return Vec::new();
    }
    let a = c[3] / c[4];
    let b = c[2] / c[4];
    let cc = c[1] / c[4];
    let d = c[0] / c[4];
    let eval = |x: T| (((x + a) * x + b) * x + cc) * x + d;
    let deriv = |x: T| ((T::lit(4.0) * x + T::lit(3.0) * a) * x + T::lit(2.0) * b) * x + cc;

    let a2 = a * a;
    let p = b - T::lit(3.0 / 8.0) * a2;
    let q = cc - a * b / T::lit(2.0) + a2 * a / T::lit(8.0);
    let r = d - a * cc / T::lit(4.0) + a2 * b / T::lit(16.0) - T::lit(3.0 / 256.0) * a2 * a2;
    let shift = -a / T::lit(4.0);

    let mut ys = Vec::new();
    let coef_scale = T::one().max(p.abs()).max(r.abs().sqrt());
    if q.abs() <= T::lit(1e-14) * coef_scale * coef_scale.sqrt() {
        for z in quadratic_roots(T::one(), p, r) {
            if z >= T::zero() {
                ys.push(z.sqrt());
                ys.push(-z.sqrt());
            }
        }
    } else {
        let m = largest_cubic_root(p, p * p / T::lit(4.0) - r, -q * q / T::lit(8.0));
        if m > T::zero() {
            let s = (T::lit(2.0) * m).sqrt();
            let h = q / (T::lit(2.0) * s);
            let base = p / T::lit(2.0) + m;
            ys.extend(quadratic_roots(T::one(), -s, base + h));
            ys.extend(quadratic_roots(T::one(), s, base - h));
        }
    }
    ys.into_iter()
        .map(|y| {
            let mut x = y + shift;
            for _ in 0..3 {
                let dv = deriv(x);
                if dv == T::zero() {
                    break;
                }
                let nx = x - eval(x) / dv;
                if !nx.is_finite() {
                    break;
                }
                x = nx;
            }
            x
        })
        .collect()
}

/// Real roots of `a x^2 + b x + c` with a tolerance for near-double roots.
fn quadratic_roots<T: Real>(a: T, b: T, c: T) -> Vec<T> {
    let disc = b * b - T::lit(4.0) * a * c;
    let tol = T::lit(1e-12) * (b * b).max((T::lit(4.0) * a * c).abs());
    if disc < -tol {
        return Vec::new();
    }
    let sq = disc.max(T::zero()).sqrt();
    // numerically stable pair
    let qq = -(b + if b >= T::zero() { sq } else { -sq }) / T::lit(2.0);
    if qq == T::zero() {
        return vec![T::zero(), T::zero()];
    }
    vec![qq / a, c / qq]
}

/// Largest real root of `m^3 + a m^2 + b m + c`.
fn largest_cubic_root<T: Real>(a: T, b: T, c: T) -> T {
    let three = T::lit(3.0);
    let p = b - a * a / three;
    let q = T::lit(2.0) * a * a * a / T::lit(27.0) - a * b / three + c;
    let disc = (q / T::lit(2.0)).powi(2) + (p / three).powi(3);
    let t = if disc > T::zero() {
        let sd = disc.sqrt();
        (-q / T::lit(2.0) + sd).cbrt() + (-q / T::lit(2.0) - sd).cbrt()
    } else if p == T::zero() {
        T::zero()
    } else {
        let rho = (-p / three).sqrt();
        let arg = (three * q / (T::lit(2.0) * p) * (-three / p).sqrt())
            .max(-T::one())
            .min(T::one());
        T::lit(2.0) * rho * (arg.acos() / three).cos()
    };
    let mut m = t - a / three;
    for _ in 0..2 {
        let f = ((m + a) * m + b) * m + c;
        let df = (three * m + T::lit(2.0) * a) * m + b;
        if df == T::zero() {
            break;
        }
        let nm = m - f / df;
        if !nm.is_finite() {
            break;
        }
        m = nm;
    }
    m
}

/// EPnP closed form refined by Gauss-Newton on all matches.
pub fn epnp<T: Real>(matches: &[Match2D3D<T>], k: &CameraIntrinsics<T>) -> Result<CameraPose<T>> {
    let init = epnp_closed_form(matches, k)?;
    Ok(gauss_newton_pose(&init, matches, k, 50))
}

fn epnp_closed_form<T: Real>(
    matches: &[Match2D3D<T>],
    k: &CameraIntrinsics<T>,
) -> Result<CameraPose<T>> {
    let n = matches.len();
    if n < 4 {
        return Err(insufficient(n));
    }
    let nf = T::from_usize_lossy(n);
    let c0 = matches.iter().fold(Vector3::zeros(), |a, m| a + m.point) / nf;
    let mut cov = Matrix3::zeros();
    for m in matches {
        let d = m.point - c0;
        cov += d * d.transpose();
    }
    cov /= nf;
    let eig = cov.symmetric_eigen();
    let max_l = eig.eigenvalues.iter().fold(T::zero(), |a, b| a.max(*b));
    if !(max_l > T::zero()) {
        return Err(Error::EstimationFailed("all map points coincide".into()));
    }
    let floor = max_l.sqrt() * T::lit(1e-6);
    let axes: Vec<(Vector3<T>, T)> = (0..3)
        .map(|i| {
            let e: Vector3<T> = eig.eigenvectors.column(i).into_owned();
            (e, eig.eigenvalues[i].max(T::zero()).sqrt().max(floor))
        })
        .collect();
    let mut cw = [c0; 4];
    for (i, (e, s)) in axes.iter().enumerate() {
        cw[i + 1] = c0 + e * *s;
    }
    let alphas: Vec<[T; 4]> = matches
        .iter()
        .map(|m| {
            let d = m.point - c0;
            let a1 = axes[0].0.dot(&d) / axes[0].1;
            let a2 = axes[1].0.dot(&d) / axes[1].1;
            let a3 = axes[2].0.dot(&d) / axes[2].1;
            [T::one() - a1 - a2 - a3, a1, a2, a3]
        })
        .collect();

    let mut mtm = SMatrix::<T, 12, 12>::zeros();
    for (m, al) in matches.iter().zip(&alphas) {
        let x = k.normalize(&m.pixel);
        let mut ru = SVector::<T, 12>::zeros();
        let mut rv = SVector::<T, 12>::zeros();
        for j in 0..4 {
            ru[3 * j] = al[j];
            ru[3 * j + 2] = -al[j] * x.x;
            rv[3 * j + 1] = al[j];
            rv[3 * j + 2] = -al[j] * x.y;
        }
        mtm += ru * ru.transpose() + rv * rv.transpose();
    }
    let eig = mtm.symmetric_eigen();
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let null: Vec<SVector<T, 12>> = order[..4]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();

    const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let mut l = SMatrix::<T, 6, 10>::zeros();
    let mut rho = SVector::<T, 6>::zeros();
    let two = T::lit(2.0);
    for (r, &(a, b)) in PAIRS.iter().enumerate() {
        let dv: Vec<Vector3<T>> = null
            .iter()
            .map(|v| v.fixed_rows::<3>(3 * a).into_owned() - v.fixed_rows::<3>(3 * b).into_owned())
            .collect();
        let row = [
            dv[0].dot(&dv[0]),
            two * dv[0].dot(&dv[1]),
            dv[1].dot(&dv[1]),
            two * dv[0].dot(&dv[2]),
            two * dv[1].dot(&dv[2]),
            dv[2].dot(&dv[2]),
            two * dv[0].dot(&dv[3]),
            two * dv[1].dot(&dv[3]),
            two * dv[2].dot(&dv[3]),
            dv[3].dot(&dv[3]),
        ];
        for (c, v) in row.iter().enumerate() {
            l[(r, c)] = *v;
        }
        rho[r] = (cw[a] - cw[b]).norm_squared();
    }

    let mut best: Option<(T, CameraPose<T>)> = None;
    for cols in [&[0usize, 1, 3, 6][..], &[0, 1, 2][..], &[0, 1, 2, 3, 4][..]] {
        let Some(x) = solve_columns(&l, &rho, cols) else {
            continue;
        };
        let mut betas = [T::zero(); 4];
        match cols.len() {
            4 => {
                let b0 = x[0].abs().sqrt();
                if b0 == T::zero() {
                    continue;
                }
                let sign = if x[0] < T::zero() { -T::one() } else { T::one() };
                betas = [b0, sign * x[1] / b0, sign * x[2] / b0, sign * x[3] / b0];
            }
            _ => {
                let b0 = x[0].abs().sqrt();
                let b1 = if (x[0] < T::zero()) == (x[2] < T::zero()) {
                    x[2].abs().sqrt()
                } else {
                    T::zero()
                };
                betas[0] = if x[1] < T::zero() { -b0 } else { b0 };
                betas[1] = b1;
                if cols.len() == 5 && betas[0] != T::zero() {
                    betas[2] = x[3] / betas[0];
                }
            }
        }
        refine_betas(&l, &rho, &mut betas);
        if let Some(pose) = pose_from_betas(&null, &betas, &alphas, matches) {
            let cost = squared_cost(&pose, matches, k);
            if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                best = Some((cost, pose));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::EstimationFailed("EPnP found no valid solution".into()))
}

fn solve_columns<T: Real>(l: &SMatrix<T, 6, 10>, rho: &SVector<T, 6>, cols: &[usize]) -> Option<DVector<T>> {
    let mut a = DMatrix::<T>::zeros(6, cols.len());
    for (j, &c) in cols.iter().enumerate() {
        a.set_column(j, &l.column(c));
    }
    let b = DVector::from_column_slice(rho.as_slice());
    a.svd(true, true).solve(&b, T::default_epsilon()).ok()
}

fn refine_betas<T: Real>(l: &SMatrix<T, 6, 10>, rho: &SVector<T, 6>, b: &mut [T; 4]) {
    let two = T::lit(2.0);
    for _ in 0..5 {
        let bb = [
            b[0] * b[0],
            b[0] * b[1],
            b[1] * b[1],
            b[0] * b[2],
            b[1] * b[2],
            b[2] * b[2],
            b[0] * b[3],
            b[1] * b[3],
            b[2] * b[3],
            b[3] * b[3],
        ];
        let mut jac = DMatrix::<T>::zeros(6, 4);
        let mut res = DVector::<T>::zeros(6);
        for r in 0..6 {
            let li = |c: usize| l[(r, c)];
            jac[(r, 0)] = two * b[0] * li(0) + b[1] * li(1) + b[2] * li(3) + b[3] * li(6);
            jac[(r, 1)] = b[0] * li(1) + two * b[1] * li(2) + b[2] * li(4) + b[3] * li(7);
            jac[(r, 2)] = b[0] * li(3) + b[1] * li(4) + two * b[2] * li(5) + b[3] * li(8);
            jac[(r, 3)] = b[0] * li(6) + b[1] * li(7) + b[2] * li(8) + two * b[3] * li(9);
            let pred = (0..10).fold(T::zero(), |acc, c| acc + li(c) * bb[c]);
            res[r] = rho[r] - pred;
        }
        let Ok(step) = jac.svd(true, true).solve(&res, T::default_epsilon()) else {
            return;
        };
        if !step.iter().all(|x| x.is_finite()) {
            return;
        }
        for i in 0..4 {
            b[i] += step[i];
        }
    }
}

fn pose_from_betas<T: Real>(
    null: &[SVector<T, 12>],
    betas: &[T; 4],
    alphas: &[[T; 4]],
    matches: &[Match2D3D<T>],
) -> Option<CameraPose<T>> {
    let mut cc = SVector::<T, 12>::zeros();
    for (v, b) in null.iter().zip(betas) {
        cc += v * *b;
    }
    let ccs: Vec<Vector3<T>> = (0..4).map(|j| cc.fixed_rows::<3>(3 * j).into_owned()).collect();
    let mut pcs: Vec<Vector3<T>> = alphas
        .iter()
        .map(|al| (0..4).fold(Vector3::zeros(), |acc, j| acc + ccs[j] * al[j]))
        .collect();
    let behind = pcs.iter().filter(|p| p.z < T::zero()).count();
    if 2 * behind > pcs.len() {
        for p in &mut pcs {
            *p = -*p;
        }
    }
    let pairs = matches.iter().zip(&pcs).map(|(m, p)| (m.point, *p));
    let t = umeyama_rigid(&CorrespondenceSet3D::new(pairs)).ok()?;
    Some(CameraPose::new(*t.rotation(), *t.translation()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpConfig {
    /// Threshold in pixels.
    pub ransac: RansacConfig,
    /// Smallest consensus set accepted as a localization.
    pub min_inliers: usize,
    pub refit_rounds: usize,
}

impl Default for PnpConfig {
    fn default() -> Self {
        Self {
            ransac: RansacConfig::with_threshold(4.0),
            min_inliers: 15,
            refit_rounds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult<T: Real> {
    pub pose: CameraPose<T>,
    pub inliers: Vec<bool>,
    pub iterations: usize,
}

impl<T: Real> PnpResult<T> {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn consensus<T: Real>(
    pose: &CameraPose<T>,
    matches: &[Match2D3D<T>],
    k: &CameraIntrinsics<T>,
    thr: T,
) -> (Vec<bool>, usize, T) {
    let mut mask = Vec::with_capacity(matches.len());
    let mut count = 0;
    let mut cost = T::zero();
    for m in matches {
        let e = reprojection_error(pose, m, k);
        let ok = e <= thr;
        mask.push(ok);
        if ok {
            count += 1;
            cost += e * e;
        }
    }
    (mask, count, cost)
}

/// RANSAC over P3P hypotheses (three points plus one to disambiguate),
/// followed by least-squares refits on the consensus set.
pub fn ransac_pnp<T: Real>(
    matches: &[Match2D3D<T>],
    k: &CameraIntrinsics<T>,
    cfg: &PnpConfig,
) -> Result<PnpResult<T>> {
    let n = matches.len();
    if n < 4 {
        return Err(insufficient(n));
    }
    let thr = T::lit(cfg.ransac.threshold);
    let bearings: Vec<Vector3<T>> = matches.iter().map(|m| k.normalize(&m.pixel).normalize()).collect();
    let mut rng = cfg.ransac.rng();
    let mut best: Option<(usize, T, CameraPose<T>)> = None;
    let mut needed = usize::MAX;
    let mut iterations = 0;
    while iterations < cfg.ransac.max_iterations
        && (iterations < cfg.ransac.min_iterations || iterations < needed)
    {
        iterations += 1;
        let s = sample_indices(&mut rng, n, 4);
        let world = [matches[s[0]].point, matches[s[1]].point, matches[s[2]].point];
        let rays = [bearings[s[0]], bearings[s[1]], bearings[s[2]]];
        let check = &matches[s[3]];
        let Some(hyp) = p3p(&world, &rays).into_iter().min_by(|a, b| {
            reprojection_error(a, check, k)
                .partial_cmp(&reprojection_error(b, check, k))
                .unwrap_or(std::cmp::Ordering::Equal)
        }) else {
            continue;
        };
        let (_, count, cost) = consensus(&hyp, matches, k, thr);
        let better = match &best {
            None => count > 0,
            Some((bc, bcost, _)) => count > *bc || (count == *bc && cost < *bcost),
        };
        if better {
            best = Some((count, cost, hyp));
            needed = required_iterations(count as f64 / n as f64, 4, cfg.ransac.confidence);
        }
    }
    let Some((count, _, mut pose)) = best else {
        return Err(Error::LocalizationFailed("no P3P hypothesis".into()));
    };
    let min_inliers = cfg.min_inliers.max(4);
    if count < min_inliers {
        return Err(Error::LocalizationFailed(format!(
            "best hypothesis has {count} inliers, need {min_inliers}"
        )));
    }

    let (mut mask, mut count, _) = consensus(&pose, matches, k, thr);
    for _ in 0..cfg.refit_rounds {
        let subset: Vec<Match2D3D<T>> = matches
            .iter()
            .zip(&mask)
            .filter(|(_, &b)| b)
            .map(|(m, _)| *m)
            .collect();
        let from_hyp = gauss_newton_pose(&pose, &subset, k, 50);
        let candidate = match epnp(&subset, k) {
            Ok(e) if squared_cost(&e, &subset, k) < squared_cost(&from_hyp, &subset, k) => e,
            _ => from_hyp,
        };
        let (new_mask, new_count, _) = consensus(&candidate, matches, k, thr);
        if new_count < count {
            break;
        }
        pose = candidate;
        let stable = new_mask == mask;
        mask = new_mask;
        count = new_count;
        if stable {
            break;
        }
    }
    if count < min_inliers {
        return Err(Error::LocalizationFailed(format!(
            "refined pose keeps {count} inliers, need {min_inliers}"
        )));
    }
    Ok(PnpResult {
        pose,
        inliers: mask,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{relative_pose, rotation_angle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn intrinsics() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(800.0, 800.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn random_pose(rng: &mut impl Rng) -> CameraPose<f64> {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let q = UnitQuaternion::from_scaled_axis(axis * 0.5);
        let t = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0));
        CameraPose::new(q, t)
    }

    /// Points in front of the camera, inside the image.
    fn scene(rng: &mut impl Rng, pose: &CameraPose<f64>, n: usize) -> Vec<Match2D3D<f64>> {
        let k = intrinsics();
        (0..n)
            .map(|i| {
                let px = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
                let depth = rng.random_range(4.0..30.0);
                let xc = k.unproject_unchecked(&px, depth);
                Match2D3D { pixel: px, point: pose.inverse_transform_point(&xc), track: i as u64 }
            })
            .collect()
    }

    fn pose_err(a: &CameraPose<f64>, b: &CameraPose<f64>) -> (f64, f64) {
        let rel = relative_pose(a, b);
        (rotation_angle(rel.rotation()).to_degrees(), (a.center() - b.center()).norm())
    }

    #[test]
    fn quartic_roots() {
        // (x-1)(x-2)(x+3)(x-0.5) = x^4 - 0.5x^3 - 7x^2 + 9.5x - 3
        let mut r = real_roots::<f64>(&[-3.0, 9.5, -7.0, -0.5, 1.0]);
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [-3.0, 0.5, 1.0, 2.0];
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(r.len(), 4);
        // (x-1)^2 (x+2)^2: double roots
        let r = real_roots::<f64>(&[4.0, -4.0, -3.0, 2.0, 1.0]);
        assert!(r.iter().any(|x| (x - 1.0).abs() < 1e-6));
        assert!(r.iter().any(|x| (x + 2.0).abs() < 1e-6));
        // biquadratic x^4 - 5x^2 + 4
        let mut r = real_roots::<f64>(&[4.0, 0.0, -5.0, 0.0, 1.0]);
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(r.len(), 4);
        assert!((r[0] + 2.0).abs() < 1e-12 && (r[3] - 2.0).abs() < 1e-12);
        // x^4 + 1 has none
        assert!(real_roots::<f64>(&[1.0, 0.0, 0.0, 0.0, 1.0]).is_empty());
    }

    #[test]
    fn p3p_contains_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let pose = random_pose(&mut rng);
            let m = scene(&mut rng, &pose, 3);
            let world = [m[0].point, m[1].point, m[2].point];
            let rays = [0, 1, 2].map(|i| pose.transform_point(&m[i].point).normalize());
            let sols = p3p(&world, &rays);
            let best = sols
                .iter()
                .map(|s| {
                    let (r, t) = pose_err(s, &pose);
                    r + t
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6, "best candidate error {best}, {} candidates", sols.len());
        }
    }

    #[test]
    fn epnp_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let pose = random_pose(&mut rng);
            let m = scene(&mut rng, &pose, 30);
            let (r, t) = pose_err(&epnp(&m, &intrinsics()).unwrap(), &pose);
            assert!(r < 1e-8 && t < 1e-8, "{r} {t}");
        }
    }

    #[test]
    fn epnp_closed_form_is_close_without_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = random_pose(&mut rng);
        let m = scene(&mut rng, &pose, 50);
        let (r, t) = pose_err(&epnp_closed_form(&m, &intrinsics()).unwrap(), &pose);
        assert!(r < 1e-5 && t < 1e-5, "{r} {t}");
    }

    #[test]
    fn epnp_handles_planar_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = intrinsics();
        let pose = CameraPose::from_center(
            UnitQuaternion::from_euler_angles(2.8, 0.1, 0.3),
            &Vector3::new(1.0, 2.0, 20.0),
        );
        let m: Vec<Match2D3D<f64>> = (0..40)
            .filter_map(|i| {
                let p = Vector3::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), 0.0);
                let xc = pose.transform_point(&p);
                let px = k.project(&xc).ok()?;
                Some(Match2D3D { pixel: px, point: p, track: i })
            })
            .collect();
        assert!(m.len() > 10);
        let (r, t) = pose_err(&epnp(&m, &k).unwrap(), &pose);
        assert!(r < 1e-6 && t < 1e-6, "{r} {t}");
    }

    #[test]
    fn ransac_noiseless_50() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let pose = random_pose(&mut rng);
            let m = scene(&mut rng, &pose, 50);
            let res = ransac_pnp(&m, &intrinsics(), &PnpConfig::default()).unwrap();
            let (r, t) = pose_err(&res.pose, &pose);
            assert!(r < 1e-6 && t < 1e-6);
            assert_eq!(res.inlier_count(), 50);
        }
    }

    #[test]
    fn ransac_with_outliers_monte_carlo() {
        let k = intrinsics();
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for trial in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let pose = random_pose(&mut rng);
            let mut m = scene(&mut rng, &pose, 200);
            let mut is_outlier = vec![false; 200];
            for (i, mm) in m.iter_mut().enumerate() {
                if i % 5 < 2 {
                    mm.pixel = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
                    is_outlier[i] = true;
                } else {
                    mm.pixel += Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                }
            }
            let cfg = PnpConfig { ransac: RansacConfig { seed: trial, ..PnpConfig::default().ransac }, ..Default::default() };
            let res = ransac_pnp(&m, &k, &cfg).unwrap();
            let (r, _) = pose_err(&res.pose, &pose);
            worst = worst.max(r);
            for i in 0..200 {
                if !is_outlier[i] && reprojection_error(&pose, &m[i], &k) <= 3.5 {
                    assert!(res.inliers[i], "trial {trial}: true inlier {i} rejected");
                }
            }
        }
        assert!(worst < 0.5, "worst rotation error {worst} deg");
    }

    #[test]
    fn infinite_threshold_equals_epnp() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = intrinsics();
        let noise = Normal::new(0.0, 0.5).unwrap();
        let pose = random_pose(&mut rng);
        let mut m = scene(&mut rng, &pose, 60);
        for mm in &mut m {
            mm.pixel += Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
        }
        let cfg = PnpConfig { ransac: RansacConfig::with_threshold(f64::INFINITY), ..Default::default() };
        let res = ransac_pnp(&m, &k, &cfg).unwrap();
        let direct = epnp(&m, &k).unwrap();
        let (r, t) = pose_err(&res.pose, &direct);
        assert!(r < 1e-9 && t < 1e-9, "{r} {t}");
        assert!(res.inliers.iter().all(|&b| b));
    }

    #[test]
    fn too_few_and_no_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pose = random_pose(&mut rng);
        let m = scene(&mut rng, &pose, 3);
        assert!(matches!(ransac_pnp(&m, &intrinsics(), &PnpConfig::default()), Err(Error::InsufficientData { .. })));
        let mut m = scene(&mut rng, &pose, 200);
        for mm in &mut m {
            mm.pixel = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        }
        assert!(matches!(ransac_pnp(&m, &intrinsics(), &PnpConfig::default()), Err(Error::LocalizationFailed(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pose = random_pose(&mut rng);
        let mut m = scene(&mut rng, &pose, 80);
        for mm in m.iter_mut().step_by(3) {
            mm.pixel = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        }
        let a = ransac_pnp(&m, &intrinsics(), &PnpConfig::default()).unwrap();
        let b = ransac_pnp(&m, &intrinsics(), &PnpConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
