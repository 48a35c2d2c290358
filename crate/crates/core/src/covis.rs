//! Depth-based covisibility matrices and asymmetric training-pair mining.

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::geom::{CameraIntrinsics, CameraPose};
use crate::recon::{FrameLabel, ImageId};

/// Row-major depth raster in meters; zero or NaN marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub image: ImageId,
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(image: ImageId, width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(domain(format!(
                "depth map {image}: {} values for {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|d| d.is_infinite() || *d < 0.0) {
            return Err(domain(format!("depth map {image} has negative or infinite depth")));
        }
        Ok(Self {
            image,
            width,
            height,
            data,
        })
    }

    pub fn invalid(image: ImageId, width: u32, height: u32) -> Self {
        Self {
            image,
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, col: u32, row: u32) -> Option<f32> {
        let d = self.data[row as usize * self.width as usize + col as usize];
        (d > 0.0 && d.is_finite()).then_some(d)
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0 && d.is_finite()).count()
    }

    /// Bilinear interpolation at a continuous pixel position (centres at +0.5),
    /// over valid neighbours only with renormalised weights.
    pub fn bilinear(&self, pixel: &Vector2<f64>) -> Option<f64> {
        let x = pixel.x - 0.5;
        let y = pixel.y - 0.5;
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for (dx, dy, w) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            let c = x0 as i64 + dx;
            let r = y0 as i64 + dy;
            if w <= 0.0 || c < 0 || r < 0 || c >= self.width as i64 || r >= self.height as i64 {
                continue;
            }
            if let Some(d) = self.get(c as u32, r as u32) {
                acc += w * d as f64;
                wsum += w;
            }
        }
        (wsum > 0.0).then(|| acc / wsum)
    }
}

/// Camera of a view taking part in a covisibility computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovisCamera {
    pub intrinsics: CameraIntrinsics<f64>,
    pub pose: CameraPose<f64>,
    pub frame: FrameLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovisibilityConfig {
    pub pixel_stride: u32,
    pub depth_rel_tol: f64,
    pub depth_abs_tol: f64,
}

impl Default for CovisibilityConfig {
    fn default() -> Self {
        Self {
            pixel_stride: 1,
            depth_rel_tol: 0.01,
            depth_abs_tol: 0.05,
        }
    }
}

impl CovisibilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pixel_stride == 0 {
            return Err(domain("pixel stride must be at least 1"));
        }
        if !(self.depth_rel_tol > 0.0) || !(self.depth_abs_tol > 0.0) {
            return Err(domain("depth tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovisibilityMatrix {
    pub n: usize,
    /// Row-major, `values[i * n + j]` is the fraction of i's points visible in j.
    pub values: Vec<f64>,
}

impl CovisibilityMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(domain(format!("{} values for a {n}x{n} matrix", values.len())));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(domain("covisibility values must lie in [0, 1]"));
        }
        Ok(Self { n, values })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Sampled surface points of one view lifted to the world frame.
struct ViewCache {
    world: Vec<Vector3<f64>>,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl ViewCache {
    fn build(depth: &DepthMap, cam: &CovisCamera, stride: u32) -> Self {
        let mut world = Vec::new();
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for row in (0..depth.height).step_by(stride as usize) {
            for col in (0..depth.width).step_by(stride as usize) {
                if let Some(d) = depth.get(col, row) {
                    let px = CameraIntrinsics::<f64>::pixel_center(col, row);
                    let xc = cam.intrinsics.unproject_unchecked(&px, d as f64);
                    let xw = cam.pose.inverse_transform_point(&xc);
                    lo = lo.inf(&xw);
                    hi = hi.sup(&xw);
                    world.push(xw);
                }
            }
        }
        Self { world, lo, hi }
    }

    /// True when the bounding box of the points lies entirely outside j's frustum.
    fn outside_frustum(&self, cam: &CovisCamera) -> bool {
        if self.world.is_empty() {
            return true;
        }
        let k = &cam.intrinsics;
        let (w, h) = (k.width as f64, k.height as f64);
        let corners: Vec<Vector3<f64>> = (0..8)
            .map(|c| {
                let pick = |b: bool, lo: f64, hi: f64| if b { hi } else { lo };
                cam.pose.transform_point(&Vector3::new(
                    pick(c & 1 != 0, self.lo.x, self.hi.x),
                    pick(c & 2 != 0, self.lo.y, self.hi.y),
                    pick(c & 4 != 0, self.lo.z, self.hi.z),
                ))
            })
            .collect();
        // half-spaces of the frustum: z > 0, u >= 0, u < w, v >= 0, v < h
        let planes: [&dyn Fn(&Vector3<f64>) -> bool; 5] = [
            &|p| p.z <= 0.0,
            &|p| k.fx * p.x + (k.cx - 0.0) * p.z < 0.0,
            &|p| k.fx * p.x + (k.cx - w) * p.z >= 0.0,
            &|p| k.fy * p.y + (k.cy - 0.0) * p.z < 0.0,
            &|p| k.fy * p.y + (k.cy - h) * p.z >= 0.0,
        ];
        planes.iter().any(|out| corners.iter().all(|c| out(c)))
    }
}

fn check_pair(a: &CovisCamera, b: &CovisCamera) -> Result<()> {
    if a.frame != b.frame {
        return Err(Error::FrameMismatch {
            expected: a.frame.as_str().into(),
            found: b.frame.as_str().into(),
        });
    }
    Ok(())
}

fn check_view(depth: &DepthMap, cam: &CovisCamera) -> Result<()> {
    if depth.width != cam.intrinsics.width || depth.height != cam.intrinsics.height {
        return Err(domain(format!(
            "depth map {} is {}x{} but its camera is {}x{}",
            depth.image, depth.width, depth.height, cam.intrinsics.width, cam.intrinsics.height
        )));
    }
    Ok(())
}

fn visible_fraction(
    cache: &ViewCache,
    depth_j: &DepthMap,
    cam_j: &CovisCamera,
    cfg: &CovisibilityConfig,
) -> f64 {
    if cache.world.is_empty() || cache.outside_frustum(cam_j) {
        return 0.0;
    }
    let mut visible = 0usize;
    for xw in &cache.world {
        let xj = cam_j.pose.transform_point(xw);
        if !(xj.z > 0.0) {
            continue;
        }
        let px = cam_j.intrinsics.project_unchecked(&xj);
        if !cam_j.intrinsics.contains(&px) {
            continue;
        }
        if let Some(d) = depth_j.bilinear(&px) {
            if (xj.z - d).abs() <= cfg.depth_abs_tol.max(cfg.depth_rel_tol * xj.z) {
                visible += 1;
            }
        }
    }
    visible as f64 / cache.world.len() as f64
}

/// Fraction of i's valid (strided) pixels whose surface point is seen by j.
pub fn covisibility_pair(
    depth_i: &DepthMap,
    cam_i: &CovisCamera,
    depth_j: &DepthMap,
    cam_j: &CovisCamera,
    cfg: &CovisibilityConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_pair(cam_i, cam_j)?;
    check_view(depth_i, cam_i)?;
    check_view(depth_j, cam_j)?;
    let cache = ViewCache::build(depth_i, cam_i, cfg.pixel_stride);
    Ok(visible_fraction(&cache, depth_j, cam_j, cfg))
}

/// Precomputed per-view caches; tiles of the matrix can be computed independently.
pub struct CovisibilityJob<'a> {
    depths: &'a [DepthMap],
    cams: &'a [CovisCamera],
    caches: Vec<ViewCache>,
    cfg: CovisibilityConfig,
}

impl<'a> CovisibilityJob<'a> {
    pub fn new(
        depths: &'a [DepthMap],
        cams: &'a [CovisCamera],
        cfg: &CovisibilityConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if depths.len() != cams.len() {
            return Err(domain("depth map and camera counts differ"));
        }
        for (d, c) in depths.iter().zip(cams) {
            check_view(d, c)?;
            if let Some(first) = cams.first() {
                check_pair(first, c)?;
            }
        }
        let caches = depths
            .par_iter()
            .zip(cams)
            .map(|(d, c)| ViewCache::build(d, c, cfg.pixel_stride))
            .collect();
        Ok(Self {
            depths,
            cams,
            caches,
            cfg: *cfg,
        })
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return if self.caches[i].world.is_empty() { 0.0 } else { 1.0 };
        }
        visible_fraction(&self.caches[i], &self.depths[j], &self.cams[j], &self.cfg)
    }

    /// Entries of rows `rows` and columns `cols`, row-major.
    pub fn tile(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<f64> {
        let cells: Vec<(usize, usize)> = rows
            .flat_map(|i| cols.clone().map(move |j| (i, j)))
            .collect();
        cells.par_iter().map(|&(i, j)| self.entry(i, j)).collect()
    }
}

/// Partially computed matrix whose tiles can be filled in over several calls.
#[derive(Debug, Clone, PartialEq)]
pub struct TiledCovisibility {
    pub n: usize,
    pub tile_size: usize,
    pub values: Vec<f64>,
    pub done: Vec<bool>,
}

impl TiledCovisibility {
    pub fn new(n: usize, tile_size: usize) -> Result<Self> {
        if tile_size == 0 {
            return Err(domain("tile size must be at least 1"));
        }
        let t = n.div_ceil(tile_size);
        Ok(Self {
            n,
            tile_size,
            values: vec![0.0; n * n],
            done: vec![false; t * t],
        })
    }

    pub fn tiles_per_side(&self) -> usize {
        self.n.div_ceil(self.tile_size)
    }

    pub fn is_complete(&self) -> bool {
        self.done.iter().all(|&d| d)
    }

    /// Computes at most `max_tiles` pending tiles, in row-major tile order.
    /// Returns how many were computed.
    pub fn advance(&mut self, job: &CovisibilityJob<'_>, max_tiles: usize) -> Result<usize> {
        if job.len() != self.n {
            return Err(domain("job size does not match the tiled matrix"));
        }
        let t = self.tiles_per_side();
        let mut computed = 0;
        for idx in 0..self.done.len() {
            if computed == max_tiles {
                break;
            }
            if self.done[idx] {
                continue;
            }
            let (ti, tj) = (idx / t, idx % t);
            let rows = ti * self.tile_size..((ti + 1) * self.tile_size).min(self.n);
            let cols = tj * self.tile_size..((tj + 1) * self.tile_size).min(self.n);
            let vals = job.tile(rows.clone(), cols.clone());
            let w = cols.len();
            for (ri, i) in rows.enumerate() {
                for (ci, j) in cols.clone().enumerate() {
                    self.values[i * self.n + j] = vals[ri * w + ci];
                }
            }
            self.done[idx] = true;
            computed += 1;
        }
        Ok(computed)
    }

    pub fn into_matrix(self) -> Result<CovisibilityMatrix> {
        if !self.is_complete() {
            return Err(domain("covisibility tiles still pending"));
        }
        CovisibilityMatrix::new(self.n, self.values)
    }
}

pub const DEFAULT_TILE: usize = 16;

/// Full N x N matrix; the diagonal is 1 for every image with valid depth.
pub fn covisibility_matrix(
    depths: &[DepthMap],
    cams: &[CovisCamera],
    cfg: &CovisibilityConfig,
) -> Result<CovisibilityMatrix> {
    let job = CovisibilityJob::new(depths, cams, cfg)?;
    let mut tiles = TiledCovisibility::new(depths.len(), DEFAULT_TILE)?;
    tiles.advance(&job, usize::MAX)?;
    tiles.into_matrix()
}

/// AM/HM asymmetry of a pair: `(a + b)^2 / (4ab)`, infinite if either is zero.
pub fn pair_score(c_ij: f64, c_ji: f64) -> f64 {
    if c_ij == 0.0 || c_ji == 0.0 {
        return f64::INFINITY;
    }
    let s = c_ij + c_ji;
    s * s / (4.0 * c_ij * c_ji)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairClass {
    GroundGround,
    GroundAerial,
    AerialAerial,
}

impl PairClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PairClass::GroundGround => "ground-ground",
            PairClass::GroundAerial => "ground-aerial",
            PairClass::AerialAerial => "aerial-aerial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ground-ground" => Some(PairClass::GroundGround),
            "ground-aerial" => Some(PairClass::GroundAerial),
            "aerial-aerial" => Some(PairClass::AerialAerial),
            _ => None,
        }
    }

    pub fn of(alt_i: f64, alt_j: f64, aerial_threshold: f64) -> Self {
        match (alt_i >= aerial_threshold, alt_j >= aerial_threshold) {
            (false, false) => PairClass::GroundGround,
            (true, true) => PairClass::AerialAerial,
            _ => PairClass::GroundAerial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredPair {
    pub i: usize,
    pub j: usize,
    pub c_ij: f64,
    pub c_ji: f64,
    pub score: f64,
    pub class: PairClass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSelectionConfig {
    pub min_covis: f64,
    pub max_covis: f64,
    /// Accepted range of max(C[i,j], C[j,i]).
    pub target_band: (f64, f64),
    pub aerial_altitude_threshold_m: f64,
    /// Budget shares for ground-aerial, ground-ground and aerial-aerial pairs.
    pub class_quotas: [f64; 3],
}

impl Default for PairSelectionConfig {
    fn default() -> Self {
        Self {
            min_covis: 0.01,
            max_covis: 0.95,
            target_band: (0.2, 0.95),
            aerial_altitude_threshold_m: 30.0,
            class_quotas: [0.6, 0.2, 0.2],
        }
    }
}

impl PairSelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min_covis && self.min_covis <= self.max_covis && self.max_covis <= 1.0) {
            return Err(domain("need 0 <= min-covis <= max-covis <= 1"));
        }
        let (lo, hi) = self.target_band;
        if !(lo <= hi) {
            return Err(domain("target band is empty"));
        }
        if self.class_quotas.iter().any(|q| !(*q >= 0.0)) {
            return Err(domain("class quotas must be non-negative"));
        }
        Ok(())
    }
}

const CLASS_ORDER: [PairClass; 3] = [
    PairClass::GroundAerial,
    PairClass::GroundGround,
    PairClass::AerialAerial,
];

/// Ranks band-filtered pairs by asymmetry and takes up to `budget` with
/// per-class quotas; unused quota flows to the other classes.
pub fn select_pairs(
    c: &CovisibilityMatrix,
    altitudes: &[f64],
    cfg: &PairSelectionConfig,
    budget: usize,
    seed: u64,
) -> Result<Vec<ScoredPair>> {
    cfg.validate()?;
    if altitudes.len() != c.n {
        return Err(domain(format!(
            "{} altitudes for {} images",
            altitudes.len(),
            c.n
        )));
    }
    let mut candidates = Vec::new();
    for i in 0..c.n {
        for j in (i + 1)..c.n {
            let (a, b) = (c.get(i, j), c.get(j, i));
            let lo = a.min(b);
            let hi = a.max(b);
            if lo < cfg.min_covis || hi > cfg.max_covis {
                continue;
            }
            if hi < cfg.target_band.0 || hi > cfg.target_band.1 {
                continue;
            }
            let score = pair_score(a, b);
            if !score.is_finite() {
                continue;
            }
            candidates.push(ScoredPair {
                i,
                j,
                c_ij: a,
                c_ji: b,
                score,
                class: PairClass::of(altitudes[i], altitudes[j], cfg.aerial_altitude_threshold_m),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.sort_by(|x, y| y.score.total_cmp(&x.score));

    let total_share: f64 = cfg.class_quotas.iter().sum();
    let mut quota = [0usize; 3];
    if total_share > 0.0 {
        let mut assigned = 0;
        for k in 0..2 {
            quota[k] = ((budget as f64) * cfg.class_quotas[k] / total_share).round() as usize;
            quota[k] = quota[k].min(budget - assigned);
            assigned += quota[k];
        }
        quota[2] = budget - assigned;
    }
    let class_idx = |p: &ScoredPair| CLASS_ORDER.iter().position(|c| *c == p.class).unwrap();
    let mut taken = vec![false; candidates.len()];
    let mut count = 0;
    for (n, p) in candidates.iter().enumerate() {
        let k = class_idx(p);
        if quota[k] > 0 {
            quota[k] -= 1;
            taken[n] = true;
            count += 1;
        }
    }
    for t in taken.iter_mut() {
        if count >= budget {
            break;
        }
        if !*t {
            *t = true;
            count += 1;
        }
    }
    let out: Vec<ScoredPair> = candidates
        .into_iter()
        .zip(taken)
        .filter(|(_, t)| *t)
        .map(|(p, _)| p)
        .collect();
    if out.is_empty() {
        log::warn!("pair selection produced no pairs");
    }
    Ok(out)
}
