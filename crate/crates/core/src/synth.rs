//! Procedural box-city scenes with exact ray-cast depth and synthetic matches.

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::covis::DepthMap;
use crate::error::{domain, Result};
use crate::eval::Pointmap;
use crate::geom::{
    ecef_to_enu_transform, ecef_to_geodetic, CameraIntrinsics, CameraPose, EcefCoord, GeodeticCoord,
    Sim3Transform,
};
use crate::recon::{FrameLabel, ImageId, ReconImage};
use crate::sfm::{keypoint_key, KeypointKey, MatchSet};
use std::collections::HashMap;
use crate::viewgen::look_at;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    /// 0 for the ground plane, building index + 1 otherwise.
    pub triangle_ids: Vec<u32>,
}

impl TriangleMesh {
    pub fn validate(&self) -> Result<()> {
        if self.triangle_ids.len() != self.triangles.len() {
            return Err(domain("one id per triangle required"));
        }
        let n = self.vertices.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(domain(format!("triangle {t} indexes past the vertex list")));
            }
            if self.area(t) <= 0.0 {
                return Err(domain(format!("triangle {t} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn corners(&self, t: usize) -> [Vector3<f64>; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CityConfig {
    pub blocks: usize,
    pub height_range_m: (f64, f64),
    /// Side of the square the buildings occupy, centred on the origin.
    pub extent_m: f64,
    pub ground_half_extent_m: f64,
    pub seed: u64,
}

impl Default for CityConfig {
    fn default() -> Self {
        Self {
            blocks: 16,
            height_range_m: (8.0, 60.0),
            extent_m: 200.0,
            ground_half_extent_m: 2000.0,
            seed: 0,
        }
    }
}

const BOX_FACES: [[u32; 3]; 12] = [
    [0, 2, 3],
    [0, 3, 1],
    [4, 5, 7],
    [4, 7, 6],
    [0, 4, 6],
    [0, 6, 2],
    [1, 3, 7],
    [1, 7, 5],
    [0, 1, 5],
    [0, 5, 4],
    [2, 6, 7],
    [2, 7, 3],
];

/// Axis-aligned buildings on a grid of city blocks over a ground square.
/// Streets between blocks are at least 30% of the block pitch wide.
pub fn generate_city(cfg: &CityConfig) -> Result<TriangleMesh> {
    if cfg.blocks == 0 {
        return Err(domain("a city needs at least one block"));
    }
    let (hlo, hhi) = cfg.height_range_m;
    if !(hlo > 0.0 && hlo <= hhi) || !(cfg.extent_m > 0.0) {
        return Err(domain("building heights and city extent must be positive"));
    }
    if !(cfg.ground_half_extent_m > cfg.extent_m) {
        return Err(domain("ground must extend beyond the city"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let g = (cfg.blocks as f64).sqrt().ceil() as usize;
    let pitch = cfg.extent_m / g as f64;
    let ge = cfg.ground_half_extent_m;
    let mut mesh = TriangleMesh {
        vertices: vec![
            Vector3::new(-ge, -ge, 0.0),
            Vector3::new(ge, -ge, 0.0),
            Vector3::new(ge, ge, 0.0),
            Vector3::new(-ge, ge, 0.0),
        ],
        triangles: vec![[0, 1, 2], [0, 2, 3]],
        triangle_ids: vec![0, 0],
    };
    for b in 0..cfg.blocks {
        let (gx, gy) = (b % g, b / g);
        let cx = -cfg.extent_m / 2.0 + (gx as f64 + 0.5) * pitch;
        let cy = -cfg.extent_m / 2.0 + (gy as f64 + 0.5) * pitch;
        let hx = rng.random_range(0.2..0.35) * pitch;
        let hy = rng.random_range(0.2..0.35) * pitch;
        let ox = rng.random_range(-1.0..1.0) * (0.35 * pitch - hx);
        let oy = rng.random_range(-1.0..1.0) * (0.35 * pitch - hy);
        let h = if hhi > hlo { rng.random_range(hlo..hhi) } else { hlo };
        let lo = Vector3::new(cx + ox - hx, cy + oy - hy, 0.0);
        let hi = Vector3::new(cx + ox + hx, cy + oy + hy, h);
        let base = mesh.vertices.len() as u32;
        for c in 0..8 {
            mesh.vertices.push(Vector3::new(
                if c & 1 != 0 { hi.x } else { lo.x },
                if c & 2 != 0 { hi.y } else { lo.y },
                if c & 4 != 0 { hi.z } else { lo.z },
            ));
        }
        for f in BOX_FACES {
            mesh.triangles.push(f.map(|i| base + i));
            mesh.triangle_ids.push(b as u32 + 1);
        }
    }
    Ok(mesh)
}

struct Group {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    triangles: Vec<usize>,
}

/// Nearest-hit ray queries with per-object bounding-box culling.
pub struct RayCaster<'a> {
    mesh: &'a TriangleMesh,
    groups: Vec<Group>,
}

impl<'a> RayCaster<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        let mut groups: Vec<Group> = Vec::new();
        let mut slot = std::collections::BTreeMap::new();
        for (t, &id) in mesh.triangle_ids.iter().enumerate() {
            let g = *slot.entry(id).or_insert_with(|| {
                groups.push(Group {
                    lo: Vector3::repeat(f64::INFINITY),
                    hi: Vector3::repeat(f64::NEG_INFINITY),
                    triangles: Vec::new(),
                });
                groups.len() - 1
            });
            for v in mesh.corners(t) {
                groups[g].lo = groups[g].lo.inf(&v);
                groups[g].hi = groups[g].hi.sup(&v);
            }
            groups[g].triangles.push(t);
        }
        Self { mesh, groups }
    }

    /// Smallest positive ray parameter `t` with `origin + t * dir` on the mesh.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, usize)> {
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<(f64, usize)> = None;
        for g in &self.groups {
            let limit = best.map_or(f64::INFINITY, |b| b.0);
            if !slab_hit(origin, &inv, &g.lo, &g.hi, limit) {
                continue;
            }
            for &t in &g.triangles {
                if let Some(d) = moller_trumbore(origin, dir, &self.mesh.corners(t)) {
                    if best.map_or(true, |b| d < b.0) {
                        best = Some((d, t));
                    }
                }
            }
        }
        best
    }

    /// Ray parameter of the nearest hit through `pixel`, which for a ray with
    /// unit camera-frame z is the camera-frame depth.
    pub fn depth_at(
        &self,
        k: &CameraIntrinsics<f64>,
        pose: &CameraPose<f64>,
        pixel: &Vector2<f64>,
    ) -> Option<f64> {
        let dir = pose.rotation().inverse() * k.normalize(pixel);
        self.cast(&pose.center(), &dir).map(|h| h.0)
    }
}

fn slab_hit(o: &Vector3<f64>, inv: &Vector3<f64>, lo: &Vector3<f64>, hi: &Vector3<f64>, limit: f64) -> bool {
    let mut t0: f64 = 0.0;
    let mut t1 = limit;
    for a in 0..3 {
        let mut ta = (lo[a] - o[a]) * inv[a];
        let mut tb = (hi[a] - o[a]) * inv[a];
        if ta.is_nan() || tb.is_nan() {
            // ray parallel to and on the slab boundary
            if o[a] < lo[a] || o[a] > hi[a] {
                return false;
            }
            continue;
        }
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        // slightly padded, culling must never drop a true hit
        t0 = t0.max(ta - 1e-9 * ta.abs());
        t1 = t1.min(tb + 1e-9 * tb.abs());
        if t0 > t1 {
            return false;
        }
    }
    true
}

fn moller_trumbore(o: &Vector3<f64>, d: &Vector3<f64>, tri: &[Vector3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 * e1.norm() * e2.norm() * d.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some(t)
}

/// Exact depth raster by casting one ray per pixel centre; misses are invalid.
pub fn render_depth(
    mesh: &TriangleMesh,
    k: &CameraIntrinsics<f64>,
    pose: &CameraPose<f64>,
    image: ImageId,
) -> DepthMap {
    render_depth_with(&RayCaster::new(mesh), k, pose, image)
}

pub fn render_depth_with(
    caster: &RayCaster<'_>,
    k: &CameraIntrinsics<f64>,
    pose: &CameraPose<f64>,
    image: ImageId,
) -> DepthMap {
    let rows: Vec<Vec<f32>> = (0..k.height)
        .into_par_iter()
        .map(|row| {
            (0..k.width)
                .map(|col| {
                    let px = CameraIntrinsics::<f64>::pixel_center(col, row);
                    caster.depth_at(k, pose, &px).map_or(0.0, |d| d as f32)
                })
                .collect()
        })
        .collect();
    DepthMap {
        image,
        width: k.width,
        height: k.height,
        data: rows.concat(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCamera {
    pub id: ImageId,
    pub intrinsics: CameraIntrinsics<f64>,
    pub pose: CameraPose<f64>,
    /// Height of the camera centre above the ground plane.
    pub altitude_m: f64,
}

impl SynthCamera {
    pub fn recon_image(&self) -> ReconImage<f64> {
        ReconImage {
            id: self.id,
            intrinsics: self.intrinsics,
            pose: self.pose,
            gps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtPoint {
    pub position: Vector3<f64>,
    /// One flag per scene camera, in camera order.
    pub visible: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub mesh: TriangleMesh,
    pub cameras: Vec<SynthCamera>,
    pub points: Vec<GtPoint>,
}

/// Whether `p` is the first surface hit along the ray from the camera.
pub fn point_visible(caster: &RayCaster<'_>, cam: &SynthCamera, p: &Vector3<f64>) -> bool {
    let xc = cam.pose.transform_point(p);
    if !(xc.z > 0.0) {
        return false;
    }
    let px = cam.intrinsics.project_unchecked(&xc);
    if !cam.intrinsics.contains(&px) {
        return false;
    }
    match caster.depth_at(&cam.intrinsics, &cam.pose, &px) {
        Some(d) => (d - xc.z).abs() <= 1e-6 * xc.z.max(1.0),
        None => false,
    }
}

/// Area-weighted surface samples. Ground samples are restricted to the
/// square `|x|, |y| <= ground_half_extent_m`; downward faces are skipped.
pub fn sample_surface_points(
    mesh: &TriangleMesh,
    n: usize,
    ground_half_extent_m: f64,
    seed: u64,
) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ground_area = 4.0 * ground_half_extent_m * ground_half_extent_m;
    let mut weights = Vec::new();
    let mut has_ground = false;
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.corners(t);
        let normal = (b - a).cross(&(c - a));
        if mesh.triangle_ids[t] == 0 {
            has_ground = true;
            weights.push(0.0);
        } else if normal.z < -1e-9 * normal.norm() {
            weights.push(0.0);
        } else {
            weights.push(mesh.area(t));
        }
    }
    let building_area: f64 = weights.iter().sum();
    let total = building_area + if has_ground { ground_area } else { 0.0 };
    if !(total > 0.0) {
        return Vec::new();
    }
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let pick = rng.random_range(0.0..total);
            if pick >= building_area {
                let h = ground_half_extent_m;
                return Vector3::new(rng.random_range(-h..h), rng.random_range(-h..h), 0.0);
            }
            let t = cdf.partition_point(|&c| c <= pick).min(weights.len() - 1);
            let [a, b, c] = mesh.corners(t);
            let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            a + (b - a) * u + (c - a) * v
        })
        .collect()
}

impl SyntheticScene {
    /// Samples ground-truth points and records their visibility per camera.
    pub fn new(mesh: TriangleMesh, cameras: Vec<SynthCamera>, n_points: usize, ground_half_extent_m: f64, seed: u64) -> Self {
        let positions = sample_surface_points(&mesh, n_points, ground_half_extent_m, seed);
        let points = {
            let caster = RayCaster::new(&mesh);
            positions
                .par_iter()
                .map(|p| GtPoint {
                    position: *p,
                    visible: cameras.iter().map(|c| point_visible(&caster, c, p)).collect(),
                })
                .collect()
        };
        Self {
            mesh,
            cameras,
            points,
        }
    }

    pub fn camera_index(&self, id: ImageId) -> Option<usize> {
        self.cameras.iter().position(|c| c.id == id)
    }

    pub fn recon_images(&self) -> Vec<ReconImage<f64>> {
        self.cameras.iter().map(|c| c.recon_image()).collect()
    }

    pub fn frame(&self) -> FrameLabel {
        FrameLabel::SceneLocalMetric
    }

    pub fn render_all(&self) -> Vec<DepthMap> {
        let caster = RayCaster::new(&self.mesh);
        self.cameras
            .iter()
            .map(|c| render_depth_with(&caster, &c.intrinsics, &c.pose, c.id))
            .collect()
    }

    /// Indices of points visible in both cameras.
    pub fn covisible_points(&self, a: usize, b: usize) -> Vec<usize> {
        (0..self.points.len())
            .filter(|&i| self.points[i].visible[a] && self.points[i].visible[b])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthMatchConfig {
    pub n: usize,
    pub pixel_noise_px: f64,
    pub outlier_frac: f64,
    pub seed: u64,
}

impl Default for SynthMatchConfig {
    fn default() -> Self {
        Self {
            n: 500,
            pixel_noise_px: 0.0,
            outlier_frac: 0.0,
            seed: 0,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x1234_5678, |h, p| splitmix(h ^ splitmix(*p)))
}

/// Observed pixel of point `pi` in camera `ci`. The noise depends only on
/// (seed, image, point), so a keypoint looks the same in every match set.
fn observe(scene: &SyntheticScene, ci: usize, pi: usize, cfg: &SynthMatchConfig) -> Vector2<f64> {
    let cam = &scene.cameras[ci];
    let mut px = cam
        .intrinsics
        .project_unchecked(&cam.pose.transform_point(&scene.points[pi].position));
    if cfg.pixel_noise_px > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, cam.id.0 as u64, pi as u64]));
        let normal = Normal::new(0.0, cfg.pixel_noise_px).unwrap();
        px += Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng));
    }
    clamp_pixel(px, &cam.intrinsics)
}

/// Points detectable as keypoints in camera `ci`. A track-identity cell hit by
/// several visible points is ambiguous and yields no keypoint at all.
fn keypoint_owners(scene: &SyntheticScene, ci: usize, cfg: &SynthMatchConfig) -> Vec<bool> {
    let id = scene.cameras[ci].id;
    let mut first: HashMap<KeypointKey, usize> = HashMap::new();
    let mut owned = vec![false; scene.points.len()];
    for (pi, p) in scene.points.iter().enumerate() {
        if p.visible[ci] {
            let key = keypoint_key(id, &observe(scene, ci, pi, cfg));
            if let std::collections::hash_map::Entry::Vacant(e) = first.entry(key) {
                e.insert(pi);
                owned[pi] = true;
            } else {
                owned[first[&key]] = false;
            }
        }
    }
    owned
}

fn clamp_pixel(px: Vector2<f64>, k: &CameraIntrinsics<f64>) -> Vector2<f64> {
    let w = k.width as f64;
    let h = k.height as f64;
    Vector2::new(px.x.clamp(0.0, w * (1.0 - 1e-12)), px.y.clamp(0.0, h * (1.0 - 1e-12)))
}

/// Matches between two scene cameras plus, per correspondence, the source
/// point index (`None` for injected outliers).
pub fn synth_matches_labeled(
    scene: &SyntheticScene,
    a: ImageId,
    b: ImageId,
    cfg: &SynthMatchConfig,
) -> Result<(MatchSet<f64>, Vec<Option<usize>>)> {
    let ia = scene
        .camera_index(a)
        .ok_or_else(|| domain(format!("unknown camera {a}")))?;
    let ib = scene
        .camera_index(b)
        .ok_or_else(|| domain(format!("unknown camera {b}")))?;
    if !(0.0..=1.0).contains(&cfg.outlier_frac) || !(cfg.pixel_noise_px >= 0.0) {
        return Err(domain("outlier fraction must be in [0, 1] and noise non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[cfg.seed, a.0 as u64, b.0 as u64, 1]));
    let owned_a = keypoint_owners(scene, ia, cfg);
    let owned_b = keypoint_owners(scene, ib, cfg);
    let mut chosen: Vec<usize> = scene
        .covisible_points(ia, ib)
        .into_iter()
        .filter(|&pi| owned_a[pi] && owned_b[pi])
        .collect();
    if chosen.is_empty() {
        log::warn!("cameras {a} and {b} share no visible surface points");
        return Ok((MatchSet::new(a, b), Vec::new()));
    }
    if chosen.len() > cfg.n {
        let mut picked = rand::seq::index::sample(&mut rng, chosen.len(), cfg.n).into_vec();
        picked.sort_unstable();
        chosen = picked.into_iter().map(|i| chosen[i]).collect();
    }
    let mut set = MatchSet::new(a, b);
    let mut labels = Vec::with_capacity(chosen.len());
    for &pi in &chosen {
        set.push(observe(scene, ia, pi, cfg), observe(scene, ib, pi, cfg), 1.0);
        labels.push(Some(pi));
    }
    let n_out = (cfg.outlier_frac * chosen.len() as f64).round() as usize;
    let ka = scene.cameras[ia].intrinsics;
    for idx in rand::seq::index::sample(&mut rng, chosen.len(), n_out).into_vec() {
        set.correspondences[idx].pixel_a = Vector2::new(
            rng.random_range(0.0..ka.width as f64),
            rng.random_range(0.0..ka.height as f64),
        );
        labels[idx] = None;
    }
    Ok((set, labels))
}

pub fn synth_matches(
    scene: &SyntheticScene,
    a: ImageId,
    b: ImageId,
    cfg: &SynthMatchConfig,
) -> Result<MatchSet<f64>> {
    synth_matches_labeled(scene, a, b, cfg).map(|(m, _)| m)
}

/// Camera at `eye` looking at `target` with upright images.
pub fn camera_looking_at(
    id: ImageId,
    eye: Vector3<f64>,
    target: Vector3<f64>,
    hfov_deg: f64,
    width: u32,
    height: u32,
) -> Result<SynthCamera> {
    Ok(SynthCamera {
        id,
        intrinsics: CameraIntrinsics::from_hfov(hfov_deg, width, height)?,
        pose: look_at(&eye, &target, &-Vector3::z())?,
        altitude_m: eye.z,
    })
}

/// Cameras on a ring around `center` at random azimuths, looking inwards.
#[allow(clippy::too_many_arguments)]
pub fn ring_cameras(
    first_id: u32,
    n: usize,
    center: Vector3<f64>,
    radius_m: (f64, f64),
    altitude_m: (f64, f64),
    hfov_deg: f64,
    size: (u32, u32),
    seed: u64,
) -> Result<Vec<SynthCamera>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let r = rng.random_range(radius_m.0..=radius_m.1);
            let alt = rng.random_range(altitude_m.0..=altitude_m.1);
            let eye = Vector3::new(center.x + r * az.cos(), center.y + r * az.sin(), alt);
            let target = center + Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 0.0);
            camera_looking_at(ImageId(first_id + i as u32), eye, target, hfov_deg, size.0, size.1)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkConfig {
    pub city: CityConfig,
    pub ground_cameras: usize,
    pub aerial_cameras: usize,
    pub aerial_altitude_range_m: (f64, f64),
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
    pub points: usize,
    pub noisy: SynthMatchConfig,
    /// Pairs sharing fewer points get no match files.
    pub min_shared_points: usize,
    pub seed: u64,
}

pub const GROUND_CAMERA_HEIGHT_M: f64 = 1.7;

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            city: CityConfig::default(),
            ground_cameras: 8,
            aerial_cameras: 8,
            aerial_altitude_range_m: (30.0, 350.0),
            width: 160,
            height: 120,
            hfov_deg: 60.0,
            points: 6000,
            noisy: SynthMatchConfig {
                n: 400,
                pixel_noise_px: 1.0,
                outlier_frac: 0.2,
                seed: 1,
            },
            min_shared_points: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkScene {
    pub scene: SyntheticScene,
    pub depths: Vec<DepthMap>,
    pub noiseless: Vec<MatchSet<f64>>,
    pub noisy: Vec<MatchSet<f64>>,
    /// Ground-truth relative pose (b relative to a) for every matched pair.
    pub pair_poses: Vec<(ImageId, ImageId, CameraPose<f64>)>,
}

fn inside_building(mesh: &TriangleMesh, p: &Vector3<f64>, margin: f64) -> bool {
    let caster = RayCaster::new(mesh);
    caster.groups.iter().zip(0..).any(|(g, gi)| {
        let id = mesh.triangle_ids[g.triangles[0]];
        let _ = gi;
        id != 0
            && p.x >= g.lo.x - margin
            && p.x <= g.hi.x + margin
            && p.y >= g.lo.y - margin
            && p.y <= g.hi.y + margin
    })
}

/// Complete desk-scale scene: street-level and aerial cameras, depth, matches.
pub fn make_benchmark_scene(cfg: &BenchmarkConfig) -> Result<BenchmarkScene> {
    let mesh = generate_city(&cfg.city)?;
    let (alo, ahi) = cfg.aerial_altitude_range_m;
    if !(alo >= 30.0 && alo <= ahi) {
        return Err(domain("aerial altitudes must be at least 30 m"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = cfg.city.extent_m / 2.0;
    let mut cameras = Vec::new();
    let mut attempts = 0;
    while cameras.len() < cfg.ground_cameras {
        attempts += 1;
        if attempts > 10_000 {
            return Err(domain("could not place ground cameras in the streets"));
        }
        let eye = Vector3::new(
            rng.random_range(-half..half),
            rng.random_range(-half..half),
            GROUND_CAMERA_HEIGHT_M,
        );
        if inside_building(&mesh, &eye, 3.0) {
            continue;
        }
        // look towards the city centre, slightly upwards at the facades
        let to_center = Vector3::new(-eye.x, -eye.y, 0.0);
        let yaw = to_center.y.atan2(to_center.x) + rng.random_range(-0.6..0.6);
        let target = eye + Vector3::new(yaw.cos() * 50.0, yaw.sin() * 50.0, rng.random_range(3.0..10.0));
        cameras.push(camera_looking_at(
            ImageId(cameras.len() as u32),
            eye,
            target,
            cfg.hfov_deg,
            cfg.width,
            cfg.height,
        )?);
    }
    for _ in 0..cfg.aerial_cameras {
        let alt = (rng.random_range(alo.ln()..=ahi.ln())).exp().clamp(alo, ahi);
        let az = rng.random_range(0.0..std::f64::consts::TAU);
        let standoff = alt + 10.0;
        let target = Vector3::new(rng.random_range(-half..half) * 0.5, rng.random_range(-half..half) * 0.5, 0.0);
        let eye = target + Vector3::new(standoff * az.cos(), standoff * az.sin(), alt);
        cameras.push(camera_looking_at(
            ImageId(cameras.len() as u32),
            eye,
            target,
            cfg.hfov_deg,
            cfg.width,
            cfg.height,
        )?);
    }
    let scene = SyntheticScene::new(mesh, cameras, cfg.points, half * 1.5, cfg.seed ^ 0x5eed);
    let depths = scene.render_all();
    let mut noiseless = Vec::new();
    let mut noisy = Vec::new();
    let mut pair_poses = Vec::new();
    let clean = SynthMatchConfig {
        n: cfg.noisy.n,
        pixel_noise_px: 0.0,
        outlier_frac: 0.0,
        seed: cfg.noisy.seed,
    };
    for a in 0..scene.cameras.len() {
        for b in (a + 1)..scene.cameras.len() {
            if scene.covisible_points(a, b).len() < cfg.min_shared_points {
                continue;
            }
            let (ida, idb) = (scene.cameras[a].id, scene.cameras[b].id);
            noiseless.push(synth_matches(&scene, ida, idb, &clean)?);
            noisy.push(synth_matches(&scene, ida, idb, &cfg.noisy)?);
            pair_poses.push((
                ida,
                idb,
                crate::geom::relative_pose(&scene.cameras[a].pose, &scene.cameras[b].pose),
            ));
        }
    }
    Ok(BenchmarkScene {
        scene,
        depths,
        noiseless,
        noisy,
        pair_poses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationBenchmarkConfig {
    pub city: CityConfig,
    pub map_cameras: usize,
    pub queries: usize,
    pub size: (u32, u32),
    pub hfov_deg: f64,
    pub points: usize,
    pub matches_per_pair: usize,
    /// Applied to every observation, map and query alike.
    pub pixel_noise_px: f64,
    /// Applied to query-to-map matches only, on the query side.
    pub query_outlier_frac: f64,
    pub shortlist: usize,
    pub seed: u64,
}

impl Default for LocalizationBenchmarkConfig {
    fn default() -> Self {
        Self {
            city: CityConfig { blocks: 9, ..Default::default() },
            map_cameras: 30,
            queries: 10,
            size: (320, 240),
            hfov_deg: 60.0,
            points: 8000,
            matches_per_pair: 400,
            pixel_noise_px: 0.0,
            query_outlier_frac: 0.0,
            shortlist: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationBenchmark {
    pub scene: SyntheticScene,
    /// Map triangulated from map-to-map matches at ground-truth poses.
    pub map: crate::recon::SceneReconstruction<f64>,
    pub queries: Vec<crate::sfm::LocalizationQuery<f64>>,
    pub query_truth: Vec<CameraPose<f64>>,
}

/// Map cameras and held-out queries around a box city. Each query's
/// shortlist holds the map cameras sharing the most surface points with it.
pub fn make_localization_benchmark(cfg: &LocalizationBenchmarkConfig) -> Result<LocalizationBenchmark> {
    let mesh = generate_city(&cfg.city)?;
    let ring = |first: u32, n: usize, seed: u64| {
        ring_cameras(first, n, Vector3::zeros(), (150.0, 250.0), (40.0, 150.0), cfg.hfov_deg, cfg.size, seed)
    };
    let mut cameras = ring(0, cfg.map_cameras, cfg.seed)?;
    cameras.extend(ring(cfg.map_cameras as u32, cfg.queries, cfg.seed ^ 0xa5a5)?);
    let half = cfg.city.extent_m * 0.75;
    let scene = SyntheticScene::new(mesh, cameras, cfg.points, half, cfg.seed.wrapping_add(17));
    let map_cfg = SynthMatchConfig {
        n: cfg.matches_per_pair,
        pixel_noise_px: cfg.pixel_noise_px,
        outlier_frac: 0.0,
        seed: cfg.seed,
    };
    let query_cfg = SynthMatchConfig { outlier_frac: cfg.query_outlier_frac, ..map_cfg };
    let m = cfg.map_cameras;
    let mut map_matches = Vec::new();
    for a in 0..m {
        for b in (a + 1)..m {
            if scene.covisible_points(a, b).len() >= 12 {
                map_matches.push(synth_matches(&scene, scene.cameras[a].id, scene.cameras[b].id, &map_cfg)?);
            }
        }
    }
    let map_images: Vec<ReconImage<f64>> = scene.cameras[..m].iter().map(|c| c.recon_image()).collect();
    let map = crate::sfm::triangulate_scene(
        &map_matches,
        map_images,
        FrameLabel::SceneLocalMetric,
        &Default::default(),
    )?;
    let mut queries = Vec::new();
    let mut query_truth = Vec::new();
    for q in m..scene.cameras.len() {
        let mut ranked: Vec<(usize, usize)> = (0..m).map(|j| (scene.covisible_points(q, j).len(), j)).collect();
        ranked.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        let shortlist: Vec<usize> = ranked
            .iter()
            .take(cfg.shortlist)
            .filter(|r| r.0 > 0)
            .map(|r| r.1)
            .collect();
        let qid = scene.cameras[q].id;
        let mut matches = Vec::new();
        for &j in &shortlist {
            matches.push(synth_matches(&scene, qid, scene.cameras[j].id, &query_cfg)?);
        }
        queries.push(crate::sfm::LocalizationQuery {
            image: qid,
            intrinsics: scene.cameras[q].intrinsics,
            shortlist: shortlist.iter().map(|&j| scene.cameras[j].id).collect(),
            matches,
        });
        query_truth.push(scene.cameras[q].pose);
    }
    Ok(LocalizationBenchmark {
        scene,
        map,
        queries,
        query_truth,
    })
}

/// Geodetic tag of a point given in the east-north-up frame at `anchor`.
pub fn enu_to_geodetic(anchor: &GeodeticCoord<f64>, p: &Vector3<f64>) -> Result<GeodeticCoord<f64>> {
    let to_enu = ecef_to_enu_transform(anchor)?;
    ecef_to_geodetic(&EcefCoord::from_vector(&to_enu.inverse().apply(p)))
}

/// Random similarity with scale drawn log-uniformly from `scale_range`.
pub fn random_similarity(scale_range: (f64, f64), max_translation_m: f64, seed: u64) -> Result<Sim3Transform<f64>> {
    let (lo, hi) = scale_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(domain("scale range must be positive and ordered"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if hi > lo { rng.random_range(lo.ln()..hi.ln()).exp() } else { lo };
    let q = UnitQuaternion::from_quaternion(Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ));
    let m = max_translation_m;
    let t = Vector3::new(rng.random_range(-m..=m), rng.random_range(-m..=m), rng.random_range(-m..=m));
    Sim3Transform::new(scale, q, t)
}

/// A stand-in network prediction: ground truth with Gaussian noise and gross
/// outliers, then mapped through `t`.
pub fn corrupt_pointmap(gt: &Pointmap, t: &Sim3Transform<f64>, noise_m: f64, outlier_frac: f64, seed: u64) -> Result<Pointmap> {
    if !(noise_m >= 0.0) || !(0.0..=1.0).contains(&outlier_frac) {
        return Err(domain("noise must be non-negative and the outlier fraction in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_m.max(f64::MIN_POSITIVE)).unwrap();
    let points = gt
        .points
        .iter()
        .zip(&gt.valid)
        .map(|(p, v)| {
            if !v {
                return *p;
            }
            let q = if rng.random_bool(outlier_frac) {
                p + Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(5.0..30.0))
            } else if noise_m > 0.0 {
                p + Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng))
            } else {
                *p
            };
            t.apply(&q)
        })
        .collect();
    Pointmap::new(gt.width, gt.height, points, gt.valid.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sfm::build_tracks;
    use std::collections::{BTreeSet, HashMap};

    #[test]
    fn one_block_tessellation() {
        let mesh = generate_city(&CityConfig { blocks: 1, ..Default::default() }).unwrap();
        assert_eq!(mesh.triangles.len(), 14);
        mesh.validate().unwrap();
        assert!(generate_city(&CityConfig { blocks: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn deterministic_and_above_ground() {
        let cfg = CityConfig { blocks: 9, seed: 4, ..Default::default() };
        let a = generate_city(&cfg).unwrap();
        assert_eq!(a, generate_city(&cfg).unwrap());
        assert_ne!(a, generate_city(&CityConfig { seed: 5, ..cfg }).unwrap());
        for (t, id) in a.triangle_ids.iter().enumerate() {
            if *id != 0 {
                for v in a.corners(t) {
                    assert!(v.z >= 0.0);
                }
            }
        }
        a.validate().unwrap();
    }

    #[test]
    fn boxes_are_closed_and_outward() {
        let mesh = generate_city(&CityConfig { blocks: 4, seed: 1, ..Default::default() }).unwrap();
        for b in 1..=4u32 {
            let tris: Vec<usize> = (0..mesh.triangles.len()).filter(|&t| mesh.triangle_ids[t] == b).collect();
            let centroid = tris.iter().flat_map(|&t| mesh.corners(t)).sum::<Vector3<f64>>() / 36.0;
            let mut edges: HashMap<(u32, u32), i32> = HashMap::new();
            for &t in &tris {
                let [a, bb, c] = mesh.corners(t);
                let n = (bb - a).cross(&(c - a));
                assert!(n.dot(&(a - centroid)) > 0.0, "inward face");
                let tri = mesh.triangles[t];
                for k in 0..3 {
                    let (u, v) = (tri[k], tri[(k + 1) % 3]);
                    *edges.entry((u.min(v), u.max(v))).or_default() += if u < v { 1 } else { -1 };
                }
            }
            // every edge used once in each direction
            assert!(edges.values().all(|&c| c == 0));
        }
    }

    #[test]
    fn downward_camera_over_ground() {
        let mesh = generate_city(&CityConfig { blocks: 1, height_range_m: (1.0, 1.0), ..Default::default() }).unwrap();
        // far from the single building, well inside the ground square
        let eye = Vector3::new(900.0, 900.0, 5.0);
        let cam = camera_looking_at(ImageId(0), eye, Vector3::new(900.0, 900.0, 0.0), 60.0, 32, 24);
        // looking straight down needs a horizontal orientation hint
        assert!(cam.is_err());
        let k = CameraIntrinsics::from_hfov(60.0, 32, 24).unwrap();
        let pose = look_at(&eye, &Vector3::new(900.0, 900.0, 0.0), &Vector3::y()).unwrap();
        let d = render_depth(&mesh, &k, &pose, ImageId(0));
        assert!(d.data.iter().all(|&v| v == 5.0));
        // looking up at the sky misses everything
        let up = look_at(&eye, &Vector3::new(900.0, 900.0, 10.0), &Vector3::y()).unwrap();
        assert_eq!(render_depth(&mesh, &k, &up, ImageId(1)).valid_count(), 0);
    }

    #[test]
    fn vertex_depth_oracle() {
        let mesh = generate_city(&CityConfig { blocks: 9, seed: 2, ..Default::default() }).unwrap();
        let caster = RayCaster::new(&mesh);
        let cams = ring_cameras(0, 10, Vector3::zeros(), (200.0, 300.0), (80.0, 200.0), 60.0, (64, 48), 3).unwrap();
        let mut checked = 0;
        for c in &cams {
            for v in &mesh.vertices[4..] {
                if !point_visible(&caster, c, v) {
                    continue;
                }
                let xc = c.pose.transform_point(v);
                let px = c.intrinsics.project_unchecked(&xc);
                let d = caster.depth_at(&c.intrinsics, &c.pose, &px).unwrap();
                assert!((d - xc.z).abs() < 1e-5);
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn depth_respects_occlusion() {
        let mesh = generate_city(&CityConfig { blocks: 9, seed: 3, ..Default::default() }).unwrap();
        let caster = RayCaster::new(&mesh);
        let cams = ring_cameras(0, 4, Vector3::zeros(), (150.0, 250.0), (20.0, 120.0), 70.0, (40, 30), 4).unwrap();
        for c in &cams {
            let d = render_depth_with(&caster, &c.intrinsics, &c.pose, c.id);
            for row in 0..30 {
                for col in 0..40 {
                    let px = CameraIntrinsics::<f64>::pixel_center(col, row);
                    let dir = c.pose.rotation().inverse() * c.intrinsics.normalize(&px);
                    let got = d.get(col, row);
                    // brute force over every triangle
                    let mut best = f64::INFINITY;
                    for t in 0..mesh.triangles.len() {
                        if let Some(h) = moller_trumbore(&c.pose.center(), &dir, &mesh.corners(t)) {
                            best = best.min(h);
                        }
                    }
                    match got {
                        Some(v) => assert_eq!(v, best as f32),
                        None => assert!(best.is_infinite()),
                    }
                }
            }
        }
    }

    fn small_scene() -> SyntheticScene {
        let mesh = generate_city(&CityConfig { blocks: 9, seed: 7, ..Default::default() }).unwrap();
        let cams = ring_cameras(0, 8, Vector3::zeros(), (150.0, 220.0), (60.0, 150.0), 60.0, (320, 240), 9).unwrap();
        SyntheticScene::new(mesh, cams, 3000, 150.0, 11)
    }

    #[test]
    fn visibility_flags_match_ray_casting() {
        let s = small_scene();
        let caster = RayCaster::new(&s.mesh);
        for p in s.points.iter().take(300) {
            for (ci, c) in s.cameras.iter().enumerate() {
                assert_eq!(p.visible[ci], point_visible(&caster, c, &p.position));
            }
        }
        assert!(s.points.iter().any(|p| p.visible.iter().all(|v| !v)));
    }

    #[test]
    fn noiseless_matches_triangulate_exactly() {
        let s = small_scene();
        let (m, labels) = synth_matches_labeled(&s, ImageId(0), ImageId(1), &SynthMatchConfig::default()).unwrap();
        assert!(m.len() > 20);
        let cams = crate::sfm::camera_map(&s.recon_images());
        for (c, l) in m.correspondences.iter().zip(&labels) {
            let track = crate::sfm::Track {
                observations: vec![
                    crate::recon::Observation { image: ImageId(0), pixel: c.pixel_a },
                    crate::recon::Observation { image: ImageId(1), pixel: c.pixel_b },
                ],
                point: None,
            };
            let loose = crate::sfm::TriangulationConfig { min_angle_deg: 0.0, ..Default::default() };
            let p = crate::sfm::triangulate_track(&track, &cams, &loose).unwrap();
            assert!((p - s.points[l.unwrap()].position).norm() < 1e-6);
        }
    }

    #[test]
    fn inliers_satisfy_epipolar_constraint() {
        let s = small_scene();
        let cfg = SynthMatchConfig { pixel_noise_px: 0.5, outlier_frac: 0.3, ..Default::default() };
        let (m, labels) = synth_matches_labeled(&s, ImageId(2), ImageId(3), &cfg).unwrap();
        let rel = crate::geom::relative_pose(&s.cameras[2].pose, &s.cameras[3].pose);
        let e = rel.translation().cross_matrix() * rel.rotation_matrix();
        let (ka, kb) = (s.cameras[2].intrinsics, s.cameras[3].intrinsics);
        let mut outliers = 0;
        for (c, l) in m.correspondences.iter().zip(&labels) {
            if l.is_none() {
                outliers += 1;
                continue;
            }
            let xa = ka.normalize(&c.pixel_a);
            let xb = kb.normalize(&c.pixel_b);
            // distance of xb to the epipolar line, in pixels
            let line = e * xa;
            let dist = xb.dot(&line).abs() / (line.x * line.x + line.y * line.y).sqrt() * kb.fx;
            assert!(dist < 10.0 * 0.5 * 2.0_f64.sqrt(), "{dist}");
        }
        assert_eq!(outliers, (0.3 * m.len() as f64).round() as usize);
        assert_eq!(m, synth_matches(&s, ImageId(2), ImageId(3), &cfg).unwrap());
    }

    #[test]
    fn disjoint_views_give_empty_set() {
        let mesh = generate_city(&CityConfig { blocks: 4, seed: 1, ..Default::default() }).unwrap();
        let a = camera_looking_at(ImageId(0), Vector3::new(0.0, -300.0, 50.0), Vector3::new(0.0, -600.0, 0.0), 60.0, 64, 48).unwrap();
        let b = camera_looking_at(ImageId(1), Vector3::new(0.0, 300.0, 50.0), Vector3::new(0.0, 600.0, 0.0), 60.0, 64, 48).unwrap();
        let s = SyntheticScene::new(mesh, vec![a, b], 2000, 900.0, 0);
        assert!(synth_matches(&s, ImageId(0), ImageId(1), &Default::default()).unwrap().is_empty());
    }

    #[test]
    fn noiseless_tracks_recover_generator_assignment() {
        let s = small_scene();
        let mut sets = Vec::new();
        let mut labels = Vec::new();
        for a in 0..s.cameras.len() as u32 {
            for b in (a + 1)..s.cameras.len() as u32 {
                let all = SynthMatchConfig { n: usize::MAX, ..Default::default() };
                let (m, l) = synth_matches_labeled(&s, ImageId(a), ImageId(b), &all).unwrap();
                sets.push(m);
                labels.push(l);
            }
        }
        // expected: one group of (image, pixel) per generator point
        let cfg = SynthMatchConfig { n: usize::MAX, ..Default::default() };
        let mut expected: HashMap<usize, BTreeSet<u32>> = HashMap::new();
        for (m, l) in sets.iter().zip(&labels) {
            for pi in l.iter().flatten() {
                expected.entry(*pi).or_default().extend([m.image_a.0, m.image_b.0]);
            }
        }
        let tracks = build_tracks(&sets);
        assert_eq!(tracks.len(), expected.len());
        for t in &tracks {
            let first = &t.observations[0];
            let ci = s.camera_index(first.image).unwrap();
            let pi = *expected
                .keys()
                .find(|&&pi| s.points[pi].visible[ci] && observe(&s, ci, pi, &cfg) == first.pixel)
                .expect("track maps to a generator point");
            let ims: BTreeSet<u32> = t.observations.iter().map(|o| o.image.0).collect();
            assert_eq!(ims, expected[&pi]);
            for o in &t.observations {
                assert_eq!(o.pixel, observe(&s, s.camera_index(o.image).unwrap(), pi, &cfg));
            }
        }
    }

    #[test]
    fn enu_tags_round_trip() {
        let anchor = GeodeticCoord::new(47.3769, 8.5417, 408.0).unwrap();
        let p = Vector3::new(120.0, -35.0, 80.0);
        let g = enu_to_geodetic(&anchor, &p).unwrap();
        let back = ecef_to_enu_transform(&anchor)
            .unwrap()
            .apply(&crate::geom::geodetic_to_ecef(&g).unwrap().to_vector());
        assert!((back - p).norm() < 1e-6);
        assert!((g.altitude_m - 488.0).abs() < 0.01);
    }

    #[test]
    fn similarity_and_corruption_are_seeded() {
        let a = random_similarity((0.5, 2.0), 10.0, 3).unwrap();
        assert_eq!(a, random_similarity((0.5, 2.0), 10.0, 3).unwrap());
        assert!((0.5..=2.0).contains(&a.scale()));
        let gt = Pointmap::new(2, 2, vec![Vector3::new(1.0, 2.0, 3.0); 4], vec![true, true, false, true]).unwrap();
        let clean = corrupt_pointmap(&gt, &a, 0.0, 0.0, 1).unwrap();
        assert!((clean.points[0] - a.apply(&gt.points[0])).norm() < 1e-12);
        assert_eq!(clean.points[2], gt.points[2]);
        assert_eq!(corrupt_pointmap(&gt, &a, 0.1, 0.5, 9).unwrap(), corrupt_pointmap(&gt, &a, 0.1, 0.5, 9).unwrap());
    }
}
