//! On-disk synthetic benchmark: everything the CLI pipeline consumes.

use std::collections::BTreeMap;
use std::path::Path;

use cvforge_core::eval::Pointmap;
use cvforge_core::geom::relative_pose;
use cvforge_core::synth::{
    corrupt_pointmap, enu_to_geodetic, make_benchmark_scene, random_similarity, BenchmarkConfig,
    BenchmarkScene, CityConfig, SynthMatchConfig,
};
use cvforge_core::{CameraPose, FrameLabel, GeodeticCoord, ImageId};
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fsutil::{read_json, write_json};
use crate::manifest::{write_manifest, GpsRecord, ImageSource, ManifestImage, SceneManifest};
use crate::matches::write_match_dir;
use crate::mesh::write_mesh;
use crate::raster::{write_depth, write_pointmap};
use crate::shortlists::{write_shortlists, ShortlistEntry, Shortlists};

pub const PAIR_POSES_VERSION: &str = "cvforge-pair-poses/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSceneConfig {
    pub blocks: usize,
    pub height_range_m: [f64; 2],
    pub extent_m: f64,
    pub ground_cameras: usize,
    pub aerial_cameras: usize,
    pub aerial_altitude_range_m: [f64; 2],
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
    pub points: usize,
    pub matches_per_pair: usize,
    pub pixel_noise_px: f64,
    pub outlier_frac: f64,
    pub min_shared_points: usize,
    pub shortlist: usize,
    pub pointmap_pairs: usize,
    pub pointmap_noise_m: f64,
    pub pointmap_outlier_frac: f64,
    pub anchor: AnchorConfig,
}

impl Default for SynthSceneConfig {
    fn default() -> Self {
        let b = BenchmarkConfig::default();
        Self {
            blocks: b.city.blocks,
            height_range_m: [b.city.height_range_m.0, b.city.height_range_m.1],
            extent_m: b.city.extent_m,
            ground_cameras: b.ground_cameras,
            aerial_cameras: b.aerial_cameras,
            aerial_altitude_range_m: [b.aerial_altitude_range_m.0, b.aerial_altitude_range_m.1],
            width: b.width,
            height: b.height,
            hfov_deg: b.hfov_deg,
            points: b.points,
            matches_per_pair: b.noisy.n,
            pixel_noise_px: b.noisy.pixel_noise_px,
            outlier_frac: b.noisy.outlier_frac,
            min_shared_points: b.min_shared_points,
            shortlist: 5,
            pointmap_pairs: 6,
            pointmap_noise_m: 0.05,
            pointmap_outlier_frac: 0.1,
            anchor: AnchorConfig {
                latitude_deg: 47.3769,
                longitude_deg: 8.5417,
                altitude_m: 408.0,
            },
        }
    }
}

impl SynthSceneConfig {
    pub fn benchmark_config(&self, seed: u64) -> BenchmarkConfig {
        BenchmarkConfig {
            city: CityConfig {
                blocks: self.blocks,
                height_range_m: (self.height_range_m[0], self.height_range_m[1]),
                extent_m: self.extent_m,
                ground_half_extent_m: CityConfig::default().ground_half_extent_m.max(self.extent_m * 2.0),
                seed,
            },
            ground_cameras: self.ground_cameras,
            aerial_cameras: self.aerial_cameras,
            aerial_altitude_range_m: (self.aerial_altitude_range_m[0], self.aerial_altitude_range_m[1]),
            width: self.width,
            height: self.height,
            hfov_deg: self.hfov_deg,
            points: self.points,
            noisy: SynthMatchConfig {
                n: self.matches_per_pair,
                pixel_noise_px: self.pixel_noise_px,
                outlier_frac: self.outlier_frac,
                seed: seed.wrapping_add(1),
            },
            min_shared_points: self.min_shared_points,
            seed,
        }
    }
}

pub fn read_synth_config(path: &Path) -> Result<SynthSceneConfig> {
    read_json(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPoseRecord {
    pub a: u32,
    pub b: u32,
    /// Pose of b relative to a: maps a's camera frame into b's.
    pub pose_qwxyz: [f64; 4],
    pub t_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPosesFile {
    pub version: String,
    pub pairs: Vec<PairPoseRecord>,
}

pub fn read_pair_poses(path: &Path) -> Result<Vec<(ImageId, ImageId, CameraPose)>> {
    let f: PairPosesFile = read_json(path)?;
    crate::fsutil::check_version(path, &f.version, PAIR_POSES_VERSION)?;
    Ok(f.pairs
        .iter()
        .map(|r| (ImageId(r.a), ImageId(r.b), CameraPose::from_wxyz(r.pose_qwxyz, r.t_m.into())))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub cameras: usize,
    pub ground_cameras: usize,
    pub matched_pairs: usize,
    pub map_images: Vec<u32>,
    pub query_images: Vec<u32>,
    pub pointmap_pairs: Vec<String>,
}

pub fn depth_rel_path(id: ImageId) -> String {
    format!("depth/{id}.cvd")
}

/// Map takes every aerial camera and the even-indexed ground cameras; the
/// odd-indexed ground cameras are localization queries.
pub fn split_map_queries(ground: usize, total: usize) -> (Vec<usize>, Vec<usize>) {
    let map = (0..total).filter(|&i| i >= ground || i % 2 == 0).collect();
    let queries = (0..ground).filter(|i| i % 2 == 1).collect();
    (map, queries)
}

fn manifest_for(bench: &BenchmarkScene, idx: &[usize], anchor: &GeodeticCoord, with_pose: bool) -> Result<SceneManifest> {
    let mut images = Vec::new();
    for &i in idx {
        let c = &bench.scene.cameras[i];
        let mut im = ManifestImage::new(c.id, &c.intrinsics, with_pose.then_some(&c.pose), ImageSource::PseudoSynthetic);
        im.altitude_above_ground_m = Some(c.altitude_m);
        im.gps = Some(GpsRecord::from_geodetic(&enu_to_geodetic(anchor, &c.pose.center())?));
        im.depth_file = Some(depth_rel_path(c.id));
        images.push(im);
    }
    let mut m = SceneManifest::new(FrameLabel::SceneLocalMetric, images);
    m.mesh_file = Some("mesh.json".into());
    m.notes = vec!["procedural box city; frame is east-north-up at the gps anchor".into()];
    Ok(m)
}

pub fn write_benchmark(dir: &Path, cfg: &SynthSceneConfig, seed: u64) -> Result<BenchmarkSummary> {
    let bcfg = cfg.benchmark_config(seed);
    let bench = make_benchmark_scene(&bcfg)?;
    let anchor = GeodeticCoord::new(cfg.anchor.latitude_deg, cfg.anchor.longitude_deg, cfg.anchor.altitude_m)?;
    let scene = &bench.scene;
    let n = scene.cameras.len();

    write_mesh(&dir.join("mesh.json"), &scene.mesh)?;
    for d in &bench.depths {
        write_depth(&dir.join(depth_rel_path(d.image)), d)?;
    }
    let all: Vec<usize> = (0..n).collect();
    write_manifest(&dir.join("manifest.json"), &manifest_for(&bench, &all, &anchor, true)?)?;

    let (map_idx, query_idx) = split_map_queries(bcfg.ground_cameras, n);
    write_manifest(&dir.join("map.json"), &manifest_for(&bench, &map_idx, &anchor, true)?)?;
    let mut queries = manifest_for(&bench, &query_idx, &anchor, false)?;
    for im in &mut queries.images {
        im.depth_file = None;
    }
    queries.mesh_file = None;
    write_manifest(&dir.join("queries.json"), &queries)?;

    // the same cameras in an arbitrary frame of unknown scale, as SfM would give
    let scramble = random_similarity((0.2, 5.0), 100.0, seed ^ 0x10ca1)?.inverse();
    let mut local = manifest_for(&bench, &all, &anchor, true)?;
    for (im, c) in local.images.iter_mut().zip(&scene.cameras) {
        im.set_pose(Some(&scramble.transform_pose(&c.pose)));
        im.depth_file = None;
    }
    local.frame = FrameLabel::Local.as_str().into();
    local.mesh_file = None;
    local.notes = vec!["cameras in an arbitrary similarity frame; gps tags are exact".into()];
    write_manifest(&dir.join("local.json"), &local)?;

    let mut entries = Vec::new();
    for &q in &query_idx {
        let mut ranked: Vec<(usize, usize)> = map_idx
            .iter()
            .map(|&j| (scene.covisible_points(q, j).len(), j))
            .filter(|r| r.0 >= bcfg.min_shared_points)
            .collect();
        ranked.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        entries.push(ShortlistEntry {
            query: scene.cameras[q].id.0,
            map_images: ranked.iter().take(cfg.shortlist).map(|r| scene.cameras[r.1].id.0).collect(),
        });
    }
    write_shortlists(&dir.join("shortlists.json"), &Shortlists::new(entries))?;

    write_match_dir(&dir.join("matches/noiseless"), &bench.noiseless)?;
    write_match_dir(&dir.join("matches/noisy"), &bench.noisy)?;
    write_json(
        &dir.join("gt_pair_poses.json"),
        &PairPosesFile {
            version: PAIR_POSES_VERSION.into(),
            pairs: bench
                .pair_poses
                .iter()
                .map(|(a, b, p)| {
                    let t = p.translation();
                    PairPoseRecord {
                        a: a.0,
                        b: b.0,
                        pose_qwxyz: p.wxyz(),
                        t_m: [t.x, t.y, t.z],
                    }
                })
                .collect(),
        },
    )?;

    let index: BTreeMap<ImageId, usize> = scene.cameras.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    let mut pm_names = Vec::new();
    for (k, (a, b, _)) in bench.pair_poses.iter().take(cfg.pointmap_pairs).enumerate() {
        let (ca, cb) = (&scene.cameras[index[a]], &scene.cameras[index[b]]);
        let gt = Pointmap::from_depth(&bench.depths[index[b]], &cb.intrinsics, &relative_pose(&ca.pose, &cb.pose))?;
        let t = random_similarity((0.1, 10.0), 50.0, seed.wrapping_add(1000 + k as u64))?;
        let pred = corrupt_pointmap(&gt, &t, cfg.pointmap_noise_m, cfg.pointmap_outlier_frac, seed.wrapping_add(2000 + k as u64))?;
        let name = format!("{a}_{b}");
        write_pointmap(&dir.join(format!("pointmaps/gt/{name}.cvp")), &gt)?;
        write_pointmap(&dir.join(format!("pointmaps/pred/{name}.cvp")), &pred)?;
        pm_names.push(name);
    }

    let summary = BenchmarkSummary {
        cameras: n,
        ground_cameras: bcfg.ground_cameras,
        matched_pairs: bench.pair_poses.len(),
        map_images: map_idx.iter().map(|&i| scene.cameras[i].id.0).collect(),
        query_images: query_idx.iter().map(|&i| scene.cameras[i].id.0).collect(),
        pointmap_pairs: pm_names,
    };
    #[derive(Serialize)]
    struct Echo<'a> {
        seed: u64,
        config: &'a SynthSceneConfig,
        summary: &'a BenchmarkSummary,
    }
    write_json(&dir.join("config.json"), &Echo { seed, config: cfg, summary: &summary })?;
    if summary.matched_pairs == 0 {
        return Err(IoError::format(dir, "generated scene has no matched pairs"));
    }
    Ok(summary)
}
