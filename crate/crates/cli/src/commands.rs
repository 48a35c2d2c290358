use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};
use serde_json::{json, Value};

use cvforge_core::covis::{covisibility_matrix, select_pairs, CovisCamera, CovisibilityConfig, PairSelectionConfig};
use cvforge_core::eval::{aligned_errors, evaluate_poses, AlignConfig, AlignMode};
use cvforge_core::georeg::{georegister, GeoregConfig};
use cvforge_core::ransac::RansacConfig;
use cvforge_core::sfm::{localize_queries, triangulate_scene, LocalizationConfig, LocalizationStatus, TriangulationConfig};
use cvforge_core::synth::{render_depth_with, RayCaster};
use cvforge_core::viewgen::{generate_viewpoints, sample_lookat_targets, ViewGenConfig};
use cvforge_core::{CameraPose, FrameLabel, ImageId, LocalizationQuery};
use cvforge_io::benchmark::{read_synth_config, write_benchmark, SynthSceneConfig};
use cvforge_io::covis::{read_covis, write_covis};
use cvforge_io::fsutil::{to_canonical_json, write_atomic};
use cvforge_io::manifest::{parse_manifest, resolve, write_manifest, SceneManifest};
use cvforge_io::matches::{check_against_manifest, read_match_dir};
use cvforge_io::mesh::read_mesh;
use cvforge_io::pairs::write_pairs;
use cvforge_io::points::{load_reconstruction, save_reconstruction};
use cvforge_io::poses::read_poses;
use cvforge_io::raster::{read_depth, read_pointmap, write_depth};
use cvforge_io::report::{write_report, MetricsReport};
use cvforge_io::shortlists::read_shortlists;
use cvforge_io::views::write_views;

use crate::paths::rebase;
use crate::{Cli, CliError, Command};

type CmdResult = Result<(), CliError>;

fn user(msg: impl Into<String>) -> CliError {
    CliError::User(msg.into())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// JSON to stdout, one document per invocation.
fn emit(v: &Value) {
    print!("{}", String::from_utf8_lossy(&to_canonical_json(v)));
}

fn write_json_value(path: &Path, v: &Value) -> CmdResult {
    write_atomic(path, &to_canonical_json(v))?;
    Ok(())
}

/// Copy of `m` whose relative file references resolve from `to` instead of `from`.
fn relocated(m: &SceneManifest, from: &Path, to: &Path) -> SceneManifest {
    let mut out = m.clone();
    out.points_file = m.points_file.as_deref().map(|p| rebase(p, from, to));
    out.mesh_file = m.mesh_file.as_deref().map(|p| rebase(p, from, to));
    for im in &mut out.images {
        im.depth_file = im.depth_file.as_deref().map(|p| rebase(p, from, to));
    }
    out
}

fn pose_json(p: &CameraPose) -> Value {
    json!({ "quat_wxyz": p.wxyz(), "t_xyz": [p.translation().x, p.translation().y, p.translation().z] })
}

pub fn dispatch(cli: &Cli) -> CmdResult {
    let seed = cli.seed;
    match &cli.command {
        Command::Georegister(a) => a.run(seed),
        Command::SampleViews(a) => a.run(seed),
        Command::Triangulate(a) => a.run(),
        Command::Localize(a) => a.run(seed),
        Command::Covis(a) => a.run(),
        Command::Pairs(a) => a.run(seed),
        Command::EvalPose(a) => a.run(),
        Command::EvalPointmap(a) => a.run(seed),
        Command::SynthScene(a) => a.run(seed),
        Command::RenderDepth(a) => a.run(),
    }
}

#[derive(Args, Debug)]
pub struct GeoregisterArgs {
    /// Manifest of a reconstruction in the local frame, with GPS tags.
    #[arg(long)]
    scene: PathBuf,
    /// Output manifest in the ECEF frame.
    #[arg(long)]
    out: PathBuf,
    /// RANSAC inlier threshold on camera-centre residuals.
    #[arg(long, default_value_t = 15.0)]
    threshold_m: f64,
    /// Drop GPS tags this far from the median altitude.
    #[arg(long, default_value_t = 200.0)]
    altitude_outlier_m: f64,
    /// Plain least squares on all tagged cameras.
    #[arg(long)]
    no_ransac: bool,
    /// Also write the report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

impl GeoregisterArgs {
    fn run(&self, seed: u64) -> CmdResult {
        let m = parse_manifest(&self.scene)?;
        let recon = load_reconstruction(&self.scene, &m)?;
        let cfg = GeoregConfig {
            ransac: RansacConfig { threshold: self.threshold_m, seed, ..RansacConfig::default() },
            altitude_outlier_m: self.altitude_outlier_m,
            robust: !self.no_ransac,
        };
        let (ecef, rep) = georegister(&recon, &cfg)?;
        save_reconstruction(&self.out, &relocated(&m, &self.scene, &self.out), &ecef)?;
        let t = &rep.transform;
        let q = t.rotation();
        let report = json!({
            "config": {
                "scene": path_str(&self.scene),
                "threshold_m": self.threshold_m,
                "altitude_outlier_m": self.altitude_outlier_m,
                "robust": cfg.robust,
                "seed": seed,
            },
            "tagged_images": rep.tagged_images,
            "used_pairs": rep.used_pairs,
            "inliers": rep.inliers,
            "rms_m": rep.rms_m,
            "sim3": {
                "scale": t.scale(),
                "quat_wxyz": [q.w, q.i, q.j, q.k],
                "t_xyz": [t.translation().x, t.translation().y, t.translation().z],
            },
        });
        if let Some(p) = &self.report {
            write_json_value(p, &report)?;
        }
        emit(&report);
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct SampleViewsArgs {
    /// Manifest with a points file in a z-up metric frame.
    #[arg(long)]
    scene: PathBuf,
    /// Number of look-at targets.
    #[arg(long, default_value_t = 200)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    per_target: usize,
    #[arg(long)]
    out: PathBuf,
    /// Ground height; defaults to the lowest scene point.
    #[arg(long)]
    ground_z: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    min_altitude_m: f64,
    #[arg(long, default_value_t = 350.0)]
    max_altitude_m: f64,
    #[arg(long, default_value_t = 45.0)]
    min_hfov_deg: f64,
    #[arg(long, default_value_t = 90.0)]
    max_hfov_deg: f64,
}

impl SampleViewsArgs {
    fn run(&self, seed: u64) -> CmdResult {
        let m = parse_manifest(&self.scene)?;
        if m.frame_label() == FrameLabel::Ecef {
            return Err(user("sample-views needs a z-up frame; the scene is in ecef"));
        }
        let recon = load_reconstruction(&self.scene, &m)?;
        let cloud: Vec<_> = recon.points.iter().map(|p| p.position).collect();
        if cloud.is_empty() {
            return Err(user(format!("{} has no scene points", self.scene.display())));
        }
        let ground_z = self
            .ground_z
            .unwrap_or_else(|| cloud.iter().map(|p| p.z).fold(f64::INFINITY, f64::min));
        let targets = sample_lookat_targets(&cloud, self.k, seed)?;
        let cfg = ViewGenConfig {
            per_target: self.per_target,
            altitude_range_m: (self.min_altitude_m, self.max_altitude_m),
            hfov_range_deg: (self.min_hfov_deg, self.max_hfov_deg),
            ..ViewGenConfig::default()
        };
        let views = generate_viewpoints(&targets, &cfg, ground_z, seed)?;
        write_views(&self.out, &m.frame, &views)?;
        info!("{} targets, {} viewpoints", targets.len(), views.len());
        emit(&json!({ "targets": targets.len(), "views": views.len(), "ground_z": ground_z }));
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct TriangulateArgs {
    /// Manifest with fixed poses for every image.
    #[arg(long)]
    scene: PathBuf,
    /// Directory of match files.
    #[arg(long)]
    matches: PathBuf,
    /// Output manifest; points are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4.0)]
    max_reproj_px: f64,
    #[arg(long, default_value_t = 1.5)]
    min_angle_deg: f64,
}

impl TriangulateArgs {
    fn run(&self) -> CmdResult {
        let m = parse_manifest(&self.scene)?;
        let images = m.recon_images(&self.scene)?;
        let all = read_match_dir(&self.matches)?;
        let total = all.len();
        let sets: Vec<_> = all
            .into_iter()
            .filter(|s| m.image(s.image_a).is_some() && m.image(s.image_b).is_some())
            .collect();
        if sets.len() < total {
            info!("skipping {} match sets with images outside the scene", total - sets.len());
        }
        check_against_manifest(&self.matches, &sets, &m)?;
        let cfg = TriangulationConfig { max_reproj_px: self.max_reproj_px, min_angle_deg: self.min_angle_deg };
        let recon = triangulate_scene(&sets, images, m.frame_label(), &cfg)?;
        if recon.points.is_empty() {
            warn!("no track survived triangulation");
        }
        save_reconstruction(&self.out, &relocated(&m, &self.scene, &self.out), &recon)?;
        emit(&json!({ "match_sets": sets.len(), "points": recon.points.len() }));
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    /// Triangulated map manifest.
    #[arg(long)]
    map: PathBuf,
    /// Manifest of the query images; poses are ignored.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    shortlists: PathBuf,
    /// Directory of query-to-map match files.
    #[arg(long)]
    matches: PathBuf,
    /// Output manifest of the queries with the recovered poses.
    #[arg(long)]
    out: PathBuf,
    /// Per-query report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    threshold_px: f64,
    #[arg(long, default_value_t = 15)]
    min_inliers: usize,
}

impl LocalizeArgs {
    fn run(&self, seed: u64) -> CmdResult {
        let mm = parse_manifest(&self.map)?;
        let map = load_reconstruction(&self.map, &mm)?;
        if map.points.is_empty() {
            return Err(user(format!("map {} has no points", self.map.display())));
        }
        let qm = parse_manifest(&self.queries)?;
        let shortlists = read_shortlists(&self.shortlists)?;
        let sets = read_match_dir(&self.matches)?;
        let mut queries = Vec::new();
        for im in &qm.images {
            let id = im.image_id();
            if mm.image(id).is_some() {
                return Err(user(format!("image {id} is both a query and a map image")));
            }
            let shortlist = shortlists.get(id).unwrap_or_default();
            if let Some(bad) = shortlist.iter().find(|s| mm.image(**s).is_none()) {
                return Err(user(format!("shortlist of query {id} names image {bad}, which is not in the map")));
            }
            let matches = sets
                .iter()
                .filter(|s| {
                    (s.image_a == id && shortlist.contains(&s.image_b))
                        || (s.image_b == id && shortlist.contains(&s.image_a))
                })
                .cloned()
                .collect();
            queries.push(LocalizationQuery { image: id, intrinsics: im.intrinsics()?, shortlist, matches });
        }
        let mut cfg = LocalizationConfig::default();
        cfg.pnp.ransac.threshold = self.threshold_px;
        cfg.pnp.ransac.seed = seed;
        cfg.pnp.min_inliers = self.min_inliers;
        let results = localize_queries(&map, &queries, &cfg);

        let mut out = relocated(&qm, &self.queries, &self.out);
        out.frame = mm.frame.clone();
        let mut records = Vec::new();
        let mut localized = 0;
        for r in &results {
            if let Some(im) = out.image_mut(r.image) {
                im.set_pose(r.pose.as_ref());
            }
            let status = match &r.report.status {
                LocalizationStatus::Localized => {
                    localized += 1;
                    "localized".to_string()
                }
                LocalizationStatus::Failed(why) => {
                    warn!("query {}: {why}", r.image);
                    why.clone()
                }
            };
            records.push(json!({
                "image": r.image.0,
                "status": status,
                "lifted_matches": r.report.lifted_matches,
                "inliers": r.report.inliers,
                "rms_px": r.report.rms_px,
                "refine_diverged": r.report.refine_diverged,
                "pose": r.pose.as_ref().map(pose_json),
            }));
        }
        write_manifest(&self.out, &out)?;
        let report = json!({
            "config": {
                "map": path_str(&self.map),
                "queries": path_str(&self.queries),
                "shortlists": path_str(&self.shortlists),
                "matches": path_str(&self.matches),
                "threshold_px": self.threshold_px,
                "min_inliers": self.min_inliers,
                "seed": seed,
            },
            "queries": results.len(),
            "localized": localized,
            "records": records,
        });
        if let Some(p) = &self.report {
            write_json_value(p, &report)?;
        }
        emit(&json!({ "queries": results.len(), "localized": localized }));
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct CovisArgs {
    /// Manifest whose images all have poses and depth files.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    stride: u32,
    #[arg(long, default_value_t = 0.01)]
    rel_tol: f64,
    #[arg(long, default_value_t = 0.05)]
    abs_tol: f64,
}

impl CovisArgs {
    fn run(&self) -> CmdResult {
        let m = parse_manifest(&self.scene)?;
        let frame = m.frame_label();
        let mut depths = Vec::new();
        let mut cams = Vec::new();
        for (im, ri) in m.images.iter().zip(m.recon_images(&self.scene)?) {
            let rel = im
                .depth_file
                .as_deref()
                .ok_or_else(|| user(format!("image {} has no depth file", im.id)))?;
            let d = read_depth(&resolve(&self.scene, rel))?;
            if d.image != ri.id {
                return Err(user(format!("depth file {rel} belongs to image {}, not {}", d.image, ri.id)));
            }
            depths.push(d);
            cams.push(CovisCamera { intrinsics: ri.intrinsics, pose: ri.pose, frame });
        }
        let cfg = CovisibilityConfig { pixel_stride: self.stride, depth_rel_tol: self.rel_tol, depth_abs_tol: self.abs_tol };
        let c = covisibility_matrix(&depths, &cams, &cfg)?;
        write_covis(&self.out, &c)?;
        emit(&json!({ "images": c.n }));
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct PairsArgs {
    /// Covisibility matrix in manifest image order.
    #[arg(long)]
    covis: PathBuf,
    /// Manifest providing altitudes above ground.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    min_covis: f64,
    #[arg(long, default_value_t = 0.95)]
    max_covis: f64,
    #[arg(long, default_value_t = 0.2)]
    band_lo: f64,
    #[arg(long, default_value_t = 0.95)]
    band_hi: f64,
    /// Cameras above this altitude count as aerial.
    #[arg(long, default_value_t = 30.0)]
    aerial_threshold_m: f64,
}

impl PairsArgs {
    fn run(&self, seed: u64) -> CmdResult {
        let m = parse_manifest(&self.scene)?;
        let c = read_covis(&self.covis)?;
        if c.n != m.images.len() {
            return Err(user(format!(
                "covisibility matrix has {} images but the manifest has {}",
                c.n,
                m.images.len()
            )));
        }
        let altitudes = m
            .images
            .iter()
            .map(|im| {
                im.altitude_above_ground_m
                    .ok_or_else(|| user(format!("image {} has no altitude_above_ground_m", im.id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cfg = PairSelectionConfig {
            min_covis: self.min_covis,
            max_covis: self.max_covis,
            target_band: (self.band_lo, self.band_hi),
            aerial_altitude_threshold_m: self.aerial_threshold_m,
            ..PairSelectionConfig::default()
        };
        let mut pairs = select_pairs(&c, &altitudes, &cfg, self.budget, seed)?;
        for p in &mut pairs {
            p.i = m.images[p.i].id as usize;
            p.j = m.images[p.j].id as usize;
        }
        write_pairs(&self.out, &pairs)?;
        emit(&json!({ "pairs": pairs.len() }));
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct EvalPoseArgs {
    /// Predicted poses: a poses file or a manifest.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth manifest or poses file.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated angle thresholds in degrees.
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 15.0])]
    thresholds_deg: Vec<f64>,
}

impl EvalPoseArgs {
    fn run(&self) -> CmdResult {
        let pred = read_poses(&self.pred)?;
        let gt: BTreeMap<ImageId, CameraPose> = read_poses(&self.gt)?
            .into_iter()
            .map(|(id, p)| p.map(|p| (id, p)).ok_or_else(|| user(format!("ground truth has no pose for image {id}"))))
            .collect::<Result<_, _>>()?;
        let records = evaluate_poses(&pred, &gt)?;
        let config = json!({
            "pred": path_str(&self.pred),
            "gt": path_str(&self.gt),
            "thresholds_deg": self.thresholds_deg,
        });
        let report = MetricsReport::pose(&records, &self.thresholds_deg, config)?;
        write_report(&self.out, &report)?;
        emit(&Value::Object(report.metrics.clone()));
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct EvalPointmapArgs {
    /// Directory of predicted pointmaps.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth pointmaps; files are paired by name.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "per-pair", value_parser = parse_mode)]
    mode: AlignMode,
    /// RANSAC inlier threshold of the similarity alignment.
    #[arg(long, default_value_t = 0.5)]
    inlier_m: f64,
    /// Comma-separated delta thresholds in meters.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    thresholds_m: Vec<f64>,
}

fn parse_mode(s: &str) -> Result<AlignMode, String> {
    AlignMode::parse(s).ok_or_else(|| format!("unknown mode {s:?}; use per-pair or per-scene"))
}

fn list_cvp(dir: &Path) -> Result<Vec<String>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| user(format!("{}: {e}", dir.display())))?;
    let mut names = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| user(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".cvp") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

impl EvalPointmapArgs {
    fn run(&self, seed: u64) -> CmdResult {
        let names = list_cvp(&self.gt)?;
        if names.is_empty() {
            return Err(user(format!("no .cvp files in {}", self.gt.display())));
        }
        let mut pred = Vec::new();
        let mut gt = Vec::new();
        for n in &names {
            let p = self.pred.join(n);
            if !p.is_file() {
                return Err(user(format!("prediction {} is missing", p.display())));
            }
            pred.push(read_pointmap(&p)?);
            gt.push(read_pointmap(&self.gt.join(n))?);
        }
        let cfg = AlignConfig {
            ransac: RansacConfig { threshold: self.inlier_m, seed, ..RansacConfig::default() },
        };
        let errors = aligned_errors(&pred, &gt, self.mode, &cfg)?;
        let stems: Vec<String> = names.iter().map(|n| n.trim_end_matches(".cvp").to_string()).collect();
        let config = json!({
            "pred": path_str(&self.pred),
            "gt": path_str(&self.gt),
            "mode": self.mode.as_str(),
            "inlier_m": self.inlier_m,
            "thresholds_m": self.thresholds_m,
            "seed": seed,
        });
        let report = MetricsReport::pointmap(&stems, &errors, &self.thresholds_m, config)?;
        write_report(&self.out, &report)?;
        emit(&Value::Object(report.metrics.clone()));
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct SynthSceneArgs {
    /// Scene configuration JSON; built-in defaults otherwise.
    #[arg(long)]
    cfg: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl SynthSceneArgs {
    fn run(&self, seed: u64) -> CmdResult {
        let cfg = match &self.cfg {
            Some(p) => read_synth_config(p)?,
            None => SynthSceneConfig::default(),
        };
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Internal(format!("{}: {e}", self.out.display())))?;
        let summary = write_benchmark(&self.out, &cfg, seed)?;
        emit(&serde_json::to_value(&summary).map_err(|e| CliError::Internal(e.to_string()))?);
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct RenderDepthArgs {
    /// Manifest with a mesh file and posed images.
    #[arg(long)]
    scene: PathBuf,
    /// Output directory; one `<id>.cvd` per image.
    #[arg(long)]
    out: PathBuf,
}

impl RenderDepthArgs {
    fn run(&self) -> CmdResult {
        let m = parse_manifest(&self.scene)?;
        let rel = m
            .mesh_file
            .as_deref()
            .ok_or_else(|| user(format!("{} has no mesh_file", self.scene.display())))?;
        let mesh = read_mesh(&resolve(&self.scene, rel))?;
        let caster = RayCaster::new(&mesh);
        for ri in m.recon_images(&self.scene)? {
            let d = render_depth_with(&caster, &ri.intrinsics, &ri.pose, ri.id);
            write_depth(&self.out.join(format!("{}.cvd", ri.id)), &d)?;
        }
        emit(&json!({ "images": m.images.len() }));
        Ok(())
    }
}
