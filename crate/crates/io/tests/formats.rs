use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cvforge_core::covis::{CovisibilityMatrix, DepthMap, PairClass, ScoredPair};
use cvforge_core::eval::{Pointmap, PoseErrorRecord};
use cvforge_core::{CameraIntrinsics, CameraPose, FrameLabel, ImageId, MatchSet};
use cvforge_io::benchmark::{read_pair_poses, write_benchmark, SynthSceneConfig};
use cvforge_io::covis::{read_covis, write_covis};
use cvforge_io::error::IoError;
use cvforge_io::manifest::{manifest_to_bytes, parse_manifest, ImageSource, ManifestImage, SceneManifest};
use cvforge_io::matches::{format_match_set, parse_match_text, read_match_dir, write_match_dir};
use cvforge_io::mesh::read_mesh;
use cvforge_io::pairs::{format_pairs, parse_pairs};
use cvforge_io::points::{load_reconstruction, save_reconstruction};
use cvforge_io::poses::{read_poses, write_poses};
use cvforge_io::raster::{read_depth, read_pointmap, sidecar_path, write_depth, write_pointmap};
use cvforge_io::report::{read_report, write_report, MetricsReport};
use cvforge_io::write_manifest;
use nalgebra::{UnitQuaternion, Vector2, Vector3};
use proptest::prelude::*;

fn small_cfg() -> SynthSceneConfig {
    SynthSceneConfig {
        width: 64,
        height: 48,
        points: 2500,
        ground_cameras: 4,
        aerial_cameras: 4,
        pointmap_pairs: 2,
        ..Default::default()
    }
}

fn sample_manifest() -> SceneManifest {
    let k = CameraIntrinsics::from_hfov(60.0, 64, 48).unwrap();
    let pose = CameraPose::new(UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3), Vector3::new(1.0, 2.0, 3.0));
    let a = ManifestImage::new(ImageId(0), &k, Some(&pose), ImageSource::Real);
    let b = ManifestImage::new(ImageId(1), &k, None, ImageSource::PseudoSynthetic);
    SceneManifest::new(FrameLabel::Local, vec![a, b])
}

#[test]
fn benchmark_manifests_parse_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let summary = write_benchmark(dir.path(), &small_cfg(), 0).unwrap();
    assert!(summary.matched_pairs > 0);
    for name in ["manifest.json", "map.json", "queries.json", "local.json"] {
        let path = dir.path().join(name);
        let m = parse_manifest(&path).unwrap();
        assert_eq!(manifest_to_bytes(&m), fs::read(&path).unwrap(), "{name}");
    }
    let m = parse_manifest(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.images.len(), 8);
    let mesh = read_mesh(&dir.path().join("mesh.json")).unwrap();
    assert_eq!(mesh.triangles.len(), 12 * 16 + 2);
    for im in &m.images {
        let d = read_depth(&dir.path().join(im.depth_file.as_ref().unwrap())).unwrap();
        assert_eq!((d.width, d.height, d.image.0), (64, 48, im.id));
    }
    assert_eq!(read_pair_poses(&dir.path().join("gt_pair_poses.json")).unwrap().len(), summary.matched_pairs);
    let noisy = read_match_dir(&dir.path().join("matches/noisy")).unwrap();
    assert_eq!(noisy.len(), summary.matched_pairs);

    let again = tempfile::tempdir().unwrap();
    write_benchmark(again.path(), &small_cfg(), 0).unwrap();
    for name in ["manifest.json", "matches/noisy/0_1.txt", "shortlists.json", "pointmaps/pred/0_1.cvp"] {
        let (a, b) = (dir.path().join(name), again.path().join(name));
        if a.exists() {
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{name}");
        }
    }
}

#[test]
fn unknown_fields_survive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let mut v = serde_json::to_value(sample_manifest()).unwrap();
    v["capture_campaign"] = serde_json::json!({"operator": "survey-7", "passes": [1, 2]});
    v["images"][0]["exposure_ms"] = serde_json::json!(8.5);
    fs::write(&path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    let m = parse_manifest(&path).unwrap();
    assert_eq!(m.extra["capture_campaign"]["operator"], "survey-7");
    let out = dir.path().join("out.json");
    write_manifest(&out, &m).unwrap();
    let back: serde_json::Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(back, v);
}

#[test]
fn manifest_error_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    assert!(matches!(parse_manifest(&path), Err(IoError::Missing { .. })));

    let mut m = sample_manifest();
    m.images[1].id = 0;
    fs::write(&path, manifest_to_bytes(&m)).unwrap();
    match parse_manifest(&path) {
        Err(e @ IoError::DuplicateId { id: 0, .. }) => assert!(e.to_string().contains("duplicate image id 0")),
        other => panic!("{other:?}"),
    }

    let mut m = sample_manifest();
    m.images[0].pose_qwxyz_world2cam = Some([1.0, 1.0, 0.0, 0.0]);
    fs::write(&path, manifest_to_bytes(&m)).unwrap();
    match parse_manifest(&path) {
        Err(IoError::Schema { location, .. }) => assert_eq!(location, "images[0].pose_qwxyz_world2cam"),
        other => panic!("{other:?}"),
    }

    let mut m = sample_manifest();
    m.version = "cvforge-scene/9".into();
    fs::write(&path, manifest_to_bytes(&m)).unwrap();
    assert!(matches!(parse_manifest(&path), Err(IoError::UnknownVersion { .. })));

    let mut m = sample_manifest();
    m.images[0].depth_file = Some("nowhere.cvd".into());
    fs::write(&path, manifest_to_bytes(&m)).unwrap();
    match parse_manifest(&path) {
        Err(IoError::Schema { location, .. }) => assert_eq!(location, "images[0].depth_file"),
        other => panic!("{other:?}"),
    }

    fs::write(&path, "{\n  \"version\": \"cvforge-scene/1\",\n  \"frame\": 3\n}").unwrap();
    assert!(matches!(parse_manifest(&path), Err(IoError::Json { line: 3, .. })));
}

#[test]
fn covis_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let c = CovisibilityMatrix::new(3, vec![1.0, 0.25, 0.0, 0.5, 1.0, 0.125, 0.0, 0.75, 1.0]).unwrap();
    write_covis(&path, &c).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 8 + 4 * 9);
    assert_eq!(&bytes[..4], b"CVC1");
    assert_eq!(read_covis(&path).unwrap(), c);
    let copy = dir.path().join("d.bin");
    write_covis(&copy, &read_covis(&path).unwrap()).unwrap();
    assert_eq!(fs::read(&copy).unwrap(), bytes);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    fs::write(&path, &bad).unwrap();
    assert!(matches!(read_covis(&path), Err(IoError::Format { .. })));
    fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(read_covis(&path), Err(IoError::Truncated { expected: 44, found: 40, .. })));
}

#[test]
fn rasters_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dp = dir.path().join("d/7.cvd");
    let d = DepthMap::new(ImageId(7), 3, 2, vec![1.5, 0.0, 2.25, 1e-3, 400.0, f32::NAN]).unwrap();
    write_depth(&dp, &d).unwrap();
    let back = read_depth(&dp).unwrap();
    assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), d.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let side: serde_json::Value = serde_json::from_slice(&fs::read(sidecar_path(&dp)).unwrap()).unwrap();
    assert_eq!(side["units"], "m");
    fs::write(&dp, [0u8; 8]).unwrap();
    assert!(matches!(read_depth(&dp), Err(IoError::Truncated { .. })));

    let pp = dir.path().join("p.cvp");
    let pm = Pointmap::new(2, 1, vec![Vector3::new(0.5, -1.0, 30.0), Vector3::zeros()], vec![true, false]).unwrap();
    write_pointmap(&pp, &pm).unwrap();
    assert_eq!(read_pointmap(&pp).unwrap(), pm);
    assert_eq!(fs::read(dir.path().join("p.cvp.mask")).unwrap(), vec![1, 0]);
}

proptest! {
    #[test]
    fn match_text_round_trips(
        rows in prop::collection::vec((0.0f64..4000.0, 0.0f64..3000.0, 0.0f64..4000.0, 0.0f64..3000.0, 0.0f64..1.0), 1..40)
    ) {
        let mut set = MatchSet::new(ImageId(3), ImageId(11));
        for (ua, va, ub, vb, s) in &rows {
            set.push(Vector2::new(*ua, *va), Vector2::new(*ub, *vb), *s);
        }
        let mut seen = std::collections::HashSet::new();
        set.correspondences.retain(|c| seen.insert([c.pixel_a.x, c.pixel_a.y, c.pixel_b.x, c.pixel_b.y].map(f64::to_bits)));
        let text = format_match_set(&set);
        let back = parse_match_text(Path::new("m.txt"), &text).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(&back[0], &set);
        prop_assert_eq!(format_match_set(&back[0]), text);
    }
}

#[test]
fn match_errors_carry_line_numbers() {
    let text = "# header\n0 1 1 2 3 4 0.5\n0 1 1 2 3 nope 0.5\n";
    match parse_match_text(Path::new("m.txt"), text) {
        Err(IoError::Parse { line: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert!(parse_match_text(Path::new("m.txt"), "0 1 1 2 3\n").is_err());
    assert!(parse_match_text(Path::new("m.txt"), "0 1 1 2 3 4 1\n0 1 1 2 3 4 1\n").is_err());
    let dir = tempfile::tempdir().unwrap();
    let mut s = MatchSet::new(ImageId(0), ImageId(1));
    s.push(Vector2::new(1.0, 2.0), Vector2::new(3.0, 4.0), 1.0);
    write_match_dir(dir.path(), &[s.clone()]).unwrap();
    assert_eq!(read_match_dir(dir.path()).unwrap(), vec![s]);
}

#[test]
fn pairs_csv_round_trip() {
    let pairs = vec![
        ScoredPair { i: 0, j: 3, c_ij: 0.1, c_ji: 0.9, score: 25.0 / 9.0, class: PairClass::GroundAerial },
        ScoredPair { i: 1, j: 2, c_ij: 0.5, c_ji: 0.5, score: 1.0, class: PairClass::AerialAerial },
    ];
    let text = format_pairs(&pairs);
    assert!(text.starts_with("i,j,c_ij,c_ji,score,class\n0,3,0.1,0.9,"));
    assert!(text.contains(",ground-aerial\n"));
    assert_eq!(parse_pairs(Path::new("p.csv"), &text).unwrap(), pairs);
    assert!(parse_pairs(Path::new("p.csv"), "0,1,0,0,1,x\n").is_err());
}

#[test]
fn reports_are_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let recs: Vec<PoseErrorRecord> = [(3.0, Some(1.0)), (7.0, None), (20.0, Some(12.0))]
        .iter()
        .enumerate()
        .map(|(k, (r, t))| PoseErrorRecord { pair: (ImageId(0), ImageId(k as u32 + 1)), rra_deg: *r, rta_deg: *t })
        .collect();
    let rep = MetricsReport::pose(&recs, &[5.0, 10.0, 15.0], serde_json::json!({"seed": 0})).unwrap();
    assert_eq!(rep.metric("RRA@5"), Some(1.0 / 3.0));
    assert_eq!(rep.metric("RRA@10"), Some(2.0 / 3.0));
    assert_eq!(rep.metric("RTA@15"), Some(2.0 / 3.0));
    write_report(&path, &rep).unwrap();
    assert_eq!(read_report(&path).unwrap(), rep);
    let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    v["metrics"]["RRA@5"] = serde_json::json!(0.5);
    fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    assert!(matches!(read_report(&path), Err(IoError::Schema { .. })));

    let rep = MetricsReport::pointmap(&["0_1".into()], &[vec![0.2, 0.75, 1.5, 3.0]], &[0.5, 1.0, 2.0], serde_json::Value::Null).unwrap();
    let keys: Vec<&String> = rep.metrics.keys().collect();
    assert_eq!(keys, ["delta@0.5m", "delta@1m", "delta@2m"]);
    assert_eq!(rep.metric("delta@2m"), Some(0.75));
    write_report(&path, &rep).unwrap();
    assert_eq!(read_report(&path).unwrap(), rep);
}

#[test]
fn poses_and_points_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut poses = BTreeMap::new();
    poses.insert(ImageId(2), Some(CameraPose::new(UnitQuaternion::from_euler_angles(0.3, -0.1, 2.0), Vector3::new(0.1, 0.2, 0.3))));
    poses.insert(ImageId(5), None);
    let p = dir.path().join("poses.json");
    write_poses(&p, &poses).unwrap();
    assert_eq!(read_poses(&p).unwrap(), poses);

    let mpath = dir.path().join("scene.json");
    let mut m = sample_manifest();
    m.images.truncate(1);
    write_manifest(&mpath, &m).unwrap();
    let from_manifest = read_poses(&mpath).unwrap();
    assert_eq!(from_manifest[&ImageId(0)], m.images[0].pose());

    let mut recon = load_reconstruction(&mpath, &m).unwrap();
    let k2 = ManifestImage::new(ImageId(4), &CameraIntrinsics::from_hfov(60.0, 64, 48).unwrap(), Some(&CameraPose::identity()), ImageSource::Real);
    let mut m2 = m.clone();
    m2.images.push(k2);
    recon.images = m2.recon_images(&mpath).unwrap();
    recon.points.push(cvforge_core::ScenePoint {
        id: 9,
        position: Vector3::new(1.0, 2.0, 30.0),
        track: vec![
            cvforge_core::Observation { image: ImageId(0), pixel: Vector2::new(3.5, 4.25) },
            cvforge_core::Observation { image: ImageId(4), pixel: Vector2::new(10.0, 11.0) },
        ],
    });
    let saved = save_reconstruction(&mpath, &m2, &recon).unwrap();
    assert_eq!(saved.points_file.as_deref(), Some("scene.points.json"));
    let reparsed = parse_manifest(&mpath).unwrap();
    assert_eq!(load_reconstruction(&mpath, &reparsed).unwrap(), recon);
}
