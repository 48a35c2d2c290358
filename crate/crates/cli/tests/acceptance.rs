//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so every line is printed even when an earlier criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use cvforge_core::covis::{
    covisibility_matrix, pair_score, select_pairs, CovisCamera, CovisibilityConfig, CovisibilityMatrix, DepthMap,
    PairSelectionConfig,
};
use cvforge_core::eval::{
    accuracy_at, camera_accuracy, evaluate_poses, focal_from_pointmap, pointmap_delta, pose_from_pointmaps,
    ransac_umeyama_align, rotation_error_deg, AlignConfig, Pointmap, PointmapPnpConfig,
};
use cvforge_core::georeg::{ransac_sim3, CorrespondenceSet3D};
use cvforge_core::ransac::RansacConfig;
use cvforge_core::recon::Observation;
use cvforge_core::sfm::{
    camera_map, localize_queries, triangulate_scene, triangulate_track, LocalizationConfig, Track,
    TriangulationConfig,
};
use cvforge_core::synth::{
    camera_looking_at, corrupt_pointmap, generate_city, make_benchmark_scene, make_localization_benchmark,
    random_similarity, render_depth_with, ring_cameras, synth_matches_labeled, BenchmarkConfig, BenchmarkScene,
    CityConfig, LocalizationBenchmarkConfig, RayCaster, SynthMatchConfig,
};
use cvforge_core::{CameraPose, FrameLabel, ImageId, ReconImage, Sim3Transform};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn covis_cams(b: &BenchmarkScene) -> Vec<CovisCamera> {
    b.scene
        .cameras
        .iter()
        .map(|c| CovisCamera { intrinsics: c.intrinsics, pose: c.pose, frame: FrameLabel::SceneLocalMetric })
        .collect()
}

fn sim3_recovery() -> Outcome {
    let start = Instant::now();
    let mut good = 0;
    let (mut worst_s, mut worst_r, mut worst_t) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..100u64 {
        let truth = random_similarity((0.5, 2.0), 1000.0, trial).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + trial);
        let noise = Normal::new(0.0, 5.0).unwrap();
        // source extent chosen so the scene spans 500 m in the target frame
        let half = 250.0 / truth.scale();
        let pairs: Vec<_> = (0..200)
            .map(|i| {
                let mut pick = || Vector3::from_fn(|_, _| rng.random_range(-half..half));
                let src = pick();
                let tgt = if i < 60 {
                    truth.apply(&pick())
                } else {
                    truth.apply(&src) + Vector3::from_fn(|_, _| noise.sample(&mut rng))
                };
                (src, tgt)
            })
            .collect();
        let cfg = RansacConfig { threshold: 15.0, seed: trial, ..RansacConfig::default() };
        let est = match ransac_sim3(&CorrespondenceSet3D::new(pairs), &cfg) {
            Ok(r) => r.transform,
            Err(_) => continue,
        };
        let ds = (est.scale() / truth.scale() - 1.0).abs();
        let dr = rotation_error_deg(est.rotation(), truth.rotation());
        let dt = (est.translation() - truth.translation()).norm();
        worst_s = worst_s.max(ds);
        worst_r = worst_r.max(dr);
        worst_t = worst_t.max(dt);
        if ds < 0.01 && dr < 0.5 && dt < 3.0 {
            good += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        good >= 95 && secs < 10.0,
        format!(
            "{good}/100 trials within (scale 1%, rot 0.5 deg, trans 3 m), need 95; worst scale {worst_s:.2e}, rot {worst_r:.3} deg, trans {worst_t:.2} m; {secs:.2} s (limit 10 s)"
        ),
    )
}

fn oracle_bilinear(d: &DepthMap, px: &Vector2<f64>) -> Option<f64> {
    let (x, y) = (px.x - 0.5, px.y - 0.5);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (dx, dy, w) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        let (c, r) = (x0 as i64 + dx, y0 as i64 + dy);
        if w <= 0.0 || c < 0 || r < 0 || c >= d.width as i64 || r >= d.height as i64 {
            continue;
        }
        let v = d.data[r as usize * d.width as usize + c as usize];
        if v > 0.0 && v.is_finite() {
            acc += w * v as f64;
            wsum += w;
        }
    }
    (wsum > 0.0).then(|| acc / wsum)
}

/// Exhaustive per-pixel covisibility with no culling.
fn covis_oracle(depths: &[DepthMap], cams: &[CovisCamera], cfg: &CovisibilityConfig) -> Vec<f64> {
    let n = depths.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let di = &depths[i];
        for j in 0..n {
            let mut total = 0usize;
            let mut seen = 0usize;
            for row in (0..di.height).step_by(cfg.pixel_stride as usize) {
                for col in (0..di.width).step_by(cfg.pixel_stride as usize) {
                    let d = di.data[row as usize * di.width as usize + col as usize];
                    if !(d > 0.0 && d.is_finite()) {
                        continue;
                    }
                    total += 1;
                    if i == j {
                        continue;
                    }
                    let px = Vector2::new(col as f64 + 0.5, row as f64 + 0.5);
                    let xw = cams[i].pose.inverse_transform_point(&cams[i].intrinsics.unproject_unchecked(&px, d as f64));
                    let xj = cams[j].pose.transform_point(&xw);
                    if !(xj.z > 0.0) {
                        continue;
                    }
                    let k = &cams[j].intrinsics;
                    let p = k.project_unchecked(&xj);
                    if !(p.x >= 0.0 && p.x < k.width as f64 && p.y >= 0.0 && p.y < k.height as f64) {
                        continue;
                    }
                    if let Some(dj) = oracle_bilinear(&depths[j], &p) {
                        if (xj.z - dj).abs() <= cfg.depth_abs_tol.max(cfg.depth_rel_tol * xj.z) {
                            seen += 1;
                        }
                    }
                }
            }
            out[i * n + j] = match (total, i == j) {
                (0, _) => 0.0,
                (_, true) => 1.0,
                _ => seen as f64 / total as f64,
            };
        }
    }
    out
}

fn covis_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let cfg = CovisibilityConfig::default();
    let mut mismatches = 0;
    let mut entries = 0;
    let mut nonzero = 0;
    for seed in 0..5 {
        let b = make_benchmark_scene(&BenchmarkConfig {
            ground_cameras: 10,
            aerial_cameras: 10,
            width: 64,
            height: 48,
            points: 2000,
            seed,
            ..Default::default()
        })
        .unwrap();
        let cams = covis_cams(&b);
        let c = covisibility_matrix(&b.depths, &cams, &cfg).unwrap();
        let o = covis_oracle(&b.depths, &cams, &cfg);
        entries += o.len();
        nonzero += o.iter().filter(|v| **v > 0.0).count();
        mismatches += c.values.iter().zip(&o).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 30.0,
        format!("{mismatches} of {entries} entries differ from the brute-force oracle ({nonzero} non-zero); {secs:.2} s (limit 30 s)"),
    )
}

fn am_hm_score() -> Outcome {
    let err = (pair_score(0.1, 0.9) - 25.0 / 9.0).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut below = 0;
    for _ in 0..1_000_000 {
        let a = if rng.random_bool(0.01) { 0.0 } else { rng.random_range(1e-12..=1.0) };
        let b = rng.random_range(1e-12..=1.0);
        if !(pair_score(a, b) >= 1.0) {
            below += 1;
        }
    }
    let pairs: Vec<(f64, f64)> = (0..10_000).map(|_| (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0))).collect();
    let argsort = |scores: Vec<f64>| {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
        idx
    };
    let fwd = argsort(pairs.iter().map(|&(a, b)| pair_score(a, b)).collect());
    let rev = argsort(pairs.iter().map(|&(a, b)| pair_score(b, a)).collect());

    // selection over a matrix and its transpose
    let n = 40;
    let values: Vec<f64> = (0..n * n)
        .map(|k| if k / n == k % n { 1.0 } else { rng.random_range(0.0..=1.0) })
        .collect();
    let transposed: Vec<f64> = (0..n * n).map(|k| values[(k % n) * n + k / n]).collect();
    let alts: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.7 } else { 120.0 }).collect();
    let cfg = PairSelectionConfig::default();
    let key = |m: Vec<f64>| {
        let c = CovisibilityMatrix::new(n, m).unwrap();
        select_pairs(&c, &alts, &cfg, 200, 5)
            .unwrap()
            .into_iter()
            .map(|p| (p.i.min(p.j), p.i.max(p.j), p.score.to_bits()))
            .collect::<Vec<_>>()
    };
    let sel_same = key(values) == key(transposed);
    outcome(
        err <= 1e-12 && below == 0 && fwd == rev && sel_same,
        format!(
            "|s(0.1,0.9) - 25/9| = {err:.1e} (tol 1e-12); {below} of 1e6 pairs with s < 1; argsort invariant under swap: {}; selection invariant under transpose: {sel_same}",
            fwd == rev
        ),
    )
}

fn localization() -> Outcome {
    let start = Instant::now();
    let base = LocalizationBenchmarkConfig::default();
    let clean = make_localization_benchmark(&base).unwrap();
    let out = localize_queries(&clean.map, &clean.queries, &LocalizationConfig::default());
    let mut clean_ok = 0;
    let mut clean_worst = 0.0f64;
    for (q, truth) in out.iter().zip(&clean.query_truth) {
        if let Some(p) = q.pose {
            let e = rotation_error_deg(p.rotation(), truth.rotation());
            clean_worst = clean_worst.max(e);
            if e < 1e-4 {
                clean_ok += 1;
            }
        }
    }
    let noisy = make_localization_benchmark(&LocalizationBenchmarkConfig {
        pixel_noise_px: 1.0,
        query_outlier_frac: 0.4,
        ..base
    })
    .unwrap();
    let out = localize_queries(&noisy.map, &noisy.queries, &LocalizationConfig::default());
    let mut noisy_ok = 0;
    let mut worst_rms = 0.0f64;
    for (q, truth) in out.iter().zip(&noisy.query_truth) {
        if let (Some(p), Some(rms)) = (q.pose, q.report.rms_px) {
            worst_rms = worst_rms.max(rms);
            if rotation_error_deg(p.rotation(), truth.rotation()) < 0.5 && rms <= 2.0 {
                noisy_ok += 1;
            }
        }
    }
    let nq = clean.queries.len();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        nq == 10 && clean_ok == nq && noisy_ok as f64 >= 0.9 * nq as f64 && secs < 60.0,
        format!(
            "noiseless {clean_ok}/{nq} within 1e-4 deg (worst {clean_worst:.2e}); 1 px + 40% outliers {noisy_ok}/{nq} within 0.5 deg and 2 px RMS (worst RMS {worst_rms:.3} px), need 90%; {secs:.2} s (limit 60 s)"
        ),
    )
}

fn pose_from_pointmap() -> Outcome {
    let mut pairs = Vec::new();
    let mut focal_clean = 0.0f64;
    let mut focal_dirty = 0.0f64;
    let mut seed = 0;
    while pairs.len() < 50 {
        let b = make_benchmark_scene(&BenchmarkConfig { seed, ..Default::default() }).unwrap();
        for (ci, cam) in b.scene.cameras.iter().enumerate() {
            let own = Pointmap::from_depth(&b.depths[ci], &cam.intrinsics, &CameraPose::identity()).unwrap();
            let fx = cam.intrinsics.fx;
            focal_clean = focal_clean.max((focal_from_pointmap(&own).unwrap() - fx).abs() / fx);
            let dirty = corrupt_pointmap(&own, &Sim3Transform::identity(), 0.0, 0.2, seed * 100 + ci as u64).unwrap();
            focal_dirty = focal_dirty.max((focal_from_pointmap(&dirty).unwrap() - fx).abs() / fx);
        }
        for (a, bb, rel) in &b.pair_poses {
            if pairs.len() == 50 {
                break;
            }
            let ib = b.scene.camera_index(*bb).unwrap();
            let kb = b.scene.cameras[ib].intrinsics;
            let pm = Pointmap::from_depth(&b.depths[ib], &kb, rel).unwrap();
            let err = match pose_from_pointmaps(&pm, &kb, &PointmapPnpConfig::default()) {
                Ok(r) => rotation_error_deg(r.pose.rotation(), rel.rotation()),
                Err(_) => 180.0,
            };
            pairs.push(((*a, *bb), err));
        }
        seed += 1;
    }
    let errors: Vec<Option<f64>> = pairs.iter().map(|(_, e)| Some(*e)).collect();
    let rra = accuracy_at(&errors, &[0.01]).unwrap().values[0];
    let worst = errors.iter().flatten().fold(0.0f64, |m, e| m.max(*e));
    outcome(
        rra == 1.0 && focal_clean < 1e-6 && focal_dirty < 0.01,
        format!(
            "RRA@0.01deg = {rra} over {} pairs (worst {worst:.2e} deg); focal rel. error noiseless {focal_clean:.2e} (tol 1e-6), 20% outliers {focal_dirty:.2e} (tol 1e-2)",
            pairs.len()
        ),
    )
}

fn metric_suite() -> Outcome {
    // three two-camera sets whose relative rotations are off by 3, 7 and 20 degrees
    let mut records = Vec::new();
    for (k, deg) in [3.0f64, 7.0, 20.0].into_iter().enumerate() {
        let a = ImageId(2 * k as u32);
        let b = ImageId(2 * k as u32 + 1);
        let gt_b = CameraPose::new(UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3), Vector3::new(1.0, 2.0, 3.0));
        let off = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), deg.to_radians());
        let pred_b = CameraPose::new(off * gt_b.rotation(), *gt_b.translation());
        let gt = BTreeMap::from([(a, CameraPose::identity()), (b, gt_b)]);
        let pred = BTreeMap::from([(a, Some(CameraPose::identity())), (b, Some(pred_b))]);
        records.extend(evaluate_poses(&pred, &gt).unwrap());
    }
    let acc = camera_accuracy(&records, &[5.0, 10.0, 15.0]).unwrap();
    let want = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
    let rra_err = acc.rra.values.iter().zip(want).map(|(v, w)| (v - w).abs()).fold(0.0, f64::max);

    let (w, h) = (8, 6);
    let gt_pts: Vec<Vector3<f64>> = (0..w * h).map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.1, 5.0 + i as f64)).collect();
    let gt = Pointmap::new(w, h, gt_pts.clone(), vec![true; (w * h) as usize]).unwrap();
    let shifted = gt_pts.iter().map(|p| p + Vector3::new(0.75, 0.0, 0.0)).collect();
    let pred = Pointmap::new(w, h, shifted, vec![true; (w * h) as usize]).unwrap();
    let delta = pointmap_delta(&[&pred], &[&gt], &Sim3Transform::identity(), &[0.5, 1.0, 2.0]).unwrap();
    let delta_ok = delta.values == vec![0.0, 1.0, 1.0];
    outcome(
        rra_err <= 1e-12 && delta_ok,
        format!(
            "RRA@{{5,10,15}} = {:?} (max error {rra_err:.1e}, tol 1e-12); 0.75 m offset delta@{{0.5,1,2}} = {:?} (exact {{0,1,1}})",
            acc.rra.values, delta.values
        ),
    )
}

fn delta_invariance() -> Outcome {
    let b = make_benchmark_scene(&BenchmarkConfig::default()).unwrap();
    let thresholds = [0.5, 1.0, 2.0];
    let cfg = AlignConfig::default();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (k, (a, bb, rel)) in b.pair_poses.iter().take(4).enumerate() {
        let _ = a;
        let ib = b.scene.camera_index(*bb).unwrap();
        let gt = Pointmap::from_depth(&b.depths[ib], &b.scene.cameras[ib].intrinsics, rel).unwrap();
        let pred = corrupt_pointmap(&gt, &Sim3Transform::identity(), 0.3, 0.1, k as u64).unwrap();
        let delta = |p: &Pointmap| {
            let t = ransac_umeyama_align(&[p], &[&gt], &cfg).unwrap().transform;
            pointmap_delta(&[p], &[&gt], &t, &thresholds).unwrap().values
        };
        let base = delta(&pred);
        for s in 0..5u64 {
            let sim = random_similarity((0.1, 10.0), 100.0, 1000 * k as u64 + s).unwrap();
            let moved = delta(&pred.transformed(&sim));
            for (x, y) in base.iter().zip(&moved) {
                worst = worst.max((x - y).abs());
            }
            cases += 1;
        }
    }
    outcome(worst < 1e-9, format!("max |delta change| = {worst:.1e} over {cases} random similarities (tol 1e-9)"))
}

fn triangulation() -> Outcome {
    let bench = make_localization_benchmark(&LocalizationBenchmarkConfig { queries: 0, ..Default::default() }).unwrap();
    let s = &bench.scene;
    let n = s.cameras.len();
    let mut sets = Vec::new();
    let mut truth = std::collections::HashMap::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let (m, labels) = synth_matches_labeled(s, s.cameras[a].id, s.cameras[b].id, &SynthMatchConfig::default()).unwrap();
            for (c, l) in m.correspondences.iter().zip(&labels) {
                truth.insert((m.image_a.0, c.pixel_a.x.to_bits(), c.pixel_a.y.to_bits()), l.unwrap());
            }
            sets.push(m);
        }
    }
    let recon = triangulate_scene(&sets, s.recon_images(), FrameLabel::SceneLocalMetric, &TriangulationConfig::default()).unwrap();
    let good = recon
        .points
        .iter()
        .filter(|p| {
            p.track
                .iter()
                .find_map(|o| truth.get(&(o.image.0, o.pixel.x.to_bits(), o.pixel.y.to_bits())))
                .is_some_and(|&gi| (p.position - s.points[gi].position).norm() < 1e-4)
        })
        .count();
    let frac = good as f64 / recon.points.len().max(1) as f64;

    // constructed tracks around a point 100 m in front of the cameras
    let cfg = TriangulationConfig::default();
    let target = Vector3::new(0.0, 100.0, 10.0);
    let cam = |id: u32, x: f64| camera_looking_at(ImageId(id), Vector3::new(x, 0.0, 10.0), target, 60.0, 640, 480).unwrap();
    let cams = [cam(0, 0.0), cam(1, 1.0), cam(2, 20.0), cam(3, -20.0)];
    let images: Vec<ReconImage> = cams.iter().map(|c| c.recon_image()).collect();
    let map = camera_map(&images);
    let obs = |id: u32, p: &Vector3<f64>, offset: f64| {
        let c = &cams[id as usize];
        let px = c.intrinsics.project_unchecked(&c.pose.transform_point(p));
        Observation { image: ImageId(id), pixel: px + Vector2::new(offset, 0.0) }
    };
    let track = |o: Vec<Observation<f64>>| Track { observations: o, point: None };
    let p = target + Vector3::new(3.0, 0.0, 2.0);
    let accepted = triangulate_track(&track(vec![obs(0, &p, 0.0), obs(2, &p, 0.0)]), &map, &cfg).is_some();
    // 1 m baseline at 100 m: about 0.6 degrees of parallax
    let narrow = triangulate_track(&track(vec![obs(0, &p, 0.0), obs(1, &p, 0.0)]), &map, &cfg).is_none();
    let shifted = triangulate_track(&track(vec![obs(0, &p, 0.0), obs(2, &p, 0.0), obs(3, &p, 25.0)]), &map, &cfg).is_none();
    let behind = Vector3::new(0.0, -100.0, 10.0);
    let cheirality = triangulate_track(&track(vec![obs(0, &behind, 0.0), obs(2, &behind, 0.0)]), &map, &cfg).is_none();
    let single = triangulate_track(&track(vec![obs(0, &p, 0.0)]), &map, &cfg).is_none();
    outcome(
        frac >= 0.99 && accepted && narrow && shifted && cheirality && single,
        format!(
            "{good}/{} points within 1e-4 m ({:.2}%, need 99%); control track accepted: {accepted}; rejected: narrow baseline {narrow}, 25 px outlier {shifted}, behind cameras {cheirality}, single view {single}",
            recon.points.len(),
            100.0 * frac
        ),
    )
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let start = Instant::now();
    common::run_chain(a.path(), 1, 11);
    common::run_chain(b.path(), 4, 11);
    let (sa, sb) = (common::snapshot(a.path()), common::snapshot(b.path()));
    let differing: Vec<&String> = sa.iter().filter(|(k, v)| sb.get(*k) != Some(v)).map(|(k, _)| k).collect();
    let same_files = sa.len() == sb.len();
    outcome(
        same_files && differing.is_empty(),
        format!(
            "{} files compared between --threads 1 and --threads 4, {} differ{}; {:.2} s",
            sa.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({differing:?})") },
            start.elapsed().as_secs_f64()
        ),
    )
}

fn performance() -> Outcome {
    let mesh = generate_city(&CityConfig::default()).unwrap();
    let cams = ring_cameras(0, 100, Vector3::zeros(), (150.0, 250.0), (40.0, 150.0), 60.0, (320, 240), 9).unwrap();
    let caster = RayCaster::new(&mesh);
    let depths: Vec<DepthMap> = cams.iter().map(|c| render_depth_with(&caster, &c.intrinsics, &c.pose, c.id)).collect();
    let cc: Vec<CovisCamera> = cams
        .iter()
        .map(|c| CovisCamera { intrinsics: c.intrinsics, pose: c.pose, frame: FrameLabel::SceneLocalMetric })
        .collect();
    let timed = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let start = Instant::now();
        let c = pool.install(|| covisibility_matrix(&depths, &cc, &CovisibilityConfig::default()).unwrap());
        (c, start.elapsed().as_secs_f64())
    };
    let (c1, t1) = timed(1);
    let (c8, t8) = timed(8);
    let speedup = t1 / t8;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        t1 < 60.0 && speedup >= 3.0 && c1 == c8,
        format!(
            "single thread {t1:.2} s (limit 60 s); 8 threads {t8:.2} s, speedup {speedup:.2}x (need 3x); {cores} core(s) available; results equal: {}",
            c1 == c8
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Sim(3) recovery", sim3_recovery),
        ("covisibility oracle equivalence", covis_oracle_equivalence),
        ("AM/HM score", am_hm_score),
        ("localization end-to-end", localization),
        ("pose from pointmap", pose_from_pointmap),
        ("metric suite", metric_suite),
        ("delta alignment invariance", delta_invariance),
        ("triangulation accuracy", triangulation),
        ("CLI determinism", determinism),
        ("covisibility performance", performance),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
