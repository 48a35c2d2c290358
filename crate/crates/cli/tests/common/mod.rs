#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub fn cvforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvforge"))
        .current_dir(dir)
        .args(args)
        .env_remove("CVFORGE_LOG")
        .output()
        .expect("spawn cvforge")
}

fn step(dir: &Path, threads: &str, seed: &str, args: &[&str]) {
    let mut full = vec!["--seed", seed, "--threads", threads];
    full.extend_from_slice(args);
    let out = cvforge(dir, &full);
    assert!(
        out.status.success(),
        "cvforge {:?} exited with {:?}\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Every stage of the pipeline on a freshly generated benchmark scene in `dir`.
pub fn run_chain(dir: &Path, threads: usize, seed: u64) {
    let (t, s) = (threads.to_string(), seed.to_string());
    let run = |args: &[&str]| step(dir, &t, &s, args);
    run(&["synth-scene", "--out", "scene"]);
    run(&["triangulate", "--scene", "scene/map.json", "--matches", "scene/matches/noisy", "--out", "out/map.json"]);
    run(&[
        "localize", "--map", "out/map.json", "--queries", "scene/queries.json", "--shortlists",
        "scene/shortlists.json", "--matches", "scene/matches/noisy", "--out", "out/localized.json",
        "--report", "out/localize_report.json",
    ]);
    run(&["georegister", "--scene", "scene/local.json", "--out", "out/ecef.json", "--report", "out/georeg_report.json"]);
    run(&["sample-views", "--scene", "out/map.json", "--k", "20", "--out", "out/views.json"]);
    run(&["render-depth", "--scene", "scene/manifest.json", "--out", "out/depth"]);
    run(&["covis", "--scene", "scene/manifest.json", "--out", "out/covis.bin"]);
    run(&["pairs", "--covis", "out/covis.bin", "--scene", "scene/manifest.json", "--out", "out/pairs.csv"]);
    run(&["eval-pose", "--pred", "out/localized.json", "--gt", "scene/manifest.json", "--out", "out/pose_report.json"]);
    run(&[
        "eval-pointmap", "--pred", "scene/pointmaps/pred", "--gt", "scene/pointmaps/gt", "--out",
        "out/pointmap_report.json",
    ]);
}

/// Relative path -> contents for every file below `root`.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
