//! Match text files: one correspondence per line, `imgA imgB uA vA uB vB score`.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cvforge_core::{ImageId, MatchSet};
use nalgebra::Vector2;

use crate::error::{IoError, Result};
use crate::fsutil::{read_string, write_atomic};
use crate::manifest::SceneManifest;

pub fn format_match_set(set: &MatchSet) -> String {
    let mut out = String::new();
    for c in &set.correspondences {
        writeln!(
            out,
            "{} {} {} {} {} {} {}",
            set.image_a, set.image_b, c.pixel_a.x, c.pixel_a.y, c.pixel_b.x, c.pixel_b.y, c.score
        )
        .unwrap();
    }
    out
}

pub fn match_file_name(a: ImageId, b: ImageId) -> String {
    format!("{a}_{b}.txt")
}

pub fn write_match_file(path: &Path, set: &MatchSet) -> Result<()> {
    write_atomic(path, format_match_set(set).as_bytes())
}

pub fn write_match_dir(dir: &Path, sets: &[MatchSet]) -> Result<()> {
    for s in sets {
        write_match_file(&dir.join(match_file_name(s.image_a, s.image_b)), s)?;
    }
    Ok(())
}

/// Parses one file; correspondences are grouped by ordered image pair.
pub fn parse_match_text(path: &Path, text: &str) -> Result<Vec<MatchSet>> {
    let mut sets: BTreeMap<(u32, u32), MatchSet> = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| IoError::Parse {
            path: path.to_path_buf(),
            line: ln + 1,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let id = |s: &str| s.parse::<u32>().map_err(|_| err(format!("bad image id {s:?}")));
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad number {s:?}")))
        };
        let (a, b) = (id(fields[0])?, id(fields[1])?);
        if a == b {
            return Err(err(format!("image {a} matched to itself")));
        }
        let pa = Vector2::new(num(fields[2])?, num(fields[3])?);
        let pb = Vector2::new(num(fields[4])?, num(fields[5])?);
        let score = num(fields[6])?;
        sets.entry((a, b))
            .or_insert_with(|| MatchSet::new(ImageId(a), ImageId(b)))
            .push(pa, pb, score);
    }
    for s in sets.values() {
        let mut seen = HashSet::new();
        for c in &s.correspondences {
            let key = [c.pixel_a.x, c.pixel_a.y, c.pixel_b.x, c.pixel_b.y].map(f64::to_bits);
            if !seen.insert(key) {
                return Err(IoError::format(
                    path,
                    format!("duplicate correspondence between images {} and {}", s.image_a, s.image_b),
                ));
            }
        }
    }
    Ok(sets.into_values().collect())
}

pub fn read_match_file(path: &Path) -> Result<Vec<MatchSet>> {
    parse_match_text(path, &read_string(path)?)
}

/// Every `*.txt` file of the directory, in file-name order.
pub fn read_match_dir(dir: &Path) -> Result<Vec<MatchSet>> {
    let entries = std::fs::read_dir(dir).map_err(|e| IoError::io(dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for e in entries {
        let p = e.map_err(|e| IoError::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "txt") {
            files.push(p);
        }
    }
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_match_file(&f)?);
    }
    Ok(out)
}

/// Rejects matches naming images the manifest lacks or pixels outside them.
pub fn check_against_manifest(path: &Path, sets: &[MatchSet], m: &SceneManifest) -> Result<()> {
    for s in sets {
        for (id, pick) in [(s.image_a, true), (s.image_b, false)] {
            let Some(im) = m.image(id) else {
                continue;
            };
            let (w, h) = (im.intrinsics.width as f64, im.intrinsics.height as f64);
            for c in &s.correspondences {
                let p = if pick { c.pixel_a } else { c.pixel_b };
                if !(p.x >= 0.0 && p.x < w && p.y >= 0.0 && p.y < h) {
                    return Err(IoError::format(
                        path,
                        format!("pixel ({}, {}) lies outside image {id}", p.x, p.y),
                    ));
                }
            }
        }
    }
    Ok(())
}
