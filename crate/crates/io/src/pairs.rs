//! Pair lists as CSV: `i,j,c_ij,c_ji,score,class` with a header row.

use std::fmt::Write as _;
use std::path::Path;

use cvforge_core::covis::{PairClass, ScoredPair};

use crate::error::{IoError, Result};
use crate::fsutil::{read_string, write_atomic};

pub const PAIRS_HEADER: &str = "i,j,c_ij,c_ji,score,class";

pub fn format_pairs(pairs: &[ScoredPair]) -> String {
    let mut out = String::from(PAIRS_HEADER);
    out.push('\n');
    for p in pairs {
        writeln!(out, "{},{},{},{},{},{}", p.i, p.j, p.c_ij, p.c_ji, p.score, p.class.as_str()).unwrap();
    }
    out
}

pub fn write_pairs(path: &Path, pairs: &[ScoredPair]) -> Result<()> {
    write_atomic(path, format_pairs(pairs).as_bytes())
}

pub fn parse_pairs(path: &Path, text: &str) -> Result<Vec<ScoredPair>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PAIRS_HEADER => {}
        _ => return Err(IoError::format(path, format!("missing header {PAIRS_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| IoError::Parse {
            path: path.to_path_buf(),
            line: ln + 1,
            msg,
        };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad index {s:?}")));
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
        out.push(ScoredPair {
            i: idx(f[0])?,
            j: idx(f[1])?,
            c_ij: num(f[2])?,
            c_ji: num(f[3])?,
            score: num(f[4])?,
            class: PairClass::parse(f[5]).ok_or_else(|| err(format!("bad class {:?}", f[5])))?,
        });
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<ScoredPair>> {
    parse_pairs(path, &read_string(path)?)
}
