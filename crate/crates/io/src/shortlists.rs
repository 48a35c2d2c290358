//! Retrieval shortlists: map images to match each query against.

use std::path::Path;

use cvforge_core::ImageId;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fsutil::{check_version, read_json, write_json};

pub const SHORTLISTS_VERSION: &str = "cvforge-shortlists/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistEntry {
    pub query: u32,
    pub map_images: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortlists {
    pub version: String,
    pub queries: Vec<ShortlistEntry>,
}

impl Shortlists {
    pub fn new(queries: Vec<ShortlistEntry>) -> Self {
        Self {
            version: SHORTLISTS_VERSION.into(),
            queries,
        }
    }

    pub fn get(&self, query: ImageId) -> Option<Vec<ImageId>> {
        self.queries
            .iter()
            .find(|e| e.query == query.0)
            .map(|e| e.map_images.iter().map(|&i| ImageId(i)).collect())
    }
}

pub fn read_shortlists(path: &Path) -> Result<Shortlists> {
    let s: Shortlists = read_json(path)?;
    check_version(path, &s.version, SHORTLISTS_VERSION)?;
    let mut seen = std::collections::HashSet::new();
    for (i, e) in s.queries.iter().enumerate() {
        if !seen.insert(e.query) {
            return Err(IoError::DuplicateId {
                path: path.to_path_buf(),
                id: e.query,
                location: format!("queries[{i}]"),
            });
        }
    }
    Ok(s)
}

pub fn write_shortlists(path: &Path, s: &Shortlists) -> Result<()> {
    write_json(path, s)
}
