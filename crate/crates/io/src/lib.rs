//! File formats for cvforge: scene manifests, points, CVD1 depth rasters,
//! CVP1 pointmaps, CVC1 covisibility matrices, match text files, pair CSVs,
//! shortlists, poses, views, meshes and metrics reports.

pub mod benchmark;
pub mod covis;
pub mod error;
pub mod fsutil;
pub mod manifest;
pub mod matches;
pub mod mesh;
pub mod pairs;
pub mod points;
pub mod poses;
pub mod raster;
pub mod report;
pub mod shortlists;
pub mod views;

pub use error::{IoError, Result};
pub use fsutil::write_atomic;
pub use manifest::{parse_manifest, write_manifest, SceneManifest};
