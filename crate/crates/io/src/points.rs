//! Triangulated points with their tracks.

use std::path::Path;

use cvforge_core::{Observation, ScenePoint};
use cvforge_core::{FrameLabel, ImageId, SceneReconstruction};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fsutil::{check_version, read_json, write_json};
use crate::manifest::{resolve, SceneManifest};

pub const POINTS_VERSION: &str = "cvforge-points/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: u64,
    pub xyz: [f64; 3],
    /// `(image id, u, v)` in pixels.
    pub track: Vec<(u32, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointsFile {
    pub version: String,
    pub frame: String,
    pub points: Vec<PointRecord>,
}

impl PointsFile {
    pub fn from_points(frame: FrameLabel, points: &[ScenePoint]) -> Self {
        Self {
            version: POINTS_VERSION.to_string(),
            frame: frame.as_str().to_string(),
            points: points
                .iter()
                .map(|p| PointRecord {
                    id: p.id,
                    xyz: [p.position.x, p.position.y, p.position.z],
                    track: p.track.iter().map(|o| (o.image.0, o.pixel.x, o.pixel.y)).collect(),
                })
                .collect(),
        }
    }

    pub fn to_points(&self) -> Vec<ScenePoint> {
        self.points
            .iter()
            .map(|r| ScenePoint {
                id: r.id,
                position: Vector3::from(r.xyz),
                track: r
                    .track
                    .iter()
                    .map(|&(im, u, v)| Observation {
                        image: ImageId(im),
                        pixel: Vector2::new(u, v),
                    })
                    .collect(),
            })
            .collect()
    }
}

pub fn read_points(path: &Path) -> Result<PointsFile> {
    let f: PointsFile = read_json(path)?;
    check_version(path, &f.version, POINTS_VERSION)?;
    if FrameLabel::parse(&f.frame).is_none() {
        return Err(IoError::schema(path, "frame", format!("unknown frame label {:?}", f.frame)));
    }
    for (i, p) in f.points.iter().enumerate() {
        if !p.xyz.iter().all(|v| v.is_finite()) {
            return Err(IoError::schema(path, format!("points[{i}].xyz"), "must be finite"));
        }
    }
    Ok(f)
}

pub fn write_points(path: &Path, f: &PointsFile) -> Result<()> {
    write_json(path, f)
}

/// Cameras from the manifest plus points from its points file, if any.
pub fn load_reconstruction(manifest_path: &Path, m: &SceneManifest) -> Result<SceneReconstruction> {
    let mut recon = SceneReconstruction::new(m.recon_images(manifest_path)?, m.frame_label());
    if let Some(rel) = &m.points_file {
        let ppath = resolve(manifest_path, rel);
        let pf = read_points(&ppath)?;
        if pf.frame != m.frame {
            return Err(IoError::schema(
                &ppath,
                "frame",
                format!("points are in frame {} but the manifest is in {}", pf.frame, m.frame),
            ));
        }
        recon.points = pf.to_points();
    }
    recon
        .validate()
        .map_err(|e| IoError::schema(manifest_path, "points_file", e.to_string()))?;
    Ok(recon)
}

/// Writes points next to the manifest as `<stem>.points.json` and the manifest itself.
pub fn save_reconstruction(manifest_path: &Path, template: &SceneManifest, recon: &SceneReconstruction) -> Result<SceneManifest> {
    let mut m = template.clone();
    m.frame = recon.frame.as_str().to_string();
    m.update_from_recon(&recon.images);
    if recon.points.is_empty() {
        m.points_file = None;
    } else {
        let stem = manifest_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scene".into());
        let rel = format!("{stem}.points.json");
        write_points(&resolve(manifest_path, &rel), &PointsFile::from_points(recon.frame, &recon.points))?;
        m.points_file = Some(rel);
    }
    crate::manifest::write_manifest(manifest_path, &m)?;
    Ok(m)
}
