//! Predicted camera poses. A manifest is accepted wherever a poses file is.

use std::collections::BTreeMap;
use std::path::Path;

use cvforge_core::{CameraPose, ImageId};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{IoError, Result};
use crate::fsutil::{check_version, read_json, write_json};
use crate::manifest::{SceneManifest, MANIFEST_VERSION};

pub const POSES_VERSION: &str = "cvforge-poses/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub id: u32,
    /// Absent when the camera could not be posed.
    pub pose_qwxyz_world2cam: Option<[f64; 4]>,
    pub pose_t_world2cam_m: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub version: String,
    pub poses: Vec<PoseRecord>,
}

impl PosesFile {
    pub fn from_map(poses: &BTreeMap<ImageId, Option<CameraPose>>) -> Self {
        Self {
            version: POSES_VERSION.into(),
            poses: poses
                .iter()
                .map(|(id, p)| PoseRecord {
                    id: id.0,
                    pose_qwxyz_world2cam: p.map(|p| p.wxyz()),
                    pose_t_world2cam_m: p.map(|p| {
                        let t = p.translation();
                        [t.x, t.y, t.z]
                    }),
                })
                .collect(),
        }
    }
}

pub fn write_poses(path: &Path, poses: &BTreeMap<ImageId, Option<CameraPose>>) -> Result<()> {
    write_json(path, &PosesFile::from_map(poses))
}

/// Poses keyed by image id, from a poses file or a scene manifest.
pub fn read_poses(path: &Path) -> Result<BTreeMap<ImageId, Option<CameraPose>>> {
    let raw: Value = read_json(path)?;
    let version = raw.get("version").and_then(Value::as_str).unwrap_or_default().to_string();
    if version == MANIFEST_VERSION {
        let m: SceneManifest = serde_json::from_value(raw).map_err(|e| IoError::json(path, e))?;
        m.validate(path)?;
        return Ok(m.images.iter().map(|im| (im.image_id(), im.pose())).collect());
    }
    check_version(path, &version, POSES_VERSION)?;
    let f: PosesFile = serde_json::from_value(raw).map_err(|e| IoError::json(path, e))?;
    let mut out = BTreeMap::new();
    for (i, r) in f.poses.iter().enumerate() {
        let pose = match (r.pose_qwxyz_world2cam, r.pose_t_world2cam_m) {
            (Some(q), Some(t)) => {
                let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(n - 1.0).abs().lt(&1e-6) || !t.iter().all(|v| v.is_finite()) {
                    return Err(IoError::schema(path, format!("poses[{i}]"), "invalid pose"));
                }
                Some(CameraPose::from_wxyz(q, t.into()))
            }
            (None, None) => None,
            _ => {
                return Err(IoError::schema(
                    path,
                    format!("poses[{i}]"),
                    "rotation and translation must be given together",
                ))
            }
        };
        if out.insert(ImageId(r.id), pose).is_some() {
            return Err(IoError::DuplicateId {
                path: path.to_path_buf(),
                id: r.id,
                location: format!("poses[{i}]"),
            });
        }
    }
    Ok(out)
}
