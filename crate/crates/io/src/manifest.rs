//! Scene manifests: cameras, poses and referenced files of one scene.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use cvforge_core::GeodeticCoord;
use cvforge_core::ReconImage;
use cvforge_core::{CameraIntrinsics, CameraPose, FrameLabel, ImageId};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{IoError, Result};
use crate::fsutil::{check_version, read_json, write_json};

pub const MANIFEST_VERSION: &str = "cvforge-scene/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl From<&CameraIntrinsics> for IntrinsicsRecord {
    fn from(k: &CameraIntrinsics) -> Self {
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

impl IntrinsicsRecord {
    pub fn to_intrinsics(&self) -> cvforge_core::Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageSource {
    Real,
    PseudoSynthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsRecord {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// Ellipsoidal height.
    pub altitude_m: f64,
}

impl GpsRecord {
    pub fn to_geodetic(&self) -> GeodeticCoord {
        GeodeticCoord {
            latitude_deg: self.latitude_deg,
            longitude_deg: self.longitude_deg,
            altitude_m: self.altitude_m,
        }
    }

    pub fn from_geodetic(g: &GeodeticCoord) -> Self {
        Self {
            latitude_deg: g.latitude_deg,
            longitude_deg: g.longitude_deg,
            altitude_m: g.altitude_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestImage {
    pub id: u32,
    pub intrinsics: IntrinsicsRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_qwxyz_world2cam: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_t_world2cam_m: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub altitude_above_ground_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gps: Option<GpsRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_file: Option<String>,
    pub source: ImageSource,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ManifestImage {
    pub fn new(id: ImageId, k: &CameraIntrinsics, pose: Option<&CameraPose>, source: ImageSource) -> Self {
        let mut im = Self {
            id: id.0,
            intrinsics: k.into(),
            pose_qwxyz_world2cam: None,
            pose_t_world2cam_m: None,
            altitude_above_ground_m: None,
            gps: None,
            depth_file: None,
            source,
            extra: Map::new(),
        };
        im.set_pose(pose);
        im
    }

    pub fn image_id(&self) -> ImageId {
        ImageId(self.id)
    }

    pub fn set_pose(&mut self, pose: Option<&CameraPose>) {
        self.pose_qwxyz_world2cam = pose.map(|p| p.wxyz());
        self.pose_t_world2cam_m = pose.map(|p| {
            let t = p.translation();
            [t.x, t.y, t.z]
        });
    }

    pub fn pose(&self) -> Option<CameraPose> {
        let q = self.pose_qwxyz_world2cam?;
        let t = self.pose_t_world2cam_m?;
        Some(CameraPose::from_wxyz(q, t.into()))
    }

    pub fn intrinsics(&self) -> cvforge_core::Result<CameraIntrinsics> {
        self.intrinsics.to_intrinsics()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: String,
    pub frame: String,
    pub images: Vec<ManifestImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_file: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl SceneManifest {
    pub fn new(frame: FrameLabel, images: Vec<ManifestImage>) -> Self {
        Self {
            version: MANIFEST_VERSION.to_string(),
            frame: frame.as_str().to_string(),
            images,
            points_file: None,
            mesh_file: None,
            notes: Vec::new(),
            extra: Map::new(),
        }
    }

    pub fn frame_label(&self) -> FrameLabel {
        FrameLabel::parse(&self.frame).expect("validated frame label")
    }

    pub fn image(&self, id: ImageId) -> Option<&ManifestImage> {
        self.images.iter().find(|im| im.id == id.0)
    }

    pub fn image_mut(&mut self, id: ImageId) -> Option<&mut ManifestImage> {
        self.images.iter_mut().find(|im| im.id == id.0)
    }

    /// Checks everything but file existence; `path` only labels errors.
    pub fn validate(&self, path: &Path) -> Result<()> {
        check_version(path, &self.version, MANIFEST_VERSION)?;
        if FrameLabel::parse(&self.frame).is_none() {
            return Err(IoError::schema(path, "frame", format!("unknown frame label {:?}", self.frame)));
        }
        let mut seen = HashSet::new();
        for (i, im) in self.images.iter().enumerate() {
            let loc = |field: &str| format!("images[{i}].{field}");
            if !seen.insert(im.id) {
                return Err(IoError::DuplicateId {
                    path: path.to_path_buf(),
                    id: im.id,
                    location: format!("images[{i}]"),
                });
            }
            im.intrinsics()
                .map_err(|e| IoError::schema(path, loc("intrinsics"), e.to_string()))?;
            match (im.pose_qwxyz_world2cam, im.pose_t_world2cam_m) {
                (Some(q), Some(t)) => {
                    if !q.iter().chain(&t).all(|v| v.is_finite()) {
                        return Err(IoError::schema(path, loc("pose_qwxyz_world2cam"), "pose must be finite"));
                    }
                    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if (n - 1.0).abs() > 1e-6 {
                        return Err(IoError::schema(
                            path,
                            loc("pose_qwxyz_world2cam"),
                            format!("quaternion norm {n} is not 1"),
                        ));
                    }
                }
                (None, None) => {}
                _ => {
                    return Err(IoError::schema(
                        path,
                        loc("pose_t_world2cam_m"),
                        "rotation and translation must be given together",
                    ))
                }
            }
            if let Some(a) = im.altitude_above_ground_m {
                if !a.is_finite() {
                    return Err(IoError::schema(path, loc("altitude_above_ground_m"), "must be finite"));
                }
            }
            if let Some(g) = &im.gps {
                g.to_geodetic()
                    .validate()
                    .map_err(|e| IoError::schema(path, loc("gps"), e.to_string()))?;
            }
        }
        Ok(())
    }

    /// Files referenced by the manifest, relative to its directory.
    pub fn referenced_files(&self) -> Vec<(String, &str)> {
        let mut out = Vec::new();
        if let Some(p) = &self.points_file {
            out.push(("points_file".to_string(), p.as_str()));
        }
        if let Some(p) = &self.mesh_file {
            out.push(("mesh_file".to_string(), p.as_str()));
        }
        for (i, im) in self.images.iter().enumerate() {
            if let Some(p) = &im.depth_file {
                out.push((format!("images[{i}].depth_file"), p.as_str()));
            }
        }
        out
    }

    /// Every image as a reconstruction camera; all poses must be present.
    pub fn recon_images(&self, path: &Path) -> Result<Vec<ReconImage>> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, im)| {
                let pose = im.pose().ok_or_else(|| {
                    IoError::schema(path, format!("images[{i}]"), format!("image {} has no pose", im.id))
                })?;
                Ok(ReconImage {
                    id: im.image_id(),
                    intrinsics: im.intrinsics()?,
                    pose,
                    gps: im.gps.map(|g| g.to_geodetic()),
                })
            })
            .collect()
    }

    /// Overwrites poses and GPS tags from `images`, matched by id.
    pub fn update_from_recon(&mut self, images: &[ReconImage]) {
        for ri in images {
            if let Some(im) = self.image_mut(ri.id) {
                im.set_pose(Some(&ri.pose));
                im.gps = ri.gps.as_ref().map(GpsRecord::from_geodetic);
            }
        }
    }
}

pub fn resolve(manifest_path: &Path, rel: &str) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new(".")).join(rel)
}

/// Strict parse plus invariant and referenced-file checks.
pub fn parse_manifest(path: &Path) -> Result<SceneManifest> {
    let m: SceneManifest = read_json(path)?;
    m.validate(path)?;
    for (loc, rel) in m.referenced_files() {
        let full = resolve(path, rel);
        if !full.is_file() {
            return Err(IoError::schema(
                path,
                loc,
                format!("referenced file {} does not exist", full.display()),
            ));
        }
    }
    Ok(m)
}

pub fn write_manifest(path: &Path, m: &SceneManifest) -> Result<()> {
    m.validate(path)?;
    write_json(path, m)
}

pub fn manifest_to_bytes(m: &SceneManifest) -> Vec<u8> {
    crate::fsutil::to_canonical_json(m)
}
