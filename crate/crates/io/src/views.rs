//! Generated viewpoints as JSON records; meters and degrees throughout.

use std::path::Path;

use cvforge_core::viewgen::ViewpointSpec;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fsutil::{check_version, read_json, write_json};

pub const VIEWS_VERSION: &str = "cvforge-views/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub target_index: usize,
    pub eye_m: [f64; 3],
    pub target_m: [f64; 3],
    pub world_up: [f64; 3],
    pub altitude_above_ground_m: f64,
    pub hfov_deg: f64,
    pub time_tag: String,
    pub pose_qwxyz_world2cam: [f64; 4],
    pub pose_t_world2cam_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewsFile {
    pub version: String,
    pub frame: String,
    pub views: Vec<ViewRecord>,
}

impl ViewRecord {
    pub fn from_spec(v: &ViewpointSpec) -> cvforge_core::Result<Self> {
        let pose = v.pose()?;
        let t = pose.translation();
        Ok(Self {
            target_index: v.target_index,
            eye_m: v.eye.into(),
            target_m: v.target.into(),
            world_up: v.up_hint.into(),
            altitude_above_ground_m: v.altitude_above_ground_m,
            hfov_deg: v.hfov_deg,
            time_tag: v.time_tag.clone(),
            pose_qwxyz_world2cam: pose.wxyz(),
            pose_t_world2cam_m: [t.x, t.y, t.z],
        })
    }

    pub fn to_spec(&self) -> ViewpointSpec {
        ViewpointSpec {
            target_index: self.target_index,
            eye: Vector3::from(self.eye_m),
            target: Vector3::from(self.target_m),
            up_hint: Vector3::from(self.world_up),
            altitude_above_ground_m: self.altitude_above_ground_m,
            hfov_deg: self.hfov_deg,
            time_tag: self.time_tag.clone(),
        }
    }
}

pub fn write_views(path: &Path, frame: &str, views: &[ViewpointSpec]) -> Result<()> {
    let views = views.iter().map(ViewRecord::from_spec).collect::<cvforge_core::Result<Vec<_>>>()?;
    write_json(
        path,
        &ViewsFile {
            version: VIEWS_VERSION.into(),
            frame: frame.into(),
            views,
        },
    )
}

pub fn read_views(path: &Path) -> Result<ViewsFile> {
    let f: ViewsFile = read_json(path)?;
    check_version(path, &f.version, VIEWS_VERSION)?;
    for (i, v) in f.views.iter().enumerate() {
        if !(v.hfov_deg > 0.0 && v.hfov_deg < 180.0) {
            return Err(IoError::schema(path, format!("views[{i}].hfov_deg"), "must lie in (0, 180)"));
        }
    }
    Ok(f)
}
