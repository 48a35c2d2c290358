//! CVD1 depth rasters and CVP1 pointmaps: raw little-endian float32 with a
//! JSON sidecar at `<file>.json`.

use std::path::{Path, PathBuf};

use cvforge_core::covis::DepthMap;
use cvforge_core::eval::Pointmap;
use cvforge_core::ImageId;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fsutil::{read_bytes, read_json, write_atomic, write_json};

pub const DEPTH_FORMAT: &str = "CVD1";
pub const POINTMAP_FORMAT: &str = "CVP1";
pub const POINTMAP_FRAME: &str = "view-A";

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub format: String,
    pub width: u32,
    pub height: u32,
    pub image_id: u32,
    pub units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointmapSidecar {
    pub format: String,
    pub width: u32,
    pub height: u32,
    pub frame: String,
    pub units: String,
    /// Relative to the sidecar; one byte per pixel, 1 = valid.
    pub mask_file: String,
}

fn f32_bytes(values: impl Iterator<Item = f32>) -> Vec<u8> {
    values.flat_map(f32::to_le_bytes).collect()
}

fn read_f32s(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = read_bytes(path)?;
    let want = expected as u64 * 4;
    if bytes.len() as u64 != want {
        return Err(IoError::Truncated {
            path: path.to_path_buf(),
            expected: want,
            found: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_tag(path: &Path, field: &str, found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(IoError::schema(path, field, format!("expected {expected:?}, found {found:?}")))
    }
}

pub fn write_depth(path: &Path, d: &DepthMap) -> Result<()> {
    write_atomic(path, &f32_bytes(d.data.iter().copied()))?;
    write_json(
        &sidecar_path(path),
        &DepthSidecar {
            format: DEPTH_FORMAT.into(),
            width: d.width,
            height: d.height,
            image_id: d.image.0,
            units: "m".into(),
        },
    )
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let side_path = sidecar_path(path);
    let side: DepthSidecar = read_json(&side_path)?;
    check_tag(&side_path, "format", &side.format, DEPTH_FORMAT)?;
    check_tag(&side_path, "units", &side.units, "m")?;
    let data = read_f32s(path, side.width as usize * side.height as usize)?;
    DepthMap::new(ImageId(side.image_id), side.width, side.height, data)
        .map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write_pointmap(path: &Path, pm: &Pointmap) -> Result<()> {
    let mask_name = format!(
        "{}.mask",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    );
    write_atomic(
        path,
        &f32_bytes(pm.points.iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32])),
    )?;
    let mask: Vec<u8> = pm.valid.iter().map(|&v| v as u8).collect();
    write_atomic(&path.with_file_name(&mask_name), &mask)?;
    write_json(
        &sidecar_path(path),
        &PointmapSidecar {
            format: POINTMAP_FORMAT.into(),
            width: pm.width,
            height: pm.height,
            frame: POINTMAP_FRAME.into(),
            units: "m".into(),
            mask_file: mask_name,
        },
    )
}

pub fn read_pointmap(path: &Path) -> Result<Pointmap> {
    let side_path = sidecar_path(path);
    let side: PointmapSidecar = read_json(&side_path)?;
    check_tag(&side_path, "format", &side.format, POINTMAP_FORMAT)?;
    check_tag(&side_path, "frame", &side.frame, POINTMAP_FRAME)?;
    check_tag(&side_path, "units", &side.units, "m")?;
    let n = side.width as usize * side.height as usize;
    let raw = read_f32s(path, 3 * n)?;
    let mask_path = path.with_file_name(&side.mask_file);
    let mask = read_bytes(&mask_path)?;
    if mask.len() != n {
        return Err(IoError::Truncated {
            path: mask_path,
            expected: n as u64,
            found: mask.len() as u64,
        });
    }
    if let Some(b) = mask.iter().find(|&&b| b > 1) {
        return Err(IoError::format(&mask_path, format!("mask byte {b} is neither 0 nor 1")));
    }
    let points = raw
        .chunks_exact(3)
        .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    Pointmap::new(side.width, side.height, points, mask.iter().map(|&b| b == 1).collect())
        .map_err(|e| IoError::format(path, e.to_string()))
}
