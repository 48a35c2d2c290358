//! Triangle meshes as JSON.

use std::path::Path;

use cvforge_core::synth::TriangleMesh;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{IoError, Result};
use crate::fsutil::{check_version, read_json, write_json};

pub const MESH_VERSION: &str = "cvforge-mesh/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub version: String,
    pub units: String,
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
    pub triangle_ids: Vec<u32>,
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_json(
        path,
        &MeshFile {
            version: MESH_VERSION.into(),
            units: "m".into(),
            vertices: mesh.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
            triangles: mesh.triangles.clone(),
            triangle_ids: mesh.triangle_ids.clone(),
        },
    )
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let f: MeshFile = read_json(path)?;
    check_version(path, &f.version, MESH_VERSION)?;
    let mesh = TriangleMesh {
        vertices: f.vertices.iter().map(|v| Vector3::from(*v)).collect(),
        triangles: f.triangles,
        triangle_ids: f.triangle_ids,
    };
    mesh.validate().map_err(|e| IoError::format(path, e.to_string()))?;
    Ok(mesh)
}
