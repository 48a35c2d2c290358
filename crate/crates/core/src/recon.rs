//! Reconstruction container moved between pipeline stages.

use std::collections::{HashMap, HashSet};
use std::fmt;

use nalgebra::{Vector2, Vector3};

use crate::error::{domain, Result};
use crate::geom::{CameraIntrinsics, CameraPose, GeodeticCoord};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImageId(pub u32);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Coordinate frame a reconstruction lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameLabel {
    /// Arbitrary SfM frame, unknown scale.
    Local,
    Ecef,
    /// Metric frame with +z up (east-north-up or synthetic world).
    SceneLocalMetric,
}

impl FrameLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            FrameLabel::Local => "local",
            FrameLabel::Ecef => "ecef",
            FrameLabel::SceneLocalMetric => "scene-local-metric",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "local" => Some(FrameLabel::Local),
            "ecef" => Some(FrameLabel::Ecef),
            "scene-local-metric" => Some(FrameLabel::SceneLocalMetric),
            _ => None,
        }
    }
}

impl fmt::Display for FrameLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconImage<T: Real> {
    pub id: ImageId,
    pub intrinsics: CameraIntrinsics<T>,
    pub pose: CameraPose<T>,
    pub gps: Option<GeodeticCoord<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T: Real> {
    pub image: ImageId,
    pub pixel: Vector2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePoint<T: Real> {
    pub id: u64,
    pub position: Vector3<T>,
    pub track: Vec<Observation<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneReconstruction<T: Real> {
    pub images: Vec<ReconImage<T>>,
    pub points: Vec<ScenePoint<T>>,
    pub frame: FrameLabel,
}

impl<T: Real> SceneReconstruction<T> {
    pub fn new(images: Vec<ReconImage<T>>, frame: FrameLabel) -> Self {
        Self {
            images,
            points: Vec::new(),
            frame,
        }
    }

    pub fn image(&self, id: ImageId) -> Option<&ReconImage<T>> {
        self.images.iter().find(|im| im.id == id)
    }

    pub fn image_index(&self) -> HashMap<ImageId, usize> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, im)| (im.id, i))
            .collect()
    }

    /// Checks image-id uniqueness and track references.
    pub fn validate(&self) -> Result<()> {
        let index = self.image_index();
        if index.len() != self.images.len() {
            return Err(domain("duplicate image id in reconstruction"));
        }
        for p in &self.points {
            if p.track.len() < 2 {
                return Err(domain(format!("point {} observed by fewer than 2 images", p.id)));
            }
            let mut seen = HashSet::new();
            for obs in &p.track {
                if !index.contains_key(&obs.image) {
                    return Err(domain(format!(
                        "point {} references unknown image {}",
                        p.id, obs.image
                    )));
                }
                if !seen.insert(obs.image) {
                    return Err(domain(format!(
                        "point {} observed twice in image {}",
                        p.id, obs.image
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reprojection residuals in pixels for every track observation, in track order.
    pub fn reprojection_residuals(&self) -> Vec<T> {
        let index = self.image_index();
        let mut out = Vec::new();
        for p in &self.points {
            for obs in &p.track {
                let im = &self.images[index[&obs.image]];
                let xc = im.pose.transform_point(&p.position);
                let px = im.intrinsics.project_unchecked(&xc);
                out.push((px - obs.pixel).norm());
            }
        }
        out
    }
}
