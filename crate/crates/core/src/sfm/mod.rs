//! Triangulation from known-pose views and query localization against a fixed map.

mod localize;
mod pnp;
mod refine;
mod tracks;
mod triangulate;

pub use localize::{
    lift_matches, localize_queries, LocalizationConfig, LocalizationQuery, LocalizationReport,
    LocalizationStatus, LocalizedQuery, TrackIndex,
};
pub use pnp::{epnp, p3p, ransac_pnp, reprojection_error, Match2D3D, PnpConfig, PnpResult};
pub use refine::{refine_pose, RefineConfig, RefineOutcome};
pub use tracks::{build_tracks, keypoint_key, KeypointKey, Track, KEYPOINT_QUANTUM_PX};
pub use triangulate::{
    camera_map, triangulate_scene, triangulate_track, CameraMap, TriangulationConfig,
};

use nalgebra::Vector2;

use crate::recon::ImageId;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T: Real> {
    pub pixel_a: Vector2<T>,
    pub pixel_b: Vector2<T>,
    pub score: T,
}

/// 2D-2D matches between two images.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet<T: Real> {
    pub image_a: ImageId,
    pub image_b: ImageId,
    pub correspondences: Vec<Correspondence<T>>,
}

impl<T: Real> MatchSet<T> {
    pub fn new(image_a: ImageId, image_b: ImageId) -> Self {
        Self {
            image_a,
            image_b,
            correspondences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.correspondences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correspondences.is_empty()
    }

    pub fn push(&mut self, pixel_a: Vector2<T>, pixel_b: Vector2<T>, score: T) {
        self.correspondences.push(Correspondence {
            pixel_a,
            pixel_b,
            score,
        });
    }

    /// Same matches with the roles of the two images exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            image_a: self.image_b,
            image_b: self.image_a,
            correspondences: self
                .correspondences
                .iter()
                .map(|c| Correspondence {
                    pixel_a: c.pixel_b,
                    pixel_b: c.pixel_a,
                    score: c.score,
                })
                .collect(),
        }
    }
}
