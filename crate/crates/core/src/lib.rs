//! Geometry, registration, view generation, SfM, covisibility, evaluation
//! and synthetic scenes for aerial-to-ground 3D vision datasets.
//!
//! Geometry, registration and SfM are generic over `f32`/`f64` through
//! [`scalar::Real`]; the aliases below fix the scalar to `f64`.

pub mod covis;
pub mod error;
pub mod eval;
pub mod geom;
pub mod georeg;
pub mod ransac;
pub mod recon;
pub mod scalar;
pub mod sfm;
pub mod synth;
pub mod viewgen;

pub use error::{Error, Result};
pub use recon::{FrameLabel, ImageId};
pub use scalar::Real;

pub type CameraIntrinsics = geom::CameraIntrinsics<f64>;
pub type CameraPose = geom::CameraPose<f64>;
pub type Sim3Transform = geom::Sim3Transform<f64>;
pub type GeodeticCoord = geom::GeodeticCoord<f64>;
pub type EcefCoord = geom::EcefCoord<f64>;
pub type CorrespondenceSet3D = georeg::CorrespondenceSet3D<f64>;
pub type SceneReconstruction = recon::SceneReconstruction<f64>;
pub type ReconImage = recon::ReconImage<f64>;
pub type ScenePoint = recon::ScenePoint<f64>;
pub type Observation = recon::Observation<f64>;
pub type MatchSet = sfm::MatchSet<f64>;
pub type Track = sfm::Track<f64>;
pub type Match2D3D = sfm::Match2D3D<f64>;
pub type LocalizationQuery = sfm::LocalizationQuery<f64>;
pub type LocalizedQuery = sfm::LocalizedQuery<f64>;

pub type CameraIntrinsics32 = geom::CameraIntrinsics<f32>;
pub type CameraPose32 = geom::CameraPose<f32>;
pub type Sim3Transform32 = geom::Sim3Transform<f32>;
