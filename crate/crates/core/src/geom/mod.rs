//! Camera models, rigid and similarity transforms, geodetic coordinates.

mod camera;
mod geodetic;
mod pose;
mod sim3;

pub use camera::CameraIntrinsics;
pub use geodetic::{
    ecef_to_enu_transform, ecef_to_geodetic, geodetic_to_ecef, EcefCoord, GeodeticCoord, WGS84_A,
    WGS84_F,
};
pub use pose::{relative_pose, rotation_angle, rotation_from_matrix, CameraPose};
pub use sim3::Sim3Transform;
