use std::collections::HashMap;

use nalgebra::{DMatrix, Vector3};

use super::tracks::{build_tracks, Track};
use super::MatchSet;
use crate::error::{domain, Result};
use crate::geom::{CameraIntrinsics, CameraPose};
use crate::recon::{FrameLabel, ImageId, ReconImage, ScenePoint, SceneReconstruction};
use crate::scalar::Real;

pub type CameraMap<T> = HashMap<ImageId, (CameraIntrinsics<T>, CameraPose<T>)>;

pub fn camera_map<T: Real>(images: &[ReconImage<T>]) -> CameraMap<T> {
    images
        .iter()
        .map(|im| (im.id, (im.intrinsics, im.pose)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulationConfig {
    pub max_reproj_px: f64,
    pub min_angle_deg: f64,
}

impl Default for TriangulationConfig {
    fn default() -> Self {
        Self {
            max_reproj_px: 4.0,
            min_angle_deg: 1.5,
        }
    }
}

/// Multi-view DLT followed by cheirality, reprojection and ray-angle checks.
/// Returns `None` when the track is rejected.
pub fn triangulate_track<T: Real>(
    track: &Track<T>,
    cameras: &CameraMap<T>,
    cfg: &TriangulationConfig,
) -> Option<Vector3<T>> {
    if track.observations.len() < 2 {
        return None;
    }
    let views: Vec<_> = track
        .observations
        .iter()
        .map(|o| cameras.get(&o.image).map(|cam| (cam, o.pixel)))
        .collect::<Option<Vec<_>>>()?;

    // condition the system around the camera centres
    let centers: Vec<Vector3<T>> = views.iter().map(|((_, pose), _)| pose.center()).collect();
    let n = T::from_usize_lossy(centers.len());
    let origin = centers.iter().fold(Vector3::zeros(), |a, c| a + c) / n;
    let spread = centers
        .iter()
        .map(|c| (c - origin).norm())
        .fold(T::zero(), |a, b| a.max(b));
    let scale = if spread > T::zero() { spread } else { T::one() };

    let mut a = DMatrix::<T>::zeros(2 * views.len(), 4);
    for (k, ((intr, pose), pixel)) in views.iter().enumerate() {
        let x = intr.normalize(pixel);
        let r = pose.rotation_matrix();
        // camera-frame coords of origin + scale * y
        let t = pose.transform_point(&origin);
        let mut p = nalgebra::Matrix3x4::<T>::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(r * scale));
        p.set_column(3, &t);
        let row_u = p.row(0) - p.row(2) * x.x;
        let row_v = p.row(1) - p.row(2) * x.y;
        a.set_row(2 * k, &row_u);
        a.set_row(2 * k + 1, &row_v);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let h = v_t.row(v_t.nrows() - 1);
    let w = h[3];
    if !(w.abs() > T::default_epsilon()) {
        return None;
    }
    let y = Vector3::new(h[0] / w, h[1] / w, h[2] / w);
    let point = origin + y * scale;
    if !point.iter().all(|v| v.is_finite()) {
        return None;
    }

    let max_px = T::lit(cfg.max_reproj_px);
    for ((intr, pose), pixel) in &views {
        let xc = pose.transform_point(&point);
        if !(xc.z > T::zero()) {
            return None;
        }
        if !((intr.project_unchecked(&xc) - pixel).norm() <= max_px) {
            return None;
        }
    }
    let rays: Vec<Vector3<T>> = centers.iter().map(|c| (point - c).normalize()).collect();
    let mut best = T::zero();
    for i in 0..rays.len() {
        for j in (i + 1)..rays.len() {
            let ang = rays[i].cross(&rays[j]).norm().atan2(rays[i].dot(&rays[j]));
            best = best.max(ang);
        }
    }
    if best.rad_to_deg() < T::lit(cfg.min_angle_deg) {
        return None;
    }
    Some(point)
}

/// Builds tracks from `matches` and triangulates each against the fixed cameras.
/// Point ids are the track indices of the surviving tracks.
pub fn triangulate_scene<T: Real>(
    matches: &[MatchSet<T>],
    images: Vec<ReconImage<T>>,
    frame: FrameLabel,
    cfg: &TriangulationConfig,
) -> Result<SceneReconstruction<T>> {
    let cameras = camera_map(&images);
    for m in matches {
        for id in [m.image_a, m.image_b] {
            if !cameras.contains_key(&id) {
                return Err(domain(format!("matches reference unknown image {id}")));
            }
        }
    }
    let tracks = build_tracks(matches);
    let mut scene = SceneReconstruction::new(images, frame);
    for (i, t) in tracks.iter().enumerate() {
        if let Some(p) = triangulate_track(t, &cameras, cfg) {
            scene.points.push(ScenePoint {
                id: i as u64,
                position: p,
                track: t.observations.clone(),
            });
        }
    }
    if scene.points.is_empty() {
        log::warn!("triangulation produced an empty map ({} tracks)", tracks.len());
    }
    Ok(scene)
}
