use std::collections::{HashMap, HashSet};

use nalgebra::{Vector2, Vector3};

use super::MatchSet;
use crate::recon::{ImageId, Observation};
use crate::scalar::Real;

/// Grid size used to decide that two matched pixels are the same keypoint.
pub const KEYPOINT_QUANTUM_PX: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeypointKey {
    pub image: ImageId,
    pub qx: i64,
    pub qy: i64,
}

pub fn keypoint_key<T: Real>(image: ImageId, pixel: &Vector2<T>) -> KeypointKey {
    let q = |v: T| (v.as_f64() / KEYPOINT_QUANTUM_PX).round() as i64;
    KeypointKey {
        image,
        qx: q(pixel.x),
        qy: q(pixel.y),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track<T: Real> {
    /// Sorted by image id, at most one entry per image.
    pub observations: Vec<Observation<T>>,
    pub point: Option<Vector3<T>>,
}

struct Forest {
    parent: Vec<usize>,
    images: Vec<HashSet<ImageId>>,
}

impl Forest {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the two roots unless that would put two keypoints of one image together.
    fn try_union(&mut self, ra: usize, rb: usize) -> bool {
        let (big, small) = if self.images[ra].len() >= self.images[rb].len() {
            (ra, rb)
        } else {
            (rb, ra)
        };
        if self.images[small].iter().any(|im| self.images[big].contains(im)) {
            return false;
        }
        let moved = std::mem::take(&mut self.images[small]);
        self.images[big].extend(moved);
        self.parent[small] = big;
        true
    }
}

/// Groups pairwise matches into multi-view tracks.
///
/// A match that would join two keypoints of the same image into one track is
/// kept as a separate two-view track instead of being merged.
pub fn build_tracks<T: Real>(matches: &[MatchSet<T>]) -> Vec<Track<T>> {
    let mut ids: HashMap<KeypointKey, usize> = HashMap::new();
    let mut nodes: Vec<Observation<T>> = Vec::new();
    let mut forest = Forest {
        parent: Vec::new(),
        images: Vec::new(),
    };
    let mut intern = |image: ImageId, pixel: &Vector2<T>, forest: &mut Forest| -> usize {
        *ids.entry(keypoint_key(image, pixel)).or_insert_with(|| {
            let id = nodes.len();
            nodes.push(Observation { image, pixel: *pixel });
            forest.parent.push(id);
            forest.images.push(HashSet::from([image]));
            id
        })
    };

    let mut rejected: Vec<(usize, usize)> = Vec::new();
    for set in matches {
        if set.image_a == set.image_b {
            continue;
        }
        for c in &set.correspondences {
            let a = intern(set.image_a, &c.pixel_a, &mut forest);
            let b = intern(set.image_b, &c.pixel_b, &mut forest);
            let (ra, rb) = (forest.find(a), forest.find(b));
            if ra != rb && !forest.try_union(ra, rb) {
                rejected.push((a.min(b), a.max(b)));
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for n in 0..nodes.len() {
        let r = forest.find(n);
        let g = *slot.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(n);
    }
    let make = |members: &[usize]| {
        let mut observations: Vec<Observation<T>> = members.iter().map(|&m| nodes[m]).collect();
        observations.sort_by_key(|o| o.image);
        Track {
            observations,
            point: None,
        }
    };
    let mut tracks: Vec<Track<T>> = groups
        .iter()
        .filter(|g| g.len() >= 2)
        .map(|g| make(g))
        .collect();

    let mut seen = HashSet::new();
    for (a, b) in rejected {
        if forest.find(a) != forest.find(b) && seen.insert((a, b)) {
            tracks.push(make(&[a, b]));
        }
    }
    tracks
}
