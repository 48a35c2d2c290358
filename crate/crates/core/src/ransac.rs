//! Shared RANSAC plumbing.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    /// Inlier threshold in the residual's unit (meters or pixels).
    pub threshold: f64,
    pub confidence: f64,
    pub max_iterations: usize,
    pub min_iterations: usize,
    pub seed: u64,
}

impl RansacConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            ..Self::default()
        }
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            confidence: 0.999,
            max_iterations: 10_000,
            min_iterations: 50,
            seed: 0,
        }
    }
}

/// Iterations needed to draw one all-inlier sample of `sample_size` with the
/// requested confidence at the given inlier ratio.
pub fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64) -> usize {
    if inlier_ratio >= 1.0 {
        return 1;
    }
    if inlier_ratio <= 0.0 {
        return usize::MAX;
    }
    let p_good = inlier_ratio.powi(sample_size as i32);
    let denom = (1.0 - p_good).ln();
    if denom >= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / denom;
    if n.is_finite() {
        n.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

pub(crate) fn sample_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    index::sample(rng, n, k).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_bound() {
        assert_eq!(required_iterations(1.0, 3, 0.999), 1);
        // 1 - 0.5^3 = 0.875; ln(0.001)/ln(0.875) = 51.7
        assert_eq!(required_iterations(0.5, 3, 0.999), 52);
        assert_eq!(required_iterations(0.0, 3, 0.999), usize::MAX);
    }

    #[test]
    fn samples_are_distinct_and_deterministic() {
        let cfg = RansacConfig::default();
        let mut a = cfg.rng();
        let mut b = cfg.rng();
        for _ in 0..100 {
            let s = sample_indices(&mut a, 10, 4);
            assert_eq!(s, sample_indices(&mut b, 10, 4));
            let mut d = s.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), 4);
        }
    }
}
