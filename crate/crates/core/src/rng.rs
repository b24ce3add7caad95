//! Replayable Gaussian increments.
//!
//! Every replica owns two ChaCha streams selected by `(seed, replica,
//! stream)`, so any replica can be regenerated in isolation and workers
//! never share generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::paths::TimeGrid;

pub const STREAM_W: u64 = 0;
pub const STREAM_B: u64 = 1;
/// First stream id reserved for auxiliary samplers (baselines, starts).
pub(crate) const STREAM_AUX: u64 = 1 << 62;

pub fn stream_rng(seed: u64, replica: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica.wrapping_mul(2).wrapping_add(stream));
    rng
}

pub(crate) fn aux_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_AUX.wrapping_add(index));
    rng
}

/// Fills `out` with independent `N(0, scale²)` draws.
pub(crate) fn fill_normals(rng: &mut ChaCha8Rng, scale: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = scale * z;
    }
}

/// Brownian increments for `W` (asset) and `B` (volatility) on one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    pub grid: TimeGrid,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub seed: u64,
    pub replica_index: u64,
}

impl NoiseBundle {
    pub fn generate(grid: TimeGrid, seed: u64, replica_index: u64) -> Self {
        let n = grid.n_steps();
        let mut dw = vec![0.0; n];
        let mut db = vec![0.0; n];
        fill_replica(grid, seed, replica_index, &mut dw, &mut db);
        Self { grid, dw, db, seed, replica_index }
    }

    /// `B` at the nodes, `B(0) = 0`.
    pub fn brownian_b(&self) -> Vec<f64> {
        crate::paths::cumulative(&self.db, 1.0, 0.0)
    }
}

pub(crate) fn fill_replica(grid: TimeGrid, seed: u64, replica: u64, dw: &mut [f64], db: &mut [f64]) {
    let sd = grid.dt().sqrt();
    fill_normals(&mut stream_rng(seed, replica, STREAM_W), sd, dw);
    fill_normals(&mut stream_rng(seed, replica, STREAM_B), sd, db);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_bit_identical() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let a = NoiseBundle::generate(g, 42, 7);
        let b = NoiseBundle::generate(g, 42, 7);
        assert_eq!(a, b);
        let c = NoiseBundle::generate(g, 42, 8);
        assert_ne!(a.dw, c.dw);
        assert_ne!(a.dw, a.db);
    }

    #[test]
    fn increments_have_step_variance() {
        let g = TimeGrid::new(2.0, 100_000).unwrap();
        let nb = NoiseBundle::generate(g, 1, 0);
        let dt = g.dt();
        for v in [&nb.dw, &nb.db] {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!(mean.abs() < 4.0 * (dt / n).sqrt());
            assert!((var / dt - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
        }
        let corr = nb.dw.iter().zip(&nb.db).map(|(a, b)| a * b).sum::<f64>() / (100_000.0 * dt);
        assert!(corr.abs() < 4.0 / (100_000.0f64).sqrt());
    }

    #[test]
    fn brownian_path_starts_at_zero() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let nb = NoiseBundle::generate(g, 3, 0);
        let b = nb.brownian_b();
        assert_eq!(b.len(), 9);
        assert_eq!(b[0], 0.0);
        assert!((b[8] - nb.db.iter().sum::<f64>()).abs() < 1e-14);
    }
}
