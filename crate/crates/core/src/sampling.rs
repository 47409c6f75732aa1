//! Seeded randomness: named sub-streams of one 64-bit run seed, counter-based
//! uniform sample sets, and the fixed low-discrepancy point sets used for
//! validation grids and high-dimensional quadrature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Named sub-streams derived from a run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Sampling = 1,
    Init = 2,
    Optimizer = 3,
    Rademacher = 4,
    Trials = 5,
    Reinit = 6,
}

/// Generator for `(seed, stream, substream)`. Independent substreams give
/// per-cell or per-restart reproducibility without sequential coupling.
pub fn stream_rng(seed: u64, stream: Stream, substream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 56) ^ substream);
    rng
}

/// `n` i.i.d. uniform points on `[0,1]^d`, reproducible from `(seed, n, d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet<T> {
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
    points: Vec<T>,
}

impl<T: Scalar> SampleSet<T> {
    /// Point `i` is drawn at ChaCha word offset `2·d·i`, so any point can be
    /// regenerated on its own.
    pub fn draw(dim: usize, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("sample count n must be >= 1".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be >= 1".into()));
        }
        let mut rng = stream_rng(seed, Stream::Sampling, 0);
        let mut points = Vec::with_capacity(n * dim);
        for i in 0..n {
            rng.set_word_pos((2 * dim * i) as u128);
            for _ in 0..dim {
                points.push(T::lit(rng.gen::<f64>()));
            }
        }
        Ok(Self { dim, n, seed, points })
    }

    /// Wraps explicit points (row-major, `n × dim`).
    pub fn from_points(dim: usize, points: Vec<T>, seed: u64) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput("points must be a non-empty n x d array".into()));
        }
        if points.iter().any(|&p| !(p >= T::zero() && p <= T::one())) {
            return Err(Error::InvalidInput("sample coordinates must lie in [0,1]".into()));
        }
        Ok(Self {
            dim,
            n: points.len() / dim,
            seed,
            points,
        })
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> {
        self.points.chunks_exact(self.dim)
    }
}

/// Convenience wrapper with the operation's name.
pub fn sample<T: Scalar>(dim: usize, n: usize, seed: u64) -> Result<SampleSet<T>> {
    SampleSet::draw(dim, n, seed)
}

/// Kronecker (R_d) low-discrepancy sequence with the fixed offset 1/2:
/// `x_i = frac(1/2 + i·α)`, `α_j = φ_d^{-(j+1)}` with `φ_d` the positive root
/// of `x^{d+1} = x + 1`. Row-major `count × dim`.
pub fn quasi_random_points(dim: usize, count: usize) -> Vec<f64> {
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=dim).map(|j| phi.powi(-(j as i32))).collect();
    let mut out = Vec::with_capacity(count * dim);
    for i in 0..count {
        for a in &alpha {
            out.push((0.5 + a * i as f64).fract());
        }
    }
    out
}

/// Fixed validation set: `per_dim · d` quasi-random points plus the `2^d` vertices.
pub fn validation_points(dim: usize, per_dim: usize) -> Vec<f64> {
    let mut pts = quasi_random_points(dim, per_dim * dim);
    for mask in 0u32..(1u32 << dim) {
        for i in 0..dim {
            pts.push(if mask & (1 << i) != 0 { 1.0 } else { 0.0 });
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        let a = sample::<f64>(2, 3, 7).unwrap();
        let b = sample::<f64>(2, 3, 7).unwrap();
        assert_eq!(a, b);
        let c = sample::<f64>(2, 3, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn prefix_property_of_counter_based_draws() {
        let small = sample::<f64>(3, 10, 11).unwrap();
        let large = sample::<f64>(3, 1000, 11).unwrap();
        for i in 0..10 {
            assert_eq!(small.point(i), large.point(i));
        }
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(matches!(sample::<f64>(2, 0, 1), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn coordinate_means_within_four_sigma() {
        let n = 1_000_000;
        let s = sample::<f64>(2, n, 2024).unwrap();
        let sigma = 1.0 / (12.0 * n as f64).sqrt();
        for j in 0..2 {
            let mean: f64 = s.iter().map(|p| p[j]).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < 4.0 * sigma, "mean {mean}");
        }
        assert!(s.iter().flatten().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn quasi_random_points_fill_the_cube() {
        let pts = quasi_random_points(2, 4096);
        assert!(pts.iter().all(|&x| (0.0..1.0).contains(&x)));
        let mean: f64 = pts.iter().sum::<f64>() / pts.len() as f64;
        assert!((mean - 0.5).abs() < 1e-3);
        assert_eq!(validation_points(3, 10).len(), 3 * (30 + 8));
    }
}
