//! Quadrature rules on `[0,1]^d` with weights summing to one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::quasi_random_points;
use crate::scalar::Scalar;

/// Tensor Gauss-Legendre order used by default for `d <= 3`.
pub const DEFAULT_GAUSS_ORDER: usize = 48;
/// Quasi-random point count used by default for `d >= 4`.
pub const DEFAULT_QMC_POINTS: usize = 1 << 17;
/// Largest dimension integrated with a tensor rule by default.
pub const TENSOR_MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    TensorGauss { order: usize },
    QuasiRandom { count: usize },
}

#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    pub kind: QuadratureKind,
    pub dim: usize,
    nodes: Vec<T>,
    pub(crate) weights: Vec<T>,
}

/// Gauss-Legendre nodes and weights mapped to `[0,1]` (weights sum to 1).
pub fn gauss_legendre_unit(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x = 0.0;
            dp = 1.0;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1,1] -> [0,1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn tensor_gauss(dim: usize, order: usize) -> Result<Self> {
        if dim == 0 || order == 0 {
            return Err(Error::InvalidInput("quadrature needs dim >= 1 and order >= 1".into()));
        }
        let total = order
            .checked_pow(dim as u32)
            .filter(|&t| t <= 50_000_000)
            .ok_or_else(|| Error::Resource(format!("tensor rule {order}^{dim} too large")))?;
        let (x1, w1) = gauss_legendre_unit(order);
        let mut nodes = Vec::with_capacity(total * dim);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let mut w = 1.0;
            for &i in &idx {
                nodes.push(T::lit(x1[i]));
                w *= w1[i];
            }
            weights.push(T::lit(w));
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < order {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(Self {
            kind: QuadratureKind::TensorGauss { order },
            dim,
            nodes,
            weights,
        })
    }

    pub fn quasi_random(dim: usize, count: usize) -> Result<Self> {
        if dim == 0 || count == 0 {
            return Err(Error::InvalidInput("quadrature needs dim >= 1 and count >= 1".into()));
        }
        let nodes = quasi_random_points(dim, count).into_iter().map(T::lit).collect();
        let w = T::one() / T::from_usize_lossy(count);
        Ok(Self {
            kind: QuadratureKind::QuasiRandom { count },
            dim,
            nodes,
            weights: vec![w; count],
        })
    }

    /// Tensor Gauss of the given order for `d <= 3`, `2^17` quasi-random points above.
    pub fn default_for(dim: usize, gauss_order: usize) -> Result<Self> {
        if dim <= TENSOR_MAX_DIM {
            Self::tensor_gauss(dim, gauss_order)
        } else {
            Self::quasi_random(dim, DEFAULT_QMC_POINTS)
        }
    }

    pub fn from_kind(dim: usize, kind: QuadratureKind) -> Result<Self> {
        match kind {
            QuadratureKind::TensorGauss { order } => Self::tensor_gauss(dim, order),
            QuadratureKind::QuasiRandom { count } => Self::quasi_random(dim, count),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[T] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], T)> {
        self.nodes.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_nodes_in_cube() {
        for order in [1, 2, 5, 48, 128] {
            let (x, w) = gauss_legendre_unit(order);
            let s: f64 = w.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "order {order}: {s}");
            assert!(x.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let r = QuadratureRule::<f64>::tensor_gauss(2, 7).unwrap();
        let s: f64 = r.iter().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-14);
        assert_eq!(r.len(), 49);
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2q_minus_1() {
        let (x, w) = gauss_legendre_unit(6);
        for p in 0..=11 {
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            assert!((approx - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "degree {p}");
        }
    }

    #[test]
    fn integrates_cosines() {
        let r = QuadratureRule::<f64>::tensor_gauss(2, 32).unwrap();
        let v: f64 = r
            .iter()
            .map(|(p, w)| {
                w * (std::f64::consts::PI * 3.0 * p[0]).cos().powi(2) * (std::f64::consts::PI * p[1]).cos().powi(2)
            })
            .sum();
        assert!((v - 0.25).abs() < 1e-14);
    }

    #[test]
    fn default_switches_to_quasi_random_in_high_dimension() {
        let r = QuadratureRule::<f64>::default_for(4, 48).unwrap();
        assert_eq!(
            r.kind,
            QuadratureKind::QuasiRandom {
                count: DEFAULT_QMC_POINTS
            }
        );
        let s: f64 = r.iter().map(|(_, w)| w).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
