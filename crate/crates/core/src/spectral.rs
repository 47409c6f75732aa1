//! Cosine-basis function algebra on the unit hypercube.
//!
//! A [`CosineSeries`] stores finitely many coefficients `û(k)` of the Neumann
//! eigenbasis `Φ_k(x) = ∏_i cos(π k_i x_i)`. Everything here is exact up to
//! floating-point rounding: inner products use the closed-form orthogonality
//! weights, products use the product-to-sum identity.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::{CompensatedSum, Scalar};

/// Coefficients below this magnitude are dropped from products.
pub const PRODUCT_PRUNE_TOL: f64 = 1e-15;

/// Frequency multi-index `k ∈ N_0^d`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(k: Vec<u32>) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::InvalidInput("multi-index must have d >= 1".into()));
        }
        Ok(Self(k))
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    pub fn l1(&self) -> u64 {
        self.0.iter().map(|&k| u64::from(k)).sum()
    }

    pub fn l2_squared(&self) -> u64 {
        self.0.iter().map(|&k| u64::from(k) * u64::from(k)).sum()
    }

    pub fn max_entry(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// `⟨Φ_k, Φ_k⟩ = ∏_i ω(k_i)` with `ω(0) = 1`, `ω(j) = 1/2`.
    pub fn gram_weight<T: Scalar>(&self) -> T {
        let nonzero = self.0.iter().filter(|&&k| k != 0).count() as i32;
        T::lit(0.5).powi(nonzero)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// Finite cosine expansion `u(x) = Σ_k û(k) Φ_k(x)` on `[0,1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct CosineSeries<T> {
    dim: usize,
    coeffs: BTreeMap<MultiIndex, T>,
    // per-dimension maximal frequency ever inserted; sizes the cosine tables
    max_freq: Vec<u32>,
}

impl<T: Scalar> CosineSeries<T> {
    /// The zero function on `[0,1]^dim`.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("series dimension must be >= 1".into()));
        }
        Ok(Self {
            dim,
            coeffs: BTreeMap::new(),
            max_freq: vec![0; dim],
        })
    }

    pub fn constant(dim: usize, value: T) -> Result<Self> {
        let mut s = Self::new(dim)?;
        s.add_term(MultiIndex::zero(dim), value)?;
        Ok(s)
    }

    /// Single basis function `value · Φ_k`.
    pub fn mode(k: &[u32], value: T) -> Result<Self> {
        let mut s = Self::new(k.len())?;
        s.add_term(MultiIndex::new(k.to_vec())?, value)?;
        Ok(s)
    }

    /// Builds a series from `(k, û(k))` pairs. Duplicate indices are rejected.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, T)>,
    {
        let mut s = Self::new(dim)?;
        let mut seen = std::collections::BTreeSet::new();
        for (k, v) in terms {
            check_dim(dim, k.len())?;
            let idx = MultiIndex::new(k)?;
            if !seen.insert(idx.clone()) {
                return Err(Error::Schema(format!("duplicate multi-index {idx}")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite coefficient at {idx}")));
            }
            s.add_term(idx, v)?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, &T)> {
        self.coeffs.iter()
    }

    pub fn coeff(&self, k: &[u32]) -> T {
        self.coeffs
            .get(&MultiIndex(k.to_vec()))
            .copied()
            .unwrap_or_else(T::zero)
    }

    /// Largest frequency present along each axis.
    pub fn max_frequency(&self) -> Vec<u32> {
        let mut out = vec![0; self.dim];
        for k in self.coeffs.keys() {
            for (o, &ki) in out.iter_mut().zip(k.as_slice()) {
                *o = (*o).max(ki);
            }
        }
        out
    }

    /// Adds `value` to the coefficient at `k`, removing it if the sum is exactly zero.
    pub fn add_term(&mut self, k: MultiIndex, value: T) -> Result<()> {
        check_dim(self.dim, k.dim())?;
        for (m, &ki) in self.max_freq.iter_mut().zip(k.as_slice()) {
            *m = (*m).max(ki);
        }
        let updated = self.coeffs.get(&k).copied().unwrap_or_else(T::zero) + value;
        if updated == T::zero() {
            self.coeffs.remove(&k);
        } else {
            self.coeffs.insert(k, updated);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let mut out = self.clone();
        for (k, &v) in &other.coeffs {
            out.add_term(k.clone(), v)?;
        }
        Ok(out)
    }

    pub fn scale(&self, alpha: T) -> Self {
        let mut out = Self {
            dim: self.dim,
            coeffs: BTreeMap::new(),
            max_freq: self.max_freq.clone(),
        };
        for (k, &v) in &self.coeffs {
            let s = alpha * v;
            if s != T::zero() {
                out.coeffs.insert(k.clone(), s);
            }
        }
        out
    }

    fn check_point(&self, x: &[T]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite evaluation point".into()));
        }
        Ok(())
    }

    /// `cos(π j x_i)` for `j = 0..=max_freq[i]`, flattened per dimension.
    fn cos_table(&self, x: &[T]) -> Vec<Vec<T>> {
        x.iter()
            .zip(&self.max_freq)
            .map(|(&xi, &kmax)| {
                (0..=kmax)
                    .map(|j| (T::PI() * T::from_u32(j).unwrap() * xi).cos())
                    .collect()
            })
            .collect()
    }

    fn sin_table(&self, x: &[T]) -> Vec<Vec<T>> {
        x.iter()
            .zip(&self.max_freq)
            .map(|(&xi, &kmax)| {
                (0..=kmax)
                    .map(|j| (T::PI() * T::from_u32(j).unwrap() * xi).sin())
                    .collect()
            })
            .collect()
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[T]) -> T {
        let cos = self.cos_table(x);
        let mut acc = CompensatedSum::new();
        for (k, &v) in &self.coeffs {
            let mut p = v;
            for (i, &ki) in k.as_slice().iter().enumerate() {
                p *= cos[i][ki as usize];
            }
            acc.add(p);
        }
        acc.value()
    }

    pub(crate) fn value_and_gradient_unchecked(&self, x: &[T], grad: &mut [T]) -> T {
        let cos = self.cos_table(x);
        let sin = self.sin_table(x);
        let mut value = CompensatedSum::new();
        let mut g: Vec<CompensatedSum<T>> = vec![CompensatedSum::new(); self.dim];
        for (k, &v) in &self.coeffs {
            let ks = k.as_slice();
            let mut p = v;
            for (i, &ki) in ks.iter().enumerate() {
                p *= cos[i][ki as usize];
            }
            value.add(p);
            for (i, &ki) in ks.iter().enumerate() {
                if ki == 0 {
                    continue;
                }
                let mut d = -v * T::PI() * T::from_u32(ki).unwrap() * sin[i][ki as usize];
                for (j, &kj) in ks.iter().enumerate() {
                    if j != i {
                        d *= cos[j][kj as usize];
                    }
                }
                g[i].add(d);
            }
        }
        for (o, acc) in grad.iter_mut().zip(&g) {
            *o = acc.value();
        }
        value.value()
    }

    /// Point value `Σ_k û(k) Φ_k(x)`.
    pub fn evaluate(&self, x: &[T]) -> Result<T> {
        self.check_point(x)?;
        Ok(self.evaluate_unchecked(x))
    }

    /// Exact spatial gradient at `x`.
    pub fn gradient(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_point(x)?;
        let mut g = vec![T::zero(); self.dim];
        self.value_and_gradient_unchecked(x, &mut g);
        Ok(g)
    }

    /// Exact `L²([0,1]^d)` inner product via cosine orthogonality.
    pub fn inner_product(&self, other: &Self) -> Result<T> {
        check_dim(self.dim, other.dim)?;
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut acc = CompensatedSum::new();
        for (k, &a) in &small.coeffs {
            if let Some(&b) = large.coeffs.get(k) {
                acc.add(a * b * k.gram_weight::<T>());
            }
        }
        Ok(acc.value())
    }

    pub fn l2_norm(&self) -> T {
        self.inner_product(self).expect("same dimension").sqrt()
    }

    /// `‖∇u‖²_{L²} = Σ_k π²|k|²₂ ω(k) û(k)²`.
    pub fn gradient_norm_squared(&self) -> T {
        self.coeffs
            .iter()
            .map(|(k, &v)| T::PI() * T::PI() * T::from_u64(k.l2_squared()).unwrap() * k.gram_weight::<T>() * v * v)
            .collect::<CompensatedSum<T>>()
            .value()
    }

    /// Exact product series through `cos A cos B = ½cos(A−B) + ½cos(A+B)` per axis.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let d = self.dim;
        let mut acc: BTreeMap<MultiIndex, CompensatedSum<T>> = BTreeMap::new();
        let half_pow = T::lit(0.5).powi(d as i32);
        for (k, &a) in &self.coeffs {
            for (l, &b) in &other.coeffs {
                let c = a * b * half_pow;
                let (ks, ls) = (k.as_slice(), l.as_slice());
                for mask in 0u32..(1u32 << d) {
                    let idx: Vec<u32> = (0..d)
                        .map(|i| {
                            if mask & (1 << i) != 0 {
                                ks[i] + ls[i]
                            } else {
                                ks[i].abs_diff(ls[i])
                            }
                        })
                        .collect();
                    acc.entry(MultiIndex(idx)).or_default().add(c);
                }
            }
        }
        let tol = T::lit(PRODUCT_PRUNE_TOL);
        let mut out = Self::new(d)?;
        for (k, s) in acc {
            let v = s.value();
            if v.abs() >= tol {
                out.add_term(k, v)?;
            }
        }
        Ok(out)
    }

    /// Spectral Barron norm `Σ_k (1 + π^s |k|_1^s) |û(k)|`.
    ///
    /// The zero mode carries weight 1 for every `s` (its `|k|_1^s` term is taken as 0).
    pub fn barron_norm(&self, s: T) -> Result<T> {
        if !(s >= T::zero()) || !s.is_finite() {
            return Err(Error::InvalidInput(format!(
                "Barron order must be finite and >= 0, got {s}"
            )));
        }
        Ok(self
            .coeffs
            .iter()
            .map(|(k, &v)| {
                let w = if k.is_zero() {
                    T::one()
                } else {
                    T::one() + (T::PI() * T::from_u64(k.l1()).unwrap()).powf(s)
                };
                w * v.abs()
            })
            .collect::<CompensatedSum<T>>()
            .value())
    }

    /// `Σ_k |û(k)|`, a bound on the sup norm.
    pub fn abs_coeff_sum(&self) -> T {
        self.coeffs
            .values()
            .map(|v| v.abs())
            .collect::<CompensatedSum<T>>()
            .value()
    }

    /// Parses the `{"dim": d, "coeffs": [{"k": [...], "v": f}, ...]}` document.
    pub fn from_json(text: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("series serialization")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDoc<T> {
    k: Vec<u32>,
    v: T,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesDoc<T> {
    dim: usize,
    coeffs: Vec<TermDoc<T>>,
}

impl<T: Scalar + Serialize> Serialize for CosineSeries<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SeriesDoc {
            dim: self.dim,
            coeffs: self
                .coeffs
                .iter()
                .map(|(k, &v)| TermDoc { k: k.0.clone(), v })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for CosineSeries<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = SeriesDoc::<T>::deserialize(deserializer)?;
        CosineSeries::from_terms(doc.dim, doc.coeffs.into_iter().map(|t| (t.k, t.v))).map_err(de::Error::custom)
    }
}
