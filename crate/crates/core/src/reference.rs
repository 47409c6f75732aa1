//! Cosine-Galerkin reference solver for `H = −Δ + V` with Neumann conditions.
//!
//! The basis is `{Φ_k : |k|_∞ ≤ K}`. The Gram matrix is diagonal, so the
//! generalized problem `Hc = λGc` is reduced to a standard symmetric one by
//! diagonal scaling. [`power_iterate`] runs inverse iteration with the
//! solution operator `S = H^{-1}` starting from the constant function.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{symmetric_eigen, Cholesky, DenseMatrix};
use crate::sampling::validation_points;
use crate::scalar::{CompensatedSum, Scalar};
use crate::spectral::{CosineSeries, MultiIndex};

pub const DEFAULT_MAX_BASIS: usize = 20_000;
/// Quasi-random points per dimension used to bound the potential.
pub const POTENTIAL_POINTS_PER_DIM: usize = 10_000;
/// Quasi-random points per dimension used for ground-state positivity checks.
pub const POSITIVITY_POINTS_PER_DIM: usize = 1_000;
/// Relative spectral-gap floor below which the spectrum is declared degenerate.
pub const GAP_REL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinConfig {
    pub dim: usize,
    /// Largest per-axis frequency `K`.
    pub cutoff: u32,
    #[serde(default = "default_max_basis")]
    pub max_basis: usize,
}

fn default_max_basis() -> usize {
    DEFAULT_MAX_BASIS
}

impl GalerkinConfig {
    pub fn new(dim: usize, cutoff: u32) -> Self {
        Self {
            dim,
            cutoff,
            max_basis: DEFAULT_MAX_BASIS,
        }
    }

    /// `(K+1)^d`, or `None` on overflow.
    pub fn basis_size(&self) -> Option<usize> {
        (self.cutoff as usize + 1).checked_pow(self.dim as u32)
    }

    pub fn validate(&self) -> Result<usize> {
        if self.dim == 0 || self.cutoff == 0 {
            return Err(Error::InvalidInput(
                "Galerkin config needs dim >= 1 and cutoff >= 1".into(),
            ));
        }
        match self.basis_size() {
            Some(n) if n <= self.max_basis => Ok(n),
            _ => Err(Error::Resource(format!(
                "basis ({}+1)^{} exceeds cap {}",
                self.cutoff, self.dim, self.max_basis
            ))),
        }
    }
}

/// Sampled bounds `V_min ≤ V ≤ V_max` of a potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialBounds<T> {
    pub v_min: T,
    pub v_max: T,
}

/// Min/max of `V` over the fixed validation set (quasi-random points and vertices).
pub fn potential_bounds<T: Scalar>(v: &CosineSeries<T>) -> PotentialBounds<T> {
    let d = v.dim();
    let pts = validation_points(d, POTENTIAL_POINTS_PER_DIM);
    let mut x = vec![T::zero(); d];
    let mut v_min = T::infinity();
    let mut v_max = T::neg_infinity();
    for p in pts.chunks_exact(d) {
        for (xi, &pi) in x.iter_mut().zip(p) {
            *xi = T::lit(pi);
        }
        let val = v.evaluate_unchecked(&x);
        v_min = v_min.min(val);
        v_max = v_max.max(val);
    }
    PotentialBounds { v_min, v_max }
}

/// Checks that the potential is bounded below by a positive constant.
pub fn validate_potential<T: Scalar>(v: &CosineSeries<T>) -> Result<PotentialBounds<T>> {
    let b = potential_bounds(v);
    if !(b.v_min > T::zero()) {
        return Err(Error::Assumption(format!(
            "potential must satisfy V >= V_min > 0; sampled minimum is {}",
            b.v_min
        )));
    }
    Ok(b)
}

/// Discretized operator on the truncated cosine basis.
#[derive(Clone, Debug)]
pub struct GalerkinSystem<T> {
    pub dim: usize,
    pub cutoff: u32,
    pub basis: Vec<MultiIndex>,
    /// `H_{kl} = π²|k|²ω(k)δ_{kl} + ⟨Φ_k, VΦ_l⟩`.
    pub h: DenseMatrix<T>,
    /// Diagonal of the Gram matrix, `G_{kk} = ω(k)`.
    pub gram: Vec<T>,
}

impl<T: Scalar> GalerkinSystem<T> {
    pub fn size(&self) -> usize {
        self.basis.len()
    }

    /// Position of `k` in the basis, if it lies within the cutoff.
    pub fn index_of(&self, k: &[u32]) -> Option<usize> {
        basis_index(k, self.cutoff)
    }

    pub fn gram_matrix(&self) -> DenseMatrix<T> {
        let mut g = DenseMatrix::zeros(self.size());
        for (i, &w) in self.gram.iter().enumerate() {
            g[(i, i)] = w;
        }
        g
    }

    /// Coefficient vector of a series; frequencies above the cutoff are rejected.
    pub fn coefficients(&self, f: &CosineSeries<T>) -> Result<Vec<T>> {
        check_dim(self.dim, f.dim())?;
        let mut c = vec![T::zero(); self.size()];
        for (k, &v) in f.iter() {
            let i = self
                .index_of(k.as_slice())
                .ok_or_else(|| Error::InvalidInput(format!("frequency {k} exceeds cutoff {}", self.cutoff)))?;
            c[i] = v;
        }
        Ok(c)
    }

    pub fn series(&self, coeffs: &[T]) -> CosineSeries<T> {
        CosineSeries::from_terms(
            self.dim,
            self.basis
                .iter()
                .zip(coeffs)
                .filter(|(_, &c)| c != T::zero())
                .map(|(k, &c)| (k.as_slice().to_vec(), c)),
        )
        .expect("basis indices are distinct")
    }

    /// `cᵀGc`.
    pub fn mass(&self, c: &[T]) -> T {
        c.iter()
            .zip(&self.gram)
            .map(|(&ci, &w)| w * ci * ci)
            .collect::<CompensatedSum<T>>()
            .value()
    }

    /// Discrete Rayleigh quotient `cᵀHc / cᵀGc`.
    pub fn rayleigh_quotient(&self, c: &[T]) -> Result<T> {
        let m = self.mass(c);
        if !(m > T::zero()) {
            return Err(Error::DegenerateTrial("zero trial vector".into()));
        }
        Ok(self.h.quadratic_form(c) / m)
    }
}

fn basis_index(k: &[u32], cutoff: u32) -> Option<usize> {
    let base = cutoff as usize + 1;
    let mut idx = 0usize;
    let mut stride = 1usize;
    for &ki in k {
        if ki > cutoff {
            return None;
        }
        idx += ki as usize * stride;
        stride *= base;
    }
    Some(idx)
}

fn enumerate_basis(dim: usize, cutoff: u32, size: usize) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity(size);
    let mut k = vec![0u32; dim];
    for _ in 0..size {
        out.push(MultiIndex::new(k.clone()).expect("dim >= 1"));
        for slot in k.iter_mut() {
            *slot += 1;
            if *slot <= cutoff {
                break;
            }
            *slot = 0;
        }
    }
    out
}

/// Assembles `(H, G)` on the truncated basis after validating the potential.
pub fn assemble<T: Scalar>(v: &CosineSeries<T>, cfg: &GalerkinConfig) -> Result<GalerkinSystem<T>> {
    check_dim(cfg.dim, v.dim())?;
    let size = cfg.validate()?;
    validate_potential(v)?;
    Ok(assemble_unchecked(v, cfg, size))
}

fn assemble_unchecked<T: Scalar>(v: &CosineSeries<T>, cfg: &GalerkinConfig, size: usize) -> GalerkinSystem<T> {
    let d = cfg.dim;
    let basis = enumerate_basis(d, cfg.cutoff, size);
    let gram: Vec<T> = basis.iter().map(|k| k.gram_weight::<T>()).collect();
    let mut h = DenseMatrix::zeros(size);
    let pi2 = T::PI() * T::PI();
    let half_pow = T::lit(0.5).powi(d as i32);
    let v_terms: Vec<(&[u32], T)> = v.iter().map(|(k, &c)| (k.as_slice(), c)).collect();
    let mut j = vec![0u32; d];

    for (col, l) in basis.iter().enumerate() {
        let ls = l.as_slice();
        h[(col, col)] += pi2 * T::from_u64(l.l2_squared()).unwrap() * gram[col];
        // V·Φ_l expanded by the product-to-sum identity
        for &(vk, vc) in &v_terms {
            let c = vc * half_pow;
            'mask: for mask in 0u32..(1u32 << d) {
                for i in 0..d {
                    j[i] = if mask & (1 << i) != 0 {
                        vk[i] + ls[i]
                    } else {
                        vk[i].abs_diff(ls[i])
                    };
                    if j[i] > cfg.cutoff {
                        continue 'mask;
                    }
                }
                let row = basis_index(&j, cfg.cutoff).expect("within cutoff");
                h[(row, col)] += c * gram[row];
            }
        }
    }
    for i in 0..size {
        for k in 0..i {
            let avg = (h[(i, k)] + h[(k, i)]) * T::lit(0.5);
            h[(i, k)] = avg;
            h[(k, i)] = avg;
        }
    }
    GalerkinSystem {
        dim: d,
        cutoff: cfg.cutoff,
        basis,
        h,
        gram,
    }
}

/// Ground-state data from the Galerkin reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>")
)]
pub struct GroundTruth<T> {
    pub lambda0: T,
    pub lambda1: T,
    pub gap: T,
    /// L²-normalized ground state with positive mean.
    pub ustar: CosineSeries<T>,
    pub cutoff: u32,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn dim(&self) -> usize {
        self.ustar.dim()
    }

    pub fn from_json(text: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let t: Self = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if !(t.gap > T::zero()) {
            return Err(Error::Schema("ground truth must have a positive gap".into()));
        }
        let norm = t.ustar.l2_norm();
        if (norm - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::Schema(format!("ground state not normalized (norm {norm})")));
        }
        Ok(t)
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("ground truth serialization")
    }
}

fn check_positive<T: Scalar>(u: &CosineSeries<T>, what: &str) -> Result<()> {
    let d = u.dim();
    let pts = validation_points(d, POSITIVITY_POINTS_PER_DIM);
    let mut x = vec![T::zero(); d];
    for p in pts.chunks_exact(d) {
        for (xi, &pi) in x.iter_mut().zip(p) {
            *xi = T::lit(pi);
        }
        let val = u.evaluate_unchecked(&x);
        if !(val > T::zero()) {
            return Err(Error::Numeric(format!(
                "{what} is not strictly positive on the validation grid (value {val} at {p:?}); increase the cutoff"
            )));
        }
    }
    Ok(())
}

/// Two lowest eigenpairs of the discretized operator.
pub fn solve_ground_truth<T: Scalar>(v: &CosineSeries<T>, cfg: &GalerkinConfig) -> Result<GroundTruth<T>> {
    let sys = assemble(v, cfg)?;
    let n = sys.size();
    let inv_sqrt: Vec<T> = sys.gram.iter().map(|w| T::one() / w.sqrt()).collect();
    let mut reduced = sys.h.clone();
    for i in 0..n {
        for j in 0..n {
            reduced[(i, j)] = reduced[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = symmetric_eigen(&reduced)?;
    let lambda0 = eig.values[0];
    let lambda1 = eig.values[1];
    let gap = lambda1 - lambda0;
    let tol = T::lit(GAP_REL_TOL) * T::one().max(lambda0.abs());
    if !(gap >= tol) {
        return Err(Error::DegenerateSpectrum {
            gap: gap.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    let mut coeffs: Vec<T> = eig.vector(0).iter().zip(&inv_sqrt).map(|(&y, &s)| y * s).collect();
    let norm = sys.mass(&coeffs).sqrt();
    let sign = if coeffs[0] < T::zero() { -T::one() } else { T::one() };
    for c in coeffs.iter_mut() {
        *c = *c * sign / norm;
    }
    let ustar = sys.series(&coeffs);
    check_positive(&ustar, "Galerkin ground state")?;
    Ok(GroundTruth {
        lambda0,
        lambda1,
        gap,
        ustar,
        cutoff: cfg.cutoff,
    })
}

/// Galerkin solution of `Hu = f` on the truncated basis.
pub fn apply_inverse<T: Scalar>(
    v: &CosineSeries<T>,
    f: &CosineSeries<T>,
    cfg: &GalerkinConfig,
) -> Result<CosineSeries<T>> {
    let sys = assemble(v, cfg)?;
    let chol = Cholesky::factor(&sys.h)?;
    let fc = sys.coefficients(f)?;
    let rhs: Vec<T> = fc.iter().zip(&sys.gram).map(|(&c, &w)| c * w).collect();
    Ok(sys.series(&chol.solve(&rhs)))
}

/// Eigenpair produced by inverse power iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigenpair<T> {
    pub lambda: T,
    pub u: CosineSeries<T>,
    pub iterations: usize,
}

/// Iterates `v ← normalize(S v)` from `v₀ ≡ 1` until successive Rayleigh
/// quotients differ by less than `tol`.
pub fn power_iterate<T: Scalar>(
    v: &CosineSeries<T>,
    cfg: &GalerkinConfig,
    tol: T,
    max_iters: usize,
) -> Result<Eigenpair<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let sys = assemble(v, cfg)?;
    let chol = Cholesky::factor(&sys.h)?;
    let mut c = vec![T::zero(); sys.size()];
    c[0] = T::one();
    let mut lambda = sys.rayleigh_quotient(&c)?;
    let mut last_change = T::infinity();
    for it in 1..=max_iters {
        let rhs: Vec<T> = c.iter().zip(&sys.gram).map(|(&x, &w)| x * w).collect();
        let mut next = chol.solve(&rhs);
        let norm = sys.mass(&next).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::Numeric("inverse iteration produced a degenerate iterate".into()));
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        let next_lambda = sys.rayleigh_quotient(&next)?;
        last_change = (next_lambda - lambda).abs();
        c = next;
        lambda = next_lambda;
        if last_change < tol {
            if c[0] < T::zero() {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            let u = sys.series(&c);
            check_positive(&u, "inverse-iteration eigenfunction")?;
            return Ok(Eigenpair {
                lambda,
                u,
                iterations: it,
            });
        }
    }
    Err(Error::Convergence {
        iterations: max_iters,
        last_change: last_change.to_f64_lossy(),
    })
}

/// `‖u*‖_{B^{s+2}}` of the Galerkin ground state for each cutoff.
pub fn barron_saturation<T: Scalar>(v: &CosineSeries<T>, s: T, cutoffs: &[u32]) -> Result<Vec<(u32, T)>> {
    if cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("cutoffs must be strictly increasing".into()));
    }
    if !(s >= T::zero()) {
        return Err(Error::InvalidInput("Barron order s must be >= 0".into()));
    }
    cutoffs
        .iter()
        .map(|&k| {
            let truth = solve_ground_truth(v, &GalerkinConfig::new(v.dim(), k))?;
            Ok((k, truth.ustar.barron_norm(s + T::lit(2.0))?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    type Series = CosineSeries<f64>;

    fn cosine_potential() -> CosineSeries<f64> {
        Series::from_terms(1, [(vec![0], 1.0), (vec![1], 0.5)]).unwrap()
    }

    #[test]
    fn constant_potential_matrices() {
        let v = Series::constant(1, 1.0).unwrap();
        let sys = assemble(&v, &GalerkinConfig::new(1, 2)).unwrap();
        let want = [1.0, 0.5 * (1.0 + PI * PI), 0.5 * (1.0 + 4.0 * PI * PI)];
        for (i, &w) in want.iter().enumerate() {
            for j in 0..3 {
                let expect = if i == j { w } else { 0.0 };
                assert!((sys.h[(i, j)] - expect).abs() < 1e-13);
            }
        }
        assert_eq!(sys.gram, vec![1.0, 0.5, 0.5]);
    }

    #[test]
    fn off_diagonal_coupling_matches_quadrature() {
        let v = cosine_potential();
        let sys = assemble(&v, &GalerkinConfig::new(1, 1)).unwrap();
        // ∫ (1 + 0.5cos πx) cos πx dx by Gauss-Legendre
        let (x, w) = crate::quadrature::gauss_legendre_unit(40);
        let quad: f64 = x
            .iter()
            .zip(&w)
            .map(|(&x, &w)| w * (1.0 + 0.5 * (PI * x).cos()) * (PI * x).cos())
            .sum();
        assert!((sys.h[(0, 1)] - quad).abs() < 1e-14);
        assert!((sys.h[(0, 1)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gram_is_diagonal_product_of_weights() {
        let v = Series::from_terms(2, [(vec![0, 0], 2.0), (vec![1, 2], 0.3)]).unwrap();
        let sys = assemble(&v, &GalerkinConfig::new(2, 3)).unwrap();
        for (k, &g) in sys.basis.iter().zip(&sys.gram) {
            let nz = k.as_slice().iter().filter(|&&x| x > 0).count() as i32;
            assert_eq!(g, 0.5f64.powi(nz));
        }
        assert!(sys.h.max_asymmetry() == 0.0);
    }

    #[test]
    fn nonpositive_potential_is_rejected() {
        let v = Series::from_terms(1, [(vec![0], -2.0)]).unwrap();
        assert!(matches!(
            assemble(&v, &GalerkinConfig::new(1, 4)),
            Err(Error::Assumption(_))
        ));
        let dips = Series::from_terms(1, [(vec![0], 0.4), (vec![1], 0.5)]).unwrap();
        assert!(matches!(validate_potential(&dips), Err(Error::Assumption(_))));
    }

    #[test]
    fn basis_cap_enforced() {
        let v = Series::constant(4, 1.0).unwrap();
        let cfg = GalerkinConfig::new(4, 20);
        assert!(matches!(assemble(&v, &cfg), Err(Error::Resource(_))));
    }

    #[test]
    fn constant_potential_ground_truth() {
        let v = Series::constant(2, 1.0).unwrap();
        let t = solve_ground_truth(&v, &GalerkinConfig::new(2, 4)).unwrap();
        assert!((t.lambda0 - 1.0).abs() < 1e-12);
        assert!((t.lambda1 - (1.0 + PI * PI)).abs() < 1e-11);
        assert!((t.ustar.coeff(&[0, 0]) - 1.0).abs() < 1e-12);
        assert!(t
            .ustar
            .iter()
            .filter(|(k, _)| !k.is_zero())
            .all(|(_, c)| c.abs() < 1e-12));

        let v5 = Series::constant(1, 5.0).unwrap();
        let t5 = solve_ground_truth(&v5, &GalerkinConfig::new(1, 6)).unwrap();
        assert!((t5.lambda0 - 5.0).abs() < 1e-12);
        assert!((t5.gap - PI * PI).abs() < 1e-11);
    }

    #[test]
    fn apply_inverse_examples() {
        let one = Series::constant(1, 1.0).unwrap();
        let cfg = GalerkinConfig::new(1, 4);
        let u = apply_inverse(&one, &one, &cfg).unwrap();
        assert!((u.coeff(&[0]) - 1.0).abs() < 1e-14);
        assert!(u.iter().filter(|(k, _)| !k.is_zero()).all(|(_, c)| c.abs() < 1e-14));

        let f = Series::mode(&[1], 1.0).unwrap();
        let u = apply_inverse(&one, &f, &cfg).unwrap();
        assert!((u.coeff(&[1]) - 1.0 / (1.0 + PI * PI)).abs() < 1e-14);

        let high = Series::mode(&[7], 1.0).unwrap();
        assert!(matches!(apply_inverse(&one, &high, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn apply_inverse_residual_vanishes() {
        let v = cosine_potential();
        let cfg = GalerkinConfig::new(1, 12);
        let f = Series::constant(1, 1.0).unwrap();
        let u = apply_inverse(&v, &f, &cfg).unwrap();
        let sys = assemble(&v, &cfg).unwrap();
        let c = sys.coefficients(&u).unwrap();
        let hu = sys.h.mul_vec(&c);
        for (i, k) in sys.basis.iter().enumerate() {
            let fk = f.coeff(k.as_slice()) * sys.gram[i];
            assert!((hu[i] - fk).abs() < 1e-13);
        }
    }

    #[test]
    fn power_iteration_examples() {
        let one = Series::constant(1, 1.0).unwrap();
        let cfg = GalerkinConfig::new(1, 8);
        let p = power_iterate(&one, &cfg, 1e-12, 100).unwrap();
        assert_eq!(p.iterations, 1);
        assert!((p.lambda - 1.0).abs() < 1e-14);

        let five = Series::constant(1, 5.0).unwrap();
        let p = power_iterate(&five, &cfg, 1e-12, 100).unwrap();
        assert!((p.lambda - 5.0).abs() < 1e-13);

        let v = cosine_potential();
        let cfg = GalerkinConfig::new(1, 24);
        let tol = 1e-10;
        let p = power_iterate(&v, &cfg, tol, 200).unwrap();
        let t = solve_ground_truth(&v, &cfg).unwrap();
        assert!((p.lambda - t.lambda0).abs() <= 10.0 * tol);
    }

    #[test]
    fn power_iteration_reports_nonconvergence() {
        let v = cosine_potential();
        let err = power_iterate(&v, &GalerkinConfig::new(1, 16), 1e-300, 2).unwrap_err();
        assert!(matches!(err, Error::Convergence { iterations: 2, .. }));
    }

    #[test]
    fn barron_saturation_examples() {
        let one = Series::constant(1, 1.0).unwrap();
        let rows = barron_saturation(&one, 1.5, &[2, 4, 8]).unwrap();
        assert!(rows.iter().all(|&(_, b)| (b - 1.0).abs() < 1e-12));
        assert!(barron_saturation(&one, 2.0, &[]).unwrap().is_empty());
        assert!(barron_saturation(&one, 2.0, &[8, 4]).is_err());
    }

    #[test]
    fn ground_truth_json_roundtrip() {
        let v = cosine_potential();
        let t = solve_ground_truth(&v, &GalerkinConfig::new(1, 10)).unwrap();
        let back: GroundTruth<f64> = GroundTruth::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        let val: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        for key in ["lambda0", "lambda1", "gap", "ustar", "cutoff"] {
            assert!(val.get(key).is_some(), "{key}");
        }
    }
}
