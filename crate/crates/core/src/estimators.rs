//! Empirical and population Rayleigh-quotient losses and projector-based error
//! metrics against a reference ground state.
//!
//! Sums over samples or quadrature nodes are split into fixed-size chunks that
//! may run in parallel; chunk partials are combined in index order so results
//! do not depend on the thread count.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{stability_check, StabilityReport};
use crate::error::{check_dim, Error, Result};
use crate::quadrature::QuadratureRule;
use crate::reference::{validate_potential, GroundTruth};
use crate::sampling::{stream_rng, SampleSet, Stream};
use crate::scalar::{CompensatedSum, Scalar};
use crate::spectral::CosineSeries;

pub(crate) const CHUNK: usize = 1024;

/// Maps `f` over consecutive index ranges of length [`CHUNK`]; results come
/// back in range order.
pub(crate) fn map_chunks<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(Range<usize>) -> R + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect()
}

/// A function on `[0,1]^d` with a spatial gradient.
pub trait TrialFunction<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    /// Writes `∇u(x)` into `grad` (length `dim`) and returns `u(x)`.
    /// Lengths are not checked.
    fn value_and_gradient(&self, x: &[T], grad: &mut [T]) -> T;
}

impl<T: Scalar> TrialFunction<T> for CosineSeries<T> {
    fn dim(&self) -> usize {
        CosineSeries::dim(self)
    }

    fn value_and_gradient(&self, x: &[T], grad: &mut [T]) -> T {
        self.value_and_gradient_unchecked(x, grad)
    }
}

/// Adapts a closure `(x, grad) -> u(x)` into a [`TrialFunction`].
pub struct FnTrial<F> {
    pub dim: usize,
    pub f: F,
}

impl<T: Scalar, F> TrialFunction<T> for FnTrial<F>
where
    F: Fn(&[T], &mut [T]) -> T + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_gradient(&self, x: &[T], grad: &mut [T]) -> T {
        (self.f)(x, grad)
    }
}

/// `(E_V, E_2, E = E_V / E_2)` for either the empirical or population measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Losses<T> {
    pub e_v: T,
    pub e_2: T,
    pub energy: T,
}

impl<T: Scalar> Losses<T> {
    fn from_sums(e_v: T, e_2: T) -> Result<Self> {
        if !(e_2 > T::zero()) || !e_2.is_finite() || !e_v.is_finite() {
            return Err(Error::DegenerateTrial(format!(
                "denominator E_2 = {e_2} is not positive and finite"
            )));
        }
        Ok(Self {
            e_v,
            e_2,
            energy: e_v / e_2,
        })
    }
}

/// Sample means `(1/n)Σ(|∇u|² + V u²)` and `(1/n)Σ u²`.
pub fn empirical_losses<T, U>(u: &U, v: &CosineSeries<T>, samples: &SampleSet<T>) -> Result<Losses<T>>
where
    T: Scalar,
    U: TrialFunction<T> + ?Sized,
{
    check_dim(samples.dim, u.dim())?;
    check_dim(samples.dim, v.dim())?;
    let d = samples.dim;
    let parts = map_chunks(samples.n, |range| {
        let mut grad = vec![T::zero(); d];
        let (mut num, mut den) = (T::zero(), T::zero());
        for i in range {
            let x = samples.point(i);
            let val = u.value_and_gradient(x, &mut grad);
            let g2: T = grad.iter().map(|&g| g * g).sum();
            num += g2 + v.evaluate_unchecked(x) * val * val;
            den += val * val;
        }
        (num, den)
    });
    let (num, den) = combine(&parts);
    let n = T::from_usize_lossy(samples.n);
    Losses::from_sums(num / n, den / n)
}

/// Quadrature approximations of `∫(|∇u|² + V u²)` and `∫u²`.
pub fn population_losses<T, U>(u: &U, v: &CosineSeries<T>, rule: &QuadratureRule<T>) -> Result<Losses<T>>
where
    T: Scalar,
    U: TrialFunction<T> + ?Sized,
{
    check_dim(rule.dim, u.dim())?;
    check_dim(rule.dim, v.dim())?;
    let d = rule.dim;
    let parts = map_chunks(rule.len(), |range| {
        let mut grad = vec![T::zero(); d];
        let (mut num, mut den) = (T::zero(), T::zero());
        for i in range {
            let x = rule.node(i);
            let w = rule.weights[i];
            let val = u.value_and_gradient(x, &mut grad);
            let g2: T = grad.iter().map(|&g| g * g).sum();
            num += w * (g2 + v.evaluate_unchecked(x) * val * val);
            den += w * val * val;
        }
        (num, den)
    });
    let (num, den) = combine(&parts);
    Losses::from_sums(num, den)
}

fn combine<T: Scalar>(parts: &[(T, T)]) -> (T, T) {
    let mut a = CompensatedSum::new();
    let mut b = CompensatedSum::new();
    for &(x, y) in parts {
        a.add(x);
        b.add(y);
    }
    (a.value(), b.value())
}

/// Population energy and directional error of a trial function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub energy: T,
    pub e_v: T,
    pub e_2: T,
    /// `E(u) − λ0`.
    pub excess: T,
    pub l2_norm: T,
    pub h1_norm: T,
    /// `⟨u/‖u‖, u*⟩`.
    pub overlap: T,
    pub p_perp_l2: T,
    pub p_perp_h1: T,
}

/// Energy, norms, overlap with `u*` and `‖P^⊥(u/‖u‖)‖` in L² and H¹.
///
/// The projector residual `r = u/‖u‖ − α u*` is integrated pointwise in a
/// second pass, which avoids the cancellation in `1 − α²` when `u ≈ u*`.
pub fn error_metrics<T, U>(
    u: &U,
    v: &CosineSeries<T>,
    truth: &GroundTruth<T>,
    rule: &QuadratureRule<T>,
) -> Result<EvalReport<T>>
where
    T: Scalar,
    U: TrialFunction<T> + ?Sized,
{
    check_dim(rule.dim, u.dim())?;
    check_dim(rule.dim, v.dim())?;
    check_dim(rule.dim, truth.dim())?;
    let d = rule.dim;
    let ustar = &truth.ustar;

    // u², |∇u|², V u², u·u*
    let parts = map_chunks(rule.len(), |range| {
        let mut grad = vec![T::zero(); d];
        let mut acc = [T::zero(); 4];
        for i in range {
            let x = rule.node(i);
            let w = rule.weights[i];
            let val = u.value_and_gradient(x, &mut grad);
            let g2: T = grad.iter().map(|&g| g * g).sum();
            acc[0] += w * val * val;
            acc[1] += w * g2;
            acc[2] += w * v.evaluate_unchecked(x) * val * val;
            acc[3] += w * val * ustar.evaluate_unchecked(x);
        }
        acc
    });
    let sums = combine_n(&parts);
    let (uu, gg, vuu, uus) = (sums[0], sums[1], sums[2], sums[3]);
    let losses = Losses::from_sums(gg + vuu, uu)?;
    let l2 = uu.sqrt();
    let overlap = uus / l2;

    let parts = map_chunks(rule.len(), |range| {
        let mut grad = vec![T::zero(); d];
        let mut sgrad = vec![T::zero(); d];
        let mut acc = [T::zero(); 2];
        for i in range {
            let x = rule.node(i);
            let w = rule.weights[i];
            let val = u.value_and_gradient(x, &mut grad);
            let sval = ustar.value_and_gradient_unchecked(x, &mut sgrad);
            let r = val / l2 - overlap * sval;
            let rg2: T = grad
                .iter()
                .zip(&sgrad)
                .map(|(&g, &s)| {
                    let e = g / l2 - overlap * s;
                    e * e
                })
                .sum();
            acc[0] += w * r * r;
            acc[1] += w * rg2;
        }
        acc
    });
    let res = combine_n(&parts);
    Ok(EvalReport {
        energy: losses.energy,
        e_v: losses.e_v,
        e_2: losses.e_2,
        excess: losses.energy - truth.lambda0,
        l2_norm: l2,
        h1_norm: (uu + gg).sqrt(),
        overlap,
        p_perp_l2: res[0].sqrt(),
        p_perp_h1: (res[0] + res[1]).sqrt(),
    })
}

/// Outcome of one random trial of the stability inequalities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityTrial {
    pub trial: usize,
    /// Size of the perturbation added to `u*`; `None` for a free polynomial.
    pub perturbation: Option<f64>,
    pub excess: f64,
    pub p_perp_l2: f64,
    pub p_perp_h1: f64,
    pub check: StabilityReport,
}

/// Cosine polynomial over `|k|_∞ ≤ degree` with Gaussian coefficients
/// damped by `1/(1 + |k|_1)`.
pub fn random_cosine_polynomial<T: Scalar, R: Rng>(dim: usize, degree: u32, rng: &mut R) -> Result<CosineSeries<T>> {
    let side = degree as usize + 1;
    let count = side
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::Resource("too many modes".into()))?;
    let terms = (0..count).map(|mut idx| {
        let k: Vec<u32> = (0..dim)
            .map(|_| {
                let c = (idx % side) as u32;
                idx /= side;
                c
            })
            .collect();
        let l1: u32 = k.iter().sum();
        let z: f64 = rng.sample(StandardNormal);
        (k, T::lit(z / (1.0 + l1 as f64)))
    });
    CosineSeries::from_terms(dim, terms.collect::<Vec<_>>())
}

/// Checks both stability inequalities on `trials` random normalized trial
/// functions. Odd trials are `u* + ε p` with `ε` log-uniform in `[1e-4, 1]`,
/// even trials are free polynomials.
pub fn stability_trials<T: Scalar>(
    v: &CosineSeries<T>,
    truth: &GroundTruth<T>,
    trials: usize,
    degree: u32,
    seed: u64,
    rule: &QuadratureRule<T>,
) -> Result<Vec<StabilityTrial>> {
    if trials == 0 {
        return Err(Error::InvalidInput("number of trials must be >= 1".into()));
    }
    check_dim(v.dim(), truth.dim())?;
    let pb = validate_potential(v)?;
    let d = v.dim();
    (0..trials)
        .map(|i| {
            let mut rng = stream_rng(seed, Stream::Trials, i as u64);
            let p = random_cosine_polynomial::<T, _>(d, degree, &mut rng)?;
            let (u, eps) = if i % 2 == 1 {
                let eps = 10f64.powf(rng.gen_range(-4.0..=0.0));
                let pn = p.scale(T::one() / p.l2_norm());
                (truth.ustar.add(&pn.scale(T::lit(eps)))?, Some(eps))
            } else {
                (p, None)
            };
            let norm = u.l2_norm();
            if !(norm > T::zero()) {
                return Err(Error::DegenerateTrial(format!("trial {i} vanishes")));
            }
            let u = u.scale(T::one() / norm);
            let r = error_metrics(&u, v, truth, rule)?;
            let check = stability_check(
                r.excess.to_f64_lossy(),
                r.p_perp_l2.to_f64_lossy(),
                r.p_perp_h1.to_f64_lossy(),
                truth.gap.to_f64_lossy(),
                pb.v_min.to_f64_lossy(),
                pb.v_max.to_f64_lossy(),
                1.0,
            )?;
            Ok(StabilityTrial {
                trial: i,
                perturbation: eps,
                excess: r.excess.to_f64_lossy(),
                p_perp_l2: r.p_perp_l2.to_f64_lossy(),
                p_perp_h1: r.p_perp_h1.to_f64_lossy(),
                check,
            })
        })
        .collect()
}

fn combine_n<T: Scalar, const K: usize>(parts: &[[T; K]]) -> [T; K] {
    let mut sums = [CompensatedSum::new(); K];
    for p in parts {
        for (s, &x) in sums.iter_mut().zip(p) {
            s.add(x);
        }
    }
    sums.map(|s| s.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{solve_ground_truth, GalerkinConfig};
    use std::f64::consts::PI;

    fn constant(d: usize, c: f64) -> CosineSeries<f64> {
        CosineSeries::constant(d, c).unwrap()
    }

    #[test]
    fn constant_trial_gives_mean_potential() {
        let v = CosineSeries::from_terms(2, [(vec![0, 0], 1.0), (vec![1, 0], 0.5)]).unwrap();
        let s = SampleSet::draw(2, 500, 3).unwrap();
        let u = constant(2, 3.5);
        let l = empirical_losses(&u, &v, &s).unwrap();
        let mean: f64 = s.iter().map(|x| v.evaluate(x).unwrap()).sum::<f64>() / 500.0;
        assert!((l.energy - mean).abs() < 1e-13);

        let l = empirical_losses(&u, &constant(2, 2.5), &s).unwrap();
        assert!((l.energy - 2.5).abs() < 1e-14);
    }

    #[test]
    fn empirical_quotient_is_scale_invariant() {
        let v = CosineSeries::from_terms(1, [(vec![0], 1.0), (vec![1], 0.5)]).unwrap();
        let u = CosineSeries::from_terms(1, [(vec![0], 1.0), (vec![2], 0.25)]).unwrap();
        let s = SampleSet::draw(1, 257, 11).unwrap();
        let a = empirical_losses(&u, &v, &s).unwrap();
        let b = empirical_losses(&u.scale(2.0), &v, &s).unwrap();
        assert_eq!(a.energy, b.energy);
    }

    #[test]
    fn zero_trial_is_degenerate() {
        let s = SampleSet::draw(1, 10, 0).unwrap();
        let zero = CosineSeries::<f64>::new(1).unwrap();
        assert!(matches!(
            empirical_losses(&zero, &constant(1, 1.0), &s),
            Err(Error::DegenerateTrial(_))
        ));
    }

    #[test]
    fn population_examples() {
        let rule = QuadratureRule::tensor_gauss(1, 48).unwrap();
        let l = population_losses(&constant(1, 1.0), &constant(1, 1.0), &rule).unwrap();
        assert!((l.energy - 1.0).abs() < 1e-14);
        let c = CosineSeries::mode(&[1], 1.0f64).unwrap();
        let l = population_losses(&c, &constant(1, 1.0), &rule).unwrap();
        assert!((l.energy - (1.0 + PI * PI)).abs() < 1e-12);
    }

    #[test]
    fn ground_state_energy_matches_reference() {
        let v = CosineSeries::from_terms(1, [(vec![0], 1.0f64), (vec![1], 0.5)]).unwrap();
        let truth = solve_ground_truth(&v, &GalerkinConfig::new(1, 64)).unwrap();
        let rule = QuadratureRule::tensor_gauss(1, 64).unwrap();
        let l = population_losses(&truth.ustar, &v, &rule).unwrap();
        assert!((l.energy - truth.lambda0).abs() < 1e-8);
        let r = error_metrics(&truth.ustar, &v, &truth, &rule).unwrap();
        assert!((r.overlap - 1.0).abs() < 1e-10);
        assert!(r.p_perp_l2 < 1e-8 && r.p_perp_h1 < 1e-8);
    }

    #[test]
    fn orthogonal_and_superposed_trials() {
        let v = constant(1, 1.0);
        let truth = solve_ground_truth(&v, &GalerkinConfig::new(1, 8)).unwrap();
        let rule = QuadratureRule::tensor_gauss(1, 48).unwrap();
        let u1 = CosineSeries::mode(&[1], 2f64.sqrt()).unwrap();
        let r = error_metrics(&u1, &v, &truth, &rule).unwrap();
        assert!(r.overlap.abs() < 1e-12);
        assert!((r.p_perp_l2 - 1.0).abs() < 1e-12);

        let mix = CosineSeries::from_terms(1, [(vec![0], 1.0 / 2f64.sqrt()), (vec![1], 1.0)]).unwrap();
        let r = error_metrics(&mix, &v, &truth, &rule).unwrap();
        assert!((r.p_perp_l2 * r.p_perp_l2 - 0.5).abs() < 1e-12);
        assert!((r.excess - truth.gap / 2.0).abs() < 1e-10);
        assert!((r.p_perp_l2.powi(2) + r.overlap.powi(2) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadrature_orders_agree() {
        let v = CosineSeries::from_terms(2, [(vec![0, 0], 1.0), (vec![1, 1], 0.3)]).unwrap();
        let u = FnTrial {
            dim: 2,
            f: |x: &[f64], g: &mut [f64]| {
                let e = (x[0] - 0.5 * x[1]).exp();
                g[0] = e;
                g[1] = -0.5 * e;
                1.0 + e
            },
        };
        let a = population_losses(&u, &v, &QuadratureRule::tensor_gauss(2, 24).unwrap()).unwrap();
        let b = population_losses(&u, &v, &QuadratureRule::tensor_gauss(2, 32).unwrap()).unwrap();
        assert!((a.e_v - b.e_v).abs() < 1e-8);
        assert!((a.e_2 - b.e_2).abs() < 1e-8);
    }
}
