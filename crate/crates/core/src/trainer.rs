//! Empirical Rayleigh-quotient minimization over `F_{SP_τ,m}(B)`, the
//! `n`-sweep, and the H¹ approximation experiment.
//!
//! Projected first-order steps move all parameters. In addition the outer
//! layer `(c, γ)` can be re-solved exactly for fixed inner weights: the
//! quotient is invariant under `(c, γ) ↦ α(c, γ)` and the class constraints
//! on `(c, γ)` are balls, so the best outer layer is the lowest generalized
//! eigenvector of the feature matrices, scaled into the class.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{rayleigh_with_gradient, softplus_parts, ParamGradient, TwoLayerNetwork};
use crate::bounds::{class_dudley_bounds, energy_diff_bound, envelopes, eta, oracle_rhs, stability_check};
use crate::bounds::{ClassParams, Feasibility, StabilityReport, XiEta};
use crate::error::{check_dim, Error, Result};
use crate::estimators::{empirical_losses, error_metrics, map_chunks, EvalReport};
use crate::linalg::{symmetric_eigen, DenseMatrix};
use crate::optim::{cosine_lr, Optimizer, OptimizerKind};
use crate::quadrature::{QuadratureRule, DEFAULT_GAUSS_ORDER};
use crate::reference::{validate_potential, GroundTruth, PotentialBounds};
use crate::sampling::SampleSet;
use crate::scalar::{median, CompensatedSum, Scalar};
use crate::spectral::CosineSeries;

/// Consecutive steps above `10·V_max` after which training aborts.
pub const DIVERGENCE_WINDOW: usize = 100;
/// Median excesses below this are treated as exact zeros in the slope fit.
pub const SLOPE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplePolicy {
    /// One sample set for the whole run.
    #[default]
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n: usize,
    /// Hidden width; `⌈√n⌉` when absent.
    #[serde(default)]
    pub m: Option<usize>,
    /// Barron budget; the `s = 2` Barron norm of the ground state when absent.
    #[serde(default, rename = "B")]
    pub budget: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_lr_final")]
    pub lr_final: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub seed: u64,
    /// Exact outer-layer solve every this many steps (0: only at the start
    /// and the end).
    #[serde(default = "default_refit")]
    pub outer_refit_every: usize,
    #[serde(default = "default_gauss")]
    pub gauss_order: usize,
    #[serde(default)]
    pub resample: ResamplePolicy,
}

fn default_steps() -> usize {
    20_000
}
fn default_lr() -> f64 {
    1e-2
}
fn default_lr_final() -> f64 {
    1e-4
}
fn default_refit() -> usize {
    100
}
fn default_gauss() -> usize {
    DEFAULT_GAUSS_ORDER
}

/// Smallest `m` with `m² ≥ n`.
pub fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

impl TrainConfig {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            m: None,
            budget: None,
            steps: default_steps(),
            lr: default_lr(),
            lr_final: default_lr_final(),
            optimizer: OptimizerKind::default(),
            seed: 0,
            outer_refit_every: default_refit(),
            gauss_order: default_gauss(),
            resample: ResamplePolicy::Fixed,
        }
    }

    /// Fills in `m` and `B` and checks every field.
    pub fn resolve<T: Scalar>(&self, truth: Option<&GroundTruth<T>>) -> Result<Self> {
        let mut c = self.clone();
        let m = *c.m.get_or_insert_with(|| ceil_sqrt(self.n));
        if c.budget.is_none() {
            let t = truth
                .ok_or_else(|| Error::InvalidInput("budget B must be given when no ground truth is supplied".into()))?;
            c.budget = Some(t.ustar.barron_norm(T::lit(2.0))?.to_f64_lossy());
        }
        let b = c.budget.unwrap_or_default();
        if !(self.n >= m && m >= 1) {
            return Err(Error::InvalidInput(format!(
                "need n >= m >= 1, got n={}, m={m}",
                self.n
            )));
        }
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidInput(format!("budget B must be positive, got {b}")));
        }
        if !(c.lr > 0.0) || !(c.lr_final > 0.0) || !c.lr.is_finite() {
            return Err(Error::InvalidInput("learning rates must be positive".into()));
        }
        if c.steps == 0 {
            return Err(Error::InvalidInput("steps must be >= 1".into()));
        }
        if c.gauss_order == 0 {
            return Err(Error::InvalidInput("gauss_order must be >= 1".into()));
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct TrainResult<T> {
    /// Resolved configuration (`m` and `B` filled in).
    pub config: TrainConfig,
    pub dim: usize,
    /// `E_n` of the freshly initialized network.
    pub initial_loss: T,
    /// `E_n` of the returned network.
    pub final_loss: T,
    pub best_step: usize,
    pub network: TwoLayerNetwork<T>,
    pub report: Option<EvalReport<T>>,
    pub stability: Option<StabilityReport>,
    /// `E_n` per step, written separately as CSV.
    #[serde(skip)]
    pub loss_trace: Vec<T>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Minimizes `E_n` on the fixed sample set drawn from `cfg.seed`.
pub fn train<T: Scalar>(
    v: &CosineSeries<T>,
    cfg: &TrainConfig,
    truth: Option<&GroundTruth<T>>,
) -> Result<TrainResult<T>> {
    let start = Instant::now();
    let d = v.dim();
    if let Some(t) = truth {
        check_dim(d, t.dim())?;
    }
    let pb = validate_potential(v)?;
    let cfg = cfg.resolve(truth)?;
    let m = cfg.m.unwrap_or(1);
    let budget = T::lit(cfg.budget.unwrap_or(1.0));
    let samples = SampleSet::<T>::draw(d, cfg.n, cfg.seed)?;

    let mut net = TwoLayerNetwork::init(d, m, budget, cfg.seed)?;
    let initial_loss = empirical_losses(&net, v, &samples)?.energy;
    refit_outer(&mut net, &samples, v)?;

    let mut opt = Optimizer::new(cfg.optimizer, net.num_params());
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut best = (T::infinity(), 0usize, net.clone());
    let guard = T::lit(10.0) * pb.v_max;
    let mut over = 0usize;
    for step in 0..=cfg.steps {
        if step > 0
            && cfg.outer_refit_every > 0
            && step % cfg.outer_refit_every == 0
            && refit_outer(&mut net, &samples, v)?
        {
            opt.reset();
        }
        let (e, grad) = if step < cfg.steps {
            let (e, g) = rayleigh_with_gradient(&net, &samples, v)?;
            (e, Some(g))
        } else {
            (empirical_losses(&net, v, &samples)?.energy, None)
        };
        if !e.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at step {step}")));
        }
        trace.push(e);
        if e < best.0 {
            best = (e, step, net.clone());
        }
        over = if e > guard { over + 1 } else { 0 };
        if over >= DIVERGENCE_WINDOW {
            return Err(Error::Divergence(format!(
                "E_n above 10*V_max for {DIVERGENCE_WINDOW} consecutive steps (step {step})"
            )));
        }
        if let Some(g) = grad {
            let lr = T::lit(cosine_lr(cfg.lr, cfg.lr_final, step, cfg.steps));
            let mut p = net.params();
            opt.step(&mut p, &g.to_flat(), lr);
            net.set_params(&p)?;
            net.project_in_place();
        }
    }

    let (mut final_loss, best_step, mut network) = best;
    if refit_outer(&mut network, &samples, v)? {
        final_loss = empirical_losses(&network, v, &samples)?.energy;
    }

    let (report, stability) = match truth {
        Some(t) => {
            let rule = QuadratureRule::default_for(d, cfg.gauss_order)?;
            let r = error_metrics(&network, v, t, &rule)?;
            let s = stability_for(&r, t, &pb)?;
            (Some(r), Some(s))
        }
        None => (None, None),
    };
    Ok(TrainResult {
        config: cfg,
        dim: d,
        initial_loss,
        final_loss,
        best_step,
        network,
        report,
        stability,
        loss_trace: trace,
        wall_time: start.elapsed(),
    })
}

fn stability_for<T: Scalar>(r: &EvalReport<T>, t: &GroundTruth<T>, pb: &PotentialBounds<T>) -> Result<StabilityReport> {
    // metrics are for u/‖u‖
    stability_check(
        r.excess.to_f64_lossy(),
        r.p_perp_l2.to_f64_lossy(),
        r.p_perp_h1.to_f64_lossy(),
        t.gap.to_f64_lossy(),
        pb.v_min.to_f64_lossy(),
        pb.v_max.to_f64_lossy(),
        1.0,
    )
}

/// Fixed contiguous blocks for feature-moment accumulation; the partition
/// does not depend on the thread count.
const MOMENT_BLOCKS: usize = 16;

/// Weighted second moments of the features `φ = (1, SP_τ(z_1), …)` and
/// `σ = (σ(τz_1), …)`, upper triangles only.
struct Moments<T> {
    /// `Σ w φφᵀ`
    pp: Vec<T>,
    /// `Σ w V φφᵀ`
    vpp: Vec<T>,
    /// `Σ w σσᵀ` (m × m)
    ss: Vec<T>,
    /// `Σ w (f φ + σ_i w_i·∇f)` when a target is given
    rhs: Vec<T>,
}

fn moments<'a, T, P, W>(
    net: &TwoLayerNetwork<T>,
    count: usize,
    point: P,
    weight: W,
    potential: Option<&CosineSeries<T>>,
    target: Option<&CosineSeries<T>>,
) -> Moments<T>
where
    T: Scalar + 'a,
    P: Fn(usize) -> &'a [T] + Sync + Send,
    W: Fn(usize) -> T + Sync + Send,
{
    let m = net.m;
    let k = m + 1;
    let d = net.dim;
    let block = count.div_ceil(MOMENT_BLOCKS).max(1);
    let parts: Vec<Moments<T>> = (0..MOMENT_BLOCKS)
        .into_par_iter()
        .map(|bi| {
            let mut acc = Moments {
                pp: vec![T::zero(); k * k],
                vpp: if potential.is_some() {
                    vec![T::zero(); k * k]
                } else {
                    Vec::new()
                },
                ss: vec![T::zero(); m * m],
                rhs: if target.is_some() {
                    vec![T::zero(); k]
                } else {
                    Vec::new()
                },
            };
            let mut phi = vec![T::zero(); k];
            let mut sig = vec![T::zero(); m];
            let mut tg = vec![T::zero(); d];
            phi[0] = T::one();
            for i in (bi * block).min(count)..((bi + 1) * block).min(count) {
                let x = point(i);
                let w = weight(i);
                for j in 0..m {
                    let (sp, s) = softplus_parts(net.preactivation(j, x), net.tau);
                    phi[j + 1] = sp;
                    sig[j] = s;
                }
                let vx = potential.map(|p| p.evaluate_unchecked(x));
                for a in 0..k {
                    let wa = w * phi[a];
                    let row = &mut acc.pp[a * k..(a + 1) * k];
                    for b in a..k {
                        row[b] += wa * phi[b];
                    }
                    if let Some(vx) = vx {
                        let wva = wa * vx;
                        let row = &mut acc.vpp[a * k..(a + 1) * k];
                        for b in a..k {
                            row[b] += wva * phi[b];
                        }
                    }
                }
                for a in 0..m {
                    let wa = w * sig[a];
                    let row = &mut acc.ss[a * m..(a + 1) * m];
                    for b in a..m {
                        row[b] += wa * sig[b];
                    }
                }
                if let Some(f) = target {
                    let fx = f.value_and_gradient_unchecked(x, &mut tg);
                    acc.rhs[0] += w * fx;
                    for j in 0..m {
                        let wg: T = net.inner(j).iter().zip(&tg).map(|(&a, &b)| a * b).sum();
                        acc.rhs[j + 1] += w * (fx * phi[j + 1] + sig[j] * wg);
                    }
                }
            }
            acc
        })
        .collect();
    let mut out = parts[0].clone_shape();
    for p in &parts {
        for (dst, src) in [
            (&mut out.pp, &p.pp),
            (&mut out.vpp, &p.vpp),
            (&mut out.ss, &p.ss),
            (&mut out.rhs, &p.rhs),
        ] {
            for (a, &b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
    out
}

impl<T: Scalar> Moments<T> {
    fn clone_shape(&self) -> Self {
        Self {
            pp: vec![T::zero(); self.pp.len()],
            vpp: vec![T::zero(); self.vpp.len()],
            ss: vec![T::zero(); self.ss.len()],
            rhs: vec![T::zero(); self.rhs.len()],
        }
    }

    /// Full symmetric `(m+1)²` matrix `base + (σσᵀ ∘ WWᵀ)` on the hidden block.
    fn assemble(&self, net: &TwoLayerNetwork<T>, base: &[T]) -> DenseMatrix<T> {
        let m = net.m;
        let k = m + 1;
        let mut a = DenseMatrix::zeros(k);
        for i in 0..k {
            for j in i..k {
                let mut v = base[i * k + j];
                if i > 0 {
                    let ww: T = net
                        .inner(i - 1)
                        .iter()
                        .zip(net.inner(j - 1))
                        .map(|(&x, &y)| x * y)
                        .sum();
                    v += self.ss[(i - 1) * m + (j - 1)] * ww;
                }
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }
}

fn rank_tol<T: Scalar>() -> T {
    T::epsilon() * T::lit(1e3)
}

/// Lowest generalized eigenvector of `(A, M)` after whitening `M` on its
/// numerically nonzero eigenspace.
fn lowest_generalized<T: Scalar>(a: &DenseMatrix<T>, mm: &DenseMatrix<T>) -> Result<Vec<T>> {
    let k = a.size();
    let em = symmetric_eigen(mm)?;
    let top = em.values[k - 1];
    if !(top > T::zero()) {
        return Err(Error::DegenerateTrial("feature mass matrix vanishes".into()));
    }
    let keep: Vec<usize> = (0..k).filter(|&j| em.values[j] > rank_tol::<T>() * top).collect();
    let r = keep.len();
    // W = Q_keep Λ^{-1/2}, k × r
    let mut w = vec![T::zero(); k * r];
    for (c, &j) in keep.iter().enumerate() {
        let s = T::one() / em.values[j].sqrt();
        for i in 0..k {
            w[i * r + c] = em.vectors[(i, j)] * s;
        }
    }
    let mut aw = vec![T::zero(); k * r];
    for i in 0..k {
        for l in 0..k {
            let ail = a[(i, l)];
            if ail == T::zero() {
                continue;
            }
            for c in 0..r {
                aw[i * r + c] += ail * w[l * r + c];
            }
        }
    }
    let mut red = DenseMatrix::zeros(r);
    for c1 in 0..r {
        for c2 in c1..r {
            let mut s = T::zero();
            for i in 0..k {
                s += w[i * r + c1] * aw[i * r + c2];
            }
            red[(c1, c2)] = s;
            red[(c2, c1)] = s;
        }
    }
    let er = symmetric_eigen(&red)?;
    let y = er.vector(0);
    Ok((0..k).map(|i| (0..r).map(|c| w[i * r + c] * y[c]).sum()).collect())
}

/// Exact minimizer of `E_n` over the outer layer for the current inner
/// weights, scaled into the class. Kept only if it lowers `E_n`.
pub fn refit_outer<T: Scalar>(
    net: &mut TwoLayerNetwork<T>,
    samples: &SampleSet<T>,
    v: &CosineSeries<T>,
) -> Result<bool> {
    let before = empirical_losses(net, v, samples)?.energy;
    let mo = moments(net, samples.n, |i| samples.point(i), |_| T::one(), Some(v), None);
    let a = mo.assemble(net, &mo.vpp);
    let mut mm = DenseMatrix::zeros(net.m + 1);
    let k = net.m + 1;
    for i in 0..k {
        for j in i..k {
            mm[(i, j)] = mo.pp[i * k + j];
            mm[(j, i)] = mo.pp[i * k + j];
        }
    }
    let mut coef = match lowest_generalized(&a, &mm) {
        Ok(c) => c,
        Err(Error::Numeric(_)) | Err(Error::Convergence { .. }) => return Ok(false),
        Err(e) => return Err(e),
    };
    // positive mean on the sample
    let mean: T = coef.iter().enumerate().map(|(j, &c)| c * mo.pp[j]).sum();
    if mean < T::zero() {
        coef.iter_mut().for_each(|c| *c = -*c);
    }
    let g1: T = coef[1..].iter().map(|c| c.abs()).sum();
    let mut alpha = T::infinity();
    if coef[0] != T::zero() {
        alpha = alpha.min(T::lit(2.0) * net.budget / coef[0].abs());
    }
    if g1 > T::zero() {
        alpha = alpha.min(T::lit(4.0) * net.budget / g1);
    }
    if !alpha.is_finite() || !(alpha > T::zero()) {
        return Ok(false);
    }
    let mut cand = net.clone();
    cand.c = coef[0] * alpha;
    for (g, &c) in cand.gamma.iter_mut().zip(&coef[1..]) {
        *g = c * alpha;
    }
    cand.project_in_place();
    match empirical_losses(&cand, v, samples) {
        Ok(l) if l.energy < before => {
            *net = cand;
            Ok(true)
        }
        _ => Ok(false),
    }
}

/// One row of the n-sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub energy: f64,
    pub excess: f64,
    pub p_perp_l2: f64,
    pub p_perp_h1: f64,
}

/// Per-`n` aggregate with the oracle-inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub m: usize,
    pub median_excess: f64,
    pub xi: XiEta,
    pub approx_gap: Feasibility,
    pub oracle_rhs: Feasibility,
    /// `Some(median ≤ rhs)` when the oracle bound is feasible.
    pub below_oracle: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
    /// Least-squares slope of `ln(median excess)` against `ln n`.
    pub slope: Option<f64>,
    pub slope_note: String,
    pub stability_violations: usize,
}

/// Trains every `(n, seed)` cell with `m = ⌈√n⌉` and fits the decay rate of
/// the median population excess.
pub fn sweep<T: Scalar>(
    v: &CosineSeries<T>,
    truth: &GroundTruth<T>,
    n_list: &[usize],
    seeds: &[u64],
    template: &TrainConfig,
    delta: f64,
) -> Result<SweepReport> {
    if n_list.len() < 3 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(
            "n_list must be strictly increasing with >= 3 entries".into(),
        ));
    }
    let mut uniq = seeds.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() < 5 || uniq.len() != seeds.len() {
        return Err(Error::InvalidInput("sweep needs at least 5 distinct seeds".into()));
    }
    let pb = validate_potential(v)?;
    let cells: Vec<(usize, u64)> = n_list.iter().flat_map(|&n| uniq.iter().map(move |&s| (n, s))).collect();
    let results: Vec<Result<TrainResult<T>>> = cells
        .par_iter()
        .map(|&(n, seed)| {
            let mut cfg = template.clone();
            cfg.n = n;
            cfg.m = Some(ceil_sqrt(n));
            cfg.seed = seed;
            train(v, &cfg, Some(truth))
        })
        .collect();

    let mut rows = Vec::with_capacity(cells.len());
    let mut violations = 0;
    let mut budget = None;
    for (&(n, seed), res) in cells.iter().zip(results) {
        let r = res?;
        let rep = r.report.as_ref().expect("truth supplied");
        if r.stability.is_some_and(|s| s.violated) {
            violations += 1;
        }
        budget = r.config.budget;
        rows.push(SweepRow {
            seed,
            n,
            m: r.network.m,
            energy: rep.energy.to_f64_lossy(),
            excess: rep.excess.to_f64_lossy(),
            p_perp_l2: rep.p_perp_l2.to_f64_lossy(),
            p_perp_h1: rep.p_perp_h1.to_f64_lossy(),
        });
    }
    let budget = budget.unwrap_or(1.0);

    let mut out_cells = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let ex: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.excess).collect();
        let med = median(&ex).unwrap_or(f64::NAN);
        let m = ceil_sqrt(n);
        let p = ClassParams {
            budget,
            m,
            d: v.dim(),
            v_min: pb.v_min.to_f64_lossy(),
            v_max: pb.v_max.to_f64_lossy(),
        };
        let (r1, r2) = class_dudley_bounds(&p, n)?;
        let xi = crate::bounds::xi_eta(&p, n, delta, r1, r2)?;
        let approx_gap = energy_diff_bound(truth.lambda0.to_f64_lossy(), p.v_min, p.v_max, eta(budget, m));
        let rhs = match approx_gap.value() {
            Some(g) => oracle_rhs(xi.xi1, xi.xi2, xi.xi3, envelopes(&p).m_2, g),
            None => Feasibility::Infeasible {
                reason: "approximation bound infeasible (eta > 1/2)".into(),
            },
        };
        out_cells.push(SweepCell {
            n,
            m,
            median_excess: med,
            xi,
            below_oracle: rhs.value().map(|b| med <= b),
            approx_gap,
            oracle_rhs: rhs,
        });
    }

    let (slope, slope_note) = if out_cells.iter().any(|c| !(c.median_excess > SLOPE_FLOOR)) {
        (
            None,
            format!("not applicable: a median excess is below the floor {SLOPE_FLOOR:e}"),
        )
    } else {
        let pts: Vec<(f64, f64)> = out_cells
            .iter()
            .map(|c| ((c.n as f64).ln(), c.median_excess.ln()))
            .collect();
        (
            Some(ls_slope(&pts)),
            "least squares on ln(median excess) vs ln n".into(),
        )
    };
    Ok(SweepReport {
        rows,
        cells: out_cells,
        slope,
        slope_note,
        stability_violations: violations,
    })
}

/// Ordinary least-squares slope.
pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    #[serde(default = "default_approx_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_lr_final")]
    pub lr_final: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_refit")]
    pub outer_refit_every: usize,
    /// Gauss order per axis for the H¹ integrals.
    #[serde(default = "default_approx_gauss")]
    pub gauss_order: usize,
}

fn default_approx_steps() -> usize {
    4000
}
fn default_approx_gauss() -> usize {
    256
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            steps: default_approx_steps(),
            lr: default_lr(),
            lr_final: default_lr_final(),
            optimizer: OptimizerKind::default(),
            outer_refit_every: default_refit(),
            gauss_order: default_approx_gauss(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxRow {
    pub m: usize,
    #[serde(rename = "B")]
    pub budget: f64,
    pub eta: f64,
    pub best_error: f64,
    pub median_error: f64,
    /// Trained H¹ error per seed, in seed order.
    pub errors: Vec<f64>,
}

/// `‖u − f‖²_{H¹}` by quadrature and, optionally, its parameter gradient.
fn h1_objective<T: Scalar>(
    net: &TwoLayerNetwork<T>,
    target: &CosineSeries<T>,
    rule: &QuadratureRule<T>,
    want_grad: bool,
) -> (T, Option<ParamGradient<T>>) {
    let d = net.dim;
    let parts = map_chunks(rule.len(), |range| {
        let mut gu = vec![T::zero(); d];
        let mut gf = vec![T::zero(); d];
        let mut b = vec![T::zero(); d];
        let mut val = T::zero();
        let mut acc = want_grad.then(|| ParamGradient::zeros(d, net.m));
        for i in range {
            let x = rule.node(i);
            let w = rule.weights()[i];
            let u = net.value_and_gradient_unchecked(x, &mut gu);
            let f = target.value_and_gradient_unchecked(x, &mut gf);
            let r = u - f;
            let mut e2 = r * r;
            for j in 0..d {
                let e = gu[j] - gf[j];
                e2 += e * e;
                b[j] = T::lit(2.0) * w * e;
            }
            val += w * e2;
            if let Some(acc) = acc.as_mut() {
                net.accumulate_backward(x, T::lit(2.0) * w * r, &b, acc);
            }
        }
        (val, acc)
    });
    let mut total = CompensatedSum::new();
    let mut grad = want_grad.then(|| ParamGradient::zeros(d, net.m));
    for (v, g) in parts {
        total.add(v);
        if let (Some(dst), Some(src)) = (grad.as_mut(), g) {
            dst.add_assign(&src);
        }
    }
    (total.value(), grad)
}

/// H¹ least-squares outer layer for fixed inner weights, projected into the
/// class. Kept only if it lowers the objective.
fn refit_outer_h1<T: Scalar>(
    net: &mut TwoLayerNetwork<T>,
    target: &CosineSeries<T>,
    rule: &QuadratureRule<T>,
) -> Result<bool> {
    let before = h1_objective(net, target, rule, false).0;
    let mo = moments(
        net,
        rule.len(),
        |i| rule.node(i),
        |i| rule.weights()[i],
        None,
        Some(target),
    );
    let g = mo.assemble(net, &mo.pp);
    let k = net.m + 1;
    let eg = symmetric_eigen(&g)?;
    let top = eg.values[k - 1];
    let mut coef = vec![T::zero(); k];
    for j in 0..k {
        if eg.values[j] > rank_tol::<T>() * top {
            let q = eg.vector(j);
            let proj: T = q.iter().zip(&mo.rhs).map(|(&a, &b)| a * b).sum::<T>() / eg.values[j];
            for (c, &qi) in coef.iter_mut().zip(&q) {
                *c += proj * qi;
            }
        }
    }
    let mut cand = net.clone();
    cand.c = coef[0];
    cand.gamma.copy_from_slice(&coef[1..]);
    cand.project_in_place();
    let after = h1_objective(&cand, target, rule, false).0;
    if after < before {
        *net = cand;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Trained H¹ error of one network width and seed.
pub fn fit_h1<T: Scalar>(
    target: &CosineSeries<T>,
    m: usize,
    budget: T,
    seed: u64,
    cfg: &ApproxConfig,
) -> Result<(T, TwoLayerNetwork<T>)> {
    let d = target.dim();
    let rule = QuadratureRule::default_for(d, cfg.gauss_order)?;
    let mut net = TwoLayerNetwork::init(d, m, budget, seed)?;
    refit_outer_h1(&mut net, target, &rule)?;
    let mut opt = Optimizer::new(cfg.optimizer, net.num_params());
    let mut best = (T::infinity(), net.clone());
    for step in 0..=cfg.steps {
        if step > 0
            && cfg.outer_refit_every > 0
            && step % cfg.outer_refit_every == 0
            && refit_outer_h1(&mut net, target, &rule)?
        {
            opt.reset();
        }
        let (val, grad) = h1_objective(&net, target, &rule, step < cfg.steps);
        if val < best.0 {
            best = (val, net.clone());
        }
        if let Some(g) = grad {
            let lr = T::lit(cosine_lr(cfg.lr, cfg.lr_final, step, cfg.steps));
            let mut p = net.params();
            opt.step(&mut p, &g.to_flat(), lr);
            net.set_params(&p)?;
            net.project_in_place();
        }
    }
    let (mut val, mut net) = best;
    if refit_outer_h1(&mut net, target, &rule)? {
        val = h1_objective(&net, target, &rule, false).0;
    }
    Ok((val.max(T::zero()).sqrt(), net))
}

/// For each width: H¹ error of the trained network per seed against
/// `η(B, m) = B(6 ln m + 30)/√m` with `B` the `s = 2` Barron norm of the target.
pub fn approximation_check<T: Scalar>(
    target: &CosineSeries<T>,
    m_list: &[usize],
    seeds: &[u64],
    cfg: &ApproxConfig,
) -> Result<Vec<ApproxRow>> {
    if m_list.is_empty() || seeds.is_empty() || m_list.contains(&0) {
        return Err(Error::InvalidInput("need nonempty widths (>= 1) and seeds".into()));
    }
    if cfg.steps == 0 || !(cfg.lr > 0.0) || !(cfg.lr_final > 0.0) {
        return Err(Error::InvalidInput(
            "approximation config needs steps >= 1 and positive rates".into(),
        ));
    }
    let budget = target.barron_norm(T::lit(2.0))?;
    if !(budget > T::zero()) {
        return Err(Error::InvalidInput("target has zero Barron norm".into()));
    }
    let cells: Vec<(usize, u64)> = m_list
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let errs: Vec<Result<T>> = cells
        .par_iter()
        .map(|&(m, s)| fit_h1(target, m, budget, s, cfg).map(|r| r.0))
        .collect();
    let mut it = errs.into_iter();
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let errors: Vec<f64> = (0..seeds.len())
            .map(|_| it.next().expect("one result per cell").map(|e| e.to_f64_lossy()))
            .collect::<Result<_>>()?;
        let b = budget.to_f64_lossy();
        rows.push(ApproxRow {
            m,
            budget: b,
            eta: eta(b, m),
            best_error: errors.iter().copied().fold(f64::INFINITY, f64::min),
            median_error: median(&errors).unwrap_or(f64::NAN),
            errors,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{solve_ground_truth, GalerkinConfig};

    #[test]
    fn ceil_sqrt_values() {
        assert_eq!(ceil_sqrt(4096), 64);
        assert_eq!(ceil_sqrt(4097), 65);
        assert_eq!(ceil_sqrt(1), 1);
        assert_eq!(ceil_sqrt(1000), 32);
    }

    #[test]
    fn config_resolution() {
        let v = CosineSeries::constant(1, 1.0).unwrap();
        let truth = solve_ground_truth(&v, &GalerkinConfig::new(1, 4)).unwrap();
        let c = TrainConfig::new(4096).resolve(Some(&truth)).unwrap();
        assert_eq!(c.m, Some(64));
        assert!((c.budget.unwrap() - 1.0).abs() < 1e-12);
        assert!(TrainConfig::new(4096).resolve::<f64>(None).is_err());
        let mut bad = TrainConfig::new(10);
        bad.m = Some(11);
        bad.budget = Some(1.0);
        assert!(bad.resolve::<f64>(None).is_err());
        let json = r#"{"n": 16, "B": 1.0, "stepz": 3}"#;
        assert!(serde_json::from_str::<TrainConfig>(json).is_err());
    }

    #[test]
    fn constant_potential_is_solved_exactly() {
        let v = CosineSeries::<f64>::constant(1, 3.0).unwrap();
        let mut cfg = TrainConfig::new(256);
        cfg.budget = Some(1.0);
        cfg.steps = 20;
        let r = train(&v, &cfg, None).unwrap();
        assert!((r.final_loss - 3.0).abs() < 1e-10);
        assert!(r.final_loss <= r.initial_loss);
        assert!(r.network.satisfies_constraints(1e-14));
        assert_eq!(r.loss_trace.len(), 21);
    }

    #[test]
    fn trains_in_single_precision() {
        let v = CosineSeries::<f32>::from_terms(1, [(vec![0], 1.0), (vec![1], 0.5)]).unwrap();
        let t = solve_ground_truth(&v, &GalerkinConfig::new(1, 16)).unwrap();
        let mut cfg = TrainConfig::new(256);
        cfg.steps = 20;
        let r = train(&v, &cfg, Some(&t)).unwrap();
        let rep = r.report.unwrap();
        assert!(rep.excess < 1e-2 && rep.excess > -1e-4, "{}", rep.excess);
        assert!(r.network.satisfies_constraints(1e-5));
    }

    #[test]
    fn outer_refit_never_increases_loss() {
        let v = CosineSeries::from_terms(1, [(vec![0], 1.0), (vec![1], 0.5)]).unwrap();
        let s = SampleSet::draw(1, 500, 2).unwrap();
        let mut net = TwoLayerNetwork::<f64>::init(1, 8, 1.5, 2).unwrap();
        let before = empirical_losses(&net, &v, &s).unwrap().energy;
        let changed = refit_outer(&mut net, &s, &v).unwrap();
        let after = empirical_losses(&net, &v, &s).unwrap().energy;
        assert!(after <= before);
        assert!(changed);
        assert!(net.satisfies_constraints(1e-14));
    }

    #[test]
    fn sweep_preconditions() {
        let v = CosineSeries::constant(1, 1.0).unwrap();
        let t = solve_ground_truth(&v, &GalerkinConfig::new(1, 4)).unwrap();
        let cfg = TrainConfig::new(16);
        assert!(sweep(&v, &t, &[16, 64, 256], &[1], &cfg, 0.1).is_err());
        assert!(sweep(&v, &t, &[16, 64], &[1, 2, 3, 4, 5], &cfg, 0.1).is_err());
    }

    #[test]
    fn constant_target_is_fitted_exactly() {
        let f = CosineSeries::constant(1, 1.0).unwrap();
        let cfg = ApproxConfig {
            steps: 10,
            gauss_order: 32,
            ..ApproxConfig::default()
        };
        let rows = approximation_check(&f, &[4], &[0, 1], &cfg).unwrap();
        assert!(rows[0].best_error <= 1e-8, "{:?}", rows[0]);
        assert!((eta(1.0, 100) - 5.7631).abs() < 1e-4);
    }
}
