//! Empirical Rademacher complexity of `F`, `G₁ = {u²}` and `G₂ = {|∇u|² + Vu²}`
//! by projected gradient ascent over the network class.
//!
//! The supremum is only approached from below, so the result is a lower
//! estimate of `R̂_n`.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{ParamGradient, TwoLayerNetwork};
use crate::bounds::{ClassId, ClassParams};
use crate::error::{check_dim, Error, Result};
use crate::estimators::map_chunks;
use crate::optim::{cosine_lr, Optimizer, OptimizerKind};
use crate::reference::validate_potential;
use crate::sampling::{stream_rng, SampleSet, Stream};
use crate::scalar::{CompensatedSum, Scalar};
use crate::spectral::CosineSeries;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RademacherConfig {
    pub n: usize,
    pub n_sigma: usize,
    pub n_restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Restrict the class to constants `c ∈ [−2B, 2B]`.
    #[serde(default)]
    pub constants_only: bool,
}

fn default_steps() -> usize {
    300
}
fn default_lr() -> f64 {
    5e-2
}

impl RademacherConfig {
    pub fn new(n: usize, n_sigma: usize, n_restarts: usize, seed: u64) -> Self {
        Self {
            n,
            n_sigma,
            n_restarts,
            seed,
            steps: default_steps(),
            lr: default_lr(),
            constants_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub class: ClassId,
    pub n: usize,
    pub n_sigma: usize,
    pub n_restarts: usize,
    pub seed: u64,
    /// Always `"empirical lower estimate"`.
    pub kind: String,
    pub estimate: f64,
    /// Best `|(1/n) Σ σ_j g(Z_j)|` per sign vector.
    pub per_sign: Vec<f64>,
}

/// `(1/n) Σ σ_j g(Z_j)` and its parameter gradient.
fn signed_mean<T: Scalar>(
    net: &TwoLayerNetwork<T>,
    class: ClassId,
    v: &CosineSeries<T>,
    samples: &SampleSet<T>,
    signs: &[T],
) -> (T, ParamGradient<T>) {
    let d = net.dim;
    let parts = map_chunks(samples.n, |range| {
        let mut g = vec![T::zero(); d];
        let mut b = vec![T::zero(); d];
        let mut acc = ParamGradient::zeros(d, net.m);
        let mut s = T::zero();
        for i in range {
            let x = samples.point(i);
            let u = net.value_and_gradient_unchecked(x, &mut g);
            let sg = signs[i];
            let two = T::lit(2.0);
            b.iter_mut().for_each(|v| *v = T::zero());
            let a = match class {
                ClassId::F => {
                    s += sg * u;
                    sg
                }
                ClassId::G1 => {
                    s += sg * u * u;
                    two * sg * u
                }
                ClassId::G2 => {
                    let vx = v.evaluate_unchecked(x);
                    let g2: T = g.iter().map(|&q| q * q).sum();
                    s += sg * (g2 + vx * u * u);
                    for (bj, &gj) in b.iter_mut().zip(&g) {
                        *bj = two * sg * gj;
                    }
                    two * sg * vx * u
                }
            };
            net.accumulate_backward(x, a, &b, &mut acc);
        }
        (s, acc)
    });
    let nf = T::from_usize_lossy(samples.n);
    let mut total = CompensatedSum::new();
    let mut grad = ParamGradient::zeros(d, net.m);
    for (s, g) in &parts {
        total.add(*s);
        grad.add_assign(g);
    }
    let inv = T::one() / nf;
    grad.scale(inv);
    (total.value() * inv, grad)
}

/// Lower estimate of `E_σ sup_g |(1/n) Σ σ_j g(Z_j)|` for one class.
pub fn rademacher_estimate<T: Scalar>(
    class: ClassId,
    p: &ClassParams,
    v: &CosineSeries<T>,
    cfg: &RademacherConfig,
) -> Result<RademacherEstimate> {
    p.validate()?;
    check_dim(p.d, v.dim())?;
    validate_potential(v)?;
    if cfg.n_sigma < 8 || cfg.n_restarts < 4 {
        return Err(Error::InvalidInput(format!(
            "need n_sigma >= 8 and n_restarts >= 4, got {} and {}",
            cfg.n_sigma, cfg.n_restarts
        )));
    }
    if cfg.n == 0 || cfg.steps == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidInput("need n >= 1, steps >= 1 and lr > 0".into()));
    }
    let samples = SampleSet::<T>::draw(p.d, cfg.n, cfg.seed)?;
    let budget = T::lit(p.budget);
    let per_sign: Vec<Result<f64>> = (0..cfg.n_sigma)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(cfg.seed, Stream::Rademacher, j as u64);
            let signs: Vec<T> = (0..cfg.n)
                .map(|_| if rng.gen_bool(0.5) { T::one() } else { -T::one() })
                .collect();
            let mut best = T::zero();
            for r in 0..cfg.n_restarts {
                let init_seed = stream_rng(
                    cfg.seed,
                    Stream::Rademacher,
                    (1 << 40) | (j * cfg.n_restarts + r) as u64,
                )
                .next_u64();
                let dir = if r % 2 == 0 { T::one() } else { -T::one() };
                best = best.max(ascend(class, p.m, budget, v, &samples, &signs, dir, init_seed, cfg)?);
            }
            Ok(best.to_f64_lossy())
        })
        .collect();
    let per_sign = per_sign.into_iter().collect::<Result<Vec<_>>>()?;
    let estimate = per_sign.iter().copied().collect::<CompensatedSum<f64>>().value() / cfg.n_sigma as f64;
    Ok(RademacherEstimate {
        class,
        n: cfg.n,
        n_sigma: cfg.n_sigma,
        n_restarts: cfg.n_restarts,
        seed: cfg.seed,
        kind: "empirical lower estimate".into(),
        estimate,
        per_sign,
    })
}

#[allow(clippy::too_many_arguments)]
fn ascend<T: Scalar>(
    class: ClassId,
    m: usize,
    budget: T,
    v: &CosineSeries<T>,
    samples: &SampleSet<T>,
    signs: &[T],
    dir: T,
    init_seed: u64,
    cfg: &RademacherConfig,
) -> Result<T> {
    let mut net = TwoLayerNetwork::init(samples.dim, m, budget, init_seed)?;
    if cfg.constants_only {
        net.gamma.iter_mut().for_each(|g| *g = T::zero());
    }
    let mut opt = Optimizer::new(OptimizerKind::Adam, net.num_params());
    let mut best = T::zero();
    for step in 0..=cfg.steps {
        let (s, g) = signed_mean(&net, class, v, samples, signs);
        best = best.max(s.abs());
        if step == cfg.steps {
            break;
        }
        let mut flat = g.to_flat();
        // descend on −dir·S
        flat.iter_mut().for_each(|q| *q = -dir * *q);
        if cfg.constants_only {
            flat[1..].iter_mut().for_each(|q| *q = T::zero());
        }
        let mut params = net.params();
        opt.step(
            &mut params,
            &flat,
            T::lit(cosine_lr(cfg.lr, cfg.lr * 1e-2, step, cfg.steps)),
        );
        net.set_params(&params)?;
        net.project_in_place();
        if cfg.constants_only {
            net.gamma.iter_mut().for_each(|g| *g = T::zero());
        }
    }
    Ok(best)
}
