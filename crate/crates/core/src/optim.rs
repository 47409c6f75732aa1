//! First-order update rules and the cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `θ ← θ − lr·g`.
    Plain,
    /// Adaptive moments with bias correction.
    #[default]
    Adam,
}

/// Cosine decay from `lr` at step 0 to `lr_final` at step `steps`.
pub fn cosine_lr(lr: f64, lr_final: f64, step: usize, steps: usize) -> f64 {
    if steps == 0 {
        return lr;
    }
    let frac = (step.min(steps) as f64) / steps as f64;
    lr_final + 0.5 * (lr - lr_final) * (1.0 + (std::f64::consts::PI * frac).cos())
}

pub struct Optimizer<T> {
    kind: OptimizerKind,
    m1: Vec<T>,
    m2: Vec<T>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, size: usize) -> Self {
        Self {
            kind,
            m1: vec![T::zero(); size],
            m2: vec![T::zero(); size],
            t: 0,
        }
    }

    /// Descent step on `params` for gradient `grad`.
    pub fn step(&mut self, params: &mut [T], grad: &[T], lr: T) {
        match self.kind {
            OptimizerKind::Plain => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
                let c1 = T::one() - b1.powi(self.t);
                let c2 = T::one() - b2.powi(self.t);
                let eps = T::lit(ADAM_EPS);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m1[i] = b1 * self.m1[i] + (T::one() - b1) * g;
                    self.m2[i] = b2 * self.m2[i] + (T::one() - b2) * g * g;
                    let mh = self.m1[i] / c1;
                    let vh = self.m2[i] / c2;
                    params[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }

    /// Forgets accumulated moments, e.g. after parameters jump.
    pub fn reset(&mut self) {
        self.m1.iter_mut().chain(&mut self.m2).for_each(|x| *x = T::zero());
        self.t = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(1e-2, 1e-4, 0, 100), 1e-2);
        assert!((cosine_lr(1e-2, 1e-4, 100, 100) - 1e-4).abs() < 1e-18);
        assert!((cosine_lr(1e-2, 1e-4, 50, 100) - 0.5 * (1e-2 + 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        for kind in [OptimizerKind::Plain, OptimizerKind::Adam] {
            let mut opt = Optimizer::new(kind, 2);
            let mut p = [3.0f64, -2.0];
            for s in 0..3000 {
                let g = [2.0 * p[0], 8.0 * p[1]];
                opt.step(&mut p, &g, cosine_lr(0.05, 1e-4, s, 3000));
            }
            assert!(p[0].abs() < 1e-3 && p[1].abs() < 1e-3, "{kind:?} {p:?}");
        }
    }
}
