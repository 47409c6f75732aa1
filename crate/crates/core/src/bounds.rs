//! Explicit constants of the generalization analysis: envelopes, Lipschitz
//! constants, covering numbers, the Dudley entropy integral, the ξ/η terms,
//! the oracle inequality and the stability inequalities.
//!
//! Everything here is plain `f64` arithmetic; products that overflow are
//! evaluated in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the network class `F_{SP_τ,m}(B)` and the potential range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassParams {
    #[serde(rename = "B")]
    pub budget: f64,
    pub m: usize,
    pub d: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl ClassParams {
    pub fn tau(&self) -> f64 {
        (self.m as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.budget >= 0.0) || !self.budget.is_finite() {
            return Err(Error::InvalidInput("B must be finite and >= 0".into()));
        }
        if self.m == 0 || self.d == 0 {
            return Err(Error::InvalidInput("m and d must be >= 1".into()));
        }
        if !(self.v_min > 0.0) || !(self.v_max >= self.v_min) || !self.v_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "need 0 < V_min <= V_max < inf, got V_min={}, V_max={}",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }
}

/// Which function class a Rademacher quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassId {
    /// The networks themselves.
    F,
    /// `u²`.
    G1,
    /// `|∇u|² + V u²`.
    G2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    pub m_f: f64,
    pub m_1: f64,
    pub m_2: f64,
}

/// `M_F = 16B`, `M_1 = (16B)²`, `M_2 = (1+V_max)(16B)²`.
pub fn envelopes(p: &ClassParams) -> Envelopes {
    let m_f = 16.0 * p.budget;
    Envelopes {
        m_f,
        m_1: m_f * m_f,
        m_2: (1.0 + p.v_max) * m_f * m_f,
    }
}

/// `(Λ1, Λ2)`: `36B(5+8B)` and `64B²√m + 8B + 36 V_max B(5+8B)`.
pub fn lambda_bounds(p: &ClassParams) -> (f64, f64) {
    let b = p.budget;
    let l1 = 36.0 * b * (5.0 + 8.0 * b);
    let l2 = 64.0 * b * b * p.tau() + 8.0 * b + p.v_max * l1;
    (l1, l2)
}

/// `ln M(δ, Λ, m, d)` for
/// `M = (4BΛ/δ)(12BΛ/δ)^m (3Λ/δ)^{dm} (3Λ/δ)^m`.
pub fn ln_covering_number(delta: f64, lambda: f64, m: usize, d: usize, budget: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("covering radius must be > 0, got {delta}")));
    }
    if !(lambda > 0.0) || !(budget > 0.0) {
        return Err(Error::InvalidInput("covering number needs B > 0 and Λ > 0".into()));
    }
    let (m, d) = (m as f64, d as f64);
    let l3 = (3.0 * lambda / delta).ln();
    Ok((4.0 * budget * lambda / delta).ln() + m * (12.0 * budget * lambda / delta).ln() + d * m * l3 + m * l3)
}

/// Writes `ln M(ε) = a + b·ln(1/ε)`.
fn covering_affine(lambda: f64, m: usize, d: usize, budget: f64) -> (f64, f64) {
    let (mf, df) = (m as f64, d as f64);
    let l3 = (3.0 * lambda).ln();
    let a = (4.0 * budget * lambda).ln() + mf * ((12.0 * budget * lambda).ln() + (df + 1.0) * l3);
    let b = 1.0 + mf * (df + 2.0);
    (a, b)
}

/// `∫_0^M √((ln M(ε))_+) dε` by adaptive Simpson after `ε = M e^{−s}`,
/// `s = s₀ + v²`; unit panels in `v` are added until one contributes less
/// than `1e-12` of the running total.
pub fn entropy_integral(envelope: f64, lambda: f64, m: usize, d: usize, budget: f64) -> Result<f64> {
    if !(envelope >= 0.0) || !envelope.is_finite() {
        return Err(Error::InvalidInput("envelope must be finite and >= 0".into()));
    }
    if envelope == 0.0 || budget == 0.0 || lambda == 0.0 {
        return Ok(0.0);
    }
    if !(budget > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidInput("entropy integral needs B, Λ >= 0".into()));
    }
    let (a, b) = covering_affine(lambda, m, d, budget);
    let ln_m = envelope.ln();
    // integrand vanishes for s below the zero of a + b(s − ln M)
    let s0 = (ln_m - a / b).max(0.0);
    let f = |v: f64| {
        let s = s0 + v * v;
        let lnn = (a + b * (s - ln_m)).max(0.0);
        envelope * (-s).exp() * lnn.sqrt() * 2.0 * v
    };
    let mut total = 0.0;
    let mut k = 0.0;
    loop {
        let part = adaptive_simpson(&f, k, k + 1.0, 1e-15 * envelope.max(1.0), 50);
        total += part;
        k += 1.0;
        if part.abs() <= 1e-12 * total.abs() || k > 1e4 {
            break;
        }
    }
    if !total.is_finite() {
        return Err(Error::Numeric("entropy integral is not finite".into()));
    }
    Ok(total)
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Dudley bound at `δ = 0`: `(12/√n) ∫_0^M √((ln M(ε))_+) dε`.
pub fn dudley_bound(envelope: f64, lambda: f64, m: usize, d: usize, budget: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    Ok(12.0 / (n as f64).sqrt() * entropy_integral(envelope, lambda, m, d, budget)?)
}

/// `∫_0^M √((ln(1/ε))_+) dε = M√L + (√π/2) erfc(√L)`, `L = (ln(1/M))_+`.
pub fn log_root_integral(envelope: f64) -> f64 {
    if envelope <= 0.0 {
        return 0.0;
    }
    let l = (-envelope.ln()).max(0.0);
    let sl = l.sqrt();
    envelope.min(1.0) * sl + 0.5 * std::f64::consts::PI.sqrt() * libm::erfc(sl)
}

/// Closed form `Z(M, Λ, d)`:
/// `M(√(ln 4BΛ)_+ + √(ln 12BΛ + d ln 3Λ + ln 3Λ)_+) + √(d+3) ∫_0^M √(ln 1/ε)_+ dε`.
///
/// `12·Z·√(m/n)` dominates [`dudley_bound`] for every `m ≥ 1`.
pub fn z_closed_form(envelope: f64, lambda: f64, d: usize, budget: f64) -> f64 {
    if envelope <= 0.0 || lambda <= 0.0 || budget <= 0.0 {
        return 0.0;
    }
    let l3 = (3.0 * lambda).ln();
    let first = (4.0 * budget * lambda).ln().max(0.0).sqrt();
    let second = ((12.0 * budget * lambda).ln() + d as f64 * l3 + l3).max(0.0).sqrt();
    envelope * (first + second) + ((d + 3) as f64).sqrt() * log_root_integral(envelope)
}

/// Dudley bounds for `G₁` (envelope `M_1`, `Λ1`) and `G₂` (`M_2`, `Λ2`).
pub fn class_dudley_bounds(p: &ClassParams, n: usize) -> Result<(f64, f64)> {
    p.validate()?;
    let env = envelopes(p);
    let (l1, l2) = lambda_bounds(p);
    Ok((
        dudley_bound(env.m_1, l1, p.m, p.d, p.budget, n)?,
        dudley_bound(env.m_2, l2, p.m, p.d, p.budget, n)?,
    ))
}

/// `B(6 ln m + 30)/√m`.
pub fn eta(budget: f64, m: usize) -> f64 {
    let mf = m as f64;
    budget * (6.0 * mf.ln() + 30.0) / mf.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiEta {
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub eta: f64,
}

/// `ξ1 = 2R1 + 4M_F²√(2ln(4/δ)/n)`, `ξ2 = 2R2 + 4M_2√(2ln(4/δ)/n)`,
/// `ξ3 = M_F²√(ln(2/δ)/(2n))` and `η`.
pub fn xi_eta(p: &ClassParams, n: usize, delta: f64, r1: f64, r2: f64) -> Result<XiEta> {
    p.validate()?;
    if !(delta > 0.0 && delta < 1.0 / 3.0) {
        return Err(Error::InvalidInput(format!(
            "confidence delta must lie in (0, 1/3), got {delta}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    if !(r1 >= 0.0) || !(r2 >= 0.0) {
        return Err(Error::InvalidInput("Rademacher inputs must be >= 0".into()));
    }
    let env = envelopes(p);
    let nf = n as f64;
    let dev = (2.0 * (4.0 / delta).ln() / nf).sqrt();
    Ok(XiEta {
        xi1: 2.0 * r1 + 4.0 * env.m_1 * dev,
        xi2: 2.0 * r2 + 4.0 * env.m_2 * dev,
        xi3: env.m_1 * ((2.0 / delta).ln() / (2.0 * nf)).sqrt(),
        eta: eta(p.budget, p.m),
    })
}

/// A bound that is either available or whose hypotheses fail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Feasibility {
    Feasible { value: f64 },
    Infeasible { reason: String },
}

impl Feasibility {
    pub fn value(&self) -> Option<f64> {
        match self {
            Feasibility::Feasible { value } => Some(*value),
            Feasibility::Infeasible { .. } => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.value().is_some()
    }
}

/// Right side of the oracle inequality,
/// `(M_2ξ1 + ξ2)/(1−ξ1) + (M_2ξ3 + ξ2)/(1−ξ3) + approx_gap`.
///
/// Infeasible unless all of `ξ1, ξ2, ξ3` are below 1.
pub fn oracle_rhs(xi1: f64, xi2: f64, xi3: f64, m_2: f64, approx_gap: f64) -> Feasibility {
    for (name, xi) in [("xi1", xi1), ("xi2", xi2), ("xi3", xi3)] {
        if !(xi < 1.0) {
            return Feasibility::Infeasible {
                reason: format!("{name} = {xi} is not below 1"),
            };
        }
    }
    Feasibility::Feasible {
        value: (m_2 * xi1 + xi2) / (1.0 - xi1) + (m_2 * xi3 + xi2) / (1.0 - xi3) + approx_gap,
    }
}

/// `(2(1+V_max)(√(λ*/min(1,V_min)) + 1) + 3λ*)·η`, infeasible if `η > ½`.
pub fn energy_diff_bound(lambda_star: f64, v_min: f64, v_max: f64, eta: f64) -> Feasibility {
    if !(eta <= 0.5) {
        return Feasibility::Infeasible {
            reason: format!("eta = {eta} exceeds 1/2"),
        };
    }
    let k = 2.0 * (1.0 + v_max) * ((lambda_star / v_min.min(1.0)).sqrt() + 1.0) + 3.0 * lambda_star;
    Feasibility::Feasible { value: k * eta }
}

/// Both stability inequalities with signed slacks `RHS − LHS`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub l2_lhs: f64,
    pub l2_rhs: f64,
    pub l2_slack: f64,
    pub h1_lhs: f64,
    pub h1_rhs: f64,
    pub h1_slack: f64,
    pub violated: bool,
}

pub const STABILITY_TOL: f64 = 1e-8;

/// Checks `‖P^⊥u‖²_{L²} ≤ excess/gap·‖u‖²` and
/// `‖P^⊥u‖²_{H¹} ≤ ((V_max−V_min+1)/gap + 1)·excess·‖u‖²`.
///
/// `p_perp_*` are the projector norms of `u` itself; for metrics of `u/‖u‖`
/// pass `l2_norm = 1`.
pub fn stability_check(
    excess: f64,
    p_perp_l2: f64,
    p_perp_h1: f64,
    gap: f64,
    v_min: f64,
    v_max: f64,
    l2_norm: f64,
) -> Result<StabilityReport> {
    if !(gap > 0.0) {
        return Err(Error::DegenerateSpectrum { gap, tol: 0.0 });
    }
    let u2 = l2_norm * l2_norm;
    let l2_lhs = p_perp_l2 * p_perp_l2;
    let l2_rhs = excess / gap * u2;
    let h1_lhs = p_perp_h1 * p_perp_h1;
    let h1_rhs = ((v_max - v_min + 1.0) / gap + 1.0) * excess * u2;
    let l2_slack = l2_rhs - l2_lhs;
    let h1_slack = h1_rhs - h1_lhs;
    let violated = l2_slack < -STABILITY_TOL * l2_rhs.max(1.0) || h1_slack < -STABILITY_TOL * h1_rhs.max(1.0);
    Ok(StabilityReport {
        l2_lhs,
        l2_rhs,
        l2_slack,
        h1_lhs,
        h1_rhs,
        h1_slack,
        violated,
    })
}

/// All constants for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub params: ClassParams,
    pub n: usize,
    pub delta: f64,
    pub tau: f64,
    pub m_f: f64,
    pub m_1: f64,
    pub m_2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rademacher_bound_1: f64,
    pub rademacher_bound_2: f64,
    /// Empirical lower estimates; never fed into the oracle bound here.
    pub rademacher_empirical_1: Option<f64>,
    pub rademacher_empirical_2: Option<f64>,
    pub z_1: f64,
    pub z_2: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub xi3: f64,
    pub eta: f64,
    pub approx_gap: Feasibility,
    pub oracle_rhs: Feasibility,
}

/// Evaluates every constant; the approximation term uses
/// [`energy_diff_bound`] when `lambda_star` is supplied.
pub fn bounds_report(
    p: &ClassParams,
    n: usize,
    delta: f64,
    lambda_star: Option<f64>,
    empirical: Option<(f64, f64)>,
) -> Result<BoundsReport> {
    let env = envelopes(p);
    let (l1, l2) = lambda_bounds(p);
    let (r1, r2) = class_dudley_bounds(p, n)?;
    let xi = xi_eta(p, n, delta, r1, r2)?;
    let approx_gap = match lambda_star {
        Some(l) => energy_diff_bound(l, p.v_min, p.v_max, xi.eta),
        None => Feasibility::Infeasible {
            reason: "ground-state energy not supplied".into(),
        },
    };
    let oracle = match approx_gap.value() {
        Some(g) => oracle_rhs(xi.xi1, xi.xi2, xi.xi3, env.m_2, g),
        None => Feasibility::Infeasible {
            reason: "approximation term unavailable".into(),
        },
    };
    Ok(BoundsReport {
        params: *p,
        n,
        delta,
        tau: p.tau(),
        m_f: env.m_f,
        m_1: env.m_1,
        m_2: env.m_2,
        lambda1: l1,
        lambda2: l2,
        rademacher_bound_1: r1,
        rademacher_bound_2: r2,
        rademacher_empirical_1: empirical.map(|e| e.0),
        rademacher_empirical_2: empirical.map(|e| e.1),
        z_1: z_closed_form(env.m_1, l1, p.d, p.budget),
        z_2: z_closed_form(env.m_2, l2, p.d, p.budget),
        xi1: xi.xi1,
        xi2: xi.xi2,
        xi3: xi.xi3,
        eta: xi.eta,
        approx_gap,
        oracle_rhs: oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(b: f64, m: usize, v_max: f64) -> ClassParams {
        ClassParams {
            budget: b,
            m,
            d: 1,
            v_min: 1.0,
            v_max,
        }
    }

    #[test]
    fn envelope_and_lambda_examples() {
        assert_eq!(envelopes(&params(1.0, 4, 1.0)).m_f, 16.0);
        assert_eq!(envelopes(&params(1.0, 4, 1.0)).m_2, 512.0);
        assert_eq!(envelopes(&params(0.5, 4, 1.0)).m_1, 64.0);
        assert_eq!(lambda_bounds(&params(1.0, 4, 1.0)), (468.0, 604.0));
        assert_eq!(lambda_bounds(&params(0.0, 4, 1.0)), (0.0, 0.0));
    }

    #[test]
    fn covering_log_matches_direct_product() {
        let (b, l, m, d, delta) = (1.0f64, 468.0f64, 2usize, 1usize, 1.0f64);
        let direct = (4.0 * b * l / delta)
            * (12.0 * b * l / delta).powi(m as i32)
            * (3.0 * l / delta).powi((d * m) as i32)
            * (3.0 * l / delta).powi(m as i32);
        let got = ln_covering_number(delta, l, m, d, b).unwrap();
        assert!((got - direct.ln()).abs() <= 1e-10 * direct.ln());
        // δ = 3Λ kills the (3Λ/δ) factors
        let lam = 2.0;
        let v = ln_covering_number(3.0 * lam, lam, 5, 3, 0.75).unwrap();
        let want = (4.0 * 0.75 * lam / (3.0 * lam)).ln() + 5.0 * (12.0 * 0.75 * lam / (3.0 * lam)).ln();
        assert!((v - want).abs() < 1e-14);
        assert!(ln_covering_number(0.0, 1.0, 1, 1, 1.0).is_err());
    }

    #[test]
    fn xi_eta_examples() {
        let p = params(1.0, 100, 1.0);
        let x = xi_eta(&p, 16384, 0.1, 0.0, 0.0).unwrap();
        assert!((x.xi1 - 1024.0 * (2.0 * 40f64.ln() / 16384.0).sqrt()).abs() < 1e-12);
        assert!((x.xi1 - 21.73).abs() < 0.01);
        assert!((x.xi3 - 2.447).abs() < 1e-3);
        assert!((x.eta - 5.7631).abs() < 1e-4);
        assert!(xi_eta(&p, 100, 0.4, 0.0, 0.0).is_err());
        assert!(xi_eta(&p, 100, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn oracle_and_energy_examples() {
        assert_eq!(oracle_rhs(0.0, 0.0, 0.0, 512.0, 0.3).value(), Some(0.3));
        assert!(!oracle_rhs(1.0, 0.0, 0.0, 512.0, 0.3).is_feasible());
        assert!(!oracle_rhs(0.5, 0.0, 1.5, 512.0, 0.3).is_feasible());
        let v = energy_diff_bound(1.0, 1.0, 1.0, 0.1).value().unwrap();
        assert!((v - 1.1).abs() < 1e-14);
        assert!(!energy_diff_bound(1.0, 1.0, 1.0, 0.6).is_feasible());
        assert_eq!(energy_diff_bound(1.0, 1.0, 1.0, 0.0).value(), Some(0.0));
    }

    #[test]
    fn dudley_n_scaling_is_exact() {
        let a = dudley_bound(512.0, 604.0, 16, 1, 1.0, 1000).unwrap();
        let b = dudley_bound(512.0, 604.0, 16, 1, 1.0, 4000).unwrap();
        assert_eq!(a / b, 2.0);
    }

    #[test]
    fn dudley_below_closed_form() {
        for &(m, d, b) in &[(1usize, 1usize, 0.1), (16, 1, 1.0), (256, 3, 2.0), (4, 6, 0.01)] {
            let p = ClassParams {
                budget: b,
                m,
                d,
                v_min: 1.0,
                v_max: 2.0,
            };
            let env = envelopes(&p);
            let (l1, l2) = lambda_bounds(&p);
            for (mm, l) in [(env.m_1, l1), (env.m_2, l2)] {
                let num = entropy_integral(mm, l, m, d, b).unwrap();
                let z = z_closed_form(mm, l, d, b) * (m as f64).sqrt();
                assert!(num <= z * (1.0 + 1e-12), "m={m} d={d} B={b}: {num} > {z}");
            }
        }
    }

    #[test]
    fn log_root_integral_limits() {
        let half_root_pi = 0.5 * std::f64::consts::PI.sqrt();
        assert!((log_root_integral(1.0) - half_root_pi).abs() < 1e-15);
        assert!((log_root_integral(50.0) - half_root_pi).abs() < 1e-15);
        assert_eq!(log_root_integral(0.0), 0.0);
        assert!(log_root_integral(0.1) < half_root_pi);
    }

    #[test]
    fn stability_equality_case() {
        let gap = std::f64::consts::PI.powi(2);
        let r = stability_check(gap / 2.0, 0.5f64.sqrt(), 1.0, gap, 1.0, 1.0, 1.0).unwrap();
        assert!(r.l2_slack.abs() <= 1e-12);
        assert!(stability_check(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        let zero = stability_check(0.0, 0.0, 0.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!((zero.l2_slack, zero.h1_slack, zero.violated), (0.0, 0.0, false));
    }

    #[test]
    fn report_is_infeasible_at_desk_scale() {
        let p = params(1.0, 16, 1.0);
        let r = bounds_report(&p, 1_000_000, 0.1, Some(1.0), None).unwrap();
        assert_eq!(r.m_f, 16.0);
        assert!(!r.oracle_rhs.is_feasible());
        assert!(r.rademacher_bound_2 > r.rademacher_bound_1);
    }
}
