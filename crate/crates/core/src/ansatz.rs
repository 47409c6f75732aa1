//! Constrained two-layer Softplus networks
//! `u(x) = c + Σ_i γ_i SP_τ(w_i·x − t_i)` with `|c| ≤ 2B`, `Σ|γ_i| ≤ 4B`,
//! `|w_i|_1 = 1` and `|t_i| ≤ 1`.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimators::{map_chunks, TrialFunction};
use crate::sampling::{stream_rng, SampleSet, Stream};
use crate::scalar::{CompensatedSum, Scalar};
use crate::spectral::CosineSeries;

/// Above this value of `τz` softplus switches to `z + ln(1+e^{−τz})/τ`.
pub const STABLE_BRANCH: f64 = 30.0;

/// `(SP_τ(z), σ(τz))` from a single exponential.
#[inline]
pub(crate) fn softplus_parts<T: Scalar>(z: T, tau: T) -> (T, T) {
    let tz = tau * z;
    if tz > T::lit(STABLE_BRANCH) {
        let e = (-tz).exp();
        (z + e.ln_1p() / tau, T::one() / (T::one() + e))
    } else {
        let e = tz.exp();
        (e.ln_1p() / tau, e / (T::one() + e))
    }
}

/// `SP_τ(z) = ln(1 + e^{τz}) / τ`.
pub fn softplus_tau<T: Scalar>(z: T, tau: T) -> Result<T> {
    check_tau(tau)?;
    Ok(softplus_parts(z, tau).0)
}

/// `d/dz SP_τ(z) = σ(τz)`.
pub fn softplus_tau_derivative<T: Scalar>(z: T, tau: T) -> Result<T> {
    check_tau(tau)?;
    Ok(softplus_parts(z, tau).1)
}

fn check_tau<T: Scalar>(tau: T) -> Result<()> {
    if tau > T::zero() && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "tau must be positive and finite, got {tau}"
        )))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayerNetwork<T> {
    pub dim: usize,
    pub m: usize,
    pub tau: T,
    /// Barron budget `B`.
    pub budget: T,
    pub c: T,
    pub gamma: Vec<T>,
    /// Inner weights, row `i` is `w_i` (row-major `m × d`).
    pub w: Vec<T>,
    pub t: Vec<T>,
    /// Run seed used to redraw an inner weight whose ℓ1 norm vanishes.
    pub seed: u64,
}

/// Partial derivatives with the parameter shapes of [`TwoLayerNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient<T> {
    pub c: T,
    pub gamma: Vec<T>,
    pub w: Vec<T>,
    pub t: Vec<T>,
}

impl<T: Scalar> ParamGradient<T> {
    pub fn zeros(dim: usize, m: usize) -> Self {
        Self {
            c: T::zero(),
            gamma: vec![T::zero(); m],
            w: vec![T::zero(); m * dim],
            t: vec![T::zero(); m],
        }
    }

    /// Flattened as `[c, γ, w, t]`, the layout of [`TwoLayerNetwork::params`].
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(1 + self.gamma.len() * 2 + self.w.len());
        out.push(self.c);
        out.extend_from_slice(&self.gamma);
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.t);
        out
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        self.c += other.c;
        for (a, &b) in self.gamma.iter_mut().zip(&other.gamma) {
            *a += b;
        }
        for (a, &b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, &b) in self.t.iter_mut().zip(&other.t) {
            *a += b;
        }
    }

    pub(crate) fn scale(&mut self, s: T) {
        self.c *= s;
        self.gamma
            .iter_mut()
            .chain(&mut self.w)
            .chain(&mut self.t)
            .for_each(|x| *x *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.c.is_finite() && self.gamma.iter().chain(&self.w).chain(&self.t).all(|x| x.is_finite())
    }
}

impl<T: Scalar> TwoLayerNetwork<T> {
    /// Assembles a network from raw parts; shapes and finiteness are checked
    /// but the class constraints are not (see [`Self::project`]).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dim: usize,
        tau: T,
        budget: T,
        c: T,
        gamma: Vec<T>,
        w: Vec<T>,
        t: Vec<T>,
        seed: u64,
    ) -> Result<Self> {
        let m = gamma.len();
        if dim == 0 || m == 0 {
            return Err(Error::InvalidInput("network needs dim >= 1 and m >= 1".into()));
        }
        check_dim(m * dim, w.len())?;
        check_dim(m, t.len())?;
        check_tau(tau)?;
        if !(budget > T::zero()) || !budget.is_finite() {
            return Err(Error::InvalidInput(format!("budget B must be positive, got {budget}")));
        }
        let net = Self {
            dim,
            m,
            tau,
            budget,
            c,
            gamma,
            w,
            t,
            seed,
        };
        if !net.params().iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("network parameters must be finite".into()));
        }
        Ok(net)
    }

    /// Random member of the class with `τ = √m`, close to the constant 1.
    pub fn init(dim: usize, m: usize, budget: T, seed: u64) -> Result<Self> {
        if dim == 0 || m == 0 {
            return Err(Error::InvalidInput("network needs dim >= 1 and m >= 1".into()));
        }
        let mut rng = stream_rng(seed, Stream::Init, 0);
        let mut w = Vec::with_capacity(m * dim);
        for _ in 0..m {
            w.extend(signed_exponentials::<T, _>(&mut rng, dim));
        }
        let t = (0..m).map(|_| T::lit(rng.gen_range(-1.0..=1.0))).collect();
        let g = 4.0 * budget.to_f64_lossy() / m as f64;
        let gamma = (0..m).map(|_| T::lit(rng.gen_range(-g..=g))).collect();
        let c = T::one().min(budget * T::lit(2.0));
        let tau = T::from_usize_lossy(m).sqrt();
        let mut net = Self::from_parts(dim, tau, budget, c, gamma, w, t, seed)?;
        net.project_in_place();
        Ok(net)
    }

    pub fn num_params(&self) -> usize {
        1 + 2 * self.m + self.m * self.dim
    }

    /// `[c, γ_1..γ_m, w_11..w_md, t_1..t_m]`.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        out.push(self.c);
        out.extend_from_slice(&self.gamma);
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.t);
        out
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        check_dim(self.num_params(), p.len())?;
        let (m, md) = (self.m, self.m * self.dim);
        self.c = p[0];
        self.gamma.copy_from_slice(&p[1..1 + m]);
        self.w.copy_from_slice(&p[1 + m..1 + m + md]);
        self.t.copy_from_slice(&p[1 + m + md..]);
        Ok(())
    }

    #[inline]
    pub fn inner(&self, i: usize) -> &[T] {
        &self.w[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub(crate) fn preactivation(&self, i: usize, x: &[T]) -> T {
        let mut z = -self.t[i];
        for (&wi, &xi) in self.inner(i).iter().zip(x) {
            z += wi * xi;
        }
        z
    }

    pub fn evaluate(&self, x: &[T]) -> Result<T> {
        check_dim(self.dim, x.len())?;
        let mut u = self.c;
        for i in 0..self.m {
            u += self.gamma[i] * softplus_parts(self.preactivation(i, x), self.tau).0;
        }
        Ok(u)
    }

    /// `Σ_i γ_i σ(τ(w_i·x − t_i)) w_i`.
    pub fn spatial_gradient(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim(self.dim, x.len())?;
        let mut g = vec![T::zero(); self.dim];
        self.value_and_gradient_unchecked(x, &mut g);
        Ok(g)
    }

    pub(crate) fn value_and_gradient_unchecked(&self, x: &[T], grad: &mut [T]) -> T {
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut u = self.c;
        for i in 0..self.m {
            let (sp, sig) = softplus_parts(self.preactivation(i, x), self.tau);
            u += self.gamma[i] * sp;
            let a = self.gamma[i] * sig;
            for (g, &wij) in grad.iter_mut().zip(self.inner(i)) {
                *g += a * wij;
            }
        }
        u
    }

    /// Adds the parameter gradient of `a·u(x) + b·∇u(x)` to `acc`.
    pub(crate) fn accumulate_backward(&self, x: &[T], a: T, b: &[T], acc: &mut ParamGradient<T>) {
        let d = self.dim;
        acc.c += a;
        for i in 0..self.m {
            let wi = self.inner(i);
            let (sp, sig) = softplus_parts(self.preactivation(i, x), self.tau);
            let dsig = self.tau * sig * (T::one() - sig);
            let bw: T = wi.iter().zip(b).map(|(&w, &bj)| w * bj).sum();
            let gi = self.gamma[i];
            acc.gamma[i] += a * sp + sig * bw;
            let dz = gi * (a * sig + dsig * bw);
            let gs = gi * sig;
            let row = &mut acc.w[i * d..(i + 1) * d];
            for j in 0..d {
                row[j] += dz * x[j] + gs * b[j];
            }
            acc.t[i] -= dz;
        }
    }

    pub fn gamma_l1(&self) -> T {
        self.gamma.iter().map(|g| g.abs()).sum()
    }

    /// Maps arbitrary parameters into the class componentwise.
    ///
    /// Non-finite entries are zeroed first. The result is a fixed point:
    /// `project(project(n)) == project(n)` bit for bit.
    pub fn project(&self) -> Self {
        let mut n = self.clone();
        n.project_in_place();
        n
    }

    pub fn project_in_place(&mut self) {
        let zero_bad = |x: &mut T| {
            if !x.is_finite() {
                *x = T::zero();
            }
        };
        zero_bad(&mut self.c);
        self.gamma
            .iter_mut()
            .chain(&mut self.w)
            .chain(&mut self.t)
            .for_each(zero_bad);

        let d = self.dim;
        let tol = T::epsilon() * T::from_usize_lossy(2 * d);
        for i in 0..self.m {
            let row = &mut self.w[i * d..(i + 1) * d];
            let mut l1: T = row.iter().map(|v| v.abs()).sum();
            if l1 == T::zero() {
                let mut rng = stream_rng(self.seed, Stream::Reinit, i as u64);
                for (r, v) in row.iter_mut().zip(signed_exponentials::<T, _>(&mut rng, d)) {
                    *r = v;
                }
                l1 = row.iter().map(|v| v.abs()).sum();
            }
            if (l1 - T::one()).abs() > tol {
                row.iter_mut().for_each(|v| *v /= l1);
            }
        }
        for t in self.t.iter_mut() {
            *t = t.max(-T::one()).min(T::one());
        }
        let two_b = self.budget * T::lit(2.0);
        self.c = self.c.max(-two_b).min(two_b);

        let cap = self.budget * T::lit(4.0);
        let s = self.gamma_l1();
        if s > cap {
            let r = cap / s;
            self.gamma.iter_mut().for_each(|g| *g *= r);
            let shrink = T::one() - T::epsilon();
            while self.gamma_l1() > cap {
                self.gamma.iter_mut().for_each(|g| *g *= shrink);
            }
        }
    }

    /// Checks every class constraint; `|w_i|_1 = 1` is tested to `tol`.
    pub fn satisfies_constraints(&self, tol: T) -> bool {
        let finite = self.params().iter().all(|x| x.is_finite());
        let two_b = self.budget * T::lit(2.0);
        let w_ok = (0..self.m).all(|i| {
            let l1: T = self.inner(i).iter().map(|v| v.abs()).sum();
            (l1 - T::one()).abs() <= tol
        });
        finite
            && self.c.abs() <= two_b
            && self.gamma_l1() <= two_b * T::lit(2.0)
            && self.t.iter().all(|t| t.abs() <= T::one())
            && w_ok
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("network serialization")
    }

    /// Reads a checkpoint; the loaded network must already lie in the class.
    pub fn from_json(text: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let doc: NetworkDoc<T> = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: NetworkDoc<T>) -> Result<Self> {
        check_dim(doc.m, doc.gamma.len())?;
        check_dim(doc.m, doc.w.len())?;
        let mut w = Vec::with_capacity(doc.m * doc.d);
        for row in doc.w {
            check_dim(doc.d, row.len())?;
            w.extend(row);
        }
        let net = Self::from_parts(doc.d, doc.tau, doc.b, doc.c, doc.gamma, w, doc.t, 0)?;
        if !net.satisfies_constraints(T::lit(1e-12).max(T::epsilon() * T::lit(16.0))) {
            return Err(Error::Schema(
                "checkpoint violates the network class constraints".into(),
            ));
        }
        Ok(net)
    }
}

impl<T: Scalar + Serialize> Serialize for TwoLayerNetwork<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDoc {
            d: self.dim,
            m: self.m,
            tau: self.tau,
            b: self.budget,
            c: self.c,
            gamma: self.gamma.clone(),
            w: self.w.chunks(self.dim).map(|r| r.to_vec()).collect(),
            t: self.t.clone(),
        }
        .serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for TwoLayerNetwork<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = NetworkDoc::<T>::deserialize(d)?;
        Self::from_doc(doc).map_err(serde::de::Error::custom)
    }
}

fn signed_exponentials<T: Scalar, R: Rng>(rng: &mut R, d: usize) -> Vec<T> {
    let raw: Vec<f64> = (0..d)
        .map(|_| {
            let e: f64 = rng.sample(Exp1);
            if rng.gen::<bool>() {
                e
            } else {
                -e
            }
        })
        .collect();
    let l1: f64 = raw.iter().map(|v| v.abs()).sum();
    raw.into_iter().map(|v| T::lit(v / l1)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc<T> {
    d: usize,
    m: usize,
    tau: T,
    #[serde(rename = "B")]
    b: T,
    c: T,
    gamma: Vec<T>,
    w: Vec<Vec<T>>,
    t: Vec<T>,
}

impl<T: Scalar> TrialFunction<T> for TwoLayerNetwork<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_gradient(&self, x: &[T], grad: &mut [T]) -> T {
        self.value_and_gradient_unchecked(x, grad)
    }
}

/// Empirical Rayleigh quotient `E_n` and its exact parameter gradient.
pub fn rayleigh_with_gradient<T: Scalar>(
    net: &TwoLayerNetwork<T>,
    samples: &SampleSet<T>,
    v: &CosineSeries<T>,
) -> Result<(T, ParamGradient<T>)> {
    check_dim(net.dim, samples.dim)?;
    check_dim(net.dim, v.dim())?;
    let d = net.dim;
    let m = net.m;
    let n = samples.n;
    // dE = (dE_V − E dE_2) / E_2 with per-sample a = 2(V − E)u, b = 2∇u.
    // Linear in E, so one pass accumulates the V-part and the u-part separately.
    let parts = map_chunks(n, |range| {
        let mut ga = ParamGradient::zeros(d, m);
        let mut gb = ParamGradient::zeros(d, m);
        let mut sp = vec![T::zero(); m];
        let mut sig = vec![T::zero(); m];
        let mut g = vec![T::zero(); d];
        let (mut num, mut den) = (T::zero(), T::zero());
        let two = T::lit(2.0);
        for i in range {
            let x = samples.point(i);
            let mut u = net.c;
            g.iter_mut().for_each(|v| *v = T::zero());
            for k in 0..m {
                let (s, q) = softplus_parts(net.preactivation(k, x), net.tau);
                sp[k] = s;
                sig[k] = q;
                u += net.gamma[k] * s;
                let c = net.gamma[k] * q;
                for (gj, &wj) in g.iter_mut().zip(net.inner(k)) {
                    *gj += c * wj;
                }
            }
            let vx = v.evaluate_unchecked(x);
            let g2: T = g.iter().map(|&v| v * v).sum();
            num += g2 + vx * u * u;
            den += u * u;
            let a = two * vx * u;
            let au = two * u;
            ga.c += a;
            gb.c += au;
            for k in 0..m {
                let wk = net.inner(k);
                let q = sig[k];
                let dsig = net.tau * q * (T::one() - q);
                let bw: T = two * wk.iter().zip(&g).map(|(&w, &gj)| w * gj).sum::<T>();
                let gk = net.gamma[k];
                ga.gamma[k] += a * sp[k] + q * bw;
                gb.gamma[k] += au * sp[k];
                let dz = gk * (a * q + dsig * bw);
                let dzb = gk * au * q;
                let gs = two * gk * q;
                let ra = &mut ga.w[k * d..(k + 1) * d];
                for j in 0..d {
                    ra[j] += dz * x[j] + gs * g[j];
                }
                let rb = &mut gb.w[k * d..(k + 1) * d];
                for j in 0..d {
                    rb[j] += dzb * x[j];
                }
                ga.t[k] -= dz;
                gb.t[k] -= dzb;
            }
        }
        (num, den, ga, gb)
    });
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    let mut ga = ParamGradient::zeros(d, m);
    let mut gb = ParamGradient::zeros(d, m);
    for (a, b, pa, pb) in &parts {
        num.add(*a);
        den.add(*b);
        ga.add_assign(pa);
        gb.add_assign(pb);
    }
    let nf = T::from_usize_lossy(n);
    let (e_v, e_2) = (num.value() / nf, den.value() / nf);
    if !(e_2 > T::zero()) || !e_2.is_finite() || !e_v.is_finite() {
        return Err(Error::DegenerateTrial(format!("E_n,2 = {e_2} on the sample set")));
    }
    let energy = e_v / e_2;
    gb.scale(-energy);
    ga.add_assign(&gb);
    ga.scale(T::one() / (nf * e_2));
    if !ga.is_finite() {
        return Err(Error::Numeric("non-finite Rayleigh gradient".into()));
    }
    Ok((energy, ga))
}

/// Gradient of the empirical Rayleigh quotient with respect to all parameters.
pub fn param_gradient_rayleigh<T: Scalar>(
    net: &TwoLayerNetwork<T>,
    samples: &SampleSet<T>,
    v: &CosineSeries<T>,
) -> Result<ParamGradient<T>> {
    rayleigh_with_gradient(net, samples, v).map(|(_, g)| g)
}
