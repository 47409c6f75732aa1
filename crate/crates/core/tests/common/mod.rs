#![allow(dead_code)]

//! Finite-difference Neumann oracle for `−u'' + V u = λ u` on `[0, 1]`.
//!
//! Cell-centred grid with reflecting ghost cells. The lowest eigenvalue is
//! bracketed by Sturm bisection, refined by shifted inverse iteration and
//! read off as a Rayleigh quotient in difference form (all terms positive).

pub fn fd_lowest(v: impl Fn(f64) -> f64, cells: usize) -> f64 {
    let h = 1.0 / cells as f64;
    let inv = 1.0 / (h * h);
    let vv: Vec<f64> = (0..cells).map(|i| v((i as f64 + 0.5) * h)).collect();
    let diag: Vec<f64> = (0..cells)
        .map(|i| vv[i] + inv * if i == 0 || i == cells - 1 { 1.0 } else { 2.0 })
        .collect();
    let off = -inv;

    // eigenvalues below x
    let count = |x: f64| {
        let mut q = diag[0] - x;
        let mut k = (q < 0.0) as usize;
        for &a in &diag[1..] {
            let prev = if q == 0.0 { f64::MIN_POSITIVE } else { q };
            q = a - x - off * off / prev;
            k += (q < 0.0) as usize;
        }
        k
    };
    let mut lo = vv.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = vv.iter().sum::<f64>() / cells as f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi.abs() {
            break;
        }
    }

    let shift = lo - 1e-6;
    let mut y = vec![1.0; cells];
    for _ in 0..4 {
        y = thomas(&diag, off, shift, &y);
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        y.iter_mut().for_each(|a| *a /= norm);
    }
    let mut num = 0.0;
    for i in 0..cells {
        num += vv[i] * y[i] * y[i];
        if i + 1 < cells {
            let dy = y[i + 1] - y[i];
            num += inv * dy * dy;
        }
    }
    num / y.iter().map(|a| a * a).sum::<f64>()
}

fn thomas(diag: &[f64], off: f64, shift: f64, rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut b = diag[0] - shift;
    c[0] = off / b;
    d[0] = rhs[0] / b;
    for i in 1..n {
        b = diag[i] - shift - off * c[i - 1];
        c[i] = off / b;
        d[i] = (rhs[i] - off * d[i - 1]) / b;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Second-order Richardson extrapolation from `cells` and `2·cells`.
pub fn fd_richardson(v: impl Fn(f64) -> f64 + Copy, cells: usize) -> f64 {
    let coarse = fd_lowest(v, cells);
    let fine = fd_lowest(v, 2 * cells);
    (4.0 * fine - coarse) / 3.0
}
