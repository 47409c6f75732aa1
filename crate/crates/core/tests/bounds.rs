#![allow(clippy::excessive_precision)]

use neumann_ground::bounds::*;

fn class(b: f64, m: usize, d: usize, v_max: f64) -> ClassParams {
    ClassParams {
        budget: b,
        m,
        d,
        v_min: 1.0,
        v_max,
    }
}

// (B, m, d, V_max, class, n, value) with values from a 40-digit direct
// quadrature of √(ln M(ε))_+ over (0, M].
const GOLDEN: [(f64, usize, usize, f64, ClassId, usize, f64); 5] = [
    (1.0, 16, 1, 1.0, ClassId::G2, 1_000_000, 72.533733308686573736),
    (1.0, 16, 1, 1.0, ClassId::G1, 1_000_000, 37.831487762016146193),
    (0.5, 4, 2, 2.0, ClassId::G2, 1000, 502.23778894732988849),
    (2.0, 256, 1, 1.5, ClassId::G1, 65536, 2349.971884248247543),
    (0.001, 2, 1, 1.0, ClassId::G1, 10, 0.0063460804144793769962),
];

#[test]
fn dudley_golden_values() {
    for &(b, m, d, v_max, id, n, want) in &GOLDEN {
        let p = class(b, m, d, v_max);
        let (r1, r2) = class_dudley_bounds(&p, n).unwrap();
        let got = if id == ClassId::G1 { r1 } else { r2 };
        assert!((got - want).abs() <= 1e-10 * want, "{p:?} {id:?}: {got} vs {want}");
    }
}

#[test]
fn dudley_m_shape() {
    let at = |m| {
        let p = class(1.0, m, 1, 1.0);
        class_dudley_bounds(&p, 1000).unwrap()
    };
    let (a1, a2) = at(16);
    let (b1, b2) = at(256);
    let shape = |m: f64| m.sqrt() * (m.ln().sqrt() + 1.0);
    let want = shape(256.0) / shape(16.0);
    assert!((b2 / a2 / want - 1.0).abs() <= 0.2, "G2 ratio {} vs {want}", b2 / a2);
    // Λ1 does not grow with m, so G1 follows plain √m
    assert!((b1 / a1 / 4.0 - 1.0).abs() <= 0.2, "G1 ratio {}", b1 / a1);
}
