//! Worked examples of the solver, trainer and estimators at desk scale.

mod common;

use std::f64::consts::PI;

use neumann_ground::bounds::{ClassId, ClassParams};
use neumann_ground::rademacher::{rademacher_estimate, RademacherConfig};
use neumann_ground::reference::{power_iterate, solve_ground_truth, GalerkinConfig};
use neumann_ground::scalar::median;
use neumann_ground::trainer::{sweep, train, TrainConfig};
use neumann_ground::Series;

fn cos_potential() -> Series {
    Series::from_terms(1, [(vec![0], 1.0), (vec![1], 0.5)]).unwrap()
}

#[test]
fn galerkin_matches_finite_differences_for_a_rougher_potential() {
    let v = Series::from_terms(1, [(vec![0], 2.0), (vec![1], 0.3), (vec![2], 1.0)]).unwrap();
    let t = solve_ground_truth(&v, &GalerkinConfig::new(1, 64)).unwrap();
    let fd = common::fd_richardson(|x| 2.0 + 0.3 * (PI * x).cos() + (2.0 * PI * x).cos(), 5000);
    assert!((t.lambda0 - fd).abs() <= 1e-9 * fd, "{} vs {fd}", t.lambda0);
}

#[test]
fn power_iteration_in_two_dimensions() {
    let v = Series::from_terms(2, [(vec![0, 0], 1.5), (vec![1, 0], 0.4), (vec![1, 1], 0.3)]).unwrap();
    let cfg = GalerkinConfig::new(2, 12);
    let t = solve_ground_truth(&v, &cfg).unwrap();
    let p = power_iterate(&v, &cfg, 1e-13, 10_000).unwrap();
    assert!((p.lambda - t.lambda0).abs() <= 1e-10 * t.lambda0);
}

#[test]
fn shifted_constant_potential_in_two_dimensions() {
    let v = Series::constant(2, 3.0).unwrap();
    let t = solve_ground_truth(&v, &GalerkinConfig::new(2, 6)).unwrap();
    let mut cfg = TrainConfig::new(1024);
    cfg.steps = 100;
    let r = train(&v, &cfg, Some(&t)).unwrap();
    assert!((r.final_loss - 3.0).abs() <= 1e-6);
    assert!(r.report.unwrap().p_perp_l2 <= 1e-3);
}

#[test]
fn trained_excess_on_cosine_potential() {
    // threshold 5e-3 from the pilot runs; 200 steps reach ~2.5e-5
    let v = cos_potential();
    let t = solve_ground_truth(&v, &GalerkinConfig::new(1, 64)).unwrap();
    let mut cfg = TrainConfig::new(4096);
    cfg.steps = 200;
    let r = train(&v, &cfg, Some(&t)).unwrap();
    let rep = r.report.unwrap();
    assert_eq!(r.config.m, Some(64));
    assert!(rep.excess <= 5e-3 && rep.excess >= -1e-10, "excess {}", rep.excess);
    assert!(r.final_loss <= r.initial_loss);
    assert!(r.loss_trace.iter().all(|e| e.is_finite()));
    assert!(!r.stability.unwrap().violated);
}

#[test]
fn training_is_reproducible() {
    let v = cos_potential();
    let mut cfg = TrainConfig::new(512);
    cfg.budget = Some(1.5);
    cfg.steps = 30;
    cfg.seed = 9;
    let a = train(&v, &cfg, None).unwrap();
    let b = train(&v, &cfg, None).unwrap();
    assert_eq!(a.network, b.network);
    assert_eq!(a.loss_trace, b.loss_trace);
}

#[test]
fn sweep_on_constant_potential_has_no_slope() {
    let v = Series::constant(1, 1.0).unwrap();
    let t = solve_ground_truth(&v, &GalerkinConfig::new(1, 8)).unwrap();
    let mut tpl = TrainConfig::new(16);
    tpl.steps = 10;
    let rep = sweep(&v, &t, &[16, 64, 256], &[0, 1, 2, 3, 4], &tpl, 0.1).unwrap();
    assert!(rep.slope.is_none(), "{:?}", rep.slope);
    assert!(rep.slope_note.contains("not applicable"));
    assert_eq!(rep.rows.len(), 15);
    assert!(rep.cells.iter().all(|c| c.median_excess.abs() <= 1e-8));
}

#[test]
fn rademacher_estimate_scales_like_inverse_root_n() {
    let v = cos_potential();
    let p = ClassParams {
        budget: 1.0,
        m: 4,
        d: 1,
        v_min: 0.5,
        v_max: 1.5,
    };
    let ratios: Vec<f64> = (0..10u64)
        .map(|seed| {
            let at = |n| {
                let mut cfg = RademacherConfig::new(n, 8, 4, seed);
                cfg.steps = 150;
                rademacher_estimate(ClassId::G1, &p, &v, &cfg).unwrap().estimate
            };
            at(256) / at(1024)
        })
        .collect();
    let med = median(&ratios).unwrap();
    assert!((1.6..=2.4).contains(&med), "median ratio {med}, {ratios:?}");
}
