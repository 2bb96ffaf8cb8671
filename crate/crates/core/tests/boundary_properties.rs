use proptest::prelude::*;

use swing_core::boundary::{
    bc_example1, bc_example2, bc_example3_max, bc_example3_min, window_value, BoundarySpec, ExerciseWindow, Side,
};
use swing_core::contract::ContractSpec;
use swing_core::factor::{ExpJumpSpec, FactorModel, JumpDrift, OUFactor};
use swing_core::quadrature::trapezoid;

fn two_factor(k1: f64, mu1: f64, k2: f64, f: f64, alpha: f64) -> FactorModel {
    FactorModel::independent(vec![
        OUFactor::gaussian(k1, mu1, 2.36).unwrap(),
        OUFactor::new(k2, 0.0, 0.0, Some(ExpJumpSpec::new(f, alpha).unwrap()), JumpDrift::Raw).unwrap(),
    ])
    .unwrap()
}

fn jump_model(f: f64) -> FactorModel {
    FactorModel::independent(vec![OUFactor::new(
        0.014,
        40.0,
        2.0,
        Some(ExpJumpSpec::new(f, 0.4).unwrap()),
        JumpDrift::Compensated,
    )
    .unwrap()])
    .unwrap()
}

proptest! {
    #[test]
    fn boundary_values_do_not_increase_with_volume(
        k1 in 0.001..1.0f64, mu1 in 10.0..70.0f64, k2 in 0.005..1.0f64, f in 0.001..0.2f64, alpha in 0.005..1.0f64,
        strike in 0.0..60.0f64, r in 0.0..0.5f64, t in 0.0..1.0f64, x1 in 0.0..80.0f64, x2 in 0.0..20.0f64,
        z1 in 0.0..0.5f64, z2 in 0.0..0.5f64,
    ) {
        let (lo, hi) = if z1 < z2 { (z1, z2) } else { (z2, z1) };
        let model = two_factor(k1, mu1, k2, f, alpha);
        let c = ContractSpec::single_call(&[1.0, 1.0], strike, 0.5, 1.0, 1.0, r).unwrap();
        let tol = 1e-9;
        let a = bc_example3_max(&model, &c, t, lo, x1, x2);
        let b = bc_example3_max(&model, &c, t, hi, x1, x2);
        prop_assert!(b <= a + tol, "max face {} -> {}", a, b);
        let a = bc_example3_min(&model, &c, t, lo, x1, x2).unwrap().value;
        let b = bc_example3_min(&model, &c, t, hi, x1, x2).unwrap().value;
        prop_assert!(b <= a + tol, "min face {} -> {}", a, b);
        let one = FactorModel::independent(vec![OUFactor::gaussian(k1, mu1, 2.36).unwrap()]).unwrap();
        let c1 = ContractSpec::single_call(&[1.0], strike, 0.5, 1.0, 1.0, r).unwrap();
        for side in [Side::Min, Side::Max] {
            let spec = BoundarySpec { side, x_bound: x1 };
            let a = bc_example1(&one, &c1, spec, t, lo);
            let b = bc_example1(&one, &c1, spec, t, hi);
            prop_assert!(b <= a + tol, "{:?} face {} -> {}", side, a, b);
        }
    }

    #[test]
    fn min_face_beats_random_windows(
        k1 in 0.001..1.0f64, mu1 in 10.0..70.0f64, k2 in 0.005..1.0f64, f in 0.001..0.2f64, alpha in 0.005..1.0f64,
        strike in 0.0..60.0f64, r in 0.0..0.5f64, t in 0.0..1.0f64, z in 0.0..0.5f64,
        x1 in 0.0..80.0f64, x2 in 0.0..20.0f64,
        windows in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1000),
    ) {
        let model = two_factor(k1, mu1, k2, f, alpha);
        let c = ContractSpec::single_call(&[1.0, 1.0], strike, 0.5, 1.0, 1.0, r).unwrap();
        let best = bc_example3_min(&model, &c, t, z, x1, x2).unwrap().value;
        let budget = 0.5 - z;
        for (a, b) in windows {
            let t1 = t + a * (1.0 - t);
            let t2 = (t1 + b * budget).min(1.0);
            let j = window_value(&model, &c, t, &[x1, x2], ExerciseWindow { t1, t2 });
            prop_assert!(best >= j - 1e-10 * j.abs().max(1.0), "optimum {} window ({}, {}) {}", best, t1, t2, j);
        }
    }
}

#[test]
fn jump_boundary_tends_to_gaussian_linearly() {
    let c = ContractSpec::single_call(&[1.0], 0.0, 0.5, 1.0, 1.0, 0.05).unwrap();
    let gauss = FactorModel::independent(vec![OUFactor::gaussian(0.014, 40.0, 2.0).unwrap()]).unwrap();
    for side in [Side::Min, Side::Max] {
        let spec = BoundarySpec { side, x_bound: 61.3 };
        let base = bc_example1(&gauss, &c, spec, 0.5, 0.2);
        let diffs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&f| (bc_example2(&jump_model(f), &c, spec, 0.5, 0.2) - base) / f)
            .collect();
        assert!(diffs[0].abs() > 0.0);
        for d in &diffs[1..] {
            assert!((d - diffs[0]).abs() <= 1e-6 * diffs[0].abs(), "{diffs:?}");
        }
    }
}

fn trapezoid_window(model: &FactorModel, c: &ContractSpec, t: f64, x: &[f64], t1: f64, t2: f64) -> f64 {
    let loadings = c.payoff_loadings();
    trapezoid(
        |s| {
            let m = model.conditional_mean(x, s - t);
            let a = c.strike[0] + (0..x.len()).map(|j| loadings[(0, j)] * m[j]).sum::<f64>();
            c.rate_cap[0] * (-c.discount * (s - t)).exp() * a
        },
        t1,
        t2,
        10_000,
    )
}

#[test]
fn jump_example_matches_quadrature() {
    let model = FactorModel::independent(vec![OUFactor::new(
        0.014,
        39.9,
        (2.36f64 * 2.36 - 0.5).sqrt(),
        Some(ExpJumpSpec::new(0.04, 0.4).unwrap()),
        JumpDrift::Compensated,
    )
    .unwrap()])
    .unwrap();
    let c = ContractSpec::single_call(&[1.0], 0.0, 0.5, 1.0, 1.0, 0.05).unwrap();
    let spec = BoundarySpec { side: Side::Max, x_bound: 61.3 };
    let closed = bc_example2(&model, &c, spec, 0.5, 0.4);
    let quad = trapezoid_window(&model, &c, 0.5, &[61.3], 0.5, 0.6);
    assert!((closed - quad).abs() <= 1e-9 * quad.abs(), "{closed} {quad}");
}

#[test]
fn two_factor_max_face_matches_quadrature() {
    let model = two_factor(0.014, 40.0, 0.04, 0.04, 0.014);
    let c = ContractSpec::single_call(&[1.0, 1.0], 0.0, 0.5, 1.0, 1.0, 0.05).unwrap();
    let closed = bc_example3_max(&model, &c, 0.5, 0.4, 62.8, 0.0);
    let quad = trapezoid_window(&model, &c, 0.5, &[62.8, 0.0], 0.5, 0.6);
    assert!((closed - quad).abs() <= 1e-9 * quad.abs(), "{closed} {quad}");
}
