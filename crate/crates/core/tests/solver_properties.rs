use swing_core::config::{parse_config, preset, Example, RunConfig};
use swing_core::contract::{unconstrained_value, DEFAULT_QUAD_NODES};
use swing_core::mc::{evaluate_policy, policy_from_surface, PolicyFunction, PositivePayoffPolicy, ZeroPolicy};
use swing_core::policy::{trigger_1d, RowFlag};
use swing_core::solver::{hjb_residual, solve, HjbProblem, ResidualControl, Solution, ValueSurface};

fn config(ex: Example) -> RunConfig {
    parse_config(preset(ex).unwrap()).unwrap()
}

/// Example grid scaled by `2^-level` in `dt`, `dz` and `x1` spacing.
fn refined(ex: Example, level: u32) -> RunConfig {
    let mut c = config(ex);
    let s = 2f64.powi(level as i32);
    c.grid.dt /= s;
    c.grid.dz = Some(c.grid.dz.unwrap() / s);
    c.grid.x1_nodes = (c.grid.x1_nodes - 1) * (1 << level) + 1;
    c
}

fn coarse_ex3() -> RunConfig {
    let mut c = config(Example::Ex3);
    c.grid.dt = 0.005;
    c.grid.dz = Some(0.5 / 99.0);
    c.grid.x1_nodes = 61;
    c.grid.dx2 = Some(0.45);
    c
}

fn run(c: &RunConfig, retain: Vec<f64>) -> (HjbProblem, Solution) {
    let mut scheme = c.scheme();
    scheme.retain_slices = retain;
    let p = HjbProblem::new(c.model().unwrap(), c.contract().unwrap(), scheme).unwrap();
    let s = solve(&p).unwrap();
    (p, s)
}

fn max_interior_residual(p: &HjbProblem, earlier: &ValueSurface, later: &ValueSurface) -> f64 {
    let g = &p.grid;
    let res = hjb_residual(p, earlier, later, ResidualControl::Supremum).unwrap();
    let mut worst: f64 = 0.0;
    for iz in 1..g.nz() - 2 {
        for i1 in 2..g.nx1() - 2 {
            worst = worst.max(res[g.index(iz, 0, i1)].abs());
        }
    }
    worst
}

#[test]
fn residual_shrinks_under_refinement() {
    let mut out = Vec::new();
    for level in 0..3 {
        let c = refined(Example::Ex1, level);
        let (p, s) = run(&c, vec![0.5, 0.5 + c.grid.dt]);
        out.push(max_interior_residual(&p, &s.surfaces[0], &s.surfaces[1]));
    }
    assert!(out[1] < out[0] && out[2] < out[1], "{out:?}");
}

#[test]
fn residual_prefers_exercise_where_the_gain_is_positive() {
    let c = config(Example::Ex1);
    let (p, s) = run(&c, vec![0.5, 0.5 + c.grid.dt]);
    let (earlier, later) = (&s.surfaces[0], &s.surfaces[1]);
    let idle = hjb_residual(&p, earlier, later, ResidualControl::Fixed(0.0)).unwrap();
    let full = hjb_residual(&p, earlier, later, ResidualControl::Fixed(1.0)).unwrap();
    let g = &p.grid;
    let mut checked = 0;
    for iz in 0..g.nz() - 1 {
        for i1 in 1..g.nx1() - 1 {
            let k = g.index(iz, 0, i1);
            let gain = p.payoff(g.x1[i1], 0.0) + (earlier.values[k + g.nx1()] - earlier.values[k]) / g.dz();
            if gain > 0.0 {
                assert!(idle[k] < full[k]);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn zero_payoff_has_zero_residual() {
    let mut c = config(Example::Ex1);
    c.contract.strike = 1e4;
    let (p, s) = run(&c, vec![0.5, 0.5 + c.grid.dt]);
    assert!(s.surfaces.iter().all(|v| v.values.iter().all(|&x| x == 0.0)));
    let res = hjb_residual(&p, &s.surfaces[0], &s.surfaces[1], ResidualControl::Supremum).unwrap();
    assert!(res.iter().all(|&r| r == 0.0));
}

fn assert_monotone_in_state(p: &HjbProblem, s: &Solution) {
    let g = &p.grid;
    for surf in &s.surfaces {
        for iz in 0..g.nz() {
            for i2 in 0..g.nx2() {
                for i1 in 0..g.nx1() {
                    let v = surf.values[g.index(iz, i2, i1)];
                    if i1 + 1 < g.nx1() {
                        let dx = (surf.values[g.index(iz, i2, i1 + 1)] - v) / (g.x1[i1 + 1] - g.x1[i1]);
                        assert!(dx >= -1e-8, "V_x1 = {dx} at t = {} ({iz}, {i2}, {i1})", surf.time);
                    }
                    if i2 + 1 < g.nx2() {
                        let dx = (surf.values[g.index(iz, i2 + 1, i1)] - v) / g.dx2().unwrap();
                        assert!(dx >= -1e-8, "V_x2 = {dx} at t = {} ({iz}, {i2}, {i1})", surf.time);
                    }
                }
            }
        }
    }
}

#[test]
fn values_increase_with_the_price_factors() {
    let c = config(Example::Ex1);
    let (p, s) = run(&c, vec![0.0, 0.5]);
    assert_monotone_in_state(&p, &s);
    let (p, s) = run(&coarse_ex3(), vec![0.0, 0.5]);
    assert_monotone_in_state(&p, &s);
}

#[test]
fn jump_and_gaussian_surfaces_are_close() {
    let (_, a) = run(&config(Example::Ex1), vec![0.5]);
    let (_, b) = run(&config(Example::Ex2), vec![0.5]);
    let (va, vb) = (&a.surfaces[0].values, &b.surfaces[0].values);
    let level = va.iter().cloned().fold(0.0, f64::max);
    let diff = va.iter().zip(vb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 0.01 * level, "max difference {diff} at price level {level}");
}

#[test]
fn value_converges_at_first_order() {
    let vals: Vec<f64> = (0..3)
        .map(|level| {
            let c = refined(Example::Ex1, level);
            let (_, s) = run(&c, vec![0.5]);
            s.surfaces[0].interpolate(&s.grid, 0.25, 40.0, 0.0)
        })
        .collect();
    let (d1, d2) = ((vals[1] - vals[0]).abs(), (vals[2] - vals[1]).abs());
    assert!(d2 < d1, "{vals:?}");
    let order = (d1 / d2).log2();
    assert!((0.5..=2.5).contains(&order), "observed order {order} from {vals:?}");
}

#[test]
fn exercise_curves_rise_with_consumed_volume_and_split_the_controls() {
    for ex in [Example::Ex1, Example::Ex2] {
        let (p, s) = run(&config(ex), vec![0.5]);
        let g = &p.grid;
        let surf = &s.surfaces[0];
        let curve = trigger_1d(&p, &s, 0.5).unwrap();
        let cell = |x: f64| {
            let k = g.x1.partition_point(|&v| v < x).clamp(1, g.nx1() - 1);
            g.x1[k] - g.x1[k - 1]
        };
        let mut last: Option<f64> = None;
        for (iz, pt) in curve.points.iter().enumerate() {
            let Some(x) = pt.trigger else { continue };
            if pt.flag != RowFlag::Single {
                continue;
            }
            if let Some(prev) = last {
                assert!(x >= prev - cell(prev), "{}: trigger falls from {prev} to {x} at z = {}", ex.as_str(), pt.coord);
            }
            last = Some(x);
            let h = cell(x);
            for (i1, &xi) in g.x1.iter().enumerate() {
                let u = surf.control[g.index(iz, 0, i1)];
                if xi > x + h {
                    assert!(u, "{}: idle right of the curve at z = {}, x = {xi}", ex.as_str(), pt.coord);
                }
                if xi < x - h {
                    assert!(!u, "{}: exercising left of the curve at z = {}, x = {xi}", ex.as_str(), pt.coord);
                }
            }
        }
        assert!(last.is_some());
    }
}

#[test]
fn policy_of_unconstrained_problem_matches_closed_form() {
    let mut c = config(Example::Ex1);
    c.contract.volume_cap = 1.0;
    c.contract.strike = 40.0;
    let times: Vec<f64> = (0..=250).map(|k| k as f64 / 250.0).collect();
    let (p, s) = run(&c, times);
    let policy = policy_from_surface(&p, &s).unwrap();
    let est = evaluate_policy(&p.model, &p.contract, &policy, &[40.0], 20_000, 250, 3).unwrap();
    let exact = unconstrained_value(&p.contract, &p.model, 0.0, &[40.0], DEFAULT_QUAD_NODES).unwrap();
    assert!((est.mean - exact).abs() <= 3.0 * est.stderr, "{} +/- {} vs {exact}", est.mean, est.stderr);
}

#[test]
fn flat_marginals_give_the_unconstrained_policy() {
    let mut c = config(Example::Ex1);
    c.contract.strike = 40.0;
    let (p, mut s) = run(&c, vec![0.0, 0.5, 1.0]);
    for surf in &mut s.surfaces {
        surf.marginal.iter_mut().for_each(|m| *m = 0.0);
    }
    let policy = policy_from_surface(&p, &s).unwrap();
    let reference = PositivePayoffPolicy { contract: p.contract.clone() };
    let (mut a, mut b) = ([0.0], [0.0]);
    for k in 0..200 {
        let t = k as f64 / 200.0;
        let x = 20.0 + 0.2 * k as f64 + 0.05;
        let z = 0.49 * (k % 7) as f64 / 7.0;
        policy.rates(t, &[z], &[x], &mut a);
        reference.rates(t, &[z], &[x], &mut b);
        assert_eq!(a, b, "t = {t}, z = {z}, x = {x}");
    }
}

#[test]
fn extracted_and_simple_policies_respect_the_bounds() {
    let c = config(Example::Ex1);
    let times: Vec<f64> = (0..=250).map(|k| k as f64 / 250.0).collect();
    let (p, s) = run(&c, times);
    let v = s.surfaces[0].interpolate(&s.grid, 0.0, 40.0, 0.0);
    let extracted = policy_from_surface(&p, &s).unwrap();
    let greedy = PositivePayoffPolicy { contract: p.contract.clone() };
    let policies: [&dyn PolicyFunction; 3] = [&extracted, &greedy, &ZeroPolicy];
    for policy in policies {
        let est = evaluate_policy(&p.model, &p.contract, policy, &[40.0], 10_000, 250, 5).unwrap();
        assert!(est.max_consumption <= p.contract.volume_cap[0] + 1e-12);
        assert!(est.mean <= v + 3.0 * est.stderr + 0.02 * v, "{} +/- {} above {v}", est.mean, est.stderr);
    }
}
