//! Truncated-domain boundary values.
//!
//! All boundary rules here exercise along a deterministic window, so the
//! value reduces to the discounted payoff of the factor conditional mean,
//! `rate_cap * int_{s1}^{s2} e^{-r(s-t)} A(P(E[X_s])) ds`, which is a sum of
//! exponentials and integrates in closed form.

use crate::contract::ContractSpec;
use crate::error::{invalid, Result};
use crate::factor::FactorModel;

/// Bisection tolerance for window endpoints, in time units.
pub const WINDOW_TOL: f64 = 1e-10;
/// Windows shorter than this are treated as empty.
pub const EMPTY_WINDOW: f64 = 1e-12;
/// Sign-scan resolution used to bracket roots on `[t, T]`.
const SCAN_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Min,
    Max,
}

/// Which truncation face a boundary value refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub side: Side,
    pub x_bound: f64,
}

/// Deterministic full-rate exercise window `[t1, t2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExerciseWindow {
    pub t1: f64,
    pub t2: f64,
}

impl ExerciseWindow {
    pub fn len(&self) -> f64 {
        self.t2 - self.t1
    }

    pub fn is_empty(&self) -> bool {
        self.len() < EMPTY_WINDOW
    }
}

/// Discounted payoff of the conditional-mean path started at `(t, x)`:
/// `g(tau) = e^{-r tau} (c0 + sum_j d_j e^{-k_j tau})`.
#[derive(Debug, Clone)]
pub struct MeanPayoffCurve {
    c0: f64,
    terms: Vec<(f64, f64)>,
    discount: f64,
}

impl MeanPayoffCurve {
    /// Curve for commodity 0 of `contract` started from state `x`.
    pub fn new(model: &FactorModel, contract: &ContractSpec, x: &[f64]) -> Self {
        let loadings = contract.payoff_loadings();
        let mut c0 = contract.strike[0];
        let mut terms = Vec::with_capacity(model.dim());
        for (j, f) in model.factors.iter().enumerate() {
            let c = loadings[(0, j)];
            let m = f.long_run_mean();
            c0 += c * m;
            terms.push((c * (x[j] - m), f.speed));
        }
        Self {
            c0,
            terms,
            discount: contract.discount,
        }
    }

    /// `g` at elapsed time `tau`.
    pub fn value(&self, tau: f64) -> f64 {
        let a = self.c0
            + self
                .terms
                .iter()
                .map(|&(d, k)| d * (-k * tau).exp())
                .sum::<f64>();
        (-self.discount * tau).exp() * a
    }

    /// `g(a + k h)` for `k = 0..=n`, by geometric recurrence.
    pub fn samples(&self, a: f64, h: f64, n: usize) -> Vec<f64> {
        let r = self.discount;
        let mut out = vec![0.0; n + 1];
        let mut acc = (-r * a).exp() * self.c0;
        let q = (-r * h).exp();
        for v in out.iter_mut() {
            *v = acc;
            acc *= q;
        }
        for &(d, k) in &self.terms {
            let mut acc = d * (-(r + k) * a).exp();
            let q = (-(r + k) * h).exp();
            for v in out.iter_mut() {
                *v += acc;
                acc *= q;
            }
        }
        out
    }

    /// Roots of `g` on `[a, b]`. The scan is skipped when a termwise lower
    /// bound shows `g > 0` throughout.
    fn roots_on(&self, a: f64, b: f64) -> Vec<f64> {
        let lower = self.c0
            + self
                .terms
                .iter()
                .map(|&(d, k)| (d * (-k * a).exp()).min(d * (-k * b).exp()))
                .sum::<f64>();
        if lower > 0.0 {
            return Vec::new();
        }
        bracket_roots(&|tau| self.value(tau), a, b)
    }

    /// `int_a^b g(tau) dtau`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let r = self.discount;
        self.c0 * exp_integral(r, a, b)
            + self
                .terms
                .iter()
                .map(|&(d, k)| d * exp_integral(r + k, a, b))
                .sum::<f64>()
    }
}

/// `int_a^b e^{-c tau} dtau`, stable as `c -> 0`.
fn exp_integral(c: f64, a: f64, b: f64) -> f64 {
    let len = b - a;
    if c == 0.0 {
        return len;
    }
    (-c * a).exp() * (-(-c * len).exp_m1()) / c
}

fn remaining_window(contract: &ContractSpec, z: f64) -> f64 {
    ((contract.volume_cap[0] - z) / contract.rate_cap[0]).max(0.0)
}

/// `V(T, z, x) = 0` and `V(t, M, x) = 0`.
pub fn bc_terminal_and_full(contract: &ContractSpec, t: f64, z: f64) -> f64 {
    debug_assert!(t >= contract.horizon || z >= contract.volume_cap[0]);
    0.0
}

/// Value of exercising at full rate on `[s1, s2]` (absolute times) from `(t, x)`.
pub fn window_value(
    model: &FactorModel,
    contract: &ContractSpec,
    t: f64,
    x: &[f64],
    window: ExerciseWindow,
) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let curve = MeanPayoffCurve::new(model, contract, x);
    contract.rate_cap[0] * curve.integral(window.t1 - t, window.t2 - t)
}

/// Best full-rate window anchored at one end of the feasible span, in
/// elapsed time: `[0, e]` with `e <= len` for [`Side::Max`], `[s, span]`
/// with `s >= span - len` for [`Side::Min`]. Only the free end moves, so
/// the candidates are the budget-limited window and the roots of `g`.
fn anchored_value(curve: &MeanPayoffCurve, side: Side, span: f64, len: f64) -> f64 {
    let len = len.min(span);
    if len < EMPTY_WINDOW {
        return 0.0;
    }
    let (lo, hi) = match side {
        Side::Max => (0.0, len),
        Side::Min => (span - len, span),
    };
    let mut best = curve.integral(lo, hi);
    for root in curve.roots_on(lo, hi) {
        let v = match side {
            Side::Max => curve.integral(lo, root),
            Side::Min => curve.integral(root, hi),
        };
        best = best.max(v);
    }
    best.max(0.0)
}

/// One-factor truncation value: exercise at full rate from `t` at the
/// upper face, on a window ending at `T` at the lower face. The free end
/// of the window is chosen optimally within the budget, so the value is
/// never negative and never increases with `z`.
pub fn one_factor_boundary(
    model: &FactorModel,
    contract: &ContractSpec,
    spec: BoundarySpec,
    t: f64,
    z: f64,
) -> f64 {
    let horizon = contract.horizon;
    let len = remaining_window(contract, z);
    if t >= horizon || len <= 0.0 {
        return 0.0;
    }
    let curve = MeanPayoffCurve::new(model, contract, &[spec.x_bound]);
    contract.rate_cap[0] * anchored_value(&curve, spec.side, horizon - t, len)
}

/// Gaussian OU truncation value.
pub fn bc_example1(
    model: &FactorModel,
    contract: &ContractSpec,
    spec: BoundarySpec,
    t: f64,
    z: f64,
) -> f64 {
    one_factor_boundary(model, contract, spec, t, z)
}

/// Jump OU truncation value; the integrand is the jump-compensated mean.
pub fn bc_example2(
    model: &FactorModel,
    contract: &ContractSpec,
    spec: BoundarySpec,
    t: f64,
    z: f64,
) -> f64 {
    one_factor_boundary(model, contract, spec, t, z)
}

/// Two-factor value at `x1 = x1_max`: exercise at full rate from `t`
/// until the budget is spent, the horizon is reached, or stopping early
/// pays more.
pub fn bc_example3_max(
    model: &FactorModel,
    contract: &ContractSpec,
    t: f64,
    z: f64,
    x1_max: f64,
    x2: f64,
) -> f64 {
    let len = remaining_window(contract, z);
    if t >= contract.horizon || len <= 0.0 {
        return 0.0;
    }
    let curve = MeanPayoffCurve::new(model, contract, &[x1_max, x2]);
    contract.rate_cap[0] * anchored_value(&curve, Side::Max, contract.horizon - t, len)
}

/// Result of the deterministic window maximisation at `x1 = x1_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOptimum {
    pub value: f64,
    pub window: ExerciseWindow,
}

/// Two-factor value at `x1 = x1_min`: the best single full-rate window
/// `[t1, t2]` within `[t, T]` subject to `rate_cap (t2 - t1) <= M - z`.
pub fn bc_example3_min(
    model: &FactorModel,
    contract: &ContractSpec,
    t: f64,
    z: f64,
    x1_min: f64,
    x2: f64,
) -> Result<WindowOptimum> {
    if x2 < 0.0 {
        return invalid(format!("x2 must be nonnegative, got {x2}"));
    }
    Ok(optimal_window(model, contract, t, z, &[x1_min, x2]))
}

/// Global maximiser of `J(t1, t2) = rate_cap int_{t1}^{t2} g` over the
/// feasible triangle, by enumeration of first-order and corner candidates.
pub fn optimal_window(
    model: &FactorModel,
    contract: &ContractSpec,
    t: f64,
    z: f64,
    x: &[f64],
) -> WindowOptimum {
    WindowOptimizer::new(model, contract, x).optimize(t, z)
}

/// Window maximisation for a fixed starting state, reusable across `(t, z)`.
///
/// The mean-payoff curve depends on elapsed time only, so the roots of `g`
/// on `[0, T]` are found once.
#[derive(Debug, Clone)]
pub struct WindowOptimizer {
    curve: MeanPayoffCurve,
    roots: Vec<f64>,
    horizon: f64,
    volume_cap: f64,
    rate_cap: f64,
}

impl WindowOptimizer {
    pub fn new(model: &FactorModel, contract: &ContractSpec, x: &[f64]) -> Self {
        let curve = MeanPayoffCurve::new(model, contract, x);
        let horizon = contract.horizon;
        let roots = bracket_roots(&|tau| curve.value(tau), 0.0, horizon);
        Self {
            curve,
            roots,
            horizon,
            volume_cap: contract.volume_cap[0],
            rate_cap: contract.rate_cap[0],
        }
    }

    pub fn optimize(&self, t: f64, z: f64) -> WindowOptimum {
        let budget = ((self.volume_cap - z) / self.rate_cap).max(0.0);
        let empty = WindowOptimum {
            value: 0.0,
            window: ExerciseWindow { t1: t, t2: t },
        };
        if t >= self.horizon || budget < EMPTY_WINDOW {
            return empty;
        }
        let curve = &self.curve;
        let span = self.horizon - t;
        let len = budget.min(span);

        // elapsed-time coordinates on [0, span]
        let mut starts = vec![0.0, span - len];
        let mut ends = vec![span];
        for &root in self.roots.iter().take_while(|&&r| r <= span) {
            starts.push(root);
            ends.push(root);
            if root - len >= 0.0 {
                starts.push(root - len);
            }
        }
        if len < span {
            let width = span - len;
            let h = width / SCAN_POINTS as f64;
            let early = curve.samples(0.0, h, SCAN_POINTS);
            let late = curve.samples(len, h, SCAN_POINTS);
            let sampled: Vec<f64> = late.iter().zip(&early).map(|(l, e)| l - e).collect();
            let balance = |s: f64| curve.value(s + len) - curve.value(s);
            starts.extend(roots_from_samples(&balance, &sampled, 0.0, width));
        }

        let mut best = empty;
        let mut consider = |a: f64, b: f64| {
            let (a, b) = (a.clamp(0.0, span), b.clamp(0.0, span));
            if b - a < EMPTY_WINDOW || b - a > len + WINDOW_TOL {
                return;
            }
            let value = self.rate_cap * curve.integral(a, b);
            if value > best.value {
                best = WindowOptimum {
                    value,
                    window: ExerciseWindow { t1: t + a, t2: t + b },
                };
            }
        };
        // budget-active windows first so that ties keep the earliest full window
        for &a in &starts {
            consider(a, a + len);
        }
        for &a in &starts {
            for &b in &ends {
                if b > a {
                    consider(a, b.min(a + len));
                }
            }
        }
        best
    }
}

/// Sign changes of `f` on `[a, b]`, refined by bisection to [`WINDOW_TOL`].
fn bracket_roots<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Vec<f64> {
    if b <= a {
        return Vec::new();
    }
    let h = (b - a) / SCAN_POINTS as f64;
    let samples: Vec<f64> = (0..=SCAN_POINTS)
        .map(|k| f(if k == SCAN_POINTS { b } else { a + k as f64 * h }))
        .collect();
    roots_from_samples(f, &samples, a, b)
}

/// Roots of `f` bracketed by sign changes of `samples`, taken on a uniform
/// mesh of `[a, b]`.
fn roots_from_samples<F: Fn(f64) -> f64>(f: &F, samples: &[f64], a: f64, b: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    if b <= a {
        return roots;
    }
    let n = samples.len() - 1;
    let h = (b - a) / n as f64;
    let mut x0 = a;
    let mut f0 = samples[0];
    if f0 == 0.0 {
        roots.push(x0);
    }
    for (k, &f1) in samples.iter().enumerate().skip(1) {
        let x1 = if k == n { b } else { a + k as f64 * h };
        if f1 == 0.0 {
            roots.push(x1);
        } else if f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0) {
            roots.push(bisect(f, x0, x1, f0));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    let lo_negative = flo < 0.0;
    while hi - lo > WINDOW_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
