//! Monte Carlo valuation of exercise policies.
//!
//! Paths are simulated with the exact factor transition. Each path draws
//! from its own stream of a ChaCha generator keyed by the master seed, so
//! results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contract::{unconstrained_policy, ContractSpec};
use crate::error::{invalid, Result, SwingError};
use crate::factor::{FactorModel, TransitionKernel};
use crate::grid::locate;
use crate::solver::{HjbProblem, Solution};

/// Relative slack allowed on rate caps before a policy is rejected.
const RATE_TOL: f64 = 1e-12;

/// Exercise rule `(t, z, x) -> u`, with `0 <= u <= rate_cap`.
pub trait PolicyFunction: Sync {
    /// Writes the rate vector into `out` (one entry per commodity).
    fn rates(&self, t: f64, z: &[f64], x: &[f64], out: &mut [f64]);
}

/// Never exercises.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl PolicyFunction for ZeroPolicy {
    fn rates(&self, _t: f64, _z: &[f64], _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|u| *u = 0.0);
    }
}

/// Full rate whenever the payoff is positive and budget remains.
#[derive(Debug, Clone)]
pub struct PositivePayoffPolicy {
    pub contract: ContractSpec,
}

impl PolicyFunction for PositivePayoffPolicy {
    fn rates(&self, _t: f64, z: &[f64], x: &[f64], out: &mut [f64]) {
        let u = unconstrained_policy(&self.contract, x).expect("state dimension checked by caller");
        for i in 0..out.len() {
            out[i] = if z[i] < self.contract.volume_cap[i] { u[i] } else { 0.0 };
        }
    }
}

/// Bang-bang rule read off solved surfaces: exercise where the
/// interpolated `A + V_z` is positive.
#[derive(Debug, Clone)]
pub struct SurfacePolicy {
    times: Vec<f64>,
    marginals: Vec<Vec<f64>>,
    grid: crate::grid::Grid,
    loadings: [f64; 2],
    strike: f64,
    rate_cap: f64,
    volume_cap: f64,
}

impl SurfacePolicy {
    /// Interpolated `A + V_z` at `(t, z, x)`.
    pub fn gain(&self, t: f64, z: f64, x: &[f64]) -> f64 {
        let x2 = x.get(1).copied().unwrap_or(0.0);
        let payoff = self.strike + self.loadings[0] * x[0] + self.loadings[1] * x2;
        let (k, w) = locate(&self.times, t);
        let mut vz = 0.0;
        if w < 1.0 {
            vz += (1.0 - w) * crate::solver::interpolate_field(&self.grid, &self.marginals[k], z, x[0], x2);
        }
        if w > 0.0 {
            vz += w * crate::solver::interpolate_field(&self.grid, &self.marginals[k + 1], z, x[0], x2);
        }
        payoff + vz
    }
}

impl PolicyFunction for SurfacePolicy {
    fn rates(&self, t: f64, z: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = if z[0] < self.volume_cap && self.gain(t, z[0], x) > 0.0 {
            self.rate_cap
        } else {
            0.0
        };
    }
}

/// Builds the surface policy; needs at least two retained slices, the
/// first at `t = 0`.
pub fn policy_from_surface(problem: &HjbProblem, solution: &Solution) -> Result<SurfacePolicy> {
    let s = &solution.surfaces;
    if s.len() < 2 {
        return Err(SwingError::InsufficientSlices(format!(
            "need at least 2 retained slices, have {}",
            s.len()
        )));
    }
    if s[0].time > 1e-12 {
        return Err(SwingError::InsufficientSlices(format!(
            "first retained slice is at t = {}, need t = 0",
            s[0].time
        )));
    }
    let l = problem.contract.payoff_loadings();
    Ok(SurfacePolicy {
        times: s.iter().map(|v| v.time).collect(),
        marginals: s.iter().map(|v| v.marginal.clone()).collect(),
        grid: solution.grid.clone(),
        loadings: [l[(0, 0)], if l.ncols() > 1 { l[(0, 1)] } else { 0.0 }],
        strike: problem.contract.strike[0],
        rate_cap: problem.contract.rate_cap[0],
        volume_cap: problem.contract.volume_cap[0],
    })
}

/// Monte Carlo estimate of a policy value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Largest total consumption over paths and commodities.
    pub max_consumption: f64,
}

/// Expected discounted payoff `E int_0^T e^{-r s} A(P(X_s)) . u_s ds` of
/// `policy` from `x0` at `t = 0, z = 0`.
///
/// Rates are decided at the left end of each of the `steps` intervals and
/// held over it; the last exercise before the budget runs out is clipped to
/// the remaining volume.
pub fn evaluate_policy<P: PolicyFunction + ?Sized>(
    model: &FactorModel,
    contract: &ContractSpec,
    policy: &P,
    x0: &[f64],
    n_paths: usize,
    steps: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_paths == 0 || steps == 0 {
        return invalid("need at least one path and one step");
    }
    if x0.len() != model.factors.len() || contract.factors() != model.factors.len() {
        return Err(SwingError::DimensionMismatch(format!(
            "state has {} components, model {} factors, contract {} factors",
            x0.len(),
            model.factors.len(),
            contract.factors()
        )));
    }
    let dt = contract.horizon / steps as f64;
    let kernel = TransitionKernel::new(model, dt)?;
    let m = contract.commodities();
    let loadings = contract.payoff_loadings();

    let per_path: Vec<(f64, f64)> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            let mut x = x0.to_vec();
            let mut z = vec![0.0; m];
            let mut u = vec![0.0; m];
            let mut total = 0.0;
            for k in 0..steps {
                let t = k as f64 * dt;
                policy.rates(t, &z, &x, &mut u);
                let disc = (-contract.discount * t).exp();
                for i in 0..m {
                    let cap = contract.rate_cap[i];
                    if !(u[i].is_finite() && u[i] >= 0.0 && u[i] <= cap * (1.0 + RATE_TOL)) {
                        return Err(SwingError::InadmissiblePolicy(format!(
                            "rate {} for commodity {i} at t = {t} outside [0, {cap}]",
                            u[i]
                        )));
                    }
                    if u[i] == 0.0 {
                        continue;
                    }
                    let left = contract.volume_cap[i] - z[i];
                    if left <= 0.0 {
                        return Err(SwingError::InadmissiblePolicy(format!(
                            "exercise of commodity {i} at t = {t} with the volume exhausted"
                        )));
                    }
                    let vol = (u[i] * dt).min(left);
                    let a: f64 = contract.strike[i]
                        + (0..x.len()).map(|j| loadings[(i, j)] * x[j]).sum::<f64>();
                    total += disc * a * vol;
                    z[i] = if vol == left { contract.volume_cap[i] } else { z[i] + vol };
                }
                kernel.advance(&mut x, &mut rng);
            }
            let used = z.iter().cloned().fold(0.0, f64::max);
            Ok((total, used))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = n_paths as f64;
    let mean = per_path.iter().map(|p| p.0).sum::<f64>() / n;
    let var = if n_paths > 1 {
        per_path.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        max_consumption: per_path.iter().map(|p| p.1).fold(0.0, f64::max),
    })
}
