//! Post-solve consistency checks shared by the CLI and the test suites.

use crate::boundary::bc_example3_max;
use crate::error::{invalid, Result};
use crate::grid::nearest_index;
use crate::solver::{HjbProblem, Solution};

/// One node of the large-`x1` boundary profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub x1: f64,
    pub x2: f64,
    pub pde: f64,
    pub closed_form: f64,
}

impl ProfilePoint {
    pub fn abs_diff(&self) -> f64 {
        (self.pde - self.closed_form).abs()
    }

    /// Difference relative to the solved option value at the node.
    pub fn ratio(&self) -> f64 {
        self.abs_diff() / self.pde.abs()
    }
}

/// Solved values against the immediate-exercise value at the `n_nodes`
/// largest `x1` nodes, for every `x2` node, at the slice and `z` row
/// nearest `(t, z)`.
pub fn boundary_profile(
    problem: &HjbProblem,
    solution: &Solution,
    t: f64,
    z: f64,
    n_nodes: usize,
) -> Result<Vec<ProfilePoint>> {
    let g = &solution.grid;
    let Some(x2_axis) = g.x2.as_ref() else {
        return invalid("boundary profile needs a two-factor grid");
    };
    let Some(surface) = solution.surface_at(t) else {
        return invalid("no retained slices");
    };
    let iz = nearest_index(&g.z, z);
    let n = n_nodes.min(g.nx1());
    let mut out = Vec::with_capacity(n * x2_axis.len());
    for (i2, &x2) in x2_axis.iter().enumerate() {
        for i1 in g.nx1() - n..g.nx1() {
            let x1 = g.x1[i1];
            out.push(ProfilePoint {
                x1,
                x2,
                pde: surface.values[g.index(iz, i2, i1)],
                closed_form: bc_example3_max(&problem.model, &problem.contract, surface.time, g.z[iz], x1, x2),
            });
        }
    }
    Ok(out)
}

/// Largest difference-to-value ratio over a profile.
pub fn max_ratio(profile: &[ProfilePoint]) -> f64 {
    profile.iter().map(ProfilePoint::ratio).fold(0.0, f64::max)
}

/// Times `0, h, 2h, ..., T` (the last snapped to `T`) for retaining
/// surfaces used by an extracted policy.
pub fn policy_times(horizon: f64, spacing: f64) -> Vec<f64> {
    let n = crate::grid::intervals_for(horizon, spacing.min(horizon)).max(1);
    (0..=n).map(|k| horizon * k as f64 / n as f64).collect()
}
