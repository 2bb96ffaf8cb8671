//! Backward finite-difference solver for the swing HJB equation
//!
//! `V_t + L V - r V + sup_u u (A + V_z) = 0`
//!
//! with backward Euler in time, an implicit central-difference operator in
//! `x1`, explicit first-order upwinding in `z` and `x2`, and an explicit
//! midpoint-rule jump integral.

use std::io::Write;

use rayon::prelude::*;

use crate::boundary::{self, BoundarySpec, Side};
use crate::contract::ContractSpec;
use crate::error::{invalid, Result, SwingError};
use crate::factor::{ExpJumpSpec, FactorModel, OUFactor};
use crate::grid::{build_adaptive_x1, intervals_for, locate, uniform_axis, Grid};
use crate::tridiag::Tridiagonal;

/// Default relative tail mass below which the jump integral is truncated.
pub const DEFAULT_JUMP_CUTOFF: f64 = 1e-8;

/// How the truncated `x1` faces are closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    /// Dirichlet values from the closed-form boundary functions.
    #[default]
    Analytic,
    /// `V_x1x1 = 0` at the faces, with one-sided drift differences.
    Linear,
}

/// Discretisation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    pub dz: f64,
    pub x1_min: f64,
    pub x1_max: f64,
    pub x1_nodes: usize,
    pub cluster_center: f64,
    pub cluster_strength: f64,
    /// Upper end of the `x2` axis (two-factor problems only).
    pub x2_max: Option<f64>,
    pub dx2: Option<f64>,
    pub jump_integral_cutoff_tol: f64,
    /// Times at which surfaces are kept (snapped to the nearest grid time).
    pub retain_slices: Vec<f64>,
    pub boundary: BoundaryMode,
}

impl SchemeConfig {
    pub fn build_grid(&self, contract: &ContractSpec) -> Result<Grid> {
        if !(self.dt > 0.0 && self.dz > 0.0) {
            return invalid("dt and dz must be positive");
        }
        if !(self.jump_integral_cutoff_tol > 0.0 && self.jump_integral_cutoff_tol < 1.0) {
            return invalid("jump integral cutoff must lie in (0, 1)");
        }
        let horizon = contract.horizon;
        let m = contract.volume_cap[0];
        let t = uniform_axis(0.0, horizon, intervals_for(horizon, self.dt))?;
        let z = uniform_axis(0.0, m, intervals_for(m, self.dz))?;
        let x1 = build_adaptive_x1(
            self.x1_min,
            self.x1_max,
            self.x1_nodes,
            self.cluster_center,
            self.cluster_strength,
        )?;
        let x2 = match (self.x2_max, self.dx2) {
            (Some(hi), Some(h)) => {
                if !(h > 0.0) {
                    return invalid("dx2 must be positive");
                }
                Some(uniform_axis(0.0, hi, intervals_for(hi, h))?)
            }
            (None, None) => None,
            _ => return invalid("x2_max and dx2 must be given together"),
        };
        Grid::new(t, z, x1, x2)
    }
}

/// Model, contract and scheme of one solve.
#[derive(Debug, Clone)]
pub struct HjbProblem {
    pub model: FactorModel,
    pub contract: ContractSpec,
    pub scheme: SchemeConfig,
    pub grid: Grid,
    /// Stability warnings raised at construction.
    pub warnings: Vec<String>,
    loadings: [f64; 2],
}

impl HjbProblem {
    pub fn new(model: FactorModel, contract: ContractSpec, scheme: SchemeConfig) -> Result<Self> {
        if contract.commodities() != 1 {
            return Err(SwingError::Unsupported(
                "the PDE solver handles a single commodity".into(),
            ));
        }
        if contract.factors() != model.factors.len() {
            return Err(SwingError::DimensionMismatch(format!(
                "contract prices {} factors, model has {}",
                contract.factors(),
                model.factors.len()
            )));
        }
        let grid = scheme.build_grid(&contract)?;
        match (model.factors.len(), grid.x2.is_some()) {
            (1, false) => {}
            (2, true) => {
                if model.factors[0].jump.is_some() {
                    return Err(SwingError::Unsupported(
                        "jumps in the implicit x1 direction of a two-factor model".into(),
                    ));
                }
                if model.factors[1].vol > 0.0 {
                    return Err(SwingError::Unsupported(
                        "diffusion in the explicit x2 direction".into(),
                    ));
                }
            }
            (n, has_x2) => {
                return Err(SwingError::DimensionMismatch(format!(
                    "{n} factors with {} grid",
                    if has_x2 { "a two-factor" } else { "a one-factor" }
                )))
            }
        }
        let l = contract.payoff_loadings();
        let loadings = [l[(0, 0)], if l.ncols() > 1 { l[(0, 1)] } else { 0.0 }];
        let mut problem = Self {
            loadings,
            model,
            contract,
            scheme,
            grid,
            warnings: Vec::new(),
        };
        let c = problem.cfl_number();
        if c > 1.0 {
            problem
                .warnings
                .push(format!("CFL number {c:.6} exceeds 1; the explicit terms may be unstable"));
        }
        Ok(problem)
    }

    fn x1_factor(&self) -> &OUFactor {
        &self.model.factors[0]
    }

    fn x2_factor(&self) -> Option<&OUFactor> {
        self.model.factors.get(1)
    }

    /// `max (dt |a2(x2)| / dx2) + dt rate_cap / dz` over the grid.
    pub fn cfl_number(&self) -> f64 {
        cfl_number(&self.grid, self.x2_factor(), self.contract.rate_cap[0])
    }

    /// `A(P(x))` at `(x1, x2)`; `x2` is ignored for one-factor models.
    pub fn payoff(&self, x1: f64, x2: f64) -> f64 {
        self.contract.strike[0] + self.loadings[0] * x1 + self.loadings[1] * x2
    }
}

/// CFL number of the explicit `z` and `x2` transport terms.
pub fn cfl_number(grid: &Grid, x2_factor: Option<&OUFactor>, rate_cap: f64) -> f64 {
    let dt = grid.dt();
    let mut c = dt * rate_cap / grid.dz();
    if let (Some(f), Some(x2), Some(h)) = (x2_factor, grid.x2.as_ref(), grid.dx2()) {
        c += x2
            .iter()
            .map(|&x| dt * f.drift(x).abs() / h)
            .fold(0.0, f64::max);
    }
    c
}

/// Value function on one time slice, with the solver's upwind `V_z` and
/// the bang-bang control it applied at each node.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub time: f64,
    pub step: usize,
    pub values: Vec<f64>,
    /// Forward `z` difference of the later slice used for the control.
    pub marginal: Vec<f64>,
    pub control: Vec<bool>,
}

impl ValueSurface {
    /// Multilinear interpolation of `values` at `(z, x1, x2)`, clamped to the grid.
    pub fn interpolate(&self, grid: &Grid, z: f64, x1: f64, x2: f64) -> f64 {
        interpolate_field(grid, &self.values, z, x1, x2)
    }
}

/// Multilinear interpolation of a slice field, clamped to the grid box.
pub fn interpolate_field(grid: &Grid, field: &[f64], z: f64, x1: f64, x2: f64) -> f64 {
    let (iz, wz) = locate(&grid.z, z);
    let (i1, w1) = locate(&grid.x1, x1);
    let (i2, w2) = match &grid.x2 {
        Some(ax) => locate(ax, x2),
        None => (0, 0.0),
    };
    let two = grid.x2.is_some();
    let mut acc = 0.0;
    for (dz, cz) in [(0, 1.0 - wz), (1, wz)] {
        if cz == 0.0 {
            continue;
        }
        for (d2, c2) in [(0, 1.0 - w2), (1, w2)] {
            if c2 == 0.0 || (!two && d2 == 1) {
                continue;
            }
            for (d1, c1) in [(0, 1.0 - w1), (1, w1)] {
                if c1 == 0.0 {
                    continue;
                }
                acc += cz * c2 * c1 * field[grid.index(iz + dz, i2 + d2, i1 + d1)];
            }
        }
    }
    acc
}

/// Retained surfaces of a solve, ordered by increasing time.
#[derive(Debug, Clone)]
pub struct Solution {
    pub grid: Grid,
    pub surfaces: Vec<ValueSurface>,
    pub cfl: f64,
}

impl Solution {
    /// Retained surface closest to `t`.
    pub fn surface_at(&self, t: f64) -> Option<&ValueSurface> {
        self.surfaces.iter().min_by(|a, b| {
            (a.time - t)
                .abs()
                .partial_cmp(&(b.time - t).abs())
                .unwrap()
        })
    }
}

/// Forward `z` difference `(V[z+dz] - V[z]) / dz`; zero on the `z = M` row.
pub fn forward_z_difference(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let row = grid.nx2() * grid.nx1();
    let dz = grid.dz();
    let mut out = vec![0.0; values.len()];
    for i in 0..values.len().saturating_sub(row) {
        out[i] = (values[i + row] - values[i]) / dz;
    }
    out
}

/// Precomputed weights of the midpoint-rule jump integral
/// `int (V(x+y) - V(x)) nu(dy)` along one axis.
///
/// Cells between nodes carry their exact exponential mass times the cell
/// average; beyond the last node `V` is extended linearly and integrated in
/// closed form up to the point where the remaining tail mass drops below
/// `cutoff * frequency`.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    cell_mass: Vec<f64>,
    decay: Vec<f64>,
    total_mass: Vec<f64>,
    tail_level: Vec<f64>,
    tail_slope: Vec<f64>,
}

impl JumpKernel {
    pub fn new(nodes: &[f64], jump: ExpJumpSpec, cutoff: f64) -> Self {
        let n = nodes.len();
        let last = n - 1;
        let (f, alpha) = (jump.frequency, jump.rate);
        let y_cut = -cutoff.ln() / alpha;
        let mut k = Self {
            cell_mass: vec![0.0; n],
            decay: vec![0.0; n],
            total_mass: vec![0.0; n],
            tail_level: vec![0.0; n],
            tail_slope: vec![0.0; n],
        };
        for i in 0..n {
            if i < last {
                let d = (-alpha * (nodes[i + 1] - nodes[i])).exp();
                k.decay[i] = d;
                k.cell_mass[i] = f * (1.0 - d);
            }
            let d = nodes[last] - nodes[i];
            let head = (-alpha * d).exp();
            k.total_mass[i] = f * (1.0 - head);
            if d < y_cut {
                let span = y_cut - d;
                let e = (-alpha * span).exp();
                k.tail_level[i] = f * head * (1.0 - e);
                k.tail_slope[i] = f * head * (1.0 - e * (1.0 + alpha * span)) / alpha;
                k.total_mass[i] += f * head * (1.0 - e);
            }
        }
        k
    }

    /// Writes the jump term at every node into `out`.
    pub fn apply(&self, nodes: &[f64], values: &[f64], out: &mut [f64]) {
        let n = values.len();
        let last = n - 1;
        let slope = (values[last] - values[last - 1]) / (nodes[last] - nodes[last - 1]);
        let mut cells = 0.0;
        for i in (0..n).rev() {
            if i < last {
                let mid = 0.5 * (values[i] + values[i + 1]);
                cells = self.cell_mass[i] * mid + self.decay[i] * cells;
            }
            out[i] = cells + self.tail_level[i] * values[last] + self.tail_slope[i] * slope
                - self.total_mass[i] * values[i];
        }
    }
}

/// One-shot form of [`JumpKernel`].
pub fn jump_integral(nodes: &[f64], values: &[f64], jump: ExpJumpSpec, cutoff: f64, out: &mut [f64]) {
    JumpKernel::new(nodes, jump, cutoff).apply(nodes, values, out);
}

struct Operators {
    matrix: Tridiagonal,
    x1_jumps: Option<JumpKernel>,
    x2_jumps: Option<JumpKernel>,
    /// Window optimisers at `x1_min`, one per `x2` node (two-factor only).
    min_face: Vec<boundary::WindowOptimizer>,
}

/// Nonuniform three-point weights for the second and first derivative at `i`.
fn stencil(x: &[f64], i: usize) -> ([f64; 3], [f64; 3]) {
    let hm = x[i] - x[i - 1];
    let hp = x[i + 1] - x[i];
    let s = hm + hp;
    let d2 = [2.0 / (hm * s), -2.0 / (hm * hp), 2.0 / (hp * s)];
    let d1 = [-hp / (hm * s), (hp - hm) / (hm * hp), hm / (hp * s)];
    (d2, d1)
}

fn build_operators(problem: &HjbProblem) -> Result<Operators> {
    let grid = &problem.grid;
    let x = &grid.x1;
    let n = x.len();
    let f1 = problem.x1_factor();
    let half_var = 0.5 * f1.vol * f1.vol;
    let base = 1.0 / grid.dt() + problem.contract.discount;
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let (w2, w1) = stencil(x, i);
        let a = f1.drift(x[i]);
        lower[i] = -(half_var * w2[0] + a * w1[0]);
        diag[i] = base - (half_var * w2[1] + a * w1[1]);
        upper[i] = -(half_var * w2[2] + a * w1[2]);
    }
    match problem.scheme.boundary {
        BoundaryMode::Analytic => {
            diag[0] = 1.0;
            diag[n - 1] = 1.0;
        }
        BoundaryMode::Linear => {
            let h0 = x[1] - x[0];
            let a0 = f1.drift(x[0]);
            diag[0] = base + a0 / h0;
            upper[0] = -a0 / h0;
            let hn = x[n - 1] - x[n - 2];
            let an = f1.drift(x[n - 1]);
            diag[n - 1] = base - an / hn;
            lower[n - 1] = an / hn;
        }
    }
    let tol = problem.scheme.jump_integral_cutoff_tol;
    Ok(Operators {
        matrix: Tridiagonal::factor(&lower, &diag, &upper)?,
        x1_jumps: f1.jump.map(|j| JumpKernel::new(x, j, tol)),
        x2_jumps: match (problem.x2_factor().and_then(|f| f.jump), grid.x2.as_ref()) {
            (Some(j), Some(x2)) => Some(JumpKernel::new(x2, j, tol)),
            _ => None,
        },
        min_face: match grid.x2.as_ref() {
            Some(x2) if problem.scheme.boundary == BoundaryMode::Analytic => x2
                .iter()
                .map(|&v| boundary::WindowOptimizer::new(&problem.model, &problem.contract, &[x[0], v]))
                .collect(),
            _ => Vec::new(),
        },
    })
}

/// Explicit `x2` upwind derivative at `j` for drift `a`.
#[inline]
fn upwind(values: &[f64], j: usize, stride: usize, h: f64, a: f64, n: usize) -> f64 {
    let here = values[j * stride];
    if a < 0.0 && j > 0 {
        (here - values[(j - 1) * stride]) / h
    } else if a > 0.0 && j + 1 < n {
        (values[(j + 1) * stride] - here) / h
    } else {
        0.0
    }
}

/// Jump-integral contribution for every node of one `z` row.
fn row_jump_terms(problem: &HjbProblem, ops: &Operators, row: &[f64], out: &mut [f64]) {
    let grid = &problem.grid;
    let nx1 = grid.nx1();
    out.iter_mut().for_each(|v| *v = 0.0);
    if let Some(k) = &ops.x1_jumps {
        for (vals, dst) in row.chunks(nx1).zip(out.chunks_mut(nx1)) {
            k.apply(&grid.x1, vals, dst);
        }
    }
    if let (Some(k), Some(x2)) = (&ops.x2_jumps, grid.x2.as_ref()) {
        let nx2 = x2.len();
        let mut col = vec![0.0; nx2];
        let mut res = vec![0.0; nx2];
        for i1 in 0..nx1 {
            for k in 0..nx2 {
                col[k] = row[k * nx1 + i1];
            }
            k.apply(x2, &col, &mut res);
            for k in 0..nx2 {
                out[k * nx1 + i1] += res[k];
            }
        }
    }
}

fn boundary_value(problem: &HjbProblem, ops: &Operators, side: Side, t: f64, z: f64, i2: usize, x2: f64) -> f64 {
    let grid = &problem.grid;
    let (model, contract) = (&problem.model, &problem.contract);
    let x_bound = match side {
        Side::Min => grid.x1[0],
        Side::Max => grid.x1[grid.nx1() - 1],
    };
    if model.factors.len() == 1 {
        return boundary::one_factor_boundary(model, contract, BoundarySpec { side, x_bound }, t, z);
    }
    match side {
        Side::Max => boundary::bc_example3_max(model, contract, t, z, x_bound, x2),
        Side::Min => ops.min_face[i2].optimize(t, z).value,
    }
}

/// One backward step from `next` (time `t + dt`) to time `t`.
///
/// Returns `(values, marginal, control)` on the slice at `t`.
pub fn step_backward(problem: &HjbProblem, next: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let ops = build_operators(problem)?;
    step_with(problem, &ops, next, t)
}

fn step_with(
    problem: &HjbProblem,
    ops: &Operators,
    next: &[f64],
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<bool>)> {
    let grid = &problem.grid;
    let (nz, nx1, nx2) = (grid.nz(), grid.nx1(), grid.nx2());
    let row_len = nx1 * nx2;
    let inv_dt = 1.0 / grid.dt();
    let dz = grid.dz();
    let rate = problem.contract.rate_cap[0];
    let x2_axis: Vec<f64> = grid.x2.clone().unwrap_or_else(|| vec![0.0]);
    let dx2 = grid.dx2().unwrap_or(1.0);
    let x2_factor = problem.x2_factor();
    let analytic = problem.scheme.boundary == BoundaryMode::Analytic;

    let mut values = vec![0.0; next.len()];
    let mut marginal = vec![0.0; next.len()];
    let mut control = vec![false; next.len()];

    values
        .par_chunks_mut(row_len)
        .zip(marginal.par_chunks_mut(row_len))
        .zip(control.par_chunks_mut(row_len))
        .enumerate()
        .for_each(|(iz, ((v_row, m_row), c_row))| {
            if iz + 1 == nz {
                // z = M: nothing left to exercise
                return;
            }
            let z = grid.z[iz];
            let cur = &next[iz * row_len..(iz + 1) * row_len];
            let above = &next[(iz + 1) * row_len..(iz + 2) * row_len];
            let mut jumps = vec![0.0; row_len];
            row_jump_terms(problem, ops, cur, &mut jumps);
            for (i2, &x2) in x2_axis.iter().enumerate() {
                let a2 = x2_factor.map_or(0.0, |f| f.drift(x2));
                let line = i2 * nx1..(i2 + 1) * nx1;
                let rhs = &mut v_row[line.clone()];
                for (i1, &x1) in grid.x1.iter().enumerate() {
                    let k = i2 * nx1 + i1;
                    let vz = (above[k] - cur[k]) / dz;
                    let gain = problem.payoff(x1, x2) + vz;
                    let exercise = gain > 0.0;
                    m_row[k] = vz;
                    c_row[k] = exercise;
                    let mut r = cur[k] * inv_dt + jumps[k];
                    if exercise {
                        r += rate * gain;
                    }
                    if x2_factor.is_some() {
                        r += a2 * upwind(&cur[i1..], i2, nx1, dx2, a2, nx2);
                    }
                    rhs[i1] = r;
                }
                if analytic {
                    rhs[0] = boundary_value(problem, ops, Side::Min, t, z, i2, x2);
                    rhs[nx1 - 1] = boundary_value(problem, ops, Side::Max, t, z, i2, x2);
                }
                ops.matrix.solve_in_place(rhs);
            }
        });

    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        let iz = pos / row_len;
        let rem = pos % row_len;
        return Err(SwingError::NonFinite {
            value: values[pos],
            t,
            iz,
            ix1: rem % nx1,
            ix2: rem / nx1,
        });
    }
    Ok((values, marginal, control))
}

/// Solves from `t = T` back to `t = 0`, keeping the requested slices.
pub fn solve(problem: &HjbProblem) -> Result<Solution> {
    let grid = &problem.grid;
    let nt = grid.t.len();
    let mut keep = vec![false; nt];
    if problem.scheme.retain_slices.is_empty() {
        keep[0] = true;
    }
    for &t in &problem.scheme.retain_slices {
        keep[crate::grid::nearest_index(&grid.t, t)] = true;
    }
    let ops = build_operators(problem)?;
    let size = grid.slice_len();
    let mut current = vec![0.0; size];
    let mut surfaces = Vec::new();
    if keep[nt - 1] {
        surfaces.push(ValueSurface {
            time: grid.t[nt - 1],
            step: nt - 1,
            values: current.clone(),
            marginal: vec![0.0; size],
            control: vec![false; size],
        });
    }
    for n in (0..nt - 1).rev() {
        let (values, marginal, control) = step_with(problem, &ops, &current, grid.t[n])?;
        if keep[n] {
            surfaces.push(ValueSurface {
                time: grid.t[n],
                step: n,
                values: values.clone(),
                marginal,
                control,
            });
        }
        current = values;
    }
    surfaces.reverse();
    Ok(Solution {
        grid: grid.clone(),
        surfaces,
        cfl: problem.cfl_number(),
    })
}

/// Control used when evaluating [`hjb_residual`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResidualControl {
    /// The control recorded on the earlier slice.
    Recorded,
    /// Pointwise maximum over `u in {0, rate_cap}`.
    Supremum,
    /// A fixed rate at every node.
    Fixed(f64),
}

/// Pointwise residual of `V_t + L V - r V + u (A + V_z)` on the pair of
/// consecutive slices `earlier` (time `t`) and `later` (time `t + dt`).
///
/// Spatial operators act on `earlier`; `x1` derivatives are central, `x2`
/// and `z` derivatives one-sided. Entries off the interior are zero.
pub fn hjb_residual(
    problem: &HjbProblem,
    earlier: &ValueSurface,
    later: &ValueSurface,
    control: ResidualControl,
) -> Result<Vec<f64>> {
    let grid = &problem.grid;
    if later.step != earlier.step + 1 {
        return Err(SwingError::InsufficientSlices(format!(
            "residual needs consecutive slices, got steps {} and {}",
            earlier.step, later.step
        )));
    }
    let (nz, nx1, nx2) = (grid.nz(), grid.nx1(), grid.nx2());
    let row_len = nx1 * nx2;
    let dt = later.time - earlier.time;
    let dz = grid.dz();
    let r = problem.contract.discount;
    let rate = problem.contract.rate_cap[0];
    let f1 = problem.x1_factor();
    let half_var = 0.5 * f1.vol * f1.vol;
    let x2_axis: Vec<f64> = grid.x2.clone().unwrap_or_else(|| vec![0.0]);
    let dx2 = grid.dx2().unwrap_or(1.0);
    let ops = build_operators(problem)?;
    let v = &earlier.values;
    let mut out = vec![0.0; v.len()];
    let mut jumps = vec![0.0; row_len];
    for iz in 0..nz - 1 {
        let cur = &v[iz * row_len..(iz + 1) * row_len];
        row_jump_terms(problem, &ops, cur, &mut jumps);
        for (i2, &x2) in x2_axis.iter().enumerate() {
            let a2 = problem.x2_factor().map_or(0.0, |f| f.drift(x2));
            for i1 in 1..nx1 - 1 {
                let k = i2 * nx1 + i1;
                let g = iz * row_len + k;
                let (w2, w1) = stencil(&grid.x1, i1);
                let a1 = f1.drift(grid.x1[i1]);
                let mut res = (later.values[g] - v[g]) / dt - r * v[g] + jumps[k];
                for d in 0..3 {
                    res += (half_var * w2[d] + a1 * w1[d]) * cur[k + d - 1];
                }
                if problem.x2_factor().is_some() {
                    res += a2 * upwind(&cur[i1..], i2, nx1, dx2, a2, nx2);
                }
                let gain = problem.payoff(grid.x1[i1], x2) + (v[g + row_len] - v[g]) / dz;
                let u = match control {
                    ResidualControl::Recorded => {
                        if earlier.control[g] {
                            rate
                        } else {
                            0.0
                        }
                    }
                    ResidualControl::Supremum => {
                        if gain > 0.0 {
                            rate
                        } else {
                            0.0
                        }
                    }
                    ResidualControl::Fixed(u) => u,
                };
                out[g] = res + u * gain;
            }
        }
    }
    Ok(out)
}

/// Writes one surface as CSV: `t,z,x1[,x2],value,control`.
pub fn write_surface_csv<W: Write>(
    mut w: W,
    grid: &Grid,
    surface: &ValueSurface,
    rate_cap: f64,
) -> std::io::Result<()> {
    let two = grid.x2.is_some();
    if two {
        writeln!(w, "t,z,x1,x2,value,control")?;
    } else {
        writeln!(w, "t,z,x1,value,control")?;
    }
    let x2_axis: Vec<f64> = grid.x2.clone().unwrap_or_else(|| vec![0.0]);
    for (iz, &z) in grid.z.iter().enumerate() {
        for (i2, &x2) in x2_axis.iter().enumerate() {
            for (i1, &x1) in grid.x1.iter().enumerate() {
                let k = grid.index(iz, i2, i1);
                let u = if surface.control[k] { rate_cap } else { 0.0 };
                if two {
                    writeln!(w, "{},{},{},{},{},{}", surface.time, z, x1, x2, surface.values[k], u)?;
                } else {
                    writeln!(w, "{},{},{},{},{}", surface.time, z, x1, surface.values[k], u)?;
                }
            }
        }
    }
    Ok(())
}
