//! Levy-OU factor dynamics.
//!
//! Every factor follows an arithmetic Ornstein-Uhlenbeck equation
//!
//! ```text
//! dX = speed * (target - X) dt + vol dW + dJ
//! ```
//!
//! where `J` is an optional compound Poisson process with exponentially
//! distributed, strictly positive marks. Two parameterisations of the jump
//! drift are in use:
//!
//! * [`JumpDrift::Compensated`]: the mean-reversion acts on the compensated
//!   jump noise, so the long-run mean is `level + frequency / rate`. This is
//!   the convention under which moment matching against a Gaussian OU model
//!   is carried out.
//! * [`JumpDrift::Raw`]: the mean-reversion acts on the raw jumps, so the
//!   long-run mean is `level + frequency / (rate * speed)`.
//!
//! Both reduce to the plain Gaussian OU factor when no jump is present.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};

use crate::error::{invalid, Result, SwingError};

/// Exponential jump-size law `nu(dy) = frequency * rate * exp(-rate y) dy` on `y >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpJumpSpec {
    /// Jump intensity per unit time.
    pub frequency: f64,
    /// Decay parameter of the jump-size density; the mean jump is `1 / rate`.
    pub rate: f64,
}

impl ExpJumpSpec {
    pub fn new(frequency: f64, rate: f64) -> Result<Self> {
        if !(frequency > 0.0 && frequency.is_finite()) {
            return invalid(format!("jump frequency must be positive, got {frequency}"));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return invalid(format!("jump rate must be positive, got {rate}"));
        }
        Ok(Self { frequency, rate })
    }

    /// Expected jump size per unit time, `int y nu(dy) = frequency / rate`.
    pub fn compensator(&self) -> f64 {
        self.frequency / self.rate
    }

    /// `int y^2 nu(dy) = 2 frequency / rate^2`.
    pub fn second_moment(&self) -> f64 {
        2.0 * self.frequency / (self.rate * self.rate)
    }

    /// Levy mass of jumps larger than `y`.
    pub fn tail_mass(&self, y: f64) -> f64 {
        self.frequency * (-self.rate * y.max(0.0)).exp()
    }
}

/// How the mean reversion of a jump factor treats the jump noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JumpDrift {
    #[default]
    Compensated,
    Raw,
}

/// One mean-reverting factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OUFactor {
    /// Mean-reversion speed per unit time.
    pub speed: f64,
    /// Drift target in price units.
    pub level: f64,
    /// Diffusion coefficient per square-root time.
    pub vol: f64,
    pub jump: Option<ExpJumpSpec>,
    pub jump_drift: JumpDrift,
}

impl OUFactor {
    /// Jump-free factor `dX = speed (level - X) dt + vol dW`.
    ///
    /// `vol = 0` is accepted and yields a deterministic factor.
    pub fn gaussian(speed: f64, level: f64, vol: f64) -> Result<Self> {
        Self::new(speed, level, vol, None, JumpDrift::Compensated)
    }

    pub fn new(
        speed: f64,
        level: f64,
        vol: f64,
        jump: Option<ExpJumpSpec>,
        jump_drift: JumpDrift,
    ) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return invalid(format!("mean-reversion speed must be positive, got {speed}"));
        }
        if !level.is_finite() {
            return invalid("level must be finite");
        }
        if !(vol >= 0.0 && vol.is_finite()) {
            return invalid(format!("vol must be nonnegative, got {vol}"));
        }
        if let Some(j) = jump {
            ExpJumpSpec::new(j.frequency, j.rate)?;
        }
        Ok(Self {
            speed,
            level,
            vol,
            jump,
            jump_drift,
        })
    }

    pub fn is_diffusive(&self) -> bool {
        self.vol > 0.0
    }

    /// Stationary mean.
    pub fn long_run_mean(&self) -> f64 {
        match (self.jump, self.jump_drift) {
            (None, _) => self.level,
            (Some(j), JumpDrift::Compensated) => self.level + j.compensator(),
            (Some(j), JumpDrift::Raw) => self.level + j.compensator() / self.speed,
        }
    }

    /// Target of the drift when jumps are counted uncompensated:
    /// the generator drift is `speed * (drift_anchor - x)`.
    pub fn drift_anchor(&self) -> f64 {
        match self.jump {
            None => self.level,
            Some(j) => self.long_run_mean() - j.compensator() / self.speed,
        }
    }

    /// Generator drift at `x` (jumps enter separately through the Levy integral).
    pub fn drift(&self, x: f64) -> f64 {
        self.speed * (self.drift_anchor() - x)
    }

    /// Instantaneous variance rate from diffusion and jumps.
    pub fn variance_rate(&self) -> f64 {
        self.vol * self.vol + self.jump.map_or(0.0, |j| j.second_moment())
    }
}

/// `E[X_{t+dt} | X_t = x]`.
pub fn conditional_mean(factor: &OUFactor, x: f64, dt: f64) -> f64 {
    debug_assert!(dt >= 0.0);
    let m = factor.long_run_mean();
    x + (m - x) * -(-factor.speed * dt).exp_m1()
}

/// `Var[X_{t+dt} | X_t]`, exact for the OU transition with or without jumps.
pub fn conditional_variance(factor: &OUFactor, dt: f64) -> f64 {
    debug_assert!(dt >= 0.0);
    let k = factor.speed;
    factor.variance_rate() * (-(-2.0 * k * dt).exp_m1()) / (2.0 * k)
}

/// Jump-adjusted `(level, vol)` whose long-run mean and variance match a
/// Gaussian OU factor with the same speed.
pub fn moment_match(
    speed: f64,
    level: f64,
    vol: f64,
    frequency: f64,
    rate: f64,
) -> Result<(f64, f64)> {
    if !(speed > 0.0) {
        return invalid(format!("mean-reversion speed must be positive, got {speed}"));
    }
    if frequency == 0.0 {
        return Ok((level, vol));
    }
    let jump = ExpJumpSpec::new(frequency, rate)?;
    let jump_var = jump.second_moment();
    let sigma_sq = vol * vol;
    if sigma_sq <= jump_var {
        return Err(SwingError::MomentMatch { sigma_sq, jump_var });
    }
    Ok((level - jump.compensator(), (sigma_sq - jump_var).sqrt()))
}

/// Ordered factors and the correlation of their Brownian drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub factors: Vec<OUFactor>,
    /// Correlation over the diffusive factors, in factor order.
    pub correlation: DMatrix<f64>,
}

impl FactorModel {
    /// Model with independent Brownian drivers.
    pub fn independent(factors: Vec<OUFactor>) -> Result<Self> {
        let nb = factors.iter().filter(|f| f.is_diffusive()).count();
        Self::new(factors, DMatrix::identity(nb, nb))
    }

    pub fn new(factors: Vec<OUFactor>, correlation: DMatrix<f64>) -> Result<Self> {
        if factors.is_empty() {
            return invalid("factor model needs at least one factor");
        }
        let nb = factors.iter().filter(|f| f.is_diffusive()).count();
        if correlation.nrows() != nb || correlation.ncols() != nb {
            return Err(SwingError::DimensionMismatch(format!(
                "correlation is {}x{}, expected {nb}x{nb} (one row per diffusive factor)",
                correlation.nrows(),
                correlation.ncols()
            )));
        }
        for i in 0..nb {
            if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
                return invalid("correlation diagonal must be 1");
            }
            for j in 0..nb {
                let c = correlation[(i, j)];
                if !(-1.0..=1.0).contains(&c) {
                    return invalid(format!("correlation entry {c} outside [-1, 1]"));
                }
                if (c - correlation[(j, i)]).abs() > 1e-12 {
                    return invalid("correlation must be symmetric");
                }
            }
        }
        Ok(Self {
            factors,
            correlation,
        })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn has_jumps(&self) -> bool {
        self.factors.iter().any(|f| f.jump.is_some())
    }

    /// Componentwise conditional mean.
    pub fn conditional_mean(&self, x: &[f64], dt: f64) -> Vec<f64> {
        self.factors
            .iter()
            .zip(x)
            .map(|(f, &xi)| conditional_mean(f, xi, dt))
            .collect()
    }

    /// Conditional covariance of the factor vector over `dt`.
    pub fn conditional_covariance(&self, dt: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut cov = DMatrix::zeros(n, n);
        let diffusive = self.diffusive_indices();
        for (a, &i) in diffusive.iter().enumerate() {
            for (b, &j) in diffusive.iter().enumerate() {
                let (fi, fj) = (&self.factors[i], &self.factors[j]);
                let k = fi.speed + fj.speed;
                cov[(i, j)] = self.correlation[(a, b)] * fi.vol * fj.vol * (-(-k * dt).exp_m1()) / k;
            }
        }
        for (i, f) in self.factors.iter().enumerate() {
            if let Some(j) = f.jump {
                cov[(i, i)] += j.second_moment() * (-(-2.0 * f.speed * dt).exp_m1()) / (2.0 * f.speed);
            }
        }
        cov
    }

    fn diffusive_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.factors[i].is_diffusive()).collect()
    }
}

/// Exact one-step transition of a [`FactorModel`] over a fixed `dt`.
///
/// The Gaussian part uses the exact OU transition covariance; jumps are drawn
/// as a Poisson count with uniform arrival times and exponential marks, each
/// decayed exactly from its arrival to the end of the step.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    factors: Vec<OUFactor>,
    dt: f64,
    decay: Vec<f64>,
    anchors: Vec<f64>,
    diffusive: Vec<usize>,
    chol: DMatrix<f64>,
    jumps: Vec<Option<(Poisson<f64>, Exp<f64>)>>,
}

impl TransitionKernel {
    pub fn new(model: &FactorModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return invalid(format!("transition step must be positive, got {dt}"));
        }
        let diffusive = model.diffusive_indices();
        let nb = diffusive.len();
        let mut gauss = DMatrix::zeros(nb, nb);
        for (a, &i) in diffusive.iter().enumerate() {
            for (b, &j) in diffusive.iter().enumerate() {
                let (fi, fj) = (&model.factors[i], &model.factors[j]);
                let k = fi.speed + fj.speed;
                gauss[(a, b)] = model.correlation[(a, b)] * fi.vol * fj.vol * (-(-k * dt).exp_m1()) / k;
            }
        }
        let chol = if nb == 0 {
            gauss
        } else {
            nalgebra::Cholesky::new(gauss.clone())
                .map(|c| c.l())
                .or_else(|| semidefinite_root(&gauss))
                .ok_or_else(|| {
                    SwingError::InvalidParameter("correlation matrix is not positive semidefinite".into())
                })?
        };
        let mut jumps = Vec::with_capacity(model.dim());
        for f in &model.factors {
            jumps.push(match f.jump {
                Some(j) => Some((
                    Poisson::new(j.frequency * dt)
                        .map_err(|e| SwingError::InvalidParameter(format!("jump count law: {e}")))?,
                    Exp::new(j.rate)
                        .map_err(|e| SwingError::InvalidParameter(format!("jump size law: {e}")))?,
                )),
                None => None,
            });
        }
        Ok(Self {
            factors: model.factors.clone(),
            dt,
            decay: model.factors.iter().map(|f| (-f.speed * dt).exp()).collect(),
            anchors: model.factors.iter().map(|f| f.drift_anchor()).collect(),
            diffusive,
            chol,
            jumps,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance `x` in place by one step.
    pub fn advance<R: Rng + ?Sized>(&self, x: &mut [f64], rng: &mut R) {
        for i in 0..x.len() {
            x[i] = self.anchors[i] + (x[i] - self.anchors[i]) * self.decay[i];
        }
        let nb = self.diffusive.len();
        if nb > 0 {
            let normals: DVector<f64> = DVector::from_fn(nb, |_, _| rng.sample(StandardNormal));
            let shock = &self.chol * normals;
            for (a, &i) in self.diffusive.iter().enumerate() {
                x[i] += shock[a];
            }
        }
        for (i, law) in self.jumps.iter().enumerate() {
            if let Some((count, size)) = law {
                let n = count.sample(rng) as u64;
                let speed = self.factors[i].speed;
                for _ in 0..n {
                    let arrival: f64 = rng.random::<f64>() * self.dt;
                    let mark = size.sample(rng);
                    x[i] += mark * (-speed * (self.dt - arrival)).exp();
                }
            }
        }
    }
}

/// Square root of a symmetric positive semidefinite matrix via eigen-decomposition.
fn semidefinite_root(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
        return None;
    }
    let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Some(&eig.eigenvectors * sqrt)
}

/// Sampled trajectory on a uniform time mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

/// Simulate one path on `steps` uniform intervals of `[t0, t1]`.
pub fn sample_path(
    model: &FactorModel,
    x0: &[f64],
    t0: f64,
    t1: f64,
    steps: usize,
    seed: u64,
) -> Result<SamplePath> {
    if !(t1 > t0) {
        return invalid(format!("path end {t1} must exceed start {t0}"));
    }
    if steps == 0 {
        return invalid("path needs at least one step");
    }
    if x0.len() != model.dim() {
        return Err(SwingError::DimensionMismatch(format!(
            "initial state has {} components, model has {} factors",
            x0.len(),
            model.dim()
        )));
    }
    let dt = (t1 - t0) / steps as f64;
    let kernel = TransitionKernel::new(model, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(t0);
    states.push(x.clone());
    for k in 1..=steps {
        kernel.advance(&mut x, &mut rng);
        times.push(t0 + k as f64 * dt);
        states.push(x.clone());
    }
    Ok(SamplePath { times, states })
}
