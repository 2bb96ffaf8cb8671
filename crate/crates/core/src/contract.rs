//! Swing contract: linear price map, affine payoff, volume and rate caps.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{invalid, Result, SwingError};
use crate::factor::FactorModel;
use crate::quadrature::integrate_gl;

/// Default Gauss-Legendre node count for [`unconstrained_value`].
pub const DEFAULT_QUAD_NODES: usize = 64;

/// Contract terms for `m` commodities priced off `n` factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractSpec {
    /// `m x n` price map `P(x) = B x`.
    pub price_matrix: DMatrix<f64>,
    /// `m x m` payoff matrix of `A(p) = Q p + K`.
    pub payoff_matrix: DMatrix<f64>,
    /// Additive payoff constant `K` (a call with strike `k` has `K = -k`).
    pub strike: DVector<f64>,
    /// Total volume `M` per commodity.
    pub volume_cap: DVector<f64>,
    /// Maximal exercise rate per commodity.
    pub rate_cap: DVector<f64>,
    pub horizon: f64,
    pub discount: f64,
}

impl ContractSpec {
    pub fn new(
        price_matrix: DMatrix<f64>,
        payoff_matrix: DMatrix<f64>,
        strike: DVector<f64>,
        volume_cap: DVector<f64>,
        rate_cap: DVector<f64>,
        horizon: f64,
        discount: f64,
    ) -> Result<Self> {
        let m = price_matrix.nrows();
        let n = price_matrix.ncols();
        if m == 0 || m > n {
            return Err(SwingError::DimensionMismatch(format!(
                "price matrix is {m}x{n}, need 1 <= m <= n"
            )));
        }
        if payoff_matrix.shape() != (m, m) {
            return Err(SwingError::DimensionMismatch(format!(
                "payoff matrix must be {m}x{m}, got {:?}",
                payoff_matrix.shape()
            )));
        }
        for (name, v) in [("strike", &strike), ("volume_cap", &volume_cap), ("rate_cap", &rate_cap)] {
            if v.len() != m {
                return Err(SwingError::DimensionMismatch(format!(
                    "{name} has {} entries, expected {m}",
                    v.len()
                )));
            }
        }
        if price_matrix.clone().svd(false, false).rank(1e-10) != m {
            return invalid("price matrix must have full row rank");
        }
        if volume_cap.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return invalid("volume caps must be nonnegative");
        }
        if rate_cap.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return invalid("rate caps must be positive");
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        if !(discount >= 0.0 && discount.is_finite()) {
            return invalid(format!("discount rate must be nonnegative, got {discount}"));
        }
        Ok(Self {
            price_matrix,
            payoff_matrix,
            strike,
            volume_cap,
            rate_cap,
            horizon,
            discount,
        })
    }

    /// Single commodity with `P(x) = weights . x` and call payoff `P - strike_price`.
    pub fn single_call(
        weights: &[f64],
        strike_price: f64,
        volume_cap: f64,
        rate_cap: f64,
        horizon: f64,
        discount: f64,
    ) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(1, weights.len(), weights),
            DMatrix::identity(1, 1),
            DVector::from_element(1, -strike_price),
            DVector::from_element(1, volume_cap),
            DVector::from_element(1, rate_cap),
            horizon,
            discount,
        )
    }

    pub fn commodities(&self) -> usize {
        self.price_matrix.nrows()
    }

    pub fn factors(&self) -> usize {
        self.price_matrix.ncols()
    }

    /// `Q B`, the payoff sensitivity to each factor.
    pub fn payoff_loadings(&self) -> DMatrix<f64> {
        &self.payoff_matrix * &self.price_matrix
    }

    /// Strike price of a single-commodity call, i.e. `-K`.
    pub fn call_strike(&self) -> f64 {
        -self.strike[0]
    }
}

/// Consumed volume `z`, componentwise within `[0, M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeState {
    pub consumed: Vec<f64>,
}

impl VolumeState {
    pub fn new(spec: &ContractSpec, consumed: Vec<f64>) -> Result<Self> {
        if consumed.len() != spec.commodities() {
            return Err(SwingError::DimensionMismatch(format!(
                "volume state has {} entries, contract has {} commodities",
                consumed.len(),
                spec.commodities()
            )));
        }
        for (z, m) in consumed.iter().zip(spec.volume_cap.iter()) {
            if !(*z >= 0.0 && z <= m) {
                return invalid(format!("consumed volume {z} outside [0, {m}]"));
            }
        }
        Ok(Self { consumed })
    }

    pub fn remaining(&self, spec: &ContractSpec) -> Vec<f64> {
        self.consumed
            .iter()
            .zip(spec.volume_cap.iter())
            .map(|(z, m)| m - z)
            .collect()
    }
}

/// `A(P(x)) = Q B x + K`.
pub fn payoff(spec: &ContractSpec, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.factors() {
        return Err(SwingError::DimensionMismatch(format!(
            "state has {} components, contract expects {}",
            x.len(),
            spec.factors()
        )));
    }
    let p = &spec.price_matrix * DVector::from_column_slice(x);
    Ok((&spec.payoff_matrix * p + &spec.strike).iter().copied().collect())
}

/// True when the volume cap binds, `M^i < rate_cap^i * T`.
pub fn is_effective(spec: &ContractSpec, i: usize) -> bool {
    spec.volume_cap[i] < spec.rate_cap[i] * spec.horizon
}

/// Full rate where the payoff is strictly positive, zero otherwise.
pub fn unconstrained_policy(spec: &ContractSpec, x: &[f64]) -> Result<Vec<f64>> {
    let a = payoff(spec, x)?;
    Ok(a
        .iter()
        .zip(spec.rate_cap.iter())
        .map(|(&ai, &cap)| if ai > 0.0 { cap } else { 0.0 })
        .collect())
}

/// `E[max(Y, 0)]` for `Y ~ N(mean, sd^2)`.
pub fn gaussian_positive_part(mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean.max(0.0);
    }
    let std = Normal::standard();
    let d = mean / sd;
    mean * std.cdf(d) + sd * std.pdf(d)
}

/// Value of exercising at full rate whenever the payoff is positive, from
/// `(t, x)` to the horizon, for a jump-free model:
/// `sum_i rate_cap_i int_t^T e^{-r(s-t)} E[A_i(P(X_s))^+] ds`.
///
/// Exact for commodities without an effective volume constraint and an upper
/// bound otherwise.
pub fn unconstrained_value(
    spec: &ContractSpec,
    model: &FactorModel,
    t: f64,
    x: &[f64],
    quad_nodes: usize,
) -> Result<f64> {
    if model.has_jumps() {
        return Err(SwingError::Unsupported(
            "unconstrained value has no closed-form marginal under jumps; use the Monte Carlo oracle".into(),
        ));
    }
    if x.len() != model.dim() || model.dim() != spec.factors() {
        return Err(SwingError::DimensionMismatch(
            "state, model and contract factor counts differ".into(),
        ));
    }
    let horizon = spec.horizon;
    if t >= horizon {
        return Ok(0.0);
    }
    let loadings = spec.payoff_loadings();
    let r = spec.discount;
    let integrand = |s: f64| {
        let tau = s - t;
        let mean = DVector::from_vec(model.conditional_mean(x, tau));
        let cov = model.conditional_covariance(tau);
        let disc = (-r * tau).exp();
        (0..spec.commodities())
            .map(|i| {
                let c = loadings.row(i).transpose();
                let m = c.dot(&mean) + spec.strike[i];
                let v = (c.transpose() * &cov * &c)[(0, 0)].max(0.0).sqrt();
                spec.rate_cap[i] * gaussian_positive_part(m, v)
            })
            .sum::<f64>()
            * disc
    };
    Ok(integrate_gl(integrand, t, horizon, quad_nodes))
}
