//! Run configuration in TOML.
//!
//! Top-level keys `example`, `[[factor]]`, `[contract]` and `[grid]` are
//! required; `seed`, `[output]`, `[mc]`, `[boundary_check]` and
//! `[paper_scale]` are optional. Unknown keys are rejected. After parsing,
//! omitted scheme parameters are filled in, so the echoed text lists every
//! value a run used.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contract::ContractSpec;
use crate::error::SwingError;
use crate::factor::{moment_match, ExpJumpSpec, FactorModel, JumpDrift, OUFactor};
use crate::solver::{BoundaryMode, SchemeConfig, DEFAULT_JUMP_CUTOFF};

/// Diffusion coefficient listed in some parameter tables for the matched
/// jump model; it does not satisfy the variance-matching identity.
pub const SUSPICIOUS_MATCHED_VOL: f64 = 2.3387;

const REQUIRED_KEYS: [&str; 4] = ["example", "factor", "contract", "grid"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("invalid configuration: {0}")]
    Invalid(#[from] SwingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    Ex1,
    Ex2,
    Ex3,
    Custom,
}

impl Example {
    pub fn as_str(&self) -> &'static str {
        match self {
            Example::Ex1 => "ex1",
            Example::Ex2 => "ex2",
            Example::Ex3 => "ex3",
            Example::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpDriftName {
    #[default]
    Compensated,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryName {
    #[default]
    Analytic,
    Linear,
}

/// Gaussian model whose long-run mean and variance a jump factor should match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchTarget {
    pub level: f64,
    pub vol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_rate: Option<f64>,
    #[serde(default)]
    pub jump_drift: JumpDriftName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_match: Option<MatchTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    pub weights: Vec<f64>,
    pub strike: f64,
    pub volume_cap: f64,
    pub rate_cap: f64,
    pub horizon: f64,
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dz: Option<f64>,
    pub x1_min: f64,
    pub x1_max: f64,
    pub x1_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x2_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_retain")]
    pub retain: Vec<f64>,
    #[serde(default = "default_trigger_times")]
    pub trigger_times: Vec<f64>,
    #[serde(default = "default_projection_z")]
    pub projection_z: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_x2: Option<Vec<f64>>,
}

fn default_retain() -> Vec<f64> {
    vec![0.0, 0.5]
}

fn default_trigger_times() -> Vec<f64> {
    vec![0.5]
}

fn default_projection_z() -> Vec<f64> {
    vec![0.1, 0.25, 0.4]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            retain: default_retain(),
            trigger_times: default_trigger_times(),
            projection_z: default_projection_z(),
            projection_x2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Spacing of the surfaces kept for the extracted policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_spacing: Option<f64>,
    /// Relative grid-error allowance in the sandwich check.
    #[serde(default = "default_allowance")]
    pub allowance: f64,
}

fn default_paths() -> usize {
    100_000
}

fn default_allowance() -> f64 {
    0.02
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            steps: None,
            x0: None,
            policy_spacing: None,
            allowance: default_allowance(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryCheckConfig {
    pub t: f64,
    pub z: f64,
}

impl Default for BoundaryCheckConfig {
    fn default() -> Self {
        Self { t: 0.5, z: 0.4 }
    }
}

/// Grid overrides applied by the paper-scale switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperScale {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x1_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub example: Example,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub factor: Vec<FactorConfig>,
    pub contract: ContractConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub boundary_check: BoundaryCheckConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paper_scale: Option<PaperScale>,
}

fn default_seed() -> u64 {
    1
}

/// Text of a shipped example configuration.
pub fn preset(example: Example) -> Option<&'static str> {
    match example {
        Example::Ex1 => Some(include_str!("../../../configs/ex1.toml")),
        Example::Ex2 => Some(include_str!("../../../configs/ex2.toml")),
        Example::Ex3 => Some(include_str!("../../../configs/ex3.toml")),
        Example::Custom => None,
    }
}

/// Parses, validates and resolves a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let missing: Vec<String> = REQUIRED_KEYS
        .iter()
        .filter(|k| !table.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError::Missing(missing));
    }
    let mut config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.resolve()?;
    Ok(config)
}

/// Resolved configuration as TOML; parses back to an equal value.
pub fn echo(config: &RunConfig) -> String {
    toml::to_string(config).expect("configuration serialises")
}

impl RunConfig {
    /// Fills omitted scheme parameters and checks every derived object.
    fn resolve(&mut self) -> Result<(), ConfigError> {
        let model = self.model()?;
        let g = &mut self.grid;
        g.dz.get_or_insert(g.dt);
        g.cluster_strength.get_or_insert(crate::grid::DEFAULT_CLUSTER_STRENGTH);
        g.jump_cutoff.get_or_insert(DEFAULT_JUMP_CUTOFF);
        g.boundary.get_or_insert(BoundaryName::Analytic);
        if g.cluster_center.is_none() {
            let m = model.factors[0].long_run_mean();
            let mid = 0.5 * (g.x1_min + g.x1_max);
            g.cluster_center = Some(if g.x1_min < m && m < g.x1_max { m } else { mid });
        }
        if self.mc.x0.is_none() {
            let mut x0 = vec![0.0; self.factor.len()];
            x0[0] = self.grid.cluster_center.unwrap_or(0.0);
            self.mc.x0 = Some(x0);
        }
        if self.mc.steps.is_none() {
            self.mc.steps = Some(crate::grid::intervals_for(self.contract.horizon, self.grid.dt));
        }
        if self.factor.len() > 1 && self.output.projection_x2.is_none() {
            let hi = self.grid.x2_max.unwrap_or(0.0);
            self.output.projection_x2 = Some(vec![0.0, 0.5 * hi, hi]);
        }
        let contract = self.contract()?;
        let scheme = self.scheme();
        crate::solver::HjbProblem::new(model, contract, scheme)?;
        if let Some(x0) = &self.mc.x0 {
            if x0.len() != self.factor.len() {
                return Err(SwingError::DimensionMismatch(format!(
                    "mc.x0 has {} entries for {} factors",
                    x0.len(),
                    self.factor.len()
                ))
                .into());
            }
        }
        Ok(())
    }

    /// Replaces grid parameters with the `[paper_scale]` overrides.
    pub fn apply_paper_scale(&mut self) -> Result<(), ConfigError> {
        let Some(p) = self.paper_scale.clone() else {
            return Err(SwingError::InvalidParameter("no [paper_scale] section".into()).into());
        };
        if let Some(v) = p.dt {
            self.grid.dt = v;
            self.mc.steps = Some(crate::grid::intervals_for(self.contract.horizon, v));
        }
        if let Some(v) = p.dz {
            self.grid.dz = Some(v);
        }
        if let Some(v) = p.x1_nodes {
            self.grid.x1_nodes = v;
        }
        if let Some(v) = p.dx2 {
            self.grid.dx2 = Some(v);
        }
        self.resolve()
    }

    pub fn model(&self) -> Result<FactorModel, SwingError> {
        let factors = self
            .factor
            .iter()
            .enumerate()
            .map(|(i, f)| build_factor(i, f))
            .collect::<Result<Vec<_>, _>>()?;
        FactorModel::independent(factors)
    }

    pub fn contract(&self) -> Result<ContractSpec, SwingError> {
        let c = &self.contract;
        ContractSpec::single_call(&c.weights, c.strike, c.volume_cap, c.rate_cap, c.horizon, c.discount)
    }

    /// Scheme parameters, retaining the configured output slices.
    pub fn scheme(&self) -> SchemeConfig {
        let g = &self.grid;
        let mut retain = self.output.retain.clone();
        retain.extend(&self.output.trigger_times);
        SchemeConfig {
            dt: g.dt,
            dz: g.dz.unwrap_or(g.dt),
            x1_min: g.x1_min,
            x1_max: g.x1_max,
            x1_nodes: g.x1_nodes,
            cluster_center: g.cluster_center.unwrap_or(0.5 * (g.x1_min + g.x1_max)),
            cluster_strength: g.cluster_strength.unwrap_or(crate::grid::DEFAULT_CLUSTER_STRENGTH),
            x2_max: g.x2_max,
            dx2: g.dx2,
            jump_integral_cutoff_tol: g.jump_cutoff.unwrap_or(DEFAULT_JUMP_CUTOFF),
            retain_slices: retain,
            boundary: match g.boundary.unwrap_or_default() {
                BoundaryName::Analytic => BoundaryMode::Analytic,
                BoundaryName::Linear => BoundaryMode::Linear,
            },
        }
    }

    /// Non-fatal remarks about the parameters.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, f) in self.factor.iter().enumerate() {
            if f.jump_frequency.is_some() && f.vol.is_some_and(|v| (v - SUSPICIOUS_MATCHED_VOL).abs() < 5e-5) {
                out.push(format!(
                    "factor {i}: vol = {SUSPICIOUS_MATCHED_VOL} does not match the Gaussian variance \
                     (sqrt(sigma^2 - 2f/alpha^2) gives 2.2516 for sigma = 2.36, f = 0.04, alpha = 0.4); \
                     use moment_match to derive it"
                ));
            }
        }
        out
    }
}

fn build_factor(i: usize, f: &FactorConfig) -> Result<OUFactor, SwingError> {
    let jump = match (f.jump_frequency, f.jump_rate) {
        (Some(freq), Some(rate)) => Some(ExpJumpSpec::new(freq, rate)?),
        (None, None) => None,
        _ => {
            return Err(SwingError::InvalidParameter(format!(
                "factor {i}: jump_frequency and jump_rate must be given together"
            )))
        }
    };
    let drift = match f.jump_drift {
        JumpDriftName::Compensated => JumpDrift::Compensated,
        JumpDriftName::Raw => JumpDrift::Raw,
    };
    let (level, vol) = match (f.moment_match, f.level, f.vol) {
        (Some(target), None, None) => {
            let j = jump.ok_or_else(|| {
                SwingError::InvalidParameter(format!("factor {i}: moment_match needs a jump component"))
            })?;
            moment_match(f.speed, target.level, target.vol, j.frequency, j.rate)?
        }
        (Some(_), _, _) => {
            return Err(SwingError::InvalidParameter(format!(
                "factor {i}: give either moment_match or level/vol, not both"
            )))
        }
        (None, Some(level), Some(vol)) => (level, vol),
        (None, _, _) => {
            return Err(SwingError::InvalidParameter(format!("factor {i}: level and vol are required")))
        }
    };
    OUFactor::new(f.speed, level, vol, jump, drift)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_example_one() {
        let c = parse_config(preset(Example::Ex1).unwrap()).unwrap();
        assert_eq!(c.example, Example::Ex1);
        let f = &c.factor[0];
        assert_eq!((f.speed, f.level, f.vol), (0.014, Some(40.0), Some(2.36)));
        let k = &c.contract;
        assert_eq!((k.strike, k.horizon, k.volume_cap, k.rate_cap), (0.0, 1.0, 0.5, 1.0));
        assert_eq!((c.grid.x1_min, c.grid.x1_max), (18.7, 61.3));
        let p = c.paper_scale.as_ref().unwrap();
        assert_eq!((p.dt, p.dz, p.x1_nodes), (Some(0.001), Some(0.001), Some(671)));
    }

    #[test]
    fn shipped_example_two_matches_moments() {
        let c = parse_config(preset(Example::Ex2).unwrap()).unwrap();
        let m = c.model().unwrap();
        assert!((m.factors[0].level - 39.9).abs() < 1e-12);
        assert!((m.factors[0].vol - (2.36f64 * 2.36 - 0.5).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn shipped_example_three() {
        let c = parse_config(preset(Example::Ex3).unwrap()).unwrap();
        let m = c.model().unwrap();
        assert_eq!(m.factors.len(), 2);
        assert_eq!(m.factors[1].jump.unwrap().rate, 0.014);
        assert_eq!(c.grid.x2_max, Some(9.0));
        assert_eq!(c.output.projection_x2, Some(vec![0.0, 4.5, 9.0]));
    }

    #[test]
    fn empty_text_lists_required_keys() {
        let e = parse_config("").unwrap_err();
        assert_eq!(
            e,
            ConfigError::Missing(vec!["example".into(), "factor".into(), "contract".into(), "grid".into()])
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = preset(Example::Ex1).unwrap().replace("vol = 2.36", "vol = = 2.36");
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("line 8"), "{e}");
        let text = preset(Example::Ex1).unwrap().replace("vol = 2.36", "vol = 2.36\nvolatility = 1.0");
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("unknown field") && e.contains("line 9"), "{e}");
    }

    #[test]
    fn impossible_moment_match_is_rejected() {
        let text = preset(Example::Ex2)
            .unwrap()
            .replace("vol = 2.36", "vol = 0.5");
        assert!(matches!(
            parse_config(&text),
            Err(ConfigError::Invalid(SwingError::MomentMatch { .. }))
        ));
    }

    #[test]
    fn echo_round_trips() {
        for ex in [Example::Ex1, Example::Ex2, Example::Ex3] {
            let c = parse_config(preset(ex).unwrap()).unwrap();
            let back = parse_config(&echo(&c)).unwrap();
            assert_eq!(c, back);
        }
    }

    #[test]
    fn defaults_are_filled() {
        let text = "example = \"custom\"\n[[factor]]\nspeed = 0.5\nlevel = 10.0\nvol = 1.0\n\
                    [contract]\nweights = [1.0]\nstrike = 8.0\nvolume_cap = 0.3\nrate_cap = 1.0\n\
                    horizon = 1.0\ndiscount = 0.0\n[grid]\ndt = 0.01\nx1_min = 0.0\nx1_max = 20.0\nx1_nodes = 41\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.grid.dz, Some(0.01));
        assert_eq!(c.grid.cluster_center, Some(10.0));
        assert_eq!(c.grid.boundary, Some(BoundaryName::Analytic));
        assert_eq!(c.mc.steps, Some(100));
        assert_eq!(c.mc.x0, Some(vec![10.0]));
    }

    #[test]
    fn listed_matched_vol_triggers_warning() {
        let text = preset(Example::Ex2)
            .unwrap()
            .replace("moment_match = { level = 40.0, vol = 2.36 }", "level = 39.9\nvol = 2.3387");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.warnings().len(), 1);
        assert!(parse_config(preset(Example::Ex2).unwrap()).unwrap().warnings().is_empty());
    }
}
