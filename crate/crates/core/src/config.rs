//! Experiment configuration and its TOML form.
//!
//! Only `problem` is required; every other key falls back to a default that
//! may depend on the problem. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{Compensator, Functional, RuleSpec, DEFAULT_ALPHA_FLOOR, DEFAULT_GRID_POINTS};

/// Upper bound on level counts accepted by the seed derivation.
pub const MAX_LEVELS: usize = 1 << 16;
pub const MAX_REALIZATIONS: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentProblem {
    /// Random-ray tomography with Gaussian operator noise.
    TomoGauss,
    /// Baart operator perturbed in the direction of the heat operator.
    BaartHeat,
    /// Gaussian blur perturbed by a random-ray tomography operator.
    BlurTomo,
}

impl ExperimentProblem {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentProblem::TomoGauss => "tomo-gauss",
            ExperimentProblem::BaartHeat => "baart-heat",
            ExperimentProblem::BlurTomo => "blur-tomo",
        }
    }

    /// Default dimension: `n` for baart, the image side `N` otherwise.
    pub fn desk_size(self) -> usize {
        match self {
            ExperimentProblem::BaartHeat => 100,
            ExperimentProblem::TomoGauss | ExperimentProblem::BlurTomo => 12,
        }
    }

    pub fn full_size(self) -> usize {
        match self {
            ExperimentProblem::BaartHeat => 400,
            ExperimentProblem::TomoGauss | ExperimentProblem::BlurTomo => 25,
        }
    }

    pub fn default_constants(self) -> RuleConstants {
        let (sh1_d, sh2_d, gamma_factor) = match self {
            ExperimentProblem::TomoGauss => (600.0, 0.05, 0.005),
            ExperimentProblem::BaartHeat => (600.0, 0.12, 0.07),
            ExperimentProblem::BlurTomo => (500.0, 0.2, 0.01),
        };
        RuleConstants {
            sh1_d,
            sh2_d,
            gamma_factor,
            s_exponent: 1.0,
        }
    }
}

/// How the configured `D` values are adapted to each noisy instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DScaling {
    /// Use `D` as given.
    Absolute,
    /// `D / ‖A_η‖`.
    InverseOperatorNorm,
    /// `D · ‖y_δ‖ / ‖A_η‖`.
    DataOverOperatorNorm,
}

impl DScaling {
    pub fn apply(self, d: f64, operator_norm: f64, data_norm: f64) -> f64 {
        match self {
            DScaling::Absolute => d,
            DScaling::InverseOperatorNorm => d / operator_norm,
            DScaling::DataOverOperatorNorm => d * data_norm / operator_norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConstants {
    pub sh1_d: f64,
    pub sh2_d: f64,
    pub gamma_factor: f64,
    pub s_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ExperimentProblem,
    pub size: usize,
    pub delta_levels: Vec<f64>,
    pub eta_levels: Vec<f64>,
    pub realizations: usize,
    pub grid_points: usize,
    pub alpha_floor: f64,
    pub master_seed: u64,
    pub d_scaling: DScaling,
    /// Rays per pixel of the tomography operator.
    pub tomo_oversampling: f64,
    pub blur_band: usize,
    pub blur_sigma: f64,
    pub rules: RuleConstants,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRuleConstants {
    sh1_d: Option<f64>,
    sh2_d: Option<f64>,
    gamma_factor: Option<f64>,
    s_exponent: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: ExperimentProblem,
    size: Option<usize>,
    full_size: Option<bool>,
    delta_levels: Option<Vec<f64>>,
    eta_levels: Option<Vec<f64>>,
    realizations: Option<usize>,
    grid_points: Option<usize>,
    alpha_floor: Option<f64>,
    master_seed: Option<u64>,
    d_scaling: Option<DScaling>,
    tomo_oversampling: Option<f64>,
    blur_band: Option<usize>,
    blur_sigma: Option<f64>,
    rules: Option<RawRuleConstants>,
}

pub fn default_levels() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 100.0).collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults for `problem`.
    pub fn new(problem: ExperimentProblem) -> Self {
        ExperimentConfig {
            problem,
            size: problem.desk_size(),
            delta_levels: default_levels(),
            eta_levels: default_levels(),
            realizations: 100,
            grid_points: DEFAULT_GRID_POINTS,
            alpha_floor: DEFAULT_ALPHA_FLOOR,
            master_seed: 0,
            d_scaling: DScaling::Absolute,
            tomo_oversampling: 1.0,
            blur_band: 8,
            blur_sigma: 0.9,
            rules: problem.default_constants(),
        }
    }

    fn from_raw(raw: RawConfig) -> Result<Self> {
        let mut c = ExperimentConfig::new(raw.problem);
        if raw.full_size == Some(true) {
            c.size = raw.problem.full_size();
        }
        if let Some(v) = raw.size {
            if raw.full_size == Some(true) {
                return Err(Error::Config("size and full_size are mutually exclusive".into()));
            }
            c.size = v;
        }
        macro_rules! take {
            ($($field:ident),*) => {$( if let Some(v) = raw.$field { c.$field = v; } )*};
        }
        take!(
            delta_levels,
            eta_levels,
            realizations,
            grid_points,
            alpha_floor,
            master_seed,
            d_scaling,
            tomo_oversampling,
            blur_band,
            blur_sigma
        );
        if let Some(r) = raw.rules {
            let k = &mut c.rules;
            k.sh1_d = r.sh1_d.unwrap_or(k.sh1_d);
            k.sh2_d = r.sh2_d.unwrap_or(k.sh2_d);
            k.gamma_factor = r.gamma_factor.unwrap_or(k.gamma_factor);
            k.s_exponent = r.s_exponent.unwrap_or(k.s_exponent);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("{field}: {why}")));
        for (field, levels) in [("delta_levels", &self.delta_levels), ("eta_levels", &self.eta_levels)] {
            if levels.is_empty() {
                return bad(field, "must not be empty");
            }
            if levels.len() > MAX_LEVELS {
                return bad(field, "too many levels");
            }
            if levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
                return bad(field, "levels must lie in (0, 1)");
            }
        }
        if self.realizations == 0 || self.realizations > MAX_REALIZATIONS {
            return bad("realizations", "must be at least 1");
        }
        if self.grid_points < 2 {
            return bad("grid_points", "must be at least 2");
        }
        if !(self.alpha_floor > 0.0 && self.alpha_floor.is_finite()) {
            return bad("alpha_floor", "must be positive");
        }
        if self.master_seed > i64::MAX as u64 {
            return bad("master_seed", "must fit in a signed 64-bit integer");
        }
        if self.size < 2 {
            return bad("size", "must be at least 2");
        }
        if !(self.tomo_oversampling > 0.0 && self.tomo_oversampling.is_finite()) {
            return bad("tomo_oversampling", "must be positive");
        }
        if self.blur_band == 0 {
            return bad("blur_band", "must be at least 1");
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return bad("blur_sigma", "must be positive");
        }
        for spec in self.rule_table() {
            spec.validate().map_err(|e| Error::Config(format!("rules: {e}")))?;
        }
        Ok(())
    }

    /// The nine rules: each functional standard, with SH1 and with SH2.
    pub fn rule_table(&self) -> Vec<RuleSpec> {
        let k = &self.rules;
        Functional::ALL
            .iter()
            .flat_map(|&f| {
                let sh = |c, d| RuleSpec {
                    s_exponent: k.s_exponent,
                    ..RuleSpec::semi_heuristic(f, c, d, k.gamma_factor)
                };
                [
                    RuleSpec::standard(f),
                    sh(Compensator::SolutionNorm, k.sh1_d),
                    sh(Compensator::InverseSqrtAlpha, k.sh2_d),
                ]
            })
            .collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parses and validates a configuration document.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    ExperimentConfig::from_raw(raw)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
