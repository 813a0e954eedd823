//! Run configuration read from TOML. Command-line flags override it.

use anyhow::{bail, Context, Result};
use countcopula::dependence::{DEFAULT_CI_SEED, DEFAULT_DRAWS, DEFAULT_ORDER_THRESHOLD};
use countcopula::estimation::{FitConfig, ModelSpec};
use countcopula::likelihood::LikelihoodKind;
use countcopula::model::LambdaSpec;
use countcopula::optimize::OptimizerConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    Continuous,
    Discrete,
}

impl From<Likelihood> for LikelihoodKind {
    fn from(l: Likelihood) -> Self {
        match l {
            Likelihood::Continuous => LikelihoodKind::ContinuousApprox,
            Likelihood::Discrete => LikelihoodKind::DiscreteApprox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Constant,
    Covariate,
    /// Fit both and test the constant model against the covariate one.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Species columns in model order; empty selects every count column.
    pub species: Vec<String>,
    /// Bernstein coefficients, one entry for all species or one per species.
    pub bernstein_coefficients: Vec<usize>,
    /// Sinusoid frequencies in the marginal shift terms.
    pub harmonics: usize,
    pub lambda: LambdaChoice,
    /// Sinusoid frequencies in the covariate-dependent Λ.
    pub lambda_harmonics: usize,
    pub likelihood: Likelihood,
    /// Upper end of each species' Bernstein support; defaults to the largest
    /// observed count.
    pub support: Option<Vec<f64>>,
    pub optimizer: OptimizerConfig,
    pub compute_vcov: bool,
    pub seed: u64,
    pub ci_level: f64,
    pub ci_draws: usize,
    /// Days at which covariate-dependent summaries are reported.
    pub summary_days: Vec<u16>,
    /// Probabilities for the marginal quantile curves.
    pub quantile_probabilities: Vec<f64>,
    pub replicates: usize,
    pub bootstrap_days: Vec<u16>,
    pub compare_samples: usize,
    pub quadrature_rel_tol: f64,
    pub quadrature_max_subdivisions: usize,
    pub permutation_threshold: f64,
    pub permutation_allow_large: bool,
    pub simulate_years: usize,
    pub simulate_missing_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            species: Vec::new(),
            bernstein_coefficients: vec![7],
            harmonics: 3,
            lambda: LambdaChoice::Constant,
            lambda_harmonics: 3,
            likelihood: Likelihood::Discrete,
            support: None,
            optimizer: OptimizerConfig::default(),
            compute_vcov: true,
            seed: DEFAULT_CI_SEED,
            ci_level: 0.95,
            ci_draws: DEFAULT_DRAWS,
            summary_days: vec![1, 91, 182, 274],
            quantile_probabilities: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            replicates: 100,
            bootstrap_days: vec![1, 46, 91, 137, 182, 228, 274, 319],
            compare_samples: 50,
            quadrature_rel_tol: 1e-10,
            quadrature_max_subdivisions: 200,
            permutation_threshold: DEFAULT_ORDER_THRESHOLD,
            permutation_allow_large: false,
            simulate_years: 15,
            simulate_missing_rate: 0.067,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bernstein_coefficients.is_empty() || self.bernstein_coefficients.contains(&0) {
            bail!("bernstein_coefficients must be non-empty and positive");
        }
        if !(0.0..1.0).contains(&self.ci_level) {
            bail!("ci_level must lie in [0, 1), got {}", self.ci_level);
        }
        if self.ci_draws < 2 {
            bail!("ci_draws must be at least 2");
        }
        if let Some(&d) = self.summary_days.iter().chain(&self.bootstrap_days).find(|&&d| !(1..=365).contains(&d)) {
            bail!("day {d} is outside 1..=365");
        }
        if let Some(&p) = self.quantile_probabilities.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            bail!("quantile probability {p} is outside (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.simulate_missing_rate) {
            bail!("simulate_missing_rate must lie in [0, 1]");
        }
        Ok(())
    }

    /// Model specifications in fitting order: constant first when both.
    pub fn specs(&self) -> Vec<(LambdaChoice, ModelSpec)> {
        let base = ModelSpec {
            bernstein_coefficients: self.bernstein_coefficients.clone(),
            harmonics: self.harmonics,
            support: self.support.clone(),
            ..ModelSpec::default()
        };
        let constant = (LambdaChoice::Constant, base.clone().with_lambda(LambdaSpec::constant()));
        let covariate = (
            LambdaChoice::Covariate,
            base.with_lambda(LambdaSpec::covariate_dependent(self.lambda_harmonics)),
        );
        match self.lambda {
            LambdaChoice::Constant => vec![constant],
            LambdaChoice::Covariate => vec![covariate],
            LambdaChoice::Both => vec![constant, covariate],
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            optimizer: self.optimizer,
            compute_vcov: self.compute_vcov,
            ..FitConfig::default()
        }
    }
}
