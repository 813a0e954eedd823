//! Model objects: marginal count transformation models, the dependence
//! structure `Λ(x)` and the assembled joint model.
//!
//! Parameter vector layout (`JointModel::pack`):
//!
//! ```text
//! ϑ_1 (P_1), β_1 (Q), ϑ_2 (P_2), β_2 (Q), …, ϑ_J, β_J,
//! then for every pair (k̃, k) in row-major lower-triangular order
//! (2,1), (3,1), (3,2), …:  τ_k̃k, ζ_k̃k (W entries, W = 0 for constant Λ)
//! ```
//!
//! The marginal CDF is read as `Φ(α_j(⌊y⌋) − η_j(x))`: the floor applies to
//! the count, not to the transformed value.

use crate::design::{fill_harmonics, BasisEval, BernsteinBasis, HarmonicDesign};
use crate::error::{Error, Result};
use crate::normal;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

/// Inverse link `F`. Only the standard-normal link is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Normal,
    Logistic,
    MinimumExtremeValue,
}

impl Link {
    pub fn ensure_supported(self) -> Result<()> {
        match self {
            Link::Normal => Ok(()),
            other => Err(Error::UnsupportedLink(other)),
        }
    }
}

/// Observation covariates: calendar year and day on the 365-day grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Covariates {
    pub year: i32,
    pub day: u16,
}

impl Covariates {
    pub fn new(year: i32, day: u16) -> Self {
        Self { year, day }
    }
}

/// Bernstein coefficients `ϑ_j` and shift coefficients `β_j` of one species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalParams {
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl MarginalParams {
    pub fn is_monotone(&self) -> bool {
        self.theta.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `λ_k̃k = τ_k̃k` ("M-Λ").
    Constant,
    /// `λ_k̃k(x) = τ_k̃k + ζ_k̃k(x)` with an annual harmonic `ζ` ("M-Λ(x)").
    CovariateDependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaSpec {
    pub mode: LambdaMode,
    /// Number of sinusoid frequencies inside `ζ` (ignored for constant mode).
    pub harmonics: usize,
}

impl LambdaSpec {
    pub fn constant() -> Self {
        Self {
            mode: LambdaMode::Constant,
            harmonics: 0,
        }
    }

    pub fn covariate_dependent(harmonics: usize) -> Self {
        Self {
            mode: LambdaMode::CovariateDependent,
            harmonics,
        }
    }

    /// Width of the `ζ` block per pair.
    pub fn pair_design_width(&self) -> usize {
        match self.mode {
            LambdaMode::Constant => 0,
            LambdaMode::CovariateDependent => 2 * self.harmonics,
        }
    }

    /// Parameters per pair (`τ` plus the `ζ` block).
    pub fn params_per_pair(&self) -> usize {
        1 + self.pair_design_width()
    }

    pub(crate) fn fill_design(&self, day: f64, out: &mut [f64]) {
        if self.mode == LambdaMode::CovariateDependent {
            fill_harmonics(self.harmonics, day, out);
        }
    }
}

/// Number of lower-triangular pairs for `J` species.
pub fn n_pairs(n_species: usize) -> usize {
    n_species * n_species.saturating_sub(1) / 2
}

/// Position of pair `(row, col)`, `row > col` (0-based), in the packed order.
pub fn pair_index(row: usize, col: usize) -> usize {
    debug_assert!(row > col);
    row * (row - 1) / 2 + col
}

/// Pairs `(k̃, k)` with `k < k̃`, in packed order.
pub fn pairs(n_species: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n_pairs(n_species));
    for row in 1..n_species {
        for col in 0..row {
            out.push((row, col));
        }
    }
    out
}

/// `τ` and `ζ` for every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    pub spec: LambdaSpec,
    pub n_species: usize,
    pub tau: Vec<f64>,
    /// Row-major `n_pairs × pair_design_width`.
    pub zeta: Vec<f64>,
}

impl LambdaParams {
    /// Independence: all `τ` and `ζ` zero.
    pub fn zeros(spec: LambdaSpec, n_species: usize) -> Self {
        let pairs = n_pairs(n_species);
        Self {
            spec,
            n_species,
            tau: vec![0.0; pairs],
            zeta: vec![0.0; pairs * spec.pair_design_width()],
        }
    }

    pub fn constant(n_species: usize, tau: Vec<f64>) -> Result<Self> {
        if tau.len() != n_pairs(n_species) {
            return Err(Error::Input(format!(
                "expected {} λ entries for {n_species} species, got {}",
                n_pairs(n_species),
                tau.len()
            )));
        }
        Ok(Self {
            spec: LambdaSpec::constant(),
            n_species,
            tau,
            zeta: Vec::new(),
        })
    }

    /// `λ` value of every pair at `day` (`None` only valid for constant mode).
    pub fn values(&self, day: Option<f64>) -> Result<Vec<f64>> {
        let width = self.spec.pair_design_width();
        if width == 0 {
            return Ok(self.tau.clone());
        }
        let day = day.ok_or_else(|| {
            Error::Input("covariate-dependent Λ needs a day-of-year to be evaluated".into())
        })?;
        let mut w = vec![0.0; width];
        self.spec.fill_design(day, &mut w);
        Ok(self
            .tau
            .iter()
            .enumerate()
            .map(|(p, t)| {
                t + self.zeta[p * width..(p + 1) * width]
                    .iter()
                    .zip(&w)
                    .map(|(z, x)| z * x)
                    .sum::<f64>()
            })
            .collect())
    }

    /// Unit lower-triangular `Λ(x)`.
    pub fn build_lambda(&self, day: Option<f64>) -> Result<DMatrix<f64>> {
        let values = self.values(day)?;
        Ok(lambda_matrix(self.n_species, &values))
    }

    /// Same `τ`, `ζ` set to zero in covariate-dependent form.
    pub fn extend_to(&self, spec: LambdaSpec) -> Self {
        let mut out = Self::zeros(spec, self.n_species);
        out.tau = self.tau.clone();
        out
    }
}

/// Unit lower-triangular matrix from packed pair values.
pub fn lambda_matrix(n_species: usize, values: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n_species, n_species);
    for (p, (row, col)) in pairs(n_species).into_iter().enumerate() {
        m[(row, col)] = values[p];
    }
    m
}

/// Structure of a joint model: everything except the parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStructure {
    pub species_names: Vec<String>,
    pub bases: Vec<BernsteinBasis>,
    pub shift: HarmonicDesign,
    pub lambda: LambdaSpec,
    pub link: Link,
}

impl ModelStructure {
    pub fn n_species(&self) -> usize {
        self.species_names.len()
    }

    pub fn shift_width(&self) -> usize {
        self.shift.width_without_intercept()
    }

    /// Offset of `ϑ_j` in the packed vector; `β_j` follows it.
    pub fn marginal_offset(&self, species: usize) -> usize {
        self.bases[..species]
            .iter()
            .map(|b| b.len() + self.shift_width())
            .sum()
    }

    pub fn lambda_offset(&self) -> usize {
        self.marginal_offset(self.n_species())
    }

    pub fn n_params(&self) -> usize {
        self.lambda_offset() + n_pairs(self.n_species()) * self.lambda.params_per_pair()
    }

    /// Offset of pair `p`'s `τ` in the packed vector.
    pub fn pair_offset(&self, pair: usize) -> usize {
        self.lambda_offset() + pair * self.lambda.params_per_pair()
    }

    /// Human-readable names for every packed parameter.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_params());
        let years = self.shift.years();
        for (j, name) in self.species_names.iter().enumerate() {
            for p in 0..self.bases[j].len() {
                names.push(format!("theta[{name},{}]", p + 1));
            }
            for y in &years[1..] {
                names.push(format!("beta[{name},year{y}]"));
            }
            for k in 1..=self.shift.harmonics() {
                names.push(format!("beta[{name},sin{k}]"));
                names.push(format!("beta[{name},cos{k}]"));
            }
        }
        for (row, col) in pairs(self.n_species()) {
            let pair = format!("{},{}", self.species_names[row], self.species_names[col]);
            names.push(format!("tau[{pair}]"));
            if self.lambda.mode == LambdaMode::CovariateDependent {
                for k in 1..=self.lambda.harmonics {
                    names.push(format!("zeta[{pair},sin{k}]"));
                    names.push(format!("zeta[{pair},cos{k}]"));
                }
            }
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        if self.species_names.is_empty() {
            return Err(Error::Input("model needs at least one species".into()));
        }
        if self.bases.len() != self.species_names.len() {
            return Err(Error::Input("one Bernstein basis per species is required".into()));
        }
        Ok(())
    }
}

/// A joint multi-species count transformation model with parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel {
    pub structure: ModelStructure,
    pub marginals: Vec<MarginalParams>,
    pub lambda: LambdaParams,
}

impl JointModel {
    pub fn new(
        structure: ModelStructure,
        marginals: Vec<MarginalParams>,
        lambda: LambdaParams,
    ) -> Result<Self> {
        structure.validate()?;
        let j = structure.n_species();
        if marginals.len() != j {
            return Err(Error::Input(format!("expected {j} marginal parameter sets")));
        }
        for (s, m) in marginals.iter().enumerate() {
            if m.theta.len() != structure.bases[s].len() || m.beta.len() != structure.shift_width() {
                return Err(Error::Input(format!(
                    "species {s}: expected {} Bernstein and {} shift coefficients",
                    structure.bases[s].len(),
                    structure.shift_width()
                )));
            }
        }
        if lambda.n_species != j || lambda.spec != structure.lambda {
            return Err(Error::Input("Λ parameters do not match the model structure".into()));
        }
        if lambda.tau.len() != n_pairs(j) || lambda.zeta.len() != n_pairs(j) * lambda.spec.pair_design_width() {
            return Err(Error::Input("Λ parameter vector has the wrong length".into()));
        }
        Ok(Self {
            structure,
            marginals,
            lambda,
        })
    }

    /// Build a model from a packed parameter vector.
    pub fn from_packed(structure: ModelStructure, theta: &[f64]) -> Result<Self> {
        structure.validate()?;
        if theta.len() != structure.n_params() {
            return Err(Error::Input(format!(
                "parameter vector has length {}, the model needs {}",
                theta.len(),
                structure.n_params()
            )));
        }
        let q = structure.shift_width();
        let mut marginals = Vec::with_capacity(structure.n_species());
        for (s, basis) in structure.bases.iter().enumerate() {
            let off = structure.marginal_offset(s);
            let p = basis.len();
            marginals.push(MarginalParams {
                theta: theta[off..off + p].to_vec(),
                beta: theta[off + p..off + p + q].to_vec(),
            });
        }
        let j = structure.n_species();
        let width = structure.lambda.pair_design_width();
        let mut lambda = LambdaParams::zeros(structure.lambda, j);
        for p in 0..n_pairs(j) {
            let off = structure.pair_offset(p);
            lambda.tau[p] = theta[off];
            lambda.zeta[p * width..(p + 1) * width].copy_from_slice(&theta[off + 1..off + 1 + width]);
        }
        Ok(Self {
            structure,
            marginals,
            lambda,
        })
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.structure.n_params());
        for m in &self.marginals {
            out.extend_from_slice(&m.theta);
            out.extend_from_slice(&m.beta);
        }
        let width = self.lambda.spec.pair_design_width();
        for p in 0..self.lambda.tau.len() {
            out.push(self.lambda.tau[p]);
            out.extend_from_slice(&self.lambda.zeta[p * width..(p + 1) * width]);
        }
        out
    }

    pub fn n_species(&self) -> usize {
        self.structure.n_species()
    }

    pub fn species_names(&self) -> &[String] {
        &self.structure.species_names
    }

    pub fn link(&self) -> Link {
        self.structure.link
    }

    fn check_species(&self, species: usize) -> Result<()> {
        if species >= self.n_species() {
            return Err(Error::Input(format!(
                "unknown species index {species} (model has {})",
                self.n_species()
            )));
        }
        Ok(())
    }

    pub fn species_index(&self, name: &str) -> Result<usize> {
        self.structure
            .species_names
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Input(format!("unknown species {name:?}")))
    }

    /// Shift term `η_j(x)`.
    pub fn shift(&self, species: usize, x: Covariates) -> Result<f64> {
        self.check_species(species)?;
        let row = self.structure.shift.shift_row_without_intercept(x.year, x.day)?;
        Ok(row
            .iter()
            .zip(&self.marginals[species].beta)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// `α_j(⌊y⌋)`; `-∞` for `y < 0`.
    pub fn transform(&self, species: usize, y: f64) -> Result<f64> {
        self.check_species(species)?;
        let eval = self.structure.bases[species].eval(y)?;
        Ok(eval.dot(&self.marginals[species].theta))
    }

    /// `P(Y_j ≤ y | x) = Φ(α_j(⌊y⌋) − η_j(x))`.
    pub fn marginal_cdf(&self, species: usize, y: f64, x: Covariates) -> Result<f64> {
        self.link().ensure_supported()?;
        let eta = self.shift(species, x)?;
        let alpha = self.transform(species, y)?;
        Ok(normal::cdf(alpha - eta))
    }

    /// `P(Y_j = y | x)` for a nonnegative integer `y`.
    pub fn marginal_pmf(&self, species: usize, y: f64, x: Covariates) -> Result<f64> {
        if y < 0.0 || y.fract() != 0.0 || !y.is_finite() {
            return Err(Error::Input(format!("pmf is defined for nonnegative integers, got {y}")));
        }
        let upper = self.marginal_cdf(species, y, x)?;
        let lower = self.marginal_cdf(species, y - 1.0, x)?;
        Ok((upper - lower).max(0.0))
    }

    /// Probability above the top of the Bernstein support, which the model
    /// folds into the last category.
    pub fn tail_mass(&self, species: usize, x: Covariates) -> Result<f64> {
        self.check_species(species)?;
        let (_, hi) = self.structure.bases[species].support();
        let eta = self.shift(species, x)?;
        let alpha = self.transform(species, hi)?;
        Ok(normal::sf(alpha - eta))
    }

    /// Probabilistic index `P(Y ⪯ Y_ref) = Φ((η(x) − η(x_ref)) / √2)`.
    pub fn marginal_auc(&self, species: usize, x: Covariates, x_ref: Covariates) -> Result<f64> {
        self.link().ensure_supported()?;
        let diff = self.shift(species, x)? - self.shift(species, x_ref)?;
        Ok(normal::cdf(diff / SQRT_2))
    }

    /// `Λ(x)`; `day` must be given for covariate-dependent models.
    pub fn build_lambda(&self, day: Option<u16>) -> Result<DMatrix<f64>> {
        self.lambda.build_lambda(day.map(f64::from))
    }

    /// Smallest count `y` with `P(Y_j ≤ y | x) ≥ p`, capped at the support.
    pub fn marginal_quantile(&self, species: usize, p: f64, x: Covariates) -> Result<u32> {
        self.link().ensure_supported()?;
        let eta = self.shift(species, x)?;
        let basis = &self.structure.bases[species];
        let theta = &self.marginals[species].theta;
        let hi = basis.support().1 as u32;
        let target = normal::quantile(p) + eta;
        Ok(first_count_reaching(basis, theta, hi, target))
    }

    /// Replace `τ`/`ζ` mode, keeping `τ` and setting new `ζ` to zero.
    pub fn with_lambda_spec(&self, spec: LambdaSpec) -> Self {
        let mut out = self.clone();
        out.structure.lambda = spec;
        out.lambda = self.lambda.extend_to(spec);
        out
    }

    /// All marginals monotone, ready for evaluation.
    pub fn check_monotone(&self) -> Result<()> {
        for (s, m) in self.marginals.iter().enumerate() {
            if !m.is_monotone() {
                return Err(Error::Parameter(format!(
                    "Bernstein coefficients of species {s} ({}) are not non-decreasing",
                    self.structure.species_names[s]
                )));
            }
        }
        Ok(())
    }
}

/// Smallest integer `y ∈ [0, hi]` with `α(y) ≥ target`, or `hi` if none.
pub(crate) fn first_count_reaching(basis: &BernsteinBasis, theta: &[f64], hi: u32, target: f64) -> u32 {
    let alpha = |y: u32| match basis.eval(f64::from(y)) {
        Ok(BasisEval::Row { values, .. }) => values.iter().zip(theta).map(|(a, b)| a * b).sum(),
        _ => f64::NEG_INFINITY,
    };
    if alpha(0) >= target {
        return 0;
    }
    let (mut lo, mut up) = (0u32, hi);
    if alpha(up) < target {
        return hi;
    }
    // invariant: alpha(lo) < target <= alpha(up)
    while up - lo > 1 {
        let mid = lo + (up - lo) / 2;
        if alpha(mid) >= target {
            up = mid;
        } else {
            lo = mid;
        }
    }
    up
}
