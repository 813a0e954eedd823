//! Joint maximum-likelihood fitting, observed-information variances, Wald
//! intervals and likelihood-ratio tests.
//!
//! Optimization runs in an unconstrained space where each species' Bernstein
//! coefficients are `ϑ_1 = γ_1`, `ϑ_p = ϑ_{p−1} + exp(γ_p)`, so every iterate
//! is strictly monotone. The objective is `−ℓ/N`.

use crate::data::ObservationTable;
use crate::design::{BernsteinBasis, HarmonicDesign, DEFAULT_BERNSTEIN_COEFFICIENTS};
use crate::error::{Error, Result};
use crate::likelihood::{LikelihoodKind, Prepared};
use crate::model::{JointModel, LambdaParams, LambdaSpec, Link, MarginalParams, ModelStructure};
use crate::normal;
use crate::optimize::{minimize, Minimum, OptimizerConfig, StopReason};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Smallest Bernstein increment used when mapping a start point to `γ`.
const MIN_INCREMENT: f64 = 1e-8;

/// Everything about a model except its data and parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Bernstein coefficients per species; a single entry applies to all.
    pub bernstein_coefficients: Vec<usize>,
    /// Sinusoid frequencies in the shift term.
    pub harmonics: usize,
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub link: Link,
    /// Upper end of each species' Bernstein support. Defaults to the largest
    /// observed count.
    #[serde(default)]
    pub support: Option<Vec<f64>>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            bernstein_coefficients: vec![DEFAULT_BERNSTEIN_COEFFICIENTS],
            harmonics: 3,
            lambda: LambdaSpec::constant(),
            link: Link::Normal,
            support: None,
        }
    }
}

impl ModelSpec {
    pub fn with_lambda(mut self, lambda: LambdaSpec) -> Self {
        self.lambda = lambda;
        self
    }

    fn per_species<T: Copy>(values: &[T], j: usize, what: &str) -> Result<Vec<T>> {
        match values.len() {
            1 => Ok(vec![values[0]; j]),
            n if n == j => Ok(values.to_vec()),
            n => Err(Error::Input(format!("{what}: expected 1 or {j} entries, got {n}"))),
        }
    }

    /// Model structure for `data`: supports from the observed maxima unless
    /// overridden, years from the data.
    pub fn structure(&self, data: &ObservationTable) -> Result<ModelStructure> {
        let j = data.n_species();
        if data.n_rows() == 0 {
            return Err(Error::DegenerateData("no observations".into()));
        }
        let orders = Self::per_species(&self.bernstein_coefficients, j, "bernstein_coefficients")?;
        let maxima = data.max_counts();
        let support: Vec<f64> = match &self.support {
            Some(s) => Self::per_species(s, j, "support")?,
            None => maxima.iter().map(|&m| f64::from(m)).collect(),
        };
        let mut bases = Vec::with_capacity(j);
        for s in 0..j {
            let col = data.column(s);
            if col.iter().all(|&v| v == col[0]) {
                return Err(Error::DegenerateData(format!(
                    "species '{}' is constant ({}) in every row",
                    data.species_names()[s],
                    col[0]
                )));
            }
            bases.push(BernsteinBasis::new(orders[s], support[s])?);
        }
        Ok(ModelStructure {
            species_names: data.species_names().to_vec(),
            bases,
            shift: HarmonicDesign::new(self.harmonics, data.years())?,
            lambda: self.lambda,
            link: self.link,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub optimizer: OptimizerConfig,
    /// Evaluate the observed information and its inverse.
    pub compute_vcov: bool,
    /// Relative finite-difference step for the Hessian.
    pub hessian_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            compute_vcov: true,
            hessian_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: JointModel,
    pub theta_hat: Vec<f64>,
    pub loglik: f64,
    pub initial_loglik: f64,
    pub n_obs: usize,
    pub likelihood_kind: LikelihoodKind,
    /// Inverse of the observed information; `None` when it is singular or
    /// was not requested.
    pub vcov: Option<DMatrix<f64>>,
    pub hessian_positive_definite: bool,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the gradient of `−ℓ/N` in the optimization space.
    pub gradient_norm_at_opt: f64,
    pub gradient_tolerance: f64,
    pub stop_reason: StopReason,
    /// Cells whose probability hit the floor at the optimum.
    pub floored: usize,
    /// Counts above a Bernstein support, clamped to its upper end.
    pub clamped: usize,
}

impl FitResult {
    pub fn n_params(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.model.structure.param_names()
    }

    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.vcov
            .as_ref()
            .map(|v| (0..v.nrows()).map(|i| v[(i, i)].max(0.0).sqrt()).collect())
    }

    /// Wald interval for parameter `index`.
    pub fn wald_ci(&self, index: usize, level: f64) -> Result<(f64, f64)> {
        wald_ci(self, index, level)
    }

    /// Estimates and covariance of the `τ`/`ζ` block.
    pub fn lambda_block(&self) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let off = self.model.structure.lambda_offset();
        let k = self.theta_hat.len() - off;
        (
            self.theta_hat[off..].to_vec(),
            self.vcov.as_ref().map(|v| v.view((off, off), (k, k)).into_owned()),
        )
    }
}

/// Map a monotone `θ` to the unconstrained `γ` space.
pub(crate) fn to_unconstrained(structure: &ModelStructure, theta: &[f64]) -> Vec<f64> {
    let mut gamma = theta.to_vec();
    for (s, basis) in structure.bases.iter().enumerate() {
        let off = structure.marginal_offset(s);
        for p in 1..basis.len() {
            gamma[off + p] = (theta[off + p] - theta[off + p - 1]).max(MIN_INCREMENT).ln();
        }
    }
    gamma
}

pub(crate) fn from_unconstrained(structure: &ModelStructure, gamma: &[f64]) -> Vec<f64> {
    let mut theta = gamma.to_vec();
    for (s, basis) in structure.bases.iter().enumerate() {
        let off = structure.marginal_offset(s);
        for p in 1..basis.len() {
            theta[off + p] = theta[off + p - 1] + gamma[off + p].exp();
        }
    }
    theta
}

/// Gradient with respect to the increments `ϑ_p − ϑ_{p−1}` (and `ϑ_0`).
fn gradient_to_increments(structure: &ModelStructure, grad: &[f64]) -> Vec<f64> {
    let mut out = grad.to_vec();
    for (s, basis) in structure.bases.iter().enumerate() {
        let off = structure.marginal_offset(s);
        // suffix sums: ϑ_q depends on increment p for every q ≥ p
        let mut tail = 0.0;
        for k in (0..basis.len()).rev() {
            tail += grad[off + k];
            out[off + k] = tail;
        }
    }
    out
}

/// Chain rule `∂f/∂γ = Jᵀ ∂f/∂θ`.
fn gradient_to_unconstrained(structure: &ModelStructure, gamma: &[f64], grad: &[f64]) -> Vec<f64> {
    let mut out = gradient_to_increments(structure, grad);
    for (inc, (o, g)) in increment_mask(structure, gamma.len()).into_iter().zip(out.iter_mut().zip(gamma)) {
        if inc {
            *o *= g.exp();
        }
    }
    out
}

/// Jacobian `∂θ/∂γ`.
fn jacobian(structure: &ModelStructure, gamma: &[f64]) -> DMatrix<f64> {
    let n = gamma.len();
    let mut jac = DMatrix::identity(n, n);
    for (s, basis) in structure.bases.iter().enumerate() {
        let off = structure.marginal_offset(s);
        let p = basis.len();
        for q in 0..p {
            for k in 0..=q {
                jac[(off + q, off + k)] = if k == 0 { 1.0 } else { gamma[off + k].exp() };
            }
        }
    }
    jac
}

struct Problem<'a> {
    structure: &'a ModelStructure,
    prepared: Prepared,
    kind: LikelihoodKind,
}

impl Problem<'_> {
    fn n(&self) -> f64 {
        self.prepared.n_obs() as f64
    }

    fn objective(&self, gamma: &[f64]) -> Option<(f64, Vec<f64>)> {
        let theta = from_unconstrained(self.structure, gamma);
        let ev = self.prepared.evaluate(self.structure, &theta, self.kind, true).ok()?;
        let grad = gradient_to_unconstrained(self.structure, gamma, ev.gradient.as_deref()?);
        let n = self.n();
        Some((-ev.value / n, grad.iter().map(|g| -g / n).collect()))
    }

    /// Gradient of `−ℓ` in θ space.
    fn neg_gradient_theta(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let ev = self.prepared.evaluate(self.structure, theta, self.kind, true)?;
        Ok(ev.gradient.unwrap().iter().map(|g| -g).collect())
    }

    fn neg_gradient_gamma(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        let theta = from_unconstrained(self.structure, gamma);
        let g = self.neg_gradient_theta(&theta)?;
        Ok(gradient_to_unconstrained(self.structure, gamma, &g))
    }
}

/// Central differences of `grad` around `x`, one column per coordinate,
/// symmetrized.
fn finite_difference_hessian<G>(grad: G, x: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = x.len();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let h = step * x[i].abs().max(1.0);
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let gp = grad(&plus)?;
            let gm = grad(&minus)?;
            Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .collect::<Result<_>>()?;
    let mut h = DMatrix::from_fn(n, n, |r, c| columns[c][r]);
    let ht = h.transpose();
    h = (h + ht) * 0.5;
    Ok(h)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Inverse and positive-definiteness flag. A non-PD matrix is inverted
/// directly (so negative variances remain visible) rather than projected.
fn invert_information(h: &DMatrix<f64>) -> (Option<DMatrix<f64>>, bool) {
    if let Some(ch) = h.clone().cholesky() {
        (Some(symmetrize(ch.inverse())), true)
    } else {
        (h.clone().try_inverse().map(symmetrize), false)
    }
}

fn observed_vcov(problem: &Problem<'_>, theta: &[f64], gamma: &[f64], step: f64) -> Result<(Option<DMatrix<f64>>, bool)> {
    match finite_difference_hessian(|t| problem.neg_gradient_theta(t), theta, step) {
        Ok(h) => Ok(invert_information(&h)),
        Err(_) => {
            // a θ-space step left the monotone region; differentiate in γ
            // instead and map back with the delta method
            let h = finite_difference_hessian(|g| problem.neg_gradient_gamma(g), gamma, step)?;
            let (v, pd) = invert_information(&h);
            let jac = jacobian(problem.structure, gamma);
            Ok((v.map(|v| symmetrize(&jac * v * jac.transpose())), pd))
        }
    }
}

/// Marks the `γ` coordinates that are log Bernstein increments.
fn increment_mask(structure: &ModelStructure, len: usize) -> Vec<bool> {
    let mut mask = vec![false; len];
    for (s, basis) in structure.bases.iter().enumerate() {
        let off = structure.marginal_offset(s);
        mask[off + 1..off + basis.len()].iter_mut().for_each(|m| *m = true);
    }
    mask
}

/// Projected Newton steps after BFGS stalled short of the gradient
/// tolerance. The steps run on the increments themselves rather than their
/// logarithms, so an increment whose optimum is zero can reach the bound
/// instead of creeping towards `γ = −∞`. Each step must decrease the
/// objective.
fn newton_polish(problem: &Problem<'_>, mut min: Minimum, cfg: &OptimizerConfig, step: f64) -> Minimum {
    const MAX_STEPS: usize = 20;
    // increments this small with a gradient pushing them down are held at the bound
    const ACTIVE: f64 = 1e-6;
    let mask = increment_mask(problem.structure, min.x.len());
    let to_gamma = |d: &[f64]| -> Vec<f64> {
        d.iter()
            .zip(&mask)
            .map(|(&v, &inc)| if inc { v.max(MIN_INCREMENT).ln() } else { v })
            .collect()
    };
    let n = problem.n();
    let increment_gradient = |d: &[f64]| -> Result<Vec<f64>> {
        let theta = from_unconstrained(problem.structure, &to_gamma(d));
        let g = problem.neg_gradient_theta(&theta)?;
        Ok(gradient_to_increments(problem.structure, &g).iter().map(|v| v / n).collect())
    };
    for _ in 0..MAX_STEPS {
        if min.gradient_norm() < cfg.gradient_tolerance {
            break;
        }
        let d: Vec<f64> = min
            .x
            .iter()
            .zip(&mask)
            .map(|(&v, &inc)| if inc { v.exp() } else { v })
            .collect();
        let Ok(grad) = increment_gradient(&d) else {
            break;
        };
        let free: Vec<usize> = (0..d.len())
            .filter(|&i| !(mask[i] && d[i] <= ACTIVE && grad[i] > 0.0))
            .collect();
        let Ok(full) = finite_difference_hessian(&increment_gradient, &d, step) else {
            break;
        };
        let h = full.select_rows(&free).select_columns(&free);
        // flat directions leave the Hessian semi-definite; shift it until it
        // factorizes
        let scale = (0..h.nrows()).fold(0.0_f64, |m, i| m.max(h[(i, i)].abs())).max(1e-12);
        let mut shift = 0.0;
        let chol = loop {
            let shifted = &h + DMatrix::identity(h.nrows(), h.nrows()) * shift;
            if let Some(c) = shifted.cholesky() {
                break Some(c);
            }
            shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
            if shift > scale {
                break None;
            }
        };
        let Some(chol) = chol else {
            break;
        };
        let reduced = chol.solve(&DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i])));
        let mut direction = vec![0.0; d.len()];
        for (k, &i) in free.iter().enumerate() {
            direction[i] = reduced[k];
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..20 {
            let moved: Vec<f64> = d.iter().zip(&direction).map(|(a, p)| a - alpha * p).collect();
            let x = to_gamma(&moved);
            if let Some((f, g)) = problem.objective(&x) {
                if f <= min.value {
                    accepted = Some((x, f, g));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((x, f, g)) = accepted else {
            break;
        };
        min.x = x;
        min.value = f;
        min.gradient = g;
        min.iterations += 1;
        if min.gradient_norm() < cfg.gradient_tolerance {
            min.stop = StopReason::GradientTolerance;
        }
    }
    min
}

/// Starting Bernstein coefficients: normal quantiles of the empirical CDF
/// at the basis knots, made strictly increasing.
fn empirical_start(basis: &BernsteinBasis, column: &[u32]) -> Vec<f64> {
    let n = column.len() as f64;
    let mut sorted = column.to_vec();
    sorted.sort_unstable();
    let (lo, hi) = basis.support();
    let p = basis.len();
    let mut theta = Vec::with_capacity(p);
    for k in 0..p {
        let knot = if p == 1 { hi } else { lo + (hi - lo) * k as f64 / (p - 1) as f64 };
        let below = sorted.partition_point(|&v| f64::from(v) <= knot.floor()) as f64;
        let f = ((below + 0.5) / (n + 1.0)).clamp(0.5 / n, 1.0 - 0.5 / n);
        let mut v = normal::quantile(f);
        if let Some(&prev) = theta.last() {
            v = v.max(prev + 0.05);
        }
        theta.push(v);
    }
    theta
}

fn univariate_start(
    data: &ObservationTable,
    structure: &ModelStructure,
    species: usize,
    cfg: &OptimizerConfig,
) -> Result<MarginalParams> {
    let column = data.select_species(&[species])?;
    let single = ModelStructure {
        species_names: vec![structure.species_names[species].clone()],
        bases: vec![structure.bases[species].clone()],
        shift: structure.shift.clone(),
        lambda: LambdaSpec::constant(),
        link: structure.link,
    };
    let start = MarginalParams {
        theta: empirical_start(&single.bases[0], &column.column(0)),
        beta: vec![0.0; single.shift_width()],
    };
    let mut theta0 = start.theta.clone();
    theta0.extend_from_slice(&start.beta);
    let problem = Problem {
        structure: &single,
        prepared: Prepared::new(&single, &column)?,
        kind: LikelihoodKind::DiscreteApprox,
    };
    let gamma0 = to_unconstrained(&single, &theta0);
    let Some(min) = minimize(|g| problem.objective(g), &gamma0, cfg) else {
        return Ok(start);
    };
    let theta = from_unconstrained(&single, &min.x);
    let p = single.bases[0].len();
    Ok(MarginalParams {
        theta: theta[..p].to_vec(),
        beta: theta[p..].to_vec(),
    })
}

fn check_kind(kind: LikelihoodKind) -> Result<()> {
    if kind == LikelihoodKind::ExactOracle {
        return Err(Error::Input(
            "fitting needs the continuous or the discrete approximation".into(),
        ));
    }
    Ok(())
}

/// Maximum-likelihood fit, starting from per-species univariate fits and
/// independence.
pub fn fit(data: &ObservationTable, spec: &ModelSpec, kind: LikelihoodKind, cfg: &FitConfig) -> Result<FitResult> {
    check_kind(kind)?;
    spec.link.ensure_supported()?;
    let structure = spec.structure(data)?;
    let marginals = (0..structure.n_species())
        .into_par_iter()
        .map(|s| univariate_start(data, &structure, s, &cfg.optimizer))
        .collect::<Result<Vec<_>>>()?;
    let lambda = LambdaParams::zeros(structure.lambda, structure.n_species());
    let start = JointModel::new(structure, marginals, lambda)?;
    run(data, &start, kind, cfg)
}

/// Fit starting from `start`, whose marginal layout must match `spec` on
/// `data`. A constant-Λ start is extended with `ζ = 0` when `spec` asks
/// for covariate-dependent Λ.
pub fn fit_from(
    data: &ObservationTable,
    spec: &ModelSpec,
    kind: LikelihoodKind,
    cfg: &FitConfig,
    start: &JointModel,
) -> Result<FitResult> {
    check_kind(kind)?;
    spec.link.ensure_supported()?;
    let structure = spec.structure(data)?;
    if start.structure.bases != structure.bases || start.structure.shift != structure.shift {
        return Err(Error::Input(
            "start model's marginal structure does not match the specification on this data".into(),
        ));
    }
    let start = if start.structure.lambda == structure.lambda {
        start.clone()
    } else if start.structure.lambda == LambdaSpec::constant() {
        start.with_lambda_spec(structure.lambda)
    } else {
        return Err(Error::Input("can only warm-start a covariate-dependent Λ from a constant one".into()));
    };
    run(data, &start, kind, cfg)
}

fn run(data: &ObservationTable, start: &JointModel, kind: LikelihoodKind, cfg: &FitConfig) -> Result<FitResult> {
    let structure = &start.structure;
    let problem = Problem {
        structure,
        prepared: Prepared::new(structure, data)?,
        kind,
    };
    let theta0 = start.pack();
    let gamma0 = to_unconstrained(structure, &theta0);
    let theta0 = from_unconstrained(structure, &gamma0);
    let initial = problem.prepared.evaluate(structure, &theta0, kind, false)?;
    let min = minimize(|g| problem.objective(g), &gamma0, &cfg.optimizer).ok_or_else(|| {
        Error::Input("objective could not be evaluated at the start point".into())
    })?;
    // the iteration cap is a hard budget; only a stall gets polished
    let min = if min.stop == StopReason::MaxIterations {
        min
    } else {
        newton_polish(&problem, min, &cfg.optimizer, cfg.hessian_step)
    };
    let theta_hat = from_unconstrained(structure, &min.x);
    let at_opt = problem.prepared.evaluate(structure, &theta_hat, kind, false)?;
    let (vcov, pd) = if cfg.compute_vcov {
        observed_vcov(&problem, &theta_hat, &min.x, cfg.hessian_step)?
    } else {
        (None, false)
    };
    let gradient_norm = min.gradient_norm();
    Ok(FitResult {
        model: JointModel::from_packed(structure.clone(), &theta_hat)?,
        theta_hat,
        loglik: at_opt.value,
        initial_loglik: initial.value,
        n_obs: data.n_rows(),
        likelihood_kind: kind,
        vcov,
        hessian_positive_definite: pd,
        iterations: min.iterations,
        converged: gradient_norm < cfg.optimizer.gradient_tolerance,
        gradient_norm_at_opt: gradient_norm,
        gradient_tolerance: cfg.optimizer.gradient_tolerance,
        stop_reason: min.stop,
        floored: at_opt.floored,
        clamped: problem.prepared.clamped,
    })
}

/// `θ̂_i ± z_{(1+level)/2} · se_i`.
pub fn wald_ci(fit: &FitResult, index: usize, level: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Input(format!("confidence level {level} is outside [0, 1)")));
    }
    let estimate = *fit
        .theta_hat
        .get(index)
        .ok_or_else(|| Error::Input(format!("parameter index {index} out of range")))?;
    let vcov = fit.vcov.as_ref().ok_or_else(|| {
        Error::NotPositiveDefinite("no variance estimate is available for this fit".into())
    })?;
    let var = vcov[(index, index)];
    if !(var >= 0.0) || !var.is_finite() {
        return Err(Error::NotPositiveDefinite(format!(
            "variance of parameter {index} is {var} (hessian_positive_definite = {})",
            fit.hessian_positive_definite
        )));
    }
    let z = normal::quantile(0.5 + 0.5 * level);
    let half = if level == 0.0 { 0.0 } else { z * var.sqrt() };
    Ok((estimate - half, estimate + half))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Set when the alternative fits worse than the null, which points at
    /// an optimizer failure.
    pub warning: Option<String>,
}

/// LR test from two log-likelihoods and the parameter-count difference.
pub fn lr_test_from_logliks(loglik_null: f64, loglik_alt: f64, df: usize) -> LrTest {
    let statistic = 2.0 * (loglik_alt - loglik_null);
    let warning = (loglik_alt < loglik_null).then(|| {
        format!("alternative log-likelihood {loglik_alt} is below the null's {loglik_null}; check convergence")
    });
    let p_value = if statistic <= 0.0 || df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64).map(|c| c.sf(statistic)).unwrap_or(f64::NAN)
    };
    LrTest {
        statistic,
        df,
        p_value,
        warning,
    }
}

/// LR test of `null` nested in `alt`.
pub fn lr_test(null: &FitResult, alt: &FitResult) -> Result<LrTest> {
    if null.likelihood_kind != alt.likelihood_kind {
        return Err(Error::Input("LR test needs fits of the same likelihood kind".into()));
    }
    if null.n_obs != alt.n_obs {
        return Err(Error::Input("LR test needs fits on the same data".into()));
    }
    if alt.n_params() <= null.n_params() {
        return Err(Error::Input("the alternative must have more parameters than the null".into()));
    }
    Ok(lr_test_from_logliks(null.loglik, alt.loglik, alt.n_params() - null.n_params()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::random_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reparameterization_round_trip_and_chain_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = random_model(&mut rng, 2, &[10.0, 30.0], vec![2002, 2003], LambdaSpec::constant());
        let s = &model.structure;
        let theta = model.pack();
        let gamma = to_unconstrained(s, &theta);
        let back = from_unconstrained(s, &gamma);
        for (a, b) in theta.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        // f(θ) = Σ c_i θ_i: compare chain rule with finite differences in γ
        let c: Vec<f64> = (0..theta.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = |g: &[f64]| -> f64 { from_unconstrained(s, g).iter().zip(&c).map(|(a, b)| a * b).sum() };
        let analytic = gradient_to_unconstrained(s, &gamma, &c);
        let jac = jacobian(s, &gamma);
        for i in 0..gamma.len() {
            let mut gp = gamma.clone();
            let mut gm = gamma.clone();
            gp[i] += 1e-6;
            gm[i] -= 1e-6;
            let fd = (f(&gp) - f(&gm)) / 2e-6;
            assert!((fd - analytic[i]).abs() < 1e-6 * fd.abs().max(1.0));
            let col: f64 = (0..gamma.len()).map(|r| jac[(r, i)] * c[r]).sum();
            assert!((col - analytic[i]).abs() < 1e-10 * col.abs().max(1.0));
        }
    }

    #[test]
    fn lr_reference_values() {
        let t = lr_test_from_logliks(-42357.4, -42246.0, 18);
        assert!((t.statistic - 222.8).abs() < 1e-6);
        assert!(t.p_value < 1e-4);
        let t = lr_test_from_logliks(-41233.2, -41038.9, 18);
        assert!((t.statistic - 388.6).abs() < 1e-6);
        assert!(t.p_value < 1e-4);
        let t = lr_test_from_logliks(-10.0, -10.0, 3);
        assert_eq!((t.statistic, t.p_value), (0.0, 1.0));
        assert!(t.warning.is_none());
        let t = lr_test_from_logliks(-10.0, -11.0, 3);
        assert!(t.warning.is_some());
    }

    #[test]
    fn empirical_start_is_increasing() {
        let basis = BernsteinBasis::new(7, 12.0).unwrap();
        let col = [0, 0, 1, 3, 3, 3, 12, 5, 0, 0];
        let t = empirical_start(&basis, &col);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }
}
