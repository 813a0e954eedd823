//! Dependence summaries derived from `Λ`: covariance, latent correlations,
//! Spearman rank correlations, day-of-year trajectories and the
//! species-ordering sensitivity check.

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::estimation::{fit, FitConfig, FitResult, ModelSpec};
use crate::likelihood::LikelihoodKind;
use crate::model::{n_pairs, pair_index, pairs, JointModel, LambdaMode};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Monte Carlo draws used for derived-quantity intervals.
pub const DEFAULT_DRAWS: usize = 10_000;
/// Default seed for Monte Carlo intervals.
pub const DEFAULT_CI_SEED: u64 = 20_240_611;
/// Default flag threshold on the ρ^(S) spread across orderings.
pub const DEFAULT_ORDER_THRESHOLD: f64 = 0.05;

/// `Σ = Λ⁻¹Λ⁻ᵀ` for a unit lower-triangular `Λ`.
pub fn sigma_from_lambda(lambda: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let j = lambda.nrows();
    if lambda.ncols() != j {
        return Err(Error::Input("Λ must be square".into()));
    }
    for r in 0..j {
        if lambda[(r, r)] != 1.0 {
            return Err(Error::Input(format!("Λ[{r},{r}] is {}, expected 1", lambda[(r, r)])));
        }
        for c in 0..j {
            if !lambda[(r, c)].is_finite() {
                return Err(Error::Input(format!("Λ[{r},{c}] is not finite")));
            }
            if c > r && lambda[(r, c)] != 0.0 {
                return Err(Error::Input("Λ must be lower triangular".into()));
            }
        }
    }
    let inv = lambda
        .solve_lower_triangular(&DMatrix::identity(j, j))
        .ok_or_else(|| Error::Input("Λ is singular".into()))?;
    let sigma = &inv * inv.transpose();
    let t = sigma.transpose();
    Ok((sigma + t) * 0.5)
}

/// `diag(Σ)^{-1/2} Σ diag(Σ)^{-1/2}`.
pub fn corr_from_sigma(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let j = sigma.nrows();
    if sigma.ncols() != j || sigma.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("Σ is not positive definite".into()));
    }
    let d: Vec<f64> = (0..j).map(|i| sigma[(i, i)].sqrt()).collect();
    Ok(DMatrix::from_fn(j, j, |r, c| {
        if r == c {
            1.0
        } else {
            sigma[(r, c)] / (d[r] * d[c])
        }
    }))
}

/// `(6/π)·asin(ρ/2)`.
pub fn spearman_from_corr(rho: f64) -> Result<f64> {
    if !(rho.abs() <= 1.0) {
        return Err(Error::Input(format!("correlation {rho} is outside [-1, 1]")));
    }
    Ok(6.0 / PI * (rho / 2.0).asin())
}

fn spearman_unchecked(rho: f64) -> f64 {
    6.0 / PI * (rho.clamp(-1.0, 1.0) / 2.0).asin()
}

/// Latent correlations of every pair (packed order) from packed `λ` values,
/// by forward substitution; allocation-light for Monte Carlo loops.
pub fn pair_correlations(n_species: usize, lambda: &[f64]) -> Vec<f64> {
    let j = n_species;
    // rows of L = Λ⁻¹, unit lower triangular
    let mut inv = vec![0.0; j * j];
    for r in 0..j {
        inv[r * j + r] = 1.0;
        for c in 0..r {
            let mut v = 0.0;
            for k in c..r {
                v -= lambda[pair_index(r, k)] * inv[k * j + c];
            }
            inv[r * j + c] = v;
        }
    }
    let cov = |a: usize, b: usize| -> f64 { (0..=a.min(b)).map(|k| inv[a * j + k] * inv[b * j + k]).sum() };
    pairs(j)
        .into_iter()
        .map(|(r, c)| cov(r, c) / (cov(r, r) * cov(c, c)).sqrt())
        .collect()
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn interval(mut values: Vec<f64>, level: f64) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let a = 0.5 * (1.0 - level);
    (quantile_sorted(&values, a), quantile_sorted(&values, 1.0 - a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInterval {
    pub row: usize,
    pub col: usize,
    pub rho: (f64, f64),
    pub spearman: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceSummary {
    pub lambda: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub corr: DMatrix<f64>,
    pub spearman: DMatrix<f64>,
    pub evaluated_at: Option<u16>,
    pub ci_level: Option<f64>,
    pub intervals: Vec<PairInterval>,
}

impl DependenceSummary {
    /// Point summaries of a model at `day` (required for covariate-dependent Λ).
    pub fn from_model(model: &JointModel, day: Option<u16>) -> Result<Self> {
        let lambda = model.build_lambda(day)?;
        let sigma = sigma_from_lambda(&lambda)?;
        let corr = corr_from_sigma(&sigma)?;
        let spearman = corr.map(spearman_unchecked);
        Ok(Self {
            lambda,
            sigma,
            corr,
            spearman,
            evaluated_at: day,
            ci_level: None,
            intervals: Vec::new(),
        })
    }

    /// Point summaries plus Monte Carlo intervals from the fit's covariance.
    pub fn from_fit(fit: &FitResult, day: Option<u16>, level: f64, draws: usize, seed: u64) -> Result<Self> {
        let mut out = Self::from_model(&fit.model, day)?;
        let sampler = LambdaSampler::new(fit, draws, seed)?;
        let j = fit.model.n_species();
        let per_draw: Vec<Vec<f64>> = sampler.correlations_at(day.map(f64::from));
        out.intervals = pairs(j)
            .into_iter()
            .enumerate()
            .map(|(p, (row, col))| {
                let rho: Vec<f64> = per_draw.iter().map(|d| d[p]).collect();
                let spearman = rho.iter().map(|&r| spearman_unchecked(r)).collect();
                PairInterval {
                    row,
                    col,
                    rho: interval(rho, level),
                    spearman: interval(spearman, level),
                }
            })
            .collect();
        out.ci_level = Some(level);
        Ok(out)
    }

    pub fn spearman_pairs(&self) -> Vec<f64> {
        pairs(self.lambda.nrows())
            .into_iter()
            .map(|(r, c)| self.spearman[(r, c)])
            .collect()
    }
}

/// Draws of the `τ`/`ζ` block from `N(θ̂_λ, V_λ)`.
struct LambdaSampler {
    template: JointModel,
    draws: Vec<Vec<f64>>,
}

impl LambdaSampler {
    fn new(fit: &FitResult, draws: usize, seed: u64) -> Result<Self> {
        let (mean, vcov) = fit.lambda_block();
        let vcov = vcov.ok_or_else(|| Error::NotPositiveDefinite("fit has no covariance matrix".into()))?;
        let chol = vcov.clone().cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite(format!(
                "covariance of the Λ parameters is not positive definite (hessian_positive_definite = {})",
                fit.hessian_positive_definite
            ))
        })?;
        let l = chol.l();
        let k = mean.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = vec![0.0; k];
        let draws = (0..draws)
            .map(|_| {
                z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                (0..k)
                    .map(|r| mean[r] + (0..=r).map(|c| l[(r, c)] * z[c]).sum::<f64>())
                    .collect()
            })
            .collect();
        Ok(Self {
            template: fit.model.clone(),
            draws,
        })
    }

    /// Pair correlations (packed order) for every draw at `day`.
    fn correlations_at(&self, day: Option<f64>) -> Vec<Vec<f64>> {
        let j = self.template.n_species();
        let spec = self.template.structure.lambda;
        let width = spec.pair_design_width();
        let mut w = vec![0.0; width];
        if let Some(d) = day {
            spec.fill_design(d, &mut w);
        }
        self.draws
            .iter()
            .map(|draw| {
                let values: Vec<f64> = (0..n_pairs(j))
                    .map(|p| {
                        let off = p * (1 + width);
                        draw[off] + draw[off + 1..off + 1 + width].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                pair_correlations(j, &values)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub day: u16,
    pub spearman: f64,
    pub lower: f64,
    pub upper: f64,
}

/// ρ^(S) of species pair `(row, col)` with `row > col` for each day, with
/// Monte Carlo intervals.
pub fn trajectory(
    fit: &FitResult,
    pair: (usize, usize),
    days: &[u16],
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<TrajectoryPoint>> {
    let j = fit.model.n_species();
    let (row, col) = pair;
    if row >= j || col >= row {
        return Err(Error::Input(format!(
            "pair ({row}, {col}) is not a lower-triangular pair of {j} species"
        )));
    }
    if let Some(&bad) = days.iter().find(|&&d| d == 0 || d > crate::design::DAYS_PER_YEAR) {
        return Err(Error::Input(format!("day {bad} is outside 1..=365")));
    }
    let p = pair_index(row, col);
    let sampler = LambdaSampler::new(fit, draws, seed)?;
    days.par_iter()
        .map(|&day| {
            let values = fit.model.lambda.values(Some(f64::from(day)))?;
            let point = spearman_unchecked(pair_correlations(j, &values)[p]);
            let draws: Vec<f64> = sampler
                .correlations_at(Some(f64::from(day)))
                .iter()
                .map(|c| spearman_unchecked(c[p]))
                .collect();
            let (lower, upper) = interval(draws, level);
            Ok(TrajectoryPoint {
                day,
                spearman: point,
                lower,
                upper,
            })
        })
        .collect()
}

/// Spearman correlation with average ranks for ties.
pub fn empirical_spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Input("need two equally long samples of length ≥ 2".into()));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateData("a sample is constant".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// 1-based ranks, ties receiving their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    /// Flag orderings whose ρ^(S) differ by more than this.
    pub threshold: f64,
    /// Allow more than four species (J! fits).
    pub allow_large: bool,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_ORDER_THRESHOLD,
            allow_large: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingFit {
    /// Column order used for the fit (indices into the input table).
    pub order: Vec<usize>,
    pub loglik: Option<f64>,
    pub converged: Option<bool>,
    /// `spearman[d][p]`: pair `p` (packed, original species indices) at the
    /// `d`-th evaluation day.
    pub spearman: Vec<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    /// Days at which covariate-dependent summaries were compared; empty for
    /// constant Λ.
    pub days: Vec<u16>,
    pub fits: Vec<OrderingFit>,
    /// Largest spread of any pair's ρ^(S) across successful orderings.
    pub max_discrepancy: f64,
    /// Ordering with the largest log-likelihood.
    pub best_order: Option<Vec<usize>>,
    pub threshold: f64,
    pub flagged: bool,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

fn permute_spec(spec: &ModelSpec, order: &[usize]) -> ModelSpec {
    let mut out = spec.clone();
    if out.bernstein_coefficients.len() == order.len() {
        out.bernstein_coefficients = order.iter().map(|&k| spec.bernstein_coefficients[k]).collect();
    }
    if let Some(s) = &spec.support {
        if s.len() == order.len() {
            out.support = Some(order.iter().map(|&k| s[k]).collect());
        }
    }
    out
}

/// Fit every species ordering and compare the ρ^(S) of each original pair.
pub fn permutation_sensitivity(
    data: &ObservationTable,
    spec: &ModelSpec,
    kind: LikelihoodKind,
    fit_cfg: &FitConfig,
    cfg: &PermutationConfig,
) -> Result<PermutationReport> {
    let j = data.n_species();
    if j > 4 && !cfg.allow_large {
        return Err(Error::Input(format!(
            "{j} species means {} orderings; set allow_large to run it",
            (1..=j).product::<usize>()
        )));
    }
    let days: Vec<u16> = match spec.lambda.mode {
        LambdaMode::Constant => Vec::new(),
        LambdaMode::CovariateDependent => (1..=crate::design::DAYS_PER_YEAR).collect(),
    };
    let eval_days: Vec<Option<u16>> = if days.is_empty() {
        vec![None]
    } else {
        days.iter().map(|&d| Some(d)).collect()
    };
    let fit_cfg = FitConfig {
        compute_vcov: false,
        ..*fit_cfg
    };
    let fits: Vec<OrderingFit> = permutations(j)
        .into_par_iter()
        .map(|order| {
            let outcome = data
                .reorder_species(&order)
                .and_then(|d| fit(&d, &permute_spec(spec, &order), kind, &fit_cfg))
                .and_then(|f| {
                    let spearman = eval_days
                        .iter()
                        .map(|&day| {
                            let s = DependenceSummary::from_model(&f.model, day)?.spearman;
                            // position of original species k in this ordering
                            let mut pos = vec![0; j];
                            for (new, &old) in order.iter().enumerate() {
                                pos[old] = new;
                            }
                            Ok(pairs(j).into_iter().map(|(r, c)| s[(pos[r], pos[c])]).collect())
                        })
                        .collect::<Result<Vec<Vec<f64>>>>()?;
                    Ok((f, spearman))
                });
            match outcome {
                Ok((f, spearman)) => OrderingFit {
                    order,
                    loglik: Some(f.loglik),
                    converged: Some(f.converged),
                    spearman,
                    error: None,
                },
                Err(e) => OrderingFit {
                    order,
                    loglik: None,
                    converged: None,
                    spearman: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<&OrderingFit> = fits.iter().filter(|f| f.error.is_none()).collect();
    let mut max_discrepancy: f64 = 0.0;
    for d in 0..eval_days.len() {
        for p in 0..n_pairs(j) {
            let values = ok.iter().map(|f| f.spearman[d][p]);
            let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if ok.len() > 1 {
                max_discrepancy = max_discrepancy.max(hi - lo);
            }
        }
    }
    let best_order = ok
        .iter()
        .max_by(|a, b| a.loglik.unwrap().total_cmp(&b.loglik.unwrap()))
        .map(|f| f.order.clone());
    Ok(PermutationReport {
        days,
        flagged: max_discrepancy > cfg.threshold,
        max_discrepancy,
        best_order,
        threshold: cfg.threshold,
        fits,
    })
}
