//! Sampling from joint models, the parametric bootstrap, the comparison of
//! the two likelihood approximations against the exact likelihood, and a
//! synthetic three-species dataset.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)` with
//! `set_stream(k)` selecting an independent stream for replicate `k`, so
//! results do not depend on thread scheduling.

use crate::data::{complete_cases, ObservationTable, RawRow};
use crate::dependence::{quantile_sorted, DependenceSummary};
use crate::design::{BernsteinBasis, HarmonicDesign, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::estimation::{fit, FitConfig, FitResult, ModelSpec};
use crate::exact::{per_observation_exact, IntegratorConfig, MAX_SPECIES};
use crate::likelihood::{self, LikelihoodKind};
use crate::model::{first_count_reaching, pair_index, Covariates, JointModel, LambdaParams, LambdaSpec, Link, MarginalParams, ModelStructure};
use crate::normal;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// RNG for stream `stream` of `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw of `Y | x`. Returns the counts and how many species hit the top
/// of their support without reaching the sampled latent value.
pub fn sample_counts<R: Rng + ?Sized>(model: &JointModel, x: Covariates, rng: &mut R) -> Result<(Vec<u32>, usize)> {
    model.link().ensure_supported()?;
    let j = model.n_species();
    let lambda = model.lambda.values(Some(f64::from(x.day)))?;
    // Z̃ = Λ⁻¹ z by forward substitution
    let mut latent = vec![0.0; j];
    for s in 0..j {
        let z: f64 = StandardNormal.sample(rng);
        latent[s] = z - (0..s).map(|k| lambda[pair_index(s, k)] * latent[k]).sum::<f64>();
    }
    let mut counts = Vec::with_capacity(j);
    let mut truncated = 0;
    for (s, z) in latent.iter().enumerate() {
        let basis = &model.structure.bases[s];
        let theta = &model.marginals[s].theta;
        let hi = basis.support().1.floor() as u32;
        let target = z + model.shift(s, x)?;
        let y = first_count_reaching(basis, theta, hi, target);
        if y == hi && basis.value(theta, f64::from(hi)) < target {
            truncated += 1;
        }
        counts.push(y);
    }
    Ok((counts, truncated))
}

/// A dataset drawn at `covariates`, with the truncation count.
pub fn simulate_table<R: Rng + ?Sized>(
    model: &JointModel,
    covariates: &[Covariates],
    rng: &mut R,
) -> Result<(ObservationTable, usize)> {
    let mut counts = Vec::with_capacity(covariates.len() * model.n_species());
    let mut truncated = 0;
    for &x in covariates {
        let (y, t) = sample_counts(model, x, rng)?;
        counts.extend(y);
        truncated += t;
    }
    let table = ObservationTable::new(model.species_names().to_vec(), covariates.to_vec(), counts)?;
    Ok((table, truncated))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_replicates: usize,
    pub seed: u64,
    pub truth: JointModel,
    pub covariate_schedule: Vec<Covariates>,
}

impl SimulationConfig {
    /// Replicate `k` on its own RNG stream.
    pub fn replicate(&self, k: usize) -> Result<(ObservationTable, usize)> {
        simulate_table(&self.truth, &self.covariate_schedule, &mut rng_for(self.seed, k as u64))
    }

    pub fn replicates(&self) -> Result<Vec<(ObservationTable, usize)>> {
        (0..self.n_replicates).into_par_iter().map(|k| self.replicate(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_replicates: usize,
    pub seed: u64,
    pub fit: FitConfig,
    /// Days at which covariate-dependent ρ^(S) are recorded. Ignored for
    /// constant Λ.
    pub days: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReplicate {
    pub index: usize,
    pub loglik: Option<f64>,
    pub converged: Option<bool>,
    pub truncated: usize,
    /// `spearman[d][p]` for evaluation day `d` and packed pair `p`.
    pub spearman: Vec<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    /// Evaluation days; `[None]` for constant Λ.
    pub days: Vec<Option<u16>>,
    pub replicates: Vec<BootstrapReplicate>,
    pub probabilities: Vec<f64>,
    /// `quantiles[d][p][q]` over successful replicates.
    pub quantiles: Vec<Vec<Vec<f64>>>,
}

const SUMMARY_PROBABILITIES: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];

/// Simulate from `fitted` at `covariates`, refit with `spec`, and record
/// ρ^(S) per replicate.
pub fn parametric_bootstrap(
    fitted: &FitResult,
    covariates: &[Covariates],
    spec: &ModelSpec,
    cfg: &BootstrapConfig,
) -> Result<BootstrapReport> {
    let truth = &fitted.model;
    let days: Vec<Option<u16>> = if truth.structure.lambda.pair_design_width() == 0 {
        vec![None]
    } else if cfg.days.is_empty() {
        return Err(Error::Input("covariate-dependent Λ needs evaluation days".into()));
    } else {
        cfg.days.iter().map(|&d| Some(d)).collect()
    };
    let fit_cfg = FitConfig {
        compute_vcov: false,
        ..cfg.fit
    };
    let replicates: Vec<BootstrapReplicate> = (0..cfg.n_replicates)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(cfg.seed, k as u64);
            let outcome = simulate_table(truth, covariates, &mut rng).and_then(|(data, truncated)| {
                let f = fit(&data, spec, fitted.likelihood_kind, &fit_cfg)?;
                let spearman = days
                    .iter()
                    .map(|&d| Ok(DependenceSummary::from_model(&f.model, d)?.spearman_pairs()))
                    .collect::<Result<Vec<_>>>()?;
                Ok((f, truncated, spearman))
            });
            match outcome {
                Ok((f, truncated, spearman)) => BootstrapReplicate {
                    index: k,
                    loglik: Some(f.loglik),
                    converged: Some(f.converged),
                    truncated,
                    spearman,
                    error: None,
                },
                Err(e) => BootstrapReplicate {
                    index: k,
                    loglik: None,
                    converged: None,
                    truncated: 0,
                    spearman: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let n_pairs = crate::model::n_pairs(truth.n_species());
    let quantiles = (0..days.len())
        .map(|d| {
            (0..n_pairs)
                .map(|p| {
                    let mut v: Vec<f64> = replicates
                        .iter()
                        .filter(|r| r.error.is_none())
                        .map(|r| r.spearman[d][p])
                        .collect();
                    v.sort_by(f64::total_cmp);
                    SUMMARY_PROBABILITIES.iter().map(|&q| quantile_sorted(&v, q)).collect()
                })
                .collect()
        })
        .collect();
    Ok(BootstrapReport {
        days,
        replicates,
        probabilities: SUMMARY_PROBABILITIES.to_vec(),
        quantiles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub kind: LikelihoodKind,
    pub sample: usize,
    pub approx: Option<f64>,
    pub exact: Option<f64>,
    pub error: Option<String>,
}

impl ScatterRow {
    pub fn abs_difference(&self) -> Option<f64> {
        Some((self.approx? - self.exact?).abs())
    }
}

/// For each fitted model, draw `n_samples` datasets at `covariates` and
/// evaluate the matching approximate and the exact log-likelihood at the
/// generating parameters.
pub fn compare_approximations(
    fit_cont: &FitResult,
    fit_disc: &FitResult,
    covariates: &[Covariates],
    n_samples: usize,
    seed: u64,
    integrator: &IntegratorConfig,
) -> Result<Vec<ScatterRow>> {
    if fit_cont.likelihood_kind != LikelihoodKind::ContinuousApprox
        || fit_disc.likelihood_kind != LikelihoodKind::DiscreteApprox
    {
        return Err(Error::Input("expected a continuous and a discrete fit, in that order".into()));
    }
    if fit_cont.model.n_species() > MAX_SPECIES {
        return Err(Error::Input(format!(
            "the exact likelihood is limited to {MAX_SPECIES} species"
        )));
    }
    let jobs: Vec<(usize, &FitResult, usize)> = [fit_cont, fit_disc]
        .into_iter()
        .enumerate()
        .flat_map(|(m, f)| (0..n_samples).map(move |s| (m, f, s)))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(m, f, s)| {
            let mut rng = rng_for(seed, (m * n_samples + s) as u64);
            let kind = f.likelihood_kind;
            let row = |approx, exact, error| ScatterRow {
                kind,
                sample: s,
                approx,
                exact,
                error,
            };
            let data = match simulate_table(&f.model, covariates, &mut rng) {
                Ok((d, _)) => d,
                Err(e) => return row(None, None, Some(e.to_string())),
            };
            let approx = likelihood::evaluate(&f.model, &data, kind).map(|e| e.value);
            let exact = per_observation_exact(&f.model, &data, integrator).map(|v| v.iter().sum::<f64>());
            let error = match (&approx, &exact) {
                (Err(e), _) | (_, Err(e)) => Some(e.to_string()),
                _ => None,
            };
            row(approx.ok(), exact.ok(), error)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    /// Mann–Whitney `U` of the first sample.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

/// One-sided Mann–Whitney test of `H1: x` stochastically smaller than `y`,
/// normal approximation with tie and continuity corrections.
pub fn mann_whitney_less(x: &[f64], y: &[f64]) -> Result<RankTest> {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    if x.is_empty() || y.is_empty() {
        return Err(Error::Input("rank test needs two non-empty samples".into()));
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = crate::dependence::average_ranks(&pooled);
    let r1: f64 = ranks[..x.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut k = i + 1;
        while k < sorted.len() && sorted[k] == sorted[i] {
            k += 1;
        }
        let t = (k - i) as f64;
        ties += t * t * t - t;
        i = k;
    }
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(RankTest { u, z: 0.0, p_value: 1.0 });
    }
    let z = (u - mean + 0.5) / var.sqrt();
    Ok(RankTest {
        u,
        z,
        p_value: normal::cdf(z),
    })
}

/// Species in the synthetic dataset.
pub const SYNTH_SPECIES: [&str; 3] = ["species_a", "species_b", "species_c"];
/// First calendar year of the synthetic dataset.
pub const SYNTH_FIRST_YEAR: i32 = 2002;
/// Upper end of the generating Bernstein supports.
pub const SYNTH_SUPPORT: f64 = 200.0;

/// Generating model of [`synth_birds`]: harmonic seasonal shifts (three
/// frequencies), smooth year effects, and every `λ(d) = −0.25 − 0.25 cos(2πd/365)`,
/// so latent correlations peak in winter and vanish in midsummer.
pub fn synth_birds_truth(n_years: usize) -> Result<JointModel> {
    if n_years == 0 {
        return Err(Error::Input("n_years must be at least 1".into()));
    }
    let years: Vec<i32> = (0..n_years as i32).map(|k| SYNTH_FIRST_YEAR + k).collect();
    let lambda_spec = LambdaSpec::covariate_dependent(3);
    let structure = ModelStructure {
        species_names: SYNTH_SPECIES.iter().map(|s| s.to_string()).collect(),
        bases: (0..3)
            .map(|_| BernsteinBasis::new(7, SYNTH_SUPPORT))
            .collect::<Result<_>>()?,
        shift: HarmonicDesign::new(3, years)?,
        lambda: lambda_spec,
        link: Link::Normal,
    };
    // (ϑ, [sin1, cos1, sin2, cos2, sin3, cos3], year-effect phase)
    let species: [([f64; 7], [f64; 6], f64); 3] = [
        ([-0.6, 1.4, 2.3, 3.0, 3.6, 4.2, 4.9], [0.3, 0.9, 0.1, 0.2, 0.0, 0.05], 0.0),
        ([-0.2, 1.6, 2.6, 3.2, 3.8, 4.4, 5.0], [-0.4, 0.6, 0.15, -0.1, 0.05, 0.0], 1.7),
        ([0.1, 1.8, 2.7, 3.3, 3.9, 4.5, 5.1], [0.2, -0.5, -0.1, 0.15, 0.0, 0.05], 3.1),
    ];
    let marginals = species
        .iter()
        .map(|(theta, harmonics, phase)| {
            let mut beta: Vec<f64> = (1..n_years).map(|k| 0.3 * (1.3 * k as f64 + phase).sin()).collect();
            beta.extend_from_slice(harmonics);
            MarginalParams {
                theta: theta.to_vec(),
                beta,
            }
        })
        .collect();
    let mut lambda = LambdaParams::zeros(lambda_spec, 3);
    let width = lambda_spec.pair_design_width();
    for p in 0..3 {
        lambda.tau[p] = -0.25;
        // ζ layout per pair: sin1, cos1, sin2, ...
        lambda.zeta[p * width + 1] = -0.25;
    }
    JointModel::new(structure, marginals, lambda)
}

/// Synthetic daily rows for `n_years` × 365 days with `missing_rate` of the
/// rows carrying one missing cell.
pub fn synth_birds_raw(seed: u64, n_years: usize, missing_rate: f64) -> Result<(Vec<String>, Vec<RawRow>, usize)> {
    if !(0.0..=1.0).contains(&missing_rate) {
        return Err(Error::Input(format!("missing_rate {missing_rate} is outside [0, 1]")));
    }
    let truth = synth_birds_truth(n_years)?;
    let covariates: Vec<Covariates> = (0..n_years as i32)
        .flat_map(|k| (1..=DAYS_PER_YEAR).map(move |d| Covariates::new(SYNTH_FIRST_YEAR + k, d)))
        .collect();
    let (table, truncated) = simulate_table(&truth, &covariates, &mut rng_for(seed, 0))?;
    let mut rows: Vec<RawRow> = (0..table.n_rows())
        .map(|i| RawRow {
            covariates: covariates[i],
            counts: table.row(i).iter().map(|&c| Some(c)).collect(),
        })
        .collect();
    let mut rng = rng_for(seed, 1);
    let n_missing = (missing_rate * rows.len() as f64).round() as usize;
    let mut chosen = sample_indices(&mut rng, rows.len(), n_missing).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let s = rng.random_range(0..SYNTH_SPECIES.len());
        rows[i].counts[s] = None;
    }
    Ok((truth.species_names().to_vec(), rows, truncated))
}

/// Complete-case synthetic table.
pub fn synth_birds(seed: u64, n_years: usize, missing_rate: f64) -> Result<ObservationTable> {
    let (species, rows, _) = synth_birds_raw(seed, n_years, missing_rate)?;
    complete_cases(species, &rows)
}
