//! Subcommand implementations.

use crate::config::{LambdaChoice, Likelihood, RunConfig};
use crate::document::{self, Document};
use crate::output::{num, opt, OutDir};
use anyhow::{anyhow, bail, Context, Result};
use countcopula::data::{read_covariates, write_raw_csv};
use countcopula::dependence::{
    permutation_sensitivity, trajectory, DependenceSummary, PairInterval, PermutationConfig, PermutationReport,
};
use countcopula::estimation::{fit, fit_from, lr_test, FitResult, LrTest, ModelSpec};
use countcopula::exact::IntegratorConfig;
use countcopula::likelihood::LikelihoodKind;
use countcopula::model::{pairs, Covariates, JointModel};
use countcopula::optimize::StopReason;
use countcopula::simulate::{
    compare_approximations, mann_whitney_less, parametric_bootstrap, synth_birds_raw, BootstrapConfig,
    BootstrapReport, RankTest, ScatterRow, SimulationConfig,
};
use countcopula::{ingest_csv, IngestConfig, ObservationTable};
use countcopula::nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const FIT_DOCUMENT: &str = "countcopula.fit";
pub const PREDICT_DOCUMENT: &str = "countcopula.predict";
pub const BOOTSTRAP_DOCUMENT: &str = "countcopula.bootstrap";
pub const COMPARE_DOCUMENT: &str = "countcopula.compare_approx";
pub const PERMUTE_DOCUMENT: &str = "countcopula.permute_check";
pub const SIMULATE_DOCUMENT: &str = "countcopula.simulate";

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Options {
    /// Input CSV: `date` or `year`,`day` columns plus one count column per species.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for result documents and plot data.
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum)]
    pub likelihood: Option<Likelihood>,
    #[arg(long, value_enum)]
    pub lambda: Option<LambdaChoice>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap replicates, comparison samples, or simulated datasets.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Result document of a previous `fit` (predict, simulate).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, clap::Subcommand)]
pub enum Command {
    /// Fit the joint model and write estimates, dependence summaries and plot data.
    Fit(Options),
    /// Marginal quantiles and dependence of a fitted model at covariate rows.
    Predict(Options),
    /// Parametric bootstrap of the Spearman correlations.
    Bootstrap(Options),
    /// Compare both likelihood approximations with the exact likelihood.
    CompareApprox(Options),
    /// Refit under every species ordering.
    PermuteCheck(Options),
    /// Write synthetic data, or data simulated from a fitted model.
    Simulate(Options),
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Fit(o) => cmd_fit(o),
        Command::Predict(o) => cmd_predict(o),
        Command::Bootstrap(o) => cmd_bootstrap(o),
        Command::CompareApprox(o) => cmd_compare_approx(o),
        Command::PermuteCheck(o) => cmd_permute_check(o),
        Command::Simulate(o) => cmd_simulate(o),
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn resolve(o: &Options) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(l) = o.likelihood {
        cfg.likelihood = l;
    }
    if let Some(l) = o.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(r) = o.replicates {
        cfg.replicates = r;
        cfg.compare_samples = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(o: &Options, cfg: &RunConfig) -> Result<ObservationTable> {
    let path = o.input.as_ref().ok_or_else(|| anyhow!("--input is required"))?;
    let table = ingest_csv(
        path,
        &IngestConfig {
            species: cfg.species.clone(),
        },
    )?;
    if table.n_rows() == 0 {
        bail!("{} has no complete rows", path.display());
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    pub species: Vec<String>,
    pub n_rows: usize,
    pub rows_dropped: usize,
    pub leap_days_dropped: usize,
}

impl DataSummary {
    fn of(table: &ObservationTable) -> Self {
        Self {
            source: table.provenance.source.clone(),
            species: table.species_names().to_vec(),
            n_rows: table.n_rows(),
            rows_dropped: table.provenance.rows_dropped,
            leap_days_dropped: table.provenance.leap_days_dropped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub gradient_tolerance: f64,
    pub stop_reason: StopReason,
    pub hessian_positive_definite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceReport {
    /// Day of year for covariate-dependent Λ.
    pub day: Option<u16>,
    pub lambda: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub corr: Vec<Vec<f64>>,
    pub spearman: Vec<Vec<f64>>,
    pub ci_level: Option<f64>,
    pub intervals: Vec<PairInterval>,
    /// Why intervals are missing, if they are.
    pub note: Option<String>,
}

impl DependenceReport {
    fn of(s: &DependenceSummary, note: Option<String>) -> Self {
        Self {
            day: s.evaluated_at,
            lambda: to_rows(&s.lambda),
            sigma: to_rows(&s.sigma),
            corr: to_rows(&s.corr),
            spearman: to_rows(&s.spearman),
            ci_level: s.ci_level,
            intervals: s.intervals.clone(),
            note,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub lambda: LambdaChoice,
    pub likelihood: LikelihoodKind,
    pub spec: ModelSpec,
    pub model: JointModel,
    pub param_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub vcov: Option<Vec<Vec<f64>>>,
    pub loglik: f64,
    pub initial_loglik: f64,
    pub n_obs: usize,
    pub n_params: usize,
    pub convergence: Convergence,
    /// Likelihood cells whose probability hit the floor at the optimum.
    pub floored: usize,
    /// Counts above a Bernstein support.
    pub clamped: usize,
    pub dependence: Vec<DependenceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBody {
    pub data: DataSummary,
    pub config: RunConfig,
    pub fits: Vec<FitReport>,
    /// Constant Λ against covariate-dependent Λ, when both were fitted.
    pub lr_test: Option<LrTest>,
}

fn is_constant(f: &FitResult) -> bool {
    f.model.structure.lambda.pair_design_width() == 0
}

fn summary_days(f: &FitResult, cfg: &RunConfig) -> Vec<Option<u16>> {
    if is_constant(f) {
        vec![None]
    } else {
        cfg.summary_days.iter().map(|&d| Some(d)).collect()
    }
}

fn dependence_reports(f: &FitResult, cfg: &RunConfig) -> Result<Vec<DependenceReport>> {
    summary_days(f, cfg)
        .into_iter()
        .map(|day| match DependenceSummary::from_fit(f, day, cfg.ci_level, cfg.ci_draws, cfg.seed) {
            Ok(s) => Ok(DependenceReport::of(&s, None)),
            Err(e) => {
                let s = DependenceSummary::from_model(&f.model, day)?;
                Ok(DependenceReport::of(&s, Some(format!("no intervals: {e}"))))
            }
        })
        .collect()
}

fn report(choice: LambdaChoice, spec: &ModelSpec, f: &FitResult, cfg: &RunConfig) -> Result<FitReport> {
    Ok(FitReport {
        lambda: choice,
        likelihood: f.likelihood_kind,
        spec: spec.clone(),
        model: f.model.clone(),
        param_names: f.param_names(),
        theta_hat: f.theta_hat.clone(),
        std_errors: f.std_errors(),
        vcov: f.vcov.as_ref().map(to_rows),
        loglik: f.loglik,
        initial_loglik: f.initial_loglik,
        n_obs: f.n_obs,
        n_params: f.n_params(),
        convergence: Convergence {
            converged: f.converged,
            iterations: f.iterations,
            gradient_norm: f.gradient_norm_at_opt,
            gradient_tolerance: f.gradient_tolerance,
            stop_reason: f.stop_reason,
            hessian_positive_definite: f.hessian_positive_definite,
        },
        floored: f.floored,
        clamped: f.clamped,
        dependence: dependence_reports(f, cfg)?,
    })
}

/// Fits for every requested Λ mode; a covariate fit after a constant one
/// starts from it, so its log-likelihood is never lower.
pub fn fit_all(
    data: &ObservationTable,
    cfg: &RunConfig,
    kind: LikelihoodKind,
) -> Result<Vec<(LambdaChoice, ModelSpec, FitResult)>> {
    let mut out: Vec<(LambdaChoice, ModelSpec, FitResult)> = Vec::new();
    for (choice, spec) in cfg.specs() {
        let fitted = match out.first() {
            Some((_, _, previous)) => fit_from(data, &spec, kind, &cfg.fit_config(), &previous.model),
            None => fit(data, &spec, kind, &cfg.fit_config()),
        }
        .with_context(|| format!("fitting the {choice:?} model"))?;
        out.push((choice, spec, fitted));
    }
    Ok(out)
}

fn lambda_label(choice: LambdaChoice) -> &'static str {
    match choice {
        LambdaChoice::Constant => "constant",
        LambdaChoice::Covariate => "covariate",
        LambdaChoice::Both => "both",
    }
}

fn quantile_rows(label: &str, model: &JointModel, probs: &[f64], out: &mut Vec<Vec<String>>) -> Result<()> {
    for s in 0..model.n_species() {
        for &year in model.structure.shift.years() {
            for day in 1..=365u16 {
                let x = Covariates::new(year, day);
                for &p in probs {
                    let q = model.marginal_quantile(s, p, x)?;
                    out.push(vec![
                        label.to_string(),
                        model.species_names()[s].clone(),
                        year.to_string(),
                        day.to_string(),
                        num(p),
                        q.to_string(),
                        num((f64::from(q) + 1.0).ln()),
                    ]);
                }
            }
        }
    }
    Ok(())
}

fn trajectory_rows(label: &str, f: &FitResult, cfg: &RunConfig, out: &mut Vec<Vec<String>>) -> Result<()> {
    let names = f.model.species_names();
    let days: Vec<u16> = (1..=365).collect();
    for (p, (r, c)) in pairs(f.model.n_species()).into_iter().enumerate() {
        let points: Vec<(u16, f64, Option<(f64, f64)>)> = if is_constant(f) {
            let (point, band) = match DependenceSummary::from_fit(f, None, cfg.ci_level, cfg.ci_draws, cfg.seed) {
                Ok(s) => (s.spearman_pairs()[p], Some(s.intervals[p].spearman)),
                Err(_) => (DependenceSummary::from_model(&f.model, None)?.spearman_pairs()[p], None),
            };
            days.iter().map(|&d| (d, point, band)).collect()
        } else {
            match trajectory(f, (r, c), &days, cfg.ci_level, cfg.ci_draws, cfg.seed) {
                Ok(t) => t.iter().map(|t| (t.day, t.spearman, Some((t.lower, t.upper)))).collect(),
                Err(_) => days
                    .iter()
                    .map(|&d| Ok((d, DependenceSummary::from_model(&f.model, Some(d))?.spearman_pairs()[p], None)))
                    .collect::<Result<_>>()?,
            }
        };
        for (day, s, band) in points {
            out.push(vec![
                label.to_string(),
                names[r].clone(),
                names[c].clone(),
                day.to_string(),
                num(s),
                opt(band.map(|b| b.0)),
                opt(band.map(|b| b.1)),
            ]);
        }
    }
    Ok(())
}

pub fn cmd_fit(o: &Options) -> Result<()> {
    let cfg = resolve(o)?;
    let data = load_data(o, &cfg)?;
    let out = OutDir::create(&o.out_dir)?;
    let fits = fit_all(&data, &cfg, cfg.likelihood.into())?;

    let mut quantiles = Vec::new();
    let mut trajectories = Vec::new();
    for (choice, _, f) in &fits {
        quantile_rows(lambda_label(*choice), &f.model, &cfg.quantile_probabilities, &mut quantiles)?;
        trajectory_rows(lambda_label(*choice), f, &cfg, &mut trajectories)?;
    }
    out.write_csv(
        "marginal_quantiles.csv",
        &["model", "species", "year", "day", "probability", "count", "log1p_count"],
        quantiles,
    )?;
    out.write_csv(
        "trajectories.csv",
        &["model", "row_species", "col_species", "day", "spearman", "lower", "upper"],
        trajectories,
    )?;

    let lr = match fits.as_slice() {
        [(_, _, null), (_, _, alt)] => Some(lr_test(null, alt)?),
        _ => None,
    };
    let reports = fits
        .iter()
        .map(|(choice, spec, f)| report(*choice, spec, f, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let doc = Document::new(
        FIT_DOCUMENT,
        FitBody {
            data: DataSummary::of(&data),
            config: cfg,
            fits: reports,
            lr_test: lr,
        },
    );
    out.write_text("fit.json", &doc.to_json()?)?;
    Ok(())
}

fn load_fit(o: &Options) -> Result<FitBody> {
    let path = o.model.as_ref().ok_or_else(|| anyhow!("--model (a fit.json document) is required"))?;
    Ok(document::read::<FitBody>(path, FIT_DOCUMENT)?.body)
}

fn select_models(body: &FitBody, lambda: Option<LambdaChoice>) -> Result<Vec<&FitReport>> {
    let chosen: Vec<&FitReport> = body
        .fits
        .iter()
        .filter(|f| match lambda {
            None | Some(LambdaChoice::Both) => true,
            Some(l) => f.lambda == l,
        })
        .collect();
    if chosen.is_empty() {
        bail!("the fit document has no {:?} model", lambda.unwrap());
    }
    Ok(chosen)
}

fn full_grid(model: &JointModel) -> Vec<Covariates> {
    model
        .structure
        .shift
        .years()
        .iter()
        .flat_map(|&y| (1..=365).map(move |d| Covariates::new(y, d)))
        .collect()
}

fn covariate_rows(o: &Options, model: &JointModel) -> Result<Vec<Covariates>> {
    match &o.input {
        Some(path) => {
            let (rows, _) = read_covariates(path)?;
            let years = model.structure.shift.years();
            if let Some(x) = rows.iter().find(|x| !years.contains(&x.year)) {
                bail!("year {} is not among the fitted years {years:?}", x.year);
            }
            Ok(rows)
        }
        None => Ok(full_grid(model)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictBody {
    pub models: Vec<LambdaChoice>,
    pub n_rows: usize,
    pub probabilities: Vec<f64>,
}

pub fn cmd_predict(o: &Options) -> Result<()> {
    let cfg = resolve(o)?;
    let body = load_fit(o)?;
    let models = select_models(&body, o.lambda)?;
    let out = OutDir::create(&o.out_dir)?;
    let mut marginal = Vec::new();
    let mut dependence = Vec::new();
    let mut n_rows = 0;
    for f in &models {
        let label = lambda_label(f.lambda);
        let m = &f.model;
        let rows = covariate_rows(o, m)?;
        n_rows = rows.len();
        for x in &rows {
            for s in 0..m.n_species() {
                for &p in &cfg.quantile_probabilities {
                    marginal.push(vec![
                        label.to_string(),
                        x.year.to_string(),
                        x.day.to_string(),
                        m.species_names()[s].clone(),
                        num(p),
                        m.marginal_quantile(s, p, *x)?.to_string(),
                    ]);
                }
            }
            let day = (m.structure.lambda.pair_design_width() > 0).then_some(x.day);
            let summary = DependenceSummary::from_model(m, day)?;
            for (r, c) in pairs(m.n_species()) {
                dependence.push(vec![
                    label.to_string(),
                    x.year.to_string(),
                    x.day.to_string(),
                    m.species_names()[r].clone(),
                    m.species_names()[c].clone(),
                    num(summary.corr[(r, c)]),
                    num(summary.spearman[(r, c)]),
                ]);
            }
        }
    }
    out.write_csv(
        "predictions.csv",
        &["model", "year", "day", "species", "probability", "count"],
        marginal,
    )?;
    out.write_csv(
        "predicted_dependence.csv",
        &["model", "year", "day", "row_species", "col_species", "corr", "spearman"],
        dependence,
    )?;
    let doc = Document::new(
        PREDICT_DOCUMENT,
        PredictBody {
            models: models.iter().map(|f| f.lambda).collect(),
            n_rows,
            probabilities: cfg.quantile_probabilities.clone(),
        },
    );
    out.write_text("predict.json", &doc.to_json()?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRun {
    pub lambda: LambdaChoice,
    pub loglik: f64,
    pub converged: bool,
    /// `spearman[d][p]` of the fitted model that generated the replicates.
    pub fitted_spearman: Vec<Vec<f64>>,
    pub report: BootstrapReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBody {
    pub data: DataSummary,
    pub config: RunConfig,
    pub runs: Vec<BootstrapRun>,
}

pub fn cmd_bootstrap(o: &Options) -> Result<()> {
    let cfg = resolve(o)?;
    let data = load_data(o, &cfg)?;
    let out = OutDir::create(&o.out_dir)?;
    let fits = fit_all(&data, &cfg, cfg.likelihood.into())?;
    let names = data.species_names();
    let mut table = Vec::new();
    let mut summary = Vec::new();
    let mut runs = Vec::new();
    for (choice, spec, f) in &fits {
        let label = lambda_label(*choice);
        if !f.converged {
            eprintln!("warning: the {label} fit did not converge; bootstrapping from it anyway");
        }
        let bcfg = BootstrapConfig {
            n_replicates: cfg.replicates,
            seed: cfg.seed,
            fit: cfg.fit_config(),
            days: cfg.bootstrap_days.clone(),
        };
        let rep = parametric_bootstrap(f, data.covariates(), spec, &bcfg)?;
        let fitted_spearman = rep
            .days
            .iter()
            .map(|&d| Ok(DependenceSummary::from_model(&f.model, d)?.spearman_pairs()))
            .collect::<Result<Vec<_>>>()?;
        let day_label = |d: Option<u16>| d.map(|d| d.to_string()).unwrap_or_else(|| "NA".into());
        for r in &rep.replicates {
            if r.error.is_some() {
                continue;
            }
            for (di, &day) in rep.days.iter().enumerate() {
                for (p, (row, col)) in pairs(names.len()).into_iter().enumerate() {
                    table.push(vec![
                        label.to_string(),
                        r.index.to_string(),
                        day_label(day),
                        names[row].clone(),
                        names[col].clone(),
                        num(r.spearman[di][p]),
                        num(fitted_spearman[di][p]),
                    ]);
                }
            }
        }
        for (di, &day) in rep.days.iter().enumerate() {
            for (p, (row, col)) in pairs(names.len()).into_iter().enumerate() {
                for (qi, &prob) in rep.probabilities.iter().enumerate() {
                    summary.push(vec![
                        label.to_string(),
                        day_label(day),
                        names[row].clone(),
                        names[col].clone(),
                        num(prob),
                        num(rep.quantiles[di][p][qi]),
                    ]);
                }
            }
        }
        let failed = rep.replicates.iter().filter(|r| r.error.is_some()).count();
        if failed > 0 {
            eprintln!("warning: {failed} of {} {label} replicates failed", rep.replicates.len());
        }
        runs.push(BootstrapRun {
            lambda: *choice,
            loglik: f.loglik,
            converged: f.converged,
            fitted_spearman,
            report: rep,
        });
    }
    out.write_csv(
        "bootstrap.csv",
        &["model", "replicate", "day", "row_species", "col_species", "spearman", "fitted_spearman"],
        table,
    )?;
    out.write_csv(
        "bootstrap_summary.csv",
        &["model", "day", "row_species", "col_species", "probability", "spearman"],
        summary,
    )?;
    let doc = Document::new(
        BOOTSTRAP_DOCUMENT,
        BootstrapBody {
            data: DataSummary::of(&data),
            config: cfg,
            runs,
        },
    );
    out.write_text("bootstrap.json", &doc.to_json()?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareBody {
    pub data: DataSummary,
    pub config: RunConfig,
    pub loglik_continuous: f64,
    pub loglik_discrete: f64,
    pub samples: usize,
    pub median_abs_difference_continuous: Option<f64>,
    pub median_abs_difference_discrete: Option<f64>,
    /// One-sided test that the discrete errors are smaller.
    pub rank_test: Option<RankTest>,
    pub failures: usize,
    pub rows: Vec<ScatterRow>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(countcopula::dependence::quantile_sorted(&v, 0.5))
}

/// Fits both approximations, then scores simulated data from each fit
/// against the exact likelihood.
pub fn compare(data: &ObservationTable, cfg: &RunConfig) -> Result<CompareBody> {
    let (_, spec) = cfg.specs().into_iter().next().expect("at least one spec");
    let fit_cont = fit(data, &spec, LikelihoodKind::ContinuousApprox, &cfg.fit_config())?;
    let fit_disc = fit(data, &spec, LikelihoodKind::DiscreteApprox, &cfg.fit_config())?;
    let integrator = IntegratorConfig {
        rel_tol: cfg.quadrature_rel_tol,
        max_subdivisions: cfg.quadrature_max_subdivisions,
    };
    let rows = compare_approximations(
        &fit_cont,
        &fit_disc,
        data.covariates(),
        cfg.compare_samples,
        cfg.seed,
        &integrator,
    )?;
    let errors = |kind| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.kind == kind)
            .filter_map(ScatterRow::abs_difference)
            .collect()
    };
    let cont = errors(LikelihoodKind::ContinuousApprox);
    let disc = errors(LikelihoodKind::DiscreteApprox);
    let rank_test = mann_whitney_less(&disc, &cont).ok();
    Ok(CompareBody {
        data: DataSummary::of(data),
        config: cfg.clone(),
        loglik_continuous: fit_cont.loglik,
        loglik_discrete: fit_disc.loglik,
        samples: cfg.compare_samples,
        median_abs_difference_continuous: median(cont),
        median_abs_difference_discrete: median(disc),
        rank_test,
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
        rows,
    })
}

pub fn cmd_compare_approx(o: &Options) -> Result<()> {
    let cfg = resolve(o)?;
    let data = load_data(o, &cfg)?;
    let out = OutDir::create(&o.out_dir)?;
    let body = compare(&data, &cfg)?;
    let kind_label = |k: LikelihoodKind| match k {
        LikelihoodKind::ContinuousApprox => "continuous",
        LikelihoodKind::DiscreteApprox => "discrete",
        LikelihoodKind::ExactOracle => "exact",
    };
    out.write_csv(
        "approx_scatter.csv",
        &["kind", "sample", "approx", "exact", "abs_difference", "error"],
        body.rows.iter().map(|r| {
            vec![
                kind_label(r.kind).to_string(),
                r.sample.to_string(),
                opt(r.approx),
                opt(r.exact),
                opt(r.abs_difference()),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    out.write_text("compare_approx.json", &Document::new(COMPARE_DOCUMENT, body).to_json()?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermuteBody {
    pub data: DataSummary,
    pub config: RunConfig,
    pub report: PermutationReport,
}

pub fn cmd_permute_check(o: &Options) -> Result<()> {
    let cfg = resolve(o)?;
    let data = load_data(o, &cfg)?;
    let out = OutDir::create(&o.out_dir)?;
    let (_, spec) = cfg
        .specs()
        .into_iter()
        .last()
        .expect("at least one spec");
    let report = permutation_sensitivity(
        &data,
        &spec,
        cfg.likelihood.into(),
        &cfg.fit_config(),
        &PermutationConfig {
            threshold: cfg.permutation_threshold,
            allow_large: cfg.permutation_allow_large,
        },
    )?;
    let names = data.species_names();
    let mut rows = Vec::new();
    for f in &report.fits {
        let order: Vec<&str> = f.order.iter().map(|&k| names[k].as_str()).collect();
        let days: Vec<String> = if report.days.is_empty() {
            vec!["NA".into()]
        } else {
            report.days.iter().map(u16::to_string).collect()
        };
        for (di, day) in days.iter().enumerate() {
            for (p, (r, c)) in pairs(names.len()).into_iter().enumerate() {
                rows.push(vec![
                    order.join(">"),
                    opt(f.loglik),
                    f.converged.map(|c| c.to_string()).unwrap_or_else(|| "NA".into()),
                    day.clone(),
                    names[r].clone(),
                    names[c].clone(),
                    opt(f.spearman.get(di).map(|s| s[p])),
                ]);
            }
        }
    }
    out.write_csv(
        "permutations.csv",
        &["order", "loglik", "converged", "day", "row_species", "col_species", "spearman"],
        rows,
    )?;
    if report.flagged {
        eprintln!(
            "warning: Spearman correlations differ by {:.3} across species orderings (threshold {})",
            report.max_discrepancy, report.threshold
        );
    }
    let doc = Document::new(
        PERMUTE_DOCUMENT,
        PermuteBody {
            data: DataSummary::of(&data),
            config: cfg,
            report,
        },
    );
    out.write_text("permute_check.json", &doc.to_json()?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateBody {
    /// `synthetic` or the Λ mode of the fitted model simulated from.
    pub source: String,
    pub seed: u64,
    pub files: Vec<String>,
    pub rows: Vec<usize>,
    pub truncated: Vec<usize>,
    pub incomplete_rows: Vec<usize>,
}

pub fn cmd_simulate(o: &Options) -> Result<()> {
    let cfg = resolve(o)?;
    let out = OutDir::create(&o.out_dir)?;
    let body = match &o.model {
        None => {
            let (species, rows, truncated) =
                synth_birds_raw(cfg.seed, cfg.simulate_years, cfg.simulate_missing_rate)?;
            let incomplete = rows.iter().filter(|r| r.counts.iter().any(Option::is_none)).count();
            out.write_with("data.csv", |w| Ok(write_raw_csv(&species, &rows, w)?))?;
            SimulateBody {
                source: "synthetic".into(),
                seed: cfg.seed,
                files: vec!["data.csv".into()],
                rows: vec![rows.len()],
                truncated: vec![truncated],
                incomplete_rows: vec![incomplete],
            }
        }
        Some(_) => {
            let fitted = load_fit(o)?;
            let chosen = select_models(&fitted, o.lambda)?;
            let f = chosen[0];
            let sim = SimulationConfig {
                n_replicates: o.replicates.unwrap_or(1),
                seed: cfg.seed,
                truth: f.model.clone(),
                covariate_schedule: covariate_rows(o, &f.model)?,
            };
            let mut body = SimulateBody {
                source: lambda_label(f.lambda).into(),
                seed: cfg.seed,
                files: Vec::new(),
                rows: Vec::new(),
                truncated: Vec::new(),
                incomplete_rows: Vec::new(),
            };
            for (k, (table, truncated)) in sim.replicates()?.into_iter().enumerate() {
                let name = format!("simulated_{k:03}.csv");
                out.write_with(&name, |w| Ok(table.write_csv(w)?))?;
                body.files.push(name);
                body.rows.push(table.n_rows());
                body.truncated.push(truncated);
                body.incomplete_rows.push(0);
            }
            body
        }
    };
    out.write_text("simulate.json", &Document::new(SIMULATE_DOCUMENT, body).to_json()?)?;
    Ok(())
}

/// Read a fit document written by `fit`.
pub fn read_fit(path: &Path) -> Result<FitBody> {
    Ok(document::read::<FitBody>(path, FIT_DOCUMENT)?.body)
}
