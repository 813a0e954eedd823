use countcopula::simulate::{synth_birds, SimulationConfig};
use countcopula::{ingest_csv, IngestConfig};
use countcopula_cli::commands::{read_fit, FitBody};
use countcopula_cli::document::{self, Document, SCHEMA_VERSION};
use countcopula_cli::RunConfig;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_countcopula"))
}

fn run_ok(args: &[&str]) {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "countcopula {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = "harmonics = 1\nlambda_harmonics = 1\nsimulate_years = 1\nci_draws = 500\nsummary_days = [1, 183]\n";

/// One synthetic year in `dir/sim/data.csv`.
fn small_input(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = write_config(dir, SMALL);
    let sim = dir.join("sim");
    run_ok(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        sim.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    (sim.join("data.csv"), cfg)
}

#[test]
fn synthetic_csv_ingests_to_generator_table() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = small_input(dir.path());
    let table = ingest_csv(&data, &IngestConfig::default()).unwrap();
    let direct = synth_birds(3, 1, 0.067).unwrap();
    assert_eq!(table.counts(), direct.counts());
    assert_eq!(table.covariates(), direct.covariates());
    assert_eq!(table.provenance.rows_dropped, direct.provenance.rows_dropped);
    assert_eq!(table.provenance.rows_dropped, 24);
}

#[test]
fn fit_outputs_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = small_input(dir.path());
    let outputs = ["fit.json", "marginal_quantiles.csv", "trajectories.csv"];
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("fit{k}"));
        run_ok(&[
            "fit",
            "--input",
            data.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
            "--lambda",
            "both",
        ]);
        runs.push(outputs.map(|name| std::fs::read(out.join(name)).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);

    let body: FitBody = read_fit(&dir.path().join("fit0/fit.json")).unwrap();
    assert_eq!(body.fits.len(), 2);
    let lr = body.lr_test.unwrap();
    assert_eq!(lr.df, 6);
    assert!(body.fits[1].loglik >= body.fits[0].loglik);
    for f in &body.fits {
        assert!(f.convergence.converged);
        assert_eq!(f.theta_hat.len(), f.param_names.len());
        assert_eq!(f.vcov.as_ref().unwrap().len(), f.n_params);
    }
    assert_eq!(body.fits[0].dependence.len(), 1);
    assert_eq!(body.fits[1].dependence.len(), 2);
    assert_eq!(body.fits[1].dependence[0].intervals.len(), 3);

    let traj = std::fs::read_to_string(dir.path().join("fit0/trajectories.csv")).unwrap();
    // header, then 2 models × 3 pairs × 365 days
    assert_eq!(traj.lines().count(), 1 + 2 * 3 * 365);
    let quant = std::fs::read_to_string(dir.path().join("fit0/marginal_quantiles.csv")).unwrap();
    assert_eq!(quant.lines().count(), 1 + 2 * 3 * 365 * 5);
    assert!(quant.lines().next().unwrap().ends_with("log1p_count"));

    // predict and simulate read the fit document back
    let model = dir.path().join("fit0/fit.json");
    let pred = dir.path().join("pred");
    run_ok(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--input",
        data.to_str().unwrap(),
        "--out-dir",
        pred.to_str().unwrap(),
        "--lambda",
        "covariate",
    ]);
    let rows = ingest_csv(&data, &IngestConfig::default()).unwrap();
    let (all_rows, _) = countcopula::data::read_covariates(&data).unwrap();
    assert_eq!(all_rows.len(), 365);
    let predictions = std::fs::read_to_string(pred.join("predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 1 + 365 * 3 * 5);
    assert!(rows.n_rows() < all_rows.len());

    let sim = dir.path().join("sim2");
    run_ok(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--lambda",
        "covariate",
        "--replicates",
        "2",
        "--seed",
        "11",
        "--out-dir",
        sim.to_str().unwrap(),
    ]);
    let truth = body.fits[1].model.clone();
    let expected = SimulationConfig {
        n_replicates: 2,
        seed: 11,
        truth: truth.clone(),
        covariate_schedule: (1..=365).map(|d| countcopula::Covariates::new(2002, d)).collect(),
    };
    for k in 0..2 {
        let got = ingest_csv(sim.join(format!("simulated_{k:03}.csv")), &IngestConfig::default()).unwrap();
        let (want, _) = expected.replicate(k).unwrap();
        assert_eq!(got.counts(), want.counts());
        assert_eq!(got.covariates(), want.covariates());
        assert_eq!(got.species_names(), want.species_names());
    }
}

#[test]
fn bootstrap_table_has_one_row_per_replicate_and_pair() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = small_input(dir.path());
    let out = dir.path().join("boot");
    run_ok(&[
        "bootstrap",
        "--input",
        data.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
        "--replicates",
        "100",
    ]);
    let table = std::fs::read_to_string(out.join("bootstrap.csv")).unwrap();
    let mut per_pair = std::collections::BTreeMap::new();
    for line in table.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        *per_pair.entry((f[3].to_string(), f[4].to_string())).or_insert(0) += 1;
    }
    assert_eq!(per_pair.len(), 3);
    assert!(per_pair.values().all(|&n| n == 100), "{per_pair:?}");
}

#[test]
fn permute_and_compare_write_documents() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = small_input(dir.path());
    let out = dir.path().join("perm");
    run_ok(&[
        "permute-check",
        "--input",
        data.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let perm = std::fs::read_to_string(out.join("permutations.csv")).unwrap();
    assert_eq!(perm.lines().count(), 1 + 6 * 3);
    let doc: Document<serde_json::Value> =
        document::read(&out.join("permute_check.json"), "countcopula.permute_check").unwrap();
    assert_eq!(doc.body["report"]["fits"].as_array().unwrap().len(), 6);

    // a short slice keeps the exact likelihood cheap
    let head: String = std::fs::read_to_string(&data).unwrap().lines().take(121).map(|l| format!("{l}\n")).collect();
    let short = dir.path().join("short.csv");
    std::fs::write(&short, head).unwrap();
    let cmp = dir.path().join("cmp");
    run_ok(&[
        "compare-approx",
        "--input",
        short.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        cmp.to_str().unwrap(),
        "--replicates",
        "4",
    ]);
    let scatter = std::fs::read_to_string(cmp.join("approx_scatter.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 1 + 2 * 4);
    let doc: Document<serde_json::Value> =
        document::read(&cmp.join("compare_approx.json"), "countcopula.compare_approx").unwrap();
    assert_eq!(doc.body["failures"], 0);
}

#[test]
fn schema_versions() {
    let doc = Document::new("countcopula.fit", serde_json::json!({"x": 1}));
    let text = doc.to_json().unwrap();
    assert!(text.contains(SCHEMA_VERSION));
    assert!(document::parse::<serde_json::Value>(&text, "countcopula.fit").is_ok());
    let minor = text.replace(SCHEMA_VERSION, "1.4.0");
    assert!(document::parse::<serde_json::Value>(&minor, "countcopula.fit").is_ok());
    let major = text.replace(SCHEMA_VERSION, "2.0.0");
    let err = document::parse::<serde_json::Value>(&major, "countcopula.fit").unwrap_err();
    assert!(format!("{err:#}").contains("unsupported schema version 2.0.0"));
    assert!(document::parse::<serde_json::Value>(&text, "countcopula.bootstrap").is_err());
    assert!(document::parse::<serde_json::Value>("{\"body\": 1}", "countcopula.fit").is_err());
}

#[test]
fn run_config_parsing() {
    let cfg: RunConfig = toml::from_str("seed = 5\n[optimizer]\nmax_iterations = 50\n").unwrap();
    assert_eq!(cfg.seed, 5);
    assert_eq!(cfg.optimizer.max_iterations, 50);
    assert_eq!(cfg.optimizer.gradient_tolerance, 1e-6);
    assert!(toml::from_str::<RunConfig>("sede = 5\n").is_err());
    let round: RunConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(round, cfg);

    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "ci_level = 1.5\n");
    assert!(RunConfig::load(&bad).is_err());
}

#[test]
fn failures_exit_nonzero_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = bin().args(["fit", "--out-dir", out.to_str().unwrap()]).output().unwrap();
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("--input"));

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "year,day,a,b\n2004,1,1,2\n2004,2,3,-1\n").unwrap();
    let bad = bin()
        .args(["fit", "--input", csv.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    let msg = String::from_utf8_lossy(&bad.stderr);
    assert!(msg.contains(":3:") && msg.contains("negative"), "{msg}");
    assert!(!out.join("fit.json").exists());

    let threads = bin()
        .env(countcopula_cli::THREADS_ENV, "many")
        .args(["simulate", "--out-dir", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!threads.status.success());
}
