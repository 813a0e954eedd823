mod common;

use countcopula::dependence::{
    corr_from_sigma, empirical_spearman, permutation_sensitivity, sigma_from_lambda, spearman_from_corr, trajectory,
    DependenceSummary, PermutationConfig,
};
use countcopula::estimation::{fit, fit_from, FitConfig, ModelSpec};
use countcopula::likelihood::LikelihoodKind;
use countcopula::model::{lambda_matrix, LambdaParams, LambdaSpec};
use countcopula::simulate::rng_for;
use countcopula::JointModel;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn structural_invariants_on_random_lambda() {
    let mut rng = rng_for(99, 0);
    for _ in 0..1000 {
        let j = rng.random_range(2..=5);
        let values: Vec<f64> = (0..j * (j - 1) / 2).map(|_| rng.random_range(-3.0..3.0)).collect();
        let lambda = lambda_matrix(j, &values);
        let sigma = sigma_from_lambda(&lambda).unwrap();
        let corr = corr_from_sigma(&sigma).unwrap();
        let identity = &lambda * &sigma * lambda.transpose();
        assert!((identity - nalgebra::DMatrix::identity(j, j)).abs().max() < 1e-9);
        assert!((sigma.determinant() - 1.0).abs() < 1e-8 * sigma.abs().max().powi(j as i32));
        assert!(sigma.clone().cholesky().is_some());
        for r in 0..j {
            assert!((corr[(r, r)] - 1.0).abs() < 1e-15);
            for c in 0..j {
                assert!((sigma[(r, c)] - sigma[(c, r)]).abs() < 1e-12 * sigma.abs().max());
                if r != c {
                    assert!(corr[(r, c)].abs() < 1.0);
                    let s = spearman_from_corr(corr[(r, c)]).unwrap();
                    assert!(s.abs() <= corr[(r, c)].abs() + 1e-15);
                    assert!((s + spearman_from_corr(-corr[(r, c)]).unwrap()).abs() < 1e-15);
                }
            }
        }
    }
}

#[test]
fn first_pair_correlation_closed_form() {
    let mut rng = rng_for(7, 0);
    for _ in 0..200 {
        let values: Vec<f64> = (0..3).map(|_| rng.random_range(-4.0..4.0)).collect();
        let corr = corr_from_sigma(&sigma_from_lambda(&lambda_matrix(3, &values)).unwrap()).unwrap();
        let want = -values[0] / (1.0 + values[0] * values[0]).sqrt();
        assert!((corr[(1, 0)] - want).abs() < 1e-12);
    }
}

#[test]
fn spearman_matches_monte_carlo() {
    let mut rng = rng_for(11, 0);
    for rho in [-0.8, -0.3, 0.0, 0.3, 0.8] {
        let n = 100_000;
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let z = rho * a + (1.0 - rho * rho).sqrt() * b;
            // strictly monotone transforms leave ranks alone
            x.push(a.exp());
            y.push(z.powi(3) + z);
        }
        let empirical = empirical_spearman(&x, &y).unwrap();
        assert!((empirical - spearman_from_corr(rho).unwrap()).abs() < 0.02, "rho {rho}: {empirical}");
    }
}

fn spec(lambda: LambdaSpec) -> ModelSpec {
    ModelSpec {
        harmonics: 1,
        support: Some(vec![common::SUPPORT]),
        ..ModelSpec::default()
    }
    .with_lambda(lambda)
}

#[test]
fn constant_lambda_orderings_agree() {
    let run = |data: &countcopula::ObservationTable, kind| {
        permutation_sensitivity(
            data,
            &spec(LambdaSpec::constant()),
            kind,
            &FitConfig::default(),
            &PermutationConfig::default(),
        )
        .unwrap()
    };
    let high = common::sample(&common::truth_high(&[-0.5, -0.3, 0.4]), 800, 21, 0);
    for kind in [LikelihoodKind::DiscreteApprox, LikelihoodKind::ContinuousApprox] {
        let report = run(&high, kind);
        assert_eq!(report.fits.len(), 6);
        assert!(report.fits.iter().all(|f| f.error.is_none()));
        assert!(report.days.is_empty());
        assert!(report.max_discrepancy < 0.05, "{kind:?}: {}", report.max_discrepancy);
        assert!(!report.flagged);
        let best = report.best_order.clone().unwrap();
        let best_ll = report.fits.iter().find(|f| f.order == best).unwrap().loglik.unwrap();
        assert!(report.fits.iter().all(|f| f.loglik.unwrap() <= best_ll));
    }

    // the continuous likelihood is invariant under reordering, whatever the counts
    let low = common::sample(&common::truth(3, &[-0.5, -0.3, 0.4]), 800, 21, 0);
    assert!(run(&low, LikelihoodKind::ContinuousApprox).max_discrepancy < 1e-4);

    let two = low.select_species(&[0, 2]).unwrap();
    let report = run(&two, LikelihoodKind::DiscreteApprox);
    assert_eq!(report.fits.len(), 2);
    assert_eq!(report.fits[0].order, vec![0, 1]);
    assert_eq!(report.fits[1].order, vec![1, 0]);
}

/// Two species whose first-to-second coefficient swings with the season, so
/// only the second species has a day-dependent latent variance.
fn varying_variance_truth() -> JointModel {
    let base = common::truth(2, &[0.0]);
    let spec = LambdaSpec::covariate_dependent(1);
    let mut model = base.with_lambda_spec(spec);
    model.lambda = LambdaParams {
        zeta: vec![0.0, 2.0],
        ..model.lambda.clone()
    };
    model
}

#[test]
fn seasonal_variance_flags_ordering() {
    let truth = varying_variance_truth();
    let data = common::sample(&truth, 1500, 22, 0);
    let report = permutation_sensitivity(
        &data,
        &spec(LambdaSpec::covariate_dependent(1)),
        LikelihoodKind::DiscreteApprox,
        &FitConfig::default(),
        &PermutationConfig::default(),
    )
    .unwrap();
    assert_eq!(report.days.len(), 365);
    assert!(report.flagged, "discrepancy {}", report.max_discrepancy);
    assert_eq!(report.best_order, Some(vec![0, 1]));
}

#[test]
fn too_many_species_need_override() {
    let data = common::sample(&common::truth(3, &[0.0, 0.0, 0.0]), 50, 1, 0);
    let wide = countcopula::ObservationTable::new(
        vec!["a".into(), "b".into(), "c".into(), "d".into(), "e".into()],
        data.covariates().to_vec(),
        data.counts().chunks(3).flat_map(|r| [r[0], r[1], r[2], r[0], r[1]]).collect(),
    )
    .unwrap();
    let err = permutation_sensitivity(
        &wide,
        &ModelSpec::default(),
        LikelihoodKind::DiscreteApprox,
        &FitConfig::default(),
        &PermutationConfig::default(),
    );
    assert!(err.is_err());
}

#[test]
fn trajectories() {
    let data = common::sample(&common::truth(2, &[-0.7]), 600, 23, 0);
    let kind = LikelihoodKind::DiscreteApprox;
    let constant = fit(&data, &spec(LambdaSpec::constant()), kind, &FitConfig::default()).unwrap();
    let point = DependenceSummary::from_model(&constant.model, None).unwrap().spearman_pairs()[0];

    // ζ = 0 gives a flat trajectory at the constant value
    let mut nested = constant.clone();
    nested.model = constant.model.with_lambda_spec(LambdaSpec::covariate_dependent(3));
    let days: Vec<u16> = (1..=365).collect();
    let flat_fit = fit_from(
        &data,
        &spec(LambdaSpec::covariate_dependent(3)),
        kind,
        &FitConfig::default(),
        &constant.model,
    )
    .unwrap();
    let nested_points: Vec<f64> = days
        .iter()
        .map(|&d| DependenceSummary::from_model(&nested.model, Some(d)).unwrap().spearman_pairs()[0])
        .collect();
    assert!(nested_points.iter().all(|&s| s == point));

    let path = trajectory(&flat_fit, (1, 0), &days, 0.95, 2000, 5).unwrap();
    assert_eq!(path.len(), 365);
    for p in &path {
        assert!(p.lower <= p.spearman && p.spearman <= p.upper, "{p:?}");
    }
    // periodic: day 365 and day 1 are one day apart on the circle
    let step = path.windows(2).map(|w| (w[1].spearman - w[0].spearman).abs()).fold(0.0, f64::max);
    assert!((path[364].spearman - path[0].spearman).abs() <= 1.5 * step + 1e-12);
    assert_eq!(path, trajectory(&flat_fit, (1, 0), &days, 0.95, 2000, 5).unwrap());

    assert!(trajectory(&flat_fit, (0, 1), &days, 0.95, 100, 5).is_err());
    assert!(trajectory(&flat_fit, (1, 0), &[0], 0.95, 100, 5).is_err());

    let summary = DependenceSummary::from_fit(&constant, None, 0.95, 4000, 9).unwrap();
    let iv = &summary.intervals[0];
    assert!(iv.spearman.0 < point && point < iv.spearman.1);
    assert!(iv.rho.0 < summary.corr[(1, 0)] && summary.corr[(1, 0)] < iv.rho.1);
}
