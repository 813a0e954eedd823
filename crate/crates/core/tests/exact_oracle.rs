use countcopula::exact::{loglik_exact, per_observation_exact, rectangle_probability, IntegratorConfig};
use countcopula::likelihood::{per_observation, LikelihoodKind};
use countcopula::model::{Covariates, JointModel, LambdaParams, LambdaSpec, Link, MarginalParams, ModelStructure};
use countcopula::normal;
use countcopula::{BernsteinBasis, HarmonicDesign, ObservationTable};

fn two_species(lambda: f64) -> JointModel {
    let structure = ModelStructure {
        species_names: vec!["a".into(), "b".into()],
        bases: vec![BernsteinBasis::new(5, 10.0).unwrap(), BernsteinBasis::new(5, 10.0).unwrap()],
        shift: HarmonicDesign::new(1, vec![2010]).unwrap(),
        lambda: LambdaSpec::constant(),
        link: Link::Normal,
    };
    let marginals = vec![
        MarginalParams {
            theta: vec![-1.0, -0.2, 0.5, 1.1, 1.8],
            beta: vec![0.0, 0.0],
        },
        MarginalParams {
            theta: vec![-0.5, 0.0, 0.6, 1.0, 2.0],
            beta: vec![0.0, 0.0],
        },
    ];
    JointModel::new(structure, marginals, LambdaParams::constant(2, vec![lambda]).unwrap()).unwrap()
}

// Frozen from an independent adaptive 2-D quadrature of the bivariate normal
// density with Σ = [[1, 0.5], [0.5, 1.25]] (absolute error below 1e-14).
const DENSE_QUADRATURE: [((u32, u32), f64); 4] = [
    ((1, 1), 0.007_148_569_141_625_723),
    ((0, 3), 0.009_899_672_611_766_537),
    ((5, 2), 0.008_152_978_383_656_589),
    ((10, 0), 0.002_561_650_796_631_452),
];

#[test]
fn two_species_cells_match_dense_quadrature() {
    let model = two_species(-0.5);
    let covariates = vec![Covariates::new(2010, 1); DENSE_QUADRATURE.len()];
    let counts: Vec<u32> = DENSE_QUADRATURE.iter().flat_map(|((a, b), _)| [*a, *b]).collect();
    let data = ObservationTable::new(vec!["a".into(), "b".into()], covariates, counts).unwrap();
    let per = per_observation_exact(&model, &data, &IntegratorConfig::default()).unwrap();
    for (i, (_, want)) in DENSE_QUADRATURE.iter().enumerate() {
        assert!((per[i].exp() - want).abs() < 1e-7, "cell {i}: {} vs {want}", per[i].exp());
        assert!((per[i].exp() - want).abs() < 1e-12, "cell {i} beyond requested precision");
    }
}

#[test]
fn exact_equals_discrete_under_independence() {
    let model = two_species(0.0);
    let covariates = vec![Covariates::new(2010, 1); 11];
    let counts: Vec<u32> = (0..11).flat_map(|k| [k, 10 - k]).collect();
    let data = ObservationTable::new(vec!["a".into(), "b".into()], covariates, counts).unwrap();
    let exact = per_observation_exact(&model, &data, &IntegratorConfig::default()).unwrap();
    let discrete = per_observation(&model, &data, LikelihoodKind::DiscreteApprox).unwrap();
    for (e, d) in exact.iter().zip(&discrete) {
        assert!((e - d).abs() < 1e-8);
    }
    let total = loglik_exact(&model, &data, &IntegratorConfig::default()).unwrap();
    assert!((total - discrete.iter().sum::<f64>()).abs() < 1e-7);
}

#[test]
fn exact_is_deterministic() {
    let lower = [-0.3, f64::NEG_INFINITY, 0.2];
    let upper = [0.4, 0.1, 1.5];
    let lambda = [-0.4, 0.3, -0.6];
    let cfg = IntegratorConfig::default();
    let a = rectangle_probability(&lower, &upper, &lambda, &cfg).unwrap();
    let b = rectangle_probability(&lower, &upper, &lambda, &cfg).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn three_species_rectangle_matches_nested_quadrature() {
    // scipy.integrate.quad nested over w1, w2 with epsrel 1e-13, closed form in w3;
    // Genz's randomized method agrees to 6e-9
    let p = rectangle_probability(
        &[-0.3, f64::NEG_INFINITY, 0.2],
        &[0.4, 0.1, 1.5],
        &[-0.4, 0.3, -0.6],
        &IntegratorConfig::default(),
    )
    .unwrap();
    assert!((p - 0.034_901_610_806_445_7).abs() < 1e-12, "{p}");
}

#[test]
fn three_species_full_space_has_unit_mass() {
    let inf = f64::INFINITY;
    let p = rectangle_probability(&[-inf; 3], &[inf; 3], &[-0.4, 0.3, -0.6], &IntegratorConfig::default()).unwrap();
    assert!((p - 1.0).abs() < 1e-9);
    // marginal of the first coordinate is standard normal
    let p = rectangle_probability(&[-inf, -inf, -inf], &[0.7, inf, inf], &[-0.4, 0.3, -0.6], &IntegratorConfig::default())
        .unwrap();
    assert!((p - normal::cdf(0.7)).abs() < 1e-9);
}

#[test]
fn too_many_species_rejected() {
    let structure = ModelStructure {
        species_names: (0..4).map(|k| format!("s{k}")).collect(),
        bases: (0..4).map(|_| BernsteinBasis::new(3, 5.0).unwrap()).collect(),
        shift: HarmonicDesign::new(1, vec![2010]).unwrap(),
        lambda: LambdaSpec::constant(),
        link: Link::Normal,
    };
    let marginals = (0..4)
        .map(|_| MarginalParams {
            theta: vec![-1.0, 0.0, 1.0],
            beta: vec![0.0, 0.0],
        })
        .collect();
    let model = JointModel::new(structure, marginals, LambdaParams::zeros(LambdaSpec::constant(), 4)).unwrap();
    let data = ObservationTable::new(
        (0..4).map(|k| format!("s{k}")).collect(),
        vec![Covariates::new(2010, 1)],
        vec![1, 2, 3, 4],
    )
    .unwrap();
    assert!(per_observation_exact(&model, &data, &IntegratorConfig::default()).is_err());
}
