#![allow(dead_code)]

use countcopula::model::{Covariates, JointModel, LambdaParams, LambdaSpec, Link, MarginalParams, ModelStructure};
use countcopula::simulate::{rng_for, simulate_table};
use countcopula::{BernsteinBasis, HarmonicDesign, ObservationTable};

pub const SUPPORT: f64 = 60.0;

/// Constant-Λ model with `tau.len()` pairs, one harmonic and two years.
pub fn truth(n_species: usize, tau: &[f64]) -> JointModel {
    let thetas = [
        [-1.2, -0.2, 0.5, 1.1, 1.7, 2.3, 3.2],
        [-0.8, 0.1, 0.7, 1.2, 1.8, 2.5, 3.4],
        [-1.5, -0.4, 0.3, 1.0, 1.6, 2.4, 3.3],
    ];
    let betas = [[0.3, 0.5, -0.2], [-0.2, -0.3, 0.4], [0.1, 0.2, 0.6]];
    let structure = ModelStructure {
        species_names: (0..n_species).map(|k| format!("s{k}")).collect(),
        bases: (0..n_species).map(|_| BernsteinBasis::new(7, SUPPORT).unwrap()).collect(),
        shift: HarmonicDesign::new(1, vec![2010, 2011]).unwrap(),
        lambda: LambdaSpec::constant(),
        link: Link::Normal,
    };
    let marginals = (0..n_species)
        .map(|k| MarginalParams {
            theta: thetas[k].to_vec(),
            beta: betas[k].to_vec(),
        })
        .collect();
    let mut lambda = LambdaParams::zeros(LambdaSpec::constant(), n_species);
    lambda.tau = tau.to_vec();
    JointModel::new(structure, marginals, lambda).unwrap()
}

pub fn schedule(n: usize) -> Vec<Covariates> {
    (0..n)
        .map(|i| Covariates::new(2010 + (i % 2) as i32, (1 + (i * 37) % 365) as u16))
        .collect()
}

pub fn sample(model: &JointModel, n: usize, seed: u64, stream: u64) -> ObservationTable {
    simulate_table(model, &schedule(n), &mut rng_for(seed, stream)).unwrap().0
}

/// Like [`truth`] for three species, but with counts well away from zero.
pub fn truth_high(tau: &[f64]) -> JointModel {
    let thetas = [
        [-3.5, -1.5, -0.3, 0.5, 1.2, 2.0, 6.0],
        [-3.0, -1.2, -0.2, 0.6, 1.4, 2.2, 6.0],
        [-3.8, -1.8, -0.5, 0.4, 1.0, 1.9, 6.0],
    ];
    let mut model = truth(3, tau);
    for (m, t) in model.marginals.iter_mut().zip(thetas) {
        m.theta = t.to_vec();
    }
    model
}
