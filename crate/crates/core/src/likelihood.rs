//! Log-likelihoods of the joint count model and their analytic gradients.
//!
//! Both approximations work on shifted transformation values
//! `h̃_j(·) − η_j(x)` and on `Λ(x)` applied in its triangular form:
//!
//! * continuous: counts are replaced by interval midpoints and the Gaussian
//!   transformation density (log-density plus log-Jacobian) is used;
//! * discrete: a product over species of normal CDF differences where
//!   conditioning species enter through their midpoint values.
//!
//! Sums over observations are reduced block-wise with fixed block size and
//! pairwise combination, so results are bit-stable regardless of thread count.

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::model::{n_pairs, pair_index, JointModel, ModelStructure};
use crate::normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Observations per reduction block.
pub const BLOCK_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodKind {
    ContinuousApprox,
    DiscreteApprox,
    /// Multivariate normal rectangle probabilities; evaluation only.
    ExactOracle,
}

/// Interval midpoint: `y − 0.5` for `y ≥ 1`, `0` for `y = 0`.
pub fn midpoint(y: u32) -> f64 {
    if y == 0 {
        0.0
    } else {
        f64::from(y) - 0.5
    }
}

/// Component-wise [`midpoint`]; negative counts are rejected.
pub fn midpoint_transform(counts: &[i64]) -> Result<Vec<f64>> {
    counts
        .iter()
        .map(|&y| {
            if y < 0 {
                Err(Error::Input(format!("negative count {y}")))
            } else {
                Ok(if y == 0 { 0.0 } else { y as f64 - 0.5 })
            }
        })
        .collect()
}

/// Log-likelihood value, optional gradient (packed layout), and the number
/// of cells whose probability was floored at [`normal::PROB_FLOOR`].
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
    pub floored: usize,
}

/// Basis rows and design rows for every observation, precomputed once per
/// (structure, data) pair.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    n: usize,
    j: usize,
    orders: Vec<usize>,
    q: usize,
    w: usize,
    /// per species, `N × P_j`
    upper: Vec<Vec<f64>>,
    lower: Vec<Vec<f64>>,
    middle: Vec<Vec<f64>>,
    middle_deriv: Vec<Vec<f64>>,
    /// `N × J`: count is positive (has a finite lower limit)
    has_lower: Vec<bool>,
    shift: Vec<f64>,
    lambda_design: Vec<f64>,
    /// counts clamped to the top of a Bernstein support
    pub clamped: usize,
}

impl Prepared {
    pub(crate) fn new(structure: &ModelStructure, data: &ObservationTable) -> Result<Self> {
        structure.validate()?;
        let j = structure.n_species();
        if data.n_species() != j {
            return Err(Error::Input(format!(
                "data has {} species, the model {j}",
                data.n_species()
            )));
        }
        let n = data.n_rows();
        let q = structure.shift_width();
        let w = structure.lambda.pair_design_width();
        let orders: Vec<usize> = structure.bases.iter().map(|b| b.len()).collect();
        let mut upper: Vec<Vec<f64>> = orders.iter().map(|&p| vec![0.0; n * p]).collect();
        let mut lower = upper.clone();
        let mut middle = upper.clone();
        let mut middle_deriv = upper.clone();
        let mut has_lower = vec![false; n * j];
        let mut shift = vec![0.0; n * q];
        let mut lambda_design = vec![0.0; n * w];
        let mut clamped = 0;
        for i in 0..n {
            let x = data.covariates()[i];
            structure
                .shift
                .fill_without_intercept(x.year, x.day, &mut shift[i * q..(i + 1) * q])?;
            structure
                .lambda
                .fill_design(f64::from(x.day), &mut lambda_design[i * w..(i + 1) * w]);
            for (s, &y) in data.row(i).iter().enumerate() {
                let basis = &structure.bases[s];
                let p = orders[s];
                let range = i * p..(i + 1) * p;
                if basis.fill_row(f64::from(y), &mut upper[s][range.clone()]) {
                    clamped += 1;
                }
                if y > 0 {
                    has_lower[i * j + s] = true;
                    basis.fill_row(f64::from(y - 1), &mut lower[s][range.clone()]);
                }
                let mid = midpoint(y);
                basis.fill_row(mid, &mut middle[s][range.clone()]);
                basis.fill_deriv(mid, &mut middle_deriv[s][range]);
            }
        }
        Ok(Self {
            n,
            j,
            orders,
            q,
            w,
            upper,
            lower,
            middle,
            middle_deriv,
            has_lower,
            shift,
            lambda_design,
            clamped,
        })
    }

    pub(crate) fn n_obs(&self) -> usize {
        self.n
    }

    /// Total log-likelihood (and gradient) at packed parameters `theta`.
    pub(crate) fn evaluate(
        &self,
        structure: &ModelStructure,
        theta: &[f64],
        kind: LikelihoodKind,
        want_gradient: bool,
    ) -> Result<Evaluation> {
        if kind == LikelihoodKind::ExactOracle {
            return Err(Error::Input(
                "the exact likelihood is evaluated through the quadrature oracle".into(),
            ));
        }
        let layout = Layout::new(structure, theta)?;
        let n_blocks = self.n.div_ceil(BLOCK_SIZE);
        let blocks: Vec<Result<Evaluation>> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let start = b * BLOCK_SIZE;
                let end = (start + BLOCK_SIZE).min(self.n);
                let mut scratch = Scratch::new(self.j);
                let mut value = 0.0;
                let mut floored = 0;
                let mut gradient = want_gradient.then(|| vec![0.0; theta.len()]);
                for i in start..end {
                    let (v, f) = self.observation(i, &layout, kind, &mut scratch, gradient.as_deref_mut())?;
                    value += v;
                    floored += f;
                }
                Ok(Evaluation {
                    value,
                    gradient,
                    floored,
                })
            })
            .collect();
        let blocks = blocks.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(pairwise_sum(blocks).unwrap_or(Evaluation {
            value: 0.0,
            gradient: want_gradient.then(|| vec![0.0; theta.len()]),
            floored: 0,
        }))
    }

    /// Per-observation log-likelihood contributions.
    pub(crate) fn per_observation(
        &self,
        structure: &ModelStructure,
        theta: &[f64],
        kind: LikelihoodKind,
    ) -> Result<Vec<f64>> {
        let layout = Layout::new(structure, theta)?;
        (0..self.n)
            .into_par_iter()
            .map_init(
                || Scratch::new(self.j),
                |scratch, i| self.observation(i, &layout, kind, scratch, None).map(|(v, _)| v),
            )
            .collect()
    }

    fn dot(row: &[f64], coef: &[f64]) -> f64 {
        row.iter().zip(coef).map(|(a, b)| a * b).sum()
    }

    fn observation(
        &self,
        i: usize,
        layout: &Layout<'_>,
        kind: LikelihoodKind,
        sc: &mut Scratch,
        gradient: Option<&mut [f64]>,
    ) -> Result<(f64, usize)> {
        let j = self.j;
        let x = &self.shift[i * self.q..(i + 1) * self.q];
        let wrow = &self.lambda_design[i * self.w..(i + 1) * self.w];
        for s in 0..j {
            let p = self.orders[s];
            let (theta, beta) = layout.marginal(s);
            let r = i * p..(i + 1) * p;
            let eta = Self::dot(x, beta);
            sc.eta[s] = eta;
            sc.upper[s] = Self::dot(&self.upper[s][r.clone()], theta) - eta;
            sc.lower[s] = if self.has_lower[i * j + s] {
                Self::dot(&self.lower[s][r.clone()], theta) - eta
            } else {
                f64::NEG_INFINITY
            };
            sc.middle[s] = Self::dot(&self.middle[s][r.clone()], theta) - eta;
            if kind == LikelihoodKind::ContinuousApprox {
                sc.deriv[s] = Self::dot(&self.middle_deriv[s][r], theta);
            }
        }
        for p in 0..layout.n_pairs {
            sc.lambda[p] = layout.lambda_value(p, wrow);
        }

        let mut value = 0.0;
        let mut floored = 0;
        for s in 0..j {
            let mut shift = 0.0;
            for k in 0..s {
                shift += sc.lambda[pair_index(s, k)] * sc.middle[k];
            }
            match kind {
                LikelihoodKind::DiscreteApprox => {
                    let u = sc.upper[s] + shift;
                    let l = sc.lower[s] + shift;
                    let log_d = match normal::log_interval_prob(l, u) {
                        Some(v) => v,
                        // positive width that underflows: floored below
                        None if l < u => f64::NEG_INFINITY,
                        None => {
                            return Err(Error::Evaluation {
                                observation: i,
                                species: s,
                                reason: format!("zero-probability cell (lower {l}, upper {u})"),
                            })
                        }
                    };
                    if log_d < normal::PROB_FLOOR.ln() {
                        floored += 1;
                        value += normal::PROB_FLOOR.ln();
                        sc.ratio_upper[s] = 0.0;
                        sc.ratio_lower[s] = 0.0;
                    } else {
                        value += log_d;
                        sc.ratio_upper[s] = (normal::log_pdf(u) - log_d).exp();
                        sc.ratio_lower[s] = if l.is_finite() {
                            (normal::log_pdf(l) - log_d).exp()
                        } else {
                            0.0
                        };
                    }
                    sc.score[s] = sc.ratio_upper[s] - sc.ratio_lower[s];
                }
                LikelihoodKind::ContinuousApprox => {
                    let z = sc.middle[s] + shift;
                    let d = sc.deriv[s];
                    if !(d > 0.0) {
                        return Err(Error::Evaluation {
                            observation: i,
                            species: s,
                            reason: format!("transformation derivative {d} is not positive"),
                        });
                    }
                    value += normal::log_pdf(z) + d.ln();
                    sc.score[s] = -z;
                }
                LikelihoodKind::ExactOracle => unreachable!(),
            }
        }

        if let Some(grad) = gradient {
            // propagated score of species k through the conditioning terms
            for k in 0..j {
                let mut g = 0.0;
                for s in k + 1..j {
                    g += sc.score[s] * sc.lambda[pair_index(s, k)];
                }
                sc.propagated[k] = g;
            }
            for s in 0..j {
                let p = self.orders[s];
                let r = i * p..(i + 1) * p;
                let (t_off, b_off) = layout.marginal_offsets(s);
                let up = &self.upper[s][r.clone()];
                let mid = &self.middle[s][r.clone()];
                let gt = &mut grad[t_off..t_off + p];
                match kind {
                    LikelihoodKind::DiscreteApprox => {
                        let ru = sc.ratio_upper[s];
                        let rl = sc.ratio_lower[s];
                        let low = &self.lower[s][r.clone()];
                        let prop = sc.propagated[s];
                        for c in 0..p {
                            gt[c] += ru * up[c] - rl * low[c] + prop * mid[c];
                        }
                    }
                    _ => {
                        let dmid = &self.middle_deriv[s][r.clone()];
                        let inv_d = 1.0 / sc.deriv[s];
                        let own = sc.score[s] + sc.propagated[s];
                        for c in 0..p {
                            gt[c] += own * mid[c] + dmid[c] * inv_d;
                        }
                    }
                }
                let coef = -(sc.score[s] + sc.propagated[s]);
                for (g, xv) in grad[b_off..b_off + self.q].iter_mut().zip(x) {
                    *g += coef * xv;
                }
            }
            for s in 1..j {
                for k in 0..s {
                    let pidx = pair_index(s, k);
                    let d = sc.score[s] * sc.middle[k];
                    let off = layout.pair_offset(pidx);
                    grad[off] += d;
                    for (g, wv) in grad[off + 1..off + 1 + self.w].iter_mut().zip(wrow) {
                        *g += d * wv;
                    }
                }
            }
        }
        Ok((value, floored))
    }
}

struct Scratch {
    eta: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
    middle: Vec<f64>,
    deriv: Vec<f64>,
    lambda: Vec<f64>,
    ratio_upper: Vec<f64>,
    ratio_lower: Vec<f64>,
    score: Vec<f64>,
    propagated: Vec<f64>,
}

impl Scratch {
    fn new(j: usize) -> Self {
        Self {
            eta: vec![0.0; j],
            upper: vec![0.0; j],
            lower: vec![0.0; j],
            middle: vec![0.0; j],
            deriv: vec![0.0; j],
            lambda: vec![0.0; n_pairs(j)],
            ratio_upper: vec![0.0; j],
            ratio_lower: vec![0.0; j],
            score: vec![0.0; j],
            propagated: vec![0.0; j],
        }
    }
}

/// Packed-vector offsets resolved once per evaluation.
pub(crate) struct Layout<'a> {
    theta: &'a [f64],
    offsets: Vec<(usize, usize)>,
    orders: Vec<usize>,
    q: usize,
    pair_offsets: Vec<usize>,
    w: usize,
    n_pairs: usize,
}

impl<'a> Layout<'a> {
    pub(crate) fn new(structure: &ModelStructure, theta: &'a [f64]) -> Result<Self> {
        if theta.len() != structure.n_params() {
            return Err(Error::Input(format!(
                "parameter vector has length {}, expected {}",
                theta.len(),
                structure.n_params()
            )));
        }
        if let Some(bad) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("parameter {bad} is not finite")));
        }
        let j = structure.n_species();
        let q = structure.shift_width();
        let orders: Vec<usize> = structure.bases.iter().map(|b| b.len()).collect();
        let offsets = (0..j)
            .map(|s| {
                let o = structure.marginal_offset(s);
                (o, o + orders[s])
            })
            .collect();
        let pairs = n_pairs(j);
        Ok(Self {
            theta,
            offsets,
            orders,
            q,
            pair_offsets: (0..pairs).map(|p| structure.pair_offset(p)).collect(),
            w: structure.lambda.pair_design_width(),
            n_pairs: pairs,
        })
    }

    fn marginal(&self, s: usize) -> (&[f64], &[f64]) {
        let (t, b) = self.offsets[s];
        (&self.theta[t..t + self.orders[s]], &self.theta[b..b + self.q])
    }

    fn marginal_offsets(&self, s: usize) -> (usize, usize) {
        self.offsets[s]
    }

    fn pair_offset(&self, p: usize) -> usize {
        self.pair_offsets[p]
    }

    pub(crate) fn lambda_value(&self, p: usize, wrow: &[f64]) -> f64 {
        let off = self.pair_offsets[p];
        self.theta[off]
            + self.theta[off + 1..off + 1 + self.w]
                .iter()
                .zip(wrow)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

fn pairwise_sum(mut items: Vec<Evaluation>) -> Option<Evaluation> {
    if items.is_empty() {
        return None;
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut iter = items.into_iter();
        while let Some(mut a) = iter.next() {
            if let Some(b) = iter.next() {
                a.value += b.value;
                a.floored += b.floored;
                if let (Some(ga), Some(gb)) = (a.gradient.as_mut(), b.gradient.as_ref()) {
                    ga.iter_mut().zip(gb).for_each(|(x, y)| *x += y);
                }
            }
            next.push(a);
        }
        items = next;
    }
    items.pop()
}

fn evaluate_model(
    model: &JointModel,
    data: &ObservationTable,
    kind: LikelihoodKind,
    want_gradient: bool,
) -> Result<Evaluation> {
    model.link().ensure_supported()?;
    model.check_monotone()?;
    let prepared = Prepared::new(&model.structure, data)?;
    prepared.evaluate(&model.structure, &model.pack(), kind, want_gradient)
}

/// Continuous (midpoint) approximation of the log-likelihood.
pub fn loglik_continuous(model: &JointModel, data: &ObservationTable) -> Result<f64> {
    evaluate_model(model, data, LikelihoodKind::ContinuousApprox, false).map(|e| e.value)
}

/// Gradient of [`loglik_continuous`] in the packed parameter layout.
pub fn grad_continuous(model: &JointModel, data: &ObservationTable) -> Result<Vec<f64>> {
    evaluate_model(model, data, LikelihoodKind::ContinuousApprox, true).map(|e| e.gradient.unwrap())
}

/// Discrete approximation of the log-likelihood.
pub fn loglik_discrete(model: &JointModel, data: &ObservationTable) -> Result<f64> {
    evaluate_model(model, data, LikelihoodKind::DiscreteApprox, false).map(|e| e.value)
}

/// Gradient of [`loglik_discrete`] in the packed parameter layout.
pub fn grad_discrete(model: &JointModel, data: &ObservationTable) -> Result<Vec<f64>> {
    evaluate_model(model, data, LikelihoodKind::DiscreteApprox, true).map(|e| e.gradient.unwrap())
}

/// Value, gradient and floor diagnostics in one pass.
pub fn evaluate(model: &JointModel, data: &ObservationTable, kind: LikelihoodKind) -> Result<Evaluation> {
    evaluate_model(model, data, kind, true)
}

/// Per-observation contributions for either approximation.
pub fn per_observation(model: &JointModel, data: &ObservationTable, kind: LikelihoodKind) -> Result<Vec<f64>> {
    model.link().ensure_supported()?;
    model.check_monotone()?;
    if kind == LikelihoodKind::ExactOracle {
        return crate::exact::per_observation_exact(model, data, &crate::exact::IntegratorConfig::default());
    }
    let prepared = Prepared::new(&model.structure, data)?;
    prepared.per_observation(&model.structure, &model.pack(), kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{BernsteinBasis, HarmonicDesign};
    use crate::model::tests::random_model;
    use crate::model::{Covariates, LambdaParams, LambdaSpec, Link, MarginalParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(rng: &mut impl Rng, n: usize, hi: &[u32], years: &[i32]) -> ObservationTable {
        let j = hi.len();
        let covariates = (0..n)
            .map(|_| Covariates::new(years[rng.random_range(0..years.len())], rng.random_range(1..=365)))
            .collect();
        let counts = (0..n * j).map(|k| rng.random_range(0..=hi[k % j])).collect();
        ObservationTable::new((0..j).map(|s| format!("s{s}")).collect(), covariates, counts).unwrap()
    }

    #[test]
    fn midpoints() {
        assert_eq!(midpoint_transform(&[0, 1, 7]).unwrap(), vec![0.0, 0.5, 6.5]);
        assert!(midpoint_transform(&[3, -1]).is_err());
    }

    fn identity_model(hi: f64) -> JointModel {
        // α(y) = y on [0, hi] with P = 2, no shift
        let structure = ModelStructure {
            species_names: vec!["a".into()],
            bases: vec![BernsteinBasis::new(2, hi).unwrap()],
            shift: HarmonicDesign::new(0, vec![2002]).unwrap(),
            lambda: LambdaSpec::constant(),
            link: Link::Normal,
        };
        JointModel::new(
            structure,
            vec![MarginalParams {
                theta: vec![0.0, hi],
                beta: vec![],
            }],
            LambdaParams::zeros(LambdaSpec::constant(), 1),
        )
        .unwrap()
    }

    #[test]
    fn continuous_reduces_to_gaussian_for_identity_transform() {
        let model = identity_model(10.0);
        let counts = vec![0u32, 1, 2, 5, 3];
        let data = ObservationTable::new(
            vec!["a".into()],
            vec![Covariates::new(2002, 1); counts.len()],
            counts.clone(),
        )
        .unwrap();
        let want: f64 = counts.iter().map(|&y| normal::log_pdf(midpoint(y))).sum();
        let got = loglik_continuous(&model, &data).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn independence_factorizes_both_approximations() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut model = random_model(&mut rng, 3, &[12.0, 9.0, 15.0], vec![2002, 2003], LambdaSpec::constant());
        model.lambda.tau = vec![0.0; 3];
        let data = random_data(&mut rng, 40, &[12, 9, 15], &[2002, 2003]);
        let disc = per_observation(&model, &data, LikelihoodKind::DiscreteApprox).unwrap();
        for (i, v) in disc.iter().enumerate() {
            let x = data.covariates()[i];
            let want: f64 = (0..3)
                .map(|s| model.marginal_pmf(s, f64::from(data.row(i)[s]), x).unwrap().ln())
                .sum();
            assert!((v - want).abs() < 1e-12, "obs {i}: {v} vs {want}");
            assert!(*v <= 0.0);
        }
        // continuous: sum of univariate continuous log-likelihoods
        let joint = loglik_continuous(&model, &data).unwrap();
        let mut separate = 0.0;
        for s in 0..3 {
            let structure = ModelStructure {
                species_names: vec![model.structure.species_names[s].clone()],
                bases: vec![model.structure.bases[s].clone()],
                shift: model.structure.shift.clone(),
                lambda: LambdaSpec::constant(),
                link: Link::Normal,
            };
            let single = JointModel::new(
                structure,
                vec![model.marginals[s].clone()],
                LambdaParams::zeros(LambdaSpec::constant(), 1),
            )
            .unwrap();
            let col = data.reorder_species(&[s, (s + 1) % 3, (s + 2) % 3]).unwrap();
            let col = ObservationTable::new(
                vec![col.species_names()[0].clone()],
                col.covariates().to_vec(),
                col.column(0),
            )
            .unwrap();
            separate += loglik_continuous(&single, &col).unwrap();
        }
        assert!((joint - separate).abs() < 1e-9 * joint.abs());
    }

    #[test]
    fn univariate_discrete_equals_pmf() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_model(&mut rng, 1, &[20.0], vec![2002], LambdaSpec::constant());
        let data = random_data(&mut rng, 30, &[20], &[2002]);
        let per = per_observation(&model, &data, LikelihoodKind::DiscreteApprox).unwrap();
        for (i, v) in per.iter().enumerate() {
            let want = model.marginal_pmf(0, f64::from(data.row(i)[0]), data.covariates()[i]).unwrap();
            assert!((v.exp() - want).abs() < 1e-14);
        }
    }

    fn fd_gradient(model: &JointModel, data: &ObservationTable, kind: LikelihoodKind) -> Vec<f64> {
        let prepared = Prepared::new(&model.structure, data).unwrap();
        let theta = model.pack();
        (0..theta.len())
            .map(|k| {
                let h = 1e-5 * theta[k].abs().max(1.0);
                let mut plus = theta.clone();
                plus[k] += h;
                let mut minus = theta.clone();
                minus[k] -= h;
                let fp = prepared.evaluate(&model.structure, &plus, kind, false).unwrap().value;
                let fm = prepared.evaluate(&model.structure, &minus, kind, false).unwrap().value;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..10 {
            let j = 2 + trial % 2;
            let spec = if trial % 3 == 0 {
                LambdaSpec::covariate_dependent(2)
            } else {
                LambdaSpec::constant()
            };
            let hi: Vec<u32> = (0..j).map(|_| rng.random_range(5..30)).collect();
            let hf: Vec<f64> = hi.iter().map(|&h| f64::from(h)).collect();
            let model = random_model(&mut rng, j, &hf, vec![2002, 2003, 2004], spec);
            let data = random_data(&mut rng, 25, &hi, &[2002, 2003, 2004]);
            for kind in [LikelihoodKind::DiscreteApprox, LikelihoodKind::ContinuousApprox] {
                let analytic = evaluate(&model, &data, kind).unwrap().gradient.unwrap();
                let fd = fd_gradient(&model, &data, kind);
                for (k, (a, f)) in analytic.iter().zip(&fd).enumerate() {
                    let rel = (a - f).abs() / f.abs().max(1e-3);
                    assert!(rel < 1e-5, "trial {trial} {kind:?} param {k}: {a} vs {f}");
                }
            }
        }
    }

    #[test]
    fn gradient_step_increases_loglik() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = random_model(&mut rng, 3, &[10.0, 10.0, 10.0], vec![2002], LambdaSpec::constant());
        let data = random_data(&mut rng, 50, &[10, 10, 10], &[2002]);
        for kind in [LikelihoodKind::DiscreteApprox, LikelihoodKind::ContinuousApprox] {
            let e = evaluate(&model, &data, kind).unwrap();
            let g = e.gradient.unwrap();
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let theta: Vec<f64> = model.pack().iter().zip(&g).map(|(t, d)| t + 1e-6 * d / norm).collect();
            let stepped = JointModel::from_packed(model.structure.clone(), &theta).unwrap();
            let after = evaluate(&stepped, &data, kind).unwrap().value;
            assert!(after > e.value);
        }
    }

    #[test]
    fn zero_probability_cell_is_reported() {
        let model = identity_model(4.0);
        // counts 5 and 6 both clamp to the top of [0, 4]: empty cell for 6
        let data = ObservationTable::new(vec!["a".into()], vec![Covariates::new(2002, 1); 2], vec![2, 6]).unwrap();
        match loglik_discrete(&model, &data) {
            Err(Error::Evaluation { observation, species, .. }) => {
                assert_eq!((observation, species), (1, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_coefficients_are_rejected() {
        let mut model = identity_model(4.0);
        model.marginals[0].theta = vec![1.0, 0.0];
        let data = ObservationTable::new(vec!["a".into()], vec![Covariates::new(2002, 1)], vec![2]).unwrap();
        assert!(matches!(loglik_continuous(&model, &data), Err(Error::Parameter(_))));
    }

    #[test]
    fn reduction_is_independent_of_thread_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let model = random_model(&mut rng, 3, &[30.0, 30.0, 30.0], vec![2002, 2003], LambdaSpec::constant());
        let data = random_data(&mut rng, 3000, &[30, 30, 30], &[2002, 2003]);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| evaluate(&model, &data, LikelihoodKind::DiscreteApprox).unwrap());
        let b = four.install(|| evaluate(&model, &data, LikelihoodKind::DiscreteApprox).unwrap());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.gradient, b.gradient);
    }

    #[test]
    fn enumeration_sums_to_one_under_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut model = random_model(&mut rng, 2, &[10.0, 10.0], vec![2002], LambdaSpec::constant());
        model.lambda.tau = vec![0.0];
        let x = Covariates::new(2002, 45);
        let mut covariates = Vec::new();
        let mut counts = Vec::new();
        for a in 0..=10u32 {
            for b in 0..=10u32 {
                covariates.push(x);
                counts.extend([a, b]);
            }
        }
        let data = ObservationTable::new(vec!["s0".into(), "s1".into()], covariates, counts).unwrap();
        let per = per_observation(&model, &data, LikelihoodKind::DiscreteApprox).unwrap();
        let total: f64 = per.iter().map(|v| v.exp()).sum();
        let tails: Vec<f64> = (0..2).map(|s| model.tail_mass(s, x).unwrap()).collect();
        // clamped tail mass is the only missing probability
        let expected = (1.0 - tails[0]) * (1.0 - tails[1]);
        assert!((total - expected).abs() < 1e-6);
        assert!(per.iter().all(|v| *v <= 0.0));
    }
}
