//! Exact interval-censored log-likelihood, used only as a test oracle.
//!
//! Each observation contributes the probability that `h̃(Y) − η(x)`, a
//! `N(0, Σ)` vector with `Σ = Λ⁻¹Λ⁻ᵀ`, falls into the rectangle
//! `(h̃(y − 1) − η, h̃(y) − η]`. Writing `w = h̃ − η`, the density factorizes as
//! `∏_j φ(w_j + Σ_{k<j} λ_jk w_k)`, so the integral is computed sequentially:
//! every outer coordinate is integrated with adaptive Gauss–Kronrod (7/15)
//! over the rectangle side clipped to ±12 standard deviations, the innermost
//! coordinate is a closed-form normal CDF difference. Subdivision is
//! deterministic.

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::model::{n_pairs, pair_index, JointModel};
use crate::normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Half-width, in standard deviations, of the integration window.
const TAIL: f64 = 12.0;

/// Largest number of species the oracle accepts.
pub const MAX_SPECIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Relative tolerance on each rectangle probability.
    pub rel_tol: f64,
    /// Maximum number of interval bisections per one-dimensional integral.
    pub max_subdivisions: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_subdivisions: 200,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut values = [0.0; 15];
    values[7] = f(center)?;
    for k in 0..7 {
        let dx = half * XGK[k];
        values[k] = f(center - dx)?;
        values[14 - k] = f(center + dx)?;
    }
    let weight = |k: usize| WGK[k.min(14 - k)];
    let mut kron = 0.0;
    let mut gauss = WG[3] * values[7];
    let mut abs = 0.0;
    for (k, &v) in values.iter().enumerate() {
        kron += weight(k) * v;
        abs += weight(k) * v.abs();
    }
    for k in (1..7).step_by(2) {
        gauss += WG[k / 2] * (values[k] + values[14 - k]);
    }
    let mean = 0.5 * kron;
    let asc: f64 = values.iter().enumerate().map(|(k, v)| weight(k) * (v - mean).abs()).sum();
    // QUADPACK's scaling of |K − G|, which on its own overstates the error of
    // the 15-point rule by orders of magnitude for smooth integrands
    let (result, asc, abs) = (kron * half, asc * half.abs(), abs * half.abs());
    let mut err = ((kron - gauss) * half).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs);
    }
    Ok((result, err))
}

/// Globally adaptive Gauss–Kronrod on `[a, b]`: bisect the interval with the
/// largest error estimate (lowest index on ties) until the summed error is
/// below `rel_tol · |integral|`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, cfg: &IntegratorConfig) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if b <= a {
        return Ok((0.0, 0.0));
    }
    let (v, e) = kronrod(&mut f, a, b)?;
    let mut parts = vec![(a, b, v, e)];
    for _ in 0..cfg.max_subdivisions {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= cfg.rel_tol * total.abs() || err == 0.0 {
            return Ok((total, err));
        }
        let worst = parts
            .iter()
            .enumerate()
            .fold(0, |best, (k, p)| if p.3 > parts[best].3 { k } else { best });
        let (lo, hi, _, _) = parts[worst];
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        let (v1, e1) = kronrod(&mut f, lo, mid)?;
        let (v2, e2) = kronrod(&mut f, mid, hi)?;
        parts[worst] = (lo, mid, v1, e1);
        parts.insert(worst + 1, (mid, hi, v2, e2));
    }
    let total: f64 = parts.iter().map(|p| p.2).sum();
    let err: f64 = parts.iter().map(|p| p.3).sum();
    if err <= cfg.rel_tol * total.abs() {
        Ok((total, err))
    } else {
        Err(Error::Integration {
            requested: cfg.rel_tol,
            achieved: if total != 0.0 { err / total.abs() } else { err },
        })
    }
}

/// `P(lower < W ≤ upper)` for `W` with `ΛW ~ N(0, I)`; `lambda` holds the
/// packed lower-triangular entries of `Λ`.
pub fn rectangle_probability(
    lower: &[f64],
    upper: &[f64],
    lambda: &[f64],
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let j = lower.len();
    if upper.len() != j || lambda.len() != n_pairs(j) {
        return Err(Error::Input("rectangle limits and Λ entries disagree in size".into()));
    }
    if j == 0 {
        return Ok(1.0);
    }
    let mut w = vec![0.0; j];
    level(0, lower, upper, lambda, &mut w, cfg)
}

fn level(j: usize, lower: &[f64], upper: &[f64], lambda: &[f64], w: &mut Vec<f64>, cfg: &IntegratorConfig) -> Result<f64> {
    let mut c = 0.0;
    for k in 0..j {
        c += lambda[pair_index(j, k)] * w[k];
    }
    let a = lower[j] + c;
    let b = upper[j] + c;
    if !(a < b) {
        return Ok(0.0);
    }
    if j + 1 == lower.len() {
        return Ok(normal::log_interval_prob(a, b).map(f64::exp).unwrap_or(0.0));
    }
    // the integrand φ(w + c)·P(rest | w) is smooth in w; outside ±TAIL around
    // its centre the neglected mass is below Φ(−TAIL)
    let lo = lower[j].max(-c - TAIL);
    let hi = upper[j].min(-c + TAIL);
    if !(lo < hi) {
        return Ok(0.0);
    }
    let (value, _) = integrate(
        |v| {
            w[j] = v;
            Ok(normal::pdf(v + c) * level(j + 1, lower, upper, lambda, w, cfg)?)
        },
        lo,
        hi,
        cfg,
    )?;
    Ok(value)
}

fn observation_limits(model: &JointModel, data: &ObservationTable, i: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let x = data.covariates()[i];
    let row = data.row(i);
    let j = model.n_species();
    let mut lower = Vec::with_capacity(j);
    let mut upper = Vec::with_capacity(j);
    for (s, &y) in row.iter().enumerate() {
        let eta = model.shift(s, x)?;
        upper.push(model.transform(s, f64::from(y))? - eta);
        lower.push(model.transform(s, f64::from(y) - 1.0)? - eta);
    }
    let lambda = model.lambda.values(Some(f64::from(x.day)))?;
    Ok((lower, upper, lambda))
}

/// Per-observation exact log-likelihood contributions.
pub fn per_observation_exact(model: &JointModel, data: &ObservationTable, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    model.link().ensure_supported()?;
    model.check_monotone()?;
    let j = model.n_species();
    if j > MAX_SPECIES {
        return Err(Error::Input(format!(
            "the exact likelihood is limited to {MAX_SPECIES} species, got {j}"
        )));
    }
    if data.n_species() != j {
        return Err(Error::Input("data and model disagree on the number of species".into()));
    }
    (0..data.n_rows())
        .into_par_iter()
        .map(|i| {
            let (lower, upper, lambda) = observation_limits(model, data, i)?;
            let p = rectangle_probability(&lower, &upper, &lambda, cfg)?;
            if p > 0.0 {
                Ok(p.ln())
            } else {
                Err(Error::Evaluation {
                    observation: i,
                    species: (0..j).find(|&s| !(lower[s] < upper[s])).unwrap_or(0),
                    reason: "zero-probability cell".into(),
                })
            }
        })
        .collect()
}

/// Exact log-likelihood `Σ_i log P(cell_i)`.
pub fn loglik_exact(model: &JointModel, data: &ObservationTable, cfg: &IntegratorConfig) -> Result<f64> {
    let per = per_observation_exact(model, data, cfg)?;
    Ok(per.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_integrates_polynomials_exactly() {
        let cfg = IntegratorConfig::default();
        let (v, _) = integrate(|x| Ok(x.powi(6) - 3.0 * x * x + 1.0), -1.0, 2.0, &cfg).unwrap();
        let want = (128.0 / 7.0 - 8.0 + 2.0) - (-1.0 / 7.0 + 1.0 - 1.0);
        assert!((v - want).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let cfg = IntegratorConfig::default();
        let (v, _) = integrate(|x: f64| Ok(1.0 / x.sqrt()), 0.0, 1.0, &cfg).unwrap();
        assert!((v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn univariate_rectangle_is_cdf_difference() {
        let p = rectangle_probability(&[-0.3], &[1.2], &[], &IntegratorConfig::default()).unwrap();
        assert!((p - (normal::cdf(1.2) - normal::cdf(-0.3))).abs() < 1e-15);
    }

    #[test]
    fn independent_rectangle_factorizes() {
        let lower = [f64::NEG_INFINITY, 0.4, -2.0];
        let upper = [0.1, 1.9, -1.0];
        let p = rectangle_probability(&lower, &upper, &[0.0; 3], &IntegratorConfig::default()).unwrap();
        let want: f64 = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| normal::cdf(*u) - normal::cdf(*l))
            .product();
        assert!((p - want).abs() < 1e-14 * want.max(1e-300) + 1e-16);
    }

    #[test]
    fn orthant_probability_matches_closed_form() {
        // P(W1 ≤ 0, W2 ≤ 0) for correlation ρ is 1/4 + asin(ρ)/(2π)
        let lambda: f64 = -0.7;
        let rho = -lambda / (1.0 + lambda * lambda).sqrt();
        let p = rectangle_probability(
            &[f64::NEG_INFINITY, f64::NEG_INFINITY],
            &[0.0, 0.0],
            &[lambda],
            &IntegratorConfig::default(),
        )
        .unwrap();
        let want = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
        assert!((p - want).abs() < 1e-9, "{p} vs {want}");
    }

    #[test]
    fn upper_tail_rectangle_keeps_precision() {
        let p = rectangle_probability(&[6.0, 5.0], &[6.5, 9.0], &[0.3], &IntegratorConfig::default()).unwrap();
        assert!(p > 0.0 && p < 1e-8);
        let q = rectangle_probability(&[6.0, 5.0], &[6.5, 9.0], &[0.0], &IntegratorConfig::default()).unwrap();
        let want = (normal::sf(6.0) - normal::sf(6.5)) * (normal::sf(5.0) - normal::sf(9.0));
        assert!((q - want).abs() < 1e-9 * want);
    }
}
