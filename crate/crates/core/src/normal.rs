//! Standard-normal distribution helpers with care for the tails.
//!
//! `log_interval_prob` is the workhorse of the discrete likelihood: it returns
//! `log(Φ(u) - Φ(l))` without cancellation when both limits sit in the same tail.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// `log(1/sqrt(2π))`
const LN_INV_SQRT_2PI: f64 = -0.918_938_533_204_672_8;

/// Floor applied to interval probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn log_pdf(x: f64) -> f64 {
    LN_INV_SQRT_2PI - 0.5 * x * x
}

pub fn cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate for large positive `x`.
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// `log Φ(x)`, using an asymptotic expansion deep in the lower tail.
pub fn log_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x > -30.0 {
        return cdf(x).ln();
    }
    // Mills ratio series: Φ(x) ≈ φ(x)/(-x) * (1 - 1/x² + 3/x⁴ - 15/x⁶)
    let x2 = x * x;
    let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    log_pdf(x) - (-x).ln() + series.ln()
}

/// `Φ⁻¹(p)` for `p` in `[0, 1]`.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    // polish the starting value with Halley steps against the accurate CDF
    for _ in 0..2 {
        // Φ(x) − p, evaluated in whichever tail keeps precision
        let err = if x > 0.0 { (1.0 - p) - sf(x) } else { cdf(x) - p };
        let dens = pdf(x);
        if dens == 0.0 || err == 0.0 {
            break;
        }
        let u = err / dens;
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// `log(Φ(upper) - Φ(lower))` for `lower <= upper`; `lower` may be `-∞`.
///
/// Returns `None` when the interval carries no mass at double precision
/// (`lower >= upper`, or both limits beyond the representable tail).
pub fn log_interval_prob(lower: f64, upper: f64) -> Option<f64> {
    if !(lower < upper) {
        return None;
    }
    let value = if lower == f64::NEG_INFINITY {
        log_cdf(upper)
    } else if lower > 0.0 {
        // both in the upper tail: Φ(u) - Φ(l) = Q(l) - Q(u)
        let log_ql = log_cdf(-lower);
        let log_qu = log_cdf(-upper);
        log_ql + log1m_exp(log_qu - log_ql)
    } else if upper < 0.0 {
        let log_u = log_cdf(upper);
        let log_l = log_cdf(lower);
        log_u + log1m_exp(log_l - log_u)
    } else {
        // straddles zero, the difference is at least of order min(|l|, u)
        (cdf(upper) - cdf(lower)).ln()
    };
    if value.is_finite() {
        Some(value)
    } else {
        None
    }
}

/// `log(1 - exp(a))` for `a <= 0`.
fn log1m_exp(a: f64) -> f64 {
    if a > -std::f64::consts::LN_2 {
        (-a.exp_m1()).ln()
    } else {
        (-a.exp()).ln_1p()
    }
}
