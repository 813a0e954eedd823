//! Basis and design matrices.
//!
//! The transformation function of every species is a polynomial in Bernstein
//! form on `[0, max count]`; the shift term and the covariate-dependent
//! dependence entries use a sum of annual sinusoids.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Number of Bernstein coefficients used when a species has no explicit order.
pub const DEFAULT_BERNSTEIN_COEFFICIENTS: usize = 7;

/// Days on the annual grid; February 29 is removed at ingestion.
pub const DAYS_PER_YEAR: u16 = 365;

/// Bernstein polynomial basis with `P` coefficients on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinBasis {
    order_plus_one: usize,
    lo: f64,
    hi: f64,
}

/// Result of evaluating the basis at a count cut-off.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisEval {
    /// The cut-off is negative; any CDF built on it is 0.
    MinusInfinity,
    Row { values: Vec<f64>, clamped: bool },
}

impl BasisEval {
    /// `a(y)ᵀ coef`, or `-∞` for the sentinel.
    pub fn dot(&self, coef: &[f64]) -> f64 {
        match self {
            BasisEval::MinusInfinity => f64::NEG_INFINITY,
            BasisEval::Row { values, .. } => values.iter().zip(coef).map(|(a, b)| a * b).sum(),
        }
    }
}

impl BernsteinBasis {
    /// Basis on `[0, hi]`.
    pub fn new(order_plus_one: usize, hi: f64) -> Result<Self> {
        Self::with_support(order_plus_one, 0.0, hi)
    }

    pub fn with_support(order_plus_one: usize, lo: f64, hi: f64) -> Result<Self> {
        if order_plus_one == 0 {
            return Err(Error::Input("Bernstein basis needs at least one coefficient".into()));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::Input(format!(
                "Bernstein support [{lo}, {hi}] must be a finite interval with lo < hi"
            )));
        }
        Ok(Self {
            order_plus_one,
            lo,
            hi,
        })
    }

    pub fn len(&self) -> usize {
        self.order_plus_one
    }

    pub fn is_empty(&self) -> bool {
        self.order_plus_one == 0
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Clamp `y` to the support, reporting whether clamping happened.
    pub fn clamp(&self, y: f64) -> (f64, bool) {
        if y < self.lo {
            (self.lo, true)
        } else if y > self.hi {
            (self.hi, true)
        } else {
            (y, false)
        }
    }

    fn unit(&self, y: f64) -> f64 {
        (y - self.lo) / (self.hi - self.lo)
    }

    /// Basis values at a real point (no flooring), clamped to the support.
    pub fn row(&self, y: f64) -> (Vec<f64>, bool) {
        let mut out = vec![0.0; self.order_plus_one];
        let clamped = self.fill_row(y, &mut out);
        (out, clamped)
    }

    pub(crate) fn fill_row(&self, y: f64, out: &mut [f64]) -> bool {
        let (y, clamped) = self.clamp(y);
        bernstein_values(self.unit(y), out);
        clamped
    }

    /// `a(⌊y⌋)`; negative cut-offs map to the `-∞` sentinel.
    pub fn eval(&self, y: f64) -> Result<BasisEval> {
        if y.is_nan() || y == f64::INFINITY {
            return Err(Error::Input(format!("cannot evaluate Bernstein basis at {y}")));
        }
        if y < 0.0 {
            return Ok(BasisEval::MinusInfinity);
        }
        let (values, clamped) = self.row(y.floor());
        Ok(BasisEval::Row { values, clamped })
    }

    /// Derivative row such that `α'(y) = row · ϑ`, for `y` inside the open support.
    pub fn deriv(&self, y: f64) -> Result<Vec<f64>> {
        if !(y > self.lo && y < self.hi) {
            return Err(Error::Input(format!(
                "derivative requested at {y}, outside the open support ({}, {})",
                self.lo, self.hi
            )));
        }
        let mut out = vec![0.0; self.order_plus_one];
        self.fill_deriv(y, &mut out);
        Ok(out)
    }

    /// Derivative row on the closed support; the endpoints use the one-sided
    /// derivative of the polynomial.
    pub(crate) fn fill_deriv(&self, y: f64, out: &mut [f64]) {
        let p = self.order_plus_one;
        out.iter_mut().for_each(|v| *v = 0.0);
        if p == 1 {
            return;
        }
        let (y, _) = self.clamp(y);
        let n = (p - 1) as f64;
        let scale = n / (self.hi - self.lo);
        let mut lower = vec![0.0; p - 1];
        bernstein_values(self.unit(y), &mut lower);
        for k in 0..p {
            let left = if k > 0 { lower[k - 1] } else { 0.0 };
            let right = if k < p - 1 { lower[k] } else { 0.0 };
            out[k] = scale * (left - right);
        }
    }

    /// Polynomial value `α(y) = a(y)ᵀϑ` at a real point (clamped).
    pub fn value(&self, coef: &[f64], y: f64) -> f64 {
        let (row, _) = self.row(y);
        row.iter().zip(coef).map(|(a, b)| a * b).sum()
    }

    /// `α'(y)` on the closed support.
    pub fn derivative_value(&self, coef: &[f64], y: f64) -> f64 {
        let mut row = vec![0.0; self.order_plus_one];
        self.fill_deriv(y, &mut row);
        row.iter().zip(coef).map(|(a, b)| a * b).sum()
    }
}

/// Bernstein basis of degree `out.len() - 1` at `t ∈ [0, 1]` via the
/// triangular recurrence, which keeps the partition of unity to rounding.
fn bernstein_values(t: f64, out: &mut [f64]) {
    let n = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    out[0] = 1.0;
    let s = 1.0 - t;
    for degree in 1..n {
        let mut prev = 0.0;
        for k in 0..=degree {
            let current = out[k];
            out[k] = s * current + t * prev;
            prev = current;
        }
    }
}

/// Shift design made of year indicators and annual harmonics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicDesign {
    harmonics: usize,
    years: Vec<i32>,
}

impl HarmonicDesign {
    /// `years[0]` is the baseline year.
    pub fn new(harmonics: usize, years: Vec<i32>) -> Result<Self> {
        if years.is_empty() {
            return Err(Error::Input("harmonic design needs at least one year".into()));
        }
        let mut seen = years.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != years.len() {
            return Err(Error::Input("duplicate years in harmonic design".into()));
        }
        Ok(Self { harmonics, years })
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn baseline_year(&self) -> i32 {
        self.years[0]
    }

    /// Length of a full row: intercept, non-baseline year indicators, harmonics.
    pub fn width(&self) -> usize {
        1 + self.years.len() - 1 + 2 * self.harmonics
    }

    /// Row length once the intercept is dropped (the form used in models,
    /// where the Bernstein coefficients already carry the intercept).
    pub fn width_without_intercept(&self) -> usize {
        self.width() - 1
    }

    /// `sin(k·2π·d/365), cos(k·2π·d/365)` for `k = 1..S`, interleaved.
    pub fn harmonic_block(&self, day: f64) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.harmonics];
        fill_harmonics(self.harmonics, day, &mut out);
        out
    }

    fn check(&self, year: i32, day: u16) -> Result<usize> {
        if !(1..=DAYS_PER_YEAR).contains(&day) {
            return Err(Error::Input(format!("day {day} outside 1..=365")));
        }
        self.years
            .iter()
            .position(|&y| y == year)
            .ok_or_else(|| Error::Input(format!("year {year} is not part of the design")))
    }

    /// Full design row `(1, year indicators, harmonics)`.
    pub fn shift_row(&self, year: i32, day: u16) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        out[0] = 1.0;
        self.fill_without_intercept(year, day, &mut out[1..])?;
        Ok(out)
    }

    /// Design row without the intercept column.
    pub fn shift_row_without_intercept(&self, year: i32, day: u16) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width_without_intercept()];
        self.fill_without_intercept(year, day, &mut out)?;
        Ok(out)
    }

    pub(crate) fn fill_without_intercept(&self, year: i32, day: u16, out: &mut [f64]) -> Result<()> {
        let index = self.check(year, day)?;
        let n_years = self.years.len() - 1;
        out[..n_years].iter_mut().for_each(|v| *v = 0.0);
        if index > 0 {
            out[index - 1] = 1.0;
        }
        fill_harmonics(self.harmonics, f64::from(day), &mut out[n_years..]);
        Ok(())
    }
}

pub(crate) fn fill_harmonics(harmonics: usize, day: f64, out: &mut [f64]) {
    let omega = 2.0 * PI * day / f64::from(DAYS_PER_YEAR);
    for k in 0..harmonics {
        let arg = (k + 1) as f64 * omega;
        out[2 * k] = arg.sin();
        out[2 * k + 1] = arg.cos();
    }
}
