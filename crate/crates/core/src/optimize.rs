//! BFGS quasi-Newton minimizer with a strong-Wolfe line search.
//!
//! Objective evaluations may fail (the parameter point leaves the region where
//! the likelihood is defined); the line search treats such points as `+∞`
//! and backtracks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop when `max_i |∂f/∂x_i|` falls below this value.
    pub gradient_tolerance: f64,
    /// Stop when `|f_k − f_{k+1}| / max(|f_k|, 1)` stays below this value
    /// for `stall_iterations` consecutive iterations.
    pub relative_tolerance: f64,
    pub stall_iterations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            relative_tolerance: 1e-10,
            stall_iterations: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    RelativeChange,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl Minimum {
    pub fn gradient_norm(&self) -> f64 {
        max_abs(&self.gradient)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimize `objective`, which returns `(f, ∇f)` or `None` outside its domain.
/// The start point must be inside the domain.
pub fn minimize<F>(objective: F, x0: &[f64], cfg: &OptimizerConfig) -> Option<Minimum>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let (f0, g0) = objective(x0)?;
    let mut current = Point {
        x: x0.to_vec(),
        f: f0,
        g: g0,
    };
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    let mut stalled = 0;

    while iterations < cfg.max_iterations {
        if max_abs(&current.g) < cfg.gradient_tolerance {
            stop = StopReason::GradientTolerance;
            break;
        }
        let g = DVector::from_column_slice(&current.g);
        let mut dir: Vec<f64> = (-(&h_inv * &g)).iter().copied().collect();
        let mut slope = dot(&dir, &current.g);
        if !(slope < 0.0) {
            h_inv = DMatrix::identity(n, n);
            fresh = true;
            dir = current.g.iter().map(|v| -v).collect();
            slope = dot(&dir, &current.g);
        }
        let initial_step = if fresh {
            (1.0 / max_abs(&dir)).min(1.0)
        } else {
            1.0
        };
        let next = match line_search(&objective, &current, &dir, slope, initial_step) {
            Some(p) => p,
            None if !fresh => {
                // retry from steepest descent before giving up
                h_inv = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            None => {
                stop = StopReason::LineSearchFailed;
                break;
            }
        };
        iterations += 1;

        let s: Vec<f64> = next.x.iter().zip(&current.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&current.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let rel_change = (current.f - next.f).abs() / current.f.abs().max(1.0);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            let s_v = DVector::from_column_slice(&s);
            let y_v = DVector::from_column_slice(&y);
            if fresh {
                h_inv *= sy / dot(&y, &y);
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y_v;
            let yhy = y_v.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h_inv -= (&hy * s_v.transpose() + &s_v * hy.transpose()) * rho;
            h_inv += (&s_v * s_v.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }
        current = next;
        stalled = if rel_change < cfg.relative_tolerance { stalled + 1 } else { 0 };
        if stalled >= cfg.stall_iterations.max(1) {
            stop = if max_abs(&current.g) < cfg.gradient_tolerance {
                StopReason::GradientTolerance
            } else {
                StopReason::RelativeChange
            };
            break;
        }
    }
    if iterations >= cfg.max_iterations && max_abs(&current.g) < cfg.gradient_tolerance {
        stop = StopReason::GradientTolerance;
    }
    Some(Minimum {
        gradient: current.g,
        x: current.x,
        value: current.f,
        iterations,
        stop,
    })
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 60;

fn evaluate_at<F>(objective: &F, base: &Point, dir: &[f64], alpha: f64) -> Option<Point>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let x: Vec<f64> = base.x.iter().zip(dir).map(|(b, d)| b + alpha * d).collect();
    let (f, g) = objective(&x)?;
    if f.is_finite() && g.iter().all(|v| v.is_finite()) {
        Some(Point { x, f, g })
    } else {
        None
    }
}

/// Strong-Wolfe line search (bracketing then zoom with cubic interpolation).
fn line_search<F>(objective: &F, base: &Point, dir: &[f64], slope0: f64, initial: f64) -> Option<Point>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut evals = 0;
    let mut alpha = initial;
    let mut prev_alpha = 0.0;
    let mut prev_f = base.f;
    let mut prev_slope = slope0;
    let mut best: Option<Point> = None;

    loop {
        if evals >= MAX_LINE_EVALS {
            return best;
        }
        evals += 1;
        let Some(p) = evaluate_at(objective, base, dir, alpha) else {
            // undefined: shrink towards the last good step
            alpha = prev_alpha + 0.25 * (alpha - prev_alpha);
            if alpha - prev_alpha < 1e-16 {
                return best;
            }
            continue;
        };
        let slope = dot(&p.g, dir);
        if p.f > base.f + C1 * alpha * slope0 || (evals > 1 && p.f >= prev_f) {
            let lo = (prev_alpha, prev_f, prev_slope);
            let hi = (alpha, p.f, slope);
            return zoom(objective, base, dir, slope0, lo, hi, evals, best);
        }
        if slope.abs() <= -C2 * slope0 {
            return Some(p);
        }
        if slope >= 0.0 {
            let lo = (alpha, p.f, slope);
            let hi = (prev_alpha, prev_f, prev_slope);
            return zoom(objective, base, dir, slope0, lo, hi, evals, Some(p));
        }
        prev_alpha = alpha;
        prev_f = p.f;
        prev_slope = slope;
        best = Some(p);
        alpha *= 2.0;
    }
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    objective: &F,
    base: &Point,
    dir: &[f64],
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    mut evals: usize,
    mut best: Option<Point>,
) -> Option<Point>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    while evals < MAX_LINE_EVALS {
        evals += 1;
        let alpha = cubic_min(lo, hi);
        let Some(p) = evaluate_at(objective, base, dir, alpha) else {
            hi = (alpha, f64::INFINITY, 0.0);
            continue;
        };
        let slope = dot(&p.g, dir);
        if p.f > base.f + C1 * alpha * slope0 || p.f >= lo.1 {
            hi = (alpha, p.f, slope);
        } else {
            if slope.abs() <= -C2 * slope0 {
                return Some(p);
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, p.f, slope);
            best = Some(p);
        }
        if (hi.0 - lo.0).abs() < 1e-14 * lo.0.abs().max(1e-10) {
            break;
        }
    }
    // accept any sufficient-decrease point found
    best.filter(|p| p.f < base.f)
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, safeguarded
/// to the interior of the bracket.
fn cubic_min(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (x0, f0, d0) = a;
    let (x1, f1, d1) = b;
    let (lo, hi) = if x0 < x1 { (x0, x1) } else { (x1, x0) };
    let width = hi - lo;
    if f1.is_finite() {
        let d1_ = d0 + d1 - 3.0 * (f0 - f1) / (x0 - x1);
        let disc = d1_ * d1_ - d0 * d1;
        if disc >= 0.0 {
            let d2 = (x1 - x0).signum() * disc.sqrt();
            let t = x1 - (x1 - x0) * (d1 + d2 - d1_) / (d1 - d0 + 2.0 * d2);
            if t.is_finite() && t > lo + 0.1 * width && t < hi - 0.1 * width {
                return t;
            }
        }
    }
    0.5 * (lo + hi)
}
