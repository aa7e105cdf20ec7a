//! BFGS quasi-Newton minimization with a strong-Wolfe line search that
//! interpolates cubics through bracketing samples.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub step_tolerance: f64,
    pub max_line_search_evals: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iterations: 50,
            grad_tolerance: 1e-6,
            step_tolerance: 1e-10,
            max_line_search_evals: 20,
        }
    }
}

impl OptimizerOptions {
    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.max_line_search_evals == 0 {
            return Err(Error::invalid("optimizer", "iteration limits must be positive"));
        }
        if !(self.grad_tolerance > 0.0 && self.step_tolerance > 0.0) {
            return Err(Error::invalid("optimizer", "tolerances must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    StepTolerance,
    IterationLimit,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

struct Sample {
    alpha: f64,
    f: f64,
    slope: f64,
    x: DVector<f64>,
    g: DVector<f64>,
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, clamped
/// away from the interval ends. Falls back to bisection when the cubic has
/// no real minimizer.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mid = 0.5 * (a + b);
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x: &'a DVector<f64>,
    dir: &'a DVector<f64>,
    evals: usize,
    max_evals: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    fn sample(&mut self, alpha: f64) -> Option<Sample> {
        self.evals += 1;
        let x = self.x + self.dir * alpha;
        match (self.objective)(&x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let slope = g.dot(self.dir);
                Some(Sample { alpha, f, slope, x, g })
            }
            _ => None,
        }
    }

    /// Returns an accepted sample, or the best sufficient-decrease sample seen
    /// if the evaluation budget runs out.
    fn run(&mut self, f0: f64, slope0: f64, alpha0: f64) -> Option<Sample> {
        let mut prev = Sample {
            alpha: 0.0,
            f: f0,
            slope: slope0,
            x: self.x.clone(),
            g: DVector::zeros(0),
        };
        let mut alpha = alpha0;
        let mut first = true;
        while self.evals < self.max_evals {
            let Some(cur) = self.sample(alpha) else {
                // Treat a failed evaluation as violating sufficient decrease.
                alpha = 0.5 * (prev.alpha + alpha);
                if alpha - prev.alpha < 1e-16 {
                    return None;
                }
                continue;
            };
            if cur.f > f0 + C1 * cur.alpha * slope0 || (!first && cur.f >= prev.f) {
                return self.zoom(prev, cur, f0, slope0);
            }
            if cur.slope.abs() <= -C2 * slope0 {
                return Some(cur);
            }
            if cur.slope >= 0.0 {
                return self.zoom(cur, prev, f0, slope0);
            }
            first = false;
            alpha = cur.alpha * 2.0;
            prev = cur;
        }
        (prev.alpha > 0.0).then_some(prev)
    }

    fn zoom(&mut self, mut lo: Sample, mut hi: Sample, f0: f64, slope0: f64) -> Option<Sample> {
        while self.evals < self.max_evals {
            if (hi.alpha - lo.alpha).abs() < 1e-14 * lo.alpha.abs().max(1.0) {
                break;
            }
            let trial = if hi.g.is_empty() && hi.alpha != 0.0 {
                0.5 * (lo.alpha + hi.alpha)
            } else {
                cubic_step(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope)
            };
            let Some(cur) = self.sample(trial) else {
                hi = Sample {
                    alpha: trial,
                    f: f64::INFINITY,
                    slope: 0.0,
                    x: DVector::zeros(0),
                    g: DVector::zeros(0),
                };
                continue;
            };
            if cur.f > f0 + C1 * cur.alpha * slope0 || cur.f >= lo.f {
                hi = cur;
            } else {
                if cur.slope.abs() <= -C2 * slope0 {
                    return Some(cur);
                }
                if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
        (lo.alpha > 0.0).then_some(lo)
    }
}

/// Minimizes `objective`, which returns the cost and gradient at a point.
///
/// The returned point is always the best finite iterate; `converged` is false
/// when the iteration cap is hit or the line search cannot make progress.
pub fn minimize<F>(mut objective: F, x0: DVector<f64>, opts: &OptimizerOptions) -> Result<OptimResult>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    opts.validate()?;
    let n = x0.len();
    let (mut f, mut g) = objective(&x0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at the initial point"));
    }
    let mut x = x0;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first = true;

    for iter in 0..opts.max_iterations {
        if g.norm() < opts.grad_tolerance {
            return Ok(OptimResult {
                x,
                cost: f,
                iterations: iter,
                converged: true,
                termination: Termination::GradientTolerance,
            });
        }
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 || !slope.is_finite() {
            h = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let alpha0 = if first { (1.0 / g.norm()).min(1.0) } else { 1.0 };
        let accepted = LineSearch {
            objective: &mut objective,
            x: &x,
            dir: &dir,
            evals: 0,
            max_evals: opts.max_line_search_evals,
        }
        .run(f, slope, alpha0);
        let Some(step) = accepted else {
            return Ok(OptimResult {
                x,
                cost: f,
                iterations: iter,
                converged: false,
                termination: Termination::LineSearchFailed,
            });
        };

        let s = &step.x - &x;
        let y = &step.g - &g;
        let step_norm = s.norm();
        x = step.x;
        f = step.f;
        g = step.g;

        let sy = s.dot(&y);
        if sy > 1e-12 * step_norm * y.norm() {
            if first {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
            h = (&h + h.transpose()) * 0.5;
        }
        first = false;

        if step_norm < opts.step_tolerance {
            let converged = g.norm() < opts.grad_tolerance.sqrt();
            return Ok(OptimResult {
                x,
                cost: f,
                iterations: iter + 1,
                converged,
                termination: Termination::StepTolerance,
            });
        }
    }
    let converged = g.norm() < opts.grad_tolerance;
    Ok(OptimResult {
        x,
        cost: f,
        iterations: opts.max_iterations,
        converged,
        termination: Termination::IterationLimit,
    })
}
