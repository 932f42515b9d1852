//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The line search is the bracketing/zoom scheme with safeguarded cubic
//! interpolation. Accepted iterates satisfy the sufficient-decrease
//! condition, so the recorded objective sequence never increases.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Objective returning the value and writing the gradient into `grad`.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F> Objective for F
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub history: usize,
    pub max_iterations: usize,
    /// Stop once the gradient's Euclidean norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop once the relative decrease of an accepted step falls below this.
    pub relative_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            history: 10,
            max_iterations: 1000,
            gradient_tolerance: 1e-10,
            relative_tolerance: 0.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    RelativeTolerance,
    MaxIterations,
    /// The line search could not improve on the current iterate even after
    /// a steepest-descent restart; typically this is round-off at the optimum.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Evaluator<'a, O: Objective> {
    objective: &'a mut O,
    evaluations: usize,
}

impl<O: Objective> Evaluator<'_, O> {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluations += 1;
        let f = self.objective.evaluate(x, grad);
        if f.is_finite() && grad.iter().all(|g| g.is_finite()) {
            f
        } else {
            f64::INFINITY
        }
    }
}

struct Point {
    alpha: f64,
    f: f64,
    d: f64,
}

struct LineResult {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimizer of the cubic through (a, fa, da), (b, fb, db).
fn cubic_minimizer(lo: &Point, hi: &Point) -> Option<f64> {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.d * hi.d;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * ((hi.d + d2 - d1) / (hi.d - lo.d + 2.0 * d2));
    t.is_finite().then_some(t)
}

/// Cubic step clamped into the inner 80% of the bracket.
fn cubic_step(lo: &Point, hi: &Point) -> f64 {
    let (left, right) = if lo.alpha < hi.alpha { (lo.alpha, hi.alpha) } else { (hi.alpha, lo.alpha) };
    let width = right - left;
    cubic_minimizer(lo, hi).unwrap_or(0.5 * (left + right)).clamp(left + 0.1 * width, right - 0.1 * width)
}

fn line_search<O: Objective>(
    ev: &mut Evaluator<'_, O>,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
    alpha0: f64,
    opts: &LbfgsOptions,
) -> Option<LineResult> {
    let d0 = dot(g0, dir);
    if d0 >= 0.0 {
        return None;
    }
    let n = x.len();
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let eval_at = |ev: &mut Evaluator<'_, O>, alpha: f64, xt: &mut Vec<f64>, gt: &mut Vec<f64>| {
        for i in 0..n {
            xt[i] = x[i] + alpha * dir[i];
        }
        let f = ev.eval(xt, gt);
        let d = if f.is_finite() { dot(gt, dir) } else { f64::NAN };
        Point { alpha, f, d }
    };

    // Best Armijo-satisfying point seen, used if the Wolfe search gives up.
    let mut best: Option<LineResult> = None;
    let consider = |best: &mut Option<LineResult>, p: &Point, xt: &[f64], gt: &[f64]| {
        if p.f.is_finite() && p.f <= f0 + opts.c1 * p.alpha * d0 && p.f < f0 {
            if best.as_ref().map_or(true, |b| p.f < b.f) {
                *best = Some(LineResult { x: xt.to_vec(), f: p.f, g: gt.to_vec() });
            }
        }
    };

    // Armijo, or its derivative form once function differences are lost in
    // round-off (never accepting an increase).
    let sufficient = |alpha: f64, f: f64, d: f64| f <= f0 + opts.c1 * alpha * d0 || (f <= f0 && d <= (2.0 * opts.c1 - 1.0) * d0);

    // One secant step on the directional derivative from an accepted point;
    // exact on quadratics, which keeps the quasi-Newton pairs conjugate
    // there, and free of the cancellation in function differences.
    let polish = |ev: &mut Evaluator<'_, O>, p: Point, xt: Vec<f64>, gt: Vec<f64>| {
        let accepted = LineResult { x: xt, f: p.f, g: gt };
        if !(p.d > d0) {
            return accepted;
        }
        let a = p.alpha * d0 / (d0 - p.d);
        if !(a > 0.0 && a <= 4.0 * p.alpha) || (a - p.alpha).abs() <= 1e-9 * p.alpha {
            return accepted;
        }
        let mut xr = vec![0.0; n];
        let mut gr = vec![0.0; n];
        for i in 0..n {
            xr[i] = x[i] + a * dir[i];
        }
        let f = ev.eval(&xr, &mut gr);
        let d = dot(&gr, dir);
        let better = f < p.f || (f - p.f <= 1e-12 * p.f.abs() && d.abs() < p.d.abs());
        if f.is_finite() && better && sufficient(a, f, d) && d.abs() <= -opts.c2 * d0 {
            LineResult { x: xr, f, g: gr }
        } else {
            accepted
        }
    };

    let mut prev = Point { alpha: 0.0, f: f0, d: d0 };
    let mut alpha = alpha0;
    let mut bracket: Option<(Point, Point)> = None;
    for i in 0..opts.max_line_search {
        let p = eval_at(ev, alpha, &mut xt, &mut gt);
        if !p.f.is_finite() {
            // Overshot into an invalid region: shrink toward the last good point.
            alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
            continue;
        }
        consider(&mut best, &p, &xt, &gt);
        if !sufficient(alpha, p.f, p.d) || (i > 0 && p.f >= prev.f) {
            bracket = Some((prev, p));
            break;
        }
        if p.d.abs() <= -opts.c2 * d0 {
            return Some(polish(ev, p, xt, gt));
        }
        if p.d >= 0.0 {
            bracket = Some((p, prev));
            break;
        }
        prev = p;
        alpha *= 2.0;
    }

    if let Some((mut lo, mut hi)) = bracket {
        for _ in 0..opts.max_line_search {
            let a = cubic_step(&lo, &hi);
            if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
                break;
            }
            let p = eval_at(ev, a, &mut xt, &mut gt);
            if !p.f.is_finite() {
                hi = p;
                hi.f = f64::INFINITY;
                hi.d = 0.0;
                continue;
            }
            consider(&mut best, &p, &xt, &gt);
            if !sufficient(a, p.f, p.d) || p.f > lo.f || (p.f == lo.f && lo.alpha > 0.0) {
                hi = p;
            } else {
                if p.d.abs() <= -opts.c2 * d0 {
                    return Some(polish(ev, p, xt, gt));
                }
                if p.d * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
    }
    best
}

/// Two-loop recursion: `H * grad` with the stored curvature pairs.
fn two_loop(grad: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q
}

pub fn lbfgs_minimize<O: Objective>(objective: &mut O, x0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsReport> {
    let n = x0.len();
    let mut ev = Evaluator { objective, evaluations: 0 };
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = ev.eval(&x, &mut g);
    if !f.is_finite() {
        return Err(Error::NonFinite("objective or gradient at the initial point".into()));
    }
    let mut trace = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.history);
    let mut iterations = 0;
    let termination = loop {
        let gnorm = norm(&g);
        if gnorm < opts.gradient_tolerance || gnorm == 0.0 {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break Termination::MaxIterations;
        }
        let mut dir: Vec<f64> = two_loop(&g, &pairs).iter().map(|v| -v).collect();
        let mut alpha0 = if pairs.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut result = line_search(&mut ev, &x, f, &g, &dir, alpha0, opts);
        if result.is_none() && !pairs.is_empty() {
            pairs.clear();
            dir = g.iter().map(|v| -v).collect();
            alpha0 = (1.0 / gnorm).min(1.0);
            result = line_search(&mut ev, &x, f, &g, &dir, alpha0, opts);
        }
        let Some(step) = result else {
            if iterations == 0 {
                return Err(Error::LineSearch { iteration: iterations, value: f, x });
            }
            break Termination::LineSearchStalled;
        };
        iterations += 1;
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if opts.history > 0 && sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if pairs.len() == opts.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let decrease = f - step.f;
        x = step.x;
        g = step.g;
        f = step.f;
        trace.push(f);
        if opts.relative_tolerance > 0.0 && decrease <= opts.relative_tolerance * f.abs().max(1e-300) {
            break Termination::RelativeTolerance;
        }
    };
    Ok(LbfgsReport {
        gradient_norm: norm(&g),
        x,
        value: f,
        iterations,
        evaluations: ev.evaluations,
        trace,
        termination,
    })
}
