//! Limited-memory BFGS with gradient projection onto a box.
//!
//! Internally the negated objective is minimized. Coordinates at an active
//! bound whose gradient points out of the box are frozen for the iteration;
//! the quasi-Newton direction acts on the rest, and the step is capped where
//! the first free coordinate reaches its bound.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::FitConfig;
use crate::error::{Error, Result};

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_SEARCH: usize = 40;

/// Per-coordinate bounds; use infinities for free coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with(mut self, index: usize, lower: f64, upper: f64) -> Self {
        self.lower[index] = lower;
        self.upper[index] = upper;
        self
    }

    fn project(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    LineSearchFailure,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Self::GradientTolerance | Self::ObjectiveTolerance)
    }
}

#[derive(Debug, Clone)]
pub struct Maximum {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

impl Maximum {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}

/// Result of one objective evaluation in minimization form.
#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn is_finite(f: f64, g: &[f64]) -> bool {
    f.is_finite() && g.iter().all(|v| v.is_finite())
}

/// Projected gradient of the minimization problem: the step a unit gradient
/// move would make after clipping to the box.
fn projected_gradient(x: &[f64], g: &[f64], bounds: &Bounds) -> Vec<f64> {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| (xi - gi).clamp(bounds.lower[i], bounds.upper[i]) - xi)
        .collect()
}

fn active_set(x: &[f64], g: &[f64], bounds: &Bounds) -> Vec<bool> {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| {
            (xi <= bounds.lower[i] && gi > 0.0) || (xi >= bounds.upper[i] && gi < 0.0)
        })
        .collect()
}

struct Memory {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() || !sy.is_finite() {
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion: `H g` restricted to the free coordinates.
    fn apply(&self, g: &[f64], active: &[bool]) -> Vec<f64> {
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(active)
                .map(|(&x, &a)| if a { 0.0 } else { x })
                .collect()
        };
        let mut q = mask(g);
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, r) in self.pairs.iter().rev() {
            let s = mask(s);
            let y = mask(y);
            let a = r * dot(&s, &q);
            for (qi, yi) in q.iter_mut().zip(&y) {
                *qi -= a * yi;
            }
            alphas.push((a, s, y));
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let (s, y) = (mask(s), mask(y));
            let yy = dot(&y, &y);
            let sy = dot(&s, &y);
            if yy > 0.0 && sy > 0.0 {
                let gamma = sy / yy;
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
        for ((a, s, y), (_, _, r)) in alphas.into_iter().rev().zip(self.pairs.iter()) {
            let b = r * dot(&y, &q);
            for (qi, si) in q.iter_mut().zip(&s) {
                *qi += (a - b) * si;
            }
        }
        q
    }
}

/// Maximizes `objective` (value and gradient) over the box.
///
/// Errors returned by `objective` at trial points are treated as infeasible
/// and shorten the step; an error at `init` is returned.
pub fn maximize<F>(mut objective: F, init: &[f64], bounds: &Bounds, config: &FitConfig) -> Result<Maximum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut eval = |x: &[f64]| -> Result<Point> {
        let (v, g) = objective(x)?;
        Ok(Point {
            x: x.to_vec(),
            f: -v,
            g: g.into_iter().map(|gi| -gi).collect(),
        })
    };
    let mut x0 = init.to_vec();
    bounds.project(&mut x0);
    let mut cur = eval(&x0)?;
    if !is_finite(cur.f, &cur.g) {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut memory = Memory {
        pairs: VecDeque::new(),
        capacity: config.memory.max(1),
    };
    let mut trace = vec![-cur.f];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut restarted = false;

    while iterations < config.max_iterations {
        let pg = projected_gradient(&cur.x, &cur.g, bounds);
        if inf_norm(&pg) <= config.gradient_tolerance {
            termination = Termination::GradientTolerance;
            break;
        }
        let active = active_set(&cur.x, &cur.g, bounds);
        let mut d: Vec<f64> = memory.apply(&cur.g, &active).iter().map(|v| -v).collect();
        let mut slope = dot(&d, &cur.g);
        if slope.is_nan() || slope >= 0.0 {
            memory.pairs.clear();
            d = cur
                .g
                .iter()
                .zip(&active)
                .map(|(&g, &a)| if a { 0.0 } else { -g })
                .collect();
            slope = dot(&d, &cur.g);
        }
        let mut alpha_max = f64::INFINITY;
        for (i, &di) in d.iter().enumerate() {
            if di > 0.0 && bounds.upper[i].is_finite() {
                alpha_max = alpha_max.min((bounds.upper[i] - cur.x[i]) / di);
            } else if di < 0.0 && bounds.lower[i].is_finite() {
                alpha_max = alpha_max.min((bounds.lower[i] - cur.x[i]) / di);
            }
        }
        let alpha_init = if memory.pairs.is_empty() {
            (1.0 / inf_norm(&d)).min(1.0)
        } else {
            1.0
        };
        let step = line_search(&mut eval, &cur, &d, slope, alpha_init, alpha_max, bounds);
        let next = match step {
            Some(p) => p,
            None if !memory.pairs.is_empty() && !restarted => {
                memory.pairs.clear();
                restarted = true;
                continue;
            }
            None => {
                termination = Termination::LineSearchFailure;
                break;
            }
        };
        restarted = false;
        iterations += 1;
        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        memory.push(s, y);
        let change = (cur.f - next.f).abs();
        let scale = cur.f.abs().max(next.f.abs()).max(1.0);
        cur = next;
        trace.push(-cur.f);
        if change <= config.objective_rel_tolerance * scale {
            termination = Termination::ObjectiveTolerance;
            break;
        }
    }
    Ok(Maximum {
        argmax: cur.x,
        value: -cur.f,
        gradient: cur.g.iter().map(|g| -g).collect(),
        iterations,
        termination,
        trace,
    })
}

/// Strong-Wolfe line search along `d`, never stepping past `alpha_max`.
fn line_search<E>(
    eval: &mut E,
    start: &Point,
    d: &[f64],
    slope0: f64,
    alpha_init: f64,
    alpha_max: f64,
    bounds: &Bounds,
) -> Option<Point>
where
    E: FnMut(&[f64]) -> Result<Point>,
{
    let mut trial = |alpha: f64| -> Option<(Point, f64)> {
        let mut x: Vec<f64> = start.x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        bounds.project(&mut x);
        match eval(&x) {
            Ok(p) if is_finite(p.f, &p.g) => {
                let slope = dot(&p.g, d);
                Some((p, slope))
            }
            _ => None,
        }
    };
    let armijo = |alpha: f64, f: f64| f <= start.f + C1 * alpha * slope0;
    let curvature = |slope: f64| slope.abs() <= -C2 * slope0;

    let mut prev = (0.0, start.f, slope0);
    let mut best: Option<(f64, Point)> = None;
    let mut alpha = alpha_init.min(alpha_max);
    if alpha.is_nan() || alpha <= 0.0 {
        return None;
    }
    for i in 0..MAX_LINE_SEARCH {
        let Some((p, slope)) = trial(alpha) else {
            return zoom(&mut trial, start, slope0, prev, (alpha, f64::INFINITY, f64::NAN), best);
        };
        if !armijo(alpha, p.f) || (i > 0 && p.f >= prev.1) {
            return zoom(&mut trial, start, slope0, prev, (alpha, p.f, slope), best);
        }
        if curvature(slope) {
            return Some(p);
        }
        if slope >= 0.0 {
            let lo = (alpha, p.f, slope);
            best = Some((alpha, p));
            return zoom(&mut trial, start, slope0, lo, prev, best);
        }
        let reached_bound = alpha >= alpha_max;
        let f = p.f;
        best = Some((alpha, p));
        if reached_bound {
            return best.map(|b| b.1);
        }
        prev = (alpha, f, slope);
        alpha = (4.0 * alpha).min(alpha_max);
    }
    best.map(|b| b.1)
}

/// Interval refinement; `lo` satisfies sufficient decrease with the lowest
/// value seen, `hi` brackets it. Non-finite `hi` values come from failed
/// evaluations and force bisection.
fn zoom<T>(
    trial: &mut T,
    start: &Point,
    slope0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
    mut best: Option<(f64, Point)>,
) -> Option<Point>
where
    T: FnMut(f64) -> Option<(Point, f64)>,
{
    for _ in 0..MAX_LINE_SEARCH {
        let width = hi.0 - lo.0;
        if width.abs() <= 1e-14 * lo.0.abs().max(hi.0.abs()).max(1e-300) {
            break;
        }
        let alpha = interpolate(lo, hi);
        let Some((p, slope)) = trial(alpha) else {
            hi = (alpha, f64::INFINITY, f64::NAN);
            continue;
        };
        if p.f > start.f + C1 * alpha * slope0 || p.f >= lo.1 {
            hi = (alpha, p.f, slope);
        } else {
            if slope.abs() <= -C2 * slope0 {
                return Some(p);
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, p.f, slope);
            best = Some((alpha, p));
        }
    }
    best.map(|b| b.1)
}

/// Cubic interpolation between the bracket ends when both carry finite
/// values and slopes, safeguarded to the interior of the bracket.
fn interpolate(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a, fa, ga) = lo;
    let (b, fb, gb) = hi;
    let left = a.min(b);
    let right = a.max(b);
    let margin = 0.1 * (right - left);
    let mid = 0.5 * (a + b);
    if !(fa.is_finite() && fb.is_finite() && ga.is_finite() && gb.is_finite()) {
        return mid;
    }
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = gb - ga + 2.0 * d2;
    if denom == 0.0 {
        return mid;
    }
    let c = b - (b - a) * (gb + d2 - d1) / denom;
    if c.is_finite() && c > left + margin && c < right - margin {
        c
    } else {
        mid
    }
}
