//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! Every operation on iterates is a coordinatewise map or an inner product, so
//! a symmetry acting by coordinate permutation or sign change commutes with the
//! whole trajectory.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Initial inverse-Hessian approximation H⁰ = γ Id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianInit {
    /// γ = sᵀy / yᵀy from the latest pair.
    Scaled,
    /// γ = (sᵀy)⁻¹.
    InverseCurvature,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    /// Stop when the gradient sup-norm falls below this.
    pub gtol: f64,
    pub max_iter: usize,
    pub hessian_init: HessianInit,
    /// Stop as soon as f ≤ target.
    pub target: Option<f64>,
    /// Function evaluations allowed per line search.
    pub max_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            gtol: 1e-8,
            max_iter: 5000,
            hessian_init: HessianInit::Scaled,
            target: None,
            max_evals: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gtol,
    TargetReached,
    MaxIter,
    LineSearchFailed,
}

/// Snapshot passed to the observer after each accepted step.
#[derive(Clone, Debug)]
pub struct IterInfo {
    pub iteration: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub step: f64,
    /// The step only satisfied sufficient decrease.
    pub armijo_fallback: bool,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// f at x₀ followed by f after each accepted step.
    pub history: Vec<f64>,
    pub fallback_steps: usize,
}

/// Products are summed in sorted order, so permuted inputs (translated
/// fields) give bit-identical results.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    p.sort_unstable_by(f64::total_cmp);
    p.iter().sum()
}

fn sup_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

struct Point {
    a: f64,
    f: f64,
    dg: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

enum Search {
    Wolfe(Point),
    Armijo(Point),
    Failed,
}

/// Minimizer of the cubic through (a, fa, da), (b, fb, db), safeguarded to
/// the interior of the interval.
fn cubic_step(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mid = 0.5 * (a + b);
    if !(fa.is_finite() && fb.is_finite() && da.is_finite() && db.is_finite()) {
        return mid;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if !t.is_finite() || t < lo + margin || t > hi - margin {
        mid
    } else {
        t
    }
}

fn line_search<F>(f: &mut F, x: &[f64], fx: f64, gx: &[f64], d: &[f64], a0: f64, cfg: &LbfgsConfig, evals: &mut usize) -> Search
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let dg0 = dot(gx, d);
    let mut eval = |a: f64, evals: &mut usize| {
        *evals += 1;
        let xa = axpy(x, a, d);
        let (fa, ga) = f(&xa);
        let dg = if fa.is_finite() { dot(&ga, d) } else { f64::NAN };
        Point { a, f: fa, dg, x: xa, g: ga }
    };
    // Near a minimizer the value decrease drowns in rounding; there the
    // derivative form of sufficient decrease is used, with f allowed to move
    // by a few ulps.
    let noise = 8.0 * f64::EPSILON * fx.abs();
    let armijo = |p: &Point| {
        p.f.is_finite()
            && (p.f <= fx + cfg.c1 * p.a * dg0 || (p.f <= fx + noise && p.dg <= (2.0 * cfg.c1 - 1.0) * dg0))
    };
    let curvature = |p: &Point| p.dg.abs() <= -cfg.c2 * dg0;
    let mut best: Option<Point> = None;
    let keep = |p: &Point, best: &mut Option<Point>| {
        if armijo(p) && best.as_ref().map_or(true, |b| p.f < b.f) {
            *best = Some(Point { a: p.a, f: p.f, dg: p.dg, x: p.x.clone(), g: p.g.clone() });
        }
    };

    let mut prev = Point { a: 0.0, f: fx, dg: dg0, x: x.to_vec(), g: gx.to_vec() };
    let mut a = a0;
    let mut used = 0;
    let (mut lo, mut hi) = loop {
        if used >= cfg.max_evals {
            return finish(best, fx, dg0, cfg, &mut eval, evals);
        }
        used += 1;
        let p = eval(a, evals);
        keep(&p, &mut best);
        if !armijo(&p) || (used > 1 && p.f > prev.f + noise) {
            break (prev, p);
        }
        if curvature(&p) {
            return Search::Wolfe(p);
        }
        if p.dg >= 0.0 {
            break (p, prev);
        }
        let next = if a < 1e3 * a0 { 2.0 * a } else { a * 1.5 };
        prev = p;
        a = next;
    };
    // zoom: lo satisfies sufficient decrease and has the lower value
    while used < cfg.max_evals {
        if (hi.a - lo.a).abs() <= 1e-16 * lo.a.abs().max(1e-300) {
            break;
        }
        used += 1;
        let t = cubic_step(lo.a, lo.f, lo.dg, hi.a, hi.f, hi.dg);
        let p = eval(t, evals);
        keep(&p, &mut best);
        if !armijo(&p) || p.f > lo.f + noise {
            hi = p;
        } else {
            if curvature(&p) {
                return Search::Wolfe(p);
            }
            if p.dg * (hi.a - lo.a) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    finish(best, fx, dg0, cfg, &mut eval, evals)
}

fn finish<E>(best: Option<Point>, fx: f64, dg0: f64, cfg: &LbfgsConfig, eval: &mut E, evals: &mut usize) -> Search
where
    E: FnMut(f64, &mut usize) -> Point,
{
    if let Some(p) = best {
        if p.f < fx {
            return Search::Armijo(p);
        }
    }
    // plain backtracking from a unit step
    let mut a = 1.0;
    for _ in 0..cfg.max_evals {
        let p = eval(a, evals);
        if p.f.is_finite() && p.f <= fx + cfg.c1 * a * dg0 && p.f < fx {
            return Search::Armijo(p);
        }
        a *= 0.25;
    }
    Search::Failed
}

/// Minimizes `f`, which returns the value and gradient. `observer` sees every
/// accepted iterate.
pub fn minimize<F, O>(mut f: F, x0: Vec<f64>, cfg: &LbfgsConfig, mut observer: O) -> LbfgsResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    O: FnMut(&IterInfo, &[f64]),
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    let mut history = vec![fx];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut fallback_steps = 0;
    let mut iterations = 0;
    let done = |fx: f64, g: &[f64]| {
        if cfg.target.is_some_and(|t| fx <= t) {
            Some(Termination::TargetReached)
        } else if sup_norm(g) < cfg.gtol {
            Some(Termination::Gtol)
        } else {
            None
        }
    };
    let termination = loop {
        if let Some(t) = done(fx, &g) {
            break t;
        }
        if iterations >= cfg.max_iter {
            break Termination::MaxIter;
        }
        if !fx.is_finite() {
            break Termination::LineSearchFailed;
        }
        let mut d = two_loop(&g, &mem, cfg.hessian_init);
        let mut a0 = 1.0;
        if mem.is_empty() || dot(&d, &g) >= 0.0 {
            mem.clear();
            d = g.iter().map(|v| -v).collect();
            a0 = 1.0 / dot(&g, &g).sqrt();
        }
        let (p, fallback) = match line_search(&mut f, &x, fx, &g, &d, a0, cfg, &mut evaluations) {
            Search::Wolfe(p) => (p, false),
            Search::Armijo(p) => (p, true),
            Search::Failed => {
                if mem.is_empty() {
                    break Termination::LineSearchFailed;
                }
                // retry once along steepest descent with fresh memory
                mem.clear();
                continue;
            }
        };
        if fallback {
            fallback_steps += 1;
        }
        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            if mem.len() == cfg.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, sy));
        }
        x = p.x;
        fx = p.f;
        g = p.g;
        iterations += 1;
        history.push(fx);
        observer(
            &IterInfo { iteration: iterations, f: fx, grad_norm: sup_norm(&g), step: p.a, armijo_fallback: fallback },
            &x,
        );
    };
    LbfgsResult { x, f: fx, grad: g, iterations, evaluations, termination, history, fallback_steps }
}

/// Returns the search direction −H g.
fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, init: HessianInit) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, sy) in mem.iter().rev() {
        let a = dot(s, &q) / sy;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let gamma = match mem.back() {
        Some((_, y, sy)) => match init {
            HessianInit::Scaled => sy / dot(y, y),
            HessianInit::InverseCurvature => 1.0 / sy,
        },
        None => 1.0,
    };
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for ((s, y, sy), a) in mem.iter().zip(alphas.iter().rev()) {
        let b = dot(y, &q) / sy;
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}
