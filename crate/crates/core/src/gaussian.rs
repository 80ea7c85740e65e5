//! Maximum-entropy stationary Gaussian model under wavelet covariance
//! constraints, fitted through its convex dual, and its spectral sampler.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Error, Result};
use crate::graph::{CovarianceTable, Edge, EdgeSet};
use crate::grid::{white_noise, ComplexField, Domain, Seed, C64};
use crate::lbfgs::{minimize, HessianInit, LbfgsConfig, Termination};
use crate::wavelet::WaveletBank;

/// One Hermitian class {e, ē} of constraint edges with the sparse spectral
/// weight φ(ω) = ψ̂_a(ω) ψ̂_b(ω) e^{−iω·δ}.
#[derive(Clone, Debug)]
struct Class {
    edge: Edge,
    self_conjugate: bool,
    support: Vec<(usize, C64)>,
    target: C64,
    /// Indices of the two diagonal targets used to judge relative error.
    diag: (usize, usize),
}

/// Dual problem for a set of k = 1 covariance targets.
#[derive(Clone, Debug)]
pub struct GaussianProblem {
    side: usize,
    classes: Vec<Class>,
    /// Targets are divided by this before fitting.
    scale: f64,
    /// For every table edge: its class and whether it is the conjugate.
    edge_class: Vec<(usize, bool)>,
    /// Position of each class's first parameter.
    offsets: Vec<usize>,
    nparams: usize,
    /// Bin of −ω for every ω.
    mirror: Vec<usize>,
}

fn unit_root(n: usize, m: i64) -> C64 {
    let r = m.rem_euclid(n as i64) as f64;
    C64::from_polar(1.0, -2.0 * PI * r / n as f64)
}

impl GaussianProblem {
    pub fn new(table: &CovarianceTable, bank: &WaveletBank) -> Result<Self> {
        let n = bank.side();
        if table.side != n {
            return shape(format!("table side {} does not match bank side {n}", table.side));
        }
        if table.edges.iter().any(|e| e.a.k != 1 || e.b.k != 1) {
            return config("the Gaussian model takes only k = 1 wavelet covariances");
        }
        let vdiag: Vec<Option<C64>> = table.vertices.iter().map(|v| table.get(&Edge::diagonal(*v))).collect();
        if let Some(i) = vdiag.iter().position(|d| d.is_none()) {
            return config(format!("no diagonal constraint for channel {}", table.vertices[i].channel));
        }
        let diag_vals: Vec<f64> = vdiag.iter().map(|d| d.unwrap().re).collect();
        let scale = diag_vals.iter().sum::<f64>() / diag_vals.len() as f64;
        if !(scale > 0.0) {
            return Err(Error::DegenerateChannel("all diagonal targets vanish".into()));
        }
        let mirror: Vec<usize> = (0..n * n)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                ((n - r) % n) * n + (n - c) % n
            })
            .collect();
        let lay = table.layout;
        let mut classes: Vec<Class> = Vec::new();
        let mut edge_class = vec![(usize::MAX, false); table.edges.len()];
        for (ei, e) in table.edges.iter().enumerate() {
            if edge_class[ei].0 != usize::MAX {
                continue;
            }
            let (d0, d1) = e.displacement(&lay);
            let r = e.reversed();
            let self_conjugate = r.a == e.a && r.b == e.b && (2 * d0).rem_euclid(n as i64) == 0 && (2 * d1).rem_euclid(n as i64) == 0;
            let fa = bank.filter(e.a.channel);
            let fb = bank.filter(e.b.channel);
            let support = (0..n * n)
                .filter_map(|i| {
                    let v = fa[i] * fb[i];
                    if v == 0.0 {
                        return None;
                    }
                    let (m0, m1) = ((i / n) as i64, (i % n) as i64);
                    Some((i, unit_root(n, m0 * d0 + m1 * d1) * v))
                })
                .collect();
            let ia = table.vertex_index(&e.a).unwrap();
            let ib = table.vertex_index(&e.b).unwrap();
            let ci = classes.len();
            classes.push(Class { edge: *e, self_conjugate, support, target: table.cov[ei] / scale, diag: (ia, ib) });
            edge_class[ei] = (ci, false);
            if let Some(ri) = table.edge_index(&r) {
                if ri != ei {
                    edge_class[ri] = (ci, true);
                }
            }
        }
        let mut offsets = Vec::with_capacity(classes.len());
        let mut nparams = 0;
        for c in &classes {
            offsets.push(nparams);
            nparams += if c.self_conjugate { 1 } else { 2 };
        }
        let problem = GaussianProblem { side: n, classes, scale, edge_class, offsets, nparams, mirror };
        Ok(problem)
    }

    pub fn num_params(&self) -> usize {
        self.nparams
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn beta(&self, params: &[f64], ci: usize) -> C64 {
        let o = self.offsets[ci];
        if self.classes[ci].self_conjugate {
            C64::new(params[o], 0.0)
        } else {
            C64::new(params[o], params[o + 1])
        }
    }

    fn weight(&self, ci: usize) -> f64 {
        if self.classes[ci].self_conjugate {
            1.0
        } else {
            2.0
        }
    }

    /// Symmetrized precision Q_sym(ω) in normalized target units.
    pub fn precision(&self, params: &[f64]) -> Vec<f64> {
        let d = self.side * self.side;
        let mut q = vec![0.0; d];
        for ci in 0..self.classes.len() {
            let b = self.beta(params, ci) * self.weight(ci);
            for &(i, phi) in &self.classes[ci].support {
                q[i] += (b * phi).re;
            }
        }
        (0..d).map(|i| 0.5 * (q[i] + q[self.mirror[i]])).collect()
    }

    /// Model covariance of every class under spectrum `p` (normalized units).
    fn class_covariances(&self, p: &[f64]) -> Vec<C64> {
        let d = (self.side * self.side) as f64;
        self.classes.iter().map(|c| c.support.iter().map(|&(i, phi)| phi * p[i]).sum::<C64>() / d).collect()
    }

    /// Dual value L(β) = ½ Σ w Re(β t) − (1/2d) Σ_ω log Q_sym(ω) and its
    /// gradient; +∞ when some Q_sym(ω) ≤ 0.
    pub fn dual_objective(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let d = (self.side * self.side) as f64;
        let q = self.precision(params);
        if q.iter().any(|&v| !(v > 0.0)) {
            return (f64::INFINITY, vec![0.0; self.nparams]);
        }
        let mut f = -q.iter().map(|v| v.ln()).sum::<f64>() / (2.0 * d);
        let p: Vec<f64> = q.iter().map(|v| 1.0 / v).collect();
        let k = self.class_covariances(&p);
        let mut g = vec![0.0; self.nparams];
        for (ci, c) in self.classes.iter().enumerate() {
            let w = self.weight(ci);
            let b = self.beta(params, ci);
            f += 0.5 * w * (b * c.target).re;
            let r = (c.target - k[ci]) * (0.5 * w);
            let o = self.offsets[ci];
            g[o] = r.re;
            if !c.self_conjugate {
                g[o + 1] = -r.im;
            }
        }
        (f, g)
    }

    /// Symmetrized sparse derivative ∂Q_sym/∂θ_i for every parameter.
    fn jacobian(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = Vec::with_capacity(self.nparams);
        for (ci, c) in self.classes.iter().enumerate() {
            let w = 0.5 * self.weight(ci);
            let parts: &[C64] = if c.self_conjugate { &[C64::new(1.0, 0.0)] } else { &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)] };
            for unit in parts {
                let mut col: Vec<(usize, f64)> = Vec::with_capacity(2 * c.support.len());
                for &(i, phi) in &c.support {
                    let v = w * (unit * phi).re;
                    col.push((i, v));
                    col.push((self.mirror[i], v));
                }
                col.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
                for (i, v) in col {
                    match merged.last_mut() {
                        Some(l) if l.0 == i => l.1 += v,
                        _ => merged.push((i, v)),
                    }
                }
                cols.push(merged);
            }
        }
        cols
    }

    /// Hessian of the dual: (1/2d) Σ_ω P̃² ∂_iQ ∂_jQ.
    fn hessian(&self, jac: &[Vec<(usize, f64)>], q: &[f64]) -> DMatrix<f64> {
        let d = self.side * self.side;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
        for (pi, col) in jac.iter().enumerate() {
            for &(i, v) in col {
                rows[i].push((pi, v));
            }
        }
        let mut h = DMatrix::zeros(self.nparams, self.nparams);
        for (i, row) in rows.iter().enumerate() {
            // rows at ω and −ω coincide
            let m = self.mirror[i];
            if m < i {
                continue;
            }
            let w = if m == i { 1.0 } else { 2.0 } / (q[i] * q[i] * 2.0 * d as f64);
            for (x, &(a, va)) in row.iter().enumerate() {
                let wa = w * va;
                for &(b, vb) in &row[x..] {
                    h[(b, a)] += wa * vb;
                }
            }
        }
        h.fill_upper_triangle_with_lower_triangle();
        h
    }

    /// Diagonal initialization from inverse target variances.
    pub fn initial_params(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.nparams];
        for (ci, c) in self.classes.iter().enumerate() {
            if c.edge.is_diagonal() {
                x[self.offsets[ci]] = 1.0 / c.target.re;
            }
        }
        x
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianDualState {
    pub side: usize,
    /// Multiplier per table edge, Hermitian across reversed edges.
    pub betas: Vec<C64>,
    /// Fitted power spectrum P̃(ω), row-major over the frequency grid.
    pub spectrum: Vec<f64>,
    /// Differential entropy ½ Σ log P̃ + (d/2)(1 + log 2π).
    pub entropy: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub termination: Termination,
    /// max over edges of |K_model − K_target| / √(K_aa K_bb).
    pub max_rel_error: f64,
    /// Added to every sample.
    pub mean: f64,
}

pub fn model_covariances(problem: &GaussianProblem, spectrum: &[f64]) -> Vec<C64> {
    let norm: Vec<f64> = spectrum.iter().map(|p| p / problem.scale).collect();
    problem.class_covariances(&norm).iter().map(|k| k * problem.scale).collect()
}

fn relative_errors(problem: &GaussianProblem, spectrum_norm: &[f64]) -> f64 {
    let k = problem.class_covariances(spectrum_norm);
    let diag: Vec<f64> = {
        let mut v = vec![0.0; problem.classes.iter().map(|c| c.diag.0.max(c.diag.1)).max().unwrap_or(0) + 1];
        for c in &problem.classes {
            if c.edge.is_diagonal() {
                v[c.diag.0] = c.target.re;
            }
        }
        v
    };
    problem
        .classes
        .iter()
        .zip(&k)
        .map(|(c, k)| (k - c.target).norm() / (diag[c.diag.0] * diag[c.diag.1]).sqrt())
        .fold(0.0, f64::max)
}

/// Exact k = 1 covariances of a zero-mean stationary Gaussian field with
/// power spectrum `spectrum`: K(e) = (1/d) Σ_ω P(ω) ψ̂_a ψ̂_b e^{−iω·δ}.
pub fn covariance_from_spectrum(edges: &EdgeSet, bank: &WaveletBank, spectrum: &[f64]) -> Result<CovarianceTable> {
    let n = bank.side();
    if spectrum.len() != n * n {
        return shape("spectrum length does not match the grid");
    }
    if edges.edges.iter().any(|e| e.a.k != 1 || e.b.k != 1) {
        return config("spectral covariances are defined for k = 1 edges only");
    }
    let lay = edges.layout;
    let d = (n * n) as f64;
    let cov_of = |e: &Edge| {
        let (d0, d1) = e.displacement(&lay);
        let (fa, fb) = (bank.filter(e.a.channel), bank.filter(e.b.channel));
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n * n {
            let v = fa[i] * fb[i] * spectrum[i];
            if v != 0.0 {
                acc += unit_root(n, (i / n) as i64 * d0 + (i % n) as i64 * d1) * v;
            }
        }
        acc / d
    };
    let vertices = edges.vertices();
    let diag = vertices.iter().map(|v| cov_of(&Edge::diagonal(*v)).re).collect();
    Ok(CovarianceTable {
        side: n,
        layout: lay,
        group: edges.group,
        means: vec![C64::new(0.0, 0.0); vertices.len()],
        vertices,
        diag,
        cov: edges.edges.iter().map(cov_of).collect(),
        edges: edges.edges.clone(),
        normalized: None,
        norm_diag: None,
        realizations: 0,
        source: "spectrum".into(),
    })
}

/// Above this many parameters the dense Newton system is too large and the
/// dual is handed to L-BFGS.
const NEWTON_LIMIT: usize = 6000;

struct Fit {
    x: Vec<f64>,
    iterations: usize,
    termination: Termination,
}

/// Damped Newton on the dual with a feasibility-preserving backtracking
/// search. A small ridge covers constraints that are redundant for real
/// fields (a channel and its antipode see mirrored spectra).
fn newton(problem: &GaussianProblem, tol: f64, max_iter: usize) -> Fit {
    let jac = problem.jacobian();
    let mut x = problem.initial_params();
    let (mut f, mut g) = problem.dual_objective(&x);
    let sup = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut it = 0;
    let termination = loop {
        if sup(&g) < tol {
            break Termination::Gtol;
        }
        if it >= max_iter || !f.is_finite() {
            break Termination::MaxIter;
        }
        let q = problem.precision(&x);
        let mut h = problem.hessian(&jac, &q);
        let ridge = 1e-12 * (0..h.nrows()).map(|i| h[(i, i)]).fold(0.0, f64::max);
        for i in 0..h.nrows() {
            h[(i, i)] += ridge;
        }
        let Some(chol) = h.cholesky() else { break Termination::LineSearchFailed };
        let step = chol.solve(&DVector::from_column_slice(&g));
        let slope: f64 = -step.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a - t * b).collect();
            let (ft, gt) = problem.dual_objective(&xt);
            // near the optimum f stalls in rounding; accept a smaller gradient
            if ft.is_finite() && (ft <= f + 1e-4 * t * slope || (ft <= f + 8.0 * f64::EPSILON * f.abs() && sup(&gt) < sup(&g))) {
                accepted = Some((xt, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((xt, ft, gt)) = accepted else { break Termination::LineSearchFailed };
        x = xt;
        f = ft;
        g = gt;
        it += 1;
    };
    Fit { x, iterations: it, termination }
}

/// Fits the multipliers and returns the state even when the
/// iteration cap is hit.
pub fn fit_gaussian_report(table: &CovarianceTable, bank: &WaveletBank, tol: f64, max_iter: usize) -> Result<GaussianDualState> {
    let problem = GaussianProblem::new(table, bank)?;
    let res = if problem.nparams <= NEWTON_LIMIT {
        newton(&problem, tol, max_iter)
    } else {
        let cfg = LbfgsConfig { gtol: tol, max_iter, hessian_init: HessianInit::Scaled, ..LbfgsConfig::default() };
        let r = minimize(|p| problem.dual_objective(p), problem.initial_params(), &cfg, |_, _| {});
        Fit { x: r.x, iterations: r.iterations, termination: r.termination }
    };
    let q = problem.precision(&res.x);
    let feasible = q.iter().all(|&v| v > 0.0);
    let p_norm: Vec<f64> = q.iter().map(|v| 1.0 / v).collect();
    let max_rel_error = if feasible { relative_errors(&problem, &p_norm) } else { f64::INFINITY };
    let spectrum: Vec<f64> = p_norm.iter().map(|p| p * problem.scale).collect();
    let d = spectrum.len() as f64;
    let entropy = 0.5 * spectrum.iter().map(|p| p.ln()).sum::<f64>() + 0.5 * d * (1.0 + (2.0 * PI).ln());
    let betas = problem
        .edge_class
        .iter()
        .map(|&(ci, conj)| {
            let b = problem.beta(&res.x, ci) / problem.scale;
            if conj {
                b.conj()
            } else {
                b
            }
        })
        .collect();
    let lowpass_mean = table.mean(&crate::graph::Vertex { channel: table.layout.lowpass(), k: 1 });
    let mean = lowpass_mean.map(|m| m.re / bank.filter(table.layout.lowpass())[0]).unwrap_or(0.0);
    Ok(GaussianDualState {
        side: problem.side,
        betas,
        spectrum,
        entropy,
        feasible,
        iterations: res.iterations,
        termination: res.termination,
        max_rel_error,
        mean,
    })
}

/// Fits the model; non-convergence is an error carrying the diagnostic.
pub fn fit_gaussian_model(table: &CovarianceTable, bank: &WaveletBank, tol: f64) -> Result<GaussianDualState> {
    let cap = if GaussianProblem::new(table, bank)?.nparams <= NEWTON_LIMIT { 300 } else { 5000 };
    let s = fit_gaussian_report(table, bank, tol, cap)?;
    if s.termination != Termination::Gtol || !s.feasible {
        return Err(Error::NonConvergence {
            iterations: s.iterations,
            detail: format!("{:?}, max relative constraint error {:.3e}", s.termination, s.max_rel_error),
        });
    }
    Ok(s)
}

/// Real fields with power spectrum P̃: x̂ = √P̃ ẑ with ẑ the DFT of unit
/// white noise.
pub fn sample_gaussian(state: &GaussianDualState, seed: u64, count: usize) -> Result<Vec<ComplexField>> {
    let n = state.side;
    if !state.feasible || state.spectrum.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return config("state is infeasible; its spectrum is not a valid power spectrum");
    }
    if state.spectrum.len() != n * n {
        return shape("spectrum length does not match the grid");
    }
    let fft = crate::grid::Fft2::new(n);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let z = white_noise(n, 1.0, Seed(seed.wrapping_add(i as u64)))?;
        let mut h = z.into_data();
        fft.forward(&mut h);
        for (v, p) in h.iter_mut().zip(&state.spectrum) {
            *v *= p.sqrt();
        }
        fft.inverse(&mut h);
        let real: Vec<C64> = h.iter().map(|v| C64::new(v.re + state.mean, 0.0)).collect();
        out.push(ComplexField::from_vec(n, real, Domain::Space)?);
    }
    Ok(out)
}
