//! Gradient-descent microcanonical models: the correlation-matching loss, its
//! gradient, and multi-restart synthesis from white noise.

use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};
use crate::graph::{
    build_foveal_edges, estimate::Snapshot, normalize_correlations, CovarianceTable, EdgeSet, ModelName, ModelSpec,
    OptimizerSettings, StatsPlan,
};
use crate::grid::{translate_real, white_noise, ComplexField, Seed, C64};
use crate::lbfgs::{minimize, IterInfo, LbfgsConfig, Termination};
use crate::wavelet::WaveletBank;

/// Reference statistics of x̄ that synthesized fields must match.
#[derive(Clone, Debug)]
pub struct SynthesisTarget {
    pub edges: EdgeSet,
    /// Normalized by its own diagonal.
    pub table: CovarianceTable,
    /// Preconditioning diagonal D of x̄, per vertex class.
    pub diag: Vec<f64>,
    pub means: Vec<C64>,
    /// Variance of the initial white noise; mean(x̄²) bounds the empirical variance.
    pub sigma2: f64,
}

impl SynthesisTarget {
    pub fn new(reference: &ComplexField, bank: &WaveletBank, spec: &ModelSpec) -> Result<Self> {
        Self::from_edges(reference, bank, build_foveal_edges(spec)?)
    }

    pub fn from_edges(reference: &ComplexField, bank: &WaveletBank, edges: EdgeSet) -> Result<Self> {
        let table = crate::graph::estimate_table(reference, bank, &edges)?;
        let table = normalize_correlations(&table, None)?;
        let x = reference.real_part();
        let sigma2 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        Ok(SynthesisTarget { diag: table.diag.clone(), means: table.means.clone(), edges, table, sigma2 })
    }
}

/// f(x) = Σ_E |C̃_x − C̃_x̄|², both normalized by the diagonal of x̄ and
/// centred by the means of x̄.
pub struct Objective<'a> {
    bank: &'a WaveletBank,
    plan: StatsPlan,
    target: Vec<C64>,
    means: Vec<C64>,
    scale: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(bank: &'a WaveletBank, target: &SynthesisTarget) -> Result<Self> {
        let plan = StatsPlan::new(bank, &target.edges)?;
        let corr = target.table.normalized.clone().ok_or_else(|| crate::Error::Config("target is not normalized".into()))?;
        let scale = (0..plan.edges().len())
            .map(|ei| {
                let (a, b) = plan.edge_vertices(ei);
                1.0 / (target.diag[a] * target.diag[b]).sqrt()
            })
            .collect();
        Ok(Objective { bank, plan, target: corr, means: target.means.clone(), scale })
    }

    pub fn plan(&self) -> &StatsPlan {
        &self.plan
    }

    fn residuals(&self, snap: &Snapshot) -> (crate::graph::estimate::Moments, Vec<C64>) {
        let m = self.plan.moments(snap);
        let k = self.plan.covariance(&m, Some(&self.means));
        let r = self.target.iter().zip(&self.scale).zip(&k).map(|((t, s), k)| k * *s - t).collect();
        (m, r)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let p = canonical_offset(x, self.bank.side());
        let snap = self.plan.forward_real(self.bank, &translate_real(x, self.bank.side(), (-p.0, -p.1)))?;
        Ok(self.residuals(&snap).1.iter().map(|r| r.norm_sqr()).sum())
    }

    /// Evaluated in the frame given by [`canonical_offset`], so translated
    /// inputs give bit-identical values and exactly translated gradients.
    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.bank.side();
        let p = canonical_offset(x, n);
        let snap = self.plan.forward_real(self.bank, &translate_real(x, n, (-p.0, -p.1)))?;
        let (m, r) = self.residuals(&snap);
        let f = r.iter().map(|r| r.norm_sqr()).sum();
        let nstat = m.second.len();
        let mut cov_bar = vec![C64::new(0.0, 0.0); nstat];
        for ((cb, r), s) in cov_bar.iter_mut().zip(&r).zip(&self.scale) {
            *cb = r * (2.0 * s);
        }
        let (mean_bar, second_bar) = self.plan.covariance_vjp(&m, Some(&self.means), &cov_bar);
        Ok((f, translate_real(&self.plan.backward(self.bank, &snap, &mean_bar, &second_bar), n, p)))
    }
}

/// Position of the largest |x(u)|, ties broken by comparing the |x| sequences
/// read from each candidate. The choice moves with any translation of x and is
/// unchanged by x → −x.
pub fn canonical_offset(x: &[f64], side: usize) -> (i64, i64) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cands: Vec<usize> = (0..x.len()).filter(|&i| x[i].abs() == m).collect();
    let read = |p: usize, i: usize| {
        let (r, c) = ((p / side + i / side) % side, (p % side + i % side) % side);
        x[r * side + c].abs()
    };
    let best = cands
        .iter()
        .copied()
        .min_by(|&a, &b| {
            (0..x.len())
                .map(|i| read(b, i).total_cmp(&read(a, i)))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    ((best / side) as i64, (best % side) as i64)
}

impl OptimizerSettings {
    pub fn lbfgs(&self, target: Option<f64>) -> LbfgsConfig {
        LbfgsConfig {
            memory: self.memory,
            c1: self.c1,
            c2: self.c2,
            gtol: self.gtol,
            max_iter: self.max_iter,
            hessian_init: self.hessian_init,
            target,
            ..LbfgsConfig::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartResult {
    pub seed: u64,
    pub field: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub fallback_steps: usize,
    /// Loss after each accepted step, starting with the initial loss.
    pub losses: Vec<f64>,
    /// Final loss below ε = epsilon_rel × initial loss.
    pub success: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub side: usize,
    pub restarts: Vec<RestartResult>,
    pub best: usize,
}

/// Runs L-BFGS on the loss from `x0`, calling `observer` after every step.
pub fn descend<O>(objective: &Objective, x0: Vec<f64>, settings: &OptimizerSettings, observer: O) -> Result<RestartResult>
where
    O: FnMut(&IterInfo, &[f64]),
{
    let f0 = objective.value(&x0)?;
    let target = settings.epsilon_rel * f0;
    let cfg = settings.lbfgs(Some(target));
    let res = minimize(
        |x| objective.value_and_gradient(x).unwrap_or_else(|_| (f64::INFINITY, vec![0.0; x.len()])),
        x0,
        &cfg,
        observer,
    );
    Ok(RestartResult {
        seed: 0,
        success: res.f <= target,
        field: res.x,
        initial_loss: f0,
        final_loss: res.f,
        iterations: res.iterations,
        termination: res.termination,
        fallback_steps: res.fallback_steps,
        losses: res.history,
    })
}

/// Seed of restart r.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add(r as u64)
}

pub fn synthesize(reference: &ComplexField, bank: &WaveletBank, spec: &ModelSpec, restarts: usize, seed: u64) -> Result<SynthesisResult> {
    if spec.name == ModelName::A {
        return config("model A is the Gaussian model; use the maximum-entropy sampler");
    }
    if restarts == 0 {
        return config("restart count must be at least 1");
    }
    if reference.side() != bank.side() {
        return shape("reference and bank sizes differ");
    }
    let target = SynthesisTarget::new(reference, bank, spec)?;
    synthesize_target(&target, bank, &spec.optimizer, restarts, seed)
}

pub fn synthesize_target(
    target: &SynthesisTarget,
    bank: &WaveletBank,
    settings: &OptimizerSettings,
    restarts: usize,
    seed: u64,
) -> Result<SynthesisResult> {
    if restarts == 0 {
        return config("restart count must be at least 1");
    }
    let objective = Objective::new(bank, target)?;
    let side = bank.side();
    let mut out = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let s = restart_seed(seed, r);
        let x0 = white_noise(side, target.sigma2.sqrt(), Seed(s))?.real_part();
        let mut res = descend(&objective, x0, settings, |_, _| {})?;
        res.seed = s;
        out.push(res);
    }
    let best = out
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.final_loss.total_cmp(&b.1.final_loss))
        .map(|(i, _)| i)
        .unwrap();
    Ok(SynthesisResult { side, restarts: out, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ModelName, SymmetryGroup};
    use crate::grid::{negate, translate_real, normal_samples};

    fn setup(side: usize, j: usize, q: usize, name: ModelName, group: SymmetryGroup) -> (WaveletBank, SynthesisTarget, ComplexField) {
        let bank = WaveletBank::bump(side, j, q).unwrap();
        let mut spec = ModelSpec::preset(name, j, q).unwrap();
        spec.group = group;
        // a mildly non-Gaussian reference
        let g = white_noise(side, 1.0, Seed(40)).unwrap().real_part();
        let x: Vec<f64> = g.iter().map(|v| v + 0.3 * v * v).collect();
        let xbar = ComplexField::from_real(side, &x).unwrap();
        let t = SynthesisTarget::new(&xbar, &bank, &spec).unwrap();
        (bank, t, xbar)
    }

    #[test]
    fn zero_at_reference() {
        let (bank, t, xbar) = setup(16, 2, 4, ModelName::B, SymmetryGroup::translations());
        let obj = Objective::new(&bank, &t).unwrap();
        let (f, g) = obj.value_and_gradient(&xbar.real_part()).unwrap();
        assert!(f < 1e-24, "{f}");
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-10);
    }

    #[test]
    fn value_matches_scratch_tables() {
        let (bank, t, _) = setup(8, 2, 4, ModelName::C, SymmetryGroup::translations());
        let obj = Objective::new(&bank, &t).unwrap();
        let y = white_noise(8, 1.0, Seed(3)).unwrap();
        // scratch: centre by x̄ means, normalize by x̄ diagonal
        let cov = crate::graph::estimate_covariance(&y, &bank, &t.edges, &t.means).unwrap();
        let norm = normalize_correlations(&cov, Some(&t.diag)).unwrap().normalized.unwrap();
        let tgt = t.table.normalized.as_ref().unwrap();
        let f: f64 = norm.iter().zip(tgt).map(|(a, b)| (a - b).norm_sqr()).sum();
        let v = obj.value(&y.real_part()).unwrap();
        assert!((v - f).abs() <= 1e-12 * f.max(1.0), "{v} {f}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let group = SymmetryGroup::translations().with_line_reflection();
        let (bank, t, _) = setup(16, 2, 4, ModelName::C, group);
        let obj = Objective::new(&bank, &t).unwrap();
        let x = white_noise(16, 1.0, Seed(77)).unwrap().real_part();
        let (_, g) = obj.value_and_gradient(&x).unwrap();
        let picks = normal_samples(20, Seed(5));
        let h = 1e-5;
        for p in picks {
            let i = ((p.abs() * 1e6) as usize) % x.len();
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (obj.value(&xp).unwrap() - obj.value(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1e-3), "coordinate {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn invariance_and_equivariance() {
        let group = SymmetryGroup::translations().with_sign_change();
        let (bank, t, _) = setup(16, 2, 4, ModelName::B, group);
        let obj = Objective::new(&bank, &t).unwrap();
        let x = white_noise(16, 1.0, Seed(8)).unwrap();
        let (f, g) = obj.value_and_gradient(&x.real_part()).unwrap();
        let xs = translate_real(&x.real_part(), 16, (3, 5));
        let (fs, gs) = obj.value_and_gradient(&xs).unwrap();
        // evaluation in the canonical frame makes translations exact
        assert_eq!(f, fs);
        assert_eq!(gs, translate_real(&g, 16, (3, 5)));
        let (fn_, gn) = obj.value_and_gradient(&negate(&x).real_part()).unwrap();
        assert_eq!(f, fn_);
        for (a, b) in gn.iter().zip(&g) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn canonical_offset_follows_translations() {
        let x = white_noise(8, 1.0, Seed(4)).unwrap().real_part();
        let p = canonical_offset(&x, 8);
        let y = translate_real(&x, 8, (3, 6));
        assert_eq!(canonical_offset(&y, 8), ((p.0 + 3) % 8, (p.1 + 6) % 8));
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(canonical_offset(&neg, 8), p);
        // ties on the maximum resolved by the following values
        let mut t = vec![0.0; 16];
        t[1] = 2.0;
        t[9] = -2.0;
        t[10] = 1.0;
        assert_eq!(canonical_offset(&t, 4), (2, 1));
        assert_eq!(canonical_offset(&translate_real(&t, 4, (1, 3)), 4), (3, 0));
    }

    #[test]
    fn synthesis_reduces_loss_and_selects_best() {
        let (bank, t, _) = setup(16, 2, 4, ModelName::B, SymmetryGroup::translations());
        let settings = OptimizerSettings { max_iter: 60, ..Default::default() };
        let res = synthesize_target(&t, &bank, &settings, 3, 10).unwrap();
        assert_eq!(res.restarts.len(), 3);
        for r in &res.restarts {
            assert!(r.final_loss < r.initial_loss);
            for w in r.losses.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-14));
            }
        }
        let best = res.restarts[res.best].final_loss;
        assert!(res.restarts.iter().all(|r| r.final_loss >= best));
        let spec = ModelSpec::preset(ModelName::A, 2, 4).unwrap();
        let x = white_noise(16, 1.0, Seed(1)).unwrap();
        assert!(synthesize(&x, &bank, &spec, 1, 0).is_err());
        let spec = ModelSpec::preset(ModelName::B, 2, 4).unwrap();
        assert!(synthesize(&x, &bank, &spec, 0, 0).is_err());
    }
}
