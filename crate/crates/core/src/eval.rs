//! Model-error metrics: operator-norm correlation errors on a foveal vertex
//! window, long-range correlation profiles and structure functions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Error, Result};
use crate::graph::edges::angular_distance;
use crate::graph::Vertex;
use crate::grid::{normal_samples, ComplexField, Fft2, Seed, C64};
use crate::harmonics::phase_harmonic;
use crate::wavelet::{Channel, ChannelLayout, WaveletBank};

/// Foveal vertex window V₀ around the origin. Exponents run over
/// `k_min..k_max` (half-open); positions over the (2Δn+1)² box of each
/// channel's lattice. `None` ranges mean all scales / all angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalWindow {
    pub k_min: i32,
    pub k_max: i32,
    pub delta_j: Option<u32>,
    pub delta_l: Option<u32>,
    pub delta_n: u32,
}

impl Default for EvalWindow {
    fn default() -> Self {
        Self { k_min: 0, k_max: 4, delta_j: None, delta_l: None, delta_n: 2 }
    }
}

impl EvalWindow {
    /// Vertex classes (channel, k), wavelets measured from channel (1, 0),
    /// plus the lowpass at k = 1.
    pub fn classes(&self, layout: ChannelLayout) -> Result<Vec<Vertex>> {
        if self.k_max <= self.k_min {
            return config("the window needs k_max > k_min");
        }
        let dj = self.delta_j.map_or(layout.scales, |v| v as usize);
        let dl = self.delta_l.map_or(layout.angles / 2, |v| v as usize);
        let mut out = Vec::new();
        for j in 1..=layout.scales.min(dj + 1) {
            for l in 0..layout.angles {
                if angular_distance(l, 0, layout.angles) > dl {
                    continue;
                }
                for k in self.k_min..self.k_max {
                    out.push(Vertex { channel: layout.wavelet(j, l), k });
                }
            }
        }
        out.push(Vertex { channel: layout.lowpass(), k: 1 });
        Ok(out)
    }

    pub fn positions(&self) -> Vec<(i32, i32)> {
        let r = self.delta_n as i32;
        (-r..=r).flat_map(|a| (-r..=r).map(move |b| (a, b))).collect()
    }

    /// |V₀|.
    pub fn size(&self, layout: ChannelLayout) -> Result<usize> {
        Ok(self.classes(layout)?.len() * self.positions().len())
    }
}

/// Dense Hermitian covariance over V₀ × V₀, index `class * positions + p`.
#[derive(Clone, Debug)]
pub struct WindowCovariance {
    pub classes: Vec<Vertex>,
    pub positions: Vec<(i32, i32)>,
    pub matrix: Vec<C64>,
    pub realizations: usize,
}

/// Largest window assembled densely.
const MAX_DIM: usize = 9000;

impl WindowCovariance {
    pub fn dim(&self) -> usize {
        self.classes.len() * self.positions.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| self.matrix[i * n + i].re).collect()
    }

    /// C = D^{−1/2} K D^{−1/2} with a shared diagonal D.
    pub fn correlation(&self, diag: &[f64]) -> Result<Vec<C64>> {
        let n = self.dim();
        if diag.len() != n {
            return shape("normalizing diagonal does not match the window");
        }
        if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
            return Err(Error::DegenerateChannel(format!("window vertex {i}")));
        }
        let s: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
        Ok((0..n * n).map(|i| self.matrix[i] * s[i / n] * s[i % n]).collect())
    }
}

/// Ensemble covariance of phase harmonic maps on the window, averaged over
/// all translations and realizations.
pub fn window_covariance(fields: &[ComplexField], bank: &WaveletBank, window: &EvalWindow) -> Result<WindowCovariance> {
    if fields.is_empty() {
        return config("no fields given");
    }
    let n = bank.side();
    if fields.iter().any(|x| x.side() != n) {
        return shape("field side does not match the bank");
    }
    let classes = window.classes(bank.layout())?;
    let positions = window.positions();
    let np = positions.len();
    let dim = classes.len() * np;
    if dim > MAX_DIM {
        return config(format!("window of {dim} vertices exceeds the dense limit {MAX_DIM}"));
    }
    let d = (n * n) as f64;
    let nc = classes.len();
    let fft = Fft2::new(n);
    let mut means = vec![C64::default(); nc];
    let mut corr: Vec<Vec<C64>> = vec![vec![C64::default(); n * n]; nc * (nc + 1) / 2];
    let pair = |a: usize, b: usize| a * nc - a * (a + 1) / 2 + b;
    for x in fields {
        let h = bank.spectrum(x)?;
        let spectra: Vec<Vec<C64>> = classes
            .iter()
            .map(|v| {
                let z = bank.full_resolution(&h, v.channel);
                let mut m: Vec<C64> = z.iter().map(|&c| phase_harmonic(c, v.k)).collect();
                fft.forward(&mut m);
                m
            })
            .collect();
        for a in 0..nc {
            means[a] += spectra[a][0] / d;
            for b in a..nc {
                let mut p: Vec<C64> = spectra[a].iter().zip(&spectra[b]).map(|(u, v)| u * v.conj()).collect();
                fft.forward(&mut p);
                for (acc, v) in corr[pair(a, b)].iter_mut().zip(&p) {
                    *acc += v;
                }
            }
        }
    }
    let r = fields.len() as f64;
    means.iter_mut().for_each(|m| *m /= r);
    // R_ab(δ) = (1/d) Σ_u A_a(u) conj(A_b(u + δ))
    let scale = 1.0 / (d * d * r);
    let ni = n as i64;
    let at = |a: usize, b: usize, dl: (i64, i64)| -> C64 {
        let idx = |t: (i64, i64)| (t.0.rem_euclid(ni) * ni + t.1.rem_euclid(ni)) as usize;
        if a <= b {
            corr[pair(a, b)][idx(dl)] * scale
        } else {
            (corr[pair(b, a)][idx((-dl.0, -dl.1))] * scale).conj()
        }
    };
    let layout = bank.layout();
    let mut matrix = vec![C64::default(); dim * dim];
    for a in 0..nc {
        let sa = layout.stride(classes[a].channel) as i64;
        for b in 0..nc {
            let sb = layout.stride(classes[b].channel) as i64;
            let mm = means[a] * means[b].conj();
            for (pa, na) in positions.iter().enumerate() {
                for (pb, nb) in positions.iter().enumerate() {
                    let dl = (sb * nb.0 as i64 - sa * na.0 as i64, sb * nb.1 as i64 - sa * na.1 as i64);
                    matrix[(a * np + pa) * dim + b * np + pb] = at(a, b, dl) - mm;
                }
            }
        }
    }
    // exact Hermitian completion
    for i in 0..dim {
        matrix[i * dim + i] = C64::new(matrix[i * dim + i].re, 0.0);
        for j in i + 1..dim {
            let v = 0.5 * (matrix[i * dim + j] + matrix[j * dim + i].conj());
            matrix[i * dim + j] = v;
            matrix[j * dim + i] = v.conj();
        }
    }
    Ok(WindowCovariance { classes, positions, matrix, realizations: fields.len() })
}

/// Largest |eigenvalue| of a dense Hermitian matrix by power iteration,
/// stopped when the estimate changes by less than `tol` relative.
pub fn operator_norm(m: &[C64], dim: usize, tol: f64, max_iter: usize) -> f64 {
    let g = normal_samples(2 * dim, Seed(0x5eed));
    let mut v: Vec<C64> = (0..dim).map(|i| C64::new(1.0 + 0.1 * g[2 * i], 0.1 * g[2 * i + 1])).collect();
    let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let n0 = norm(&v);
    v.iter_mut().for_each(|z| *z /= n0);
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w: Vec<C64> = (0..dim).map(|i| m[i * dim..(i + 1) * dim].iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let done = (nw - est).abs() <= tol * nw;
        est = nw;
        v = w.into_iter().map(|z| z / nw).collect();
        if done {
            break;
        }
    }
    est
}

/// Iteration cap for the operator norm.
const POWER_MAX_ITER: usize = 20_000;

/// ‖C_ref − C_test‖_op / ‖C_ref‖_op on the window, power iteration at `tol`.
pub fn correlation_error(c_ref: &[C64], c_test: &[C64], dim: usize, tol: f64) -> Result<f64> {
    if c_ref.len() != dim * dim || c_test.len() != dim * dim {
        return shape("correlation matrices do not cover the window");
    }
    let diff: Vec<C64> = c_ref.iter().zip(c_test).map(|(a, b)| a - b).collect();
    let den = operator_norm(c_ref, dim, tol, POWER_MAX_ITER);
    if den == 0.0 {
        return Err(Error::Numerical("reference correlation has zero operator norm".into()));
    }
    Ok(operator_norm(&diff, dim, tol, POWER_MAX_ITER) / den)
}

/// Largest |eigenvalue| from a dense Hermitian eigendecomposition.
pub fn operator_norm_dense(m: &[C64], dim: usize) -> f64 {
    let a = DMatrix::from_fn(dim, dim, |i, j| m[i * dim + j]);
    a.symmetric_eigenvalues().iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Mean and spread of a per-run metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl ErrorReport {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return config("no values to summarize");
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(ErrorReport { mean, std: var.sqrt(), values })
    }
}

/// ε_emp over reference realizations: each realization's window correlation
/// against the population one, all normalized by the population diagonal.
pub fn empirical_error(reference: &[ComplexField], bank: &WaveletBank, window: &EvalWindow, tol: f64) -> Result<ErrorReport> {
    let pop = window_covariance(reference, bank, window)?;
    let diag = pop.diagonal();
    let c_ref = pop.correlation(&diag)?;
    let values = reference
        .iter()
        .map(|x| {
            let k = window_covariance(std::slice::from_ref(x), bank, window)?;
            correlation_error(&c_ref, &k.correlation(&diag)?, pop.dim(), tol)
        })
        .collect::<Result<Vec<_>>>()?;
    ErrorReport::from_values(values)
}

/// ε_model: model samples pooled into one window correlation, compared to
/// the reference population with the reference diagonal.
pub fn model_error(reference: &[ComplexField], model: &[ComplexField], bank: &WaveletBank, window: &EvalWindow, tol: f64) -> Result<f64> {
    let pop = window_covariance(reference, bank, window)?;
    let diag = pop.diagonal();
    let m = window_covariance(model, bank, window)?;
    correlation_error(&pop.correlation(&diag)?, &m.correlation(&diag)?, pop.dim(), tol)
}

/// Integer offsets τ with ||τ| − r| < 0.5.
pub fn annulus(r: f64) -> Vec<(i64, i64)> {
    let m = (r + 1.0).ceil() as i64;
    let mut out = Vec::new();
    for a in -m..=m {
        for b in -m..=m {
            let t = ((a * a + b * b) as f64).sqrt();
            if (t - r).abs() < 0.5 {
                out.push((a, b));
            }
        }
    }
    out
}

/// C̄(k, j, a) for a = 0..=a_max: the largest |correlation| of [x⋆ψ_{j,ℓ}]^k
/// over angles ℓ and offsets in the annulus of radius 2^j a, normalized by
/// the map's own variance.
pub fn long_range_profile(fields: &[ComplexField], bank: &WaveletBank, k: i32, j: usize, a_max: usize) -> Result<Vec<f64>> {
    let n = bank.side();
    let layout = bank.layout();
    if fields.is_empty() {
        return config("no fields given");
    }
    if j == 0 || j > layout.scales {
        return config(format!("scale {j} outside 1..={}", layout.scales));
    }
    if ((1usize << j) * a_max) as f64 > n as f64 / 2.0 {
        return config(format!("distance 2^{j}·{a_max} exceeds half the grid period"));
    }
    let fft = Fft2::new(n);
    let d = (n * n) as f64;
    let mut best = vec![0.0f64; a_max + 1];
    for l in 0..layout.angles {
        let c = layout.wavelet(j, l);
        let mut mean = C64::default();
        let mut acc = vec![C64::default(); n * n];
        let mut maps = Vec::with_capacity(fields.len());
        for x in fields {
            let h = bank.spectrum(x)?;
            let mut m: Vec<C64> = bank.full_resolution(&h, c).iter().map(|&z| phase_harmonic(z, k)).collect();
            fft.forward(&mut m);
            mean += m[0] / d;
            maps.push(m);
        }
        mean /= fields.len() as f64;
        for mut m in maps {
            // centring only moves the DC bin
            m[0] -= mean * d;
            let mut p: Vec<C64> = m.iter().map(|z| C64::new(z.norm_sqr(), 0.0)).collect();
            fft.inverse(&mut p);
            for (a, v) in acc.iter_mut().zip(&p) {
                *a += v;
            }
        }
        let r0 = acc[0].re;
        if !(r0 > 0.0) {
            return Err(Error::DegenerateChannel(format!("channel {c}, k = {k}")));
        }
        let ni = n as i64;
        for (a, b) in best.iter_mut().enumerate() {
            for t in annulus(((1usize << j) * a) as f64) {
                let idx = (t.0.rem_euclid(ni) * ni + t.1.rem_euclid(ni)) as usize;
                *b = b.max(acc[idx].norm() / r0);
            }
        }
    }
    Ok(best)
}

/// Mean of |x(u) − x(u − τ)|^q for every offset in the annulus of radius
/// 2^{j−1}, in annulus order.
pub fn structure_function_offsets(x: &[f64], side: usize, j: usize, q: f64) -> Result<Vec<((i64, i64), f64)>> {
    if x.len() != side * side {
        return shape("field length does not match the side");
    }
    if j == 0 || !(q >= 1.0) {
        return config("structure functions need j ≥ 1 and q ≥ 1");
    }
    let r = (1usize << (j - 1)) as f64;
    if r >= side as f64 / 2.0 {
        return config(format!("offset 2^{} is not below half the grid", j - 1));
    }
    let n = side as i64;
    Ok(annulus(r)
        .into_iter()
        .map(|t| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    let u = (a * n + b) as usize;
                    let v = ((a - t.0).rem_euclid(n) * n + (b - t.1).rem_euclid(n)) as usize;
                    s += (x[u] - x[v]).abs().powf(q);
                }
            }
            (t, s / (n * n) as f64)
        })
        .collect())
}

/// S(j, q): the largest offset-wise mean of |x(u) − x(u − τ)|^q.
pub fn structure_function(x: &[f64], side: usize, j: usize, q: f64) -> Result<f64> {
    Ok(structure_function_offsets(x, side, j, q)?.into_iter().map(|p| p.1).fold(0.0, f64::max))
}

/// Signed relative deviations (S(x̃_i) − S̄_ref)/S̄_ref of each model sample
/// from the reference ensemble mean. ε_st is |mean|.
pub fn structure_error(reference: &[ComplexField], model: &[ComplexField], j: usize, q: f64) -> Result<ErrorReport> {
    if reference.is_empty() || model.is_empty() {
        return config("structure error needs reference and model samples");
    }
    let s = |x: &ComplexField| structure_function(&x.real_part(), x.side(), j, q);
    let sref = reference.iter().map(s).collect::<Result<Vec<_>>>()?.iter().sum::<f64>() / reference.len() as f64;
    if sref == 0.0 {
        return Err(Error::Numerical(format!("reference structure function vanishes at j = {j}, q = {q}")));
    }
    let values = model.iter().map(|x| Ok((s(x)? - sref) / sref)).collect::<Result<Vec<_>>>()?;
    ErrorReport::from_values(values)
}

/// True when `c` is a wavelet channel at scale `j`.
pub fn is_scale(layout: ChannelLayout, c: usize, j: usize) -> bool {
    matches!(layout.channel(c), Channel::Wavelet { j: s, .. } if s as usize == j)
}
