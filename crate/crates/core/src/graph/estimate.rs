//! Symmetry-averaged means and covariances of wavelet harmonic coefficients.
//!
//! Harmonic maps [x ⋆ ψ_c]^k are formed at every grid point and averaged over
//! all d translations. Rotations, reflections and the sign change act through
//! channel index maps and signs, so a group average is a signed sum of
//! translation-averaged products. The same plan provides the reverse-mode
//! derivative used by synthesis.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Error, Result};
use crate::graph::edges::{Edge, EdgeSet, Vertex};
use crate::graph::model::SymmetryGroup;
use crate::grid::{ComplexField, C64};
use crate::harmonics::{harmonic_derivative, phase_harmonic};
use crate::wavelet::{Channel, ChannelLayout, WaveletBank};

/// One element of the finite part of the group: reflect, then rotate by
/// `eta` angular steps, then multiply by `sign`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupElement {
    pub eta: usize,
    pub reflect: bool,
    pub sign: f64,
}

impl GroupElement {
    pub fn channel(&self, layout: &ChannelLayout, c: usize) -> usize {
        match layout.channel(c) {
            Channel::Lowpass => c,
            Channel::Wavelet { j, l } => {
                let q = layout.angles;
                let l = l as usize;
                let l = if self.reflect { (q - l) % q } else { l };
                layout.wavelet(j as usize, (l + self.eta) % q)
            }
        }
    }

    /// Image of a displacement; only the identity, half turns and the line
    /// reflection act on nonzero displacements.
    pub fn displacement(&self, q: usize, d: (i64, i64)) -> Option<(i64, i64)> {
        let d = if self.reflect { (d.0, -d.1) } else { d };
        if self.eta == 0 {
            Some(d)
        } else if 2 * self.eta == q {
            Some((-d.0, -d.1))
        } else if d == (0, 0) {
            Some(d)
        } else {
            None
        }
    }

    pub fn sign_power(&self, k: i32) -> f64 {
        if self.sign < 0.0 && k.rem_euclid(2) == 1 {
            -1.0
        } else {
            1.0
        }
    }
}

pub fn group_elements(group: &SymmetryGroup, angles: usize) -> Vec<GroupElement> {
    let etas: Vec<usize> = if group.rotations {
        (0..angles.max(1)).collect()
    } else if group.central_reflection && angles >= 2 {
        vec![0, angles / 2]
    } else {
        vec![0]
    };
    let reflects: &[bool] = if group.line_reflection { &[false, true] } else { &[false] };
    let signs: &[f64] = if group.sign_change { &[1.0, -1.0] } else { &[1.0] };
    let mut out = Vec::new();
    for &eta in &etas {
        for &reflect in reflects {
            for &sign in signs {
                out.push(GroupElement { eta, reflect, sign });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Key {
    a: usize,
    b: usize,
    shift: (usize, usize),
}

#[derive(Clone, Copy, Debug)]
struct Term {
    key: usize,
    conj: bool,
    coef: f64,
}

/// Per-field quantities kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct Snapshot {
    /// x ⋆ ψ_c at full resolution for each channel in `StatsPlan::channels`.
    pub coeffs: Vec<Vec<C64>>,
    /// Harmonic maps, one per `StatsPlan::maps` entry.
    pub maps: Vec<Vec<C64>>,
    pub map_means: Vec<C64>,
    pub products: Vec<C64>,
}

/// Group-averaged first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    /// Mean per vertex class.
    pub means: Vec<C64>,
    /// Averaged product per statistic edge (model edges, then added diagonals).
    pub second: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct StatsPlan {
    side: usize,
    layout: ChannelLayout,
    group: SymmetryGroup,
    elements: Vec<GroupElement>,
    channels: Vec<usize>,
    maps: Vec<Vertex>,
    map_channel: Vec<usize>,
    keys: Vec<Key>,
    vertices: Vec<Vertex>,
    mean_terms: Vec<Vec<(usize, f64)>>,
    edges: Vec<Edge>,
    model_edges: usize,
    edge_vertices: Vec<(usize, usize)>,
    edge_terms: Vec<Vec<Term>>,
    diag_edge: Vec<usize>,
}

fn wrap(v: i64, n: usize) -> usize {
    v.rem_euclid(n as i64) as usize
}

impl StatsPlan {
    pub fn new(bank: &WaveletBank, edges: &EdgeSet) -> Result<Self> {
        let layout = edges.layout;
        let n = bank.side();
        if bank.layout() != layout {
            return shape(format!(
                "bank layout J={} Q={} does not match edge layout J={} Q={}",
                bank.scales(),
                bank.angles(),
                layout.scales,
                layout.angles
            ));
        }
        let group = edges.group;
        if !group.translations {
            return config("the symmetry group always contains translations");
        }
        let elements = group_elements(&group, layout.angles);
        let vertices = edges.vertices();
        let vindex: HashMap<Vertex, usize> = vertices.iter().enumerate().map(|(i, v)| (*v, i)).collect();

        let mut stat_edges = edges.edges.clone();
        let mut diag_edge = vec![usize::MAX; vertices.len()];
        for (i, e) in stat_edges.iter().enumerate() {
            if e.is_diagonal() {
                diag_edge[vindex[&e.a]] = i;
            }
        }
        for (vi, v) in vertices.iter().enumerate() {
            if diag_edge[vi] == usize::MAX {
                diag_edge[vi] = stat_edges.len();
                stat_edges.push(Edge::diagonal(*v));
            }
        }

        let mut maps = Vec::new();
        let mut map_index: HashMap<Vertex, usize> = HashMap::new();
        let mut map_of = |v: Vertex, maps: &mut Vec<Vertex>| -> usize {
            *map_index.entry(v).or_insert_with(|| {
                maps.push(v);
                maps.len() - 1
            })
        };
        let inv = 1.0 / elements.len() as f64;
        let mut mean_terms = Vec::with_capacity(vertices.len());
        for v in &vertices {
            let mut t = Vec::new();
            for g in &elements {
                let m = map_of(Vertex { channel: g.channel(&layout, v.channel), k: v.k }, &mut maps);
                t.push((m, g.sign_power(v.k) * inv));
            }
            mean_terms.push(t);
        }

        let mut keys = Vec::new();
        let mut key_index: HashMap<Key, usize> = HashMap::new();
        let mut edge_terms = Vec::with_capacity(stat_edges.len());
        let mut edge_vertices = Vec::with_capacity(stat_edges.len());
        for e in &stat_edges {
            edge_vertices.push((vindex[&e.a], vindex[&e.b]));
            let disp = e.displacement(&layout);
            let mut t = Vec::new();
            for g in &elements {
                let Some(gd) = g.displacement(layout.angles, disp) else {
                    return config("rotation averaging requires same-position edges");
                };
                let a = map_of(Vertex { channel: g.channel(&layout, e.a.channel), k: e.a.k }, &mut maps);
                let b = map_of(Vertex { channel: g.channel(&layout, e.b.channel), k: e.b.k }, &mut maps);
                let fwd = Key { a, b, shift: (wrap(gd.0, n), wrap(gd.1, n)) };
                let bwd = Key { a: b, b: a, shift: (wrap(-gd.0, n), wrap(-gd.1, n)) };
                let (key, conj) = if (fwd.a, fwd.b, fwd.shift) <= (bwd.a, bwd.b, bwd.shift) { (fwd, false) } else { (bwd, true) };
                let id = *key_index.entry(key).or_insert_with(|| {
                    keys.push(key);
                    keys.len() - 1
                });
                t.push(Term { key: id, conj, coef: g.sign_power(e.a.k + e.b.k) * inv });
            }
            edge_terms.push(t);
        }
        let mut channels: Vec<usize> = maps.iter().map(|v| v.channel).collect();
        channels.sort_unstable();
        channels.dedup();
        let map_channel = maps.iter().map(|v| channels.binary_search(&v.channel).unwrap()).collect();
        Ok(StatsPlan {
            side: n,
            layout,
            group,
            elements,
            channels,
            maps,
            map_channel,
            keys,
            vertices,
            mean_terms,
            edges: stat_edges,
            model_edges: edges.edges.len(),
            edge_vertices,
            edge_terms,
            diag_edge,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn group(&self) -> SymmetryGroup {
        self.group
    }

    pub fn group_order(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    /// Model edges only.
    pub fn edges(&self) -> &[Edge] {
        &self.edges[..self.model_edges]
    }

    pub fn num_keys(&self) -> usize {
        self.keys.len()
    }

    /// Index of the diagonal of vertex `vi` among the statistic edges.
    pub fn diag_edge(&self, vi: usize) -> usize {
        self.diag_edge[vi]
    }

    /// Vertex indices (a, b) of statistic edge `ei`.
    pub fn edge_vertices(&self, ei: usize) -> (usize, usize) {
        self.edge_vertices[ei]
    }

    pub fn forward(&self, bank: &WaveletBank, x: &ComplexField) -> Result<Snapshot> {
        if x.side() != self.side {
            return shape(format!("field side {} does not match plan side {}", x.side(), self.side));
        }
        let xhat = bank.spectrum(x)?;
        Ok(self.forward_spectrum(bank, &xhat))
    }

    pub fn forward_real(&self, bank: &WaveletBank, x: &[f64]) -> Result<Snapshot> {
        let f = ComplexField::from_real(self.side, x)?;
        self.forward(bank, &f)
    }

    pub fn forward_spectrum(&self, bank: &WaveletBank, xhat: &[C64]) -> Snapshot {
        let n = self.side;
        let d = (n * n) as f64;
        let coeffs: Vec<Vec<C64>> = self.channels.iter().map(|&c| bank.full_resolution(xhat, c)).collect();
        let maps: Vec<Vec<C64>> = self
            .maps
            .iter()
            .zip(&self.map_channel)
            .map(|(v, &ci)| coeffs[ci].iter().map(|&z| phase_harmonic(z, v.k)).collect())
            .collect();
        let map_means = self
            .maps
            .iter()
            .zip(&maps)
            .map(|(v, m)| {
                if v.k == 1 {
                    // exact DC of the filtered field
                    xhat[0] * bank.filter(v.channel)[0] / d
                } else {
                    m.iter().sum::<C64>() / d
                }
            })
            .collect();
        let products = self.keys.iter().map(|k| shifted_product(&maps[k.a], &maps[k.b], k.shift, n)).collect();
        Snapshot { coeffs, maps, map_means, products }
    }

    pub fn moments(&self, s: &Snapshot) -> Moments {
        let means = self.mean_terms.iter().map(|t| t.iter().map(|&(m, c)| s.map_means[m] * c).sum()).collect();
        let second = self
            .edge_terms
            .iter()
            .map(|t| {
                t.iter()
                    .map(|term| {
                        let p = s.products[term.key];
                        (if term.conj { p.conj() } else { p }) * term.coef
                    })
                    .sum()
            })
            .collect();
        Moments { means, second }
    }

    /// Covariance per statistic edge, centred by `centre` (per vertex) or by
    /// the field's own means when `None`.
    pub fn covariance(&self, m: &Moments, centre: Option<&[C64]>) -> Vec<C64> {
        let own = &m.means;
        let c = centre.unwrap_or(own);
        self.edge_vertices
            .iter()
            .zip(&m.second)
            .map(|(&(a, b), &p)| p - c[a] * own[b].conj() - own[a] * c[b].conj() + c[a] * c[b].conj())
            .collect()
    }

    /// Cotangents of (means, second moments) from a covariance cotangent,
    /// for the centring used in [`StatsPlan::covariance`].
    pub fn covariance_vjp(&self, m: &Moments, centre: Option<&[C64]>, cov_bar: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let own = &m.means;
        let mut mean_bar = vec![C64::new(0.0, 0.0); self.vertices.len()];
        let second_bar = cov_bar.to_vec();
        for (&(a, b), &kb) in self.edge_vertices.iter().zip(cov_bar) {
            if kb == C64::new(0.0, 0.0) {
                continue;
            }
            match centre {
                None => {
                    mean_bar[a] -= kb * own[b];
                    mean_bar[b] -= kb.conj() * own[a];
                }
                Some(c) => {
                    mean_bar[a] -= kb * c[b];
                    mean_bar[b] -= kb.conj() * c[a];
                }
            }
        }
        (mean_bar, second_bar)
    }

    /// Gradient with respect to a real field, given cotangents q̄ = 2∂L/∂q̄
    /// of the vertex means and of the averaged second moments.
    pub fn backward(&self, bank: &WaveletBank, s: &Snapshot, mean_bar: &[C64], second_bar: &[C64]) -> Vec<f64> {
        let n = self.side;
        let d = (n * n) as f64;
        let zero = C64::new(0.0, 0.0);
        let mut map_mean_bar = vec![zero; self.maps.len()];
        for (t, &mb) in self.mean_terms.iter().zip(mean_bar) {
            for &(m, c) in t {
                map_mean_bar[m] += mb * c;
            }
        }
        let mut prod_bar = vec![zero; self.keys.len()];
        for (t, &pb) in self.edge_terms.iter().zip(second_bar) {
            if pb == zero {
                continue;
            }
            for term in t {
                prod_bar[term.key] += if term.conj { pb.conj() } else { pb } * term.coef;
            }
        }
        let mut map_bar: Vec<Vec<C64>> = vec![Vec::new(); self.maps.len()];
        let mut spectral_bar = vec![zero; n * n];
        for (mi, v) in self.maps.iter().enumerate() {
            if v.k == 1 && map_mean_bar[mi] != zero {
                // mean read off the DC bin; the inverse transform below
                // supplies the 1/d
                spectral_bar[0] += map_mean_bar[mi] * bank.filter(v.channel)[0];
            } else if map_mean_bar[mi] != zero {
                map_bar[mi] = vec![map_mean_bar[mi] / d; n * n];
            }
        }
        for (k, &pb) in self.keys.iter().zip(&prod_bar) {
            if pb == zero {
                continue;
            }
            for idx in [k.a, k.b] {
                if map_bar[idx].is_empty() {
                    map_bar[idx] = vec![zero; n * n];
                }
            }
            let (lo, hi) = (k.a.min(k.b), k.a.max(k.b));
            if lo == hi {
                let (a, abar) = (&s.maps[k.a], &mut map_bar[k.a]);
                shifted_product_vjp_same(a, abar, k.shift, pb / d, n);
            } else {
                let (left, right) = map_bar.split_at_mut(hi);
                let (abar, bbar) = if k.a < k.b { (&mut left[lo], &mut right[0]) } else { (&mut right[0], &mut left[lo]) };
                shifted_product_vjp(&s.maps[k.a], &s.maps[k.b], abar, bbar, k.shift, pb / d, n);
            }
        }
        // chain through the harmonic maps to x ⋆ ψ_c
        let mut coeff_bar: Vec<Vec<C64>> = vec![Vec::new(); self.channels.len()];
        for (mi, v) in self.maps.iter().enumerate() {
            if map_bar[mi].is_empty() {
                continue;
            }
            let ci = self.map_channel[mi];
            if coeff_bar[ci].is_empty() {
                coeff_bar[ci] = vec![zero; n * n];
            }
            let z = &s.coeffs[ci];
            for ((zb, &ab), &zz) in coeff_bar[ci].iter_mut().zip(&map_bar[mi]).zip(z) {
                if v.k == 1 {
                    *zb += ab;
                } else {
                    let (dz, dzc) = harmonic_derivative(zz, v.k);
                    *zb += ab * dz.conj() + ab.conj() * dzc;
                }
            }
        }
        // adjoint of the real filtering: Re(IDFT(Σ_c ψ̂_c DFT(z̄_c)))
        let fft = bank.fft();
        for (ci, zb) in coeff_bar.iter_mut().enumerate() {
            if zb.is_empty() {
                continue;
            }
            fft.forward(zb);
            let f = bank.filter(self.channels[ci]);
            for ((acc, &z), &h) in spectral_bar.iter_mut().zip(zb.iter()).zip(f) {
                *acc += z * h;
            }
        }
        fft.inverse(&mut spectral_bar);
        spectral_bar.iter().map(|z| z.re).collect()
    }
}

/// (1/d) Σ_w a(w) conj(b(w + shift)).
fn shifted_product(a: &[C64], b: &[C64], shift: (usize, usize), n: usize) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..n {
        let ra = &a[r * n..(r + 1) * n];
        let rb = &b[((r + shift.0) % n) * n..((r + shift.0) % n + 1) * n];
        let split = n - shift.1;
        let mut row = C64::new(0.0, 0.0);
        for (x, y) in ra[..split].iter().zip(&rb[shift.1..]) {
            row += x * y.conj();
        }
        for (x, y) in ra[split..].iter().zip(&rb[..shift.1]) {
            row += x * y.conj();
        }
        acc += row;
    }
    acc / (n * n) as f64
}

fn shifted_product_vjp(a: &[C64], b: &[C64], abar: &mut [C64], bbar: &mut [C64], shift: (usize, usize), pb: C64, n: usize) {
    let pc = pb.conj();
    for r in 0..n {
        let rb0 = ((r + shift.0) % n) * n;
        for c in 0..n {
            let w = r * n + c;
            let wb = rb0 + (c + shift.1) % n;
            abar[w] += pb * b[wb];
            bbar[wb] += pc * a[w];
        }
    }
}

fn shifted_product_vjp_same(a: &[C64], abar: &mut [C64], shift: (usize, usize), pb: C64, n: usize) {
    let pc = pb.conj();
    for r in 0..n {
        let rb0 = ((r + shift.0) % n) * n;
        for c in 0..n {
            let w = r * n + c;
            let wb = rb0 + (c + shift.1) % n;
            abar[w] += pb * a[wb];
            abar[wb] += pc * a[w];
        }
    }
}

/// Estimated statistics keyed by vertex classes and edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceTable {
    pub side: usize,
    pub layout: ChannelLayout,
    pub group: SymmetryGroup,
    pub vertices: Vec<Vertex>,
    pub means: Vec<C64>,
    /// Own covariance diagonal per vertex.
    pub diag: Vec<f64>,
    pub edges: Vec<Edge>,
    pub cov: Vec<C64>,
    /// Correlations K/√(D D'), once normalized.
    pub normalized: Option<Vec<C64>>,
    /// Diagonal used for `normalized`.
    pub norm_diag: Option<Vec<f64>>,
    pub realizations: usize,
    pub source: String,
}

impl CovarianceTable {
    fn from_moments(plan: &StatsPlan, m: &Moments, centre: Option<&[C64]>, realizations: usize, source: &str) -> Self {
        let cov = plan.covariance(m, centre);
        let own = plan.covariance(m, None);
        let diag = (0..plan.vertices.len()).map(|vi| own[plan.diag_edge[vi]].re).collect();
        CovarianceTable {
            side: plan.side,
            layout: plan.layout,
            group: plan.group,
            vertices: plan.vertices.clone(),
            means: m.means.clone(),
            diag,
            edges: plan.edges[..plan.model_edges].to_vec(),
            cov: cov[..plan.model_edges].to_vec(),
            normalized: None,
            norm_diag: None,
            realizations,
            source: source.to_string(),
        }
    }

    pub fn vertex_index(&self, v: &Vertex) -> Option<usize> {
        self.vertices.binary_search(v).ok()
    }

    pub fn edge_index(&self, e: &Edge) -> Option<usize> {
        self.edges.binary_search(e).ok()
    }

    pub fn get(&self, e: &Edge) -> Option<C64> {
        self.edge_index(e).map(|i| self.cov[i])
    }

    pub fn mean(&self, v: &Vertex) -> Option<C64> {
        self.vertex_index(v).map(|i| self.means[i])
    }

    pub fn correlation(&self, e: &Edge) -> Option<C64> {
        let n = self.normalized.as_ref()?;
        self.edge_index(e).map(|i| n[i])
    }
}

fn table_stats(plan: &StatsPlan, bank: &WaveletBank, fields: &[ComplexField]) -> Result<Moments> {
    if fields.is_empty() {
        return config("at least one field is required");
    }
    let mut acc: Option<Moments> = None;
    for x in fields {
        if x.max_abs_imag() != 0.0 {
            return shape("fields must be real-valued");
        }
        let m = plan.moments(&plan.forward(bank, x)?);
        acc = Some(match acc {
            None => m,
            Some(mut a) => {
                a.means.iter_mut().zip(&m.means).for_each(|(p, q)| *p += q);
                a.second.iter_mut().zip(&m.second).for_each(|(p, q)| *p += q);
                a
            }
        });
    }
    let mut m = acc.unwrap();
    let inv = 1.0 / fields.len() as f64;
    m.means.iter_mut().for_each(|p| *p *= inv);
    m.second.iter_mut().for_each(|p| *p *= inv);
    Ok(m)
}

/// Group-averaged means M̃(v) for every vertex class of `edges`.
pub fn estimate_mean(x: &ComplexField, bank: &WaveletBank, edges: &EdgeSet) -> Result<Vec<C64>> {
    let plan = StatsPlan::new(bank, edges)?;
    Ok(table_stats(&plan, bank, std::slice::from_ref(x))?.means)
}

/// Covariances centred by the given means (one per vertex class, in the
/// order of `EdgeSet::vertices`).
pub fn estimate_covariance(x: &ComplexField, bank: &WaveletBank, edges: &EdgeSet, means: &[C64]) -> Result<CovarianceTable> {
    let plan = StatsPlan::new(bank, edges)?;
    if means.len() != plan.vertices.len() {
        return shape(format!("{} means given for {} vertex classes", means.len(), plan.vertices.len()));
    }
    let m = table_stats(&plan, bank, std::slice::from_ref(x))?;
    Ok(CovarianceTable::from_moments(&plan, &m, Some(means), 1, "single"))
}

/// Means and covariances of one field, centred by its own means.
pub fn estimate_table(x: &ComplexField, bank: &WaveletBank, edges: &EdgeSet) -> Result<CovarianceTable> {
    let plan = StatsPlan::new(bank, edges)?;
    estimate_with_plan(&plan, bank, std::slice::from_ref(x), "single")
}

/// Ensemble estimate: moments averaged over realizations, then centred.
pub fn estimate_ensemble(fields: &[ComplexField], bank: &WaveletBank, edges: &EdgeSet) -> Result<CovarianceTable> {
    let plan = StatsPlan::new(bank, edges)?;
    estimate_with_plan(&plan, bank, fields, "ensemble")
}

pub fn estimate_with_plan(plan: &StatsPlan, bank: &WaveletBank, fields: &[ComplexField], source: &str) -> Result<CovarianceTable> {
    let m = table_stats(plan, bank, fields)?;
    Ok(CovarianceTable::from_moments(plan, &m, None, fields.len(), source))
}

/// C̃(v,v') = K̃(v,v')/√(D(v) D(v')). `reference_diag` is indexed like
/// `table.vertices`; `None` uses the table's own diagonal.
pub fn normalize_correlations(table: &CovarianceTable, reference_diag: Option<&[f64]>) -> Result<CovarianceTable> {
    let diag = reference_diag.unwrap_or(&table.diag);
    if diag.len() != table.vertices.len() {
        return shape("reference diagonal does not match the vertex classes");
    }
    for (v, &dv) in table.vertices.iter().zip(diag) {
        if !(dv > 0.0) || !dv.is_finite() {
            return Err(Error::DegenerateChannel(format!(
                "vertex (channel {}, k {}) has diagonal {dv:e}",
                v.channel, v.k
            )));
        }
    }
    let normalized = table
        .edges
        .iter()
        .zip(&table.cov)
        .map(|(e, &k)| {
            let a = table.vertex_index(&e.a).unwrap();
            let b = table.vertex_index(&e.b).unwrap();
            k / (diag[a] * diag[b]).sqrt()
        })
        .collect();
    let mut out = table.clone();
    out.normalized = Some(normalized);
    out.norm_diag = Some(diag.to_vec());
    Ok(out)
}
