//! Angular Fourier reduction of rotation-averaged covariance tables.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::graph::{normalize_correlations, CovarianceTable, Edge, Vertex};
use crate::grid::C64;
use crate::wavelet::Channel;

/// Scale and exponent of a wavelet vertex, angle dropped.
pub type ScaleExponent = (u32, i32);

/// Angular spectrum of one (j, k) × (j', k') block: value per frequency m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularBlock {
    pub a: ScaleExponent,
    pub b: ScaleExponent,
    pub values: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedTable {
    pub angles: usize,
    pub real_only: bool,
    pub blocks: Vec<AngularBlock>,
    /// Entries touching the lowpass, which carry no angle.
    pub lowpass: Vec<(Edge, C64)>,
}

impl ReducedTable {
    /// Number of stored coefficients.
    pub fn size(&self) -> usize {
        self.blocks.len() * self.angles + self.lowpass.len()
    }

    /// Size of the same blocks before reduction (a full Q × Q angular matrix
    /// per block).
    pub fn unreduced_size(&self) -> usize {
        self.blocks.len() * self.angles * self.angles + self.lowpass.len()
    }
}

fn wavelet_of(table: &CovarianceTable, v: &Vertex) -> Option<(u32, u32)> {
    match table.layout.channel(v.channel) {
        Channel::Wavelet { j, l } => Some((j, l)),
        Channel::Lowpass => None,
    }
}

/// Correlation looked up in either orientation; zero when not stored.
fn lookup(table: &CovarianceTable, values: &[C64], e: &Edge) -> C64 {
    if let Some(i) = table.edge_index(e) {
        return values[i];
    }
    table.edge_index(&e.reversed()).map(|i| values[i].conj()).unwrap_or_default()
}

fn correlations(table: &CovarianceTable) -> Result<Vec<C64>> {
    match &table.normalized {
        Some(n) => Ok(n.clone()),
        None => Ok(normalize_correlations(table, None)?.normalized.unwrap()),
    }
}

/// Same-position wavelet blocks present in the table, one per Hermitian pair.
fn blocks(table: &CovarianceTable) -> Result<Vec<(ScaleExponent, ScaleExponent)>> {
    let mut set = BTreeSet::new();
    for e in &table.edges {
        let (Some((j, _)), Some((j2, _))) = (wavelet_of(table, &e.a), wavelet_of(table, &e.b)) else { continue };
        if e.offset != (0, 0) {
            return config("angular reduction needs same-position edges");
        }
        let (a, b) = ((j, e.a.k), (j2, e.b.k));
        if !set.contains(&(b, a)) {
            set.insert((a, b));
        }
    }
    Ok(set.into_iter().collect())
}

/// Full angular DFT of a block,
/// Ĉ(m, m') = (1/Q) Σ_{ℓ,ℓ'} C(ℓ, ℓ') e^{−2πi(mℓ − m'ℓ')/Q}, row-major in (m, m').
pub fn angular_spectrum_matrix(table: &CovarianceTable, a: ScaleExponent, b: ScaleExponent) -> Result<Vec<C64>> {
    let c = correlations(table)?;
    Ok(block_dft(table, &c, a, b))
}

fn block_dft(table: &CovarianceTable, c: &[C64], a: ScaleExponent, b: ScaleExponent) -> Vec<C64> {
    let q = table.layout.angles;
    let lay = table.layout;
    let mut m = vec![C64::default(); q * q];
    for l in 0..q {
        for l2 in 0..q {
            let e = Edge {
                a: Vertex { channel: lay.wavelet(a.0 as usize, l), k: a.1 },
                b: Vertex { channel: lay.wavelet(b.0 as usize, l2), k: b.1 },
                offset: (0, 0),
            };
            m[l * q + l2] = lookup(table, c, &e);
        }
    }
    let w = |r: usize| C64::from_polar(1.0, -2.0 * PI * (r % q) as f64 / q as f64);
    // rows then columns
    let mut t = vec![C64::default(); q * q];
    for mm in 0..q {
        for l2 in 0..q {
            t[mm * q + l2] = (0..q).map(|l| w(mm * l) * m[l * q + l2]).sum();
        }
    }
    let mut out = vec![C64::default(); q * q];
    for mm in 0..q {
        for m2 in 0..q {
            out[mm * q + m2] = (0..q).map(|l2| t[mm * q + l2] * w(m2 * l2).conj()).sum::<C64>() / q as f64;
        }
    }
    out
}

/// Energy of the angular spectra off and on the m = m' diagonal, summed over
/// all blocks.
pub fn angular_energy(table: &CovarianceTable) -> Result<(f64, f64)> {
    let c = correlations(table)?;
    let q = table.layout.angles;
    let (mut off, mut total) = (0.0, 0.0);
    for (a, b) in blocks(table)? {
        let m = block_dft(table, &c, a, b);
        for (i, v) in m.iter().enumerate() {
            total += v.norm_sqr();
            if i / q != i % q {
                off += v.norm_sqr();
            }
        }
    }
    Ok((off, total))
}

/// Keeps the m = m' angular frequencies of every block; with line reflection
/// in the group only their real parts.
pub fn angular_fourier_reduce(table: &CovarianceTable) -> Result<ReducedTable> {
    if !table.group.rotations {
        return config("angular reduction requires rotations in the symmetry group");
    }
    let c = correlations(table)?;
    let q = table.layout.angles;
    let real_only = table.group.line_reflection;
    let blocks = blocks(table)?
        .into_iter()
        .map(|(a, b)| {
            let m = block_dft(table, &c, a, b);
            let values = (0..q).map(|i| if real_only { C64::new(m[i * q + i].re, 0.0) } else { m[i * q + i] }).collect();
            AngularBlock { a, b, values }
        })
        .collect();
    let lowpass = table
        .edges
        .iter()
        .zip(&c)
        .filter(|(e, _)| wavelet_of(table, &e.a).is_none() || wavelet_of(table, &e.b).is_none())
        .map(|(e, v)| (*e, *v))
        .collect();
    Ok(ReducedTable { angles: q, real_only, blocks, lowpass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_foveal_edges, estimate_table, EdgeSet, ModelName, ModelSpec, SymmetryGroup};
    use crate::grid::{white_noise, ComplexField, Seed};
    use crate::wavelet::{ChannelLayout, WaveletBank};

    fn anisotropic(n: usize) -> ComplexField {
        let x = white_noise(n, 1.0, Seed(12)).unwrap();
        // horizontal smoothing and squaring: anisotropic and non-Gaussian
        let d = x.real_part();
        let v: Vec<f64> = (0..n * n)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                let s = d[i] + d[r * n + (c + 1) % n] + d[r * n + (c + 2) % n];
                s * s.abs()
            })
            .collect();
        ComplexField::from_real(n, &v).unwrap()
    }

    fn model_d(q: usize, reflect: bool) -> ModelSpec {
        let mut s = ModelSpec::preset(ModelName::D, 2, q).unwrap();
        if reflect {
            s.group = s.group.with_line_reflection();
        }
        s
    }

    #[test]
    fn rotation_averaged_table_is_diagonal_in_angular_frequency() {
        let n = 16;
        let bank = WaveletBank::bump(n, 2, 8).unwrap();
        let e = build_foveal_edges(&model_d(8, false)).unwrap();
        let t = estimate_table(&anisotropic(n), &bank, &e).unwrap();
        let (off, total) = angular_energy(&t).unwrap();
        assert!(off < 1e-10 * total, "{off} / {total}");
        // without rotation averaging the same field is far from diagonal
        let mut s = model_d(8, false);
        s.group.rotations = false;
        let t2 = estimate_table(&anisotropic(n), &bank, &build_foveal_edges(&s).unwrap()).unwrap();
        let (off2, total2) = angular_energy(&t2).unwrap();
        assert!(off2 > 1e-3 * total2);
        let r = angular_fourier_reduce(&t).unwrap();
        assert_eq!(r.unreduced_size() - r.lowpass.len(), 8 * (r.size() - r.lowpass.len()));
    }

    #[test]
    fn reduced_values_are_real_with_line_reflection() {
        let n = 16;
        let bank = WaveletBank::bump(n, 2, 8).unwrap();
        let e = build_foveal_edges(&model_d(8, true)).unwrap();
        let t = estimate_table(&anisotropic(n), &bank, &e).unwrap();
        let r = angular_fourier_reduce(&t).unwrap();
        assert!(r.real_only);
        for b in &r.blocks {
            let m = angular_spectrum_matrix(&t, b.a, b.b).unwrap();
            for (i, v) in b.values.iter().enumerate() {
                assert!(m[i * 8 + i].im.abs() < 1e-12, "{:?}", m[i * 8 + i]);
                assert_eq!(v.im, 0.0);
            }
        }
    }

    #[test]
    fn single_angle_is_identity() {
        let n = 8;
        let b2 = WaveletBank::bump(n, 2, 2).unwrap();
        let lay = ChannelLayout { scales: 2, angles: 1 };
        let filters = vec![b2.filter(0).to_vec(), b2.filter(2).to_vec(), b2.filter(4).to_vec()];
        let bank = WaveletBank::from_layout(n, lay, filters).unwrap();
        let vs: Vec<Vertex> = [(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|&(c, k)| Vertex { channel: c, k }).collect();
        let mut edges: Vec<Edge> = vs.iter().flat_map(|&a| vs.iter().map(move |&b| Edge { a, b, offset: (0, 0) })).collect();
        edges.push(Edge::diagonal(Vertex { channel: 2, k: 1 }));
        let e = EdgeSet::from_edges(lay, SymmetryGroup::translations().with_rotations(), edges).unwrap();
        let t = estimate_table(&anisotropic(n), &bank, &e).unwrap();
        let c = normalize_correlations(&t, None).unwrap();
        let r = angular_fourier_reduce(&c).unwrap();
        for b in &r.blocks {
            let edge = Edge {
                a: Vertex { channel: t.layout.wavelet(b.a.0 as usize, 0), k: b.a.1 },
                b: Vertex { channel: t.layout.wavelet(b.b.0 as usize, 0), k: b.b.1 },
                offset: (0, 0),
            };
            let want = lookup(&c, c.normalized.as_ref().unwrap(), &edge);
            assert!((b.values[0] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn requires_rotations() {
        let n = 8;
        let bank = WaveletBank::bump(n, 1, 4).unwrap();
        let e = build_foveal_edges(&ModelSpec::preset(ModelName::B, 1, 4).unwrap()).unwrap();
        let t = estimate_table(&anisotropic(n), &bank, &e).unwrap();
        assert!(angular_fourier_reduce(&t).is_err());
    }
}
