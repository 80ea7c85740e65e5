//! Gaussianity diagnostics: wavelet sparsity ratios and cross-channel
//! harmonic covariances between spectrally disjoint channels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};
use crate::grid::{signed_index, ComplexField, C64};
use crate::harmonics::phase_harmonic;
use crate::wavelet::{Channel, WaveletBank};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaussianityConfig {
    /// A ratio below the Gaussian reference minus this is flagged.
    pub threshold: f64,
    /// Cross covariances with |z| above this are flagged.
    pub z_flag: f64,
    /// Energy fraction defining a filter's support radius.
    pub energy_fraction: f64,
    pub exponents: Vec<i32>,
    pub cross_pairs: bool,
    /// Filters count as disjoint when Σ|ψ̂_a ψ̂_b| (direct plus mirrored) is
    /// below this fraction of ‖ψ̂_a‖‖ψ̂_b‖.
    pub overlap_tol: f64,
}

impl Default for GaussianityConfig {
    fn default() -> Self {
        Self { threshold: 0.05, z_flag: 5.0, energy_fraction: 0.99, exponents: vec![0, 1, 2], cross_pairs: true, overlap_tol: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelSparsity {
    pub channel: usize,
    pub ratio: f64,
    /// |E Z²| / E|Z|²: zero for circular channels.
    pub noncircularity: f64,
    /// Ratio a Gaussian channel with this noncircularity would have; π/4
    /// when circular.
    pub gaussian_ratio: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossPair {
    pub a: usize,
    pub k: i32,
    pub b: usize,
    pub k2: i32,
    pub cov: C64,
    pub z: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub realizations: usize,
    /// Smallest C with every filter's energy fraction inside radius C|ξ|.
    pub support_constant: f64,
    pub channels: Vec<ChannelSparsity>,
    pub pairs: Vec<CrossPair>,
}

impl GaussianityReport {
    pub fn consistent_with_gaussian(&self) -> bool {
        self.channels.iter().all(|c| !c.flagged) && self.pairs.iter().all(|p| !p.flagged)
    }

    pub fn verdict(c: &ChannelSparsity) -> &'static str {
        if c.flagged {
            "non-Gaussian (sparse)"
        } else {
            "consistent with Gaussian"
        }
    }
}

fn wavelets(bank: &WaveletBank) -> Vec<usize> {
    (0..bank.num_channels()).filter(|&c| bank.channel(c) != Channel::Lowpass).collect()
}

/// E(|Z|)²/E(|Z|²) for complex Gaussian Z with |E Z²| = ρ E|Z|²: the
/// principal variances are (1 ± ρ)/2 and E|Z| = √(π/2)/(2π) ∫ √(λ₁cos²θ + λ₂sin²θ) dθ.
pub fn gaussian_sparsity_ratio(rho: f64) -> f64 {
    let rho = rho.clamp(0.0, 1.0);
    let (l1, l2) = ((1.0 + rho) / 2.0, (1.0 - rho) / 2.0);
    // periodic integrand: the trapezoid rule converges geometrically
    let m = 4096;
    let h = 2.0 * PI / m as f64;
    let integral: f64 = (0..m)
        .map(|i| {
            let t = i as f64 * h;
            (l1 * t.cos().powi(2) + l2 * t.sin().powi(2)).sqrt()
        })
        .sum::<f64>()
        * h;
    let e1 = (PI / 2.0).sqrt() / (2.0 * PI) * integral;
    e1 * e1
}

/// Frequency of a grid bin in radians per sample.
fn bin_freq(i: usize, n: usize) -> (f64, f64) {
    let s = 2.0 * PI / n as f64;
    (signed_index(i / n, n) as f64 * s, signed_index(i % n, n) as f64 * s)
}

/// Smallest C such that, for every wavelet, `fraction` of |ψ̂|² lies within
/// C|ξ| of its centre ξ, distances taken on the periodic frequency torus.
pub fn support_constant(bank: &WaveletBank, fraction: f64) -> f64 {
    let n = bank.side();
    let mut worst: f64 = 0.0;
    for c in wavelets(bank) {
        let f = bank.filter(c);
        let xi = bank.center(c);
        let norm = xi.0.hypot(xi.1);
        if norm == 0.0 {
            continue;
        }
        let mut pts: Vec<(f64, f64)> = (0..n * n)
            .filter(|&i| f[i] != 0.0)
            .map(|i| {
                let w = bin_freq(i, n);
                let wrap = |t: f64| (t + PI).rem_euclid(2.0 * PI) - PI;
                (wrap(w.0 - xi.0).hypot(wrap(w.1 - xi.1)), f[i] * f[i])
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let mut acc = 0.0;
        for (r, e) in pts {
            acc += e;
            if acc >= fraction * total {
                worst = worst.max(r / norm);
                break;
            }
        }
    }
    worst
}

/// Relative spectral overlap of two filters, directly or through the mirror
/// ω → −ω.
pub fn filter_overlap(bank: &WaveletBank, a: usize, b: usize) -> f64 {
    let n = bank.side();
    let (fa, fb) = (bank.filter(a), bank.filter(b));
    let mut acc = 0.0;
    for i in 0..n * n {
        let m = ((n - i / n) % n) * n + (n - i % n) % n;
        acc += (fa[i] * fb[i]).abs() + (fa[i] * fb[m]).abs();
    }
    let na: f64 = fa.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = fb.iter().map(|v| v * v).sum::<f64>().sqrt();
    acc / (na * nb)
}

fn frequency_match(bank: &WaveletBank, a: usize, k: i32, b: usize, k2: i32, c: f64) -> bool {
    let (xa, xb) = (bank.center(a), bank.center(b));
    let (kf, k2f) = (k as f64, k2 as f64);
    let gap = (kf * xa.0 - k2f * xb.0).hypot(kf * xa.1 - k2f * xb.1);
    let reach = c * ((k.abs().max(1) as f64) * xa.0.hypot(xa.1) + (k2.abs().max(1) as f64) * xb.0.hypot(xb.1));
    gap <= reach
}

/// Sparsity ratios E(|X⋆ψ|)²/E(|X⋆ψ|²) per wavelet channel, and cross
/// covariances Cov([X⋆ψ_a]^k(u), [X⋆ψ_b]^{k'}(u)) for spectrally disjoint
/// pairs with kξ_a ≈ k'ξ_b. Averages run over all positions and realizations;
/// standard errors use (side / stride)² independent samples per realization.
pub fn gaussianity_report(fields: &[ComplexField], bank: &WaveletBank, cfg: &GaussianityConfig) -> Result<GaussianityReport> {
    if fields.is_empty() {
        return config("no fields given");
    }
    if fields.iter().any(|x| x.side() != bank.side()) {
        return shape("field side does not match the bank");
    }
    let n = bank.side();
    let d = (n * n) as f64;
    let chans = wavelets(bank);
    let cconst = support_constant(bank, cfg.energy_fraction);
    let mut pairs: Vec<(usize, i32, usize, i32)> = Vec::new();
    if cfg.cross_pairs {
        for (ia, &a) in chans.iter().enumerate() {
            for &b in &chans[ia + 1..] {
                if filter_overlap(bank, a, b) > cfg.overlap_tol {
                    continue;
                }
                for &k in &cfg.exponents {
                    for &k2 in &cfg.exponents {
                        if frequency_match(bank, a, k, b, k2, cconst) {
                            pairs.push((a, k, b, k2));
                        }
                    }
                }
            }
        }
    }
    let nk = cfg.exponents.len();
    let slot = |c: usize, k: i32| c * nk + cfg.exponents.iter().position(|&x| x == k).unwrap();
    let nslots = bank.num_channels() * nk;
    let mut abs1 = vec![0.0; bank.num_channels()];
    let mut abs2 = vec![0.0; bank.num_channels()];
    let mut pseudo = vec![C64::default(); bank.num_channels()];
    let mut sums = vec![C64::default(); nslots];
    let mut sq = vec![0.0; nslots];
    let mut cross = vec![C64::default(); pairs.len()];
    for x in fields {
        let h = bank.spectrum(x)?;
        let mut maps: Vec<Option<Vec<C64>>> = vec![None; nslots];
        for &c in &chans {
            let z = bank.full_resolution(&h, c);
            for v in &z {
                let m = v.norm();
                abs1[c] += m;
                abs2[c] += m * m;
                pseudo[c] += v * v;
            }
            if cfg.cross_pairs {
                for &k in &cfg.exponents {
                    let s = slot(c, k);
                    let p: Vec<C64> = z.iter().map(|&v| phase_harmonic(v, k)).collect();
                    for v in &p {
                        sums[s] += v;
                        sq[s] += v.norm_sqr();
                    }
                    maps[s] = Some(p);
                }
            }
        }
        for (pi, &(a, k, b, k2)) in pairs.iter().enumerate() {
            let (pa, pb) = (maps[slot(a, k)].as_ref().unwrap(), maps[slot(b, k2)].as_ref().unwrap());
            cross[pi] += pa.iter().zip(pb).map(|(u, v)| u * v.conj()).sum::<C64>();
        }
    }
    let total = d * fields.len() as f64;
    let channels = chans
        .iter()
        .map(|&c| {
            let m1 = abs1[c] / total;
            let m2 = abs2[c] / total;
            let ratio = if m2 > 0.0 { m1 * m1 / m2 } else { f64::NAN };
            let noncircularity = if m2 > 0.0 { (pseudo[c] / total).norm() / m2 } else { 0.0 };
            let gaussian_ratio = gaussian_sparsity_ratio(noncircularity);
            ChannelSparsity { channel: c, ratio, noncircularity, gaussian_ratio, flagged: ratio < gaussian_ratio - cfg.threshold }
        })
        .collect();
    let pairs = pairs
        .iter()
        .zip(&cross)
        .map(|(&(a, k, b, k2), &s)| {
            let (sa, sb) = (slot(a, k), slot(b, k2));
            let (ma, mb) = (sums[sa] / total, sums[sb] / total);
            let cov = s / total - ma * mb.conj();
            let va = (sq[sa] / total - ma.norm_sqr()).max(0.0);
            let vb = (sq[sb] / total - mb.norm_sqr()).max(0.0);
            let stride = bank.stride(a).max(bank.stride(b)) as f64;
            let n_eff = fields.len() as f64 * (n as f64 / stride).powi(2);
            let se = (va * vb / n_eff).sqrt();
            let z = if se > 0.0 { cov.norm() / se } else { 0.0 };
            CrossPair { a, k, b, k2, cov, z, flagged: z > cfg.z_flag }
        })
        .collect();
    Ok(GaussianityReport { realizations: fields.len(), support_constant: cconst, channels, pairs })
}
