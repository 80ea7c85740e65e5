//! Phase harmonics [z]^k = |z| e^{ikφ(z)}, harmonic weight families and the
//! rectified phase-window form.

use std::f64::consts::PI;

use crate::grid::C64;
use crate::wavelet::WaveletCoeffs;

/// Unit phase of z, with the phase of 0 taken as 0.
#[inline]
pub fn unit_phase(z: C64) -> (f64, C64) {
    let r = z.norm();
    if r == 0.0 {
        (0.0, C64::new(1.0, 0.0))
    } else {
        (r, z / r)
    }
}

/// u^k for a unit complex u by repeated multiplication, so that (−u)^k is
/// exactly (−1)^k u^k.
#[inline]
pub fn unit_pow(u: C64, k: i32) -> C64 {
    let base = if k < 0 { u.conj() } else { u };
    let mut acc = C64::new(1.0, 0.0);
    for _ in 0..k.unsigned_abs() {
        acc *= base;
    }
    acc
}

pub fn phase_harmonic(z: C64, k: i32) -> C64 {
    match k {
        1 => return z,
        0 => return C64::new(z.norm(), 0.0),
        _ => {}
    }
    let (r, u) = unit_phase(z);
    if r == 0.0 {
        return C64::new(0.0, 0.0);
    }
    unit_pow(u, k) * r
}

/// Wirtinger derivatives (∂/∂z, ∂/∂z̄) of [z]^k. At z = 0 the phase is taken as 0.
pub fn harmonic_derivative(z: C64, k: i32) -> (C64, C64) {
    let (_, u) = unit_phase(z);
    let kf = k as f64;
    (unit_pow(u, k - 1) * ((kf + 1.0) / 2.0), unit_pow(u, k + 1) * ((1.0 - kf) / 2.0))
}

/// Fourier coefficient of the rectifier window max(cos α, 0).
pub fn rectifier_weight(k: i32) -> f64 {
    if k.abs() == 1 {
        0.25
    } else if k % 2 != 0 {
        0.0
    } else {
        let sign = if (k / 2) % 2 == 0 { -1.0 } else { 1.0 };
        let kf = k as f64;
        sign / (PI * (kf * kf - 1.0))
    }
}

/// Weights ĥ(k) on the integer range [k_min, k_max].
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicWeights {
    k_min: i32,
    weights: Vec<C64>,
}

impl HarmonicWeights {
    pub fn new(k_min: i32, weights: Vec<C64>) -> Self {
        Self { k_min, weights }
    }

    /// ĥ = 1 on [k_min, k_max].
    pub fn indicator(k_min: i32, k_max: i32) -> Self {
        let n = (k_max - k_min + 1).max(0) as usize;
        Self { k_min, weights: vec![C64::new(1.0, 0.0); n] }
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    pub fn k_max(&self) -> i32 {
        self.k_min + self.weights.len() as i32 - 1
    }

    pub fn get(&self, k: i32) -> C64 {
        let i = k - self.k_min;
        if i < 0 || i as usize >= self.weights.len() {
            C64::new(0.0, 0.0)
        } else {
            self.weights[i as usize]
        }
    }

    pub fn range(&self) -> std::ops::RangeInclusive<i32> {
        self.k_min..=self.k_max()
    }

    /// Σ |ĥ(k)|².
    pub fn energy(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_sqr()).sum()
    }
}

/// Rectifier weights truncated to |k| ≤ k_max.
pub fn rectifier_weights(k_max: i32) -> HarmonicWeights {
    HarmonicWeights { k_min: -k_max, weights: (-k_max..=k_max).map(|k| C64::new(rectifier_weight(k), 0.0)).collect() }
}

/// ‖Ĥ(z) − Ĥ(z')‖² = Σ_k |ĥ(k)|² |[z]^k − [z']^k|².
pub fn harmonic_distance_sq(z: C64, z2: C64, w: &HarmonicWeights) -> f64 {
    let (r, u) = unit_phase(z);
    let (r2, u2) = unit_phase(z2);
    let (ui, u2i) = (u.conj(), u2.conj());
    let mut sum = 0.0;
    // walk positive and negative exponents outward from 0
    let (mut p, mut p2) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0));
    let (mut n, mut n2) = (p, p2);
    for k in 0..=w.k_max().max(-w.k_min()) {
        if k > 0 {
            p *= u;
            p2 *= u2;
            n *= ui;
            n2 *= u2i;
        }
        if (w.k_min()..=w.k_max()).contains(&k) {
            sum += w.get(k).norm_sqr() * (p * r - p2 * r2).norm_sqr();
        }
        if k > 0 && (w.k_min()..=w.k_max()).contains(&-k) {
            sum += w.get(-k).norm_sqr() * (n * r - n2 * r2).norm_sqr();
        }
    }
    sum
}

/// ĥ(k)[c]^k per channel and exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicCoeffs {
    pub k_min: i32,
    pub k_max: i32,
    /// values[channel][k − k_min][position]
    pub values: Vec<Vec<Vec<C64>>>,
}

impl HarmonicCoeffs {
    pub fn slice(&self, channel: usize, k: i32) -> &[C64] {
        &self.values[channel][(k - self.k_min) as usize]
    }
}

pub fn harmonic_map(c: &WaveletCoeffs, w: &HarmonicWeights) -> HarmonicCoeffs {
    let values = c
        .data
        .iter()
        .map(|ch| w.range().map(|k| ch.iter().map(|&z| w.get(k) * phase_harmonic(z, k)).collect()).collect())
        .collect();
    HarmonicCoeffs { k_min: w.k_min(), k_max: w.k_max(), values }
}

/// ρ(Re(e^{iα} z)).
#[inline]
pub fn phase_window(z: C64, alpha: f64) -> f64 {
    (C64::from_polar(1.0, alpha) * z).re.max(0.0)
}

/// Rectified projections ρ(Re(e^{iα} c)), indexed [channel][alpha][position].
pub fn phase_window_map(c: &WaveletCoeffs, alphas: &[f64]) -> Vec<Vec<Vec<f64>>> {
    c.data.iter().map(|ch| alphas.iter().map(|&a| ch.iter().map(|&z| phase_window(z, a)).collect()).collect()).collect()
}

/// Equally spaced phases 2πa/n.
pub fn uniform_phases(n: usize) -> Vec<f64> {
    (0..n).map(|a| 2.0 * PI * a as f64 / n as f64).collect()
}

/// Σ_m e^{imθ}/(m + a) for non-integer a (symmetric partial sums at θ ≡ 0).
fn shifted_series(theta: f64, a: f64) -> C64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t == 0.0 {
        C64::new(PI / (PI * a).tan(), 0.0)
    } else {
        C64::from_polar(PI / (PI * a).sin(), (PI - t) * a)
    }
}

/// Angular DFT of the rectified window sampled at q phases:
/// Σ_{k' ≡ k mod q} ĥ(k')[z]^{k'} for the rectifier weights, |k| < q/2, q
/// even, in closed form by partial fractions.
pub fn aliased_rectifier(z: C64, k: i32, q: usize) -> C64 {
    let (r, _) = unit_phase(z);
    if r == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let phi = z.arg();
    let qf = q as f64;
    let mut out = C64::new(0.0, 0.0);
    if k % 2 == 0 {
        let theta = qf * phi + PI * qf / 2.0;
        let sign = if (k / 2) % 2 == 0 { -1.0 } else { 1.0 };
        let s = shifted_series(theta, (k - 1) as f64 / qf) - shifted_series(theta, (k + 1) as f64 / qf);
        out += C64::from_polar(1.0, k as f64 * phi) * s * (sign / (2.0 * PI * qf));
    }
    if k.abs() == 1 {
        out += C64::from_polar(0.25, k as f64 * phi);
    }
    out * r
}
