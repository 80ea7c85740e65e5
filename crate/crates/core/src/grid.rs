//! Periodic square grids, 2D DFT, white noise and pointwise symmetry actions.

use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Result};

pub type C64 = Complex<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Space,
    Frequency,
}

/// Seed for the noise generator. Equal seeds give bit-identical noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

/// A side x side periodic complex array in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    side: usize,
    data: Vec<C64>,
    domain: Domain,
}

pub fn check_side(side: usize) -> Result<()> {
    if side < 2 || !side.is_power_of_two() {
        return config(format!("grid side {side} must be a power of two >= 2"));
    }
    Ok(())
}

impl ComplexField {
    pub fn zeros(side: usize, domain: Domain) -> Result<Self> {
        check_side(side)?;
        Ok(Self { side, data: vec![C64::new(0.0, 0.0); side * side], domain })
    }

    pub fn from_vec(side: usize, data: Vec<C64>, domain: Domain) -> Result<Self> {
        check_side(side)?;
        if data.len() != side * side {
            return shape(format!("expected {} values for side {side}, got {}", side * side, data.len()));
        }
        Ok(Self { side, data, domain })
    }

    pub fn from_real(side: usize, values: &[f64]) -> Result<Self> {
        Self::from_vec(side, values.iter().map(|&v| C64::new(v, 0.0)).collect(), Domain::Space)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of grid points d = side².
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// Value at (row, col) with periodic wraparound.
    pub fn at(&self, row: i64, col: i64) -> C64 {
        let n = self.side as i64;
        self.data[(row.rem_euclid(n) * n + col.rem_euclid(n)) as usize]
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.re).collect()
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.im.abs()))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { side: self.side, data: self.data.iter().map(|z| z * c).collect(), domain: self.domain }
    }
}

/// Cached forward/inverse plans for one grid side. The forward transform is
/// unnormalized, the inverse carries the 1/d factor.
#[derive(Clone)]
pub struct Fft2 {
    side: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("side", &self.side).finish()
    }
}

impl Fft2 {
    pub fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { side, fwd: planner.plan_fft_forward(side), inv: planner.plan_fft_inverse(side) }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, &self.fwd);
    }

    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, &self.inv);
        let s = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= s;
        }
    }

    fn run(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.side;
        assert_eq!(data.len(), n * n);
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);
        let mut t = vec![C64::new(0.0, 0.0); n * n];
        transpose(data, &mut t, n);
        fft.process_with_scratch(&mut t, &mut scratch);
        transpose(&t, data, n);
    }
}

fn transpose(src: &[C64], dst: &mut [C64], n: usize) {
    const B: usize = 16;
    for rb in (0..n).step_by(B) {
        for cb in (0..n).step_by(B) {
            for r in rb..(rb + B).min(n) {
                for c in cb..(cb + B).min(n) {
                    dst[c * n + r] = src[r * n + c];
                }
            }
        }
    }
}

/// x̂(ω) = Σ_u x(u) e^{−iω·u} on ω = 2πm/side.
pub fn dft2(field: &ComplexField) -> Result<ComplexField> {
    if field.domain != Domain::Space {
        return config("dft2 expects a space-domain field");
    }
    let mut data = field.data.clone();
    Fft2::new(field.side).forward(&mut data);
    Ok(ComplexField { side: field.side, data, domain: Domain::Frequency })
}

pub fn idft2(field: &ComplexField) -> Result<ComplexField> {
    if field.domain != Domain::Frequency {
        return config("idft2 expects a frequency-domain field");
    }
    let mut data = field.data.clone();
    Fft2::new(field.side).inverse(&mut data);
    Ok(ComplexField { side: field.side, data, domain: Domain::Space })
}

/// Standard normal pairs from ChaCha8 uniforms via Box–Muller.
pub fn normal_samples(n: usize, seed: Seed) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        // (0, 1] keeps the logarithm finite
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        out.push(r * t.cos());
        out.push(r * t.sin());
    }
    out.truncate(n);
    out
}

/// Real i.i.d. N(0, σ²) field.
pub fn white_noise(side: usize, sigma: f64, seed: Seed) -> Result<ComplexField> {
    check_side(side)?;
    if !(sigma >= 0.0) {
        return config(format!("noise sigma must be >= 0, got {sigma}"));
    }
    let v = normal_samples(side * side, seed);
    ComplexField::from_vec(side, v.into_iter().map(|g| C64::new(sigma * g, 0.0)).collect(), Domain::Space)
}

/// out(u) = in(u − τ), periodic.
pub fn translate(field: &ComplexField, tau: (i64, i64)) -> ComplexField {
    let n = field.side;
    let ni = n as i64;
    let (t0, t1) = (tau.0.rem_euclid(ni) as usize, tau.1.rem_euclid(ni) as usize);
    let mut data = vec![C64::new(0.0, 0.0); n * n];
    for r in 0..n {
        let rr = (r + t0) % n;
        for c in 0..n {
            data[rr * n + (c + t1) % n] = field.data[r * n + c];
        }
    }
    ComplexField { side: n, data, domain: field.domain }
}

pub fn translate_real(x: &[f64], side: usize, tau: (i64, i64)) -> Vec<f64> {
    let ni = side as i64;
    let (t0, t1) = (tau.0.rem_euclid(ni) as usize, tau.1.rem_euclid(ni) as usize);
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        let rr = (r + t0) % side;
        for c in 0..side {
            out[rr * side + (c + t1) % side] = x[r * side + c];
        }
    }
    out
}

pub fn negate(field: &ComplexField) -> ComplexField {
    ComplexField { side: field.side, data: field.data.iter().map(|z| -z).collect(), domain: field.domain }
}

/// Signed frequency index in [−side/2, side/2).
pub fn signed_index(m: usize, side: usize) -> i64 {
    let m = m as i64;
    let n = side as i64;
    if m >= n / 2 {
        m - n
    } else {
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialSpectrum {
    /// Bin centre |ω| in radians per sample.
    pub radius: Vec<f64>,
    pub power: Vec<f64>,
    pub log_power: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Mean of |x̂(ω)|²/d over annuli of width one frequency step, log base 10.
pub fn radial_power_spectrum(spectra: &[ComplexField]) -> Result<RadialSpectrum> {
    let first = match spectra.first() {
        Some(f) => f,
        None => return config("radial spectrum needs at least one spectrum"),
    };
    let n = first.side;
    let d = (n * n) as f64;
    let nbins = ((n as f64) / std::f64::consts::SQRT_2).round() as usize + 1;
    let mut power = vec![0.0; nbins];
    let mut counts = vec![0usize; nbins];
    let mut bin_of = vec![0usize; n * n];
    for r in 0..n {
        for c in 0..n {
            let (a, b) = (signed_index(r, n) as f64, signed_index(c, n) as f64);
            bin_of[r * n + c] = ((a * a + b * b).sqrt().round() as usize).min(nbins - 1);
        }
    }
    for s in spectra {
        if s.side != n {
            return shape("spectra must share one grid side");
        }
        if s.domain != Domain::Frequency {
            return config("radial spectrum expects frequency-domain fields");
        }
        for (i, z) in s.data.iter().enumerate() {
            power[bin_of[i]] += z.norm_sqr() / d;
            counts[bin_of[i]] += 1;
        }
    }
    for (p, &c) in power.iter_mut().zip(&counts) {
        if c > 0 {
            *p /= c as f64;
        }
    }
    let step = std::f64::consts::TAU / n as f64;
    Ok(RadialSpectrum {
        radius: (0..nbins).map(|b| b as f64 * step).collect(),
        log_power: power.iter().map(|p| p.log10()).collect(),
        power,
        counts,
    })
}
