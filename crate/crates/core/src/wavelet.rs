//! Bump steerable wavelet bank, the subsampled transform, its adjoint and
//! frame bounds.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config, shape, Error, Result};
use crate::grid::{check_side, normal_samples, signed_index, ComplexField, Domain, Fft2, Seed, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    /// Band-pass channel at scale 2^j and angle index l.
    Wavelet { j: u32, l: u32 },
    Lowpass,
}

/// Index layout shared by banks and edge sets: wavelets ordered by (j, l),
/// lowpass last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub scales: usize,
    pub angles: usize,
}

impl ChannelLayout {
    pub fn count(&self) -> usize {
        self.scales * self.angles + 1
    }

    pub fn wavelet(&self, j: usize, l: usize) -> usize {
        (j - 1) * self.angles + l
    }

    pub fn lowpass(&self) -> usize {
        self.scales * self.angles
    }

    pub fn channel(&self, idx: usize) -> Channel {
        if idx == self.lowpass() {
            Channel::Lowpass
        } else {
            Channel::Wavelet { j: (idx / self.angles + 1) as u32, l: (idx % self.angles) as u32 }
        }
    }

    /// Subsampling stride of a channel.
    pub fn stride(&self, idx: usize) -> usize {
        match self.channel(idx) {
            Channel::Wavelet { j, .. } => 1 << (j - 1),
            Channel::Lowpass => 1 << self.scales.saturating_sub(1),
        }
    }
}

pub const XI0: f64 = 1.7 * PI;

pub fn lowpass_width() -> f64 {
    0.702 * std::f64::consts::SQRT_2 * 2f64.powf(-0.55) * XI0
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Amplitude constant of the bump wavelet for Q angles.
pub fn bump_amplitude(angles: usize) -> f64 {
    let h = angles / 2;
    2f64.powi(h as i32 - 1) * factorial(h - 1) / ((h as f64) * factorial(angles - 2)).sqrt() / 1.29
}

#[derive(Clone, Debug)]
pub struct WaveletBank {
    side: usize,
    layout: ChannelLayout,
    channels: Vec<Channel>,
    strides: Vec<usize>,
    filters: Vec<Vec<f64>>,
    centers: Vec<(f64, f64)>,
    amplitude: f64,
    fft: Fft2,
    coarse: Vec<Fft2>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoeffs {
    pub side: usize,
    pub strides: Vec<usize>,
    /// One (side/stride)² row-major array per channel.
    pub data: Vec<Vec<C64>>,
}

impl WaveletCoeffs {
    pub fn zeros_like(&self) -> Self {
        Self { side: self.side, strides: self.strides.clone(), data: self.data.iter().map(|c| vec![C64::new(0.0, 0.0); c.len()]).collect() }
    }

    pub fn dot(&self, other: &Self) -> C64 {
        self.data.iter().zip(&other.data).flat_map(|(a, b)| a.iter().zip(b)).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|c| c.len()).sum()
    }
}

impl WaveletBank {
    pub fn bump(side: usize, scales: usize, angles: usize) -> Result<Self> {
        check_side(side)?;
        if angles < 2 || angles % 2 != 0 {
            return config(format!("number of angles must be even and >= 2, got {angles}"));
        }
        if scales < 1 || (1usize << scales) > side {
            return config(format!("2^J must not exceed the grid side (J={scales}, side={side})"));
        }
        let layout = ChannelLayout { scales, angles };
        let amplitude = bump_amplitude(angles);
        let n = side;
        let mut filters = Vec::with_capacity(layout.count());
        let mut centers = Vec::with_capacity(layout.count());
        for idx in 0..layout.count() {
            let ch = layout.channel(idx);
            let mut f = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    let w = (2.0 * PI * signed_index(r, n) as f64 / n as f64, 2.0 * PI * signed_index(c, n) as f64 / n as f64);
                    let mut v = 0.0;
                    for a0 in -1..=1 {
                        for a1 in -1..=1 {
                            let wa = (w.0 + 2.0 * PI * a0 as f64, w.1 + 2.0 * PI * a1 as f64);
                            v += analytic_filter(ch, wa, scales, angles, amplitude);
                        }
                    }
                    f[r * n + c] = v;
                }
            }
            if ch != Channel::Lowpass {
                f[0] = 0.0;
            }
            filters.push(f);
            centers.push(match ch {
                Channel::Wavelet { j, l } => {
                    let t = -2.0 * PI * l as f64 / angles as f64;
                    let r = XI0 / 2f64.powi(j as i32);
                    (r * t.cos(), r * t.sin())
                }
                Channel::Lowpass => (0.0, 0.0),
            });
        }
        let channels: Vec<Channel> = (0..layout.count()).map(|i| layout.channel(i)).collect();
        let strides: Vec<usize> = (0..layout.count()).map(|i| layout.stride(i)).collect();
        let coarse = coarse_plans(side, &strides);
        Ok(Self { side, layout, channels, strides, filters, centers, amplitude, fft: Fft2::new(side), coarse })
    }

    /// A bank from explicit Fourier filters. Strides must be powers of two.
    pub fn custom(side: usize, channels: Vec<Channel>, strides: Vec<usize>, filters: Vec<Vec<f64>>) -> Result<Self> {
        check_side(side)?;
        if channels.len() != strides.len() || channels.len() != filters.len() || channels.is_empty() {
            return shape("custom bank needs one stride and one filter per channel");
        }
        if filters.iter().any(|f| f.len() != side * side) {
            return shape("custom filter length must be side²");
        }
        if strides.iter().any(|&s| !s.is_power_of_two() || s > side) {
            return config("custom strides must be powers of two not exceeding the side");
        }
        let centers = vec![(0.0, 0.0); channels.len()];
        let coarse = coarse_plans(side, &strides);
        Ok(Self {
            side,
            layout: ChannelLayout { scales: 0, angles: 0 },
            channels,
            strides,
            filters,
            centers,
            amplitude: 0.0,
            fft: Fft2::new(side),
            coarse,
        })
    }

    /// A bank with the standard channel layout and explicit Fourier filters,
    /// ordered like the layout's channel indices.
    pub fn from_layout(side: usize, layout: ChannelLayout, filters: Vec<Vec<f64>>) -> Result<Self> {
        if filters.len() != layout.count() {
            return shape(format!("layout has {} channels, got {} filters", layout.count(), filters.len()));
        }
        let channels: Vec<Channel> = (0..layout.count()).map(|i| layout.channel(i)).collect();
        let strides: Vec<usize> = (0..layout.count()).map(|i| layout.stride(i)).collect();
        let mut b = Self::custom(side, channels, strides, filters)?;
        b.layout = layout;
        Ok(b)
    }

    /// Same bank with every filter multiplied by s.
    pub fn scaled(&self, s: f64) -> Self {
        let mut b = self.clone();
        for f in &mut b.filters {
            for v in f.iter_mut() {
                *v *= s;
            }
        }
        b
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn scales(&self) -> usize {
        self.layout.scales
    }

    pub fn angles(&self) -> usize {
        self.layout.angles
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, idx: usize) -> Channel {
        self.channels[idx]
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn stride(&self, idx: usize) -> usize {
        self.strides[idx]
    }

    pub fn filter(&self, idx: usize) -> &[f64] {
        &self.filters[idx]
    }

    /// Central frequency of a channel in radians per sample.
    pub fn center(&self, idx: usize) -> (f64, f64) {
        self.centers[idx]
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Value of the (non-periodized) filter of a channel at frequency ω.
    pub fn analytic(&self, idx: usize, w: (f64, f64)) -> f64 {
        analytic_filter(self.channels[idx], w, self.layout.scales, self.layout.angles, self.amplitude)
    }

    fn check_field(&self, x: &ComplexField) -> Result<()> {
        if x.side() != self.side {
            return shape(format!("field side {} does not match bank side {}", x.side(), self.side));
        }
        Ok(())
    }

    pub fn spectrum(&self, x: &ComplexField) -> Result<Vec<C64>> {
        self.check_field(x)?;
        let mut h = x.data().to_vec();
        if x.domain() == Domain::Space {
            self.fft.forward(&mut h);
        }
        Ok(h)
    }

    /// Subsampled transform: channel c sampled on the stride-c lattice.
    pub fn transform(&self, x: &ComplexField) -> Result<WaveletCoeffs> {
        let h = self.spectrum(x)?;
        Ok(self.transform_spectrum(&h))
    }

    pub fn transform_spectrum(&self, xhat: &[C64]) -> WaveletCoeffs {
        let n = self.side;
        let mut data = Vec::with_capacity(self.channels.len());
        for (idx, f) in self.filters.iter().enumerate() {
            let s = self.strides[idx];
            let m = n / s;
            // periodize the product spectrum onto the coarse grid
            let mut folded = vec![C64::new(0.0, 0.0); m * m];
            for r in 0..n {
                let rr = (r % m) * m;
                for c in 0..n {
                    let v = f[r * n + c];
                    if v != 0.0 {
                        folded[rr + c % m] += xhat[r * n + c] * v;
                    }
                }
            }
            let scale = 1.0 / (s * s) as f64;
            for z in folded.iter_mut() {
                *z *= scale;
            }
            if let Some(p) = self.coarse_plan(m) {
                p.inverse(&mut folded);
            }
            data.push(folded);
        }
        WaveletCoeffs { side: n, strides: self.strides.clone(), data }
    }

    /// Adjoint of the subsampled transform.
    pub fn adjoint(&self, c: &WaveletCoeffs) -> Result<ComplexField> {
        if c.side != self.side || c.strides != self.strides || c.data.len() != self.channels.len() {
            return shape("coefficients do not belong to this bank");
        }
        let n = self.side;
        let mut acc = vec![C64::new(0.0, 0.0); n * n];
        for (idx, f) in self.filters.iter().enumerate() {
            let m = n / self.strides[idx];
            if c.data[idx].len() != m * m {
                return shape(format!("channel {idx} has {} coefficients, expected {}", c.data[idx].len(), m * m));
            }
            let mut ch = c.data[idx].clone();
            if let Some(p) = self.coarse_plan(m) {
                p.forward(&mut ch);
            }
            for r in 0..n {
                let rr = (r % m) * m;
                for col in 0..n {
                    let v = f[r * n + col];
                    if v != 0.0 {
                        acc[r * n + col] += ch[rr + col % m] * v;
                    }
                }
            }
        }
        self.fft.inverse(&mut acc);
        ComplexField::from_vec(n, acc, Domain::Space)
    }

    fn coarse_plan(&self, m: usize) -> Option<&Fft2> {
        if m == 1 {
            None
        } else {
            self.coarse.iter().find(|p| p.side() == m)
        }
    }

    /// x ⋆ ψ_c at every grid point, from the spectrum of x.
    pub fn full_resolution(&self, xhat: &[C64], idx: usize) -> Vec<C64> {
        let f = &self.filters[idx];
        let mut out: Vec<C64> = xhat.iter().zip(f).map(|(z, &v)| z * v).collect();
        self.fft.inverse(&mut out);
        out
    }

    /// W*W x.
    pub fn frame_operator(&self, x: &ComplexField) -> Result<ComplexField> {
        self.adjoint(&self.transform(x)?)
    }

    /// Exact extreme eigenvalues of W*W. In the Fourier basis W*W only couples
    /// frequencies that agree modulo side/stride, so it splits into small
    /// symmetric blocks that are diagonalized densely.
    pub fn frame_bounds(&self) -> Result<(f64, f64)> {
        let n = self.side;
        let smax = *self.strides.iter().max().unwrap();
        let period = n / smax;
        let size = smax * smax;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut block = DMatrix::<f64>::zeros(size, size);
        for b0 in 0..period {
            for b1 in 0..period {
                block.fill(0.0);
                let member = |a0: usize, a1: usize| (b0 + a0 * period) * n + (b1 + a1 * period);
                for (idx, f) in self.filters.iter().enumerate() {
                    let s = self.strides[idx];
                    let w = 1.0 / (s * s) as f64;
                    let group = smax / s;
                    for a0 in 0..smax {
                        for a1 in 0..smax {
                            let vp = f[member(a0, a1)];
                            if vp == 0.0 {
                                continue;
                            }
                            let p = a0 * smax + a1;
                            for q0 in (a0 % group..smax).step_by(group) {
                                for q1 in (a1 % group..smax).step_by(group) {
                                    let vq = f[member(q0, q1)];
                                    block[(p, q0 * smax + q1)] += w * vp * vq;
                                }
                            }
                        }
                    }
                }
                let ev = block.clone().symmetric_eigenvalues();
                for &e in ev.iter() {
                    lo = lo.min(e);
                    hi = hi.max(e);
                }
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Numerical("frame bound eigenvalues are not finite".into()));
        }
        Ok((lo, hi))
    }

    /// Frame bounds by power iteration on W*W and on B·I − W*W.
    pub fn frame_bounds_power(&self, tol: f64, max_iter: usize) -> Result<(f64, f64)> {
        let n = self.side;
        let apply = |v: &[f64]| -> Vec<f64> {
            let f = ComplexField::from_real(n, v).unwrap();
            self.frame_operator(&f).unwrap().real_part()
        };
        let b = power_iteration(n * n, &apply, tol, max_iter, Seed(0x5eed_0001))?;
        let shifted = |v: &[f64]| -> Vec<f64> {
            let w = apply(v);
            v.iter().zip(w).map(|(a, c)| b * a - c).collect()
        };
        let mu = power_iteration(n * n, &shifted, tol, max_iter, Seed(0x5eed_0002))?;
        Ok((b - mu, b))
    }
}

fn power_iteration(dim: usize, op: &dyn Fn(&[f64]) -> Vec<f64>, tol: f64, max_iter: usize, seed: Seed) -> Result<f64> {
    let mut v = normal_samples(dim, seed);
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(&v);
    v.iter_mut().for_each(|a| *a /= nv);
    let mut last = f64::NAN;
    for it in 0..max_iter {
        let w = op(&v);
        let rq: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|a| a / nw).collect();
        if it > 0 && (rq - last).abs() <= tol * rq.abs() {
            return Ok(rq);
        }
        last = rq;
    }
    Err(Error::NonConvergence { iterations: max_iter, detail: format!("power iteration stalled at {last}") })
}

fn analytic_filter(ch: Channel, w: (f64, f64), scales: usize, angles: usize, amplitude: f64) -> f64 {
    match ch {
        Channel::Wavelet { j, l } => {
            let s = 2f64.powi(j as i32);
            let t = 2.0 * PI * l as f64 / angles as f64;
            let (c, sn) = (t.cos(), t.sin());
            let v = (s * (c * w.0 - sn * w.1), s * (sn * w.0 + c * w.1));
            s * mother(v, angles, amplitude)
        }
        Channel::Lowpass => {
            let s = 2f64.powi(scales as i32);
            let sig = lowpass_width();
            s * (-(s * s) * (w.0 * w.0 + w.1 * w.1) / (2.0 * sig * sig)).exp()
        }
    }
}

fn mother(w: (f64, f64), angles: usize, amplitude: f64) -> f64 {
    let r = (w.0 * w.0 + w.1 * w.1).sqrt();
    if r <= 0.0 || r >= 2.0 * XI0 {
        return 0.0;
    }
    let theta = w.1.atan2(w.0);
    if theta.abs() >= PI / 2.0 {
        return 0.0;
    }
    let dr = r - XI0;
    let radial = (-dr * dr / (XI0 * XI0 - dr * dr)).exp();
    amplitude * radial * theta.cos().powi(angles as i32 / 2 - 1)
}

fn coarse_plans(side: usize, strides: &[usize]) -> Vec<Fft2> {
    let mut sizes: Vec<usize> = strides.iter().map(|s| side / s).filter(|&m| m > 1).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes.into_iter().map(Fft2::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::white_noise;

    fn random_complex(side: usize, seed: u64) -> ComplexField {
        let a = normal_samples(side * side, Seed(seed));
        let b = normal_samples(side * side, Seed(seed ^ 0xabcdef));
        ComplexField::from_vec(side, a.iter().zip(&b).map(|(&x, &y)| C64::new(x, y)).collect(), Domain::Space).unwrap()
    }

    /// Spatial filter by direct inverse DFT sum.
    fn spatial_filter(bank: &WaveletBank, idx: usize) -> Vec<C64> {
        let n = bank.side();
        let f = bank.filter(idx);
        let mut out = vec![C64::new(0.0, 0.0); n * n];
        for u0 in 0..n {
            for u1 in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for m0 in 0..n {
                    for m1 in 0..n {
                        let ph = 2.0 * PI * ((m0 * u0 + m1 * u1) % n) as f64 / n as f64;
                        acc += C64::from_polar(f[m0 * n + m1], ph);
                    }
                }
                out[u0 * n + u1] = acc / (n * n) as f64;
            }
        }
        out
    }

    #[test]
    fn constants() {
        assert!((bump_amplitude(16) - 0.5988).abs() < 1e-3, "{}", bump_amplitude(16));
        assert!((lowpass_width() - 0.702 * 2f64.sqrt() * 2f64.powf(-0.55) * 1.7 * PI).abs() < 1e-15);
        assert!(WaveletBank::bump(32, 2, 5).is_err());
        assert!(WaveletBank::bump(32, 6, 4).is_err());
        assert!(WaveletBank::bump(24, 2, 4).is_err());
    }

    #[test]
    fn peak_and_support() {
        let bank = WaveletBank::bump(32, 3, 8).unwrap();
        let c = bank.amplitude();
        for idx in 0..bank.layout().lowpass() {
            let Channel::Wavelet { j, .. } = bank.channel(idx) else { unreachable!() };
            let v = bank.analytic(idx, bank.center(idx));
            assert!((v - 2f64.powi(j as i32) * c).abs() < 1e-12);
        }
        // beyond the radial support the analytic filter vanishes
        let idx = bank.layout().wavelet(2, 3);
        for k in 0..100 {
            let t = k as f64 * 0.0628;
            let r = 2.0 * XI0 / 4.0 * (1.0 + 1e-9) + 0.01 * k as f64;
            assert_eq!(bank.analytic(idx, (r * t.cos(), r * t.sin())), 0.0);
        }
        // for j >= 2 the periodized grid filter also vanishes there
        let n = 32;
        for idx in bank.layout().wavelet(2, 0)..bank.layout().lowpass() {
            let Channel::Wavelet { j, .. } = bank.channel(idx) else { unreachable!() };
            for r in 0..n {
                for col in 0..n {
                    let w = (2.0 * PI * signed_index(r, n) as f64 / n as f64, 2.0 * PI * signed_index(col, n) as f64 / n as f64);
                    if 2f64.powi(j as i32) * (w.0.hypot(w.1)) > 2.0 * XI0 {
                        assert_eq!(bank.filter(idx)[r * n + col], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_mean_and_lowpass_sum() {
        let bank = WaveletBank::bump(32, 3, 4).unwrap();
        for idx in 0..bank.layout().lowpass() {
            assert_eq!(bank.filter(idx)[0], 0.0);
        }
        let lp = bank.filter(bank.layout().lowpass());
        assert!((lp[0] - 8.0).abs() < 1e-12);
        let x = ComplexField::from_real(32, &[1.5; 1024]).unwrap();
        let w = bank.transform(&x).unwrap();
        for idx in 0..bank.layout().lowpass() {
            assert!(w.data[idx].iter().all(|z| z.norm() < 1e-12));
        }
        assert!(w.data[bank.layout().lowpass()].iter().all(|z| (z - C64::new(12.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn matches_direct_convolution() {
        let n = 32;
        let bank = WaveletBank::bump(n, 3, 4).unwrap();
        let x = random_complex(n, 11);
        let w = bank.transform(&x).unwrap();
        for idx in [0, 5, 9, bank.layout().lowpass()] {
            let psi = spatial_filter(&bank, idx);
            let s = bank.stride(idx);
            let m = n / s;
            for p0 in 0..m {
                for p1 in 0..m {
                    let (u0, u1) = (p0 * s, p1 * s);
                    let mut acc = C64::new(0.0, 0.0);
                    for v0 in 0..n {
                        for v1 in 0..n {
                            acc += x.data()[v0 * n + v1] * psi[((u0 + n - v0) % n) * n + (u1 + n - v1) % n];
                        }
                    }
                    assert!((acc - w.data[idx][p0 * m + p1]).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn cosine_lands_in_nearest_channel() {
        let n = 64;
        let bank = WaveletBank::bump(n, 4, 8).unwrap();
        let target = bank.layout().wavelet(3, 2);
        let (w0, w1) = bank.center(target);
        let (m0, m1) = ((w0 * n as f64 / (2.0 * PI)).round(), (w1 * n as f64 / (2.0 * PI)).round());
        let v: Vec<f64> = (0..n * n)
            .map(|i| (2.0 * PI * (m0 * (i / n) as f64 + m1 * (i % n) as f64) / n as f64).cos())
            .collect();
        let w = bank.transform(&ComplexField::from_real(n, &v).unwrap()).unwrap();
        let energy: Vec<f64> = (0..bank.num_channels())
            .map(|i| w.data[i].iter().map(|z| z.norm_sqr()).sum::<f64>() * (bank.stride(i) * bank.stride(i)) as f64)
            .collect();
        // a real cosine also excites the opposite orientation with equal energy
        let partner = bank.layout().wavelet(3, 6);
        assert!((energy[target] - energy[partner]).abs() < 1e-9 * energy[target]);
        let total: f64 = energy.iter().sum();
        assert!(energy[target] + energy[partner] > 0.5 * total);
        for (i, e) in energy.iter().enumerate() {
            if i != target && i != partner {
                assert!(*e < energy[target], "channel {i}");
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let n = 16;
        let bank = WaveletBank::bump(n, 2, 4).unwrap();
        let x = random_complex(n, 1);
        let wx = bank.transform(&x).unwrap();
        let mut c = wx.zeros_like();
        assert!(bank.adjoint(&c).unwrap().norm_sqr() == 0.0);
        let mut k = 100;
        for ch in &mut c.data {
            let a = normal_samples(ch.len(), Seed(k));
            let b = normal_samples(ch.len(), Seed(k + 1));
            k += 2;
            for (i, z) in ch.iter_mut().enumerate() {
                *z = C64::new(a[i], b[i]);
            }
        }
        let lhs = wx.dot(&c);
        let ws = bank.adjoint(&c).unwrap();
        let rhs: C64 = x.data().iter().zip(ws.data()).map(|(a, b)| a * b.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0), "{lhs} {rhs}");
    }

    #[test]
    fn block_bounds_match_dense_operator() {
        let n = 16;
        let bank = WaveletBank::bump(n, 2, 4).unwrap();
        let d = n * n;
        let mut m = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            let col = bank.frame_operator(&ComplexField::from_real(n, &e).unwrap()).unwrap();
            for (r, z) in col.data().iter().enumerate() {
                m[(r, i)] = z.re;
            }
        }
        let ev = m.symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        let (a, b) = bank.frame_bounds().unwrap();
        assert!((a - lo).abs() < 1e-6 * hi && (b - hi).abs() < 1e-6 * hi, "{a} {b} vs {lo} {hi}");
        let (pa, pb) = bank.frame_bounds_power(1e-10, 200_000).unwrap();
        assert!((pb - hi).abs() < 1e-6 * hi, "{pb} vs {hi}");
        assert!((pa - lo).abs() < 1e-5 * hi, "{pa} vs {lo}");
        let (sa, sb) = bank.scaled(3.0).frame_bounds().unwrap();
        assert!((sa - 9.0 * a).abs() < 1e-9 * sa && (sb - 9.0 * b).abs() < 1e-9 * sb);
    }

    #[test]
    fn frame_inequality_on_random_fields() {
        let n = 32;
        let bank = WaveletBank::bump(n, 3, 8).unwrap();
        let (a, b) = bank.frame_bounds().unwrap();
        for s in 0..1000 {
            let x = white_noise(n, 1.0, Seed(s)).unwrap();
            let e = bank.transform(&x).unwrap().norm_sqr();
            let xn = x.norm_sqr();
            assert!(e >= a * xn * (1.0 - 1e-12) && e <= b * xn * (1.0 + 1e-12));
        }
        let x = white_noise(n, 1.0, Seed(7)).unwrap();
        let y = bank.frame_operator(&x).unwrap();
        let q: f64 = x.data().iter().zip(y.data()).map(|(p, r)| (p * r.conj()).re).sum();
        assert!(q >= a * x.norm_sqr() && q <= b * x.norm_sqr());
    }

    fn rotate_quarter(x: &ComplexField) -> ComplexField {
        // out(u0, u1) = x(u1, −u0)
        let n = x.side() as i64;
        let mut v = vec![C64::new(0.0, 0.0); x.len()];
        for u0 in 0..n {
            for u1 in 0..n {
                v[(u0 * n + u1) as usize] = x.at(u1, -u0);
            }
        }
        ComplexField::from_vec(x.side(), v, Domain::Space).unwrap()
    }

    #[test]
    fn quarter_turn_steerability() {
        let n = 32;
        let bank = WaveletBank::bump(n, 3, 8).unwrap();
        let x = white_noise(n, 1.0, Seed(3)).unwrap();
        let xr = rotate_quarter(&x);
        let (h, hr) = (bank.spectrum(&x).unwrap(), bank.spectrum(&xr).unwrap());
        let q = 8;
        for j in 1..=3 {
            for l in 0..q {
                let a = bank.full_resolution(&hr, bank.layout().wavelet(j, l));
                let b = bank.full_resolution(&h, bank.layout().wavelet(j, (l + q / 4) % q));
                let b = ComplexField::from_vec(n, b, Domain::Space).unwrap();
                let br = rotate_quarter(&b);
                let err = a.iter().zip(br.data()).map(|(p, r)| (p - r).norm()).fold(0.0, f64::max);
                assert!(err < 1e-12, "j={j} l={l} err={err}");
            }
        }
    }

    #[test]
    fn reflection_identity() {
        let n = 32;
        let bank = WaveletBank::bump(n, 3, 8).unwrap();
        for j in 1..=3 {
            for l in 0..8 {
                let a = bank.filter(bank.layout().wavelet(j, l));
                let b = bank.filter(bank.layout().wavelet(j, (8 - l) % 8));
                for m0 in 0..n {
                    for m1 in 0..n {
                        let diff = a[m0 * n + m1] - b[m0 * n + (n - m1) % n];
                        assert!(diff.abs() < 1e-12);
                    }
                }
            }
        }
    }
}
