//! Ensemble covariance of phase harmonics of Fourier coefficients.

use crate::error::{config, shape, Result};
use crate::grid::{ComplexField, Fft2, C64};
use crate::harmonics::phase_harmonic;

/// Dense covariance over (k, ω) × (k', ω'), index `k_index * d + ω`.
#[derive(Clone, Debug)]
pub struct FourierHarmonicTable {
    pub side: usize,
    pub ks: Vec<i32>,
    pub mean: Vec<C64>,
    pub cov: Vec<C64>,
    /// Per-entry standard error of the covariance, √(Var_a Var_b / N).
    pub std_err: Vec<f64>,
    pub realizations: usize,
}

/// Largest dense table built, in entries.
const MAX_ENTRIES: usize = 1 << 26;

impl FourierHarmonicTable {
    pub fn dim(&self) -> usize {
        self.ks.len() * self.side * self.side
    }

    fn index(&self, k: i32, w: usize) -> usize {
        let ki = self.ks.iter().position(|&x| x == k).expect("exponent outside the table");
        ki * self.side * self.side + w
    }

    /// Cov([X̂(ω)]^k, [X̂(ω')]^{k'}), frequencies as row-major bins.
    pub fn get(&self, k: i32, w: usize, k2: i32, w2: usize) -> C64 {
        self.cov[self.index(k, w) * self.dim() + self.index(k2, w2)]
    }

    pub fn std_error(&self, k: i32, w: usize, k2: i32, w2: usize) -> f64 {
        self.std_err[self.index(k, w) * self.dim() + self.index(k2, w2)]
    }

    /// Whether kω ≡ k'ω' on the frequency grid.
    pub fn in_support(&self, k: i32, w: usize, k2: i32, w2: usize) -> bool {
        harmonic_support(self.side, k, w, k2, w2)
    }

    /// Number of entries in the support pattern.
    pub fn support_size(&self) -> usize {
        let d = self.side * self.side;
        let mut count = 0;
        for &k in &self.ks {
            for w in 0..d {
                for &k2 in &self.ks {
                    count += (0..d).filter(|&w2| harmonic_support(self.side, k, w, k2, w2)).count();
                }
            }
        }
        count
    }
}

/// kω ≡ k'ω' (mod 2π) in both coordinates.
pub fn harmonic_support(side: usize, k: i32, w: usize, k2: i32, w2: usize) -> bool {
    let n = side as i64;
    let (a0, a1) = ((w / side) as i64, (w % side) as i64);
    let (b0, b1) = ((w2 / side) as i64, (w2 % side) as i64);
    (k as i64 * a0 - k2 as i64 * b0).rem_euclid(n) == 0 && (k as i64 * a1 - k2 as i64 * b1).rem_euclid(n) == 0
}

/// Ensemble covariance of [X̂(ω)]^k over the given realizations.
pub fn fourier_harmonic_covariance(realizations: &[ComplexField], ks: &[i32]) -> Result<FourierHarmonicTable> {
    if realizations.len() < 2 {
        return config("at least two realizations are required");
    }
    let side = realizations[0].side();
    if realizations.iter().any(|x| x.side() != side) {
        return shape("realizations have inconsistent sides");
    }
    if ks.is_empty() {
        return config("empty exponent range");
    }
    let d = side * side;
    let dim = ks.len() * d;
    if dim * dim > MAX_ENTRIES {
        return config(format!("a dense table of {dim}² entries is too large"));
    }
    let fft = Fft2::new(side);
    let rows: Vec<Vec<C64>> = realizations
        .iter()
        .map(|x| {
            let mut h = x.data().to_vec();
            fft.forward(&mut h);
            ks.iter().flat_map(|&k| h.iter().map(move |&z| phase_harmonic(z, k))).collect()
        })
        .collect();
    let n = rows.len() as f64;
    let mut mean = vec![C64::default(); dim];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let centred: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
    let mut cov = vec![C64::default(); dim * dim];
    for r in &centred {
        for (a, &va) in r.iter().enumerate() {
            if va == C64::default() {
                continue;
            }
            let row = &mut cov[a * dim..(a + 1) * dim];
            for (c, vb) in row.iter_mut().zip(r) {
                *c += va * vb.conj();
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n);
    let var: Vec<f64> = (0..dim).map(|a| cov[a * dim + a].re).collect();
    let std_err = (0..dim * dim).map(|i| (var[i / dim] * var[i % dim] / n).sqrt()).collect();
    Ok(FourierHarmonicTable { side, ks: ks.to_vec(), mean, cov, std_err, realizations: rows.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{translate, white_noise, Seed};

    fn shifts(x: &ComplexField) -> Vec<ComplexField> {
        let n = x.side() as i64;
        (0..n * n).map(|t| translate(x, (t / n, t % n))).collect()
    }

    #[test]
    fn random_shift_process_follows_the_closed_form() {
        let side = 8;
        let x = white_noise(side, 1.0, Seed(31)).unwrap();
        let ks = [0, 1, 2, 3];
        let t = fourier_harmonic_covariance(&shifts(&x), &ks).unwrap();
        let fft = Fft2::new(side);
        let mut xh = x.data().to_vec();
        fft.forward(&mut xh);
        let d = side * side;
        let scale = xh.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        for &k in &ks {
            for w in 0..d {
                for &k2 in &ks {
                    for w2 in 0..d {
                        let c = t.get(k, w, k2, w2);
                        let kw_zero = harmonic_support(side, k, w, 0, 0);
                        if !t.in_support(k, w, k2, w2) || kw_zero {
                            assert!(c.norm() < 1e-10 * scale, "k{k} w{w} k'{k2} w'{w2}: {c}");
                        } else {
                            let want = phase_harmonic(xh[w], k) * phase_harmonic(xh[w2], -k2);
                            assert!((c - want).norm() < 1e-10 * scale, "k{k} w{w} k'{k2} w'{w2}: {c} vs {want}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn white_noise_off_support_entries_are_null() {
        let side = 4;
        let fields: Vec<ComplexField> = (0..4000).map(|i| white_noise(side, 1.0, Seed(1000 + i)).unwrap()).collect();
        let t = fourier_harmonic_covariance(&fields, &[1, 2]).unwrap();
        let d = side * side;
        let mut worst: f64 = 0.0;
        for &k in &t.ks.clone() {
            for w in 0..d {
                for &k2 in &t.ks.clone() {
                    for w2 in 0..d {
                        if t.in_support(k, w, k2, w2) {
                            continue;
                        }
                        let z = t.get(k, w, k2, w2).norm() / t.std_error(k, w, k2, w2).max(1e-300);
                        worst = worst.max(z);
                    }
                }
            }
        }
        assert!(worst < 5.0, "{worst}");
    }

    #[test]
    fn support_of_first_harmonic_is_the_diagonal() {
        let side = 4;
        let fields: Vec<ComplexField> = (0..3).map(|i| white_noise(side, 1.0, Seed(i)).unwrap()).collect();
        let t = fourier_harmonic_covariance(&fields, &[1]).unwrap();
        assert_eq!(t.support_size(), 16);
        assert!(fourier_harmonic_covariance(&fields[..1], &[1]).is_err());
    }
}
