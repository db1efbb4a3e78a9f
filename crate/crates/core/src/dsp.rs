//! Small numeric helpers shared by the feature extractors.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation (two-pass).
pub fn pop_std(v: &[f64]) -> f64 {
    let mu = mean(v);
    (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Symmetric Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
        .collect()
}

/// Linear-interpolation quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Shannon entropy in nats of an equal-width histogram over `[min, max]`.
///
/// A zero-width range puts everything in one bin, giving 0.
pub fn histogram_entropy(v: &[f64], bins: usize) -> f64 {
    let (min, max) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    });
    let width = max - min;
    if !(width > 0.0) {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    for x in v {
        let idx = (((x - min) / width) * bins as f64).floor() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let n = v.len() as f64;
    -counts
        .iter()
        .filter(|c| **c > 0)
        .map(|c| {
            let p = *c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Shannon entropy in nats of a non-negative weight vector after normalisation.
pub fn distribution_entropy(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return 0.0;
    }
    -weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| {
            let p = w / total;
            p * p.ln()
        })
        .sum::<f64>()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(len))
}

pub fn inverse_fft(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len))
}

/// In-place forward transform of a real signal zero-padded to `len`.
pub fn real_fft(signal: &[f64], len: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .map(|x| Complex::new(*x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    forward_fft(len).process(&mut buf);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 0.75), 3.25);
        assert_eq!(quantile_sorted(&[5.0], 0.5), 5.0);
    }

    #[test]
    fn entropy_of_uniform_bins_is_ln_bins() {
        let v: Vec<f64> = (0..16).map(f64::from).collect();
        assert!((histogram_entropy(&v, 16) - 16f64.ln()).abs() < 1e-12);
        assert_eq!(histogram_entropy(&[2.0; 8], 16), 0.0);
        assert!((distribution_entropy(&[1.0, 1.0]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(distribution_entropy(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn hann_endpoints() {
        let w = hann(5);
        assert_eq!(w[0], 0.0);
        assert!((w[2] - 1.0).abs() < 1e-15);
        assert!(w[4].abs() < 1e-15);
    }
}
