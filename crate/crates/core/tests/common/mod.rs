//! Brute-force reference implementations used by the integration tests.
//!
//! Everything here is written from the definitions with direct sums and a
//! direct DFT; nothing calls into the library's numeric helpers.
#![allow(dead_code)]

use std::f64::consts::PI;

use dailylog::ingest::TriAxisSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    let d = (a - b).abs();
    d <= abs || d <= rel * a.abs().max(b.abs())
}

fn mean(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x;
    }
    s / v.len() as f64
}

fn central_moment(v: &[f64], k: i32) -> f64 {
    let mu = mean(v);
    let mut s = 0.0;
    for x in v {
        s += (x - mu).powi(k);
    }
    s / v.len() as f64
}

fn all_equal(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    if i + 1 >= s.len() {
        return s[i];
    }
    s[i] + (h - i as f64) * (s[i + 1] - s[i])
}

/// Entropy (nats) of a 16-bin equal-width histogram; bin membership by edge comparison.
fn hist_entropy(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return 0.0;
    }
    let mut counts = [0usize; 16];
    for x in v {
        let mut bin = 0;
        for j in 1..16 {
            if (x - lo) / (hi - lo) * 16.0 >= j as f64 {
                bin = j;
            }
        }
        counts[bin] += 1;
    }
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / v.len() as f64;
            h -= p * p.ln();
        }
    }
    h
}

fn dft_power(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n / 2 + 1);
    for k in 0..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, v) in x.iter().enumerate() {
            let ang = 2.0 * PI * (k * t % n) as f64 / n as f64;
            re += v * ang.cos();
            im -= v * ang.sin();
        }
        out.push((re * re + im * im) / n as f64);
    }
    out
}

fn hann_sym(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if n == 1 {
                1.0
            } else {
                0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos())
            }
        })
        .collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    if all_equal(a) || all_equal(b) {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    num / (da.sqrt() * db.sqrt())
}

/// The 26 values of one IMU block, from the definitions.
pub fn imu_block_oracle(s: &TriAxisSeries) -> Vec<f64> {
    let fs = s.sample_rate_hz;
    let n = s.x.len();
    let m: Vec<f64> = (0..n)
        .map(|i| (s.x[i].powi(2) + s.y[i].powi(2) + s.z[i].powi(2)).sqrt())
        .collect();
    let mut out = Vec::with_capacity(26);

    // time domain
    let var = central_moment(&m, 2);
    let sd = var.sqrt();
    let flat = all_equal(&m);
    out.push(mean(&m));
    out.push(if flat { 0.0 } else { sd });
    out.push(if flat { 0.0 } else { central_moment(&m, 3) / sd.powi(3) });
    out.push(if flat {
        0.0
    } else {
        central_moment(&m, 4) / (var * var) - 3.0
    });
    out.push(m.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    out.push(m.iter().cloned().fold(f64::INFINITY, f64::min));
    out.push(quantile(&m, 0.75) - quantile(&m, 0.25));
    out.push(hist_entropy(&m));
    let diffs: Vec<f64> = (1..n).map(|i| (m[i] - m[i - 1]).abs()).collect();
    out.push(hist_entropy(&diffs));

    // frequency domain
    if flat {
        out.extend([1e-12f64.ln(); 5]);
        out.push(0.0);
    } else {
        let mu = mean(&m);
        let w = hann_sym(n);
        let x: Vec<f64> = (0..n).map(|i| (m[i] - mu) * w[i]).collect();
        let p = dft_power(&x);
        let mut bands = [0.0; 5];
        let mut total = 0.0;
        for (k, pk) in p.iter().enumerate().skip(1) {
            // band j covers frequencies [j, j+1) * fs/10, top band closed
            let mut band = 0;
            for j in 1..5 {
                if 10 * k >= j * n {
                    band = j;
                }
            }
            bands[band] += pk;
            total += pk;
        }
        for b in bands {
            out.push((b + 1e-12).ln());
        }
        let mut h = 0.0;
        for pk in p.iter().skip(1) {
            if *pk > 0.0 {
                let q = pk / total;
                h -= q * q.ln();
            }
        }
        out.push(h);
    }

    // autocorrelation
    let lo = ((0.25 * fs).round() as usize).max(1);
    let hi = ((3.0 * fs).round() as usize).min(n - 1);
    if flat {
        out.push(lo as f64 / fs);
        out.push(0.0);
    } else {
        let mu = mean(&m);
        let d: Vec<f64> = m.iter().map(|v| v - mu).collect();
        let r0: f64 = d.iter().map(|v| v * v).sum();
        let mut best = (lo, f64::NEG_INFINITY);
        for tau in lo..=hi {
            let mut r = 0.0;
            for t in 0..n - tau {
                r += d[t] * d[t + tau];
            }
            if r / r0 > best.1 {
                best = (tau, r / r0);
            }
        }
        out.push(best.0 as f64 / fs);
        out.push(best.1);
    }

    // axes
    for a in [&s.x, &s.y, &s.z] {
        out.push(mean(a));
    }
    for a in [&s.x, &s.y, &s.z] {
        out.push(if all_equal(a) { 0.0 } else { central_moment(a, 2).sqrt() });
    }
    out.push(pearson(&s.x, &s.y));
    out.push(pearson(&s.x, &s.z));
    out.push(pearson(&s.y, &s.z));
    out
}

/// Random-walk + periodic + noise tri-axis series with a seeded length and rate.
pub fn random_series(seed: u64) -> TriAxisSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = [20.0, 32.0, 50.0, 100.0][rng.random_range(0..4)];
    let n = rng.random_range(64..=320);
    let f = rng.random_range(0.5..3.0);
    let mut axes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut drift = [0.0f64; 3];
    for i in 0..n {
        let t = i as f64 / fs;
        for (a, axis) in axes.iter_mut().enumerate() {
            drift[a] += rng.random_range(-0.05..0.05);
            let g = if a == 1 { 9.81 } else { 0.0 };
            axis.push(
                g + drift[a] + (a as f64 + 1.0) * (2.0 * PI * f * t + a as f64).sin() + rng.random_range(-0.5..0.5),
            );
        }
    }
    let [x, y, z] = axes;
    TriAxisSeries::new(fs, x, y, z).unwrap()
}

/// Log mel energies per frame, from the definitions.
pub fn log_mel_oracle(samples: &[f64], fs: f64, n_mels: usize) -> Vec<Vec<f64>> {
    let frame = (fs * 0.025).round() as usize;
    let hop = (fs * 0.010).round() as usize;
    let mut y = vec![samples[0]];
    for i in 1..samples.len() {
        y.push(samples[i] - 0.97 * samples[i - 1]);
    }
    let mut n_fft = 1;
    while n_fft < frame {
        n_fft *= 2;
    }
    let w = hann_sym(frame);
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(fs / 2.0);
    let pts: Vec<f64> = (0..n_mels + 2)
        .map(|i| hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start + frame <= y.len() {
        let mut x = vec![0.0; n_fft];
        for i in 0..frame {
            x[i] = y[start + i] * w[i];
        }
        let p = dft_power(&x);
        let mut row = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (a, c, b) = (pts[m], pts[m + 1], pts[m + 2]);
            let mut e = 0.0;
            for (k, pk) in p.iter().enumerate() {
                let f = k as f64 * fs / n_fft as f64;
                let wt = if f < a || f > b {
                    0.0
                } else if f <= c {
                    (f - a) / (c - a)
                } else {
                    (b - f) / (b - c)
                };
                e += wt * pk;
            }
            row.push(if e > 1e-10 { e.ln() } else { 1e-10f64.ln() });
        }
        out.push(row);
        start += hop;
    }
    out
}

/// Orthonormal DCT-II of each row, keeping `n_out` coefficients.
pub fn dct_oracle(rows: &[Vec<f64>], n_out: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let n = r.len() as f64;
            (0..n_out)
                .map(|k| {
                    let s: f64 = r
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v * (PI / n * (i as f64 + 0.5) * k as f64).cos())
                        .sum();
                    s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
                })
                .collect()
        })
        .collect()
}

/// Exact macro precision/recall/F1 from explicit (truth, pred) pairs.
pub fn macro_prf_from_pairs(k: usize, pairs: &[(usize, usize)]) -> (f64, f64, f64) {
    let (mut sp, mut sr, mut sf, mut used) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..k {
        let hit = pairs.iter().filter(|(t, p)| *t == c && *p == c).count() as f64;
        let predicted = pairs.iter().filter(|(_, p)| *p == c).count() as f64;
        let actual = pairs.iter().filter(|(t, _)| *t == c).count() as f64;
        if actual == 0.0 {
            continue;
        }
        let p = if predicted == 0.0 { 0.0 } else { hit / predicted };
        let r = hit / actual;
        let f = if hit == 0.0 {
            0.0
        } else {
            2.0 * hit / (predicted + actual)
        };
        sp += p;
        sr += r;
        sf += f;
        used += 1.0;
    }
    if used == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        (sp / used, sr / used, sf / used)
    }
}
