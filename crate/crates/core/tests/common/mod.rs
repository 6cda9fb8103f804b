//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_grid(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let d = Uniform::new(lo, hi).unwrap();
    Array2::from_shape_simple_fn((rows, cols), || d.sample(rng))
}

/// |a - b| / max(|a|, |b|), zero when both are zero.
pub fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Power spectrogram by a direct O(N^2) DFT of periodic-Hann frames.
pub fn dft_power(x: &[f64], n_fft: usize, hop: usize) -> Array2<f64> {
    let frames = if x.len() < n_fft { 0 } else { 1 + (x.len() - n_fft) / hop };
    let bins = n_fft / 2 + 1;
    let window: Vec<f64> = (0..n_fft).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / n_fft as f64).cos()).collect();
    let mut out = Array2::zeros((frames, bins));
    for t in 0..frames {
        for k in 0..bins {
            let (mut re, mut im) = (0.0, 0.0);
            for n in 0..n_fft {
                let v = x[t * hop + n] * window[n];
                let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            out[[t, k]] = re * re + im * im;
        }
    }
    out
}

/// Triangular filter weights built from the mel formula directly.
pub fn mel_weights(n_fft: usize, bands: usize, sample_rate: f64) -> Array2<f64> {
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..bands + 2).map(|i| inv(top * i as f64 / (bands + 1) as f64)).collect();
    let bins = n_fft / 2 + 1;
    let mut w = Array2::zeros((bins, bands));
    for a in 0..bands {
        for k in 0..bins {
            let f = k as f64 * sample_rate / n_fft as f64;
            let (lo, c, hi) = (edges[a], edges[a + 1], edges[a + 2]);
            w[[k, a]] = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
        }
    }
    w
}

/// `Y[t, a] = Σ_k X[t, k] B[k, a]` as an explicit triple loop.
pub fn apply_bank(x: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (frames, bins) = x.dim();
    let bands = b.ncols();
    let mut y = Array2::zeros((frames, bands));
    for t in 0..frames {
        for a in 0..bands {
            let mut s = 0.0;
            for k in 0..bins {
                s += x[[t, k]] * b[[k, a]];
            }
            y[[t, a]] = s;
        }
    }
    y
}

/// Average precision from explicit confusion counts at every distinct threshold.
pub fn brute_auprc(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for &tau in &thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= tau {
                if l {
                    tp += 1.0
                } else {
                    fp += 1.0
                }
            }
        }
        let recall = tp / positives;
        let precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

/// `counts[i][j]`: single-label clips of class `i` with `z_j >= tau`, `j != i`.
pub fn brute_distractors(labels: &Array2<f64>, scores: &Array2<f64>, tau: f64) -> (Vec<usize>, Vec<Vec<usize>>) {
    let (c, n) = labels.dim();
    let mut singles = vec![0; c];
    let mut counts = vec![vec![0; c]; c];
    for clip in 0..n {
        for i in 0..c {
            let only_i = (0..c).all(|k| (labels[[k, clip]] == 1.0) == (k == i));
            if !only_i {
                continue;
            }
            singles[i] += 1;
            for j in 0..c {
                if j != i && labels[[j, clip]] == 0.0 && scores[[j, clip]] >= tau {
                    counts[i][j] += 1;
                }
            }
        }
    }
    (singles, counts)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median-filtering separation with Wiener-style soft masks: harmonic
/// enhanced by a median along time, percussive by a median along frequency.
/// Returns the harmonic energy share.
pub fn median_hpss_harmonic_share(w: &Array2<f64>, half: usize) -> f64 {
    let (frames, bins) = w.dim();
    let mut h_total = 0.0;
    for t in 0..frames {
        for k in 0..bins {
            let along_time: Vec<f64> = (t.saturating_sub(half)..(t + half + 1).min(frames)).map(|u| w[[u, k]]).collect();
            let along_freq: Vec<f64> = (k.saturating_sub(half)..(k + half + 1).min(bins)).map(|u| w[[t, u]]).collect();
            let (hm, pm) = (median(along_time), median(along_freq));
            let denom = hm * hm + pm * pm;
            let mask = if denom > 0.0 { hm * hm / denom } else { 0.5 };
            h_total += mask * w[[t, k]];
        }
    }
    h_total / w.sum()
}

pub fn sinusoid(freq: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * rate as f64) as usize;
    (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect()
}

pub fn click_train(rate_hz: f64, seconds: f64, rate: u32) -> Vec<f64> {
    let n = (seconds * rate as f64) as usize;
    let period = (rate as f64 / rate_hz).round() as usize;
    (0..n).map(|i| if i % period == 0 { 1.0 } else { 0.0 }).collect()
}
