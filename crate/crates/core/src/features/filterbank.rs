//! Triangular mel and linear filterbanks.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{AxisKind, FeatureError, Spectrogram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Mel,
    Linear,
}

/// F × A matrix of triangular filter weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterbankMatrix {
    pub weights: Array2<f64>,
    pub scale: Scale,
    /// A + 2 edge frequencies; band `a` spans `edges_hz[a]..edges_hz[a + 2]`
    /// and peaks at `edges_hz[a + 1]`.
    pub edges_hz: Vec<f64>,
}

impl FilterbankMatrix {
    pub fn bins(&self) -> usize {
        self.weights.nrows()
    }

    pub fn bands(&self) -> usize {
        self.weights.ncols()
    }

    pub fn max_column_sum(&self) -> f64 {
        self.weights
            .columns()
            .into_iter()
            .map(|c| c.sum())
            .fold(0.0, f64::max)
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn triangle(f: f64, lo: f64, centre: f64, hi: f64) -> f64 {
    if f <= lo || f >= hi {
        0.0
    } else if f <= centre {
        (f - lo) / (centre - lo)
    } else {
        (hi - f) / (hi - centre)
    }
}

/// Builds a `bands`-filter bank over the `n_fft/2 + 1` STFT bins.
///
/// Centres are equally spaced in mel (or Hz) between 0 Hz and Nyquist, with
/// unit peak height. Fails if any filter covers no bin.
pub fn make_filterbank(
    scale: Scale,
    n_fft: usize,
    bands: usize,
    sample_rate: u32,
) -> Result<FilterbankMatrix, FeatureError> {
    if bands == 0 {
        return Err(FeatureError::Config("filterbank needs at least one band".into()));
    }
    if n_fft < 2 {
        return Err(FeatureError::Config(format!("n_fft {n_fft} too small")));
    }
    let nyquist = sample_rate as f64 / 2.0;
    let steps = (bands + 1) as f64;
    let edges_hz: Vec<f64> = (0..bands + 2)
        .map(|i| match scale {
            Scale::Mel => mel_to_hz(hz_to_mel(nyquist) * i as f64 / steps),
            Scale::Linear => nyquist * i as f64 / steps,
        })
        .collect();
    let bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut weights = Array2::zeros((bins, bands));
    for a in 0..bands {
        let (lo, centre, hi) = (edges_hz[a], edges_hz[a + 1], edges_hz[a + 2]);
        for k in 0..bins {
            weights[[k, a]] = triangle(k as f64 * bin_hz, lo, centre, hi);
        }
        if weights.column(a).iter().all(|&w| w == 0.0) {
            return Err(FeatureError::Config(format!(
                "filter {a} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; use fewer bands or a larger n_fft"
            )));
        }
    }
    Ok(FilterbankMatrix {
        weights,
        scale,
        edges_hz,
    })
}

/// `Y[t, a] = sum_k B[k, a] X[t, k]`.
pub fn apply_filterbank(spec: &Spectrogram, fb: &FilterbankMatrix) -> Result<Spectrogram, FeatureError> {
    if spec.bands() != fb.bins() {
        return Err(FeatureError::Shape(format!(
            "spectrogram has {} bins but filterbank expects {}",
            spec.bands(),
            fb.bins()
        )));
    }
    Ok(Spectrogram {
        values: spec.values.dot(&fb.weights),
        axis: match fb.scale {
            Scale::Mel => AxisKind::Mel,
            Scale::Linear => AxisKind::Linear,
        },
    })
}
