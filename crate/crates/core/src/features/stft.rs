use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{AxisKind, FeatureError, Spectrogram};
use crate::corpus::AudioClip;

/// Complex short-time spectrum, frames along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    /// T × (n_fft/2 + 1)
    pub values: Array2<Complex64>,
    pub n_fft: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    pub fn magnitudes(&self) -> Array2<f64> {
        self.values.mapv(|c| c.norm())
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of full frames that fit inside `len` samples.
pub fn frame_count(len: usize, n_fft: usize, hop: usize) -> usize {
    if len < n_fft {
        0
    } else {
        1 + (len - n_fft) / hop
    }
}

/// Hann-windowed STFT without padding; every frame lies inside the signal.
pub fn stft(clip: &AudioClip, n_fft: usize, hop: usize) -> Result<ComplexSpectrogram, FeatureError> {
    if n_fft == 0 || hop == 0 {
        return Err(FeatureError::Config("n_fft and hop must be positive".into()));
    }
    let x = clip.samples();
    if x.len() < n_fft {
        return Err(FeatureError::TooShort { len: x.len(), n_fft });
    }
    let frames = frame_count(x.len(), n_fft, hop);
    let bins = n_fft / 2 + 1;
    let window = hann(n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buffer = vec![Complex64::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = Array2::zeros((frames, bins));
    for t in 0..frames {
        let start = t * hop;
        for (b, (&s, &w)) in buffer.iter_mut().zip(x[start..start + n_fft].iter().zip(&window)) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buffer, &mut scratch);
        for (dst, src) in values.row_mut(t).iter_mut().zip(&buffer[..bins]) {
            *dst = *src;
        }
    }
    Ok(ComplexSpectrogram {
        values,
        n_fft,
        hop,
        sample_rate: clip.sample_rate(),
    })
}

/// Elementwise squared magnitude.
pub fn power_spectrogram(spec: &ComplexSpectrogram) -> Spectrogram {
    Spectrogram {
        values: spec.values.mapv(|c| c.norm_sqr()),
        axis: AxisKind::StftPower,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, 22050).unwrap()
    }

    #[test]
    fn silent_clip_has_zero_magnitudes() {
        let s = stft(&clip(vec![0.0; 4096]), 1024, 512).unwrap();
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
        assert_eq!(s.bins(), 513);
    }

    #[test]
    fn one_second_gives_42_frames() {
        let s = stft(&clip(vec![0.0; 22050]), 1024, 512).unwrap();
        assert_eq!(s.frames(), 42);
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            stft(&clip(vec![0.0; 1000]), 1024, 512),
            Err(FeatureError::TooShort { len: 1000, n_fft: 1024 })
        ));
    }

    #[test]
    fn bin_centred_tone_peaks_at_its_bin() {
        let k = 37;
        let freq = k as f64 * 22050.0 / 1024.0;
        let x: Vec<f64> = (0..8192).map(|i| (2.0 * PI * freq * i as f64 / 22050.0).sin()).collect();
        let mags = stft(&clip(x.clone()), 1024, 512).unwrap().magnitudes();

        // direct DFT of the first windowed frame
        let w = hann(1024);
        let direct: Vec<f64> = (0..513)
            .map(|bin| {
                let (mut re, mut im) = (0.0, 0.0);
                for n in 0..1024 {
                    let ang = -2.0 * PI * (bin * n) as f64 / 1024.0;
                    re += x[n] * w[n] * ang.cos();
                    im += x[n] * w[n] * ang.sin();
                }
                re.hypot(im)
            })
            .collect();
        for (a, b) in mags.row(0).iter().zip(&direct) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b));
        }
        for row in mags.rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, k);
        }
    }

    #[test]
    fn power_is_squared_magnitude() {
        let mut s = stft(&clip(vec![0.0; 1024]), 1024, 512).unwrap();
        s.values[[0, 3]] = Complex64::new(0.0, 2.0);
        let p = power_spectrogram(&s);
        assert_eq!(p.values[[0, 3]], 4.0);
        assert_eq!(p.values[[0, 4]], 0.0);
        assert_eq!(p.axis, AxisKind::StftPower);
    }
}
