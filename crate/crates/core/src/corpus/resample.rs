//! Polyphase windowed-sinc sample-rate conversion.

use super::{AudioClip, CorpusError};

/// Filter taps per polyphase branch.
pub const TAPS_PER_PHASE: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Cutoff as a fraction of the lower of the two Nyquist frequencies.
const ROLLOFF: f64 = 0.95;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// One branch of taps per output phase, each normalized to unit DC gain.
fn filter_bank(up: usize, cutoff: f64) -> Vec<[f64; TAPS_PER_PHASE]> {
    let half = (TAPS_PER_PHASE / 2) as f64;
    let norm = bessel_i0(KAISER_BETA);
    (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            let mut taps = [0.0; TAPS_PER_PHASE];
            for (j, tap) in taps.iter_mut().enumerate() {
                let tau = tap_offset(j) as f64 - frac;
                let r = (tau / half).clamp(-1.0, 1.0);
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                *tap = cutoff * sinc(cutoff * tau) * window;
            }
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            taps
        })
        .collect()
}

fn tap_offset(j: usize) -> isize {
    j as isize - (TAPS_PER_PHASE as isize / 2 - 1)
}

/// Resamples `clip` to `target_rate`.
///
/// The output holds `round(len * target / source)` samples. Equal rates return
/// an identical copy.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, CorpusError> {
    if target_rate == 0 {
        return Err(CorpusError::SampleRate(target_rate));
    }
    let source_rate = clip.sample_rate();
    if source_rate == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (source_rate as u64 / g) as usize;
    let cutoff = ROLLOFF * (up as f64 / down as f64).min(1.0);
    let bank = filter_bank(up, cutoff);

    let input = clip.samples();
    let out_len = (input.len() as f64 * target_rate as f64 / source_rate as f64).round() as usize;
    let mut output = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let num = n as u128 * down as u128;
        let base = (num / up as u128) as isize;
        let taps = &bank[(num % up as u128) as usize];
        let mut acc = 0.0;
        for (j, &w) in taps.iter().enumerate() {
            let idx = base + tap_offset(j);
            if idx >= 0 && (idx as usize) < input.len() {
                acc += input[idx as usize] * w;
            }
        }
        output.push(acc);
    }
    AudioClip::new(output, target_rate)
}
