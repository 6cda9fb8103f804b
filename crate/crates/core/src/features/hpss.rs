//! Harmonic-percussive separation of a power spectrogram.
//!
//! Minimizes
//!
//! ```text
//! J(H, P) = 1/(2 sh) sum (H[t-1,k] - H[t,k])^2 + 1/(2 sp) sum (P[t,k-1] - P[t,k])^2
//! ```
//!
//! subject to `H + P = W` and `H, P >= 0`, where `sh` and `sp` are the
//! harmonic and percussive variances. Harmonic energy is smooth along time,
//! percussive energy is smooth along frequency.
//!
//! Each iteration majorizes every squared difference with
//! `(x - y)^2 <= 2 (x - m)^2 + 2 (y - m)^2`, `m` the midpoint of the current
//! pair, which decouples the cells. The per-cell minimizer of the majorizer is
//! clamped to `[0, W]` and `P = W - H`, so the constraints hold exactly after
//! every step and `J` never increases.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{AxisKind, FeatureError, Spectrogram};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HpssParams {
    /// Harmonic smoothness variance.
    pub sigma_h2: f64,
    /// Percussive smoothness variance.
    pub sigma_p2: f64,
    pub iterations: usize,
}

impl Default for HpssParams {
    fn default() -> Self {
        Self {
            sigma_h2: 0.09,
            sigma_p2: 0.09,
            iterations: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpssPair {
    pub harmonic: Spectrogram,
    pub percussive: Spectrogram,
    pub params: HpssParams,
}

/// Value of the separation objective.
pub fn hpss_objective(harmonic: &Array2<f64>, percussive: &Array2<f64>, params: &HpssParams) -> f64 {
    let (frames, bins) = harmonic.dim();
    let mut temporal = 0.0;
    for t in 1..frames {
        for k in 0..bins {
            temporal += (harmonic[[t - 1, k]] - harmonic[[t, k]]).powi(2);
        }
    }
    let mut spectral = 0.0;
    for t in 0..frames {
        for k in 1..bins {
            spectral += (percussive[[t, k - 1]] - percussive[[t, k]]).powi(2);
        }
    }
    temporal / (2.0 * params.sigma_h2) + spectral / (2.0 * params.sigma_p2)
}

fn check(power: &Spectrogram, params: &HpssParams) -> Result<(), FeatureError> {
    if !(params.sigma_h2 > 0.0 && params.sigma_p2 > 0.0) {
        return Err(FeatureError::Config("HPSS variances must be positive".into()));
    }
    if let Some(v) = power.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(FeatureError::Domain(format!("HPSS input must be finite and nonnegative, found {v}")));
    }
    Ok(())
}

fn step(w: &Array2<f64>, h: &Array2<f64>, p: &Array2<f64>, a: f64, b: f64) -> Array2<f64> {
    let (frames, bins) = w.dim();
    let mut next = Array2::zeros((frames, bins));
    for t in 0..frames {
        for k in 0..bins {
            let (mut num, mut den) = (0.0, 0.0);
            for nt in [t.checked_sub(1), (t + 1 < frames).then_some(t + 1)].into_iter().flatten() {
                num += a * 0.5 * (h[[t, k]] + h[[nt, k]]);
                den += a;
            }
            for nk in [k.checked_sub(1), (k + 1 < bins).then_some(k + 1)].into_iter().flatten() {
                num += b * (w[[t, k]] - 0.5 * (p[[t, k]] + p[[t, nk]]));
                den += b;
            }
            next[[t, k]] = if den > 0.0 {
                (num / den).clamp(0.0, w[[t, k]])
            } else {
                h[[t, k]]
            };
        }
    }
    next
}

/// Separates `power` and also returns the objective before the first and
/// after every iteration.
pub fn hpss_with_trace(power: &Spectrogram, params: HpssParams) -> Result<(HpssPair, Vec<f64>), FeatureError> {
    check(power, &params)?;
    let w = &power.values;
    let a = 1.0 / (2.0 * params.sigma_h2);
    let b = 1.0 / (2.0 * params.sigma_p2);
    let mut h = w * 0.5;
    let mut p = w - &h;
    let mut trace = Vec::with_capacity(params.iterations + 1);
    trace.push(hpss_objective(&h, &p, &params));
    for _ in 0..params.iterations {
        h = step(w, &h, &p, a, b);
        p = Zip::from(w).and(&h).map_collect(|&w, &h| w - h);
        trace.push(hpss_objective(&h, &p, &params));
    }
    let pair = HpssPair {
        harmonic: Spectrogram {
            values: h,
            axis: AxisKind::StftPower,
        },
        percussive: Spectrogram {
            values: p,
            axis: AxisKind::StftPower,
        },
        params,
    };
    Ok((pair, trace))
}

pub fn hpss(power: &Spectrogram, params: HpssParams) -> Result<HpssPair, FeatureError> {
    hpss_with_trace(power, params).map(|(pair, _)| pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec(values: Array2<f64>) -> Spectrogram {
        Spectrogram {
            values,
            axis: AxisKind::StftPower,
        }
    }

    #[test]
    fn zero_input_gives_zero_parts() {
        let pair = hpss(&spec(Array2::zeros((5, 7))), HpssParams::default()).unwrap();
        assert!(pair.harmonic.values.iter().all(|&v| v == 0.0));
        assert!(pair.percussive.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_line_goes_harmonic() {
        let mut w = Array2::zeros((20, 16));
        w.column_mut(5).fill(1.0);
        let pair = hpss(&spec(w.clone()), HpssParams::default()).unwrap();
        let share = pair.harmonic.total_energy() / w.sum();
        assert!(share > 0.95, "harmonic share {share}");
    }

    #[test]
    fn vertical_line_goes_percussive() {
        let mut w = Array2::zeros((20, 16));
        w.row_mut(9).fill(1.0);
        let pair = hpss(&spec(w.clone()), HpssParams::default()).unwrap();
        let share = pair.percussive.total_energy() / w.sum();
        assert!(share > 0.95, "percussive share {share}");
    }

    #[test]
    fn objective_decreases() {
        let w = array![[1.0, 0.0, 2.0], [0.5, 3.0, 0.0], [2.0, 1.0, 1.0], [0.0, 0.2, 4.0]];
        let (_, trace) = hpss_with_trace(&spec(w), HpssParams::default()).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            hpss(&spec(array![[f64::NAN]]), HpssParams::default()),
            Err(FeatureError::Domain(_))
        ));
        assert!(hpss(&spec(array![[-1.0]]), HpssParams::default()).is_err());
    }

    #[test]
    fn single_cell_is_left_alone() {
        let pair = hpss(&spec(array![[2.0]]), HpssParams::default()).unwrap();
        assert_eq!(pair.harmonic.values[[0, 0]] + pair.percussive.values[[0, 0]], 2.0);
    }
}
