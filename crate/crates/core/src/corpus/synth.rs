//! Deterministic synthetic corpora for desk-scale experiments.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{save_manifest, AnnotationRecord, Split, DAYS, HOURS, WEEKS};
use super::wav::{encode_wav, SampleFormat};
use super::{AudioClip, CorpusError};
use crate::classes::{CoarseClass, NUM_CLASSES};

/// Signal family used to render clips of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// Stationary tone with per-clip amplitude and small frequency jitter.
    Sinusoid { frequency_hz: f64 },
    /// Short decaying white-noise bursts at random positions.
    NoiseBurst { bursts_per_second: f64 },
    /// Periodic impulses.
    ClickTrain { rate_hz: f64 },
    /// Stationary white noise.
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRecipe {
    pub class: CoarseClass,
    pub generator: Generator,
    /// When set, every clip of this class is recorded at this hour.
    #[serde(default)]
    pub hour: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecipe {
    pub classes: Vec<ClassRecipe>,
    pub clips_per_class: usize,
    /// The last `validate_per_class` clips of every class go to the validate split.
    #[serde(default)]
    pub validate_per_class: usize,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_latitude")]
    pub base_latitude: f64,
    #[serde(default = "default_longitude")]
    pub base_longitude: f64,
    #[serde(default = "default_spread")]
    pub location_spread_km: f64,
}

fn default_duration() -> f64 {
    1.0
}
fn default_rate() -> u32 {
    22050
}
fn default_latitude() -> f64 {
    40.73
}
fn default_longitude() -> f64 {
    -73.99
}
fn default_spread() -> f64 {
    2.0
}

impl CorpusRecipe {
    /// Empty recipe with default clip geometry; fill in `classes`.
    pub fn new(clips_per_class: usize, validate_per_class: usize) -> Self {
        Self {
            classes: Vec::new(),
            clips_per_class,
            validate_per_class,
            duration_s: default_duration(),
            sample_rate: default_rate(),
            base_latitude: default_latitude(),
            base_longitude: default_longitude(),
            location_spread_km: default_spread(),
        }
    }

    /// Tonal class against impulsive class, 16 clips each.
    pub fn two_class() -> Self {
        let mut recipe = Self::new(16, 4);
        recipe.classes = vec![
            ClassRecipe {
                class: CoarseClass::AlertSignal,
                generator: Generator::Sinusoid { frequency_hz: 1000.0 },
                hour: None,
            },
            ClassRecipe {
                class: CoarseClass::MachineryImpact,
                generator: Generator::NoiseBurst { bursts_per_second: 3.0 },
                hour: None,
            },
        ];
        recipe
    }

    /// Two classes with indistinguishable audio whose identity is carried by the hour.
    pub fn hour_correlated() -> Self {
        let mut recipe = Self::new(16, 4);
        recipe.classes = vec![
            ClassRecipe {
                class: CoarseClass::Engine,
                generator: Generator::Noise,
                hour: Some(3),
            },
            ClassRecipe {
                class: CoarseClass::HumanVoice,
                generator: Generator::Noise,
                hour: Some(17),
            },
        ];
        recipe
    }

    fn check(&self) -> Result<(), CorpusError> {
        let fail = |m: String| Err(CorpusError::Recipe(m));
        if self.classes.is_empty() {
            return fail("recipe lists no classes".into());
        }
        if self.classes.len() > NUM_CLASSES {
            return fail(format!("at most {NUM_CLASSES} classes"));
        }
        if self.clips_per_class == 0 {
            return fail("clips_per_class must be positive".into());
        }
        if self.validate_per_class > self.clips_per_class {
            return fail("validate_per_class exceeds clips_per_class".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return fail(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if self.sample_rate == 0 {
            return fail("sample_rate must be positive".into());
        }
        for c in &self.classes {
            if let Some(h) = c.hour {
                if h >= HOURS {
                    return fail(format!("hour {h} outside 0-23"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub clips: Vec<AudioClip>,
    pub records: Vec<AnnotationRecord>,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn render(generator: &Generator, len: usize, rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = rate as f64;
    let background = 0.005;
    let mut out: Vec<f64> = (0..len).map(|_| background * gaussian(rng)).collect();
    match *generator {
        Generator::Sinusoid { frequency_hz } => {
            let freq = frequency_hz * rng.random_range(0.98..1.02);
            let amp = rng.random_range(0.3..0.6);
            let phase = rng.random_range(0.0..2.0 * PI);
            for (i, s) in out.iter_mut().enumerate() {
                *s += amp * (2.0 * PI * freq * i as f64 / sr + phase).sin();
            }
        }
        Generator::NoiseBurst { bursts_per_second } => {
            let count = ((bursts_per_second * len as f64 / sr).round() as usize).max(1);
            for _ in 0..count {
                let burst_len = (rng.random_range(0.03..0.08) * sr) as usize;
                let start = rng.random_range(0..len.saturating_sub(burst_len).max(1));
                let amp = rng.random_range(0.3..0.6);
                for k in 0..burst_len.min(len - start) {
                    let decay = (-(k as f64) / (0.25 * burst_len as f64)).exp();
                    out[start + k] += amp * decay * gaussian(rng) * 0.5;
                }
            }
        }
        Generator::ClickTrain { rate_hz } => {
            let period = sr / rate_hz;
            let amp = rng.random_range(0.5..0.9);
            let mut t = rng.random_range(0.0..period);
            while (t as usize) < len {
                out[t as usize] += amp;
                t += period;
            }
        }
        Generator::Noise => {
            let amp = rng.random_range(0.1..0.2);
            for s in out.iter_mut() {
                *s += amp * gaussian(rng);
            }
        }
    }
    out.iter_mut().for_each(|s| *s = s.clamp(-1.0, 1.0));
    out
}

/// Renders a corpus from `recipe`. Identical `(recipe, seed)` pairs give identical corpora.
pub fn synth_corpus(recipe: &CorpusRecipe, seed: u64) -> Result<SynthCorpus, CorpusError> {
    recipe.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (recipe.duration_s * recipe.sample_rate as f64).round() as usize;
    // degrees per km at the base latitude
    let lat_per_km = 1.0 / 110.574;
    let lon_per_km = 1.0 / (111.320 * recipe.base_latitude.to_radians().cos().abs().max(1e-6));

    let mut clips = Vec::new();
    let mut records = Vec::new();
    for class in &recipe.classes {
        for k in 0..recipe.clips_per_class {
            let index = records.len();
            let samples = render(&class.generator, len, recipe.sample_rate, &mut rng);
            let clip_id = format!("synth_{index:04}");
            let mut labels = [false; NUM_CLASSES];
            labels[class.class.index()] = true;
            let spread = recipe.location_spread_km;
            let record = AnnotationRecord {
                path: format!("audio/{clip_id}.wav"),
                clip_id,
                labels,
                latitude: (recipe.base_latitude + rng.random_range(-1.0..=1.0) * spread * lat_per_km)
                    .clamp(-90.0, 90.0),
                longitude: (recipe.base_longitude + rng.random_range(-1.0..=1.0) * spread * lon_per_km)
                    .clamp(-180.0, 180.0),
                hour: match class.hour {
                    Some(h) => h,
                    None => rng.random_range(0..HOURS),
                },
                day: rng.random_range(0..DAYS),
                week: rng.random_range(0..WEEKS),
                split: if k + recipe.validate_per_class >= recipe.clips_per_class {
                    Split::Validate
                } else {
                    Split::Train
                },
            };
            clips.push(AudioClip::new(samples, recipe.sample_rate)?);
            records.push(record);
        }
    }
    Ok(SynthCorpus { clips, records })
}

impl SynthCorpus {
    /// Writes `manifest.csv` and float32 WAV files under `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("audio"))?;
        for (clip, record) in self.clips.iter().zip(&self.records) {
            std::fs::write(dir.join(&record.path), encode_wav(clip, SampleFormat::Float32))?;
        }
        save_manifest(dir.join("manifest.csv"), &self.records)
    }
}
