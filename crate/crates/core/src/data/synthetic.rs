use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EegDataset, EegSample};
use crate::error::{invalid, Result};
use crate::rng::{SeedStreams, Stream, StreamRng};

const THETA: (f64, f64) = (4.0, 8.0);
const ALPHA: (f64, f64) = (8.0, 13.0);
const BETA: (f64, f64) = (13.0, 30.0);
const TONES_PER_BAND: usize = 4;

/// Parameters of the synthetic EEG generator.
///
/// Each channel is a sum of three band-limited components plus unit
/// Gaussian noise. The theta-band amplitude grows with the class index and
/// the beta-band amplitude shrinks with it, each by `class_separation` per
/// class. Every subject scales its channels by fixed gains drawn from
/// `1 +/- subject_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub name: String,
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    pub n_channels: usize,
    pub n_timesteps: usize,
    pub n_classes: usize,
    pub sampling_rate_hz: f32,
    pub seed: u64,
    pub class_separation: f64,
    pub subject_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// 17 channels, 8 s at 200 Hz, three classes.
    SeedvigLike,
    /// 30 channels, 3 s at 128 Hz, two classes.
    SadtLike,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::SeedvigLike, Preset::SadtLike];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "seedvig-like" => Ok(Self::SeedvigLike),
            "sadt-like" => Ok(Self::SadtLike),
            _ => Err(invalid(format!("unknown preset {s:?} (expected seedvig-like or sadt-like)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SeedvigLike => "seedvig-like",
            Self::SadtLike => "sadt-like",
        }
    }

    pub fn spec(self, seed: u64) -> SyntheticSpec {
        let (n_channels, n_timesteps, n_classes, rate) = match self {
            Self::SeedvigLike => (17, 1600, 3, 200.0),
            Self::SadtLike => (30, 384, 2, 128.0),
        };
        SyntheticSpec {
            name: self.name().into(),
            n_subjects: 10,
            samples_per_subject: 120,
            n_channels,
            n_timesteps,
            n_classes,
            sampling_rate_hz: rate,
            seed,
            class_separation: SyntheticSpec::DEFAULT_SEPARATION,
            subject_shift: SyntheticSpec::DEFAULT_SHIFT,
        }
    }
}

impl SyntheticSpec {
    pub const DEFAULT_SEPARATION: f64 = 0.5;
    pub const DEFAULT_SHIFT: f64 = 0.3;

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.samples_per_subject == 0 || self.n_channels == 0 || self.n_timesteps == 0 {
            return Err(invalid("synthetic spec counts must be positive"));
        }
        if self.n_classes < 2 {
            return Err(invalid("synthetic data needs at least 2 classes"));
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(invalid("sampling rate must be positive"));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return Err(invalid("class separation must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.subject_shift) {
            return Err(invalid("subject shift must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Accumulate `amplitude` times a unit-RMS sum of random tones from `band`.
fn add_band(out: &mut [f64], band: (f64, f64), amplitude: f64, rate: f64, rng: &mut StreamRng) {
    let nyquist = 0.5 * rate;
    let tone_amp = amplitude * (2.0 / TONES_PER_BAND as f64).sqrt();
    for _ in 0..TONES_PER_BAND {
        let f = rng.random_range(band.0..band.1).min(0.95 * nyquist);
        let phase = rng.random_range(0.0..2.0 * PI);
        let w = 2.0 * PI * f / rate;
        for (t, v) in out.iter_mut().enumerate() {
            *v += tone_amp * (w * t as f64 + phase).sin();
        }
    }
}

/// Deterministic synthetic dataset. Subjects are numbered `0..n_subjects`
/// and each holds a class-balanced, shuffled set of samples.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<EegDataset> {
    spec.validate()?;
    let streams = SeedStreams::new(spec.seed);
    let rate = spec.sampling_rate_hz as f64;
    let (c, t, k) = (spec.n_channels, spec.n_timesteps, spec.n_classes);
    let mut samples = Vec::with_capacity(spec.n_subjects * spec.samples_per_subject);
    let mut row = vec![0.0f64; t];
    for subject in 0..spec.n_subjects {
        let mut rng = streams.rng(Stream::Synthetic, subject as u64);
        let gains: Vec<f64> = (0..c).map(|_| 1.0 + spec.subject_shift * rng.random_range(-1.0..1.0)).collect();
        let mut labels: Vec<u32> = (0..spec.samples_per_subject).map(|i| (i % k) as u32).collect();
        labels.shuffle(&mut rng);
        for label in labels {
            let theta = 1.0 + spec.class_separation * label as f64;
            let beta = 1.0 + spec.class_separation * (k - 1 - label as usize) as f64;
            let mut data = Vec::with_capacity(c * t);
            for &gain in &gains {
                row.iter_mut().for_each(|v| *v = 0.0);
                add_band(&mut row, THETA, theta, rate, &mut rng);
                add_band(&mut row, ALPHA, 1.0, rate, &mut rng);
                add_band(&mut row, BETA, beta, rate, &mut rng);
                for v in &row {
                    let noise: f64 = rng.sample(StandardNormal);
                    data.push((gain * v + noise) as f32);
                }
            }
            samples.push(EegSample { subject_id: subject as u32, label, data });
        }
    }
    Ok(EegDataset {
        name: spec.name.clone(),
        n_channels: c,
        n_timesteps: t,
        n_classes: k,
        sampling_rate_hz: spec.sampling_rate_hz,
        samples,
    })
}
