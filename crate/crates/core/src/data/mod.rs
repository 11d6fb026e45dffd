//! EEG datasets: the in-memory container, the `EEGD` file format, PERCLOS
//! labels, a synthetic generator and fold planning.

mod eegd;
mod folds;
mod synthetic;

use std::collections::BTreeSet;

pub use eegd::{decode_dataset, encode_dataset, load_dataset, save_dataset, EEGD_MAGIC, EEGD_VERSION};
pub use folds::{make_inter_folds, make_intra_folds, Fold, FoldPlan, Protocol};
pub use synthetic::{generate_synthetic, Preset, SyntheticSpec};

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// One labeled EEG window, stored channel-major (`C x T`).
#[derive(Debug, Clone, PartialEq)]
pub struct EegSample {
    pub subject_id: u32,
    pub label: u32,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EegDataset {
    pub name: String,
    pub n_channels: usize,
    pub n_timesteps: usize,
    pub n_classes: usize,
    pub sampling_rate_hz: f32,
    pub samples: Vec<EegSample>,
}

impl EegDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label as usize).collect()
    }

    /// Distinct subject ids in ascending order.
    pub fn subjects(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.subject_id).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Check per-sample shapes, labels and finiteness, and that a non-empty
    /// dataset uses every class.
    pub fn validate(&self) -> Result<()> {
        let per = self.n_channels * self.n_timesteps;
        let mut seen = vec![false; self.n_classes];
        for (i, s) in self.samples.iter().enumerate() {
            if s.data.len() != per {
                return Err(invalid(format!("sample {i} has {} values, expected {per}", s.data.len())));
            }
            let label = s.label as usize;
            if label >= self.n_classes {
                return Err(invalid(format!("sample {i} has label {label} with {} classes", self.n_classes)));
            }
            if s.data.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("sample {i} contains non-finite values")));
            }
            seen[label] = true;
        }
        if !self.samples.is_empty() && seen.iter().any(|&s| !s) {
            return Err(invalid(format!("dataset does not cover all {} classes", self.n_classes)));
        }
        Ok(())
    }

    /// Stack the given samples into a `[B, C, T]` batch plus labels.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let per = self.n_channels * self.n_timesteps;
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.samples[i].data);
            labels.push(self.samples[i].label as usize);
        }
        let x = Tensor::new(&[indices.len(), self.n_channels, self.n_timesteps], data).expect("batch shape");
        (x, labels)
    }

    pub fn subset(&self, indices: &[usize]) -> EegDataset {
        EegDataset { samples: indices.iter().map(|&i| self.samples[i].clone()).collect(), ..self.header() }
    }

    fn header(&self) -> EegDataset {
        EegDataset {
            name: self.name.clone(),
            n_channels: self.n_channels,
            n_timesteps: self.n_timesteps,
            n_classes: self.n_classes,
            sampling_rate_hz: self.sampling_rate_hz,
            samples: Vec::new(),
        }
    }
}

/// PERCLOS to fatigue class: `(0, 0.35]` awake, `(0.35, 0.7]` tired,
/// `(0.7, 1]` drowsy.
pub fn perclos_label(p: f64) -> Result<u32> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("PERCLOS must lie in (0, 1], got {p}")));
    }
    Ok(if p <= 0.35 {
        0
    } else if p <= 0.7 {
        1
    } else {
        2
    })
}

/// Per-sample, per-channel standardization. Returns the dataset and the
/// number of zero-variance channels, which are centered but not scaled.
pub fn zscore_per_channel(dataset: &EegDataset, enabled: bool) -> (EegDataset, usize) {
    if !enabled {
        return (dataset.clone(), 0);
    }
    let t = dataset.n_timesteps;
    let mut flat = 0;
    let mut out = dataset.clone();
    for s in &mut out.samples {
        for row in s.data.chunks_mut(t) {
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / t as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / t as f64;
            if var > 0.0 {
                let sd = var.sqrt();
                row.iter_mut().for_each(|v| *v = ((*v as f64 - mean) / sd) as f32);
            } else {
                flat += 1;
                row.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    (out, flat)
}
