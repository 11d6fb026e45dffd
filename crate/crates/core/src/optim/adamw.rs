use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ModelParams;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Optimizer state: moment buffers (kept in `f64`) and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamW {
    /// State for parameter groups of the given sizes.
    pub fn new(config: AdamWConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// State for the learnable tensors of `params`; running statistics get
    /// empty buffers.
    pub fn for_params<E: Element>(config: AdamWConfig, params: &ModelParams<E>) -> Self {
        let sizes: Vec<usize> =
            params.tensors().iter().map(|t| if t.kind.is_learnable() { t.value.numel() } else { 0 }).collect();
        Self::new(config, &sizes)
    }

    /// One update over raw parameter groups. `decay[i]` selects decoupled
    /// weight decay for group `i`.
    pub fn step_groups<E: Element>(&mut self, params: &mut [&mut [E]], grads: &[&[E]], decay: &[bool]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() || decay.len() != self.m.len() {
            return Err(invalid("parameter, gradient and state group counts differ"));
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], grads[i]);
            if p.len() != m.len() || g.len() != m.len() {
                return Err(invalid(format!("group {i}: {} params, {} grads, {} state", p.len(), g.len(), m.len())));
            }
            let wd = if decay[i] { c.weight_decay } else { 0.0 };
            for j in 0..m.len() {
                let gj = g[j].to_f64();
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                let old = p[j].to_f64();
                p[j] = E::from_f64(old - c.lr * m_hat / (v_hat.sqrt() + c.eps) - c.lr * wd * old);
            }
        }
        Ok(())
    }

    /// Update every learnable tensor of `params`. `grads` is aligned with
    /// [`ModelParams::tensors`]; a learnable tensor without a gradient is an
    /// invalid-state error.
    pub fn step<E: Element>(&mut self, params: &mut ModelParams<E>, grads: &[Option<Tensor<E>>]) -> Result<()> {
        if grads.len() != params.tensors().len() {
            return Err(invalid(format!("{} gradients for {} tensors", grads.len(), params.tensors().len())));
        }
        let mut groups: Vec<&mut [E]> = Vec::new();
        let mut gs: Vec<&[E]> = Vec::new();
        let mut decay = Vec::new();
        for (t, g) in params.tensors_mut().iter_mut().zip(grads) {
            if !t.kind.is_learnable() {
                groups.push(&mut []);
                gs.push(&[]);
                decay.push(false);
                continue;
            }
            let g = g.as_ref().ok_or_else(|| Error::InvalidState(format!("missing gradient for {}", t.name)))?;
            decay.push(t.kind.decays());
            gs.push(g.data());
            groups.push(t.value.data_mut());
        }
        self.step_groups(&mut groups, &gs, &decay)
    }
}
