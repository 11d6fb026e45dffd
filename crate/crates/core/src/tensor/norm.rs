//! Batch and layer normalization.

use super::tape::Op;
use super::{lane_dot, lane_sum, Element, Mode, Tape, Var};
use crate::error::{invalid, Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

/// `[outer, features, inner]` view of a batch-norm input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct FeatureLayout {
    pub outer: usize,
    pub features: usize,
    pub inner: usize,
}

impl FeatureLayout {
    fn count(&self) -> usize {
        self.outer * self.inner
    }

    fn for_each_feature_row(&self, mut f: impl FnMut(usize, std::ops::Range<usize>)) {
        for o in 0..self.outer {
            for c in 0..self.features {
                let start = (o * self.features + c) * self.inner;
                f(c, start..start + self.inner);
            }
        }
    }
}

/// Per-feature statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMoments {
    pub mean: Vec<f64>,
    /// Unbiased (n - 1) variance, the convention for running estimates.
    pub var: Vec<f64>,
}

impl BatchMoments {
    /// Exponential moving update `r <- (1 - m) r + m batch` of running stats.
    pub fn update_running<E: Element>(&self, running_mean: &mut [E], running_var: &mut [E], momentum: f64) {
        for (r, &b) in running_mean.iter_mut().zip(&self.mean) {
            *r = E::from_f64((1.0 - momentum) * r.to_f64() + momentum * b);
        }
        for (r, &b) in running_var.iter_mut().zip(&self.var) {
            *r = E::from_f64((1.0 - momentum) * r.to_f64() + momentum * b);
        }
    }
}

impl<E: Element> Tape<E> {
    /// Batch normalization over `[B, C, T]` or `[B, F]` with per-feature affine.
    ///
    /// Train mode normalizes with batch statistics and returns them so the
    /// caller can fold them into its running estimates. Eval mode uses the
    /// supplied running mean and variance.
    pub fn batchnorm1d(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[E],
        running_var: &[E],
        mode: Mode,
    ) -> Result<(Var, Option<BatchMoments>)> {
        let (xi, gi, bi) = (self.index(input)?, self.index(gamma)?, self.index(beta)?);
        let shape = self.node_value(xi).shape().to_vec();
        let layout = match shape.as_slice() {
            &[outer, features] => FeatureLayout { outer, features, inner: 1 },
            &[outer, features, inner] => FeatureLayout { outer, features, inner },
            _ => return Err(invalid(format!("batchnorm1d expects [B, C, T] or [B, F], got {shape:?}"))),
        };
        let f = layout.features;
        for (name, len) in [
            ("gamma", self.node_value(gi).numel()),
            ("beta", self.node_value(bi).numel()),
            ("running mean", running_mean.len()),
            ("running var", running_var.len()),
        ] {
            if len != f {
                return Err(invalid(format!("batchnorm1d {name} has {len} entries for {f} features")));
            }
        }
        let x = self.node_value(xi).data();
        let gamma_v = E::slice_to_f64(self.node_value(gi).data());
        let beta_v = E::slice_to_f64(self.node_value(bi).data());

        let (mean, var_biased, moments) = match mode {
            Mode::Train => {
                let n = layout.count();
                if n < 2 {
                    return Err(Error::DegenerateBatch { values_per_feature: n });
                }
                let mut mean = vec![0.0; f];
                layout.for_each_feature_row(|c, r| mean[c] += lane_sum(&x[r], |v| v.to_f64()));
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; f];
                layout.for_each_feature_row(|c, r| {
                    let m = mean[c];
                    var[c] += lane_sum(&x[r], |v| (v.to_f64() - m) * (v.to_f64() - m))
                });
                var.iter_mut().for_each(|v| *v /= n as f64);
                let unbiased = var.iter().map(|v| v * n as f64 / (n - 1) as f64).collect();
                let moments = BatchMoments { mean: mean.clone(), var: unbiased };
                (mean, var, Some(moments))
            }
            Mode::Eval => (
                running_mean.iter().map(|v| v.to_f64()).collect(),
                running_var.iter().map(|v| v.to_f64()).collect(),
                None,
            ),
        };
        let inv_std: Vec<f64> = var_biased.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![E::default(); x.len()];
        let mut out = vec![E::default(); x.len()];
        layout.for_each_feature_row(|c, r| {
            let (m, k, ga, be) = (mean[c], inv_std[c], gamma_v[c], beta_v[c]);
            for ((xv, h_out), o) in x[r.clone()].iter().zip(&mut xhat[r.clone()]).zip(&mut out[r]) {
                let h = (xv.to_f64() - m) * k;
                *h_out = E::from_f64(h);
                *o = E::from_f64(ga * h + be);
            }
        });
        let op = Op::BatchNorm {
            input: xi,
            gamma: gi,
            beta: bi,
            layout,
            train: mode == Mode::Train,
            normalized: xhat,
            inv_std,
        };
        let var = self.push_values(&shape, out, op, &[xi, gi, bi]);
        Ok((var, moments))
    }

    /// Normalize each slice along the last axis, then apply an affine
    /// transform whose shape matches the trailing axes of the input
    /// (at least the last one).
    pub fn layernorm_lastdim(&mut self, input: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (xi, gi, bi) = (self.index(input)?, self.index(gamma)?, self.index(beta)?);
        let shape = self.node_value(xi).shape().to_vec();
        let affine = self.node_value(gi).shape().to_vec();
        if affine.len() > shape.len() || shape[shape.len() - affine.len()..] != affine[..] {
            return Err(invalid(format!(
                "layernorm affine shape {affine:?} must match trailing axes of {shape:?}"
            )));
        }
        if self.node_value(bi).shape() != affine.as_slice() {
            return Err(invalid("layernorm gamma and beta shapes differ"));
        }
        let dim = *shape.last().unwrap();
        if dim == 0 {
            return Err(invalid("layernorm needs D >= 1"));
        }
        let x = E::slice_to_f64(self.node_value(xi).data());
        let gamma_v = E::slice_to_f64(self.node_value(gi).data());
        let beta_v = E::slice_to_f64(self.node_value(bi).data());
        let a_len = gamma_v.len();
        let mut xhat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(x.len() / dim);
        for (s, row) in x.chunks_exact(dim).enumerate() {
            let mean = row.iter().sum::<f64>() / dim as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / dim as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            let a0 = (s * dim) % a_len;
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                out.push(gamma_v[a0 + j] * h + beta_v[a0 + j]);
            }
        }
        let op = Op::LayerNorm { input: xi, gamma: gi, beta: bi, normalized: super::store(xhat), inv_std };
        Ok(self.push_f64(&shape, out, op, &[xi, gi, bi]))
    }
}

pub(crate) fn batchnorm_backward<E: Element>(
    layout: &FeatureLayout,
    xhat: &[E],
    inv_std: &[f64],
    gamma: &[f64],
    g: &[f64],
    train: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let f = layout.features;
    let mut dgamma = vec![0.0; f];
    let mut dbeta = vec![0.0; f];
    layout.for_each_feature_row(|c, r| {
        dbeta[c] += lane_sum(&g[r.clone()], |v| v);
        dgamma[c] += lane_dot(&g[r.clone()], &xhat[r], |g, h| g * h.to_f64());
    });
    let mut dx = vec![0.0; g.len()];
    if train {
        let n = layout.count() as f64;
        layout.for_each_feature_row(|c, r| {
            let (k, db, dg) = (gamma[c] * inv_std[c] / n, dbeta[c], dgamma[c]);
            for ((d, &gv), h) in dx[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xhat[r]) {
                *d = k * (n * gv - db - h.to_f64() * dg);
            }
        });
    } else {
        layout.for_each_feature_row(|c, r| {
            let k = gamma[c] * inv_std[c];
            for (d, &gv) in dx[r.clone()].iter_mut().zip(&g[r]) {
                *d = k * gv;
            }
        });
    }
    (dx, dgamma, dbeta)
}

pub(crate) fn layernorm_backward(
    dim: usize,
    xhat: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    g: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let a_len = gamma.len();
    let mut dgamma = vec![0.0; a_len];
    let mut dbeta = vec![0.0; a_len];
    let mut dx = Vec::with_capacity(g.len());
    let d = dim as f64;
    for (s, (grow, hrow)) in g.chunks_exact(dim).zip(xhat.chunks_exact(dim)).enumerate() {
        let a0 = (s * dim) % a_len;
        let mut sum_gh = 0.0;
        let mut sum_ghx = 0.0;
        for j in 0..dim {
            let gh = grow[j] * gamma[a0 + j];
            sum_gh += gh;
            sum_ghx += gh * hrow[j];
            dgamma[a0 + j] += grow[j] * hrow[j];
            dbeta[a0 + j] += grow[j];
        }
        let k = inv_std[s] / d;
        for j in 0..dim {
            let gh = grow[j] * gamma[a0 + j];
            dx.push(k * (d * gh - sum_gh - hrow[j] * sum_ghx));
        }
    }
    (dx, dgamma, dbeta)
}
