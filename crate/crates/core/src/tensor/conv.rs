//! Grouped 1-D convolution and the dense linear layer.
//!
//! Every output element accumulates in `f64` in a fixed order: bias first,
//! then input channels of its group ascending, then kernel taps ascending.
//! The naive reference in [`super::reference`] uses the same order, so the
//! two agree exactly.

use super::tape::Op;
use super::{lane_dot, lane_sum, Element, Tape, Var};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_len: usize,
    pub out_len: usize,
    pub kernel: usize,
    pub groups: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], groups: usize, padding: usize) -> Result<Self> {
        let &[batch, in_channels, in_len] = input else {
            return Err(invalid(format!("conv1d input must be [B, Cin, T], got {input:?}")));
        };
        let &[out_channels, per_group, kernel] = weight else {
            return Err(invalid(format!("conv1d weight must be [Cout, Cin/G, K], got {weight:?}")));
        };
        if groups == 0 || in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(invalid(format!(
                "conv1d groups={groups} must divide Cin={in_channels} and Cout={out_channels}"
            )));
        }
        if per_group != in_channels / groups {
            return Err(invalid(format!(
                "conv1d weight has {per_group} input channels per group, expected Cin/G = {}",
                in_channels / groups
            )));
        }
        if kernel == 0 {
            return Err(invalid("conv1d kernel size must be >= 1"));
        }
        if in_len + 2 * padding < kernel {
            return Err(invalid(format!(
                "conv1d kernel {kernel} longer than padded input {}",
                in_len + 2 * padding
            )));
        }
        Ok(Self {
            batch,
            in_channels,
            out_channels,
            in_len,
            out_len: in_len + 2 * padding - kernel + 1,
            kernel,
            groups,
            padding,
        })
    }

    fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// Valid output range `[lo, hi)` for tap `k`, where `t + k - padding`
    /// stays inside the unpadded input.
    fn tap_range(&self, k: usize) -> (usize, usize) {
        let lo = self.padding.saturating_sub(k);
        let hi = (self.in_len + self.padding).saturating_sub(k).min(self.out_len);
        (lo, hi.max(lo))
    }
}

impl<E: Element> Tape<E> {
    /// Grouped cross-correlation with symmetric zero padding and stride 1.
    ///
    /// `input [B, Cin, T]`, `weight [Cout, Cin/G, K]`, `bias [Cout]` gives
    /// `[B, Cout, T - K + 1 + 2P]`.
    pub fn conv1d_grouped(&mut self, input: Var, weight: Var, bias: Var, groups: usize, padding: usize) -> Result<Var> {
        let (xi, wi, bi) = (self.index(input)?, self.index(weight)?, self.index(bias)?);
        let geom = ConvGeometry::new(self.node_value(xi).shape(), self.node_value(wi).shape(), groups, padding)?;
        if self.node_value(bi).shape() != [geom.out_channels] {
            return Err(invalid(format!(
                "conv1d bias must be [{}], got {:?}",
                geom.out_channels,
                self.node_value(bi).shape()
            )));
        }
        let w = E::slice_to_f64(self.node_value(wi).data());
        let b = E::slice_to_f64(self.node_value(bi).data());
        let out = conv1d_forward(&geom, self.node_value(xi).data(), &w, &b);
        let shape = [geom.batch, geom.out_channels, geom.out_len];
        let op = Op::Conv1d { input: xi, weight: wi, bias: bi, groups, padding };
        Ok(self.push_values(&shape, out, op, &[xi, wi, bi]))
    }

    /// `input [B, F] * weight[O, F]^T + bias[O]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.index(input)?, self.index(weight)?, self.index(bias)?);
        let (xs, ws, bs) = (
            self.node_value(xi).shape(),
            self.node_value(wi).shape(),
            self.node_value(bi).shape(),
        );
        let (&[batch, features], &[outputs, wf]) = (xs, ws) else {
            return Err(invalid(format!("linear expects [B, F] and [O, F], got {xs:?} and {ws:?}")));
        };
        if wf != features || bs != [outputs] {
            return Err(invalid(format!(
                "linear shape mismatch: input {xs:?}, weight {ws:?}, bias {bs:?}"
            )));
        }
        let x = E::slice_to_f64(self.node_value(xi).data());
        let w = E::slice_to_f64(self.node_value(wi).data());
        let b = E::slice_to_f64(self.node_value(bi).data());
        let mut out = Vec::with_capacity(batch * outputs);
        for row in x.chunks_exact(features) {
            for (o, wrow) in w.chunks_exact(features).enumerate() {
                let mut acc = b[o];
                for (xv, wv) in row.iter().zip(wrow) {
                    acc += xv * wv;
                }
                out.push(acc);
            }
        }
        let op = Op::Linear { input: xi, weight: wi, bias: bi };
        Ok(self.push_f64(&[batch, outputs], out, op, &[xi, wi, bi]))
    }
}

pub(crate) fn conv1d_forward<E: Element>(geom: &ConvGeometry, x: &[E], w: &[f64], b: &[f64]) -> Vec<E> {
    let (cig, cog, k_len) = (geom.in_per_group(), geom.out_per_group(), geom.kernel);
    let mut out = Vec::with_capacity(geom.batch * geom.out_channels * geom.out_len);
    let mut acc = vec![0.0f64; geom.out_len];
    for bidx in 0..geom.batch {
        for co in 0..geom.out_channels {
            acc.fill(b[co]);
            let base = (co / cog) * cig;
            for ci in 0..cig {
                let xrow = &x[(bidx * geom.in_channels + base + ci) * geom.in_len..][..geom.in_len];
                let wrow = &w[(co * cig + ci) * k_len..][..k_len];
                for (k, &wk) in wrow.iter().enumerate() {
                    let (lo, hi) = geom.tap_range(k);
                    if hi == lo {
                        continue;
                    }
                    let shift = lo + k - geom.padding;
                    for (a, &xv) in acc[lo..hi].iter_mut().zip(&xrow[shift..]) {
                        *a += wk * xv.to_f64();
                    }
                }
            }
            out.extend(acc.iter().map(|&v| E::from_f64(v)));
        }
    }
    out
}

pub(crate) fn conv1d_backward_input(geom: &ConvGeometry, w: &[f64], g: &[f64]) -> Vec<f64> {
    let (cig, cog, k_len) = (geom.in_per_group(), geom.out_per_group(), geom.kernel);
    let mut dx = vec![0.0; geom.batch * geom.in_channels * geom.in_len];
    for bidx in 0..geom.batch {
        for co in 0..geom.out_channels {
            let grow = &g[(bidx * geom.out_channels + co) * geom.out_len..][..geom.out_len];
            let base = (co / cog) * cig;
            for ci in 0..cig {
                let dxrow = &mut dx[(bidx * geom.in_channels + base + ci) * geom.in_len..][..geom.in_len];
                let wrow = &w[(co * cig + ci) * k_len..][..k_len];
                for (k, &wk) in wrow.iter().enumerate() {
                    let (lo, hi) = geom.tap_range(k);
                    if hi == lo {
                        continue;
                    }
                    let shift = lo + k - geom.padding;
                    for (d, &gv) in dxrow[shift..].iter_mut().zip(&grow[lo..hi]) {
                        *d += wk * gv;
                    }
                }
            }
        }
    }
    dx
}

pub(crate) fn conv1d_backward_weight<E: Element>(geom: &ConvGeometry, x: &[E], g: &[f64]) -> Vec<f64> {
    let (cig, cog, k_len) = (geom.in_per_group(), geom.out_per_group(), geom.kernel);
    let mut dw = vec![0.0; geom.out_channels * cig * k_len];
    for bidx in 0..geom.batch {
        for co in 0..geom.out_channels {
            let grow = &g[(bidx * geom.out_channels + co) * geom.out_len..][..geom.out_len];
            let base = (co / cog) * cig;
            for ci in 0..cig {
                let xrow = &x[(bidx * geom.in_channels + base + ci) * geom.in_len..][..geom.in_len];
                let dwrow = &mut dw[(co * cig + ci) * k_len..][..k_len];
                for (k, dwk) in dwrow.iter_mut().enumerate() {
                    let (lo, hi) = geom.tap_range(k);
                    if hi == lo {
                        continue;
                    }
                    let shift = lo + k - geom.padding;
                    *dwk += lane_dot(&grow[lo..hi], &xrow[shift..shift + hi - lo], |g, x| g * x.to_f64());
                }
            }
        }
    }
    dw
}

/// Bias gradient for outputs laid out as `[B, C, L]`.
pub(crate) fn bias_backward(g: &[f64], batch: usize, channels: usize, len: usize) -> Vec<f64> {
    let mut db = vec![0.0; channels];
    for bidx in 0..batch {
        for (c, d) in db.iter_mut().enumerate() {
            *d += lane_sum(&g[(bidx * channels + c) * len..][..len], |v| v);
        }
    }
    db
}

pub(crate) fn linear_backward_input(w: &[f64], g: &[f64], batch: usize, features: usize, outputs: usize) -> Vec<f64> {
    let mut dx = vec![0.0; batch * features];
    for (dxrow, grow) in dx.chunks_exact_mut(features).zip(g.chunks_exact(outputs)) {
        for (wrow, &gv) in w.chunks_exact(features).zip(grow) {
            for (d, &wv) in dxrow.iter_mut().zip(wrow) {
                *d += gv * wv;
            }
        }
    }
    dx
}

pub(crate) fn linear_backward_weight<E: Element>(x: &[E], g: &[f64], batch: usize, features: usize, outputs: usize) -> Vec<f64> {
    let mut dw = vec![0.0; outputs * features];
    for b in 0..batch {
        let xrow = &x[b * features..][..features];
        for (o, dwrow) in dw.chunks_exact_mut(features).enumerate() {
            let gv = g[b * outputs + o];
            if gv == 0.0 {
                continue;
            }
            for (d, &xv) in dwrow.iter_mut().zip(xrow) {
                *d += gv * xv.to_f64();
            }
        }
    }
    dw
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn conv(x: (&[usize], &[f64]), w: (&[usize], &[f64]), b: &[f64], groups: usize, padding: usize) -> Result<Tensor<f64>> {
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::from_f64(x.0, x.1).unwrap());
        let wv = tape.constant(Tensor::from_f64(w.0, w.1).unwrap());
        let bv = tape.constant(Tensor::from_f64(&[b.len()], b).unwrap());
        let y = tape.conv1d_grouped(xv, wv, bv, groups, padding)?;
        Ok(tape.value(y).clone())
    }

    #[test]
    fn difference_kernel() {
        let y = conv((&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]), (&[1, 1, 3], &[1.0, 0.0, -1.0]), &[0.0], 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2]);
        assert_eq!(y.data(), &[-2.0, -2.0]);
    }

    #[test]
    fn identity_kernel() {
        let xs = [0.5, -1.0, 2.0, 7.0, 3.0, 1.0];
        let y = conv((&[1, 2, 3], &xs), (&[2, 1, 1], &[1.0, 1.0]), &[0.0, 0.0], 2, 0).unwrap();
        assert_eq!(y.data(), &xs);
    }

    #[test]
    fn groups_do_not_mix() {
        let y = conv(
            (&[1, 2, 3], &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]),
            (&[2, 1, 2], &[1.0, 1.0, 1.0, 1.0]),
            &[0.0, 0.0],
            2,
            0,
        )
        .unwrap();
        assert_eq!(y.data(), &[2.0, 2.0, 4.0, 4.0]);
    }

    #[test]
    fn padding_preserves_length() {
        let y = conv((&[1, 1, 5], &[1.0; 5]), (&[1, 1, 3], &[1.0; 3]), &[0.5], 1, 1).unwrap();
        assert_eq!(y.data(), &[2.5, 3.5, 3.5, 3.5, 2.5]);
    }

    #[test]
    fn shape_errors() {
        // Cin = 3 not divisible by groups = 2
        assert!(conv((&[1, 3, 4], &[0.0; 12]), (&[2, 1, 1], &[0.0; 2]), &[0.0; 2], 2, 0).is_err());
        // wrong per-group input count
        assert!(conv((&[1, 2, 4], &[0.0; 8]), (&[2, 2, 1], &[0.0; 4]), &[0.0; 2], 2, 0).is_err());
        // kernel longer than input
        assert!(conv((&[1, 1, 2], &[0.0; 2]), (&[1, 1, 3], &[0.0; 3]), &[0.0], 1, 0).is_err());
        // bias length
        assert!(conv((&[1, 1, 4], &[0.0; 4]), (&[1, 1, 1], &[0.0]), &[0.0, 0.0], 1, 0).is_err());
    }

    #[test]
    fn linear_examples() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[1, 2], &[1.0, 2.0]).unwrap());
        let w = tape.constant(Tensor::from_f64(&[1, 2], &[3.0, 4.0]).unwrap());
        let b = tape.constant(Tensor::from_f64(&[1], &[5.0]).unwrap());
        let y = tape.linear(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[16.0]);

        let x = tape.constant(Tensor::from_f64(&[2, 2], &[1.0, 2.0, -3.0, 0.5]).unwrap());
        let eye = tape.constant(Tensor::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap());
        let zero_b = tape.constant(Tensor::zeros(&[2]));
        let y = tape.linear(x, eye, zero_b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, -3.0, 0.5]);

        let zero_w = tape.constant(Tensor::zeros(&[3, 2]));
        let b3 = tape.constant(Tensor::from_f64(&[3], &[1.0, -2.0, 0.25]).unwrap());
        let y = tape.linear(x, zero_w, b3).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, -2.0, 0.25, 1.0, -2.0, 0.25]);

        assert!(tape.linear(x, b3, zero_b).is_err());
    }
}
