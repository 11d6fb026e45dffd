//! Reshaping, elementwise arithmetic, and time-axis operations.

use super::tape::Op;
use super::{lane_sum, Element, Tape, Tensor, Var};
use crate::error::{invalid, Result};

impl<E: Element> Tape<E> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let xi = self.index(x)?;
        let value = self.node_value(xi).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape { input: xi }, &[xi]))
    }

    /// Collapse every axis after the first: `[B, ...] -> [B, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let rest: usize = shape[1..].iter().product();
        self.reshape(x, &[shape[0], rest])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = self.same_shape(a, b, "add")?;
        let values = self.zip_f64(ai, bi, |x, y| x + y);
        let shape = self.node_value(ai).shape().to_vec();
        Ok(self.push_values(&shape, values, Op::Add { a: ai, b: bi }, &[ai, bi]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = self.same_shape(a, b, "sub")?;
        let values = self.zip_f64(ai, bi, |x, y| x - y);
        let shape = self.node_value(ai).shape().to_vec();
        Ok(self.push_values(&shape, values, Op::Sub { a: ai, b: bi }, &[ai, bi]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = self.same_shape(a, b, "mul")?;
        let values = self.zip_f64(ai, bi, |x, y| x * y);
        let shape = self.node_value(ai).shape().to_vec();
        Ok(self.push_values(&shape, values, Op::Mul { a: ai, b: bi }, &[ai, bi]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let xi = self.index(x)?;
        let v = self.node_value(xi);
        let shape = v.shape().to_vec();
        let values = v.data().iter().map(|e| E::from_f64(e.to_f64() * factor)).collect();
        Ok(self.push_values(&shape, values, Op::Scale { input: xi, factor }, &[xi]))
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.index(x)?;
        let total = self.node_value(xi).data().iter().map(|e| e.to_f64()).sum();
        Ok(self.push_f64(&[1], vec![total], Op::Sum { input: xi }, &[xi]))
    }

    /// `out[b, c, t] = x[b, c, t + step] - x[b, c, t]` for a `[B, C, T]` input.
    pub fn time_diff(&mut self, x: Var, step: usize) -> Result<Var> {
        let xi = self.index(x)?;
        let v = self.node_value(xi);
        let &[batch, channels, len] = v.shape() else {
            return Err(invalid(format!("time_diff expects [B, C, T], got {:?}", v.shape())));
        };
        if step == 0 || len <= step {
            return Err(invalid(format!(
                "temporal step {step} needs 1 <= step < T, got T = {len}"
            )));
        }
        let out_len = len - step;
        let mut values = Vec::with_capacity(batch * channels * out_len);
        for row in v.data().chunks_exact(len) {
            values.extend((0..out_len).map(|t| E::from_f64(row[t + step].to_f64() - row[t].to_f64())));
        }
        Ok(self.push_values(&[batch, channels, out_len], values, Op::TimeDiff { input: xi, step }, &[xi]))
    }

    /// Concatenate `[B, C1, T]` and `[B, C2, T]` along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.index(a)?, self.index(b)?);
        let (va, vb) = (self.node_value(ai), self.node_value(bi));
        let (&[ba, c1, ta], &[bb, c2, tb]) = (va.shape(), vb.shape()) else {
            return Err(invalid(format!(
                "concat_channels expects two [B, C, T] tensors, got {:?} and {:?}",
                va.shape(),
                vb.shape()
            )));
        };
        if ba != bb || ta != tb {
            return Err(invalid(format!(
                "concat_channels batch/time mismatch: {:?} vs {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let mut data = Vec::with_capacity(va.numel() + vb.numel());
        for b in 0..ba {
            data.extend_from_slice(&va.data()[b * c1 * ta..(b + 1) * c1 * ta]);
            data.extend_from_slice(&vb.data()[b * c2 * ta..(b + 1) * c2 * ta]);
        }
        let value = Tensor::new(&[ba, c1 + c2, ta], data)?;
        Ok(self.push(value, Op::Concat { a: ai, b: bi }, &[ai, bi]))
    }

    /// Mean over the last axis, dropping it.
    pub fn avg_pool_time(&mut self, x: Var) -> Result<Var> {
        let xi = self.index(x)?;
        let v = self.node_value(xi);
        let len = *v.shape().last().unwrap();
        if len == 0 {
            return Err(invalid("avg_pool_time needs T >= 1"));
        }
        let out_shape = if v.rank() == 1 { vec![1] } else { v.shape()[..v.rank() - 1].to_vec() };
        let values = v
            .data()
            .chunks_exact(len)
            .map(|row| lane_sum(row, |e| e.to_f64()) / len as f64)
            .collect();
        Ok(self.push_f64(&out_shape, values, Op::AvgPoolTime { input: xi }, &[xi]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let (ai, bi) = (self.index(a)?, self.index(b)?);
        let (sa, sb) = (self.node_value(ai).shape(), self.node_value(bi).shape());
        if sa != sb {
            return Err(invalid(format!("{what}: shape mismatch {sa:?} vs {sb:?}")));
        }
        Ok((ai, bi))
    }

    fn zip_f64(&self, ai: usize, bi: usize, f: impl Fn(f64, f64) -> f64) -> Vec<E> {
        let (va, vb) = (self.node_value(ai).data(), self.node_value(bi).data());
        va.iter().zip(vb).map(|(x, y)| E::from_f64(f(x.to_f64(), y.to_f64()))).collect()
    }
}

pub(crate) fn time_diff_backward(input_shape: &[usize], step: usize, g: &[f64]) -> Vec<f64> {
    let len = input_shape[2];
    let out_len = len - step;
    let mut dx = vec![0.0; input_shape.iter().product()];
    for (row, grow) in dx.chunks_exact_mut(len).zip(g.chunks_exact(out_len)) {
        for (t, &gv) in grow.iter().enumerate() {
            row[t + step] += gv;
            row[t] -= gv;
        }
    }
    dx
}

pub(crate) fn concat_backward(a: &[usize], b: &[usize], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (batch, c1, len) = (a[0], a[1], a[2]);
    let c2 = b[1];
    let mut ga = Vec::with_capacity(batch * c1 * len);
    let mut gb = Vec::with_capacity(batch * c2 * len);
    for chunk in g.chunks_exact((c1 + c2) * len) {
        ga.extend_from_slice(&chunk[..c1 * len]);
        gb.extend_from_slice(&chunk[c1 * len..]);
    }
    (ga, gb)
}

pub(crate) fn avg_pool_backward(input_shape: &[usize], g: &[f64]) -> Vec<f64> {
    let len = *input_shape.last().unwrap();
    let inv = 1.0 / len as f64;
    g.iter().flat_map(|&gv| std::iter::repeat_n(gv * inv, len)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn concat_places_channels_in_order() {
        let mut tape = Tape::<f64>::new();
        let a = tape.leaf(t(&[1, 1, 2], &[1.0, 2.0]), true);
        let b = tape.leaf(t(&[1, 1, 2], &[3.0, 4.0]), true);
        let c = tape.concat_channels(a, b).unwrap();
        assert_eq!(tape.shape(c), &[1, 2, 2]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

        let s = tape.sum(c).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(tape.grad(b).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn concat_then_slice_recovers_inputs() {
        let mut tape = Tape::<f64>::new();
        let av: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let bv: Vec<f64> = (0..18).map(|i| -(i as f64)).collect();
        let a = tape.constant(t(&[2, 2, 3], &av));
        let b = tape.constant(t(&[2, 3, 3], &bv));
        let c = tape.concat_channels(a, b).unwrap();
        let (ga, gb) = concat_backward(&[2, 2, 3], &[2, 3, 3], &tape.value(c).to_f64_vec());
        assert_eq!(ga, av);
        assert_eq!(gb, bv);
    }

    #[test]
    fn concat_rejects_mismatch() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[1, 1, 2]));
        let b = tape.constant(Tensor::zeros(&[1, 1, 3]));
        assert!(tape.concat_channels(a, b).is_err());
        let c = tape.constant(Tensor::zeros(&[2, 1, 2]));
        assert!(tape.concat_channels(a, c).is_err());
    }

    #[test]
    fn avg_pool_cases() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let p = tape.avg_pool_time(x).unwrap();
        assert_eq!(tape.shape(p), &[1, 1, 1]);
        assert_eq!(tape.value(p).data(), &[2.5]);

        let y = tape.constant(t(&[1, 2, 1], &[7.0, -3.0]));
        let q = tape.avg_pool_time(y).unwrap();
        assert_eq!(tape.value(q).data(), &[7.0, -3.0]);

        let z = tape.constant(Tensor::filled(&[2, 3, 5], 1.25));
        let r = tape.avg_pool_time(z).unwrap();
        assert!(tape.value(r).data().iter().all(|&v| v == 1.25));
    }

    #[test]
    fn time_diff_values_and_errors() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1, 1, 4], &[0.0, 1.0, 4.0, 9.0]));
        let d = tape.time_diff(x, 2).unwrap();
        assert_eq!(tape.value(d).data(), &[4.0, 8.0]);
        assert!(tape.time_diff(x, 4).is_err());
        assert!(tape.time_diff(x, 0).is_err());
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[1.0, -3.0]), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let half = tape.scale(s, 0.5).unwrap();
        tape.backward(half).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, -3.0]);
    }
}
