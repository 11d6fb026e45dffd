use super::activation::softmax_row;
use super::tape::Op;
use super::{Element, Tape, Var};
use crate::error::{invalid, Result};

impl<E: Element> Tape<E> {
    /// Mean softmax cross-entropy of `[B, N]` logits against class indices.
    pub fn cross_entropy_loss(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let li = self.index(logits)?;
        let v = self.node_value(li);
        let &[batch, classes] = v.shape() else {
            return Err(invalid(format!("cross entropy expects [B, N] logits, got {:?}", v.shape())));
        };
        if labels.len() != batch {
            return Err(invalid(format!("{} labels for a batch of {batch}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(invalid(format!("label {bad} out of range for {classes} classes")));
        }
        let x = E::slice_to_f64(v.data());
        let mut probs = Vec::with_capacity(x.len());
        let mut total = 0.0;
        for (row, &label) in x.chunks_exact(classes).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
            softmax_row(row, &mut probs);
        }
        let loss = total / batch as f64;
        let op = Op::CrossEntropy { logits: li, labels: labels.to_vec(), probs };
        Ok(self.push_f64(&[1], vec![loss], op, &[li]))
    }
}

pub(crate) fn cross_entropy_backward(probs: &[f64], labels: &[usize], g: f64) -> Vec<f64> {
    let batch = labels.len();
    let classes = probs.len() / batch;
    let scale = g / batch as f64;
    let mut dx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
    for (b, &label) in labels.iter().enumerate() {
        dx[b * classes + label] -= scale;
    }
    dx
}
