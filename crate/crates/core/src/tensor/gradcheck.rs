//! Central finite-difference gradient checking in `f64`.
//!
//! The function under test maps a list of input tensors to an output of any
//! shape. The output is reduced to a scalar with fixed random weights, so
//! every output coordinate contributes to the compared gradient.

use rand::Rng;

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::{SeedStreams, Stream};

/// Perturbation used by [`grad_check`].
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest per-coordinate error, `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    pub worst_input: usize,
    pub worst_index: usize,
    pub coordinates: usize,
}

/// Compare the analytic gradient of `f` against central differences.
///
/// Inputs are drawn uniformly from `[-2, 2]` using `seed`. `f` must be a
/// deterministic function of its inputs (dropout closures reseed their own
/// generator on every call).
pub fn grad_check<F>(f: F, input_shapes: &[&[usize]], seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = SeedStreams::new(seed).rng(Stream::GradCheck, 0);
    let inputs: Vec<Tensor<f64>> = input_shapes
        .iter()
        .map(|shape| {
            let n: usize = shape.iter().product();
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            Tensor::new(shape, values)
        })
        .collect::<Result<_>>()?;
    grad_check_at(f, &inputs, seed)
}

/// [`grad_check`] at caller-supplied input values.
pub fn grad_check_at<F>(f: F, inputs: &[Tensor<f64>], seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = SeedStreams::new(seed).rng(Stream::GradCheck, 1);

    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let out_shape = tape.shape(out).to_vec();
    let weights: Vec<f64> = (0..tape.value(out).numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = tape.constant(Tensor::new(&out_shape, weights.clone())?);
    let weighted = tape.mul(out, w)?;
    let loss = tape.sum(weighted)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map(|g| g.into_data()).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).data().iter().zip(&weights).map(|(y, w)| y * w).sum())
    };

    let mut report = GradCheckReport { max_rel_error: 0.0, worst_input: 0, worst_index: 0, coordinates: 0 };
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let x0 = input.data()[j];
            probe[i].data_mut()[j] = x0 + FD_STEP;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = x0 - FD_STEP;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = x0;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[i][j];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.coordinates += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_input = i;
                report.worst_index = j;
            }
        }
    }
    Ok(report)
}
