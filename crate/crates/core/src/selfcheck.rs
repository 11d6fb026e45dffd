//! Built-in verification suite behind the `selfcheck` command: gradient
//! checks for every differentiable op and the tiny end-to-end model, the
//! convolution reference comparison, delta identities and fold invariants.

use std::collections::HashSet;

use rand::Rng;

use crate::data::{make_inter_folds, make_intra_folds, EegDataset, EegSample};
use crate::error::Result;
use crate::model::{bidirectional_delta, forward_bound, ModelConfig, ModelParams};
use crate::rng::{SeedStreams, Stream};
use crate::tensor::gradcheck::grad_check;
use crate::tensor::reference::conv1d_naive;
use crate::tensor::{Mode, Tape, Tensor, Var};

/// Deliberate defects used to show that the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// GELU forward uses a cubic coefficient of 0.1 while its backward
    /// keeps the true derivative.
    GeluConstant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Worst observed error, or the number of violations for counting checks.
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelfCheckReport {
    pub checks: Vec<Check>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(Check { name: name.into(), value, threshold, passed: value <= threshold });
    }
}

type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

/// `(name, input shapes, threshold, op)` for every differentiable op.
fn gradient_cases(mutation: Option<Mutation>) -> Vec<(&'static str, Vec<Vec<usize>>, f64, OpFn)> {
    let gelu_cubic = match mutation {
        Some(Mutation::GeluConstant) => 0.1,
        None => crate::tensor::GELU_CUBIC,
    };
    vec![
        ("linear", vec![vec![2, 3], vec![4, 3], vec![4]], 1e-7, Box::new(|t, v| t.linear(v[0], v[1], v[2]))),
        (
            "conv1d_grouped k=7 G=4",
            vec![vec![2, 8, 12], vec![8, 2, 7], vec![8]],
            1e-6,
            Box::new(|t, v| t.conv1d_grouped(v[0], v[1], v[2], 4, 3)),
        ),
        (
            "batchnorm1d train",
            vec![vec![3, 4, 5], vec![4], vec![4]],
            1e-5,
            Box::new(|t, v| Ok(t.batchnorm1d(v[0], v[1], v[2], &[0.0; 4], &[1.0; 4], Mode::Train)?.0)),
        ),
        (
            "batchnorm1d eval",
            vec![vec![3, 4], vec![4], vec![4]],
            1e-4,
            Box::new(|t, v| Ok(t.batchnorm1d(v[0], v[1], v[2], &[0.3, -0.2, 0.0, 1.0], &[0.5, 2.0, 1.0, 0.1], Mode::Eval)?.0)),
        ),
        (
            "layernorm_lastdim",
            vec![vec![2, 3, 4], vec![3, 4], vec![3, 4]],
            1e-4,
            Box::new(|t, v| t.layernorm_lastdim(v[0], v[1], v[2])),
        ),
        ("relu", vec![vec![3, 7]], 1e-4, Box::new(|t, v| t.relu(v[0]))),
        ("leaky_relu", vec![vec![3, 7]], 1e-4, Box::new(|t, v| t.leaky_relu(v[0], 0.01))),
        ("gelu", vec![vec![3, 7]], 1e-4, Box::new(move |t, v| t.gelu_with_forward_cubic(v[0], gelu_cubic))),
        ("softmax_lastdim", vec![vec![3, 4]], 1e-4, Box::new(|t, v| t.softmax_lastdim(v[0]))),
        ("cross_entropy_loss", vec![vec![4, 3]], 1e-4, Box::new(|t, v| t.cross_entropy_loss(v[0], &[0, 2, 1, 2]))),
        (
            "dropout",
            vec![vec![4, 6]],
            1e-4,
            Box::new(|t, v| {
                let mut rng = SeedStreams::new(5).rng(Stream::Dropout, 0);
                t.dropout(v[0], 0.3, Mode::Train, &mut rng)
            }),
        ),
        ("time_diff", vec![vec![2, 3, 9]], 1e-4, Box::new(|t, v| t.time_diff(v[0], 2))),
        ("concat_channels", vec![vec![2, 1, 4], vec![2, 3, 4]], 1e-4, Box::new(|t, v| t.concat_channels(v[0], v[1]))),
        ("avg_pool_time", vec![vec![2, 3, 2, 5]], 1e-4, Box::new(|t, v| t.avg_pool_time(v[0]))),
        ("bidirectional_delta", vec![vec![2, 3, 10]], 1e-4, Box::new(|t, v| bidirectional_delta(t, v[0], 1))),
        (
            "elementwise (add, sub, mul, scale, sum)",
            vec![vec![2, 5], vec![2, 5]],
            1e-4,
            Box::new(|t, v| {
                let a = t.add(v[0], v[1])?;
                let s = t.sub(a, v[1])?;
                let m = t.mul(s, v[1])?;
                let k = t.scale(m, -1.5)?;
                let r = t.reshape(k, &[10])?;
                t.sum(r)
            }),
        ),
    ]
}

/// The tiny configuration used for end-to-end gradient checks.
pub fn tiny_model_config() -> ModelConfig {
    let mut c = ModelConfig::new(2, 16, 3);
    c.hidden_depth = 2;
    c.mlp_hidden = 8;
    c
}

/// Central-difference check of cross-entropy with respect to the input and
/// every tensor of a tiny model, in train mode with dropout masks fixed by
/// `seed`.
pub fn tiny_model_grad_error(config: &ModelConfig, seed: u64) -> Result<f64> {
    let params = ModelParams::<f64>::init(config, seed)?;
    let batch = 4;
    let labels: Vec<usize> = (0..batch).map(|i| i % config.n_classes).collect();
    let mut shapes = vec![vec![batch, config.n_channels, config.n_timesteps]];
    shapes.extend(params.tensors().iter().map(|t| t.value.shape().to_vec()));
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let report = grad_check(
        |tape, vars| {
            let mut rng = SeedStreams::new(seed).rng(Stream::Dropout, 0);
            let out = forward_bound(tape, &params, &vars[1..], vars[0], Mode::Train, &mut rng, false)?;
            tape.cross_entropy_loss(out.logits, &labels)
        },
        &shape_refs,
        seed,
    )?;
    Ok(report.max_rel_error)
}

/// Largest absolute difference between the fast convolution and the naive
/// reference over `cases` random geometries with every extent at most 8.
pub fn conv_oracle_mismatch(cases: usize, seed: u64) -> Result<f64> {
    let mut rng = SeedStreams::new(seed).rng(Stream::GradCheck, 100);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let b = rng.random_range(1..=8);
        let cin = rng.random_range(1..=8);
        let groups_options: Vec<usize> = (1..=cin).filter(|g| cin % g == 0).collect();
        let g = groups_options[rng.random_range(0..groups_options.len())];
        let cout = g * rng.random_range(1..=8 / g);
        let t = rng.random_range(1..=8);
        let k = rng.random_range(1..=8);
        let p = rng.random_range(0..=k / 2 + 1);
        if t + 2 * p < k {
            continue;
        }
        let x: Vec<f64> = (0..b * cin * t).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..cout * (cin / g) * k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let bias: Vec<f64> = (0..cout).map(|_| rng.random_range(-2.0..2.0)).collect();
        let expected = conv1d_naive(&x, [b, cin, t], &w, [cout, cin / g, k], &bias, g, p);
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::new(&[b, cin, t], x)?);
        let wv = tape.constant(Tensor::new(&[cout, cin / g, k], w)?);
        let bv = tape.constant(Tensor::new(&[cout], bias)?);
        let y = tape.conv1d_grouped(xv, wv, bv, g, p)?;
        for (a, e) in tape.value(y).data().iter().zip(&expected) {
            worst = worst.max((a - e).abs());
        }
    }
    Ok(worst)
}

/// Violations of the delta identities on random input: `pos * neg == 0`,
/// `pos - neg == d`, and bit-identical output under constant offsets.
pub fn delta_violations(seed: u64) -> Result<usize> {
    let mut rng = SeedStreams::new(seed).rng(Stream::GradCheck, 200);
    let (b, c, t, s) = (2, 3, 40, 2);
    // A 1/64 grid inside [1, 1.75) keeps x + c within one binade for every
    // offset below, so the offset rounds identically at every position.
    let x: Vec<f64> = (0..b * c * t).map(|_| 1.0 + rng.random_range(0..48) as f64 / 64.0).collect();
    let run = |values: &[f64]| -> Result<Vec<f64>> {
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::new(&[b, c, t], values.to_vec())?);
        let y = bidirectional_delta(&mut tape, xv, s)?;
        Ok(tape.value(y).data().to_vec())
    };
    let y = run(&x)?;
    let half = c * (t - s);
    let mut bad = 0;
    for bi in 0..b {
        for ci in 0..c {
            for ti in 0..t - s {
                let pos = y[bi * 2 * half + ci * (t - s) + ti];
                let neg = y[bi * 2 * half + half + ci * (t - s) + ti];
                let d = x[(bi * c + ci) * t + ti + s] - x[(bi * c + ci) * t + ti];
                bad += usize::from(pos * neg != 0.0) + usize::from(pos - neg != d);
            }
        }
    }
    for offset in [-5.0, 0.1, 100.0] {
        let shifted: Vec<f64> = x.iter().map(|v| v + offset).collect();
        bad += run(&shifted)?.iter().zip(&y).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    }
    Ok(bad)
}

fn random_dataset(rng: &mut impl Rng) -> EegDataset {
    let n_subjects = rng.random_range(5..=12u32);
    let n = rng.random_range(10..=300);
    let samples = (0..n)
        .map(|i| EegSample { subject_id: rng.random_range(0..n_subjects), label: (i % 2) as u32, data: vec![0.0] })
        .collect();
    EegDataset { name: "random".into(), n_channels: 1, n_timesteps: 1, n_classes: 2, sampling_rate_hz: 1.0, samples }
}

/// Count fold-plan invariant violations over `datasets` random datasets:
/// intra sizes within one of 60/20/20, exactly-once test coverage and
/// disjoint roles; inter plans with no subject on both sides.
pub fn fold_violations(datasets: usize, seed: u64) -> Result<usize> {
    let mut rng = SeedStreams::new(seed).rng(Stream::GradCheck, 300);
    let mut bad = 0;
    for i in 0..datasets {
        let ds = random_dataset(&mut rng);
        let n = ds.len();
        let plan = make_intra_folds(&ds, 5, seed + i as u64)?;
        let mut test_count = vec![0; n];
        for f in &plan.folds {
            let within = |len: usize, share: f64| (len as f64 - share * n as f64).abs() <= 1.0;
            bad += usize::from(!within(f.train.len(), 0.6) || !within(f.val.len(), 0.2) || !within(f.test.len(), 0.2));
            let all: HashSet<usize> = f.train.iter().chain(&f.val).chain(&f.test).copied().collect();
            bad += usize::from(all.len() != n);
            f.test.iter().for_each(|&j| test_count[j] += 1);
        }
        bad += test_count.iter().filter(|&&c| c != 1).count();

        if ds.subjects().len() >= 5 {
            let plan = make_inter_folds(&ds, 5, seed + i as u64)?;
            for f in &plan.folds {
                let subj = |idx: &[usize]| idx.iter().map(|&j| ds.samples[j].subject_id).collect::<HashSet<_>>();
                let seen: HashSet<u32> = subj(&f.train).union(&subj(&f.val)).copied().collect();
                bad += usize::from(!seen.is_disjoint(&subj(&f.test)));
                bad += usize::from(f.train.len() + f.val.len() + f.test.len() != n);
            }
        }
    }
    Ok(bad)
}

/// Run the whole suite. With a mutation applied the report is expected to
/// fail.
pub fn run_selfcheck(seed: u64, mutation: Option<Mutation>) -> Result<SelfCheckReport> {
    let mut report = SelfCheckReport::default();
    for (name, shapes, threshold, op) in gradient_cases(mutation) {
        let refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
        let r = grad_check(&op, &refs, seed)?;
        report.push(&format!("grad {name}"), r.max_rel_error, threshold);
    }
    report.push("grad tiny model end-to-end", tiny_model_grad_error(&tiny_model_config(), seed)?, 1e-4);
    report.push("conv1d_grouped vs naive reference", conv_oracle_mismatch(200, seed)?, 0.0);
    report.push("delta identities", delta_violations(seed)? as f64, 0.0);
    report.push("fold invariants", fold_violations(50, seed)? as f64, 0.0);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_passes_and_mutant_fails() {
        let ok = run_selfcheck(2026, None).unwrap();
        assert!(ok.passed(), "{:#?}", ok.checks.iter().filter(|c| !c.passed).collect::<Vec<_>>());
        let bad = run_selfcheck(2026, Some(Mutation::GeluConstant)).unwrap();
        assert!(!bad.passed());
        let failing: Vec<&str> = bad.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert_eq!(failing, vec!["grad gelu"]);
    }
}
