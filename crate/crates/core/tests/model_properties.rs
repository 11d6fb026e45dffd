use deltagate::data::{generate_synthetic, Preset};
use deltagate::model::{
    bidirectional_delta, decode_params, encode_params, forward, load_params_for, param_breakdown, param_count,
    predict_logits, save_params, ModelConfig, ModelParams, PointwiseGroups, Stage, Variant,
};
use deltagate::rng::{SeedStreams, Stream};
use deltagate::tensor::{Mode, Tape, Tensor};
use rand::Rng;

fn trace_shapes(config: &ModelConfig, batch: usize) -> Vec<(Stage, Vec<usize>)> {
    let params = ModelParams::<f32>::init(config, 1).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[batch, config.n_channels, config.n_timesteps]));
    let mut rng = SeedStreams::new(0).rng(Stream::Dropout, 0);
    let out = forward(&mut tape, &params, x, Mode::Eval, &mut rng, true).unwrap();
    out.trace.unwrap().shapes(&tape)
}

fn shape_of(shapes: &[(Stage, Vec<usize>)], stage: Stage) -> Vec<usize> {
    shapes.iter().find(|(s, _)| *s == stage).map(|(_, v)| v.clone()).unwrap_or_else(|| panic!("no {stage:?}"))
}

#[test]
fn seedvig_shape_ledger() {
    for depth in [1, 4, 8] {
        let mut c = ModelConfig::new(17, 1600, 3);
        c.hidden_depth = depth;
        let s = trace_shapes(&c, 2);
        assert_eq!(shape_of(&s, Stage::Input), [2, 17, 1600]);
        assert_eq!(shape_of(&s, Stage::Delta), [2, 34, 1599]);
        assert_eq!(shape_of(&s, Stage::Projection), [2, 34 * depth, 1599]);
        assert_eq!(shape_of(&s, Stage::Block(0)), [2, 34 * depth, 1599]);
        assert_eq!(shape_of(&s, Stage::Block(1)), [2, 34 * depth, 1599]);
        assert_eq!(shape_of(&s, Stage::Pooled), [2, 34, depth]);
        assert_eq!(shape_of(&s, Stage::Embedding), [2, 34 * depth]);
        assert_eq!(shape_of(&s, Stage::Logits), [2, 3]);
    }
}

#[test]
fn sadt_shape_ledger() {
    let mut c = ModelConfig::new(30, 384, 2);
    c.hidden_depth = 2;
    let s = trace_shapes(&c, 3);
    assert_eq!(shape_of(&s, Stage::Input), [3, 30, 384]);
    assert_eq!(shape_of(&s, Stage::Delta), [3, 60, 383]);
    assert_eq!(shape_of(&s, Stage::Projection), [3, 120, 383]);
    assert_eq!(shape_of(&s, Stage::Pooled), [3, 60, 2]);
    assert_eq!(shape_of(&s, Stage::Logits), [3, 2]);
}

#[test]
fn ablation_variants_skip_stages() {
    let base = ModelConfig::new(5, 40, 3);
    for (variant, embedding) in [(Variant::MlpOnly, 5 * 40), (Variant::DeltaMlp, 10 * 39), (Variant::GtcMlp, 5 * 8), (Variant::Full, 10 * 8)] {
        let c = ModelConfig { variant, ..base.clone() };
        let s = trace_shapes(&c, 2);
        assert_eq!(s.iter().any(|(st, _)| *st == Stage::Delta), variant.uses_delta());
        assert_eq!(s.iter().any(|(st, _)| *st == Stage::Pooled), variant.uses_gtc());
        assert_eq!(shape_of(&s, Stage::Embedding), [2, embedding]);
        assert_eq!(c.embedding_dim(), embedding);
    }
}

#[test]
fn delta_stage_has_no_parameters_and_counts_match_tensors() {
    let mut configs = vec![ModelConfig::new(17, 1600, 3), ModelConfig::new(30, 384, 2)];
    for v in Variant::ALL {
        let mut c = ModelConfig::new(4, 50, 3);
        (c.variant, c.kernel_size, c.delta_step, c.pointwise_groups) = (v, 5, 2, PointwiseGroups::Full);
        configs.push(c);
    }
    for c in configs {
        assert_eq!(param_breakdown(&c).delta, 0);
        let p = ModelParams::<f32>::init(&c, 3).unwrap();
        assert_eq!(p.learnable_count(), param_count(&c), "{c:?}");
        assert!(p.tensors().iter().all(|t| !t.name.contains("delta")));
    }
    let with = ModelConfig::new(4, 50, 3);
    let without = ModelConfig { variant: Variant::GtcMlp, ..with.clone() };
    // Dropping the delta stage only halves the channel count downstream.
    let halved = ModelConfig { n_channels: 8, n_timesteps: 49, variant: Variant::GtcMlp, ..with.clone() };
    assert_eq!(param_count(&with), param_count(&halved));
    assert!(param_count(&without) < param_count(&with));
}

#[test]
fn delta_identities_on_random_input() {
    let mut rng = SeedStreams::new(21).rng(Stream::GradCheck, 0);
    for step in 1..=3 {
        let (b, c, t) = (3, 4, 25);
        let x: Vec<f64> = (0..b * c * t).map(|_| rng.random_range(-50.0..50.0)).collect();
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::new(&[b, c, t], x.clone()).unwrap());
        let y = bidirectional_delta(&mut tape, xv, step).unwrap();
        assert_eq!(tape.shape(y), [b, 2 * c, t - step]);
        let y = tape.value(y).data();
        let l = t - step;
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..l {
                    let pos = y[(bi * 2 * c + ci) * l + ti];
                    let neg = y[(bi * 2 * c + c + ci) * l + ti];
                    let d = x[(bi * c + ci) * t + ti + step] - x[(bi * c + ci) * t + ti];
                    assert_eq!(pos * neg, 0.0);
                    assert!(pos >= 0.0 && neg >= 0.0);
                    assert_eq!(pos - neg, d);
                }
            }
        }
    }
}

/// Inputs on a 1/64 grid inside [1, 1.75): adding any of the offsets stays
/// inside one binade, so the shifted differences are exact in f32.
fn dyadic_batch(rng: &mut impl Rng, shape: [usize; 3]) -> Vec<f32> {
    (0..shape.iter().product::<usize>()).map(|_| 1.0 + rng.random_range(0..48) as f32 / 64.0).collect()
}

#[test]
fn whole_model_ignores_constant_offsets() {
    let mut rng = SeedStreams::new(5).rng(Stream::GradCheck, 0);
    let mut c = ModelConfig::new(3, 60, 3);
    (c.hidden_depth, c.mlp_hidden) = (3, 16);
    let params = ModelParams::<f32>::init(&c, 8).unwrap();
    let x = dyadic_batch(&mut rng, [4, 3, 60]);
    let base = predict_logits(&params, &Tensor::new(&[4, 3, 60], x.clone()).unwrap()).unwrap();
    for offset in [-5.0f32, 0.1, 100.0] {
        let shifted: Vec<f32> = x.iter().map(|v| v + offset).collect();
        let out = predict_logits(&params, &Tensor::new(&[4, 3, 60], shifted).unwrap()).unwrap();
        let same = out.data().iter().zip(base.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "offset {offset}");
    }
}

#[test]
fn forward_rejects_wrong_input_shape() {
    let c = ModelConfig::new(3, 20, 2);
    let params = ModelParams::<f32>::init(&c, 1).unwrap();
    assert!(predict_logits(&params, &Tensor::zeros(&[2, 4, 20])).is_err());
    assert!(predict_logits(&params, &Tensor::zeros(&[2, 3, 21])).is_err());
}

#[test]
fn init_is_seeded() {
    let c = ModelConfig::new(3, 20, 2);
    let a = ModelParams::<f32>::init(&c, 1).unwrap();
    assert_eq!(a.tensors(), ModelParams::<f32>::init(&c, 1).unwrap().tensors());
    assert_ne!(a.tensors(), ModelParams::<f32>::init(&c, 2).unwrap().tensors());
}

#[test]
fn parameter_file_round_trip_and_fingerprint() {
    let mut c = ModelConfig::new(4, 32, 3);
    c.hidden_depth = 2;
    let p = ModelParams::<f32>::init(&c, 4).unwrap();
    let bytes = encode_params(&p);
    let q = decode_params(&bytes).unwrap();
    assert_eq!(q.config(), &c);
    assert_eq!(q.tensors(), p.tensors());
    assert_eq!(encode_params(&q), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.dgnw");
    save_params(&p, &path).unwrap();
    assert!(load_params_for(&path, &c).is_ok());
    let other = ModelConfig { kernel_size: 5, ..c.clone() };
    assert!(load_params_for(&path, &other).is_err());
    let mut truncated = bytes.clone();
    truncated.truncate(bytes.len() - 3);
    assert!(decode_params(&truncated).is_err());
    assert!(decode_params(b"nope").is_err());
}

#[test]
fn eval_mode_is_batch_independent() {
    let mut spec = Preset::SadtLike.spec(3);
    (spec.n_subjects, spec.samples_per_subject) = (1, 6);
    let ds = generate_synthetic(&spec).unwrap();
    let mut c = ModelConfig::new(30, 384, 2);
    c.hidden_depth = 2;
    let p = ModelParams::<f32>::init(&c, 2).unwrap();
    let idx: Vec<usize> = (0..6).collect();
    let (x, _) = ds.batch(&idx);
    let all = predict_logits(&p, &x).unwrap();
    for i in idx {
        let (xi, _) = ds.batch(&[i]);
        let one = predict_logits(&p, &xi).unwrap();
        assert_eq!(one.data(), &all.data()[i * 2..i * 2 + 2]);
    }
}
