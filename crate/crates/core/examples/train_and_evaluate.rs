//! Train one model on a small synthetic split, save the selected
//! parameters, reload them and evaluate on held-out samples.
//!
//!     cargo run --release --example train_and_evaluate

use deltagate::data::{generate_synthetic, FoldPlan, Preset, Protocol};
use deltagate::metrics::{confusion, report};
use deltagate::model::{load_params_for, save_params, ModelConfig, ModelParams};
use deltagate::optim::{evaluate, train, AdamWConfig, TrainConfig};

fn main() -> deltagate::Result<()> {
    let mut spec = Preset::SeedvigLike.spec(2026);
    (spec.n_subjects, spec.samples_per_subject, spec.n_channels, spec.n_timesteps) = (4, 30, 6, 200);
    let ds = generate_synthetic(&spec)?;
    let plan = FoldPlan::make(Protocol::Intra, &ds, 5, 2026)?;
    let fold = &plan.folds[0];

    let mut config = ModelConfig::new(6, 200, 3);
    config.hidden_depth = 4;
    config.mlp_hidden = 32;
    let run = TrainConfig { epochs: 15, optimizer: AdamWConfig { lr: 3e-3, ..Default::default() }, ..Default::default() };
    let (params, log) = train(ModelParams::init(&config, run.seed)?, &ds, &fold.train, &fold.val, &run)?;
    for e in &log.epochs {
        println!("epoch {:>2}: loss {:.4} train acc {:.3} val acc {:.3}", e.epoch, e.train_loss, e.train_acc, e.val_acc);
    }
    println!("kept epoch {} (val acc {:.3})", log.selected_epoch, log.best_val_acc());

    let path = std::env::temp_dir().join("deltagate-example-fold0.dgnw");
    save_params(&params, &path)?;
    let reloaded = load_params_for(&path, &config)?;
    let ev = evaluate(&reloaded, &ds, &fold.test)?;
    let m = report(&confusion(&ev.labels, &ev.predictions, 3)?)?;
    println!("test: acc {:.3} macro f1 {:.3} ({} samples)", m.accuracy, m.macro_f1, ev.labels.len());
    Ok(())
}
