//! Five-fold cross-validation under both protocols on a reduced
//! synthetic dataset.
//!
//!     cargo run --release --example cross_validation

use deltagate::data::{generate_synthetic, FoldPlan, Preset, Protocol};
use deltagate::experiment::run_cv;
use deltagate::model::ModelConfig;
use deltagate::optim::{AdamWConfig, TrainConfig};

fn main() -> deltagate::Result<()> {
    let mut spec = Preset::SeedvigLike.spec(2026);
    (spec.n_subjects, spec.samples_per_subject, spec.n_channels, spec.n_timesteps) = (5, 24, 4, 128);
    let ds = generate_synthetic(&spec)?;
    let mut config = ModelConfig::new(4, 128, 3);
    config.hidden_depth = 4;
    config.mlp_hidden = 32;
    let run = TrainConfig { epochs: 8, optimizer: AdamWConfig { lr: 3e-3, ..Default::default() }, ..Default::default() };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get().min(5));
    for protocol in [Protocol::Intra, Protocol::Inter] {
        let plan = FoldPlan::make(protocol, &ds, 5, run.seed)?;
        let cv = run_cv(&ds, &config, &run, &plan, jobs)?;
        let accs: Vec<String> = cv.folds.iter().map(|f| format!("{:.3}", f.metrics.accuracy)).collect();
        println!("{:<5} folds [{}]  acc | prec | rec | f1: {}", protocol.name(), accs.join(", "), cv.summary.table_row());
    }
    Ok(())
}
