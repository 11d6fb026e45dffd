//! Sweep the module axis (which stages are present) on a reduced dataset.
//!
//!     cargo run --release --example ablation

use deltagate::data::{generate_synthetic, FoldPlan, Preset, Protocol};
use deltagate::experiment::{ablation_configs, run_ablation, AblationAxis};
use deltagate::model::ModelConfig;
use deltagate::optim::{AdamWConfig, TrainConfig};

fn main() -> deltagate::Result<()> {
    let mut spec = Preset::SeedvigLike.spec(2026);
    (spec.n_subjects, spec.samples_per_subject, spec.n_channels, spec.n_timesteps) = (5, 24, 4, 128);
    let ds = generate_synthetic(&spec)?;
    let mut base = ModelConfig::new(4, 128, 3);
    base.hidden_depth = 4;
    base.mlp_hidden = 32;
    let run = TrainConfig { epochs: 6, optimizer: AdamWConfig { lr: 3e-3, ..Default::default() }, ..Default::default() };
    let plan = FoldPlan::make(Protocol::Intra, &ds, 5, run.seed)?;
    for axis in [AblationAxis::Module, AblationAxis::Kernel] {
        let cells = ablation_configs(&base, axis, &axis.default_values())?;
        println!("{} | acc | prec | rec | f1", axis.name());
        for (value, cv) in run_ablation(&ds, &cells, &run, &plan, 1)? {
            println!("{value:<8} | {}", cv.summary.table_row());
        }
    }
    Ok(())
}
