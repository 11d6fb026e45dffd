//! Trace activation shapes through the network for both dataset presets
//! and print the parameter budget per stage.
//!
//!     cargo run --example shape_trace

use deltagate::model::{forward, param_breakdown, ModelConfig, ModelParams};
use deltagate::rng::{SeedStreams, Stream};
use deltagate::tensor::{Mode, Tape, Tensor};

fn main() -> deltagate::Result<()> {
    for (name, c, t, n, depth) in [("seedvig-like", 17, 1600, 3, 8), ("sadt-like", 30, 384, 2, 2)] {
        let mut config = ModelConfig::new(c, t, n);
        config.hidden_depth = depth;
        let params = ModelParams::<f32>::init(&config, 2026)?;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, c, t]));
        let mut rng = SeedStreams::new(0).rng(Stream::Dropout, 0);
        let out = forward(&mut tape, &params, x, Mode::Eval, &mut rng, true)?;
        println!("{name} (D = {depth})");
        for (stage, shape) in out.trace.expect("trace requested").shapes(&tape) {
            println!("  {:<12} {shape:?}", format!("{stage:?}"));
        }
        let p = param_breakdown(&config);
        println!(
            "  parameters: delta {} projection {} blocks {} norm {} mlp {} total {}",
            p.delta,
            p.projection,
            p.residual_blocks,
            p.layer_norm,
            p.mlp,
            p.total()
        );
    }
    Ok(())
}
