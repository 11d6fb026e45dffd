//! Intra- and inter-subject fold plans on a ten-subject dataset.
//!
//!     cargo run --example fold_plans

use std::collections::BTreeSet;

use deltagate::data::{generate_synthetic, FoldPlan, Preset, Protocol};

fn main() -> deltagate::Result<()> {
    let mut spec = Preset::SadtLike.spec(2026);
    spec.n_timesteps = 16;
    spec.samples_per_subject = 12;
    let ds = generate_synthetic(&spec)?;
    for protocol in [Protocol::Intra, Protocol::Inter] {
        let plan = FoldPlan::make(protocol, &ds, 5, 2026)?;
        println!("{} ({} samples)", protocol.name(), ds.len());
        for (i, f) in plan.folds.iter().enumerate() {
            let test_subjects: BTreeSet<u32> = f.test.iter().map(|&j| ds.samples[j].subject_id).collect();
            println!(
                "  fold {i}: train {:>3} val {:>3} test {:>3}  test subjects {test_subjects:?}",
                f.train.len(),
                f.val.len(),
                f.test.len()
            );
        }
    }
    Ok(())
}
