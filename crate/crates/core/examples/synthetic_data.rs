//! Generate a small synthetic EEG dataset, write it as an `EEGD` file and
//! read it back.
//!
//!     cargo run --example synthetic_data

use deltagate::data::{generate_synthetic, load_dataset, save_dataset, Preset};

fn main() -> deltagate::Result<()> {
    let mut spec = Preset::SeedvigLike.spec(2026);
    spec.n_subjects = 3;
    spec.samples_per_subject = 6;
    let ds = generate_synthetic(&spec)?;

    let dir = std::env::temp_dir().join("deltagate-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("seedvig-like.eegd");
    save_dataset(&ds, &path)?;
    let back = load_dataset(&path)?;
    assert_eq!(back.samples, ds.samples);

    println!("{} -> {}", spec.name, path.display());
    println!("{} samples of {} x {} at {} Hz", back.len(), back.n_channels, back.n_timesteps, back.sampling_rate_hz);
    println!("subjects {:?}", back.subjects());
    for class in 0..back.n_classes {
        let n = back.labels().iter().filter(|&&l| l == class).count();
        println!("class {class}: {n} samples");
    }
    let first = &back.samples[0].data[..8];
    println!("sample 0, channel 0, first steps: {first:.3?}");
    Ok(())
}
