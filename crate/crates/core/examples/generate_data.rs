//! Synthetic identity data: generation, holdout split, verification pairs,
//! and a save/load round trip.
//!
//!     cargo run --example generate_data [out.bin]

use adadistill::data::{generate_dataset, generate_pairs, make_batches, Dataset, SyntheticDatasetSpec};
use adadistill::{Result, Seed};

fn main() -> Result<()> {
    let spec = SyntheticDatasetSpec::default();
    let ds = generate_dataset(&spec)?;
    println!(
        "{} classes x {} samples in {}d, noise {}: {} train / {} holdout",
        spec.class_count,
        spec.samples_per_class,
        spec.input_dim,
        spec.intra_class_noise,
        ds.train_indices().len(),
        ds.holdout_indices().len()
    );

    let pairs = generate_pairs(&ds, 1000, 1000, Seed(7))?;
    println!("pairs: {} genuine, {} impostor", pairs.genuine.len(), pairs.impostor.len());
    println!("first genuine pair {:?}, first impostor pair {:?}", pairs.genuine[0], pairs.impostor[0]);

    let batches = make_batches(&ds, 64, Seed(1))?;
    println!("{} batches of 64 per epoch", batches.len());

    let path = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("toy_dataset.bin").display().to_string());
    ds.save(&path)?;
    let back = Dataset::load(&path)?;
    assert_eq!(back, ds);
    println!("saved and reloaded {path}");
    Ok(())
}
