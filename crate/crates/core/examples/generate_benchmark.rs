//! Writes a small seeded benchmark to a directory.
//!
//!     cargo run --example generate_benchmark -- /tmp/bench 3

use std::path::PathBuf;

use primfit::datagen::{write_dataset, DatasetConfig, PerturbationKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "benchmark".into()));
    let per_kind = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);

    let config = DatasetConfig {
        seed: 42,
        per_kind,
        perturbations: PerturbationKind::ALL.to_vec(),
        ..DatasetConfig::default()
    };
    let rows = write_dataset(&config, &out)?;
    println!("{} clouds under {}", rows.len(), out.display());
    for row in rows.iter().take(5) {
        println!("  {} (kind {}, seed {})", row.file, row.kind, row.seed);
    }
    Ok(())
}
