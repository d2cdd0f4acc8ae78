//! Synthesizes the spike-pattern corpus and writes CSVs plus a manifest.
//!
//! cargo run --example dataset_synthesis -- <out_dir> [seed] [profile.json]

use std::path::PathBuf;

use memxbar::dataset::{generate, patterns_to_csv, DatasetConfig};
use memxbar::netmodel::Label;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/dataset".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let cfg = DatasetConfig { profile: args.next().map(PathBuf::from), ..DatasetConfig::default() };

    let profile = cfg.load_profile()?;
    let split = generate(&cfg, &profile, seed)?;
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("train.csv"), patterns_to_csv(&split.train))?;
    std::fs::write(out.join("test.csv"), patterns_to_csv(&split.test))?;
    std::fs::write(out.join("split.json"), serde_json::to_string_pretty(&split.manifest(seed, cfg.dac_step))?)?;

    println!("{} training and {} test patterns in {}", split.train.len(), split.test.len(), out.display());
    for label in Label::ALL {
        let k = label.index();
        println!("{label}: train {:>5}, test {:>4}", split.counts.train[k], split.counts.test[k]);
    }
    let first = &split.train[0];
    println!("first training pattern ({}): {:?}", first.label, first.values);
    Ok(())
}
