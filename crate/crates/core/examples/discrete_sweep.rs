//! P_err of a trained network after rounding every weight to the nearest
//! level reachable with n resistance states per device.
//!
//! cargo run --release --example discrete_sweep -- [seed] [epochs]

use memxbar::dataset::{generate, DatasetConfig, DatasetSplit};
use memxbar::mapping::{MappingConfig, ResistanceRange};
use memxbar::netmodel::{train_discrete, MlpParams, TrainConfig};
use memxbar::tolerance::{discrete_state_sweep, n_star};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3000);

    let ds = DatasetConfig::default();
    let split = generate(&ds, &ds.load_profile()?, seed)?;
    let range = ResistanceRange::new(10e3, 60e3);
    let mapping = MappingConfig { range, ..MappingConfig::default() };
    let cfg = TrainConfig { max_epochs: epochs, w_max: Some(mapping.w_max()), ..TrainConfig::default() };
    let xs = DatasetSplit::inputs(&split.train);
    let ys = DatasetSplit::targets(&split.train);
    let params = train_discrete(&MlpParams::random_init(seed), &xs, &ys, &cfg)?.params;

    let counts = [2, 3, 4, 6, 8, 9, 12, 16, 32, 64];
    let points = discrete_state_sweep(&params, &split.test, &counts, &range, mapping.r_f)?;
    for p in &points {
        println!("{:>3} states: P_err {:6.2}%", p.n_states, p.p_err);
    }
    match n_star(&points, 5.0) {
        Some(n) => println!("fewest states with P_err <= 5% from there on: {n}"),
        None => println!("no state count reaches P_err <= 5%"),
    }
    Ok(())
}
