//! Trains the 16-8-4 network, optionally restricted to discrete resistance
//! states, and prints the learning curve milestones.
//!
//! cargo run --release --example train_network -- [seed] [epochs] [n_states]

use memxbar::dataset::{generate, DatasetConfig, DatasetSplit};
use memxbar::mapping::{signed_weight_states, MappingConfig};
use memxbar::netmodel::{evaluate_p_err, train_discrete, MlpParams, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3000);
    let n_states: Option<usize> = args.next().map(|s| s.parse()).transpose()?;

    let ds = DatasetConfig::default();
    let split = generate(&ds, &ds.load_profile()?, seed)?;
    let mapping = MappingConfig::default();
    let cfg = TrainConfig {
        max_epochs: epochs,
        w_max: Some(mapping.w_max()),
        discrete_states: n_states.map(|n| signed_weight_states(n, mapping.r_f, &mapping.range)),
        seed,
        ..TrainConfig::default()
    };

    let xs = DatasetSplit::inputs(&split.train);
    let ys = DatasetSplit::targets(&split.train);
    let out = train_discrete(&MlpParams::random_init(seed), &xs, &ys, &cfg)?;

    for e in [0, 10, 100, 1000, 3000, 10000] {
        if let Some(m) = out.curve.mse.get(e) {
            println!("epoch {e:>5}: mse {m:.5}");
        }
    }
    let err = |set: &[memxbar::dataset::SpikePattern]| evaluate_p_err(&out.params, set.iter().map(|p| (&p.values, p.label)));
    println!("epochs run {}, converged {}", out.epochs, out.converged);
    println!("train P_err {:.2}%, test P_err {:.2}%", err(&split.train), err(&split.test));
    println!("largest |w| {:.3} (limit {:.3})", out.params.max_abs_weight(), mapping.w_max());
    Ok(())
}
