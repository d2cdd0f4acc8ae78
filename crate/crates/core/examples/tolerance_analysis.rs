//! Monte Carlo tolerance analysis of a trained network and the tolerance
//! synthesis search.
//!
//! cargo run --release --example tolerance_analysis -- [seed] [r_m tolerance] [trials]

use memxbar::dataset::{generate, DatasetConfig, DatasetSplit};
use memxbar::mapping::{compile_network, MappingConfig};
use memxbar::netmodel::{train_discrete, MlpParams, TrainConfig};
use memxbar::tolerance::{analyze_tolerances, synthesize_tolerances, AnalysisOptions, ExperimentPlan, ToleranceSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let r_m: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.2);
    let trials: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2000);

    let ds = DatasetConfig::default();
    let split = generate(&ds, &ds.load_profile()?, seed)?;
    let mapping = MappingConfig::default();
    let cfg = TrainConfig { max_epochs: 3000, w_max: Some(mapping.w_max()), ..TrainConfig::default() };
    let xs = DatasetSplit::inputs(&split.train);
    let ys = DatasetSplit::targets(&split.train);
    let params = train_discrete(&MlpParams::random_init(seed), &xs, &ys, &cfg)?.params;
    let compiled = compile_network(&params, &mapping, &[])?;

    let tol = ToleranceSet::new(0.01, r_m);
    let opts = AnalysisOptions { trials, seed, bound_trials: 1000, ..AnalysisOptions::default() };
    let rep = analyze_tolerances(&params, &compiled, &tol, &split.test, &opts)?;
    let s = &rep.summary;
    println!("tolerances r_f 1%, r_m {:.0}%, {trials} trials", 100.0 * r_m);
    println!("nominal P_err {:.2}%", rep.nominal_p_err);
    println!(
        "trial P_err: min {:.2}  {}th pct {:.2}  median {:.2}  {}th pct {:.2}  max {:.2}",
        s.min, rep.percentiles.0, s.low, s.median, rep.percentiles.1, s.high, s.max
    );
    println!("stimulus-only max {:.2}%, extraneous-only max {:.2}%", rep.summary_stimulus.max, rep.summary_extraneous.max);
    println!("max P_err within X_p = {}%: {}", rep.x_p, rep.pass);

    let plan = ExperimentPlan { trials: trials.min(500), ..ExperimentPlan::default() };
    match synthesize_tolerances(&params, &compiled, &split.test, rep.x_p, &plan, seed, None) {
        Ok(res) => println!(
            "widest passing memristor tolerance along the plan: {:.1}% (r_f {:.1}%)",
            100.0 * res.tolerances.r_m1,
            100.0 * res.tolerances.r_f
        ),
        Err(e) => println!("synthesis: {e}"),
    }
    Ok(())
}
