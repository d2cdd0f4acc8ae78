//! Every stage through the library entry point, then the run summary.
//!
//! cargo run --release --example full_pipeline -- [out_dir] [seed]

use std::path::PathBuf;

use memxbar::pipeline::{run_pipeline, RunConfig, Stage};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "runs/example".into()));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut cfg = RunConfig { seed: Some(seed), out, ..RunConfig::default() };
    cfg.analysis.trials = 2000;
    cfg.plan.trials = 500;

    match run_pipeline(cfg, Stage::All) {
        Ok(s) => {
            let t = s.train.as_ref().expect("train ran");
            let a = s.analyze.as_ref().expect("analyze ran");
            println!("test P_err {:.2}% after {} epochs", t.test_p_err, t.epochs);
            if let Some(p) = &s.program {
                println!("after write-verify programming: {:.2}%", p.test_p_err);
            }
            println!("Monte Carlo max {:.2}% (median {:.2}%), pass = {}", a.max_p_err, a.median_p_err, a.pass);
            if let Some(sw) = &s.sweep {
                println!("n* = {:?}", sw.n_star);
            }
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
}
