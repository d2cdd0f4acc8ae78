use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use memxbar::pipeline::{Pipeline, PipelineError, RunConfig, Stage};

/// Runs pipeline stages over a run directory.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Run configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// dataset, train, compile, program, analyze, synthesize, sweep, report or all.
    #[arg(long, default_value = "all")]
    stage: Stage,
    /// Monte Carlo trials of the analyze stage.
    #[arg(long)]
    trials: Option<usize>,
    /// Trial-pool threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 4 when P_err exceeds X_p.
    #[arg(long)]
    enforce: bool,
}

fn fail(err: &PipelineError, out: Option<&PathBuf>) -> ExitCode {
    let json = serde_json::to_string_pretty(&err.to_json()).unwrap_or_default();
    eprintln!("{json}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), format!("{json}\n"));
        }
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(p) => match RunConfig::load(p) {
            Ok(c) => c,
            Err(e) => return fail(&PipelineError::config(e), args.out.as_ref()),
        },
        None => RunConfig::default(),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(t) = args.trials {
        cfg.analysis.trials = t;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    let out = cfg.out.clone();
    let pipeline = match Pipeline::new(cfg) {
        Ok(p) => p,
        Err(e) => return fail(&e, Some(&out)),
    };
    let _ = std::fs::remove_file(out.join("error.json"));
    match pipeline.run(args.stage) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            if args.enforce && summary.acceptance() == Some(false) {
                eprintln!("acceptance failure: P_err above X_p = {}%", summary.x_p);
                return ExitCode::from(4);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, Some(&out)),
    }
}
