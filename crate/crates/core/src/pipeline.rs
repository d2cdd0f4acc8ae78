//! Stage orchestration over a run directory.
//!
//! Layout under `out`: `config.json`, `manifest.json`, `summary.json` and one
//! subdirectory per stage. Every stage reads its inputs from the files of
//! earlier stages, so any stage can be re-run alone.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crossbar::{CircuitNetwork, CrossbarConfig};
use crate::dataset::{self, DatasetConfig, DatasetSplit, SpikePattern};
use crate::device::{DeviceParams, ProgramLog};
use crate::error::{Error, Result};
use crate::mapping::{self, compile_network, CompiledNetwork, MappingConfig, ResistanceRange, StuckCell};
use crate::netmodel::{evaluate_p_err, train_discrete, MlpParams, TrainConfig};
use crate::report;
use crate::rng::{domain, substream};
use crate::tolerance::{
    self, analyze_tolerances, AnalysisOptions, Component, ExperimentPlan, MonteCarloReport, SweepPoint,
    SynthesisResult, ToleranceSet, ToleranceSpec, WeightBounds,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Dataset,
    Train,
    Compile,
    Program,
    Analyze,
    Synthesize,
    Sweep,
    /// Re-renders figures from the CSVs already on disk.
    Report,
    All,
}

impl Stage {
    pub const CHAIN: [Stage; 7] = [
        Stage::Dataset,
        Stage::Train,
        Stage::Compile,
        Stage::Program,
        Stage::Analyze,
        Stage::Synthesize,
        Stage::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Dataset => "dataset",
            Stage::Train => "train",
            Stage::Compile => "compile",
            Stage::Program => "program",
            Stage::Analyze => "analyze",
            Stage::Synthesize => "synthesize",
            Stage::Sweep => "sweep",
            Stage::Report => "report",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::CHAIN
            .into_iter()
            .chain([Stage::Report, Stage::All])
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainStage {
    #[serde(flatten)]
    pub optimizer: TrainConfig,
    /// Independent initializations; the lowest training MSE wins.
    pub restarts: usize,
    /// Train on this many resistance states per device; continuous when absent.
    pub n_states: Option<usize>,
}

impl Default for TrainStage {
    fn default() -> Self {
        TrainStage { optimizer: TrainConfig::default(), restarts: 1, n_states: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisStage {
    pub trials: usize,
    pub x_p: f64,
    pub percentiles: (f64, f64),
    pub bound_trials: usize,
}

impl Default for AnalysisStage {
    fn default() -> Self {
        AnalysisStage { trials: 10_000, x_p: 5.0, percentiles: (0.05, 99.95), bound_trials: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepStage {
    pub counts: Vec<usize>,
    pub range: ResistanceRange,
}

impl Default for SweepStage {
    fn default() -> Self {
        SweepStage { counts: vec![2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 16, 32], range: ResistanceRange::new(10e3, 60e3) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; required, either here or from the command line.
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Trial-pool threads; zero uses every core.
    pub threads: usize,
    pub device: DeviceParams,
    pub crossbar: CrossbarConfig,
    pub mapping: MappingConfig,
    pub dataset: DatasetConfig,
    pub train: TrainStage,
    pub faults: Vec<StuckCell>,
    pub tolerances: Vec<ToleranceSpec>,
    pub analysis: AnalysisStage,
    pub plan: ExperimentPlan,
    pub sweep: SweepStage,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: PathBuf::from("runs/default"),
            threads: 0,
            device: DeviceParams::default(),
            crossbar: CrossbarConfig::default(),
            mapping: MappingConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainStage::default(),
            faults: Vec::new(),
            tolerances: vec![
                ToleranceSpec { component: Component::RF, delta: 0.01 },
                ToleranceSpec { component: Component::PerCell, delta: 0.20 },
            ],
            analysis: AnalysisStage::default(),
            plan: ExperimentPlan::default(),
            sweep: SweepStage::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::InvalidConfig("seed missing".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.device.validate()?;
        self.crossbar.validate(&self.device)?;
        self.mapping.range.validate()?;
        if !(self.mapping.r_f > 0.0) {
            return Err(Error::InvalidConfig("mapping r_f must be positive".into()));
        }
        self.train.optimizer.validate()?;
        if self.train.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.train.n_states.is_some_and(|n| n < 2) {
            return Err(Error::InvalidConfig("n_states must be at least 2".into()));
        }
        ToleranceSet::from_specs(&self.tolerances)?;
        if self.analysis.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if (1..1000).contains(&self.analysis.bound_trials) {
            return Err(Error::InvalidConfig("bound_trials must be zero or at least 1000".into()));
        }
        let (lo, hi) = self.analysis.percentiles;
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return Err(Error::InvalidConfig("percentiles must satisfy 0 <= low < high <= 100".into()));
        }
        self.plan.validate()?;
        self.sweep.range.validate()?;
        if self.sweep.counts.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig("sweep counts must be at least 2".into()));
        }
        if let Some(p) = &self.dataset.profile {
            if !p.is_file() {
                return Err(Error::MissingArtifact(p.clone()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON, ignoring the output directory and the
    /// thread count, which do not change results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.threads = 0;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn threads(&self) -> Option<usize> {
        (self.threads > 0).then_some(self.threads)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub train_total: usize,
    pub test_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub restart: usize,
    pub epochs: usize,
    pub converged: bool,
    pub best_mse: f64,
    pub train_p_err: f64,
    pub test_p_err: f64,
    pub max_abs_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileSummary {
    pub synapses: usize,
    pub stuck: usize,
    pub max_mapping_error: f64,
    pub test_p_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramSummary {
    pub cells: usize,
    pub failures: usize,
    pub max_relative_error: f64,
    pub mean_pulses: f64,
    pub test_p_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSummary {
    pub trials: usize,
    pub tolerances: ToleranceSet,
    pub nominal_p_err: f64,
    pub median_p_err: f64,
    pub high_p_err: f64,
    pub max_p_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub points: Vec<SweepPoint>,
    pub n_star: Option<usize>,
}

/// Contents of `summary.json`; sections fill in as stages complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub config_hash: String,
    pub x_p: f64,
    pub dataset: Option<DatasetSummary>,
    pub train: Option<TrainSummary>,
    pub compile: Option<CompileSummary>,
    pub program: Option<ProgramSummary>,
    pub analyze: Option<AnalyzeSummary>,
    pub synthesize: Option<SynthesisResult>,
    pub sweep: Option<SweepSummary>,
}

impl RunSummary {
    /// Monte Carlo verdict when available, else the nominal test error.
    pub fn acceptance(&self) -> Option<bool> {
        if let Some(a) = &self.analyze {
            return Some(a.pass);
        }
        self.train.as_ref().map(|t| t.test_p_err <= self.x_p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Stage name and the config hash it last ran under.
    pub stages: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Config,
    Stage,
}

#[derive(Debug)]
pub struct PipelineError {
    pub class: FailureClass,
    pub stage: Option<Stage>,
    pub error: Error,
}

impl PipelineError {
    pub fn config(error: Error) -> Self {
        PipelineError { class: FailureClass::Config, stage: None, error }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            FailureClass::Config => 2,
            FailureClass::Stage => 3,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let path = match &self.error {
            Error::MissingArtifact(p) | Error::Io { path: p, .. } => Some(p.display().to_string()),
            _ => None,
        };
        serde_json::json!({
            "status": self.exit_code(),
            "class": match self.class { FailureClass::Config => "config", FailureClass::Stage => "stage" },
            "stage": self.stage.map(|s| s.name()),
            "kind": error_kind(&self.error),
            "path": path,
            "message": self.error.to_string(),
        })
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "stage {s}: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for PipelineError {}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::AboveThreshold { .. } => "above_threshold",
        Error::AmplitudeOutOfRange { .. } => "amplitude_out_of_range",
        Error::TargetOutOfRange { .. } => "target_out_of_range",
        Error::StuckDevice { .. } => "stuck_device",
        Error::ProgrammingFailed { .. } => "programming_failed",
        Error::InputOverrange { .. } => "input_overrange",
        Error::OddRowCount(_) => "odd_row_count",
        Error::BiasViolation { .. } => "bias_violation",
        Error::CellOutOfBounds { .. } => "cell_out_of_bounds",
        Error::ShapeMismatch { .. } => "shape_mismatch",
        Error::WeightOutOfRange { .. } => "weight_out_of_range",
        Error::NonFiniteLoss { .. } => "non_finite_loss",
        Error::NoPassingPoint { .. } => "no_passing_point",
        Error::CountMismatch(_) => "count_mismatch",
        Error::MissingArtifact(_) => "missing_artifact",
        Error::InvalidConfig(_) => "invalid_config",
        Error::Io { .. } => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// A validated configuration bound to its run directory.
pub struct Pipeline {
    cfg: RunConfig,
    seed: u64,
    hash: String,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> std::result::Result<Self, PipelineError> {
        cfg.validate().map_err(PipelineError::config)?;
        let seed = cfg.seed().map_err(PipelineError::config)?;
        let hash = cfg.hash();
        Ok(Pipeline { cfg, seed, hash })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn dir(&self) -> &Path {
        &self.cfg.out
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.out.join(rel)
    }

    /// Runs `stage` (or the whole chain) and returns the updated summary.
    pub fn run(&self, stage: Stage) -> std::result::Result<RunSummary, PipelineError> {
        let at = |st: Stage| move |error: Error| PipelineError { class: FailureClass::Stage, stage: Some(st), error };
        write_json(&self.path("config.json"), &self.cfg).map_err(at(stage))?;
        let mut summary = self.load_summary();
        let stages: Vec<Stage> = if stage == Stage::All { Stage::CHAIN.to_vec() } else { vec![stage] };
        for st in stages {
            self.run_one(st, &mut summary).map_err(at(st))?;
            if st != Stage::Report {
                self.record(st).map_err(at(st))?;
            }
            write_json(&self.path("summary.json"), &summary).map_err(at(st))?;
        }
        Ok(summary)
    }

    fn load_summary(&self) -> RunSummary {
        match read_json::<RunSummary>(&self.path("summary.json")) {
            Ok(s) if s.config_hash == self.hash => s,
            _ => RunSummary {
                seed: self.seed,
                config_hash: self.hash.clone(),
                x_p: self.cfg.analysis.x_p,
                dataset: None,
                train: None,
                compile: None,
                program: None,
                analyze: None,
                synthesize: None,
                sweep: None,
            },
        }
    }

    fn record(&self, st: Stage) -> Result<()> {
        let path = self.path("manifest.json");
        let mut m = match read_json::<Manifest>(&path) {
            Ok(m) => m,
            Err(_) => Manifest {
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: self.seed,
                config_hash: self.hash.clone(),
                stages: Vec::new(),
            },
        };
        m.seed = self.seed;
        m.config_hash = self.hash.clone();
        m.stages.retain(|(name, _)| name != st.name());
        m.stages.push((st.name().to_string(), self.hash.clone()));
        m.stages.sort_by_key(|(name, _)| name.parse::<Stage>().ok());
        write_json(&path, &m)
    }

    fn run_one(&self, st: Stage, summary: &mut RunSummary) -> Result<()> {
        match st {
            Stage::Dataset => summary.dataset = Some(self.dataset()?),
            Stage::Train => summary.train = Some(self.train()?),
            Stage::Compile => summary.compile = Some(self.compile()?),
            Stage::Program => summary.program = Some(self.program()?),
            Stage::Analyze => summary.analyze = Some(self.analyze()?),
            Stage::Synthesize => summary.synthesize = Some(self.synthesize()?),
            Stage::Sweep => summary.sweep = Some(self.sweep()?),
            Stage::Report => {
                report::emit_report(&self.cfg.out, Some(self.cfg.analysis.x_p), self.cfg.analysis.percentiles)?;
            }
            Stage::All => unreachable!("expanded by run"),
        }
        Ok(())
    }

    fn dataset(&self) -> Result<DatasetSummary> {
        let cfg = &self.cfg.dataset;
        let profile = cfg.load_profile()?;
        let split = dataset::generate(cfg, &profile, self.seed)?;
        write_text(&self.path("dataset/train.csv"), &dataset::patterns_to_csv(&split.train))?;
        write_text(&self.path("dataset/test.csv"), &dataset::patterns_to_csv(&split.test))?;
        write_json(&self.path("dataset/split.json"), &split.manifest(self.seed, cfg.dac_step))?;
        write_json(&self.path("dataset/profile.json"), &profile)?;
        Ok(DatasetSummary { train_total: split.train.len(), test_total: split.test.len() })
    }

    fn patterns(&self, which: &str) -> Result<Vec<SpikePattern>> {
        dataset::read_patterns_csv(&self.path(&format!("dataset/{which}.csv")))
    }

    fn params(&self) -> Result<MlpParams> {
        read_json(&self.path("train/params.json"))
    }

    fn compiled(&self) -> Result<CompiledNetwork> {
        read_json(&self.path("compile/compiled.json"))
    }

    fn train_config(&self) -> TrainConfig {
        let m = &self.cfg.mapping;
        let mut tc = self.cfg.train.optimizer.clone();
        tc.seed = self.seed;
        tc.w_max = Some(tc.w_max.unwrap_or_else(|| m.w_max()).min(m.w_max()));
        let states = self.cfg.train.n_states.map(|n| m.range.states(n));
        if let Some(n) = self.cfg.train.n_states {
            tc.discrete_states = Some(mapping::signed_weight_states(n, m.r_f, &m.range));
        }
        tc.stuck_map.extend(mapping::stuck_map(&self.cfg.faults, m, states.as_deref()));
        tc
    }

    fn train(&self) -> Result<TrainSummary> {
        let train = self.patterns("train")?;
        let test = self.patterns("test")?;
        let xs = DatasetSplit::inputs(&train);
        let ys = DatasetSplit::targets(&train);
        let tc = self.train_config();
        let mut best: Option<(usize, f64, crate::netmodel::TrainOutcome)> = None;
        let mut restarts = String::from("restart,epochs,best_mse,converged\n");
        for r in 0..self.cfg.train.restarts {
            let p0 = MlpParams::random_init_indexed(self.seed, r as u64);
            let out = train_discrete(&p0, &xs, &ys, &tc)?;
            let mse = out.curve.mse.iter().copied().fold(f64::INFINITY, f64::min);
            restarts.push_str(&format!("{r},{},{mse:e},{}\n", out.epochs, out.converged));
            if best.as_ref().is_none_or(|b| mse < b.1) {
                best = Some((r, mse, out));
            }
        }
        let (restart, best_mse, out) = best.expect("at least one restart");
        write_json(&self.path("train/params.json"), &out.params)?;
        write_text(&self.path("train/restarts.csv"), &restarts)?;
        let curve = self.path(report::LEARNING_CURVE_CSV);
        write_text(&curve, &out.curve.to_csv())?;
        write_text(&self.path("train/learning_curve.svg"), &report::learning_curve_svg(&curve)?)?;
        let err = |set: &[SpikePattern]| evaluate_p_err(&out.params, set.iter().map(|p| (&p.values, p.label)));
        Ok(TrainSummary {
            restart,
            epochs: out.epochs,
            converged: out.converged,
            best_mse,
            train_p_err: err(&train),
            test_p_err: err(&test),
            max_abs_weight: out.params.max_abs_weight(),
        })
    }

    fn compile(&self) -> Result<CompileSummary> {
        let params = self.params()?;
        let test = self.patterns("test")?;
        let compiled = compile_network(&params, &self.cfg.mapping, &self.cfg.faults)?;
        write_text(&self.path("compile/compiled.csv"), &compiled.to_csv())?;
        write_json(&self.path("compile/compiled.json"), &compiled)?;
        let achieved = compiled.achieved_params(&params);
        Ok(CompileSummary {
            synapses: compiled.synapses.len(),
            stuck: compiled.synapses.iter().filter(|s| s.stuck).count(),
            max_mapping_error: compiled
                .synapses
                .iter()
                .map(|s| (s.w_achieved - s.w_target).abs())
                .fold(0.0, f64::max),
            test_p_err: evaluate_p_err(&achieved, test.iter().map(|p| (&p.values, p.label))),
        })
    }

    fn program(&self) -> Result<ProgramSummary> {
        let params = self.params()?;
        let compiled = self.compiled()?;
        let test = self.patterns("test")?;
        let mut net =
            CircuitNetwork::from_compiled(&compiled, &params, &self.cfg.crossbar, &self.cfg.device, &self.cfg.faults)?;
        let mut rng = substream(self.seed, domain::PROGRAM, 0);
        let logs = net.program(&compiled, &mut rng);

        let mut csv = format!("layer,row,col,{},error\n", ProgramLog::CSV_HEADER);
        let mut failures = 0;
        let mut max_rel: f64 = 0.0;
        let mut pulses = 0;
        for l in &logs {
            match &l.log {
                Some(log) => {
                    csv.push_str(&format!("{},{},{},{},\n", l.layer, l.row, l.col, log.csv_row()));
                    max_rel = max_rel.max((log.final_resistance / log.target - 1.0).abs());
                    pulses += log.pulses;
                }
                None => {
                    failures += 1;
                    let msg = l.error.as_deref().unwrap_or("").replace(',', ";");
                    csv.push_str(&format!("{},{},{},,,,,false,{msg}\n", l.layer, l.row, l.col));
                }
            }
        }
        write_text(&self.path("program/program_log.csv"), &csv)?;
        write_text(&self.path("program/hidden.csv"), &net.hidden.to_csv())?;
        write_text(&self.path("program/output.csv"), &net.output.to_csv())?;
        let realized = net.realized_params(&params);
        write_json(&self.path("program/realized_params.json"), &realized)?;

        let mut wrong = 0;
        for p in &test {
            let y = net.forward(&p.values)?;
            if crate::netmodel::classify(&y) != p.label {
                wrong += 1;
            }
        }
        Ok(ProgramSummary {
            cells: logs.len(),
            failures,
            max_relative_error: max_rel,
            mean_pulses: pulses as f64 / logs.len().max(1) as f64,
            test_p_err: 100.0 * wrong as f64 / test.len().max(1) as f64,
        })
    }

    fn analysis_options(&self) -> AnalysisOptions {
        let a = &self.cfg.analysis;
        AnalysisOptions {
            trials: a.trials,
            seed: self.seed,
            x_p: a.x_p,
            percentiles: a.percentiles,
            bound_trials: a.bound_trials,
            threads: self.cfg.threads(),
        }
    }

    fn analyze(&self) -> Result<AnalyzeSummary> {
        let params = self.params()?;
        let compiled = self.compiled()?;
        let test = self.patterns("test")?;
        let tol = ToleranceSet::from_specs(&self.cfg.tolerances)?;
        let rep = analyze_tolerances(&params, &compiled, &tol, &test, &self.analysis_options())?;
        write_json(&self.path("analyze/report.json"), &rep)?;
        write_text(&self.path(report::TRIALS_CSV), &rep.trials_csv())?;
        let bounds = self.path(report::WEIGHT_BOUNDS_CSV);
        if rep.weight_bounds.is_empty() {
            let _ = std::fs::remove_file(&bounds);
            let _ = std::fs::remove_file(bounds.with_file_name("weight_bounds.svg"));
        } else {
            write_text(&bounds, &weight_bounds_csv(&rep))?;
        }
        report::emit_report(&self.cfg.out, Some(rep.x_p), rep.percentiles)?;
        Ok(AnalyzeSummary {
            trials: rep.trials,
            tolerances: rep.tolerances,
            nominal_p_err: rep.nominal_p_err,
            median_p_err: rep.summary.median,
            high_p_err: rep.summary.high,
            max_p_err: rep.summary.max,
            pass: rep.pass,
        })
    }

    fn synthesize(&self) -> Result<SynthesisResult> {
        let params = self.params()?;
        let compiled = self.compiled()?;
        let test = self.patterns("test")?;
        let res = tolerance::synthesize_tolerances(
            &params,
            &compiled,
            &test,
            self.cfg.analysis.x_p,
            &self.cfg.plan,
            self.seed,
            self.cfg.threads(),
        )?;
        let mut csv = String::from("scale,max_p_err,pass\n");
        for p in &res.evaluated {
            csv.push_str(&format!("{},{},{}\n", p.scale, p.max_p_err, p.pass));
        }
        write_text(&self.path("synthesize/points.csv"), &csv)?;
        write_json(&self.path("synthesize/synthesis.json"), &res)?;
        Ok(res)
    }

    fn sweep(&self) -> Result<SweepSummary> {
        let params = self.params()?;
        let test = self.patterns("test")?;
        let s = &self.cfg.sweep;
        let points = tolerance::discrete_state_sweep(&params, &test, &s.counts, &s.range, self.cfg.mapping.r_f)?;
        let csv = self.path(report::SWEEP_CSV);
        write_text(&csv, &tolerance::sweep_csv(&points))?;
        write_text(&self.path("sweep/sweep.svg"), &report::sweep_svg(&csv, Some(self.cfg.analysis.x_p))?)?;
        let out = SweepSummary { n_star: tolerance::n_star(&points, self.cfg.analysis.x_p), points };
        write_json(&self.path("sweep/sweep.json"), &out)?;
        Ok(out)
    }
}

/// `layer,neuron,input,w_nominal,kind,low,high`; `kind` is `relative`
/// (percent of nominal) or `absolute` (zero nominal).
pub fn weight_bounds_csv(rep: &MonteCarloReport) -> String {
    let mut s = String::from("layer,neuron,input,w_nominal,kind,low,high\n");
    for r in &rep.weight_bounds {
        let (input, neuron) = match r.weight {
            crate::netmodel::WeightId::Hidden { input, neuron } | crate::netmodel::WeightId::Output { input, neuron } => {
                (input, neuron)
            }
        };
        let (kind, lo, hi) = match r.bounds {
            WeightBounds::Relative { low_pct, high_pct } => ("relative", low_pct, high_pct),
            WeightBounds::Absolute { low, high } => ("absolute", low, high),
        };
        s.push_str(&format!("{},{neuron},{input},{},{kind},{lo},{hi}\n", r.weight.layer(), r.w_nominal));
    }
    s
}

/// Validates `cfg` and runs `stage`.
pub fn run_pipeline(cfg: RunConfig, stage: Stage) -> std::result::Result<RunSummary, PipelineError> {
    Pipeline::new(cfg)?.run(stage)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for st in Stage::CHAIN.into_iter().chain([Stage::Report, Stage::All]) {
            assert_eq!(st.name().parse::<Stage>().unwrap(), st);
        }
        assert!("calibrate".parse::<Stage>().is_err());
    }

    #[test]
    fn config_without_seed_is_rejected() {
        let err = Pipeline::new(RunConfig::default()).err().unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"seed": 1, "sede": 2}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 1, "train": {"max_epochs": 5, "restarts": 2}}"#).unwrap();
        assert_eq!(cfg.train.optimizer.max_epochs, 5);
        assert_eq!(cfg.train.restarts, 2);
    }

    #[test]
    fn hash_ignores_out_and_threads() {
        let a = RunConfig { seed: Some(1), ..RunConfig::default() };
        let b = RunConfig { out: "elsewhere".into(), threads: 3, ..a.clone() };
        let c = RunConfig { seed: Some(2), ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn stage_without_upstream_reports_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { seed: Some(1), out: dir.path().to_path_buf(), ..RunConfig::default() };
        let err = run_pipeline(cfg, Stage::Compile).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(matches!(err.error, Error::MissingArtifact(_)));
        assert_eq!(err.to_json()["kind"], "missing_artifact");
    }
}
