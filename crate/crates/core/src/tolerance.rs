//! Monte Carlo tolerance analysis and synthesis.
//!
//! A tolerance `delta` is a relative limit read as three standard deviations
//! of a normal error truncated at the limit. Every trial draws from its own
//! substream of the master seed, so reports do not depend on thread count or
//! trial order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SpikePattern;
use crate::error::{Error, Result};
use crate::mapping::{placement, quantize_weight, signed_weight_states, CompiledNetwork, ResistanceRange, SynapseNominals};
use crate::netmodel::{classify, Label, MlpParams, WeightId, N_HIDDEN, N_INPUT};
use crate::rng::{domain, substream, truncated_std_normal, SimRng};

/// Rows per crossbar that carry a summing amplifier.
const AMP_ROWS: usize = 2 * N_HIDDEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    RF,
    RM1,
    RM2,
    /// Both memristors of every pair.
    PerCell,
    /// Gain error of each input DAC channel.
    InputDac,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub component: Component,
    pub delta: f64,
}

impl ToleranceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidConfig(format!("tolerance {} not in [0, 1)", self.delta)));
        }
        Ok(())
    }
}

/// Relative limits for every perturbed component.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceSet {
    pub r_f: f64,
    pub r_m1: f64,
    pub r_m2: f64,
    pub input_dac: f64,
}

impl ToleranceSet {
    pub fn new(r_f: f64, r_m: f64) -> Self {
        ToleranceSet { r_f, r_m1: r_m, r_m2: r_m, input_dac: 0.0 }
    }

    pub fn from_specs(specs: &[ToleranceSpec]) -> Result<Self> {
        let mut set = ToleranceSet::default();
        for s in specs {
            s.validate()?;
            match s.component {
                Component::RF => set.r_f = s.delta,
                Component::RM1 => set.r_m1 = s.delta,
                Component::RM2 => set.r_m2 = s.delta,
                Component::PerCell => {
                    set.r_m1 = s.delta;
                    set.r_m2 = s.delta;
                }
                Component::InputDac => set.input_dac = s.delta,
            }
        }
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for delta in [self.r_f, self.r_m1, self.r_m2, self.input_dac] {
            ToleranceSpec { component: Component::RF, delta }.validate()?;
        }
        Ok(())
    }

    fn axpy(&self, s: f64, d: &ToleranceSet) -> ToleranceSet {
        ToleranceSet {
            r_f: self.r_f + s * d.r_f,
            r_m1: self.r_m1 + s * d.r_m1,
            r_m2: self.r_m2 + s * d.r_m2,
            input_dac: self.input_dac + s * d.input_dac,
        }
    }

    /// Componentwise `self <= other`.
    pub fn dominated_by(&self, other: &ToleranceSet) -> bool {
        self.r_f <= other.r_f && self.r_m1 <= other.r_m1 && self.r_m2 <= other.r_m2 && self.input_dac <= other.input_dac
    }
}

/// Relative error `e` with `|e| <= delta` and standard deviation `delta / 3`.
/// One normal variate is consumed even when `delta` is zero.
pub fn relative_error(delta: f64, rng: &mut (impl Rng + ?Sized)) -> f64 {
    let z = truncated_std_normal(rng, 3.0);
    if delta == 0.0 {
        0.0
    } else {
        (delta / 3.0 * z).clamp(-delta, delta)
    }
}

pub fn sample_perturbed(nominal: f64, spec: &ToleranceSpec, rng: &mut (impl Rng + ?Sized)) -> f64 {
    nominal * (1.0 + relative_error(spec.delta, rng))
}

/// Linear-interpolation percentile of ascending data, `q` in percent.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightBounds {
    /// Percent of the nominal weight.
    Relative { low_pct: f64, high_pct: f64 },
    /// Absolute weight error; used when the nominal weight is zero.
    Absolute { low: f64, high: f64 },
}

/// Percentile bounds of the error of one synapse weight under independent
/// perturbation of `r_f`, `r_m1` and `r_m2`.
pub fn weight_error_bounds(
    syn: &SynapseNominals,
    tol: &ToleranceSet,
    trials: usize,
    percentiles: (f64, f64),
    rng: &mut (impl Rng + ?Sized),
) -> Result<WeightBounds> {
    if trials < 1000 {
        return Err(Error::InvalidConfig(format!("need at least 1000 trials, got {trials}")));
    }
    tol.validate()?;
    let w0 = syn.r_f / syn.r_m1 - syn.r_f / syn.r_m2;
    let mut errs: Vec<f64> = (0..trials)
        .map(|_| {
            let rf = syn.r_f * (1.0 + relative_error(tol.r_f, rng));
            let m1 = syn.r_m1 * (1.0 + relative_error(tol.r_m1, rng));
            let m2 = syn.r_m2 * (1.0 + relative_error(tol.r_m2, rng));
            rf / m1 - rf / m2 - w0
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    let (lo, hi) = (percentile(&errs, percentiles.0), percentile(&errs, percentiles.1));
    Ok(if w0 == 0.0 {
        WeightBounds::Absolute { low: lo, high: hi }
    } else if w0 > 0.0 {
        WeightBounds::Relative { low_pct: 100.0 * lo / w0, high_pct: 100.0 * hi / w0 }
    } else {
        WeightBounds::Relative { low_pct: 100.0 * hi / w0, high_pct: 100.0 * lo / w0 }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBoundRecord {
    pub weight: WeightId,
    pub w_nominal: f64,
    pub bounds: WeightBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub trials: usize,
    pub seed: u64,
    /// Permitted P_err, percent.
    pub x_p: f64,
    /// Low and high report percentiles, percent.
    pub percentiles: (f64, f64),
    /// Samples per synapse for the weight-error bounds; zero skips them.
    pub bound_trials: usize,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            trials: 10_000,
            seed: 0,
            x_p: 5.0,
            percentiles: (0.05, 99.95),
            bound_trials: 0,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub p_err: f64,
    pub p_err_stimulus: f64,
    pub p_err_extraneous: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub low: f64,
    pub median: f64,
    pub high: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    fn of(values: &[f64], percentiles: (f64, f64)) -> Summary {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Summary {
            low: percentile(&v, percentiles.0),
            median: percentile(&v, 50.0),
            high: percentile(&v, percentiles.1),
            min: v[0],
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub trials: usize,
    pub master_seed: u64,
    pub tolerances: ToleranceSet,
    pub x_p: f64,
    pub percentiles: (f64, f64),
    pub nominal_p_err: f64,
    pub summary: Summary,
    pub summary_stimulus: Summary,
    pub summary_extraneous: Summary,
    /// Max trial P_err within `x_p`.
    pub pass: bool,
    pub pass_stimulus: bool,
    pub pass_extraneous: bool,
    pub weight_bounds: Vec<WeightBoundRecord>,
    #[serde(skip)]
    pub per_trial: Vec<TrialResult>,
}

impl MonteCarloReport {
    pub const TRIALS_CSV_HEADER: &'static str = "trial,p_err,p_err_stimulus,p_err_extraneous";

    pub fn trials_csv(&self) -> String {
        let mut s = format!("{}\n", Self::TRIALS_CSV_HEADER);
        for (i, t) in self.per_trial.iter().enumerate() {
            s.push_str(&format!("{i},{},{},{}\n", t.p_err, t.p_err_stimulus, t.p_err_extraneous));
        }
        s
    }

    pub fn p_err(&self) -> Vec<f64> {
        self.per_trial.iter().map(|t| t.p_err).collect()
    }
}

/// Weights of `params` rebuilt from perturbed resistances. Draw order per
/// trial: feedback resistors of both arrays, then `(r_m1, r_m2)` per synapse
/// in compiled order, then input DAC gains.
fn perturbed(
    params: &MlpParams,
    compiled: &CompiledNetwork,
    tol: &ToleranceSet,
    rng: &mut SimRng,
) -> (MlpParams, [f64; N_INPUT]) {
    let mut r_f = [[0.0; AMP_ROWS]; 2];
    for layer in r_f.iter_mut() {
        for v in layer.iter_mut() {
            *v = compiled.r_f * (1.0 + relative_error(tol.r_f, rng));
        }
    }
    let mut flat = params.flat();
    for syn in &compiled.synapses {
        let (row1, row2, _) = placement(syn.weight);
        let rf = &r_f[syn.weight.layer()];
        let m1 = syn.nominals.r_m1 * (1.0 + relative_error(tol.r_m1, rng));
        let m2 = syn.nominals.r_m2 * (1.0 + relative_error(tol.r_m2, rng));
        flat[syn.weight.flat_index()] = rf[row1] / m1 - rf[row2] / m2;
    }
    let gains = std::array::from_fn(|_| 1.0 + relative_error(tol.input_dac, rng));
    let mut p = params.clone();
    p.set_flat(&flat);
    (p, gains)
}

/// P_err over the whole set, the S1-S4 subset and the Sr subset.
pub fn split_p_err(params: &MlpParams, test: &[SpikePattern], gains: Option<&[f64; N_INPUT]>) -> TrialResult {
    let (mut wrong, mut wrong_s, mut n_s, mut wrong_r, mut n_r) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for pat in test {
        let y = match gains {
            Some(g) => {
                let x: [f64; N_INPUT] = std::array::from_fn(|i| pat.values[i] * g[i]);
                params.forward(&x)
            }
            None => params.forward(&pat.values),
        };
        let miss = classify(&y) != pat.label;
        wrong += miss as usize;
        if pat.label == Label::Sr {
            n_r += 1;
            wrong_r += miss as usize;
        } else {
            n_s += 1;
            wrong_s += miss as usize;
        }
    }
    let pct = |e: usize, n: usize| if n == 0 { 0.0 } else { 100.0 * e as f64 / n as f64 };
    TrialResult {
        p_err: pct(wrong, test.len()),
        p_err_stimulus: pct(wrong_s, n_s),
        p_err_extraneous: pct(wrong_r, n_r),
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn run_trials(
    params: &MlpParams,
    compiled: &CompiledNetwork,
    tol: &ToleranceSet,
    test: &[SpikePattern],
    trials: usize,
    seed: u64,
) -> Vec<TrialResult> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, domain::TRIAL, t as u64);
            let (p, gains) = perturbed(params, compiled, tol, &mut rng);
            let g = (tol.input_dac > 0.0).then_some(&gains);
            split_p_err(&p, test, g)
        })
        .collect()
}

/// Tolerance analysis: the P_err distribution of the implemented network
/// under the given limits, and whether its maximum stays within `x_p`.
pub fn analyze_tolerances(
    params: &MlpParams,
    compiled: &CompiledNetwork,
    tol: &ToleranceSet,
    test: &[SpikePattern],
    opts: &AnalysisOptions,
) -> Result<MonteCarloReport> {
    tol.validate()?;
    if opts.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if test.is_empty() {
        return Err(Error::ShapeMismatch { expected: 1, got: 0 });
    }
    let (lo, hi) = opts.percentiles;
    if !(0.0 <= lo && lo <= hi && hi <= 100.0) {
        return Err(Error::InvalidConfig(format!("bad percentile pair ({lo}, {hi})")));
    }
    let per_trial = with_pool(opts.threads, || run_trials(params, compiled, tol, test, opts.trials, opts.seed))?;
    let nominal_p_err = split_p_err(&compiled.achieved_params(params), test, None).p_err;

    let all: Vec<f64> = per_trial.iter().map(|t| t.p_err).collect();
    let stim: Vec<f64> = per_trial.iter().map(|t| t.p_err_stimulus).collect();
    let extr: Vec<f64> = per_trial.iter().map(|t| t.p_err_extraneous).collect();
    let summary = Summary::of(&all, opts.percentiles);
    let summary_stimulus = Summary::of(&stim, opts.percentiles);
    let summary_extraneous = Summary::of(&extr, opts.percentiles);

    let mut weight_bounds = Vec::new();
    if opts.bound_trials > 0 {
        for (k, syn) in compiled.synapses.iter().enumerate() {
            let mut rng = substream(opts.seed, domain::BOUNDS, k as u64);
            let bounds = weight_error_bounds(&syn.nominals, tol, opts.bound_trials, opts.percentiles, &mut rng)?;
            weight_bounds.push(WeightBoundRecord { weight: syn.weight, w_nominal: syn.w_achieved, bounds });
        }
    }

    Ok(MonteCarloReport {
        trials: opts.trials,
        master_seed: opts.seed,
        tolerances: *tol,
        x_p: opts.x_p,
        percentiles: opts.percentiles,
        nominal_p_err,
        pass: summary.max <= opts.x_p,
        pass_stimulus: summary_stimulus.max <= opts.x_p,
        pass_extraneous: summary_extraneous.max <= opts.x_p,
        summary,
        summary_stimulus,
        summary_extraneous,
        weight_bounds,
        per_trial,
    })
}

/// Search schedule for tolerance synthesis: limits `base + s * direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentPlan {
    pub base: ToleranceSet,
    pub direction: ToleranceSet,
    /// Ascending scale factors evaluated before refinement.
    pub grid: Vec<f64>,
    pub trials: usize,
    /// Bisection stops once the bracket is this narrow.
    pub resolution: f64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            base: ToleranceSet { r_f: 0.01, ..ToleranceSet::default() },
            direction: ToleranceSet { r_m1: 1.0, r_m2: 1.0, ..ToleranceSet::default() },
            grid: vec![0.05, 0.10, 0.20, 0.30, 0.40, 0.50],
            trials: 1000,
            resolution: 0.01,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("experiment plan grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) || self.grid[0] < 0.0 {
            return Err(Error::InvalidConfig("grid must be ascending and non-negative".into()));
        }
        if self.trials == 0 || !(self.resolution > 0.0) {
            return Err(Error::InvalidConfig("plan needs trials >= 1 and a positive resolution".into()));
        }
        self.base.validate()
    }

    pub fn at(&self, s: f64) -> ToleranceSet {
        self.base.axpy(s, &self.direction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPoint {
    pub scale: f64,
    pub max_p_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    /// Largest passing scale found.
    pub scale: f64,
    pub tolerances: ToleranceSet,
    pub x_p: f64,
    pub evaluated: Vec<PlanPoint>,
}

/// Tolerance synthesis: the widest limits on the plan's ray that keep the
/// maximum trial P_err within `x_p`.
pub fn synthesize_tolerances(
    params: &MlpParams,
    compiled: &CompiledNetwork,
    test: &[SpikePattern],
    x_p: f64,
    plan: &ExperimentPlan,
    seed: u64,
    threads: Option<usize>,
) -> Result<SynthesisResult> {
    plan.validate()?;
    let opts = AnalysisOptions { trials: plan.trials, seed, x_p, threads, ..AnalysisOptions::default() };
    let mut evaluated = Vec::new();
    let mut eval = |s: f64| -> Result<bool> {
        let report = analyze_tolerances(params, compiled, &plan.at(s), test, &opts)?;
        evaluated.push(PlanPoint { scale: s, max_p_err: report.summary.max, pass: report.pass });
        Ok(report.pass)
    };
    if !eval(0.0)? {
        let nominal = split_p_err(&compiled.achieved_params(params), test, None).p_err;
        return Err(Error::NoPassingPoint { nominal, x_p });
    }
    let feasible = |s: f64| plan.at(s).validate().is_ok();
    let mut lo = 0.0;
    let mut hi = None;
    for &s in plan.grid.iter().filter(|s| **s > 0.0 && feasible(**s)) {
        if eval(s)? {
            lo = s;
        } else {
            hi = Some(s);
            break;
        }
    }
    if let Some(mut hi) = hi {
        while hi - lo > plan.resolution {
            let mid = 0.5 * (lo + hi);
            if eval(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    Ok(SynthesisResult { scale: lo, tolerances: plan.at(lo), x_p, evaluated })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_states: usize,
    pub p_err: f64,
}

/// Test P_err after rounding every weight to the weight states of `n`
/// evenly spaced resistances, for each `n` in `counts`.
pub fn discrete_state_sweep(
    params: &MlpParams,
    test: &[SpikePattern],
    counts: &[usize],
    range: &ResistanceRange,
    r_f: f64,
) -> Result<Vec<SweepPoint>> {
    range.validate()?;
    counts
        .iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::InvalidConfig(format!("n_states {n} < 2")));
            }
            let states = signed_weight_states(n, r_f, range);
            let p = quantized(params, &states);
            Ok(SweepPoint { n_states: n, p_err: split_p_err(&p, test, None).p_err })
        })
        .collect()
}

pub fn quantized(params: &MlpParams, states: &[f64]) -> MlpParams {
    let mut flat = params.flat();
    for id in WeightId::all() {
        let k = id.flat_index();
        flat[k] = quantize_weight(flat[k], states);
    }
    let mut p = params.clone();
    p.set_flat(&flat);
    p
}

/// Smallest swept `n` from which every larger swept count meets `x_p`.
pub fn n_star(points: &[SweepPoint], x_p: f64) -> Option<usize> {
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.n_states);
    let mut best = None;
    for p in sorted.iter().rev() {
        if p.p_err <= x_p {
            best = Some(p.n_states);
        } else {
            break;
        }
    }
    best
}

pub const SWEEP_CSV_HEADER: &str = "n_states,p_err";

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = format!("{SWEEP_CSV_HEADER}\n");
    for p in points {
        s.push_str(&format!("{},{}\n", p.n_states, p.p_err));
    }
    s
}
