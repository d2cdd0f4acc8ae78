//! Full-batch training with discrete-state projection and frozen synapses.
//!
//! The optimizer keeps a continuous latent parameter vector. Every epoch the
//! gradient is taken at the projected (hardware-realizable) parameters, the
//! latent vector moves along a descent direction chosen by backtracking line
//! search, and the result is projected again: each weight snaps to the
//! nearest allowed discrete value, stuck synapses keep their fixed value or
//! restricted set, and every weight stays inside `+/-w_max`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Input, MlpParams, Output, WeightId, N_HIDDEN, N_INPUT, N_OUTPUT, N_PARAMS};
use crate::error::{Error, Result};
use crate::mapping::quantize_weight;

const CHUNK: usize = 256;

/// Restriction on a synapse whose memristor(s) cannot be programmed freely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StuckConstraint {
    /// Both devices stuck: the weight is a constant.
    Fixed { value: f64 },
    /// One device stuck: the weight can move within a closed interval.
    Interval { lo: f64, hi: f64 },
    /// One device stuck with discrete programmable states.
    Set { values: Vec<f64> },
}

impl StuckConstraint {
    fn project(&self, w: f64) -> f64 {
        match self {
            StuckConstraint::Fixed { value } => *value,
            StuckConstraint::Interval { lo, hi } => w.clamp(*lo, *hi),
            StuckConstraint::Set { values } => quantize_weight(w, values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StuckEntry {
    pub weight: WeightId,
    pub constraint: StuckConstraint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SteepestDescent,
    /// Polak-Ribiere+ conjugate directions with restart on non-descent.
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mse_target: f64,
    pub max_epochs: usize,
    pub direction: Direction,
    pub initial_step: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub step_growth: f64,
    /// Upper bound on the line-search starting step.
    pub max_step: f64,
    /// Largest change of any single parameter in one epoch.
    pub max_delta: f64,
    pub discrete_states: Option<Vec<f64>>,
    pub w_max: Option<f64>,
    pub stuck_map: Vec<StuckEntry>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mse_target: 1e-4,
            max_epochs: 10_000,
            direction: Direction::ConjugateGradient,
            initial_step: 0.01,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
            step_growth: 2.0,
            max_step: 0.5,
            max_delta: 0.03,
            discrete_states: None,
            w_max: None,
            stuck_map: Vec::new(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mse_target > 0.0) {
            return Err(Error::InvalidConfig("mse_target must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if let Some(states) = &self.discrete_states {
            if states.is_empty() {
                return Err(Error::InvalidConfig("discrete_states is empty".into()));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.initial_step > 0.0) || !(self.max_step >= self.initial_step) {
            return Err(Error::InvalidConfig("line search parameters out of range".into()));
        }
        Ok(())
    }
}

/// Per-epoch training MSE; entry 0 is the initial network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub mse: Vec<f64>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mse\n");
        for (e, m) in self.mse.iter().enumerate() {
            s.push_str(&format!("{e},{m:e}\n"));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub curve: LearningCurve,
    pub epochs: usize,
    pub converged: bool,
}

struct Projector<'a> {
    states: Option<Vec<f64>>,
    w_max: Option<f64>,
    stuck: Vec<Option<&'a StuckConstraint>>,
    frozen: [bool; N_PARAMS],
}

impl<'a> Projector<'a> {
    fn new(cfg: &'a TrainConfig) -> Self {
        let mut stuck = vec![None; N_PARAMS];
        let mut frozen = [false; N_PARAMS];
        for entry in &cfg.stuck_map {
            let k = entry.weight.flat_index();
            stuck[k] = Some(&entry.constraint);
            frozen[k] = matches!(entry.constraint, StuckConstraint::Fixed { .. });
        }
        let mut states = cfg.discrete_states.clone();
        if let Some(s) = states.as_mut() {
            s.sort_by(f64::total_cmp);
        }
        Projector { states, w_max: cfg.w_max, stuck, frozen }
    }

    fn project(&self, latent: &[f64; N_PARAMS]) -> [f64; N_PARAMS] {
        let mut out = *latent;
        for (k, v) in out.iter_mut().enumerate() {
            if WeightId::from_flat(k).is_none() {
                continue;
            }
            if let Some(c) = self.stuck[k] {
                *v = c.project(*v);
                continue;
            }
            if let Some(m) = self.w_max {
                *v = v.clamp(-m, m);
            }
            if let Some(states) = &self.states {
                *v = quantize_weight(*v, states);
            }
        }
        out
    }
}

fn params_from(flat: &[f64; N_PARAMS], template: &MlpParams) -> MlpParams {
    let mut p = template.clone();
    p.set_flat(flat);
    p
}

/// Training MSE and its gradient with respect to the flat parameter vector.
pub fn gradient(p: &MlpParams, inputs: &[Input], targets: &[Output]) -> (f64, [f64; N_PARAMS]) {
    let n = inputs.len().max(1) as f64;
    let partials: Vec<(f64, Vec<f64>)> = inputs
        .par_chunks(CHUNK)
        .zip(targets.par_chunks(CHUNK))
        .map(|(xs, ys)| chunk_gradient(p, xs, ys))
        .collect();
    let mut loss = 0.0;
    let mut grad = [0.0; N_PARAMS];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    for g in grad.iter_mut() {
        *g /= n;
    }
    (loss / n, grad)
}

fn chunk_gradient(p: &MlpParams, xs: &[Input], ys: &[Output]) -> (f64, Vec<f64>) {
    let act = p.activation;
    let mut g = vec![0.0; N_PARAMS];
    let bh0 = N_INPUT * N_HIDDEN;
    let wo0 = bh0 + N_HIDDEN;
    let bo0 = wo0 + N_HIDDEN * N_OUTPUT;
    let mut loss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let mut hpre = p.b_hidden;
        for (xi, row) in x.iter().zip(&p.w_hidden) {
            for (h, w) in hpre.iter_mut().zip(row) {
                *h += w * xi;
            }
        }
        let h = hpre.map(|u| act.apply(u));
        let mut opre = p.b_out;
        for (hj, row) in h.iter().zip(&p.w_out) {
            for (o, w) in opre.iter_mut().zip(row) {
                *o += w * hj;
            }
        }
        let mut d_out = [0.0; N_OUTPUT];
        for r in 0..N_OUTPUT {
            let e = act.apply(opre[r]) - y[r];
            loss += e * e;
            d_out[r] = 2.0 * e * act.derivative(opre[r]);
        }
        let mut d_hid = [0.0; N_HIDDEN];
        for j in 0..N_HIDDEN {
            let mut s = 0.0;
            for r in 0..N_OUTPUT {
                g[wo0 + j * N_OUTPUT + r] += d_out[r] * h[j];
                s += p.w_out[j][r] * d_out[r];
            }
            d_hid[j] = s * act.derivative(hpre[j]);
        }
        for r in 0..N_OUTPUT {
            g[bo0 + r] += d_out[r];
        }
        for i in 0..N_INPUT {
            let xi = x[i];
            if xi != 0.0 {
                for j in 0..N_HIDDEN {
                    g[i * N_HIDDEN + j] += d_hid[j] * xi;
                }
            }
        }
        for j in 0..N_HIDDEN {
            g[bh0 + j] += d_hid[j];
        }
    }
    (loss, g)
}

fn loss_only(p: &MlpParams, inputs: &[Input], targets: &[Output]) -> f64 {
    let n = inputs.len().max(1) as f64;
    let total: f64 = inputs
        .par_chunks(CHUNK)
        .zip(targets.par_chunks(CHUNK))
        .map(|(xs, ys)| {
            xs.iter()
                .zip(ys)
                .map(|(x, y)| {
                    let o = p.forward(x);
                    o.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                })
                .sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    total / n
}

fn dot(a: &[f64; N_PARAMS], b: &[f64; N_PARAMS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the training MSE from `p0` under the projection constraints of
/// `cfg`. Returns the lowest-MSE projected parameters seen and the per-epoch
/// learning curve.
pub fn train_discrete(
    p0: &MlpParams,
    inputs: &[Input],
    targets: &[Output],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::ShapeMismatch { expected: 1, got: 0 });
    }
    if inputs.len() != targets.len() {
        return Err(Error::ShapeMismatch { expected: inputs.len(), got: targets.len() });
    }
    let projector = Projector::new(cfg);
    let mut latent = p0.flat();
    let mut current = params_from(&projector.project(&latent), p0);
    let (mut loss, mut grad) = gradient(&current, inputs, targets);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0 });
    }
    mask(&mut grad, &projector.frozen);

    let mut curve = LearningCurve { mse: vec![loss] };
    let mut best = (loss, current.clone());
    let mut step = cfg.initial_step;
    let mut dir = grad.map(|g| -g);
    let mut prev_grad = grad;
    let mut epochs = 0;
    let mut converged = loss <= cfg.mse_target;

    while !converged && epochs < cfg.max_epochs {
        epochs += 1;
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            dir = grad.map(|g| -g);
            slope = dot(&grad, &dir);
        }
        if slope == 0.0 {
            curve.mse.push(loss);
            break;
        }

        let dmax = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut alpha = step.min(cfg.max_delta / dmax);
        let mut accepted = None;
        let mut fallback = None;
        for _ in 0..=cfg.max_backtracks {
            let mut trial = latent;
            for (t, d) in trial.iter_mut().zip(&dir) {
                *t += alpha * d;
            }
            let cand = params_from(&projector.project(&trial), p0);
            let l = loss_only(&cand, inputs, targets);
            if l.is_finite() && l <= loss + cfg.armijo * alpha * slope {
                accepted = Some((trial, cand, l));
                break;
            }
            if fallback.is_none() && alpha <= cfg.initial_step {
                fallback = Some((trial, cand, l));
            }
            alpha *= cfg.backtrack;
        }

        let moved = accepted.is_some();
        let (trial, cand, l) = match accepted.or(fallback) {
            Some(v) => v,
            None => unreachable!("line search evaluates at least one point"),
        };
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: epochs });
        }
        // A rejected search still takes a plain fixed-rate step. This leaves
        // the corners of the saturating transfer function, where the gradient
        // misses the kink, and crosses rounding boundaries of the discrete
        // projection. The best point seen is kept separately.
        latent = trial;
        current = cand;
        step = if moved { (alpha * cfg.step_growth).min(cfg.max_step) } else { cfg.initial_step };

        let (new_loss, mut new_grad) = gradient(&current, inputs, targets);
        if !new_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: epochs });
        }
        mask(&mut new_grad, &projector.frozen);
        loss = new_loss;
        curve.mse.push(loss);
        if loss < best.0 {
            best = (loss, current.clone());
        }
        converged = loss <= cfg.mse_target;

        dir = match cfg.direction {
            Direction::SteepestDescent => new_grad.map(|g| -g),
            Direction::ConjugateGradient if moved => {
                let denom = dot(&prev_grad, &prev_grad);
                let beta = if denom > 0.0 {
                    let mut num = 0.0;
                    for k in 0..N_PARAMS {
                        num += new_grad[k] * (new_grad[k] - prev_grad[k]);
                    }
                    (num / denom).max(0.0)
                } else {
                    0.0
                };
                let mut d = [0.0; N_PARAMS];
                for k in 0..N_PARAMS {
                    d[k] = -new_grad[k] + beta * dir[k];
                }
                d
            }
            Direction::ConjugateGradient => new_grad.map(|g| -g),
        };
        prev_grad = new_grad;
        grad = new_grad;
    }

    Ok(TrainOutcome { params: best.1, curve, epochs, converged })
}

fn mask(grad: &mut [f64; N_PARAMS], frozen: &[bool; N_PARAMS]) {
    for (g, f) in grad.iter_mut().zip(frozen) {
        if *f {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::Label;
    use crate::rng::substream;
    use rand::Rng;

    fn central_difference(p: &MlpParams, xs: &[Input], ys: &[Output], k: usize, h: f64) -> f64 {
        let mut flat = p.flat();
        flat[k] += h;
        let plus = loss_only(&params_from(&flat, p), xs, ys);
        flat[k] -= 2.0 * h;
        let minus = loss_only(&params_from(&flat, p), xs, ys);
        (plus - minus) / (2.0 * h)
    }

    fn toy_set() -> (Vec<Input>, Vec<Output>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for site in 0..4 {
            for rep in 0..5 {
                let mut x = [0.1; N_INPUT];
                for c in 0..4 {
                    x[site * 4 + c] = 0.8 + 0.02 * rep as f64;
                }
                xs.push(x);
                ys.push(Label::SITES[site].target());
            }
        }
        (xs, ys)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = substream(21, 0, 0);
        let p = MlpParams::random_init(4);
        let xs: Vec<Input> =
            (0..20).map(|_| std::array::from_fn(|_| rng.random_range(0.0..0.3))).collect();
        let ys: Vec<Output> =
            (0..20).map(|_| std::array::from_fn(|_| rng.random_range(-0.5..0.5))).collect();
        let (_, g) = gradient(&p, &xs, &ys);
        for k in 0..N_PARAMS {
            let fd = central_difference(&p, &xs, &ys, k, 1e-5);
            let scale = g[k].abs().max(fd.abs()).max(1e-8);
            assert!((g[k] - fd).abs() / scale < 1e-4, "param {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn separable_toy_set_converges() {
        let (xs, ys) = toy_set();
        for direction in [Direction::ConjugateGradient, Direction::SteepestDescent] {
            for seed in 1..4 {
                let cfg = TrainConfig { max_epochs: 5000, direction, ..TrainConfig::default() };
                let out = train_discrete(&MlpParams::random_init(seed), &xs, &ys, &cfg).unwrap();
                let last = *out.curve.mse.last().unwrap();
                assert!(out.converged, "{direction:?} seed {seed}: final mse {last}");
                assert!(last <= 1e-4);
                assert!((loss_only(&out.params, &xs, &ys) - last).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn frozen_weight_is_held() {
        let (xs, ys) = toy_set();
        let id = WeightId::Hidden { input: 2, neuron: 5 };
        let cfg = TrainConfig {
            max_epochs: 200,
            stuck_map: vec![StuckEntry { weight: id, constraint: StuckConstraint::Fixed { value: 0.5 } }],
            ..TrainConfig::default()
        };
        let out = train_discrete(&MlpParams::random_init(2), &xs, &ys, &cfg).unwrap();
        assert_eq!(out.params.w_hidden[2][5], 0.5);
    }

    #[test]
    fn projection_keeps_weights_on_states() {
        let (xs, ys) = toy_set();
        let states = vec![-2.0, -1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0];
        let cfg = TrainConfig {
            max_epochs: 100,
            discrete_states: Some(states.clone()),
            ..TrainConfig::default()
        };
        let out = train_discrete(&MlpParams::random_init(3), &xs, &ys, &cfg).unwrap();
        for id in WeightId::all() {
            let w = out.params.flat()[id.flat_index()];
            assert!(states.contains(&w), "{w} not a state");
        }
        assert!(out.curve.mse.iter().all(|m| m.is_finite()));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = TrainConfig::default();
        assert!(train_discrete(&MlpParams::zeros(), &[], &[], &cfg).is_err());
        let bad = TrainConfig { max_epochs: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let empty = TrainConfig { discrete_states: Some(vec![]), ..TrainConfig::default() };
        assert!(empty.validate().is_err());
    }
}
