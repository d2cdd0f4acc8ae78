//! Informational-level 16-8-4 perceptron with saturating-linear units,
//! the MSE / error-probability metrics and the decision rule.

mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, substream};

pub use train::{
    gradient, train_discrete, Direction, LearningCurve, StuckConstraint, StuckEntry, TrainConfig, TrainOutcome,
};

pub const N_INPUT: usize = 16;
pub const N_HIDDEN: usize = 8;
pub const N_OUTPUT: usize = 4;
/// Weights and biases in both layers.
pub const N_PARAMS: usize = N_INPUT * N_HIDDEN + N_HIDDEN + N_HIDDEN * N_OUTPUT + N_OUTPUT;

pub type Input = [f64; N_INPUT];
pub type Output = [f64; N_OUTPUT];

/// Saturating linear transfer function: `clamp(slope * u, lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatLin {
    pub slope: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for SatLin {
    fn default() -> Self {
        SatLin { slope: 1.0, lower: -1.0, upper: 1.0 }
    }
}

impl SatLin {
    #[inline]
    pub fn apply(&self, u: f64) -> f64 {
        (self.slope * u).clamp(self.lower, self.upper)
    }

    /// Zero in saturation, the slope inside the band (kinks included).
    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        let v = self.slope * u;
        if v >= self.lower && v <= self.upper {
            self.slope
        } else {
            0.0
        }
    }
}

/// Class labels: four stimulation sites and the extraneous class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    S1,
    S2,
    S3,
    S4,
    Sr,
}

impl Label {
    pub const ALL: [Label; 5] = [Label::S1, Label::S2, Label::S3, Label::S4, Label::Sr];
    pub const SITES: [Label; 4] = [Label::S1, Label::S2, Label::S3, Label::S4];

    /// Output-neuron index of a stimulus label; `None` for `Sr`.
    pub fn site_index(self) -> Option<usize> {
        match self {
            Label::S1 => Some(0),
            Label::S2 => Some(1),
            Label::S3 => Some(2),
            Label::S4 => Some(3),
            Label::Sr => None,
        }
    }

    pub fn from_site(index: usize) -> Option<Label> {
        Label::SITES.get(index).copied()
    }

    pub fn index(self) -> usize {
        self.site_index().unwrap_or(4)
    }

    /// Target vector: `+1` at the site's output, `-1` elsewhere.
    pub fn target(self) -> Output {
        let mut t = [-1.0; N_OUTPUT];
        if let Some(k) = self.site_index() {
            t[k] = 1.0;
        }
        t
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::S1 => "S1",
            Label::S2 => "S2",
            Label::S3 => "S3",
            Label::S4 => "S4",
            Label::Sr => "Sr",
        };
        f.write_str(s)
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S1" => Ok(Label::S1),
            "S2" => Ok(Label::S2),
            "S3" => Ok(Label::S3),
            "S4" => Ok(Label::S4),
            "Sr" => Ok(Label::Sr),
            other => Err(Error::InvalidConfig(format!("unknown label {other:?}"))),
        }
    }
}

/// Decision rule: `Sr` when no output is positive, otherwise the argmax
/// (lowest index wins ties).
pub fn classify(y: &Output) -> Label {
    let mut best = 0;
    for k in 1..N_OUTPUT {
        if y[k] > y[best] {
            best = k;
        }
    }
    if y[best] <= 0.0 {
        Label::Sr
    } else {
        Label::SITES[best]
    }
}

/// Weights, biases and transfer function of the double-layer perceptron.
///
/// `w_hidden[i][j]` connects input `i` to hidden neuron `j`;
/// `w_out[j][r]` connects hidden neuron `j` to output `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w_hidden: [[f64; N_HIDDEN]; N_INPUT],
    pub b_hidden: [f64; N_HIDDEN],
    pub w_out: [[f64; N_OUTPUT]; N_HIDDEN],
    pub b_out: [f64; N_OUTPUT],
    #[serde(default)]
    pub activation: SatLin,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self::zeros()
    }
}

impl MlpParams {
    pub fn zeros() -> Self {
        MlpParams {
            w_hidden: [[0.0; N_HIDDEN]; N_INPUT],
            b_hidden: [0.0; N_HIDDEN],
            w_out: [[0.0; N_OUTPUT]; N_HIDDEN],
            b_out: [0.0; N_OUTPUT],
            activation: SatLin::default(),
        }
    }

    /// Uniform `[-0.5, 0.5]` initialization from the run seed.
    pub fn random_init(seed: u64) -> Self {
        Self::random_init_indexed(seed, 0)
    }

    /// Initialization `index` of the run; index 0 equals [`Self::random_init`].
    pub fn random_init_indexed(seed: u64, index: u64) -> Self {
        let mut rng = substream(seed, domain::INIT, index);
        let mut flat = [0.0; N_PARAMS];
        for v in flat.iter_mut() {
            *v = rng.random_range(-0.5..=0.5);
        }
        let mut p = Self::zeros();
        p.set_flat(&flat);
        p
    }

    pub fn hidden_layer(&self, x: &Input) -> [f64; N_HIDDEN] {
        let mut h = self.b_hidden;
        for (xi, row) in x.iter().zip(&self.w_hidden) {
            for (hj, w) in h.iter_mut().zip(row) {
                *hj += w * xi;
            }
        }
        h.map(|u| self.activation.apply(u))
    }

    pub fn forward(&self, x: &Input) -> Output {
        let h = self.hidden_layer(x);
        let mut y = self.b_out;
        for (hj, row) in h.iter().zip(&self.w_out) {
            for (yr, w) in y.iter_mut().zip(row) {
                *yr += w * hj;
            }
        }
        y.map(|u| self.activation.apply(u))
    }

    pub fn predict(&self, x: &Input) -> Label {
        classify(&self.forward(x))
    }

    /// Parameter vector layout: hidden weights (input-major), hidden biases,
    /// output weights (hidden-major), output biases.
    pub fn flat(&self) -> [f64; N_PARAMS] {
        let mut out = [0.0; N_PARAMS];
        let mut k = 0;
        for row in &self.w_hidden {
            for &w in row {
                out[k] = w;
                k += 1;
            }
        }
        for &b in &self.b_hidden {
            out[k] = b;
            k += 1;
        }
        for row in &self.w_out {
            for &w in row {
                out[k] = w;
                k += 1;
            }
        }
        for &b in &self.b_out {
            out[k] = b;
            k += 1;
        }
        out
    }

    pub fn set_flat(&mut self, v: &[f64; N_PARAMS]) {
        let mut k = 0;
        for row in self.w_hidden.iter_mut() {
            for w in row.iter_mut() {
                *w = v[k];
                k += 1;
            }
        }
        for b in self.b_hidden.iter_mut() {
            *b = v[k];
            k += 1;
        }
        for row in self.w_out.iter_mut() {
            for w in row.iter_mut() {
                *w = v[k];
                k += 1;
            }
        }
        for b in self.b_out.iter_mut() {
            *b = v[k];
            k += 1;
        }
    }

    /// Largest weight magnitude (biases excluded).
    pub fn max_abs_weight(&self) -> f64 {
        self.w_hidden
            .iter()
            .flatten()
            .chain(self.w_out.iter().flatten())
            .fold(0.0_f64, |m, w| m.max(w.abs()))
    }
}

/// Which synaptic weight a flat index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum WeightId {
    Hidden { input: usize, neuron: usize },
    Output { input: usize, neuron: usize },
}

impl WeightId {
    pub fn flat_index(self) -> usize {
        match self {
            WeightId::Hidden { input, neuron } => input * N_HIDDEN + neuron,
            WeightId::Output { input, neuron } => {
                N_INPUT * N_HIDDEN + N_HIDDEN + input * N_OUTPUT + neuron
            }
        }
    }

    pub fn layer(self) -> usize {
        match self {
            WeightId::Hidden { .. } => 0,
            WeightId::Output { .. } => 1,
        }
    }

    /// Flat index is a weight (as opposed to a bias).
    pub fn from_flat(k: usize) -> Option<WeightId> {
        let hw = N_INPUT * N_HIDDEN;
        let ow_start = hw + N_HIDDEN;
        if k < hw {
            Some(WeightId::Hidden { input: k / N_HIDDEN, neuron: k % N_HIDDEN })
        } else if (ow_start..ow_start + N_HIDDEN * N_OUTPUT).contains(&k) {
            let r = k - ow_start;
            Some(WeightId::Output { input: r / N_OUTPUT, neuron: r % N_OUTPUT })
        } else {
            None
        }
    }

    pub fn all() -> impl Iterator<Item = WeightId> {
        (0..N_PARAMS).filter_map(WeightId::from_flat)
    }
}

/// Mean over patterns of the squared error summed over the four outputs.
pub fn mse(y: &[Output], yhat: &[Output]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::ShapeMismatch { expected: y.len(), got: yhat.len() });
    }
    if y.is_empty() {
        return Err(Error::ShapeMismatch { expected: 1, got: 0 });
    }
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| a.iter().zip(b).map(|(t, o)| (t - o) * (t - o)).sum::<f64>())
        .sum();
    Ok(total / y.len() as f64)
}

/// Percentage of mismatched labels.
pub fn p_err(predictions: &[Label], targets: &[Label]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::ShapeMismatch { expected: targets.len(), got: predictions.len() });
    }
    if targets.is_empty() {
        return Err(Error::ShapeMismatch { expected: 1, got: 0 });
    }
    let wrong = predictions.iter().zip(targets).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / targets.len() as f64 * 100.0)
}

/// Error probability of `params` over labelled inputs.
pub fn evaluate_p_err<'a, I>(params: &MlpParams, data: I) -> f64
where
    I: IntoIterator<Item = (&'a Input, Label)>,
{
    let (mut wrong, mut total) = (0usize, 0usize);
    for (x, label) in data {
        total += 1;
        if params.predict(x) != label {
            wrong += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        wrong as f64 / total as f64 * 100.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_forward(p: &MlpParams, x: &Input) -> Output {
        let f = |u: f64| (p.activation.slope * u).max(p.activation.lower).min(p.activation.upper);
        let mut y = [0.0; N_OUTPUT];
        for r in 0..N_OUTPUT {
            let mut acc = p.b_out[r];
            for j in 0..N_HIDDEN {
                let mut s = p.b_hidden[j];
                for i in 0..N_INPUT {
                    s += p.w_hidden[i][j] * x[i];
                }
                acc += p.w_out[j][r] * f(s);
            }
            y[r] = f(acc);
        }
        y
    }

    #[test]
    fn zero_network_outputs_zero() {
        assert_eq!(MlpParams::zeros().forward(&[0.7; N_INPUT]), [0.0; N_OUTPUT]);
    }

    #[test]
    fn single_path_propagates() {
        let mut p = MlpParams::zeros();
        p.w_hidden[3][2] = 1.0;
        p.w_out[2][1] = 1.0;
        let mut x = [0.0; N_INPUT];
        x[3] = 1.0;
        assert_eq!(p.forward(&x), [0.0, 1.0, 0.0, 0.0]);
        p.w_out[2][1] = 3.0;
        assert_eq!(p.forward(&x)[1], 1.0, "clipped at upper saturation");
    }

    #[test]
    fn forward_matches_naive_loops() {
        let mut rng = substream(11, 0, 0);
        for seed in 0..50 {
            let mut p = MlpParams::random_init(seed);
            for w in p.w_hidden.iter_mut().flatten() {
                *w *= 4.0;
            }
            let x: Input = std::array::from_fn(|_| rng.random_range(0.0..=1.0));
            let a = p.forward(&x);
            let b = naive_forward(&p, &x);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn mse_examples() {
        let y = [[1.0, -1.0, -1.0, -1.0]];
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(mse(&y, &[[0.0; 4]]).unwrap(), 4.0);
        assert!(matches!(mse(&y, &[]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn mse_matches_scalar_loop() {
        let mut rng = substream(5, 0, 0);
        let y: Vec<Output> = (0..37).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let z: Vec<Output> = (0..37).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
        let mut acc = 0.0;
        for h in 0..37 {
            for r in 0..4 {
                acc += (y[h][r] - z[h][r]).powi(2);
            }
        }
        assert!((mse(&y, &z).unwrap() - acc / 37.0).abs() < 1e-12);
    }

    #[test]
    fn p_err_examples() {
        let t = vec![Label::S1; 2000];
        let mut p = t.clone();
        assert_eq!(p_err(&p, &t).unwrap(), 0.0);
        for l in p.iter_mut().take(100) {
            *l = Label::Sr;
        }
        assert_eq!(p_err(&p, &t).unwrap(), 5.0);
        assert_eq!(p_err(&vec![Label::S2; 2000], &t).unwrap(), 100.0);
        assert!(p_err(&p[..3], &t).is_err());
    }

    #[test]
    fn classify_rules() {
        assert_eq!(classify(&[1.0, -1.0, -1.0, -1.0]), Label::S1);
        assert_eq!(classify(&[-1.0; 4]), Label::Sr);
        assert_eq!(classify(&[0.2, 0.2, -1.0, -1.0]), Label::S1);
        assert_eq!(classify(&[0.0, 0.0, 0.0, 0.0]), Label::Sr);
        for l in Label::ALL {
            assert_eq!(classify(&l.target()), l);
        }
    }

    #[test]
    fn flat_round_trip_and_weight_ids() {
        let p = MlpParams::random_init(3);
        let mut q = MlpParams::zeros();
        q.set_flat(&p.flat());
        assert_eq!(p, q);
        let flat = p.flat();
        for id in WeightId::all() {
            let v = match id {
                WeightId::Hidden { input, neuron } => p.w_hidden[input][neuron],
                WeightId::Output { input, neuron } => p.w_out[input][neuron],
            };
            assert_eq!(flat[id.flat_index()], v);
            assert_eq!(WeightId::from_flat(id.flat_index()), Some(id));
        }
        assert_eq!(WeightId::all().count(), 160);
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let a = MlpParams::random_init(9);
        assert_eq!(a, MlpParams::random_init(9));
        assert_ne!(a, MlpParams::random_init(10));
        assert!(a.flat().iter().all(|v| v.abs() <= 0.5));
    }
}
