//! Weight <-> resistance-pair translation for differential synapses.
//!
//! A synapse is two memristors on adjacent rows of one column. With the
//! summing-amplifier feedback resistor `r_f`, the realized weight is
//! `r_f / r_m1 - r_f / r_m2`, where `r_m1` feeds the inverting input of the
//! differential stage.

use serde::{Deserialize, Serialize};

use crate::device::MemristorCell;
use crate::error::{Error, Result};
use crate::netmodel::{MlpParams, StuckConstraint, StuckEntry, WeightId, N_HIDDEN, N_INPUT, N_OUTPUT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseNominals {
    pub r_f: f64,
    pub r_m1: f64,
    pub r_m2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistanceRange {
    pub r_min: f64,
    pub r_max: f64,
    #[serde(default)]
    pub n_states: Option<usize>,
}

impl Default for ResistanceRange {
    fn default() -> Self {
        ResistanceRange { r_min: 10e3, r_max: 300e3, n_states: None }
    }
}

impl ResistanceRange {
    pub fn new(r_min: f64, r_max: f64) -> Self {
        ResistanceRange { r_min, r_max, n_states: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return Err(Error::InvalidConfig("need 0 < r_min < r_max".into()));
        }
        if matches!(self.n_states, Some(n) if n < 2) {
            return Err(Error::InvalidConfig("n_states must be at least 2".into()));
        }
        Ok(())
    }

    fn clamp(&self, r: f64) -> f64 {
        r.clamp(self.r_min, self.r_max)
    }

    /// `n` evenly spaced resistances from `r_min` to `r_max`.
    pub fn states(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2, "need at least two states");
        (0..n)
            .map(|k| self.r_min + (self.r_max - self.r_min) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

pub fn weight_from_resistances(s: &SynapseNominals) -> f64 {
    s.r_f / s.r_m1 - s.r_f / s.r_m2
}

/// Largest weight magnitude realizable in `range`.
pub fn w_max(r_f: f64, range: &ResistanceRange) -> f64 {
    r_f * (range.r_max - range.r_min) / (range.r_max * range.r_min)
}

/// Which member of a pair is held fixed while the other carries the weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// Opposing device at `r_max`: widest usable range.
    #[default]
    PinMax,
    /// Opposing device at a fixed mid-range resistance.
    Fixed { r_ref: f64 },
}

impl Reference {
    fn resistance(&self, range: &ResistanceRange) -> f64 {
        match *self {
            Reference::PinMax => range.r_max,
            Reference::Fixed { r_ref } => r_ref,
        }
    }
}

/// Inverse mapping with the default reference (`r_max`).
pub fn resistances_for_weight(w: f64, r_f: f64, range: &ResistanceRange) -> Result<SynapseNominals> {
    resistances_for_weight_with(w, r_f, range, Reference::PinMax)
}

pub fn resistances_for_weight_with(
    w: f64,
    r_f: f64,
    range: &ResistanceRange,
    reference: Reference,
) -> Result<SynapseNominals> {
    let r_ref = reference.resistance(range);
    let limit = r_f / range.r_min - r_f / r_ref;
    if !w.is_finite() || w.abs() > limit * (1.0 + 1e-12) {
        return Err(Error::WeightOutOfRange { weight: w, w_max: limit });
    }
    let free = range.clamp(r_f / (w.abs() + r_f / r_ref));
    Ok(if w >= 0.0 {
        SynapseNominals { r_f, r_m1: free, r_m2: r_ref }
    } else {
        SynapseNominals { r_f, r_m1: r_ref, r_m2: free }
    })
}

/// Weights reachable by stepping `r_m1` from `r_min` to `r_max` against a
/// fixed `r_m2_ref`, ascending.
pub fn discrete_weight_table(r_f: f64, r_m2_ref: f64, range: &ResistanceRange, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "step must be positive");
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let r = range.r_min + step * k as f64;
        if r > range.r_max * (1.0 + 1e-12) {
            break;
        }
        out.push(r_f / r - r_f / r_m2_ref);
        k += 1;
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Signed weight states for `n` evenly spaced resistance states, one device
/// of each pair pinned at `r_max`.
pub fn signed_weight_states(n: usize, r_f: f64, range: &ResistanceRange) -> Vec<f64> {
    let mut out: Vec<f64> = range
        .states(n)
        .into_iter()
        .flat_map(|r| {
            let w = r_f / r - r_f / range.r_max;
            [w, 0.0 - w]
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + a.abs()));
    out
}

/// Nearest member of the ascending `states`; exact midpoints go to the
/// smaller magnitude.
pub fn quantize_weight(w: f64, states: &[f64]) -> f64 {
    assert!(!states.is_empty(), "no states to quantize to");
    let i = states.partition_point(|s| *s < w);
    if i == 0 {
        return states[0];
    }
    if i == states.len() {
        return states[i - 1];
    }
    let (lo, hi) = (states[i - 1], states[i]);
    let (dl, dh) = (w - lo, hi - w);
    if dl < dh {
        lo
    } else if dh < dl {
        hi
    } else if lo.abs() <= hi.abs() {
        lo
    } else {
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StuckCompensation {
    pub nominals: SynapseNominals,
    pub achieved_w: f64,
    /// Set when both devices are stuck: the weight is a constant.
    pub fixed_bias: Option<f64>,
}

/// Realizes `target_w` on a pair where one or both devices may be stuck.
pub fn compensate_stuck(
    pair: (&MemristorCell, &MemristorCell),
    target_w: f64,
    r_f: f64,
    range: &ResistanceRange,
    reference: Reference,
) -> StuckCompensation {
    let nominals = match (pair.0.stuck, pair.1.stuck) {
        (None, None) => {
            let limit = r_f / range.r_min - r_f / reference.resistance(range);
            let w = target_w.clamp(-limit, limit);
            resistances_for_weight_with(w, r_f, range, reference).expect("clamped weight is realizable")
        }
        (None, Some(r_m2)) => {
            // r_f / r_m1 = w + r_f / r_m2
            let g = target_w + r_f / r_m2;
            let r_m1 = if g > 0.0 { range.clamp(r_f / g) } else { range.r_max };
            SynapseNominals { r_f, r_m1, r_m2 }
        }
        (Some(r_m1), None) => {
            // r_f / r_m2 = r_f / r_m1 - w
            let g = r_f / r_m1 - target_w;
            let r_m2 = if g > 0.0 { range.clamp(r_f / g) } else { range.r_max };
            SynapseNominals { r_f, r_m1, r_m2 }
        }
        (Some(r_m1), Some(r_m2)) => SynapseNominals { r_f, r_m1, r_m2 },
    };
    let achieved_w = weight_from_resistances(&nominals);
    let fixed_bias = (pair.0.is_stuck() && pair.1.is_stuck()).then_some(achieved_w);
    StuckCompensation { nominals, achieved_w, fixed_bias }
}

/// Training-time restriction implied by a (partly) stuck pair, or `None`
/// when both devices are free.
pub fn stuck_constraint(
    pair: (&MemristorCell, &MemristorCell),
    r_f: f64,
    range: &ResistanceRange,
    states: Option<&[f64]>,
) -> Option<StuckConstraint> {
    let free = |stuck_other: f64, sign: f64| -> StuckConstraint {
        let rs: Vec<f64> = match states {
            Some(s) => s.to_vec(),
            None => vec![range.r_min, range.r_max],
        };
        let mut ws: Vec<f64> = rs.iter().map(|r| sign * (r_f / r - r_f / stuck_other)).collect();
        ws.sort_by(f64::total_cmp);
        match states {
            Some(_) => StuckConstraint::Set { values: ws },
            None => StuckConstraint::Interval { lo: ws[0], hi: ws[ws.len() - 1] },
        }
    };
    match (pair.0.stuck, pair.1.stuck) {
        (None, None) => None,
        (None, Some(r_m2)) => Some(free(r_m2, 1.0)),
        (Some(r_m1), None) => Some(free(r_m1, -1.0)),
        (Some(a), Some(b)) => Some(StuckConstraint::Fixed { value: r_f / a - r_f / b }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingConfig {
    pub r_f: f64,
    pub range: ResistanceRange,
    pub reference: Reference,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig { r_f: 100e3, range: ResistanceRange::default(), reference: Reference::PinMax }
    }
}

impl MappingConfig {
    pub fn w_max(&self) -> f64 {
        self.r_f / self.range.r_min - self.r_f / self.reference.resistance(&self.range)
    }
}

/// A device known to be frozen in crossbar `layer` (0 hidden, 1 output).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StuckCell {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
    pub resistance: f64,
}

/// Crossbar rows `(r_m1, r_m2)` and column of a weight.
pub fn placement(id: WeightId) -> (usize, usize, usize) {
    match id {
        WeightId::Hidden { input, neuron } | WeightId::Output { input, neuron } => {
            (2 * neuron, 2 * neuron + 1, input)
        }
    }
}

fn pair_cells(faults: &[StuckCell], id: WeightId, range: &ResistanceRange) -> (MemristorCell, MemristorCell) {
    let (r1, r2, col) = placement(id);
    let find = |row: usize| {
        faults
            .iter()
            .find(|f| f.layer == id.layer() && f.row == row && f.col == col)
            .map(|f| MemristorCell::stuck_at(f.resistance))
            .unwrap_or_else(|| MemristorCell::new(range.r_max))
    };
    (find(r1), find(r2))
}

/// Stuck-map entries for training from a fault list.
pub fn stuck_map(faults: &[StuckCell], cfg: &MappingConfig, resistance_states: Option<&[f64]>) -> Vec<StuckEntry> {
    WeightId::all()
        .filter_map(|id| {
            let (a, b) = pair_cells(faults, id, &cfg.range);
            stuck_constraint((&a, &b), cfg.r_f, &cfg.range, resistance_states)
                .map(|constraint| StuckEntry { weight: id, constraint })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompiledSynapse {
    pub weight: WeightId,
    pub w_target: f64,
    pub nominals: SynapseNominals,
    pub w_achieved: f64,
    pub stuck: bool,
}

/// Resistance pairs for every synapse of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledNetwork {
    pub r_f: f64,
    pub synapses: Vec<CompiledSynapse>,
}

impl CompiledNetwork {
    pub const CSV_HEADER: &'static str = "layer,neuron,input,w_target,r_m1,r_m2,w_achieved,stuck_flag";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for syn in &self.synapses {
            let (layer, neuron, input) = match syn.weight {
                WeightId::Hidden { input, neuron } => (0, neuron, input),
                WeightId::Output { input, neuron } => (1, neuron, input),
            };
            s.push_str(&format!(
                "{layer},{neuron},{input},{},{},{},{},{}\n",
                syn.w_target, syn.nominals.r_m1, syn.nominals.r_m2, syn.w_achieved, syn.stuck as u8
            ));
        }
        s
    }

    /// `template` with every weight replaced by its realized value.
    pub fn achieved_params(&self, template: &MlpParams) -> MlpParams {
        let mut flat = template.flat();
        for syn in &self.synapses {
            flat[syn.weight.flat_index()] = syn.w_achieved;
        }
        let mut p = template.clone();
        p.set_flat(&flat);
        p
    }

    pub fn synapse(&self, id: WeightId) -> Option<&CompiledSynapse> {
        self.synapses.iter().find(|s| s.weight == id)
    }
}

/// Compiles every weight to a resistance pair, compensating stuck devices.
pub fn compile_network(params: &MlpParams, cfg: &MappingConfig, faults: &[StuckCell]) -> Result<CompiledNetwork> {
    cfg.range.validate()?;
    let limit = cfg.w_max();
    let mut synapses = Vec::with_capacity(N_INPUT * N_HIDDEN + N_HIDDEN * N_OUTPUT);
    let flat = params.flat();
    for id in WeightId::all() {
        let w = flat[id.flat_index()];
        let (a, b) = pair_cells(faults, id, &cfg.range);
        let stuck = a.is_stuck() || b.is_stuck();
        if !stuck && w.abs() > limit * (1.0 + 1e-12) {
            return Err(Error::WeightOutOfRange { weight: w, w_max: limit });
        }
        let comp = compensate_stuck((&a, &b), w, cfg.r_f, &cfg.range, cfg.reference);
        synapses.push(CompiledSynapse {
            weight: id,
            w_target: w,
            nominals: comp.nominals,
            w_achieved: comp.achieved_w,
            stuck,
        });
    }
    Ok(CompiledNetwork { r_f: cfg.r_f, synapses })
}

#[cfg(test)]
mod tests {
    use super::*;

    const RF: f64 = 100e3;

    #[test]
    fn weight_examples() {
        let s = SynapseNominals { r_f: RF, r_m1: 50e3, r_m2: 50e3 };
        assert_eq!(weight_from_resistances(&s), 0.0);
        let s = SynapseNominals { r_f: RF, r_m1: 10e3, r_m2: 300e3 };
        assert!((weight_from_resistances(&s) - 9.6667).abs() < 1e-4);
        let s = SynapseNominals { r_f: RF, r_m1: 322.9e3, r_m2: 12.2e3 };
        assert!((weight_from_resistances(&s) - (-7.888)).abs() < 1e-3);
    }

    #[test]
    fn w_max_table() {
        let w = |lo: f64, hi: f64| w_max(RF, &ResistanceRange::new(lo, hi));
        assert!((w(10e3, 300e3) - 9.67).abs() < 5e-3);
        assert!((w(10e3, 100e3) - 9.00).abs() < 5e-3);
        assert!((w(10e3, 200e3) - 9.50).abs() < 5e-3);
        assert!((w(20e3, 300e3) - 4.67).abs() < 5e-3);
        assert!((w(5e3, 300e3) - 19.67).abs() < 5e-3);
    }

    #[test]
    fn w_max_sensitivity_asymmetry() {
        let a = w_max(RF, &ResistanceRange::new(10e3, 100e3));
        let b = w_max(RF, &ResistanceRange::new(10e3, 300e3));
        assert!((b - a) / a < 0.08);
        let c = w_max(RF, &ResistanceRange::new(20e3, 300e3));
        let d = w_max(RF, &ResistanceRange::new(5e3, 300e3));
        assert!(d / c > 4.0);
    }

    #[test]
    fn inverse_examples() {
        let range = ResistanceRange::default();
        let s = resistances_for_weight(0.0, RF, &range).unwrap();
        assert_eq!((s.r_m1, s.r_m2), (300e3, 300e3));
        let s60 = ResistanceRange::new(10e3, 60e3);
        let s = resistances_for_weight(7.0, RF, &s60).unwrap();
        assert!((s.r_m1 - 11.5e3).abs() < 0.1e3, "{}", s.r_m1);
        let s = resistances_for_weight(8.0, RF, &s60).unwrap();
        assert!((s.r_m1 - 10.3e3).abs() < 0.1e3, "{}", s.r_m1);
        let s = resistances_for_weight(-3.0, RF, &range).unwrap();
        assert_eq!(s.r_m1, 300e3);
        assert!((weight_from_resistances(&s) + 3.0).abs() < 1e-12);
        assert!(matches!(
            resistances_for_weight(9.7, RF, &range),
            Err(Error::WeightOutOfRange { .. })
        ));
    }

    #[test]
    fn fixed_reference_inverse() {
        let range = ResistanceRange::new(10e3, 300e3);
        let reference = Reference::Fixed { r_ref: 60e3 };
        for w in [-5.0, -0.3, 0.0, 1.0, 4.0] {
            let s = resistances_for_weight_with(w, RF, &range, reference).unwrap();
            assert!((weight_from_resistances(&s) - w).abs() < 1e-12);
        }
        let s = resistances_for_weight_with(1.0, RF, &range, reference).unwrap();
        assert!((s.r_m1 - 37.5e3).abs() < 1e-6);
    }

    #[test]
    fn discrete_table_regime() {
        let range = ResistanceRange::new(10e3, 60e3);
        let t = discrete_weight_table(RF, 60e3, &range, 5e3);
        assert_eq!(t.len(), 11);
        let count = |lo: f64, hi: f64| t.iter().filter(|w| **w >= lo && **w < hi).count();
        assert_eq!((count(0.0, 1.0), count(1.0, 2.0), count(2.0, 9.0)), (5, 2, 4));
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        let ends = discrete_weight_table(RF, 60e3, &range, 50e3);
        assert_eq!(ends.len(), 2);
        assert!(ends[0].abs() < 1e-12);
    }

    #[test]
    fn quantize_examples() {
        let states = [0.833, 1.190, 1.667];
        assert_eq!(quantize_weight(1.190, &states), 1.190);
        assert_eq!(quantize_weight(1.4, &states), 1.190);
        assert_eq!(quantize_weight(-7.0, &states), 0.833);
        assert_eq!(quantize_weight(0.5, &[0.0, 1.0]), 0.0);
        assert_eq!(quantize_weight(-0.5, &[-1.0, 0.0]), 0.0);
        assert_eq!(quantize_weight(0.0, &[-1.0, 1.0]), -1.0);
    }

    #[test]
    fn signed_states_are_symmetric() {
        let range = ResistanceRange::new(10e3, 60e3);
        let s = signed_weight_states(11, RF, &range);
        assert_eq!(s.len(), 21);
        for (a, b) in s.iter().zip(s.iter().rev()) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn compensation_cases() {
        let range = ResistanceRange::default();
        let free = MemristorCell::new(300e3);
        let c = compensate_stuck((&free, &free), 2.0, RF, &range, Reference::PinMax);
        assert_eq!(c.nominals, resistances_for_weight(2.0, RF, &range).unwrap());
        assert!(c.fixed_bias.is_none());

        let m2 = MemristorCell::stuck_at(60e3);
        let c = compensate_stuck((&free, &m2), 1.0, RF, &range, Reference::PinMax);
        assert!((c.nominals.r_m1 - 37.5e3).abs() < 1e-6);
        assert!((c.achieved_w - 1.0).abs() < 1e-12);

        let a = MemristorCell::stuck_at(20e3);
        let b = MemristorCell::stuck_at(40e3);
        let c = compensate_stuck((&a, &b), -4.0, RF, &range, Reference::PinMax);
        assert!((c.achieved_w - 2.5).abs() < 1e-12);
        assert_eq!(c.fixed_bias, Some(c.achieved_w));

        // unreachable target: the free device saturates at the range edge
        let m1 = MemristorCell::stuck_at(12e3);
        let c = compensate_stuck((&m1, &free), -5.0, RF, &range, Reference::PinMax);
        assert_eq!(c.nominals.r_m2, 10e3);
        assert!(c.achieved_w > -5.0);
    }

    #[test]
    fn stuck_constraints() {
        let range = ResistanceRange::default();
        let free = MemristorCell::new(300e3);
        assert!(stuck_constraint((&free, &free), RF, &range, None).is_none());
        let m2 = MemristorCell::stuck_at(60e3);
        match stuck_constraint((&free, &m2), RF, &range, None).unwrap() {
            StuckConstraint::Interval { lo, hi } => {
                assert!((lo - (RF / 300e3 - RF / 60e3)).abs() < 1e-12);
                assert!((hi - (RF / 10e3 - RF / 60e3)).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let both = stuck_constraint((&MemristorCell::stuck_at(20e3), &MemristorCell::stuck_at(40e3)), RF, &range, None);
        assert_eq!(both, Some(StuckConstraint::Fixed { value: 2.5 }));
    }

    #[test]
    fn compile_round_trip() {
        let mut p = MlpParams::random_init(5);
        p.w_hidden[0][0] = 0.0;
        let cfg = MappingConfig::default();
        let c = compile_network(&p, &cfg, &[]).unwrap();
        assert_eq!(c.synapses.len(), 160);
        let back = c.achieved_params(&p);
        for (a, b) in back.flat().iter().zip(p.flat().iter()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        assert_eq!(c.to_csv().lines().count(), 161);

        let faults = [StuckCell { layer: 0, row: 0, col: 0, resistance: 50e3 }];
        let c = compile_network(&p, &cfg, &faults).unwrap();
        let s = c.synapse(WeightId::Hidden { input: 0, neuron: 0 }).unwrap();
        assert!(s.stuck);
        assert_eq!(s.nominals.r_m1, 50e3);
    }

    mod props {
        use super::*;
        use proptest::{prop_assert, proptest};

        proptest! {
            #[test]
            fn weight_monotone_in_each_resistance(
                m1 in 10e3..300e3f64, m2 in 10e3..300e3f64, d in 1.0..1e4f64,
            ) {
                let w = |a, b| weight_from_resistances(&SynapseNominals { r_f: RF, r_m1: a, r_m2: b });
                prop_assert!(w(m1 + d, m2) < w(m1, m2));
                prop_assert!(w(m1, m2 + d) > w(m1, m2));
            }

            #[test]
            fn weight_bounded_by_w_max(m1 in 10e3..=300e3f64, m2 in 10e3..=300e3f64) {
                let range = ResistanceRange::default();
                let w = weight_from_resistances(&SynapseNominals { r_f: RF, r_m1: m1, r_m2: m2 });
                prop_assert!(w.abs() <= w_max(RF, &range) * (1.0 + 1e-12));
            }

            #[test]
            fn weight_linear_in_r_f(m1 in 10e3..300e3f64, m2 in 10e3..300e3f64, k in 0.1..10.0f64) {
                let w = |rf| weight_from_resistances(&SynapseNominals { r_f: rf, r_m1: m1, r_m2: m2 });
                prop_assert!((w(k * RF) - k * w(RF)).abs() <= 1e-12 * (1.0 + w(RF).abs() * k));
            }

            #[test]
            fn round_trip_is_exact(ws in proptest::collection::vec(-9.6..9.6f64, 1000)) {
                let range = ResistanceRange::default();
                for w in ws {
                    let s = resistances_for_weight(w, RF, &range).unwrap();
                    prop_assert!(s.r_m1 >= range.r_min && s.r_m1 <= range.r_max);
                    prop_assert!(s.r_m2 >= range.r_min && s.r_m2 <= range.r_max);
                    prop_assert!((weight_from_resistances(&s) - w).abs() <= 1e-12);
                }
            }

            #[test]
            fn quantize_is_monotone_and_idempotent(a in -12.0..12.0f64, b in -12.0..12.0f64, n in 2usize..40) {
                let states = signed_weight_states(n, RF, &ResistanceRange::new(10e3, 60e3));
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let (ql, qh) = (quantize_weight(lo, &states), quantize_weight(hi, &states));
                prop_assert!(ql <= qh);
                prop_assert!(quantize_weight(ql, &states) == ql);
                prop_assert!(states.contains(&ql));
            }
        }
    }
}
