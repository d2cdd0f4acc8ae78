//! Passive memristor array with its amplifier chain.
//!
//! Row `r` feeds an inverting summing amplifier with feedback resistor
//! `feedback[r]`; rows `2k` (R_M1) and `2k + 1` (R_M2) feed the differential
//! amplifier of neuron `k`. Columns carry the input voltages.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{program_with, DeviceParams, MemristorCell, ProgramLog, Pulse};
use crate::error::{Error, Result};
use crate::mapping::{placement, CompiledNetwork, StuckCell};
use crate::netmodel::{Input, MlpParams, Output, WeightId, N_HIDDEN, N_INPUT, N_OUTPUT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossbarConfig {
    pub rows: usize,
    pub cols: usize,
    pub r_f: f64,
    pub r_1: f64,
    pub r_2: f64,
    /// Series resistor of the output divider; zero disables the divider.
    pub r_3: f64,
    pub r_4: f64,
    /// Activation clipping level of the differential stage.
    pub u_sat: f64,
    /// Rail of the row summing amplifiers; `None` models ideal amplifiers.
    pub u_rail: Option<f64>,
    pub u_in_max: f64,
    pub resistor_tolerance: f64,
    pub adc_bits: u32,
    /// ADC input range is `[-adc_full_scale, adc_full_scale]` volts.
    pub adc_full_scale: f64,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        CrossbarConfig {
            rows: 16,
            cols: 16,
            r_f: 100e3,
            r_1: 10e3,
            r_2: 10e3,
            r_3: 0.0,
            r_4: 10e3,
            u_sat: 1.0,
            u_rail: None,
            u_in_max: 1.0,
            resistor_tolerance: 0.01,
            adc_bits: 12,
            adc_full_scale: 5.0,
        }
    }
}

impl CrossbarConfig {
    pub fn k_diff(&self) -> f64 {
        self.r_2 / self.r_1
    }

    pub fn k_scale(&self) -> f64 {
        self.r_4 / (self.r_3 + self.r_4)
    }

    /// One ADC least-significant bit, volts.
    pub fn adc_step(&self) -> f64 {
        2.0 * self.adc_full_scale / f64::from(1u32 << self.adc_bits)
    }

    pub fn validate(&self, device: &DeviceParams) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.rows == 0 || self.cols == 0 {
            return bad("crossbar needs at least one row and column");
        }
        if !self.rows.is_multiple_of(2) {
            return Err(Error::OddRowCount(self.rows));
        }
        if !(self.r_f > 0.0 && self.r_1 > 0.0 && self.r_2 > 0.0 && self.r_4 > 0.0 && self.r_3 >= 0.0) {
            return bad("amplifier resistors must be positive (r_3 may be zero)");
        }
        if !(self.u_in_max > 0.0 && self.u_in_max < device.v_threshold) {
            return bad("u_in_max must stay below the device switching threshold");
        }
        if !(self.u_sat > 0.0) || matches!(self.u_rail, Some(r) if !(r > 0.0)) {
            return bad("saturation levels must be positive");
        }
        if !(0.0..1.0).contains(&self.resistor_tolerance) {
            return bad("resistor_tolerance must be in [0, 1)");
        }
        if !(1..=24).contains(&self.adc_bits) || !(self.adc_full_scale > 0.0) {
            return bad("ADC resolution out of range");
        }
        let k = self.k_scale();
        if !(k > 0.0 && k <= 1.0) {
            return bad("K_SCALE must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BiasMode {
    Set,
    Reset { amplitude: f64 },
    Read,
}

/// Node voltages for addressing one cell. The drop across cell `(r, c)` is
/// `col_v[c] - row_v[r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasAssignment {
    pub row_v: Vec<f64>,
    pub col_v: Vec<f64>,
    pub target: (usize, usize),
    pub mode: BiasMode,
}

impl BiasAssignment {
    pub fn drop(&self, row: usize, col: usize) -> f64 {
        self.col_v[col] - self.row_v[row]
    }

    /// Largest drop magnitude over every cell except the target.
    pub fn max_non_target_drop(&self) -> f64 {
        let mut m = 0.0f64;
        for r in 0..self.row_v.len() {
            for c in 0..self.col_v.len() {
                if (r, c) != self.target {
                    m = m.max(self.drop(r, c).abs());
                }
            }
        }
        m
    }

    pub fn check(&self, limit: f64) -> Result<()> {
        for r in 0..self.row_v.len() {
            for c in 0..self.col_v.len() {
                let d = self.drop(r, c);
                if (r, c) != self.target && d.abs() > limit + 1e-12 {
                    return Err(Error::BiasViolation { row: r, col: c, drop: d, limit });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossbar {
    pub config: CrossbarConfig,
    pub device: DeviceParams,
    /// Row-major, `rows * cols`.
    grid: Vec<MemristorCell>,
    /// Feedback resistor of each row's summing amplifier.
    feedback: Vec<f64>,
}

impl Crossbar {
    /// Every cell starts in the high-resistance state.
    pub fn new(config: CrossbarConfig, device: DeviceParams) -> Result<Self> {
        config.validate(&device)?;
        device.validate()?;
        let grid = vec![MemristorCell::new(device.r_hrs_nominal); config.rows * config.cols];
        let feedback = vec![config.r_f; config.rows];
        Ok(Crossbar { config, device, grid, feedback })
    }

    pub fn rows(&self) -> usize {
        self.config.rows
    }

    pub fn cols(&self) -> usize {
        self.config.cols
    }

    fn index(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.rows() || col >= self.cols() {
            return Err(Error::CellOutOfBounds { row, col, rows: self.rows(), cols: self.cols() });
        }
        Ok(row * self.cols() + col)
    }

    pub fn cell(&self, row: usize, col: usize) -> Result<&MemristorCell> {
        let i = self.index(row, col)?;
        Ok(&self.grid[i])
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> Result<&mut MemristorCell> {
        let i = self.index(row, col)?;
        Ok(&mut self.grid[i])
    }

    pub fn cells(&self) -> &[MemristorCell] {
        &self.grid
    }

    /// Writes a resistance directly, bypassing programming. Stuck cells keep
    /// their frozen value.
    pub fn set_resistance(&mut self, row: usize, col: usize, r: f64) -> Result<()> {
        let cell = self.cell_mut(row, col)?;
        if let Some(s) = cell.stuck {
            cell.resistance = s;
        } else {
            cell.resistance = r;
        }
        Ok(())
    }

    pub fn feedback(&self) -> &[f64] {
        &self.feedback
    }

    pub fn set_feedback(&mut self, feedback: Vec<f64>) -> Result<()> {
        if feedback.len() != self.rows() {
            return Err(Error::ShapeMismatch { expected: self.rows(), got: feedback.len() });
        }
        self.feedback = feedback;
        Ok(())
    }

    fn check_inputs(&self, inputs: &[f64]) -> Result<()> {
        if inputs.len() != self.cols() {
            return Err(Error::ShapeMismatch { expected: self.cols(), got: inputs.len() });
        }
        for (index, &value) in inputs.iter().enumerate() {
            if !(value.abs() <= self.config.u_in_max) {
                return Err(Error::InputOverrange { index, value, limit: self.config.u_in_max });
            }
        }
        Ok(())
    }

    fn row_sum_unchecked(&self, row: usize, inputs: &[f64]) -> f64 {
        let cells = &self.grid[row * self.cols()..(row + 1) * self.cols()];
        let current: f64 = inputs.iter().zip(cells).map(|(v, c)| v / c.resistance).sum();
        let u = -self.feedback[row] * current;
        match self.config.u_rail {
            Some(rail) => u.clamp(-rail, rail),
            None => u,
        }
    }

    /// Output of the inverting summing amplifier on `row`.
    pub fn row_summed_voltage(&self, row: usize, inputs: &[f64]) -> Result<f64> {
        self.index(row, 0)?;
        self.check_inputs(inputs)?;
        Ok(self.row_sum_unchecked(row, inputs))
    }

    /// Differential-amplifier outputs before activation clipping.
    pub fn layer_preactivation(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        if !self.rows().is_multiple_of(2) {
            return Err(Error::OddRowCount(self.rows()));
        }
        self.check_inputs(inputs)?;
        let k = self.config.k_diff();
        Ok((0..self.rows() / 2)
            .map(|n| k * (self.row_sum_unchecked(2 * n + 1, inputs) - self.row_sum_unchecked(2 * n, inputs)))
            .collect())
    }

    /// Clipped and scaled neuron outputs.
    pub fn layer_forward(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.layer_preactivation(inputs)?.into_iter().map(|u| self.activate(u)).collect())
    }

    pub fn activate(&self, u: f64) -> f64 {
        let s = self.config.u_sat;
        u.clamp(-s, s) * self.config.k_scale()
    }

    /// Node voltages for a pulse or read on `target`.
    pub fn bias_assignment(&self, target: (usize, usize), mode: BiasMode) -> Result<BiasAssignment> {
        let (tr, tc) = target;
        self.index(tr, tc)?;
        let half = self.device.v_threshold;
        let (rows_other, cols_other, col_target) = match mode {
            BiasMode::Set => (self.device.v_set, self.device.v_set / 2.0, self.device.v_set),
            BiasMode::Reset { amplitude } => (half, half, amplitude),
            BiasMode::Read => (0.0, 0.0, self.device.v_read),
        };
        let mut row_v = vec![rows_other; self.rows()];
        let mut col_v = vec![cols_other; self.cols()];
        row_v[tr] = 0.0;
        col_v[tc] = col_target;
        Ok(BiasAssignment { row_v, col_v, target, mode })
    }

    /// Digitized read-back: the summing amplifier converts the read current
    /// to `U_OUT = U_TEST * r_f / R`, the ADC quantizes it, and the
    /// resistance is inferred back from the code.
    pub fn measure_resistance(&self, row: usize, col: usize) -> Result<f64> {
        self.readout(row, self.cell(row, col)?)
    }

    fn readout(&self, row: usize, cell: &MemristorCell) -> Result<f64> {
        let u_test = self.device.v_read;
        let i = cell.read_current(u_test, &self.device)?;
        let u_out = (self.feedback[row] * i).min(self.config.adc_full_scale);
        let step = self.config.adc_step();
        let code = (u_out / step).round().max(1.0);
        Ok(resistance_from_readout(u_test, self.feedback[row], code * step))
    }

    /// Write-verify on one cell through the digitized read-back, checking
    /// the bias map of every pulse.
    pub fn program_cell(&mut self, target: (usize, usize), target_r: f64, rng: &mut impl Rng) -> Result<ProgramLog> {
        let (row, col) = target;
        let i = self.index(row, col)?;
        let mut cell = self.grid[i];
        let limit = self.device.v_threshold;
        let this = &*self;
        let log = program_with(
            &mut cell,
            target_r,
            &this.device,
            rng,
            |c| this.readout(row, c),
            |pulse| {
                let mode = match pulse {
                    Pulse::Set(_) => BiasMode::Set,
                    Pulse::Reset(a) => BiasMode::Reset { amplitude: a },
                    Pulse::Read(_) => BiasMode::Read,
                };
                this.bias_assignment(target, mode)?.check(limit)
            },
        );
        self.grid[i] = cell;
        log
    }

    pub const CSV_HEADER: &'static str = "row,col,resistance_ohm,stuck_flag,stuck_ohm";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                let cell = &self.grid[r * self.cols() + c];
                let (flag, stuck) = match cell.stuck {
                    Some(v) => (1, v.to_string()),
                    None => (0, String::new()),
                };
                s.push_str(&format!("{r},{c},{},{flag},{stuck}\n", cell.resistance));
            }
        }
        s
    }

    /// Restores cell states from [`Crossbar::to_csv`] output.
    pub fn load_csv(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        self.read_csv(text.as_bytes())
    }

    pub fn read_csv(&mut self, data: &[u8]) -> Result<()> {
        let mut rdr = csv::Reader::from_reader(data);
        let mut seen = 0usize;
        for rec in rdr.records() {
            let rec = rec?;
            let field = |k: usize| rec.get(k).unwrap_or("").trim();
            let parse_usize = |k: usize| {
                field(k).parse::<usize>().map_err(|_| Error::InvalidConfig(format!("bad crossbar CSV field {:?}", field(k))))
            };
            let parse_f64 = |k: usize| {
                field(k).parse::<f64>().map_err(|_| Error::InvalidConfig(format!("bad crossbar CSV field {:?}", field(k))))
            };
            let (r, c) = (parse_usize(0)?, parse_usize(1)?);
            let resistance = parse_f64(2)?;
            let stuck = if field(3) == "1" { Some(parse_f64(4)?) } else { None };
            let i = self.index(r, c)?;
            self.grid[i] = MemristorCell { resistance, stuck };
            seen += 1;
        }
        if seen != self.grid.len() {
            return Err(Error::ShapeMismatch { expected: self.grid.len(), got: seen });
        }
        Ok(())
    }
}

/// Resistance implied by a read: `R = u_test * r_f / u_out`.
pub fn resistance_from_readout(u_test: f64, r_f: f64, u_out: f64) -> f64 {
    u_test * r_f / u_out
}

/// Both crossbars of the 16-8-4 network plus the digital biases.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitNetwork {
    pub hidden: Crossbar,
    pub output: Crossbar,
    pub b_hidden: [f64; N_HIDDEN],
    pub b_out: [f64; N_OUTPUT],
}

/// Per-cell programming outcome of [`CircuitNetwork::program`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProgramLog {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
    pub log: Option<ProgramLog>,
    pub error: Option<String>,
}

impl CircuitNetwork {
    /// Arrays holding the compiled nominal resistances exactly. Unused cells
    /// stay at the high-resistance state.
    pub fn from_compiled(
        compiled: &CompiledNetwork,
        params: &MlpParams,
        config: &CrossbarConfig,
        device: &DeviceParams,
        faults: &[StuckCell],
    ) -> Result<Self> {
        if config.rows < 2 * N_HIDDEN || config.cols < N_INPUT {
            return Err(Error::InvalidConfig(format!(
                "crossbar {}x{} too small for the 16-8-4 network",
                config.rows, config.cols
            )));
        }
        let mut cfg = config.clone();
        cfg.r_f = compiled.r_f;
        let mut hidden = Crossbar::new(cfg.clone(), device.clone())?;
        let mut output = Crossbar::new(cfg, device.clone())?;
        for f in faults {
            let xb = if f.layer == 0 { &mut hidden } else { &mut output };
            *xb.cell_mut(f.row, f.col)? = MemristorCell::stuck_at(f.resistance);
        }
        for syn in &compiled.synapses {
            let (r1, r2, col) = placement(syn.weight);
            let xb = match syn.weight {
                WeightId::Hidden { .. } => &mut hidden,
                WeightId::Output { .. } => &mut output,
            };
            xb.set_resistance(r1, col, syn.nominals.r_m1)?;
            xb.set_resistance(r2, col, syn.nominals.r_m2)?;
        }
        Ok(CircuitNetwork { hidden, output, b_hidden: params.b_hidden, b_out: params.b_out })
    }

    /// Programs every synapse cell to its compiled nominal through the
    /// write-verify loop. Failures are recorded, not fatal.
    pub fn program(&mut self, compiled: &CompiledNetwork, rng: &mut impl Rng) -> Vec<CellProgramLog> {
        let mut logs = Vec::with_capacity(2 * compiled.synapses.len());
        for syn in &compiled.synapses {
            let (r1, r2, col) = placement(syn.weight);
            let layer = syn.weight.layer();
            let xb = if layer == 0 { &mut self.hidden } else { &mut self.output };
            for (row, target) in [(r1, syn.nominals.r_m1), (r2, syn.nominals.r_m2)] {
                let (log, error) = match xb.program_cell((row, col), target, rng) {
                    Ok(l) => (Some(l), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                logs.push(CellProgramLog { layer, row, col, log, error });
            }
        }
        logs
    }

    fn layer(xb: &Crossbar, inputs: &[f64], biases: &[f64]) -> Result<Vec<f64>> {
        let pre = xb.layer_preactivation(inputs)?;
        Ok(pre.iter().zip(biases).map(|(u, b)| xb.activate(u + b)).collect())
    }

    pub fn forward(&self, x: &Input) -> Result<Output> {
        let mut inputs = vec![0.0; self.hidden.cols()];
        inputs[..N_INPUT].copy_from_slice(x);
        let mut b = vec![0.0; self.hidden.rows() / 2];
        b[..N_HIDDEN].copy_from_slice(&self.b_hidden);
        let h = Self::layer(&self.hidden, &inputs, &b)?;

        let mut inputs = vec![0.0; self.output.cols()];
        inputs[..N_HIDDEN].copy_from_slice(&h[..N_HIDDEN]);
        let mut b = vec![0.0; self.output.rows() / 2];
        b[..N_OUTPUT].copy_from_slice(&self.b_out);
        let y = Self::layer(&self.output, &inputs, &b)?;
        let mut out = [0.0; N_OUTPUT];
        out.copy_from_slice(&y[..N_OUTPUT]);
        Ok(out)
    }

    /// Weights realized by the current cell states and feedback resistors.
    pub fn realized_params(&self, template: &MlpParams) -> MlpParams {
        let mut flat = template.flat();
        for id in WeightId::all() {
            let (r1, r2, col) = placement(id);
            let xb = if id.layer() == 0 { &self.hidden } else { &self.output };
            let k = xb.config.k_diff();
            let g = |row: usize| xb.feedback[row] / xb.grid[row * xb.cols() + col].resistance;
            flat[id.flat_index()] = k * (g(r1) - g(r2));
        }
        let mut p = template.clone();
        p.set_flat(&flat);
        p.b_hidden = self.b_hidden;
        p.b_out = self.b_out;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{compile_network, MappingConfig};
    use crate::rng::substream;
    use proptest::{prop_assert, prop_assert_eq, proptest};
    use rand::Rng;

    fn xbar() -> Crossbar {
        Crossbar::new(CrossbarConfig::default(), DeviceParams::default()).unwrap()
    }

    #[test]
    fn row_sum_examples() {
        let mut xb = xbar();
        let zeros = vec![0.0; 16];
        assert_eq!(xb.row_summed_voltage(3, &zeros).unwrap(), 0.0);
        xb.set_resistance(3, 5, 100e3).unwrap();
        let mut x = zeros.clone();
        x[5] = 0.5;
        assert!((xb.row_summed_voltage(3, &x).unwrap() + 0.5).abs() < 1e-15);
        x[0] = 1.2;
        assert!(matches!(xb.row_summed_voltage(3, &x), Err(Error::InputOverrange { index: 0, .. })));
    }

    #[test]
    fn row_sum_matches_scalar_loop() {
        let mut rng = substream(3, 0, 0);
        let mut xb = xbar();
        for r in 0..16 {
            for c in 0..16 {
                xb.set_resistance(r, c, rng.random_range(10e3..300e3)).unwrap();
            }
        }
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        for r in 0..16 {
            let mut acc = 0.0;
            for c in 0..16 {
                acc += x[c] / xb.cell(r, c).unwrap().resistance;
            }
            let oracle = -100e3 * acc;
            let got = xb.row_summed_voltage(r, &x).unwrap();
            assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1e-300));
        }
    }

    #[test]
    fn layer_forward_examples() {
        let mut xb = xbar();
        let mut x = vec![0.3; 16];
        assert!(xb.layer_forward(&x).unwrap().iter().all(|v| *v == 0.0));

        xb.config.u_sat = 1e6;
        xb.set_resistance(0, 0, 10e3).unwrap();
        xb.set_resistance(1, 0, 300e3).unwrap();
        x.iter_mut().for_each(|v| *v = 0.0);
        x[0] = 0.1;
        let y = xb.layer_forward(&x).unwrap();
        assert!((y[0] - 0.96667).abs() < 1e-5, "{}", y[0]);
        assert!(y[1..].iter().all(|v| *v == 0.0));

        let odd = CrossbarConfig { rows: 15, ..CrossbarConfig::default() };
        assert!(matches!(Crossbar::new(odd, DeviceParams::default()), Err(Error::OddRowCount(15))));
    }

    #[test]
    fn bias_maps_respect_threshold() {
        let xb = xbar();
        for r in 0..16 {
            for c in 0..16 {
                let set = xb.bias_assignment((r, c), BiasMode::Set).unwrap();
                for rr in 0..16 {
                    for cc in 0..16 {
                        if (rr, cc) != (r, c) {
                            let d = set.drop(rr, cc).abs();
                            assert!(d == 0.0 || d == 1.5, "SET drop {d}");
                        }
                    }
                }
                assert_eq!(set.drop(r, c), -3.0);
                let reset = xb.bias_assignment((r, c), BiasMode::Reset { amplitude: 3.0 }).unwrap();
                assert!(reset.max_non_target_drop() <= 1.5);
                assert_eq!(reset.drop(r, c), 3.0);
                let read = xb.bias_assignment((r, c), BiasMode::Read).unwrap();
                assert!(read.max_non_target_drop() < xb.device.v_threshold);
                for rr in 0..16 {
                    for cc in 0..16 {
                        if cc != c {
                            assert_eq!(read.drop(rr, cc), 0.0);
                        }
                    }
                }
            }
        }
        assert!(xb.bias_assignment((16, 0), BiasMode::Read).is_err());
    }

    #[test]
    fn readback_identity_and_quantization_bound() {
        assert_eq!(resistance_from_readout(0.5, 100e3, 0.5), 100e3);
        let mut xb = xbar();
        let du = xb.config.adc_step();
        let mut rng = substream(4, 0, 0);
        for _ in 0..2000 {
            let r = rng.random_range(10e3..300e3);
            xb.set_resistance(0, 0, r).unwrap();
            let inferred = xb.measure_resistance(0, 0).unwrap();
            let bound = r * r * du / (0.5 * 100e3);
            assert!((inferred - r).abs() <= bound, "r {r}: {inferred} bound {bound}");
        }
    }

    #[test]
    fn program_cell_leaves_neighbours_alone() {
        let mut xb = xbar();
        let mut rng = substream(5, 0, 0);
        for r in 0..4 {
            for c in 0..4 {
                let before: Vec<MemristorCell> = xb.cells().to_vec();
                let target = rng.random_range(10e3..60e3);
                let log = xb.program_cell((r, c), target, &mut rng).unwrap();
                assert!(log.success);
                let actual = xb.cell(r, c).unwrap().resistance;
                assert!((actual - target).abs() <= 0.15 * target + target * target * xb.config.adc_step() / 50e3);
                for (k, (a, b)) in before.iter().zip(xb.cells()).enumerate() {
                    if k != r * 16 + c {
                        assert_eq!(a, b);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut xb = xbar();
        xb.set_resistance(2, 3, 12_345.5).unwrap();
        *xb.cell_mut(4, 4).unwrap() = MemristorCell::stuck_at(55e3);
        let text = xb.to_csv();
        let mut back = xbar();
        back.read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.cells(), xb.cells());
        let missing = back.load_csv(Path::new("/nonexistent/xbar.csv"));
        assert!(matches!(missing, Err(Error::MissingArtifact(_))));
    }

    #[test]
    fn circuit_matches_informational_forward() {
        let mut rng = substream(6, 0, 0);
        let cfg = MappingConfig::default();
        for seed in 0..20 {
            let mut p = MlpParams::random_init(seed);
            let mut flat = p.flat();
            for id in WeightId::all() {
                flat[id.flat_index()] = rng.random_range(-3.0..3.0);
            }
            p.set_flat(&flat);
            let compiled = compile_network(&p, &cfg, &[]).unwrap();
            let net =
                CircuitNetwork::from_compiled(&compiled, &p, &CrossbarConfig::default(), &DeviceParams::default(), &[])
                    .unwrap();
            for _ in 0..20 {
                let x: Input = std::array::from_fn(|_| rng.random_range(0.0..1.0));
                let a = net.forward(&x).unwrap();
                let b = p.forward(&x);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() < 1e-9, "{u} vs {v}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn linear_below_saturation(a in 0.01f64..1.0, seed in 0u64..1000) {
            let mut rng = substream(seed, 0, 0);
            let mut xb = xbar();
            xb.config.u_sat = 1e9;
            for r in 0..16 {
                for c in 0..16 {
                    xb.set_resistance(r, c, rng.random_range(10e3..300e3)).unwrap();
                }
            }
            let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
            let y = xb.layer_forward(&x).unwrap();
            let ya = xb.layer_forward(&ax).unwrap();
            for (u, v) in y.iter().zip(&ya) {
                prop_assert!((a * u - v).abs() <= 1e-9 * (1.0 + u.abs()));
            }
        }

        #[test]
        fn saturation_idempotent(u in -50.0f64..50.0) {
            let xb = xbar();
            let once = xb.activate(u);
            prop_assert_eq!(xb.activate(once), once);
        }
    }
}
