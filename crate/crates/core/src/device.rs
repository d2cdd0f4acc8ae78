//! Single memristive device: Ohmic read, stochastic SET/RESET response,
//! stuck-at faults and the ramp write-verify loop.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceParams {
    pub r_lrs_nominal: f64,
    pub r_hrs_nominal: f64,
    pub v_threshold: f64,
    pub v_set: f64,
    pub i_limit_set: f64,
    /// RESET amplitudes `[min, max]`, volts.
    pub ramp_range: [f64; 2],
    pub ramp_step: f64,
    /// Exponent of the amplitude-to-resistance map.
    pub ramp_gamma: f64,
    pub pulse_width: f64,
    pub v_read: f64,
    pub program_tolerance: f64,
    /// Log-space sigma of the multiplicative post-pulse spread.
    pub response_noise_sigma: f64,
    pub max_program_iterations: usize,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            r_lrs_nominal: 10e3,
            r_hrs_nominal: 300e3,
            v_threshold: 1.5,
            v_set: -3.0,
            i_limit_set: 300e-6,
            ramp_range: [1.5, 3.0],
            ramp_step: 1.5 / 128.0,
            ramp_gamma: 1.0,
            pulse_width: 1e-3,
            v_read: 0.5,
            program_tolerance: 0.15,
            response_noise_sigma: 0.05,
            max_program_iterations: 50,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.r_lrs_nominal > 0.0 && self.r_lrs_nominal < self.r_hrs_nominal) {
            return bad("need 0 < r_lrs_nominal < r_hrs_nominal");
        }
        let [lo, hi] = self.ramp_range;
        if !(lo >= self.v_threshold && hi <= 3.0 && lo < hi) {
            return bad("ramp_range must lie in [v_threshold, 3.0] V");
        }
        if !(self.ramp_step > 0.0) {
            return bad("ramp_step must be positive");
        }
        if !(self.program_tolerance > 0.0 && self.program_tolerance < 1.0) {
            return bad("program_tolerance must be in (0, 1)");
        }
        if !(self.response_noise_sigma >= 0.0 && 3.0 * self.response_noise_sigma < 1.0) {
            return bad("response_noise_sigma must be in [0, 1/3)");
        }
        if self.v_read.abs() >= self.v_threshold {
            return bad("v_read must stay below v_threshold");
        }
        if self.max_program_iterations == 0 || !(self.ramp_gamma > 0.0) {
            return bad("max_program_iterations and ramp_gamma must be positive");
        }
        Ok(())
    }

    /// Clamp window for any device resistance.
    pub fn resistance_bounds(&self) -> (f64, f64) {
        (self.r_lrs_nominal * (1.0 - 3.0 * self.response_noise_sigma), self.r_hrs_nominal)
    }

    /// Noise-free resistance after a RESET pulse of `amplitude`.
    pub fn reset_response(&self, amplitude: f64) -> f64 {
        let [lo, hi] = self.ramp_range;
        let t = ((amplitude - lo) / (hi - lo)).clamp(0.0, 1.0);
        self.r_lrs_nominal + (self.r_hrs_nominal - self.r_lrs_nominal) * t.powf(self.ramp_gamma)
    }

    /// RESET amplitudes of one ramp sweep, ending exactly at the maximum.
    pub fn ramp_amplitudes(&self) -> Vec<f64> {
        let [lo, hi] = self.ramp_range;
        let n = ((hi - lo) / self.ramp_step - 1e-9).ceil().max(0.0) as usize;
        (0..=n).map(|k| (lo + k as f64 * self.ramp_step).min(hi)).collect()
    }

    fn in_tolerance(&self, r: f64, target: f64) -> bool {
        (r - target).abs() <= self.program_tolerance * target
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemristorCell {
    pub resistance: f64,
    /// Resistance of a device that ignores programming pulses.
    pub stuck: Option<f64>,
}

impl MemristorCell {
    pub fn new(resistance: f64) -> Self {
        MemristorCell { resistance, stuck: None }
    }

    pub fn stuck_at(resistance: f64) -> Self {
        MemristorCell { resistance, stuck: Some(resistance) }
    }

    pub fn is_stuck(&self) -> bool {
        self.stuck.is_some()
    }

    /// Ohmic read current; the read must not reach the switching threshold.
    pub fn read_current(&self, v: f64, params: &DeviceParams) -> Result<f64> {
        if v.abs() >= params.v_threshold {
            return Err(Error::AboveThreshold { voltage: v, threshold: params.v_threshold });
        }
        Ok(v / self.resistance)
    }

    fn apply(&mut self, nominal: f64, params: &DeviceParams, rng: &mut impl Rng) {
        if let Some(s) = self.stuck {
            self.resistance = s;
            return;
        }
        let z: f64 = rng.sample(StandardNormal);
        let (lo, hi) = params.resistance_bounds();
        self.resistance = (nominal * (params.response_noise_sigma * z).exp()).clamp(lo, hi);
    }

    /// SET: back to the low-resistance state.
    pub fn set_pulse(&mut self, params: &DeviceParams, rng: &mut impl Rng) {
        self.apply(params.r_lrs_nominal, params, rng);
    }

    /// RESET: resistance rises with pulse amplitude.
    pub fn reset_pulse(&mut self, amplitude: f64, params: &DeviceParams, rng: &mut impl Rng) -> Result<()> {
        let [lo, hi] = params.ramp_range;
        if !(amplitude >= lo - 1e-12 && amplitude <= hi + 1e-12) {
            return Err(Error::AmplitudeOutOfRange { amplitude, min: lo, max: hi });
        }
        self.apply(params.reset_response(amplitude), params, rng);
        Ok(())
    }
}

/// Pulse about to be applied during programming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pulse {
    Set(f64),
    Reset(f64),
    Read(f64),
}

/// Outcome of one write-verify run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramLog {
    pub target: f64,
    /// SET-then-ramp cycles started.
    pub attempts: usize,
    /// RESET pulses applied in total.
    pub pulses: usize,
    pub final_resistance: f64,
    pub success: bool,
}

impl ProgramLog {
    pub const CSV_HEADER: &'static str = "target_ohm,final_ohm,attempts,pulses,success";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.target, self.final_resistance, self.attempts, self.pulses, self.success
        )
    }
}

/// Write-verify with the Ohmic read at `v_read`.
pub fn program_to(
    cell: &mut MemristorCell,
    target: f64,
    params: &DeviceParams,
    rng: &mut impl Rng,
) -> Result<ProgramLog> {
    let v = params.v_read;
    program_with(
        cell,
        target,
        params,
        rng,
        |c| Ok(v / c.read_current(v, params)?),
        |_| Ok(()),
    )
}

/// Ramp write-verify loop with caller-supplied read-back and a hook that
/// sees every pulse before it is applied.
///
/// Each cycle SETs the device, then applies RESET pulses of increasing
/// amplitude, reading after every pulse. It stops once the reading is
/// within tolerance; a reading above the band, or an exhausted ramp, starts
/// a new cycle.
pub fn program_with<R, F, H>(
    cell: &mut MemristorCell,
    target: f64,
    params: &DeviceParams,
    rng: &mut R,
    mut read_back: F,
    mut before_pulse: H,
) -> Result<ProgramLog>
where
    R: Rng + ?Sized,
    F: FnMut(&MemristorCell) -> Result<f64>,
    H: FnMut(Pulse) -> Result<()>,
{
    if !(target >= params.r_lrs_nominal && target <= params.r_hrs_nominal) {
        return Err(Error::TargetOutOfRange {
            target,
            min: params.r_lrs_nominal,
            max: params.r_hrs_nominal,
        });
    }
    let mut log = ProgramLog { target, attempts: 0, pulses: 0, final_resistance: cell.resistance, success: false };

    if let Some(stuck) = cell.stuck {
        before_pulse(Pulse::Read(params.v_read))?;
        let r = read_back(cell)?;
        log.final_resistance = r;
        if params.in_tolerance(r, target) {
            log.success = true;
            return Ok(log);
        }
        return Err(Error::StuckDevice { stuck, target });
    }

    let ceiling = target * (1.0 + params.program_tolerance);
    let amplitudes = params.ramp_amplitudes();
    let mut rng = rng;
    while log.attempts < params.max_program_iterations {
        log.attempts += 1;
        before_pulse(Pulse::Set(params.v_set))?;
        cell.set_pulse(params, &mut rng);
        before_pulse(Pulse::Read(params.v_read))?;
        let mut r = read_back(cell)?;
        log.final_resistance = r;
        if params.in_tolerance(r, target) {
            log.success = true;
            return Ok(log);
        }
        for &a in &amplitudes {
            before_pulse(Pulse::Reset(a))?;
            cell.reset_pulse(a, params, &mut rng)?;
            log.pulses += 1;
            before_pulse(Pulse::Read(params.v_read))?;
            r = read_back(cell)?;
            log.final_resistance = r;
            if params.in_tolerance(r, target) {
                log.success = true;
                return Ok(log);
            }
            if r > ceiling {
                break;
            }
        }
    }
    Err(Error::ProgrammingFailed { target, attempts: log.attempts, last: log.final_resistance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn quiet() -> DeviceParams {
        DeviceParams { response_noise_sigma: 0.0, ..DeviceParams::default() }
    }

    #[test]
    fn read_current_examples() {
        let p = DeviceParams::default();
        let c = MemristorCell::new(100e3);
        assert!((c.read_current(0.5, &p).unwrap() - 5e-6).abs() < 1e-18);
        assert_eq!(c.read_current(0.0, &p).unwrap(), 0.0);
        let c2 = MemristorCell::new(12.2e3);
        assert!((c2.read_current(1.0, &p).unwrap() - 81.967_213e-6).abs() < 1e-11);
        assert!(matches!(c.read_current(1.5, &p), Err(Error::AboveThreshold { .. })));
        assert!(matches!(c.read_current(-2.0, &p), Err(Error::AboveThreshold { .. })));
    }

    #[test]
    fn read_is_linear_in_voltage() {
        let p = DeviceParams::default();
        let c = MemristorCell::new(37e3);
        let base = c.read_current(0.3, &p).unwrap();
        for a in [-4.0, -1.0, 0.5, 2.0, 4.9] {
            let v = c.read_current(a * 0.3, &p).unwrap();
            assert!((v - a * base).abs() <= 1e-15 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn set_pulse_noise_free_and_stuck() {
        let mut rng = substream(1, 0, 0);
        let mut c = MemristorCell::new(60e3);
        c.set_pulse(&quiet(), &mut rng);
        assert_eq!(c.resistance, 10e3);
        let mut s = MemristorCell::stuck_at(42e3);
        s.set_pulse(&DeviceParams::default(), &mut rng);
        assert_eq!(s.resistance, 42e3);
        s.reset_pulse(3.0, &DeviceParams::default(), &mut rng).unwrap();
        assert_eq!(s.resistance, 42e3);
    }

    #[test]
    fn set_pulse_spread_matches_lognormal() {
        let p = DeviceParams { response_noise_sigma: 0.05, ..DeviceParams::default() };
        let mut rng = substream(2, 0, 0);
        let xs: Vec<f64> = (0..1000)
            .map(|_| {
                let mut c = MemristorCell::new(50e3);
                c.set_pulse(&p, &mut rng);
                c.resistance
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!((0.03 * 10e3..=0.07 * 10e3).contains(&sd), "sd {sd}");
        let (lo, hi) = p.resistance_bounds();
        assert!(xs.iter().all(|x| *x >= lo && *x <= hi));
    }

    #[test]
    fn reset_map_endpoints_and_monotone() {
        let p = quiet();
        let mut rng = substream(3, 0, 0);
        let mut c = MemristorCell::new(10e3);
        c.reset_pulse(1.5, &p, &mut rng).unwrap();
        assert_eq!(c.resistance, p.r_lrs_nominal);
        c.reset_pulse(3.0, &p, &mut rng).unwrap();
        assert_eq!(c.resistance, p.r_hrs_nominal);
        let grid: Vec<f64> = (0..=1000).map(|k| 1.5 + 1.5 * k as f64 / 1000.0).collect();
        for w in grid.windows(2) {
            assert!(p.reset_response(w[0]) < p.reset_response(w[1]));
        }
        assert!(matches!(c.reset_pulse(1.2, &p, &mut rng), Err(Error::AmplitudeOutOfRange { .. })));
        assert!(matches!(c.reset_pulse(3.2, &p, &mut rng), Err(Error::AmplitudeOutOfRange { .. })));
    }

    #[test]
    fn ramp_ends_at_maximum() {
        let a = DeviceParams::default().ramp_amplitudes();
        assert_eq!(a.len(), 129);
        assert_eq!(a[0], 1.5);
        assert_eq!(*a.last().unwrap(), 3.0);
    }

    #[test]
    fn programs_within_fifteen_percent() {
        let p = DeviceParams::default();
        let mut rng = substream(4, 0, 0);
        let mut c = MemristorCell::new(200e3);
        let log = program_to(&mut c, 35e3, &p, &mut rng).unwrap();
        assert!(log.success);
        assert!(c.resistance >= 29.75e3 && c.resistance <= 40.25e3);
        assert_eq!(log.final_resistance, c.resistance);
    }

    #[test]
    fn noise_free_programming_takes_one_cycle() {
        let p = quiet();
        let mut rng = substream(5, 0, 0);
        let mut t = p.r_lrs_nominal;
        while t <= p.r_hrs_nominal {
            let mut c = MemristorCell::new(p.r_hrs_nominal);
            let log = program_to(&mut c, t, &p, &mut rng).unwrap();
            assert_eq!(log.attempts, 1, "target {t}");
            t += 731.0;
        }
    }

    #[test]
    fn stuck_cells() {
        let p = DeviceParams::default();
        let mut rng = substream(6, 0, 0);
        let mut c = MemristorCell::stuck_at(42e3);
        let log = program_to(&mut c, 42e3, &p, &mut rng).unwrap();
        assert!(log.success);
        assert_eq!(log.pulses, 0);
        assert!(matches!(program_to(&mut c, 20e3, &p, &mut rng), Err(Error::StuckDevice { .. })));
        assert_eq!(c.resistance, 42e3);
    }

    #[test]
    fn iteration_cap_is_respected() {
        // tolerance band narrower than the noise: most runs exhaust the cap
        let p = DeviceParams {
            program_tolerance: 1e-6,
            response_noise_sigma: 0.2,
            max_program_iterations: 3,
            ..DeviceParams::default()
        };
        let mut rng = substream(7, 0, 0);
        let mut c = MemristorCell::new(10e3);
        match program_to(&mut c, 77e3, &p, &mut rng) {
            Err(Error::ProgrammingFailed { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn target_outside_device_range() {
        let p = DeviceParams::default();
        let mut rng = substream(8, 0, 0);
        let mut c = MemristorCell::new(10e3);
        assert!(matches!(program_to(&mut c, 5e3, &p, &mut rng), Err(Error::TargetOutOfRange { .. })));
    }

    #[test]
    fn default_params_validate() {
        DeviceParams::default().validate().unwrap();
        let bad = DeviceParams { ramp_range: [1.0, 3.0], ..DeviceParams::default() };
        assert!(bad.validate().is_err());
        let bad = DeviceParams { ramp_range: [1.5, 3.5], ..DeviceParams::default() };
        assert!(bad.validate().is_err());
    }
}
