//! Synthetic spike-timing corpus: jittered stimulus responses, extraneous
//! activity, DAC normalization and the fixed-count train/test split.
//!
//! A pattern is the arrival time of the first four spikes on each of four
//! channels, flattened channel-major (`index = channel * 4 + spike`).

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{Input, Label, Output, N_INPUT};
use crate::rng::{domain, substream, truncated_std_normal};

pub const N_SITES: usize = 4;
pub const N_CHANNELS: usize = 4;
pub const N_SPIKES: usize = 4;

/// Default profile shipped with the crate; regenerate with
/// [`StimulusProfile::from_scheme`] and `DEFAULT_PROFILE_SEED`.
pub const DEFAULT_PROFILE_JSON: &str = include_str!("../assets/default_profile.json");
pub const DEFAULT_PROFILE_SEED: u64 = 2020;

/// Mean spike arrival times per (site, channel, spike) plus jitter bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusProfile {
    pub version: u32,
    /// `means_ms[site][channel][spike]`
    pub means_ms: [[[f64; N_SPIKES]; N_CHANNELS]; N_SITES],
    /// Relative jitter bound, treated as 3 sigma of a truncated normal.
    pub deviation: f64,
    pub window_ms: f64,
}

impl Default for StimulusProfile {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_PROFILE_JSON).expect("bundled profile parses")
    }
}

impl StimulusProfile {
    /// Latin-square latency layout: channel `c` of site `s` starts at
    /// `3 + 4 * ((s + c) mod 4)` ms plus a seeded offset in `[0, 1)` ms, and
    /// its four spikes are spaced by a seeded gap in `[7, 9]` ms. Every pair
    /// of sites differs by at least 3 ms in the first spike of every channel,
    /// and all means fall inside 3..45 ms.
    pub fn from_scheme(seed: u64) -> Self {
        let mut rng = substream(seed, domain::PROFILE, 0);
        let mut means_ms = [[[0.0; N_SPIKES]; N_CHANNELS]; N_SITES];
        for (s, site) in means_ms.iter_mut().enumerate() {
            for (c, channel) in site.iter_mut().enumerate() {
                let base = 3.0 + 4.0 * ((s + c) % 4) as f64 + rng.random_range(0.0..1.0);
                let gap = rng.random_range(7.0..=9.0);
                for (k, t) in channel.iter_mut().enumerate() {
                    *t = round3(base + gap * k as f64);
                }
            }
        }
        StimulusProfile { version: 1, means_ms, deviation: 0.30, window_ms: 50.0 }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: StimulusProfile = serde_json::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.deviation > 0.0 && self.deviation < 1.0) {
            return Err(Error::InvalidConfig(format!("deviation {} not in (0, 1)", self.deviation)));
        }
        if !(self.window_ms > 0.0) {
            return Err(Error::InvalidConfig("window must be positive".into()));
        }
        if self.means_ms.iter().flatten().flatten().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidConfig("mean arrival times must be positive".into()));
        }
        Ok(())
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// One normalized, DAC-quantized input vector with its class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikePattern {
    pub values: Input,
    pub label: Label,
}

impl SpikePattern {
    /// Range, per-channel ordering and grid membership.
    pub fn is_valid(&self, step: f64) -> bool {
        let in_range = self.values.iter().all(|v| (0.0..=1.0).contains(v));
        let sorted = self
            .values
            .chunks(N_SPIKES)
            .all(|ch| ch.windows(2).all(|w| w[0] <= w[1]));
        let on_grid = self.values.iter().all(|v| {
            let k = (v / step).round();
            (k * step - v).abs() <= 1e-12
        });
        in_range && sorted && on_grid
    }

    pub fn target(&self) -> Output {
        self.label.target()
    }
}

/// `round((t / window) / step) * step`, halves rounding up.
pub fn normalize_quantize(raw_ms: &[f64; N_INPUT], window_ms: f64, step: f64) -> Input {
    raw_ms.map(|t| quantize_level(t / window_ms, step))
}

fn quantize_level(v: f64, step: f64) -> f64 {
    let k = (v / step + 0.5).floor();
    (k * step).clamp(0.0, 1.0)
}

/// Raw (ms) arrival times for `count` responses to one stimulation site.
pub fn synthesize_stimulus_raw(
    profile: &StimulusProfile,
    site: usize,
    count: usize,
    seed: u64,
) -> Vec<[f64; N_INPUT]> {
    let means = &profile.means_ms[site];
    (0..count)
        .map(|n| {
            let mut rng = substream(seed, domain::STIMULUS, (site as u64) << 32 | n as u64);
            let mut raw = [0.0; N_INPUT];
            for (c, channel) in means.iter().enumerate() {
                let slot = &mut raw[c * N_SPIKES..(c + 1) * N_SPIKES];
                for (t, &mean) in slot.iter_mut().zip(channel) {
                    let sigma = profile.deviation * mean / 3.0;
                    let v = mean + sigma * truncated_std_normal(&mut rng, 3.0);
                    *t = v.min(profile.window_ms);
                }
                slot.sort_by(f64::total_cmp);
            }
            raw
        })
        .collect()
}

/// `count` normalized patterns for every stimulation site, site-major.
pub fn synthesize_stimulus_patterns(
    profile: &StimulusProfile,
    count_per_site: usize,
    step: f64,
    seed: u64,
) -> Vec<SpikePattern> {
    let mut out = Vec::with_capacity(count_per_site * N_SITES);
    for (site, label) in Label::SITES.iter().enumerate() {
        for raw in synthesize_stimulus_raw(profile, site, count_per_site, seed) {
            out.push(SpikePattern {
                values: normalize_quantize(&raw, profile.window_ms, step),
                label: *label,
            });
        }
    }
    out
}

/// Raw extraneous activity: four uniform arrivals per channel, sorted.
pub fn synthesize_extraneous_raw(count: usize, window_ms: f64, seed: u64) -> Vec<[f64; N_INPUT]> {
    (0..count)
        .map(|n| {
            let mut rng = substream(seed, domain::EXTRANEOUS, n as u64);
            let mut raw: [f64; N_INPUT] = std::array::from_fn(|_| rng.random_range(0.0..=window_ms));
            for ch in raw.chunks_mut(N_SPIKES) {
                ch.sort_by(f64::total_cmp);
            }
            raw
        })
        .collect()
}

pub fn synthesize_extraneous(count: usize, window_ms: f64, step: f64, seed: u64) -> Vec<SpikePattern> {
    synthesize_extraneous_raw(count, window_ms, seed)
        .iter()
        .map(|raw| SpikePattern { values: normalize_quantize(raw, window_ms, step), label: Label::Sr })
        .collect()
}

/// Per-class pattern counts, ordered S1..S4, Sr.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: [usize; 5],
    pub test: [usize; 5],
}

impl SplitCounts {
    pub const PAPER: SplitCounts = SplitCounts {
        train: [735, 760, 724, 754, 3027],
        test: [265, 240, 276, 246, 973],
    };

    /// Per-class split at `train_fraction` (rounded down for training).
    pub fn proportional(totals: [usize; 5], train_fraction: f64) -> Self {
        let train = totals.map(|n| (n as f64 * train_fraction).floor() as usize);
        let mut test = [0; 5];
        for k in 0..5 {
            test[k] = totals[k] - train[k];
        }
        SplitCounts { train, test }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SpikePattern>,
    pub test: Vec<SpikePattern>,
    pub counts: SplitCounts,
}

fn class_counts(patterns: &[SpikePattern]) -> [usize; 5] {
    let mut c = [0; 5];
    for p in patterns {
        c[p.label.index()] += 1;
    }
    c
}

/// Shuffles each class and allocates exactly `counts` patterns to each side.
pub fn make_split(patterns: Vec<SpikePattern>, counts: SplitCounts, seed: u64) -> Result<DatasetSplit> {
    let have = class_counts(&patterns);
    for k in 0..5 {
        if have[k] != counts.train[k] + counts.test[k] {
            return Err(Error::CountMismatch(format!(
                "{}: have {}, split needs {} + {}",
                Label::ALL[k],
                have[k],
                counts.train[k],
                counts.test[k]
            )));
        }
    }
    let mut rng = substream(seed, domain::SPLIT, 0);
    let mut by_class: BTreeMap<usize, Vec<SpikePattern>> = BTreeMap::new();
    for p in patterns {
        by_class.entry(p.label.index()).or_default().push(p);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, mut members) in by_class {
        members.shuffle(&mut rng);
        let rest = members.split_off(counts.train[k]);
        train.extend(members);
        test.extend(rest);
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(DatasetSplit { train, test, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Profile JSON; the bundled default when absent.
    pub profile: Option<std::path::PathBuf>,
    pub per_site: usize,
    pub extraneous: usize,
    pub dac_step: f64,
    /// Enforce the 6000/2000 per-class counts; otherwise split 75/25.
    pub paper_counts: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            profile: None,
            per_site: 1000,
            extraneous: 4000,
            dac_step: 0.0025,
            paper_counts: true,
        }
    }
}

impl DatasetConfig {
    pub fn load_profile(&self) -> Result<StimulusProfile> {
        match &self.profile {
            Some(path) => StimulusProfile::load(path),
            None => Ok(StimulusProfile::default()),
        }
    }
}

/// Synthesizes all patterns and splits them.
pub fn generate(cfg: &DatasetConfig, profile: &StimulusProfile, seed: u64) -> Result<DatasetSplit> {
    if !(cfg.dac_step > 0.0 && cfg.dac_step <= 1.0) {
        return Err(Error::InvalidConfig(format!("dac_step {} out of range", cfg.dac_step)));
    }
    let mut all = synthesize_stimulus_patterns(profile, cfg.per_site, cfg.dac_step, seed);
    all.extend(synthesize_extraneous(cfg.extraneous, profile.window_ms, cfg.dac_step, seed));
    let counts = if cfg.paper_counts {
        SplitCounts::PAPER
    } else {
        SplitCounts::proportional(class_counts(&all), 0.75)
    };
    make_split(all, counts, seed)
}

impl DatasetSplit {
    pub fn inputs(set: &[SpikePattern]) -> Vec<Input> {
        set.iter().map(|p| p.values).collect()
    }

    pub fn targets(set: &[SpikePattern]) -> Vec<Output> {
        set.iter().map(|p| p.target()).collect()
    }

    pub fn manifest(&self, seed: u64, step: f64) -> serde_json::Value {
        let named = |c: &[usize; 5]| -> BTreeMap<String, usize> {
            Label::ALL.iter().zip(c).map(|(l, n)| (l.to_string(), *n)).collect()
        };
        serde_json::json!({
            "seed": seed,
            "dac_step": step,
            "train_total": self.train.len(),
            "test_total": self.test.len(),
            "train_counts": named(&class_counts(&self.train)),
            "test_counts": named(&class_counts(&self.test)),
        })
    }
}

/// CSV with sixteen value columns and a label column.
pub fn patterns_to_csv(patterns: &[SpikePattern]) -> String {
    let mut s = String::new();
    for i in 0..N_INPUT {
        s.push_str(&format!("v{i},"));
    }
    s.push_str("label\n");
    for p in patterns {
        for v in &p.values {
            s.push_str(&format!("{v},"));
        }
        s.push_str(&format!("{}\n", p.label));
    }
    s
}

pub fn read_patterns_csv(path: &Path) -> Result<Vec<SpikePattern>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Csv(e),
    })?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != N_INPUT + 1 {
            return Err(Error::ShapeMismatch { expected: N_INPUT + 1, got: rec.len() });
        }
        let mut values = [0.0; N_INPUT];
        for (v, field) in values.iter_mut().zip(rec.iter()) {
            *v = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value {field:?} in {}", path.display())))?;
        }
        let label = rec[N_INPUT].trim().parse()?;
        out.push(SpikePattern { values, label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_profile_matches_scheme() {
        let p = StimulusProfile::default();
        assert_eq!(p, StimulusProfile::from_scheme(DEFAULT_PROFILE_SEED));
        p.validate().unwrap();
        for m in p.means_ms.iter().flatten().flatten() {
            assert!((3.0..=45.0).contains(m), "{m}");
        }
    }

    #[test]
    fn zero_jitter_reproduces_means() {
        let p = StimulusProfile { deviation: 1e-15, ..StimulusProfile::default() };
        let raw = synthesize_stimulus_raw(&p, 2, 3, 9);
        for r in raw {
            for c in 0..4 {
                for k in 0..4 {
                    assert!((r[c * 4 + k] - p.means_ms[2][c][k]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn late_spikes_clamp_to_window() {
        assert_eq!(58.5_f64.min(50.0), 50.0);
        let mut raw = [0.0; N_INPUT];
        raw[3] = 50.0;
        assert_eq!(normalize_quantize(&raw, 50.0, 0.0025)[3], 1.0);

        let mut p = StimulusProfile::default();
        p.means_ms[0][0][3] = 45.0;
        let raw = synthesize_stimulus_raw(&p, 0, 2000, 1);
        assert!(raw.iter().all(|r| r[3] <= 50.0));
        assert!(raw.iter().any(|r| r[3] == 50.0));
    }

    #[test]
    fn normalization_examples() {
        let mut raw = [0.0; N_INPUT];
        raw[0] = 50.0;
        raw[1] = 0.0;
        raw[2] = 6.17;
        let v = normalize_quantize(&raw, 50.0, 0.0025);
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 0.0);
        assert!((v[2] - 0.1225).abs() < 1e-12, "{}", v[2]);
    }

    #[test]
    fn raw_timings_within_jitter_bound() {
        let p = StimulusProfile::default();
        for site in 0..N_SITES {
            for r in synthesize_stimulus_raw(&p, site, 1000, 3) {
                // sorting may permute spikes of one channel; check against the
                // sorted bound envelope per channel
                for c in 0..N_CHANNELS {
                    for k in 0..N_SPIKES {
                        let t = r[c * 4 + k];
                        let lo = p.means_ms[site][c].iter().map(|m| m * 0.7).fold(f64::MAX, f64::min);
                        let hi = p.means_ms[site][c].iter().map(|m| m * 1.3).fold(0.0, f64::max);
                        assert!(t >= lo - 1e-9 && t <= hi.min(50.0) + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn extraneous_patterns_are_sorted_and_normalized() {
        let pats = synthesize_extraneous(4000, 50.0, 0.0025, 5);
        assert_eq!(pats.len(), 4000);
        assert!(pats.iter().all(|p| p.is_valid(0.0025) && p.label == Label::Sr));
    }

    #[test]
    fn paper_split_counts() {
        let split = generate(&DatasetConfig::default(), &StimulusProfile::default(), 42).unwrap();
        assert_eq!(split.train.len(), 6000);
        assert_eq!(split.test.len(), 2000);
        assert_eq!(class_counts(&split.train), [735, 760, 724, 754, 3027]);
        assert_eq!(class_counts(&split.test), [265, 240, 276, 246, 973]);
        assert!(split.train.iter().chain(&split.test).all(|p| p.is_valid(0.0025)));
    }

    #[test]
    fn split_is_a_partition() {
        let pats = synthesize_stimulus_patterns(&StimulusProfile::default(), 10, 0.0025, 1);
        let counts = SplitCounts::proportional([10, 10, 10, 10, 0], 0.7);
        let split = make_split(pats.clone(), counts, 3).unwrap();
        let mut joined: Vec<String> =
            split.train.iter().chain(&split.test).map(|p| format!("{:?}", p)).collect();
        let mut orig: Vec<String> = pats.iter().map(|p| format!("{:?}", p)).collect();
        joined.sort();
        orig.sort();
        assert_eq!(joined, orig);
    }

    #[test]
    fn split_rejects_wrong_counts() {
        let pats = synthesize_extraneous(10, 50.0, 0.0025, 1);
        assert!(matches!(make_split(pats, SplitCounts::PAPER, 0), Err(Error::CountMismatch(_))));
    }

    #[test]
    fn csv_round_trip() {
        let pats = synthesize_extraneous(20, 50.0, 0.0025, 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, patterns_to_csv(&pats)).unwrap();
        assert_eq!(read_patterns_csv(&path).unwrap(), pats);
    }
}
