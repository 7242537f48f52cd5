//! Synthetic four-task audio benchmark with planted acoustic cues.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoders::AudioSegment;
use crate::error::{Result, WeeError};
use crate::vocab::{CLASS_TOKENS, EOS, RISK, SAFE, SYMBOL_TOKENS, TASK_TOKENS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "ER")]
    Er,
    #[serde(rename = "CTC")]
    Ctc,
    #[serde(rename = "CMD")]
    Cmd,
    #[serde(rename = "DS")]
    Ds,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Er, Task::Ctc, Task::Cmd, Task::Ds];

    pub fn index(self) -> usize {
        match self {
            Task::Er => 0,
            Task::Ctc => 1,
            Task::Cmd => 2,
            Task::Ds => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Er => "ER",
            Task::Ctc => "CTC",
            Task::Cmd => "CMD",
            Task::Ds => "DS",
        }
    }

    pub fn instruction_token(self) -> usize {
        TASK_TOKENS[self.index()]
    }

    /// Number of label classes for the classification tasks.
    pub fn num_classes(self) -> Option<usize> {
        match self {
            Task::Er => Some(ER_MOD_RATES_HZ.len()),
            Task::Ctc => Some(CTC_CARRIERS_HZ.len()),
            Task::Cmd => Some(2),
            Task::Ds => None,
        }
    }

    /// Longest target sequence, EOS included.
    pub fn max_target_len(self) -> usize {
        match self {
            Task::Ds => DS_NUM_CHIRPS + 1,
            _ => 2,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = WeeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ER" => Ok(Task::Er),
            "CTC" => Ok(Task::Ctc),
            "CMD" => Ok(Task::Cmd),
            "DS" => Ok(Task::Ds),
            other => Err(WeeError::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Split::Train => 0x7261_696E,
            Split::Dev => 0x6465_7600,
            Split::Test => 0x7465_7374,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(usize),
    Risk(bool),
    Symbols(Vec<usize>),
}

impl Label {
    /// Class index for classification tasks (`RISK` = 1).
    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Risk(r) => Some(usize::from(*r)),
            Label::Symbols(_) => None,
        }
    }

    /// Answer tokens followed by `EOS`.
    pub fn target_ids(&self) -> Vec<usize> {
        let mut ids = match self {
            Label::Class(c) => vec![CLASS_TOKENS[*c]],
            Label::Risk(true) => vec![RISK],
            Label::Risk(false) => vec![SAFE],
            Label::Symbols(s) => s.iter().map(|&k| SYMBOL_TOKENS[k]).collect(),
        };
        ids.push(EOS);
        ids
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskExample {
    pub task: Task,
    pub audio: AudioSegment,
    pub instruction_ids: Vec<usize>,
    pub target_ids: Vec<usize>,
    pub label: Label,
}

/// Knobs of the signal generator; recorded in every dataset header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationParams {
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    pub noise_sigma: f64,
    pub er_carrier_hz: f64,
    pub er_mod_depth: f64,
    pub ctc_dominant_amp: f64,
    pub ctc_other_amp: f64,
    pub cmd_tone_hz: f64,
    pub cmd_burst_hz: f64,
    pub cmd_burst_s: f64,
    pub cmd_burst_amp: f64,
    pub cmd_positive_rate: f64,
    pub ds_chirp_s: f64,
    pub ds_sweep_hz: f64,
    /// Per-example carrier amplitude is drawn from this range.
    pub amp_range: (f64, f64),
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            sample_rate_hz: 1000,
            duration_s: 1.0,
            noise_sigma: 0.1,
            er_carrier_hz: 100.0,
            er_mod_depth: 0.8,
            ctc_dominant_amp: 1.0,
            ctc_other_amp: 0.2,
            cmd_tone_hz: 80.0,
            cmd_burst_hz: 350.0,
            cmd_burst_s: 0.05,
            cmd_burst_amp: 0.9,
            cmd_positive_rate: 1.0 / 20.0,
            ds_chirp_s: 0.1,
            ds_sweep_hz: 30.0,
            amp_range: (0.8, 1.2),
        }
    }
}

pub const ER_MOD_RATES_HZ: [f64; 3] = [2.0, 5.0, 11.0];
pub const CTC_CARRIERS_HZ: [f64; 4] = [60.0, 90.0, 130.0, 190.0];
pub const DS_START_HZ: [f64; 4] = [70.0, 110.0, 150.0, 190.0];
pub const DS_NUM_CHIRPS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: Task,
    pub split: Split,
    pub seed: u64,
    pub generation_params: GenerationParams,
    pub examples: Vec<TaskExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// SplitMix64 finalizer; derives independent per-example seeds.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rounds to 9 significant digits, the precision of the dataset file format.
pub(crate) fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Generates `n` examples of `task` with default generation parameters.
pub fn gen_task(task: Task, n: usize, seed: u64) -> Result<Dataset> {
    gen_split(task, Split::Train, n, seed, &GenerationParams::default())
}

pub fn gen_split(
    task: Task,
    split: Split,
    n: usize,
    seed: u64,
    params: &GenerationParams,
) -> Result<Dataset> {
    if n == 0 {
        return Err(WeeError::Config("dataset size must be at least 1".into()));
    }
    if params.sample_rate_hz == 0 || !(params.duration_s > 0.0) {
        return Err(WeeError::Config("sample rate and duration must be positive".into()));
    }
    let base = mix_seed(mix_seed(seed, split.salt()), task.index() as u64 + 1);
    let examples = (0..n)
        .map(|i| gen_example(task, mix_seed(base, i as u64), params))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        task,
        split,
        seed,
        generation_params: params.clone(),
        examples,
    })
}

fn gen_example(task: Task, seed: u64, p: &GenerationParams) -> Result<TaskExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = p.sample_rate_hz as f64;
    let n = (p.duration_s * rate).round() as usize;
    let time = |i: usize| i as f64 / rate;
    let amp = rng.gen_range(p.amp_range.0..=p.amp_range.1);
    let mut x = vec![0.0; n];

    let label = match task {
        Task::Er => {
            let c = rng.gen_range(0..ER_MOD_RATES_HZ.len());
            let fm = ER_MOD_RATES_HZ[c];
            let (pm, pc) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
            for (i, v) in x.iter_mut().enumerate() {
                let t = time(i);
                let env = 1.0 + p.er_mod_depth * (2.0 * PI * fm * t + pm).sin();
                *v = amp * env * (2.0 * PI * p.er_carrier_hz * t + pc).sin();
            }
            Label::Class(c)
        }
        Task::Ctc => {
            let d = rng.gen_range(0..CTC_CARRIERS_HZ.len());
            for (j, &f) in CTC_CARRIERS_HZ.iter().enumerate() {
                let a = if j == d { p.ctc_dominant_amp } else { p.ctc_other_amp };
                let ph = rng.gen_range(0.0..2.0 * PI);
                for (i, v) in x.iter_mut().enumerate() {
                    *v += amp * a * (2.0 * PI * f * time(i) + ph).sin();
                }
            }
            Label::Class(d)
        }
        Task::Cmd => {
            let positive = rng.gen_bool(p.cmd_positive_rate);
            let ph = rng.gen_range(0.0..2.0 * PI);
            for (i, v) in x.iter_mut().enumerate() {
                *v = amp * (2.0 * PI * p.cmd_tone_hz * time(i) + ph).sin();
            }
            if positive {
                let onset = rng.gen_range(0.0..=(p.duration_s - p.cmd_burst_s).max(0.0));
                let first = (onset * rate).round() as usize;
                let len = (p.cmd_burst_s * rate).round() as usize;
                for i in first..(first + len).min(n) {
                    let tau = time(i - first);
                    x[i] += p.cmd_burst_amp * (2.0 * PI * p.cmd_burst_hz * tau).sin();
                }
            }
            Label::Risk(positive)
        }
        Task::Ds => {
            let symbols: Vec<usize> = (0..DS_NUM_CHIRPS)
                .map(|_| rng.gen_range(0..DS_START_HZ.len()))
                .collect();
            let chirp_len = (p.ds_chirp_s * rate).round() as usize;
            let sweep_rate = p.ds_sweep_hz / p.ds_chirp_s;
            for (c, &s) in symbols.iter().enumerate() {
                let f0 = DS_START_HZ[s];
                let start = c * chirp_len;
                for i in start..(start + chirp_len).min(n) {
                    let tau = time(i - start);
                    let phase = 2.0 * PI * (f0 * tau + 0.5 * sweep_rate * tau * tau);
                    x[i] = amp * phase.sin();
                }
            }
            Label::Symbols(symbols)
        }
    };

    let noise = Normal::new(0.0, p.noise_sigma)
        .map_err(|e| WeeError::Config(format!("noise sigma: {e}")))?;
    for v in &mut x {
        *v = round_sig9((*v + noise.sample(&mut rng)).clamp(-4.0, 4.0));
    }
    let target_ids = label.target_ids();
    Ok(TaskExample {
        task,
        audio: AudioSegment::new(x, p.sample_rate_hz)?,
        instruction_ids: vec![task.instruction_token()],
        target_ids,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_label_maps_to_class_token() {
        let ds = gen_task(Task::Er, 60, 3).unwrap();
        for ex in &ds.examples {
            let Label::Class(c) = ex.label else { panic!() };
            assert_eq!(ex.target_ids, vec![CLASS_TOKENS[c], EOS]);
            assert_eq!(ex.instruction_ids, vec![TASK_TOKENS[0]]);
            assert_eq!(ex.audio.len(), 1000);
        }
        // label 0 is the slowest modulation rate
        assert_eq!(ER_MOD_RATES_HZ[0], 2.0);
        assert_eq!(Label::Class(0).target_ids(), vec![CLASS_TOKENS[0], EOS]);
    }

    #[test]
    fn cmd_targets() {
        assert_eq!(Label::Risk(false).target_ids(), vec![SAFE, EOS]);
        assert_eq!(Label::Risk(true).target_ids(), vec![RISK, EOS]);
        let ds = gen_task(Task::Cmd, 200, 1).unwrap();
        for ex in &ds.examples {
            assert_eq!(ex.target_ids, ex.label.target_ids());
        }
    }

    #[test]
    fn ds_targets_are_symbols_then_eos() {
        let ds = gen_task(Task::Ds, 10, 5).unwrap();
        for ex in &ds.examples {
            assert_eq!(ex.target_ids.len(), 5);
            assert_eq!(*ex.target_ids.last().unwrap(), EOS);
            assert!(ex.target_ids[..4].iter().all(|t| SYMBOL_TOKENS.contains(t)));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_task(Task::Er, 100, 7).unwrap();
        let b = gen_task(Task::Er, 100, 7).unwrap();
        assert_eq!(a, b);
        let c = gen_task(Task::Er, 100, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn prefix_examples_do_not_depend_on_n() {
        let a = gen_task(Task::Ctc, 5, 2).unwrap();
        let b = gen_task(Task::Ctc, 50, 2).unwrap();
        assert_eq!(a.examples[..], b.examples[..5]);
    }

    #[test]
    fn cmd_positive_rate_within_three_sigma() {
        let n = 4000;
        let ds = gen_task(Task::Cmd, n, 11).unwrap();
        let pos = ds
            .examples
            .iter()
            .filter(|e| e.label == Label::Risk(true))
            .count() as f64;
        let p = 1.0 / 20.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((pos - n as f64 * p).abs() <= 3.0 * sigma, "{pos} positives");
    }

    #[test]
    fn invalid_task_and_size() {
        assert!(matches!("XYZ".parse::<Task>(), Err(WeeError::Config(_))));
        assert_eq!("ds".parse::<Task>().unwrap(), Task::Ds);
        assert!(gen_task(Task::Er, 0, 1).is_err());
    }

    #[test]
    fn samples_carry_nine_significant_digits() {
        let ds = gen_task(Task::Ds, 2, 9).unwrap();
        for &v in ds.examples[0].audio.samples() {
            assert_eq!(round_sig9(v), v);
        }
    }
}
