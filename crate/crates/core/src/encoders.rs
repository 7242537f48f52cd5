//! Frozen stub encoders: one broadband base encoder and a pool of weak
//! experts, each with a hand-built descriptor and a seeded random projection.
//!
//! Every encoder frames the signal with the same `(frame_len, hop)`, computes
//! a per-frame descriptor, multiplies by a fixed projection drawn from its
//! seed and squashes with `tanh`. Nothing here is trainable.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, WeeError};
use crate::numerics::Tensor;

/// Time-major `frames × dim` features.
pub type FeatureMap = Tensor;

pub const MAX_ABS_SAMPLE: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AudioSegment {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioSegment {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(WeeError::Config("sample rate must be positive".into()));
        }
        if let Some(bad) = samples
            .iter()
            .find(|v| !v.is_finite() || v.abs() > MAX_ABS_SAMPLE)
        {
            return Err(WeeError::InvalidInput(format!(
                "sample {bad} outside [-{MAX_ABS_SAMPLE}, {MAX_ABS_SAMPLE}]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

/// Resamples by linear interpolation, then crops from the start or
/// zero-pads at the end to exactly `duration_s × rate_hz` samples.
pub fn preprocess(raw: &AudioSegment, duration_s: f64, rate_hz: u32) -> Result<AudioSegment> {
    if !(duration_s > 0.0 && duration_s.is_finite()) || rate_hz == 0 {
        return Err(WeeError::Config(format!(
            "target duration {duration_s} s at {rate_hz} Hz is not positive"
        )));
    }
    if raw.is_empty() {
        return Err(WeeError::InvalidInput("empty audio segment".into()));
    }
    let mut samples = if raw.sample_rate_hz == rate_hz {
        raw.samples.clone()
    } else {
        resample_linear(&raw.samples, raw.sample_rate_hz, rate_hz)
    };
    let target = (duration_s * rate_hz as f64).round() as usize;
    samples.resize(target, 0.0);
    AudioSegment::new(samples, rate_hz)
}

fn resample_linear(x: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    let ratio = from_hz as f64 / to_hz as f64;
    let last = (x.len() - 1) as f64;
    let n_out = (last / ratio).floor() as usize + 1;
    (0..n_out)
        .map(|n| {
            let pos = n as f64 * ratio;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < x.len() {
                x[i] * (1.0 - frac) + x[i + 1] * frac
            } else {
                x[i]
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Log-magnitude spectrum of every frame; broadband, unspecialized.
    Base,
    /// Frame envelope and its frame-to-frame change (amplitude modulation).
    EnvelopeExpert,
    /// Coarse-band spectral magnitudes (dominant carrier).
    SpectralExpert,
    /// High-band energy share and high-band peak (short transients).
    BurstExpert,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Base => "base",
            EncoderKind::EnvelopeExpert => "envelope_expert",
            EncoderKind::SpectralExpert => "spectral_expert",
            EncoderKind::BurstExpert => "burst_expert",
        }
    }

    fn descriptor_dim(self, frame_len: usize) -> usize {
        let bins = frame_len / 2 + 1;
        match self {
            EncoderKind::Base => bins,
            EncoderKind::EnvelopeExpert => 3,
            EncoderKind::SpectralExpert => bins.div_ceil(SPECTRAL_BAND_BINS),
            EncoderKind::BurstExpert => 2,
        }
    }
}

const SPECTRAL_BAND_BINS: usize = 2;
/// Share of Nyquist above which a bin counts as high band.
pub const HIGH_BAND_FRACTION: f64 = 0.25;
const ENVELOPE_DELTA_GAIN: f64 = 4.0;
const SPECTRAL_GAIN: f64 = 2.0;
const BURST_RATIO_GAIN: f64 = 2.0;
const BURST_PEAK_GAIN: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub output_dim: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub seed: u64,
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_len > self.hop && self.hop > 0) {
            return Err(WeeError::Config(format!(
                "need frame_len > hop > 0, got {} and {}",
                self.frame_len, self.hop
            )));
        }
        if self.output_dim == 0 {
            return Err(WeeError::Config("output_dim must be at least 1".into()));
        }
        Ok(())
    }

    /// `1 + ⌊(n − frame_len) / hop⌋`, or `None` when `n < frame_len`.
    pub fn num_frames(&self, num_samples: usize) -> Option<usize> {
        (num_samples >= self.frame_len).then(|| 1 + (num_samples - self.frame_len) / self.hop)
    }
}

/// Precomputed DFT twiddles for one frame length.
#[derive(Clone, Debug)]
struct Dft {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Dft {
    fn new(n: usize) -> Self {
        let bins = n / 2 + 1;
        let mut cos = Vec::with_capacity(bins * n);
        let mut sin = Vec::with_capacity(bins * n);
        for k in 0..bins {
            for t in 0..n {
                // reduce k·t mod n so the angle stays small and exact
                let angle = 2.0 * PI * ((k * t) % n) as f64 / n as f64;
                cos.push(angle.cos());
                sin.push(angle.sin());
            }
        }
        Self { n, cos, sin }
    }

    fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Real and imaginary parts of bins `0..=n/2`.
    fn transform(&self, frame: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let bins = self.bins();
        let mut re = vec![0.0; bins];
        let mut im = vec![0.0; bins];
        for k in 0..bins {
            let c = &self.cos[k * self.n..(k + 1) * self.n];
            let s = &self.sin[k * self.n..(k + 1) * self.n];
            let (mut a, mut b) = (0.0, 0.0);
            for t in 0..self.n {
                a += frame[t] * c[t];
                b -= frame[t] * s[t];
            }
            re[k] = a;
            im[k] = b;
        }
        (re, im)
    }

    fn magnitudes(&self, frame: &[f64]) -> Vec<f64> {
        let (re, im) = self.transform(frame);
        re.iter().zip(&im).map(|(a, b)| a.hypot(*b)).collect()
    }

    /// Time-domain reconstruction of the bins in `band` (inverse real DFT).
    fn band_signal(&self, re: &[f64], im: &[f64], band: std::ops::Range<usize>) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|s| {
                let mut v = 0.0;
                for k in band.clone() {
                    // row 1 of the tables holds angle 2π·t/n
                    let idx = n + (k * s) % n;
                    let w = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
                    v += w * (re[k] * self.cos[idx] - im[k] * self.sin[idx]);
                }
                v / n as f64
            })
            .collect()
    }

    fn first_high_bin(&self) -> usize {
        // bin k has frequency k/n of the sample rate; Nyquist is bin n/2
        let nyquist_bins = self.n as f64 / 2.0;
        (0..self.bins())
            .find(|&k| k as f64 > HIGH_BAND_FRACTION * nyquist_bins)
            .unwrap_or(self.bins())
    }
}

/// A frozen encoder: spec plus its materialized projection.
#[derive(Clone, Debug)]
pub struct Encoder {
    spec: EncoderSpec,
    projection: Tensor,
    dft: Dft,
    hann: Vec<f64>,
}

impl Encoder {
    pub fn new(spec: EncoderSpec) -> Result<Self> {
        spec.validate()?;
        let din = spec.kind.descriptor_dim(spec.frame_len);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let scale = 1.0 / (din as f64).sqrt();
        let data = (0..spec.output_dim * din)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        let projection = Tensor::new(spec.output_dim, din, data)?;
        let dft = Dft::new(spec.frame_len);
        let n = spec.frame_len as f64;
        let hann = (0..spec.frame_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect();
        Ok(Self {
            spec,
            projection,
            dft,
            hann,
        })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn kind(&self) -> EncoderKind {
        self.spec.kind
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// The frozen `output_dim × descriptor_dim` projection.
    pub fn projection(&self) -> &Tensor {
        &self.projection
    }

    /// Per-frame raw descriptors before projection, `frames × descriptor_dim`.
    pub fn descriptors(&self, audio: &AudioSegment) -> Result<Tensor> {
        let spec = &self.spec;
        let x = audio.samples();
        let frames = spec.num_frames(x.len()).ok_or_else(|| {
            WeeError::InvalidInput(format!(
                "segment of {} samples is shorter than one frame ({})",
                x.len(),
                spec.frame_len
            ))
        })?;
        let din = spec.kind.descriptor_dim(spec.frame_len);
        let mut out = Tensor::zeros(frames, din);
        let frame = |t: usize| &x[t * spec.hop..t * spec.hop + spec.frame_len];
        let amp = 2.0 / spec.frame_len as f64;
        match spec.kind {
            EncoderKind::Base => {
                for t in 0..frames {
                    let mags = self.dft.magnitudes(frame(t));
                    for (o, m) in out.row_mut(t).iter_mut().zip(mags) {
                        *o = m.ln_1p();
                    }
                }
            }
            EncoderKind::EnvelopeExpert => {
                // envelope of the low band only, so high-band transients
                // do not move it
                let hi = self.dft.first_high_bin();
                let env: Vec<f64> = (0..frames)
                    .map(|t| {
                        let (re, im) = self.dft.transform(frame(t));
                        let low = self.dft.band_signal(&re, &im, 0..hi);
                        low.iter().map(|v| v.abs()).sum::<f64>() / low.len() as f64
                    })
                    .collect();
                for t in 0..frames {
                    let delta = if t == 0 { 0.0 } else { env[t] - env[t - 1] };
                    let row = out.row_mut(t);
                    row[0] = env[t];
                    row[1] = ENVELOPE_DELTA_GAIN * delta;
                    row[2] = ENVELOPE_DELTA_GAIN * delta.abs();
                }
            }
            EncoderKind::SpectralExpert => {
                for t in 0..frames {
                    let mags = self.dft.magnitudes(frame(t));
                    let row = out.row_mut(t);
                    for (k, m) in mags.iter().enumerate() {
                        row[k / SPECTRAL_BAND_BINS] += SPECTRAL_GAIN * amp * m;
                    }
                }
            }
            EncoderKind::BurstExpert => {
                // Hann taper keeps slow low-band modulation from leaking
                // into the high band
                let hi = self.dft.first_high_bin();
                for t in 0..frames {
                    let f: Vec<f64> = frame(t).iter().zip(&self.hann).map(|(v, w)| v * w).collect();
                    let (re, im) = self.dft.transform(&f);
                    let energy: Vec<f64> = re.iter().zip(&im).map(|(a, b)| a * a + b * b).collect();
                    let total: f64 = energy.iter().sum();
                    let high: f64 = energy[hi..].iter().sum();
                    let ratio = if total > 0.0 { high / total } else { 0.0 };
                    let peak = self
                        .dft
                        .band_signal(&re, &im, hi..re.len())
                        .iter()
                        .fold(0.0f64, |m, v| m.max(v.abs()));
                    let row = out.row_mut(t);
                    row[0] = BURST_RATIO_GAIN * ratio;
                    row[1] = BURST_PEAK_GAIN * peak;
                }
            }
        }
        Ok(out)
    }

    pub fn encode(&self, audio: &AudioSegment) -> Result<FeatureMap> {
        let desc = self.descriptors(audio)?;
        let mut out = Tensor::zeros(desc.rows(), self.spec.output_dim);
        let din = desc.cols();
        for t in 0..desc.rows() {
            let d = desc.row(t);
            let row = out.row_mut(t);
            for (j, o) in row.iter_mut().enumerate() {
                let w = &self.projection.data()[j * din..(j + 1) * din];
                let s: f64 = w.iter().zip(d).map(|(a, b)| a * b).sum();
                *o = s.tanh();
            }
        }
        Ok(out)
    }
}

/// Builds the encoder for `spec` and applies it to `audio`.
pub fn encode(spec: &EncoderSpec, audio: &AudioSegment) -> Result<FeatureMap> {
    Encoder::new(spec.clone())?.encode(audio)
}

/// Linear interpolation along time to `target_frames` rows.
pub fn align_time(z: &FeatureMap, target_frames: usize) -> Result<FeatureMap> {
    if target_frames == 0 {
        return Err(WeeError::InvalidInput("target frame count must be positive".into()));
    }
    let t1 = z.rows();
    if t1 == target_frames {
        return Ok(z.clone());
    }
    let mut out = Tensor::zeros(target_frames, z.cols());
    for j in 0..target_frames {
        let pos = if target_frames == 1 {
            0.0
        } else {
            j as f64 * (t1 - 1) as f64 / (target_frames - 1) as f64
        };
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        for c in 0..z.cols() {
            let a = z.get(i, c);
            let v = if i + 1 < t1 && frac > 0.0 {
                a * (1.0 - frac) + z.get(i + 1, c) * frac
            } else {
                a
            };
            out.set(j, c, v);
        }
    }
    Ok(out)
}

/// Framing and dimensions shared by the base encoder and the pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub d_base: usize,
    pub d_w: usize,
    pub num_experts: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            d_base: 32,
            d_w: 16,
            num_experts: 3,
            frame_len: 50,
            hop: 25,
            seed: 0x5EED_0001,
        }
    }
}

/// Expert kinds in pool order; pools larger than three repeat the cycle
/// with fresh projection seeds.
pub const EXPERT_CYCLE: [EncoderKind; 3] = [
    EncoderKind::EnvelopeExpert,
    EncoderKind::SpectralExpert,
    EncoderKind::BurstExpert,
];

/// The strong base encoder plus `M` weak experts.
#[derive(Clone, Debug)]
pub struct EncoderPool {
    base: Encoder,
    experts: Vec<Encoder>,
}

/// All encoder outputs for one segment.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedAudio {
    pub base: FeatureMap,
    pub experts: Vec<FeatureMap>,
}

impl EncoderPool {
    pub fn new(cfg: &PoolConfig) -> Result<Self> {
        if cfg.num_experts == 0 {
            return Err(WeeError::Config("pool needs at least one expert".into()));
        }
        let spec = |kind, output_dim, seed| EncoderSpec {
            kind,
            output_dim,
            frame_len: cfg.frame_len,
            hop: cfg.hop,
            seed,
        };
        let base = Encoder::new(spec(EncoderKind::Base, cfg.d_base, cfg.seed))?;
        let experts = (0..cfg.num_experts)
            .map(|k| {
                let kind = EXPERT_CYCLE[k % EXPERT_CYCLE.len()];
                Encoder::new(spec(kind, cfg.d_w, cfg.seed.wrapping_add(1 + k as u64)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { base, experts })
    }

    pub fn base(&self) -> &Encoder {
        &self.base
    }

    pub fn experts(&self) -> &[Encoder] {
        &self.experts
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn expert_index(&self, kind: EncoderKind) -> Option<usize> {
        self.experts.iter().position(|e| e.kind() == kind)
    }

    pub fn encode_all(&self, audio: &AudioSegment) -> Result<EncodedAudio> {
        let base = self.base.encode(audio)?;
        let experts = self
            .experts
            .iter()
            .map(|e| {
                let z = e.encode(audio)?;
                align_time(&z, base.rows())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EncodedAudio { base, experts })
    }
}
