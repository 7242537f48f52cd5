//! A tiny pre-norm causal transformer standing in for the language model.
//!
//! The decoder is pretrained on a copy task, then frozen; afterwards only
//! the low-rank deltas on its query and value projections are trainable.
//! Parameters live in a [`ParamStore`] under `decoder.*` (base weights) and
//! `lora.*` (low-rank deltas) so that a combined model store can be bound to
//! one tape.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, WeeError};
use crate::numerics::{AdamW, AdamWConfig, Bindings, GradMode, ParamStore, Tape, Tensor, Var};
use crate::routing::{argmax, normal_matrix};
use crate::vocab::{copy_alphabet, copy_separators, EOS, VOCAB_SIZE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub num_blocks: usize,
    pub num_heads: usize,
    pub max_len: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    /// Hidden width of each feed-forward layer, as a multiple of `d_model`.
    pub mlp_ratio: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            vocab: VOCAB_SIZE,
            d_model: 48,
            num_blocks: 2,
            num_heads: 2,
            max_len: 64,
            lora_rank: 4,
            lora_alpha: 8.0,
            mlp_ratio: 4,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab == 0 || self.d_model == 0 || self.num_blocks == 0 || self.max_len == 0 {
            return Err(WeeError::Config("decoder dimensions must be positive".into()));
        }
        if self.num_heads == 0 || !self.d_model.is_multiple_of(self.num_heads) {
            return Err(WeeError::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.num_heads
            )));
        }
        if self.lora_rank == 0 {
            return Err(WeeError::Config("lora_rank must be at least 1".into()));
        }
        if self.mlp_ratio == 0 {
            return Err(WeeError::Config("mlp_ratio must be at least 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn lora_scale(&self) -> f64 {
        self.lora_alpha / self.lora_rank as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    AudioPrefix,
    Instruction,
    Target,
    Pad,
}

/// Ids and roles of a full `[audio; instruction; target]` sequence.
/// Audio positions carry no id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<Option<usize>>,
    pub roles: Vec<Role>,
}

impl TokenSequence {
    pub fn new(num_audio: usize, instruction: &[usize], target: &[usize]) -> Self {
        let mut ids = vec![None; num_audio];
        let mut roles = vec![Role::AudioPrefix; num_audio];
        ids.extend(instruction.iter().map(|&i| Some(i)));
        roles.extend(std::iter::repeat_n(Role::Instruction, instruction.len()));
        ids.extend(target.iter().map(|&i| Some(i)));
        roles.extend(std::iter::repeat_n(Role::Target, target.len()));
        Self { ids, roles }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_audio(&self) -> usize {
        self.roles.iter().take_while(|r| **r == Role::AudioPrefix).count()
    }

    /// Token ids fed to the decoder: every non-audio position except the last.
    pub fn input_ids(&self) -> Result<Vec<usize>> {
        let n = self.num_audio();
        self.ids[n..self.len().saturating_sub(1)]
            .iter()
            .map(|id| id.ok_or_else(|| WeeError::InvalidInput("audio position after text".into())))
            .collect()
    }

    /// Next-token targets aligned with the input positions: position `p`
    /// predicts `ids[p + 1]` when that position is a target.
    pub fn next_token_targets(&self) -> Vec<Option<usize>> {
        (0..self.len().saturating_sub(1))
            .map(|p| match self.roles[p + 1] {
                Role::Target => self.ids[p + 1],
                _ => None,
            })
            .collect()
    }
}

fn block_name(b: usize, part: &str) -> String {
    format!("decoder.block{b}.{part}")
}

fn lora_name(b: usize, proj: &str, which: &str) -> String {
    format!("lora.block{b}.{proj}.{which}")
}

pub const TOKEN_EMBEDDING: &str = "decoder.tok_emb";
pub const POSITION_EMBEDDING: &str = "decoder.pos_emb";
pub const FINAL_NORM_GAIN: &str = "decoder.ln_f.gain";
pub const FINAL_NORM_BIAS: &str = "decoder.ln_f.bias";
pub const HEAD: &str = "decoder.head";

/// Is `name` a low-rank delta parameter?
pub fn is_lora(name: &str) -> bool {
    name.starts_with("lora.")
}

/// Frozen weight `W` (`d_out × d_in`) with a low-rank delta `(α/r)·B·A`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankDelta {
    /// `r × d_in`.
    pub a: Tensor,
    /// `d_out × r`.
    pub b: Tensor,
    pub alpha: f64,
}

/// `x · (W + (α/r)·B·A)ᵀ`.
pub fn apply_lora(weight: &Tensor, delta: &LowRankDelta, x: &Tensor) -> Result<Tensor> {
    let r = delta.a.rows();
    if delta.b.cols() != r
        || delta.a.cols() != weight.cols()
        || delta.b.rows() != weight.rows()
        || x.cols() != weight.cols()
    {
        return shape_err(format!(
            "W {:?}, A {:?}, B {:?}, x {:?}",
            weight.shape(),
            delta.a.shape(),
            delta.b.shape(),
            x.shape()
        ));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let w = tape.constant(weight.clone());
    let a = tape.constant(delta.a.clone());
    let b = tape.constant(delta.b.clone());
    let out = linear_lora(&mut tape, xv, w, Some((a, b)), delta.alpha / r as f64)?;
    Ok(tape.value(out).clone())
}

fn linear_lora(tape: &mut Tape, x: Var, w: Var, lora: Option<(Var, Var)>, scale: f64) -> Result<Var> {
    let base = tape.matmul_nt(x, w)?;
    match lora {
        None => Ok(base),
        Some((a, b)) => {
            let low = tape.matmul_nt(x, a)?;
            let delta = tape.matmul_nt(low, b)?;
            let delta = tape.scale(delta, scale);
            tape.add(base, delta)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub config: DecoderConfig,
    pub params: ParamStore,
}

impl Decoder {
    /// Randomly initialized base weights (trainable), no low-rank deltas.
    pub fn init(config: DecoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let hidden = config.mlp_ratio * d;
        let mut params = ParamStore::new();
        let mut next_seed = seed;
        let mut draw = |rows: usize, cols: usize, std: f64| {
            next_seed = next_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
            normal_matrix(rows, cols, std, next_seed)
        };
        let w_std = 1.0 / (d as f64).sqrt();
        params.insert(TOKEN_EMBEDDING, draw(config.vocab, d, 0.5)?, true)?;
        params.insert(POSITION_EMBEDDING, draw(config.max_len, d, 0.5)?, true)?;
        for b in 0..config.num_blocks {
            params.insert(block_name(b, "ln1.gain"), Tensor::filled(1, d, 1.0), true)?;
            params.insert(block_name(b, "ln1.bias"), Tensor::zeros(1, d), true)?;
            for proj in ["wq", "wk", "wv", "wo"] {
                params.insert(block_name(b, &format!("attn.{proj}")), draw(d, d, w_std)?, true)?;
            }
            params.insert(block_name(b, "ln2.gain"), Tensor::filled(1, d, 1.0), true)?;
            params.insert(block_name(b, "ln2.bias"), Tensor::zeros(1, d), true)?;
            params.insert(block_name(b, "mlp.w1"), draw(hidden, d, w_std)?, true)?;
            params.insert(block_name(b, "mlp.b1"), Tensor::zeros(1, hidden), true)?;
            params.insert(
                block_name(b, "mlp.w2"),
                draw(d, hidden, 1.0 / (hidden as f64).sqrt())?,
                true,
            )?;
            params.insert(block_name(b, "mlp.b2"), Tensor::zeros(1, d), true)?;
        }
        params.insert(FINAL_NORM_GAIN, Tensor::filled(1, d, 1.0), true)?;
        params.insert(FINAL_NORM_BIAS, Tensor::zeros(1, d), true)?;
        params.insert(HEAD, draw(config.vocab, d, w_std)?, true)?;
        Ok(Self { config, params })
    }

    /// Adds trainable low-rank deltas on every query and value projection:
    /// `A ~ N(0, 1/d)`, `B = 0`, so outputs are unchanged at attachment.
    pub fn attach_lora(&mut self, seed: u64) -> Result<()> {
        let d = self.config.d_model;
        let r = self.config.lora_rank;
        for b in 0..self.config.num_blocks {
            for (i, proj) in ["q", "v"].iter().enumerate() {
                let a = normal_matrix(r, d, 1.0 / (d as f64).sqrt(), seed ^ ((2 * b + i) as u64 + 1))?;
                self.params.insert(lora_name(b, proj, "a"), a, true)?;
                self.params.insert(lora_name(b, proj, "b"), Tensor::zeros(d, r), true)?;
            }
        }
        Ok(())
    }

    /// Copy without any low-rank deltas.
    pub fn without_lora(&self) -> Result<Self> {
        let params = ParamStore::from_params(
            self.params
                .iter()
                .filter(|p| !is_lora(&p.name))
                .cloned()
                .collect(),
        )?;
        Ok(Self {
            config: self.config.clone(),
            params,
        })
    }

    /// Marks every base weight frozen; low-rank deltas keep their flag.
    pub fn freeze_base(&mut self) {
        for p in self.params.iter_mut() {
            if !is_lora(&p.name) {
                p.trainable = false;
            }
        }
    }

    /// Logits for every position of `[audio; tokens]`, forward only.
    pub fn logits(&self, audio: Option<&Tensor>, tokens: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, GradMode::None);
        let audio = audio.map(|a| tape.constant(a.clone()));
        let out = forward_tape(&mut tape, &b, &self.config, audio, tokens)?;
        Ok(tape.value(out).clone())
    }

    /// Greedy continuation of `[audio; instruction]` for at most `max_new`
    /// tokens, stopping after EOS (which is included).
    pub fn generate(&self, audio: Option<&Tensor>, instruction: &[usize], max_new: usize) -> Result<Vec<usize>> {
        generate_with(&self.params, &self.config, audio, instruction, max_new)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(path, CheckpointKind::Decoder, &self.config, &self.params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (config, params) = load_checkpoint(path, CheckpointKind::Decoder)?;
        let config: DecoderConfig = serde_json::from_value(config)?;
        config.validate()?;
        Ok(Self { config, params })
    }
}

/// Greedy decoding against any store holding the decoder parameters.
pub fn generate_with(
    params: &ParamStore,
    config: &DecoderConfig,
    audio: Option<&Tensor>,
    instruction: &[usize],
    max_new: usize,
) -> Result<Vec<usize>> {
    let mut tokens = instruction.to_vec();
    let mut out = Vec::new();
    for _ in 0..max_new {
        let mut tape = Tape::new();
        let b = params.bind(&mut tape, GradMode::None);
        let a = audio.map(|a| tape.constant(a.clone()));
        let logits = forward_tape(&mut tape, &b, config, a, &tokens)?;
        let lv = tape.value(logits);
        let next = argmax(lv.row(lv.rows() - 1));
        out.push(next);
        if next == EOS {
            break;
        }
        tokens.push(next);
    }
    Ok(out)
}

/// Decoder forward pass on a tape: `audio` (`P × d_model`, optional) is
/// prepended to the embedded `tokens`; returns `(P + len) × vocab` logits.
/// Low-rank deltas are applied when bound.
pub fn forward_tape(
    tape: &mut Tape,
    b: &Bindings,
    cfg: &DecoderConfig,
    audio: Option<Var>,
    tokens: &[usize],
) -> Result<Var> {
    let d = cfg.d_model;
    let prefix = match audio {
        Some(a) => {
            if tape.value(a).cols() != d {
                return shape_err(format!(
                    "audio embeddings have width {}, decoder expects {d}",
                    tape.value(a).cols()
                ));
            }
            tape.value(a).rows()
        }
        None => 0,
    };
    let len = prefix + tokens.len();
    if len == 0 {
        return Err(WeeError::InvalidInput("empty decoder input".into()));
    }
    if len > cfg.max_len {
        return Err(WeeError::Capacity {
            len,
            max_len: cfg.max_len,
        });
    }

    let mut parts = Vec::with_capacity(2);
    if let Some(a) = audio {
        parts.push(a);
    }
    if !tokens.is_empty() {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= cfg.vocab) {
            return Err(WeeError::InvalidInput(format!("token {bad} >= vocab {}", cfg.vocab)));
        }
        parts.push(tape.gather_rows(b.var(TOKEN_EMBEDDING)?, tokens)?);
    }
    let x = if parts.len() == 1 { parts[0] } else { tape.concat_rows(&parts)? };
    let positions: Vec<usize> = (0..len).collect();
    let pos = tape.gather_rows(b.var(POSITION_EMBEDDING)?, &positions)?;
    let mut x = tape.add(x, pos)?;

    let dh = cfg.head_dim();
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let scale = cfg.lora_scale();
    for blk in 0..cfg.num_blocks {
        let h = tape.layer_norm(x, b.var(&block_name(blk, "ln1.gain"))?, b.var(&block_name(blk, "ln1.bias"))?)?;
        let lora = |proj: &str| -> Option<(Var, Var)> {
            Some((b.get(&lora_name(blk, proj, "a"))?, b.get(&lora_name(blk, proj, "b"))?))
        };
        let q = linear_lora(tape, h, b.var(&block_name(blk, "attn.wq"))?, lora("q"), scale)?;
        let k = tape.matmul_nt(h, b.var(&block_name(blk, "attn.wk"))?)?;
        let v = linear_lora(tape, h, b.var(&block_name(blk, "attn.wv"))?, lora("v"), scale)?;
        let mut heads = Vec::with_capacity(cfg.num_heads);
        for hd in 0..cfg.num_heads {
            let qh = tape.slice_cols(q, hd * dh, dh)?;
            let kh = tape.slice_cols(k, hd * dh, dh)?;
            let vh = tape.slice_cols(v, hd * dh, dh)?;
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, inv_sqrt);
            let att = tape.causal_softmax(scores)?;
            heads.push(tape.matmul(att, vh)?);
        }
        let o = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        let o = tape.matmul_nt(o, b.var(&block_name(blk, "attn.wo"))?)?;
        x = tape.add(x, o)?;

        let h = tape.layer_norm(x, b.var(&block_name(blk, "ln2.gain"))?, b.var(&block_name(blk, "ln2.bias"))?)?;
        let m = tape.matmul_nt(h, b.var(&block_name(blk, "mlp.w1"))?)?;
        let m = tape.add_row(m, b.var(&block_name(blk, "mlp.b1"))?)?;
        let m = tape.gelu(m);
        let m = tape.matmul_nt(m, b.var(&block_name(blk, "mlp.w2"))?)?;
        let m = tape.add_row(m, b.var(&block_name(blk, "mlp.b2"))?)?;
        x = tape.add(x, m)?;
    }
    let x = tape.layer_norm(x, b.var(FINAL_NORM_GAIN)?, b.var(FINAL_NORM_BIAS)?)?;
    tape.matmul_nt(x, b.var(HEAD)?)
}

// ----- checkpoints ----------------------------------------------------------

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Decoder,
    Model,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    kind: CheckpointKind,
    config: serde_json::Value,
    params: ParamStore,
}

/// Writes a JSON checkpoint: `{format_version, kind, config, params}` where
/// `params` lists `{name, value: {rows, cols, data}, trainable}` entries.
pub fn save_checkpoint<C: Serialize>(
    path: &Path,
    kind: CheckpointKind,
    config: &C,
    params: &ParamStore,
) -> Result<()> {
    let ckpt = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        kind,
        config: serde_json::to_value(config)?,
        params: params.clone(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &ckpt)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, kind: CheckpointKind) -> Result<(serde_json::Value, ParamStore)> {
    let mut ckpt: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(WeeError::Config(format!(
            "unsupported checkpoint version {}",
            ckpt.format_version
        )));
    }
    if ckpt.kind != kind {
        return Err(WeeError::Config(format!(
            "expected a {kind:?} checkpoint, found {:?}",
            ckpt.kind
        )));
    }
    ckpt.params.reindex()?;
    for p in ckpt.params.iter() {
        if !p.value.is_finite() {
            return Err(WeeError::InvalidInput(format!("parameter `{}` is not finite", p.name)));
        }
    }
    Ok((ckpt.config, ckpt.params))
}

// ----- copy-task pretraining ------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub max_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_copy_len: usize,
    pub max_copy_len: usize,
    pub eval_every: usize,
    pub eval_sequences: usize,
    pub target_accuracy: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 5000,
            batch_size: 16,
            learning_rate: 3e-3,
            min_copy_len: 1,
            max_copy_len: 8,
            eval_every: 100,
            eval_sequences: 256,
            target_accuracy: 0.99,
            seed: 0xC0_9E,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub steps: usize,
    pub heldout_accuracy: f64,
    /// `(step, held-out accuracy)` at every evaluation.
    pub curve: Vec<(usize, f64)>,
}

/// `x₁…x_n SEP x₁…x_n EOS` with tokens drawn from the copy alphabet; the
/// separator is SEP or one of the task tokens.
pub fn copy_sequence(rng: &mut impl Rng, min_len: usize, max_len: usize) -> TokenSequence {
    let alphabet = copy_alphabet();
    let n = rng.gen_range(min_len..=max_len);
    let x: Vec<usize> = (0..n).map(|_| *alphabet.choose(rng).expect("nonempty")).collect();
    let sep = *copy_separators().choose(rng).expect("nonempty");
    let mut source = x.clone();
    source.push(sep);
    let mut target = x;
    target.push(EOS);
    TokenSequence::new(0, &source, &target)
}

fn sequence_loss(tape: &mut Tape, b: &Bindings, cfg: &DecoderConfig, seq: &TokenSequence) -> Result<Var> {
    let logits = forward_tape(tape, b, cfg, None, &seq.input_ids()?)?;
    tape.cross_entropy(logits, &seq.next_token_targets())
}

/// Teacher-forced next-token accuracy over the target positions.
pub fn copy_accuracy(decoder: &Decoder, seqs: &[TokenSequence]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for seq in seqs {
        let logits = decoder.logits(None, &seq.input_ids()?)?;
        for (p, t) in seq.next_token_targets().iter().enumerate() {
            if let Some(t) = *t {
                total += 1;
                if argmax(logits.row(p)) == t {
                    hit += 1;
                }
            }
        }
    }
    Ok(hit as f64 / total.max(1) as f64)
}

/// Trains a fresh decoder on the copy task until held-out accuracy reaches
/// the target, then freezes it and attaches zero-initialized deltas.
pub fn pretrain_decoder(config: &DecoderConfig, pc: &PretrainConfig) -> Result<(Decoder, PretrainReport)> {
    if pc.min_copy_len == 0 || pc.min_copy_len > pc.max_copy_len || pc.batch_size == 0 {
        return Err(WeeError::Config("invalid copy-task settings".into()));
    }
    if 2 * pc.max_copy_len + 1 > config.max_len {
        return Err(WeeError::Capacity {
            len: 2 * pc.max_copy_len + 1,
            max_len: config.max_len,
        });
    }
    let mut decoder = Decoder::init(config.clone(), pc.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(pc.seed ^ 0x5EED);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(pc.seed ^ 0xE7A1);
    let heldout: Vec<TokenSequence> = (0..pc.eval_sequences)
        .map(|_| copy_sequence(&mut eval_rng, pc.min_copy_len, pc.max_copy_len))
        .collect();
    let mut opt = AdamW::new(AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    })?;
    let mut curve = Vec::new();
    let mut reached = None;
    for step in 1..=pc.max_steps {
        let mut tape = Tape::new();
        let b = decoder.params.bind(&mut tape, GradMode::Trainable);
        let mut losses = Vec::with_capacity(pc.batch_size);
        for _ in 0..pc.batch_size {
            let seq = copy_sequence(&mut rng, pc.min_copy_len, pc.max_copy_len);
            losses.push(sequence_loss(&mut tape, &b, config, &seq)?);
        }
        let stacked = tape.concat_rows(&losses)?;
        let loss = tape.mean(stacked);
        let lv = tape.value(loss).get(0, 0);
        if !lv.is_finite() {
            return Err(WeeError::NonFiniteLoss {
                step,
                diagnostic: "copy-task pretraining".into(),
            });
        }
        tape.backward(loss)?;
        let grads = b.grads(&tape);
        // short linear warmup keeps the first steps stable
        let lr = pc.learning_rate * (step as f64 / 100.0).min(1.0);
        opt.step(&mut decoder.params, &grads, |_| lr)?;
        if step % pc.eval_every == 0 || step == pc.max_steps {
            let acc = copy_accuracy(&decoder, &heldout)?;
            curve.push((step, acc));
            if acc >= pc.target_accuracy {
                reached = Some((step, acc));
                break;
            }
        }
    }
    let Some((steps, heldout_accuracy)) = reached else {
        let last = curve.last().map_or(0.0, |c| c.1);
        return Err(WeeError::TrainingFailure(format!(
            "copy-task accuracy {last:.4} below {} after {} steps",
            pc.target_accuracy, pc.max_steps
        )));
    };
    decoder.freeze_base();
    Ok((
        decoder,
        PretrainReport {
            steps,
            heldout_accuracy,
            curve,
        },
    ))
}
