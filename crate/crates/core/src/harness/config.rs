//! Run configuration, read from TOML. Unknown keys are rejected at every
//! level; omitted keys take the defaults below.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderConfig, PretrainConfig};
use crate::encoders::{EncoderKind, PoolConfig};
use crate::error::{Result, WeeError};
use crate::objective::DEFAULT_LAMBDA;
use crate::routing::RoutingMode;
use crate::taskbench::GenerationParams;

/// Which fusion inputs exist (one row of the ablation table).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `z = z_base`.
    BaseOnly,
    /// A single weak expert replaces the base encoder.
    WeakOnly,
    /// `z = z_base ⊕ z_indep`.
    IndepOnly,
    /// `z = z_base ⊕ z_dep`.
    DepOnly,
    /// `z = z_base ⊕ z_dep ⊕ z_indep`.
    FullWee,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BaseOnly,
        Variant::WeakOnly,
        Variant::IndepOnly,
        Variant::DepOnly,
        Variant::FullWee,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BaseOnly => "base_only",
            Variant::WeakOnly => "weak_only",
            Variant::IndepOnly => "indep_only",
            Variant::DepOnly => "dep_only",
            Variant::FullWee => "full_wee",
        }
    }

    pub fn uses_indep(self) -> bool {
        matches!(self, Variant::IndepOnly | Variant::FullWee)
    }

    pub fn uses_dep(self) -> bool {
        matches!(self, Variant::DepOnly | Variant::FullWee)
    }

    pub fn uses_weak_pool(self) -> bool {
        self.uses_indep() || self.uses_dep()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = WeeError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| WeeError::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d_llm: usize,
    pub stack_factor: usize,
    pub adapter_dim: usize,
    pub routing_mode: RoutingMode,
    /// Leading training steps that mix experts softly before `routing_mode`
    /// takes over.
    pub soft_warmup_steps: usize,
    /// Initial `w_indep`; the default favours the envelope (emotion) expert.
    pub indep_prior: Vec<f64>,
    /// Standard deviation of `W_dep` entries times `√d_base`.
    pub router_init_scale: f64,
    /// Encoder that replaces the base in the `weak_only` variant.
    pub weak_only_expert: EncoderKind,
    /// Stub encoders have no parameters; `true` is rejected.
    pub train_weak_encoders: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_llm: 48,
            stack_factor: 3,
            adapter_dim: 64,
            routing_mode: RoutingMode::HardSt,
            soft_warmup_steps: 0,
            indep_prior: vec![1.0, 0.0, 0.0],
            router_init_scale: 1.0,
            weak_only_expert: EncoderKind::SpectralExpert,
            train_weak_encoders: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Step size for routers, adapter and projection.
    pub lr: f64,
    /// Step size for the low-rank decoder deltas.
    pub lr_lora: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            lr_lora: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Seed of the generated splits; fixed across training seeds.
    pub seed: u64,
    pub train_per_task: usize,
    pub dev_per_task: usize,
    pub test_per_task: usize,
    pub generation: GenerationParams,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            train_per_task: 512,
            dev_per_task: 128,
            test_per_task: 256,
            generation: GenerationParams::default(),
        }
    }
}

/// Settings grid of the routing sweep; each cell trains `full_wee`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub diversity_weights: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![DEFAULT_LAMBDA],
            diversity_weights: vec![0.0, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub batch_size: usize,
    pub lambda: f64,
    /// Multiplier of the diversity term inside the routing loss (0 = off).
    pub diversity_weight: f64,
    /// Relative sampling weights of ER, CTC, CMD, DS.
    pub task_weights: [f64; 4],
    /// Precision@K cut-off for CMD.
    pub cmd_k: usize,
    /// Steps between training-log rows.
    pub log_every: usize,
    pub pool: PoolConfig,
    pub model: ModelConfig,
    pub decoder: DecoderConfig,
    pub pretrain: PretrainConfig,
    pub optimizer: OptimizerConfig,
    pub data: DataConfig,
    pub sweep: SweepConfig,
    /// Pretrained decoder checkpoint; pretrained on the fly when absent.
    pub decoder_checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::FullWee,
            seeds: vec![1, 2, 3],
            steps: 2000,
            batch_size: 16,
            lambda: DEFAULT_LAMBDA,
            diversity_weight: 1.0,
            task_weights: [1.0; 4],
            cmd_k: 5,
            log_every: 1,
            pool: PoolConfig::default(),
            model: ModelConfig::default(),
            decoder: DecoderConfig::default(),
            pretrain: PretrainConfig::default(),
            optimizer: OptimizerConfig::default(),
            data: DataConfig::default(),
            sweep: SweepConfig::default(),
            decoder_checkpoint: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| WeeError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(WeeError::Config(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be finite and nonnegative", self.lambda));
        }
        if !(self.diversity_weight >= 0.0 && self.diversity_weight.is_finite()) {
            return bad("diversity_weight must be finite and nonnegative".into());
        }
        if self.task_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || self.task_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("task_weights must be nonnegative with a positive sum".into());
        }
        if self.cmd_k == 0 {
            return bad("cmd_k must be positive".into());
        }
        if self.model.train_weak_encoders {
            return bad("train_weak_encoders: the stub encoders have no trainable parameters".into());
        }
        if self.model.indep_prior.len() != self.pool.num_experts {
            return bad(format!(
                "indep_prior has {} entries for {} experts",
                self.model.indep_prior.len(),
                self.pool.num_experts
            ));
        }
        if self.model.weak_only_expert == EncoderKind::Base {
            return bad("weak_only_expert must be a weak encoder".into());
        }
        if self.model.d_llm != self.decoder.d_model {
            return bad(format!(
                "model.d_llm {} differs from decoder.d_model {}",
                self.model.d_llm, self.decoder.d_model
            ));
        }
        if self.model.stack_factor == 0 {
            return bad("stack_factor must be at least 1".into());
        }
        if self.data.train_per_task == 0 || self.data.test_per_task == 0 || self.data.dev_per_task == 0 {
            return bad("every split needs at least one example per task".into());
        }
        let sweep = &self.sweep;
        if sweep.lambdas.iter().chain(&sweep.diversity_weights).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("sweep values must be finite and nonnegative".into());
        }
        self.decoder.validate()
    }
}
