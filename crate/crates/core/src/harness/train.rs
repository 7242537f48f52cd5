//! Training loop: adaptive-moment updates over the trainable set only,
//! mixed-task batches, per-step loss log and a freezing audit.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoder::{is_lora, save_checkpoint, CheckpointKind, Decoder};
use crate::encoders::EncoderPool;
use crate::error::{Result, WeeError};
use crate::harness::config::RunConfig;
use crate::harness::data::{BenchData, TaskSampler, TaskSplit};
use crate::harness::eval::{evaluate, EvalReport};
use crate::harness::model::{EncodedExample, ExampleRouting, WeeModel};
use crate::numerics::{entropy, AdamW, AdamWConfig, GradMode, Tape, Tensor};
use crate::objective::LossBreakdown;
use crate::routing::RoutingMode;
use crate::taskbench::Task;

/// SHA-256 of a tensor's shape and little-endian values.
pub fn tensor_hash(t: &Tensor) -> String {
    let mut h = Sha256::new();
    h.update((t.rows() as u64).to_le_bytes());
    h.update((t.cols() as u64).to_le_bytes());
    for v in t.data() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Hashes of every frozen array: decoder base weights and encoder projections.
pub fn frozen_hashes(model: &WeeModel, pool: &EncoderPool) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = model
        .params
        .iter()
        .filter(|p| !p.trainable)
        .map(|p| (p.name.clone(), tensor_hash(&p.value)))
        .collect();
    out.insert("encoder.base.projection".into(), tensor_hash(pool.base().projection()));
    for (k, e) in pool.experts().iter().enumerate() {
        out.insert(format!("encoder.expert{k}.projection"), tensor_hash(e.projection()));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreezeAudit {
    pub before: BTreeMap<String, String>,
    pub after: BTreeMap<String, String>,
}

impl FreezeAudit {
    /// Names whose hash changed (or appeared/disappeared).
    pub fn drifted(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .before
            .iter()
            .filter(|(k, v)| self.after.get(*k) != Some(v))
            .map(|(k, _)| k.clone())
            .collect();
        names.extend(self.after.keys().filter(|k| !self.before.contains_key(*k)).cloned());
        names
    }

    pub fn check(&self) -> Result<()> {
        match self.drifted().into_iter().next() {
            Some(name) => Err(WeeError::FrozenDrift(name)),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub loss: LossBreakdown,
    /// Entropy of the batch's pooled one-hot expert selections.
    pub usage_entropy: f64,
}

pub fn train_log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from("step,");
    s.push_str(&LossBreakdown::CSV_FIELDS.join(","));
    s.push_str(",usage_entropy\n");
    for r in rows {
        write!(s, "{}", r.step).expect("string write");
        for v in r.loss.values() {
            write!(s, ",{v}").expect("string write");
        }
        writeln!(s, ",{}", r.usage_entropy).expect("string write");
    }
    s
}

/// Usage entropy of a batch: the data-dependent router's selections when
/// present, else the independent router's, else 0.
pub fn batch_usage_entropy(routing: &[ExampleRouting], num_experts: usize) -> f64 {
    let mut counts = vec![0.0; num_experts];
    let mut n = 0.0;
    for r in routing {
        if let Some(d) = r.dep.as_ref().or(r.indep.as_ref()) {
            counts[d.chosen_index] += 1.0;
            n += 1.0;
        }
    }
    if n == 0.0 {
        return 0.0;
    }
    let p: Vec<f64> = counts.iter().map(|c| c / n).collect();
    entropy(&p).unwrap_or(0.0) + 0.0
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: WeeModel,
    pub log: Vec<LogRow>,
    pub audit: FreezeAudit,
    /// Total loss on a fixed slice of the training set before and after.
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Training-loss probe: the first few examples of every task.
const PROBE_PER_TASK: usize = 8;

fn probe_loss(model: &WeeModel, train: &TaskSplit, cfg: &RunConfig) -> Result<f64> {
    let batch = train.head(PROBE_PER_TASK);
    let mut tape = Tape::new();
    let b = model.params.bind(&mut tape, GradMode::None);
    Ok(model
        .forward_batch(&mut tape, &b, &batch, cfg.lambda, cfg.diversity_weight)?
        .breakdown
        .total)
}

fn nan_dump(step: usize, batch: &[&EncodedExample], idx: &[(usize, usize)], loss: &LossBreakdown) -> String {
    let items: Vec<String> = batch
        .iter()
        .zip(idx)
        .map(|(e, (_, i))| {
            format!(
                "{}#{i} base_finite={} experts_finite={}",
                e.task,
                e.base.is_finite(),
                e.experts.iter().all(Tensor::is_finite)
            )
        })
        .collect();
    format!("step {step}, loss {loss:?}, batch [{}]", items.join("; "))
}

/// Trains one variant with one seed. Frozen arrays are hashed before and
/// after; any drift is a hard failure. `on_step` sees every `log_every`-th
/// row together with the model after that step's update.
pub fn train(
    cfg: &RunConfig,
    decoder: &Decoder,
    pool: &EncoderPool,
    data: &BenchData,
    seed: u64,
    mut on_step: impl FnMut(&LogRow, &WeeModel),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = WeeModel::init(cfg, decoder, seed)?;
    model.check_census()?;
    let before = frozen_hashes(&model, pool);
    let initial_loss = probe_loss(&model, &data.train, cfg)?;

    let o = &cfg.optimizer;
    let mut opt = AdamW::new(AdamWConfig {
        beta1: o.beta1,
        beta2: o.beta2,
        eps: o.eps,
        weight_decay: o.weight_decay,
    })?;
    let sizes: Vec<usize> = Task::ALL.iter().map(|&t| data.train.task(t).len()).collect();
    let mut sampler = TaskSampler::new(&sizes, &cfg.task_weights, seed ^ 0xBA7C)?;
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let idx = sampler.batch(cfg.batch_size);
        let batch: Vec<&EncodedExample> = idx.iter().map(|&(t, i)| &data.train.per_task[t][i]).collect();
        model.spec.routing_mode = if step <= cfg.model.soft_warmup_steps {
            RoutingMode::Soft
        } else {
            cfg.model.routing_mode
        };
        let mut tape = Tape::new();
        let b = model.params.bind(&mut tape, GradMode::Trainable);
        let fwd = model.forward_batch(&mut tape, &b, &batch, cfg.lambda, cfg.diversity_weight)?;
        if !fwd.breakdown.values().iter().all(|v| v.is_finite()) {
            return Err(WeeError::NonFiniteLoss {
                step,
                diagnostic: nan_dump(step, &batch, &idx, &fwd.breakdown),
            });
        }
        tape.backward(fwd.total)?;
        let grads = b.grads(&tape);
        if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            return Err(WeeError::NonFiniteLoss {
                step,
                diagnostic: format!("gradient of `{name}`; {}", nan_dump(step, &batch, &idx, &fwd.breakdown)),
            });
        }
        opt.step(&mut model.params, &grads, |name| if is_lora(name) { o.lr_lora } else { o.lr })?;
        let row = LogRow {
            step,
            loss: fwd.breakdown,
            usage_entropy: batch_usage_entropy(&fwd.routing, model.spec.num_experts),
        };
        if step % cfg.log_every.max(1) == 0 || step == cfg.steps {
            on_step(&row, &model);
        }
        log.push(row);
    }
    model.spec.routing_mode = cfg.model.routing_mode;

    let audit = FreezeAudit {
        before,
        after: frozen_hashes(&model, pool),
    };
    audit.check()?;
    let final_loss = probe_loss(&model, &data.train, cfg)?;
    Ok(TrainOutcome {
        model,
        log,
        audit,
        initial_loss,
        final_loss,
    })
}

pub fn save_model(model: &WeeModel, path: &Path) -> Result<()> {
    save_checkpoint(path, CheckpointKind::Model, &model.spec, &model.params)
}

pub fn load_model(path: &Path) -> Result<WeeModel> {
    let (spec, params) = crate::decoder::load_checkpoint(path, CheckpointKind::Model)?;
    let model = WeeModel {
        spec: serde_json::from_value(spec)?,
        params,
    };
    model.check_census()?;
    Ok(model)
}

/// One trained run with its test evaluation.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub outcome: TrainOutcome,
    pub test: EvalReport,
    pub seed: u64,
}

pub fn train_and_evaluate(
    cfg: &RunConfig,
    decoder: &Decoder,
    pool: &EncoderPool,
    data: &BenchData,
    seed: u64,
    on_step: impl FnMut(&LogRow, &WeeModel),
) -> Result<RunResult> {
    let outcome = train(cfg, decoder, pool, data, seed, on_step)?;
    let test = evaluate(&outcome.model, &data.test, cfg.cmd_k)?;
    Ok(RunResult { outcome, test, seed })
}
