//! Finite-difference check of the full training loss on a micro model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::decoder::{is_lora, Decoder, DecoderConfig};
use crate::encoders::{EncoderPool, PoolConfig};
use crate::error::{Result, WeeError};
use crate::harness::config::{ModelConfig, RunConfig, Variant};
use crate::harness::model::{encode_dataset, EncodedExample, WeeModel};
use crate::numerics::{grad_check, GradCheckConfig, GradMode, GradReport, ParamStore, Tape};
use crate::routing::RoutingMode;
use crate::taskbench::{gen_split, GenerationParams, Split, Task};

/// `d_base = 8`, `d_w = 4`, `M = 3`, `V = 16`, one decoder block, and
/// 0.425 s clips so that `T = 16` frames. Routing is soft: the
/// straight-through forward is not the function its gradient describes.
pub fn micro_config() -> RunConfig {
    let mut cfg = RunConfig {
        variant: Variant::FullWee,
        batch_size: 2,
        pool: PoolConfig {
            d_base: 8,
            d_w: 4,
            num_experts: 3,
            ..PoolConfig::default()
        },
        model: ModelConfig {
            d_llm: 8,
            stack_factor: 3,
            adapter_dim: 8,
            routing_mode: RoutingMode::Soft,
            ..ModelConfig::default()
        },
        decoder: DecoderConfig {
            vocab: 16,
            d_model: 8,
            num_blocks: 1,
            num_heads: 2,
            max_len: 16,
            lora_rank: 2,
            lora_alpha: 4.0,
            mlp_ratio: 2,
        },
        ..RunConfig::default()
    };
    cfg.data.generation = GenerationParams {
        duration_s: 0.425,
        ..GenerationParams::default()
    };
    cfg
}

/// Two examples whose answer tokens fit the micro vocabulary.
pub fn micro_batch(cfg: &RunConfig, seed: u64) -> Result<Vec<EncodedExample>> {
    let pool = EncoderPool::new(&cfg.pool)?;
    let mut out = Vec::new();
    for task in [Task::Er, Task::Cmd] {
        let ds = gen_split(task, Split::Train, 1, seed, &cfg.data.generation)?;
        out.extend(encode_dataset(&pool, &ds)?);
    }
    if let Some(bad) = out.iter().flat_map(|e| &e.target).find(|&&t| t >= cfg.decoder.vocab) {
        return Err(WeeError::Config(format!("target token {bad} outside the micro vocabulary")));
    }
    Ok(out)
}

/// Checks every trainable parameter of `cfg`'s model against central
/// differences of the full loss. Low-rank `B` factors are moved off their
/// zero initialization first so that every gradient path is exercised.
pub fn grad_check_model(cfg: &RunConfig, seed: u64) -> Result<Vec<GradReport>> {
    let decoder = Decoder::init(cfg.decoder.clone(), seed)?;
    let mut model = WeeModel::init(cfg, &decoder, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6C);
    let noise = Normal::new(0.0, 0.3).expect("valid std");
    for p in model.params.iter_mut().filter(|p| is_lora(&p.name)) {
        for v in p.value.data_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    let batch = micro_batch(cfg, seed)?;
    let refs: Vec<&EncodedExample> = batch.iter().collect();
    let names = model.trainable_census();
    let spec = model.spec.clone();
    let (lambda, w) = (cfg.lambda, cfg.diversity_weight);
    let loss = |params: &ParamStore| {
        let m = WeeModel {
            spec: spec.clone(),
            params: params.clone(),
        };
        let mut tape = Tape::new();
        let b = m.params.bind(&mut tape, GradMode::Trainable);
        let fwd = m.forward_batch(&mut tape, &b, &refs, lambda, w)?;
        tape.backward(fwd.total)?;
        Ok((fwd.breakdown.total, b.grads(&tape)))
    };
    grad_check(&model.params, &names, loss, &GradCheckConfig { seed, ..GradCheckConfig::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn micro_shapes() {
        let cfg = micro_config();
        cfg.validate().unwrap();
        let batch = micro_batch(&cfg, 1).unwrap();
        assert_eq!(batch.len(), 2);
        assert!(batch.iter().all(|e| e.base.shape() == [16, 8] && e.experts[0].shape() == [16, 4]));
    }
}
