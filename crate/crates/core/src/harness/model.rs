//! The trainable model: routers, adapter and projection in front of the
//! frozen decoder with low-rank deltas, all in one parameter store.

use serde::{Deserialize, Serialize};

use crate::decoder::{forward_tape, generate_with, is_lora, Decoder, DecoderConfig, TokenSequence};
use crate::encoders::{EncoderPool, FeatureMap};
use crate::error::{Result, WeeError};
use crate::harness::config::{RunConfig, Variant};
use crate::numerics::{Bindings, GradMode, ParamStore, Tape, Tensor, Var};
use crate::objective::{dep_diversity_tape, dep_entropy_tape, indep_entropy_tape, LossBreakdown};
use crate::routing::{
    adapt_project_tape, fuse_tape, mix_experts_tape, route_dep_tape, route_indep_tape,
    AdapterParams, AdapterVars, RouterParams, RoutingDecision, RoutingMode, ADAPTER_BIAS,
    ADAPTER_WEIGHT, PROJECTION_BIAS, PROJECTION_WEIGHT, W_DEP, W_INDEP,
};
use crate::taskbench::{Dataset, Label, Task};

/// One example with every encoder output precomputed (encoders are frozen).
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    pub task: Task,
    pub base: FeatureMap,
    pub experts: Vec<FeatureMap>,
    pub instruction: Vec<usize>,
    pub target: Vec<usize>,
    pub label: Label,
}

pub fn encode_dataset(pool: &EncoderPool, ds: &Dataset) -> Result<Vec<EncodedExample>> {
    ds.examples
        .iter()
        .map(|ex| {
            let enc = pool.encode_all(&ex.audio)?;
            Ok(EncodedExample {
                task: ex.task,
                base: enc.base,
                experts: enc.experts,
                instruction: ex.instruction_ids.clone(),
                target: ex.target_ids.clone(),
                label: ex.label.clone(),
            })
        })
        .collect()
}

/// Everything needed to rebuild the forward pass from a parameter store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: Variant,
    pub d_base: usize,
    pub d_w: usize,
    pub num_experts: usize,
    pub stack_factor: usize,
    pub adapter_dim: usize,
    pub routing_mode: RoutingMode,
    /// Pool index of the expert standing in for the base in `weak_only`.
    pub weak_only_index: usize,
    pub decoder: DecoderConfig,
}

impl ModelSpec {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let pool = EncoderPool::new(&cfg.pool)?;
        let weak_only_index = pool.expert_index(cfg.model.weak_only_expert).ok_or_else(|| {
            WeeError::Config(format!(
                "{} is not in the pool",
                cfg.model.weak_only_expert.name()
            ))
        })?;
        Ok(Self {
            variant: cfg.variant,
            d_base: cfg.pool.d_base,
            d_w: cfg.pool.d_w,
            num_experts: cfg.pool.num_experts,
            stack_factor: cfg.model.stack_factor,
            adapter_dim: cfg.model.adapter_dim,
            routing_mode: cfg.model.routing_mode,
            weak_only_index,
            decoder: cfg.decoder.clone(),
        })
    }

    /// Feature width after fusion.
    pub fn d_fused(&self) -> usize {
        match self.variant {
            Variant::BaseOnly => self.d_base,
            Variant::WeakOnly => self.d_w,
            Variant::IndepOnly | Variant::DepOnly => self.d_base + self.d_w,
            Variant::FullWee => self.d_base + 2 * self.d_w,
        }
    }

    /// Names that must be trainable, and only these.
    pub fn expected_trainable(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.variant.uses_indep() {
            names.push(W_INDEP.to_string());
        }
        if self.variant.uses_dep() {
            names.push(W_DEP.to_string());
        }
        for n in [ADAPTER_WEIGHT, ADAPTER_BIAS, PROJECTION_WEIGHT, PROJECTION_BIAS] {
            names.push(n.to_string());
        }
        for b in 0..self.decoder.num_blocks {
            for proj in ["q", "v"] {
                for which in ["a", "b"] {
                    names.push(format!("lora.block{b}.{proj}.{which}"));
                }
            }
        }
        names.sort();
        names
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeeModel {
    pub spec: ModelSpec,
    pub params: ParamStore,
}

/// Routing decisions taken for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct ExampleRouting {
    pub dep: Option<RoutingDecision>,
    pub indep: Option<RoutingDecision>,
}

/// Tape nodes and routing of one batch.
pub struct BatchForward {
    pub next_token: Var,
    pub indep_ent: Option<Var>,
    pub dep_ent: Option<Var>,
    pub dep_div: Option<Var>,
    pub total: Var,
    pub breakdown: LossBreakdown,
    pub routing: Vec<ExampleRouting>,
}

impl WeeModel {
    /// Fresh routers and adapter on top of a frozen pretrained decoder;
    /// low-rank deltas start at zero so the decoder is initially unchanged.
    pub fn init(cfg: &RunConfig, decoder: &Decoder, seed: u64) -> Result<Self> {
        let spec = ModelSpec::from_config(cfg)?;
        if decoder.config != spec.decoder {
            return Err(WeeError::Config("decoder checkpoint does not match the decoder config".into()));
        }
        let mut dec = decoder.without_lora()?;
        dec.freeze_base();
        dec.attach_lora(seed ^ 0x10_7A)?;
        let mut params = dec.params;

        let routers = RouterParams::init(
            spec.d_base,
            spec.num_experts,
            Some(&cfg.model.indep_prior),
            cfg.model.router_init_scale,
            seed ^ 0x0020_07E5,
        )?;
        if spec.variant.uses_indep() {
            params.insert(W_INDEP, routers.w_indep, true)?;
        }
        if spec.variant.uses_dep() {
            params.insert(W_DEP, routers.w_dep, true)?;
        }
        AdapterParams::init(
            spec.d_fused(),
            spec.stack_factor,
            spec.adapter_dim,
            spec.decoder.d_model,
            seed ^ 0xADA9,
        )?
        .insert_into(&mut params)?;
        Ok(Self { spec, params })
    }

    /// Sorted names currently flagged trainable.
    pub fn trainable_census(&self) -> Vec<String> {
        let mut names = self.params.trainable_names();
        names.sort();
        names
    }

    pub fn check_census(&self) -> Result<()> {
        let got = self.trainable_census();
        let want = self.spec.expected_trainable();
        if got != want {
            return Err(WeeError::Config(format!(
                "trainable set {got:?} differs from the expected {want:?}"
            )));
        }
        Ok(())
    }

    /// Names of frozen decoder weights.
    pub fn frozen_names(&self) -> Vec<String> {
        self.params
            .iter()
            .filter(|p| !p.trainable)
            .map(|p| p.name.clone())
            .collect()
    }

    /// Fused features for one example (`T × d_fused`) plus its routing.
    fn fused_tape(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        ex: &EncodedExample,
        indep: Option<(Var, &RoutingDecision)>,
    ) -> Result<(Var, Option<(Var, RoutingDecision)>)> {
        let spec = &self.spec;
        if ex.base.cols() != spec.d_base || ex.experts.len() != spec.num_experts {
            return Err(WeeError::Config(format!(
                "example has d_base {} and {} experts; model expects {} and {}",
                ex.base.cols(),
                ex.experts.len(),
                spec.d_base,
                spec.num_experts
            )));
        }
        if spec.variant == Variant::WeakOnly {
            return Ok((tape.constant(ex.experts[spec.weak_only_index].clone()), None));
        }
        let base = tape.constant(ex.base.clone());
        let mut parts = vec![base];
        let needs_experts = spec.variant.uses_weak_pool();
        let experts: Vec<Var> = if needs_experts {
            ex.experts.iter().map(|e| tape.constant(e.clone())).collect()
        } else {
            Vec::new()
        };
        let mut dep = None;
        if spec.variant.uses_dep() {
            let (soft, decision) = route_dep_tape(tape, base, b.var(W_DEP)?)?;
            parts.push(mix_experts_tape(tape, soft, &decision, &experts, spec.routing_mode)?);
            dep = Some((soft, decision));
        }
        if let Some((soft, decision)) = indep {
            parts.push(mix_experts_tape(tape, soft, decision, &experts, spec.routing_mode)?);
        }
        let z = if parts.len() == 1 { parts[0] } else { fuse_tape(tape, &parts)? };
        Ok((z, dep))
    }

    fn adapter_vars(b: &Bindings) -> Result<AdapterVars> {
        Ok(AdapterVars {
            adapter_weight: b.var(ADAPTER_WEIGHT)?,
            adapter_bias: b.var(ADAPTER_BIAS)?,
            projection_weight: b.var(PROJECTION_WEIGHT)?,
            projection_bias: b.var(PROJECTION_BIAS)?,
        })
    }

    fn indep_tape(&self, tape: &mut Tape, b: &Bindings) -> Result<Option<(Var, RoutingDecision)>> {
        if !self.spec.variant.uses_indep() {
            return Ok(None);
        }
        route_indep_tape(tape, b.var(W_INDEP)?).map(Some)
    }

    /// Full objective on one batch: token-level mean cross-entropy over all
    /// target positions plus `λ·wee`. Routing terms of absent routers are 0.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        batch: &[&EncodedExample],
        lambda: f64,
        diversity_weight: f64,
    ) -> Result<BatchForward> {
        if batch.is_empty() {
            return Err(WeeError::InvalidInput("empty batch".into()));
        }
        let adapter = Self::adapter_vars(b)?;
        let indep = self.indep_tape(tape, b)?;
        let mut logits = Vec::with_capacity(batch.len());
        let mut targets = Vec::new();
        let mut dep_soft = Vec::new();
        let mut routing = Vec::with_capacity(batch.len());
        for ex in batch {
            let (z, dep) = self.fused_tape(tape, b, ex, indep.as_ref().map(|(v, d)| (*v, d)))?;
            let audio = adapt_project_tape(tape, z, self.spec.stack_factor, &adapter)?;
            let num_audio = tape.value(audio).rows();
            let seq = TokenSequence::new(num_audio, &ex.instruction, &ex.target);
            logits.push(forward_tape(tape, b, &self.spec.decoder, Some(audio), &seq.input_ids()?)?);
            targets.extend(seq.next_token_targets());
            if let Some((soft, _)) = &dep {
                dep_soft.push(*soft);
            }
            routing.push(ExampleRouting {
                dep: dep.map(|(_, d)| d),
                indep: indep.as_ref().map(|(_, d)| d.clone()),
            });
        }
        let all_logits = tape.concat_rows(&logits)?;
        let next_token = tape.cross_entropy(all_logits, &targets)?;

        let indep_ent = match &indep {
            Some((soft, _)) => Some(indep_entropy_tape(tape, *soft)?),
            None => None,
        };
        let (dep_ent, dep_div) = if dep_soft.is_empty() {
            (None, None)
        } else {
            let stacked = tape.concat_rows(&dep_soft)?;
            (
                Some(dep_entropy_tape(tape, stacked)?),
                Some(dep_diversity_tape(tape, stacked)?),
            )
        };

        // same operation order as LossBreakdown::compose, so values agree bitwise
        let mut routing_terms: Option<Var> = None;
        let mut acc = |tape: &mut Tape, v: Var| {
            routing_terms = Some(match routing_terms {
                None => v,
                Some(prev) => tape.add(prev, v).expect("scalar add"),
            });
        };
        if let Some(v) = indep_ent {
            acc(tape, v);
        }
        if let Some(v) = dep_ent {
            acc(tape, v);
        }
        if let Some(v) = dep_div {
            let w = tape.scale(v, diversity_weight);
            acc(tape, w);
        }
        let total = match routing_terms {
            None => next_token,
            Some(sum) => {
                let wee = tape.scale(sum, 0.5);
                let weighted = tape.scale(wee, lambda);
                tape.add(next_token, weighted)?
            }
        };

        let val = |v: Option<Var>, tape: &Tape| v.map_or(0.0, |v| tape.value(v).get(0, 0));
        let breakdown = LossBreakdown::compose(
            tape.value(next_token).get(0, 0),
            val(indep_ent, tape),
            val(dep_ent, tape),
            val(dep_div, tape),
            lambda,
            diversity_weight,
        );
        Ok(BatchForward {
            next_token,
            indep_ent,
            dep_ent,
            dep_div,
            total,
            breakdown,
            routing,
        })
    }

    /// Audio prefix embeddings (`⌈T/k⌉ × d_model`) and routing, forward only.
    pub fn audio_prefix(&self, ex: &EncodedExample) -> Result<(Tensor, ExampleRouting)> {
        let mut tape = Tape::new();
        let b = self.bind_routing_only(&mut tape)?;
        let indep = self.indep_tape(&mut tape, &b)?;
        let (z, dep) = self.fused_tape(&mut tape, &b, ex, indep.as_ref().map(|(v, d)| (*v, d)))?;
        let audio = adapt_project_tape(&mut tape, z, self.spec.stack_factor, &Self::adapter_vars(&b)?)?;
        Ok((
            tape.value(audio).clone(),
            ExampleRouting {
                dep: dep.map(|(_, d)| d),
                indep: indep.map(|(_, d)| d),
            },
        ))
    }

    /// Binds only the routing and adapter parameters (cheaper than the full store).
    fn bind_routing_only(&self, tape: &mut Tape) -> Result<Bindings> {
        let front = ParamStore::from_params(
            self.params
                .iter()
                .filter(|p| !p.name.starts_with("decoder.") && !is_lora(&p.name))
                .cloned()
                .collect(),
        )?;
        Ok(front.bind(tape, GradMode::None))
    }

    /// Logits at the last prompt position, i.e. the first generated token's
    /// distribution.
    pub fn first_token_logits(&self, audio: &Tensor, instruction: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, GradMode::None);
        let a = tape.constant(audio.clone());
        let out = forward_tape(&mut tape, &b, &self.spec.decoder, Some(a), instruction)?;
        let lv = tape.value(out);
        Ok(lv.row(lv.rows() - 1).to_vec())
    }

    /// Greedy continuation of `[audio; instruction]`, EOS included if produced.
    pub fn generate(&self, audio: &Tensor, instruction: &[usize], max_new: usize) -> Result<Vec<usize>> {
        generate_with(&self.params, &self.spec.decoder, Some(audio), instruction, max_new)
    }
}
