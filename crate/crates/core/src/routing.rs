//! Dual routing over the weak-encoder pool, feature fusion, and the
//! adapter/projection that turns fused features into decoder embeddings.
//!
//! Every operation exists twice: a value-level function for inspection and
//! tests, and a tape-level twin used in training. Both compute the same
//! numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoders::FeatureMap;
use crate::error::{shape_err, Result, WeeError};
use crate::numerics::{
    check_distribution, concat_features, gelu, mean_pool_time, softmax, ParamStore, Tape, Tensor,
    Var,
};

pub const W_INDEP: &str = "router.w_indep";
pub const W_DEP: &str = "router.w_dep";
pub const ADAPTER_WEIGHT: &str = "adapter.weight";
pub const ADAPTER_BIAS: &str = "adapter.bias";
pub const PROJECTION_WEIGHT: &str = "projection.weight";
pub const PROJECTION_BIAS: &str = "projection.bias";

/// How the one-hot routing decision enters the forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    /// Forward uses the one-hot selection, backward the soft weights.
    #[default]
    HardSt,
    /// Forward and backward both use the soft weights.
    Soft,
}

/// One-hot vector at the argmax of `p`; ties go to the lowest index.
pub fn keep_top1(p: &[f64]) -> Result<Vec<f64>> {
    check_distribution(p)?;
    let mut out = vec![0.0; p.len()];
    out[argmax(p)] = 1.0;
    Ok(out)
}

/// First index of the maximum.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub soft: Vec<f64>,
    pub hard: Vec<f64>,
    pub chosen_index: usize,
}

impl RoutingDecision {
    pub fn from_soft(soft: Vec<f64>) -> Result<Self> {
        let hard = keep_top1(&soft)?;
        let chosen_index = argmax(&soft);
        Ok(Self {
            soft,
            hard,
            chosen_index,
        })
    }

    /// Coefficients used in the forward mixture under `mode`.
    pub fn coefficients(&self, mode: RoutingMode) -> &[f64] {
        match mode {
            RoutingMode::HardSt => &self.hard,
            RoutingMode::Soft => &self.soft,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouterParams {
    /// `1 × M`.
    pub w_indep: Tensor,
    /// `d_base × M`.
    pub w_dep: Tensor,
}

impl RouterParams {
    /// `w_indep` starts at `prior` (zeros if `None`); `W_dep` is drawn
    /// from `N(0, init_scale² / d_base)`.
    pub fn init(
        d_base: usize,
        num_experts: usize,
        prior: Option<&[f64]>,
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if d_base == 0 || num_experts == 0 {
            return Err(WeeError::Config("router needs d_base ≥ 1 and M ≥ 1".into()));
        }
        let w_indep = match prior {
            Some(p) if p.len() != num_experts => {
                return Err(WeeError::Config(format!(
                    "prior has {} entries for {num_experts} experts",
                    p.len()
                )))
            }
            Some(p) => Tensor::row_vector(p.to_vec())?,
            None => Tensor::zeros(1, num_experts),
        };
        let w_dep = normal_matrix(d_base, num_experts, init_scale / (d_base as f64).sqrt(), seed)?;
        let params = Self { w_indep, w_dep };
        params.validate()?;
        Ok(params)
    }

    pub fn num_experts(&self) -> usize {
        self.w_indep.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.w_indep.cols();
        if self.w_indep.rows() != 1 || self.w_dep.cols() != m {
            return shape_err(format!(
                "w_indep {:?} and W_dep {:?} disagree on M",
                self.w_indep.shape(),
                self.w_dep.shape()
            ));
        }
        if !self.w_indep.is_finite() || !self.w_dep.is_finite() {
            return Err(WeeError::InvalidInput("router parameters not finite".into()));
        }
        Ok(())
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let params = Self {
            w_indep: store.value(W_INDEP)?.clone(),
            w_dep: store.value(W_DEP)?.clone(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn insert_into(self, store: &mut ParamStore) -> Result<()> {
        store.insert(W_INDEP, self.w_indep, true)?;
        store.insert(W_DEP, self.w_dep, true)
    }
}

pub(crate) fn normal_matrix(rows: usize, cols: usize, std: f64, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, std).map_err(|e| WeeError::Config(format!("init std: {e}")))?;
    Tensor::new(rows, cols, (0..rows * cols).map(|_| dist.sample(&mut rng)).collect())
}

/// `softmax(w_indep)` and its one-hot projection; the same for every input.
pub fn route_indep(params: &RouterParams) -> Result<RoutingDecision> {
    params.validate()?;
    RoutingDecision::from_soft(softmax(params.w_indep.data())?)
}

/// `softmax(meanpool(z_base) · W_dep)` and its one-hot projection.
pub fn route_dep(z_base: &FeatureMap, params: &RouterParams) -> Result<RoutingDecision> {
    if z_base.cols() != params.w_dep.rows() {
        return shape_err(format!(
            "z_base has dim {}, W_dep expects {}",
            z_base.cols(),
            params.w_dep.rows()
        ));
    }
    let logits = mean_pool_time(z_base)?.matmul(&params.w_dep)?;
    RoutingDecision::from_soft(softmax(logits.data())?)
}

/// Forward value of the routed mixture: the chosen expert's map (bit-exact)
/// in `HardSt` mode, the soft-weighted sum in `Soft` mode.
pub fn mix_experts(
    decision: &RoutingDecision,
    experts: &[&FeatureMap],
    mode: RoutingMode,
) -> Result<FeatureMap> {
    let mut tape = Tape::new();
    let weights = tape.constant(Tensor::row_vector(decision.soft.clone())?);
    let vars: Vec<Var> = experts.iter().map(|e| tape.constant((*e).clone())).collect();
    let out = tape.mix(weights, decision.coefficients(mode), &vars)?;
    Ok(tape.value(out).clone())
}

/// `[z_base ⊕ z_dep ⊕ z_indep]` along features; time length is unchanged.
pub fn fuse(z_base: &FeatureMap, z_dep: &FeatureMap, z_indep: &FeatureMap) -> Result<FeatureMap> {
    fuse_parts(&[z_base, z_dep, z_indep])
}

/// Feature concatenation of any nonempty set of maps with equal `T`.
pub fn fuse_parts(parts: &[&FeatureMap]) -> Result<FeatureMap> {
    let out = concat_features(parts)?;
    assert_eq!(out.rows(), parts[0].rows(), "fusion changed the sequence length");
    Ok(out)
}

// ----- tape-level twins -----------------------------------------------------

/// Soft distribution node (`1 × M`) and the decision read off its value.
pub fn route_indep_tape(tape: &mut Tape, w_indep: Var) -> Result<(Var, RoutingDecision)> {
    let soft = tape.softmax_rows(w_indep)?;
    let decision = RoutingDecision::from_soft(tape.value(soft).data().to_vec())?;
    Ok((soft, decision))
}

pub fn route_dep_tape(tape: &mut Tape, z_base: Var, w_dep: Var) -> Result<(Var, RoutingDecision)> {
    let pooled = tape.mean_rows(z_base)?;
    let logits = tape.matmul(pooled, w_dep)?;
    let soft = tape.softmax_rows(logits)?;
    let decision = RoutingDecision::from_soft(tape.value(soft).data().to_vec())?;
    Ok((soft, decision))
}

/// Straight-through (or soft) mixture on the tape; see [`Tape::mix`].
pub fn mix_experts_tape(
    tape: &mut Tape,
    soft: Var,
    decision: &RoutingDecision,
    experts: &[Var],
    mode: RoutingMode,
) -> Result<Var> {
    tape.mix(soft, decision.coefficients(mode), experts)
}

pub fn fuse_tape(tape: &mut Tape, parts: &[Var]) -> Result<Var> {
    let t = tape.value(parts[0]).rows();
    let out = tape.concat_cols(parts)?;
    assert_eq!(tape.value(out).rows(), t, "fusion changed the sequence length");
    Ok(out)
}

// ----- adapter and projection ----------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct AdapterParams {
    /// `k·d_fused × d_adapter`.
    pub adapter_weight: Tensor,
    /// `1 × d_adapter`.
    pub adapter_bias: Tensor,
    /// `d_adapter × d_llm`.
    pub projection_weight: Tensor,
    /// `1 × d_llm`.
    pub projection_bias: Tensor,
}

impl AdapterParams {
    /// Glorot-scaled normal weights, zero biases.
    pub fn init(
        d_fused: usize,
        stack_factor: usize,
        d_adapter: usize,
        d_llm: usize,
        seed: u64,
    ) -> Result<Self> {
        check_stack_factor(stack_factor)?;
        let d_in = stack_factor * d_fused;
        if d_in == 0 || d_adapter == 0 || d_llm == 0 {
            return Err(WeeError::Config("adapter dimensions must be positive".into()));
        }
        Ok(Self {
            adapter_weight: normal_matrix(d_in, d_adapter, (2.0 / (d_in + d_adapter) as f64).sqrt(), seed)?,
            adapter_bias: Tensor::zeros(1, d_adapter),
            projection_weight: normal_matrix(
                d_adapter,
                d_llm,
                (2.0 / (d_adapter + d_llm) as f64).sqrt(),
                seed ^ 0x9E37_79B9_7F4A_7C15,
            )?,
            projection_bias: Tensor::zeros(1, d_llm),
        })
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        Ok(Self {
            adapter_weight: store.value(ADAPTER_WEIGHT)?.clone(),
            adapter_bias: store.value(ADAPTER_BIAS)?.clone(),
            projection_weight: store.value(PROJECTION_WEIGHT)?.clone(),
            projection_bias: store.value(PROJECTION_BIAS)?.clone(),
        })
    }

    pub fn insert_into(self, store: &mut ParamStore) -> Result<()> {
        store.insert(ADAPTER_WEIGHT, self.adapter_weight, true)?;
        store.insert(ADAPTER_BIAS, self.adapter_bias, true)?;
        store.insert(PROJECTION_WEIGHT, self.projection_weight, true)?;
        store.insert(PROJECTION_BIAS, self.projection_bias, true)
    }
}

fn check_stack_factor(k: usize) -> Result<()> {
    if k == 0 {
        return Err(WeeError::Config("stack_factor must be at least 1".into()));
    }
    Ok(())
}

/// Number of audio tokens produced from `t` frames.
pub fn num_audio_tokens(t: usize, stack_factor: usize) -> usize {
    t.div_ceil(stack_factor)
}

/// Stacks `k` consecutive frames (zero-padding the tail), applies
/// linear + GELU, then projects to the decoder width: `⌈T/k⌉ × d_llm`.
pub fn adapt_project(z: &FeatureMap, stack_factor: usize, params: &AdapterParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let vars = AdapterVars {
        adapter_weight: tape.constant(params.adapter_weight.clone()),
        adapter_bias: tape.constant(params.adapter_bias.clone()),
        projection_weight: tape.constant(params.projection_weight.clone()),
        projection_bias: tape.constant(params.projection_bias.clone()),
    };
    let out = adapt_project_tape(&mut tape, zv, stack_factor, &vars)?;
    Ok(tape.value(out).clone())
}

#[derive(Clone, Copy, Debug)]
pub struct AdapterVars {
    pub adapter_weight: Var,
    pub adapter_bias: Var,
    pub projection_weight: Var,
    pub projection_bias: Var,
}

pub fn adapt_project_tape(
    tape: &mut Tape,
    z: Var,
    stack_factor: usize,
    p: &AdapterVars,
) -> Result<Var> {
    check_stack_factor(stack_factor)?;
    let [t, d] = tape.value(z).shape();
    let tokens = num_audio_tokens(t, stack_factor);
    let expected = stack_factor * d;
    let w_rows = tape.value(p.adapter_weight).rows();
    if w_rows != expected {
        return shape_err(format!(
            "adapter expects {w_rows} inputs, stacking {stack_factor} × {d} gives {expected}"
        ));
    }
    let padded = if tokens * stack_factor > t {
        tape.pad_rows(z, tokens * stack_factor)?
    } else {
        z
    };
    // row-major T × d reshaped to (T/k) × (k·d) stacks consecutive frames
    let stacked = tape.reshape(padded, tokens, expected)?;
    let h = tape.matmul(stacked, p.adapter_weight)?;
    let h = tape.add_row(h, p.adapter_bias)?;
    let h = tape.gelu(h);
    let out = tape.matmul(h, p.projection_weight)?;
    tape.add_row(out, p.projection_bias)
}

/// Value-level GELU adapter without projection, for inspection.
pub fn adapter_hidden(z: &FeatureMap, stack_factor: usize, params: &AdapterParams) -> Result<Tensor> {
    check_stack_factor(stack_factor)?;
    let tokens = num_audio_tokens(z.rows(), stack_factor);
    let mut data = z.data().to_vec();
    data.resize(tokens * stack_factor * z.cols(), 0.0);
    let stacked = Tensor::new(tokens, stack_factor * z.cols(), data)?;
    let mut h = stacked.matmul(&params.adapter_weight)?;
    for r in 0..h.rows() {
        for (v, b) in h.row_mut(r).iter_mut().zip(params.adapter_bias.data()) {
            *v = gelu(*v + b);
        }
    }
    Ok(h)
}
