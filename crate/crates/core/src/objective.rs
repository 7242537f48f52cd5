//! Training objective: next-token cross-entropy plus the routing loss
//! `wee = ½·(indep_ent + dep_ent + dep_div)`, weighted by `λ`.
//!
//! The routing terms are evaluated on the soft router distributions; on
//! the one-hot selections they would be identically zero.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WeeError};
use crate::numerics::{check_distribution, entropy, Tape, Tensor, Var};

pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub next_token: f64,
    pub indep_ent: f64,
    pub dep_ent: f64,
    pub dep_div: f64,
    pub wee: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    /// `wee = ½(indep_ent + dep_ent + w·dep_div)`, `total = next_token + λ·wee`;
    /// `w = 1` is the standard objective, `w = 0` disables the diversity term.
    pub fn compose(
        next_token: f64,
        indep_ent: f64,
        dep_ent: f64,
        dep_div: f64,
        lambda: f64,
        diversity_weight: f64,
    ) -> Self {
        let wee = 0.5 * (indep_ent + dep_ent + diversity_weight * dep_div);
        Self {
            next_token,
            indep_ent,
            dep_ent,
            dep_div,
            wee,
            total: next_token + lambda * wee,
            lambda,
        }
    }

    pub const CSV_FIELDS: [&'static str; 7] =
        ["next_token", "indep_ent", "dep_ent", "dep_div", "wee", "total", "lambda"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.next_token,
            self.indep_ent,
            self.dep_ent,
            self.dep_div,
            self.wee,
            self.total,
            self.lambda,
        ]
    }
}

/// Mean cross-entropy over positions with a target (`Some`); other
/// positions (audio, instruction, padding) are ignored.
pub fn next_token_loss(logits: &Tensor, targets: &[Option<usize>]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let loss = tape.cross_entropy(l, targets)?;
    Ok(tape.value(loss).get(0, 0))
}

pub fn indep_entropy_loss(soft_indep: &[f64]) -> Result<f64> {
    entropy(soft_indep)
}

/// Batch mean of per-row entropies of a `B × M` routing matrix.
pub fn dep_entropy_loss(soft_dep: &Tensor) -> Result<f64> {
    let mut sum = 0.0;
    for r in 0..soft_dep.rows() {
        sum += entropy(soft_dep.row(r))?;
    }
    Ok(sum / soft_dep.rows() as f64)
}

/// `Σ_k r̄[k]·ln r̄[k]` for the batch-mean distribution `r̄`; the negative
/// entropy of average usage, lowest (`−ln M`) when usage is balanced.
pub fn dep_diversity_loss(soft_dep: &Tensor) -> Result<f64> {
    for r in 0..soft_dep.rows() {
        check_distribution(soft_dep.row(r))?;
    }
    let b = soft_dep.rows() as f64;
    let mean: Vec<f64> = (0..soft_dep.cols())
        .map(|k| (0..soft_dep.rows()).map(|r| soft_dep.get(r, k)).sum::<f64>() / b)
        .collect();
    Ok(-entropy(&mean)?)
}

pub fn total_loss(
    next_token: f64,
    indep_ent: f64,
    dep_ent: f64,
    dep_div: f64,
    lambda: f64,
) -> LossBreakdown {
    LossBreakdown::compose(next_token, indep_ent, dep_ent, dep_div, lambda, 1.0)
}

// ----- tape-level ------------------------------------------------------------

/// Entropy of a `1 × M` distribution node.
pub fn indep_entropy_tape(tape: &mut Tape, soft: Var) -> Result<Var> {
    if tape.value(soft).rows() != 1 {
        return Err(WeeError::Shape("independent routing must be a single row".into()));
    }
    tape.entropy_rows(soft)
}

pub fn dep_entropy_tape(tape: &mut Tape, soft_batch: Var) -> Result<Var> {
    let per_row = tape.entropy_rows(soft_batch)?;
    Ok(tape.mean(per_row))
}

pub fn dep_diversity_tape(tape: &mut Tape, soft_batch: Var) -> Result<Var> {
    let mean = tape.mean_rows(soft_batch)?;
    let ent = tape.entropy_rows(mean)?;
    Ok(tape.scale(ent, -1.0))
}
