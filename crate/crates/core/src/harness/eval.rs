//! Test-set evaluation: greedy generation, task metrics and routing usage.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::data::TaskSplit;
use crate::harness::model::{EncodedExample, WeeModel};
use crate::numerics::{entropy, softmax};
use crate::taskbench::{macro_f1, precision_at_k, rouge_l, accuracy, Label, Task};
use crate::vocab::{CLASS_TOKENS, EOS, RISK, SAFE};

/// What the model produced for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    /// Greedy tokens, EOS included if produced; a single token for the
    /// classification tasks.
    pub tokens: Vec<usize>,
    /// Probability of `RISK` as the first answer token.
    pub risk_score: f64,
    /// Pool index chosen by the data-dependent router, if present.
    pub dep_choice: Option<usize>,
}

/// First answer token read as a class label; anything else is malformed.
pub fn parse_class(task: Task, tokens: &[usize]) -> Option<usize> {
    let &first = tokens.first()?;
    match task {
        Task::Cmd => match first {
            RISK => Some(1),
            SAFE => Some(0),
            _ => None,
        },
        Task::Ds => None,
        _ => {
            let n = task.num_classes()?;
            CLASS_TOKENS[..n].iter().position(|&t| t == first)
        }
    }
}

/// Answer tokens before EOS.
pub fn answer_tokens(tokens: &[usize]) -> &[usize] {
    let end = tokens.iter().position(|&t| t == EOS).unwrap_or(tokens.len());
    &tokens[..end]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub er_f1: f64,
    pub ctc_acc: f64,
    pub ctc_f1: f64,
    pub cmd_p5: f64,
    pub ds_rouge_l: f64,
}

impl TaskMetrics {
    /// Mean of the four headline metrics; all already lie in `[0, 1]`.
    pub fn aggregate(&self) -> f64 {
        (self.er_f1 + self.ctc_acc + self.cmd_p5 + self.ds_rouge_l) / 4.0
    }

    /// `(task, metric, value)` rows in report order.
    pub fn rows(&self) -> [(&'static str, &'static str, f64); 6] {
        [
            ("ER", "macro_f1", self.er_f1),
            ("CTC", "accuracy", self.ctc_acc),
            ("CTC", "macro_f1", self.ctc_f1),
            ("CMD", "precision_at_5", self.cmd_p5),
            ("DS", "rouge_l", self.ds_rouge_l),
            ("ALL", "aggregate", self.aggregate()),
        ]
    }
}

/// Per-task fraction of examples routed to each expert by the
/// data-dependent router, plus the independent router's choice.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingUsage {
    /// `[task][expert]`, empty when the variant has no data-dependent router.
    pub dep_fractions: Vec<Vec<f64>>,
    pub indep_choice: Option<usize>,
    /// Entropy of the pooled one-hot selections over the whole split.
    pub usage_entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: TaskMetrics,
    pub usage: RoutingUsage,
}

/// Metrics of one task from its examples and generations.
pub fn score_task(task: Task, examples: &[&EncodedExample], gens: &[Generated], cmd_k: usize) -> Result<f64> {
    Ok(score_task_all(task, examples, gens, cmd_k)?.0)
}

/// Headline metric and, for CTC, the secondary macro-F1.
fn score_task_all(
    task: Task,
    examples: &[&EncodedExample],
    gens: &[Generated],
    cmd_k: usize,
) -> Result<(f64, Option<f64>)> {
    match task {
        Task::Er | Task::Ctc => {
            let preds: Vec<Option<usize>> = gens.iter().map(|g| parse_class(task, &g.tokens)).collect();
            let labels: Vec<usize> = examples.iter().map(|e| e.label.class().expect("class label")).collect();
            let f1 = macro_f1(&preds, &labels, task.num_classes().expect("classification"))?;
            if task == Task::Er {
                Ok((f1, None))
            } else {
                Ok((accuracy(&preds, &labels)?, Some(f1)))
            }
        }
        Task::Cmd => {
            let scores: Vec<f64> = gens.iter().map(|g| g.risk_score).collect();
            let labels: Vec<bool> = examples.iter().map(|e| e.label == Label::Risk(true)).collect();
            Ok((precision_at_k(&scores, &labels, cmd_k.min(scores.len()))?, None))
        }
        Task::Ds => {
            let total: f64 = examples
                .iter()
                .zip(gens)
                .map(|(e, g)| rouge_l(answer_tokens(&g.tokens), answer_tokens(&e.target)))
                .sum();
            Ok((total / examples.len() as f64, None))
        }
    }
}

/// Metrics for all four tasks given generations aligned with `split`.
pub fn score_split(split: &TaskSplit, gens: &[Vec<Generated>], cmd_k: usize) -> Result<TaskMetrics> {
    let mut m = TaskMetrics::default();
    for task in Task::ALL {
        let exs: Vec<&EncodedExample> = split.task(task).iter().collect();
        let (v, extra) = score_task_all(task, &exs, &gens[task.index()], cmd_k)?;
        match task {
            Task::Er => m.er_f1 = v,
            Task::Ctc => {
                m.ctc_acc = v;
                m.ctc_f1 = extra.unwrap_or(0.0);
            }
            Task::Cmd => m.cmd_p5 = v,
            Task::Ds => m.ds_rouge_l = v,
        }
    }
    Ok(m)
}

/// Greedy output for one example. Classification answers are one token,
/// so their first-step logits also give the `RISK` probability.
pub fn generate_one(model: &WeeModel, ex: &EncodedExample) -> Result<Generated> {
    let (audio, routing) = model.audio_prefix(ex)?;
    let dep_choice = routing.dep.map(|d| d.chosen_index);
    let logits = model.first_token_logits(&audio, &ex.instruction)?;
    let probs = softmax(&logits)?;
    let risk_score = probs[RISK];
    // class answers are scored on their first token, so one step suffices
    let tokens = if ex.task == Task::Ds {
        model.generate(&audio, &ex.instruction, ex.task.max_target_len())?
    } else {
        vec![crate::routing::argmax(&logits)]
    };
    Ok(Generated {
        tokens,
        risk_score,
        dep_choice,
    })
}

pub fn evaluate(model: &WeeModel, split: &TaskSplit, cmd_k: usize) -> Result<EvalReport> {
    let gens: Vec<Vec<Generated>> = Task::ALL
        .iter()
        .map(|&t| split.task(t).iter().map(|ex| generate_one(model, ex)).collect())
        .collect::<Result<_>>()?;
    let metrics = score_split(split, &gens, cmd_k)?;
    Ok(EvalReport {
        metrics,
        usage: routing_usage(model, &gens)?,
    })
}

fn routing_usage(model: &WeeModel, gens: &[Vec<Generated>]) -> Result<RoutingUsage> {
    let m = model.spec.num_experts;
    let indep_choice = if model.spec.variant.uses_indep() {
        let w = model.params.value(crate::routing::W_INDEP)?;
        Some(crate::routing::argmax(&softmax(w.data())?))
    } else {
        None
    };
    if !model.spec.variant.uses_dep() {
        let usage_entropy = 0.0;
        return Ok(RoutingUsage {
            dep_fractions: Vec::new(),
            indep_choice,
            usage_entropy,
        });
    }
    let mut pooled = vec![0.0; m];
    let mut total = 0usize;
    let dep_fractions = gens
        .iter()
        .map(|task_gens| {
            let mut counts = vec![0.0; m];
            for g in task_gens {
                if let Some(k) = g.dep_choice {
                    counts[k] += 1.0;
                    pooled[k] += 1.0;
                    total += 1;
                }
            }
            let n = task_gens.len().max(1) as f64;
            counts.iter().map(|c| c / n).collect()
        })
        .collect();
    let pooled: Vec<f64> = pooled.iter().map(|c| c / total.max(1) as f64).collect();
    Ok(RoutingUsage {
        dep_fractions,
        indep_choice,
        // + 0.0 turns the −0 of a one-hot entropy into 0
        usage_entropy: entropy(&pooled)? + 0.0,
    })
}
