//! Class-balanced linear probe (softmax regression) on time-pooled
//! encoder features; used to audit what each frozen encoder exposes.

use crate::encoders::{Encoder, FeatureMap};
use crate::error::{Result, WeeError};
use crate::numerics::{mean_pool_time, softmax};
use crate::taskbench::Dataset;

#[derive(Clone, Debug)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            learning_rate: 0.5,
            l2: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearProbe {
    mean: Vec<f64>,
    std: Vec<f64>,
    /// `classes × (dim + 1)`, bias last.
    weights: Vec<Vec<f64>>,
}

impl LinearProbe {
    pub fn fit(x: &[Vec<f64>], y: &[usize], num_classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(WeeError::InvalidInput("probe needs matching nonempty data".into()));
        }
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for row in x {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut std {
            *s = s.sqrt().max(1e-9);
        }
        let mut counts = vec![0usize; num_classes];
        for &c in y {
            if c >= num_classes {
                return Err(WeeError::InvalidInput(format!("label {c} >= {num_classes}")));
            }
            counts[c] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count() as f64;
        let sample_weight: Vec<f64> = y
            .iter()
            .map(|&c| 1.0 / (present * counts[c] as f64))
            .collect();

        let mut probe = Self {
            mean,
            std,
            weights: vec![vec![0.0; d + 1]; num_classes],
        };
        let xs: Vec<Vec<f64>> = x.iter().map(|r| probe.standardize(r)).collect();
        for _ in 0..cfg.iterations {
            let mut grad = vec![vec![0.0; d + 1]; num_classes];
            for ((row, &c), &w) in xs.iter().zip(y).zip(&sample_weight) {
                let p = probe.probs_standardized(row);
                for k in 0..num_classes {
                    let err = w * (p[k] - f64::from(u8::from(k == c)));
                    for j in 0..d {
                        grad[k][j] += err * row[j];
                    }
                    grad[k][d] += err;
                }
            }
            for (wk, gk) in probe.weights.iter_mut().zip(&grad) {
                for j in 0..=d {
                    let reg = if j < d { cfg.l2 * wk[j] } else { 0.0 };
                    wk[j] -= cfg.learning_rate * (gk[j] + reg);
                }
            }
        }
        Ok(probe)
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn probs_standardized(&self, row: &[f64]) -> Vec<f64> {
        let d = row.len();
        let logits: Vec<f64> = self
            .weights
            .iter()
            .map(|w| w[..d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + w[d])
            .collect();
        softmax(&logits).expect("finite logits")
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let p = self.probs_standardized(&self.standardize(row));
        p.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }
}

/// Mean per-class recall over the classes present in `y`.
pub fn balanced_accuracy(preds: &[usize], y: &[usize], num_classes: usize) -> f64 {
    let mut hit = vec![0usize; num_classes];
    let mut tot = vec![0usize; num_classes];
    for (&p, &c) in preds.iter().zip(y) {
        tot[c] += 1;
        if p == c {
            hit[c] += 1;
        }
    }
    let present: Vec<usize> = (0..num_classes).filter(|&c| tot[c] > 0).collect();
    present
        .iter()
        .map(|&c| hit[c] as f64 / tot[c] as f64)
        .sum::<f64>()
        / present.len() as f64
}

/// Time-pooled features of `encoder` for every example plus class labels.
pub fn pooled_features(encoder: &Encoder, ds: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut x = Vec::with_capacity(ds.len());
    let mut y = Vec::with_capacity(ds.len());
    for ex in &ds.examples {
        let z: FeatureMap = encoder.encode(&ex.audio)?;
        x.push(mean_pool_time(&z)?.into_data());
        y.push(ex.label.class().ok_or_else(|| {
            WeeError::InvalidInput("probe needs a classification task".into())
        })?);
    }
    Ok((x, y))
}

/// Fits on `train` and reports balanced accuracy on `test`.
pub fn probe_balanced_accuracy(
    encoder: &Encoder,
    train: &Dataset,
    test: &Dataset,
    cfg: &ProbeConfig,
) -> Result<f64> {
    let classes = train
        .task
        .num_classes()
        .ok_or_else(|| WeeError::InvalidInput("probe needs a classification task".into()))?;
    let (xtr, ytr) = pooled_features(encoder, train)?;
    let (xte, yte) = pooled_features(encoder, test)?;
    let probe = LinearProbe::fit(&xtr, &ytr, classes, cfg)?;
    let preds: Vec<usize> = xte.iter().map(|r| probe.predict(r)).collect();
    Ok(balanced_accuracy(&preds, &yte, classes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_blobs_are_learned() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![if i % 2 == 0 { -1.0 } else { 1.0 } + 0.01 * i as f64, 0.3])
            .collect();
        let y: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let p = LinearProbe::fit(&x, &y, 2, &ProbeConfig::default()).unwrap();
        let preds: Vec<usize> = x.iter().map(|r| p.predict(r)).collect();
        assert_eq!(balanced_accuracy(&preds, &y, 2), 1.0);
    }

    #[test]
    fn balanced_accuracy_ignores_majority_bias() {
        let y = [0, 0, 0, 1];
        assert_eq!(balanced_accuracy(&[0, 0, 0, 0], &y, 2), 0.5);
    }
}
