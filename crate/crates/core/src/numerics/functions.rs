//! Value-level math shared by the tape and by code that needs no gradients.

use crate::error::{shape_err, Result, WeeError};
use crate::numerics::Tensor;

/// Tolerance on `Σp = 1` accepted by [`entropy`] and the routing losses.
pub const DISTRIBUTION_TOL: f64 = 1e-9;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(WeeError::InvalidInput("softmax of empty vector".into()));
    }
    if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
        return Err(WeeError::InvalidInput(format!(
            "softmax input contains {bad}"
        )));
    }
    let mut out = x.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

pub fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(WeeError::InvalidDistribution("empty".into()));
    }
    if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(WeeError::InvalidDistribution(format!(
            "entry {bad} is not a finite nonnegative number"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(WeeError::InvalidDistribution(format!("sums to {sum}")));
    }
    Ok(())
}

/// Shannon entropy in nats, with `0·ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p)?;
    Ok(entropy_unchecked(p))
}

pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Standard normal CDF via `erf`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

pub(crate) fn gelu_derivative(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    normal_cdf(x) + x * pdf
}

/// Mean over the time (row) axis of a `T × d` map, returned as `1 × d`.
pub fn mean_pool_time(z: &Tensor) -> Result<Tensor> {
    let t = z.rows();
    let mut out = vec![0.0; z.cols()];
    for r in 0..t {
        for (o, v) in out.iter_mut().zip(z.row(r)) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= t as f64;
    }
    Tensor::row_vector(out)
}

/// Feature-axis concatenation of maps that share their time length.
pub fn concat_features(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return Err(WeeError::InvalidInput("no parts to concatenate".into()));
    };
    let t = first.rows();
    if let Some(bad) = parts.iter().find(|p| p.rows() != t) {
        return shape_err(format!(
            "time lengths differ: {} vs {}",
            t,
            bad.rows()
        ));
    }
    let width: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(t * width);
    for r in 0..t {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    let out = Tensor::new(t, width, data)?;
    debug_assert_eq!(out.rows(), t);
    Ok(out)
}
