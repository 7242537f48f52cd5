//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, WeeError};
use crate::numerics::{Grads, ParamStore};

/// Floor on the relative-error denominator.
pub const REL_ERROR_FLOOR: f64 = 1e-8;
pub const DEFAULT_STEP: f64 = 1e-5;
/// Minimum number of entries sampled per parameter when subsampling.
pub const MIN_SAMPLED_ENTRIES: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradReport {
    pub parameter_name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub num_entries_checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Check at most this many entries per parameter (raised to
    /// [`MIN_SAMPLED_ENTRIES`]); `None` checks every entry.
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            max_entries: None,
            seed: 0,
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the gradients returned by `f` against central differences
/// `(f(θ+h) − f(θ−h)) / 2h` for every parameter in `names`.
///
/// `f` returns the scalar value and the reverse-mode gradients at the given
/// parameters; parameters missing from the returned map are treated as
/// having zero gradient.
pub fn grad_check<F>(
    params: &ParamStore,
    names: &[String],
    mut f: F,
    cfg: &GradCheckConfig,
) -> Result<Vec<GradReport>>
where
    F: FnMut(&ParamStore) -> Result<(f64, Grads)>,
{
    if !(cfg.step > 0.0 && cfg.step <= 1e-2) {
        return Err(WeeError::Config(format!(
            "finite-difference step {} outside (0, 1e-2]",
            cfg.step
        )));
    }
    let (first, analytic) = f(params)?;
    let (second, _) = f(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(WeeError::Determinism { first, second });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = params.clone();
    let mut reports = Vec::with_capacity(names.len());
    for name in names {
        let n = params.value(name)?.len();
        let entries: Vec<usize> = match cfg.max_entries {
            Some(limit) if n > limit.max(MIN_SAMPLED_ENTRIES) => {
                let mut idx = sample(&mut rng, n, limit.max(MIN_SAMPLED_ENTRIES)).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        let zero;
        let grad = match analytic.get(name) {
            Some(g) => g.data(),
            None => {
                zero = vec![0.0; n];
                &zero
            }
        };
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for &e in &entries {
            let orig = params.value(name)?.data()[e];
            work.get_mut(name)?.value.data_mut()[e] = orig + cfg.step;
            let (plus, _) = f(&work)?;
            work.get_mut(name)?.value.data_mut()[e] = orig - cfg.step;
            let (minus, _) = f(&work)?;
            work.get_mut(name)?.value.data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            max_abs = max_abs.max((grad[e] - numeric).abs());
            max_rel = max_rel.max(relative_error(grad[e], numeric));
        }
        reports.push(GradReport {
            parameter_name: name.clone(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            num_entries_checked: entries.len(),
        });
    }
    Ok(reports)
}
