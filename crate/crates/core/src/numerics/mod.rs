//! Dense `f64` arrays, reverse-mode differentiation and gradient checking.

mod functions;
mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use functions::{
    check_distribution, concat_features, entropy, gelu, mean_pool_time, normal_cdf, softmax,
    DISTRIBUTION_TOL,
};
pub use gradcheck::{
    grad_check, relative_error, GradCheckConfig, GradReport, DEFAULT_STEP, MIN_SAMPLED_ENTRIES,
    REL_ERROR_FLOOR,
};
pub use optim::{AdamW, AdamWConfig};
pub use params::{Bindings, GradMode, Grads, Param, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod composition_tests;
