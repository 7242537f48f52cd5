pub mod decoder;
pub mod encoders;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod objective;
pub mod probe;
pub mod routing;
pub mod taskbench;
pub mod vocab;

pub use error::{Result, WeeError};
