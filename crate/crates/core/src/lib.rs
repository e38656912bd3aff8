pub mod cli;
pub mod ctsim;
pub mod disc;
pub mod error;
pub mod invgen;
pub mod linalg;
pub mod metrics;
pub mod tensor;
pub mod train;
pub mod wavelet;

pub use error::{Error, Result};
pub use tensor::{Shape, Tape, Tensor, Var};
