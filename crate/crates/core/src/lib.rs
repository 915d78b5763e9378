pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod fsutil;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use tensor::{no_grad, DType, Element, Tensor};
