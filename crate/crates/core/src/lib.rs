//! Span-extraction reading comprehension with answerability verification,
//! built from scratch: data pipeline, autograd tensors, a small transformer
//! encoder, two reading modules (a sketchy answerability reader and an
//! intensive span reader), score fusion with threshold calibration, and a
//! SQuAD-style evaluation stack with significance testing.

pub mod data;
pub mod decision;
pub mod encoder;
pub mod error;
pub mod intensive;
pub mod eval;
pub mod sketchy;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
