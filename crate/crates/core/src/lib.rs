//! Real-versus-generated video classification over per-frame multi-modal
//! embeddings: supervised kernel SVMs, a training-free frame-to-prompt
//! rule, and the evaluation protocol around them.

pub mod dataset;
pub mod embed;
pub mod error;
pub mod eval;
pub mod launder;
pub mod rng;
pub mod svm;
pub mod transcoder;
pub mod vecmath;
pub mod zeroshot;

pub use error::{Error, Result};
