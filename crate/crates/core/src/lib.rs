//! Differential wavelet amplifier (DWA) layers and small wavelet-domain
//! super-resolution networks, built on a compact CPU autodiff core.

pub mod autograd;
pub mod checks;
pub mod data;
pub mod dwa;
pub mod error;
pub mod gradcheck;
mod kernels;
pub mod metrics;
pub mod models;
pub mod ops;
pub mod resize;
pub mod tensor;
pub mod training;
pub mod wavelet;

pub use autograd::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use ops::{Activation, ConvParams};
pub use tensor::{Float, PaddingMode, Tensor};
