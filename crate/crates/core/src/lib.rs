//! Robust rate-splitting (RSMA) precoding for multiuser MIMO downlink with
//! imperfect channel knowledge at the transmitter, together with baselines and
//! a Monte Carlo evaluation harness.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod codebook;
pub mod error;
pub mod evaluator;
pub mod linalg;
pub mod precoder;
pub mod rates;

pub use error::{Error, Result};
