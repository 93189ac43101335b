//! Independent reference computations and the acceptance suite for `rsma-core`.

pub mod acceptance;
pub mod oracles;
