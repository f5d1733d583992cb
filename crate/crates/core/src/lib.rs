//! Cavity-method toolkit for spin systems on random regular factor graphs.
//!
//! The crate covers graph generation in the pairing model, brute-force
//! oracles, belief propagation, pinning decompositions, cut metrics on
//! discrete measures and piecewise-constant kernels, and Monte Carlo
//! evaluation of the Bethe functional.

pub mod bp;
pub mod cavity;
pub mod cli;
pub mod decomp;
pub mod error;
pub mod exact;
pub mod graph;
pub mod kernel;
mod lp;
pub mod measure;
pub mod model;
pub mod numeric;

pub use error::{Error, Result};
