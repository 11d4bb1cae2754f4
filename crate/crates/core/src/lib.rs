//! Finite computations for martingale multipliers on weighted atomic trees.

pub mod battery;
pub mod bellman;
pub mod carleson;
pub mod counterexample;
pub mod error;
pub mod filtration;
pub mod marttools;
pub mod operator;
pub mod outerspace;
pub mod scalar;
pub mod suite;
pub mod twoweight;

pub use error::{HaarError, Result};
pub use filtration::{AtomId, Filtration, LeafFunction, Measure, TreeFunction, TreeSpec};
pub use scalar::{Rational, Scalar};
