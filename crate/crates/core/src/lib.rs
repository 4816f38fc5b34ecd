//! One-sided dyadic harmonic analysis on finite grids.

pub mod characteristics;
pub mod corona;
pub mod error;
pub mod grid;
pub mod norms;
pub mod operators;
pub mod weight;

pub use error::{Error, Result};
pub use grid::{DyadicGrid, DyadicSums, GridFunction, IntervalId, PrefixSums};
pub use operators::{Mode, SignPattern, Threshold, TruncationProfile};
pub use weight::{Measure, Weight};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grid.md")]
    mod grid {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/weights.md")]
    mod weights {}
    #[doc = include_str!("../../../book/src/norms.md")]
    mod norms {}
    #[doc = include_str!("../../../book/src/corona.md")]
    mod corona {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
