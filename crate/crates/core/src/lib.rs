//! Probability densities over trajectories, built by smearing the classical
//! solutions of a system with a delta sequence of finite sharpness.
//!
//! Start with [`density::PathDensity`]. The guide in `book/` walks through
//! the pieces; its code blocks run as doctests of this crate.

pub mod density;
pub mod error;
pub mod experiments;
pub mod export;
pub mod kernels;
pub mod math;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod quad;
pub mod rng;
pub mod sampling;
pub mod stats;
pub mod systems;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/systems.md")]
    mod systems {}
    #[doc = include_str!("../../../book/src/densities.md")]
    mod densities {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/expectations.md")]
    mod expectations {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
