//! Mutual-information bounds and their loss-function realisations for
//! semi-supervised classification.
//!
//! The crate is organised bottom-up:
//!
//! * [`stablemath`]: log-domain softmax, sigmoid and log-sum-exp kernels.
//! * [`densities`]: parametric conditional and marginal label densities.
//! * [`oracles`]: exact mutual information, divergences and bounds on
//!   enumerable supports.
//! * [`nn`]: a reverse-mode autodiff tape, layers, networks and AdamW.
//! * [`losses`]: supervised, critic and latent-alignment objectives.
//! * [`data`]: IDX and synthetic datasets, the dual labelled/unlabelled
//!   sampler and augmentations.
//! * [`trainer`]: the adversarial training loop, evaluation and ablations.
//! * [`config`]: the run-configuration document.
//! * [`verify`]: self-check suites (bounds, gradients, stability, sigmoid
//!   collapse).
//!
//! The guide under `book/` walks through each piece; its code listings are
//! compiled as doctests of this crate.

pub mod config;
pub mod data;
pub mod densities;
pub mod error;
pub mod losses;
pub mod nn;
pub mod oracles;
pub mod stablemath;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/bounds.md")]
    struct Bounds;
    #[doc = include_str!("../../../book/src/densities.md")]
    struct Densities;
    #[doc = include_str!("../../../book/src/losses.md")]
    struct Losses;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    struct Autodiff;
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
