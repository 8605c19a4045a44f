//! Sequential diffusion posterior sampling for masked image sequences.
//!
//! This crate reconstructs sequences of undersampled images by running
//! guided reverse diffusion per frame. Instead of starting every frame's
//! trajectory from pure noise, later frames can be initialized from a
//! noised copy of the previous posterior estimate, or from a learned
//! next-frame prediction, which shortens the trajectory from `N` steps
//! to `N' = N * tau' / T` while preserving reconstruction quality.
//!
//! Module map:
//! - [`diffusion`]: variance-preserving noise schedule, forward noising,
//!   and step-count arithmetic.
//! - [`field`]: the `H x W` image container and its data/model value spaces.
//! - [`score`]: score-function evaluators (analytic Gaussian oracle and a
//!   small trained denoiser), the posterior-mean estimator, and denoising
//!   score matching training.
//! - [`measurement`]: column-mask measurement operators, observation
//!   synthesis, adjoints, and interpolation fill.
//! - [`sampler`]: the guided reverse-diffusion sampler and the four
//!   trajectory initialization strategies.
//! - [`transition`]: next-frame predictors over a short history window,
//!   including a trainable tubelet-attention model.
//! - [`sequence`]: synthetic sequence generators and sequence file I/O.
//! - [`metrics`], [`report`], [`sweep`], [`plot`]: PSNR/motion metrics,
//!   CSV reporting, experiment sweeps, and SVG rendering.

pub mod checkpoint;
pub mod diffusion;
pub mod error;
pub mod field;
pub mod measurement;
pub mod metrics;
pub mod nn;
pub mod plot;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod sequence;
pub mod sweep;
pub mod transition;

pub use error::{Error, Result};
pub use field::{ImageField, Space};
