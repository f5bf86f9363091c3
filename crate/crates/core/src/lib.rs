//! Fault classification primitives for converter-fed transmission lines.
//!
//! The crate covers the full chain from synthetic three-phase transients to
//! trained classifiers:
//!
//! * [`synth`] parametric fault / switching / HIF current windows, noise,
//!   CT saturation and resampling,
//! * [`features`] change-quantile and quantile features,
//! * [`select`] ReliefF ranking and forward-selection curves,
//! * [`imaging`] recurrence, Gramian angular and Markov transition images,
//! * [`net`] a small inception-style 1-D convolutional classifier,
//! * [`ssl`] label spreading, label propagation and self-training,
//! * [`relay`] a quadrilateral distance-relay baseline,
//! * [`evalkit`] splits, SMOTE and classification metrics.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dataset;
pub mod dsp;
pub mod error;
pub mod evalkit;
pub mod features;
pub mod imaging;
pub mod net;
pub mod relay;
pub mod select;
pub mod ssl;
pub mod synth;

mod util;

pub use error::{Error, Result};
