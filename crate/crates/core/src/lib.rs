//! Joint multisine waveform and IRS passive beamforming design for
//! wireless power transfer with a nonlinear rectenna model.
//!
//! The crate is organized bottom-up: [`channel`] draws fading channels,
//! [`rectenna`] evaluates harvested DC current, [`quartic`] builds the
//! structured matrices behind the successive convex approximation,
//! [`solvers`] hosts the eigen / SDP kernels, [`beamform`] and [`waveform`]
//! implement single optimization steps, [`optimize`] runs the alternating
//! optimization drivers and baselines, and [`harness`] executes seeded
//! Monte-Carlo experiments.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod channel;
pub mod error;
pub mod harness;
pub mod optimize;
pub mod quartic;
pub mod rectenna;
pub mod solvers;
pub mod waveform;

pub use num_complex::Complex64;

pub use channel::{ChannelRealization, Layout, PowerDelayProfile};
pub use error::{Error, Result};

pub use rectenna::{PhaseConfig, RectennaParams, SystemConfig, Waveform};
pub use optimize::{OptimizationResult, QuantizationScheme};
pub use solvers::{SdpOptions, SdpSolution};
