//! Simulation of continuous-variable QKD with Gaussian-modulated coherent
//! states under a reduced-optical-attenuation fault: channel sampling,
//! parameter estimation, finite-size key rates, intercept-resend masking and
//! the transmitter-side variance monitor.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod channel;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod keyrate;
pub mod monitor;
pub mod par;
pub mod params;
pub mod sweep;

pub use error::{Error, Result};
pub use params::{ChannelParams, FaultAttackScenario, SystemParams};
