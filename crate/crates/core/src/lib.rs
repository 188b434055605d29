//! Delay alignment modulation (DAM) for sparse multipath MISO channels.
//!
//! The transmitter pre-delays each per-path beamformed copy of the symbol
//! stream by `κ_l = n_max − n_l`, so all multipath components reach the
//! receiver at one common delay. This crate provides the channel model, the
//! ISI-ZF/MRT/MMSE beamformers, an OFDM comparison arm, a waveform-level link
//! simulator and a Monte Carlo sweep harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod link;
pub mod ofdm;
pub mod plot;
pub mod precoding;
pub mod verify;

pub use error::{Error, Result};
