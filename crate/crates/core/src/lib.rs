//! Pilot-wave (Bohm) dynamics for a two-arm atom interferometer with optional
//! which-way devices.
//!
//! The crate builds closed-form wavefunctions ([`wavepacket`]), derives the
//! local fields of the guidance formalism ([`fields`]), integrates trajectory
//! ensembles ([`dynamics`]), assembles the interferometer configurations
//! ([`scenarios`]) and reduces runs to diagnostics ([`analysis`]). The
//! `bohmflow` binary drives all of it from TOML configs ([`config`], [`cli`]).

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod io;
pub mod quad;
pub mod scenarios;
pub mod svg;
pub mod wavepacket;

pub use error::{Error, Result};
