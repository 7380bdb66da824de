//! Experiment orchestration around the `ermf` core: config parsing,
//! subcommand implementations and artifact writing.
//!
//! Everything an artifact contains is a pure function of the config file
//! (plus explicit seeds inside it); wall-clock data is quarantined into
//! sidecar files so result bodies are byte-reproducible.

// NaN-rejecting validation guards, as in the core crate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

/// Exit code classes: 0 success, 2 configuration error, 3 numerical
/// failure.
pub fn exit_code_for(err: &ermf::Error) -> u8 {
    match err {
        ermf::Error::Config(_) | ermf::Error::Domain(_) | ermf::Error::Parse(_) | ermf::Error::Io(_) => 2,
        ermf::Error::Integration { .. } | ermf::Error::Numerical(_) => 3,
    }
}
