//! Command-line driver: config-driven simulations, barrier comparisons and
//! lemma checks.

pub mod commands;
pub mod config;
pub mod plot;
