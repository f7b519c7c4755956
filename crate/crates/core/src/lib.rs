//! Minority game simulation and exact analysis.
//!
//! [`game`] runs the agent model; [`strategy_space`] holds the closed-form
//! level and probability results for the full strategy space; [`markov`]
//! builds the exact state chain for the `sgn` payoff; [`debruijn`] covers
//! history graphs, Euler circuits and demand peaks; [`stats`] has the
//! time-series estimators; [`sweep`] runs seed sweeps (in parallel with the
//! `parallel` feature); [`experiment`] ties these together into checked,
//! reproducible experiments.

pub mod debruijn;
pub mod error;
pub mod experiment;
pub mod game;
pub mod markov;
pub mod stats;
pub mod strategy_space;
pub mod sweep;

pub use error::{Error, Result};
