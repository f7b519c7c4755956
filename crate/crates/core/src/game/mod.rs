//! The minority game: strategies, agents and the step loop.

pub mod action;
pub mod config;
pub mod engine;
pub mod population;
pub mod strategy;
pub mod trace;
pub mod utility;

pub use action::{Action, History, MAX_SUPPORTED_MEMORY};
pub use config::{GameConfig, InitialHistory, InitialUtilities, Limits, Payoff, StrategyDraw};
pub use engine::{
    active_strategy, aggregated_demand, minority_action, payoff, run, Game, StepRecord,
};
pub use population::{assign_strategies, Agent};
pub use strategy::{
    enumerate_full_strategy_space, enumerate_full_strategy_space_with_limit, space_size, Strategy,
    StrategySpace,
};
pub use trace::{Trace, TraceTable};
pub use utility::{UtilityBasis, UtilityVector};
