use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::action::{History, MAX_SUPPORTED_MEMORY};
use super::strategy::space_size;
use crate::error::{Error, Result};

/// Odd payoff function `g` applied to the aggregated demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Payoff {
    /// `g(x) = sgn(x)`
    #[serde(rename = "sgn")]
    Step,
    /// `g(x) = x`
    #[serde(rename = "x")]
    Proportional,
    /// `g(x) = x / N`
    #[serde(rename = "x-over-n")]
    ScaledProportional,
}

impl Payoff {
    /// `g(demand)` for a population of `agents`.
    pub fn apply(self, demand: i64, agents: usize) -> num_rational::Rational64 {
        use num_rational::Rational64;
        match self {
            Payoff::Step => Rational64::from_integer(demand.signum()),
            Payoff::Proportional => Rational64::from_integer(demand),
            Payoff::ScaledProportional => Rational64::new(demand, agents as i64),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Payoff::Step => "sgn",
            Payoff::Proportional => "x",
            Payoff::ScaledProportional => "x-over-n",
        }
    }
}

impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Payoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgn" | "step" => Ok(Payoff::Step),
            "x" | "proportional" => Ok(Payoff::Proportional),
            "x-over-n" | "x/n" | "scaled" => Ok(Payoff::ScaledProportional),
            other => Err(Error::config(
                "payoff",
                format!("unknown payoff {other:?}; expected sgn, x or x-over-n"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum InitialUtilities {
    #[default]
    AllZero,
    /// One integer utility per strategy id; requires `m <= 4`.
    Explicit(Vec<i64>),
    /// Strategy `id` starts at `id / 2^P`: a strict total order that no
    /// integer-valued payoff sequence can ever tie. Requires `m <= 4`.
    Perturbed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum InitialHistory {
    #[default]
    SeededRandom,
    Explicit(History),
}

/// How each agent's `S` strategies are drawn from the full space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum StrategyDraw {
    /// Independent uniform draws; an agent may hold the same table twice.
    #[default]
    Independent,
    /// Uniform draws without replacement within one agent.
    Distinct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Limits {
    pub max_memory: u32,
    pub max_steps: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_memory: 5,
            max_steps: 100_000_000,
        }
    }
}

/// Largest memory for which a full per-strategy utility vector is materialised.
pub const MAX_DENSE_MEMORY: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameConfig {
    pub agents: usize,
    pub memory: u32,
    pub strategies_per_agent: usize,
    pub payoff: Payoff,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub initial_utilities: InitialUtilities,
    #[serde(default)]
    pub initial_history: InitialHistory,
    #[serde(default)]
    pub draw: StrategyDraw,
    #[serde(default)]
    pub limits: Limits,
}

impl GameConfig {
    pub fn new(agents: usize, memory: u32, strategies_per_agent: usize, payoff: Payoff) -> Self {
        Self {
            agents,
            memory,
            strategies_per_agent,
            payoff,
            steps: 1000,
            seed: 0,
            initial_utilities: InitialUtilities::AllZero,
            initial_history: InitialHistory::SeededRandom,
            draw: StrategyDraw::Independent,
            limits: Limits::default(),
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_initial_utilities(mut self, init: InitialUtilities) -> Self {
        self.initial_utilities = init;
        self
    }

    pub fn with_initial_history(mut self, history: History) -> Self {
        self.initial_history = InitialHistory::Explicit(history);
        self
    }

    pub fn with_draw(mut self, draw: StrategyDraw) -> Self {
        self.draw = draw;
        self
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    /// `P = 2^m`.
    pub fn histories(&self) -> usize {
        1 << self.memory
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents < 1 {
            return Err(Error::config("agents", "N must be at least 1"));
        }
        if self.memory < 1 {
            return Err(Error::config("memory", "m must be at least 1"));
        }
        if self.memory > MAX_SUPPORTED_MEMORY {
            return Err(Error::config(
                "memory",
                format!(
                    "m = {} exceeds the supported maximum {MAX_SUPPORTED_MEMORY}",
                    self.memory
                ),
            ));
        }
        if self.memory > self.limits.max_memory {
            return Err(Error::MemoryGuard {
                memory: self.memory,
                limit: self.limits.max_memory,
            });
        }
        if self.strategies_per_agent < 2 {
            return Err(Error::config(
                "strategies_per_agent",
                format!("S must be at least 2, got {}", self.strategies_per_agent),
            ));
        }
        if self.draw == StrategyDraw::Distinct
            && self.strategies_per_agent as u128 > space_size(self.memory)
        {
            return Err(Error::config(
                "strategies_per_agent",
                format!(
                    "S = {} exceeds the {} distinct strategies available for m = {}",
                    self.strategies_per_agent,
                    space_size(self.memory),
                    self.memory
                ),
            ));
        }
        if self.steps < 1 {
            return Err(Error::config("steps", "must be at least 1"));
        }
        if self.steps > self.limits.max_steps {
            return Err(Error::ResourceGuard {
                what: format!("steps = {}", self.steps),
                limit: self.limits.max_steps,
            });
        }
        match &self.initial_utilities {
            InitialUtilities::AllZero => {}
            InitialUtilities::Explicit(values) => {
                if self.memory > MAX_DENSE_MEMORY {
                    return Err(Error::config(
                        "initial_utilities",
                        format!("explicit utilities need m <= {MAX_DENSE_MEMORY}"),
                    ));
                }
                let expected = space_size(self.memory) as usize;
                if values.len() != expected {
                    return Err(Error::config(
                        "initial_utilities",
                        format!("expected {expected} values, got {}", values.len()),
                    ));
                }
            }
            InitialUtilities::Perturbed => {
                if self.memory > MAX_DENSE_MEMORY {
                    return Err(Error::config(
                        "initial_utilities",
                        format!("perturbed utilities need m <= {MAX_DENSE_MEMORY}"),
                    ));
                }
            }
        }
        if let InitialHistory::Explicit(h) = self.initial_history {
            if h.memory() != self.memory {
                return Err(Error::config(
                    "initial_history",
                    format!(
                        "history has memory {}, game has {}",
                        h.memory(),
                        self.memory
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Short stable digest of the configuration, embedded in exported artifacts.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_names_the_offending_field() {
        let cfg = GameConfig::new(401, 1, 1, Payoff::Step);
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "strategies_per_agent"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = GameConfig::new(0, 1, 2, Payoff::Step);
        assert!(matches!(
            cfg.validate(),
            Err(Error::Config {
                field: "agents",
                ..
            })
        ));
        let cfg = GameConfig::new(10, 1, 5, Payoff::Step).with_draw(StrategyDraw::Distinct);
        assert!(cfg.validate().is_err());
        let cfg = GameConfig::new(10, 1, 5, Payoff::Step);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn memory_guard_is_configurable() {
        let cfg = GameConfig::new(10, 6, 2, Payoff::Step);
        assert!(matches!(cfg.validate(), Err(Error::MemoryGuard { .. })));
        let cfg = cfg.with_limits(Limits {
            max_memory: 6,
            ..Limits::default()
        });
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn payoff_names_parse() {
        assert_eq!("sgn".parse::<Payoff>().unwrap(), Payoff::Step);
        assert_eq!("x".parse::<Payoff>().unwrap(), Payoff::Proportional);
        assert_eq!(
            "x-over-n".parse::<Payoff>().unwrap(),
            Payoff::ScaledProportional
        );
        assert!("tanh".parse::<Payoff>().is_err());
    }

    #[test]
    fn hash_depends_on_every_field() {
        let a = GameConfig::new(401, 1, 2, Payoff::Step);
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), a.clone().with_seed(1).hash());
        assert_eq!(a.hash().len(), 16);
    }
}
