//! Utility bookkeeping.
//!
//! Every strategy receives the payoff `-a(h) g(A)` at each step, where `h` is
//! the current history. Summing per history gives
//!
//! ```text
//! U_id(t) = U_id(0) - sum_h a_id(h) * G_h(t),   G_h(t) = sum_{s < t, mu(s) = h} g(A(s))
//! ```
//!
//! so the `P` running totals `G_h` determine the utility of all `2^P`
//! strategies. Values are kept as integer numerators over a fixed `scale`,
//! which makes every payoff kind exact.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use super::config::{GameConfig, InitialUtilities, Payoff, MAX_DENSE_MEMORY};
use super::strategy::{action_of, space_size};
use crate::error::{Error, Result};

/// Utilities of all `2^P` strategies, indexed by strategy id, as `numerator / scale`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UtilityVector {
    pub numerators: Vec<i64>,
    pub scale: i64,
}

impl UtilityVector {
    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    pub fn get(&self, id: usize) -> Rational64 {
        Rational64::new(self.numerators[id], self.scale)
    }

    pub fn to_f64(&self, id: usize) -> f64 {
        self.numerators[id] as f64 / self.scale as f64
    }

    /// Values as integers, if the scale is 1.
    pub fn as_integers(&self) -> Option<&[i64]> {
        (self.scale == 1).then_some(&self.numerators)
    }

    pub fn max_abs(&self) -> Rational64 {
        let n = self.numerators.iter().map(|v| v.abs()).max().unwrap_or(0);
        Rational64::new(n, self.scale)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
enum Start {
    Zero,
    Explicit(Vec<i64>),
    Perturbed { step: i64 },
}

/// Initial utilities plus the common scale; maps payoff totals to utilities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityBasis {
    memory: u32,
    agents: i64,
    payoff: Payoff,
    scale: i64,
    start: Start,
}

impl UtilityBasis {
    pub fn new(config: &GameConfig) -> Self {
        let payoff_scale = match config.payoff {
            Payoff::ScaledProportional => config.agents as i64,
            Payoff::Step | Payoff::Proportional => 1,
        };
        let (base, start) = match &config.initial_utilities {
            InitialUtilities::AllZero => (1, Start::Zero),
            InitialUtilities::Explicit(values) => (1, Start::Explicit(values.clone())),
            InitialUtilities::Perturbed => {
                let step = payoff_scale;
                (space_size(config.memory) as i64, Start::Perturbed { step })
            }
        };
        let scale = base * payoff_scale;
        let start = match start {
            Start::Explicit(values) => {
                Start::Explicit(values.into_iter().map(|v| v * scale).collect())
            }
            other => other,
        };
        Self {
            memory: config.memory,
            agents: config.agents as i64,
            payoff: config.payoff,
            scale,
            start,
        }
    }

    pub fn memory(&self) -> u32 {
        self.memory
    }

    pub fn scale(&self) -> i64 {
        self.scale
    }

    pub fn is_zero_start(&self) -> bool {
        self.start == Start::Zero
    }

    /// `g(A)` as a numerator over [`Self::scale`].
    #[inline]
    pub fn scaled_payoff(&self, demand: i64) -> i64 {
        match self.payoff {
            Payoff::Step => demand.signum() * self.scale,
            Payoff::Proportional => demand * self.scale,
            Payoff::ScaledProportional => demand * (self.scale / self.agents),
        }
    }

    pub fn initial_numerator(&self, id: u64) -> i64 {
        match &self.start {
            Start::Zero => 0,
            Start::Explicit(values) => values[id as usize],
            Start::Perturbed { step } => id as i64 * step,
        }
    }

    /// Utility numerator of strategy `id` given the per-history payoff totals.
    pub fn numerator(&self, id: u64, totals: &[i64]) -> i64 {
        let drift: i64 = totals
            .iter()
            .enumerate()
            .map(|(h, g)| action_of(id, h as u32, self.memory).value() * g)
            .sum();
        self.initial_numerator(id) - drift
    }

    pub fn utility(&self, id: u64, totals: &[i64]) -> Rational64 {
        Rational64::new(self.numerator(id, totals), self.scale)
    }

    /// Materialise the utility of every strategy; only for `m <= 4`.
    pub fn vector(&self, totals: &[i64]) -> Result<UtilityVector> {
        if self.memory > MAX_DENSE_MEMORY {
            return Err(Error::ResourceGuard {
                what: format!("dense utility vector for m = {}", self.memory),
                limit: MAX_DENSE_MEMORY as usize,
            });
        }
        let count = space_size(self.memory) as u64;
        Ok(UtilityVector {
            numerators: (0..count).map(|id| self.numerator(id, totals)).collect(),
            scale: self.scale,
        })
    }

    /// `max_id |U_id|` over the whole strategy space.
    ///
    /// With a zero start every sign pattern over histories is some strategy,
    /// so the maximum is `sum_h |G_h|`; otherwise the space is scanned.
    pub fn max_abs_numerator(&self, totals: &[i64]) -> Result<i64> {
        if self.start == Start::Zero {
            return Ok(totals.iter().map(|g| g.abs()).sum());
        }
        let v = self.vector(totals)?;
        Ok(v.numerators.iter().map(|u| u.abs()).max().unwrap_or(0))
    }
}
