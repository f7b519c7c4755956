use serde::{Deserialize, Serialize};

use super::action::{Action, History, MAX_SUPPORTED_MEMORY};
use crate::error::{Error, Result};

/// Default guard for [`enumerate_full_strategy_space`].
pub const DEFAULT_ENUMERATION_LIMIT: u32 = 5;

/// A lookup table from every `m`-bit history to an action.
///
/// The id is the table read as a binary number: the action for history code
/// `0` is the most significant of the `2^m` bits. For `m = 1` this gives ids
/// `0..4` for the tables `(-1,-1)`, `(-1,+1)`, `(+1,-1)`, `(+1,+1)` over the
/// histories `(-1, +1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Strategy {
    id: u64,
    memory: u32,
}

impl Strategy {
    pub fn new(id: u64, memory: u32) -> Result<Self> {
        check_memory(memory)?;
        if memory < MAX_SUPPORTED_MEMORY && id >= 1u64 << (1u32 << memory) {
            return Err(Error::config(
                "strategy",
                format!("id {id} out of range for memory {memory}"),
            ));
        }
        Ok(Self { id, memory })
    }

    pub fn from_table(table: &[Action]) -> Result<Self> {
        let p = table.len();
        if !p.is_power_of_two() || p < 2 {
            return Err(Error::config(
                "strategy",
                format!("table length {p} is not 2^m for m >= 1"),
            ));
        }
        let id = table.iter().fold(0u64, |acc, a| (acc << 1) | a.bit());
        Self::new(id, p.trailing_zeros())
    }

    pub const fn id(self) -> u64 {
        self.id
    }

    pub const fn memory(self) -> u32 {
        self.memory
    }

    /// Recommended action after `history`.
    pub fn action(self, history: History) -> Action {
        self.action_at(history.code())
    }

    pub const fn action_at(self, code: u32) -> Action {
        action_of(self.id, code, self.memory)
    }

    pub fn table(self) -> Vec<Action> {
        (0..1u32 << self.memory)
            .map(|h| self.action_at(h))
            .collect()
    }

    /// The strategy recommending the opposite action after every history.
    pub const fn complement(self) -> Self {
        Self {
            id: !self.id & id_mask(self.memory),
            memory: self.memory,
        }
    }

    /// Number of histories on which the two tables differ.
    pub fn hamming_distance(self, other: Strategy) -> Result<u32> {
        if self.memory != other.memory {
            return Err(Error::MemoryMismatch(self.memory, other.memory));
        }
        Ok((self.id ^ other.id).count_ones())
    }
}

pub(crate) const fn id_mask(memory: u32) -> u64 {
    let p = 1u32 << memory;
    if p >= 64 {
        u64::MAX
    } else {
        (1u64 << p) - 1
    }
}

/// Action of strategy `id` after history `code`, without constructing a [`Strategy`].
#[inline]
pub(crate) const fn action_of(id: u64, code: u32, memory: u32) -> Action {
    let p = 1u32 << memory;
    Action::from_bit(id >> (p - 1 - code))
}

/// Number of pairwise-different strategies, `2^(2^m)`.
pub fn space_size(memory: u32) -> u128 {
    1u128 << (1u32 << memory)
}

fn check_memory(memory: u32) -> Result<()> {
    if memory == 0 || memory > MAX_SUPPORTED_MEMORY {
        return Err(Error::config(
            "memory",
            format!("must be in 1..={MAX_SUPPORTED_MEMORY}, got {memory}"),
        ));
    }
    Ok(())
}

/// The full set of `2^(2^m)` strategies in ascending id order.
///
/// Strategies are produced on demand; nothing is allocated per strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StrategySpace {
    memory: u32,
}

impl StrategySpace {
    pub fn len(&self) -> u128 {
        space_size(self.memory)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn memory(&self) -> u32 {
        self.memory
    }

    pub fn get(&self, index: u64) -> Option<Strategy> {
        (u128::from(index) < self.len()).then_some(Strategy {
            id: index,
            memory: self.memory,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Strategy> + '_ {
        let memory = self.memory;
        let last = id_mask(memory);
        (0..=last).map(move |id| Strategy { id, memory })
    }
}

/// Enumerates every strategy for memory `m`, rejecting `m` above
/// [`DEFAULT_ENUMERATION_LIMIT`].
pub fn enumerate_full_strategy_space(memory: u32) -> Result<StrategySpace> {
    enumerate_full_strategy_space_with_limit(memory, DEFAULT_ENUMERATION_LIMIT)
}

pub fn enumerate_full_strategy_space_with_limit(memory: u32, limit: u32) -> Result<StrategySpace> {
    check_memory(memory)?;
    if memory > limit {
        return Err(Error::MemoryGuard { memory, limit });
    }
    Ok(StrategySpace { memory })
}
