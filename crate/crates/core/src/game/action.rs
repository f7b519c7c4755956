use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest memory length the engine can represent: strategy ids are `u64`
/// bit patterns over `2^m` histories.
pub const MAX_SUPPORTED_MEMORY: u32 = 6;

/// One of the two choices available to an agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Minus,
    Plus,
}

impl Action {
    pub const fn value(self) -> i64 {
        match self {
            Action::Minus => -1,
            Action::Plus => 1,
        }
    }

    /// Canonical bit: `-1 -> 0`, `+1 -> 1`.
    pub const fn bit(self) -> u64 {
        match self {
            Action::Minus => 0,
            Action::Plus => 1,
        }
    }

    pub const fn from_bit(bit: u64) -> Self {
        if bit & 1 == 0 {
            Action::Minus
        } else {
            Action::Plus
        }
    }

    pub fn from_value(value: i64) -> Option<Self> {
        match value {
            -1 => Some(Action::Minus),
            1 => Some(Action::Plus),
            _ => None,
        }
    }

    pub const fn opposite(self) -> Self {
        match self {
            Action::Minus => Action::Plus,
            Action::Plus => Action::Minus,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

/// The last `m` minority actions, oldest first.
///
/// Stored as its canonical integer code in `[0, 2^m)`: `-1 -> 0`, `+1 -> 1`,
/// oldest action in the most significant bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct History {
    code: u32,
    memory: u32,
}

impl History {
    pub fn new(code: u32, memory: u32) -> Result<Self> {
        if memory == 0 || memory > MAX_SUPPORTED_MEMORY {
            return Err(Error::config(
                "memory",
                format!("must be in 1..={MAX_SUPPORTED_MEMORY}, got {memory}"),
            ));
        }
        if code >= 1 << memory {
            return Err(Error::OutOfRange {
                index: code as usize,
                lo: 0,
                hi: (1usize << memory) - 1,
            });
        }
        Ok(Self { code, memory })
    }

    pub(crate) const fn from_code_unchecked(code: u32, memory: u32) -> Self {
        Self { code, memory }
    }

    pub fn from_actions(actions: &[Action]) -> Result<Self> {
        let memory = actions.len() as u32;
        let code = actions
            .iter()
            .fold(0u32, |acc, a| (acc << 1) | a.bit() as u32);
        Self::new(code, memory)
    }

    /// The history whose every entry is `action`.
    pub fn homogeneous(action: Action, memory: u32) -> Result<Self> {
        let code = match action {
            Action::Minus => 0,
            Action::Plus => (1u32 << memory) - 1,
        };
        Self::new(code, memory)
    }

    pub const fn code(self) -> u32 {
        self.code
    }

    pub const fn memory(self) -> u32 {
        self.memory
    }

    /// Number of distinct histories, `P = 2^m`.
    pub const fn count(self) -> usize {
        1 << self.memory
    }

    pub fn actions(self) -> Vec<Action> {
        (0..self.memory)
            .rev()
            .map(|shift| Action::from_bit(u64::from(self.code >> shift)))
            .collect()
    }

    /// Append `latest` on the right and drop the oldest entry on the left.
    pub const fn shift(self, latest: Action) -> Self {
        let mask = (1u32 << self.memory) - 1;
        Self {
            code: ((self.code << 1) | latest.bit() as u32) & mask,
            memory: self.memory,
        }
    }

    pub fn is_homogeneous(self) -> bool {
        self.code == 0 || self.code == (1 << self.memory) - 1
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.actions().into_iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("]")
    }
}
