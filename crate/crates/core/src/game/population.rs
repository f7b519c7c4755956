use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{GameConfig, StrategyDraw};
use super::strategy::{id_mask, space_size, Strategy};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agent {
    pub index: usize,
    pub strategies: Vec<Strategy>,
}

impl Agent {
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.strategies.iter().map(|s| s.id())
    }
}

/// Draws `S` strategies for each of the `N` agents.
///
/// Randomness is consumed agent by agent, in index order, `S` draws each.
pub fn assign_strategies<R: Rng + ?Sized>(config: &GameConfig, rng: &mut R) -> Result<Vec<Agent>> {
    config.validate()?;
    let memory = config.memory;
    let s = config.strategies_per_agent;
    let space = space_size(memory);
    let agents = (0..config.agents)
        .map(|index| {
            let ids = match config.draw {
                StrategyDraw::Independent => (0..s).map(|_| uniform_id(rng, memory)).collect(),
                StrategyDraw::Distinct => distinct_ids(rng, memory, space, s),
            };
            Agent {
                index,
                strategies: ids
                    .into_iter()
                    .map(|id| Strategy::new(id, memory).expect("drawn id is in range"))
                    .collect(),
            }
        })
        .collect();
    Ok(agents)
}

fn uniform_id<R: Rng + ?Sized>(rng: &mut R, memory: u32) -> u64 {
    let mask = id_mask(memory);
    if mask == u64::MAX {
        rng.random()
    } else {
        rng.random_range(0..=mask)
    }
}

const SMALL_SPACE: u128 = 1 << 20;

fn distinct_ids<R: Rng + ?Sized>(rng: &mut R, memory: u32, space: u128, count: usize) -> Vec<u64> {
    if space <= SMALL_SPACE {
        return rand::seq::index::sample(rng, space as usize, count)
            .into_iter()
            .map(|i| i as u64)
            .collect();
    }
    // Collisions are vanishingly rare in spaces this large.
    let mut ids: Vec<u64> = Vec::with_capacity(count);
    while ids.len() < count {
        let id = uniform_id(rng, memory);
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    ids
}
