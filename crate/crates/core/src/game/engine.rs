//! The step loop.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with
//! `seed_from_u64(config.seed)`, consumed in this order:
//!
//! 1. strategy assignment, agent by agent, `S` draws each;
//! 2. the initial history (`random_range(0..2^m)`), unless given explicitly;
//! 3. per step: one `random_range(0..k)` for every agent whose `k >= 2` best
//!    strategies tie, in agent order, then one `random_bool(0.5)` if `A = 0`.

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::action::{Action, History};
use super::config::{GameConfig, InitialHistory, Payoff};
use super::population::{assign_strategies, Agent};
use super::trace::Trace;
use super::utility::{UtilityBasis, UtilityVector};
use crate::error::Result;

/// `A = sum_n a_n`.
pub fn aggregated_demand(actions: &[Action]) -> i64 {
    actions.iter().map(|a| a.value()).sum()
}

/// `a* = -sgn A`; a fair coin when `A = 0`.
pub fn minority_action<R: Rng + ?Sized>(demand: i64, rng: &mut R) -> Action {
    match demand.signum() {
        1 => Action::Minus,
        -1 => Action::Plus,
        _ => {
            if rng.random_bool(0.5) {
                Action::Plus
            } else {
                Action::Minus
            }
        }
    }
}

/// `R = -a g(A)`.
pub fn payoff(action: Action, demand: i64, g: Payoff, agents: usize) -> Rational64 {
    -g.apply(demand, agents) * action.value()
}

/// Index of a maximal value; ties are broken uniformly, drawing from `rng`
/// only when there is a tie.
#[inline]
fn pick_best<R: Rng + ?Sized>(len: usize, value: impl Fn(usize) -> i64, rng: &mut R) -> usize {
    let mut best = i64::MIN;
    let mut ties = 0usize;
    let mut first = 0usize;
    for i in 0..len {
        let v = value(i);
        if v > best {
            best = v;
            ties = 1;
            first = i;
        } else if v == best {
            ties += 1;
        }
    }
    if ties == 1 {
        return first;
    }
    let mut pick = rng.random_range(0..ties);
    for i in first..len {
        if value(i) == best {
            if pick == 0 {
                return i;
            }
            pick -= 1;
        }
    }
    unreachable!("tie count matched no element")
}

/// The agent's highest-utility strategy id, ties broken uniformly at random.
pub fn active_strategy<R: Rng + ?Sized>(
    agent: &Agent,
    utilities: &UtilityVector,
    rng: &mut R,
) -> u64 {
    let i = pick_best(
        agent.strategies.len(),
        |i| utilities.numerators[agent.strategies[i].id() as usize],
        rng,
    );
    agent.strategies[i].id()
}

/// One step of the game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub t: usize,
    /// `A(t)`, computed from `history_before` and the utilities before the update.
    pub demand: i64,
    pub minority: Action,
    pub history_before: History,
    /// Per-history payoff totals after the update; see [`UtilityBasis`].
    pub totals_after: Vec<i64>,
}

impl StepRecord {
    pub fn utilities_after(&self, basis: &UtilityBasis) -> Result<UtilityVector> {
        basis.vector(&self.totals_after)
    }
}

/// Running game state.
///
/// Only the distinct strategies actually held by agents are tracked; the
/// utility of any other strategy follows from the payoff totals.
pub struct Game {
    config: GameConfig,
    agents: Vec<Agent>,
    basis: UtilityBasis,
    pool: Vec<u64>,
    slots: Vec<u32>,
    pool_utilities: Vec<i64>,
    // Action value of pool strategy k after history h, at [h * pool.len() + k].
    pool_actions: Vec<i64>,
    totals: Vec<i64>,
    initial_history: History,
    history: History,
    t: usize,
    rng: ChaCha8Rng,
}

impl Game {
    pub fn new(config: GameConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let agents = assign_strategies(&config, &mut rng)?;
        let memory = config.memory;
        let p = config.histories();
        let history = match config.initial_history {
            InitialHistory::Explicit(h) => h,
            InitialHistory::SeededRandom => {
                History::from_code_unchecked(rng.random_range(0..p as u32), memory)
            }
        };
        let basis = UtilityBasis::new(&config);

        let mut pool: Vec<u64> = agents.iter().flat_map(Agent::ids).collect();
        pool.sort_unstable();
        pool.dedup();
        let slots = agents
            .iter()
            .flat_map(Agent::ids)
            .map(|id| pool.binary_search(&id).expect("held id is pooled") as u32)
            .collect();
        let pool_utilities = pool.iter().map(|&id| basis.initial_numerator(id)).collect();
        let mut pool_actions = Vec::with_capacity(p * pool.len());
        for h in 0..p as u32 {
            pool_actions.extend(
                pool.iter()
                    .map(|&id| super::strategy::action_of(id, h, memory).value()),
            );
        }

        Ok(Self {
            config,
            agents,
            basis,
            pool,
            slots,
            pool_utilities,
            pool_actions,
            totals: vec![0; p],
            initial_history: history,
            history,
            t: 0,
            rng,
        })
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn basis(&self) -> &UtilityBasis {
        &self.basis
    }

    pub fn history(&self) -> History {
        self.history
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn totals(&self) -> &[i64] {
        &self.totals
    }

    /// Distinct strategy ids held by at least one agent, ascending.
    pub fn held_strategies(&self) -> &[u64] {
        &self.pool
    }

    pub fn utility_of(&self, id: u64) -> Rational64 {
        self.basis.utility(id, &self.totals)
    }

    pub fn utilities(&self) -> Result<UtilityVector> {
        self.basis.vector(&self.totals)
    }

    /// Advance one step; returns `(A, a*, history before)`.
    fn advance(&mut self) -> (i64, Action, History) {
        let before = self.history;
        let k = self.pool.len();
        let h = before.code() as usize;
        let actions = &self.pool_actions[h * k..(h + 1) * k];
        let s = self.config.strategies_per_agent;
        let utilities = &self.pool_utilities;

        let mut demand = 0i64;
        for held in self.slots.chunks_exact(s) {
            let i = pick_best(s, |i| utilities[held[i] as usize], &mut self.rng);
            demand += actions[held[i] as usize];
        }
        let minority = minority_action(demand, &mut self.rng);
        let g = self.basis.scaled_payoff(demand);
        for (u, a) in self.pool_utilities.iter_mut().zip(actions) {
            *u -= a * g;
        }
        self.totals[h] += g;
        self.history = before.shift(minority);
        self.t += 1;
        (demand, minority, before)
    }

    pub fn step(&mut self) -> StepRecord {
        let t = self.t;
        let (demand, minority, history_before) = self.advance();
        StepRecord {
            t,
            demand,
            minority,
            history_before,
            totals_after: self.totals.clone(),
        }
    }

    /// Run the configured number of steps from the current state.
    pub fn run(mut self) -> Trace {
        let steps = self.config.steps;
        let mut trace = Trace::start(
            self.config.clone(),
            self.agents.clone(),
            self.basis.clone(),
            self.initial_history,
        );
        for _ in 0..steps {
            let (demand, minority, before) = self.advance();
            trace.push(demand, minority, before, &self.totals);
        }
        trace
    }
}

/// Build a game from `config` and run it to completion.
pub fn run(config: &GameConfig) -> Result<Trace> {
    Ok(Game::new(config.clone())?.run())
}
