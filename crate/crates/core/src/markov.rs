//! The `sgn`-payoff game as a finite Markov chain.
//!
//! A state is the current history together with the utility of every
//! strategy. Utilities start at zero, so under the step payoff they stay on
//! the integer lattice and the set of reachable states is finite.
//!
//! Transitions use a priori probabilities, taken before strategies are dealt
//! to agents: the expected demand of a state decides the minority, and when
//! it is exactly zero both outcomes follow with probability 1/2.
//!
//! States are canonicalized as `(mu, U_0, ..., U_{2^P-1})` with `mu` the
//! history code and `U_i` the utility of strategy id `i`. For `m = 1` the ids
//! `0..4` are the four tables in the usual order, so a state reads exactly
//! like a row `[mu, U_1, U_2, U_3, U_4]` of the classic state table once the
//! code is mapped to `-1`/`+1`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::strategy::{action_of, space_size};
use crate::game::{Action, History, Payoff, Trace};
use crate::strategy_space::demand_per_agent;

/// Largest memory whose chain is enumerated exactly.
pub const MAX_CHAIN_MEMORY: u32 = 2;

/// Default cap on the number of enumerated states.
pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;

/// Visits below which an empirical state is flagged as poorly sampled.
pub const LOW_CONFIDENCE_VISITS: u64 = 10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ChainState {
    pub history: u32,
    /// Utility numerators indexed by strategy id.
    pub utilities: Vec<i64>,
}

impl ChainState {
    pub fn history(&self, memory: u32) -> History {
        History::new(self.history, memory).expect("state history is in range")
    }

    /// Actions the strategies recommend at this state's history.
    fn actions(&self, memory: u32) -> Vec<Action> {
        (0..self.utilities.len() as u64)
            .map(|id| action_of(id, self.history, memory))
            .collect()
    }

    /// Expected demand per agent, `E[A]/N`, for agents holding `s` strategies.
    pub fn demand_per_agent(&self, memory: u32, s: usize) -> BigRational {
        demand_per_agent(&self.utilities, &self.actions(memory), s)
    }

    /// Successor after the minority `winner` is announced.
    pub fn successor(&self, memory: u32, winner: Action) -> ChainState {
        let utilities = self
            .utilities
            .iter()
            .enumerate()
            .map(|(id, u)| u + action_of(id as u64, self.history, memory).value() * winner.value())
            .collect();
        ChainState {
            history: History::new(self.history, memory)
                .expect("state history is in range")
                .shift(winner)
                .code(),
            utilities,
        }
    }
}

impl std::fmt::Display for ChainState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}", self.history)?;
        for u in &self.utilities {
            write!(f, ",{u}")?;
        }
        write!(f, "]")
    }
}

/// Sparse row-stochastic matrix over [`ChainState`]s.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub memory: u32,
    /// Utility values are `numerator / scale`.
    pub scale: i64,
    pub states: Vec<ChainState>,
    /// `rows[i]` lists `(j, P[i -> j])` with `j` ascending.
    pub rows: Vec<Vec<(usize, BigRational)>>,
}

impl TransitionMatrix {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &ChainState) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.rows[i].iter().map(|(j, _)| *j)
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    pub fn probability(&self, i: usize, j: usize) -> BigRational {
        self.rows[i]
            .iter()
            .find(|(k, _)| *k == j)
            .map(|(_, p)| p.clone())
            .unwrap_or_else(BigRational::zero)
    }

    pub fn is_row_stochastic(&self) -> bool {
        self.rows.iter().all(|row| {
            row.iter().all(|(_, p)| !p.is_negative())
                && row.iter().map(|(_, p)| p).sum::<BigRational>().is_one()
        })
    }

    /// One step of `dist^T P`.
    pub fn propagate(&self, dist: &[BigRational]) -> Vec<BigRational> {
        let mut next = vec![BigRational::zero(); self.len()];
        for (i, p_i) in dist.iter().enumerate() {
            if p_i.is_zero() {
                continue;
            }
            for (j, p) in &self.rows[i] {
                next[*j] += p_i * p;
            }
        }
        next
    }

    /// Closed communicating classes, each sorted, ordered by smallest member.
    pub fn recurrent_classes(&self) -> Vec<Vec<usize>> {
        let comp = strongly_connected(self);
        let count = comp.iter().copied().max().map_or(0, |c| c + 1);
        let mut closed = vec![true; count];
        for (i, row) in self.rows.iter().enumerate() {
            if row.iter().any(|(j, _)| comp[*j] != comp[i]) {
                closed[comp[i]] = false;
            }
        }
        let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &c) in comp.iter().enumerate() {
            if closed[c] {
                classes.entry(c).or_default().push(i);
            }
        }
        let mut classes: Vec<Vec<usize>> = classes.into_values().collect();
        classes.sort_by_key(|c| c[0]);
        classes
    }

    pub fn to_json(&self, pi: Option<&StationaryDistribution>) -> serde_json::Value {
        let states: Vec<_> = self
            .states
            .iter()
            .map(|s| serde_json::json!({ "history": s.history, "utilities": s.utilities }))
            .collect();
        let edges: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter().map(move |(j, p)| {
                    serde_json::json!({
                        "from": i,
                        "to": j,
                        "numerator": p.numer().to_string(),
                        "denominator": p.denom().to_string(),
                    })
                })
            })
            .collect();
        let mut out = serde_json::json!({
            "memory": self.memory,
            "scale": self.scale,
            "states": states,
            "edges": edges,
        });
        if let Some(pi) = pi {
            out["pi"] = pi.pi.iter().map(|p| p.to_string()).collect();
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph chain {\n");
        for (i, s) in self.states.iter().enumerate() {
            let _ = writeln!(out, "  s{i} [label=\"{s}\"];");
        }
        for (i, row) in self.rows.iter().enumerate() {
            for (j, p) in row {
                let _ = writeln!(out, "  s{i} -> s{j} [label=\"{p}\"];");
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Enumerate the reachable chain for memory `m` and `s` strategies per agent.
pub fn enumerate_chain(m: u32, s: usize) -> Result<TransitionMatrix> {
    enumerate_chain_with_limit(m, s, DEFAULT_STATE_LIMIT)
}

pub fn enumerate_chain_with_limit(m: u32, s: usize, limit: usize) -> Result<TransitionMatrix> {
    if m == 0 || m > MAX_CHAIN_MEMORY {
        return Err(Error::config(
            "memory",
            format!("exact chain enumeration supports 1 <= m <= {MAX_CHAIN_MEMORY}, got {m}"),
        ));
    }
    if s < 2 {
        return Err(Error::config(
            "strategies_per_agent",
            format!("must be at least 2, got {s}"),
        ));
    }
    let strategies = space_size(m) as usize;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut index: HashMap<ChainState, usize> = HashMap::new();
    let mut states = Vec::new();
    let mut queue = VecDeque::new();
    for h in 0..1u32 << m {
        let state = ChainState {
            history: h,
            utilities: vec![0; strategies],
        };
        index.insert(state.clone(), states.len());
        queue.push_back(states.len());
        states.push(state);
    }
    let mut rows: Vec<Vec<(usize, BigRational)>> = vec![Vec::new(); states.len()];
    while let Some(i) = queue.pop_front() {
        let state = states[i].clone();
        let demand = state.demand_per_agent(m, s);
        let branches: Vec<(Action, BigRational)> = if demand.is_positive() {
            vec![(Action::Minus, BigRational::one())]
        } else if demand.is_negative() {
            vec![(Action::Plus, BigRational::one())]
        } else {
            vec![(Action::Minus, half.clone()), (Action::Plus, half.clone())]
        };
        let mut row = Vec::with_capacity(branches.len());
        for (winner, p) in branches {
            let next = state.successor(m, winner);
            let j = match index.get(&next) {
                Some(&j) => j,
                None => {
                    if states.len() >= limit {
                        return Err(Error::ResourceGuard {
                            what: format!("chain states for m = {m}, S = {s}"),
                            limit,
                        });
                    }
                    let j = states.len();
                    index.insert(next.clone(), j);
                    states.push(next);
                    rows.push(Vec::new());
                    queue.push_back(j);
                    j
                }
            };
            row.push((j, p));
        }
        row.sort_by_key(|(j, _)| *j);
        rows[i] = row;
    }
    Ok(TransitionMatrix {
        memory: m,
        scale: 1,
        states,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryDistribution {
    #[serde(serialize_with = "ser_ratios")]
    pub pi: Vec<BigRational>,
    /// Members of the recurrent class; all other states have probability 0.
    pub recurrent: Vec<usize>,
}

fn ser_ratios<S: serde::Serializer>(
    v: &[BigRational],
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    ser.collect_seq(v.iter().map(|r| r.to_string()))
}

/// Exact solution of `pi^T P = pi^T`, `sum pi = 1`.
///
/// Fails with [`Error::Reducible`] when there is more than one closed class.
pub fn stationary(chain: &TransitionMatrix) -> Result<StationaryDistribution> {
    let classes = chain.recurrent_classes();
    if classes.len() != 1 {
        return Err(Error::Reducible(classes.len()));
    }
    stationary_on_class(chain, &classes[0])
}

/// Stationary distribution of the chain restricted to one closed class.
pub fn stationary_on_class(
    chain: &TransitionMatrix,
    class: &[usize],
) -> Result<StationaryDistribution> {
    let n = class.len();
    if n == 0 {
        return Err(Error::Unsupported("empty recurrent class".into()));
    }
    let local: HashMap<usize, usize> = class.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    // Row k of the system is the balance equation of state class[k]; the last
    // one is replaced by the normalisation.
    let mut a = vec![vec![BigRational::zero(); n + 1]; n];
    for (col, &i) in class.iter().enumerate() {
        for (j, p) in &chain.rows[i] {
            let row = local[j];
            a[row][col] += p;
        }
        a[col][col] -= BigRational::one();
    }
    for cell in a[n - 1].iter_mut() {
        *cell = BigRational::one();
    }
    let solution = solve(a)?;
    let mut pi = vec![BigRational::zero(); chain.len()];
    for (k, &i) in class.iter().enumerate() {
        pi[i] = solution[k].clone();
    }
    Ok(StationaryDistribution {
        pi,
        recurrent: class.to_vec(),
    })
}

/// Gauss-Jordan elimination on an augmented `n x (n+1)` matrix.
fn solve(mut a: Vec<Vec<BigRational>>) -> Result<Vec<BigRational>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .ok_or_else(|| Error::Unsupported("singular stationary system".into()))?;
        a.swap(col, pivot);
        let inv = a[col][col].recip();
        for cell in a[col].iter_mut().skip(col) {
            *cell *= &inv;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r == col || row[col].is_zero() {
                continue;
            }
            let factor = row[col].clone();
            for (cell, p) in row.iter_mut().zip(&pivot_row).skip(col) {
                *cell -= &factor * p;
            }
        }
    }
    Ok(a.into_iter().map(|row| row[n].clone()).collect())
}

/// Expected aggregated demand of a state for `agents` agents with `s` strategies each.
pub fn expected_demand(state: &ChainState, memory: u32, agents: usize, s: usize) -> BigRational {
    state.demand_per_agent(memory, s) * BigRational::from_integer(BigInt::from(agents))
}

/// `P[A(t) = A(t + tau)]`, matching states by expected demand.
///
/// `sum_i sum_j delta(E A(x_i) - E A(x_j)) P^tau[x_j | x_i] pi_i`.
pub fn period_match_probability(
    chain: &TransitionMatrix,
    dist: &StationaryDistribution,
    s: usize,
    tau: usize,
) -> BigRational {
    let demand: Vec<BigRational> = chain
        .states
        .iter()
        .map(|x| x.demand_per_agent(chain.memory, s))
        .collect();
    period_match_probability_by(chain, dist, &demand, tau)
}

/// Same sum with an arbitrary per-state label in place of the expected demand.
pub fn period_match_probability_by<L: PartialEq>(
    chain: &TransitionMatrix,
    dist: &StationaryDistribution,
    labels: &[L],
    tau: usize,
) -> BigRational {
    assert_eq!(labels.len(), chain.len());
    let mut total = BigRational::zero();
    for &i in &dist.recurrent {
        let mut row = vec![BigRational::zero(); chain.len()];
        row[i] = BigRational::one();
        for _ in 0..tau {
            row = chain.propagate(&row);
        }
        let matched: BigRational = row
            .iter()
            .enumerate()
            .filter(|(j, _)| labels[*j] == labels[i])
            .map(|(_, p)| p)
            .sum();
        total += matched * &dist.pi[i];
    }
    total
}

/// Transition counts observed in one or more traces.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmpiricalChain {
    pub memory: u32,
    pub scale: i64,
    pub states: Vec<ChainState>,
    index: HashMap<ChainState, usize>,
    /// Visits per state (as the current state of a step).
    pub visits: Vec<u64>,
    counts: BTreeMap<(usize, usize), u64>,
}

impl EmpiricalChain {
    fn intern(&mut self, state: ChainState) -> usize {
        if let Some(&i) = self.index.get(&state) {
            return i;
        }
        let i = self.states.len();
        self.index.insert(state.clone(), i);
        self.states.push(state);
        self.visits.push(0);
        i
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &ChainState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn total_visits(&self) -> u64 {
        self.visits.iter().sum()
    }

    pub fn frequency(&self, i: usize) -> f64 {
        self.visits[i] as f64 / self.total_visits() as f64
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts.get(&(i, j)).copied().unwrap_or(0)
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.counts.range((i, 0)..(i + 1, 0)).count()
    }

    /// States visited fewer than [`LOW_CONFIDENCE_VISITS`] times.
    pub fn low_confidence(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.visits[i] < LOW_CONFIDENCE_VISITS)
            .collect()
    }

    /// Fold `other` into `self`; counts add, states are re-indexed.
    pub fn merge(&mut self, other: &EmpiricalChain) -> Result<()> {
        if !self.states.is_empty() && (self.memory != other.memory || self.scale != other.scale) {
            return Err(Error::MemoryMismatch(self.memory, other.memory));
        }
        self.memory = other.memory;
        self.scale = other.scale;
        let map: Vec<usize> = other
            .states
            .iter()
            .map(|s| self.intern(s.clone()))
            .collect();
        for (k, &v) in other.visits.iter().enumerate() {
            self.visits[map[k]] += v;
        }
        for (&(i, j), &c) in &other.counts {
            *self.counts.entry((map[i], map[j])).or_insert(0) += c;
        }
        Ok(())
    }

    /// Empirical transition frequencies as exact rationals. States never left
    /// (the last state of a trace) get a self-loop so rows stay stochastic.
    pub fn to_matrix(&self) -> TransitionMatrix {
        let mut rows: Vec<Vec<(usize, BigRational)>> = vec![Vec::new(); self.len()];
        let mut out_totals = vec![0u64; self.len()];
        for (&(i, _), &c) in &self.counts {
            out_totals[i] += c;
        }
        for (&(i, j), &c) in &self.counts {
            rows[i].push((
                j,
                BigRational::new(BigInt::from(c), BigInt::from(out_totals[i])),
            ));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if row.is_empty() {
                row.push((i, BigRational::one()));
            }
        }
        TransitionMatrix {
            memory: self.memory,
            scale: self.scale,
            states: self.states.clone(),
            rows,
        }
    }
}

/// Count state visits and transitions along a trace.
///
/// States are keyed by the history and the exact utility vector in effect
/// when each step is decided, so this needs `m <= 4`.
pub fn extract_state_graph(trace: &Trace) -> Result<EmpiricalChain> {
    let memory = trace.memory();
    let mut chain = EmpiricalChain {
        memory,
        scale: trace.basis().scale(),
        ..Default::default()
    };
    let mut prev: Option<usize> = None;
    for t in 0..trace.len() {
        let state = ChainState {
            history: trace.history_codes()[t],
            utilities: trace.utilities_before(t)?.numerators,
        };
        let i = chain.intern(state);
        chain.visits[i] += 1;
        if let Some(p) = prev {
            *chain.counts.entry((p, i)).or_insert(0) += 1;
        }
        prev = Some(i);
    }
    Ok(chain)
}

/// Reject traces the exact chain does not describe.
pub fn require_step_payoff(payoff: Payoff) -> Result<()> {
    if payoff == Payoff::Step {
        Ok(())
    } else {
        Err(Error::Unsupported(format!(
            "markov chains are only defined for the sgn payoff, not {payoff}"
        )))
    }
}

/// Tarjan's algorithm, iterative; returns the component id of every node.
fn strongly_connected(chain: &TransitionMatrix) -> Vec<usize> {
    let n = chain.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut edge)) = work.last_mut() {
            if *edge == 0 && index[v] == usize::MAX {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some((w, _)) = chain.rows[v].get(*edge) {
                let w = *w;
                *edge += 1;
                if index[w] == usize::MAX {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("scc stack");
                    on_stack[w] = false;
                    comp[w] = next_comp;
                    if w == v {
                        break;
                    }
                }
                next_comp += 1;
            }
        }
    }
    comp
}
