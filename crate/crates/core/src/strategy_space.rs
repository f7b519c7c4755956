//! Closed-form combinatorics of the full strategy space.
//!
//! Probabilities are exact [`BigRational`]s. Agents are modelled as drawing
//! their `S` strategies independently and uniformly from all `2^P` tables, so
//! "none of my strategies reaches level `u`" has probability
//! `(fraction below u)^S`.

use num_bigint::BigInt;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Action, Strategy, MAX_SUPPORTED_MEMORY};

pub fn hamming_distance(a: Strategy, b: Strategy) -> Result<u32> {
    a.hamming_distance(b)
}

fn check_memory(m: u32) -> Result<()> {
    if m == 0 || m > MAX_SUPPORTED_MEMORY {
        return Err(Error::config(
            "memory",
            format!("must be in 1..={MAX_SUPPORTED_MEMORY}, got {m}"),
        ));
    }
    Ok(())
}

fn space(m: u32) -> u128 {
    1u128 << (1u32 << m)
}

fn ratio(num: u128, den: u128) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn check_level(m: u32, l: usize) -> Result<()> {
    let hi = (1usize << m) + 1;
    if l < 1 || l > hi {
        return Err(Error::OutOfRange {
            index: l,
            lo: 1,
            hi,
        });
    }
    Ok(())
}

/// Utility levels at the first time some strategy reaches `±2^m` from an
/// all-zero start: `2^m, 2^m - 2, ..., -2^m`, with the number of strategies
/// on each.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelList {
    pub levels: Vec<i64>,
    pub counts: Vec<u128>,
}

pub fn extremal_levels(m: u32) -> Result<LevelList> {
    check_memory(m)?;
    let top = 1i64 << m;
    let levels = (0..=top).map(|j| top - 2 * j).collect();
    let counts = (1..=(top as usize + 1))
        .map(|l| level_count(m, l))
        .collect::<Result<_>>()?;
    Ok(LevelList { levels, counts })
}

/// Number of strategies on level `l` (1-based, descending): `C(2^m, l - 1)`.
pub fn level_count(m: u32, l: usize) -> Result<u128> {
    check_memory(m)?;
    check_level(m, l)?;
    Ok(binomial(1u128 << m, (l - 1) as u128))
}

/// Number of strategies on levels `u_1..=u_l`, i.e. with utility `>= u_l`.
pub fn tail_count(m: u32, l: usize) -> Result<u128> {
    check_memory(m)?;
    check_level(m, l)?;
    (1..=l).map(|j| level_count(m, j)).sum()
}

/// Probability that an agent's active strategy sits on level `u_l` (`sgn` payoff).
pub fn prob_active_at_level_step(m: u32, s: usize, l: usize) -> Result<BigRational> {
    let below = |l: usize| -> Result<BigRational> {
        let frac = BigRational::one() - ratio(tail_count(m, l)?, space(m));
        Ok(num_traits::pow(frac, s))
    };
    if l == 1 {
        Ok(BigRational::one() - below(1)?)
    } else {
        check_level(m, l)?;
        Ok(below(l - 1)? - below(l)?)
    }
}

pub fn level_probabilities_step(m: u32, s: usize) -> Result<Vec<BigRational>> {
    (1..=(1usize << m) + 1)
        .map(|l| prob_active_at_level_step(m, s, l))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BestActionStats {
    /// Active strategy has utility `U_max`.
    #[serde(serialize_with = "ser_ratio")]
    pub p_max: BigRational,
    /// Active strategy has utility `U_min`.
    #[serde(serialize_with = "ser_ratio")]
    pub p_min: BigRational,
    /// Agent acts like the globally best strategy: `(1 + p_max - p_min) / 2`.
    #[serde(serialize_with = "ser_ratio")]
    pub p_best_action: BigRational,
}

impl BestActionStats {
    pub fn from_extremes(p_max: BigRational, p_min: BigRational) -> Self {
        let p_best_action =
            (BigRational::one() + &p_max - &p_min) / BigRational::from_integer(2.into());
        Self {
            p_max,
            p_min,
            p_best_action,
        }
    }

    /// Expected demand per agent when the best strategy plays `+1`.
    pub fn demand_per_agent(&self) -> BigRational {
        &self.p_best_action * BigRational::from_integer(2.into()) - BigRational::one()
    }
}

pub fn best_action_stats(m: u32, s: usize) -> Result<BestActionStats> {
    let last = (1usize << m) + 1;
    Ok(BestActionStats::from_extremes(
        prob_active_at_level_step(m, s, 1)?,
        prob_active_at_level_step(m, s, last)?,
    ))
}

/// Probability that the active strategy is the `l`-th best when all `2^P`
/// utilities are distinct (proportional payoff).
pub fn prob_active_at_level_proportional(m: u32, s: usize, l: u128) -> Result<BigRational> {
    check_memory(m)?;
    let k = space(m);
    if l < 1 || l > k {
        return Err(Error::OutOfRange {
            index: l.min(usize::MAX as u128) as usize,
            lo: 1,
            hi: k.min(usize::MAX as u128) as usize,
        });
    }
    let at = |j: u128| num_traits::pow(BigRational::one() - ratio(j, k), s);
    Ok(at(l - 1) - at(l))
}

/// Probability that the active strategy is among the best half of the
/// distinct-utility list, which equals the fraction of agents acting with
/// the best strategy at a peak.
pub fn best_half_probability_proportional(m: u32, s: usize) -> Result<BigRational> {
    check_memory(m)?;
    // The level probabilities telescope: sum_{l<=L} = 1 - (1 - L/K)^S.
    let k = space(m);
    let half = ratio(k / 2, k);
    Ok(BigRational::one() - num_traits::pow(BigRational::one() - half, s))
}

/// Expected peak demand magnitude `N (1 - 1/2^(S-1))`.
pub fn expected_peak_height(agents: usize, s: usize) -> Result<BigRational> {
    if s < 2 {
        return Err(Error::config(
            "strategies_per_agent",
            "S must be at least 2",
        ));
    }
    let n = BigRational::from_integer(BigInt::from(agents));
    let tail = BigRational::new(BigInt::one(), BigInt::one() << (s - 1));
    Ok(n * (BigRational::one() - tail))
}

/// Expected number of agents holding one particular strategy: `N (1 - (1 - 2^-P)^S)`.
pub fn expected_holders(agents: usize, m: u32, s: usize) -> Result<BigRational> {
    check_memory(m)?;
    let miss = num_traits::pow(BigRational::one() - ratio(1, space(m)), s);
    Ok(BigRational::from_integer(BigInt::from(agents)) * (BigRational::one() - miss))
}

/// Probability that none of an agent's `S` strategies is in the good half: `1/2^S`.
pub fn prob_no_good_strategy(s: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << s)
}

/// Probability that an agent plays `+1`, given the utility of every strategy
/// and each strategy's action at the current history.
///
/// The agent's active strategy is on the highest level any of its `S` draws
/// reaches, and is uniform among the strategies of that level.
pub fn plus_probability(utilities: &[i64], actions: &[Action], s: usize) -> BigRational {
    assert_eq!(utilities.len(), actions.len());
    let total = utilities.len() as u128;
    let mut levels: Vec<(i64, u128, u128)> = Vec::new();
    let mut order: Vec<usize> = (0..utilities.len()).collect();
    order.sort_unstable_by_key(|&i| utilities[i]);
    for i in order {
        let plus = u128::from(actions[i] == Action::Plus);
        match levels.last_mut() {
            Some((u, count, p)) if *u == utilities[i] => {
                *count += 1;
                *p += plus;
            }
            _ => levels.push((utilities[i], 1, plus)),
        }
    }
    let mut p_plus = BigRational::zero();
    let mut at_or_below = 0u128;
    let mut below_pow = BigRational::zero();
    for (_, count, plus) in levels {
        at_or_below += count;
        let cur_pow = num_traits::pow(ratio(at_or_below, total), s);
        let p_max_here = &cur_pow - &below_pow;
        p_plus += p_max_here * ratio(plus, count);
        below_pow = cur_pow;
    }
    p_plus
}

/// Expected demand divided by `N`: `2 p_plus - 1`.
pub fn demand_per_agent(utilities: &[i64], actions: &[Action], s: usize) -> BigRational {
    plus_probability(utilities, actions, s) * BigRational::from_integer(2.into())
        - BigRational::one()
}

pub(crate) fn ser_ratio<S: serde::Serializer>(r: &BigRational, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(&r.to_string())
}
