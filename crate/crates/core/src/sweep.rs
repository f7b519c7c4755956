//! Seed sweeps.
//!
//! With the `parallel` feature (on by default) seeds are spread over the
//! rayon thread pool; without it, or through the `_sequential` variants, they
//! run one after another. Both paths return results in seed order and are
//! bit-identical, since every run owns its RNG.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Result;
use crate::game::{run, GameConfig, Trace};

/// Apply `f` to every seed, in parallel when the `parallel` feature is enabled.
pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        seeds.par_iter().map(|&s| f(s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seeds_sequential(seeds, f)
    }
}

pub fn map_seeds_sequential<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    seeds.iter().map(|&s| f(s)).collect()
}

/// Run `config` once per seed and reduce each trace with `analyse`.
///
/// Traces are dropped as soon as they are analysed.
pub fn sweep<T, F>(config: &GameConfig, seeds: &[u64], analyse: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Trace) -> Result<T> + Sync + Send,
{
    config.validate()?;
    map_seeds(seeds, |seed| run_one(config, seed, &analyse))
        .into_iter()
        .collect()
}

pub fn sweep_sequential<T, F>(config: &GameConfig, seeds: &[u64], analyse: F) -> Result<Vec<T>>
where
    F: Fn(&Trace) -> Result<T>,
{
    config.validate()?;
    map_seeds_sequential(seeds, |seed| run_one(config, seed, &analyse))
        .into_iter()
        .collect()
}

fn run_one<T, F>(config: &GameConfig, seed: u64, analyse: &F) -> Result<T>
where
    F: Fn(&Trace) -> Result<T>,
{
    let trace = run(&config.clone().with_seed(seed))?;
    analyse(&trace)
}
