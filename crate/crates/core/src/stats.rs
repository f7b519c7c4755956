//! Time-series estimators for demand and utility traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Payoff, Trace};

/// A finite real-valued series sampled once per step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    values: Vec<f64>,
}

impl Series {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("series value {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn from_demands(demands: &[i64]) -> Self {
        Self {
            values: demands.iter().map(|&a| a as f64).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AutocorrelationResult {
    /// `r[k]` is the estimate at lag `k`, for `k = 0..=tau_max`.
    pub r: Vec<f64>,
    /// The series has zero variance; `r` is 1 at lag 0 and NaN elsewhere.
    pub degenerate: bool,
}

impl AutocorrelationResult {
    pub fn lags(&self) -> std::ops::RangeInclusive<usize> {
        0..=self.r.len().saturating_sub(1)
    }

    /// Lag `>= 1` with the largest estimate.
    pub fn argmax(&self) -> Option<usize> {
        if self.degenerate {
            return None;
        }
        (1..self.r.len()).max_by(|&a, &b| self.r[a].total_cmp(&self.r[b]).then(b.cmp(&a)))
    }
}

/// Biased normalised estimator
/// `r(k) = sum_t (x_t - m)(x_{t+k} - m) / sum_t (x_t - m)^2`.
pub fn autocorrelation(series: &Series, tau_max: usize) -> Result<AutocorrelationResult> {
    let x = series.values();
    if x.len() < 10 * tau_max.max(1) {
        return Err(Error::TooShort {
            needed: 10 * tau_max.max(1),
            got: x.len(),
        });
    }
    Ok(autocorrelation_unchecked(x, tau_max))
}

fn autocorrelation_unchecked(x: &[f64], tau_max: usize) -> AutocorrelationResult {
    let m = mean(x);
    let centred: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = centred.iter().map(|c| c * c).sum();
    if denom == 0.0 {
        let mut r = vec![f64::NAN; tau_max + 1];
        r[0] = 1.0;
        return AutocorrelationResult {
            r,
            degenerate: true,
        };
    }
    let r = (0..=tau_max)
        .map(|k| {
            if k == 0 {
                1.0
            } else {
                centred
                    .iter()
                    .zip(&centred[k..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / denom
            }
        })
        .collect();
    AutocorrelationResult {
        r,
        degenerate: false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfidenceBands {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Moving-block bootstrap percentile bands for the autocorrelation.
pub fn bootstrap_bands(
    series: &Series,
    tau_max: usize,
    block_len: usize,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<ConfidenceBands> {
    let x = series.values();
    if block_len == 0 || block_len > x.len() {
        return Err(Error::config(
            "block_len",
            format!("must be in 1..={}", x.len()),
        ));
    }
    if !(0.0..1.0).contains(&level) || resamples == 0 {
        return Err(Error::config(
            "level",
            "need 0 <= level < 1 and at least one resample",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(resamples); tau_max + 1];
    let mut buf = Vec::with_capacity(x.len());
    for _ in 0..resamples {
        buf.clear();
        while buf.len() < x.len() {
            let start = rng.random_range(0..=x.len() - block_len);
            let take = block_len.min(x.len() - buf.len());
            buf.extend_from_slice(&x[start..start + take]);
        }
        let r = autocorrelation_unchecked(&buf, tau_max);
        for (k, v) in r.r.into_iter().enumerate() {
            draws[k].push(v);
        }
    }
    let tail = (1.0 - level) / 2.0;
    let mut lower = Vec::with_capacity(tau_max + 1);
    let mut upper = Vec::with_capacity(tau_max + 1);
    for mut d in draws {
        d.sort_by(f64::total_cmp);
        lower.push(quantile(&d, tail));
        upper.push(quantile(&d, 1.0 - tail));
    }
    Ok(ConfidenceBands { lower, upper })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `(x_t, x_{t+lag})` for every aligned `t`.
pub fn lagged_pairs(values: &[f64], lag: usize) -> Vec<(f64, f64)> {
    if lag >= values.len() {
        return Vec::new();
    }
    values
        .iter()
        .copied()
        .zip(values[lag..].iter().copied())
        .collect()
}

/// Sample Pearson correlation; `None` when either coordinate is constant.
pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelCluster {
    pub center: f64,
    /// Samples in the mode's bin.
    pub occupancy: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelOptions {
    pub bin_width: f64,
    /// Modes closer than this to a more occupied mode are dropped.
    pub suppression_radius: f64,
}

impl LevelOptions {
    /// Bins of `N/100`; suppression radius `N/20`.
    pub fn for_agents(agents: usize) -> Self {
        Self {
            bin_width: (agents as f64 / 100.0).max(1.0),
            suppression_radius: agents as f64 / 20.0,
        }
    }
}

/// Preferred values of a series as histogram modes, most occupied first.
pub fn level_clustering(values: &[f64], k_max: usize, options: LevelOptions) -> Vec<LevelCluster> {
    if values.is_empty() || k_max == 0 {
        return Vec::new();
    }
    let w = options.bin_width;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let origin = (lo / w).floor() * w;
    let bins = ((hi - origin) / w).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    let mut sums = vec![0.0f64; bins];
    for &v in values {
        let b = (((v - origin) / w).floor() as usize).min(bins - 1);
        counts[b] += 1;
        sums[b] += v;
    }
    let mut modes: Vec<LevelCluster> = (0..bins)
        .filter(|&b| {
            counts[b] > 0
                && (b == 0 || counts[b] > counts[b - 1])
                && (b + 1 == bins || counts[b] >= counts[b + 1])
        })
        .map(|b| LevelCluster {
            center: sums[b] / counts[b] as f64,
            occupancy: counts[b],
        })
        .collect();
    modes.sort_by(|a, b| {
        b.occupancy
            .cmp(&a.occupancy)
            .then(a.center.total_cmp(&b.center))
    });
    let mut kept: Vec<LevelCluster> = Vec::new();
    for mode in modes {
        if kept
            .iter()
            .all(|k| (k.center - mode.center).abs() > options.suppression_radius)
        {
            kept.push(mode);
            if kept.len() == k_max {
                break;
            }
        }
    }
    kept
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UtilityAudit {
    /// Largest `|U|` over every strategy and step.
    pub max_abs: f64,
    /// `2^m` for the `sgn` payoff.
    pub bound: Option<f64>,
    pub passes: Option<bool>,
    pub attained: Option<bool>,
    /// First step at which the maximum was reached.
    pub at_step: usize,
}

/// Scan the utilities of the whole strategy space after every step.
pub fn utility_bound_audit(trace: &Trace) -> Result<UtilityAudit> {
    let basis = trace.basis();
    let mut best = 0i64;
    let mut at_step = 0;
    for t in 0..trace.len() {
        let v = basis.max_abs_numerator(trace.totals_after(t))?;
        if v > best {
            best = v;
            at_step = t;
        }
    }
    let max_abs = best as f64 / basis.scale() as f64;
    let bound = (trace.config().payoff == Payoff::Step && basis.is_zero_start())
        .then(|| (1u64 << trace.memory()) as f64);
    Ok(UtilityAudit {
        max_abs,
        bound,
        passes: bound.map(|b| max_abs <= b),
        attained: bound.map(|b| max_abs == b),
        at_step,
    })
}

/// Lag-1 autocorrelation of the increments; negative values indicate mean reversion.
pub fn mean_reversion_stat(values: &[f64]) -> Result<f64> {
    if values.len() < 100 {
        return Err(Error::TooShort {
            needed: 100,
            got: values.len(),
        });
    }
    let increments: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    pearson(&lagged_pairs(&increments, 1))
        .ok_or_else(|| Error::Unsupported("increments are constant".into()))
}

/// Every demand has the parity of the number of agents.
pub fn parity_preserved(demands: &[i64], agents: usize) -> bool {
    demands
        .iter()
        .all(|a| a.rem_euclid(2) == (agents % 2) as i64)
}
