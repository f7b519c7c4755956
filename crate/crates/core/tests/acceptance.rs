//! Exit criteria. Each test prints one `PASS`/`FAIL` line and then asserts.
//!
//! Simulation-backed criteria share seed sweeps through `OnceLock`s, so the
//! whole file costs a few minutes of single-core time in the test profile.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use mgame::debruijn::{
    analyze_peaks, build_graph, euler_circuit_count, euler_trails, utility_split_check,
    verify_eulerian_following, PeakOptions,
};
use mgame::game::strategy::space_size;
use mgame::game::{GameConfig, InitialUtilities, Payoff, Trace};
use mgame::markov::{
    enumerate_chain, expected_demand, extract_state_graph, period_match_probability,
    period_match_probability_by, stationary, ChainState,
};
use mgame::stats::{autocorrelation, level_clustering, utility_bound_audit, LevelOptions, Series};
use mgame::strategy_space::{
    best_half_probability_proportional, level_count, level_probabilities_step,
    prob_active_at_level_proportional,
};
use mgame::sweep::sweep;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

const STEPS: usize = 100_000;
const SEEDS: u64 = 20;

/// Written straight to the stderr handle so the line survives test output capture.
fn report(id: u32, name: &str, pass: bool, detail: String) {
    use std::io::Write;
    let line = format!(
        "[acceptance] criterion {id:>2} {name}: {} | {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

/// One row of the m = 1 state table: `(mu, [U_1..U_4], P(x), E A / N)`.
type Row = (i64, [i64; 4], (i64, i64), (i64, i64));

const STATE_TABLE: [Row; 12] = [
    (-1, [0, 0, 0, 0], (1, 8), (0, 1)),
    (1, [0, 0, 0, 0], (1, 8), (0, 1)),
    (1, [-1, -1, 1, 1], (1, 8), (0, 1)),
    (-1, [1, -1, 1, -1], (1, 8), (0, 1)),
    (-1, [0, -2, 2, 0], (1, 16), (3, 8)),
    (1, [0, -2, 2, 0], (1, 16), (-3, 8)),
    (1, [-2, 0, 0, 2], (1, 16), (3, 8)),
    (-1, [2, 0, 0, -2], (1, 16), (-3, 8)),
    (-1, [-1, -1, 1, 1], (1, 16), (1, 2)),
    (1, [1, -1, 1, -1], (1, 16), (1, 2)),
    (-1, [1, 1, -1, -1], (1, 16), (-1, 2)),
    (1, [-1, 1, -1, 1], (1, 16), (-1, 2)),
];

fn table_state(row: usize) -> ChainState {
    let (mu, u, _, _) = STATE_TABLE[row];
    ChainState {
        history: u32::from(mu > 0),
        utilities: u.to_vec(),
    }
}

#[test]
fn c01_state_table_reproduction() {
    let start = Instant::now();
    let chain = enumerate_chain(1, 2).unwrap();
    let pi = stationary(&chain).unwrap();
    let elapsed = start.elapsed();
    let n = 8;
    let mut problems = Vec::new();
    if chain.len() != 12 {
        problems.push(format!("{} states", chain.len()));
    }
    let mut seen = vec![false; chain.len()];
    for (row, &(_, _, (pn, pd), (en, ed))) in STATE_TABLE.iter().enumerate() {
        let Some(i) = chain.index_of(&table_state(row)) else {
            problems.push(format!("x{} missing", row + 1));
            continue;
        };
        seen[i] = true;
        if pi.pi[i] != q(pn, pd) {
            problems.push(format!("x{} pi {} != {}/{}", row + 1, pi.pi[i], pn, pd));
        }
        let e = expected_demand(&chain.states[i], 1, n, 2) / BigRational::from_integer(n.into());
        if e != q(en, ed) {
            problems.push(format!("x{} E A/N {} != {}/{}", row + 1, e, en, ed));
        }
    }
    if seen.iter().any(|s| !s) {
        problems.push("unlisted states".into());
    }
    let mut demand_multiset: Vec<BigRational> = chain
        .states
        .iter()
        .map(|x| x.demand_per_agent(1, 2))
        .collect();
    demand_multiset.sort();
    let mut want: Vec<BigRational> = STATE_TABLE.iter().map(|r| q(r.3 .0, r.3 .1)).collect();
    want.sort();
    let multiset_ok = demand_multiset == want;
    let pass = problems.is_empty() && multiset_ok && elapsed.as_secs_f64() < 1.0;
    report(
        1,
        "state table",
        pass,
        format!(
            "{} states, demand multiset {}, {:.3}s; mismatches: {:?}",
            chain.len(),
            if multiset_ok { "matches" } else { "differs" },
            elapsed.as_secs_f64(),
            problems
        ),
    );
    assert!(pass, "{problems:?}");
}

#[test]
fn c02_period_match_maximum() {
    let start = Instant::now();
    let chain = enumerate_chain(1, 2).unwrap();
    let pi = stationary(&chain).unwrap();
    let values: Vec<BigRational> = (1..=16)
        .map(|t| period_match_probability(&chain, &pi, 2, t))
        .collect();
    let elapsed = start.elapsed();
    let max = values.iter().max().unwrap().clone();
    let at4 = values[3].clone();
    // The same sum with the table's printed demand column as state labels.
    let printed: Vec<(i64, i64)> = chain
        .states
        .iter()
        .map(|s| {
            let row = (0..12)
                .find(|&r| table_state(r) == *s)
                .expect("known state");
            STATE_TABLE[row].3
        })
        .collect();
    let with_printed = period_match_probability_by(&chain, &pi, &printed, 4);
    let pass = at4 == q(7, 16) && max == q(7, 16) && elapsed.as_secs_f64() < 1.0;
    report(
        2,
        "period match maximum",
        pass,
        format!(
            "P[A(t)=A(t+4)] = {at4}, max over 1..16 = {max}, profile {:?}; with printed table labels = {with_printed}; {:.3}s",
            values.iter().map(ToString::to_string).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

/// Literal argmax over `1..=tau_max`, plus the first lag within 0.02 of it.
fn period_estimates(trace: &Trace) -> mgame::Result<(Option<usize>, Option<usize>)> {
    let r = autocorrelation(&Series::from_demands(trace.demands()), 8 << trace.memory())?;
    let argmax = r.argmax();
    let first = argmax.and_then(|a| (1..r.r.len()).find(|&t| r.r[t] >= r.r[a] - 0.02));
    Ok((argmax, first))
}

struct StepSummary {
    max_abs: f64,
    attained: bool,
    within: bool,
    argmax: Option<usize>,
    first_near_max: Option<usize>,
    visits: HashMap<ChainState, u64>,
    levels: Vec<f64>,
    demands: Vec<f64>,
}

fn summarise_step(trace: &Trace, with_states: bool) -> mgame::Result<StepSummary> {
    let audit = utility_bound_audit(trace)?;
    let series = Series::from_demands(trace.demands());
    let (argmax, first_near_max) = period_estimates(trace)?;
    let mut visits = HashMap::new();
    let mut levels = Vec::new();
    let mut demands = Vec::new();
    if with_states {
        demands = series.values().to_vec();
        let graph = extract_state_graph(trace)?;
        for (i, s) in graph.states.iter().enumerate() {
            visits.insert(s.clone(), graph.visits[i]);
        }
        levels = level_clustering(
            series.values(),
            5,
            LevelOptions::for_agents(trace.config().agents),
        )
        .into_iter()
        .map(|c| c.center)
        .collect();
    }
    Ok(StepSummary {
        max_abs: audit.max_abs,
        attained: audit.attained == Some(true),
        within: audit.passes == Some(true),
        argmax,
        first_near_max,
        visits,
        levels,
        demands,
    })
}

fn step_runs(m: u32) -> &'static [StepSummary] {
    static M1: OnceLock<Vec<StepSummary>> = OnceLock::new();
    static M2: OnceLock<Vec<StepSummary>> = OnceLock::new();
    static M3: OnceLock<Vec<StepSummary>> = OnceLock::new();
    let (cell, n, count) = match m {
        1 => (&M1, 401, SEEDS),
        2 => (&M2, 1601, SEEDS),
        _ => (&M3, 1601, 10),
    };
    cell.get_or_init(|| {
        let cfg = GameConfig::new(n, m, 2, Payoff::Step).with_steps(STEPS);
        sweep(&cfg, &seeds(count), |t| summarise_step(t, m == 1)).unwrap()
    })
}

struct ProportionalSummary {
    argmax: Option<usize>,
    first_near_max: Option<usize>,
    peak_heights: Vec<i64>,
    steps: usize,
    close_pairs: usize,
    close_pairs_alternating: usize,
    euler: f64,
}

fn summarise_proportional(trace: &Trace) -> mgame::Result<ProportionalSummary> {
    let (argmax, first_near_max) = period_estimates(trace)?;
    let peaks = analyze_peaks(trace, PeakOptions::default());
    Ok(ProportionalSummary {
        argmax,
        first_near_max,
        peak_heights: peaks.heights.clone(),
        steps: peaks.steps,
        close_pairs: peaks.close_pairs,
        close_pairs_alternating: peaks.close_pairs_alternating,
        euler: verify_eulerian_following(trace)?,
    })
}

fn proportional_runs(m: u32) -> &'static [ProportionalSummary] {
    static M1: OnceLock<Vec<ProportionalSummary>> = OnceLock::new();
    static M2: OnceLock<Vec<ProportionalSummary>> = OnceLock::new();
    let (cell, n) = if m == 1 { (&M1, 401) } else { (&M2, 1601) };
    cell.get_or_init(|| {
        let cfg = GameConfig::new(n, m, 2, Payoff::Proportional).with_steps(STEPS);
        sweep(&cfg, &seeds(SEEDS), summarise_proportional).unwrap()
    })
}

#[test]
fn c03_utility_bound() {
    let mut pass = true;
    let mut details = Vec::new();
    for m in 1..=3u32 {
        let runs = step_runs(m);
        let runs = &runs[..10];
        let bound = (1u64 << m) as f64;
        let within = runs.iter().all(|r| r.within && r.max_abs <= bound);
        let attained = runs.iter().all(|r| r.attained);
        let max = runs.iter().map(|r| r.max_abs).fold(0.0, f64::max);
        pass &= within && (m == 3 || attained);
        details.push(format!(
            "m={m}: max|U|={max} bound={bound} attained in {}/{}",
            runs.iter().filter(|r| r.attained).count(),
            runs.len()
        ));
    }
    report(3, "utility bound", pass, details.join("; "));
    assert!(pass);
}

#[test]
fn c04_chain_and_simulation_agree() {
    let runs = step_runs(1);
    let mut pooled: HashMap<&ChainState, u64> = HashMap::new();
    for r in runs {
        for (s, v) in &r.visits {
            *pooled.entry(s).or_insert(0) += v;
        }
    }
    let total: u64 = pooled.values().sum();
    let mut worst = 0.0f64;
    let mut freqs = Vec::new();
    for (row, &(_, _, (pn, pd), _)) in STATE_TABLE.iter().enumerate() {
        let f = pooled.get(&table_state(row)).copied().unwrap_or(0) as f64 / total as f64;
        worst = worst.max((f - pn as f64 / pd as f64).abs());
        freqs.push(format!("{f:.4}"));
    }
    let extra = pooled.len() - 12.min(pooled.len());
    let pass = worst <= 0.01 && pooled.len() == 12;
    report(
        4,
        "chain vs simulation",
        pass,
        format!(
            "max |freq - pi| = {worst:.4}, states seen {} (extra {extra}), freqs {freqs:?}",
            pooled.len()
        ),
    );
    assert!(pass);
}

#[test]
fn c05_autocorrelation_period() {
    let mut pass = true;
    let mut details = Vec::new();
    for m in 1..=2u32 {
        let target = 2 << m;
        let step_hits = step_runs(m)
            .iter()
            .filter(|r| r.argmax == Some(target))
            .count();
        let prop_hits = proportional_runs(m)
            .iter()
            .filter(|r| r.argmax == Some(target))
            .count();
        let near = step_runs(m)
            .iter()
            .map(|r| r.first_near_max)
            .chain(proportional_runs(m).iter().map(|r| r.first_near_max))
            .filter(|&f| f == Some(target))
            .count();
        let misses: Vec<Option<usize>> = step_runs(m)
            .iter()
            .map(|r| r.argmax)
            .chain(proportional_runs(m).iter().map(|r| r.argmax))
            .filter(|&a| a != Some(target))
            .collect();
        pass &= step_hits >= 18 && prop_hits >= 18;
        details.push(format!(
            "m={m} tau={target}: sgn {step_hits}/20, x {prop_hits}/20, other argmaxes {misses:?}, first lag within 0.02 of max at tau in {near}/40"
        ));
    }
    report(5, "autocorrelation period", pass, details.join("; "));
    assert!(pass);
}

#[test]
fn c06_demand_levels() {
    let n = 401.0;
    let mut targets = [-0.5 * n, -0.375 * n, 0.0, 0.375 * n, 0.5 * n];
    targets.sort_by(f64::total_cmp);
    let mut failures = Vec::new();
    for (seed, r) in step_runs(1).iter().enumerate() {
        let mut centers = r.levels.clone();
        centers.sort_by(f64::total_cmp);
        let ok = centers.len() == 5
            && centers
                .iter()
                .zip(&targets)
                .all(|(c, t)| (c - t).abs() <= 0.05 * n);
        if !ok {
            failures.push(format!("seed {seed}: {centers:.1?}"));
        }
    }
    let pooled: Vec<f64> = step_runs(1)
        .iter()
        .flat_map(|r| r.demands.iter().copied())
        .collect();
    let mut pooled_modes: Vec<f64> = level_clustering(&pooled, 5, LevelOptions::for_agents(401))
        .into_iter()
        .map(|c| c.center)
        .collect();
    pooled_modes.sort_by(f64::total_cmp);
    let pass = failures.is_empty();
    report(
        6,
        "demand levels",
        pass,
        format!(
            "seeds failing {}/20 {failures:?}; modes of the pooled series {pooled_modes:.1?}",
            failures.len()
        ),
    );
    assert!(pass);
}

#[test]
fn c07_peak_height() {
    let mut pass = true;
    let mut details = Vec::new();
    for (m, n) in [(1u32, 401.0), (2, 1601.0)] {
        let heights: Vec<f64> = proportional_runs(m)
            .iter()
            .flat_map(|r| r.peak_heights.iter().map(|h| h.abs() as f64))
            .collect();
        let mean = heights.iter().sum::<f64>() / heights.len() as f64;
        let rel = mean / (n / 2.0);
        pass &= (rel - 1.0).abs() <= 0.05;
        details.push(format!(
            "N={n} m={m}: mean peak {mean:.1} = {rel:.4} N/2 over {} peaks",
            heights.len()
        ));
    }
    report(7, "peak height", pass, details.join("; "));
    assert!(pass);
}

#[test]
fn c08_peak_frequency_and_alternation() {
    let mut pass = true;
    let mut details = Vec::new();
    for m in 1..=2u32 {
        let runs = proportional_runs(m);
        let peaks: usize = runs.iter().map(|r| r.peak_heights.len()).sum();
        let steps: usize = runs.iter().map(|r| r.steps).sum();
        let f = peaks as f64 / steps as f64;
        let target = 1.0 / (1u32 << m) as f64;
        let pairs: usize = runs.iter().map(|r| r.close_pairs).sum();
        let alt: usize = runs.iter().map(|r| r.close_pairs_alternating).sum();
        let alt_rate = alt as f64 / pairs as f64;
        pass &= (f - target).abs() <= 0.2 * target && alt_rate >= 0.95;
        details.push(format!(
            "m={m}: f={f:.4} (target {target}), alternation {alt_rate:.4} over {pairs} pairs"
        ));
    }
    report(8, "peak frequency", pass, details.join("; "));
    assert!(pass);
}

#[test]
fn c09_euler_counts() {
    let counts: Vec<usize> = (1..=3)
        .map(|m| euler_trails(&build_graph(m).unwrap()).unwrap().len())
        .collect();
    let algebraic = euler_circuit_count(&build_graph(3).unwrap());
    let pass =
        counts[0] == 1 && counts[1] == 2 && num_bigint::BigUint::from(counts[2]) == algebraic;
    report(
        9,
        "euler counts",
        pass,
        format!("backtracking {counts:?}, m=3 algebraic {algebraic}"),
    );
    assert!(pass);
}

/// `sum_{l=1}^{n} l^k` by the binomial recurrence on power sums.
fn power_sums(n: &BigInt, k_max: usize) -> Vec<BigInt> {
    let mut sums: Vec<BigInt> = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let mut acc = num_traits::pow(n + 1, k + 1) - 1;
        for (j, s) in sums.iter().enumerate() {
            acc -= num_integer::binomial(BigInt::from(k + 1), BigInt::from(j)) * s;
        }
        sums.push(acc / BigInt::from(k + 1));
    }
    sums
}

/// `sum_{l=1}^{L} [(K - l + 1)^S - (K - l)^S] / K^S` expanded as a polynomial in `l`.
fn best_half_by_power_sums(m: u32, s: usize) -> BigRational {
    let k = BigInt::from(space_size(m));
    let l_max = &k / 2;
    let sums = power_sums(&l_max, s);
    // (K + 1 - l)^S - (K - l)^S = sum_i C(S, i) (-l)^i [(K + 1)^{S-i} - K^{S-i}]
    let mut total = BigInt::zero();
    for (i, power_sum) in sums.iter().enumerate().take(s + 1) {
        let c = num_integer::binomial(BigInt::from(s), BigInt::from(i));
        let sign = if i % 2 == 0 {
            BigInt::one()
        } else {
            -BigInt::one()
        };
        let bracket = num_traits::pow(&k + 1, s - i) - num_traits::pow(k.clone(), s - i);
        total += c * sign * bracket * power_sum;
    }
    BigRational::new(total, num_traits::pow(k, s))
}

/// Active-level distribution by listing every ordered `S`-tuple of strategies.
/// Utilities are `U_id = sum_h a_id(h)`, which puts the all-`+1` table alone
/// on the top level.
fn enumerate_tuples(m: u32, s: usize) -> Vec<BigRational> {
    let k = space_size(m) as u64;
    let p = 1u32 << m;
    let utility = |id: u64| 2 * id.count_ones() as i64 - p as i64;
    let level = |id: u64| (p - id.count_ones()) as usize;
    let mut levels = vec![BigRational::zero(); p as usize + 1];
    let total = BigRational::from_integer(BigInt::from(k.pow(s as u32)));
    let mut tuple = vec![0u64; s];
    loop {
        let best = tuple.iter().copied().max_by_key(|&id| utility(id)).unwrap();
        levels[level(best)] += BigRational::one();
        let mut i = 0;
        loop {
            if i == s {
                return levels.into_iter().map(|c| c / &total).collect();
            }
            tuple[i] += 1;
            if tuple[i] < k {
                break;
            }
            tuple[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn c10_closed_form_identities() {
    let mut problems = Vec::new();
    for m in 1..=5u32 {
        let total: u128 = (1..=(1usize << m) + 1)
            .map(|l| level_count(m, l).unwrap())
            .sum();
        if total != space_size(m) {
            problems.push(format!("level counts m={m}: {total}"));
        }
        for s in 2..=4usize {
            let want = BigRational::one() - q(1, 1 << s);
            let telescoped = best_half_probability_proportional(m, s).unwrap();
            let independent = if m <= 3 {
                let half = space_size(m) / 2;
                (1..=half)
                    .map(|l| prob_active_at_level_proportional(m, s, l).unwrap())
                    .sum::<BigRational>()
            } else {
                best_half_by_power_sums(m, s)
            };
            if telescoped != want || independent != want {
                problems.push(format!(
                    "best half m={m} S={s}: {telescoped} / {independent}"
                ));
            }
        }
    }
    for m in 1..=2u32 {
        for s in 2..=3usize {
            if level_probabilities_step(m, s).unwrap() != enumerate_tuples(m, s) {
                problems.push(format!("level distribution m={m} S={s}"));
            }
        }
    }
    let pass = problems.is_empty();
    report(
        10,
        "closed-form identities",
        pass,
        format!("m<=5, S<=4 sums; m<=2, S<=3 tuple enumeration; problems {problems:?}"),
    );
    assert!(pass);
}

#[test]
fn c11_population_split() {
    let cfg = GameConfig::new(1601, 5, 2, Payoff::Proportional).with_steps(10_000);
    let per_seed = sweep(&cfg, &seeds(10), |trace| {
        let peaks = analyze_peaks(trace, PeakOptions::default());
        utility_split_check(trace, &peaks)
    })
    .unwrap();
    let checked: usize = per_seed.iter().map(|r| r.peaks_checked).sum();
    let mut groups = [0.0f64; 3];
    for r in &per_seed {
        for (g, v) in groups.iter_mut().zip(r.population_groups()) {
            *g += v * r.peaks_checked as f64;
        }
    }
    for g in &mut groups {
        *g /= checked as f64;
    }
    let want = [0.25, 0.5, 0.25];
    let pass = checked > 0 && groups.iter().zip(want).all(|(g, w)| (g - w).abs() <= 0.03);
    report(
        11,
        "population split",
        pass,
        format!(
            "two good / mixed / two bad = {:.4} / {:.4} / {:.4} over {checked} peaks in 10 runs",
            groups[0], groups[1], groups[2]
        ),
    );
    assert!(pass);
}

#[test]
fn c12_determinism_under_strict_order() {
    let mut max_degree = 0usize;
    let mut states = 0usize;
    for (m, n) in [(1u32, 401usize), (2, 1601)] {
        let cfg = GameConfig::new(n, m, 2, Payoff::Step)
            .with_steps(20_000)
            .with_initial_utilities(InitialUtilities::Perturbed);
        let degrees = sweep(&cfg, &seeds(5), |trace| {
            let g = extract_state_graph(trace)?;
            Ok((
                (0..g.len()).map(|i| g.out_degree(i)).max().unwrap_or(0),
                g.len(),
            ))
        })
        .unwrap();
        for (d, count) in degrees {
            max_degree = max_degree.max(d);
            states += count;
        }
    }
    let cfg = GameConfig::new(1601, 2, 2, Payoff::Proportional)
        .with_steps(STEPS)
        .with_initial_utilities(InitialUtilities::Perturbed);
    let fractions = sweep(&cfg, &seeds(SEEDS), verify_eulerian_following).unwrap();
    let pooled = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let zero_start = proportional_runs(2).iter().map(|r| r.euler).sum::<f64>() / SEEDS as f64;
    let mut sorted = fractions.clone();
    sorted.sort_by(f64::total_cmp);
    let pass = max_degree == 1 && pooled >= 0.95;
    report(
        12,
        "determinism",
        pass,
        format!(
            "max out-degree {max_degree} over {states} states; Euler-window fraction {pooled:.4} (per run {:.3}..{:.3}, zero start {zero_start:.4})",
            sorted[0],
            sorted[sorted.len() - 1]
        ),
    );
    assert!(pass);
}
