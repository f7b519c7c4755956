//! History graphs.
//!
//! Node `h` is a history code; the edge `(h, a)` appends action `a` and leads
//! to `h.shift(a)`. Edge `(h, a)` has index `2h + bit(a)`, which is also what
//! [`Trace::edges`] reports for every step.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Action, History, Payoff, Trace, MAX_SUPPORTED_MEMORY};

/// Largest order for which circuits are listed explicitly.
pub const MAX_ENUMERATION_ORDER: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
    pub action: Action,
}

impl Edge {
    pub fn index(&self) -> usize {
        2 * self.from as usize + self.action.bit() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeBruijnGraph {
    order: u32,
    edges: Vec<Edge>,
}

pub fn build_graph(m: u32) -> Result<DeBruijnGraph> {
    if m == 0 || m > MAX_SUPPORTED_MEMORY {
        return Err(Error::config(
            "memory",
            format!("graph order must be in 1..={MAX_SUPPORTED_MEMORY}, got {m}"),
        ));
    }
    let edges = (0..1u32 << m)
        .flat_map(|h| {
            let node = History::new(h, m).expect("code below 2^m");
            [Action::Minus, Action::Plus].map(|action| Edge {
                from: h,
                to: node.shift(action).code(),
                action,
            })
        })
        .collect();
    Ok(DeBruijnGraph { order: m, edges })
}

impl DeBruijnGraph {
    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn node_count(&self) -> usize {
        1 << self.order
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges ordered by index.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn out_degree(&self, node: u32) -> usize {
        self.edges.iter().filter(|e| e.from == node).count()
    }

    pub fn in_degree(&self, node: u32) -> usize {
        self.edges.iter().filter(|e| e.to == node).count()
    }

    pub fn self_loops(&self) -> Vec<u32> {
        self.edges
            .iter()
            .filter(|e| e.from == e.to)
            .map(|e| e.from)
            .collect()
    }

    /// Graphviz description with edges labelled by the appended action.
    pub fn to_dot(&self) -> String {
        let m = self.order;
        let mut out = format!("digraph debruijn_{m} {{\n");
        for h in 0..self.node_count() as u32 {
            let label = History::new(h, m).expect("node code");
            let _ = writeln!(out, "  n{h} [label=\"{label}\"];");
        }
        for e in &self.edges {
            let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", e.from, e.to, e.action);
        }
        out.push_str("}\n");
        out
    }
}

/// The all-minus and all-plus histories.
pub fn homogeneous_nodes(graph: &DeBruijnGraph) -> (History, History) {
    let m = graph.order();
    (
        History::homogeneous(Action::Minus, m).expect("valid order"),
        History::homogeneous(Action::Plus, m).expect("valid order"),
    )
}

/// A closed walk using every edge once, as a sequence of edge indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EulerTrail {
    pub edges: Vec<usize>,
}

impl EulerTrail {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Every edge appears once and each edge starts where the previous one ended,
    /// wrapping around at the end.
    pub fn is_valid(&self, graph: &DeBruijnGraph) -> bool {
        let all = graph.edges();
        if self.edges.len() != all.len() {
            return false;
        }
        let mut seen = vec![false; all.len()];
        for &e in &self.edges {
            if e >= all.len() || std::mem::replace(&mut seen[e], true) {
                return false;
            }
        }
        (0..self.edges.len()).all(|k| {
            let next = self.edges[(k + 1) % self.edges.len()];
            all[self.edges[k]].to == all[next].from
        })
    }

    /// Sequence of appended actions, e.g. `--++`.
    pub fn label(&self, graph: &DeBruijnGraph) -> String {
        self.edges
            .iter()
            .map(|&e| match graph.edges()[e].action {
                Action::Minus => '-',
                Action::Plus => '+',
            })
            .collect()
    }
}

/// Euler circuits counted up to rotation: each is listed once, starting at edge 0.
pub fn euler_trails(graph: &DeBruijnGraph) -> Result<Vec<EulerTrail>> {
    if graph.order() > MAX_ENUMERATION_ORDER {
        return Err(Error::ResourceGuard {
            what: format!("Euler circuit enumeration for order {}", graph.order()),
            limit: MAX_ENUMERATION_ORDER as usize,
        });
    }
    let edges = graph.edges();
    let mut used = vec![false; edges.len()];
    let mut path = vec![0usize];
    used[0] = true;
    let mut found = Vec::new();
    extend(edges, &mut used, &mut path, &mut found);
    Ok(found)
}

fn extend(edges: &[Edge], used: &mut [bool], path: &mut Vec<usize>, found: &mut Vec<EulerTrail>) {
    let here = edges[*path.last().expect("nonempty path")].to;
    if path.len() == edges.len() {
        if here == edges[path[0]].from {
            found.push(EulerTrail {
                edges: path.clone(),
            });
        }
        return;
    }
    for bit in 0..2 {
        let e = 2 * here as usize + bit;
        if !used[e] {
            used[e] = true;
            path.push(e);
            extend(edges, used, path, found);
            path.pop();
            used[e] = false;
        }
    }
}

/// Number of Euler circuits up to rotation: arborescences times `prod (deg - 1)!`.
///
/// Every node has out-degree 2, so the factorial product is 1 and the count
/// equals the number of spanning arborescences, computed as a reduced
/// Laplacian determinant.
pub fn euler_circuit_count(graph: &DeBruijnGraph) -> BigUint {
    let n = graph.node_count();
    let mut laplacian = vec![vec![BigInt::zero(); n]; n];
    for e in graph.edges() {
        let (u, v) = (e.from as usize, e.to as usize);
        laplacian[u][u] += 1;
        laplacian[u][v] -= 1;
    }
    let reduced: Vec<Vec<BigInt>> = laplacian[1..].iter().map(|row| row[1..].to_vec()).collect();
    let det = bareiss_determinant(reduced);
    det.abs().to_biguint().expect("non-negative")
}

/// Circuits with a distinguished starting edge.
pub fn euler_circuit_count_rooted(graph: &DeBruijnGraph) -> BigUint {
    euler_circuit_count(graph) * BigUint::from(graph.edge_count())
}

/// Fraction-free Gaussian elimination.
fn bareiss_determinant(mut a: Vec<Vec<BigInt>>) -> BigInt {
    let n = a.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

/// Fraction of length-`2^{m+1}` windows of `edges` (after `burn_in`) that use
/// every edge exactly once.
pub fn eulerian_window_fraction(edges: &[usize], m: u32, burn_in: usize) -> Result<f64> {
    let width = 2usize << m;
    let start = burn_in.min(edges.len());
    let tail = &edges[start..];
    if tail.len() < width {
        return Err(Error::TooShort {
            needed: start + width,
            got: edges.len(),
        });
    }
    let mut counts = vec![0u32; width];
    let mut singles = 0usize;
    let bump = |counts: &mut [u32], singles: &mut usize, e: usize, up: bool| {
        let before = counts[e];
        counts[e] = if up { before + 1 } else { before - 1 };
        match (before, counts[e]) {
            (0, 1) | (2, 1) => *singles += 1,
            (1, _) => *singles -= 1,
            _ => {}
        }
    };
    for &e in &tail[..width] {
        bump(&mut counts, &mut singles, e, true);
    }
    let mut good = usize::from(singles == width);
    let windows = tail.len() - width + 1;
    for k in width..tail.len() {
        bump(&mut counts, &mut singles, tail[k - width], false);
        bump(&mut counts, &mut singles, tail[k], true);
        good += usize::from(singles == width);
    }
    Ok(good as f64 / windows as f64)
}

/// Default steady-state cutoff, `4 * 2^{m+1}` steps.
pub fn default_burn_in(m: u32) -> usize {
    4 * (2usize << m)
}

pub fn verify_eulerian_following(trace: &Trace) -> Result<f64> {
    eulerian_window_fraction(
        &trace.edges(),
        trace.memory(),
        default_burn_in(trace.memory()),
    )
}

/// Default peak threshold, 80% of the asymptotic height `N (1 - 1/2^{S-1})`.
pub fn default_peak_threshold(agents: usize, s: usize) -> f64 {
    0.8 * agents as f64 * (1.0 - 0.5f64.powi(s as i32 - 1))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PeakOptions {
    pub threshold: Option<f64>,
    pub burn_in: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeakReport {
    pub threshold: f64,
    pub burn_in: usize,
    /// Steps after burn-in.
    pub steps: usize,
    pub peak_times: Vec<usize>,
    pub heights: Vec<i64>,
    pub histories: Vec<u32>,
    /// Peaks per analysed step.
    pub frequency: f64,
    /// Most frequent peak history.
    pub critical_history: Option<u32>,
    pub history_counts: BTreeMap<u32, usize>,
    /// Consecutive peaks at the same history less than one Euler period apart.
    pub close_pairs: usize,
    pub close_pairs_alternating: usize,
    /// All consecutive peaks at the same history.
    pub same_history_pairs: usize,
    pub same_history_pairs_alternating: usize,
}

impl PeakReport {
    pub fn is_empty(&self) -> bool {
        self.peak_times.is_empty()
    }

    pub fn signs(&self) -> Vec<i64> {
        self.heights.iter().map(|h| h.signum()).collect()
    }

    pub fn mean_height(&self) -> Option<f64> {
        (!self.heights.is_empty()).then(|| {
            self.heights.iter().map(|h| h.abs() as f64).sum::<f64>() / self.heights.len() as f64
        })
    }

    pub fn has_unique_critical_history(&self) -> bool {
        self.history_counts.len() == 1
    }

    pub fn alternation_rate(&self) -> Option<f64> {
        (self.close_pairs > 0)
            .then(|| self.close_pairs_alternating as f64 / self.close_pairs as f64)
    }
}

/// Locate demand peaks `|A(t)| > threshold` after burn-in.
pub fn analyze_peaks(trace: &Trace, options: PeakOptions) -> PeakReport {
    let cfg = trace.config();
    let threshold = options
        .threshold
        .unwrap_or_else(|| default_peak_threshold(cfg.agents, cfg.strategies_per_agent));
    let burn_in = options
        .burn_in
        .unwrap_or_else(|| default_burn_in(cfg.memory));
    peaks_in(
        trace.demands(),
        trace.history_codes(),
        cfg.memory,
        threshold,
        burn_in,
    )
}

pub fn peaks_in(
    demands: &[i64],
    histories: &[u32],
    m: u32,
    threshold: f64,
    burn_in: usize,
) -> PeakReport {
    let period = 2usize << m;
    let start = burn_in.min(demands.len());
    let mut report = PeakReport {
        threshold,
        burn_in,
        steps: demands.len() - start,
        peak_times: Vec::new(),
        heights: Vec::new(),
        histories: Vec::new(),
        frequency: 0.0,
        critical_history: None,
        history_counts: BTreeMap::new(),
        close_pairs: 0,
        close_pairs_alternating: 0,
        same_history_pairs: 0,
        same_history_pairs_alternating: 0,
    };
    let mut last: BTreeMap<u32, (usize, i64)> = BTreeMap::new();
    for t in start..demands.len() {
        let a = demands[t];
        if (a.abs() as f64) <= threshold {
            continue;
        }
        let h = histories[t];
        report.peak_times.push(t);
        report.heights.push(a);
        report.histories.push(h);
        *report.history_counts.entry(h).or_insert(0) += 1;
        if let Some(&(prev_t, prev_sign)) = last.get(&h) {
            let alternates = usize::from(prev_sign != a.signum());
            report.same_history_pairs += 1;
            report.same_history_pairs_alternating += alternates;
            if t - prev_t < period {
                report.close_pairs += 1;
                report.close_pairs_alternating += alternates;
            }
        }
        last.insert(h, (t, a.signum()));
    }
    if report.steps > 0 {
        report.frequency = report.peak_times.len() as f64 / report.steps as f64;
    }
    report.critical_history = report
        .history_counts
        .iter()
        .max_by_key(|(h, c)| (**c, std::cmp::Reverse(**h)))
        .map(|(h, _)| *h);
    report
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct UtilitySplitReport {
    pub peaks_checked: usize,
    /// Peaks at which the top and bottom halves of the strategy space are
    /// separated by more than the spread within either half.
    pub bimodal_peaks: usize,
    /// Mean fraction of agents holding exactly `k` high-utility strategies, for `k = 0..=S`.
    pub good_strategy_fractions: Vec<f64>,
    /// Held strategies sitting exactly on the split point, summed over peaks.
    pub undecided: usize,
    /// Peaks where every high strategy loses what every low strategy gains.
    pub balanced_peaks: usize,
}

impl UtilitySplitReport {
    /// `[two good, one of each, two bad]` for `S = 2`.
    pub fn population_groups(&self) -> Vec<f64> {
        self.good_strategy_fractions.iter().rev().copied().collect()
    }
}

/// Upper bound on peaks inspected by [`utility_split_check`]; peaks are
/// sampled evenly when there are more.
pub const MAX_SPLIT_PEAKS: usize = 256;

/// Split the strategy space into high and low utility halves at each peak and
/// classify agents by how many high strategies they hold.
///
/// Utilities are taken as they stand when the peak step is decided. With a
/// zero start the space is symmetric about 0, so the split point is 0 and the
/// separation follows from the payoff totals alone; otherwise the space is
/// materialised, which needs `m <= 4`.
pub fn utility_split_check(trace: &Trace, peaks: &PeakReport) -> Result<UtilitySplitReport> {
    let cfg = trace.config();
    if cfg.payoff == Payoff::Step {
        return Err(Error::Unsupported(
            "utility split needs a proportional payoff".into(),
        ));
    }
    let s = cfg.strategies_per_agent;
    let basis = trace.basis();
    let times: Vec<usize> = if peaks.peak_times.len() <= MAX_SPLIT_PEAKS {
        peaks.peak_times.clone()
    } else {
        (0..MAX_SPLIT_PEAKS)
            .map(|k| peaks.peak_times[k * peaks.peak_times.len() / MAX_SPLIT_PEAKS])
            .collect()
    };
    let mut report = UtilitySplitReport {
        good_strategy_fractions: vec![0.0; s + 1],
        ..Default::default()
    };
    for &t in &times {
        let before = trace.totals_before(t);
        let (midpoint2, bimodal) = if basis.is_zero_start() {
            let mut mags: Vec<i64> = before.iter().map(|g| g.abs()).collect();
            mags.sort_unstable();
            let top = mags.pop().unwrap_or(0);
            let rest: i64 = mags.iter().sum();
            (0, top > 2 * rest)
        } else {
            let mut u = basis.vector(&before)?.numerators;
            u.sort_unstable();
            let half = u.len() / 2;
            let gap = u[half] - u[half - 1];
            let spread = (u[half - 1] - u[0]).max(u[u.len() - 1] - u[half]);
            (u[0] + u[u.len() - 1], gap > spread)
        };
        report.peaks_checked += 1;
        report.bimodal_peaks += usize::from(bimodal);
        let mut counts = vec![0usize; s + 1];
        for agent in trace.agents() {
            let mut good = 0;
            for id in agent.ids() {
                let doubled = 2 * basis.numerator(id, &before);
                match doubled.cmp(&midpoint2) {
                    std::cmp::Ordering::Greater => good += 1,
                    std::cmp::Ordering::Equal => report.undecided += 1,
                    std::cmp::Ordering::Less => {}
                }
            }
            counts[good] += 1;
        }
        for (acc, c) in report.good_strategy_fractions.iter_mut().zip(&counts) {
            *acc += *c as f64 / cfg.agents as f64;
        }
        report.balanced_peaks += usize::from(peak_is_balanced(trace, t, midpoint2));
    }
    if report.peaks_checked > 0 {
        for f in &mut report.good_strategy_fractions {
            *f /= report.peaks_checked as f64;
        }
    }
    Ok(report)
}

/// Every held high strategy changes by `-d` and every held low strategy by `+d` over step `t`.
fn peak_is_balanced(trace: &Trace, t: usize, midpoint2: i64) -> bool {
    let basis = trace.basis();
    let before = trace.totals_before(t);
    let after = trace.totals_after(t);
    let mut high: Option<i64> = None;
    let mut low: Option<i64> = None;
    for agent in trace.agents() {
        for id in agent.ids() {
            let u = basis.numerator(id, &before);
            let delta = basis.numerator(id, after) - u;
            let slot = match (2 * u).cmp(&midpoint2) {
                std::cmp::Ordering::Greater => &mut high,
                std::cmp::Ordering::Less => &mut low,
                std::cmp::Ordering::Equal => return false,
            };
            match slot {
                Some(d) if *d != delta => return false,
                Some(_) => {}
                None => *slot = Some(delta),
            }
        }
    }
    matches!((high, low), (Some(h), Some(l)) if h == -l && h != 0)
}
