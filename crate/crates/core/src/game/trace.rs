use std::io::{Read, Write};

use num_rational::Rational64;

use super::action::{Action, History};
use super::config::GameConfig;
use super::engine::StepRecord;
use super::population::Agent;
use super::strategy::space_size;
use super::utility::{UtilityBasis, UtilityVector};
use crate::error::{Error, Result};

/// Largest number of utility columns written to a trace CSV. Beyond this the
/// per-history payoff totals `G_0..G_{P-1}` are written instead.
pub const MAX_UTILITY_COLUMNS: u128 = 1 << 8;

/// Time-indexed record of a finished run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    config: GameConfig,
    agents: Vec<Agent>,
    basis: UtilityBasis,
    initial_history: History,
    demands: Vec<i64>,
    minorities: Vec<Action>,
    histories: Vec<u32>,
    // Row t holds the payoff totals after step t; P values per row.
    totals: Vec<i64>,
}

impl Trace {
    pub(crate) fn start(
        config: GameConfig,
        agents: Vec<Agent>,
        basis: UtilityBasis,
        initial_history: History,
    ) -> Self {
        let steps = config.steps;
        let p = config.histories();
        Self {
            config,
            agents,
            basis,
            initial_history,
            demands: Vec::with_capacity(steps),
            minorities: Vec::with_capacity(steps),
            histories: Vec::with_capacity(steps),
            totals: Vec::with_capacity(steps * p),
        }
    }

    pub(crate) fn push(&mut self, demand: i64, minority: Action, before: History, totals: &[i64]) {
        self.demands.push(demand);
        self.minorities.push(minority);
        self.histories.push(before.code());
        self.totals.extend_from_slice(totals);
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

    pub fn memory(&self) -> u32 {
        self.config.memory
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    pub fn demands(&self) -> &[i64] {
        &self.demands
    }

    pub fn demand_series(&self) -> Vec<f64> {
        self.demands.iter().map(|&a| a as f64).collect()
    }

    pub fn minority(&self, t: usize) -> Action {
        self.minorities[t]
    }

    pub fn minorities(&self) -> &[Action] {
        &self.minorities
    }

    pub fn history_before(&self, t: usize) -> History {
        History::from_code_unchecked(self.histories[t], self.config.memory)
    }

    /// History codes `mu(0), ..., mu(T-1)`.
    pub fn history_codes(&self) -> &[u32] {
        &self.histories
    }

    /// History after the final step.
    pub fn final_history(&self) -> History {
        match self.len() {
            0 => self.initial_history,
            n => self.history_before(n - 1).shift(self.minorities[n - 1]),
        }
    }

    /// De Bruijn edge index `2 * mu(t) + bit(a*(t))` of every step.
    pub fn edges(&self) -> Vec<usize> {
        self.histories
            .iter()
            .zip(&self.minorities)
            .map(|(&h, a)| 2 * h as usize + a.bit() as usize)
            .collect()
    }

    /// Payoff totals after step `t`.
    pub fn totals_after(&self, t: usize) -> &[i64] {
        let p = self.config.histories();
        &self.totals[t * p..(t + 1) * p]
    }

    /// Payoff totals in effect when step `t` was decided.
    pub fn totals_before(&self, t: usize) -> Vec<i64> {
        if t == 0 {
            vec![0; self.config.histories()]
        } else {
            self.totals_after(t - 1).to_vec()
        }
    }

    pub fn utilities_after(&self, t: usize) -> Result<UtilityVector> {
        self.basis.vector(self.totals_after(t))
    }

    pub fn utilities_before(&self, t: usize) -> Result<UtilityVector> {
        self.basis.vector(&self.totals_before(t))
    }

    pub fn utility_after(&self, t: usize, id: u64) -> Rational64 {
        self.basis.utility(id, self.totals_after(t))
    }

    pub fn record(&self, t: usize) -> StepRecord {
        StepRecord {
            t,
            demand: self.demands[t],
            minority: self.minorities[t],
            history_before: self.history_before(t),
            totals_after: self.totals_after(t).to_vec(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = StepRecord> + '_ {
        (0..self.len()).map(|t| self.record(t))
    }

    /// Write the trace as CSV.
    ///
    /// The first line is a `#` comment carrying the config hash; the header
    /// follows: `t,A,minority,history,U_0,...,U_{2^P-1}`. Histories use their
    /// canonical integer code. When `2^P` exceeds [`MAX_UTILITY_COLUMNS`] the
    /// utility columns are replaced by the payoff totals `G_0..G_{P-1}`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# mgame trace config={} payoff={} N={} m={} S={} seed={}",
            self.config.hash(),
            self.config.payoff,
            self.config.agents,
            self.config.memory,
            self.config.strategies_per_agent,
            self.config.seed
        )
        .map_err(|e| Error::io("trace csv", e))?;
        let mut w = csv::Writer::from_writer(out);
        let dense = space_size(self.config.memory) <= MAX_UTILITY_COLUMNS;
        let mut header = vec![
            "t".to_string(),
            "A".into(),
            "minority".into(),
            "history".into(),
        ];
        if dense {
            header.extend((0..space_size(self.config.memory)).map(|i| format!("U_{i}")));
        } else {
            header.extend((0..self.config.histories()).map(|h| format!("G_{h}")));
        }
        w.write_record(&header)?;
        let scale = self.basis.scale();
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for t in 0..self.len() {
            row.clear();
            row.push(t.to_string());
            row.push(self.demands[t].to_string());
            row.push(self.minorities[t].value().to_string());
            row.push(self.histories[t].to_string());
            if dense {
                let u = self.utilities_after(t)?;
                row.extend(u.numerators.iter().map(|&n| format_scaled(n, scale)));
            } else {
                row.extend(
                    self.totals_after(t)
                        .iter()
                        .map(|&g| format_scaled(g, scale)),
                );
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("trace csv", e))?;
        Ok(())
    }
}

fn format_scaled(numerator: i64, scale: i64) -> String {
    if scale == 1 {
        numerator.to_string()
    } else {
        (numerator as f64 / scale as f64).to_string()
    }
}

/// A trace read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceTable {
    pub config_line: Option<String>,
    pub demands: Vec<i64>,
    pub minorities: Vec<Action>,
    pub histories: Vec<u32>,
    /// Column names after `history` (`U_i` or `G_h`).
    pub value_columns: Vec<String>,
    /// Row-major values of those columns.
    pub values: Vec<f64>,
}

impl TraceTable {
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut text = String::new();
        let mut input = input;
        input
            .read_to_string(&mut text)
            .map_err(|e| Error::io("trace csv", e))?;
        let config_line = text
            .lines()
            .next()
            .filter(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim().to_string());
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        let expected = ["t", "A", "minority", "history"];
        if header.len() < 4 || header.iter().take(4).ne(expected) {
            return Err(Error::Parse(format!(
                "trace header must start with t,A,minority,history; got {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let value_columns: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
        let mut table = TraceTable {
            config_line,
            demands: Vec::new(),
            minorities: Vec::new(),
            histories: Vec::new(),
            value_columns,
            values: Vec::new(),
        };
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let parse_err = |what: &str| Error::Parse(format!("row {line}: bad {what}"));
            table
                .demands
                .push(field(1).parse().map_err(|_| parse_err("A"))?);
            let minority: i64 = field(2).parse().map_err(|_| parse_err("minority"))?;
            table
                .minorities
                .push(Action::from_value(minority).ok_or_else(|| parse_err("minority"))?);
            table
                .histories
                .push(field(3).parse().map_err(|_| parse_err("history"))?);
            for i in 4..record.len() {
                table
                    .values
                    .push(field(i).parse().map_err(|_| parse_err("value"))?);
            }
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    pub fn demand_series(&self) -> Vec<f64> {
        self.demands.iter().map(|&a| a as f64).collect()
    }

    /// Largest absolute value in the utility columns, if the file has them.
    pub fn max_abs_utility(&self) -> Option<f64> {
        let utilities = self
            .value_columns
            .first()
            .is_some_and(|c| c.starts_with("U_"));
        utilities.then(|| self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }
}
