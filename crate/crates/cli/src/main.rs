use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mgame::debruijn::{
    build_graph, default_burn_in, default_peak_threshold, euler_circuit_count,
    euler_circuit_count_rooted, euler_trails, eulerian_window_fraction, peaks_in,
    MAX_ENUMERATION_ORDER,
};
use mgame::experiment::{run_experiment, write_atomic, Analysis, SpecFile};
use mgame::game::TraceTable;
use mgame::markov::{enumerate_chain, expected_demand, stationary};
use mgame::stats::{autocorrelation, level_clustering, parity_preserved, LevelOptions, Series};
use mgame::strategy_space::{
    best_action_stats, best_half_probability_proportional, expected_holders, expected_peak_height,
    level_probabilities_step,
};
use serde_json::json;

/// Minority game simulator with exact Markov-chain and de Bruijn analysis.
#[derive(Parser)]
#[command(name = "mgame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the game for each seed and write one trace CSV per seed.
    Simulate(GameArgs),
    /// Summarise a trace CSV written by `simulate`.
    Analyze(AnalyzeArgs),
    /// Closed-form predictions for the given N, m and S.
    Predict(PredictArgs),
    /// Exact state chain for the sgn payoff.
    Markov(MarkovArgs),
    /// De Bruijn history graph and its Euler circuits.
    Debruijn(DebruijnArgs),
    /// Run an experiment and cross-check it; exits 1 if any check fails.
    Check(GameArgs),
}

/// Game parameters. Flags win over values from `--config`.
#[derive(Args)]
struct GameArgs {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    memory: Option<u32>,
    #[arg(long)]
    strategies_per_agent: Option<usize>,
    /// sgn, x or x-over-n.
    #[arg(long)]
    payoff: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long)]
    seed_count: Option<u64>,
    /// Comma-separated analyses, e.g. `markov,autocorr`.
    #[arg(long, value_delimiter = ',', value_enum)]
    analyses: Vec<AnalysisArg>,
    /// zero or perturbed.
    #[arg(long)]
    initial_utilities: Option<String>,
    /// Output directory; defaults to the config value, then `$MGAME_OUT`, then `mgame-out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisArg {
    Timeseries,
    Autocorr,
    Scatter,
    Levels,
    Markov,
    Debruijn,
    Peaks,
    Audit,
}

impl From<AnalysisArg> for Analysis {
    fn from(a: AnalysisArg) -> Self {
        match a {
            AnalysisArg::Timeseries => Analysis::Timeseries,
            AnalysisArg::Autocorr => Analysis::Autocorr,
            AnalysisArg::Scatter => Analysis::Scatter,
            AnalysisArg::Levels => Analysis::Levels,
            AnalysisArg::Markov => Analysis::Markov,
            AnalysisArg::Debruijn => Analysis::Debruijn,
            AnalysisArg::Peaks => Analysis::Peaks,
            AnalysisArg::Audit => Analysis::Audit,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    trace: PathBuf,
    /// Overrides the population size recorded in the trace header.
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    memory: Option<u32>,
    #[arg(long)]
    strategies_per_agent: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, default_value_t = 401)]
    agents: usize,
    #[arg(long, default_value_t = 1)]
    memory: u32,
    #[arg(long, default_value_t = 2)]
    strategies_per_agent: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Dot,
}

#[derive(Args)]
struct MarkovArgs {
    #[arg(long, default_value_t = 1)]
    memory: u32,
    #[arg(long, default_value_t = 2)]
    strategies_per_agent: usize,
    /// Population size used for the expected demands in the JSON output.
    #[arg(long, default_value_t = 8)]
    agents: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DebruijnArgs {
    #[arg(long, default_value_t = 2)]
    memory: u32,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => simulate(args, false),
        Command::Check(args) => simulate(args, true),
        Command::Analyze(args) => analyze(args),
        Command::Predict(args) => predict(args),
        Command::Markov(args) => markov(args),
        Command::Debruijn(args) => debruijn(args),
    }
}

fn spec_from(args: GameArgs) -> Result<SpecFile> {
    let mut spec = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SpecFile::parse(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SpecFile::default(),
    };
    spec.overlay(SpecFile {
        agents: args.agents,
        memory: args.memory,
        strategies_per_agent: args.strategies_per_agent,
        payoff: args.payoff,
        steps: args.steps,
        seed: args.seed,
        seed_count: args.seed_count,
        initial_utilities: args.initial_utilities,
        analyses: (!args.analyses.is_empty())
            .then(|| args.analyses.into_iter().map(Analysis::from).collect()),
        output_dir: args.out,
        ..Default::default()
    });
    if spec.output_dir.is_none() {
        spec.output_dir = std::env::var_os("MGAME_OUT").map(PathBuf::from);
    }
    if spec.seed.is_none() && spec.seeds.is_none() {
        spec.seed = Some(0);
    }
    Ok(spec)
}

fn simulate(args: GameArgs, check: bool) -> Result<ExitCode> {
    let spec = spec_from(args)?.build()?;
    let report = run_experiment(&spec)?;
    say(&format!(
        "wrote {} run(s) to {} (config {})",
        spec.seeds.len(),
        spec.output_dir.display(),
        report.config_hash
    ))?;
    if !check {
        return Ok(ExitCode::SUCCESS);
    }
    say(report.render().trim_end())?;
    Ok(if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// `key=value` pairs from the trace's comment line.
fn header_value<T: std::str::FromStr>(table: &TraceTable, key: &str) -> Option<T> {
    table
        .config_line
        .as_deref()?
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('=')?.parse().ok())
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let file =
        fs::File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let table = TraceTable::read_csv(file)?;
    let Some(n) = args.agents.or_else(|| header_value(&table, "N")) else {
        bail!("trace header has no N=; pass --agents");
    };
    let Some(m) = args.memory.or_else(|| header_value(&table, "m")) else {
        bail!("trace header has no m=; pass --memory");
    };
    let s = args
        .strategies_per_agent
        .or_else(|| header_value(&table, "S"))
        .unwrap_or(2);
    let series = Series::from_demands(&table.demands);
    let period = 2usize << m;
    let autocorr = autocorrelation(&series, 4 * period).ok();
    let levels: Vec<f64> = level_clustering(series.values(), 5, LevelOptions::for_agents(n))
        .into_iter()
        .map(|c| c.center)
        .collect();
    let peaks = peaks_in(
        &table.demands,
        &table.histories,
        m,
        default_peak_threshold(n, s),
        default_burn_in(m),
    );
    let edges: Vec<usize> = table
        .histories
        .iter()
        .zip(&table.minorities)
        .map(|(&h, a)| 2 * h as usize + a.bit() as usize)
        .collect();
    let euler = eulerian_window_fraction(&edges, m, default_burn_in(m)).ok();
    let out = json!({
        "steps": table.len(),
        "mean_demand": series.mean(),
        "parity_preserved": parity_preserved(&table.demands, n),
        "autocorr_argmax": autocorr.as_ref().and_then(|r| r.argmax()),
        "autocorr": autocorr.map(|r| r.r),
        "levels": levels,
        "peaks": {
            "threshold": peaks.threshold,
            "count": peaks.heights.len(),
            "frequency": peaks.frequency,
            "mean_height": peaks.mean_height(),
            "critical_history": peaks.critical_history,
            "alternation": peaks.alternation_rate(),
        },
        "euler_fraction": euler,
        "max_abs_utility": table.max_abs_utility(),
    });
    say(&serde_json::to_string_pretty(&out)?)?;
    Ok(ExitCode::SUCCESS)
}

fn predict(args: PredictArgs) -> Result<ExitCode> {
    let (n, m, s) = (args.agents, args.memory, args.strategies_per_agent);
    let mut out = json!({
        "agents": n,
        "memory": m,
        "strategies_per_agent": s,
        "period": 2u64 << m,
        "peak_frequency": format!("1/{}", 1u64 << m),
        "peak_height": expected_peak_height(n, s)?.to_string(),
        "expected_holders": expected_holders(n, m, s)?.to_string(),
        "best_half_probability": best_half_probability_proportional(m, s)?.to_string(),
    });
    if m <= 4 {
        let stats = best_action_stats(m, s)?;
        out["level_probabilities"] = json!(level_probabilities_step(m, s)?
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>());
        out["best_action"] = serde_json::to_value(&stats)?;
    }
    say(&serde_json::to_string_pretty(&out)?)?;
    Ok(ExitCode::SUCCESS)
}

/// Print to stdout; a closed pipe (`| head`) is not an error.
fn say(text: &str) -> Result<()> {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}").and_then(|_| stdout.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => say(text)?,
    }
    Ok(())
}

fn markov(args: MarkovArgs) -> Result<ExitCode> {
    let chain = enumerate_chain(args.memory, args.strategies_per_agent)?;
    let text = match args.format {
        Format::Dot => chain.to_dot(),
        Format::Json => {
            let pi = stationary(&chain).ok();
            let mut value = chain.to_json(pi.as_ref());
            value["recurrent_classes"] = json!(chain.recurrent_classes());
            value["expected_demand"] = json!(chain
                .states
                .iter()
                .map(
                    |x| expected_demand(x, args.memory, args.agents, args.strategies_per_agent)
                        .to_string()
                )
                .collect::<Vec<_>>());
            serde_json::to_string_pretty(&value)?
        }
    };
    emit(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn debruijn(args: DebruijnArgs) -> Result<ExitCode> {
    let graph = build_graph(args.memory)?;
    let text = match args.format {
        Format::Dot => graph.to_dot(),
        Format::Json => {
            let trails = if args.memory <= MAX_ENUMERATION_ORDER {
                Some(
                    euler_trails(&graph)?
                        .iter()
                        .map(|t| t.label(&graph))
                        .collect::<Vec<_>>(),
                )
            } else {
                None
            };
            let edges: Vec<_> = graph
                .edges()
                .iter()
                .map(|e| json!({"from": e.from, "to": e.to, "action": e.action.value()}))
                .collect();
            serde_json::to_string_pretty(&json!({
                "memory": args.memory,
                "nodes": graph.node_count(),
                "edges": edges,
                "euler_circuits": euler_circuit_count(&graph).to_string(),
                "euler_circuits_rooted": euler_circuit_count_rooted(&graph).to_string(),
                "trails": trails,
            }))?
        }
    };
    emit(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
