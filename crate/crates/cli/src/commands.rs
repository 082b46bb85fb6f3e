//! Argument definitions and the `subgraph`, `relalg`, `experiment` and
//! `generate` commands.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use recmech::lp::SequenceError;
use recmech::mechanism::{release, MechanismError, MechanismParams, MechanismTrace, NoiseSource};
use recmech::reference::ReferenceError;
use recmech::subgraph::{
    count_pipeline, generate_gnp, load_graph, Pattern, PrivacyMode, SubgraphError, DEFAULT_MATCH_LIMIT,
};
use recmech::{LinearQuery, RelationError};
use thiserror::Error;

use crate::experiment::{parse_config, run_experiment, ExperimentRow, CSV_HEADER};
use crate::relalg::{bind, execute, parse_relalg, RelalgError};

pub const ZERO_NOISE_WARNING: &str = "WARNING: output is NOT differentially private";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Capacity(String),
    #[error("{0}")]
    Internal(String),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Data(_) => 2,
            CliError::Capacity(_) => 3,
            CliError::Internal(_) | CliError::Output(_) => 1,
        }
    }
}

impl From<MechanismError> for CliError {
    fn from(e: MechanismError) -> Self {
        match &e {
            MechanismError::InvalidParam { .. } => CliError::Usage(e.to_string()),
            MechanismError::Reference(ReferenceError::Capacity { .. }) => CliError::Capacity(e.to_string()),
            MechanismError::Relation(_) | MechanismError::Sequence(SequenceError::Relation(_)) => {
                CliError::Data(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<SubgraphError> for CliError {
    fn from(e: SubgraphError) -> Self {
        match e {
            SubgraphError::Capacity { .. } => CliError::Capacity(e.to_string()),
            SubgraphError::Mechanism(m) => m.into(),
            SubgraphError::Pattern(_) | SubgraphError::Generator(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RelalgError> for CliError {
    fn from(e: RelalgError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RelationError> for CliError {
    fn from(e: RelationError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "recmech", version, about = "Differentially private counts over graphs and annotated relations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Release the number of pattern occurrences in a graph.
    Subgraph(SubgraphArgs),
    /// Release a linear statistic of a relational-algebra query.
    Relalg(RelalgArgs),
    /// Run the error/runtime experiment described by a config file.
    Experiment(ExperimentArgs),
    /// Print a G(n, p) random graph as an edge list.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MechanismArgs {
    /// Total privacy budget.
    #[arg(long)]
    pub epsilon: f64,
    /// Budget for the noise on Δ [default: epsilon/2].
    #[arg(long)]
    pub epsilon1: Option<f64>,
    /// Budget for the noise on X [default: epsilon/2].
    #[arg(long)]
    pub epsilon2: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// [default: epsilon/5]
    #[arg(long)]
    pub beta: Option<f64>,
    /// [default: 1 for node privacy, 0.5 otherwise]
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also print the true answer and the universal empirical sensitivity.
    #[arg(long)]
    pub debug: bool,
    /// Replace every Laplace draw by 0.
    #[arg(long)]
    pub zero_noise: bool,
}

impl MechanismArgs {
    pub fn params(&self, default_mu: f64) -> MechanismParams {
        let mut p = MechanismParams::from_epsilon(self.epsilon);
        p.epsilon1 = self.epsilon1.unwrap_or(p.epsilon1);
        p.epsilon2 = self.epsilon2.unwrap_or(p.epsilon2);
        p.beta = self.beta.unwrap_or(p.beta);
        p.mu = self.mu.unwrap_or(default_mu);
        p.theta = self.theta;
        p
    }

    fn noise(&self, err: &mut dyn Write) -> Result<NoiseSource, CliError> {
        if self.zero_noise {
            writeln!(err, "{ZERO_NOISE_WARNING}")?;
            Ok(NoiseSource::zero())
        } else {
            Ok(NoiseSource::new(self.seed, 0))
        }
    }
}

pub fn default_mu(mode: PrivacyMode) -> f64 {
    match mode {
        PrivacyMode::Node => 1.0,
        PrivacyMode::Edge => 0.5,
    }
}

#[derive(Debug, Clone, Args)]
pub struct SubgraphArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// triangle, star:K, ktriangle:K or file:PATH (an edge-list pattern).
    #[arg(long)]
    pub pattern: String,
    #[arg(long, value_parser = clap::value_parser!(PrivacyMode))]
    pub privacy: PrivacyMode,
    #[arg(long, default_value_t = DEFAULT_MATCH_LIMIT)]
    pub max_matches: usize,
    #[command(flatten)]
    pub mechanism: MechanismArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RelalgArgs {
    /// Directory of `<table>.tsv` files.
    #[arg(long)]
    pub tables: PathBuf,
    /// File holding the query.
    #[arg(long)]
    pub query: PathBuf,
    /// count or column:NAME.
    #[arg(long, default_value = "count")]
    pub weight: String,
    #[command(flatten)]
    pub mechanism: MechanismArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Kv,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Kv)]
    pub format: Format,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub avgdeg: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn parse_pattern(spec: &str) -> Result<Pattern, CliError> {
    if let Some(path) = spec.strip_prefix("file:") {
        let (g, _) = load_graph(Path::new(path))?;
        let p = Pattern::Custom(g);
        p.validate()?;
        Ok(p)
    } else {
        Ok(spec.parse()?)
    }
}

pub fn parse_weight(spec: &str) -> Result<LinearQuery, CliError> {
    match spec.split_once(':') {
        None if spec == "count" => Ok(LinearQuery::Count),
        Some(("column", name)) if !name.is_empty() => Ok(LinearQuery::Column(name.to_string())),
        _ => Err(CliError::Usage(format!("weight must be count or column:NAME, got {spec:?}"))),
    }
}

fn emit(trace: &MechanismTrace, debug: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    writeln!(out, "{}", trace.to_record(debug))?;
    if debug {
        for (name, values) in [("H", &trace.h_values), ("G", &trace.g_values)] {
            let parts: Vec<String> = values.iter().map(|(i, v)| format!("{i}:{}", recmech::mechanism::num(*v))).collect();
            writeln!(err, "{name} {}", parts.join(" "))?;
        }
    }
    Ok(())
}

pub fn run_subgraph(args: &SubgraphArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let pattern = parse_pattern(&args.pattern)?;
    let (graph, report) = load_graph(&args.graph)?;
    if report.self_loops > 0 {
        writeln!(err, "ignored {} self-loop(s)", report.self_loops)?;
    }
    let m = &args.mechanism;
    let params = m.params(default_mu(args.privacy));
    params.validate()?;
    let mut ns = m.noise(err)?;
    let (_, trace) = count_pipeline(&graph, &pattern, args.privacy, &params, &mut ns, args.max_matches)?;
    emit(&trace, m.debug, out, err)
}

pub fn run_relalg(args: &RelalgArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let q = parse_weight(&args.weight)?;
    let text = std::fs::read_to_string(&args.query)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.query.display())))?;
    let query = parse_relalg(&text)?;
    let tables = bind(&query, &args.tables)?;
    let r = execute(&query, &tables)?;
    let m = &args.mechanism;
    let params = m.params(0.5);
    params.validate()?;
    let mut ns = m.noise(err)?;
    let (_, trace) = release(&r, &q, &params, &mut ns)?;
    emit(&trace, m.debug, out, err)
}

pub fn format_rows(rows: &[ExperimentRow], format: Format) -> String {
    let mut s = String::new();
    if format == Format::Csv {
        s.push_str(CSV_HEADER);
        s.push('\n');
    }
    for row in rows {
        s.push_str(&match format {
            Format::Csv => row.to_csv(),
            Format::Kv => row.to_record(),
        });
        s.push('\n');
    }
    s
}

pub fn run_experiment_command(
    args: &ExperimentArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("{}: {e}", args.config.display())))?;
    let cfg = parse_config(&text)?;
    if cfg.zero_noise {
        writeln!(err, "{ZERO_NOISE_WARNING}")?;
    }
    let rows = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?
            .install(|| run_experiment(&cfg))?,
        None => run_experiment(&cfg)?,
    };
    for row in rows.iter().filter(|r| r.excluded > 0) {
        writeln!(
            err,
            "n={} avgdeg={} pattern={} privacy={} epsilon={}: excluded {} run(s) with true answer 0",
            row.n, row.avgdeg, row.pattern, row.privacy, row.epsilon, row.excluded
        )?;
    }
    out.write_all(format_rows(&rows, args.format).as_bytes())?;
    Ok(())
}

pub fn run_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let g = generate_gnp(args.n, args.avgdeg, args.seed)?;
    out.write_all(g.to_edge_list().as_bytes())?;
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Subgraph(a) => run_subgraph(a, out, err),
        Command::Relalg(a) => run_relalg(a, out, err),
        Command::Experiment(a) => run_experiment_command(a, out, err),
        Command::Generate(a) => run_generate(a, out),
    }
}
