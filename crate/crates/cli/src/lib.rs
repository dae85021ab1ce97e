//! The `mspn` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or schema error, 3 query
//! error (for instance conditioning on zero-probability evidence).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use mspn::analysis::{mi_graph, DEFAULT_GRID};
use mspn::data::{load_dataset, read_records, Schema};
use mspn::inference::{log_conditional, log_evaluate, log_likelihoods, mpe, sample, Evidence, VarState};
use mspn::leaves::LeafKind;
use mspn::model_file::{load_model, save_model};
use mspn::numerics::rng_from_seed;
use mspn::structure::{learn_mspn, validate, LearnConfig, Mspn};
use mspn::MspnError;

#[derive(Debug, Parser)]
#[command(name = "mspn", version, about = "Learn and query mixed sum-product networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LeafArg {
    Isotonic,
    Histogram,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a network from a CSV file and a JSON schema.
    Learn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Minimum rows needed to split.
        #[arg(long, default_value_t = 200)]
        eta: usize,
        /// Laplace smoothing per histogram bin.
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        /// RDC independence threshold.
        #[arg(long, default_value_t = 0.3)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = LeafArg::Isotonic)]
        leaf: LeafArg,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Per-row and mean log-likelihood of a CSV file.
    Loglik {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Log probability (density) of evidence, optionally conditional.
    Query {
        #[arg(long)]
        model: PathBuf,
        /// Observed values, `name=value,...`.
        #[arg(long, default_value = "")]
        observe: String,
        /// Variables to sum out, `name,...`. Unlisted unobserved variables
        /// are marginalized as well.
        #[arg(long, default_value = "")]
        marginalize: String,
        /// Conditioning evidence, `name=value,...`.
        #[arg(long)]
        given: Option<String>,
    },
    /// Most probable explanation of the unobserved variables.
    Mpe {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "")]
        given: String,
    },
    /// Draw samples as CSV on stdout.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(short = 'n', default_value_t = 100)]
        n: usize,
        #[arg(long, default_value = "")]
        given: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Pairwise mutual information graph.
    Mi {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dot: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        /// Minimum normalized MI for an edge to be exported.
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
    },
    /// Check the structural validity of a model file.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Model(MspnError),
}

impl From<MspnError> for Failure {
    fn from(e: MspnError) -> Self {
        Failure::Model(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Model(MspnError::Config(_)) => 1,
            Failure::Model(MspnError::Query(_) | MspnError::Conditioning) => 3,
            Failure::Model(_) => 2,
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Runs the tool with process stdout and stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the tool writing to the given streams; returns the exit code.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(err, "{e}");
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => 1,
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = match &f {
                Failure::Usage(msg) => writeln!(err, "error: {msg}"),
                Failure::Model(e) => writeln!(err, "error: {e}"),
            };
            f.exit_code()
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Model(MspnError::Io(e))
}

fn execute(command: Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Learn { data, schema, out: path, eta, delta, alpha, leaf, seed } => {
            let config = LearnConfig {
                eta,
                delta,
                alpha,
                leaf_kind: match leaf {
                    LeafArg::Isotonic => LeafKind::Isotonic,
                    LeafArg::Histogram => LeafKind::Histogram,
                },
                seed,
                ..LearnConfig::default()
            };
            config.check()?;
            let schema = Schema::from_json_file(&schema)?;
            let dataset = load_dataset(&data, &schema)?;
            let model = learn_mspn(&dataset, &config)?;
            save_model(&model, &path)?;
            let (sums, products, leaves) = model.count_kinds();
            writeln!(
                out,
                "learned {} nodes ({sums} sum, {products} product, {leaves} leaf), depth {}, from {} rows; wrote {}",
                model.n_nodes(),
                model.depth(),
                dataset.n_rows(),
                path.display()
            )
            .map_err(io)?;
        }
        Command::Loglik { model, data } => {
            let model = load_model(&model)?;
            let rows = read_records(&data, model.schema(), true)?;
            let values = log_likelihoods(&model, &rows)?;
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            writeln!(out, "row,loglik").map_err(io)?;
            for (r, v) in values.iter().enumerate() {
                writeln!(out, "{},{v:?}", r + 1).map_err(io)?;
            }
            writeln!(out, "mean,{mean:?}").map_err(io)?;
        }
        Command::Query { model, observe, marginalize, given } => {
            let model = load_model(&model)?;
            let query = parse_evidence(&model, &observe)?;
            for name in split_list(&marginalize) {
                let var = var_index(&model, name)?;
                if query.observed(var).is_some() {
                    return Err(MspnError::Query(format!("`{name}` is both observed and marginalized")).into());
                }
            }
            let value = match given {
                Some(g) => log_conditional(&model, &query, &parse_evidence(&model, &g)?)?,
                None => log_evaluate(&model, &query)?,
            };
            writeln!(out, "{value:?}").map_err(io)?;
        }
        Command::Mpe { model, given } => {
            let model = load_model(&model)?;
            let evidence = parse_evidence(&model, &given)?;
            let (assignment, value) = mpe(&model, &evidence)?;
            for (var, &v) in assignment.values().iter().enumerate() {
                writeln!(out, "{}={}", model.schema().name(var), model.schema().format_value(var, v)).map_err(io)?;
            }
            writeln!(out, "log_value={value:?}").map_err(io)?;
        }
        Command::Sample { model, n, given, seed } => {
            let model = load_model(&model)?;
            let evidence = parse_evidence(&model, &given)?;
            let mut rng = rng_from_seed(seed);
            let schema = model.schema();
            let header: Vec<&str> = (0..model.n_vars()).map(|v| schema.name(v)).collect();
            writeln!(out, "{}", header.join(",")).map_err(io)?;
            for _ in 0..n {
                let a = sample(&model, &evidence, &mut rng)?;
                let cells: Vec<String> = a.values().iter().enumerate().map(|(v, &x)| csv_cell(&schema.format_value(v, x))).collect();
                writeln!(out, "{}", cells.join(",")).map_err(io)?;
            }
        }
        Command::Mi { model, dot, json, grid, threshold } => {
            if grid == 0 {
                return Err(Failure::Usage("--grid must be positive".into()));
            }
            let model = load_model(&model)?;
            let graph = mi_graph(&model, grid, threshold)?;
            if let Some(path) = dot {
                std::fs::write(path, graph.to_dot()).map_err(io)?;
            }
            if let Some(path) = json {
                std::fs::write(path, graph.to_json()).map_err(io)?;
            }
            writeln!(out, "a,b,mi,nmi").map_err(io)?;
            for e in graph.edges() {
                writeln!(out, "{},{},{:?},{:?}", graph.nodes[e.i], graph.nodes[e.j], e.mi, e.nmi).map_err(io)?;
            }
        }
        Command::Validate { model } => {
            let model = load_model(&model)?;
            let report = validate(&model);
            write!(out, "{report}").map_err(io)?;
            if !report.is_valid() {
                return Err(MspnError::Format("model violates structural constraints".into()).into());
            }
        }
    }
    Ok(())
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_list(text: &str) -> impl Iterator<Item = &str> {
    text.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn var_index(model: &Mspn, name: &str) -> std::result::Result<usize, MspnError> {
    model
        .schema()
        .index_of(name)
        .ok_or_else(|| MspnError::Query(format!("unknown variable `{name}`")))
}

/// Parses `name=value,...` against the model schema; categorical values
/// are given by name.
fn parse_evidence(model: &Mspn, text: &str) -> std::result::Result<Evidence, MspnError> {
    let mut evidence = Evidence::marginal(model.n_vars());
    for item in split_list(text) {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| MspnError::Query(format!("expected name=value, got `{item}`")))?;
        let var = var_index(model, name.trim())?;
        if evidence.observed(var).is_some() {
            return Err(MspnError::Query(format!("`{}` given twice", name.trim())));
        }
        let v = model
            .schema()
            .parse_cell(var, value, false)
            .map_err(|m| MspnError::Query(format!("{}: {m}", name.trim())))?;
        evidence.set(var, VarState::Observed(v));
    }
    Ok(evidence)
}
