//! Command-line driver. [`run`] parses arguments, dispatches a subcommand and
//! maps the outcome to a process exit code: 0 on success, 1 for usage and
//! validation errors, 2 for I/O and format errors.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use schemaprobe::datamodel::{load_examples, load_spider_schemas, ProbeExample, SchemaCatalog};
use schemaprobe::error::{Error, ErrorClass, Result};
use schemaprobe::eval::{score_links, LinkMetrics};
use schemaprobe::geometry::Metric;
use schemaprobe::probe::{
    materialize_from_dump, normalize_minmax, probe_example, read_embedding_dump, threshold_adjacency,
    ReferenceEncoder, ReferenceEncoderSpec,
};
use schemaprobe::records::{read_jsonl, write_jsonl, LinkRecord, MatrixRecord};
use schemaprobe::render::{render_matrix, MatrixLabels, RenderFormat};
use schemaprobe::rulelink::{lexical_link, merge_graphs, MatchConfig};
use schemaprobe::selftest::{run_selftest, SelfTestConfig};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "schemaprobe", version, about = "Schema linking by masked-encoding probes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute raw relation matrices for every example.
    Probe(ProbeArgs),
    /// Normalize matrices and threshold them into probe links.
    Link(LinkArgs),
    /// Link question n-grams to schema names by string match.
    Baseline(BaselineArgs),
    /// Union two link files example by example.
    Merge(MergeArgs),
    /// Score predicted links against the examples' gold links.
    Eval(EvalArgs),
    /// Draw one normalized matrix as CSV, PGM or SVG.
    Render(RenderArgs),
    /// Run the end-to-end check on synthetic data with known links.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Args)]
struct Inputs {
    /// Examples, one JSON object per line.
    #[arg(long)]
    examples: PathBuf,
    /// Spider-style tables.json.
    #[arg(long)]
    schemas: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncoderKind {
    Reference,
    Dump,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Poincare,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Poincare => Metric::Poincare,
        }
    }
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum, default_value = "reference")]
    encoder: EncoderKind,
    /// Embedding dump, required with `--encoder dump`.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "poincare")]
    metric: MetricArg,
    /// Output matrices file (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    /// Reference encoder vector size.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Reference encoder seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct LinkArgs {
    #[arg(long)]
    matrices: PathBuf,
    /// Link every pair whose normalized score is at least this value.
    #[arg(long, allow_negative_numbers = true)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 5)]
    max_ngram: usize,
    /// Compare tokens without lowercasing the question.
    #[arg(long)]
    case_sensitive: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MergeArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Examples file whose gold links are the reference.
    #[arg(long)]
    gold_from_examples: PathBuf,
    #[arg(long)]
    schemas: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    report: ReportFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Pgm,
    Svg,
}

impl From<FormatArg> for RenderFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => RenderFormat::Csv,
            FormatArg::Pgm => RenderFormat::Pgm,
            FormatArg::Svg => RenderFormat::Svg,
        }
    }
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Matrices file (JSON Lines).
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    example_id: String,
    #[arg(long, value_enum)]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
    /// Label rows and columns with question tokens and schema names.
    #[arg(long, requires = "schemas")]
    examples: Option<PathBuf>,
    #[arg(long, requires = "examples")]
    schemas: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = SelfTestConfig::default().examples)]
    examples: usize,
    #[arg(long, default_value_t = SelfTestConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = SelfTestConfig::default().seed)]
    seed: u64,
}

pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Validation => 1,
        ErrorClass::Io => 2,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

enum CommandError {
    SelftestFailed,
    Core(Error),
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError::Core(e)
    }
}

type CmdResult = std::result::Result<(), CommandError>;

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Probe(a) => probe(a),
        Command::Link(a) => link(a),
        Command::Baseline(a) => baseline(a),
        Command::Merge(a) => merge(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render(a),
        Command::Selftest(a) => selftest(a),
    }
    .map(|()| 0)
    .or_else(|e| match e {
        CommandError::SelftestFailed => Ok(1),
        CommandError::Core(e) => Err(e),
    })
}

fn load_inputs(examples: &Path, schemas: &Path) -> Result<Vec<ProbeExample>> {
    let catalog = SchemaCatalog::new(load_spider_schemas(schemas)?)?;
    load_examples(examples, &catalog)
}

fn probe(a: ProbeArgs) -> CmdResult {
    let examples = load_inputs(&a.inputs.examples, &a.inputs.schemas)?;
    let metric = Metric::from(a.metric);
    let records: Vec<MatrixRecord> = match a.encoder {
        EncoderKind::Reference => {
            if a.dump.is_some() {
                return Err(Error::Validation("--dump is only used with --encoder dump".into()).into());
            }
            examples
                .par_iter()
                .map(|ex| {
                    let encoder = ReferenceEncoder::new(ReferenceEncoderSpec::from_gold(ex, a.dim, a.seed)?);
                    Ok(MatrixRecord::new(ex.example_id(), &probe_example(ex, &encoder, metric)?))
                })
                .collect::<Result<_>>()?
        }
        EncoderKind::Dump => {
            let path = a
                .dump
                .ok_or_else(|| Error::Validation("--encoder dump needs --dump PATH".into()))?;
            let sets = read_embedding_dump(&path)?;
            let mut by_id = HashMap::with_capacity(sets.len());
            for set in &sets {
                if by_id.insert(set.example_id(), set).is_some() {
                    return Err(Error::Validation(format!(
                        "dump {} holds example {:?} twice",
                        path.display(),
                        set.example_id()
                    ))
                    .into());
                }
            }
            examples
                .par_iter()
                .map(|ex| {
                    let set = by_id.get(ex.example_id()).ok_or_else(|| {
                        Error::Validation(format!("dump {} has no record for example {:?}", path.display(), ex.example_id()))
                    })?;
                    set.check_example(ex)?;
                    Ok(MatrixRecord::new(ex.example_id(), &materialize_from_dump(set, metric)?))
                })
                .collect::<Result<_>>()?
        }
    };
    write_jsonl(&a.out, &records)?;
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Validation(format!("--tau must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

fn link(a: LinkArgs) -> CmdResult {
    check_tau(a.tau)?;
    let matrices: Vec<MatrixRecord> = read_jsonl(&a.matrices)?;
    let links = matrices
        .par_iter()
        .map(|r| {
            let x = r.to_matrix()?;
            let xn = if x.is_normalized() { x } else { normalize_minmax(&x) };
            Ok(LinkRecord::new(&r.example_id, &threshold_adjacency(&xn, a.tau)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(&a.out, &links)?;
    Ok(())
}

fn baseline(a: BaselineArgs) -> CmdResult {
    let examples = load_inputs(&a.inputs.examples, &a.inputs.schemas)?;
    let config = MatchConfig::new(a.max_ngram, !a.case_sensitive)?;
    let links: Vec<LinkRecord> = examples
        .par_iter()
        .map(|ex| LinkRecord::new(ex.example_id(), &lexical_link(ex, &config)))
        .collect();
    write_jsonl(&a.out, &links)?;
    Ok(())
}

fn merge(a: MergeArgs) -> CmdResult {
    let left: Vec<LinkRecord> = read_jsonl(&a.a)?;
    let right: Vec<LinkRecord> = read_jsonl(&a.b)?;
    let by_id: HashMap<&str, &LinkRecord> = right.iter().map(|r| (r.example_id.as_str(), r)).collect();
    if by_id.len() != right.len() || left.len() != right.len() {
        return Err(Error::Validation(format!(
            "{} and {} must list the same examples once each",
            a.a.display(),
            a.b.display()
        ))
        .into());
    }
    let merged = left
        .par_iter()
        .map(|l| {
            let r = by_id
                .get(l.example_id.as_str())
                .ok_or_else(|| Error::Validation(format!("{} has no links for example {:?}", a.b.display(), l.example_id)))?;
            Ok(LinkRecord::new(&l.example_id, &merge_graphs(&l.to_graph()?, &r.to_graph()?)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(&a.out, &merged)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    examples: usize,
    #[serde(flatten)]
    metrics: LinkMetrics,
}

fn eval(a: EvalArgs) -> CmdResult {
    let examples = load_inputs(&a.gold_from_examples, &a.schemas)?;
    let by_id: HashMap<&str, &ProbeExample> = examples.iter().map(|e| (e.example_id(), e)).collect();
    let pred: Vec<LinkRecord> = read_jsonl(&a.pred)?;
    let scores = pred
        .par_iter()
        .map(|r| {
            let ex = by_id
                .get(r.example_id.as_str())
                .ok_or_else(|| Error::Validation(format!("predicted example {:?} is not in the examples file", r.example_id)))?;
            let gold = ex
                .gold_links()
                .ok_or_else(|| Error::Validation(format!("example {:?} has no gold links", r.example_id)))?;
            score_links(&r.to_graph()?, gold)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport {
        examples: scores.len(),
        metrics: scores.iter().sum(),
    };
    match a.report {
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
        ReportFormat::Text => {
            let m = &report.metrics;
            println!("examples: {}", report.examples);
            println!("tp={} fp={} fn={}", m.true_positives, m.false_positives, m.false_negatives);
            println!("precision = {:.3} recall = {:.3} F1 = {:.3}", m.precision, m.recall, m.f1);
        }
    }
    Ok(())
}

fn render(a: RenderArgs) -> CmdResult {
    let matrices: Vec<MatrixRecord> = read_jsonl(&a.matrix)?;
    let record = matrices
        .iter()
        .find(|r| r.example_id == a.example_id)
        .ok_or_else(|| Error::Validation(format!("{} has no matrix for example {:?}", a.matrix.display(), a.example_id)))?;
    let x = record.to_matrix()?;
    let xn = if x.is_normalized() { x } else { normalize_minmax(&x) };
    let labels = match (&a.examples, &a.schemas) {
        (Some(examples), Some(schemas)) => {
            let examples = load_inputs(examples, schemas)?;
            let ex = examples
                .iter()
                .find(|e| e.example_id() == a.example_id)
                .ok_or_else(|| Error::Validation(format!("example {:?} is not in the examples file", a.example_id)))?;
            MatrixLabels {
                rows: ex.question_tokens().to_vec(),
                cols: (0..ex.n_schema()).map(|j| ex.schema().item_label(j)).collect(),
            }
        }
        _ => MatrixLabels::positional(xn.rows(), xn.cols()),
    };
    render_matrix(&xn, &labels, a.format.into(), &a.out)?;
    Ok(())
}

fn selftest(a: SelftestArgs) -> CmdResult {
    let report = run_selftest(&SelfTestConfig {
        examples: a.examples,
        dim: a.dim,
        seed: a.seed,
    })?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CommandError::SelftestFailed)
    }
}
