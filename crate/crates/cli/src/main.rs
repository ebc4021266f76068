//! `ppm`: train, apply and benchmark outcome-prediction models on event logs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use ppm_core::bench::{run_benchmark, train_from_run, RunConfig};
use ppm_core::evaluation::{report_csv, report_svg, EvaluationReport};
use ppm_core::event_log::{parse_event_log, SchemaConfig};
use ppm_core::pipeline::{load_model, predict_online, save_model};
use ppm_core::synthetic::{generate_synthetic, write_synthetic, SyntheticParams};
use ppm_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ppm",
    version,
    about = "Outcome-oriented predictive process monitoring",
    disable_help_flag = true,
    disable_version_flag = true,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    help: HelpFlag,
    /// Print version.
    #[arg(long, action = ArgAction::Version)]
    version: Option<bool>,
}

/// Long-only `--help`, shared by every command.
#[derive(clap::Args)]
struct HelpFlag {
    /// Print help.
    #[arg(long, action = ArgAction::Help, global = true)]
    help: Option<bool>,
}

#[derive(Subcommand)]
#[command(disable_help_flag = true)]
enum Command {
    /// Write a seeded synthetic log, its labels, a schema and a run file.
    Generate(GenerateArgs),
    /// Train the run file's single method on the whole log.
    Train(TrainArgs),
    /// Score running cases from a partial-trace CSV.
    Predict(PredictArgs),
    /// Evaluate every method of the run file's grid.
    Benchmark(BenchmarkArgs),
    /// Combine JSON evaluation reports into one CSV, JSON or SVG file.
    Report(ReportArgs),
}

#[derive(clap::Args)]
struct GenerateArgs {
    /// Directory receiving log.csv, labels.csv, schema.toml and run.toml.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n_traces: usize,
    #[arg(long, default_value_t = 6)]
    alphabet_size: usize,
    #[arg(long, default_value_t = 8)]
    min_len: usize,
    #[arg(long, default_value_t = 20)]
    max_len: usize,
    /// Probability that a case contains the signal activity.
    #[arg(long, default_value_t = 0.5)]
    signal_probability: f64,
    /// Probability that a label is replaced by a fair coin flip.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Run file (TOML) whose grid names exactly one method.
    #[arg(long)]
    config: PathBuf,
    /// Output model file.
    #[arg(long)]
    model: PathBuf,
    /// Training summary (JSON); defaults to the model path with `.summary.json`.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Overrides the run file's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of running cases, one row per event so far.
    #[arg(long)]
    log: PathBuf,
    /// Column roles of the CSV (TOML).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(clap::Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    /// Grid cells evaluated concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the run file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the run file's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(clap::Args)]
struct ReportArgs {
    /// JSON reports written by `benchmark`.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let default_hook = panic::take_hook();
    panic::set_hook(Box::new(move |info| {
        eprintln!("internal error: the following is a bug");
        default_hook(info);
    }));
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli.command))) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Train(args) => train(args),
        Command::Predict(args) => predict(args),
        Command::Benchmark(args) => benchmark(args),
        Command::Report(args) => report(args),
    }
}

fn base_dir(config: &Path) -> &Path {
    config.parent().unwrap_or_else(|| Path::new("."))
}

fn read_run(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn generate(args: GenerateArgs) -> Result<ExitCode> {
    let params = SyntheticParams {
        n_traces: args.n_traces,
        alphabet_size: args.alphabet_size,
        min_len: args.min_len,
        max_len: args.max_len,
        signal_probability: args.signal_probability,
        noise: args.noise,
        seed: args.seed,
        ..Default::default()
    };
    let synth = generate_synthetic(&params)?;
    write_synthetic(&synth, &args.out_dir)?;
    let run = RunConfig {
        seed: args.seed,
        ..RunConfig::from_toml_str(GENERATED_RUN)?
    };
    let path = args.out_dir.join("run.toml");
    std::fs::write(&path, run.to_toml_string()).map_err(|e| io_error(&path, e))?;
    eprintln!("wrote {} cases to {}", synth.log.len(), args.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

const GENERATED_RUN: &str = r#"
log = "log.csv"
schema = "schema.toml"
trials = 3
[labeling]
kind = "label_file"
path = "labels.csv"
[grid]
bucketing = ["single"]
encoding = ["agg"]
classifier = ["rforest"]
"#;

fn train(args: TrainArgs) -> Result<ExitCode> {
    let cfg = read_run(&args.config, args.seed)?;
    let fitted = train_from_run(&cfg, base_dir(&args.config))?;
    let mut sink = create(&args.model)?;
    save_model(&fitted.model, &mut sink)?;
    sink.flush().map_err(|e| io_error(&args.model, e))?;

    let summary_path = args.summary.unwrap_or_else(|| args.model.with_extension("summary.json"));
    let summary = serde_json::json!({
        "model": fitted.model.summary(),
        "config": fitted.config,
        "offline_time_s": fitted.offline_time_s,
        "search": fitted.search,
    });
    let body = serde_json::to_string_pretty(&summary)?;
    std::fs::write(&summary_path, body + "\n").map_err(|e| io_error(&summary_path, e))?;

    let s = fitted.model.summary();
    eprintln!(
        "trained {} ({}) with {} bucket(s); model at {}, summary at {}",
        s.method,
        fitted.config.classifier.kind().name(),
        s.buckets.len(),
        args.model.display(),
        summary_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn predict(args: PredictArgs) -> Result<ExitCode> {
    let file = File::open(&args.model).map_err(|e| io_error(&args.model, e))?;
    let model = load_model(BufReader::new(file))?;
    let schema = SchemaConfig::from_path(&args.schema)?;
    let file = File::open(&args.log).map_err(|e| io_error(&args.log, e))?;
    let log = parse_event_log(BufReader::new(file), &schema)?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let write_err = |e| io_error(Path::new("<stdout>"), e);
    writeln!(out, "case_id,score").map_err(write_err)?;
    for trace in log.traces() {
        let score = predict_online(&model, trace)?;
        writeln!(out, "{},{score:.6}", trace.case_id()).map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;
    Ok(ExitCode::SUCCESS)
}

fn benchmark(args: BenchmarkArgs) -> Result<ExitCode> {
    let mut cfg = read_run(&args.config, args.seed)?;
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir.to_string_lossy().into_owned();
    }
    let outcome = run_benchmark(&cfg, base_dir(&args.config), args.jobs)?;
    for r in &outcome.reports {
        let auc = r.overall_weighted_auc.map_or("n/a".to_owned(), |a| format!("{a:.4}"));
        eprintln!("{:<20} {:<8} weighted AUC {auc}", r.method, r.classifier);
    }
    for s in &outcome.skipped {
        eprintln!("{:<20} {:<8} skipped: {}", s.method, s.classifier, s.reason);
    }
    eprintln!("reports in {}", outcome.output_dir.display());
    if outcome.reports.is_empty() {
        eprintln!("error: every grid cell failed");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let reports = args
        .input
        .iter()
        .map(|path| {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            serde_json::from_str::<EvaluationReport>(&text).map_err(Error::from)
        })
        .collect::<Result<Vec<_>>>()?;
    let body = match args.format {
        Format::Csv => report_csv(&reports),
        Format::Json => serde_json::to_string_pretty(&reports)? + "\n",
        Format::Svg => report_svg(&reports),
    };
    match args.out {
        Some(path) => std::fs::write(&path, body).map_err(|e| io_error(&path, e))?,
        None => print!("{body}"),
    }
    Ok(ExitCode::SUCCESS)
}
