use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use efcml::harness::{load_config, run_interleaved, write_outputs, AlMode, Grid, Method, RunSpec};
use efcml::ingest::{load_arff, load_csv, CsvOptions, LabelSpec};
use efcml::{Dataset, Error, LearnConfig, Result};

#[derive(Parser)]
#[command(name = "efcml", version, about = "Evolving multi-label fuzzy classification on data streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-search on the initial batch, then interleaved test-then-train over the stream.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// ARFF or CSV data file.
    #[arg(long)]
    data: PathBuf,
    /// MULAN XML label specification for ARFF input.
    #[arg(long, conflicts_with = "csv_labels")]
    labels_xml: Option<PathBuf>,
    /// Number of label columns for CSV input.
    #[arg(long)]
    csv_labels: Option<usize>,
    /// CSV input has a header row.
    #[arg(long)]
    csv_header: bool,
    /// CSV label columns come first instead of last.
    #[arg(long)]
    labels_first: bool,
    #[arg(long, default_value = "efcml", value_parser = parse_method)]
    method: Method,
    /// Fraction of samples used as the initial batch.
    #[arg(long, default_value_t = 0.25)]
    split: f64,
    #[arg(long, default_value = "off", value_parser = parse_al)]
    al: AlMode,
    #[arg(long, default_value_t = 1.0)]
    budget: f64,
    /// TOML or JSON file with `alpha`, `beta` and `vigilance` lists.
    #[arg(long)]
    grid_file: Option<PathBuf>,
    /// TOML or JSON file with learner settings outside the grid.
    #[arg(long)]
    config_file: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Record wall-clock update times in the trend file.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_al(s: &str) -> std::result::Result<AlMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_data(args: &RunArgs) -> Result<Dataset> {
    match (&args.labels_xml, args.csv_labels) {
        (Some(xml), _) => load_arff(&args.data, &LabelSpec::Xml(xml.clone())),
        (None, Some(k)) => load_csv(
            &args.data,
            CsvOptions {
                num_labels: k,
                labels_at_end: !args.labels_first,
                has_header: args.csv_header,
            },
        ),
        (None, None) => Err(Error::InvalidConfig(
            "either --labels-xml or --csv-labels is required".into(),
        )),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let data = load_data(&args)?;
    let grid = match &args.grid_file {
        Some(path) => Grid::from_file(path)?,
        None => Grid::default(),
    };
    let base = match &args.config_file {
        Some(path) => load_config(path)?,
        None => LearnConfig::default(),
    };
    let spec = RunSpec {
        method: args.method,
        split_fraction: args.split,
        grid,
        al_mode: args.al,
        budget: args.budget,
        seed: args.seed,
        folds: args.folds,
        timing: args.timing,
        base,
    };
    let outcome = run_interleaved(&spec, &data)?;
    write_outputs(&outcome, &args.out)?;
    if let Some(e) = outcome.failure {
        return Err(e);
    }
    if let Some(last) = outcome.final_point() {
        println!(
            "{}: n={} pa={:.4} ap={:.4} rules={} merges={} selected={:.3}",
            spec.method.name(),
            last.n,
            last.pa,
            last.ap,
            last.rules,
            outcome.merges,
            last.selected_fraction
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
