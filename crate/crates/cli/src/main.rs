//! surety — evaluate, calibrate, and monitor ML models from prediction
//! logs.
//!
//! Exit codes: 0 success (for `evaluate`: deployable), 1 a deployment
//! gate failed, 2 execution or configuration error.

mod adapters;
mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use surety::record::PayloadKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    JsonLines,
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemaArg {
    Classification,
    Gaussian,
    Detections,
    Ensemble,
}

impl From<SchemaArg> for PayloadKind {
    fn from(s: SchemaArg) -> PayloadKind {
        match s {
            SchemaArg::Classification => PayloadKind::Classification,
            SchemaArg::Gaussian => PayloadKind::Gaussian,
            SchemaArg::Detections => PayloadKind::Detections,
            SchemaArg::Ensemble => PayloadKind::Ensemble,
        }
    }
}

#[derive(Parser)]
#[command(name = "surety", version, about = "Evaluate, calibrate, and monitor ML models from prediction logs")]
struct Cli {
    /// Seed overriding whatever the config or spec carries.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output format for tabular results.
    #[arg(long, global = true, value_enum, default_value = "json-lines")]
    format: OutputFormat,
    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Suppress progress chatter on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Run a full suite config: test cases, gates, calibration, monitors,
    /// shift and adversarial tasks. Exit 0 iff deployable.
    Evaluate {
        /// Path to the run configuration (JSON).
        config: PathBuf,
        /// Worker threads for test-case execution.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Fit a temperature on a classification log and report ECE before
    /// and after.
    Calibrate {
        log: PathBuf,
        /// Calibration method; temperature scaling is the only one built in.
        #[arg(long, default_value = "temperature")]
        method: String,
    },
    /// Replay a log or metric stream through monitors, appending alarms
    /// to the event log.
    Monitor {
        /// Monitor definition file (one JSON object or a list).
        spec: PathBuf,
        /// Prediction log to derive the metric stream from.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Raw metric stream file (one {"index","value"} per line).
        #[arg(long)]
        stream: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "classification")]
        schema: SchemaArg,
        /// Event log to append alarms to.
        #[arg(long, default_value = "events.jsonl")]
        event_log: PathBuf,
    },
    /// Compare a source log against a target log: label-shift estimation,
    /// importance weights, or kNN OOD scoring.
    Shift {
        source: PathBuf,
        target: PathBuf,
        #[arg(long, default_value = "label-shift")]
        task: String,
        #[arg(long, value_enum, default_value = "classification")]
        schema: SchemaArg,
        /// Neighbor count for the ood-knn task.
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Generate data from a known distribution, train the toy linear
    /// model, and write its prediction log.
    Simulate {
        /// Generator spec (JSON: generator, optional shift, split sizes).
        spec: PathBuf,
        /// Where to write the prediction log.
        #[arg(long, default_value = "simulated.jsonl")]
        out: PathBuf,
        /// Also save the trained model here (JSON).
        #[arg(long)]
        model_out: Option<PathBuf>,
        /// Override the spec's evaluation-split size.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Estimate adversarial risk over a log through a black-box model
    /// adapter.
    Advtest {
        log: PathBuf,
        /// Perturbation spec (JSON: perturbation, loss, budget).
        spec: PathBuf,
        /// Model adapter: linear:<path> or exec:<command>.
        #[arg(long)]
        model: String,
        #[arg(long, value_enum, default_value = "gaussian")]
        schema: SchemaArg,
        /// Query budget per instance (default 100 + 2d).
        #[arg(long)]
        budget: Option<usize>,
        /// Attack only the first N records.
        #[arg(long)]
        max_instances: Option<usize>,
    },
    /// Render a stored run report as markdown.
    Report { report: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_seed = cli.seed.unwrap_or(42);
    let result = match &cli.command {
        CliCommand::Evaluate { config, threads } => commands::evaluate(
            config,
            cli.output.as_deref(),
            cli.seed,
            *threads,
            cli.quiet,
        ),
        CliCommand::Calibrate { log, method } => {
            if method != "temperature" {
                Err(anyhow::anyhow!(
                    "unknown calibration method \"{method}\" (temperature is built in)"
                ))
            } else {
                commands::calibrate(log, cli.output.as_deref(), cli.format, cli.quiet)
            }
        }
        CliCommand::Monitor {
            spec,
            log,
            stream,
            schema,
            event_log,
        } => commands::monitor_cmd(
            log.as_deref(),
            (*schema).into(),
            stream.as_deref(),
            spec,
            event_log,
            cli.quiet,
        ),
        CliCommand::Shift {
            source,
            target,
            task,
            schema,
            k,
        } => commands::shift_cmd(
            source,
            target,
            (*schema).into(),
            task,
            *k,
            cli.output.as_deref(),
            default_seed,
            cli.format,
            cli.quiet,
        ),
        CliCommand::Simulate {
            spec,
            out,
            model_out,
            n,
        } => commands::simulate(spec, *n, default_seed, out, model_out.as_deref(), cli.quiet),
        CliCommand::Advtest {
            log,
            spec,
            model,
            schema,
            budget,
            max_instances,
        } => commands::advtest(
            log,
            (*schema).into(),
            spec,
            model,
            *budget,
            *max_instances,
            default_seed,
            cli.output.as_deref(),
            cli.quiet,
        ),
        CliCommand::Report { report } => {
            commands::render_report(report, cli.output.as_deref(), cli.quiet)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::EXIT_ERROR)
        }
    }
}
