use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uq_perceiver::harness::{
    emit_report, parse_reports_json, run_evaluate, run_train, sweep_ensemble, MetricsReport, ReportFormat, RunConfig,
};
use uq_perceiver::{Error, Result};

/// Train, evaluate and compare uncertainty-aware Perceiver classifiers.
#[derive(Parser)]
#[command(name = "uqp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured strategy and write checkpoints and a run log.
    Train(RunArgs),
    /// Score a trained run on the test split.
    Evaluate(EvalArgs),
    /// Score ensembles of the first 1..M members of a run.
    SweepEnsemble(EvalArgs),
    /// Merge JSON report files into one JSON or CSV file.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Any config key as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory to read (defaults to the config's out_dir).
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: String,
    /// Report file (defaults to report.<format> or sweep.<format> in the run directory).
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON report files to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    output: PathBuf,
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut rest = args.overrides.iter();
    while let Some(flag) = rest.next() {
        let Some(stripped) = flag.strip_prefix("--") else {
            return Err(Error::Usage(format!("unexpected argument {flag:?}")));
        };
        let (key, value) = match stripped.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = rest
                    .next()
                    .ok_or_else(|| Error::Usage(format!("flag --{stripped} needs a value")))?;
                (stripped.to_string(), v.clone())
            }
        };
        cfg.set(&key.replace('-', "_"), &value)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &args.out_dir {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summary(r: &MetricsReport) -> String {
    format!(
        "{} size={} seed={} accuracy={:.4} nll={:.4} ece={:.4} brier={:.4}",
        r.variant, r.ensemble_size, r.seed, r.accuracy, r.nll, r.ece, r.brier
    )
}

fn output_path(args: &EvalArgs, dir: &Path, stem: &str) -> PathBuf {
    args.output
        .clone()
        .unwrap_or_else(|| dir.join(format!("{stem}.{}", args.format)))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = load_config(&args)?;
            let out = run_train(&cfg)?;
            for p in &out.logs {
                if let Some(last) = p.log.steps.last() {
                    println!("{}: {} steps, final loss {:.6}", p.phase, last.step, last.loss);
                }
            }
            println!("wrote {} member(s) to {}", out.predictor.len(), out.dir.display());
        }
        Command::Evaluate(args) => {
            let cfg = load_config(&args.run)?;
            let format: ReportFormat = args.format.parse()?;
            let dir = args.run_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
            let report = run_evaluate(&cfg, &dir)?;
            let path = output_path(&args, &dir, "report");
            emit_report(std::slice::from_ref(&report), format, &path)?;
            println!("{}", summary(&report));
        }
        Command::SweepEnsemble(args) => {
            let cfg = load_config(&args.run)?;
            let format: ReportFormat = args.format.parse()?;
            let dir = args.run_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
            let reports = sweep_ensemble(&cfg, &dir)?;
            emit_report(&reports, format, &output_path(&args, &dir, "sweep"))?;
            for r in &reports {
                println!("{}", summary(r));
            }
        }
        Command::Report(args) => {
            let format: ReportFormat = args.format.parse()?;
            let mut all = Vec::new();
            for path in &args.inputs {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Usage(format!("reading {}: {e}", path.display())))?;
                all.extend(parse_reports_json(&text)?);
            }
            emit_report(&all, format, &args.output)?;
            println!("wrote {} report(s) to {}", all.len(), args.output.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        Error::Config(_) => 3,
        Error::Io { .. } => 4,
        Error::Format(_) => 5,
        Error::Compatibility(_) => 6,
        Error::Numeric(_) => 7,
        Error::Dimension(_) => 8,
        Error::Range(_) => 9,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
