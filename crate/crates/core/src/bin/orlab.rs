use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use orlab::analysis::{verify_suite, CheckStatus, VerifyOptions};
use orlab::harness::{
    accuracy, attack_table, calibration_rows_table, emit_report, load_dataset, load_report, prepare_model,
    run_experiment, verify_table, write_tables, write_timing, CalibrationConfig, Cell, ExperimentConfig, Format,
    HarnessError, Table, SCHEMA_VERSION,
};
use orlab::nn::save_checkpoint;

#[derive(Parser)]
#[command(name = "orlab", version, about = "Output randomization lab: train, calibrate, attack, verify, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Subcommand)]
enum Command {
    /// Train (or tune and train) the model of an experiment config and save a checkpoint.
    Train,
    /// Variance calibration table over (delta, K).
    Calibrate,
    /// Run the attacks of an experiment config and write a report.
    Attack,
    /// Numerical checks of the analysis module.
    Verify,
    /// Re-render a saved report.json.
    Report {
        /// Defaults to `<out>/report.json`.
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    JsonLines,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::JsonLines => Format::JsonLines,
            FormatArg::Text => Format::Text,
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

/// Reads a small TOML file with a `schema_version` key into `T`.
fn load_versioned<T: DeserializeOwned>(path: &Path) -> Result<(T, Option<u64>), Failure> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string()).map_err(config_err)?;
    let mut table: toml::Table = text.parse().with_context(|| path.display().to_string()).map_err(config_err)?;
    match table.remove("schema_version") {
        Some(toml::Value::Integer(v)) if v == SCHEMA_VERSION as i64 => {}
        other => {
            return Err(config_err(anyhow!(
                "{}: schema_version must be {SCHEMA_VERSION}, got {other:?}",
                path.display()
            )))
        }
    }
    let seed = match table.remove("seed") {
        Some(toml::Value::Integer(s)) if s >= 0 => Some(s as u64),
        None => None,
        Some(v) => return Err(config_err(anyhow!("{}: seed must be a nonnegative integer, got {v}", path.display()))),
    };
    let value = toml::Value::Table(table).try_into().with_context(|| path.display().to_string()).map_err(config_err)?;
    Ok((value, seed))
}

fn experiment_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| config_err(anyhow!("--config is required")))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_table(t: &Table) {
    print!("{}", t.render(Format::Text));
}

fn train_cmd(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = experiment_config(cli)?;
    if let Some(s) = cli.seed {
        cfg.model.train.seed = s;
    }
    cfg.model.checkpoint = None;
    let dataset = load_dataset(&cfg.dataset)?;
    let (model, log, summary, tuning) = prepare_model(&dataset, &cfg.model)?;
    std::fs::create_dir_all(&cli.out).map_err(runtime)?;
    let ckpt = cli.out.join("model.ckpt");
    save_checkpoint(&model, &ckpt).map_err(runtime)?;
    let mut info = Table::new("train_summary", &["key", "value"]);
    info.push(vec!["checkpoint".into(), ckpt.display().to_string().into()]);
    info.push(vec!["params".into(), summary.params.into()]);
    info.push(vec!["or_sigma".into(), summary.or_sigma.into()]);
    info.push(vec!["train_accuracy".into(), accuracy(&model, &dataset.train)?.into()]);
    info.push(vec!["test_accuracy".into(), accuracy(&model, &dataset.test)?.into()]);
    for t in &tuning {
        let key = format!("tuning_sigma={}_val_robust_accuracy", orlab::numfmt::g6(t.sigma));
        info.push(vec![key.into(), t.val_robust_accuracy.into()]);
    }
    let mut log_table = Table::new("train_log", &["iteration", "loss"]);
    for e in log.iter().flat_map(|l| &l.entries) {
        log_table.push(vec![e.iteration.into(), e.loss.into()]);
    }
    write_tables(&cli.out, &[info.clone(), log_table], cli.format.into())?;
    print_table(&info);
    Ok(())
}

fn calibrate_cmd(cli: &Cli) -> Result<(), Failure> {
    let (cfg, seed) = match &cli.config {
        Some(p) => load_versioned::<CalibrationConfig>(p)?,
        None => (CalibrationConfig::default(), None),
    };
    let seed = cli.seed.or(seed).unwrap_or(0);
    cfg.validate()?;
    let rows = orlab::harness::calibration_table(&cfg, seed)?;
    let table = calibration_rows_table(&rows);
    write_tables(&cli.out, std::slice::from_ref(&table), cli.format.into())?;
    print_table(&table);
    Ok(())
}

fn attack_cmd(cli: &Cli) -> Result<(), Failure> {
    let cfg = experiment_config(cli)?;
    let (report, timing) = run_experiment(&cfg)?;
    emit_report(&report, &cli.out, cli.format.into())?;
    write_timing(&timing, &cli.out)?;
    print_table(&attack_table(&report));
    for e in &report.errors {
        eprintln!("error: {e}");
    }
    Ok(())
}

fn verify_cmd(cli: &Cli) -> Result<(), Failure> {
    let (mut opts, seed) = match &cli.config {
        Some(p) => load_versioned::<VerifyOptions>(p)?,
        None => (VerifyOptions::default(), None),
    };
    if let Some(s) = cli.seed.or(seed) {
        opts.seed = s;
    }
    let rows = verify_suite(&opts).map_err(runtime)?;
    let table = verify_table(&rows);
    write_tables(&cli.out, std::slice::from_ref(&table), cli.format.into())?;
    if !matches!(cli.format, FormatArg::Csv) {
        write_tables(&cli.out, std::slice::from_ref(&table), Format::Csv)?;
    }
    print_table(&table);
    let failed: Vec<&str> = rows.iter().filter(|r| r.status == CheckStatus::Fail).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime(anyhow!("failed checks: {}", failed.join(", "))))
    }
}

fn report_cmd(cli: &Cli, path: Option<&Path>) -> Result<(), Failure> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| cli.out.join("report.json"));
    let report = load_report(&path)?;
    emit_report(&report, &cli.out, cli.format.into())?;
    let mut t = attack_table(&report);
    if t.rows.is_empty() {
        t = Table::new("attacks", &["note"]);
        t.push(vec![Cell::Text("no attacks in report".into())]);
    }
    print_table(&t);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train => train_cmd(&cli),
        Command::Calibrate => calibrate_cmd(&cli),
        Command::Attack => attack_cmd(&cli),
        Command::Verify => verify_cmd(&cli),
        Command::Report { report } => report_cmd(&cli, report.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
