use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drawering::data::{
    fit_encoders, gen_synthetic, load_csv, synthetic_schema, EncodedDataset, SplitSpec, SynthKind,
};
use drawering::drawers::validate_occupancy;
use drawering::harness::{
    analyze_head, compare, emit_report, fit_drawers, train_model, ExperimentConfig, ModelBundle,
    ReportFormat,
};
use drawering::trainer::StepLog;
use drawering::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "drawer",
    version,
    about = "Train and compare regression networks with drawer heads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and save it with its encoders.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Where to write the model bundle (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Write per-step statistics here as NDJSON.
        #[arg(long)]
        step_log: Option<PathBuf>,
    },
    /// Paired multi-seed comparison of the plain and extended models.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Runs per variant.
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "json")]
        format: ReportFormat,
    },
    /// Auxiliary-head outputs per row, with each row's true drawer.
    AnalyzeHead {
        /// Model bundle written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Write a synthetic dataset and its schema.
    MakeSynth {
        #[arg(long, default_value = "heavy-tail")]
        kind: SynthKind,
        #[arg(long, default_value_t = 5000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Also write the matching schema as JSON.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
    /// Fit drawers on the training split and report their occupancy.
    ValidateDrawers {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_config_error() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: 2,
            message: format!("{}: {e}", path.display()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Train {
            config,
            data,
            out,
            seed,
            step_log,
        } => train(&config, &data, &out, seed, step_log.as_deref()),
        Command::Compare {
            config,
            data,
            out,
            seeds,
            jobs,
            format,
        } => {
            let (cfg, encoded, splits) = prepare(&config, &data)?;
            if seeds == 0 {
                return Err(Failure::config("--seeds must be at least 1"));
            }
            let report = compare(
                &cfg.train.original(),
                &cfg.train,
                seeds,
                &encoded,
                &splits,
                jobs,
            )?;
            emit_report(&report, &out, format)?;
            for e in report.errors() {
                log::error!(
                    "seed {}: {}",
                    e.seed,
                    e.error.as_deref().unwrap_or_default()
                );
            }
            if let Some(imp) = &report.test_improvement {
                println!(
                    "test improvement: min {:+.2}%, all mean {:+.2}%",
                    100.0 * imp.min,
                    100.0 * imp.all_mean
                );
            }
            println!(
                "extended train score >= original in {} of {} paired runs",
                report.train_not_lower, report.paired_runs
            );
            Ok(())
        }
        Command::AnalyzeHead {
            model,
            data,
            out,
            format,
        } => {
            let bundle = ModelBundle::load(&model).map_err(|e| Failure::config(e.to_string()))?;
            let drawers = bundle
                .drawers
                .clone()
                .ok_or_else(|| Failure::config("model was trained without an auxiliary head"))?;
            let table = load_csv(&data, &bundle.encoder.schema)
                .map_err(|e| Failure::config(e.to_string()))?;
            let encoded = bundle
                .encoder
                .transform(&table)
                .map_err(|e| Failure::config(e.to_string()))?;
            let rows: Vec<usize> = (0..encoded.n_rows()).collect();
            let analysis = analyze_head(&bundle.model()?, &encoded, &rows, &drawers)?;
            let file = create(&out)?;
            match format {
                ReportFormat::Csv => analysis.write_csv(file)?,
                ReportFormat::Json => write_json(file, &out, &analysis)?,
            }
            println!(
                "mean adjacent violation: {:.6}",
                analysis.mean_adjacent_violation
            );
            Ok(())
        }
        Command::MakeSynth {
            kind,
            rows,
            seed,
            out,
            schema_out,
        } => {
            if rows == 0 {
                return Err(Failure::config("--rows must be at least 1"));
            }
            let table = gen_synthetic(kind, rows, seed);
            table.write_csv(create(&out)?)?;
            if let Some(path) = schema_out {
                write_json(create(&path)?, &path, &synthetic_schema(kind))?;
            }
            Ok(())
        }
        Command::ValidateDrawers { config, data, out } => {
            let (cfg, encoded, splits) = prepare(&config, &data)?;
            let targets = encoded.targets_of(&splits.train);
            let drawers = fit_drawers(&cfg.train, &targets)?;
            let report = validate_occupancy(&drawers, &targets, cfg.train.min_occupancy);
            #[derive(Serialize)]
            struct Validation<'a> {
                drawers: &'a drawering::drawers::DrawerSet,
                occupancy: &'a drawering::drawers::OccupancyReport,
            }
            let v = Validation {
                drawers: &drawers,
                occupancy: &report,
            };
            match out {
                Some(path) => write_json(create(&path)?, &path, &v)?,
                None => {
                    let text = serde_json::to_string_pretty(&v).map_err(Error::from)?;
                    println!("{text}");
                }
            }
            Ok(())
        }
    }
}

/// Loads config and data. Anything wrong with either is an input error.
fn prepare(config: &Path, data: &Path) -> CliResult<(ExperimentConfig, EncodedDataset, SplitSpec)> {
    let input = |e: Error| Failure::config(e.to_string());
    let cfg = ExperimentConfig::load(config).map_err(input)?;
    let table = load_csv(data, &cfg.schema).map_err(input)?;
    let splits = cfg.split.apply(&table).map_err(input)?;
    log::info!(
        "{} rows: {} train, {} validation, {} test",
        table.n_rows(),
        splits.train.len(),
        splits.validation.len(),
        splits.test.len()
    );
    let encoded = fit_encoders(&table, &cfg.schema, &splits.train).map_err(input)?;
    Ok((cfg, encoded, splits))
}

fn train(
    config: &Path,
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    step_log: Option<&Path>,
) -> CliResult {
    let (mut cfg, encoded, splits) = prepare(config, data)?;
    if let Some(seed) = seed {
        cfg.train.seed = seed;
    }
    let mut log = step_log
        .map(|p| create(p).map(|f| (StepLog::new(f), p)))
        .transpose()?;
    let mut log_error = None;
    let mut record = |stats: &drawering::trainer::StepStats| {
        if let Some((log, path)) = log.as_mut() {
            if log_error.is_none() {
                if let Err(e) = log.record(stats) {
                    log_error = Some(Failure::io(path, e));
                }
            }
        }
    };
    let run = train_model(&cfg.train, &encoded, &splits, Some(&mut record))?;
    if let Some(e) = log_error {
        return Err(e);
    }
    if let Some((log, path)) = log {
        log.into_inner().flush().map_err(|e| Failure::io(path, e))?;
    }
    ModelBundle::new(cfg.train.clone(), encoded.encoder.clone(), &run).save(out)?;
    let text = serde_json::to_string_pretty(&run.result).map_err(Error::from)?;
    println!("{text}");
    Ok(())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize>(mut w: impl Write, path: &Path, value: &T) -> CliResult {
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::io(path, e))
}
