//! `photon-filter` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure, 4 validation-suite failure. Errors are printed to stderr as one
//! JSON object.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use photon_filter::cat::{propagate_cat_master, CatExtendedFilter, CatFilter};
use photon_filter::config::{parse_config, Field, Formulation, RunConfig};
use photon_filter::ensemble::{run_ensemble, EnsembleSpec};
use photon_filter::filter_sp::{run_trajectory, CoupledSpFilter, ExtendedSpFilter, MeasurementRecord, Noise};
use photon_filter::master_sp::{propagate_master_sp, propagate_master_sp_extended};
use photon_filter::series::Series;
use photon_filter::validation::run_validation;
use photon_filter::zakai::ZakaiFilter;
use photon_filter::{Error, VERSION};

/// Builds the filter selected by the configuration as `$f` and evaluates
/// `$body` with it.
macro_rules! with_filter {
    ($cfg:expr, $f:ident => $body:expr) => {{
        let cfg: &RunConfig = $cfg;
        let (m, obs, scheme) = (&cfg.model, &cfg.observables[..], cfg.run.scheme);
        match (&cfg.field, cfg.run.formulation) {
            (Field::Vacuum(p) | Field::SinglePhoton(p), Formulation::Coupled) => {
                let $f = CoupledSpFilter::new(m, p, obs).with_scheme(scheme);
                $body
            }
            (Field::Vacuum(p) | Field::SinglePhoton(p), Formulation::Extended) => {
                let $f = ExtendedSpFilter::new(m, p, obs, cfg.run.extended)?.with_scheme(scheme);
                $body
            }
            (Field::Vacuum(p) | Field::SinglePhoton(p), Formulation::Zakai) => {
                let $f = ZakaiFilter::new(m, p, obs, cfg.run.extended)?.with_scheme(scheme);
                $body
            }
            (Field::Cat(c), Formulation::Coupled) => {
                let $f = CatFilter::new(m, c, obs).with_scheme(scheme);
                $body
            }
            (Field::Cat(c), Formulation::Extended) => {
                let $f = CatExtendedFilter::new(m, c, obs)?.with_scheme(scheme);
                $body
            }
            (Field::Cat(_), Formulation::Zakai) => unreachable!("rejected during config validation"),
        }
    }};
}

#[derive(Parser)]
#[command(
    name = "photon-filter",
    version,
    about = "Master equations and quantum filters for single-photon and coherent-superposition fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the master equation; writes master.csv.
    Master(Common),
    /// Run one filter trajectory; writes filter.csv and record.csv.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Replay this record instead of generating noise.
        #[arg(long, value_name = "RECORD.csv")]
        replay: Option<PathBuf>,
    },
    /// Monte-Carlo ensemble against the master equation; writes ensemble.csv.
    Ensemble {
        #[command(flatten)]
        common: Common,
        /// Worker threads (0: all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Cross-formulation checks; prints a pass/fail table.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Convert a wide series CSV into long (time, series, value) form.
    Export {
        /// Series CSV written by `master` or `filter`.
        input: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Override `[run].seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = exit_code(&e);
            let mut body = json!({
                "error": error_kind(&e),
                "message": e.to_string(),
                "exit_code": code,
            });
            if let Error::Validation(issues) = &e {
                body["issues"] = issues.iter().map(|i| json!({"path": i.path, "message": i.message})).collect();
            }
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Parse(_) => "parse",
        Error::Validation(_) => "validation",
        Error::Io(_) | Error::Csv(_) => "io",
        Error::Record(_) => "record",
        Error::Trajectory { source, .. } => error_kind(source),
        e if e.is_numerical() => "numerical",
        _ => "input",
    }
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let cfg = parse_config(&common.config)?;
    fs::create_dir_all(&common.out)?;
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn metadata(cfg: &RunConfig, command: &str, started: Instant, extra: Value) -> Result<Value, Error> {
    let r = &cfg.run;
    let mut m = json!({
        "version": format!("v{VERSION}"),
        "command": command,
        "seed": r.seed,
        "dt": r.stepping.dt,
        "t_end": r.stepping.t_end,
        "scheme": r.scheme.name(),
        "formulation": r.formulation.name(),
        "config_hash": cfg.hash()?,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut m, extra) {
        m.extend(e);
    }
    Ok(m)
}

fn write_json(path: &Path, v: &Value) -> Result<(), Error> {
    fs::write(path, serde_json::to_string_pretty(v).expect("json values serialize") + "\n")?;
    Ok(())
}

fn dispatch(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Master(common) => {
            let started = Instant::now();
            let cfg = load(&common)?;
            let series = master_series(&cfg)?;
            series.save_csv(&common.out.join("master.csv"))?;
            let meta = metadata(&cfg, "master", started, json!({ "diagnostics": series.diagnostics }))?;
            write_json(&common.out.join("metadata.json"), &meta)?;
            Ok(0)
        }
        Command::Filter { common, replay } => {
            let started = Instant::now();
            let cfg = load(&common)?;
            let loaded = replay.as_deref().map(MeasurementRecord::load_csv).transpose()?;
            let noise = match &loaded {
                Some(rec) => Noise::Replay(rec),
                None => Noise::SelfGenerate {
                    seed: cfg.run.seed,
                    stream: 0,
                },
            };
            let (record, series) = with_filter!(&cfg, f => run_trajectory(&f, cfg.run.stepping, noise))?;
            series.save_csv(&common.out.join("filter.csv"))?;
            record.save_csv(&common.out.join("record.csv"))?;
            let extra = json!({
                "replay": replay.map(|p| p.display().to_string()),
                "diagnostics": series.diagnostics,
            });
            write_json(&common.out.join("metadata.json"), &metadata(&cfg, "filter", started, extra)?)?;
            Ok(0)
        }
        Command::Ensemble { common, threads } => {
            let started = Instant::now();
            let cfg = load(&common)?;
            let spec = EnsembleSpec {
                stepping: cfg.run.stepping,
                trajectories: cfg.run.trajectories,
                base_seed: cfg.run.seed,
                threads,
                keep_records: cfg.run.keep_records,
            };
            let mut report = with_filter!(&cfg, f => run_ensemble(&f, spec))?;
            report.attach_master(&master_series(&cfg)?)?;
            report.save_csv(&common.out.join("ensemble.csv"))?;
            if let Some(records) = &report.records {
                let dir = common.out.join("records");
                fs::create_dir_all(&dir)?;
                for (i, r) in records.iter().enumerate() {
                    r.save_csv(&dir.join(format!("record_{i:05}.csv")))?;
                }
            }
            let wiener = report.innovations.iter().filter(|s| s.wiener_consistent).count();
            let extra = json!({
                "trajectories": report.trajectories,
                "threads": threads,
                "innovations_wiener_consistent": wiener,
            });
            write_json(&common.out.join("metadata.json"), &metadata(&cfg, "ensemble", started, extra)?)?;
            Ok(0)
        }
        Command::Validate { common, threads } => {
            let started = Instant::now();
            let cfg = load(&common)?;
            let report = run_validation(&cfg, threads)?;
            println!("{report}");
            let checks: Vec<Value> = report
                .checks
                .iter()
                .map(|c| json!({"name": c.name, "measured": c.measured, "tolerance": c.tolerance, "passed": c.passed}))
                .collect();
            let extra = json!({ "checks": checks, "passed": report.passed() });
            write_json(&common.out.join("validation.json"), &metadata(&cfg, "validate", started, extra)?)?;
            Ok(if report.passed() { 0 } else { 4 })
        }
        Command::Export { input, out } => {
            Series::read_csv(&input)?.export_long(&out)?;
            Ok(0)
        }
    }
}

fn master_series(cfg: &RunConfig) -> Result<Series, Error> {
    let (m, obs, st) = (&cfg.model, &cfg.observables[..], cfg.run.stepping);
    match &cfg.field {
        Field::Vacuum(p) | Field::SinglePhoton(p) => match cfg.run.formulation {
            Formulation::Extended => propagate_master_sp_extended(m, p, &cfg.run.extended, st, obs),
            _ => propagate_master_sp(m, p, st, obs),
        },
        Field::Cat(modes) => propagate_cat_master(m, modes, st, obs),
    }
}
