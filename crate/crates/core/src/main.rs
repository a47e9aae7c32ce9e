use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use klyz_core::error::IoError;
use klyz_core::io::{
    calibrate_config, execute, load_config, plot_data, reaudit, remonitor, to_toml, validate_config, CommandError, MonitorSection,
    Overrides, RunConfig,
};

/// Simulate the kappa-LYZ flow on flat tori, audit it, and monitor local
/// curvature estimates.
#[derive(Debug, Parser)]
#[command(name = "klyz", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory of a run.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Initial data: flat_fixed_point, exponential, frozen_heat or perturbed.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Final time.
    #[arg(long, global = true)]
    until: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Ceiling on sup |Rm| that ends the run.
    #[arg(long, global = true)]
    ceiling: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Check a configuration and print it normalized.
    Validate,
    /// Run a configuration.
    Run,
    /// Re-audit the snapshots of a run.
    Audit {
        /// Audit spacing in samples.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Re-monitor the snapshots of a run, with `[monitor]` from `--config` if given.
    Monitor {
        /// Fit the universal constant first.
        #[arg(long)]
        fit: bool,
    },
    /// Export CSV series of a run.
    PlotData,
    /// Run a configuration and fit the universal constant.
    Calibrate,
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides {
        seed: cli.seed,
        preset: cli.preset.clone(),
        until: cli.until,
        dt: cli.dt,
        ceiling: cli.ceiling,
        out: cli.out.clone(),
    }
}

fn config(cli: &Cli) -> Result<RunConfig, CommandError> {
    load_config(cli.config.as_deref(), std::env::vars(), &overrides(cli)).map_err(|e| match e {
        IoError::Malformed { what, message } => CommandError::Config(vec![klyz_core::io::Diagnostic { field: what, message }]),
        other => other.into(),
    })
}

fn run_dir(cli: &Cli) -> Result<&Path, CommandError> {
    cli.out
        .as_deref()
        .ok_or_else(|| CommandError::Io(IoError::MissingRun("no --out directory given".into())))
}

fn monitor_section(path: &Path) -> Result<Option<MonitorSection>, CommandError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        CommandError::Config(vec![klyz_core::io::Diagnostic {
            field: path.display().to_string(),
            message: e.to_string(),
        }])
    })?;
    match table.remove("monitor") {
        None => Ok(None),
        Some(v) => v.try_into().map(Some).map_err(|e: toml::de::Error| {
            CommandError::Config(vec![klyz_core::io::Diagnostic {
                field: "monitor".into(),
                message: e.to_string(),
            }])
        }),
    }
}

fn dispatch(cli: &Cli) -> Result<i32, CommandError> {
    match &cli.verb {
        Verb::Validate => {
            let cfg = validate_config(&config(cli)?).map_err(CommandError::Config)?;
            print!("{}", to_toml(&cfg));
            Ok(0)
        }
        Verb::Run => {
            let cfg = config(cli)?;
            let s = execute(&cfg)?;
            let r = &s.record;
            println!(
                "{} at t = {} after {} steps, {} samples, {} audits, output in {}",
                serde_json::to_value(r.termination).expect("termination serializes").as_str().unwrap_or_default(),
                r.t_final,
                r.steps,
                r.samples.len(),
                s.audits,
                cfg.out_dir().display()
            );
            for n in &s.notes {
                eprintln!("note: {n}");
            }
            Ok(s.exit_code)
        }
        Verb::Audit { stride } => {
            let reports = reaudit(run_dir(cli)?, *stride)?;
            for r in &reports {
                let worst = r.residuals.iter().map(|x| x.linf).fold(0.0, f64::max);
                println!("t = {}: max residual {worst:e}", r.t);
            }
            Ok(0)
        }
        Verb::Monitor { fit } => {
            let section = cli.config.as_deref().map(monitor_section).transpose()?.flatten();
            let m = remonitor(run_dir(cli)?, section, *fit)?;
            println!("{}", serde_json::to_string_pretty(&m.summary).expect("summary serializes"));
            Ok(0)
        }
        Verb::PlotData => {
            for p in plot_data(run_dir(cli)?)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Verb::Calibrate => {
            let cal = calibrate_config(&config(cli)?)?;
            println!("c_universal = {}", cal.c_universal);
            Ok(cal.termination.exit_code())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
