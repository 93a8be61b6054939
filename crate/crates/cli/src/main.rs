use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lazylink_cli::commands::{cmd_check, cmd_compare, cmd_design, cmd_run};
use lazylink_cli::config::TraceFormat;
use lazylink_cli::presets::{describe, preset, PRESET_NAMES};
use lazylink_cli::{load_configs, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "lazylink",
    version,
    about = "Design and simulate transmission-lazy sensor loops"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Experiment config file (JSON); repeatable for `compare`.
    #[arg(long = "config")]
    configs: Vec<PathBuf>,
    /// Built-in experiment; repeatable for `compare`.
    #[arg(long = "preset")]
    presets: Vec<String>,
    /// Overrides the perturbation seed of every config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate stability conditions and policy invariants.
    Check {
        #[command(flatten)]
        source: Source,
    },
    /// Print the certificate and gains derived from a config.
    Design {
        #[command(flatten)]
        source: Source,
    },
    /// Simulate one experiment and write trace, summary and plot data.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<TraceFormat>,
    },
    /// Run several experiments and tabulate them side by side.
    Compare {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<TraceFormat>,
    },
    /// List built-in experiments, or print one as a config file.
    Presets {
        #[arg(long)]
        preset: Option<String>,
    },
}

fn resolve(
    source: &Source,
    format: Option<TraceFormat>,
) -> Result<Vec<ExperimentConfig>, CliError> {
    let mut cfgs = load_configs(&source.presets, &source.configs)?;
    if cfgs.is_empty() {
        return Err(CliError::Validation(
            "give --config <path> or --preset <name>".into(),
        ));
    }
    for c in &mut cfgs {
        if let Some(seed) = source.seed {
            c.perturbation.seed = seed;
        }
        if let Some(f) = format {
            c.outputs.format = f;
        }
    }
    Ok(cfgs)
}

fn single(source: &Source, format: Option<TraceFormat>) -> Result<ExperimentConfig, CliError> {
    let mut cfgs = resolve(source, format)?;
    if cfgs.len() != 1 {
        return Err(CliError::Validation(
            "this command takes exactly one config".into(),
        ));
    }
    Ok(cfgs.remove(0))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Check { source } => {
            let mut failed = false;
            for cfg in resolve(&source, None)? {
                let report = cmd_check(&cfg);
                print!("{}", report.render_text());
                failed |= !report.passed();
            }
            if failed {
                return Err(CliError::Validation("one or more checks failed".into()));
            }
        }
        Command::Design { source } => {
            let report = cmd_design(&single(&source, None)?)?;
            println!("{}", json(&report));
        }
        Command::Run {
            source,
            out,
            format,
        } => {
            let result = cmd_run(&single(&source, format)?, Some(&out))?;
            let s = &result.summary;
            println!(
                "{}: {:?}, {} transmissions ({} apparent), final distance {:.3e}, audit {}",
                s.name,
                s.termination,
                s.stats.total,
                s.stats.apparent,
                s.final_distance,
                if s.audit.is_clean() {
                    "clean"
                } else {
                    "with findings"
                }
            );
            for f in &result.files {
                log::info!("wrote {}", f.display());
            }
        }
        Command::Compare {
            source,
            out,
            format,
        } => {
            let result = cmd_compare(&resolve(&source, format)?, Some(&out))?;
            print!("{}", result.table.render_text());
        }
        Command::Presets { preset: None } => {
            for name in PRESET_NAMES {
                println!("{name:<20} {}", describe(name));
            }
        }
        Command::Presets { preset: Some(name) } => {
            let cfg = preset(&name)
                .ok_or_else(|| CliError::Validation(format!("unknown preset {name:?}")))?;
            println!("{}", cfg.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAZYLINK_LOG", "warn")).init();
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
