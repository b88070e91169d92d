use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emstad_core::harness::{
    exit_code, parse_preset_name, run_config, ExperimentConfig, Preset, RunOptions, Scenario,
    DEFAULT_CACHE_PATH, EXIT_IO,
};

#[derive(Parser)]
#[command(
    name = "emstad",
    version,
    about = "Multi-target EM detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory [default: results/<preset>_<scenario>]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads [default: all cores]
        #[arg(long, env = "EMSTAD_WORKERS")]
        workers: Option<usize>,
        /// Divide trial budgets by ten.
        #[arg(long)]
        fast: bool,
        /// Ignore cached thresholds and calibrate again.
        #[arg(long)]
        recalibrate: bool,
        /// Threshold cache file.
        #[arg(long, default_value = DEFAULT_CACHE_PATH, conflicts_with = "no_cache")]
        cache: PathBuf,
        #[arg(long)]
        no_cache: bool,
    },
    /// List, print or write the bundled preset configs.
    Presets {
        #[command(subcommand)]
        action: Option<PresetAction>,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset as a complete config file, e.g. `pd_curve_mismatched`.
    Show {
        name: String,
    },
    /// Write every preset into DIR as <name>.toml.
    Write {
        dir: PathBuf,
    },
}

fn all_presets() -> impl Iterator<Item = ExperimentConfig> {
    Preset::ALL.into_iter().flat_map(|p| {
        Scenario::ALL
            .into_iter()
            .map(move |s| ExperimentConfig::preset(p, s))
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("emstad: {msg}");
            ExitCode::from(code as u8)
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

type CliResult = Result<(), (i32, String)>;

fn fail(e: emstad_core::Error) -> (i32, String) {
    (exit_code(&e), e.to_string())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            fast,
            recalibrate,
            cache,
            no_cache,
        } => {
            let cfg = ExperimentConfig::load(&config).map_err(fail)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from("results").join(cfg.name()));
            let opts = RunOptions {
                out_dir: out_dir.clone(),
                workers,
                fast,
                recalibrate,
                cache_path: (!no_cache).then_some(cache),
            };
            let manifest = run_config(&cfg, &opts).map_err(fail)?;
            if let Some(th) = &manifest.threshold {
                let source = if th.from_cache { "cache" } else { "calibrated" };
                emit(&format!(
                    "threshold {} at pfa {} ({source})\n",
                    th.eta, th.pfa
                ));
            }
            for file in &manifest.outputs {
                emit(&format!("{}\n", out_dir.join(file).display()));
            }
            emit(&format!("{}\n", out_dir.join("manifest.json").display()));
            Ok(())
        }
        Command::Presets { action } => match action.unwrap_or(PresetAction::List) {
            PresetAction::List => {
                for cfg in all_presets() {
                    emit(&format!("{}\n", cfg.name()));
                }
                Ok(())
            }
            PresetAction::Show { name } => {
                let (p, s) = parse_preset_name(&name).map_err(fail)?;
                emit(
                    &ExperimentConfig::preset(p, s)
                        .to_toml_string()
                        .map_err(fail)?,
                );
                Ok(())
            }
            PresetAction::Write { dir } => {
                std::fs::create_dir_all(&dir).map_err(|e| (EXIT_IO, e.to_string()))?;
                for cfg in all_presets() {
                    let path = dir.join(format!("{}.toml", cfg.name()));
                    let text = cfg.to_toml_string().map_err(fail)?;
                    std::fs::write(&path, text).map_err(|e| (EXIT_IO, e.to_string()))?;
                    emit(&format!("{}\n", path.display()));
                }
                Ok(())
            }
        },
    }
}
