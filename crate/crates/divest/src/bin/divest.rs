use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divest::commands::{self, Command, Outcome};
use divest::{presets, HarnessError, RunConfig};

#[derive(Parser)]
#[command(
    name = "divest",
    version,
    about = "Two-sector investment model on an adaptive network"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Preset name or path to a TOML configuration.
    #[arg(long, default_value = "transition")]
    config: String,
    /// Override a configuration key, e.g. `--set econ.b_d=2.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Ensemble size (run.runs).
    #[arg(long)]
    runs: Option<usize>,
    /// Master seed (run.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (run.output).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> divest::Result<RunConfig> {
        let mut overrides = self.set.clone();
        if let Some(r) = self.runs {
            overrides.push(format!("run.runs={r}"));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("run.seed={s}"));
        }
        if let Some(o) = &self.out {
            let text = toml::Value::String(o.display().to_string());
            overrides.push(format!("run.output={text}"));
        }
        RunConfig::resolve(&self.config, &overrides)
    }
}

#[derive(Subcommand)]
enum Sub {
    /// Single agent-based run.
    AbmRun {
        #[command(flatten)]
        common: Common,
        /// Ensemble member whose seed is used.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Ensemble of agent-based runs with per-column statistics.
    AbmEnsemble {
        #[command(flatten)]
        common: Common,
    },
    /// Macro ODE trajectory from a sampled initial network.
    MacroRun {
        #[command(flatten)]
        common: Common,
        /// Also simulate the reduced jump process (run.runs members).
        #[arg(long)]
        pbp: bool,
    },
    /// Compare the agent-based ensemble with the macro trajectory.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Recompute from the runs/ and macro.csv of an earlier compare.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Continue steady states in gamma at fixed dirty productivity.
    Continue {
        #[command(flatten)]
        common: Common,
    },
    /// Locate the cusp over the scan.b_d_grid slices.
    Cusp {
        #[command(flatten)]
        common: Common,
    },
    /// Ensembles over scan.phi_grid.
    SweepPhi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        keep_runs: bool,
    },
    /// Adaptive against fully connected network over scan.phi_grid.
    WellMixed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        keep_runs: bool,
    },
    /// Regenerate an output directory from its manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a resolved configuration.
    ShowConfig {
        #[command(flatten)]
        common: Common,
    },
    /// List the presets.
    Presets,
}

fn run(cli: Cli) -> divest::Result<Option<Outcome>> {
    let (common, cmd) = match cli.command {
        Sub::AbmRun { common, index } => (common, Command::AbmRun { index }),
        Sub::AbmEnsemble { common } => (common, Command::AbmEnsemble),
        Sub::MacroRun { common, pbp } => (common, Command::MacroRun { pbp }),
        Sub::Compare { common, from } => (common, Command::Compare { from }),
        Sub::Continue { common } => (common, Command::Continue),
        Sub::Cusp { common } => (common, Command::Cusp),
        Sub::SweepPhi { common, keep_runs } => (common, Command::SweepPhi { keep_runs }),
        Sub::WellMixed { common, keep_runs } => (common, Command::WellMixed { keep_runs }),
        Sub::Replay { manifest, out } => {
            return commands::replay(&manifest, out.as_deref()).map(Some)
        }
        Sub::ShowConfig { common } => {
            print!("{}", common.resolve()?.to_toml());
            return Ok(None);
        }
        Sub::Presets => {
            for name in presets::NAMES {
                println!("{name}");
            }
            return Ok(None);
        }
    };
    let cfg = common.resolve()?;
    commands::execute(&cmd, &cfg).map(Some)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Some(outcome)) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &HarnessError) -> u8 {
    e.exit_code() as u8
}
