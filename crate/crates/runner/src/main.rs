use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use parasqueeze_runner::pipeline::run_verb;
use parasqueeze_runner::{ExperimentConfig, RunError};

#[derive(Parser)]
#[command(name = "parasqueeze", version, about = "Squeezing amplification and trapping experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,

    /// TOML configuration file; defaults apply when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output_dir`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Random seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override any config key, e.g. `--set system.n_atoms=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Fit (Omega, kappa) to the target frequency and ground-state squeezing.
    Calibrate,
    /// Parametrically drive the calibrated ground state.
    Amplify,
    /// Optimize trapping ramps for every configured gamma.
    Trap,
    /// Scan the trapping start time with linear ramps.
    Linesearch,
    /// Growth rate of Var(Jz) against drive frequency.
    Resonance,
    /// All of the above.
    FullPipeline,
}

impl Verb {
    fn name(self) -> &'static str {
        match self {
            Verb::Calibrate => "calibrate",
            Verb::Amplify => "amplify",
            Verb::Trap => "trap",
            Verb::Linesearch => "linesearch",
            Verb::Resonance => "resonance",
            Verb::FullPipeline => "full-pipeline",
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = &cli.out {
        let quoted = toml::Value::String(out.to_string_lossy().into_owned()).to_string();
        overrides.push(format!("output_dir={quoted}"));
    }
    match &cli.config {
        Some(path) => ExperimentConfig::load(path, &overrides),
        None => ExperimentConfig::from_toml_with_overrides("", &overrides),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| run_verb(cli.verb.name(), &cfg).map(|o| (cfg, o)));
    match result {
        Ok((cfg, outcome)) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).unwrap_or_default());
            if outcome.stalled {
                let e = RunError::Stalled(format!("see {}/manifest.json", cfg.output_dir.display()));
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
