//! `aide`: run divergence-estimation experiments and write CSV or JSON results.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use aide_core::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use aide_core::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "aide",
    version,
    about = "Estimate divergences between inference algorithms"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bayesian linear regression: SMC, MH and variational targets against the exact posterior.
    LinregSweep(Common),
    /// Hidden Markov model: SMC targets against exact and SMC gold standards.
    HmmSweep(Common),
    /// Bimodal target: importance sampling with resampling, estimator versus evidence comparison.
    Bimodal(Common),
    /// Statistical property checks; exits 1 if any check fails.
    PropertySuite {
        #[command(flatten)]
        common: Common,
        /// Scale the auxiliary weights of whichever algorithm plays gold by 2, to confirm the suite notices.
        #[arg(long)]
        inject_bias: bool,
    },
}

#[derive(Args)]
struct Common {
    /// TOML or JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; overrides the config. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common, inject) = match cli.command {
        Cmd::LinregSweep(c) => (ExperimentKind::LinregSweep, c, false),
        Cmd::HmmSweep(c) => (ExperimentKind::HmmSweep, c, false),
        Cmd::Bimodal(c) => (ExperimentKind::Bimodal, c, false),
        Cmd::PropertySuite {
            common,
            inject_bias,
        } => (ExperimentKind::PropertySuite, common, inject_bias),
    };
    match run(kind, &common, inject) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => EXIT_CONFIG,
                _ => EXIT_FAILED,
            })
        }
    }
}

fn load_config(
    kind: ExperimentKind,
    common: &Common,
    inject: bool,
) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(kind),
    };
    if cfg.experiment != kind {
        return Err(Error::Config {
            path: "experiment".into(),
            message: format!(
                "config is for `{}` but the subcommand is `{kind}`",
                cfg.experiment
            ),
        });
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    if inject {
        cfg.property.inject_bias = true;
    }
    if common.threads == Some(0) {
        return Err(Error::Config {
            path: "--threads".into(),
            message: "must be at least 1".into(),
        });
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(kind: ExperimentKind, common: &Common, inject: bool) -> Result<bool, Error> {
    let cfg = load_config(kind, common, inject)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidState(e.to_string()))?;
    let output = pool.install(|| run_experiment(&cfg))?;
    let text = output.render()?;
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, &text)?;
            write_sidecar(path, &cfg)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    if !output.passed() {
        eprintln!("one or more property checks failed");
    }
    Ok(output.passed())
}

/// `<out>.meta.json`: the resolved config plus the source revision.
fn write_sidecar(out: &Path, cfg: &ExperimentConfig) -> Result<(), Error> {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    let meta = serde_json::json!({
        "config": cfg,
        "git_describe": git_describe(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(
        PathBuf::from(name),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    Ok(())
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}
