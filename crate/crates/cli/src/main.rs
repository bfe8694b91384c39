use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use flchain_core::config::{load_config, DataSource, ExperimentConfig};
use flchain_core::experiment::{load_sweep, run, sweep_with};
use flchain_core::SimError;

/// Asynchronous blockchain-based federated learning simulator.
#[derive(Debug, Parser)]
#[command(name = "flchain", version)]
struct Args {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, value_name = "PATH", conflicts_with = "sweep")]
    config: Option<PathBuf>,
    /// Override the seed (for a sweep: the seed runs are derived from).
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run a parameter sweep (TOML).
    #[arg(long, value_name = "PATH")]
    sweep: Option<PathBuf>,
    /// Write the event trace of each run.
    #[arg(long)]
    trace: bool,
    /// Use the synthetic dataset regardless of the config.
    #[arg(long)]
    synthetic: bool,
}

impl Args {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if self.trace {
            cfg.trace = true;
        }
        if self.synthetic {
            cfg.data.source = DataSource::Synthetic;
        }
    }
}

fn single(args: &Args) -> Result<i32, SimError> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    args.apply(&mut cfg);
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    let out = run(&cfg)?;
    let r = &out.result;
    println!("{}", out.dir.display());
    eprintln!(
        "blocks {} (mined {}), stale rate {:.4}, mean AoB {}, test accuracy {}",
        r.main_chain.len() - 1,
        r.mined_blocks,
        r.stale_rate,
        r.mean_aob.map_or("-".into(), |v| format!("{v:.3} s")),
        r.final_test_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
    );
    Ok(0)
}

fn sweep_cmd(args: &Args, path: &PathBuf) -> Result<i32, SimError> {
    let (mut spec, mut base) = load_sweep(path)?;
    args.apply(&mut base);
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.output_dir = Some(out.clone());
    }
    let total = spec.total_runs();
    let outcome = sweep_with(&spec, &base, |sr, res| match res {
        Ok(out) => eprintln!("[{}/{total}] {}", sr.index + 1, out.dir.display()),
        Err(msg) => eprintln!("[{}/{total}] run {} failed: {msg}", sr.index + 1, sr.index),
    })?;
    println!("{}", outcome.out_dir.display());
    eprintln!("{} of {total} runs completed", outcome.completed);
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match &args.sweep {
        Some(path) => sweep_cmd(&args, path),
        None => single(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
