use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use snls_core::harness::{
    convergence_study, ledger_refinement, noise_statistics, run_ensemble, simulate, write_report,
};
use snls_core::{parse_config, partition_intervals, Error, RunConfig, Trajectory};

#[derive(Parser)]
#[command(name = "snls", version, about = "Stochastic Gross-Pitaevskii simulator and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `dir`, else `snls-out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensembles and refinement studies.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one realisation; writes trajectory.bin, noise.bin, diagnostics.csv, report.txt.
    Simulate(Common),
    /// Monte Carlo ensemble with per-member diagnostics.
    Ensemble(Common),
    /// Moments of the stochastic convolution against their exact values.
    NoiseStats(Common),
    /// Energy-ledger residuals under time-step refinement.
    VerifyEnergy(Common),
    /// Time-step convergence study over `dt_list`.
    Converge(Common),
    /// Greedy interval partition at the configured `eta`.
    Partition {
        #[command(flatten)]
        common: Common,
        /// Partition a stored trajectory instead of solving.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", common.config.display()))
    })?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if common.workers == Some(0) {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("snls-out"));
    cfg.output_dir = Some(out.clone());
    Ok((cfg, out))
}

fn finish(cfg: &RunConfig, out: &Path, body: &str) -> Result<String, Error> {
    let text = format!("{}\n{body}", cfg.provenance_text());
    write_report(&out.join("report.txt"), &text)?;
    Ok(text)
}

fn run(command: Command) -> Result<String, Error> {
    match command {
        Command::Simulate(common) => {
            let (cfg, out) = load_config(&common)?;
            let result = simulate(&cfg, Some(&out))?;
            Ok(result.report_text())
        }
        Command::Ensemble(common) => {
            let (cfg, _) = load_config(&common)?;
            Ok(run_ensemble(&cfg)?.to_text())
        }
        Command::NoiseStats(common) => {
            let (cfg, out) = load_config(&common)?;
            finish(&cfg, &out, &noise_statistics(&cfg)?.to_text())
        }
        Command::VerifyEnergy(common) => {
            let (cfg, out) = load_config(&common)?;
            finish(&cfg, &out, &ledger_refinement(&cfg)?.to_text())
        }
        Command::Converge(common) => {
            let (cfg, out) = load_config(&common)?;
            finish(&cfg, &out, &convergence_study(&cfg, &cfg.dt_list())?.to_text())
        }
        Command::Partition { common, trajectory } => {
            let (cfg, out) = load_config(&common)?;
            let traj = match &trajectory {
                Some(p) => Trajectory::load(p)?,
                None => simulate(&cfg, None)?.trajectory,
            };
            let part = partition_intervals(&traj, cfg.eta)?;
            let mut body = String::new();
            let _ = writeln!(body, "eta = {}\nintervals = {}\nirreducible = {}", part.eta, part.count(), part.irreducible_count());
            let _ = writeln!(body, "# start_index end_index t_start t_end norm irreducible");
            for ((iv, norm), irr) in part.intervals.iter().zip(&part.norms).zip(&part.irreducible) {
                let (a, b) = iv.times(&traj.times);
                let _ = writeln!(body, "{} {} {a} {b} {norm} {irr}", iv.start, iv.end);
            }
            finish(&cfg, &out, &body)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
