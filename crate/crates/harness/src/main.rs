use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use sbl_core::tvs::{solve_time_varying, TvProblem, TvSolver};
use sbl_core::{bsbl_em, msbl, tmsbl, BlockPartition, BsblOptions, Dictionary, MmvProblem};
use sbl_harness::config::KvConfig;
use sbl_harness::experiments::{
    run_experiment1, run_experiment2, run_experiment3, run_limits_sweep, Exp1Config, Exp2Config,
    Exp3Config, LimitsConfig, RunOptions,
};
use sbl_harness::io::{read_matrix, write_limits_csv, write_matrix, write_sweep_csv};

#[derive(Parser)]
#[command(
    name = "sbl",
    version,
    about = "Sparse Bayesian learning solvers and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable), e.g. `--set betas=0,0.9`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Sweep {
    #[command(flatten)]
    common: Common,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Record wall-clock time per trial (makes the output nondeterministic).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Recover a signal from matrix files.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Dictionary, N x M.
        #[arg(long)]
        dict: PathBuf,
        /// Measurements, N x L (L = 1 for a single vector).
        #[arg(long)]
        measurements: PathBuf,
    },
    /// Intra-block correlation sweep (BSBL-EM with and without learning).
    Exp1(Sweep),
    /// Inter-vector correlation sweep (T-MSBL vs M-SBL).
    Exp2(Sweep),
    /// Time-varying support, windowed T-MSBL vs M-SBL.
    Exp3(Sweep),
    /// Support-recovery error of the ML decoder against N.
    Limits(Sweep),
}

fn load_config(common: &Common) -> anyhow::Result<KvConfig> {
    let mut kv = match &common.config {
        Some(p) => KvConfig::from_file(p)?,
        None => KvConfig::default(),
    };
    for s in &common.set {
        kv.set(s)?;
    }
    Ok(kv)
}

fn sweep_config(s: &Sweep) -> anyhow::Result<KvConfig> {
    let mut kv = load_config(&s.common)?;
    if let Some(seed) = s.seed {
        kv.set(&format!("seed={seed}"))?;
    }
    if let Some(t) = s.trials {
        kv.set(&format!("trials={t}"))?;
    }
    Ok(kv)
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Keys of the `solve` config: `solver` (bsbl | tmsbl | msbl | tv-tmsbl |
/// tv-msbl), `block_size`, `window`, `noiseless`, `learn_corr`, `max_iters`,
/// `tol`, `prune_gamma`, `lambda`.
fn solve(common: &Common, dict: &Path, measurements: &Path) -> anyhow::Result<()> {
    let mut kv = load_config(common)?;
    let mut solver = String::from("bsbl");
    let (mut block_size, mut window, mut noiseless, mut learn_corr) = (1usize, 0usize, false, true);
    let mut lambda = f64::NAN;
    kv.take("solver", &mut solver)?;
    kv.take("block_size", &mut block_size)?;
    kv.take("window", &mut window)?;
    kv.take("noiseless", &mut noiseless)?;
    kv.take("learn_corr", &mut learn_corr)?;
    kv.take("lambda", &mut lambda)?;
    let mut opts = if noiseless {
        BsblOptions::noiseless()
    } else {
        BsblOptions::default()
    };
    opts.learn_corr = learn_corr;
    kv.take("max_iters", &mut opts.max_iters)?;
    kv.take("tol", &mut opts.tol)?;
    kv.take("prune_gamma", &mut opts.prune_gamma)?;
    kv.finish()?;
    if !lambda.is_nan() {
        opts.lambda_fixed = Some(lambda);
    }
    opts.validate()?;

    let phi = Dictionary::new(read_matrix(dict)?)?;
    let y = read_matrix(measurements)?;
    let x_hat = match solver.as_str() {
        "bsbl" => {
            if y.ncols() != 1 {
                bail!("bsbl needs a single measurement column, got {}", y.ncols());
            }
            if block_size == 0 || phi.cols() % block_size != 0 {
                bail!("block_size {block_size} must divide M = {}", phi.cols());
            }
            let part = BlockPartition::uniform(phi.cols() / block_size, block_size)?;
            let r = bsbl_em(
                &phi,
                &DVector::from_column_slice(y.as_slice()),
                &part,
                &opts,
            )?;
            if !r.converged {
                eprintln!(
                    "warning: stopped after {} iterations without converging",
                    r.iters
                );
            }
            nalgebra::DMatrix::from_column_slice(r.x_hat.len(), 1, r.x_hat.as_slice())
        }
        "tmsbl" | "msbl" => {
            let p = MmvProblem::new(phi, y)?;
            let r = if solver == "tmsbl" {
                tmsbl(&p, &opts)?
            } else {
                msbl(&p, &opts)?
            };
            if !r.converged {
                eprintln!(
                    "warning: stopped after {} iterations without converging",
                    r.iters
                );
            }
            r.x_hat
        }
        "tv-tmsbl" | "tv-msbl" => {
            if window == 0 {
                bail!("time-varying solvers need `window`");
            }
            let which = if solver == "tv-tmsbl" {
                TvSolver::Tmsbl
            } else {
                TvSolver::Msbl
            };
            let r = solve_time_varying(&TvProblem::new(phi, y, window)?, which, &opts);
            if let Some(w) = r.failed_windows().next() {
                let e = w.outcome.as_ref().unwrap_err();
                bail!("window {:?} failed: {e}", w.columns);
            }
            r.x_hat
        }
        other => bail!("unknown solver `{other}`"),
    };
    match &common.out {
        Some(p) => write_matrix(p, &x_hat)?,
        None => {
            let mut out = output(None)?;
            for row in x_hat.row_iter() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{}", cells.join(","))?;
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = match &cli.command {
        Command::Solve { common, .. } => common.threads,
        Command::Exp1(s) | Command::Exp2(s) | Command::Exp3(s) | Command::Limits(s) => {
            s.common.threads
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;

    pool.install(|| match &cli.command {
        Command::Solve {
            common,
            dict,
            measurements,
        } => solve(common, dict, measurements),
        Command::Exp1(s) => {
            let cfg = Exp1Config::from_kv(sweep_config(s)?)?;
            let rows = run_experiment1(&cfg, RunOptions { timing: s.timing })?;
            write_sweep_csv(output(s.common.out.as_deref())?, &rows)?;
            Ok(())
        }
        Command::Exp2(s) => {
            let cfg = Exp2Config::from_kv(sweep_config(s)?)?;
            let rows = run_experiment2(&cfg, RunOptions { timing: s.timing })?;
            write_sweep_csv(output(s.common.out.as_deref())?, &rows)?;
            Ok(())
        }
        Command::Exp3(s) => {
            let cfg = Exp3Config::from_kv(sweep_config(s)?)?;
            let rows = run_experiment3(&cfg, RunOptions { timing: s.timing })?;
            write_sweep_csv(output(s.common.out.as_deref())?, &rows)?;
            Ok(())
        }
        Command::Limits(s) => {
            if s.timing {
                bail!("--timing is not supported by `limits`");
            }
            let cfg = LimitsConfig::from_kv(sweep_config(s)?)?;
            let rows = run_limits_sweep(&cfg)?;
            write_limits_csv(output(s.common.out.as_deref())?, &rows)?;
            Ok(())
        }
    })
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
