use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use domain_uq::experiment::{
    cmd_build_kl, cmd_convergence, cmd_mc, cmd_solve_one, cmd_taylor, ExperimentConfig, SolveOneInput,
};
use domain_uq::Error;

#[derive(Parser)]
#[command(name = "domain-uq", version, about = "Perturbation UQ for diffusion on random domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (key = value lines); defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build both KL expansions and write them with a manifest.
    BuildKl(Common),
    /// Solve one sample and dump u_eps, u0 and delta_u.
    SolveOne {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        eps: f64,
        /// Coefficient parameters, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
        /// Domain parameters, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        z: Option<Vec<f64>>,
        /// Use sample number N of the seed for parameters not given.
        #[arg(long)]
        sample: Option<u64>,
    },
    /// Monte Carlo statistics of u0 and u_eps.
    Mc(Common),
    /// Taylor remainder table and per-sample slopes.
    Taylor(Common),
    /// Mean and variance errors against eps with fitted slopes.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Replace the solver by a manufactured closed form.
        #[arg(long)]
        synthetic: bool,
    },
}

fn config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p).map_err(|e| Error::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    let common = match &cli.command {
        Command::BuildKl(c) | Command::Mc(c) | Command::Taylor(c) => c,
        Command::SolveOne { common, .. } | Command::Convergence { common, .. } => common,
    };
    let cfg = config(common)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::BuildKl(_) => cmd_build_kl(&cfg),
        Command::SolveOne { eps, y, z, sample, .. } => cmd_solve_one(
            &cfg,
            &SolveOneInput {
                y: y.clone(),
                z: z.clone(),
                sample: *sample,
                eps: *eps,
            },
        ),
        Command::Mc(_) => cmd_mc(&cfg),
        Command::Taylor(_) => cmd_taylor(&cfg),
        Command::Convergence { synthetic, .. } => cmd_convergence(&cfg, *synthetic),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Dimension { .. } => 2,
                ref e if e.is_numerical() => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
