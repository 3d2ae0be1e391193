//! Config-driven experiments behind the command-line tool.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_build_kl, cmd_convergence, cmd_mc, cmd_solve_one, cmd_taylor, convergence_study, mc_statistics, taylor_study,
    ConvergenceRow, ConvergenceStudy, ExperimentFields, SolveOneInput, TaylorStudy,
};
pub use config::ExperimentConfig;
