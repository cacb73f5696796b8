//! Workbench CLI: spectral diagnostics, exponential-norm curves, condition
//! number sweeps, linear-system emulation, the nonlinear Carleman pipeline
//! and a seeded verification suite.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 input error,
//! 3 capacity exceeded.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "odebench", version, about = "linear/nonlinear ODE solver workbench")]
struct Cli {
    /// directory for emitted artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// RNG seed for randomized suites
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// relative tolerance for cross-checks
    #[arg(long, global = true, default_value_t = 1e-2)]
    tol: f64,
    /// sample count for curves
    #[arg(long, global = true, default_value_t = 256)]
    samples: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Auto,
    Search,
}

#[derive(Subcommand)]
enum Cmd {
    /// All scalar spectral quantities of one matrix
    Spectra {
        /// Matrix Market path, twisted:D, zero:D, or inline rows
        matrix: String,
        #[arg(long, default_value_t = 5.0)]
        t_final: f64,
    },
    /// Sampled ||e^{At}|| curves for two matrices with log-norm bounds
    Expnorm {
        matrix_a: String,
        matrix_b: String,
        #[arg(long, default_value_t = 5.0)]
        t_final: f64,
        /// also emit an SVG line plot
        #[arg(long)]
        svg: bool,
    },
    /// Condition number sweep over the twisted Toeplitz family
    Fig2 {
        #[arg(long, default_value_t = 10)]
        d_min: usize,
        #[arg(long, default_value_t = 100)]
        d_max: usize,
        #[arg(long, default_value_t = 2)]
        step: usize,
        #[arg(long, value_enum, default_value_t = Policy::Auto)]
        params: Policy,
        /// build the comparison system with A/j entries instead of Ah/j
        #[arg(long)]
        raw_bcow: bool,
    },
    /// Emulate the linear solver on a problem config
    Emulate { config: PathBuf },
    /// Nonlinear quadratic ODE end to end through Carleman linearization
    Carleman { config: PathBuf },
    /// Seeded randomized verification suite over every bound check
    VerifyAll {
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<odebench_core::Error>() {
        Some(odebench_core::Error::Capacity { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> anyhow::Result<output::RunDoc> {
        match &cli.cmd {
            Cmd::Spectra { matrix, t_final } => commands::cmd_spectra(matrix, *t_final, &cli.out),
            Cmd::Expnorm {
                matrix_a,
                matrix_b,
                t_final,
                svg,
            } => commands::cmd_expnorm(
                matrix_a,
                matrix_b,
                *t_final,
                cli.samples,
                *svg,
                cli.tol,
                &cli.out,
            ),
            Cmd::Fig2 {
                d_min,
                d_max,
                step,
                params,
                raw_bcow,
            } => commands::cmd_fig2(
                *d_min,
                *d_max,
                *step,
                match params {
                    Policy::Auto => commands::ParamsPolicy::Auto,
                    Policy::Search => commands::ParamsPolicy::Search,
                },
                *raw_bcow,
                &cli.out,
            ),
            Cmd::Emulate { config } => commands::cmd_emulate(config, &cli.out),
            Cmd::Carleman { config } => commands::cmd_carleman(config, &cli.out),
            Cmd::VerifyAll { trials } => commands::cmd_verify_all(cli.seed, *trials, &cli.out),
        }
    };
    match run() {
        Ok(doc) => {
            println!("{:#}", doc.to_value());
            for v in &doc.verdicts {
                let status = if !v.applicable {
                    "n/a "
                } else if v.pass {
                    "pass"
                } else {
                    "FAIL"
                };
                eprintln!("[{status}] {}", v.name);
            }
            if doc.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
