use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gest_cli::commands::{self, ScanArgs};
use gest_cli::montecarlo::montecarlo;
use gest_cli::{CliError, Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "gest",
    version,
    about = "G-estimation of treatment effects on survival in continuous time"
)]
struct Cli {
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `dgp.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `io.out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort; writes cohort.csv and latents.csv.
    Simulate,
    /// Solve the estimating equations; writes result.json.
    Estimate {
        cohort: PathBuf,
        /// Evaluate the psi equation on a grid; writes psi_scan.csv.
        #[arg(long, num_args = 3, allow_negative_numbers = true, value_names = ["LO", "HI", "STEPS"])]
        psi_scan: Option<Vec<String>>,
    },
    /// Score test of no treatment effect; writes test.json.
    Test {
        cohort: PathBuf,
        /// `outcome` or `mimic:<psi>`; overrides `test.h_extra`.
        #[arg(long)]
        h_extra: Option<String>,
    },
    /// Replicated simulate, estimate and test; writes mc_summary.json and per_rep.csv.
    Montecarlo {
        /// Overrides `mc.replications`.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Mimicking process of one patient on a time grid.
    Xpsi {
        cohort: PathBuf,
        id: String,
        /// Comma-separated shift parameters.
        #[arg(long, allow_hyphen_values = true)]
        psi: String,
        /// Comma-separated times; eleven points on [0, tau] by default.
        #[arg(long)]
        grid: Option<String>,
    },
}

fn numbers(flag: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Input(format!("--{flag}: cannot parse `{s}`")))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.dgp.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.io.out_dir = out;
    }
    match cli.command {
        Command::Simulate => {
            let r = commands::simulate(&cfg)?;
            println!("simulated {} patients into {}", r.n, r.cohort.display());
            println!("initiated fraction: {}", r.initiated_fraction);
            println!("death fraction (y < tau): {}", r.death_fraction);
        }
        Command::Estimate { cohort, psi_scan } => {
            let scan = psi_scan
                .map(|v| -> Result<ScanArgs> {
                    let bad = || CliError::Input(format!("--psi-scan: cannot parse {v:?}"));
                    Ok(ScanArgs {
                        lo: v[0].parse().map_err(|_| bad())?,
                        hi: v[1].parse().map_err(|_| bad())?,
                        steps: v[2].parse().map_err(|_| bad())?,
                    })
                })
                .transpose()?;
            let r = commands::estimate(&cfg, &cohort, scan)?;
            print!("{}", r.table());
            let d = &r.result.diagnostics;
            println!(
                "n = {}, events = {}, method = {}, residual = {:e}",
                r.n, r.events, d.method, d.residual
            );
            if d.brackets.len() > 1 {
                println!(
                    "warning: {} sign changes of the psi equation in the bracket",
                    d.brackets.len()
                );
            }
        }
        Command::Test { cohort, h_extra } => {
            let r = commands::test(&cfg, &cohort, h_extra.as_deref())?;
            println!("h_extra = {}", r.result.h_extra);
            println!("statistic = {}", r.result.statistic);
            println!("dof = {}", r.result.dof);
            println!("p = {}", r.result.p_value);
        }
        Command::Montecarlo { reps } => {
            if let Some(r) = reps {
                cfg.mc.replications = r;
                cfg.validate()?;
            }
            let (s, elapsed) = montecarlo(&cfg)?;
            println!(
                "{} replications: {} converged, {} failed ({:.1} s)",
                s.replications,
                s.converged,
                s.failed,
                elapsed.as_secs_f64()
            );
            println!(
                "initiated fraction {:.4}, death fraction {:.4}",
                s.initiated_fraction, s.death_fraction
            );
            for p in &s.parameters {
                let cov = p.coverage.map_or(String::new(), |c| {
                    format!(", coverage {}/{}", c.count, c.denominator)
                });
                println!(
                    "{:<10} mean {:>10.5} sd {:>9.5} mean se {:>9.5}{cov}",
                    p.name, p.mean, p.empirical_sd, p.mean_se
                );
            }
            if let Some(t) = s.test_rejection {
                println!(
                    "test rejections {}/{} at level {}",
                    t.count, t.denominator, cfg.test.level
                );
            }
            if let Some(c) = s.inversion_coverage {
                println!("inversion coverage {}/{}", c.count, c.denominator);
            }
        }
        Command::Xpsi {
            cohort,
            id,
            psi,
            grid,
        } => {
            let psi = numbers("psi", &psi)?;
            let grid = grid.map(|g| numbers("grid", &g)).transpose()?;
            let rows = commands::xpsi(&cfg, &cohort, &id, &psi, grid.as_deref())?;
            commands::write_xpsi(&rows, std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for line in e.diagnostics() {
                eprintln!("  {line}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
