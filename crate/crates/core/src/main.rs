//! Command-line driver for the experiment harness.

use clap::{Parser, Subcommand};
use pucci_lab::harness::{self, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pucci-lab",
    about = "Numerical laboratory for fully nonlinear elliptic operators in exterior domains",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a config file.
    Run {
        /// TOML experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config and PUCCI_LAB_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the base scenario over a grid of ellipticity ratios and dimensions.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated Λ/λ ratios.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.5, 2.0, 3.0])]
        ratios: Vec<f64>,
        /// Comma-separated dimensions.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 3, 4])]
        dims: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the sweep.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare a result directory against a golden baseline.
    Verify {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        golden: PathBuf,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run_command(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let bundle = harness::run(&cfg, out.as_deref()).map_err(|e| e.to_string())?;
            println!(
                "scenario {} [{}] -> {}",
                bundle.scenario,
                bundle.config_hash,
                bundle.out_dir.display()
            );
            for c in &bundle.checks {
                println!(
                    "  [{}] {} = {:.6e} (expected {})",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.expected
                );
            }
            println!(
                "{}: {} ({} ms)",
                bundle.scenario,
                if bundle.all_pass { "PASS" } else { "FAIL" },
                bundle.wall_ms
            );
            Ok(bundle.all_pass)
        }
        Command::Sweep {
            config,
            ratios,
            dims,
            out,
            jobs,
            seed,
        } => {
            if let Some(j) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(j)
                    .build_global()
                    .map_err(|e| e.to_string())?;
            }
            let cfg = load_config(&config, seed)?;
            let out_root =
                out.unwrap_or_else(|| harness::resolve_out_dir(&cfg, None).join("sweep"));
            let entries =
                harness::sweep(&cfg, &ratios, &dims, &out_root).map_err(|e| e.to_string())?;
            let mut all = true;
            for e in &entries {
                println!(
                    "  [{}] Lambda/lambda = {}, n = {} -> {} ({})",
                    if e.all_pass { "pass" } else { "FAIL" },
                    e.big_lambda,
                    e.n,
                    e.case_label,
                    e.error.as_deref().unwrap_or("ok")
                );
                all &= e.all_pass;
            }
            println!(
                "sweep: {} -> {}",
                if all { "PASS" } else { "FAIL" },
                out_root.display()
            );
            Ok(all)
        }
        Command::Verify { bundle, golden } => {
            let report = harness::verify(&bundle, &golden).map_err(|e| e.to_string())?;
            if report.clean() {
                println!("verify: PASS ({} files)", report.files_compared);
                Ok(true)
            } else {
                for d in &report.differences {
                    println!(
                        "  {}:{} actual {} expected {}",
                        d.file, d.location, d.actual, d.expected
                    );
                }
                println!(
                    "verify: FAIL ({} differences over {} files)",
                    report.differences.len(),
                    report.files_compared
                );
                Ok(false)
            }
        }
        Command::ListScenarios => {
            for s in harness::list_scenarios() {
                println!("{:24} {}", s.name, s.description);
                println!("{:24} checks: {}", "", s.checks);
            }
            Ok(true)
        }
    }
}
