use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rqre_cli::config::RunConfig;
use rqre_cli::run::{self, Budget, EvalOptions, RunStatus};
use rqre_cli::CliError;
use rqre_core::envs::parse_payoff_file;
use rqre_core::stage_solver::{nash_instability_demo, rqre_solve, Method, SolverConfig};

#[derive(Parser, Debug)]
#[command(name = "rqre", version, about = "Risk-sensitive QRE learning with optimistic value iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train into the config's output directory (resumes unfinished runs).
    Train {
        config: PathBuf,
        /// Overwrite a finished or differently configured run.
        #[arg(long)]
        force: bool,
        /// Stop after this many episodes in this invocation.
        #[arg(long, value_name = "EPISODES")]
        halt_after: Option<usize>,
    },
    /// Evaluate a checkpoint and write a tidy eval.csv.
    Eval {
        config: PathBuf,
        /// Run directory, checkpoint directory, or designs file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Cross-play partner as NAME=PATH; repeatable.
        #[arg(long, value_parser = parse_partner)]
        partner: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a grid rollout frame by frame.
        #[arg(long)]
        trace: bool,
    },
    /// One run per (tau, epsilon) cell plus summary.csv.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        force: bool,
        #[arg(long, value_name = "EPISODES")]
        halt_after: Option<usize>,
    },
    /// Solve the stage RQRE of a payoff file.
    Solve {
        payoff: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long, default_value = "fixed_point")]
        method: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Nash selection jumps vs RQRE stability on the coordination family.
    DemoInstability,
    /// Check the potential bound and, on synthetic games, optimism.
    Audit { run_dir: PathBuf },
}

fn parse_partner(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    Ok((name.to_string(), PathBuf::from(path)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report(status: RunStatus, what: &str, dir: &std::path::Path) {
    match status {
        RunStatus::Completed => println!("{what} complete: {}", dir.display()),
        RunStatus::Skipped => println!("{what} already complete, skipped: {} (use --force to rerun)", dir.display()),
        RunStatus::Halted => println!("{what} halted; rerun to resume: {}", dir.display()),
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train { config, force, halt_after } => {
            let cfg = RunConfig::load(&config)?;
            let status = run::run_train(&cfg, force, &mut Budget(halt_after))?;
            report(status, "training", &cfg.output_dir);
        }
        Command::Sweep { config, force, halt_after } => {
            let cfg = RunConfig::load(&config)?;
            let status = run::run_sweep(&cfg, force, &mut Budget(halt_after))?;
            report(status, "sweep", &cfg.output_dir);
        }
        Command::Eval { config, checkpoint, partner, out, trace } => {
            let cfg = RunConfig::load(&config)?;
            let opts = EvalOptions {
                checkpoint,
                partners: partner,
                out,
                trace,
            };
            let (path, report) = run::run_eval(&cfg, &opts)?;
            for r in report.records.iter().filter(|r| !r.metric.starts_with("gap_") && !r.metric.starts_with("return_")) {
                let delta = r.delta.map_or(String::new(), |d| format!(" delta={d}"));
                let value = r.value.map_or("absent".to_string(), |v| format!("{v:.4}"));
                let se = r.stderr.map_or(String::new(), |s| format!(" ± {s:.4}"));
                println!("{:<18} {:<22}{delta} {:<20} {value}{se}", r.condition, r.pairing, r.metric);
            }
            println!("wrote {}", path.display());
        }
        Command::Solve { payoff, eps, tau, method, tol } => {
            let text = std::fs::read_to_string(&payoff)
                .map_err(|e| CliError::Config(format!("{}: {e}", payoff.display())))?;
            let game = parse_payoff_file(&text).map_err(|e| CliError::Config(format!("{}: {e}", payoff.display())))?;
            let method: Method = method.parse().map_err(|e| CliError::Config(format!("{e}")))?;
            let cfg = SolverConfig::symmetric(game.num_players(), eps, tau)
                .with_method(method)
                .with_tol(tol);
            let (profile, diag) = rqre_solve(&game, &cfg).map_err(|e| match e {
                rqre_core::stage_solver::SolverError::InvalidConfig(m) => CliError::Config(m),
                other => CliError::Runtime(other.to_string()),
            })?;
            for i in 0..game.num_players() {
                let p: Vec<String> = profile.player(i).iter().map(|x| format!("{x:.6}")).collect();
                println!("player {i}: [{}]", p.join(", "));
            }
            let gap = diag.exploitability.as_ref().map_or(f64::NAN, |g| g.max);
            println!(
                "method {:?}, iterations {}, residual {:.3e}, exploitability {:.3e}, certified {}",
                diag.method, diag.iterations, diag.residual, gap, diag.certified
            );
            if !diag.certified {
                return Err(CliError::Runtime(format!("solve not certified at tol {tol:e}")));
            }
        }
        Command::DemoInstability => {
            let cfg = SolverConfig::symmetric(2, 1.0, 0.0).with_tol(1e-12);
            let rows = nash_instability_demo(&[0.1, 0.01, 0.001], &cfg)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("{:>10} {:>12} {:>10} {:>14} {:>12} {:>12}", "eps_pert", "payoff_gap", "nash_jump", "nash_lipschitz", "rqre_change", "rqre_ratio");
            for r in rows {
                println!(
                    "{:>10} {:>12.4e} {:>10.4} {:>14.1} {:>12.4e} {:>12.4}",
                    r.epsilon_pert, r.alpha_gap, r.nash_jump, r.nash_lipschitz, r.rqre_change, r.rqre_ratio
                );
            }
        }
        Command::Audit { run_dir } => {
            let checks = run::run_audit(&run_dir)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(c) = checks.iter().find(|c| !c.passed) {
                return Err(CliError::Audit(format!("{}: {}", c.name, c.detail)));
            }
        }
    }
    Ok(())
}
