//! Run directories: training with resumable checkpoints, sweeps, evaluation
//! and audits.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.toml              canonical config snapshot
//! manifest.json            config hash, code version, progress
//! train.csv                one row per completed episode
//! checkpoints/designs.bin  ridge designs and potential audits
//! checkpoints/trainer.json buffers and counters needed to resume
//! eval.csv                 written by `eval`
//! ```

use std::fs::{self, File};
use std::hash::Hash;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rqre_core::envs::{GenerativeGame, MarkovGame};
use rqre_core::eval::{self, EvalReport, SeatPolicy};
use rqre_core::linear_fa::{read_checkpoint, write_checkpoint, StageCheckpoint};
use rqre_core::ovi::{
    optimism_audit, HookAction, OviError, TrainConfig, TrainHooks, TrainRow, TrainedAgents, Trainer,
    TrainerSnapshot,
};
use serde::{Deserialize, Serialize};

use crate::config::{Env, RunConfig};
use crate::{with_env, CliError};

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_CSV: &str = "train.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const DESIGNS_FILE: &str = "designs.bin";
pub const TRAINER_FILE: &str = "trainer.json";

/// Episodes averaged for the summary's final-window return.
pub const SUMMARY_WINDOW: usize = 200;
pub const OPTIMISM_PROBES: usize = 1000;
pub const OPTIMISM_TOL: f64 = 1e-9;
pub const OPTIMISM_PASS: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub code_version: String,
    pub env: String,
    pub episodes: usize,
    pub completed_episodes: usize,
    pub complete: bool,
    #[serde(default)]
    pub final_team_return_ma: Option<f64>,
    /// mean team return over the last `SUMMARY_WINDOW` episodes
    #[serde(default)]
    pub last_window_return: Option<f64>,
    #[serde(default)]
    pub potential_holds: Option<bool>,
    #[serde(default)]
    pub clipped_targets: Option<usize>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Option<Self>, CliError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// finished earlier with the same config
    Skipped,
    /// stopped by the episode budget before finishing
    Halted,
}

/// Episodes this invocation may still run; `None` is unlimited.
#[derive(Debug, Clone, Copy)]
pub struct Budget(pub Option<usize>);

impl Budget {
    fn exhausted(&self) -> bool {
        self.0 == Some(0)
    }
}

/// Removes the files a run writes, leaving anything else in place.
fn clear_run(dir: &Path) -> Result<(), CliError> {
    for f in [CONFIG_FILE, MANIFEST_FILE, TRAIN_CSV, EVAL_CSV, SUMMARY_CSV] {
        let p = dir.join(f);
        if p.exists() {
            fs::remove_file(p)?;
        }
    }
    let ck = dir.join(CHECKPOINT_DIR);
    if ck.exists() {
        fs::remove_dir_all(ck)?;
    }
    Ok(())
}

/// Trains into `cfg.output_dir`, resuming from the last checkpoint when the
/// directory holds an unfinished run of the same config.
pub fn run_train(cfg: &RunConfig, force: bool, budget: &mut Budget) -> Result<RunStatus, CliError> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    let hash = cfg.hash();
    if let Some(m) = Manifest::read(&dir)? {
        if m.config_hash != hash && !force {
            return Err(CliError::Config(format!(
                "{} holds a run of a different config; pass --force to overwrite it",
                dir.display()
            )));
        }
        if force {
            clear_run(&dir)?;
        } else if m.complete {
            return Ok(RunStatus::Skipped);
        }
    }
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(CONFIG_FILE), cfg.snapshot())?;
    let env = cfg.build_env()?;
    let tc = cfg.train_config(env.spec())?;
    let mut manifest = Manifest {
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        env: env.spec().name.clone(),
        episodes: tc.episodes,
        completed_episodes: 0,
        complete: false,
        final_team_return_ma: None,
        last_window_return: None,
        potential_holds: None,
        clipped_targets: None,
    };
    manifest.write(&dir)?;
    if budget.exhausted() {
        return Ok(RunStatus::Halted);
    }
    let outcome = with_env!(&env, g => train_in(g, tc, cfg.checkpoint_every, &dir, budget))?;
    manifest.completed_episodes = outcome.completed;
    if outcome.halted {
        manifest.write(&dir)?;
        return Ok(RunStatus::Halted);
    }
    let returns = read_team_returns(&dir.join(TRAIN_CSV))?;
    let tail = &returns[returns.len().saturating_sub(SUMMARY_WINDOW)..];
    manifest.complete = true;
    manifest.final_team_return_ma = outcome.final_ma;
    manifest.last_window_return = (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64);
    manifest.potential_holds = Some(outcome.potential_holds);
    manifest.clipped_targets = Some(outcome.clipped_targets);
    manifest.write(&dir)?;
    Ok(RunStatus::Completed)
}

struct TrainOutcome {
    completed: usize,
    halted: bool,
    final_ma: Option<f64>,
    potential_holds: bool,
    clipped_targets: usize,
}

struct RunHooks {
    csv: BufWriter<File>,
    dir: PathBuf,
    every: usize,
    budget: Option<usize>,
    error: Option<CliError>,
}

impl<S: Serialize> TrainHooks<S> for RunHooks {
    fn episode_end(&mut self, row: &TrainRow) -> HookAction {
        if let Err(e) = writeln!(self.csv, "{}", row.csv_line()) {
            self.error = Some(e.into());
            return HookAction::Stop;
        }
        match &mut self.budget {
            Some(0) => HookAction::Stop,
            Some(n) => {
                *n -= 1;
                if *n == 0 {
                    HookAction::Stop
                } else {
                    HookAction::Continue
                }
            }
            None => HookAction::Continue,
        }
    }

    fn snapshot(&mut self, snap: &TrainerSnapshot<S>) -> Result<(), OviError> {
        self.csv
            .flush()
            .map_err(|e| OviError::Snapshot(format!("flushing {TRAIN_CSV}: {e}")))?;
        save_checkpoint(&self.dir, snap).map_err(|e| OviError::Snapshot(e.to_string()))
    }

    fn snapshot_every(&self) -> Option<usize> {
        Some(self.every)
    }
}

/// Writes a checkpoint into a fresh directory and swaps it in, so a kill
/// leaves either the old or the new checkpoint.
fn save_checkpoint<S: Serialize>(dir: &Path, snap: &TrainerSnapshot<S>) -> Result<(), CliError> {
    let tmp = dir.join(format!("{CHECKPOINT_DIR}.tmp"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    let mut w = BufWriter::new(File::create(tmp.join(DESIGNS_FILE))?);
    write_checkpoint(&mut w, &snap.stages).map_err(|e| CliError::Runtime(e.to_string()))?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(tmp.join(TRAINER_FILE))?);
    serde_json::to_writer(&mut w, snap).map_err(|e| CliError::Runtime(e.to_string()))?;
    w.flush()?;
    drop(w);
    let target = dir.join(CHECKPOINT_DIR);
    if target.exists() {
        fs::remove_dir_all(&target)?;
    }
    fs::rename(&tmp, &target)?;
    Ok(())
}

pub fn load_stages(path: &Path) -> Result<Vec<StageCheckpoint>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    read_checkpoint(BufReader::new(file)).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn load_snapshot<S: serde::de::DeserializeOwned>(dir: &Path) -> Result<Option<TrainerSnapshot<S>>, CliError> {
    let ck = dir.join(CHECKPOINT_DIR);
    let (designs, trainer) = (ck.join(DESIGNS_FILE), ck.join(TRAINER_FILE));
    if !designs.exists() || !trainer.exists() {
        return Ok(None);
    }
    let file = File::open(&trainer)?;
    let mut snap: TrainerSnapshot<S> = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", trainer.display())))?;
    snap.stages = load_stages(&designs)?;
    Ok(Some(snap))
}

/// Keeps the header and the first `rows` data lines.
fn truncate_csv(path: &Path, rows: usize) -> Result<(), CliError> {
    let text = fs::read_to_string(path)?;
    let mut kept = String::new();
    for line in text.lines().take(rows + 1) {
        kept.push_str(line);
        kept.push('\n');
    }
    if kept.lines().count() != rows + 1 {
        return Err(CliError::Runtime(format!(
            "{} has fewer rows than the checkpoint's {rows} episodes",
            path.display()
        )));
    }
    fs::write(path, kept)?;
    Ok(())
}

fn read_team_returns(path: &Path) -> Result<Vec<f64>, CliError> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines().skip(1) {
        let line = line?;
        let v = line
            .split(',')
            .nth(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::Runtime(format!("malformed row in {}: {line}", path.display())))?;
        out.push(v);
    }
    Ok(out)
}

fn train_in<G>(env: &G, tc: TrainConfig, every: usize, dir: &Path, budget: &mut Budget) -> Result<TrainOutcome, CliError>
where
    G: MarkovGame,
    G::State: Eq + Hash,
{
    let csv_path = dir.join(TRAIN_CSV);
    let tc_episodes = tc.episodes;
    let trainer = match load_snapshot::<G::State>(dir)? {
        Some(snap) if csv_path.exists() => {
            truncate_csv(&csv_path, snap.next_episode)?;
            Trainer::resume(env, tc, snap)?
        }
        _ => {
            fs::write(&csv_path, format!("{}\n", TrainRow::CSV_HEADER))?;
            Trainer::new(env, tc)?
        }
    };
    let start = trainer.next_episode();
    let episodes = tc_episodes;
    let csv = BufWriter::new(fs::OpenOptions::new().append(true).open(&csv_path)?);
    let mut hooks = RunHooks {
        csv,
        dir: dir.to_path_buf(),
        every,
        budget: budget.0,
        error: None,
    };
    let (_, log) = trainer.run(&mut hooks)?;
    if let Some(e) = hooks.error.take() {
        return Err(e);
    }
    hooks.csv.flush()?;
    let ran = log.rows.len();
    if let Some(b) = &mut budget.0 {
        *b = b.saturating_sub(ran);
    }
    let completed = start + ran;
    Ok(TrainOutcome {
        completed,
        halted: completed < episodes,
        final_ma: log.rows.last().map(|r| r.team_return_ma),
        potential_holds: log.potential_holds(),
        clipped_targets: log.clipped_targets,
    })
}

pub const SUMMARY_HEADER: &str =
    "tau,epsilon,episodes,final_team_return_ma,last_window_return,potential_holds,clipped_targets";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// One run per `(τ, ε)` cell, then `summary.csv` in the sweep directory.
/// Finished cells are skipped, so an interrupted sweep resumes where it
/// stopped.
pub fn run_sweep(cfg: &RunConfig, force: bool, budget: &mut Budget) -> Result<RunStatus, CliError> {
    cfg.validate()?;
    let axes = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep needs a [sweep] table with tau and epsilon axes".into()))?;
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join(CONFIG_FILE), cfg.snapshot())?;
    let mut rows = vec![SUMMARY_HEADER.to_string()];
    let mut all_skipped = true;
    for &tau in &axes.tau {
        for &eps in &axes.epsilon {
            let cell = cfg.cell(tau, eps);
            let status = run_train(&cell, force, budget)?;
            if status == RunStatus::Halted {
                return Ok(RunStatus::Halted);
            }
            all_skipped &= status == RunStatus::Skipped;
            let m = Manifest::read(&cell.output_dir)?
                .ok_or_else(|| CliError::Runtime(format!("{} has no manifest", cell.output_dir.display())))?;
            rows.push(format!(
                "{tau},{eps},{},{},{},{},{}",
                m.completed_episodes,
                opt(m.final_team_return_ma),
                opt(m.last_window_return),
                opt(m.potential_holds),
                opt(m.clipped_targets)
            ));
        }
    }
    let mut text = rows.join("\n");
    text.push('\n');
    write_atomic(&cfg.output_dir.join(SUMMARY_CSV), text.as_bytes())?;
    Ok(if all_skipped { RunStatus::Skipped } else { RunStatus::Completed })
}

/// Locates the designs file of a run directory, a checkpoint directory, or
/// the file itself.
pub fn designs_path(path: &Path) -> PathBuf {
    if path.is_file() {
        path.to_path_buf()
    } else if path.join(DESIGNS_FILE).is_file() {
        path.join(DESIGNS_FILE)
    } else {
        path.join(CHECKPOINT_DIR).join(DESIGNS_FILE)
    }
}

pub fn load_agents(cfg: &RunConfig, env: &Env, checkpoint: &Path) -> Result<TrainedAgents, CliError> {
    let tc = cfg.train_config(env.spec())?;
    let stages = load_stages(&designs_path(checkpoint))?;
    TrainedAgents::from_checkpoint(env.spec(), &tc, &stages).map_err(|e| CliError::Runtime(e.to_string()))
}

pub struct EvalOptions {
    pub checkpoint: PathBuf,
    /// extra agents for cross-play, by name
    pub partners: Vec<(String, PathBuf)>,
    /// defaults to `eval.csv` beside the checkpoint's run
    pub out: Option<PathBuf>,
    /// print one grid rollout frame by frame
    pub trace: bool,
}

/// Self-play, perturbed-partner retention, cross-play with any partners,
/// grid outcome fractions and matrix-game exploitability. Writes the tidy
/// CSV and returns its path.
pub fn run_eval(cfg: &RunConfig, opts: &EvalOptions) -> Result<(PathBuf, EvalReport), CliError> {
    cfg.validate()?;
    let env = cfg.build_env()?;
    let agents = load_agents(cfg, &env, &opts.checkpoint)?;
    let partners = opts
        .partners
        .iter()
        .map(|(n, p)| Ok((n.clone(), load_agents(cfg, &env, p)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let ec = &cfg.eval;
    let mut report = EvalReport::default();
    with_env!(&env, g => {
        let r = eval::self_play(&agents, g, ec)?;
        report.add_self_play("agents", &r, ec);
        if !ec.deltas.is_empty() {
            let curve = eval::perturbed_partner(&agents, &agents, g, ec)?;
            report.add_retention("agents|agents", &curve, ec);
        }
        if !partners.is_empty() {
            let mut named: Vec<(&str, &dyn SeatPolicy<_>)> = vec![("agents", &agents)];
            for (n, a) in &partners {
                named.push((n.as_str(), a));
            }
            let entries = eval::cross_play(&named, g, ec)?;
            report.add_cross_play(&entries, ec);
        }
    });
    match &env {
        Env::Grid(g) => {
            let f = eval::outcome_fractions(&agents, g, ec)?;
            report.add_outcomes("agents", f.as_ref(), ec);
            if opts.trace {
                let mut rng = ChaCha8Rng::seed_from_u64(ec.seed);
                let seats: [&dyn SeatPolicy<_>; 2] = [&agents, &agents];
                let mut t = 0;
                print!("{}", g.reset(&mut ChaCha8Rng::seed_from_u64(ec.seed)).render());
                eval::rollout(g, &seats, None, &mut rng, |s| {
                    t += 1;
                    println!("-- step {t}");
                    print!("{}", s.render());
                })?;
            }
        }
        Env::Matrix(g) => {
            let trace = eval::exploitability_trace(
                std::slice::from_ref(&agents),
                g,
                &(),
                g.payoff(),
                cfg.train.reward_scale,
                &agents.solver,
                1,
            )?;
            report.add_exploitability("agents", &trace, ec.seed);
        }
        Env::Synthetic(_) => {}
    }
    let out = opts.out.clone().unwrap_or_else(|| cfg.output_dir.join(EVAL_CSV));
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    report.write_csv(BufWriter::new(File::create(&out)?))?;
    Ok((out, report))
}

/// One audit line.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Elliptical-potential audit of every regression and, for synthetic games,
/// the optimism audit against the exact kernel.
pub fn run_audit(dir: &Path) -> Result<Vec<AuditCheck>, CliError> {
    let cfg_path = dir.join(CONFIG_FILE);
    if !dir.join(MANIFEST_FILE).exists() || !cfg_path.exists() {
        return Err(CliError::Runtime(format!("{} holds no run", dir.display())));
    }
    let cfg = RunConfig::parse(&fs::read_to_string(&cfg_path)?)?;
    let env = cfg.build_env()?;
    let tc = cfg.train_config(env.spec())?;
    let mut checks = Vec::new();
    let stages = match load_stages(&designs_path(dir)) {
        Ok(s) => s,
        Err(e) => {
            checks.push(AuditCheck {
                name: "checkpoint".into(),
                passed: false,
                detail: e.to_string(),
            });
            return Ok(checks);
        }
    };
    for (r, s) in stages.iter().enumerate() {
        if let Err(e) = s.design.validate() {
            checks.push(AuditCheck {
                name: format!("design[{r}]"),
                passed: false,
                detail: e.to_string(),
            });
        }
        let p = s.audit.report();
        checks.push(AuditCheck {
            name: format!("potential[{r}]"),
            passed: p.passes(),
            detail: format!("{:.4} <= {:.4} over {} steps", p.cumulative, p.bound, p.steps),
        });
    }
    if checks.iter().any(|c| !c.passed) {
        return Ok(checks);
    }
    if let Env::Synthetic(g) = &env {
        let agents = TrainedAgents::from_checkpoint(g.spec(), &tc, &stages)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        checks.push(optimism_check(g, &agents, &tc)?);
    }
    Ok(checks)
}

fn optimism_check<G>(env: &G, agents: &TrainedAgents, tc: &TrainConfig) -> Result<AuditCheck, CliError>
where
    G: GenerativeGame,
    G::State: Eq + Hash,
{
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let r = optimism_audit(agents, env, tc, OPTIMISM_PROBES, OPTIMISM_TOL, &mut rng)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(AuditCheck {
        name: "optimism".into(),
        passed: r.fraction >= OPTIMISM_PASS,
        detail: format!(
            "{}/{} probes optimistic ({:.3}, need {OPTIMISM_PASS}); worst gap {:.3e}",
            r.optimistic, r.probes, r.fraction, r.worst_gap
        ),
    })
}

