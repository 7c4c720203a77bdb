use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pednav::algos::{collect_expert, train_bundle, ScheduleKind};
use pednav::config::ExperimentConfig;
use pednav::experiment::{
    evaluate, growth_table, metric_tables, replay, run_from_warm_start, ExperimentRecord, Table,
    WarmStart, ATTEMPT_SCENARIOS, TWI_SCENARIOS,
};
use pednav::gateway::{serve, Session, SessionConfig, ServeConfig};
use pednav::rollout::EpisodeSpec;
use pednav::{checkpoint, dataset, PolicyBundle, Result, ScenarioId};

#[derive(Parser)]
#[command(name = "pednav", version, about = "Pedestrian navigation imitation learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Missing sections use the standard suite.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Attempts,
    Twi,
    Growth,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Vanilla,
}

#[derive(Clone, Copy, ValueEnum)]
enum Schedule {
    Linear,
    Log,
    Exp,
}

impl From<Schedule> for ScheduleKind {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::Linear => ScheduleKind::Linear,
            Schedule::Log => ScheduleKind::Logarithmic,
            Schedule::Exp => ScheduleKind::Exponential,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the expert on the behavior-cloning plan and save the dataset.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a fresh policy on a saved dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// DAgger iterations from a warm start, with evaluation after each.
    Dagger {
        #[command(flatten)]
        common: Common,
        /// Warm-start checkpoint; trained from scratch when omitted.
        #[arg(long, requires = "data")]
        checkpoint: Option<PathBuf>,
        /// Dataset the warm-start checkpoint was trained on.
        #[arg(long, requires = "checkpoint")]
        data: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        queue_len: Option<usize>,
        #[arg(long, value_enum)]
        backtrack: Option<Schedule>,
        #[arg(long)]
        resume_after_intervention: bool,
        /// Also run this baseline from the same warm start.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        /// Also run every other backtrack schedule.
        #[arg(long)]
        compare_schedules: bool,
        /// Output directory for the record, tables and checkpoints.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint, or tabulate dataset growth from a record.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        protocol: Protocol,
        #[arg(long, required_unless_present = "record")]
        checkpoint: Option<PathBuf>,
        /// `record.json` written by `dagger` (growth protocol).
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Re-evaluate every checkpoint of a recorded run and compare.
    Replay {
        /// `record.json`; checkpoints resolve relative to its directory.
        #[arg(long)]
        record: PathBuf,
    },
    /// Serve a live session over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "path_follow")]
        scenario: ScenarioId,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Road seed; defaults to `--seed`.
        #[arg(long)]
        road: Option<u64>,
        #[arg(long, default_value_t = pednav::gateway::DEFAULT_TICK_HZ)]
        hz: f64,
        #[arg(long, default_value_t = 50)]
        queue_len: usize,
        #[arg(long, value_enum, default_value = "linear")]
        backtrack: Schedule,
        /// Session log to write.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        max_ticks: Option<u64>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn progress(start: Instant) -> impl FnMut(&str) {
    move |m| eprintln!("[{:7.1}s] {m}", start.elapsed().as_secs_f64())
}

fn attempts_summary(eval: &pednav::experiment::Evaluation, cfg: &ExperimentConfig) -> String {
    let mut t = Table::new(["scenario", "road", "successes"]);
    for sc in ATTEMPT_SCENARIOS {
        for &road in &cfg.eval.attempt_roads {
            t.row([
                sc.to_string(),
                road.to_string(),
                format!("{}/{}", eval.successes(sc, road), cfg.eval.attempts),
            ]);
        }
    }
    t.render()
}

fn twi_summary(eval: &pednav::experiment::Evaluation, cfg: &ExperimentConfig) -> String {
    let mut t = Table::new(["scenario", "road", "median twi s", "median course s", "ratio"]);
    for sc in TWI_SCENARIOS {
        for &road in &cfg.eval.twi_roads {
            let (twi, course) = eval.twi_medians(sc, road);
            t.row([
                sc.to_string(),
                road.to_string(),
                format!("{twi:.1}"),
                format!("{course:.1}"),
                format!("{:.2}", twi / course),
            ]);
        }
    }
    t.render()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Collect { common, out } => {
            let cfg = common.load()?;
            let hbc = cfg.hbc_config();
            let specs = hbc.plan.episodes(0);
            let mut store = collect_expert(&specs, &cfg.expert, &hbc.augment, &hbc.train, hbc.policy_seed)?;
            let sizes = store.commit_iteration(0);
            dataset::save_store(&store, &out)?;
            println!(
                "{} episodes, meta {}, sub {:?} -> {}",
                specs.len(),
                sizes.meta,
                sizes.sub,
                out.display()
            );
        }
        Command::Train { common, data, out } => {
            let cfg = common.load()?;
            let hbc = cfg.hbc_config();
            let store = dataset::load_store(&data)?;
            let dims = store
                .meta()
                .first()
                .map(|s| s.observation.dims())
                .ok_or_else(|| pednav::Error::EmptyDataset("meta".into()))?;
            let mut bundle = PolicyBundle::new(dims, cfg.hidden, hbc.policy_seed);
            let reports = train_bundle(&mut bundle, &store, &hbc.train, hbc.trunk_order)?;
            checkpoint::save(&bundle, &out)?;
            for r in &reports {
                println!("{:?}: final loss {:.4}", r.head, r.final_loss().unwrap_or(f64::NAN));
            }
            println!("-> {}", out.display());
        }
        Command::Dagger {
            common,
            checkpoint: ckpt,
            data,
            iterations,
            queue_len,
            backtrack,
            resume_after_intervention,
            baseline,
            compare_schedules,
            out,
        } => {
            let mut cfg = common.load()?;
            if let Some(n) = iterations {
                cfg.dagger.iterations = n;
            }
            if let Some(l) = queue_len {
                cfg.dagger.queue_len = l;
            }
            if let Some(s) = backtrack {
                cfg.dagger.schedule = s.into();
            }
            cfg.dagger.resume_after_intervention |= resume_after_intervention;
            cfg.dagger.vanilla |= baseline.is_some();
            cfg.dagger.compare_schedules |= compare_schedules;
            cfg.validate()?;
            let start = Instant::now();
            let mut log = progress(start);
            let warm = match (ckpt, data) {
                (Some(c), Some(d)) => WarmStart {
                    store: dataset::load_store(d)?,
                    bundle: checkpoint::load(c)?,
                    training: Vec::new(),
                },
                _ => {
                    log("warm start: collecting expert data and training");
                    WarmStart::train(&cfg)?
                }
            };
            let record = run_from_warm_start(&cfg, &warm, Some(&out), &mut log)?;
            println!("{}", metric_tables(&record));
            eprintln!("total {:.1}s, record in {}", start.elapsed().as_secs_f64(), out.display());
        }
        Command::Eval {
            common,
            protocol,
            checkpoint: ckpt,
            record,
        } => match protocol {
            Protocol::Growth => {
                let path = record.ok_or_else(|| {
                    pednav::Error::config("--record", "growth needs a dagger record")
                })?;
                println!("{}", growth_table(&ExperimentRecord::load(path)?));
            }
            Protocol::Attempts | Protocol::Twi => {
                let cfg = common.load()?;
                let bundle = match ckpt {
                    Some(c) => checkpoint::load(c)?,
                    None => return Err(pednav::Error::config("--checkpoint", "required")),
                };
                let table = if matches!(protocol, Protocol::Attempts) {
                    let e = evaluate_only(&bundle, &cfg, true)?;
                    attempts_summary(&e, &cfg)
                } else {
                    let e = evaluate_only(&bundle, &cfg, false)?;
                    twi_summary(&e, &cfg)
                };
                println!("{table}");
            }
        },
        Command::Replay { record } => {
            let rec = ExperimentRecord::load(&record)?;
            let dir = record.parent().unwrap_or(Path::new("."));
            let (checked, mismatches) = replay(&rec, dir)?;
            for m in &mismatches {
                println!("MISMATCH {} iteration {}: {}", m.arm, m.iteration, m.what);
            }
            println!("{checked} checkpoints replayed, {} mismatches", mismatches.len());
            return Ok(mismatches.is_empty());
        }
        Command::Serve {
            port,
            checkpoint: ckpt,
            scenario,
            seed,
            road,
            hz,
            queue_len,
            backtrack,
            log,
            max_ticks,
            host,
        } => {
            let bundle = checkpoint::load(&ckpt)?;
            let spec = EpisodeSpec::new(scenario, road.unwrap_or(seed), seed);
            let session = Session::new(
                format!("session-{seed}"),
                bundle,
                spec,
                SessionConfig {
                    queue_len,
                    schedule: backtrack.into(),
                    ..SessionConfig::default()
                },
            )?;
            let addr = format!("{host}:{port}")
                .parse()
                .map_err(|e| pednav::Error::config("--host", format!("{e}")))?;
            let handle = serve(
                session,
                ServeConfig {
                    addr,
                    tick_hz: hz,
                    max_ticks,
                    log_path: log,
                },
            )?;
            eprintln!("listening on ws://{}", handle.local_addr());
            let session = handle.join()?;
            println!(
                "session {} ended after {} ticks, {} samples",
                session.id(),
                session.state().tick,
                session.delta().len()
            );
        }
    }
    Ok(true)
}

/// Runs only the attempt protocol (`attempts`) or only the TWI protocol.
fn evaluate_only(
    bundle: &PolicyBundle,
    cfg: &ExperimentConfig,
    attempts: bool,
) -> Result<pednav::experiment::Evaluation> {
    let mut eval = cfg.eval.clone();
    if attempts {
        eval.twi_runs = 0;
    } else {
        eval.attempts = 0;
    }
    evaluate(bundle, &cfg.expert, &eval)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
