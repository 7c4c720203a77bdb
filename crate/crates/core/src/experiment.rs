//! End-to-end runs: warm start, DAgger arms, per-iteration evaluation,
//! persisted records and the aligned metric tables printed from them.
//!
//! An output directory holds `record.json`, `metrics.txt` and one checkpoint
//! per evaluated policy under `checkpoints/`. Checkpoint references in the
//! record are relative to the record's directory and carry a digest of the
//! checkpoint bytes, so [`replay`] can detect a swapped file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::action::ScenarioId;
use crate::algos::{
    collect_lfi_iteration, collect_vanilla_iteration, run_hbc, DatasetStore, IterationReport,
    Learner, ScheduleKind, SizeLogEntry,
};
use crate::checkpoint;
use crate::config::{EvalSection, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::{dataset_growth_report, eval_attempts, eval_twi, median, AttemptResult, TwiRecord};
use crate::expert::ExpertConfig;
use crate::policy::{PolicyBundle, TrainingReport};

pub const RECORD_FORMAT: &str = "pednav-experiment";
pub const RECORD_VERSION: u32 = 1;

pub const ATTEMPT_SCENARIOS: [ScenarioId; 2] = [ScenarioId::Confront, ScenarioId::Cross];
pub const TWI_SCENARIOS: [ScenarioId; 2] = [ScenarioId::PathFollow, ScenarioId::PedFollow];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Ordered by scenario, then road, then seed.
    pub attempts: Vec<AttemptResult>,
    /// Ordered by scenario, then road, then seed.
    pub twi: Vec<TwiRecord>,
}

impl Evaluation {
    pub fn successes(&self, scenario: ScenarioId, road: u64) -> usize {
        self.attempts
            .iter()
            .filter(|a| a.scenario == scenario && a.road_seed == road && a.success)
            .count()
    }

    /// Median TWI and median oracle course time over the runs on `road`.
    pub fn twi_medians(&self, scenario: ScenarioId, road: u64) -> (f64, f64) {
        let runs: Vec<&TwiRecord> = self
            .twi
            .iter()
            .filter(|r| r.scenario == scenario && r.road_seed == road)
            .collect();
        let twi: Vec<f64> = runs.iter().map(|r| r.twi_seconds).collect();
        let course: Vec<f64> = runs.iter().map(|r| r.course_time_seconds).collect();
        (median(&twi), median(&course))
    }
}

/// Attempt and TWI protocols over the configured roads and seeds.
pub fn evaluate<L: Learner>(
    learner: &L,
    expert: &ExpertConfig,
    eval: &EvalSection,
) -> Result<Evaluation> {
    let seeds = eval.attempt_seeds();
    let mut attempts = Vec::new();
    for sc in ATTEMPT_SCENARIOS {
        for &road in &eval.attempt_roads {
            attempts.extend(eval_attempts(learner, sc, road, &seeds)?);
        }
    }
    let seeds = eval.twi_seeds();
    let mut twi = Vec::new();
    for sc in TWI_SCENARIOS {
        for &road in &eval.twi_roads {
            twi.extend(eval_twi(learner, sc, expert, road, &seeds)?);
        }
    }
    Ok(Evaluation { attempts, twi })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRef {
    /// Path relative to the record directory; empty when nothing was saved.
    pub file: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 0 is the warm start.
    pub iteration: usize,
    pub checkpoint: CheckpointRef,
    pub sizes: SizeLogEntry,
    /// Collection report; absent for the warm start.
    pub report: Option<IterationReport>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArmKind {
    Lfi { schedule: ScheduleKind },
    Vanilla,
}

impl ArmKind {
    pub fn name(&self) -> String {
        match self {
            ArmKind::Lfi { schedule } => format!("lfi-{}", schedule.name()),
            ArmKind::Vanilla => "vanilla".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub kind: ArmKind,
    /// Warm start first, then one entry per DAgger iteration.
    pub iterations: Vec<IterationRecord>,
}

impl ArmRecord {
    pub fn size_log(&self) -> Vec<SizeLogEntry> {
        self.iterations.iter().map(|r| r.sizes).collect()
    }

    /// Success counts for iterations `1..`, in order.
    pub fn attempt_series(&self, scenario: ScenarioId, road: u64) -> Vec<usize> {
        self.iterations[1..]
            .iter()
            .map(|r| r.evaluation.successes(scenario, road))
            .collect()
    }

    /// (median TWI, median course time) for iterations `1..`, in order.
    pub fn twi_series(&self, scenario: ScenarioId, road: u64) -> Vec<(f64, f64)> {
        self.iterations[1..]
            .iter()
            .map(|r| r.evaluation.twi_medians(scenario, road))
            .collect()
    }

    pub fn reports(&self) -> Vec<&IterationReport> {
        self.iterations.iter().filter_map(|r| r.report.as_ref()).collect()
    }
}

/// Every seed the run consumed, as derived from the config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub experiment: u64,
    pub policy_init: u64,
    pub hbc_episodes: u64,
    pub hbc_training: u64,
    pub dagger_episodes: u64,
    pub dagger_augment: u64,
    pub dagger_training: u64,
    pub attempt_seeds: Vec<u64>,
    pub twi_seeds: Vec<u64>,
}

impl SeedRecord {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let h = cfg.hbc_config();
        let d = cfg.dagger_config();
        Self {
            experiment: cfg.seed,
            policy_init: h.policy_seed,
            hbc_episodes: h.plan.seed_base,
            hbc_training: h.train.rng_seed,
            dagger_episodes: d.plan.seed_base,
            dagger_augment: d.seed,
            dagger_training: d.train.rng_seed,
            attempt_seeds: cfg.eval.attempt_seeds(),
            twi_seeds: cfg.eval.twi_seeds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub seeds: SeedRecord,
    pub warm_start_training: Vec<TrainingReport>,
    /// The configured LfI schedule first, then any comparison schedules, then
    /// the vanilla arm.
    pub arms: Vec<ArmRecord>,
}

impl ExperimentRecord {
    pub fn primary(&self) -> &ArmRecord {
        &self.arms[0]
    }

    pub fn arm(&self, kind: ArmKind) -> Option<&ArmRecord> {
        self.arms.iter().find(|a| a.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.format != RECORD_FORMAT || r.version != RECORD_VERSION {
            return Err(Error::Parse(format!(
                "not a {RECORD_FORMAT} v{RECORD_VERSION} record"
            )));
        }
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// A trained starting point for the DAgger arms.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub store: DatasetStore,
    pub bundle: PolicyBundle,
    pub training: Vec<TrainingReport>,
}

impl WarmStart {
    pub fn train(cfg: &ExperimentConfig) -> Result<Self> {
        let (store, bundle, training) = run_hbc(&cfg.expert, &cfg.hbc_config())?;
        Ok(Self {
            store,
            bundle,
            training,
        })
    }
}

fn arms_for(cfg: &ExperimentConfig) -> Vec<ArmKind> {
    let primary = cfg.dagger.schedule;
    let mut arms = vec![ArmKind::Lfi { schedule: primary }];
    if cfg.dagger.compare_schedules {
        for s in ScheduleKind::ALL {
            if s != primary {
                arms.push(ArmKind::Lfi { schedule: s });
            }
        }
    }
    if cfg.dagger.vanilla {
        arms.push(ArmKind::Vanilla);
    }
    arms
}

struct Output<'a> {
    dir: Option<&'a Path>,
}

impl Output<'_> {
    fn checkpoint(&self, bundle: &PolicyBundle, name: &str) -> Result<CheckpointRef> {
        let bytes = checkpoint::encode(bundle);
        let digest = checkpoint::digest(&bytes);
        let file = match self.dir {
            Some(dir) => {
                let rel = format!("checkpoints/{name}.ckpt");
                fs::create_dir_all(dir.join("checkpoints"))?;
                fs::write(dir.join(&rel), &bytes)?;
                rel
            }
            None => String::new(),
        };
        Ok(CheckpointRef { file, digest })
    }
}

/// Full run from a config: warm start, then every configured arm.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentRecord> {
    run_experiment_with(cfg, out_dir, &mut |_| {})
}

/// [`run_experiment`] with a progress callback.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    progress: &mut dyn FnMut(&str),
) -> Result<ExperimentRecord> {
    cfg.validate()?;
    progress("warm start: collecting expert data and training");
    let warm = WarmStart::train(cfg)?;
    run_from_warm_start(cfg, &warm, out_dir, progress)
}

/// Runs every configured arm from an existing warm start.
pub fn run_from_warm_start(
    cfg: &ExperimentConfig,
    warm: &WarmStart,
    out_dir: Option<&Path>,
    progress: &mut dyn FnMut(&str),
) -> Result<ExperimentRecord> {
    cfg.validate()?;
    if warm.store.size_log().is_empty() {
        return Err(Error::EmptyDataset("warm-start size log".into()));
    }
    let out = Output { dir: out_dir };
    let dagger = cfg.dagger_config();

    progress("warm start: evaluating");
    let warm_record = IterationRecord {
        iteration: 0,
        checkpoint: out.checkpoint(&warm.bundle, "warm-start")?,
        sizes: *warm.store.size_log().last().expect("checked above"),
        report: None,
        evaluation: evaluate(&warm.bundle, &cfg.expert, &cfg.eval)?,
    };

    let mut arms = Vec::new();
    for kind in arms_for(cfg) {
        let mut bundle = warm.bundle.clone();
        let mut store = warm.store.clone();
        let mut iterations = vec![warm_record.clone()];
        let arm_cfg = match kind {
            ArmKind::Lfi { schedule } => crate::algos::DaggerConfig {
                schedule,
                ..dagger.clone()
            },
            ArmKind::Vanilla => dagger.clone(),
        };
        for it in 1..=arm_cfg.iterations {
            progress(&format!("{}: iteration {it} collecting", kind.name()));
            let report = match kind {
                ArmKind::Lfi { .. } => {
                    collect_lfi_iteration(&bundle, &mut store, &cfg.expert, &arm_cfg, it)?
                }
                ArmKind::Vanilla => {
                    collect_vanilla_iteration(&bundle, &mut store, &cfg.expert, &arm_cfg, it)?
                }
            };
            progress(&format!("{}: iteration {it} training", kind.name()));
            bundle.fit(&store, &arm_cfg.train, arm_cfg.trunk_order)?;
            progress(&format!("{}: iteration {it} evaluating", kind.name()));
            iterations.push(IterationRecord {
                iteration: it,
                checkpoint: out.checkpoint(&bundle, &format!("{}-it{it}", kind.name()))?,
                sizes: store.sizes(it),
                report: Some(report),
                evaluation: evaluate(&bundle, &cfg.expert, &cfg.eval)?,
            });
        }
        arms.push(ArmRecord { kind, iterations });
    }

    let record = ExperimentRecord {
        format: RECORD_FORMAT.into(),
        version: RECORD_VERSION,
        config: cfg.clone(),
        seeds: SeedRecord::from_config(cfg),
        warm_start_training: warm.training.clone(),
        arms,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("record.json"), record.to_json())?;
        fs::write(dir.join("metrics.txt"), metric_tables(&record))?;
    }
    Ok(record)
}

/// Left-aligned first column, right-aligned value columns.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate().take(cols) {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (i, w) in widths.iter().enumerate() {
                let c = cells.get(i).map(String::as_str).unwrap_or("");
                if i == 0 {
                    let _ = write!(s, "{c:<w$}");
                } else {
                    let _ = write!(s, "  {c:>w$}");
                }
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out += &line(&rule);
        for r in &self.rows {
            out += &line(r);
        }
        out
    }
}

fn short(s: ScenarioId) -> &'static str {
    match s {
        ScenarioId::PathFollow => "path",
        ScenarioId::Confront => "confront",
        ScenarioId::PedFollow => "pedfollow",
        ScenarioId::Cross => "cross",
    }
}

pub fn attempts_table(record: &ExperimentRecord) -> String {
    let eval = &record.config.eval;
    let mut header = vec!["arm".to_string(), "iter".to_string()];
    for sc in ATTEMPT_SCENARIOS {
        for road in &eval.attempt_roads {
            header.push(format!("{}@{road}", short(sc)));
        }
    }
    let mut t = Table::new(header);
    for arm in &record.arms {
        for it in &arm.iterations {
            let mut row = vec![arm.kind.name(), it.iteration.to_string()];
            for sc in ATTEMPT_SCENARIOS {
                for &road in &eval.attempt_roads {
                    row.push(format!("{}/{}", it.evaluation.successes(sc, road), eval.attempts));
                }
            }
            t.row(row);
        }
    }
    t.render()
}

pub fn twi_table(record: &ExperimentRecord) -> String {
    let eval = &record.config.eval;
    let mut header = vec!["arm".to_string(), "iter".to_string()];
    for sc in TWI_SCENARIOS {
        for road in &eval.twi_roads {
            header.push(format!("{}@{road}", short(sc)));
        }
    }
    let mut t = Table::new(header);
    for arm in &record.arms {
        for it in &arm.iterations {
            let mut row = vec![arm.kind.name(), it.iteration.to_string()];
            for sc in TWI_SCENARIOS {
                for &road in &eval.twi_roads {
                    let (twi, course) = it.evaluation.twi_medians(sc, road);
                    row.push(format!("{twi:.1}/{course:.1}"));
                }
            }
            t.row(row);
        }
    }
    t.render()
}

pub fn growth_table(record: &ExperimentRecord) -> String {
    let mut header = vec!["arm", "iter", "meta"];
    let names: Vec<String> = ScenarioId::ALL
        .iter()
        .flat_map(|s| [format!("{}+", short(*s)), format!("{}=", short(*s))])
        .collect();
    header.extend(names.iter().map(String::as_str));
    header.push("converged");
    let mut t = Table::new(header);
    for arm in &record.arms {
        let log = arm.size_log();
        let rows = dataset_growth_report(&log).unwrap_or_default();
        let mut first = vec![arm.kind.name(), "0".into(), log[0].meta.to_string()];
        for g in ScenarioId::ALL {
            first.push("-".into());
            first.push(log[0].sub[g.index()].to_string());
        }
        first.push("-".into());
        t.row(first);
        for (row, entry) in rows.iter().zip(&log[1..]) {
            let mut cells = vec![arm.kind.name(), row.iteration.to_string(), entry.meta.to_string()];
            for g in ScenarioId::ALL {
                cells.push(row.increments[g.index()].to_string());
                cells.push(row.cumulative[g.index()].to_string());
            }
            cells.push(
                row.converged
                    .iter()
                    .map(|c| if *c { 'y' } else { 'n' })
                    .collect(),
            );
            t.row(cells);
        }
    }
    t.render()
}

pub fn interventions_table(record: &ExperimentRecord) -> String {
    let mut t = Table::new([
        "arm",
        "iter",
        "episodes",
        "steps",
        "interventions",
        "episodes_hit",
        "mismatches",
        "collisions",
        "off_path",
    ]);
    for arm in &record.arms {
        for r in arm.reports() {
            t.row([
                arm.kind.name(),
                r.iteration.to_string(),
                r.episodes.to_string(),
                r.steps.to_string(),
                r.interventions.to_string(),
                r.episodes_with_intervention.to_string(),
                r.meta_mismatches.to_string(),
                r.collisions.to_string(),
                r.off_path.to_string(),
            ]);
        }
    }
    t.render()
}

/// One row per LfI arm: interventions per iteration and final-iteration
/// metrics. Empty when the record holds a single LfI arm.
pub fn schedule_comparison_table(record: &ExperimentRecord) -> String {
    let lfi: Vec<&ArmRecord> = record
        .arms
        .iter()
        .filter(|a| matches!(a.kind, ArmKind::Lfi { .. }))
        .collect();
    if lfi.len() < 2 {
        return String::new();
    }
    let eval = &record.config.eval;
    let mut t = Table::new([
        "schedule",
        "interventions/iter",
        "confront",
        "cross",
        "twi/course",
        "final |D_g|",
    ]);
    for arm in lfi {
        let last = arm.iterations.last().expect("warm start present");
        let ints: Vec<String> = arm
            .reports()
            .iter()
            .map(|r| r.interventions.to_string())
            .collect();
        let total = |sc| -> usize {
            eval.attempt_roads
                .iter()
                .map(|&r| last.evaluation.successes(sc, r))
                .sum()
        };
        let n = eval.attempts * eval.attempt_roads.len();
        let (mut twi, mut course) = (0.0, 0.0);
        for sc in TWI_SCENARIOS {
            for &road in &eval.twi_roads {
                let (a, b) = last.evaluation.twi_medians(sc, road);
                twi += a;
                course += b;
            }
        }
        t.row([
            arm.kind.name(),
            ints.join(","),
            format!("{}/{n}", total(ScenarioId::Confront)),
            format!("{}/{n}", total(ScenarioId::Cross)),
            format!("{:.3}", twi / course),
            last.sizes.sub.iter().sum::<usize>().to_string(),
        ]);
    }
    t.render()
}

/// Every table, in a fixed order. A pure function of the record.
pub fn metric_tables(record: &ExperimentRecord) -> String {
    let mut out = String::new();
    let sections = [
        ("successful attempts", attempts_table(record)),
        ("time without intervention, median s / median course s", twi_table(record)),
        ("D_g growth (+ increment, = cumulative)", growth_table(record)),
        ("collection", interventions_table(record)),
        ("schedule comparison", schedule_comparison_table(record)),
    ];
    for (title, body) in sections {
        if body.is_empty() {
            continue;
        }
        let _ = writeln!(out, "## {title}\n");
        out += &body;
        out.push('\n');
    }
    out
}

/// One checkpoint whose re-evaluation disagreed with the record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayMismatch {
    pub arm: String,
    pub iteration: usize,
    pub what: String,
}

/// Re-evaluates every recorded checkpoint on the recorded seeds. Checkpoint
/// paths resolve against `dir`. Returns the number of checkpoints checked and
/// every disagreement found.
pub fn replay(record: &ExperimentRecord, dir: &Path) -> Result<(usize, Vec<ReplayMismatch>)> {
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for arm in &record.arms {
        for it in &arm.iterations {
            if it.checkpoint.file.is_empty() {
                return Err(Error::Checkpoint(format!(
                    "{} iteration {} has no saved checkpoint",
                    arm.kind.name(),
                    it.iteration
                )));
            }
            let path: PathBuf = dir.join(&it.checkpoint.file);
            let bytes = fs::read(&path)?;
            let mut miss = |what: String| {
                mismatches.push(ReplayMismatch {
                    arm: arm.kind.name(),
                    iteration: it.iteration,
                    what,
                })
            };
            if checkpoint::digest(&bytes) != it.checkpoint.digest {
                miss(format!("{} digest differs", path.display()));
                continue;
            }
            let bundle = checkpoint::decode(&bytes)?;
            let again = evaluate(&bundle, &record.config.expert, &record.config.eval)?;
            if again.attempts != it.evaluation.attempts {
                miss("attempt results differ".into());
            }
            if again.twi != it.evaluation.twi {
                miss("TWI records differ".into());
            }
            checked += 1;
        }
    }
    Ok((checked, mismatches))
}
