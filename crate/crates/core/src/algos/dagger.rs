use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hbc::EpisodeSamples;
use super::{
    backtrack, episode_rng, mirror_augment, virtual_offset_samples, AugmentConfig,
    BacktrackParams, BacktrackSchedule, DatasetStore, EpisodePlan, Learner, ScheduleKind,
    TraceEntry, TraceQueue, TrunkOrder,
};
use crate::action::ScenarioId;
use crate::error::{Error, Result};
use crate::expert::{
    check_intervention, expert_action, meta_label, DetectorHistory, ExpertConfig,
    InterventionReason,
};
use crate::policy::{soft_label, LabeledSample, Provenance, TrainConfig};
use crate::rollout::EpisodeSpec;
use crate::world::{StepEvent, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaggerConfig {
    pub iterations: usize,
    pub plan: EpisodePlan,
    /// Trace queue capacity L, also the backtrack horizon.
    pub queue_len: usize,
    pub schedule: ScheduleKind,
    pub backtrack: BacktrackParams,
    /// Hand control back to the learner once the detector clears instead of
    /// ending the episode.
    pub resume_after_intervention: bool,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub trunk_order: TrunkOrder,
    pub seed: u64,
}

impl DaggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::config("dagger.iterations", "must be >= 1"));
        }
        if self.queue_len < 1 {
            return Err(Error::config("dagger.queue_len", "must be >= 1"));
        }
        if self.plan.roads.is_empty() || self.plan.per_road == 0 {
            return Err(Error::config("dagger.plan", "needs at least one episode"));
        }
        if !(self.backtrack.w_floor >= 0.0 && self.backtrack.w_floor <= 1.0) {
            return Err(Error::config("dagger.backtrack.w_floor", "must be in [0, 1]"));
        }
        self.train.validate().map_err(|e| e.within("dagger"))
    }

    pub fn schedule(&self) -> BacktrackSchedule {
        BacktrackSchedule::new(self.schedule, self.queue_len)
    }
}

/// One expert takeover and what it added to `D_g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionEvent {
    pub iteration: usize,
    pub episode: usize,
    pub step: usize,
    pub reason: InterventionReason,
    pub scenario: ScenarioId,
    /// Normalized learner/expert action distance at the takeover.
    pub error: f64,
    /// Action samples appended for this event, augmentation included.
    pub samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub episodes: usize,
    pub steps: usize,
    /// Expert takeovers (LfI) or passive detector firings (vanilla).
    pub interventions: usize,
    pub episodes_with_intervention: usize,
    pub meta_mismatches: usize,
    pub collisions: usize,
    pub off_path: usize,
    pub meta_increment: usize,
    pub sub_increment: [usize; ScenarioId::COUNT],
    pub events: Vec<InterventionEvent>,
}

impl IterationReport {
    pub fn sub_increment_total(&self) -> usize {
        self.sub_increment.iter().sum()
    }
}

#[derive(Default)]
struct EpisodeOutcome {
    samples: EpisodeSamples,
    events: Vec<InterventionEvent>,
    steps: usize,
    mismatches: usize,
    collisions: usize,
    off_path: usize,
    passive_fires: usize,
}

fn push_with_mirror<R: Rng>(
    out: &mut Vec<LabeledSample>,
    sample: LabeledSample,
    augment: &AugmentConfig,
    rng: &mut R,
) -> usize {
    if augment.mirror {
        let m = mirror_augment(&sample, augment.mirror_jitter, rng);
        out.push(sample);
        out.push(m);
        2
    } else {
        out.push(sample);
        1
    }
}

fn count_events(o: &mut EpisodeOutcome, events: &[StepEvent]) {
    o.steps += 1;
    if events.contains(&StepEvent::Collision) {
        o.collisions += 1;
    }
    if events.contains(&StepEvent::OffPath) {
        o.off_path += 1;
    }
}

fn lfi_episode<L: Learner>(
    learner: &L,
    expert: &ExpertConfig,
    cfg: &DaggerConfig,
    spec: EpisodeSpec,
    iteration: usize,
    index: usize,
) -> Result<EpisodeOutcome> {
    let mut rng = episode_rng(cfg.seed, iteration, index);
    let schedule = cfg.schedule();
    let mut world = World::new(spec.world_config())?;
    let mut obs = world.observe();
    let mut queue = TraceQueue::new(cfg.queue_len);
    let mut history = DetectorHistory::new();
    let mut expert_control = false;
    let mut o = EpisodeOutcome::default();
    let sigma = (cfg.train.steer_sigma, cfg.train.speed_sigma);

    while !world.is_terminated() {
        let truth = meta_label(&world);
        let (chosen, learner_action) = learner.decide(&world, &obs)?;
        let mut end_after_step = false;
        let action = if chosen != truth {
            o.samples
                .meta
                .push(LabeledSample::meta(obs.clone(), truth, iteration));
            o.mismatches += 1;
            expert_action(expert, &world, truth)
        } else {
            let verdict = check_intervention(expert, &world, learner_action, &mut history);
            if expert_control && verdict.intervene {
                let a = expert_action(expert, &world, truth);
                let s = LabeledSample::action(
                    obs.clone(),
                    soft_label(a, sigma.0, sigma.1),
                    truth,
                    Provenance::Expert,
                    iteration,
                );
                let n = push_with_mirror(&mut o.samples.actions, s, &cfg.augment, &mut rng);
                if let Some(last) = o.events.last_mut() {
                    last.samples += n;
                }
                a
            } else if !verdict.intervene {
                expert_control = false;
                queue.push(TraceEntry {
                    observation: obs.clone(),
                    action: learner_action,
                    step: world.step_index(),
                    scenario: chosen,
                });
                learner_action
            } else {
                let a = expert_action(expert, &world, truth);
                queue.push(TraceEntry {
                    observation: obs.clone(),
                    action: learner_action,
                    step: world.step_index(),
                    scenario: chosen,
                });
                let relabeled =
                    backtrack(&queue, a, learner_action, &schedule, &cfg.backtrack, iteration)?;
                let mut n = 0;
                for s in relabeled {
                    n += push_with_mirror(&mut o.samples.actions, s, &cfg.augment, &mut rng);
                }
                o.events.push(InterventionEvent {
                    iteration,
                    episode: index,
                    step: world.step_index(),
                    reason: verdict.reason,
                    scenario: truth,
                    error: super::action_error(learner_action, a),
                    samples: n,
                });
                if cfg.resume_after_intervention {
                    queue.clear();
                    expert_control = true;
                } else {
                    end_after_step = true;
                }
                a
            }
        };
        let out = world.step(action)?;
        count_events(&mut o, &out.events);
        obs = out.observation;
        if end_after_step {
            break;
        }
    }
    Ok(o)
}

fn vanilla_episode<L: Learner>(
    learner: &L,
    expert: &ExpertConfig,
    cfg: &DaggerConfig,
    spec: EpisodeSpec,
    iteration: usize,
    index: usize,
) -> Result<EpisodeOutcome> {
    let mut rng = episode_rng(cfg.seed, iteration, index);
    let mut world = World::new(spec.world_config())?;
    let mut obs = world.observe();
    let mut history = DetectorHistory::new();
    let mut o = EpisodeOutcome::default();
    let sigma = (cfg.train.steer_sigma, cfg.train.speed_sigma);

    while !world.is_terminated() {
        let truth = meta_label(&world);
        let label = expert_action(expert, &world, truth);
        let (_, learner_action) = learner.decide(&world, &obs)?;
        if check_intervention(expert, &world, learner_action, &mut history).intervene {
            o.passive_fires += 1;
        }
        o.samples
            .meta
            .push(LabeledSample::meta(obs.clone(), truth, iteration));
        let s = LabeledSample::action(
            obs.clone(),
            soft_label(label, sigma.0, sigma.1),
            truth,
            Provenance::Expert,
            iteration,
        );
        push_with_mirror(&mut o.samples.actions, s, &cfg.augment, &mut rng);
        o.samples.actions.extend(virtual_offset_samples(
            &world,
            expert,
            truth,
            &cfg.augment.virtual_offsets,
            sigma.0,
            sigma.1,
            iteration,
        )?);
        let out = world.step(learner_action)?;
        count_events(&mut o, &out.events);
        obs = out.observation;
    }
    Ok(o)
}

fn merge(
    store: &mut DatasetStore,
    outcomes: Vec<Result<EpisodeOutcome>>,
    iteration: usize,
    vanilla: bool,
) -> Result<IterationReport> {
    let before = store.sizes(iteration);
    let mut report = IterationReport {
        iteration,
        ..Default::default()
    };
    for o in outcomes {
        let o = o?;
        report.episodes += 1;
        report.steps += o.steps;
        report.meta_mismatches += o.mismatches;
        report.collisions += o.collisions;
        report.off_path += o.off_path;
        let fires = if vanilla { o.passive_fires } else { o.events.len() };
        report.interventions += fires;
        if fires > 0 {
            report.episodes_with_intervention += 1;
        }
        report.events.extend(o.events);
        for s in o.samples.meta {
            store.push_meta(s)?;
        }
        for s in o.samples.actions {
            store.push_action(s)?;
        }
    }
    let after = store.sizes(iteration);
    report.meta_increment = after.meta - before.meta;
    report.sub_increment = std::array::from_fn(|g| after.sub[g] - before.sub[g]);
    Ok(report)
}

/// One round of learn-from-intervention data collection. Appends to `store`
/// and commits the iteration to its size log; does not retrain.
pub fn collect_lfi_iteration<L: Learner>(
    learner: &L,
    store: &mut DatasetStore,
    expert: &ExpertConfig,
    cfg: &DaggerConfig,
    iteration: usize,
) -> Result<IterationReport> {
    let specs = cfg.plan.episodes(iteration);
    let outcomes: Vec<_> = specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| lfi_episode(learner, expert, cfg, *s, iteration, i))
        .collect();
    let report = merge(store, outcomes, iteration, false)?;
    store.commit_iteration(iteration);
    Ok(report)
}

/// One round of vanilla DAgger: the learner drives, the expert labels every
/// visited state.
pub fn collect_vanilla_iteration<L: Learner>(
    learner: &L,
    store: &mut DatasetStore,
    expert: &ExpertConfig,
    cfg: &DaggerConfig,
    iteration: usize,
) -> Result<IterationReport> {
    let specs = cfg.plan.episodes(iteration);
    let outcomes: Vec<_> = specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| vanilla_episode(learner, expert, cfg, *s, iteration, i))
        .collect();
    let report = merge(store, outcomes, iteration, true)?;
    store.commit_iteration(iteration);
    Ok(report)
}

/// Iterations `1..=cfg.iterations` of learn-from-intervention DAgger,
/// refitting the learner on the aggregated data after each.
pub fn run_lfi_dagger<L: Learner>(
    learner: &mut L,
    store: &mut DatasetStore,
    expert: &ExpertConfig,
    cfg: &DaggerConfig,
) -> Result<Vec<IterationReport>> {
    cfg.validate()?;
    let mut reports = Vec::with_capacity(cfg.iterations);
    for it in 1..=cfg.iterations {
        let r = collect_lfi_iteration(learner, store, expert, cfg, it)?;
        learner.fit(store, &cfg.train, cfg.trunk_order)?;
        reports.push(r);
    }
    Ok(reports)
}

pub fn run_vanilla_dagger<L: Learner>(
    learner: &mut L,
    store: &mut DatasetStore,
    expert: &ExpertConfig,
    cfg: &DaggerConfig,
) -> Result<Vec<IterationReport>> {
    cfg.validate()?;
    let mut reports = Vec::with_capacity(cfg.iterations);
    for it in 1..=cfg.iterations {
        let r = collect_vanilla_iteration(learner, store, expert, cfg, it)?;
        learner.fit(store, &cfg.train, cfg.trunk_order)?;
        reports.push(r);
    }
    Ok(reports)
}
