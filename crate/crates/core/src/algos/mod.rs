//! Hierarchical behavior cloning, vanilla DAgger and learn-from-intervention
//! DAgger, with the trace queue, backtracking and data augmentation they use.

mod augment;
mod backtrack;
mod dagger;
mod hbc;
mod queue;
mod store;

pub use augment::{
    mirror_augment, mirror_with_shift, reflect_steer, virtual_offset_samples, AugmentConfig,
};
pub use backtrack::{
    action_error, backtrack, BacktrackParams, BacktrackSchedule, ScheduleKind,
};
pub use dagger::{
    collect_lfi_iteration, collect_vanilla_iteration, run_lfi_dagger, run_vanilla_dagger,
    DaggerConfig, InterventionEvent, IterationReport,
};
pub use hbc::{collect_expert, run_hbc, HbcConfig};
pub use queue::{TraceEntry, TraceQueue};
pub use store::{DatasetStore, SizeLogEntry};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, ScenarioId};
use crate::error::{Error, Result};
use crate::expert::{expert_action, meta_label, ExpertConfig};
use crate::observation::Observation;
use crate::policy::{train, Head, LabeledSample, PolicyBundle, Target, TrainConfig, TrainingReport};
use crate::rollout::EpisodeSpec;
use crate::world::World;

/// Anything that picks a scenario and an action from a state.
pub trait Learner: Sync {
    fn decide(&self, world: &World, obs: &Observation) -> Result<(ScenarioId, Action)>;

    /// Refits on the aggregated datasets. A no-op by default.
    fn fit(&mut self, _store: &DatasetStore, _cfg: &TrainConfig, _order: TrunkOrder) -> Result<Vec<TrainingReport>> {
        Ok(Vec::new())
    }
}

impl Learner for PolicyBundle {
    fn decide(&self, _world: &World, obs: &Observation) -> Result<(ScenarioId, Action)> {
        self.act(obs)
    }

    fn fit(&mut self, store: &DatasetStore, cfg: &TrainConfig, order: TrunkOrder) -> Result<Vec<TrainingReport>> {
        train_bundle(self, store, cfg, order)
    }
}

/// The expert posing as a learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLearner(pub ExpertConfig);

impl Learner for OracleLearner {
    fn decide(&self, world: &World, _obs: &Observation) -> Result<(ScenarioId, Action)> {
        let g = meta_label(world);
        Ok((g, expert_action(&self.0, world, g)))
    }
}

/// How the meta head and the sub-heads take turns on the shared trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrunkOrder {
    /// Meta head for all epochs, then each sub-head for all epochs.
    Sequential,
    /// One epoch per head in turn, repeated for the configured epochs.
    Interleaved,
}

/// Copy of `samples` with each meta weight multiplied by
/// `n / (k * n_c)`, where `n_c` counts samples of the same scenario and `k`
/// the scenarios present. The mean weight stays unchanged.
pub fn balance_meta_weights(samples: &[LabeledSample]) -> Vec<LabeledSample> {
    let mut counts = [0usize; ScenarioId::COUNT];
    for s in samples {
        counts[s.scenario.index()] += 1;
    }
    let present = counts.iter().filter(|c| **c > 0).count().max(1);
    let n = samples.len() as f64;
    samples
        .iter()
        .map(|s| {
            let mut s = s.clone();
            let scale = n / (present as f64 * counts[s.scenario.index()] as f64);
            if let Target::Meta { weight, .. } = &mut s.target {
                *weight *= scale;
            }
            s
        })
        .collect()
}

/// Trains the meta head on `D_h` and every sub-head on its `D_g`. Heads with
/// no data are skipped. Reports come back in head order, one per call
/// (`Sequential`) or one per head with all epochs merged (`Interleaved`).
pub fn train_bundle(
    bundle: &mut PolicyBundle,
    store: &DatasetStore,
    cfg: &TrainConfig,
    order: TrunkOrder,
) -> Result<Vec<TrainingReport>> {
    let balanced;
    let mut heads: Vec<(Head, &[LabeledSample])> = Vec::new();
    if !store.meta().is_empty() {
        if cfg.balance_meta {
            balanced = balance_meta_weights(store.meta());
            heads.push((Head::Meta, &balanced));
        } else {
            heads.push((Head::Meta, store.meta()));
        }
    }
    for g in ScenarioId::ALL {
        if !store.sub(g).is_empty() {
            heads.push((Head::Scenario(g), store.sub(g)));
        }
    }
    if heads.is_empty() {
        return Err(Error::EmptyDataset("every head".into()));
    }
    let seed_for = |i: usize, epoch: usize| {
        cfg.rng_seed
            .wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9))
            .wrapping_add(epoch as u64)
    };
    match order {
        TrunkOrder::Sequential => heads
            .iter()
            .enumerate()
            .map(|(i, (head, data))| {
                let c = TrainConfig {
                    rng_seed: seed_for(i, 0),
                    ..*cfg
                };
                train(bundle, data, *head, &c)
            })
            .collect(),
        TrunkOrder::Interleaved => {
            let mut reports: Vec<TrainingReport> = Vec::new();
            for epoch in 0..cfg.epochs {
                for (i, (head, data)) in heads.iter().enumerate() {
                    let c = TrainConfig {
                        epochs: 1,
                        rng_seed: seed_for(i, epoch),
                        ..*cfg
                    };
                    let r = train(bundle, data, *head, &c)?;
                    match reports.get_mut(i) {
                        Some(acc) => acc.epoch_losses.extend(r.epoch_losses),
                        None => reports.push(r),
                    }
                }
            }
            Ok(reports)
        }
    }
}

/// Episodes of one collection round: every scenario on every road,
/// `per_road` times, with seeds that differ between rounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodePlan {
    pub roads: Vec<u64>,
    pub per_road: usize,
    pub seed_base: u64,
}

impl EpisodePlan {
    pub fn episodes(&self, round: usize) -> Vec<EpisodeSpec> {
        let mut out = Vec::with_capacity(self.roads.len() * self.per_road * ScenarioId::COUNT);
        for j in 0..self.per_road {
            for &road in &self.roads {
                for scenario in ScenarioId::ALL {
                    let seed = self
                        .seed_base
                        .wrapping_add(round as u64 * 1_000_003)
                        .wrapping_add((j as u64) * 7919)
                        .wrapping_add(road.wrapping_mul(31));
                    out.push(EpisodeSpec::new(scenario, road, seed));
                }
            }
        }
        out
    }
}

pub(crate) fn episode_rng(seed: u64, round: usize, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ (round as u64).wrapping_mul(0x2545_f491_4f6c_dd1d) ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    )
}
