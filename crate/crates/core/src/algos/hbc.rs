use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{episode_rng, mirror_augment, train_bundle, virtual_offset_samples, AugmentConfig,
    DatasetStore, EpisodePlan, TrunkOrder};
use crate::action::ScenarioId;
use crate::error::{Error, Result};
use crate::expert::{expert_action, meta_label, ExpertConfig};
use crate::policy::{soft_label, LabeledSample, PolicyBundle, Provenance, TrainConfig, TrainingReport};
use crate::rollout::{run_controller, EpisodeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbcConfig {
    pub plan: EpisodePlan,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    pub hidden: usize,
    pub policy_seed: u64,
    pub trunk_order: TrunkOrder,
}

#[derive(Default)]
pub(crate) struct EpisodeSamples {
    pub meta: Vec<LabeledSample>,
    pub actions: Vec<LabeledSample>,
}

fn expert_episode(
    spec: EpisodeSpec,
    expert: &ExpertConfig,
    augment: &AugmentConfig,
    train: &TrainConfig,
    seed: u64,
    index: usize,
) -> Result<EpisodeSamples> {
    let mut rng = episode_rng(seed, 0, index);
    let mut out = EpisodeSamples::default();
    run_controller(spec.world_config(), |w, obs| {
        let g = meta_label(w);
        let a = expert_action(expert, w, g);
        out.meta.push(LabeledSample::meta(obs.clone(), g, 0));
        let base = LabeledSample::action(
            obs.clone(),
            soft_label(a, train.steer_sigma, train.speed_sigma),
            g,
            Provenance::Expert,
            0,
        );
        if augment.mirror {
            let m = mirror_augment(&base, augment.mirror_jitter, &mut rng);
            out.actions.push(base);
            out.actions.push(m);
        } else {
            out.actions.push(base);
        }
        out.actions.extend(virtual_offset_samples(
            w,
            expert,
            g,
            &augment.virtual_offsets,
            train.steer_sigma,
            train.speed_sigma,
            0,
        )?);
        Ok(Some(a))
    })?;
    Ok(out)
}

/// Expert rollouts labeled with the ground-truth scenario and the expert
/// action at every step. Augmentation applies to the action samples only.
pub fn collect_expert(
    specs: &[EpisodeSpec],
    expert: &ExpertConfig,
    augment: &AugmentConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<DatasetStore> {
    let episodes: Vec<Result<EpisodeSamples>> = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| expert_episode(*spec, expert, augment, train, seed, i))
        .collect();
    let mut store = DatasetStore::new();
    for ep in episodes {
        let ep = ep?;
        for s in ep.meta {
            store.push_meta(s)?;
        }
        for s in ep.actions {
            store.push_action(s)?;
        }
    }
    Ok(store)
}

/// Collects expert data, trains a fresh bundle and returns the warm start.
pub fn run_hbc(
    expert: &ExpertConfig,
    cfg: &HbcConfig,
) -> Result<(DatasetStore, PolicyBundle, Vec<TrainingReport>)> {
    expert.validate()?;
    let specs = cfg.plan.episodes(0);
    let first = specs
        .first()
        .ok_or_else(|| Error::config("hbc.plan", "no episodes"))?;
    let dims = first.world_config().raster_dims();
    let mut store = collect_expert(&specs, expert, &cfg.augment, &cfg.train, cfg.policy_seed)?;
    for g in ScenarioId::ALL {
        if store.sub(g).is_empty() {
            return Err(Error::MissingScenario(g));
        }
    }
    store.commit_iteration(0);
    let mut bundle = PolicyBundle::new(dims, cfg.hidden, cfg.policy_seed);
    let reports = train_bundle(&mut bundle, &store, &cfg.train, cfg.trunk_order)?;
    Ok((store, bundle, reports))
}
