//! Experiment configuration file (TOML).
//!
//! Every section is optional and falls back to the standard suite. Seeds for
//! the individual phases are derived from the top-level `seed`, so changing
//! it reseeds the whole experiment.
//!
//! ```toml
//! seed = 7
//! hidden = 128
//! trunk_order = "interleaved"
//!
//! [hbc]
//! roads = [101, 102, 103, 104, 201, 202, 203, 204, 205]
//! per_road = 1
//!
//! [dagger]
//! iterations = 5
//! queue_len = 50
//! schedule = "linear"
//!
//! [eval]
//! attempt_roads = [101, 102, 103, 104]
//! attempts = 20
//! twi_roads = [201, 202, 203, 204, 205]
//! ```

use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::algos::{
    AugmentConfig, BacktrackParams, DaggerConfig, EpisodePlan, HbcConfig, ScheduleKind,
    TrunkOrder,
};
use crate::error::{Error, Result};
use crate::expert::ExpertConfig;
use crate::policy::{TrainConfig, DEFAULT_HIDDEN};

pub const STANDARD_ATTEMPT_ROADS: [u64; 4] = [101, 102, 103, 104];
pub const STANDARD_TWI_ROADS: [u64; 5] = [201, 202, 203, 204, 205];

fn standard_roads() -> Vec<u64> {
    STANDARD_ATTEMPT_ROADS
        .iter()
        .chain(STANDARD_TWI_ROADS.iter())
        .copied()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbcSection {
    pub roads: Vec<u64>,
    pub per_road: usize,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
}

impl Default for HbcSection {
    fn default() -> Self {
        Self {
            roads: standard_roads(),
            per_road: 1,
            augment: AugmentConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaggerSection {
    pub iterations: usize,
    pub roads: Vec<u64>,
    pub per_road: usize,
    pub queue_len: usize,
    pub schedule: ScheduleKind,
    pub resume_after_intervention: bool,
    pub backtrack: BacktrackParams,
    pub augment: AugmentConfig,
    pub train: TrainConfig,
    /// Also run the vanilla DAgger arm from the same warm start.
    pub vanilla: bool,
    /// Also run LfI-DAgger once per schedule kind and tabulate the results.
    pub compare_schedules: bool,
}

impl Default for DaggerSection {
    fn default() -> Self {
        Self {
            iterations: 5,
            roads: standard_roads(),
            per_road: 3,
            queue_len: 50,
            schedule: ScheduleKind::Linear,
            resume_after_intervention: false,
            backtrack: BacktrackParams::default(),
            augment: AugmentConfig::default(),
            train: TrainConfig::default(),
            vanilla: false,
            compare_schedules: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub attempt_roads: Vec<u64>,
    /// Attempts per road for Confront and Cross.
    pub attempts: usize,
    pub attempt_seed_base: u64,
    pub twi_roads: Vec<u64>,
    /// Seeded runs per road for PathFollow and PedFollow.
    pub twi_runs: usize,
    pub twi_seed_base: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            attempt_roads: STANDARD_ATTEMPT_ROADS.to_vec(),
            attempts: 20,
            attempt_seed_base: 5000,
            twi_roads: STANDARD_TWI_ROADS.to_vec(),
            twi_runs: 5,
            twi_seed_base: 7000,
        }
    }
}

impl EvalSection {
    pub fn attempt_seeds(&self) -> Vec<u64> {
        (0..self.attempts as u64).map(|i| self.attempt_seed_base + i).collect()
    }

    pub fn twi_seeds(&self) -> Vec<u64> {
        (0..self.twi_runs as u64).map(|i| self.twi_seed_base + i).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub hidden: usize,
    pub trunk_order: TrunkOrder,
    pub expert: ExpertConfig,
    pub hbc: HbcSection,
    pub dagger: DaggerSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            hidden: DEFAULT_HIDDEN,
            trunk_order: TrunkOrder::Interleaved,
            expert: ExpertConfig::default(),
            hbc: HbcSection::default(),
            dagger: DaggerSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn nonempty(path: &str, v: &[u64]) -> Result<()> {
    if v.is_empty() {
        Err(Error::config(path, "must list at least one road"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("line {}", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_else(|| "<document>".into());
            Error::config(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("hidden", "must be >= 1"));
        }
        self.expert.validate()?;
        nonempty("hbc.roads", &self.hbc.roads)?;
        if self.hbc.per_road == 0 {
            return Err(Error::config("hbc.per_road", "must be >= 1"));
        }
        self.hbc.train.validate().map_err(|e| e.within("hbc"))?;
        self.dagger_config().validate()?;
        nonempty("eval.attempt_roads", &self.eval.attempt_roads)?;
        nonempty("eval.twi_roads", &self.eval.twi_roads)?;
        if self.eval.attempts == 0 {
            return Err(Error::config("eval.attempts", "must be >= 1"));
        }
        if self.eval.twi_runs == 0 {
            return Err(Error::config("eval.twi_runs", "must be >= 1"));
        }
        Ok(())
    }

    pub fn hbc_config(&self) -> HbcConfig {
        HbcConfig {
            plan: EpisodePlan {
                roads: self.hbc.roads.clone(),
                per_road: self.hbc.per_road,
                seed_base: self.seed.wrapping_mul(1_000_033).wrapping_add(1),
            },
            augment: self.hbc.augment.clone(),
            train: TrainConfig {
                rng_seed: self.seed.wrapping_add(self.hbc.train.rng_seed),
                ..self.hbc.train
            },
            hidden: self.hidden,
            policy_seed: self.seed,
            trunk_order: self.trunk_order,
        }
    }

    pub fn dagger_config(&self) -> DaggerConfig {
        let d = &self.dagger;
        DaggerConfig {
            iterations: d.iterations,
            plan: EpisodePlan {
                roads: d.roads.clone(),
                per_road: d.per_road,
                seed_base: self.seed.wrapping_mul(1_000_033).wrapping_add(100),
            },
            queue_len: d.queue_len,
            schedule: d.schedule,
            backtrack: d.backtrack,
            resume_after_intervention: d.resume_after_intervention,
            augment: d.augment.clone(),
            train: TrainConfig {
                rng_seed: self.seed.wrapping_add(d.train.rng_seed).wrapping_add(17),
                ..d.train
            },
            trunk_order: self.trunk_order,
            seed: self.seed.wrapping_add(3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_standard_suite() {
        assert_eq!(
            ExperimentConfig::from_toml_str("").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.dagger.schedule = ScheduleKind::Exponential;
        c.eval.attempts = 3;
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let e = ExperimentConfig::from_toml_str("[dagger]\nqueue_len = 0\n").unwrap_err();
        assert!(e.to_string().contains("dagger.queue_len"), "{e}");
        let e = ExperimentConfig::from_toml_str("[hbc.train]\nbatch_size = 0\n").unwrap_err();
        assert!(e.to_string().contains("hbc.train.batch_size"), "{e}");
        let e = ExperimentConfig::from_toml_str("[eval]\nattempts = 0\n").unwrap_err();
        assert!(e.to_string().contains("eval.attempts"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[dagger]\nqueue = 3\n").is_err());
    }
}
