use serde::{Deserialize, Serialize};

use crate::action::ScenarioId;
use crate::error::{Error, Result};
use crate::policy::{LabeledSample, Target};

/// Cumulative dataset sizes at the end of an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeLogEntry {
    pub iteration: usize,
    pub meta: usize,
    pub sub: [usize; ScenarioId::COUNT],
}

/// Aggregated datasets: `D_h` for the meta head and one `D_g` per scenario.
/// Samples are only ever appended.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetStore {
    meta: Vec<LabeledSample>,
    sub: [Vec<LabeledSample>; ScenarioId::COUNT],
    log: Vec<SizeLogEntry>,
}

impl DatasetStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_meta(&mut self, sample: LabeledSample) -> Result<()> {
        if !matches!(sample.target, Target::Meta { .. }) {
            return Err(Error::EmptyDataset("D_h expects meta targets".into()));
        }
        self.meta.push(sample);
        Ok(())
    }

    /// Appends to `D_g` of the sample's own scenario.
    pub fn push_action(&mut self, sample: LabeledSample) -> Result<()> {
        if !matches!(sample.target, Target::Action(_)) {
            return Err(Error::EmptyDataset("D_g expects action targets".into()));
        }
        self.sub[sample.scenario.index()].push(sample);
        Ok(())
    }

    pub fn meta(&self) -> &[LabeledSample] {
        &self.meta
    }

    pub fn sub(&self, scenario: ScenarioId) -> &[LabeledSample] {
        &self.sub[scenario.index()]
    }

    pub fn sizes(&self, iteration: usize) -> SizeLogEntry {
        SizeLogEntry {
            iteration,
            meta: self.meta.len(),
            sub: std::array::from_fn(|g| self.sub[g].len()),
        }
    }

    /// Records the current sizes as the end of `iteration`.
    pub fn commit_iteration(&mut self, iteration: usize) -> SizeLogEntry {
        let entry = self.sizes(iteration);
        self.log.push(entry);
        entry
    }

    pub fn size_log(&self) -> &[SizeLogEntry] {
        &self.log
    }

    /// Every sample, `D_h` first, then `D_g` in scenario order.
    pub fn iter_all(&self) -> impl Iterator<Item = &LabeledSample> {
        self.meta.iter().chain(self.sub.iter().flatten())
    }

    /// Rebuilds a store from samples in `iter_all` order plus a size log.
    pub fn from_parts(samples: Vec<LabeledSample>, log: Vec<SizeLogEntry>) -> Result<Self> {
        let mut store = Self::new();
        for s in samples {
            match s.target {
                Target::Meta { .. } => store.push_meta(s)?,
                Target::Action(_) => store.push_action(s)?,
            }
        }
        store.log = log;
        Ok(store)
    }
}
