use std::collections::VecDeque;

use crate::action::{Action, ScenarioId};
use crate::observation::Observation;

/// A learner step held in the trace queue.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub observation: Observation,
    pub action: Action,
    pub step: usize,
    /// Sub-policy that produced `action`.
    pub scenario: ScenarioId,
}

/// Fixed-capacity FIFO of the most recent learner steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceQueue {
    capacity: usize,
    entries: VecDeque<TraceEntry>,
}

impl TraceQueue {
    /// Capacity is clamped to at least one entry.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, entry: TraceEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn pop_oldest(&mut self) -> Option<TraceEntry> {
        self.entries.pop_front()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Oldest first.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &TraceEntry> + ExactSizeIterator {
        self.entries.iter()
    }

    pub fn newest(&self) -> Option<&TraceEntry> {
        self.entries.back()
    }
}
