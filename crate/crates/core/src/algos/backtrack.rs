use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::queue::TraceQueue;
use crate::action::{Action, N_SPEED, N_STEER};
use crate::error::{Error, Result};
use crate::policy::{soft_label, LabeledSample, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    Logarithmic,
    Exponential,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [
        ScheduleKind::Linear,
        ScheduleKind::Logarithmic,
        ScheduleKind::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Logarithmic => "log",
            ScheduleKind::Exponential => "exp",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "lin" => Ok(ScheduleKind::Linear),
            "log" | "logarithmic" => Ok(ScheduleKind::Logarithmic),
            "exp" | "exponential" => Ok(ScheduleKind::Exponential),
            _ => Err(Error::Parse(format!("unknown backtrack schedule `{s}`"))),
        }
    }
}

/// Decay of the expert correction with the number of steps `k` before the
/// intervention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacktrackSchedule {
    pub kind: ScheduleKind,
    pub horizon: usize,
}

impl BacktrackSchedule {
    pub fn new(kind: ScheduleKind, horizon: usize) -> Self {
        Self {
            kind,
            horizon: horizon.max(1),
        }
    }

    pub fn weight(&self, k: usize) -> f64 {
        if k >= self.horizon {
            return 0.0;
        }
        let (k, l) = (k as f64, self.horizon as f64);
        match self.kind {
            ScheduleKind::Linear => (1.0 - k / l).max(0.0),
            ScheduleKind::Exponential => (-k / (l / 3.0)).exp(),
            ScheduleKind::Logarithmic => (1.0 - (1.0 + k).ln() / (1.0 + l).ln()).max(0.0),
        }
    }
}

/// Label parameters shared by every backtracked sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktrackParams {
    /// Lower bound on the schedule weight used for the loss multiplier.
    pub w_floor: f64,
    pub steer_sigma: f64,
    pub speed_sigma: f64,
}

impl Default for BacktrackParams {
    fn default() -> Self {
        Self {
            w_floor: 0.05,
            steer_sigma: 0.5,
            speed_sigma: 0.0,
        }
    }
}

/// Mean of the steering and speed bin distances, each scaled to [0, 1].
pub fn action_error(a: Action, b: Action) -> f64 {
    let steer = a.steer_bin().abs_diff(b.steer_bin()) as f64 / (N_STEER - 1) as f64;
    let speed = a.speed_bin().abs_diff(b.speed_bin()) as f64 / (N_SPEED - 1) as f64;
    0.5 * (steer + speed)
}

/// Relabels the queued learner steps after an intervention. The newest queue
/// entry is the intervention step (`k = 0`). Samples are returned oldest
/// first and routed by each entry's own scenario.
pub fn backtrack(
    queue: &TraceQueue,
    expert_action: Action,
    learner_action_at_t: Action,
    schedule: &BacktrackSchedule,
    params: &BacktrackParams,
    iteration: usize,
) -> Result<Vec<LabeledSample>> {
    if queue.is_empty() {
        return Err(Error::EmptyQueue);
    }
    let e = action_error(learner_action_at_t, expert_action);
    let expert = soft_label(expert_action, params.steer_sigma, params.speed_sigma);
    let n = queue.len().min(schedule.horizon);
    let skip = queue.len() - n;
    Ok(queue
        .iter()
        .skip(skip)
        .enumerate()
        .map(|(i, entry)| {
            let k = n - 1 - i;
            let w = schedule.weight(k);
            let learner = soft_label(entry.action, params.steer_sigma, params.speed_sigma);
            let target = learner.mix(&expert, w).with_weight(e * w.max(params.w_floor));
            LabeledSample::action(
                entry.observation.clone(),
                target,
                entry.scenario,
                Provenance::LearnerBacktracked,
                iteration,
            )
        })
        .collect())
}
