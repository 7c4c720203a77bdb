//! Evaluation protocols: successful attempts, time without intervention and
//! dataset growth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::ScenarioId;
use crate::algos::{IterationReport, Learner, SizeLogEntry};
use crate::error::{Error, Result};
use crate::expert::{check_intervention, DetectorHistory, ExpertConfig, InterventionReason};
use crate::rollout::{run_controller, run_expert, EpisodeSpec, EpisodeTrace};
use crate::world::StepEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureReason {
    Collision,
    OffPath,
    Timeout,
    /// Reached the goal on a crossing course without ever stopping for the
    /// pedestrian.
    NoYield,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptResult {
    pub scenario: ScenarioId,
    pub road_seed: u64,
    pub seed: u64,
    pub success: bool,
    pub failure_reason: Option<FailureReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwiRecord {
    pub scenario: ScenarioId,
    pub road_seed: u64,
    pub seed: u64,
    pub twi_seconds: f64,
    pub course_time_seconds: f64,
    /// First detector reason, if it fired.
    pub reason: Option<InterventionReason>,
}

/// Forward extent of the corridor in which a stopped robot counts as
/// yielding to a crossing pedestrian (m).
pub const YIELD_REACH: f64 = 6.0;

/// True if at some step the robot stood still while a pedestrian was inside
/// the corridor ahead of it.
pub fn yielded(trace: &EpisodeTrace, corridor_half_width: f64) -> bool {
    trace.steps.iter().any(|s| {
        s.speed == 0.0
            && s.pedestrians.iter().any(|p| {
                let (fwd, left) = s.robot.to_local(p[0], p[1]);
                (0.0..=YIELD_REACH).contains(&fwd) && left.abs() < corridor_half_width
            })
    })
}

/// Success and failure classification of an attempt trace.
pub fn attempt_outcome(
    scenario: ScenarioId,
    trace: &EpisodeTrace,
    corridor_half_width: f64,
) -> (bool, Option<FailureReason>) {
    let failure = if trace.has(StepEvent::Collision) {
        Some(FailureReason::Collision)
    } else if trace.has(StepEvent::OffPath) {
        Some(FailureReason::OffPath)
    } else if !trace.has(StepEvent::GoalReached) {
        Some(FailureReason::Timeout)
    } else if scenario == ScenarioId::Cross && !yielded(trace, corridor_half_width) {
        Some(FailureReason::NoYield)
    } else {
        None
    };
    (failure.is_none(), failure)
}

fn corridor(spec: &EpisodeSpec) -> f64 {
    let p = spec.world_config().params;
    p.robot_radius + p.pedestrian_radius + 0.3
}

/// Fully autonomous attempts on Confront or Cross courses.
pub fn eval_attempts<L: Learner>(
    learner: &L,
    scenario: ScenarioId,
    road_seed: u64,
    seeds: &[u64],
) -> Result<Vec<AttemptResult>> {
    if !matches!(scenario, ScenarioId::Confront | ScenarioId::Cross) {
        return Err(Error::WrongProtocol("attempts", "confront/cross", scenario));
    }
    seeds
        .par_iter()
        .map(|&seed| {
            let spec = EpisodeSpec::new(scenario, road_seed, seed);
            let (_, trace) =
                run_controller(spec.world_config(), |w, obs| Ok(Some(learner.decide(w, obs)?.1)))?;
            let (success, failure_reason) = attempt_outcome(scenario, &trace, corridor(&spec));
            Ok(AttemptResult {
                scenario,
                road_seed,
                seed,
                success,
                failure_reason,
            })
        })
        .collect()
}

/// Autonomous time before the first detector verdict. The detector only
/// scores; it never takes control. A run that ends on the horizon without
/// reaching the goal is credited with the share of the course it covered.
pub fn twi_of_trace(
    trace: &EpisodeTrace,
    fired_at: Option<usize>,
    course_time: f64,
    start_arc: f64,
) -> f64 {
    if let Some(step) = fired_at {
        return step as f64 * trace.time_step;
    }
    if trace.has(StepEvent::GoalReached)
        || trace.has(StepEvent::Collision)
        || trace.has(StepEvent::OffPath)
    {
        return trace.duration();
    }
    let end = trace.steps.last().map(|s| s.arc_length).unwrap_or(start_arc);
    let covered = ((end - start_arc) / (trace.goal_arc_length - start_arc)).clamp(0.0, 1.0);
    (covered * course_time).min(trace.duration())
}

pub fn eval_twi<L: Learner>(
    learner: &L,
    scenario: ScenarioId,
    expert: &ExpertConfig,
    road_seed: u64,
    seeds: &[u64],
) -> Result<Vec<TwiRecord>> {
    if !matches!(scenario, ScenarioId::PathFollow | ScenarioId::PedFollow) {
        return Err(Error::WrongProtocol("twi", "path_follow/ped_follow", scenario));
    }
    seeds
        .par_iter()
        .map(|&seed| {
            let spec = EpisodeSpec::new(scenario, road_seed, seed);
            let course = run_expert(spec.world_config(), expert)?.duration();
            let mut history = DetectorHistory::new();
            let mut fired: Option<(usize, InterventionReason)> = None;
            let mut start_arc = None;
            let (_, trace) = run_controller(spec.world_config(), |w, obs| {
                start_arc.get_or_insert_with(|| w.robot_projection().arc_length);
                let (_, a) = learner.decide(w, obs)?;
                let v = check_intervention(expert, w, a, &mut history);
                if v.intervene {
                    fired = Some((w.step_index(), v.reason));
                    return Ok(None);
                }
                Ok(Some(a))
            })?;
            let twi = twi_of_trace(
                &trace,
                fired.map(|f| f.0),
                course,
                start_arc.unwrap_or(0.0),
            );
            Ok(TwiRecord {
                scenario,
                road_seed,
                seed,
                twi_seconds: twi,
                course_time_seconds: course,
                reason: fired.map(|f| f.1),
            })
        })
        .collect()
}

/// Fraction of episodes in which the detector would have fired at least once
/// while the learner drove unassisted.
pub fn passive_trigger_rate<L: Learner>(
    learner: &L,
    expert: &ExpertConfig,
    specs: &[EpisodeSpec],
) -> Result<f64> {
    let fired: Vec<bool> = specs
        .par_iter()
        .map(|spec| {
            let mut history = DetectorHistory::new();
            let mut any = false;
            run_controller(spec.world_config(), |w, obs| {
                let (_, a) = learner.decide(w, obs)?;
                any |= check_intervention(expert, w, a, &mut history).intervene;
                Ok(Some(a))
            })?;
            Ok(any)
        })
        .collect::<Result<_>>()?;
    Ok(fired.iter().filter(|f| **f).count() as f64 / specs.len().max(1) as f64)
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Number of strict decreases in a series.
pub fn inversions<T: PartialOrd>(series: &[T]) -> usize {
    series.windows(2).filter(|w| w[1] < w[0]).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub iteration: usize,
    pub increments: [usize; ScenarioId::COUNT],
    pub cumulative: [usize; ScenarioId::COUNT],
    /// Per scenario: no new samples, or an increment below 5% of the
    /// cumulative size.
    pub converged: [bool; ScenarioId::COUNT],
}

/// Converged when an increment is under this share of the cumulative size.
pub const CONVERGENCE_SHARE: f64 = 0.05;

/// Per-iteration `D_g` increments from a size log whose first entry is the
/// warm start.
pub fn dataset_growth_report(log: &[SizeLogEntry]) -> Result<Vec<GrowthRow>> {
    if log.len() < 2 {
        return Err(Error::TooFewIterations {
            needed: 2,
            got: log.len(),
        });
    }
    Ok(log
        .windows(2)
        .map(|w| {
            let increments = std::array::from_fn(|g| w[1].sub[g] - w[0].sub[g]);
            let cumulative = w[1].sub;
            let converged = std::array::from_fn(|g| {
                increments[g] == 0
                    || (increments[g] as f64) < CONVERGENCE_SHARE * cumulative[g] as f64
            });
            GrowthRow {
                iteration: w[1].iteration,
                increments,
                cumulative,
                converged,
            }
        })
        .collect())
}

/// Cross-check of a growth report against the iteration reports.
pub fn growth_matches_reports(rows: &[GrowthRow], reports: &[IterationReport]) -> bool {
    rows.len() == reports.len()
        && rows
            .iter()
            .zip(reports)
            .all(|(r, it)| r.iteration == it.iteration && r.increments == it.sub_increment)
}
