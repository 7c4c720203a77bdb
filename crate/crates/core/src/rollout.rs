//! Closed-loop episode runners and the per-step trace they record.

use serde::{Deserialize, Serialize};

use crate::action::{Action, ScenarioId};
use crate::error::Result;
use crate::expert::{expert_action, meta_label, ExpertConfig};
use crate::geometry::Pose;
use crate::observation::Observation;
use crate::policy::PolicyBundle;
use crate::world::{spawn_on_road, StepEvent, World, WorldConfig};

/// One episode instance: scenario kind, road and placement seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub scenario: ScenarioId,
    pub road_seed: u64,
    pub seed: u64,
}

impl EpisodeSpec {
    pub fn new(scenario: ScenarioId, road_seed: u64, seed: u64) -> Self {
        Self {
            scenario,
            road_seed,
            seed,
        }
    }

    pub fn world_config(&self) -> WorldConfig {
        spawn_on_road(self.scenario, self.road_seed, self.seed)
    }
}

/// State after a step, as needed by the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: Action,
    pub robot: Pose,
    pub speed: f64,
    pub pedestrians: Vec<[f64; 2]>,
    pub arc_length: f64,
    pub events: Vec<StepEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub time_step: f64,
    pub goal_arc_length: f64,
    pub steps: Vec<StepRecord>,
}

impl EpisodeTrace {
    pub fn final_events(&self) -> &[StepEvent] {
        self.steps.last().map(|s| s.events.as_slice()).unwrap_or(&[])
    }

    pub fn has(&self, e: StepEvent) -> bool {
        self.steps.iter().any(|s| s.events.contains(&e))
    }

    pub fn duration(&self) -> f64 {
        self.steps.len() as f64 * self.time_step
    }
}

pub(crate) fn record_step(world: &World, action: Action, events: Vec<StepEvent>) -> StepRecord {
    StepRecord {
        step: world.step_index(),
        action,
        robot: world.robot(),
        speed: world.robot_speed(),
        pedestrians: world.pedestrians().iter().map(|p| [p.x, p.y]).collect(),
        arc_length: world.robot_projection().arc_length,
        events,
    }
}

/// Runs `controller` until a terminal event, or until it returns `None`.
pub fn run_controller<F>(config: WorldConfig, mut controller: F) -> Result<(World, EpisodeTrace)>
where
    F: FnMut(&World, &Observation) -> Result<Option<Action>>,
{
    let mut world = World::new(config)?;
    let mut trace = EpisodeTrace {
        time_step: world.config().time_step,
        goal_arc_length: world.config().goal_arc_length,
        steps: Vec::new(),
    };
    let mut obs = world.observe();
    while !world.is_terminated() {
        let Some(action) = controller(&world, &obs)? else {
            break;
        };
        let out = world.step(action)?;
        trace.steps.push(record_step(&world, action, out.events));
        obs = out.observation;
    }
    Ok((world, trace))
}

/// The expert driving on its own ground-truth labels.
pub fn run_expert(config: WorldConfig, cfg: &ExpertConfig) -> Result<EpisodeTrace> {
    run_controller(config, |w, _| Ok(Some(expert_action(cfg, w, meta_label(w)))))
        .map(|(_, t)| t)
}

/// The learned policy driving fully autonomously.
pub fn run_policy(config: WorldConfig, bundle: &PolicyBundle) -> Result<EpisodeTrace> {
    run_controller(config, |_, obs| Ok(Some(bundle.act(obs)?.1))).map(|(_, t)| t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expert_trace_reaches_goal() {
        let spec = EpisodeSpec::new(ScenarioId::PathFollow, 3, 1);
        let trace = run_expert(spec.world_config(), &ExpertConfig::default()).unwrap();
        assert_eq!(trace.final_events(), &[StepEvent::GoalReached]);
        assert!(trace.steps.windows(2).all(|w| w[1].step == w[0].step + 1));
    }
}
