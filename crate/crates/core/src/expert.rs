//! Rule-based stand-in for the human expert.
//!
//! Provides the ground-truth scenario label, the per-scenario expert action
//! and the intervention detector. The detector is an operationalization of
//! "the robot is likely going to make a mistake": excessive lateral offset,
//! imminent collision, not stopping for a crossing pedestrian, or sustained
//! steering divergence from the expert.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::action::{nearest_steer_bin, Action, ScenarioId, MAX_SPEED, NORMAL, SLOW, STOP};
use crate::error::{Error, Result};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionThresholds {
    /// Fraction of the path half-width beyond which the expert takes over.
    pub max_lateral_frac: f64,
    /// Seconds.
    pub collision_ttc: f64,
    pub divergence_steps: usize,
    pub divergence_bins: usize,
}

impl Default for InterventionThresholds {
    fn default() -> Self {
        Self {
            max_lateral_frac: 0.8,
            collision_ttc: 1.5,
            divergence_steps: 5,
            divergence_bins: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    /// Pure-pursuit lookahead along the centerline (m).
    pub lookahead_distance: f64,
    /// Minimum gap kept to a leading pedestrian (m, surface to surface).
    pub yield_distance: f64,
    pub intervention_thresholds: InterventionThresholds,
    /// Steps between a trigger condition first holding and the takeover.
    pub reaction_delay: usize,
    /// Lateral clearance targeted when passing a confronting pedestrian (m).
    pub avoid_clearance: f64,
    /// Largest lateral target used while avoiding (m).
    pub avoid_offset: f64,
    /// Extra anticipation on top of `collision_ttc` when yielding (s).
    pub yield_margin: f64,
    /// Gap band above `yield_distance` driven at slow speed (m).
    pub follow_band: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            lookahead_distance: 1.5,
            yield_distance: 1.0,
            intervention_thresholds: InterventionThresholds::default(),
            reaction_delay: 2,
            avoid_clearance: 1.1,
            avoid_offset: 0.9,
            yield_margin: 1.0,
            follow_band: 1.5,
        }
    }
}

impl ExpertConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.intervention_thresholds;
        let positive = [
            ("expert.lookahead_distance", self.lookahead_distance),
            ("expert.yield_distance", self.yield_distance),
            ("expert.avoid_clearance", self.avoid_clearance),
            ("expert.avoid_offset", self.avoid_offset),
            ("expert.intervention_thresholds.max_lateral_frac", t.max_lateral_frac),
            ("expert.intervention_thresholds.collision_ttc", t.collision_ttc),
        ];
        for (path, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(path, "must be > 0"));
            }
        }
        if t.max_lateral_frac >= 1.0 {
            return Err(Error::config(
                "expert.intervention_thresholds.max_lateral_frac",
                "must be < 1",
            ));
        }
        if t.divergence_steps == 0 || t.divergence_bins == 0 {
            return Err(Error::config(
                "expert.intervention_thresholds",
                "divergence_steps and divergence_bins must be > 0",
            ));
        }
        Ok(())
    }
}

/// Ground-truth scenario label.
pub fn meta_label(world: &World) -> ScenarioId {
    world.scenario_label()
}

/// Expert action for the given scenario.
pub fn expert_action(cfg: &ExpertConfig, world: &World, scenario: ScenarioId) -> Action {
    let robot = world.robot();
    let proj = world.robot_projection();
    let ped = world.nearest_pedestrian_ahead();
    let r_sum = world.params().robot_radius + world.params().pedestrian_radius;

    let target_lateral = match (scenario, ped) {
        (ScenarioId::Confront, Some(p)) => {
            let ped_lat = world.path().project(p.x, p.y).lateral;
            let side = if ped_lat - proj.lateral >= 0.0 { 1.0 } else { -1.0 };
            (ped_lat - side * cfg.avoid_clearance).clamp(-cfg.avoid_offset, cfg.avoid_offset)
        }
        _ => 0.0,
    };
    let target = world
        .path()
        .pose_at(proj.arc_length + cfg.lookahead_distance, target_lateral);
    let (lx, ly) = robot.to_local(target.x, target.y);
    let curvature = 2.0 * ly / (lx * lx + ly * ly).max(1e-9);
    let steer_deg = (curvature * world.params().wheelbase).atan().to_degrees();
    let steer = nearest_steer_bin(steer_deg);

    let speed = match (scenario, ped) {
        (ScenarioId::PathFollow, _) => NORMAL,
        (ScenarioId::Confront, _) => SLOW,
        (ScenarioId::PedFollow, Some(p)) => {
            let gap = robot.distance_to(p.x, p.y) - r_sum;
            if gap < cfg.yield_distance {
                STOP
            } else if gap < cfg.yield_distance + cfg.follow_band {
                SLOW
            } else {
                NORMAL
            }
        }
        (ScenarioId::PedFollow, None) => NORMAL,
        (ScenarioId::Cross, _) => {
            if crossing_blocks(cfg, world) {
                STOP
            } else {
                SLOW
            }
        }
    };
    Action::new(steer, speed).expect("bins in range")
}

/// Lateral half-width of the lane the robot sweeps, including margin.
pub fn corridor_half_width(world: &World) -> f64 {
    world.params().robot_radius + world.params().pedestrian_radius + 0.3
}

/// True if any pedestrian, extrapolated at constant velocity, enters the
/// corridor the robot would sweep at full speed over the yield horizon.
pub fn crossing_blocks(cfg: &ExpertConfig, world: &World) -> bool {
    let horizon = cfg.intervention_thresholds.collision_ttc + cfg.yield_margin;
    let r_sum = world.params().robot_radius + world.params().pedestrian_radius;
    let reach = MAX_SPEED * horizon + r_sum;
    let half = corridor_half_width(world);
    let robot = world.robot();
    let steps = (horizon / world.config().time_step).ceil() as usize;
    world.pedestrians().iter().any(|p| {
        let (vx, vy) = p.velocity();
        (0..=steps).any(|k| {
            let tau = k as f64 * world.config().time_step;
            let (fwd, left) = robot.to_local(p.x + vx * tau, p.y + vy * tau);
            fwd > -r_sum && fwd < reach && left.abs() < half
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterventionReason {
    LateralExcess,
    CollisionImminent,
    /// Would keep moving while a crossing pedestrian blocks the corridor.
    YieldViolation,
    PolicyDivergence,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionVerdict {
    pub intervene: bool,
    pub reason: InterventionReason,
}

impl InterventionVerdict {
    pub const QUIET: Self = Self {
        intervene: false,
        reason: InterventionReason::None,
    };

    fn fire(reason: InterventionReason) -> Self {
        Self {
            intervene: true,
            reason,
        }
    }
}

/// Detector memory: recent (learner, expert) action pairs and the trigger
/// that is waiting out the reaction delay.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorHistory {
    pairs: VecDeque<(Action, Action)>,
    pending: Option<(InterventionReason, usize)>,
}

impl DetectorHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &(Action, Action)> {
        self.pairs.iter()
    }

    pub fn record(&mut self, learner: Action, expert: Action, keep: usize) {
        self.pairs.push_back((learner, expert));
        while self.pairs.len() > keep {
            self.pairs.pop_front();
        }
    }

    pub fn is_pending(&self) -> bool {
        self.pending.is_some()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
        self.pending = None;
    }
}

/// Trigger condition at this instant, ignoring the reaction delay.
pub fn trigger_condition(
    cfg: &ExpertConfig,
    world: &World,
    learner_action: Action,
    history: &DetectorHistory,
) -> InterventionReason {
    let t = &cfg.intervention_thresholds;
    let lateral = world.robot_projection().lateral.abs();
    if lateral > t.max_lateral_frac * world.half_width() {
        return InterventionReason::LateralExcess;
    }
    if world.time_to_collision(learner_action.speed()) < t.collision_ttc {
        return InterventionReason::CollisionImminent;
    }
    if learner_action.speed_bin() != STOP
        && meta_label(world) == ScenarioId::Cross
        && crossing_blocks(cfg, world)
    {
        return InterventionReason::YieldViolation;
    }
    let diverging = history.pairs.len() >= t.divergence_steps
        && history
            .pairs
            .iter()
            .rev()
            .take(t.divergence_steps)
            .all(|(l, e)| l.steer_bin().abs_diff(e.steer_bin()) >= t.divergence_bins);
    if diverging {
        return InterventionReason::PolicyDivergence;
    }
    InterventionReason::None
}

/// Records the learner's proposed action against the expert's and decides
/// whether the expert takes over. A trigger is delivered `reaction_delay`
/// steps after its condition first holds and is dropped if the condition
/// clears in between.
pub fn check_intervention(
    cfg: &ExpertConfig,
    world: &World,
    learner_action: Action,
    history: &mut DetectorHistory,
) -> InterventionVerdict {
    let expert = expert_action(cfg, world, meta_label(world));
    history.record(
        learner_action,
        expert,
        cfg.intervention_thresholds.divergence_steps,
    );
    let raw = trigger_condition(cfg, world, learner_action, history);
    if raw == InterventionReason::None {
        history.pending = None;
        return InterventionVerdict::QUIET;
    }
    let (reason, waited) = match history.pending {
        None => (raw, 0),
        Some((r, n)) => (r, n + 1),
    };
    history.pending = Some((reason, waited));
    if waited >= cfg.reaction_delay {
        InterventionVerdict::fire(reason)
    } else {
        InterventionVerdict::QUIET
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{CENTER_STEER, N_STEER};
    use crate::geometry::Pose;
    use crate::world::{PathSpec, PedBehavior, PedestrianSpec, WorldConfig, WorldParams};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn straight_world(robot: Pose, peds: Vec<PedestrianSpec>) -> World {
        World::new(WorldConfig {
            scenario: ScenarioId::PathFollow,
            time_step: 0.1,
            horizon: 300,
            rng_seed: 3,
            path: PathSpec {
                centerline: vec![[-10.0, 0.0], [40.0, 0.0]],
                half_width: 1.5,
            },
            robot_start: robot,
            goal_arc_length: 45.0,
            pedestrians: peds,
            params: WorldParams::default(),
        })
        .unwrap()
    }

    fn ped(x: f64, y: f64, heading: f64) -> PedestrianSpec {
        PedestrianSpec {
            behavior: PedBehavior::Straight,
            start: Pose::new(x, y, heading),
            speed: 1.1,
        }
    }

    #[test]
    fn empty_world_is_path_follow_and_straight() {
        let w = straight_world(Pose::new(0.0, 0.0, 0.0), vec![]);
        assert_eq!(meta_label(&w), ScenarioId::PathFollow);
        let a = expert_action(&ExpertConfig::default(), &w, ScenarioId::PathFollow);
        assert_eq!(a, Action::new(CENTER_STEER, NORMAL).unwrap());
    }

    #[test]
    fn rule_table_on_hand_built_poses() {
        let origin = Pose::new(0.0, 0.0, 0.0);
        for dh in [-10f64, 0.0, 10.0] {
            let w = straight_world(origin, vec![ped(3.0, 0.1, PI + dh.to_radians())]);
            assert_eq!(meta_label(&w), ScenarioId::Confront, "antiparallel {dh}");
        }
        let w = straight_world(origin, vec![ped(3.0, 0.1, 0.2)]);
        assert_eq!(meta_label(&w), ScenarioId::PedFollow);
        let w = straight_world(origin, vec![ped(3.0, 3.0, -FRAC_PI_2)]);
        assert_eq!(meta_label(&w), ScenarioId::Cross);
        // Perpendicular but walking away outside the path band.
        let w = straight_world(origin, vec![ped(3.0, 3.0, FRAC_PI_2)]);
        assert_eq!(meta_label(&w), ScenarioId::PathFollow);
        // Behind the robot.
        let w = straight_world(origin, vec![ped(-3.0, 0.0, PI)]);
        assert_eq!(meta_label(&w), ScenarioId::PathFollow);
        // Out of sensing range.
        let w = straight_world(origin, vec![ped(9.0, 0.0, PI)]);
        assert_eq!(meta_label(&w), ScenarioId::PathFollow);
    }

    #[test]
    fn cross_stops_when_corridor_threatened() {
        let cfg = ExpertConfig::default();
        let w = straight_world(Pose::new(0.0, 0.0, 0.0), vec![ped(2.5, 1.5, -FRAC_PI_2)]);
        let a = expert_action(&cfg, &w, ScenarioId::Cross);
        assert_eq!(a.speed_bin(), STOP);
        // Same pedestrian already past the corridor and leaving.
        let w = straight_world(Pose::new(0.0, 0.0, 0.0), vec![ped(2.5, -1.5, -FRAC_PI_2)]);
        assert_eq!(expert_action(&cfg, &w, ScenarioId::Cross).speed_bin(), SLOW);
    }

    #[test]
    fn confront_steers_away_from_pedestrian_side() {
        let cfg = ExpertConfig::default();
        for lat in [0.05, 0.2, 0.4] {
            let left = straight_world(Pose::new(0.0, 0.0, 0.0), vec![ped(4.0, lat, PI)]);
            let right = straight_world(Pose::new(0.0, 0.0, 0.0), vec![ped(4.0, -lat, PI)]);
            let a = expert_action(&cfg, &left, ScenarioId::Confront);
            let b = expert_action(&cfg, &right, ScenarioId::Confront);
            assert!(a.steer_bin() < CENTER_STEER, "pedestrian left -> steer right");
            assert!(b.steer_bin() > CENTER_STEER, "pedestrian right -> steer left");
            assert_eq!(a.steer_bin() + b.steer_bin(), N_STEER - 1);
        }
    }

    #[test]
    fn quiet_when_learner_matches_expert() {
        let cfg = ExpertConfig::default();
        let w = straight_world(Pose::new(0.0, 0.0, 0.0), vec![]);
        let mut h = DetectorHistory::new();
        for _ in 0..10 {
            let a = expert_action(&cfg, &w, meta_label(&w));
            assert_eq!(check_intervention(&cfg, &w, a, &mut h), InterventionVerdict::QUIET);
        }
    }

    #[test]
    fn lateral_excess_after_reaction_delay() {
        let cfg = ExpertConfig::default();
        let w = straight_world(Pose::new(0.0, 0.95 * 1.5, 0.0), vec![]);
        let a = expert_action(&cfg, &w, ScenarioId::PathFollow);
        let mut h = DetectorHistory::new();
        for _ in 0..cfg.reaction_delay {
            assert!(!check_intervention(&cfg, &w, a, &mut h).intervene);
        }
        let v = check_intervention(&cfg, &w, a, &mut h);
        assert_eq!(v.reason, InterventionReason::LateralExcess);
        assert!(v.intervene);
    }

    #[test]
    fn rolling_through_a_crossing_fires() {
        let cfg = ExpertConfig::default();
        let w = straight_world(Pose::new(0.0, 0.0, 0.0), vec![ped(4.0, 2.6, -FRAC_PI_2)]);
        assert_eq!(meta_label(&w), ScenarioId::Cross);
        let go = Action::new(CENTER_STEER, NORMAL).unwrap();
        assert!(w.time_to_collision(go.speed()) >= cfg.intervention_thresholds.collision_ttc);
        let mut h = DetectorHistory::new();
        for _ in 0..cfg.reaction_delay {
            assert!(!check_intervention(&cfg, &w, go, &mut h).intervene);
        }
        assert_eq!(
            check_intervention(&cfg, &w, go, &mut h).reason,
            InterventionReason::YieldViolation
        );
        let stop = Action::new(CENTER_STEER, STOP).unwrap();
        assert!(!check_intervention(&cfg, &w, stop, &mut DetectorHistory::new()).intervene);
    }

    #[test]
    fn sustained_divergence_fires() {
        let cfg = ExpertConfig {
            reaction_delay: 0,
            ..ExpertConfig::default()
        };
        let w = straight_world(Pose::new(0.0, 0.0, 0.0), vec![]);
        let hard_left = Action::new(N_STEER - 1, NORMAL).unwrap();
        let mut h = DetectorHistory::new();
        let steps = cfg.intervention_thresholds.divergence_steps;
        for i in 0..steps {
            let v = check_intervention(&cfg, &w, hard_left, &mut h);
            assert_eq!(v.intervene, i + 1 == steps);
        }
        let v = check_intervention(&cfg, &w, hard_left, &mut h);
        assert_eq!(v.reason, InterventionReason::PolicyDivergence);
    }

    #[test]
    fn condition_clearing_cancels_pending_trigger() {
        let cfg = ExpertConfig::default();
        let off = straight_world(Pose::new(0.0, 1.4, 0.0), vec![]);
        let on = straight_world(Pose::new(0.0, 0.0, 0.0), vec![]);
        let a = Action::straight(NORMAL);
        let mut h = DetectorHistory::new();
        assert!(!check_intervention(&cfg, &off, a, &mut h).intervene);
        assert!(!check_intervention(&cfg, &on, a, &mut h).intervene);
        assert!(!h.is_pending());
        assert!(!check_intervention(&cfg, &off, a, &mut h).intervene);
        assert!(!check_intervention(&cfg, &off, a, &mut h).intervene);
        assert!(check_intervention(&cfg, &off, a, &mut h).intervene);
    }

    #[test]
    fn config_validation() {
        assert!(ExpertConfig::default().validate().is_ok());
        let mut c = ExpertConfig::default();
        c.intervention_thresholds.max_lateral_frac = 1.0;
        assert!(c.validate().unwrap_err().to_string().contains("max_lateral_frac"));
    }
}
