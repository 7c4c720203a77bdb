//! Deterministic 2D world: a path, a unicycle robot and scripted pedestrians.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, ScenarioId, MAX_SPEED};
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Path, Pose, Projection};
use crate::observation::{
    Observation, RasterDims, CH_GOAL, CH_PATH, CH_PEDESTRIAN, N_SCALARS, SCALAR_HEADING,
    SCALAR_LATERAL, SCALAR_SPEED,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub centerline: Vec<[f64; 2]>,
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PedBehavior {
    /// Walks along the path in `direction` (+1 with the robot, -1 against),
    /// holding a lateral offset from the centerline.
    AlongPath { direction: f64, lateral: f64 },
    /// Keeps the start heading.
    Straight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianSpec {
    pub behavior: PedBehavior,
    pub start: Pose,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorParams {
    pub width: usize,
    pub height: usize,
    /// Cell edge length in meters.
    pub cell_size: f64,
    /// Pedestrian trail length in seconds.
    pub trail_seconds: f64,
    pub trail_samples: usize,
    /// Arc-length distance over which the goal field saturates.
    pub goal_range: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            cell_size: 0.5,
            trail_seconds: 2.0,
            trail_samples: 8,
            goal_range: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub robot_radius: f64,
    pub pedestrian_radius: f64,
    /// Converts steering angle to heading rate: omega = v * tan(delta) / wheelbase.
    pub wheelbase: f64,
    /// Amplitude of the uniform per-step pedestrian heading noise (rad).
    pub heading_noise: f64,
    /// Pedestrians farther than this are ignored by the scenario rules.
    pub sensing_range: f64,
    /// Half-angle of the frontal cone used for Confront/PedFollow (rad).
    pub frontal_cone: f64,
    pub sensor: SensorParams,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            robot_radius: 0.3,
            pedestrian_radius: 0.3,
            wheelbase: 1.0,
            heading_noise: 0.05,
            sensing_range: 7.5,
            frontal_cone: 70f64.to_radians(),
            sensor: SensorParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    /// Scenario the pedestrian placement was generated for.
    pub scenario: ScenarioId,
    pub time_step: f64,
    pub horizon: usize,
    pub rng_seed: u64,
    pub path: PathSpec,
    pub robot_start: Pose,
    /// Arc length at which the goal counts as reached.
    pub goal_arc_length: f64,
    #[serde(default)]
    pub pedestrians: Vec<PedestrianSpec>,
    #[serde(default)]
    pub params: WorldParams,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return Err(Error::config("world.time_step", "must be > 0"));
        }
        if self.horizon < 1 {
            return Err(Error::config("world.horizon", "must be >= 1"));
        }
        if !(self.path.half_width > p.robot_radius) {
            return Err(Error::config(
                "world.path.half_width",
                "must exceed the robot radius",
            ));
        }
        if Path::new(self.path.centerline.clone(), self.path.half_width).is_none() {
            return Err(Error::config(
                "world.path.centerline",
                "needs >= 2 distinct points",
            ));
        }
        if !(p.robot_radius > 0.0 && p.pedestrian_radius > 0.0 && p.wheelbase > 0.0) {
            return Err(Error::config("world.params", "radii and wheelbase must be > 0"));
        }
        if p.sensor.width == 0 || p.sensor.height == 0 || !(p.sensor.cell_size > 0.0) {
            return Err(Error::config("world.params.sensor", "empty raster"));
        }
        for (i, ped) in self.pedestrians.iter().enumerate() {
            if !(ped.speed >= 0.0 && ped.speed.is_finite()) {
                return Err(Error::config(
                    format!("world.pedestrians[{i}].speed"),
                    "must be finite and >= 0",
                ));
            }
        }
        Ok(())
    }

    pub fn raster_dims(&self) -> RasterDims {
        RasterDims::new(self.params.sensor.width, self.params.sensor.height)
    }

    /// The same world reflected across the x axis.
    pub fn mirrored(&self) -> Self {
        let flip = |p: Pose| Pose::new(p.x, -p.y, -p.heading);
        let mut out = self.clone();
        out.path.centerline = self.path.centerline.iter().map(|p| [p[0], -p[1]]).collect();
        out.robot_start = flip(self.robot_start);
        for ped in &mut out.pedestrians {
            ped.start = flip(ped.start);
            if let PedBehavior::AlongPath { lateral, .. } = &mut ped.behavior {
                *lateral = -*lateral;
            }
        }
        out
    }
}

/// Terminal events produced by a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepEvent {
    Collision,
    OffPath,
    GoalReached,
    HorizonExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub events: Vec<StepEvent>,
    pub ground_truth_scenario: ScenarioId,
}

impl StepOutcome {
    pub fn has(&self, e: StepEvent) -> bool {
        self.events.contains(&e)
    }

    pub fn terminal(&self) -> bool {
        !self.events.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedestrianState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub behavior: PedBehavior,
}

impl PedestrianState {
    pub fn velocity(&self) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (self.speed * c, self.speed * s)
    }

    pub fn pose(&self) -> Pose {
        Pose {
            x: self.x,
            y: self.y,
            heading: self.heading,
        }
    }
}

/// Live world state. Cloning is cheap apart from the pedestrian list.
#[derive(Debug, Clone)]
pub struct World {
    config: Arc<WorldConfig>,
    path: Arc<Path>,
    robot: Pose,
    robot_speed: f64,
    pedestrians: Vec<PedestrianState>,
    step: usize,
    rng: ChaCha8Rng,
    terminated: bool,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let path = Path::new(config.path.centerline.clone(), config.path.half_width)
            .expect("validated");
        let pedestrians = config
            .pedestrians
            .iter()
            .map(|p| PedestrianState {
                x: p.start.x,
                y: p.start.y,
                heading: p.start.heading,
                speed: p.speed,
                behavior: p.behavior,
            })
            .collect();
        Ok(Self {
            robot: config.robot_start,
            robot_speed: 0.0,
            pedestrians,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            terminated: false,
            path: Arc::new(path),
            config: Arc::new(config),
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn params(&self) -> &WorldParams {
        &self.config.params
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn robot(&self) -> Pose {
        self.robot
    }

    pub fn robot_speed(&self) -> f64 {
        self.robot_speed
    }

    pub fn pedestrians(&self) -> &[PedestrianState] {
        &self.pedestrians
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.time_step
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn half_width(&self) -> f64 {
        self.config.path.half_width
    }

    pub fn robot_projection(&self) -> Projection {
        self.path.project(self.robot.x, self.robot.y)
    }

    /// Heading error vs the path tangent, in (-pi, pi].
    pub fn heading_error(&self) -> f64 {
        let proj = self.robot_projection();
        normalize_angle(self.robot.heading - proj.tangent)
    }

    /// Copy of this state with the robot placed at `pose`.
    pub fn with_robot_pose(&self, pose: Pose) -> Self {
        let mut w = self.clone();
        w.robot = pose;
        w
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.terminated {
            return Err(Error::EpisodeTerminated);
        }
        let dt = self.config.time_step;
        let v = action.speed();
        let omega = v * action.steering_rad().tan() / self.config.params.wheelbase;
        let mid = self.robot.heading + 0.5 * omega * dt;
        self.robot = Pose {
            x: self.robot.x + v * dt * mid.cos(),
            y: self.robot.y + v * dt * mid.sin(),
            heading: normalize_angle(self.robot.heading + omega * dt),
        };
        self.robot_speed = v;

        let noise = self.config.params.heading_noise;
        for i in 0..self.pedestrians.len() {
            let u: f64 = self.rng.random_range(-1.0..1.0);
            let ped = self.pedestrians[i];
            let nominal = match ped.behavior {
                PedBehavior::Straight => self.config.pedestrians[i].start.heading,
                PedBehavior::AlongPath { direction, lateral } => {
                    let proj = self.path.project(ped.x, ped.y);
                    let target = self
                        .path
                        .pose_at(proj.arc_length + direction.signum() * 1.0, lateral);
                    (target.y - ped.y).atan2(target.x - ped.x)
                }
            };
            let heading = normalize_angle(nominal + noise * u);
            let p = &mut self.pedestrians[i];
            p.heading = heading;
            p.x += p.speed * dt * heading.cos();
            p.y += p.speed * dt * heading.sin();
        }
        self.step += 1;

        let mut events = Vec::new();
        let collision = self.in_collision();
        if collision {
            events.push(StepEvent::Collision);
        }
        let proj = self.robot_projection();
        let off_path = proj.lateral.abs() > self.config.path.half_width;
        if off_path {
            events.push(StepEvent::OffPath);
        }
        if !collision && !off_path && proj.arc_length >= self.config.goal_arc_length {
            events.push(StepEvent::GoalReached);
        }
        if self.step >= self.config.horizon {
            events.push(StepEvent::HorizonExhausted);
        }
        self.terminated = !events.is_empty();
        Ok(StepOutcome {
            observation: self.observe(),
            events,
            ground_truth_scenario: self.scenario_label(),
        })
    }

    /// Robot-pedestrian overlap.
    pub fn in_collision(&self) -> bool {
        let r = self.config.params.robot_radius + self.config.params.pedestrian_radius;
        self.pedestrians
            .iter()
            .any(|p| self.robot.distance_to(p.x, p.y) < r)
    }

    /// Time until the robot (moving straight at `robot_speed`) and any
    /// pedestrian (at its current velocity) come within the sum of radii.
    /// Infinite if they never do.
    pub fn time_to_collision(&self, robot_speed: f64) -> f64 {
        let r = self.config.params.robot_radius + self.config.params.pedestrian_radius;
        let (s, c) = self.robot.heading.sin_cos();
        let (rvx, rvy) = (robot_speed * c, robot_speed * s);
        let mut best = f64::INFINITY;
        for p in &self.pedestrians {
            let (px, py) = (p.x - self.robot.x, p.y - self.robot.y);
            let (pvx, pvy) = p.velocity();
            let (ux, uy) = (pvx - rvx, pvy - rvy);
            let c0 = px * px + py * py - r * r;
            if c0 < 0.0 {
                return 0.0;
            }
            let a = ux * ux + uy * uy;
            let b = 2.0 * (px * ux + py * uy);
            if a <= 0.0 || b >= 0.0 {
                continue;
            }
            let disc = b * b - 4.0 * a * c0;
            if disc < 0.0 {
                continue;
            }
            let t = (-b - disc.sqrt()) / (2.0 * a);
            if t >= 0.0 && t < best {
                best = t;
            }
        }
        best
    }

    /// Nearest pedestrian within sensing range that is not behind the robot.
    pub fn nearest_pedestrian_ahead(&self) -> Option<&PedestrianState> {
        let prm = &self.config.params;
        let behind = -(prm.robot_radius + prm.pedestrian_radius);
        self.pedestrians
            .iter()
            .filter(|p| {
                let (fwd, _) = self.robot.to_local(p.x, p.y);
                fwd > behind && self.robot.distance_to(p.x, p.y) <= prm.sensing_range
            })
            .min_by(|a, b| {
                let da = self.robot.distance_to(a.x, a.y);
                let db = self.robot.distance_to(b.x, b.y);
                da.total_cmp(&db)
            })
    }

    /// Geometric scenario classification of the current state. Rules are
    /// checked in the order Cross, Confront, PedFollow against the nearest
    /// pedestrian ahead; anything else is PathFollow.
    pub fn scenario_label(&self) -> ScenarioId {
        let Some(ped) = self.nearest_pedestrian_ahead() else {
            return ScenarioId::PathFollow;
        };
        if ped.speed <= 1e-6 {
            return ScenarioId::PathFollow;
        }
        let prm = &self.config.params;
        let rel_heading = normalize_angle(ped.heading - self.robot.heading).abs();
        let (fwd, left) = self.robot.to_local(ped.x, ped.y);
        let bearing = left.atan2(fwd).abs();

        let perpendicular = (FRAC_PI_4..=PI - FRAC_PI_4).contains(&rel_heading);
        if perpendicular {
            let proj = self.path.project(ped.x, ped.y);
            let lateral_rate = ped.speed * normalize_angle(ped.heading - proj.tangent).sin();
            let in_band = proj.lateral.abs() <= self.config.path.half_width + prm.pedestrian_radius;
            let approaching = proj.lateral * lateral_rate < 0.0;
            if in_band || approaching {
                return ScenarioId::Cross;
            }
        }
        let in_cone = fwd > 0.0 && bearing < prm.frontal_cone;
        if in_cone && rel_heading > PI - FRAC_PI_4 {
            return ScenarioId::Confront;
        }
        if in_cone && rel_heading < FRAC_PI_4 {
            return ScenarioId::PedFollow;
        }
        ScenarioId::PathFollow
    }

    pub fn observe(&self) -> Observation {
        self.observe_from(self.robot)
    }

    /// Observation as if the robot were displaced `lateral_offset` meters to
    /// its left and rotated by `heading_offset`. The world is not modified.
    pub fn virtual_offset_observe(
        &self,
        lateral_offset: f64,
        heading_offset: f64,
    ) -> Result<Observation> {
        let hw = self.config.path.half_width;
        if !(lateral_offset.abs() < hw) {
            return Err(Error::OffsetOutOfRange {
                offset: lateral_offset,
                half_width: hw,
            });
        }
        Ok(self.observe_from(self.displaced_pose(lateral_offset, heading_offset)))
    }

    pub fn displaced_pose(&self, lateral_offset: f64, heading_offset: f64) -> Pose {
        let (x, y) = self.robot.to_world(0.0, lateral_offset);
        Pose::new(x, y, self.robot.heading + heading_offset)
    }

    fn observe_from(&self, pose: Pose) -> Observation {
        let prm = &self.config.params;
        let sensor = &prm.sensor;
        let dims = self.config.raster_dims();
        let (w, h, cs) = (sensor.width, sensor.height, sensor.cell_size);
        let mut raster = vec![0f32; dims.cells()];

        let robot_proj = self.path.project(pose.x, pose.y);
        let s_robot = robot_proj.arc_length;
        let view = cs * (w.max(h) as f64) * 0.75 + 2.0;
        let (first, end) = self.path.window(s_robot, view);
        let end = end.min(self.path.segment_count()).max(first + 1);
        let hw = self.config.path.half_width;
        let goal = self.config.goal_arc_length;

        // Each segment only needs to be tested against the cells inside its
        // bounding box grown by the half-width; farther cells are off-path
        // with respect to it.
        let mut best: Vec<Option<(f64, Projection)>> = vec![None; w * h];
        let pts = self.path.points();
        let last = self.path.segment_count() - 1;
        let ray = 2.0 * view;
        let margin = hw + cs;
        for i in first..end {
            let [mut ax, mut ay] = pts[i];
            let [mut bx, mut by] = pts[i + 1];
            let len = (bx - ax).hypot(by - ay);
            let (ux, uy) = ((bx - ax) / len, (by - ay) / len);
            if i == 0 {
                ax -= ux * ray;
                ay -= uy * ray;
            }
            if i == last {
                bx += ux * ray;
                by += uy * ray;
            }
            let (fa, la) = pose.to_local(ax, ay);
            let (fb, lb) = pose.to_local(bx, by);
            let row_of = |f: f64| f / cs + h as f64 / 2.0 - 0.5;
            let col_of = |l: f64| w as f64 / 2.0 - 0.5 - l / cs;
            let r_lo = row_of(fa.min(fb) - margin).floor().max(0.0);
            let r_hi = row_of(fa.max(fb) + margin).ceil().min(h as f64 - 1.0);
            let c_lo = col_of(la.max(lb) + margin).floor().max(0.0);
            let c_hi = col_of(la.min(lb) - margin).ceil().min(w as f64 - 1.0);
            if r_hi < r_lo || c_hi < c_lo {
                continue;
            }
            for row in r_lo as usize..=r_hi as usize {
                let fwd = (row as f64 + 0.5 - h as f64 / 2.0) * cs;
                for col in c_lo as usize..=c_hi as usize {
                    let left = (w as f64 / 2.0 - col as f64 - 0.5) * cs;
                    let (x, y) = pose.to_world(fwd, left);
                    let cand = self.path.project_segment(i, x, y);
                    let slot = &mut best[row * w + col];
                    if slot.is_none_or(|b| cand.0 < b.0) {
                        *slot = Some(cand);
                    }
                }
            }
        }
        for row in 0..h {
            for col in 0..w {
                let Some((_, proj)) = best[row * w + col] else {
                    continue;
                };
                if proj.lateral.abs() <= hw {
                    raster[dims.index(row, col, CH_PATH)] = 1.0;
                    let ahead = (proj.arc_length.min(goal) - s_robot) / sensor.goal_range;
                    let g = 0.5 + 0.5 * ahead.clamp(-1.0, 1.0);
                    raster[dims.index(row, col, CH_GOAL)] = g as f32;
                }
            }
        }

        let reach = prm.pedestrian_radius + 0.5 * cs;
        let samples = sensor.trail_samples.max(1);
        for ped in &self.pedestrians {
            let (vx, vy) = ped.velocity();
            for k in 0..samples {
                let tau = sensor.trail_seconds * k as f64 / samples as f64;
                let intensity = (1.0 - k as f64 / samples as f64) as f32;
                let (fwd, left) = pose.to_local(ped.x - vx * tau, ped.y - vy * tau);
                let row_c = fwd / cs + h as f64 / 2.0 - 0.5;
                let col_c = w as f64 / 2.0 - 0.5 - left / cs;
                let span = reach / cs + 1.0;
                let r0 = (row_c - span).floor().max(0.0) as usize;
                let r1 = (row_c + span).ceil().min(h as f64 - 1.0);
                let c0 = (col_c - span).floor().max(0.0) as usize;
                let c1 = (col_c + span).ceil().min(w as f64 - 1.0);
                if r1 < 0.0 || c1 < 0.0 {
                    continue;
                }
                for row in r0..=r1 as usize {
                    let cf = (row as f64 + 0.5 - h as f64 / 2.0) * cs;
                    for col in c0..=c1 as usize {
                        let cl = (w as f64 / 2.0 - col as f64 - 0.5) * cs;
                        if (cf - fwd).hypot(cl - left) <= reach {
                            let cell = &mut raster[dims.index(row, col, CH_PEDESTRIAN)];
                            *cell = cell.max(intensity);
                        }
                    }
                }
            }
        }

        let mut scalars = [0.0; N_SCALARS];
        scalars[SCALAR_LATERAL] = robot_proj.lateral / hw;
        scalars[SCALAR_HEADING] = normalize_angle(pose.heading - robot_proj.tangent);
        scalars[SCALAR_SPEED] = self.robot_speed / MAX_SPEED;
        Observation::from_dense(dims, &raster, scalars)
    }
}

const ROAD_SALT: u64 = 0x5eed_0f_20ad;
const EPISODE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Road centerline for a road seed: a 40 m curve built from piecewise
/// constant curvature with a straight 4 m lead-in.
pub fn road_centerline(road_seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(road_seed ^ ROAD_SALT);
    let spacing = 1.0;
    let n = 40;
    let mut pts = Vec::with_capacity(n + 1);
    let (mut x, mut y, mut h) = (0.0f64, 0.0f64, 0.0f64);
    pts.push([x, y]);
    let mut kappa = 0.0;
    for i in 0..n {
        if i >= 4 && (i - 4) % 6 == 0 {
            kappa = rng.random_range(-0.05..0.05);
        }
        let mid = h + 0.5 * kappa * spacing;
        x += spacing * mid.cos();
        y += spacing * mid.sin();
        h += kappa * spacing;
        pts.push([x, y]);
    }
    pts
}

pub const DEFAULT_HALF_WIDTH: f64 = 1.5;
pub const DEFAULT_HORIZON: usize = 400;
pub const DEFAULT_TIME_STEP: f64 = 0.1;
const GOAL_ARC: f64 = 28.0;

/// Scenario instance on the road derived from `seed`.
pub fn spawn_scenario(scenario: ScenarioId, seed: u64) -> WorldConfig {
    spawn_on_road(scenario, seed, seed)
}

/// Scenario instance whose road comes from `road_seed` and whose start
/// perturbation and pedestrian placement come from `seed`.
pub fn spawn_on_road(scenario: ScenarioId, road_seed: u64, seed: u64) -> WorldConfig {
    let centerline = road_centerline(road_seed);
    let path = Path::new(centerline.clone(), DEFAULT_HALF_WIDTH).expect("generated road");
    let mix = seed
        .wrapping_mul(EPISODE_SALT)
        .wrapping_add(road_seed.rotate_left(17))
        .wrapping_add(scenario.index() as u64 + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);

    let start_lat = rng.random_range(-0.2..0.2);
    let start = path.pose_at(0.0, start_lat);
    let robot_start = Pose::new(start.x, start.y, start.heading + rng.random_range(-0.05..0.05));

    let pedestrians = match scenario {
        ScenarioId::PathFollow => Vec::new(),
        ScenarioId::Confront => {
            let s0 = rng.random_range(14.0..18.0);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let lateral = side * rng.random_range(0.15..0.5);
            let at = path.pose_at(s0, lateral);
            vec![PedestrianSpec {
                behavior: PedBehavior::AlongPath {
                    direction: -1.0,
                    lateral,
                },
                start: Pose::new(at.x, at.y, at.heading + PI),
                speed: rng.random_range(1.0..1.3),
            }]
        }
        ScenarioId::PedFollow => {
            let s0 = rng.random_range(3.5..5.0);
            let lateral = rng.random_range(-0.3..0.3);
            let at = path.pose_at(s0, lateral);
            vec![PedestrianSpec {
                behavior: PedBehavior::AlongPath {
                    direction: 1.0,
                    lateral,
                },
                start: Pose::new(at.x, at.y, at.heading),
                speed: rng.random_range(0.9..1.1),
            }]
        }
        ScenarioId::Cross => {
            let s_cross = rng.random_range(9.0..13.0);
            let arrival = s_cross / MAX_SPEED;
            let jitter = rng.random_range(-0.5..0.5);
            let speed = rng.random_range(1.0..1.3);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let dist = speed * (arrival + jitter);
            let at = path.pose_at(s_cross, side * dist);
            vec![PedestrianSpec {
                behavior: PedBehavior::Straight,
                start: Pose::new(at.x, at.y, at.heading - side * FRAC_PI_2),
                speed,
            }]
        }
    };

    WorldConfig {
        scenario,
        time_step: DEFAULT_TIME_STEP,
        horizon: DEFAULT_HORIZON,
        rng_seed: mix ^ 0xa5a5_a5a5,
        path: PathSpec {
            centerline,
            half_width: DEFAULT_HALF_WIDTH,
        },
        robot_start,
        goal_arc_length: GOAL_ARC,
        pedestrians,
        params: WorldParams::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{CENTER_STEER, NORMAL, STOP};

    fn straight_config() -> WorldConfig {
        WorldConfig {
            scenario: ScenarioId::PathFollow,
            time_step: 0.1,
            horizon: 50,
            rng_seed: 1,
            path: PathSpec {
                centerline: vec![[0.0, 0.0], [40.0, 0.0]],
                half_width: 1.5,
            },
            robot_start: Pose::new(0.0, 0.0, 0.0),
            goal_arc_length: 38.0,
            pedestrians: vec![],
            params: WorldParams::default(),
        }
    }

    #[test]
    fn path_follow_has_no_pedestrians() {
        for seed in 0..20 {
            assert!(spawn_scenario(ScenarioId::PathFollow, seed).pedestrians.is_empty());
        }
    }

    #[test]
    fn spawn_is_deterministic() {
        assert_eq!(
            spawn_scenario(ScenarioId::Confront, 7),
            spawn_scenario(ScenarioId::Confront, 7)
        );
        assert_ne!(
            spawn_scenario(ScenarioId::Confront, 7),
            spawn_scenario(ScenarioId::Confront, 8)
        );
    }

    #[test]
    fn zero_speed_keeps_pose_but_pedestrians_move() {
        let mut w = World::new(spawn_scenario(ScenarioId::Confront, 2)).unwrap();
        let before = w.robot();
        let ped_before = w.pedestrians()[0];
        w.step(Action::new(0, STOP).unwrap()).unwrap();
        assert_eq!(w.robot(), before);
        assert_ne!(w.pedestrians()[0].x, ped_before.x);
    }

    #[test]
    fn straight_drive_stays_on_centerline() {
        let mut w = World::new(straight_config()).unwrap();
        for _ in 0..40 {
            let out = w.step(Action::new(CENTER_STEER, NORMAL).unwrap()).unwrap();
            assert_eq!(w.robot_projection().lateral, 0.0);
            assert_eq!(out.observation.scalars()[SCALAR_LATERAL], 0.0);
        }
    }

    #[test]
    fn stepping_terminated_episode_fails() {
        let mut cfg = straight_config();
        cfg.horizon = 1;
        let mut w = World::new(cfg).unwrap();
        let out = w.step(Action::straight(NORMAL)).unwrap();
        assert_eq!(out.events, vec![StepEvent::HorizonExhausted]);
        assert!(matches!(
            w.step(Action::straight(NORMAL)),
            Err(Error::EpisodeTerminated)
        ));
    }

    #[test]
    fn centered_robot_has_zero_scalars_and_empty_pedestrian_channel() {
        let w = World::new(straight_config()).unwrap();
        let obs = w.observe();
        assert_eq!(obs.scalars(), [0.0, 0.0, 0.0]);
        let dims = obs.dims();
        for row in 0..dims.height {
            for col in 0..dims.width {
                assert_eq!(obs.get(row, col, CH_PEDESTRIAN), 0.0);
            }
        }
        // Path band of 3 m covers 6 columns around the center.
        assert_eq!(obs.get(20, 15, CH_PATH), 1.0);
        assert_eq!(obs.get(20, 0, CH_PATH), 0.0);
    }

    #[test]
    fn virtual_offset_identity_and_bounds() {
        let w = World::new(spawn_scenario(ScenarioId::Cross, 4)).unwrap();
        assert_eq!(w.virtual_offset_observe(0.0, 0.0).unwrap(), w.observe());
        assert!(matches!(
            w.virtual_offset_observe(1.6, 0.0),
            Err(Error::OffsetOutOfRange { .. })
        ));
    }

    #[test]
    fn virtual_offsets_mirror_on_symmetric_scene() {
        let w = World::new(straight_config()).unwrap();
        let l = w.virtual_offset_observe(0.5, 0.0).unwrap();
        let r = w.virtual_offset_observe(-0.5, 0.0).unwrap();
        assert_eq!(l.mirrored(), r);
        assert_ne!(l, r);
    }

    #[test]
    fn invalid_configs_report_field_paths() {
        let mut cfg = straight_config();
        cfg.time_step = 0.0;
        let err = World::new(cfg).unwrap_err().to_string();
        assert!(err.contains("world.time_step"), "{err}");
        let mut cfg = straight_config();
        cfg.path.half_width = 0.2;
        assert!(World::new(cfg).unwrap_err().to_string().contains("half_width"));
    }

    #[test]
    fn ttc_head_on() {
        let mut cfg = straight_config();
        cfg.pedestrians.push(PedestrianSpec {
            behavior: PedBehavior::Straight,
            start: Pose::new(5.6, 0.0, PI),
            speed: 1.0,
        });
        let w = World::new(cfg).unwrap();
        // gap 5.0 m closing at 2.5 m/s
        assert!((w.time_to_collision(1.5) - 2.0).abs() < 1e-9);
        assert_eq!(w.scenario_label(), ScenarioId::Confront);
    }
    #[test]
    fn path_channels_match_per_cell_projection() {
        for (scenario, seed) in [(ScenarioId::Cross, 1u64), (ScenarioId::Confront, 9), (ScenarioId::PathFollow, 4)] {
            let mut w = World::new(spawn_scenario(scenario, seed)).unwrap();
            for step in 0..260 {
                if step % 20 == 0 {
                    let obs = w.observe();
                    let pose = w.robot();
                    let sensor = w.params().sensor;
                    let (cs, n) = (sensor.cell_size, sensor.width);
                    let s_robot = w.robot_projection().arc_length;
                    for row in 0..n {
                        for col in 0..n {
                            let fwd = (row as f64 + 0.5 - n as f64 / 2.0) * cs;
                            let left = (n as f64 / 2.0 - col as f64 - 0.5) * cs;
                            let (x, y) = pose.to_world(fwd, left);
                            let p = w.path().project(x, y);
                            let on = p.lateral.abs() <= w.half_width();
                            assert_eq!(obs.get(row, col, CH_PATH) == 1.0, on, "{row} {col}");
                            if on {
                                let ahead = (p.arc_length.min(w.config().goal_arc_length) - s_robot) / 8.0;
                                let g = (0.5 + 0.5 * ahead.clamp(-1.0, 1.0)) as f32;
                                assert!((obs.get(row, col, CH_GOAL) - g).abs() < 1e-6);
                            }
                        }
                    }
                }
                if w.is_terminated() {
                    break;
                }
                let cfg = crate::expert::ExpertConfig::default();
                let a = crate::expert::expert_action(&cfg, &w, w.scenario_label());
                w.step(a).unwrap();
            }
        }
    }
}
