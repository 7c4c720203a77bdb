use serde::{Deserialize, Serialize};

use super::protocol::{
    ClientCommand, ClientMessage, Mode, ServerBody, ServerMessage, TickFrame, PROTOCOL_VERSION,
};
use crate::action::{Action, ScenarioId};
use crate::algos::{
    backtrack, BacktrackParams, BacktrackSchedule, ScheduleKind, TraceEntry, TraceQueue,
};
use crate::checkpoint;
use crate::error::Result;
use crate::expert::meta_label;
use crate::geometry::Pose;
use crate::observation::Observation;
use crate::policy::{soft_label, LabeledSample, PolicyBundle, Provenance};
use crate::rollout::EpisodeSpec;
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub queue_len: usize,
    pub schedule: ScheduleKind,
    pub backtrack: BacktrackParams,
    pub steer_sigma: f64,
    pub speed_sigma: f64,
    /// Iteration index stamped on produced samples.
    pub iteration: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            queue_len: 50,
            schedule: ScheduleKind::Linear,
            backtrack: BacktrackParams::default(),
            steer_sigma: 0.5,
            speed_sigma: 0.0,
            iteration: 0,
        }
    }
}

/// Snapshot for status displays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub mode: Mode,
    pub paused: bool,
    pub tick: u64,
    pub episode: u64,
    pub spec: EpisodeSpec,
    pub robot: Pose,
    pub queue_len: usize,
    pub queue_capacity: usize,
    pub checkpoint: String,
}

/// One line of a session log after the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dir", rename_all = "snake_case")]
pub enum LogEntry {
    In { tick: u64, msg: ClientMessage },
    Out { msg: ServerMessage },
    /// The last client went away.
    Disconnect { tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub seq: u64,
    #[serde(flatten)]
    pub entry: LogEntry,
}

struct Anchor {
    observation: Observation,
    policy_action: Action,
    scenario: ScenarioId,
    step: usize,
}

/// The logical simulation loop of one gateway session. Owns the world, the
/// trace queue and the dataset delta; has no I/O. Every command and frame it
/// produces is appended to its log.
pub struct Session {
    id: String,
    bundle: PolicyBundle,
    checkpoint: String,
    cfg: SessionConfig,
    initial_spec: EpisodeSpec,
    spec: EpisodeSpec,
    world: World,
    obs: Observation,
    queue: TraceQueue,
    mode: Mode,
    paused: bool,
    tick: u64,
    episode: u64,
    anchor: Option<Anchor>,
    human: Option<Action>,
    /// The anchor state still has to be executed; its label came from the
    /// backtrack call.
    anchor_unexecuted: bool,
    last_client_seq: Option<u64>,
    out_seq: u64,
    delta: Vec<LabeledSample>,
    log: Vec<LogLine>,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        bundle: PolicyBundle,
        spec: EpisodeSpec,
        cfg: SessionConfig,
    ) -> Result<Self> {
        let world = World::new(spec.world_config())?;
        let obs = world.observe();
        bundle.act(&obs)?;
        let checkpoint = checkpoint::digest(&checkpoint::encode(&bundle));
        Ok(Self {
            id: id.into(),
            bundle,
            checkpoint,
            cfg,
            initial_spec: spec,
            spec,
            world,
            obs,
            queue: TraceQueue::new(cfg.queue_len),
            mode: Mode::Autonomous,
            paused: false,
            tick: 0,
            episode: 0,
            anchor: None,
            human: None,
            anchor_unexecuted: false,
            last_client_seq: None,
            out_seq: 0,
            delta: Vec::new(),
            log: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Digest of the policy checkpoint driving the session.
    pub fn checkpoint(&self) -> &str {
        &self.checkpoint
    }

    pub fn initial_spec(&self) -> EpisodeSpec {
        self.initial_spec
    }

    /// Episode currently loaded.
    pub fn spec(&self) -> EpisodeSpec {
        self.spec
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn episode_over(&self) -> bool {
        self.world.is_terminated()
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            mode: self.mode,
            paused: self.paused,
            tick: self.tick,
            episode: self.episode,
            spec: self.spec,
            robot: self.world.robot(),
            queue_len: self.queue.len(),
            queue_capacity: self.queue.capacity(),
            checkpoint: self.checkpoint.clone(),
        }
    }

    /// Samples produced so far: backtracked relabels and plain human samples.
    pub fn delta(&self) -> &[LabeledSample] {
        &self.delta
    }

    pub fn log(&self) -> &[LogLine] {
        &self.log
    }

    fn push_log(&mut self, entry: LogEntry) {
        let seq = self.log.len() as u64;
        self.log.push(LogLine { seq, entry });
    }

    fn emit(&mut self, body: ServerBody) -> ServerMessage {
        let msg = ServerMessage {
            version: PROTOCOL_VERSION,
            session: self.id.clone(),
            seq: self.out_seq,
            body,
        };
        self.out_seq += 1;
        self.push_log(LogEntry::Out { msg: msg.clone() });
        msg
    }

    /// Greeting sent to each newly connected client.
    pub fn hello(&mut self, tick_hz: f64) -> ServerMessage {
        let checkpoint = self.checkpoint.clone();
        self.emit(ServerBody::Hello { checkpoint, tick_hz })
    }

    /// Rejection for a frame that could not be parsed at all.
    pub fn reject_malformed(&mut self, reason: String) -> ServerMessage {
        self.emit(ServerBody::Reject {
            ack_seq: None,
            reason,
        })
    }

    /// A human in control who drops off leaves the robot paused; an autonomous
    /// session keeps running.
    pub fn client_disconnected(&mut self) {
        self.push_log(LogEntry::Disconnect { tick: self.tick });
        if self.mode == Mode::HumanControl {
            self.paused = true;
        }
    }

    /// Applies one client command and answers with `ack` or `reject`.
    pub fn handle(&mut self, msg: &ClientMessage) -> ServerMessage {
        self.push_log(LogEntry::In {
            tick: self.tick,
            msg: msg.clone(),
        });
        let body = match self.apply(msg) {
            Ok(samples) => ServerBody::Ack {
                ack_seq: msg.seq,
                samples,
            },
            Err(reason) => ServerBody::Reject {
                ack_seq: Some(msg.seq),
                reason,
            },
        };
        self.emit(body)
    }

    fn apply(&mut self, msg: &ClientMessage) -> Result<usize, String> {
        if msg.version != PROTOCOL_VERSION {
            return Err(format!("protocol version {} unsupported", msg.version));
        }
        if msg.session != self.id {
            return Err(format!("unknown session {:?}", msg.session));
        }
        if let Some(last) = self.last_client_seq {
            if msg.seq <= last {
                return Err(format!("sequence {} is not after {last}", msg.seq));
            }
        }
        self.last_client_seq = Some(msg.seq);
        match msg.command {
            ClientCommand::Seize => {
                if self.mode == Mode::HumanControl {
                    return Err("already seized".into());
                }
                if self.world.is_terminated() {
                    return Err("episode is over".into());
                }
                let (_, policy_action) =
                    self.bundle.act(&self.obs).map_err(|e| e.to_string())?;
                self.anchor = Some(Anchor {
                    observation: self.obs.clone(),
                    policy_action,
                    scenario: self.label(),
                    step: self.world.step_index(),
                });
                self.mode = Mode::HumanControl;
                self.human = None;
                Ok(0)
            }
            ClientCommand::SetAction {
                steer_bin,
                speed_bin,
            } => {
                if self.mode != Mode::HumanControl {
                    return Err("set_action requires a seized session".into());
                }
                let a = Action::new(steer_bin, speed_bin).map_err(|e| e.to_string())?;
                let mut added = 0;
                if self.human.is_none() {
                    let anchor = self.anchor.as_ref().expect("seize stores the anchor");
                    self.queue.push(TraceEntry {
                        observation: anchor.observation.clone(),
                        action: anchor.policy_action,
                        step: anchor.step,
                        scenario: anchor.scenario,
                    });
                    let samples = backtrack(
                        &self.queue,
                        a,
                        anchor.policy_action,
                        &BacktrackSchedule::new(self.cfg.schedule, self.cfg.queue_len),
                        &self.cfg.backtrack,
                        self.cfg.iteration,
                    )
                    .map_err(|e| e.to_string())?;
                    added = samples.len();
                    self.delta.extend(samples);
                    self.queue.clear();
                    self.anchor_unexecuted = true;
                }
                self.human = Some(a);
                Ok(added)
            }
            ClientCommand::Release => {
                if self.mode != Mode::HumanControl {
                    return Err("not seized".into());
                }
                self.mode = Mode::Autonomous;
                self.queue.clear();
                self.anchor = None;
                self.human = None;
                self.anchor_unexecuted = false;
                Ok(0)
            }
            ClientCommand::Pause => {
                self.paused = true;
                Ok(0)
            }
            ClientCommand::Resume => {
                self.paused = false;
                Ok(0)
            }
            ClientCommand::StartEpisode {
                scenario,
                seed,
                road_seed,
            } => {
                let spec = EpisodeSpec::new(scenario, road_seed.unwrap_or(seed), seed);
                let world = World::new(spec.world_config()).map_err(|e| e.to_string())?;
                if world.config().raster_dims() != self.bundle.dims() {
                    return Err("world sensor does not match the policy".into());
                }
                self.spec = spec;
                self.obs = world.observe();
                self.world = world;
                self.queue.clear();
                self.mode = Mode::Autonomous;
                self.anchor = None;
                self.human = None;
                self.anchor_unexecuted = false;
                self.episode += 1;
                Ok(0)
            }
        }
    }

    /// Human samples are routed by the simulator's scenario label, not by the
    /// policy's meta choice.
    fn label(&self) -> ScenarioId {
        meta_label(&self.world)
    }

    /// Advances the simulation by one tick. Returns `None` while paused or
    /// after the episode ended. In human control the policy still proposes an
    /// action, which is reported but never executed; until the first human
    /// action arrives the world does not move.
    pub fn tick(&mut self) -> Result<Option<ServerMessage>> {
        if self.paused || self.world.is_terminated() {
            return Ok(None);
        }
        let (chosen, policy_action) = self.bundle.act(&self.obs)?;
        let executed = match self.mode {
            Mode::Autonomous => {
                self.queue.push(TraceEntry {
                    observation: self.obs.clone(),
                    action: policy_action,
                    step: self.world.step_index(),
                    scenario: self.label(),
                });
                Some(policy_action)
            }
            Mode::HumanControl => match self.human {
                None => None,
                Some(h) => {
                    if self.anchor_unexecuted {
                        self.anchor_unexecuted = false;
                    } else {
                        self.delta.push(LabeledSample::action(
                            self.obs.clone(),
                            soft_label(h, self.cfg.steer_sigma, self.cfg.speed_sigma),
                            self.label(),
                            Provenance::Expert,
                            self.cfg.iteration,
                        ));
                    }
                    Some(h)
                }
            },
        };
        let events = match executed {
            Some(a) => {
                let out = self.world.step(a)?;
                self.obs = out.observation;
                out.events
            }
            None => Vec::new(),
        };
        let frame = TickFrame {
            tick: self.tick,
            episode: self.episode,
            step: self.world.step_index(),
            robot: self.world.robot(),
            pedestrians: self.world.pedestrians().iter().map(|p| p.pose()).collect(),
            scenario: chosen,
            policy_action,
            executed,
            mode: self.mode,
            queue_len: self.queue.len(),
            queue_capacity: self.queue.capacity(),
            events,
        };
        self.tick += 1;
        Ok(Some(self.emit(ServerBody::Tick(frame))))
    }
}
