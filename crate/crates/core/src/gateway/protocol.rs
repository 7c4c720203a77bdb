//! Wire messages. Every message is one JSON object per WebSocket text frame:
//!
//! ```json
//! {"version": 1, "session": "s-1", "seq": 4, "type": "set_action", "steer_bin": 2, "speed_bin": 1}
//! ```
//!
//! `seq` must increase strictly within a session on each side. The server
//! answers every client message with `ack` or `reject` and streams `tick`
//! frames.

use serde::{Deserialize, Serialize};

use crate::action::{Action, ScenarioId};
use crate::geometry::Pose;
use crate::world::StepEvent;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientCommand {
    Seize,
    Release,
    SetAction {
        steer_bin: usize,
        speed_bin: usize,
    },
    Pause,
    Resume,
    StartEpisode {
        scenario: ScenarioId,
        seed: u64,
        /// Defaults to `seed`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        road_seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub version: u32,
    pub session: String,
    pub seq: u64,
    #[serde(flatten)]
    pub command: ClientCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Autonomous,
    HumanControl,
}

/// Vector state of one simulation tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickFrame {
    pub tick: u64,
    pub episode: u64,
    /// Step index of the world after this tick.
    pub step: usize,
    pub robot: Pose,
    pub pedestrians: Vec<Pose>,
    /// Scenario picked by the policy's meta head.
    pub scenario: ScenarioId,
    /// What the policy proposed this tick.
    pub policy_action: Action,
    /// What was executed; `None` while waiting for the first human action.
    pub executed: Option<Action>,
    pub mode: Mode,
    pub queue_len: usize,
    pub queue_capacity: usize,
    pub events: Vec<StepEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    Hello {
        checkpoint: String,
        tick_hz: f64,
    },
    Tick(TickFrame),
    Ack {
        ack_seq: u64,
        /// Samples appended to the session dataset by this command.
        samples: usize,
    },
    Reject {
        ack_seq: Option<u64>,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub version: u32,
    pub session: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: ServerBody,
}

/// Parses one inbound text frame. Unknown types, missing fields and extra
/// garbage all come back as an error string.
pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    let msg: ClientMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if msg.version != PROTOCOL_VERSION {
        return Err(format!(
            "protocol version {} unsupported, expected {PROTOCOL_VERSION}",
            msg.version
        ));
    }
    Ok(msg)
}

pub fn set_action(a: Action) -> ClientCommand {
    ClientCommand::SetAction {
        steer_bin: a.steer_bin(),
        speed_bin: a.speed_bin(),
    }
}
