//! Session logs: a JSON header line followed by one [`LogLine`] per line.
//! Replaying a log against the same checkpoint rebuilds the session and must
//! reproduce every line, which yields the same dataset delta.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::protocol::ServerBody;
use super::session::{LogEntry, LogLine, Session, SessionConfig};
use crate::checkpoint;
use crate::error::{Error, Result};
use crate::policy::{LabeledSample, PolicyBundle};
use crate::rollout::EpisodeSpec;

pub const LOG_FORMAT: &str = "pednav-session";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub session: String,
    pub checkpoint: String,
    /// Episode the session started with.
    pub spec: EpisodeSpec,
    pub config: SessionConfig,
}

/// Serializes a session log. A session that never saw a client or a tick
/// produces just the header.
pub fn render_log(header: &LogHeader, lines: &[LogLine]) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for line in lines {
        out.push_str(&serde_json::to_string(line).expect("log line serializes"));
        out.push('\n');
    }
    out
}

pub fn record_session(
    header: &LogHeader,
    lines: &[LogLine],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(render_log(header, lines).as_bytes())?;
    Ok(())
}

/// Parses a log and checks that line sequence numbers are contiguous from 0.
pub fn parse_log(text: &str) -> Result<(LogHeader, Vec<LogLine>)> {
    let mut rows = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = rows
        .next()
        .ok_or_else(|| Error::SessionLog("empty log, missing header".into()))?;
    let header: LogHeader = serde_json::from_str(first)
        .map_err(|e| Error::SessionLog(format!("line 1: bad header: {e}")))?;
    if header.format != LOG_FORMAT || header.version != LOG_VERSION {
        return Err(Error::SessionLog(format!(
            "unsupported log {} v{}",
            header.format, header.version
        )));
    }
    let mut lines = Vec::new();
    for (i, row) in rows {
        let line: LogLine = serde_json::from_str(row)
            .map_err(|e| Error::SessionLog(format!("line {}: {e}", i + 1)))?;
        let expected = lines.len() as u64;
        if line.seq != expected {
            return Err(Error::SessionLog(format!(
                "sequence gap at line {}: expected seq {expected}, found {}",
                i + 1,
                line.seq
            )));
        }
        lines.push(line);
    }
    Ok((header, lines))
}

/// Replays a recorded session against `bundle` and returns its dataset delta.
/// Fails on sequence gaps, a checkpoint mismatch, or any line the replay does
/// not reproduce exactly.
pub fn reingest(text: &str, bundle: &PolicyBundle) -> Result<Vec<LabeledSample>> {
    let (header, lines) = parse_log(text)?;
    let digest = checkpoint::digest(&checkpoint::encode(bundle));
    if digest != header.checkpoint {
        return Err(Error::SessionLog(format!(
            "log was recorded with checkpoint {}, replaying with {digest}",
            header.checkpoint
        )));
    }
    let mut session = Session::new(
        header.session.clone(),
        bundle.clone(),
        header.spec,
        header.config,
    )?;
    for line in &lines {
        match &line.entry {
            LogEntry::In { msg, .. } => {
                session.handle(msg);
            }
            LogEntry::Disconnect { .. } => session.client_disconnected(),
            LogEntry::Out { msg } => match &msg.body {
                ServerBody::Hello { tick_hz, .. } => {
                    session.hello(*tick_hz);
                }
                ServerBody::Tick(_) => {
                    session.tick()?;
                }
                ServerBody::Reject {
                    ack_seq: None,
                    reason,
                } => {
                    session.reject_malformed(reason.clone());
                }
                // Produced by the preceding inbound command.
                ServerBody::Ack { .. } | ServerBody::Reject { .. } => {}
            },
        }
    }
    let replayed = session.log();
    if let Some(i) = (0..lines.len().min(replayed.len())).find(|&i| replayed[i] != lines[i]) {
        return Err(Error::SessionLog(format!("replay diverged at seq {i}")));
    }
    if replayed.len() != lines.len() {
        return Err(Error::SessionLog(format!(
            "replay produced {} lines, log has {}",
            replayed.len(),
            lines.len()
        )));
    }
    Ok(session.delta().to_vec())
}

impl Session {
    pub fn log_header(&self) -> LogHeader {
        LogHeader {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            session: self.id().to_string(),
            checkpoint: self.checkpoint().to_string(),
            spec: self.initial_spec(),
            config: *self.config(),
        }
    }
}
