//! Live intervention gateway. A browser or script connects over WebSocket,
//! watches the policy drive, and can seize control. The first human action
//! after a seize is treated as the intervention: the trace queue is
//! backtracked against it exactly as in learn-from-intervention DAgger.
//! Later human actions become plain expert samples until release.

pub mod log;
pub mod protocol;
pub mod server;
pub mod session;

pub use log::{parse_log, record_session, reingest, render_log, LogHeader};
pub use protocol::{parse_client, ClientCommand, ClientMessage, Mode, ServerBody, ServerMessage, TickFrame, PROTOCOL_VERSION};
pub use server::{serve, ServeConfig, ServerHandle, DEFAULT_TICK_HZ};
pub use session::{LogEntry, LogLine, Session, SessionConfig, SessionState};
