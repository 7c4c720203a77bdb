//! WebSocket front end. One thread runs the simulation loop and owns the
//! [`Session`]; connection threads only move text frames and talk to it over
//! channels.

use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::log::render_log;
use super::protocol::{parse_client, ClientMessage, ServerMessage};
use super::session::Session;
use crate::error::{Error, Result};

pub const DEFAULT_TICK_HZ: f64 = 10.0;

const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub tick_hz: f64,
    /// Stop after this many loop periods, paused ones included.
    pub max_ticks: Option<u64>,
    /// Session log, appended as the session runs.
    pub log_path: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 0)),
            tick_hz: DEFAULT_TICK_HZ,
            max_ticks: None,
            log_path: None,
        }
    }
}

enum Event {
    Connected(u64, Sender<String>),
    Inbound(u64, std::result::Result<ClientMessage, String>),
    Disconnected(u64),
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sim: JoinHandle<Result<Session>>,
    acceptor: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn is_finished(&self) -> bool {
        self.sim.is_finished()
    }

    /// Stops the loop and returns the session with its log and delta.
    pub fn shutdown(self) -> Result<Session> {
        self.stop.store(true, Ordering::SeqCst);
        self.join()
    }

    /// Waits for the loop to end on its own (`max_ticks`).
    pub fn join(self) -> Result<Session> {
        let out = self
            .sim
            .join()
            .map_err(|_| Error::SessionLog("simulation thread panicked".into()))?;
        self.stop.store(true, Ordering::SeqCst);
        let _ = self.acceptor.join();
        out
    }
}

pub fn serve(session: Session, cfg: ServeConfig) -> Result<ServerHandle> {
    if !(cfg.tick_hz > 0.0 && cfg.tick_hz.is_finite()) {
        return Err(Error::config("tick_hz", "must be positive"));
    }
    let listener = TcpListener::bind(cfg.addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let acceptor = {
        let stop = stop.clone();
        thread::spawn(move || accept_loop(listener, tx, stop))
    };
    let sim = {
        let stop = stop.clone();
        thread::spawn(move || sim_loop(session, cfg, rx, stop))
    };
    Ok(ServerHandle {
        addr,
        stop,
        sim,
        acceptor,
    })
}

fn accept_loop(listener: TcpListener, events: Sender<Event>, stop: Arc<AtomicBool>) {
    let mut next_id = 0;
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let id = next_id;
                next_id += 1;
                let events = events.clone();
                let stop = stop.clone();
                workers.push(thread::spawn(move || {
                    let _ = connection(stream, id, events, stop);
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(_) => thread::sleep(POLL),
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
}

fn connection(
    stream: TcpStream,
    id: u64,
    events: Sender<Event>,
    stop: Arc<AtomicBool>,
) -> std::result::Result<(), tungstenite::Error> {
    stream.set_nonblocking(false)?;
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => {
            tungstenite::Error::Io(io::Error::other("handshake interrupted"))
        }
    })?;
    ws.get_mut().set_read_timeout(Some(POLL))?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    if events.send(Event::Connected(id, out_tx)).is_err() {
        return Ok(());
    }
    let result = pump(&mut ws, id, &events, &out_rx, &stop);
    let _ = events.send(Event::Disconnected(id));
    let _ = ws.close(None);
    let _ = ws.flush();
    result
}

fn pump(
    ws: &mut WebSocket<TcpStream>,
    id: u64,
    events: &Sender<Event>,
    out: &Receiver<String>,
    stop: &AtomicBool,
) -> std::result::Result<(), tungstenite::Error> {
    loop {
        loop {
            match out.try_recv() {
                Ok(text) => ws.send(Message::text(text))?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Ok(()),
            }
        }
        if stop.load(Ordering::SeqCst) {
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                let _ = events.send(Event::Inbound(id, parse_client(text.as_str())));
            }
            Ok(Message::Binary(_)) => {
                let _ = events.send(Event::Inbound(id, Err("binary frames are not accepted".into())));
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(())
            }
            Err(e) => return Err(e),
        }
    }
}

struct LogSink {
    file: Option<std::fs::File>,
    written: usize,
}

impl LogSink {
    fn open(path: Option<&PathBuf>, session: &Session) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let mut f = std::fs::File::create(p)?;
                f.write_all(render_log(&session.log_header(), &[]).as_bytes())?;
                Some(f)
            }
            None => None,
        };
        Ok(Self { file, written: 0 })
    }

    fn sync(&mut self, session: &Session) -> Result<()> {
        let Some(f) = &mut self.file else {
            return Ok(());
        };
        for line in &session.log()[self.written..] {
            let mut text = serde_json::to_string(line)?;
            text.push('\n');
            f.write_all(text.as_bytes())?;
        }
        self.written = session.log().len();
        f.flush()?;
        Ok(())
    }
}

fn to_text(msg: &ServerMessage) -> String {
    serde_json::to_string(msg).expect("server messages serialize")
}

fn sim_loop(
    mut session: Session,
    cfg: ServeConfig,
    events: Receiver<Event>,
    stop: Arc<AtomicBool>,
) -> Result<Session> {
    let period = Duration::from_secs_f64(1.0 / cfg.tick_hz);
    let mut clients: Vec<(u64, Sender<String>)> = Vec::new();
    let mut sink = LogSink::open(cfg.log_path.as_ref(), &session)?;
    let mut ticks = 0u64;
    let mut next = Instant::now();
    while !stop.load(Ordering::SeqCst) {
        if cfg.max_ticks.is_some_and(|m| ticks >= m) {
            break;
        }
        loop {
            let ev = match events.try_recv() {
                Ok(ev) => ev,
                Err(_) => break,
            };
            match ev {
                Event::Connected(id, tx) => {
                    let _ = tx.send(to_text(&session.hello(cfg.tick_hz)));
                    clients.push((id, tx));
                }
                Event::Inbound(id, parsed) => {
                    let reply = match parsed {
                        Ok(msg) => session.handle(&msg),
                        Err(reason) => session.reject_malformed(reason),
                    };
                    if let Some((_, tx)) = clients.iter().find(|(c, _)| *c == id) {
                        let _ = tx.send(to_text(&reply));
                    }
                }
                Event::Disconnected(id) => {
                    clients.retain(|(c, _)| *c != id);
                    if clients.is_empty() {
                        session.client_disconnected();
                    }
                }
            }
        }
        if let Some(frame) = session.tick()? {
            let text = to_text(&frame);
            clients.retain(|(_, tx)| tx.send(text.clone()).is_ok());
        }
        ticks += 1;
        sink.sync(&session)?;
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }
    sink.sync(&session)?;
    Ok(session)
}
