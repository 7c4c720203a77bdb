use std::net::TcpStream;
use std::time::{Duration, Instant};

use pednav::action::{Action, N_SPEED, N_STEER, STOP};
use pednav::gateway::protocol::set_action;
use pednav::gateway::*;
use pednav::policy::{soft_label, Provenance};
use pednav::rollout::{run_controller, EpisodeSpec};
use pednav::world::World;
use pednav::{PolicyBundle, ScenarioId};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

const QUEUE: usize = 8;

fn spec() -> EpisodeSpec {
    EpisodeSpec::new(ScenarioId::PathFollow, 201, 3)
}

fn bundle() -> PolicyBundle {
    PolicyBundle::new(spec().world_config().raster_dims(), 16, 11)
}

fn config() -> SessionConfig {
    SessionConfig {
        queue_len: QUEUE,
        ..SessionConfig::default()
    }
}

fn session() -> Session {
    Session::new("s-1", bundle(), spec(), config()).unwrap()
}

struct Client {
    seq: u64,
}

impl Client {
    fn msg(&mut self, command: ClientCommand) -> ClientMessage {
        self.seq += 1;
        ClientMessage {
            version: PROTOCOL_VERSION,
            session: "s-1".into(),
            seq: self.seq,
            command,
        }
    }
}

fn acked(m: &ServerMessage) -> usize {
    match &m.body {
        ServerBody::Ack { samples, .. } => *samples,
        other => panic!("expected ack, got {other:?}"),
    }
}

fn rejected(m: &ServerMessage) -> bool {
    matches!(m.body, ServerBody::Reject { .. })
}

fn frame(m: ServerMessage) -> TickFrame {
    match m.body {
        ServerBody::Tick(f) => f,
        other => panic!("expected tick, got {other:?}"),
    }
}

/// Headless rollout of the same policy, cut after `n` steps.
fn headless(n: usize) -> Vec<(pednav::Observation, Action, pednav::geometry::Pose)> {
    let b = bundle();
    let mut out = Vec::new();
    run_controller(spec().world_config(), |w, obs| {
        if out.len() == n {
            return Ok(None);
        }
        let a = b.act(obs)?.1;
        let mut next = w.clone();
        next.step(a)?;
        out.push((obs.clone(), a, next.robot()));
        Ok(Some(a))
    })
    .unwrap();
    out
}

#[test]
fn autonomous_ticks_match_headless_rollout() {
    let mut s = session();
    let mut frames = Vec::new();
    while let Some(m) = s.tick().unwrap() {
        frames.push(frame(m));
    }
    let reference = headless(usize::MAX);
    assert_eq!(frames.len(), reference.len());
    for (f, (_, a, pose)) in frames.iter().zip(&reference) {
        assert_eq!(f.executed, Some(*a));
        assert_eq!(f.policy_action, *a);
        assert_eq!(f.robot, *pose);
        assert_eq!(f.mode, Mode::Autonomous);
    }
}

#[test]
fn first_human_action_backtracks_the_queue() {
    let steps = 12;
    let reference = headless(steps + 1);
    assert_eq!(reference.len(), steps + 1, "episode too short for the test");
    let mut s = session();
    let mut c = Client { seq: 0 };
    for _ in 0..steps {
        s.tick().unwrap().unwrap();
    }
    assert_eq!(acked(&s.handle(&c.msg(ClientCommand::Seize))), 0);

    let (_, learner_t, _) = reference[steps];
    let human = Action::new((learner_t.steer_bin() + 3) % N_STEER, (learner_t.speed_bin() + 1) % N_SPEED).unwrap();
    let added = acked(&s.handle(&c.msg(set_action(human))));
    assert_eq!(added, QUEUE);
    let delta = s.delta().to_vec();
    assert_eq!(delta.len(), QUEUE);

    // Oracle: anchor plus the QUEUE - 1 preceding autonomous steps, linear
    // decay over the queue length, loss scaled by the normalized bin error.
    let err = 0.5
        * (learner_t.steer_bin().abs_diff(human.steer_bin()) as f64 / (N_STEER - 1) as f64
            + learner_t.speed_bin().abs_diff(human.speed_bin()) as f64 / (N_SPEED - 1) as f64);
    let p = pednav::algos::BacktrackParams::default();
    let expert = soft_label(human, p.steer_sigma, p.speed_sigma);
    for (i, sample) in delta.iter().enumerate() {
        let k = QUEUE - 1 - i;
        let (obs, learner, _) = &reference[steps - k];
        assert_eq!(&sample.observation, obs, "k={k}");
        assert_eq!(sample.provenance, Provenance::LearnerBacktracked);
        let w = 1.0 - k as f64 / QUEUE as f64;
        let l = soft_label(*learner, p.steer_sigma, p.speed_sigma);
        let pednav::policy::Target::Action(t) = &sample.target else {
            panic!("action target expected");
        };
        for b in 0..N_STEER {
            assert!((t.steer[b] - ((1.0 - w) * l.steer[b] + w * expert.steer[b])).abs() < 1e-12);
        }
        for b in 0..N_SPEED {
            assert!((t.speed[b] - ((1.0 - w) * l.speed[b] + w * expert.speed[b])).abs() < 1e-12);
        }
        assert!((t.weight - err * w.max(p.w_floor)).abs() < 1e-12);
    }

    // Later actions are plain samples, the policy is never executed.
    assert_eq!(acked(&s.handle(&c.msg(set_action(human)))), 0);
    let mut world = World::new(spec().world_config()).unwrap();
    for (_, a, _) in &reference[..steps] {
        world.step(*a).unwrap();
    }
    for _ in 0..4 {
        let f = frame(s.tick().unwrap().unwrap());
        assert_eq!(f.mode, Mode::HumanControl);
        assert_eq!(f.executed, Some(human));
        world.step(human).unwrap();
        assert_eq!(f.robot, world.robot());
    }
    assert_eq!(s.delta().len(), QUEUE + 3);
    assert!(s.delta()[QUEUE..].iter().all(|x| x.provenance == Provenance::Expert));

    assert_eq!(acked(&s.handle(&c.msg(ClientCommand::Release))), 0);
    assert_eq!(s.state().queue_len, 0);
    let f = frame(s.tick().unwrap().unwrap());
    assert_eq!(f.mode, Mode::Autonomous);
    assert_eq!(f.executed, Some(f.policy_action));
}

#[test]
fn seized_world_waits_for_the_first_action() {
    let mut s = session();
    let mut c = Client { seq: 0 };
    s.tick().unwrap();
    s.handle(&c.msg(ClientCommand::Seize));
    let before = s.world().robot();
    for _ in 0..3 {
        let f = frame(s.tick().unwrap().unwrap());
        assert_eq!(f.executed, None);
        assert_eq!(f.robot, before);
    }
    assert!(s.delta().is_empty());
}

#[test]
fn bad_commands_are_rejected_and_state_is_kept() {
    let mut s = session();
    let mut c = Client { seq: 0 };
    assert!(rejected(&s.handle(&c.msg(set_action(Action::new(3, STOP).unwrap())))));
    assert!(rejected(&s.handle(&c.msg(ClientCommand::Release))));
    assert!(rejected(&s.handle(&c.msg(ClientCommand::SetAction {
        steer_bin: N_STEER,
        speed_bin: 0
    }))));
    let mut stale = c.msg(ClientCommand::Pause);
    stale.seq = 1;
    assert!(rejected(&s.handle(&stale)));
    let mut other = c.msg(ClientCommand::Pause);
    other.session = "intruder".into();
    assert!(rejected(&s.handle(&other)));
    assert!(!s.is_paused());
    assert_eq!(s.mode(), Mode::Autonomous);
    s.handle(&c.msg(ClientCommand::Seize));
    assert!(rejected(&s.handle(&c.msg(ClientCommand::Seize))));
    assert!(s.delta().is_empty());
}

#[test]
fn pause_resume_and_new_episode() {
    let mut s = session();
    let mut c = Client { seq: 0 };
    s.handle(&c.msg(ClientCommand::Pause));
    assert!(s.tick().unwrap().is_none());
    s.handle(&c.msg(ClientCommand::Resume));
    assert!(s.tick().unwrap().is_some());
    let m = s.handle(&c.msg(ClientCommand::StartEpisode {
        scenario: ScenarioId::Cross,
        seed: 4,
        road_seed: Some(101),
    }));
    acked(&m);
    assert_eq!(s.spec(), EpisodeSpec::new(ScenarioId::Cross, 101, 4));
    let f = frame(s.tick().unwrap().unwrap());
    assert_eq!(f.episode, 1);
    assert_eq!(f.step, 1);
}

#[test]
fn disconnect_pauses_only_human_control() {
    let mut s = session();
    let mut c = Client { seq: 0 };
    s.client_disconnected();
    assert!(!s.is_paused());
    s.handle(&c.msg(ClientCommand::Seize));
    s.client_disconnected();
    assert!(s.is_paused());
}

fn scripted(s: &mut Session) {
    let mut c = Client { seq: 0 };
    s.hello(DEFAULT_TICK_HZ);
    for _ in 0..10 {
        s.tick().unwrap();
    }
    s.handle(&c.msg(ClientCommand::Seize));
    s.tick().unwrap();
    s.handle(&c.msg(set_action(Action::new(1, 1).unwrap())));
    for _ in 0..3 {
        s.tick().unwrap();
    }
    s.handle(&c.msg(set_action(Action::new(2, 1).unwrap())));
    s.tick().unwrap();
    s.reject_malformed("garbage".into());
    s.handle(&c.msg(ClientCommand::Release));
    s.tick().unwrap();
}

#[test]
fn reingesting_a_log_reproduces_the_delta() {
    let mut s = session();
    scripted(&mut s);
    assert!(!s.delta().is_empty());
    let text = render_log(&s.log_header(), s.log());
    let delta = reingest(&text, &bundle()).unwrap();
    assert_eq!(delta, s.delta());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.jsonl");
    record_session(&s.log_header(), s.log(), &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn empty_session_logs_only_the_header() {
    let s = session();
    let text = render_log(&s.log_header(), s.log());
    assert_eq!(text.lines().count(), 1);
    assert!(reingest(&text, &bundle()).unwrap().is_empty());
}

#[test]
fn sequence_gaps_are_reported() {
    let mut s = session();
    scripted(&mut s);
    let text = render_log(&s.log_header(), s.log());
    let lines: Vec<&str> = text.lines().collect();
    let holed: String = lines
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != 5)
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    let err = reingest(&holed, &bundle()).unwrap_err().to_string();
    assert!(err.contains("gap"), "{err}");
}

#[test]
fn tampered_logs_and_wrong_checkpoints_fail() {
    let mut s = session();
    scripted(&mut s);
    let text = render_log(&s.log_header(), s.log());
    let other = PolicyBundle::new(spec().world_config().raster_dims(), 16, 12);
    assert!(reingest(&text, &other).is_err());
    let tampered = text.replacen("\"steer_bin\":1", "\"steer_bin\":5", 1);
    assert_ne!(tampered, text);
    assert!(reingest(&tampered, &bundle()).is_err());
}

type Ws = WebSocket<MaybeTlsStream<TcpStream>>;

fn connect(addr: std::net::SocketAddr) -> Ws {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    }
    ws
}

fn next_non_tick(ws: &mut Ws) -> ServerMessage {
    loop {
        let Message::Text(t) = ws.read().unwrap() else {
            continue;
        };
        let m: ServerMessage = serde_json::from_str(t.as_str()).unwrap();
        if !matches!(m.body, ServerBody::Tick(_)) {
            return m;
        }
    }
}

fn send(ws: &mut Ws, m: &ClientMessage) {
    ws.send(Message::text(serde_json::to_string(m).unwrap())).unwrap();
}

#[test]
fn websocket_session_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("live.jsonl");
    let handle = serve(
        session(),
        ServeConfig {
            tick_hz: 100.0,
            log_path: Some(log.clone()),
            ..ServeConfig::default()
        },
    )
    .unwrap();
    let mut ws = connect(handle.local_addr());
    let hello = next_non_tick(&mut ws);
    assert!(matches!(hello.body, ServerBody::Hello { .. }));
    assert_eq!(hello.session, "s-1");

    ws.send(Message::text(r#"{"version":1,"session":"s-1","seq":1,"type":"warp"}"#)).unwrap();
    assert!(matches!(next_non_tick(&mut ws).body, ServerBody::Reject { ack_seq: None, .. }));

    let mut c = Client { seq: 1 };
    send(&mut ws, &c.msg(ClientCommand::Seize));
    acked(&next_non_tick(&mut ws));
    send(&mut ws, &c.msg(set_action(Action::new(2, 1).unwrap())));
    assert!(acked(&next_non_tick(&mut ws)) > 0);

    // Server seq is strictly increasing across everything it sent.
    let mut last = hello.seq;
    let deadline = Instant::now() + Duration::from_secs(2);
    let mut ticks = 0;
    while ticks < 5 && Instant::now() < deadline {
        if let Message::Text(t) = ws.read().unwrap() {
            let m: ServerMessage = serde_json::from_str(t.as_str()).unwrap();
            assert!(m.seq > last);
            last = m.seq;
            if let ServerBody::Tick(f) = m.body {
                assert_eq!(f.mode, Mode::HumanControl);
                ticks += 1;
            }
        }
    }
    assert_eq!(ticks, 5);
    ws.close(None).unwrap();
    let _ = ws.flush();
    let start = Instant::now();
    let s = loop {
        std::thread::sleep(Duration::from_millis(50));
        let text = std::fs::read_to_string(&log).unwrap();
        if text.contains("\"dir\":\"disconnect\"") || start.elapsed() > Duration::from_secs(5) {
            break handle.shutdown().unwrap();
        }
    };
    assert!(s.is_paused(), "human-controlled session pauses when the client leaves");
    let text = std::fs::read_to_string(&log).unwrap();
    assert_eq!(text, render_log(&s.log_header(), s.log()));
    assert_eq!(reingest(&text, &bundle()).unwrap(), s.delta());
}

#[test]
fn server_stops_after_max_ticks_with_header_only_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("idle.jsonl");
    let handle = serve(
        session(),
        ServeConfig {
            tick_hz: 200.0,
            max_ticks: Some(0),
            log_path: Some(log.clone()),
            ..ServeConfig::default()
        },
    )
    .unwrap();
    let s = handle.join().unwrap();
    assert!(s.log().is_empty());
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 1);
}
