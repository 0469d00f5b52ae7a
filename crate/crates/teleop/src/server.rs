//! Websocket service pacing a [`Session`] against the wall clock.

use crate::protocol::{
    decode_client, encode_server, ErrorCode, Role, ServerMessage, SUPPORTED_VERSIONS,
};
use crate::session::{Session, SessionRun};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use coopath_core::{Scenario, ScenarioError};
use futures::{SinkExt, StreamExt};
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;

pub const DEFAULT_PORT: u16 = 8070;

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("simulation task failed: {0}")]
    Task(String),
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    /// Snapshots per wall-clock second.
    pub snapshot_rate: f64,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Wall time without driver input after which the sim pauses.
    pub input_timeout: Duration,
    /// Backlog of simulated time beyond which pending ticks are dropped.
    pub max_backlog: f64,
}

impl ServeConfig {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            addr,
            snapshot_rate: 30.0,
            speed: 1.0,
            input_timeout: Duration::from_millis(500),
            max_backlog: 0.5,
        }
    }
}

enum Command {
    Connect {
        id: u64,
        frames: mpsc::UnboundedSender<String>,
        reply: oneshot::Sender<(Role, String)>,
    },
    Disconnect {
        id: u64,
    },
    Frame {
        id: u64,
        text: String,
    },
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::UnboundedSender<Command>,
    snapshots: broadcast::Sender<Arc<str>>,
    scenario: watch::Receiver<Arc<Scenario>>,
    next_id: Arc<std::sync::atomic::AtomicU64>,
}

/// A running service. Dropping it without [`ServerHandle::shutdown`] aborts it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    sim: Option<JoinHandle<Vec<SessionRun>>>,
    http: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the service and returns every run of the session.
    pub async fn shutdown(mut self) -> Result<Vec<SessionRun>, TeleopError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let sim = self.sim.take().expect("shutdown runs once");
        let runs = sim.await.map_err(|e| TeleopError::Task(e.to_string()))?;
        self.http.abort();
        Ok(runs)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.http.abort();
        if let Some(sim) = &self.sim {
            sim.abort();
        }
    }
}

/// Binds the listener and starts serving `scenario`.
pub async fn serve(scenario: Scenario, config: ServeConfig) -> Result<ServerHandle, TeleopError> {
    let session = Session::new(scenario.clone())?;
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|source| TeleopError::Bind {
            addr: config.addr,
            source,
        })?;
    let addr = listener.local_addr().map_err(|source| TeleopError::Bind {
        addr: config.addr,
        source,
    })?;

    let (commands, command_rx) = mpsc::unbounded_channel();
    let (snapshots, _) = broadcast::channel(64);
    let (scenario_tx, scenario_rx) = watch::channel(Arc::new(scenario));
    let (stop, stop_rx) = oneshot::channel();

    let state = AppState {
        commands,
        snapshots: snapshots.clone(),
        scenario: scenario_rx,
        next_id: Arc::default(),
    };
    let app = Router::new()
        .route("/teleop", get(teleop))
        .route("/health", get(health))
        .route("/scenario", get(current_scenario))
        .with_state(state);

    let sim = tokio::spawn(sim_loop(session, config, command_rx, snapshots, scenario_tx, stop_rx));
    let http = tokio::spawn(async move {
        if let Err(err) = axum::serve(listener, app).await {
            tracing::error!("http server stopped: {err}");
        }
    });
    Ok(ServerHandle {
        addr,
        stop: Some(stop),
        sim: Some(sim),
        http,
    })
}

async fn health() -> impl IntoResponse {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn current_scenario(State(state): State<AppState>) -> impl IntoResponse {
    let scenario = state.scenario.borrow().clone();
    Json(serde_json::to_value(&*scenario).expect("scenario serializes"))
}

async fn teleop(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(socket: WebSocket, state: AppState) {
    let id = state.next_id.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let (frames_tx, mut frames) = mpsc::unbounded_channel();
    let (reply, role) = oneshot::channel();
    let mut snapshots = state.snapshots.subscribe();
    if state
        .commands
        .send(Command::Connect {
            id,
            frames: frames_tx,
            reply,
        })
        .is_err()
    {
        return;
    }
    let Ok((role, hello)) = role.await else { return };
    tracing::info!(id, ?role, "cockpit connected");

    let (mut sink, mut stream) = socket.split();
    if sink.send(Message::Text(hello)).await.is_err() {
        let _ = state.commands.send(Command::Disconnect { id });
        return;
    }
    loop {
        tokio::select! {
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    if state.commands.send(Command::Frame { id, text }).is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Binary(_))) => {
                    let frame = encode_server(&ServerMessage::error(ErrorCode::BadFrame, "binary frames are not supported"));
                    if sink.send(Message::Text(frame)).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            direct = frames.recv() => match direct {
                Some(frame) => {
                    if sink.send(Message::Text(frame)).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            snapshot = snapshots.recv() => match snapshot {
                Ok(frame) => {
                    if sink.send(Message::Text(frame.to_string())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => break,
            },
        }
    }
    let _ = sink.send(Message::Close(None)).await;
    let _ = state.commands.send(Command::Disconnect { id });
    tracing::info!(id, "cockpit disconnected");
}

struct Clients {
    frames: std::collections::HashMap<u64, mpsc::UnboundedSender<String>>,
    driver: Option<u64>,
}

impl Clients {
    fn send(&self, id: u64, msg: &ServerMessage) {
        if let Some(tx) = self.frames.get(&id) {
            let _ = tx.send(encode_server(msg));
        }
    }
}

async fn sim_loop(
    mut session: Session,
    config: ServeConfig,
    mut commands: mpsc::UnboundedReceiver<Command>,
    snapshots: broadcast::Sender<Arc<str>>,
    scenario_tx: watch::Sender<Arc<Scenario>>,
    mut stop: oneshot::Receiver<()>,
) -> Vec<SessionRun> {
    let mut clients = Clients {
        frames: Default::default(),
        driver: None,
    };
    let mut ticker = tokio::time::interval(Duration::from_millis(2));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let snapshot_period = Duration::from_secs_f64(1.0 / config.snapshot_rate);
    let mut last_wake = Instant::now();
    let mut next_snapshot = last_wake;
    let mut last_input: Option<Instant> = None;
    let mut backlog = 0.0;
    let mut sent: Option<(u32, u64, bool, bool)> = None;
    let mut force_snapshot = true;

    loop {
        tokio::select! {
            _ = &mut stop => break,
            cmd = commands.recv() => {
                let Some(cmd) = cmd else { break };
                match cmd {
                    Command::Connect { id, frames, reply } => {
                        let role = if clients.driver.is_none() {
                            clients.driver = Some(id);
                            Role::Driver
                        } else {
                            Role::Observer
                        };
                        clients.frames.insert(id, frames);
                        let scenario = session.scenario();
                        let hello = encode_server(&ServerMessage::Hello {
                            role,
                            supported_versions: SUPPORTED_VERSIONS.to_vec(),
                            scenario_hash: scenario.hash(),
                            mode: scenario.mode,
                            dt: scenario.dt,
                            snapshot_rate: config.snapshot_rate,
                        });
                        let _ = reply.send((role, hello));
                        force_snapshot = true;
                    }
                    Command::Disconnect { id } => {
                        clients.frames.remove(&id);
                        if clients.driver == Some(id) {
                            clients.driver = None;
                        }
                    }
                    Command::Frame { id, text } => {
                        let msg = match decode_client(&text) {
                            Ok(msg) => msg,
                            Err(err) => {
                                clients.send(id, &ServerMessage::error(err.code, err.message));
                                continue;
                            }
                        };
                        if clients.driver != Some(id) {
                            clients.send(id, &ServerMessage::error(ErrorCode::NotDriver, "observers cannot send input"));
                            continue;
                        }
                        last_input = Some(Instant::now());
                        let restarts = matches!(msg, crate::protocol::ClientMessage::Reset | crate::protocol::ClientMessage::ModeSet { .. });
                        if let Err(err) = session.apply(msg) {
                            clients.send(id, &ServerMessage::error(ErrorCode::BadPayload, err.to_string()));
                        }
                        if restarts {
                            backlog = 0.0;
                            force_snapshot = true;
                            scenario_tx.send_replace(Arc::new(session.scenario().clone()));
                        }
                    }
                }
            }
            _ = ticker.tick() => {
                let now = Instant::now();
                let elapsed = now.duration_since(last_wake).as_secs_f64();
                last_wake = now;
                let active = last_input.is_some_and(|t| now.duration_since(t) <= config.input_timeout);
                if !active && last_input.is_some() {
                    session.hold_zero();
                }
                let dt = session.scenario().dt;
                if active && !session.is_finished() {
                    backlog += elapsed * config.speed;
                    if backlog > config.max_backlog {
                        tracing::warn!("simulation fell behind by {backlog:.3} s; dropping backlog");
                        backlog = 0.0;
                    }
                    while backlog >= dt && session.step() {
                        backlog -= dt;
                    }
                } else {
                    backlog = 0.0;
                }
                if now >= next_snapshot {
                    next_snapshot = now + snapshot_period;
                    let key = (session.run_index(), session.engine().tick(), session.is_finished(), active);
                    if force_snapshot || sent != Some(key) {
                        let snap = session.snapshot(!active);
                        let _ = snapshots.send(encode_server(&ServerMessage::Snapshot(snap)).into());
                        sent = Some(key);
                        force_snapshot = false;
                    }
                }
            }
        }
    }
    session.finish()
}
