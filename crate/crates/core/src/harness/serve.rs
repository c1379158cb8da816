//! WebSocket service that runs the controller live for a browser client.
//!
//! Clients send `gaze`, `emg_intent`, `cycle` and `release` messages; every
//! tick the server broadcasts the controller state to all connections.

use std::collections::VecDeque;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, watch};

use super::{derive_seed, synth_model, HarnessError, RunConfig};
use crate::classify::{Backend, GesturePipeline};
use crate::controller::{ControlEnv, ControlEvent, Controller, ControllerState};
use crate::grasp::GraspLibrary;
use crate::scene::{FixationDetector, FixationParams, FixationUpdate, ObjectId, Scene};
use crate::signal::{
    design_filter_chain, synth_emg, EmgFrame, EmgWindow, FilterChain, GestureLabel, WindowConfig, FRAME_PERIOD_US,
    MIN_DURATION_MS, SAMPLE_RATE_HZ,
};

/// Simulated time advanced per tick.
pub const SIM_TICK_MS: u64 = 50;
const TAG_SERVE: u64 = 5;

/// Messages accepted from clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    /// Gaze position in image pixels.
    Gaze {
        x: f64,
        y: f64,
    },
    /// Intended gesture by code.
    EmgIntent {
        gesture: u8,
    },
    Cycle,
    Release,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    pub id: u32,
    pub label: String,
    pub score: f64,
}

/// Broadcast once per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    pub t_ms: f64,
    pub controller: ControllerState,
    pub fixated: Option<ObjectId>,
    pub candidates: Vec<CandidateView>,
    pub highlighted: Option<usize>,
    pub setpoints: [f64; 6],
    pub rejected: u64,
    pub latency_us: f64,
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    /// Wall-clock period between ticks.
    pub tick_period: Duration,
    pub backend: Backend,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            tick_period: Duration::from_millis(SIM_TICK_MS),
            backend: Backend::Dense,
        }
    }
}

/// What the live loop runs on.
#[derive(Debug, Clone)]
pub struct ServeContext {
    pub cfg: RunConfig,
    pub scene: Scene,
    pub library: GraspLibrary,
    /// `None` decodes intents directly with confidence 1.
    pub pipeline: Option<Arc<GesturePipeline>>,
}

#[derive(Clone)]
struct AppState {
    inputs: mpsc::Sender<ClientMessage>,
    states: broadcast::Sender<String>,
    hello: Arc<String>,
    shutdown: watch::Receiver<bool>,
    width: u32,
    height: u32,
}

struct EmgSource {
    pipeline: Arc<GesturePipeline>,
    backend: Backend,
    cfg: RunConfig,
    chain: FilterChain,
    buffer: VecDeque<EmgFrame>,
    chunk: u64,
}

impl EmgSource {
    /// Synthesizes one tick of EMG for `intent` and classifies the latest window.
    fn decide(&mut self, intent: GestureLabel, t_us: i64) -> Result<ControlEvent, HarnessError> {
        let per_tick = (SIM_TICK_MS as i64 * 1000 / FRAME_PERIOD_US) as usize;
        let model =
            synth_model(&self.cfg, self.cfg.noise_sigma).with_seed(derive_seed(self.cfg.seed, TAG_SERVE, self.chunk));
        self.chunk += 1;
        let raw = synth_emg(&model, intent, MIN_DURATION_MS.max(SIM_TICK_MS))?;
        let len = WindowConfig::default().length;
        for (k, mut f) in raw.into_iter().take(per_tick).enumerate() {
            f.timestamp_us = t_us + k as i64 * FRAME_PERIOD_US;
            self.chain.process_frame(&mut f.channels);
            self.buffer.push_back(f);
            if self.buffer.len() > len {
                self.buffer.pop_front();
            }
        }
        if self.buffer.len() < len {
            return Ok(ControlEvent::EmgDecision { label: GestureLabel::Rest, confidence: 0.0 });
        }
        let window = EmgWindow::from_frames(self.buffer.make_contiguous());
        let c = self.pipeline.classify_window(&window, self.backend)?;
        Ok(ControlEvent::EmgDecision { label: c.label, confidence: c.confidence.clamp(0.0, 1.0) })
    }
}

/// The single owner of controller state.
struct Session {
    scene: Scene,
    controller: Controller,
    detector: FixationDetector,
    gaze_px: Option<(f64, f64)>,
    intent: GestureLabel,
    emg: Option<EmgSource>,
    t_us: i64,
    seq: u64,
}

impl Session {
    fn new(ctx: &ServeContext, backend: Backend) -> Result<Self, HarnessError> {
        let env = ControlEnv::new(ctx.library.clone(), ctx.scene.objects.clone(), ctx.cfg.controller);
        let emg = match &ctx.pipeline {
            Some(p) => Some(EmgSource {
                pipeline: p.clone(),
                backend,
                cfg: ctx.cfg.clone(),
                chain: design_filter_chain(SAMPLE_RATE_HZ)?,
                buffer: VecDeque::new(),
                chunk: 0,
            }),
            None => None,
        };
        Ok(Self {
            scene: ctx.scene.clone(),
            controller: Controller::new(env),
            detector: FixationDetector::new(FixationParams::default(), ctx.scene.objects.clone()),
            gaze_px: None,
            intent: GestureLabel::Rest,
            emg,
            t_us: 0,
            seq: 0,
        })
    }

    fn input(&mut self, msg: ClientMessage) {
        match msg {
            ClientMessage::Gaze { x, y } => self.gaze_px = Some((x, y)),
            ClientMessage::EmgIntent { gesture } => {
                self.intent = GestureLabel::from_code(gesture).expect("checked on receipt");
            }
            ClientMessage::Cycle => {
                self.controller.handle(&ControlEvent::CycleGesture);
            }
            ClientMessage::Release => {
                self.controller.handle(&ControlEvent::Release);
                self.intent = GestureLabel::Rest;
            }
        }
    }

    fn tick(&mut self) -> Result<StateMessage, HarnessError> {
        let started = Instant::now();
        let start_us = self.t_us;
        let frames = SIM_TICK_MS as i64 * 1000 / FRAME_PERIOD_US;
        if let Some((u, v)) = self.gaze_px {
            for k in 1..=frames {
                let sample = self.scene.gaze_at_pixel(start_us + k * FRAME_PERIOD_US, u, v);
                for update in self.detector.push(sample)? {
                    let event = match update {
                        FixationUpdate::Onset { object_id, .. } => ControlEvent::Fixation { object_id },
                        FixationUpdate::Closed(_) => ControlEvent::FixationLost,
                    };
                    self.controller.handle(&event);
                }
            }
        }
        let decision = match self.emg.as_mut() {
            Some(src) => src.decide(self.intent, start_us)?,
            None => ControlEvent::EmgDecision { label: self.intent, confidence: 1.0 },
        };
        self.controller.handle(&decision);
        self.controller.handle(&ControlEvent::Tick { dt_ms: SIM_TICK_MS as f64 });
        self.t_us += frames * FRAME_PERIOD_US;
        self.seq += 1;
        Ok(self.snapshot(started.elapsed().as_secs_f64() * 1e6))
    }

    fn snapshot(&self, latency_us: f64) -> StateMessage {
        let state = &self.controller.state;
        let lib = &self.controller.env.library;
        let candidates = state
            .candidates()
            .map(|c| {
                c.entries
                    .iter()
                    .map(|e| CandidateView {
                        id: e.pattern_id,
                        label: lib.pattern(e.pattern_id).map_or_else(String::new, |p| p.label.clone()),
                        score: e.score,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let highlighted = match state {
            ControllerState::Armed { highlighted, .. } | ControllerState::Confirming { highlighted, .. } => {
                Some(*highlighted)
            }
            _ => None,
        };
        StateMessage {
            kind: "state".into(),
            seq: self.seq,
            t_ms: self.controller.t_ms,
            controller: state.clone(),
            fixated: self.detector.current().flatten(),
            candidates,
            highlighted,
            setpoints: self.controller.setpoints,
            rejected: self.controller.rejected,
            latency_us,
        }
    }
}

/// A bound, not yet running server.
pub struct Server {
    listener: TcpListener,
    ctx: ServeContext,
    opts: ServeOptions,
}

impl Server {
    pub async fn bind(ctx: ServeContext, opts: ServeOptions) -> Result<Self, HarnessError> {
        let listener = TcpListener::bind(opts.addr).await.map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => HarnessError::PortInUse(opts.addr.port()),
            _ => HarnessError::Io(e),
        })?;
        Ok(Self { listener, ctx, opts })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, HarnessError> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves until `shutdown` resolves, then closes every connection.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), HarnessError> {
        let mut session = Session::new(&self.ctx, self.opts.backend)?;
        let (input_tx, mut input_rx) = mpsc::channel::<ClientMessage>(256);
        let (state_tx, _) = broadcast::channel::<String>(64);
        let (stop_tx, stop_rx) = watch::channel(false);
        let hello = json!({
            "type": "scene",
            "scene": self.ctx.scene,
            "tick_ms": SIM_TICK_MS,
            "decoder": if self.ctx.pipeline.is_some() { "model" } else { "oracle" },
        });

        let ticker_states = state_tx.clone();
        let period = self.opts.tick_period;
        let mut ticker_stop = stop_rx.clone();
        let ticker = tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tokio::select! {
                    _ = ticker_stop.changed() => break,
                    Some(msg) = input_rx.recv() => session.input(msg),
                    _ = interval.tick() => match session.tick() {
                        Ok(state) => {
                            let text = serde_json::to_string(&state).expect("state serializes");
                            let _ = ticker_states.send(text);
                        }
                        Err(e) => log::error!("tick failed: {e}"),
                    },
                }
            }
        });

        let app_state = AppState {
            inputs: input_tx,
            states: state_tx,
            hello: Arc::new(hello.to_string()),
            shutdown: stop_rx,
            width: self.ctx.scene.camera.width,
            height: self.ctx.scene.camera.height,
        };
        let app = Router::new().route("/ws", get(ws_handler)).with_state(app_state);
        log::info!("listening on ws://{}/ws", self.listener.local_addr()?);
        let served = axum::serve(self.listener, app)
            .with_graceful_shutdown(async move {
                shutdown.await;
                let _ = stop_tx.send(true);
            })
            .await;
        ticker.abort();
        served?;
        Ok(())
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state))
}

fn parse_client(text: &str, width: u32, height: u32) -> Result<ClientMessage, String> {
    let msg: ClientMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
    match msg {
        ClientMessage::Gaze { x, y } if !(x.is_finite() && y.is_finite()) => Err("gaze must be finite".into()),
        ClientMessage::Gaze { x, y } if x < 0.0 || y < 0.0 || x > width as f64 || y > height as f64 => {
            Err(format!("gaze ({x}, {y}) outside the {width}x{height} image"))
        }
        ClientMessage::EmgIntent { gesture } if GestureLabel::from_code(gesture).is_none() => {
            Err(format!("unknown gesture code {gesture}"))
        }
        m => Ok(m),
    }
}

fn error_message(detail: &str) -> String {
    json!({"type": "error", "code": "bad_message", "detail": detail}).to_string()
}

async fn connection(socket: WebSocket, state: AppState) {
    let (mut sink, mut stream) = socket.split();
    let mut states = state.states.subscribe();
    let mut stop = state.shutdown.clone();
    if sink.send(Message::Text(state.hello.as_str().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            _ = stop.changed() => break,
            broadcast = states.recv() => match broadcast {
                Ok(text) => {
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::warn!("client lagged {n} states"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => match parse_client(text.as_str(), state.width, state.height) {
                    Ok(msg) => {
                        if state.inputs.send(msg).await.is_err() {
                            break;
                        }
                    }
                    Err(detail) => {
                        if sink.send(Message::Text(error_message(&detail).into())).await.is_err() {
                            break;
                        }
                    }
                },
                Some(Ok(Message::Binary(_))) => {
                    if sink.send(Message::Text(error_message("binary frames are not accepted").into())).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    let _ = sink.send(Message::Close(None)).await;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::default_scene;

    fn ctx() -> ServeContext {
        ServeContext {
            cfg: RunConfig::default(),
            scene: default_scene(),
            library: GraspLibrary::default_library(),
            pipeline: None,
        }
    }

    #[test]
    fn client_messages_parse() {
        assert_eq!(
            parse_client(r#"{"type":"gaze","x":10,"y":20}"#, 640, 480),
            Ok(ClientMessage::Gaze { x: 10.0, y: 20.0 })
        );
        assert_eq!(parse_client(r#"{"type":"cycle"}"#, 640, 480), Ok(ClientMessage::Cycle));
        assert!(parse_client(r#"{"type":"emg_intent","gesture":6}"#, 640, 480).is_err());
        assert!(parse_client(r#"{"type":"gaze","x":700,"y":20}"#, 640, 480).is_err());
        assert!(parse_client(r#"{"type":"gaze","x":1,"y":2,"z":3}"#, 640, 480).is_err());
        assert!(parse_client("not json", 640, 480).is_err());
    }

    #[test]
    fn session_arms_on_fixated_object() {
        let c = ctx();
        let mut s = Session::new(&c, Backend::Dense).unwrap();
        let (u, v) = c.scene.camera.project(c.scene.object(1).unwrap().aabb.center()).unwrap();
        s.input(ClientMessage::Gaze { x: u, y: v });
        let mut last = None;
        for _ in 0..8 {
            last = Some(s.tick().unwrap());
        }
        let last = last.unwrap();
        assert_eq!(last.fixated, Some(1));
        assert!(matches!(last.controller, ControllerState::Armed { object_id: 1, .. }));
        assert_eq!(last.candidates.len(), 3);
        assert_eq!(last.seq, 8);
        assert_eq!(last.t_ms, 400.0);
    }

    #[test]
    fn session_executes_intent_then_releases() {
        let c = ctx();
        let mut s = Session::new(&c, Backend::Dense).unwrap();
        let (u, v) = c.scene.camera.project(c.scene.object(1).unwrap().aabb.center()).unwrap();
        s.input(ClientMessage::Gaze { x: u, y: v });
        for _ in 0..8 {
            s.tick().unwrap();
        }
        s.input(ClientMessage::EmgIntent { gesture: GestureLabel::CylindricalGrip.code() });
        for _ in 0..30 {
            s.tick().unwrap();
        }
        assert!(matches!(s.controller.state, ControllerState::Holding { .. }));
        assert!(s.controller.setpoints.iter().any(|x| *x > 0.0));
        s.input(ClientMessage::Release);
        assert_eq!(s.controller.setpoints, [0.0; 6]);
    }
}
