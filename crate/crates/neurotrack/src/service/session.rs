//! One session: an actor thread owning the engine, driven by requests.

use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot};

use neurotrack_core::apps::{snake_closed_loop_step, PaintSession, SnakeConfig, SnakeState};
use neurotrack_core::io::{encode_models, ModelMetadata};
use neurotrack_core::layout::{hit_test, TargetSpec};
use neurotrack_core::task::{
    interactive_noise_key, records_to_jsonl, Decoder, Engine, JitterReport, LoopState, Models, StepOutput,
    TrialRecord,
};
use neurotrack_core::Vec2;

use super::protocol::{xy, ClientCommand, ClientMessage, Phase, ServerMessage, SessionSnapshot, TrialEventKind};
use super::ApiError;
use crate::runner::{run_batch, subject_metrics, to_json_text, BatchTask, SubjectMetrics, TaskOutput, TrainingSummary};

/// Most frame messages per second of wall time.
pub const MAX_FRAME_RATE: f64 = 30.0;

pub type Reply<T> = oneshot::Sender<Result<T, ApiError>>;

pub enum Request {
    Train(Reply<TrainingSummary>),
    StartTask(TaskRequest, Reply<TaskReply>),
    Export(ExportKind, Reply<Export>),
    Client(ClientMessage),
    Shutdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Fixed,
    Random,
    Jitter,
    Tracking,
    Painting,
    Snake,
    Idle,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRequest {
    pub task: TaskName,
    #[serde(default)]
    pub snake: Option<SnakeConfig>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskReply {
    pub task: TaskName,
    pub phase: Phase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<SubjectMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter: Option<JitterReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportKind {
    Trials,
    Metrics,
    Jitter,
    Models,
    ModelMetadata,
    VelocityWeight,
    Bank,
    Painting,
    Snake,
}

pub struct Export {
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Export {
    fn json<T: Serialize>(value: &T) -> Self {
        Self {
            content_type: "application/json",
            body: to_json_text(value).into_bytes(),
        }
    }
}

/// Step clock of the interactive phases.
#[derive(Debug, Clone, Copy)]
pub struct Timing {
    pub step_interval: Duration,
    pub stale_after: Duration,
}

struct Tracking {
    state: LoopState,
    target: Option<TargetSpec>,
    target_step: u64,
    hit: bool,
}

pub struct Actor {
    id: String,
    engine: Engine,
    decoder: Option<Decoder>,
    models: Option<Models>,
    summary: Option<TrainingSummary>,
    records: Vec<TrialRecord>,
    metrics: Vec<SubjectMetrics>,
    jitter: Option<JitterReport>,
    phase: Phase,
    timing: Timing,
    next_tick: Option<Instant>,
    step: u64,
    gaze: Option<(Vec2, Instant)>,
    tracking: Tracking,
    painting: Option<PaintSession>,
    snake: Option<(SnakeConfig, SnakeState)>,
    brush_down: bool,
    last_error: Option<String>,
    snapshot: Arc<Mutex<SessionSnapshot>>,
    events: broadcast::Sender<String>,
}

impl Actor {
    pub fn new(
        id: String,
        engine: Engine,
        timing: Timing,
        snapshot: Arc<Mutex<SessionSnapshot>>,
        events: broadcast::Sender<String>,
    ) -> Self {
        let tracking = Tracking {
            state: LoopState::new(Vec2::ZERO, &engine.config),
            target: None,
            target_step: 0,
            hit: false,
        };
        let actor = Self {
            id,
            engine,
            decoder: None,
            models: None,
            summary: None,
            records: Vec::new(),
            metrics: Vec::new(),
            jitter: None,
            phase: Phase::Idle,
            timing,
            next_tick: None,
            step: 0,
            gaze: None,
            tracking,
            painting: None,
            snake: None,
            brush_down: false,
            last_error: None,
            snapshot,
            events,
        };
        actor.publish_snapshot();
        actor
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let cursor = match self.phase {
            Phase::Painting => self.painting.as_ref().map(|p| p.loop_state.position()),
            _ => None,
        }
        .unwrap_or(self.tracking.state.position());
        SessionSnapshot {
            session_id: self.id.clone(),
            phase: self.phase,
            trained: self.decoder.is_some(),
            training: self.summary.clone(),
            subject_index: self.engine.subject_index,
            subject: self.engine.subject.params.clone(),
            config: self.engine.config.clone(),
            n_trials: self.records.len(),
            step_index: self.step,
            cursor: xy(cursor),
            target: self.tracking.target,
            gaze: self.gaze.map(|(g, _)| xy(g)),
            step_interval_ms: self.timing.step_interval.as_millis() as u64,
            stale_gaze_ms: self.timing.stale_after.as_millis() as u64,
            snake: self.snake.as_ref().map(|(_, s)| s.clone()),
            last_error: self.last_error.clone(),
        }
    }

    fn publish_snapshot(&self) {
        let snap = self.snapshot();
        *self.snapshot.lock().expect("snapshot lock") = snap;
    }

    fn emit(&self, msg: ServerMessage) {
        // no subscribers is fine
        let _ = self.events.send(msg.to_text());
    }

    pub fn run(mut self, rx: Receiver<Request>) {
        loop {
            let wait = self
                .next_tick
                .map_or(Duration::from_secs(3600), |t| t.saturating_duration_since(Instant::now()));
            match rx.recv_timeout(wait) {
                Ok(Request::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
                Ok(req) => self.handle(req),
                Err(RecvTimeoutError::Timeout) => {}
            }
            if let Some(t) = self.next_tick {
                let now = Instant::now();
                if now >= t {
                    self.tick();
                    if self.next_tick.is_some() {
                        self.next_tick = Some((t + self.timing.step_interval).max(now));
                    }
                }
            }
            self.publish_snapshot();
        }
        log::debug!("session {} stopped", self.id);
    }

    fn handle(&mut self, req: Request) {
        match req {
            Request::Train(reply) => {
                let _ = reply.send(self.train());
            }
            Request::StartTask(task, reply) => {
                let _ = reply.send(self.start_task(task));
            }
            Request::Export(kind, reply) => {
                let _ = reply.send(self.export(kind));
            }
            Request::Client(msg) => self.client(msg),
            Request::Shutdown => {}
        }
    }

    fn train(&mut self) -> Result<TrainingSummary, ApiError> {
        if self.phase != Phase::Idle {
            return Err(ApiError::Conflict(format!("session is in phase {:?}", self.phase)));
        }
        self.phase = Phase::Training;
        self.publish_snapshot();
        let result = self.engine.run_training().and_then(|t| {
            let decoder = Decoder::new(&t.models, &self.engine.config)?;
            Ok((t, decoder))
        });
        self.phase = Phase::Idle;
        let (training, decoder) = result.map_err(ApiError::from)?;
        let summary = TrainingSummary::of(&training);
        self.decoder = Some(decoder);
        self.models = Some(training.models);
        self.summary = Some(summary.clone());
        Ok(summary)
    }

    fn start_task(&mut self, req: TaskRequest) -> Result<TaskReply, ApiError> {
        if req.task == TaskName::Idle {
            self.stop();
            return Ok(self.reply(req.task));
        }
        if self.phase != Phase::Idle {
            return Err(ApiError::Conflict(format!("session is in phase {:?}", self.phase)));
        }
        let Some(decoder) = self.decoder.as_ref() else {
            return Err(ApiError::Conflict("session is not trained".into()));
        };
        let batch = match req.task {
            TaskName::Fixed => Some((BatchTask::Fixed, Phase::Fixed)),
            TaskName::Random => Some((BatchTask::Random, Phase::Random)),
            TaskName::Jitter => Some((BatchTask::Jitter, Phase::Jitter)),
            _ => None,
        };
        if let Some((task, phase)) = batch {
            self.phase = phase;
            self.publish_snapshot();
            let out = run_batch(&self.engine, decoder, task);
            self.phase = Phase::Idle;
            let mut reply = self.reply(req.task);
            match out? {
                TaskOutput::Trials { records } => {
                    let m = subject_metrics(self.engine.subject_index, task, &records, &self.engine.config)?;
                    reply.n_trials = Some(records.len());
                    reply.metrics = Some(m.clone());
                    self.metrics.push(m);
                    self.records.extend(records);
                }
                TaskOutput::Jitter { report } => {
                    reply.jitter = Some(report.clone());
                    self.jitter = Some(report);
                }
            }
            return Ok(reply);
        }
        match req.task {
            TaskName::Tracking => {
                self.tracking.state = LoopState::new(Vec2::ZERO, &self.engine.config);
                self.phase = Phase::Tracking;
            }
            TaskName::Painting => {
                let mut p = PaintSession::new(&self.engine);
                p.painting.set_brush(self.brush_down);
                self.painting = Some(p);
                self.phase = Phase::Painting;
            }
            TaskName::Snake => {
                let config = req.snake.unwrap_or_default();
                let state = SnakeState::new(&config)?;
                self.emit(ServerMessage::SnakeState {
                    step_index: self.step,
                    state: state.clone(),
                    rho: None,
                });
                self.snake = Some((config, state));
                self.phase = Phase::Snake;
            }
            _ => unreachable!("batch tasks handled above"),
        }
        self.next_tick = Some(Instant::now() + self.timing.step_interval);
        Ok(self.reply(req.task))
    }

    fn reply(&self, task: TaskName) -> TaskReply {
        TaskReply {
            task,
            phase: self.phase,
            n_trials: None,
            metrics: None,
            jitter: None,
        }
    }

    fn stop(&mut self) {
        if self.phase.is_interactive() {
            self.phase = Phase::Idle;
        }
        self.next_tick = None;
    }

    fn export(&self, kind: ExportKind) -> Result<Export, ApiError> {
        let missing = |what: &str| ApiError::Conflict(format!("no {what} yet"));
        let models = || self.models.as_ref().ok_or_else(|| missing("trained models"));
        Ok(match kind {
            ExportKind::Trials => Export {
                content_type: "application/x-ndjson",
                body: records_to_jsonl(&self.records).into_bytes(),
            },
            ExportKind::Metrics => Export::json(&self.metrics),
            ExportKind::Jitter => Export::json(self.jitter.as_ref().ok_or_else(|| missing("jitter report"))?),
            ExportKind::Models => Export {
                content_type: "application/octet-stream",
                body: encode_models(models()?)?,
            },
            ExportKind::ModelMetadata => Export::json(&ModelMetadata::describe(
                models()?,
                &self.engine.config.filter_bank,
            )),
            ExportKind::VelocityWeight => Export::json(&models()?.velocity),
            ExportKind::Bank => Export::json(&self.engine.bank),
            ExportKind::Painting => Export {
                content_type: "image/svg+xml",
                body: self
                    .painting
                    .as_ref()
                    .ok_or_else(|| missing("painting"))?
                    .painting
                    .to_svg()
                    .into_bytes(),
            },
            ExportKind::Snake => Export::json(&self.snake.as_ref().ok_or_else(|| missing("snake game"))?.1),
        })
    }

    fn client(&mut self, msg: ClientMessage) {
        match msg {
            ClientMessage::Gaze { x, y, .. } => {
                if x.is_finite() && y.is_finite() {
                    self.gaze = Some((Vec2::new(x, y), Instant::now()));
                } else {
                    self.emit(ServerMessage::Error {
                        message: "gaze coordinates must be finite".into(),
                    });
                }
            }
            ClientMessage::Brush { down } => {
                self.brush_down = down;
                if let Some(p) = self.painting.as_mut() {
                    p.painting.set_brush(down);
                }
            }
            ClientMessage::Command { command } => self.command(command),
        }
    }

    fn command(&mut self, command: ClientCommand) {
        match command {
            ClientCommand::SetTarget { x, y, radius } => {
                let r = radius.unwrap_or(self.engine.config.target_radius_px);
                let target = TargetSpec::free(Vec2::new(x, y), r);
                self.tracking.target = Some(target);
                self.tracking.target_step = self.step;
                self.tracking.hit = false;
                self.emit(ServerMessage::TrialEvent {
                    step_index: self.step,
                    event: TrialEventKind::Start,
                    target: Some(target),
                    time_s: None,
                });
            }
            ClientCommand::ClearTarget => {
                self.tracking.target = None;
                self.emit(ServerMessage::TrialEvent {
                    step_index: self.step,
                    event: TrialEventKind::Cleared,
                    target: None,
                    time_s: None,
                });
            }
            ClientCommand::ClearPainting => {
                if let Some(p) = self.painting.as_mut() {
                    p.painting.strokes.clear();
                    p.painting.brush_down = false;
                    p.painting.set_brush(self.brush_down);
                }
            }
            ClientCommand::ResetSnake => {
                if let Some((config, state)) = self.snake.as_mut() {
                    match SnakeState::new(config) {
                        Ok(s) => *state = s,
                        Err(e) => self.last_error = Some(e.to_string()),
                    }
                }
            }
            ClientCommand::Stop => self.stop(),
        }
    }

    /// Latest gaze, unless it is older than the stale limit.
    fn fresh_gaze(&self) -> Option<Vec2> {
        self.gaze
            .filter(|(_, at)| at.elapsed() <= self.timing.stale_after)
            .map(|(g, _)| g)
    }

    fn tick(&mut self) {
        if let Err(e) = self.try_tick() {
            log::warn!("session {}: {e}", self.id);
            self.last_error = Some(e.to_string());
            self.emit(ServerMessage::Error { message: e.to_string() });
            self.stop();
        }
        self.step += 1;
    }

    fn try_tick(&mut self) -> Result<(), ApiError> {
        let Some(decoder) = self.decoder.as_ref() else {
            return Err(ApiError::Conflict("session is not trained".into()));
        };
        let gaze = self.fresh_gaze();
        let key = interactive_noise_key(self.step);
        match self.phase {
            Phase::Tracking => {
                let out = self
                    .engine
                    .closed_loop_step(decoder, &mut self.tracking.state, gaze, key)?;
                self.emit_frames(&out);
                self.check_hit(&out.frames);
            }
            Phase::Painting => {
                let paint = self.painting.as_mut().expect("painting phase has a session");
                let out = paint.step(&self.engine, decoder, gaze, key)?;
                let painting = paint.painting.clone();
                self.emit_frames(&out);
                self.emit(ServerMessage::PaintState {
                    step_index: self.step,
                    painting,
                });
            }
            Phase::Snake => {
                let (_, state) = self.snake.as_mut().expect("snake phase has a game");
                let rho = match gaze {
                    Some(g) => {
                        let (rho, next) = snake_closed_loop_step(&self.engine, decoder, state, g, key)?;
                        *state = next;
                        Some(rho.rho)
                    }
                    None => None,
                };
                let state = state.clone();
                self.emit(ServerMessage::SnakeState {
                    step_index: self.step,
                    state,
                    rho,
                });
            }
            _ => {}
        }
        Ok(())
    }

    /// Coalesce the step's frames to the client frame-rate limit; the last
    /// frame of the step is always sent.
    fn emit_frames(&self, out: &StepOutput) {
        let n = out.frames.len();
        let allowed = (MAX_FRAME_RATE * self.timing.step_interval.as_secs_f64()).floor() as usize;
        let sent = allowed.clamp(1, n.max(1));
        for j in 1..=sent {
            let f = j * n / sent - 1;
            self.emit(ServerMessage::Frame {
                step_index: self.step,
                frame_index: f,
                cursor: xy(out.frames[f]),
                rho: out.rho.rho.clone(),
                velocity: xy(out.velocity),
            });
        }
    }

    fn check_hit(&mut self, frames: &[Vec2]) {
        let Some(target) = self.tracking.target else {
            return;
        };
        if self.tracking.hit {
            return;
        }
        let config = &self.engine.config;
        let dt = config.step_seconds / frames.len() as f64;
        if let Some(f) = frames.iter().position(|p| hit_test(*p, &target)) {
            self.tracking.hit = true;
            let steps = (self.step - self.tracking.target_step) as f64;
            self.emit(ServerMessage::TrialEvent {
                step_index: self.step,
                event: TrialEventKind::Hit,
                target: Some(target),
                time_s: Some(steps * config.step_seconds + (f + 1) as f64 * dt),
            });
        }
    }
}
