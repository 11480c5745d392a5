//! HTTP debug API.
//!
//! One engine thread owns the [`World`] and executes control commands from
//! a queue, one at a time. After every tick it publishes an immutable
//! tick-boundary view; GET handlers read only that view, so inspection
//! never mutates or blocks the engine.

use super::{Breakpoint, BreakpointError, CheckpointError, CheckpointMeta};
use crate::analyze::{derive_schema, Program};
use crate::runtime::{EngineError, World};
use crate::store::Snapshot;
use crate::trace::{effects_of, status, TraceKind, TraceRecord};
use crate::value::ObjId;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};
use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use tokio::sync::{mpsc, oneshot};

/// Tick-boundary snapshots kept for `?tick=` queries.
const HISTORY: usize = 256;

/// Inspector page served at `/`.
pub const INDEX_HTML: &str = include_str!("inspector.html");

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Halt {
    pub breakpoint: u64,
    pub class: String,
    pub tick: u64,
    pub objects: Vec<ObjId>,
}

/// Result of a /step or /run command.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Advance {
    pub tick: u64,
    pub ticks_run: u64,
    pub halted: Option<Halt>,
    pub paused: bool,
}

struct View {
    tick: u64,
    snaps: BTreeMap<u64, Arc<Snapshot>>,
    trace: VecDeque<TraceRecord>,
    plans: BTreeMap<String, JsonValue>,
    stats: JsonValue,
    breakpoints: Vec<Breakpoint>,
    halted: Option<Halt>,
    logging: Vec<String>,
}

enum Cmd {
    Advance {
        limit: u64,
        reply: oneshot::Sender<Result<Advance, EngineError>>,
    },
    AddBreakpoint {
        class: String,
        cond: String,
        reply: oneshot::Sender<Result<Breakpoint, BreakpointError>>,
    },
    DeleteBreakpoint {
        id: u64,
        reply: oneshot::Sender<bool>,
    },
    Checkpoint {
        path: Option<PathBuf>,
        reply: oneshot::Sender<Result<(CheckpointMeta, JsonValue), CheckpointError>>,
    },
    Restore {
        source: RestoreSource,
        reply: oneshot::Sender<Result<u64, CheckpointError>>,
    },
    Shutdown {
        reply: oneshot::Sender<World>,
    },
}

enum RestoreSource {
    Path(PathBuf),
    Doc(JsonValue),
}

/// Engine-side state of a debug session.
pub struct Session {
    world: World,
    breakpoints: Vec<Breakpoint>,
    next_breakpoint: u64,
    view: Arc<RwLock<View>>,
    pause: Arc<AtomicBool>,
}

/// Client-side handle: queues commands and reads the published view.
#[derive(Clone)]
pub struct SessionHandle {
    tx: mpsc::Sender<Cmd>,
    view: Arc<RwLock<View>>,
    program: Arc<Program>,
    pause: Arc<AtomicBool>,
}

impl Session {
    /// Starts the engine thread for a world paused at its current tick.
    pub fn spawn(world: World) -> SessionHandle {
        let view = Arc::new(RwLock::new(View {
            tick: world.tick(),
            snaps: BTreeMap::new(),
            trace: VecDeque::new(),
            plans: BTreeMap::new(),
            stats: JsonValue::Null,
            breakpoints: Vec::new(),
            halted: None,
            logging: world.config.trace.effects.clone(),
        }));
        let pause = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel(64);
        let program = world.program.clone();
        let mut session = Session {
            world,
            breakpoints: Vec::new(),
            next_breakpoint: 1,
            view: view.clone(),
            pause: pause.clone(),
        };
        session.reset_view();
        std::thread::Builder::new()
            .name("sgl-engine".into())
            .spawn(move || session.serve(rx))
            .expect("spawn engine thread");
        SessionHandle {
            tx,
            view,
            program,
            pause,
        }
    }

    fn serve(mut self, mut rx: mpsc::Receiver<Cmd>) {
        while let Some(cmd) = rx.blocking_recv() {
            match cmd {
                Cmd::Advance { limit, reply } => {
                    let _ = reply.send(self.advance(limit));
                }
                Cmd::AddBreakpoint { class, cond, reply } => {
                    let r = Breakpoint::compile(&self.world.program, self.next_breakpoint, &class, &cond);
                    if let Ok(b) = &r {
                        self.next_breakpoint += 1;
                        self.breakpoints.push(b.clone());
                        self.view.write().unwrap().breakpoints = self.breakpoints.clone();
                    }
                    let _ = reply.send(r);
                }
                Cmd::DeleteBreakpoint { id, reply } => {
                    let before = self.breakpoints.len();
                    self.breakpoints.retain(|b| b.id != id);
                    self.view.write().unwrap().breakpoints = self.breakpoints.clone();
                    let _ = reply.send(self.breakpoints.len() != before);
                }
                Cmd::Checkpoint { path, reply } => {
                    let doc = super::checkpoint_json(&self.world);
                    let text = serde_json::to_vec(&doc).expect("json document");
                    let meta = CheckpointMeta {
                        tick: self.world.tick(),
                        hash: doc["checksum"].as_str().unwrap_or_default().to_string(),
                        bytes: text.len(),
                    };
                    let r = match path {
                        Some(p) => std::fs::write(&p, &text).map(|_| (meta, JsonValue::Null)).map_err(CheckpointError::from),
                        None => Ok((meta, doc)),
                    };
                    let _ = reply.send(r);
                }
                Cmd::Restore { source, reply } => {
                    let program = self.world.program.clone();
                    let r = match source {
                        RestoreSource::Path(p) => std::fs::File::open(p)
                            .map_err(CheckpointError::from)
                            .and_then(|f| super::restore(std::io::BufReader::new(f), program)),
                        RestoreSource::Doc(d) => super::restore_json(&d, program),
                    };
                    let r = r.map(|w| {
                        self.world = w;
                        self.reset_view();
                        self.world.tick()
                    });
                    let _ = reply.send(r);
                }
                Cmd::Shutdown { reply } => {
                    let _ = reply.send(self.world);
                    return;
                }
            }
        }
    }

    /// Runs up to `limit` ticks, stopping early at a breakpoint hit or a
    /// pause request.
    fn advance(&mut self, limit: u64) -> Result<Advance, EngineError> {
        self.pause.store(false, Ordering::SeqCst);
        self.view.write().unwrap().halted = None;
        let mut run = 0;
        let mut halted = None;
        let mut paused = false;
        while run < limit {
            if self.pause.swap(false, Ordering::SeqCst) {
                paused = true;
                break;
            }
            let report = self.world.run_tick()?;
            run += 1;
            halted = self.check_breakpoints();
            self.publish(report.records, halted.clone());
            if halted.is_some() {
                break;
            }
        }
        Ok(Advance {
            tick: self.world.tick(),
            ticks_run: run,
            halted,
            paused,
        })
    }

    fn check_breakpoints(&self) -> Option<Halt> {
        let w = &self.world;
        self.breakpoints.iter().filter(|b| b.enabled).find_map(|b| {
            let objects = b.matches(&w.program, &w.snap, w.config.seed);
            (!objects.is_empty()).then(|| Halt {
                breakpoint: b.id,
                class: b.class.clone(),
                tick: w.tick(),
                objects,
            })
        })
    }

    fn reset_view(&mut self) {
        {
            let mut v = self.view.write().unwrap();
            v.snaps.clear();
            v.trace.clear();
            v.halted = None;
        }
        self.publish(Vec::new(), None);
    }

    fn publish(&self, records: Vec<TraceRecord>, halted: Option<Halt>) {
        let w = &self.world;
        let mut v = self.view.write().unwrap();
        v.tick = w.tick();
        v.snaps.insert(w.tick(), w.snap.clone());
        while v.snaps.len() > HISTORY {
            v.snaps.pop_first();
        }
        if let Some(s) = records.iter().rev().find(|r| r.kind == TraceKind::Stats) {
            v.stats = s.payload.clone();
        }
        v.trace.extend(records);
        // Effects of tick t lead to snapshot t + 1; keep those of retained
        // snapshots.
        let oldest = v.snaps.keys().next().copied().unwrap_or(0);
        while v.trace.front().is_some_and(|r| r.tick + 1 < oldest) {
            v.trace.pop_front();
        }
        v.plans = w
            .program
            .classes
            .iter()
            .filter_map(|c| Some((c.name.clone(), w.planner.plan_json(&w.program, c.id)?)))
            .collect();
        v.halted = halted;
        v.logging = w.config.trace.effects.clone();
    }
}

impl SessionHandle {
    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Cmd) -> Result<T, Response> {
        let (reply, rx) = oneshot::channel();
        let gone = || error(StatusCode::SERVICE_UNAVAILABLE, "E_SESSION_CLOSED", "the engine has stopped");
        self.tx.send(make(reply)).await.map_err(|_| gone())?;
        rx.await.map_err(|_| gone())
    }

    /// Current tick of the published view.
    pub fn tick(&self) -> u64 {
        self.view.read().unwrap().tick
    }

    /// Runs up to `ticks` ticks, as POST /step does.
    pub async fn step(&self, ticks: u64) -> Result<Advance, String> {
        match self.call(|reply| Cmd::Advance { limit: ticks, reply }).await {
            Ok(r) => r.map_err(|e| e.to_string()),
            Err(_) => Err("the engine has stopped".into()),
        }
    }

    /// Asks a running /run or /step to stop at the next tick boundary.
    pub fn pause(&self) {
        self.pause.store(true, Ordering::SeqCst);
    }

    /// Stops the engine thread and returns the world.
    pub async fn shutdown(self) -> Option<World> {
        let (reply, rx) = oneshot::channel();
        self.tx.send(Cmd::Shutdown { reply }).await.ok()?;
        rx.await.ok()
    }
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": {"code": code, "message": message.into()}}))).into_response()
}

fn not_found(message: impl Into<String>) -> Response {
    error(StatusCode::NOT_FOUND, "E_NOT_FOUND", message)
}

fn bad_request(message: impl Into<String>) -> Response {
    error(StatusCode::BAD_REQUEST, "E_BAD_REQUEST", message)
}

fn engine_error(e: EngineError) -> Response {
    error(StatusCode::INTERNAL_SERVER_ERROR, e.code().unwrap_or("E_ENGINE"), e.to_string())
}

fn checkpoint_error(e: CheckpointError) -> Response {
    let status = match e {
        CheckpointError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    };
    error(status, e.code(), e.to_string())
}

/// Parses a JSON body, answering 400 for any malformed input.
fn body<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, Response> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    serde_json::from_str(text).map_err(|e| bad_request(format!("malformed request body: {e}")))
}

/// The debug API routes plus the inspector page at `/`.
pub fn router(handle: SessionHandle) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route("/schema", get(schema))
        .route("/state/{class}", get(state))
        .route("/object/{id}", get(object))
        .route("/effects/{id}", get(effects))
        .route("/plan", get(plan))
        .route("/stats", get(stats))
        .route("/step", post(step))
        .route("/run", post(run))
        .route("/pause", post(pause))
        .route("/breakpoints", post(add_breakpoint))
        .route("/breakpoints/{id}", delete(delete_breakpoint))
        .route("/checkpoint", post(checkpoint))
        .route("/restore", post(restore))
        .with_state(handle)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TickQuery {
    tick: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassQuery {
    class: Option<String>,
}

type Reply = Result<Json<JsonValue>, Response>;

fn query<T: for<'de> Deserialize<'de>>(q: Result<Query<T>, axum::extract::rejection::QueryRejection>) -> Result<T, Response> {
    q.map(|Query(t)| t).map_err(|e| bad_request(e.body_text()))
}

fn snapshot_at(h: &SessionHandle, tick: Option<u64>) -> Result<(u64, Arc<Snapshot>), Response> {
    let v = h.view.read().unwrap();
    let t = tick.unwrap_or(v.tick);
    let snap = v.snaps.get(&t).cloned().ok_or_else(|| not_found(format!("tick {t} is not retained")))?;
    Ok((t, snap))
}

async fn schema(State(h): State<SessionHandle>) -> Json<JsonValue> {
    Json(json!(derive_schema(&h.program)))
}

async fn state(
    State(h): State<SessionHandle>,
    Path(class): Path<String>,
    q: Result<Query<TickQuery>, axum::extract::rejection::QueryRejection>,
) -> Reply {
    let q = query(q)?;
    let c = h.program.class_by_name(&class).ok_or_else(|| not_found(format!("unknown class `{class}`")))?;
    let (tick, snap) = snapshot_at(&h, q.tick)?;
    Ok(Json(json!({"class": class, "tick": tick, "rows": snap.rows_json(&h.program, c.id)})))
}

async fn object(
    State(h): State<SessionHandle>,
    Path(id): Path<String>,
    q: Result<Query<TickQuery>, axum::extract::rejection::QueryRejection>,
) -> Reply {
    let q = query(q)?;
    let id: ObjId = id.parse().map_err(|_| bad_request(format!("`{id}` is not an object id")))?;
    let (tick, snap) = snapshot_at(&h, q.tick)?;
    let (class, row) = snap.locate(id).ok_or_else(|| not_found(format!("no object {id} at tick {tick}")))?;
    let c = h.program.class(class);
    let t = snap.table(class);
    let fields: serde_json::Map<String, JsonValue> =
        c.state.iter().enumerate().map(|(i, f)| (f.name.clone(), t.get(row, i as u32).to_json())).collect();
    Ok(Json(json!({"id": id, "class": c.name, "tick": tick, "fields": fields})))
}

async fn effects(
    State(h): State<SessionHandle>,
    Path(id): Path<String>,
    q: Result<Query<TickQuery>, axum::extract::rejection::QueryRejection>,
) -> Reply {
    let q = query(q)?;
    let id: ObjId = id.parse().map_err(|_| bad_request(format!("`{id}` is not an object id")))?;
    let v = h.view.read().unwrap();
    // Default: the effect phase of the last completed tick.
    let tick = q.tick.unwrap_or(v.tick.saturating_sub(1));
    let trace: Vec<TraceRecord> = v.trace.iter().cloned().collect();
    let records = effects_of(&trace, id, tick);
    let (reduced, entries): (Vec<_>, Vec<_>) =
        records.into_iter().partition(|r| r.payload["status"] == status::REDUCED);
    let with_seq = |r: TraceRecord| {
        let mut p = r.payload;
        p["seq"] = json!(r.seq);
        p
    };
    Ok(Json(json!({
        "object": id,
        "tick": tick,
        "logging": v.logging,
        "entries": entries.into_iter().map(with_seq).collect::<Vec<_>>(),
        "reduced": reduced.into_iter().map(with_seq).collect::<Vec<_>>(),
    })))
}

async fn plan(State(h): State<SessionHandle>, q: Result<Query<ClassQuery>, axum::extract::rejection::QueryRejection>) -> Reply {
    let q = query(q)?;
    let v = h.view.read().unwrap();
    match q.class {
        Some(class) => {
            if h.program.class_by_name(&class).is_none() {
                return Err(not_found(format!("unknown class `{class}`")));
            }
            let p = v.plans.get(&class).ok_or_else(|| not_found(format!("class `{class}` has no script")))?;
            Ok(Json(json!({"class": class, "tick": v.tick, "plan": p})))
        }
        None => Ok(Json(json!({"tick": v.tick, "plans": v.plans}))),
    }
}

async fn stats(State(h): State<SessionHandle>) -> Json<JsonValue> {
    let v = h.view.read().unwrap();
    let objects = v.snaps.get(&v.tick).map_or(0, |s| s.object_count());
    Json(json!({
        "tick": v.tick,
        "objects": objects,
        "last": v.stats,
        "breakpoints": v.breakpoints,
        "halted": v.halted,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepBody {
    #[serde(default = "one")]
    ticks: u64,
}

fn one() -> u64 {
    1
}

async fn advance(h: &SessionHandle, limit: u64) -> Reply {
    let r = h.call(|reply| Cmd::Advance { limit, reply }).await?;
    r.map(|a| Json(json!(a))).map_err(engine_error)
}

async fn step(State(h): State<SessionHandle>, text: String) -> Reply {
    let b: StepBody = body(&text)?;
    advance(&h, b.ticks).await
}

/// Upper bound on ticks run by one /run without `untilTick`.
const RUN_LIMIT: u64 = 100_000;

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RunBody {
    until_tick: Option<u64>,
    #[serde(default)]
    until_breakpoint: bool,
    max_ticks: Option<u64>,
}

async fn run(State(h): State<SessionHandle>, text: String) -> Reply {
    let b: RunBody = body(&text)?;
    let limit = match (b.until_tick, b.until_breakpoint) {
        (Some(t), _) => t.saturating_sub(h.tick()),
        (None, true) => b.max_ticks.unwrap_or(RUN_LIMIT),
        (None, false) => return Err(bad_request("expected `untilTick` or `untilBreakpoint`")),
    };
    advance(&h, limit.min(b.max_ticks.unwrap_or(u64::MAX))).await
}

async fn pause(State(h): State<SessionHandle>) -> Json<JsonValue> {
    h.pause();
    Json(json!({"tick": h.tick(), "pauseRequested": true}))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BreakpointBody {
    class: String,
    cond: String,
}

async fn add_breakpoint(State(h): State<SessionHandle>, text: String) -> Result<(StatusCode, Json<JsonValue>), Response> {
    let b: BreakpointBody = body(&text)?;
    let r = h
        .call(|reply| Cmd::AddBreakpoint {
            class: b.class,
            cond: b.cond,
            reply,
        })
        .await?;
    match r {
        Ok(bp) => Ok((StatusCode::CREATED, Json(json!(bp)))),
        Err(BreakpointError::UnknownClass(c)) => Err(not_found(format!("unknown class `{c}`"))),
        Err(BreakpointError::Condition(d)) => Err((
            StatusCode::BAD_REQUEST,
            Json(json!({"error": {"code": "E_BAD_CONDITION", "message": d.to_string(), "diagnostics": d.0}})),
        )
            .into_response()),
    }
}

async fn delete_breakpoint(State(h): State<SessionHandle>, Path(id): Path<String>) -> Result<StatusCode, Response> {
    let id: u64 = id.parse().map_err(|_| bad_request(format!("`{id}` is not a breakpoint id")))?;
    if h.call(|reply| Cmd::DeleteBreakpoint { id, reply }).await? {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(not_found(format!("no breakpoint {id}")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointBody {
    path: Option<PathBuf>,
}

async fn checkpoint(State(h): State<SessionHandle>, text: String) -> Reply {
    let b: CheckpointBody = body(&text)?;
    let inline = b.path.is_none();
    let (meta, doc) = h.call(|reply| Cmd::Checkpoint { path: b.path, reply }).await?.map_err(checkpoint_error)?;
    let mut out = json!(meta);
    if inline {
        out["checkpoint"] = doc;
    }
    Ok(Json(out))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RestoreBody {
    path: Option<PathBuf>,
    checkpoint: Option<JsonValue>,
}

async fn restore(State(h): State<SessionHandle>, text: String) -> Reply {
    let b: RestoreBody = body(&text)?;
    let source = match (b.path, b.checkpoint) {
        (Some(p), None) => RestoreSource::Path(p),
        (None, Some(d)) => RestoreSource::Doc(d),
        _ => return Err(bad_request("expected exactly one of `path` and `checkpoint`")),
    };
    let tick = h.call(|reply| Cmd::Restore { source, reply }).await?.map_err(checkpoint_error)?;
    Ok(Json(json!({"tick": tick})))
}
