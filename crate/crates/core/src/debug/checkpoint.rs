//! Resumable checkpoints: versioned JSON with a SHA-256 checksum.
//!
//! A checkpoint holds everything a trajectory depends on: the state tables
//! (synthetic fields included), the id counter, the engine configuration
//! with its seed, plan selection state, transaction counters and the trace
//! sequence. Randomness is counter-based on (seed, tick, object, site), so
//! the seed and tick are the whole RNG state. Update components registered
//! programmatically are not captured; components named in the
//! configuration are re-created on restore.

use crate::analyze::Program;
use crate::exec::PlanState;
use crate::runtime::{EngineConfig, EngineError, TxnCounters, World};
use crate::store::{empty_effects, Column, Snapshot, StateTable};
use crate::value::{ObjId, Type, Value};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::sync::Arc;

pub const FORMAT: &str = "sgl-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format version {found}, expected {VERSION}")]
    Version { found: Json },
    #[error("checkpoint was taken from a different program (unit hash {found})")]
    UnitHash { found: String },
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl CheckpointError {
    pub fn code(&self) -> &'static str {
        match self {
            CheckpointError::Io(_) => "E_CHECKPOINT_IO",
            CheckpointError::Version { .. } => "E_CHECKPOINT_VERSION",
            CheckpointError::UnitHash { .. } => "E_CHECKPOINT_UNIT",
            CheckpointError::Checksum => "E_CHECKPOINT_CHECKSUM",
            CheckpointError::Corrupt(_) => "E_CHECKPOINT_CORRUPT",
            CheckpointError::Engine(_) => "E_CHECKPOINT_ENGINE",
        }
    }
}

/// What [`checkpoint`] wrote.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckpointMeta {
    pub tick: u64,
    /// Hex SHA-256 of the checkpoint body.
    pub hash: String,
    pub bytes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct PlanEntry {
    class: String,
    state: PlanState,
}

fn digest(body: &Json) -> String {
    // serde_json maps are ordered by key, so the rendering is canonical.
    let text = serde_json::to_string(body).expect("json body");
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// The checkpoint document of a world at its current tick boundary.
pub fn checkpoint_json(world: &World) -> Json {
    let program = &world.program;
    let snap = &world.snap;
    let mut tables = Map::new();
    let mut effects = Map::new();
    for c in &program.classes {
        let t = snap.table(c.id);
        let mut cols = Map::new();
        for (i, f) in c.state.iter().enumerate() {
            let col: Vec<Json> = (0..t.len()).map(|r| t.get(r, i as u32).to_json()).collect();
            cols.insert(f.name.clone(), Json::Array(col));
        }
        tables.insert(c.name.clone(), json!({"ids": t.ids, "columns": cols}));
        let mut eff = Map::new();
        for (e, info) in c.effects.iter().enumerate() {
            let mut pairs: Vec<(ObjId, Json)> =
                snap.effects[c.id.0 as usize][e].iter().map(|(id, v)| (*id, v.to_json())).collect();
            if pairs.is_empty() {
                continue;
            }
            pairs.sort_by_key(|p| p.0);
            eff.insert(info.name.clone(), json!(pairs));
        }
        if !eff.is_empty() {
            effects.insert(c.name.clone(), Json::Object(eff));
        }
    }
    let plans: Vec<PlanEntry> = program
        .classes
        .iter()
        .zip(world.planner.states())
        .filter_map(|(c, st)| {
            st.map(|state| PlanEntry {
                class: c.name.clone(),
                state,
            })
        })
        .collect();
    let body = json!({
        "format": FORMAT,
        "version": VERSION,
        "unitHash": program.unit_hash,
        "tick": snap.tick,
        "nextId": snap.next_id,
        "config": world.config,
        "rng": {"kind": "counter", "seed": world.config.seed, "tick": snap.tick},
        "tables": tables,
        "effects": effects,
        "plans": plans,
        "txn": {"committed": world.txn_counters.committed, "aborted": world.txn_counters.aborted},
        "traceSeq": world.trace.next_seq,
    });
    let checksum = digest(&body);
    json!({"body": body, "checksum": checksum})
}

/// Writes a checkpoint of `world` to `sink`.
pub fn checkpoint<W: Write>(world: &World, mut sink: W) -> Result<CheckpointMeta, CheckpointError> {
    let doc = checkpoint_json(world);
    let text = serde_json::to_vec(&doc).expect("json document");
    sink.write_all(&text)?;
    sink.flush()?;
    Ok(CheckpointMeta {
        tick: world.tick(),
        hash: doc["checksum"].as_str().unwrap_or_default().to_string(),
        bytes: text.len(),
    })
}

/// Reads a checkpoint and rebuilds the world for `program`.
pub fn restore<R: Read>(mut source: R, program: Arc<Program>) -> Result<World, CheckpointError> {
    let mut text = Vec::new();
    source.read_to_end(&mut text)?;
    let doc: Json = serde_json::from_slice(&text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    restore_json(&doc, program)
}

pub fn restore_json(doc: &Json, program: Arc<Program>) -> Result<World, CheckpointError> {
    let corrupt = |m: &str| CheckpointError::Corrupt(m.to_string());
    let body = doc.get("body").ok_or_else(|| corrupt("missing body"))?;
    if body.get("format").and_then(Json::as_str) != Some(FORMAT) {
        return Err(corrupt("not a checkpoint document"));
    }
    if body["version"] != json!(VERSION) {
        return Err(CheckpointError::Version {
            found: body["version"].clone(),
        });
    }
    if doc.get("checksum").and_then(Json::as_str) != Some(digest(body).as_str()) {
        return Err(CheckpointError::Checksum);
    }
    let hash = body["unitHash"].as_str().unwrap_or_default();
    if hash != program.unit_hash {
        return Err(CheckpointError::UnitHash { found: hash.to_string() });
    }
    let tick = body["tick"].as_u64().ok_or_else(|| corrupt("tick"))?;
    let next_id = body["nextId"].as_i64().ok_or_else(|| corrupt("nextId"))?;
    let config: EngineConfig =
        serde_json::from_value(body["config"].clone()).map_err(|e| CheckpointError::Corrupt(format!("config: {e}")))?;

    let mut tables = Vec::with_capacity(program.classes.len());
    for c in &program.classes {
        let t = &body["tables"][&c.name];
        let ids: Vec<ObjId> =
            serde_json::from_value(t["ids"].clone()).map_err(|e| CheckpointError::Corrupt(format!("{}: ids: {e}", c.name)))?;
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CheckpointError::Corrupt(format!("{}: ids not ascending", c.name)));
        }
        let types: Vec<Type> = c.state.iter().map(|f| f.ty.clone()).collect();
        let mut table = StateTable::new(c.id, &types);
        table.ids = ids;
        for (i, f) in c.state.iter().enumerate() {
            let values = t["columns"][&f.name]
                .as_array()
                .ok_or_else(|| CheckpointError::Corrupt(format!("{}.{}: missing column", c.name, f.name)))?;
            if values.len() != table.ids.len() {
                return Err(CheckpointError::Corrupt(format!("{}.{}: column length", c.name, f.name)));
            }
            let mut col = Column::empty(&f.ty);
            for v in values {
                col.push(read_value(v, &f.ty).map_err(|m| CheckpointError::Corrupt(format!("{}.{}: {m}", c.name, f.name)))?);
            }
            table.cols[i] = Arc::new(col);
        }
        tables.push(Arc::new(table));
    }

    let mut effects = empty_effects(&program);
    for c in &program.classes {
        for (e, info) in c.effects.iter().enumerate() {
            let Some(pairs) = body["effects"][&c.name][&info.name].as_array() else { continue };
            for p in pairs {
                let id = p[0].as_i64().ok_or_else(|| corrupt("effect target"))?;
                let v = read_value(&p[1], &info.ty).map_err(|m| CheckpointError::Corrupt(format!("{}.{}: {m}", c.name, info.name)))?;
                effects[c.id.0 as usize][e].insert(id, v);
            }
        }
    }

    let snap = Snapshot::from_parts(tick, tables, next_id, effects);
    let mut world = World::new(program.clone(), snap, config)?;

    let entries: Vec<PlanEntry> =
        serde_json::from_value(body["plans"].clone()).map_err(|e| CheckpointError::Corrupt(format!("plans: {e}")))?;
    let mut states: Vec<Option<PlanState>> = vec![None; program.classes.len()];
    for p in entries {
        let c = program
            .class_by_name(&p.class)
            .ok_or_else(|| CheckpointError::Corrupt(format!("plans: unknown class {}", p.class)))?;
        states[c.id.0 as usize] = Some(p.state);
    }
    // A world saved by the reference engine carries no plan state; a
    // relational restore then starts plan selection afresh.
    if states.iter().any(Option::is_some) || world.planner.states().iter().all(Option::is_none) {
        world.planner.restore_states(states).map_err(CheckpointError::Corrupt)?;
    }
    world.txn_counters = TxnCounters {
        committed: body["txn"]["committed"].as_u64().ok_or_else(|| corrupt("txn"))?,
        aborted: body["txn"]["aborted"].as_u64().ok_or_else(|| corrupt("txn"))?,
    };
    world.trace.next_seq = body["traceSeq"].as_u64().ok_or_else(|| corrupt("traceSeq"))?;
    Ok(world)
}

fn read_value(v: &Json, ty: &Type) -> Result<Value, String> {
    Value::from_json(v, ty).map(|x| x.coerce(ty))
}
