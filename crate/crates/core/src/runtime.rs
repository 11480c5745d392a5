//! The tick loop.
//!
//! `run_tick` runs the effect phase (relational engine or reference
//! interpreter) over the tick-start snapshot, admits transactions, reduces
//! the surviving entries and then lets each update component compute new
//! values for the fields it owns. Ownership is a partition:
//!
//! * custom components (physics) own the fields they claim;
//! * the transaction engine owns constrained fields and `lastTxnStatus`;
//! * the program-counter component owns `_pc`;
//! * the expression updater owns every other field and applies its rule,
//!   if any.
//!
//! Since no two components write the same field and all of them read only
//! the tick-start snapshot, their order cannot change the result. Spawns
//! and destroys apply after all updates.

use crate::analyze::{FieldId, Program};
use crate::effects::{reduce_effects, DropReason, EffectBuffer, Entry, ReducedEffects};
use crate::exec::{PlanConfig, Planner};
use crate::interp::{interpret_effect_phase, Env, EvalError, Order};
use crate::store::{ClassUpdate, IndexPolicy, Snapshot, StoreError};
use crate::trace::{status, TraceKind, TraceLog, TraceRecord};
use crate::txn::{admit, check_constraints, row_satisfies, Violation};
use crate::value::{ClassId, ObjId, Type, Value};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum EngineKind {
    Relational,
    Reference,
}

/// Engine configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct EngineConfig {
    pub workers: usize,
    pub engine: EngineKind,
    pub seed: u64,
    pub plan: PlanConfig,
    /// Fraction of changed rows above which an index is rebuilt rather
    /// than repaired.
    pub index_rebuild_threshold: f64,
    pub components: Vec<ComponentConfig>,
    pub trace: TraceConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 1,
            engine: EngineKind::Relational,
            seed: 0,
            plan: PlanConfig::default(),
            index_rebuild_threshold: 0.25,
            components: Vec::new(),
            trace: TraceConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct TraceConfig {
    /// Classes whose incoming effect entries are logged; `"*"` logs all.
    pub effects: Vec<String>,
}

impl TraceConfig {
    fn logs(&self, class: &str) -> bool {
        self.effects.iter().any(|c| c == "*" || c == class)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum ComponentConfig {
    #[serde(rename_all = "camelCase")]
    Physics {
        class: String,
        x: String,
        y: String,
        /// Velocity intention effects.
        vx: String,
        vy: String,
        width: f64,
        height: f64,
        /// State fields recording the velocity applied last tick.
        #[serde(default)]
        vx_state: Option<String>,
        #[serde(default)]
        vy_state: Option<String>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("{0}")]
    Unpartitioned(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initial world violates constraints: {}", fmt_violations(.0))]
    Constraints(Vec<Violation>),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("component `{0}` wrote field `{1}` it does not own")]
    Ownership(String, String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("#{} ({}): {}", x.object, x.class, x.constraint))
        .collect::<Vec<_>>()
        .join("; ")
}

impl EngineError {
    /// Stable diagnostic code, where one exists.
    pub fn code(&self) -> Option<&'static str> {
        match self {
            EngineError::Unpartitioned(_) => Some(crate::diag::codes::E_UNPARTITIONED_STATE),
            _ => None,
        }
    }

    /// Whether this is a bug-class failure of the engine itself, as opposed
    /// to bad input.
    pub fn is_invariant(&self) -> bool {
        matches!(self, EngineError::Ownership(..))
    }
}

/// One new value for an owned field.
pub type FieldUpdate = (ClassId, ObjId, FieldId, Value);

/// A subsystem that computes next-tick values of the fields it owns from
/// the tick-start snapshot and the reduced effects.
pub trait UpdateComponent: Send + Sync {
    fn name(&self) -> &str;
    fn owned(&self) -> Vec<(ClassId, FieldId)>;
    fn update(&self, program: &Program, snap: &Snapshot, effects: &ReducedEffects) -> Vec<FieldUpdate>;
}

/// Grid physics demo: integrates velocity intentions into positions, clamps
/// to the world bounds and moves objects that would share a cell to the
/// nearest free cell. Objects claim cells in ascending id order.
pub struct Physics {
    pub class: ClassId,
    pub x: FieldId,
    pub y: FieldId,
    pub vx: u32,
    pub vy: u32,
    pub width: f64,
    pub height: f64,
    pub vx_state: Option<FieldId>,
    pub vy_state: Option<FieldId>,
}

impl Physics {
    fn from_config(program: &Program, cfg: &ComponentConfig) -> Result<Physics, EngineError> {
        let ComponentConfig::Physics {
            class,
            x,
            y,
            vx,
            vy,
            width,
            height,
            vx_state,
            vy_state,
        } = cfg;
        let c = program
            .class_by_name(class)
            .ok_or_else(|| EngineError::Config(format!("physics: unknown class `{class}`")))?;
        let num_field = |name: &str| -> Result<FieldId, EngineError> {
            let f = c
                .field(name)
                .ok_or_else(|| EngineError::Config(format!("physics: `{class}` has no state field `{name}`")))?;
            if c.state[f as usize].ty != Type::Number {
                return Err(EngineError::Config(format!("physics: `{class}.{name}` is not a number")));
            }
            Ok(f)
        };
        let num_effect = |name: &str| -> Result<u32, EngineError> {
            let e = c
                .effect(name)
                .ok_or_else(|| EngineError::Config(format!("physics: `{class}` has no effect `{name}`")))?;
            if !c.effects[e as usize].ty.is_numeric() {
                return Err(EngineError::Config(format!("physics: effect `{class}.{name}` is not numeric")));
            }
            Ok(e)
        };
        if !(*width >= 1.0 && *height >= 1.0 && width.is_finite() && height.is_finite()) {
            return Err(EngineError::Config("physics: width and height must be at least 1".into()));
        }
        Ok(Physics {
            class: c.id,
            x: num_field(x)?,
            y: num_field(y)?,
            vx: num_effect(vx)?,
            vy: num_effect(vy)?,
            width: width.floor(),
            height: height.floor(),
            vx_state: vx_state.as_deref().map(num_field).transpose()?,
            vy_state: vy_state.as_deref().map(num_field).transpose()?,
        })
    }

    /// Nearest in-bounds free cell to `(cx, cy)`, ordered by squared
    /// distance, then dy, then dx.
    fn nearest_free(&self, cx: i64, cy: i64, taken: &HashSet<(i64, i64)>) -> Option<(i64, i64)> {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut best: Option<(i64, i64, i64)> = None;
        for r in 1..=w.max(h) {
            if let Some((d2, _, _)) = best {
                if r * r > d2 {
                    break;
                }
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()) != r {
                        continue;
                    }
                    let (x, y) = (cx + dx, cy + dy);
                    if x < 0 || y < 0 || x >= w || y >= h || taken.contains(&(x, y)) {
                        continue;
                    }
                    let key = (dx * dx + dy * dy, dy, dx);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
        }
        best.map(|(_, dy, dx)| (cx + dx, cy + dy))
    }
}

impl UpdateComponent for Physics {
    fn name(&self) -> &str {
        "physics"
    }

    fn owned(&self) -> Vec<(ClassId, FieldId)> {
        let mut v = vec![(self.class, self.x), (self.class, self.y)];
        v.extend(self.vx_state.map(|f| (self.class, f)));
        v.extend(self.vy_state.map(|f| (self.class, f)));
        v
    }

    fn update(&self, _program: &Program, snap: &Snapshot, effects: &ReducedEffects) -> Vec<FieldUpdate> {
        let t = snap.table(self.class);
        let mut out = Vec::new();
        let mut taken: HashSet<(i64, i64)> = HashSet::new();
        let velocity = |e: u32, row: usize| {
            effects
                .get(self.class, e, row)
                .and_then(|v| v.as_f64().ok())
                .filter(|v| v.is_finite())
                .unwrap_or(0.0)
        };
        let coord = |v: f64, max: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, max - 1.0) };
        for row in 0..t.len() {
            let id = t.ids[row];
            let (vx, vy) = (velocity(self.vx, row), velocity(self.vy, row));
            let x0 = t.get(row, self.x).as_f64().unwrap_or(0.0);
            let y0 = t.get(row, self.y).as_f64().unwrap_or(0.0);
            let (mut x, mut y) = (coord(x0 + vx, self.width), coord(y0 + vy, self.height));
            let cell = (x.floor() as i64, y.floor() as i64);
            if taken.contains(&cell) {
                if let Some((cx, cy)) = self.nearest_free(cell.0, cell.1, &taken) {
                    x = cx as f64;
                    y = cy as f64;
                }
            }
            taken.insert((x.floor() as i64, y.floor() as i64));
            let mut put = |f: FieldId, v: f64| {
                if !t.get(row, f).identical(&Value::Num(v)) {
                    out.push((self.class, id, f, Value::Num(v)));
                }
            };
            put(self.x, x);
            put(self.y, y);
            if let Some(f) = self.vx_state {
                put(f, vx);
            }
            if let Some(f) = self.vy_state {
                put(f, vy);
            }
        }
        out
    }
}

/// Totals of transaction outcomes since tick 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxnCounters {
    pub committed: u64,
    pub aborted: u64,
}

/// What one tick did.
#[derive(Clone, Debug)]
pub struct TickReport {
    /// Tick number of the new snapshot.
    pub tick: u64,
    pub records: Vec<TraceRecord>,
    pub entries: usize,
    pub faults: usize,
    pub committed: usize,
    pub aborted: usize,
}

/// A running simulation: the current snapshot, compiled plans and
/// registered update components.
pub struct World {
    pub program: Arc<Program>,
    pub config: EngineConfig,
    pub snap: Arc<Snapshot>,
    pub planner: Planner,
    components: Vec<Box<dyn UpdateComponent>>,
    owners: HashMap<(ClassId, FieldId), String>,
    pub txn_counters: TxnCounters,
    pub trace: TraceLog,
}

impl World {
    /// Creates a world over a loaded snapshot and registers the components
    /// named in the configuration.
    pub fn new(program: Arc<Program>, snap: Snapshot, config: EngineConfig) -> Result<World, EngineError> {
        if config.workers == 0 {
            return Err(EngineError::Config("workers must be at least 1".into()));
        }
        let bad = check_constraints(&program, &snap, config.seed);
        if !bad.is_empty() {
            return Err(EngineError::Constraints(bad));
        }
        for name in &config.trace.effects {
            if name != "*" && program.class_by_name(name).is_none() {
                return Err(EngineError::Config(format!("trace: unknown class `{name}`")));
            }
        }
        let planner = Planner::new(&program, config.plan.clone());
        let mut world = World {
            program: program.clone(),
            config: config.clone(),
            snap: Arc::new(snap),
            planner,
            components: Vec::new(),
            owners: HashMap::new(),
            txn_counters: TxnCounters::default(),
            trace: TraceLog::default(),
        };
        for c in &config.components {
            let p = Physics::from_config(&program, c)?;
            world.register_update_component(Box::new(p))?;
        }
        Ok(world)
    }

    pub fn tick(&self) -> u64 {
        self.snap.tick
    }

    /// Adds a component. Its fields must not be owned by another component,
    /// by the transaction engine or the program counter, and must not have
    /// an update rule (those belong to the expression updater).
    pub fn register_update_component(&mut self, c: Box<dyn UpdateComponent>) -> Result<(), EngineError> {
        let owned = c.owned();
        for &(class, f) in &owned {
            let info = self.program.class(class);
            let field = &info.state[f as usize].name;
            let other = if let Some(o) = self.owners.get(&(class, f)) {
                Some(o.clone())
            } else if info.constrained.contains(&f) || info.txn_status == Some(f) {
                Some("the transaction engine".to_string())
            } else if info.pc.is_some_and(|pc| pc.state == f) {
                Some("the program counter".to_string())
            } else if info.rule(f).is_some() {
                Some("the expression updater".to_string())
            } else {
                None
            };
            if let Some(o) = other {
                return Err(EngineError::Unpartitioned(format!(
                    "`{}.{field}` is claimed by `{}` but already owned by {o}",
                    info.name,
                    c.name()
                )));
            }
        }
        let dup: HashSet<_> = owned.iter().collect();
        if dup.len() != owned.len() {
            return Err(EngineError::Unpartitioned(format!("`{}` claims a field twice", c.name())));
        }
        for k in owned {
            self.owners.insert(k, c.name().to_string());
        }
        self.components.push(c);
        Ok(())
    }

    /// Reorders custom components; for testing that order is irrelevant.
    pub fn reverse_components(&mut self) {
        self.components.reverse();
    }

    /// Owner of every state field, for inspection.
    pub fn ownership(&self) -> Vec<(String, String, String)> {
        let mut out = Vec::new();
        for c in &self.program.classes {
            for (f, info) in c.state.iter().enumerate() {
                let f = f as FieldId;
                let owner = if let Some(o) = self.owners.get(&(c.id, f)) {
                    o.clone()
                } else if c.constrained.contains(&f) || c.txn_status == Some(f) {
                    "transactions".into()
                } else if c.pc.is_some_and(|pc| pc.state == f) {
                    "programCounter".into()
                } else {
                    "expressions".into()
                };
                out.push((c.name.clone(), info.name.clone(), owner));
            }
        }
        out
    }

    /// Advances the world by one tick.
    pub fn run_tick(&mut self) -> Result<TickReport, EngineError> {
        let program = self.program.clone();
        let snap = self.snap.clone();
        let tick = snap.tick;
        let seed = self.config.seed;
        let mut switches = Vec::new();
        let buffer: EffectBuffer = match self.config.engine {
            EngineKind::Relational => {
                let out = self.planner.execute(&program, &snap, seed, self.config.workers);
                switches = out.switches;
                out.buffer
            }
            EngineKind::Reference => interpret_effect_phase(&program, &snap, seed, Order::Ascending),
        };
        let log = &mut self.trace;
        for f in &buffer.faults {
            log.push(
                tick,
                TraceKind::Fault,
                json!({"phase": "effect", "object": f.object, "class": program.class(f.class).name, "fault": f.fault.to_string()}),
            );
        }

        // Entries to dead or mistyped targets never reach reduction.
        let mut live = Vec::with_capacity(buffer.entries.len());
        let mut dropped: Vec<(Entry, DropReason)> = Vec::new();
        for e in buffer.entries {
            if snap.table(e.class).row_of(e.target).is_some() {
                live.push(e);
            } else {
                dropped.push((e, DropReason::DeadTarget));
            }
        }
        let (txn_entries, mut base): (Vec<Entry>, Vec<Entry>) = live.into_iter().partition(|e| e.txn.is_some());
        let admission = admit(&program, &snap, seed, txn_entries);
        for o in &admission.outcomes {
            log.push(tick, TraceKind::TxnOutcome, json!(o));
        }
        if !admission.frozen.is_empty() {
            log.push(tick, TraceKind::TxnOutcome, json!({"frozen": admission.frozen}));
        }
        let committed = admission.outcomes.iter().filter(|o| o.committed).count();
        let aborted = admission.outcomes.len() - committed;
        self.txn_counters.committed += committed as u64;
        self.txn_counters.aborted += aborted as u64;
        dropped.extend(admission.aborted.iter().cloned().map(|e| (e, DropReason::TxnAborted)));
        let n_entries = base.len() + admission.committed.len() + dropped.len();
        base.extend(admission.committed.iter().cloned());
        base.sort_by(Entry::canonical_cmp);
        let reduced = reduce_effects(&program, &snap, &base);
        self.log_effects(tick, &snap, &base, &dropped, &reduced);
        let log = &mut self.trace;

        // Update phase.
        let mut updates: Vec<FieldUpdate> = Vec::new();
        for c in &self.components {
            let owned: HashSet<(ClassId, FieldId)> = c.owned().into_iter().collect();
            let ups = c.update(&program, &snap, &reduced);
            if let Some(u) = ups.iter().find(|u| !owned.contains(&(u.0, u.2))) {
                let info = program.class(u.0);
                return Err(EngineError::Ownership(c.name().into(), format!("{}.{}", info.name, info.state[u.2 as usize].name)));
            }
            log.push(tick, TraceKind::ComponentUpdate, json!({"component": c.name(), "updates": ups.len()}));
            updates.extend(ups);
        }
        let (expr_updates, expr_faults) = expression_updates(&program, &snap, &reduced, seed, &self.owners);
        for (class, object, field, fault) in expr_faults {
            let info = program.class(class);
            log.push(
                tick,
                TraceKind::Fault,
                json!({"phase": "update", "object": object, "class": info.name, "field": info.state[field as usize].name, "fault": fault}),
            );
        }
        log.push(tick, TraceKind::ComponentUpdate, json!({"component": "expressions", "updates": expr_updates.len()}));
        updates.extend(expr_updates);
        log.push(
            tick,
            TraceKind::ComponentUpdate,
            json!({"component": "transactions", "updates": admission.updates.len()}),
        );
        updates.extend(admission.updates.iter().cloned());
        let pc_updates = pc_updates(&program, &snap, &reduced);
        log.push(tick, TraceKind::ComponentUpdate, json!({"component": "programCounter", "updates": pc_updates.len()}));
        updates.extend(pc_updates);

        // Spawns and destroys.
        let mut changes: BTreeMap<ClassId, ClassUpdate> = BTreeMap::new();
        for (class, id, f, v) in updates {
            changes.entry(class).or_default().updates.push((id, f, v));
        }
        let mut destroyed: BTreeSet<(ClassId, ObjId)> = BTreeSet::new();
        for d in &buffer.destroys {
            if snap.table(d.class).row_of(d.target).is_some() {
                destroyed.insert((d.class, d.target));
            } else {
                log.push(
                    tick,
                    TraceKind::ComponentUpdate,
                    json!({"component": "spawnDestroy", "droppedDestroy": d.target, "source": d.source, "stmt": d.stmt}),
                );
            }
        }
        for (class, id) in &destroyed {
            changes.entry(*class).or_default().destroys.push(*id);
        }
        let mut next_id = snap.next_id;
        let mut spawned = 0;
        for s in &buffer.spawns {
            if !row_satisfies(&program, &snap, s.class, next_id, &s.row, seed) {
                log.push(
                    tick,
                    TraceKind::ComponentUpdate,
                    json!({"component": "spawnDestroy", "droppedSpawn": program.class(s.class).name, "source": s.source, "stmt": s.stmt, "reason": "constraint"}),
                );
                continue;
            }
            changes.entry(s.class).or_default().spawns.push((next_id, s.row.clone()));
            next_id += 1;
            spawned += 1;
        }
        if spawned + destroyed.len() > 0 {
            log.push(
                tick,
                TraceKind::ComponentUpdate,
                json!({"component": "spawnDestroy", "spawned": spawned, "destroyed": destroyed.len()}),
            );
        }
        let changes: Vec<(ClassId, ClassUpdate)> = changes.into_iter().collect();
        let policy = IndexPolicy {
            rebuild_threshold: self.config.index_rebuild_threshold,
        };
        let (next, report) = snap.apply_row_updates(&changes, reduced.to_tables(&snap), policy);
        let log = &mut self.trace;
        for (class, id, f) in report.dropped_updates {
            let info = program.class(class);
            log.push(
                tick,
                TraceKind::ComponentUpdate,
                json!({"component": "store", "droppedUpdate": id, "class": info.name, "field": info.state[f as usize].name}),
            );
        }
        for s in &switches {
            log.push(tick, TraceKind::PlanSwitch, json!(s));
        }
        let mut plans = serde_json::Map::new();
        if self.config.engine == EngineKind::Relational {
            for c in &program.classes {
                if let Some(st) = self.planner.state(c.id) {
                    plans.insert(c.name.clone(), json!({"active": st.active, "streak": st.streak, "rows": st.last_rows}));
                }
            }
        }
        log.push(
            tick,
            TraceKind::Stats,
            json!({
                "entries": n_entries,
                "faults": buffer.faults.len(),
                "txnCommitted": committed,
                "txnAborted": aborted,
                "objects": next.object_count(),
                "plans": plans,
            }),
        );
        self.snap = Arc::new(next);
        Ok(TickReport {
            tick: self.snap.tick,
            records: self.trace.take(),
            entries: n_entries,
            faults: buffer.faults.len(),
            committed,
            aborted,
        })
    }

    fn log_effects(&mut self, tick: u64, snap: &Snapshot, applied: &[Entry], dropped: &[(Entry, DropReason)], reduced: &ReducedEffects) {
        let program = &self.program;
        let logged: Vec<bool> = program.classes.iter().map(|c| self.config.trace.logs(&c.name)).collect();
        if !logged.iter().any(|b| *b) {
            return;
        }
        let entry_json = |e: &Entry, st: &str| {
            let c = program.class(e.class);
            json!({
                "target": e.target,
                "class": c.name,
                "effect": c.effects[e.effect as usize].name,
                "source": e.source,
                "stmt": e.stmt,
                "value": e.value.to_json(),
                "txn": e.txn,
                "status": st,
            })
        };
        let mut all: Vec<(&Entry, &str)> = applied.iter().map(|e| (e, status::APPLIED)).collect();
        for (e, why) in dropped {
            all.push((
                e,
                match why {
                    DropReason::DeadTarget => status::DEAD_TARGET,
                    DropReason::TxnAborted => status::ABORTED,
                },
            ));
        }
        all.retain(|(e, _)| logged[e.class.0 as usize]);
        all.sort_by(|a, b| a.0.canonical_cmp(b.0));
        let mut groups: BTreeSet<(ObjId, ClassId, u32)> = BTreeSet::new();
        for (e, st) in &all {
            self.trace.push(tick, TraceKind::EffectEntry, entry_json(e, st));
            groups.insert((e.target, e.class, e.effect));
        }
        for (target, class, effect) in groups {
            let Some(row) = snap.table(class).row_of(target) else { continue };
            let c = program.class(class);
            let v = reduced.get(class, effect, row).map(|v| v.to_json());
            self.trace.push(
                tick,
                TraceKind::EffectEntry,
                json!({
                    "target": target,
                    "class": c.name,
                    "effect": c.effects[effect as usize].name,
                    "value": v,
                    "status": status::REDUCED,
                }),
            );
        }
    }

    /// Runs `n` ticks, discarding trace records.
    pub fn run_ticks(&mut self, n: u64) -> Result<(), EngineError> {
        for _ in 0..n {
            self.run_tick()?;
        }
        Ok(())
    }
}

type UpdateFault = (ClassId, ObjId, FieldId, String);

/// The built-in expression updater: applies the rule of every field not
/// owned by another component. A rule reading an absent effect, or
/// faulting, leaves the field unchanged.
pub fn expression_updates(
    program: &Program,
    snap: &Snapshot,
    reduced: &ReducedEffects,
    seed: u64,
    owners: &HashMap<(ClassId, FieldId), String>,
) -> (Vec<FieldUpdate>, Vec<UpdateFault>) {
    let mut out = Vec::new();
    let mut faults = Vec::new();
    for c in &program.classes {
        let rules: Vec<_> = c
            .rules
            .iter()
            .filter(|(f, _)| !c.constrained.contains(f) && !owners.contains_key(&(c.id, *f)))
            .collect();
        if rules.is_empty() {
            continue;
        }
        let t = snap.table(c.id);
        for row in 0..t.len() {
            let lookup = |e: u32| reduced.get(c.id, e, row).cloned();
            let mut env = Env::object(program, snap, c.id, row, seed);
            env.effects = Some(&lookup);
            for (f, rule) in &rules {
                match env.eval(rule, &[]) {
                    Ok(v) => {
                        let v = v.coerce(&c.state[*f as usize].ty);
                        if !t.get(row, *f).identical(&v) {
                            out.push((c.id, t.ids[row], *f, v));
                        }
                    }
                    Err(EvalError::Absent(_)) => {}
                    Err(EvalError::Fault(fault)) => faults.push((c.id, t.ids[row], *f, fault.to_string())),
                }
            }
        }
    }
    (out, faults)
}

/// Next program counter: a restart override, else the segment a script
/// asked to resume in, else unchanged (the object faulted).
fn pc_updates(program: &Program, snap: &Snapshot, reduced: &ReducedEffects) -> Vec<FieldUpdate> {
    let mut out = Vec::new();
    for c in &program.classes {
        let Some(pc) = c.pc else { continue };
        let t = snap.table(c.id);
        for row in 0..t.len() {
            let next = reduced
                .get(c.id, pc.restart, row)
                .or_else(|| reduced.get(c.id, pc.next, row));
            if let Some(v) = next {
                if !t.get(row, pc.state).identical(v) {
                    out.push((c.id, t.ids[row], pc.state, v.clone()));
                }
            }
        }
    }
    out
}
