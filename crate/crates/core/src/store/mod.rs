//! Columnar main-memory state tables and tick-boundary snapshots.
//!
//! Each class has one [`StateTable`]: ascending object ids plus one typed
//! column per state field. Columns are shared between snapshots and copied
//! only when an update touches them. Set-typed fields keep one immutable
//! set per row; [`StateTable::set_pairs`] exposes them as the sorted
//! `(owner_id, element)` child relation of the physical schema.

mod index;
pub mod rangetree;

pub use index::RangeIndex;

use crate::analyze::{derive_schema, FieldId, Program};
use crate::value::{ClassId, ObjId, Type, Value};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StoreError {
    #[error("duplicate table name `{0}`")]
    DuplicateTable(String),
    #[error("world: {0}")]
    World(String),
    #[error("index: {0}")]
    Index(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Num(Vec<f64>),
    Int(Vec<i64>),
    Bool(Vec<bool>),
    Str(Vec<Arc<str>>),
    Ref(Vec<Option<ObjId>>),
    Set(Vec<Arc<BTreeSet<Value>>>),
}

impl Column {
    pub fn empty(ty: &Type) -> Column {
        match ty {
            Type::Number => Column::Num(Vec::new()),
            Type::Int => Column::Int(Vec::new()),
            Type::Bool => Column::Bool(Vec::new()),
            Type::Str => Column::Str(Vec::new()),
            Type::Ref(_) | Type::Null => Column::Ref(Vec::new()),
            Type::Set(_) => Column::Set(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Column::Num(v) => v.len(),
            Column::Int(v) => v.len(),
            Column::Bool(v) => v.len(),
            Column::Str(v) => v.len(),
            Column::Ref(v) => v.len(),
            Column::Set(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> Value {
        match self {
            Column::Num(v) => Value::Num(v[row]),
            Column::Int(v) => Value::Int(v[row]),
            Column::Bool(v) => Value::Bool(v[row]),
            Column::Str(v) => Value::Str(v[row].clone()),
            Column::Ref(v) => Value::Ref(v[row]),
            Column::Set(v) => Value::Set(v[row].clone()),
        }
    }

    /// Stores a value already coerced to the column type.
    pub fn set(&mut self, row: usize, value: Value) {
        match (self, value) {
            (Column::Num(v), Value::Num(x)) => v[row] = x,
            (Column::Num(v), Value::Int(x)) => v[row] = x as f64,
            (Column::Int(v), Value::Int(x)) => v[row] = x,
            (Column::Bool(v), Value::Bool(x)) => v[row] = x,
            (Column::Str(v), Value::Str(x)) => v[row] = x,
            (Column::Ref(v), Value::Ref(x)) => v[row] = x,
            (Column::Set(v), Value::Set(x)) => v[row] = x,
            (c, v) => panic!("type mismatch storing {v} into {c:?}"),
        }
    }

    pub fn push(&mut self, value: Value) {
        match (self, value) {
            (Column::Num(v), Value::Num(x)) => v.push(x),
            (Column::Num(v), Value::Int(x)) => v.push(x as f64),
            (Column::Int(v), Value::Int(x)) => v.push(x),
            (Column::Bool(v), Value::Bool(x)) => v.push(x),
            (Column::Str(v), Value::Str(x)) => v.push(x),
            (Column::Ref(v), Value::Ref(x)) => v.push(x),
            (Column::Set(v), Value::Set(x)) => v.push(x),
            (c, v) => panic!("type mismatch storing {v} into {c:?}"),
        }
    }

    fn retain_rows(&mut self, keep: &[bool]) {
        fn go<T>(v: &mut Vec<T>, keep: &[bool]) {
            let mut i = 0;
            v.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
        match self {
            Column::Num(v) => go(v, keep),
            Column::Int(v) => go(v, keep),
            Column::Bool(v) => go(v, keep),
            Column::Str(v) => go(v, keep),
            Column::Ref(v) => go(v, keep),
            Column::Set(v) => go(v, keep),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateTable {
    pub class: ClassId,
    /// Ascending, unique.
    pub ids: Vec<ObjId>,
    pub cols: Vec<Arc<Column>>,
}

impl StateTable {
    pub fn new(class: ClassId, types: &[Type]) -> StateTable {
        StateTable {
            class,
            ids: Vec::new(),
            cols: types.iter().map(|t| Arc::new(Column::empty(t))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row_of(&self, id: ObjId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn get(&self, row: usize, field: FieldId) -> Value {
        self.cols[field as usize].get(row)
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.cols.iter().map(|c| c.get(row)).collect()
    }

    /// The `(owner_id, element)` child relation of a set-typed field,
    /// sorted.
    pub fn set_pairs(&self, field: FieldId) -> Vec<(ObjId, Value)> {
        let Column::Set(sets) = &*self.cols[field as usize] else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (row, s) in sets.iter().enumerate() {
            out.extend(s.iter().map(|e| (self.ids[row], e.clone())));
        }
        out
    }
}

/// Reduced effect values of the last completed tick, per class and effect:
/// present values only, keyed by target id.
pub type EffectTables = Vec<Vec<HashMap<ObjId, Value>>>;

/// Immutable view of all state tables at a tick boundary.
#[derive(Debug)]
pub struct Snapshot {
    pub tick: u64,
    pub tables: Vec<Arc<StateTable>>,
    pub effects: Arc<EffectTables>,
    pub next_id: ObjId,
    indexes: Mutex<HashMap<(ClassId, Vec<FieldId>), Arc<RangeIndex>>>,
}

impl Clone for Snapshot {
    fn clone(&self) -> Snapshot {
        Snapshot {
            tick: self.tick,
            tables: self.tables.clone(),
            effects: self.effects.clone(),
            next_id: self.next_id,
            indexes: Mutex::new(self.indexes.lock().unwrap().clone()),
        }
    }
}

impl PartialEq for Snapshot {
    /// State equality: tick, ids and bitwise column contents.
    fn eq(&self, other: &Snapshot) -> bool {
        self.tick == other.tick
            && self.next_id == other.next_id
            && self.tables.len() == other.tables.len()
            && self.tables.iter().zip(&other.tables).all(|(a, b)| tables_identical(a, b))
    }
}

fn tables_identical(a: &StateTable, b: &StateTable) -> bool {
    a.ids == b.ids
        && a.cols.len() == b.cols.len()
        && a.cols.iter().zip(&b.cols).all(|(x, y)| match (&**x, &**y) {
            (Column::Num(p), Column::Num(q)) => {
                p.len() == q.len() && p.iter().zip(q).all(|(u, v)| u.to_bits() == v.to_bits())
            }
            (x, y) => x == y,
        })
}

/// Changes to one class produced by the update phase.
#[derive(Clone, Debug, Default)]
pub struct ClassUpdate {
    pub updates: Vec<(ObjId, FieldId, Value)>,
    pub spawns: Vec<(ObjId, Vec<Value>)>,
    pub destroys: Vec<ObjId>,
}

/// What [`Snapshot::apply_row_updates`] did not apply.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ApplyReport {
    /// Updates to rows destroyed this tick or already dead.
    pub dropped_updates: Vec<(ClassId, ObjId, FieldId)>,
}

/// Index maintenance policy.
#[derive(Clone, Copy, Debug)]
pub struct IndexPolicy {
    /// Rebuild when more than this fraction of rows changed since the last
    /// build; repair in place otherwise.
    pub rebuild_threshold: f64,
}

impl Default for IndexPolicy {
    fn default() -> Self {
        IndexPolicy {
            rebuild_threshold: 0.25,
        }
    }
}

impl Snapshot {
    /// Empty tables for every class of a program.
    pub fn create_tables(program: &Program) -> Result<Snapshot, StoreError> {
        if let Some(dup) = derive_schema(program).duplicate_tables().into_iter().next() {
            return Err(StoreError::DuplicateTable(dup));
        }
        let tables = program
            .classes
            .iter()
            .map(|c| {
                let types: Vec<Type> = c.state.iter().map(|f| f.ty.clone()).collect();
                Arc::new(StateTable::new(c.id, &types))
            })
            .collect();
        Ok(Snapshot::from_parts(0, tables, 1, empty_effects(program)))
    }

    pub fn from_parts(tick: u64, tables: Vec<Arc<StateTable>>, next_id: ObjId, effects: EffectTables) -> Snapshot {
        Snapshot {
            tick,
            tables,
            effects: Arc::new(effects),
            next_id,
            indexes: Mutex::new(HashMap::new()),
        }
    }

    pub fn table(&self, class: ClassId) -> &StateTable {
        &self.tables[class.0 as usize]
    }

    pub fn object_count(&self) -> usize {
        self.tables.iter().map(|t| t.len()).sum()
    }

    /// Finds the class and row of a live object.
    pub fn locate(&self, id: ObjId) -> Option<(ClassId, usize)> {
        self.tables.iter().find_map(|t| t.row_of(id).map(|r| (t.class, r)))
    }

    /// The range index over `dims` of a class, built on first use.
    pub fn index(&self, class: ClassId, dims: &[FieldId]) -> Result<Arc<RangeIndex>, StoreError> {
        let key = (class, dims.to_vec());
        if let Some(ix) = self.indexes.lock().unwrap().get(&key) {
            return Ok(ix.clone());
        }
        let ix = Arc::new(RangeIndex::build(self.table(class), dims)?);
        self.indexes.lock().unwrap().insert(key, ix.clone());
        Ok(ix)
    }

    pub fn cached_indexes(&self) -> usize {
        self.indexes.lock().unwrap().len()
    }

    /// Produces the next tick's snapshot. Field updates apply first, then
    /// destroys (which win over same-tick updates), then spawns. Cached
    /// indexes are repaired or dropped for lazy rebuild.
    pub fn apply_row_updates(
        &self,
        changes: &[(ClassId, ClassUpdate)],
        effects: EffectTables,
        policy: IndexPolicy,
    ) -> (Snapshot, ApplyReport) {
        let mut report = ApplyReport::default();
        let mut tables = self.tables.clone();
        let mut next_id = self.next_id;
        let mut changed_ids: HashMap<ClassId, Vec<ObjId>> = HashMap::new();
        for (class, ch) in changes {
            if ch.updates.is_empty() && ch.spawns.is_empty() && ch.destroys.is_empty() {
                continue;
            }
            let old = &self.tables[class.0 as usize];
            let mut t = (**old).clone();
            let destroyed: HashSet<ObjId> = ch.destroys.iter().copied().collect();
            let indexed: HashSet<FieldId> = self
                .indexes
                .lock()
                .unwrap()
                .keys()
                .filter(|(c, _)| c == class)
                .flat_map(|(_, d)| d.iter().copied())
                .collect();
            let changed = changed_ids.entry(*class).or_default();
            let mut touched: HashMap<FieldId, Column> = HashMap::new();
            for (id, field, value) in &ch.updates {
                let row = match t.row_of(*id) {
                    Some(r) if !destroyed.contains(id) => r,
                    _ => {
                        report.dropped_updates.push((*class, *id, *field));
                        continue;
                    }
                };
                let col = touched
                    .entry(*field)
                    .or_insert_with(|| (*t.cols[*field as usize]).clone());
                if indexed.contains(field) && !col.get(row).identical(value) {
                    changed.push(*id);
                }
                col.set(row, value.clone());
            }
            for (f, col) in touched {
                t.cols[f as usize] = Arc::new(col);
            }
            if !destroyed.is_empty() {
                let keep: Vec<bool> = t.ids.iter().map(|id| !destroyed.contains(id)).collect();
                changed.extend(t.ids.iter().filter(|id| destroyed.contains(id)));
                t.ids.retain(|id| !destroyed.contains(id));
                for c in &mut t.cols {
                    Arc::make_mut(c).retain_rows(&keep);
                }
            }
            for (id, row) in &ch.spawns {
                debug_assert!(t.ids.last().is_none_or(|last| last < id));
                t.ids.push(*id);
                for (c, v) in t.cols.iter_mut().zip(row) {
                    Arc::make_mut(c).push(v.clone());
                }
                changed.push(*id);
                next_id = next_id.max(id + 1);
            }
            tables[class.0 as usize] = Arc::new(t);
        }
        let mut indexes = HashMap::new();
        for ((class, dims), ix) in self.indexes.lock().unwrap().iter() {
            let ids = changed_ids.get(class).map(Vec::as_slice).unwrap_or(&[]);
            if ids.is_empty() {
                indexes.insert((*class, dims.clone()), ix.clone());
            } else if let Some(r) = ix.repair(&tables[class.0 as usize], ids, policy.rebuild_threshold) {
                indexes.insert((*class, dims.clone()), Arc::new(r));
            }
        }
        let snap = Snapshot {
            tick: self.tick + 1,
            tables,
            effects: Arc::new(effects),
            next_id,
            indexes: Mutex::new(indexes),
        };
        (snap, report)
    }

    /// Rows of one class as JSON objects keyed by field name (synthetic
    /// fields included), in ascending id order.
    pub fn rows_json(&self, program: &Program, class: ClassId) -> Vec<serde_json::Value> {
        let c = program.class(class);
        let t = self.table(class);
        (0..t.len())
            .map(|row| {
                let mut fields = serde_json::Map::new();
                for (i, f) in c.state.iter().enumerate() {
                    fields.insert(f.name.clone(), t.get(row, i as FieldId).to_json());
                }
                serde_json::json!({ "id": t.ids[row], "fields": fields })
            })
            .collect()
    }

    /// The whole state as a world document, loadable by [`load_world`].
    /// Synthetic fields are omitted.
    pub fn to_world_json(&self, program: &Program) -> serde_json::Value {
        let mut objects = Vec::new();
        for c in &program.classes {
            let t = self.table(c.id);
            for row in 0..t.len() {
                let mut fields = serde_json::Map::new();
                for (i, f) in c.state.iter().enumerate() {
                    if !f.synthetic {
                        fields.insert(f.name.clone(), t.get(row, i as FieldId).to_json());
                    }
                }
                objects.push((t.ids[row], serde_json::json!({"class": c.name, "id": t.ids[row], "fields": fields})));
            }
        }
        objects.sort_by_key(|(id, _)| *id);
        serde_json::json!({ "objects": objects.into_iter().map(|(_, o)| o).collect::<Vec<_>>() })
    }
}

pub fn empty_effects(program: &Program) -> EffectTables {
    program
        .classes
        .iter()
        .map(|c| vec![HashMap::new(); c.effects.len()])
        .collect()
}

/// Loads a world document:
/// `{"classes": {C: {field: default}}, "objects": [{"class", "id", "fields"}]}`.
/// `classes` optionally overrides declared initializers for this world.
pub fn load_world(program: &Program, world: &serde_json::Value) -> Result<Snapshot, StoreError> {
    let bad = |m: String| StoreError::World(m);
    let base = Snapshot::create_tables(program)?;
    let mut defaults: Vec<Vec<Value>> = program
        .classes
        .iter()
        .map(|c| c.state.iter().map(|f| f.init.clone()).collect())
        .collect();
    if let Some(overrides) = world.get("classes") {
        let obj = overrides.as_object().ok_or_else(|| bad("`classes` must be an object".into()))?;
        for (name, fields) in obj {
            let c = program.class_by_name(name).ok_or_else(|| bad(format!("unknown class `{name}`")))?;
            let fields = fields.as_object().ok_or_else(|| bad(format!("defaults for `{name}` must be an object")))?;
            for (f, v) in fields {
                let fid = user_field(program, c.id, f)?;
                let ty = &c.state[fid as usize].ty;
                defaults[c.id.0 as usize][fid as usize] =
                    Value::from_json(v, ty).map_err(|e| bad(format!("{name}.{f}: {e}")))?.coerce(ty);
            }
        }
    }
    let objects = match world.get("objects") {
        None => Vec::new(),
        Some(v) => v.as_array().ok_or_else(|| bad("`objects` must be an array".into()))?.clone(),
    };
    let mut rows: Vec<(ObjId, ClassId, Vec<Value>)> = Vec::new();
    for o in &objects {
        let cname = o
            .get("class")
            .and_then(|c| c.as_str())
            .ok_or_else(|| bad(format!("object without a class: {o}")))?;
        let c = program.class_by_name(cname).ok_or_else(|| bad(format!("unknown class `{cname}`")))?;
        let id = o
            .get("id")
            .and_then(|i| i.as_i64())
            .ok_or_else(|| bad(format!("object without an integer id: {o}")))?;
        let mut row = defaults[c.id.0 as usize].clone();
        if let Some(fields) = o.get("fields") {
            let fields = fields.as_object().ok_or_else(|| bad(format!("object {id}: `fields` must be an object")))?;
            for (f, v) in fields {
                let fid = user_field(program, c.id, f)?;
                let ty = &c.state[fid as usize].ty;
                row[fid as usize] =
                    Value::from_json(v, ty).map_err(|e| bad(format!("object {id}, field `{f}`: {e}")))?.coerce(ty);
            }
        }
        rows.push((id, c.id, row));
    }
    rows.sort_by_key(|(id, _, _)| *id);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(bad(format!("duplicate object id {}", w[0].0)));
    }
    let class_of: HashMap<ObjId, ClassId> = rows.iter().map(|(id, c, _)| (*id, *c)).collect();
    let mut tables: Vec<StateTable> = base.tables.iter().map(|t| (**t).clone()).collect();
    for (id, c, row) in &rows {
        let info = program.class(*c);
        for (f, v) in info.state.iter().zip(row) {
            check_refs(program, &class_of, &f.ty, v).map_err(|m| bad(format!("object {id}, field `{}`: {m}", f.name)))?;
        }
        let t = &mut tables[c.0 as usize];
        t.ids.push(*id);
        for (col, v) in t.cols.iter_mut().zip(row) {
            Arc::make_mut(col).push(v.clone());
        }
    }
    let next_id = rows.last().map(|r| r.0 + 1).unwrap_or(1).max(1);
    Ok(Snapshot::from_parts(
        0,
        tables.into_iter().map(Arc::new).collect(),
        next_id,
        empty_effects(program),
    ))
}

fn user_field(program: &Program, class: ClassId, name: &str) -> Result<FieldId, StoreError> {
    let c = program.class(class);
    c.field(name)
        .filter(|f| !c.state[*f as usize].synthetic)
        .ok_or_else(|| StoreError::World(format!("class `{}` has no state field `{name}`", c.name)))
}

fn check_refs(program: &Program, class_of: &HashMap<ObjId, ClassId>, ty: &Type, v: &Value) -> Result<(), String> {
    match (ty, v) {
        (Type::Ref(c), Value::Ref(Some(id))) => match class_of.get(id) {
            Some(k) if k == c => Ok(()),
            Some(k) => Err(format!(
                "object {id} is a {}, expected {}",
                program.class(*k).name,
                program.class(*c).name
            )),
            None => Err(format!("dangling reference to {id}")),
        },
        (Type::Set(elem), Value::Set(s)) => s.iter().try_for_each(|x| check_refs(program, class_of, elem, x)),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests;
