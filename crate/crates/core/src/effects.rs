//! Effect buffers and canonical reduction.
//!
//! Both executors produce an [`EffectBuffer`]; everything after that is
//! shared. Reduction sorts each (target, effect) group by (source id,
//! statement id, value) before folding, so the result depends only on the
//! multiset of entries and not on the order or thread that produced them.

use crate::analyze::{EffectId, Program, StmtId};
use crate::store::Snapshot;
use crate::lang::ast::Combinator;
use crate::value::{fold_sorted, ClassId, Fault, ObjId, Type, Value};
use serde::Serialize;
use std::cmp::Ordering;

/// Identifies one execution of an atomic block: the issuing object and the
/// block's site. Admission runs in ascending order of this pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TxnId {
    pub issuer: ObjId,
    pub site: StmtId,
}

#[derive(Clone, Debug, Serialize)]
pub struct Entry {
    /// Class of the target object.
    pub class: ClassId,
    pub effect: EffectId,
    pub target: ObjId,
    pub source: ObjId,
    pub stmt: StmtId,
    pub value: Value,
    pub txn: Option<TxnId>,
}

impl Entry {
    fn key(&self) -> (ClassId, EffectId, ObjId, ObjId, StmtId) {
        (self.class, self.effect, self.target, self.source, self.stmt)
    }

    /// Canonical order: target group first, then provenance, then value.
    pub fn canonical_cmp(&self, other: &Entry) -> Ordering {
        self.key()
            .cmp(&other.key())
            .then_with(|| self.value.cmp(&other.value))
            .then_with(|| self.txn.cmp(&other.txn))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpawnReq {
    pub class: ClassId,
    pub source: ObjId,
    pub stmt: StmtId,
    /// Complete initial row: declared defaults overridden by the spawn's
    /// initializers.
    pub row: Vec<Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DestroyReq {
    pub class: ClassId,
    pub target: ObjId,
    pub source: ObjId,
    pub stmt: StmtId,
}

#[derive(Clone, Debug, Serialize)]
pub struct FaultRecord {
    pub class: ClassId,
    pub object: ObjId,
    pub fault: Fault,
}

/// Everything the effect phase of one tick produced.
#[derive(Clone, Debug, Default)]
pub struct EffectBuffer {
    pub entries: Vec<Entry>,
    pub spawns: Vec<SpawnReq>,
    pub destroys: Vec<DestroyReq>,
    pub faults: Vec<FaultRecord>,
}

impl EffectBuffer {
    pub fn append(&mut self, mut other: EffectBuffer) {
        self.entries.append(&mut other.entries);
        self.spawns.append(&mut other.spawns);
        self.destroys.append(&mut other.destroys);
        self.faults.append(&mut other.faults);
    }

    /// Sorts every list into canonical order, making the buffer
    /// independent of production order.
    pub fn canonicalize(&mut self) {
        self.entries.sort_by(Entry::canonical_cmp);
        self.spawns.sort_by(|a, b| {
            (a.source, a.stmt, a.class)
                .cmp(&(b.source, b.stmt, b.class))
                .then_with(|| a.row.cmp(&b.row))
        });
        self.destroys
            .sort_by_key(|d| (d.target, d.source, d.stmt, d.class));
        self.faults.sort_by_key(|f| f.object);
    }
}

/// Why an entry did not reach reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum DropReason {
    DeadTarget,
    TxnAborted,
}

/// Reduced effect values, indexed `[class][effect][row]` by row of the
/// tick-start snapshot. `None` marks an absent effect (no entries and no
/// identity).
#[derive(Clone, Debug, Default)]
pub struct ReducedEffects {
    pub values: Vec<Vec<Vec<Option<Value>>>>,
}

impl ReducedEffects {
    pub fn get(&self, class: ClassId, effect: EffectId, row: usize) -> Option<&Value> {
        self.values[class.0 as usize][effect as usize][row].as_ref()
    }

    /// Present values keyed by object id, for the snapshot's effect tables.
    pub fn to_tables(&self, snap: &Snapshot) -> crate::store::EffectTables {
        self.values
            .iter()
            .enumerate()
            .map(|(c, effs)| {
                let ids = &snap.tables[c].ids;
                effs.iter()
                    .map(|rows| {
                        rows.iter()
                            .enumerate()
                            .filter_map(|(r, v)| v.as_ref().map(|v| (ids[r], v.clone())))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

/// The representation an assigned value is buffered in: widened to the
/// declared type, or to the element type for a set insert. `count` ignores
/// its operands, so they are kept as written.
pub fn entry_value(comb: Combinator, ty: &Type, v: Value) -> Value {
    match (comb, ty, &v) {
        (Combinator::Count, _, _) => v,
        (Combinator::SetUnion, Type::Set(elem), v2) if !matches!(v2, Value::Set(_)) => v.coerce(elem),
        _ => v.coerce(ty),
    }
}

/// Folds the canonical-sorted entries of one (target, effect) group.
pub fn reduce_group(program: &Program, class: ClassId, effect: EffectId, entries: &[&Entry]) -> Option<Value> {
    let info = &program.class(class).effects[effect as usize];
    let vals: Vec<Value> = entries.iter().map(|e| e.value.clone()).collect();
    fold_sorted(info.combinator, &info.ty, &vals)
}

/// Reduces canonical-sorted entries into per-row values. Entries must
/// target live objects of `snap`.
pub fn reduce_effects<'a>(program: &Program, snap: &Snapshot, entries: impl IntoIterator<Item = &'a Entry>) -> ReducedEffects {
    let mut values: Vec<Vec<Vec<Option<Value>>>> = program
        .classes
        .iter()
        .map(|c| {
            let n = snap.table(c.id).len();
            c.effects
                .iter()
                .map(|e| vec![crate::value::identity(e.combinator, &e.ty); n])
                .collect()
        })
        .collect();
    let entries: Vec<&Entry> = entries.into_iter().collect();
    let mut i = 0;
    while i < entries.len() {
        let head = entries[i];
        let mut j = i + 1;
        while j < entries.len()
            && entries[j].class == head.class
            && entries[j].effect == head.effect
            && entries[j].target == head.target
        {
            j += 1;
        }
        if let Some(row) = snap.table(head.class).row_of(head.target) {
            values[head.class.0 as usize][head.effect as usize][row] =
                reduce_group(program, head.class, head.effect, &entries[i..j]);
        }
        i = j;
    }
    ReducedEffects { values }
}
