//! Constraint-gated admission of atomic blocks.
//!
//! Transactions are considered one at a time in ascending [`TxnId`] order.
//! A transaction commits iff, for every constrained object it writes, the
//! update rules of the constrained fields applied to the already committed
//! entries plus its own entries yield a state satisfying every constraint
//! of that object. Aborted transactions contribute nothing.
//!
//! An object whose constraints fail even with no transactions at all (its
//! rules drift on their own) is frozen for the tick: its constrained fields
//! keep their values and every transaction writing it aborts. Together with
//! the load-time check this keeps every constraint true after every tick.

use crate::analyze::{FieldId, Program};
use crate::effects::{reduce_group, Entry, TxnId};
use crate::interp::{Env, EvalError};
use crate::store::Snapshot;
use crate::value::{ClassId, ObjId, Value};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap, HashSet};

/// Values of `lastTxnStatus`.
pub const STATUS_NONE: i64 = 0;
pub const STATUS_COMMITTED: i64 = 1;
pub const STATUS_ABORTED: i64 = 2;

#[derive(Clone, Debug, Serialize)]
pub struct TxnOutcome {
    pub id: TxnId,
    pub committed: bool,
    /// Objects the transaction wrote, ascending.
    pub touched: Vec<ObjId>,
    /// Why it aborted.
    pub violation: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Admission {
    pub outcomes: Vec<TxnOutcome>,
    /// Entries of committed transactions.
    pub committed: Vec<Entry>,
    /// Entries of aborted transactions.
    pub aborted: Vec<Entry>,
    pub frozen: Vec<ObjId>,
    /// Changed values of transaction-owned fields (constrained fields and
    /// `lastTxnStatus`).
    pub updates: Vec<(ClassId, ObjId, FieldId, Value)>,
}

struct Admitter<'a> {
    program: &'a Program,
    snap: &'a Snapshot,
    seed: u64,
}

impl Admitter<'_> {
    /// Post-tick values of the constrained fields of one object given the
    /// transactional entries targeting it, or the reason they are invalid.
    fn post_state(&self, class: ClassId, row: usize, entries: &[&Entry]) -> Result<Vec<(FieldId, Value)>, String> {
        let info = self.program.class(class);
        let id = self.snap.table(class).ids[row];
        let mut sorted: Vec<&Entry> = entries.to_vec();
        sorted.sort_by(|a, b| a.canonical_cmp(b));
        let reduced: HashMap<u32, Option<Value>> = info
            .txn_effects
            .iter()
            .map(|&e| {
                let group: Vec<&Entry> = sorted.iter().copied().filter(|x| x.effect == e).collect();
                (e, reduce_group(self.program, class, e, &group))
            })
            .collect();
        let lookup = |e: u32| reduced.get(&e).cloned().flatten();
        let mut env = Env::object(self.program, self.snap, class, row, self.seed);
        env.effects = Some(&lookup);
        let mut values = Vec::new();
        for &f in &info.constrained {
            let old = self.snap.table(class).get(row, f);
            let v = match info.rule(f) {
                None => old,
                Some(rule) => match env.eval(rule, &[]) {
                    Ok(v) => v.coerce(&info.state[f as usize].ty),
                    Err(EvalError::Absent(_)) => old,
                    Err(EvalError::Fault(fault)) => {
                        return Err(format!("rule for `{}` on #{id} faulted: {fault}", info.state[f as usize].name))
                    }
                },
            };
            values.push((f, v));
        }
        let mut check = Env::object(self.program, self.snap, class, row, self.seed);
        check.overrides = &values;
        for c in &info.constraints {
            match check.eval_pure(&c.expr, &[]) {
                Ok(Value::Bool(true)) => {}
                Ok(_) => return Err(format!("constraint `{}` violated on #{id}", c.text)),
                Err(fault) => return Err(format!("constraint `{}` faulted on #{id}: {fault}", c.text)),
            }
        }
        Ok(values)
    }
}

/// Runs admission over the transactional entries of one tick. Entries must
/// target live objects.
pub fn admit(program: &Program, snap: &Snapshot, seed: u64, txn_entries: Vec<Entry>) -> Admission {
    let a = Admitter { program, snap, seed };
    let mut out = Admission::default();

    // Baseline: every constrained object with no transactions applied.
    let mut baseline: BTreeMap<ObjId, (ClassId, usize, Vec<(FieldId, Value)>)> = BTreeMap::new();
    let mut frozen: HashSet<ObjId> = HashSet::new();
    for c in program.classes.iter().filter(|c| !c.constraints.is_empty()) {
        let t = snap.table(c.id);
        for row in 0..t.len() {
            match a.post_state(c.id, row, &[]) {
                Ok(vals) => {
                    baseline.insert(t.ids[row], (c.id, row, vals));
                }
                Err(_) => {
                    frozen.insert(t.ids[row]);
                }
            }
        }
    }

    let mut txns: BTreeMap<TxnId, Vec<Entry>> = BTreeMap::new();
    for e in txn_entries {
        let id = e.txn.expect("transactional entry without a txn id");
        txns.entry(id).or_default().push(e);
    }

    let gated = |e: &Entry| {
        let c = program.class(e.class);
        !c.constraints.is_empty() && c.is_txn_effect(e.effect)
    };
    let mut accepted: HashMap<ObjId, Vec<Entry>> = HashMap::new();
    let mut current: HashMap<ObjId, Vec<(FieldId, Value)>> = HashMap::new();
    let mut issuer_status: BTreeMap<ObjId, i64> = BTreeMap::new();
    for (id, entries) in txns {
        let mut touched: Vec<ObjId> = entries.iter().map(|e| e.target).collect();
        touched.sort_unstable();
        touched.dedup();
        let mut violation = None;
        let mut tentative = Vec::new();
        for &o in &touched {
            let mine: Vec<&Entry> = entries.iter().filter(|e| e.target == o && gated(e)).collect();
            if mine.is_empty() {
                continue;
            }
            if frozen.contains(&o) {
                violation = Some(format!("#{o} violates its constraints without any transaction"));
                break;
            }
            let (class, row, _) = &baseline[&o];
            let mut all: Vec<&Entry> = accepted.get(&o).map(|v| v.iter().collect()).unwrap_or_default();
            all.extend(mine);
            match a.post_state(*class, *row, &all) {
                Ok(vals) => tentative.push((o, vals)),
                Err(why) => {
                    violation = Some(why);
                    break;
                }
            }
        }
        let committed = violation.is_none();
        let status = issuer_status.entry(id.issuer).or_insert(STATUS_COMMITTED);
        if committed {
            for (o, vals) in tentative {
                current.insert(o, vals);
            }
            for e in &entries {
                if gated(e) {
                    accepted.entry(e.target).or_default().push(e.clone());
                }
            }
            out.committed.extend(entries);
        } else {
            *status = STATUS_ABORTED;
            out.aborted.extend(entries);
        }
        out.outcomes.push(TxnOutcome {
            id,
            committed,
            touched,
            violation,
        });
    }

    for (o, (class, row, base)) in &baseline {
        let vals = current.get(o).unwrap_or(base);
        let t = snap.table(*class);
        for (f, v) in vals {
            if !t.get(*row, *f).identical(v) {
                out.updates.push((*class, *o, *f, v.clone()));
            }
        }
    }
    for c in &program.classes {
        let Some(f) = c.txn_status else { continue };
        let t = snap.table(c.id);
        for (row, id) in t.ids.iter().enumerate() {
            let v = Value::Int(issuer_status.get(id).copied().unwrap_or(STATUS_NONE));
            if !t.get(row, f).identical(&v) {
                out.updates.push((c.id, *id, f, v));
            }
        }
    }
    let mut frozen: Vec<ObjId> = frozen.into_iter().collect();
    frozen.sort_unstable();
    out.frozen = frozen;
    out
}

/// A constraint that does not hold on a live object.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub object: ObjId,
    pub class: String,
    pub constraint: String,
}

/// Every (object, constraint) pair of a snapshot that evaluates to false
/// or faults.
pub fn check_constraints(program: &Program, snap: &Snapshot, seed: u64) -> Vec<Violation> {
    let mut out = Vec::new();
    for c in program.classes.iter().filter(|c| !c.constraints.is_empty()) {
        let t = snap.table(c.id);
        for row in 0..t.len() {
            let env = Env::object(program, snap, c.id, row, seed);
            for def in &c.constraints {
                if !matches!(env.eval_pure(&def.expr, &[]), Ok(Value::Bool(true))) {
                    out.push(Violation {
                        object: t.ids[row],
                        class: c.name.clone(),
                        constraint: def.text.clone(),
                    });
                }
            }
        }
    }
    out.sort_by_key(|v| v.object);
    out
}

/// Whether a prospective row (for a spawn) satisfies its class constraints.
pub fn row_satisfies(program: &Program, snap: &Snapshot, class: ClassId, id: ObjId, row: &[Value], seed: u64) -> bool {
    let c = program.class(class);
    let overrides: Vec<(FieldId, Value)> = row.iter().cloned().enumerate().map(|(f, v)| (f as FieldId, v)).collect();
    let env = Env {
        program,
        snap,
        class,
        row: None,
        id,
        seed,
        overrides: &overrides,
        effects: None,
    };
    c.constraints
        .iter()
        .all(|def| matches!(env.eval_pure(&def.expr, &[]), Ok(Value::Bool(true))))
}
