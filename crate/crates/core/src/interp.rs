//! Object-at-a-time reference interpreter.
//!
//! Runs each object's tick program directly: statements in order, accum
//! loops as literal loops over their source in ascending element order.
//! It is the oracle the relational engine is checked against, so it stays
//! deliberately simple. [`Env`] is the scalar evaluator it is built on; the
//! update phase uses it for rules, constraints and breakpoint conditions.

use crate::analyze::{ClassBody, EffectId, FieldId, LocalId, LocalKind, Program, RExpr, RExprKind, RStmt};
use crate::effects::{entry_value, DestroyReq, EffectBuffer, Entry, FaultRecord, SpawnReq, TxnId};
use crate::lang::ast::BinOp;
use crate::store::Snapshot;
use crate::value::{binary, call, rand_value, reduce_values, unary, Builtin, ClassId, Fault, ObjId, Type, Value};
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

/// Why a scalar evaluation produced no value.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalError {
    Fault(Fault),
    /// An effect with no assignments and no identity was read.
    Absent(EffectId),
}

impl From<Fault> for EvalError {
    fn from(f: Fault) -> Self {
        EvalError::Fault(f)
    }
}

/// A local slot. `None` is unbound, or an accumulator whose loop assigned
/// nothing and whose combinator has no identity.
pub type Slot = Option<Value>;

/// Evaluation context for one object.
pub struct Env<'a> {
    pub program: &'a Program,
    pub snap: &'a Snapshot,
    pub class: ClassId,
    /// Row in the class table, absent for rows not yet in the store.
    pub row: Option<usize>,
    pub id: ObjId,
    pub seed: u64,
    /// Self-field values that shadow the snapshot.
    pub overrides: &'a [(FieldId, Value)],
    /// Reduced effect values, for update rules.
    pub effects: Option<&'a dyn Fn(EffectId) -> Option<Value>>,
}

impl<'a> Env<'a> {
    pub fn object(program: &'a Program, snap: &'a Snapshot, class: ClassId, row: usize, seed: u64) -> Env<'a> {
        Env {
            program,
            snap,
            class,
            row: Some(row),
            id: snap.table(class).ids[row],
            seed,
            overrides: &[],
            effects: None,
        }
    }

    fn self_field(&self, f: FieldId) -> Result<Value, Fault> {
        if let Some((_, v)) = self.overrides.iter().find(|(g, _)| *g == f) {
            return Ok(v.clone());
        }
        match self.row {
            Some(r) => Ok(self.snap.table(self.class).get(r, f)),
            None => Err(Fault::Type(format!("field {f} has no value"))),
        }
    }

    pub fn eval(&self, e: &RExpr, locals: &[Slot]) -> Result<Value, EvalError> {
        Ok(match &e.kind {
            RExprKind::Lit(v) => v.clone(),
            RExprKind::Local(l) => read_local(self.program, self.class, locals, *l)?,
            RExprKind::This => Value::Ref(Some(self.id)),
            RExprKind::SelfField(f) => self.self_field(*f)?,
            RExprKind::Field(base, c, f) => {
                let id = self.eval(base, locals)?.as_ref_id()?;
                read_field(self.snap, *c, *f, id)?
            }
            RExprKind::Effect(x) => {
                let get = self.effects.ok_or_else(|| Fault::Type("effect read outside an update rule".into()))?;
                get(*x).ok_or(EvalError::Absent(*x))?
            }
            RExprKind::Extent(c) => extent_value(self.snap, *c),
            RExprKind::Unary(op, a) => unary(*op, &self.eval(a, locals)?)?,
            RExprKind::Binary(op @ (BinOp::And | BinOp::Or), a, b) => {
                let l = self.eval(a, locals)?.as_bool()?;
                if l == (*op == BinOp::Or) {
                    Value::Bool(l)
                } else {
                    Value::Bool(self.eval(b, locals)?.as_bool()?)
                }
            }
            RExprKind::Binary(op, a, b) => binary(*op, &self.eval(a, locals)?, &self.eval(b, locals)?)?,
            RExprKind::Call(Builtin::Rand, _, site) => Value::Num(rand_value(self.seed, self.snap.tick, self.id, *site)),
            RExprKind::Call(f, args, _) => {
                let vals = args.iter().map(|a| self.eval(a, locals)).collect::<Result<Vec<_>, _>>()?;
                call(*f, &vals)?
            }
        })
    }

    /// Evaluates an expression that cannot read effects.
    pub fn eval_pure(&self, e: &RExpr, locals: &[Slot]) -> Result<Value, Fault> {
        self.eval(e, locals).map_err(|err| match err {
            EvalError::Fault(f) => f,
            EvalError::Absent(x) => Fault::Type(format!("effect {x} read outside an update rule")),
        })
    }
}

pub(crate) fn read_local(program: &Program, class: ClassId, locals: &[Slot], l: LocalId) -> Result<Value, Fault> {
    match &locals[l as usize] {
        Some(v) => Ok(v.clone()),
        None => Err(empty_local(program, class, l)),
    }
}

pub(crate) fn empty_local(program: &Program, class: ClassId, l: LocalId) -> Fault {
    let body = program.class(class).body.as_ref();
    match body.map(|b| b.locals[l as usize].kind) {
        Some(LocalKind::Accumulator(c)) => Fault::EmptyAccumulator(c),
        _ => Fault::Type(format!("local {l} is unbound")),
    }
}

pub(crate) fn read_field(snap: &Snapshot, class: ClassId, field: FieldId, id: Option<ObjId>) -> Result<Value, Fault> {
    let id = id.ok_or(Fault::DeadReference(None))?;
    let t = snap.table(class);
    let row = t.row_of(id).ok_or(Fault::DeadReference(Some(id)))?;
    Ok(t.get(row, field))
}

pub(crate) fn extent_value(snap: &Snapshot, class: ClassId) -> Value {
    let set: BTreeSet<Value> = snap.table(class).ids.iter().map(|id| Value::Ref(Some(*id))).collect();
    Value::Set(Arc::new(set))
}

/// The order objects are visited in. Reduction is canonical, so the order
/// cannot change any outcome; `Descending` exists to demonstrate that.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    Ascending,
    Descending,
}

/// Tick program of every program counter value of a class body.
pub(crate) fn programs_by_pc(body: &ClassBody) -> Vec<Vec<RStmt>> {
    (0..body.segments.len().max(1)).map(|pc| body.tick_program(pc)).collect()
}

pub(crate) fn pc_of(program: &Program, snap: &Snapshot, class: ClassId, row: usize) -> usize {
    match program.class(class).pc {
        Some(pc) => match snap.table(class).get(row, pc.state) {
            Value::Int(k) if k >= 0 => k as usize,
            _ => usize::MAX,
        },
        None => 0,
    }
}

/// Runs the effect phase of one tick object by object.
pub fn interpret_effect_phase(program: &Program, snap: &Snapshot, seed: u64, order: Order) -> EffectBuffer {
    let mut out = EffectBuffer::default();
    let mut objects: Vec<(ObjId, ClassId, usize)> = Vec::new();
    let mut programs: HashMap<ClassId, Vec<Vec<RStmt>>> = HashMap::new();
    for c in &program.classes {
        let Some(body) = &c.body else { continue };
        programs.insert(c.id, programs_by_pc(body));
        let t = snap.table(c.id);
        objects.extend(t.ids.iter().enumerate().map(|(row, id)| (*id, c.id, row)));
    }
    objects.sort_unstable();
    if order == Order::Descending {
        objects.reverse();
    }
    for (id, class, row) in objects {
        let body = program.class(class).body.as_ref().unwrap();
        let progs = &programs[&class];
        let pc = pc_of(program, snap, class, row);
        let empty = Vec::new();
        let stmts = progs.get(pc).unwrap_or(&empty);
        let mut run = Run {
            env: Env::object(program, snap, class, row, seed),
            locals: vec![None; body.locals.len()],
            accs: HashMap::new(),
            txn: None,
            out: EffectBuffer::default(),
        };
        match run.block(stmts) {
            Ok(()) => out.append(run.out),
            Err(fault) => out.faults.push(FaultRecord {
                class,
                object: id,
                fault,
            }),
        }
    }
    out.canonicalize();
    out
}

struct Run<'a> {
    env: Env<'a>,
    locals: Vec<Slot>,
    accs: HashMap<LocalId, Vec<Value>>,
    txn: Option<TxnId>,
    out: EffectBuffer,
}

impl Run<'_> {
    fn eval(&self, e: &RExpr) -> Result<Value, Fault> {
        self.env.eval_pure(e, &self.locals)
    }

    fn block(&mut self, stmts: &[RStmt]) -> Result<(), Fault> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &RStmt) -> Result<(), Fault> {
        let program = self.env.program;
        match s {
            RStmt::Let { local, value } => {
                self.locals[*local as usize] = Some(self.eval(value)?);
            }
            RStmt::Emit {
                id,
                target,
                class,
                effect,
                value,
            } => {
                let to = match target {
                    None => self.env.id,
                    Some(t) => self.eval(t)?.as_ref_id()?.ok_or(Fault::DeadReference(None))?,
                };
                let info = &program.class(*class).effects[*effect as usize];
                let v = entry_value(info.combinator, &info.ty, self.eval(value)?);
                self.out.entries.push(Entry {
                    class: *class,
                    effect: *effect,
                    target: to,
                    source: self.env.id,
                    stmt: *id,
                    value: v,
                    txn: self.txn,
                });
            }
            RStmt::AccAssign { acc, value, .. } => {
                let info = &program.class(self.env.class).body.as_ref().unwrap().locals[*acc as usize];
                let LocalKind::Accumulator(comb) = info.kind else {
                    return Err(Fault::Type("assignment to a non-accumulator".into()));
                };
                let v = entry_value(comb, &info.ty, self.eval(value)?);
                self.accs.entry(*acc).or_default().push(v);
            }
            RStmt::If { cond, then, els } => {
                if self.eval(cond)?.as_bool()? {
                    self.block(then)?;
                } else {
                    self.block(els)?;
                }
            }
            RStmt::Accum {
                acc,
                combinator,
                acc_ty,
                var,
                source,
                body,
                after,
                ..
            } => {
                self.accs.insert(*acc, Vec::new());
                let elems: Vec<Value> = match &source.kind {
                    RExprKind::Extent(c) => {
                        self.env.snap.table(*c).ids.iter().map(|id| Value::Ref(Some(*id))).collect()
                    }
                    _ => self.eval(source)?.as_set()?.iter().cloned().collect(),
                };
                for e in elems {
                    self.locals[*var as usize] = Some(e);
                    self.block(body)?;
                }
                let vals = self.accs.remove(acc).unwrap_or_default();
                self.locals[*acc as usize] = reduce_values(*combinator, acc_ty, vals);
                self.block(after)?;
            }
            RStmt::Atomic { site, body } => {
                self.txn = Some(TxnId {
                    issuer: self.env.id,
                    site: *site,
                });
                let r = self.block(body);
                self.txn = None;
                r?;
            }
            RStmt::Spawn { id, class, inits } => {
                let info = program.class(*class);
                let mut row: Vec<Value> = info.state.iter().map(|f| f.init.clone()).collect();
                for (f, e) in inits {
                    row[*f as usize] = self.eval(e)?.coerce(&info.state[*f as usize].ty);
                }
                self.out.spawns.push(SpawnReq {
                    class: *class,
                    source: self.env.id,
                    stmt: *id,
                    row,
                });
            }
            RStmt::Destroy { id, target } => {
                let Type::Ref(class) = target.ty else {
                    return Err(Fault::Type("destroy of a non-reference".into()));
                };
                let t = self.eval(target)?.as_ref_id()?.ok_or(Fault::DeadReference(None))?;
                self.out.destroys.push(DestroyReq {
                    class,
                    target: t,
                    source: self.env.id,
                    stmt: *id,
                });
            }
            RStmt::Wait => return Err(Fault::Type("waitNextTick survived lowering".into())),
        }
        Ok(())
    }
}
