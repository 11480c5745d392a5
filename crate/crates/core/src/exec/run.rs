//! Set-at-a-time evaluation of a class plan.
//!
//! A frame is a batch of rows, each an (object, bound locals) tuple. Every
//! step runs over all selected rows at once. A fault is recorded against
//! the row's object and removes that row from further work; the object's
//! outputs are discarded by the caller, so the remaining rows of a faulted
//! object only cost time.

use super::plan::{AccumStep, Block, ClassPlan, Source, Step};
use crate::analyze::{FieldId, LocalId, LocalKind, Program, RExpr, RExprKind, StmtId};
use crate::effects::{entry_value, DestroyReq, EffectBuffer, Entry, SpawnReq, TxnId};
use crate::interp::{empty_local, extent_value};
use crate::lang::ast::BinOp;
use crate::store::{RangeIndex, Snapshot};
use crate::value::{binary, call, rand_value, reduce_values, unary, Builtin, ClassId, Fault, ObjId, Type, Value};
use std::collections::HashMap;
use std::sync::Arc;

/// Joined rows per chunk when a level scans a whole table.
const SCAN_CHUNK_PAIRS: usize = 1 << 16;
/// Outer rows per chunk for index and unnest levels.
const PROBE_CHUNK_ROWS: usize = 1024;

pub(crate) type IndexCache = HashMap<(ClassId, Vec<FieldId>), Arc<RangeIndex>>;

/// Per-node row counts of one execution.
#[derive(Clone, Debug, Default)]
pub(crate) struct Counters {
    pub rows: Vec<u64>,
    /// For join nodes: input rows times source size.
    pub pairs: Vec<u64>,
}

impl Counters {
    pub fn new(nodes: usize) -> Counters {
        Counters {
            rows: vec![0; nodes],
            pairs: vec![0; nodes],
        }
    }

    pub fn add(&mut self, other: &Counters) {
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            *a += b;
        }
        for (a, b) in self.pairs.iter_mut().zip(&other.pairs) {
            *a += b;
        }
    }
}

/// A column of a frame: values shared with the frame that created them,
/// addressed through an optional row map.
#[derive(Clone)]
struct Col {
    vals: Arc<Vec<Option<Value>>>,
    /// Table rows of the referenced objects, for loop variables over a
    /// class extent.
    hints: Option<Arc<Vec<u32>>>,
    map: Option<Arc<Vec<u32>>>,
}

impl Col {
    fn idx(&self, r: u32) -> usize {
        match &self.map {
            Some(m) => m[r as usize] as usize,
            None => r as usize,
        }
    }

    fn get(&self, r: u32) -> Option<&Value> {
        self.vals[self.idx(r)].as_ref()
    }

    fn hint(&self, r: u32) -> Option<u32> {
        self.hints.as_ref().map(|h| h[self.idx(r)])
    }

    fn view(&self, idx: &[u32]) -> Col {
        Col {
            vals: self.vals.clone(),
            hints: self.hints.clone(),
            map: Some(Arc::new(idx.iter().map(|&r| self.idx(r) as u32).collect())),
        }
    }
}

#[derive(Clone)]
struct Frame {
    /// Table row of the object each row belongs to.
    obj: Arc<Vec<u32>>,
    locals: Vec<Option<Col>>,
    /// Open accumulators: each row's row in the frame the loop started from.
    accs: Vec<(LocalId, Arc<Vec<u32>>)>,
}

impl Frame {
    fn len(&self) -> usize {
        self.obj.len()
    }

    /// The rows `idx` of this frame, renumbered from zero.
    fn view(&self, idx: &[u32]) -> Frame {
        Frame {
            obj: Arc::new(idx.iter().map(|&r| self.obj[r as usize]).collect()),
            locals: self.locals.iter().map(|c| c.as_ref().map(|c| c.view(idx))).collect(),
            accs: self
                .accs
                .iter()
                .map(|(a, m)| (*a, Arc::new(idx.iter().map(|&r| m[r as usize]).collect())))
                .collect(),
        }
    }

    /// Binds `local` on `rows`, keeping earlier values elsewhere.
    fn bind(&mut self, local: LocalId, rows: &[u32], vals: Vec<Value>) {
        let n = self.len();
        let mut out: Vec<Option<Value>> = match &self.locals[local as usize] {
            Some(c) => (0..n as u32).map(|r| c.get(r).cloned()).collect(),
            None => vec![None; n],
        };
        for (r, v) in rows.iter().zip(vals) {
            out[*r as usize] = Some(v);
        }
        self.bind_col(local, out, None);
    }

    fn bind_col(&mut self, local: LocalId, vals: Vec<Option<Value>>, hints: Option<Vec<u32>>) {
        self.locals[local as usize] = Some(Col {
            vals: Arc::new(vals),
            hints: hints.map(Arc::new),
            map: None,
        });
    }
}

/// Executes one plan over a contiguous range of the class's rows.
pub(crate) struct Worker<'a> {
    pub program: &'a Program,
    pub snap: &'a Snapshot,
    pub plan: &'a ClassPlan,
    pub seed: u64,
    pub indexes: &'a IndexCache,
    ids: &'a [ObjId],
    pub faults: Vec<(u32, Fault)>,
    faulted: Vec<bool>,
    pub out: EffectBuffer,
    pub counters: Counters,
    collectors: HashMap<LocalId, Vec<(u32, Value)>>,
    txn_site: Option<StmtId>,
}

impl<'a> Worker<'a> {
    pub fn new(program: &'a Program, snap: &'a Snapshot, plan: &'a ClassPlan, seed: u64, indexes: &'a IndexCache) -> Self {
        let ids = &snap.table(plan.class).ids;
        Worker {
            program,
            snap,
            plan,
            seed,
            indexes,
            ids,
            faults: Vec::new(),
            faulted: vec![false; ids.len()],
            out: EffectBuffer::default(),
            counters: Counters::new(plan.nodes.len()),
            collectors: HashMap::new(),
            txn_site: None,
        }
    }

    /// Runs the tick program for the table rows `rows` (ascending).
    pub fn run(&mut self, rows: &[u32], pcs: &[usize]) {
        let plan = self.plan;
        let nlocals = self.program.class(plan.class).body.as_ref().map_or(0, |b| b.locals.len());
        let mut frame = Frame {
            obj: Arc::new(rows.to_vec()),
            locals: vec![None; nlocals],
            accs: Vec::new(),
        };
        let all: Vec<u32> = (0..rows.len() as u32).collect();
        self.counters.rows[plan.scan as usize] += rows.len() as u64;
        self.block(&plan.prelude, &mut frame, &all);
        for (k, (node, seg)) in plan.segments.iter().enumerate() {
            let sel: Vec<u32> = all.iter().copied().filter(|&r| pcs[r as usize] == k).collect();
            if *node != plan.scan {
                self.counters.rows[*node as usize] += sel.len() as u64;
            }
            if !sel.is_empty() {
                self.block(seg, &mut frame, &sel);
            }
        }
    }

    fn fault(&mut self, obj: u32, f: Fault) {
        if !self.faulted[obj as usize] {
            self.faulted[obj as usize] = true;
            self.faults.push((obj, f));
        }
    }

    fn id_of(&self, frame: &Frame, r: u32) -> ObjId {
        self.ids[frame.obj[r as usize] as usize]
    }

    /// Evaluates `e` on `rows`, returning the rows that did not fault and
    /// their values.
    fn eval_ok(&mut self, e: &RExpr, frame: &Frame, rows: &[u32]) -> (Vec<u32>, Vec<Value>) {
        let vals = self.eval(e, frame, rows);
        let mut keep = Vec::with_capacity(rows.len());
        let mut out = Vec::with_capacity(rows.len());
        for (r, v) in rows.iter().zip(vals) {
            if let Some(v) = v {
                keep.push(*r);
                out.push(v);
            }
        }
        (keep, out)
    }

    /// Rows of `rows` on which `e` is true.
    fn select(&mut self, e: &RExpr, frame: &Frame, rows: &[u32]) -> (Vec<u32>, Vec<u32>) {
        let vals = self.eval(e, frame, rows);
        let (mut t, mut f) = (Vec::new(), Vec::new());
        for (r, v) in rows.iter().zip(vals) {
            match v.map(|v| v.as_bool()) {
                Some(Ok(true)) => t.push(*r),
                Some(Ok(false)) => f.push(*r),
                Some(Err(fault)) => self.fault(frame.obj[*r as usize], fault),
                None => {}
            }
        }
        (t, f)
    }

    fn eval(&mut self, e: &RExpr, frame: &Frame, rows: &[u32]) -> Vec<Option<Value>> {
        let snap = self.snap;
        let class = self.plan.class;
        match &e.kind {
            RExprKind::Lit(v) => vec![Some(v.clone()); rows.len()],
            RExprKind::Local(l) => {
                let col = frame.locals[*l as usize].clone();
                rows.iter()
                    .map(|&r| match col.as_ref().and_then(|c| c.get(r)) {
                        Some(v) => Some(v.clone()),
                        None => {
                            self.fault(frame.obj[r as usize], empty_local(self.program, class, *l));
                            None
                        }
                    })
                    .collect()
            }
            RExprKind::This => rows.iter().map(|&r| Some(Value::Ref(Some(self.id_of(frame, r))))).collect(),
            RExprKind::SelfField(f) => {
                let col = &snap.table(class).cols[*f as usize];
                rows.iter().map(|&r| Some(col.get(frame.obj[r as usize] as usize))).collect()
            }
            RExprKind::Field(base, c, f) => {
                let t = snap.table(*c);
                let col = &t.cols[*f as usize];
                if let RExprKind::Local(l) = base.kind {
                    if let Some(lc) = frame.locals[l as usize].as_ref().filter(|lc| lc.hints.is_some()) {
                        return rows.iter().map(|&r| Some(col.get(lc.hint(r).unwrap() as usize))).collect();
                    }
                }
                let bases = self.eval(base, frame, rows);
                rows.iter()
                    .zip(bases)
                    .map(|(&r, b)| {
                        let res = b?.as_ref_id().and_then(|id| {
                            let id = id.ok_or(Fault::DeadReference(None))?;
                            t.row_of(id).map(|row| col.get(row)).ok_or(Fault::DeadReference(Some(id)))
                        });
                        self.lift(frame, r, res)
                    })
                    .collect()
            }
            RExprKind::Effect(_) => rows
                .iter()
                .map(|&r| self.lift(frame, r, Err(Fault::Type("effect read in a tick program".into()))))
                .collect(),
            RExprKind::Extent(c) => {
                let v = extent_value(snap, *c);
                vec![Some(v); rows.len()]
            }
            RExprKind::Unary(op, a) => {
                let vals = self.eval(a, frame, rows);
                rows.iter()
                    .zip(vals)
                    .map(|(&r, v)| {
                        let res = unary(*op, &v?);
                        self.lift(frame, r, res)
                    })
                    .collect()
            }
            RExprKind::Binary(op @ (BinOp::And | BinOp::Or), a, b) => {
                let short = *op == BinOp::Or;
                let left = self.eval(a, frame, rows);
                let mut out: Vec<Option<Value>> = Vec::with_capacity(rows.len());
                let mut need = Vec::new();
                let mut need_pos = Vec::new();
                for (i, (&r, v)) in rows.iter().zip(left).enumerate() {
                    match v.map(|v| v.as_bool()) {
                        Some(Ok(l)) if l == short => out.push(Some(Value::Bool(l))),
                        Some(Ok(_)) => {
                            out.push(None);
                            need.push(r);
                            need_pos.push(i);
                        }
                        Some(Err(f)) => {
                            self.fault(frame.obj[r as usize], f);
                            out.push(None);
                        }
                        None => out.push(None),
                    }
                }
                if !need.is_empty() {
                    let right = self.eval(b, frame, &need);
                    for ((i, &r), v) in need_pos.into_iter().zip(&need).zip(right) {
                        out[i] = match v.map(|v| v.as_bool()) {
                            Some(Ok(x)) => Some(Value::Bool(x)),
                            Some(Err(f)) => {
                                self.fault(frame.obj[r as usize], f);
                                None
                            }
                            None => None,
                        };
                    }
                }
                out
            }
            RExprKind::Binary(op, a, b) => {
                let left = self.eval(a, frame, rows);
                let (sub, pos): (Vec<u32>, Vec<usize>) = rows
                    .iter()
                    .zip(&left)
                    .enumerate()
                    .filter(|(_, (_, v))| v.is_some())
                    .map(|(i, (&r, _))| (r, i))
                    .unzip();
                let right = self.eval(b, frame, &sub);
                let mut out = vec![None; rows.len()];
                for ((i, &r), rv) in pos.into_iter().zip(&sub).zip(right) {
                    if let Some(rv) = rv {
                        let res = binary(*op, left[i].as_ref().unwrap(), &rv);
                        out[i] = self.lift(frame, r, res);
                    }
                }
                out
            }
            RExprKind::Call(Builtin::Rand, _, site) => rows
                .iter()
                .map(|&r| Some(Value::Num(rand_value(self.seed, snap.tick, self.id_of(frame, r), *site))))
                .collect(),
            RExprKind::Call(f, args, _) => {
                let mut cols: Vec<Vec<Option<Value>>> = Vec::with_capacity(args.len());
                let mut live: Vec<u32> = rows.to_vec();
                let mut pos: Vec<usize> = (0..rows.len()).collect();
                // Arguments evaluate left to right; a faulted row skips the rest.
                for a in args {
                    let vals = self.eval(a, frame, &live);
                    let mut full = vec![None; rows.len()];
                    let (mut l2, mut p2) = (Vec::new(), Vec::new());
                    for ((r, p), v) in live.iter().zip(&pos).zip(vals) {
                        if v.is_some() {
                            l2.push(*r);
                            p2.push(*p);
                        }
                        full[*p] = v;
                    }
                    cols.push(full);
                    live = l2;
                    pos = p2;
                }
                let mut out = vec![None; rows.len()];
                for (r, p) in live.into_iter().zip(pos) {
                    let argv: Vec<Value> = cols.iter().map(|c| c[p].clone().unwrap()).collect();
                    let res = call(*f, &argv);
                    out[p] = self.lift(frame, r, res);
                }
                out
            }
        }
    }

    fn lift(&mut self, frame: &Frame, r: u32, res: Result<Value, Fault>) -> Option<Value> {
        match res {
            Ok(v) => Some(v),
            Err(f) => {
                self.fault(frame.obj[r as usize], f);
                None
            }
        }
    }

    fn count(&mut self, node: u32, n: usize) {
        self.counters.rows[node as usize] += n as u64;
    }

    fn block(&mut self, block: &Block, frame: &mut Frame, rows: &[u32]) {
        let mut rows = rows.to_vec();
        for step in &block.0 {
            if rows.is_empty() {
                return;
            }
            rows = self.step(step, frame, rows);
        }
    }

    /// Runs one step; returns the rows that continue to the next one.
    fn step(&mut self, step: &Step, frame: &mut Frame, rows: Vec<u32>) -> Vec<u32> {
        let program = self.program;
        match step {
            Step::Let { node, local, expr } => {
                let (keep, vals) = self.eval_ok(expr, frame, &rows);
                self.count(*node, keep.len());
                frame.bind(*local, &keep, vals);
                keep
            }
            Step::Emit {
                node,
                stmt,
                target,
                class,
                effect,
                value,
            } => {
                let (rows, targets) = match target {
                    None => {
                        let t = rows.iter().map(|&r| self.id_of(frame, r)).collect();
                        (rows, t)
                    }
                    Some(t) => {
                        let (keep, vals) = self.eval_ok(t, frame, &rows);
                        let mut k2 = Vec::new();
                        let mut ids = Vec::new();
                        for (r, v) in keep.into_iter().zip(vals) {
                            match v.as_ref_id().and_then(|o| o.ok_or(Fault::DeadReference(None))) {
                                Ok(id) => {
                                    k2.push(r);
                                    ids.push(id);
                                }
                                Err(f) => self.fault(frame.obj[r as usize], f),
                            }
                        }
                        (k2, ids)
                    }
                };
                let vals = self.eval(value, frame, &rows);
                let info = &program.class(*class).effects[*effect as usize];
                let mut keep = Vec::with_capacity(rows.len());
                for ((r, to), v) in rows.into_iter().zip(targets).zip(vals) {
                    let Some(v) = v else { continue };
                    let source = self.id_of(frame, r);
                    self.out.entries.push(Entry {
                        class: *class,
                        effect: *effect,
                        target: to,
                        source,
                        stmt: *stmt,
                        value: entry_value(info.combinator, &info.ty, v),
                        txn: self.txn_site.map(|site| TxnId { issuer: source, site }),
                    });
                    keep.push(r);
                }
                self.count(*node, keep.len());
                keep
            }
            Step::AccAssign { acc, value } => {
                let (keep, vals) = self.eval_ok(value, frame, &rows);
                let info = &program.class(self.plan.class).body.as_ref().unwrap().locals[*acc as usize];
                let LocalKind::Accumulator(comb) = info.kind else {
                    unreachable!("assignment to a non-accumulator")
                };
                let base = frame.accs.iter().find(|(a, _)| a == acc).map(|(_, m)| m.clone());
                if let (Some(base), Some(coll)) = (base, self.collectors.get_mut(acc)) {
                    for (r, v) in keep.iter().zip(vals) {
                        coll.push((base[*r as usize], entry_value(comb, &info.ty, v)));
                    }
                }
                keep
            }
            Step::Branch {
                then_node,
                else_node,
                cond,
                then,
                els,
            } => {
                let (t, f) = self.select(cond, frame, &rows);
                self.count(*then_node, t.len());
                self.count(*else_node, f.len());
                self.block(then, frame, &t);
                self.block(els, frame, &f);
                self.alive(frame, rows)
            }
            Step::Accum(a) => {
                self.accum(a, frame, &rows);
                self.alive(frame, rows)
            }
            Step::Atomic { site, body } => {
                let prev = self.txn_site.replace(*site);
                self.block(body, frame, &rows);
                self.txn_site = prev;
                self.alive(frame, rows)
            }
            Step::Spawn { node, stmt, class, inits } => {
                let info = program.class(*class);
                let defaults: Vec<Value> = info.state.iter().map(|f| f.init.clone()).collect();
                let mut built: Vec<Vec<Value>> = vec![defaults; rows.len()];
                let mut ok = vec![true; rows.len()];
                for (f, e) in inits {
                    let live: Vec<u32> = rows.iter().zip(&ok).filter(|(_, k)| **k).map(|(r, _)| *r).collect();
                    let pos: Vec<usize> = (0..rows.len()).filter(|i| ok[*i]).collect();
                    let vals = self.eval(e, frame, &live);
                    for (p, v) in pos.into_iter().zip(vals) {
                        match v {
                            Some(v) => built[p][*f as usize] = v.coerce(&info.state[*f as usize].ty),
                            None => ok[p] = false,
                        }
                    }
                }
                let mut keep = Vec::new();
                for ((r, row), k) in rows.into_iter().zip(built).zip(ok) {
                    if k {
                        self.out.spawns.push(SpawnReq {
                            class: *class,
                            source: self.id_of(frame, r),
                            stmt: *stmt,
                            row,
                        });
                        keep.push(r);
                    }
                }
                self.count(*node, keep.len());
                keep
            }
            Step::Destroy { node, stmt, target } => {
                let Type::Ref(class) = target.ty else {
                    unreachable!("destroy of a non-reference")
                };
                let (keep, vals) = self.eval_ok(target, frame, &rows);
                let mut out = Vec::new();
                for (r, v) in keep.into_iter().zip(vals) {
                    match v.as_ref_id().and_then(|o| o.ok_or(Fault::DeadReference(None))) {
                        Ok(t) => {
                            self.out.destroys.push(DestroyReq {
                                class,
                                target: t,
                                source: self.id_of(frame, r),
                                stmt: *stmt,
                            });
                            out.push(r);
                        }
                        Err(f) => self.fault(frame.obj[r as usize], f),
                    }
                }
                self.count(*node, out.len());
                out
            }
        }
    }

    fn alive(&self, frame: &Frame, rows: Vec<u32>) -> Vec<u32> {
        rows.into_iter().filter(|&r| !self.faulted[frame.obj[r as usize] as usize]).collect()
    }

    fn accum(&mut self, a: &AccumStep, frame: &mut Frame, rows: &[u32]) {
        let prev = self.collectors.insert(a.acc, Vec::new());
        debug_assert!(prev.is_none(), "accumulator reentered");
        for d in &a.discard {
            self.collectors.remove(d);
        }
        let chunk = match &a.levels[0].source {
            Source::Scan(c) => (SCAN_CHUNK_PAIRS / self.snap.table(*c).len().max(1)).max(1),
            _ => PROBE_CHUNK_ROWS,
        };
        for part in rows.chunks(chunk) {
            let mut cur = frame.view(part);
            cur.accs.push((a.acc, Arc::new(part.to_vec())));
            let mut live: Vec<u32> = (0..part.len() as u32).collect();
            for level in &a.levels {
                if live.is_empty() {
                    break;
                }
                let (next, pairs) = self.expand(level, &cur, &live);
                cur = next;
                let all: Vec<u32> = (0..cur.len() as u32).collect();
                live = all;
                for f in &level.filters {
                    live = self.select(f, &cur, &live).0;
                }
                if live.len() < cur.len() {
                    cur = cur.view(&live);
                    live = (0..cur.len() as u32).collect();
                }
                self.counters.rows[level.node as usize] += live.len() as u64;
                self.counters.pairs[level.node as usize] += pairs;
            }
            if let Some((node, cond)) = &a.residual {
                live = self.select(cond, &cur, &live).0;
                self.count(*node, live.len());
            }
            self.count(a.agg_node, live.len());
            self.block(&a.body, &mut cur, &live);
        }
        let collected = self.collectors.remove(&a.acc).unwrap_or_default();
        let mut groups: HashMap<u32, Vec<Value>> = HashMap::new();
        for (r, v) in collected {
            groups.entry(r).or_default().push(v);
        }
        let mut vals: Vec<Option<Value>> = match &frame.locals[a.acc as usize] {
            Some(c) => (0..frame.len() as u32).map(|r| c.get(r).cloned()).collect(),
            None => vec![None; frame.len()],
        };
        for &r in rows {
            let g = groups.remove(&r).unwrap_or_default();
            vals[r as usize] = reduce_values(a.combinator, &a.acc_ty, g);
        }
        frame.bind_col(a.acc, vals, None);
        let rows = self.alive(frame, rows.to_vec());
        self.block(&a.after, frame, &rows);
    }

    /// Joins the rows `live` of `cur` with a level's source. Returns the new
    /// frame and the number of (row, element) pairs considered.
    fn expand(&mut self, level: &super::plan::Level, cur: &Frame, live: &[u32]) -> (Frame, u64) {
        let mut idx: Vec<u32> = Vec::new();
        let mut vals: Vec<Option<Value>> = Vec::new();
        let mut hints: Vec<u32> = Vec::new();
        let mut pairs = 0u64;
        let has_hints;
        match &level.source {
            Source::Scan(c) => {
                has_hints = true;
                let t = self.snap.table(*c);
                let n = t.len() as u32;
                pairs = live.len() as u64 * n as u64;
                idx.reserve(live.len() * n as usize);
                for &r in live {
                    for row in 0..n {
                        idx.push(r);
                        vals.push(Some(Value::Ref(Some(t.ids[row as usize]))));
                        hints.push(row);
                    }
                }
            }
            Source::Index { class, dims, lo, hi } => {
                has_hints = true;
                let t = self.snap.table(*class);
                let ix = self.indexes[&(*class, dims.clone())].clone();
                let mut los = vec![vec![f64::NEG_INFINITY; live.len()]; dims.len()];
                let mut his = vec![vec![f64::INFINITY; live.len()]; dims.len()];
                let mut ok = vec![true; live.len()];
                for d in 0..dims.len() {
                    for (bounds, out, is_lo) in [(&lo[d], &mut los[d], true), (&hi[d], &mut his[d], false)] {
                        for e in bounds {
                            let v = self.eval(e, cur, live);
                            for (i, v) in v.into_iter().enumerate() {
                                match v.map(|v| v.as_f64()) {
                                    Some(Ok(x)) if x.is_nan() => out[i] = f64::NAN,
                                    Some(Ok(_)) if out[i].is_nan() => {}
                                    Some(Ok(x)) => out[i] = if is_lo { out[i].max(x) } else { out[i].min(x) },
                                    _ => ok[i] = false,
                                }
                            }
                        }
                    }
                }
                let mut lo_box = vec![0.0; dims.len()];
                let mut hi_box = vec![0.0; dims.len()];
                for (i, &r) in live.iter().enumerate() {
                    pairs += t.len() as u64;
                    if !ok[i] {
                        continue;
                    }
                    for d in 0..dims.len() {
                        lo_box[d] = los[d][i];
                        hi_box[d] = his[d][i];
                    }
                    if lo_box.iter().chain(&hi_box).any(|x| x.is_nan()) {
                        continue;
                    }
                    for id in ix.query(&lo_box, &hi_box) {
                        idx.push(r);
                        vals.push(Some(Value::Ref(Some(id))));
                        hints.push(t.row_of(id).expect("index returned a dead row") as u32);
                    }
                }
            }
            Source::Unnest(e) => {
                has_hints = false;
                let sets = self.eval(e, cur, live);
                for (&r, s) in live.iter().zip(sets) {
                    let Some(s) = s else { continue };
                    match s.as_set() {
                        Ok(set) => {
                            pairs += set.len() as u64;
                            for v in set.iter() {
                                idx.push(r);
                                vals.push(Some(v.clone()));
                            }
                        }
                        Err(f) => self.fault(cur.obj[r as usize], f),
                    }
                }
            }
        }
        let mut next = cur.view(&idx);
        next.bind_col(level.var, vals, has_hints.then_some(hints));
        (next, pairs)
    }
}
