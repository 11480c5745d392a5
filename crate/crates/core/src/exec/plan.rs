//! Physical plans.
//!
//! A class's tick program compiles to a tree of relational operators over
//! a frame: one row per (object, bound loop variables). Straight-line code
//! becomes `Map` and `EffectEmit`, conditionals become complementary
//! `Select`s, and an accum loop becomes a `ThetaJoin` of the frame with its
//! source followed by a `GroupAggregate` back onto the frame rows.
//!
//! The optimizer rewrites accum loops only:
//!
//! * selection pushdown: a loop body that is a single `if` without `else`
//!   turns its condition into join filters. The full condition is still
//!   evaluated on the surviving pairs, so a filter only has to be a sound
//!   pre-filter. Filters are drawn from the longest prefix of the `&&`
//!   chain whose conjuncts cannot fault; pruning on a later conjunct could
//!   hide a fault the object-at-a-time reading would raise.
//! * index binding: prefix conjuncts comparing a number field of an extent
//!   variable with an expression of outer values form a box, answered by a
//!   range index instead of a scan.
//! * join ordering: a loop whose body is exactly one inner loop (with an
//!   empty second block and a source independent of the outer variable)
//!   is a three-way join; its two loop variables can be bound in either
//!   order because accumulators reduce canonically. The inner source must
//!   be unable to fault, since the rewrite evaluates it even when the outer
//!   source is empty.

use crate::analyze::{EffectId, FieldId, LocalId, LocalKind, Program, RExpr, RExprKind, RStmt, StmtId};
use crate::lang::ast::{BinOp, Combinator, UnOp};
use crate::value::{ClassId, Type};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// An assumed workload shape a plan is optimized for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Profile {
    /// Unoptimized: scans in source order, conditions evaluated in place.
    Logical,
    /// Objects spread out: box predicates are highly selective.
    Uniform,
    /// Objects bunched together: box predicates select almost everything.
    Clustered,
}

impl Profile {
    pub const SHIPPED: [Profile; 2] = [Profile::Uniform, Profile::Clustered];

    /// Assumed fraction of pairs passing a box predicate.
    pub fn box_selectivity(self) -> f64 {
        match self {
            Profile::Uniform => 0.01,
            Profile::Clustered | Profile::Logical => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Logical => "logical",
            Profile::Uniform => "uniform",
            Profile::Clustered => "clustered",
        }
    }

    pub fn from_name(s: &str) -> Option<Profile> {
        match s {
            "logical" => Some(Profile::Logical),
            "uniform" => Some(Profile::Uniform),
            "clustered" => Some(Profile::Clustered),
            _ => None,
        }
    }
}

/// Assumed fraction of pairs passing any other conjunct.
pub const OTHER_SELECTIVITY: f64 = 0.25;
/// Extent size assumed when ranking join orders.
const ASSUMED_EXTENT: f64 = 1000.0;
/// Set size assumed for non-extent loop sources.
const ASSUMED_SET: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Op {
    TableScan,
    IndexRangeScan,
    Unnest,
    Select,
    ThetaJoin,
    GroupAggregate,
    Map,
    EffectEmit,
    Spawn,
    Destroy,
}

/// Predicate shape of a join, for comparing observed selectivity with a
/// profile's assumption.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct JoinShape {
    pub has_box: bool,
    pub others: u32,
}

impl JoinShape {
    pub fn assumed(&self, profile: Profile) -> f64 {
        let b = if self.has_box { profile.box_selectivity() } else { 1.0 };
        b * OTHER_SELECTIVITY.powi(self.others as i32)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanNode {
    pub id: u32,
    pub op: Op,
    pub label: String,
    pub children: Vec<u32>,
    pub join: Option<JoinShape>,
}

#[derive(Clone, Debug, Default)]
pub struct Block(pub Vec<Step>);

#[derive(Clone, Debug)]
pub enum Step {
    Let {
        node: u32,
        local: LocalId,
        expr: RExpr,
    },
    Emit {
        node: u32,
        stmt: StmtId,
        target: Option<RExpr>,
        class: ClassId,
        effect: EffectId,
        value: RExpr,
    },
    AccAssign {
        acc: LocalId,
        value: RExpr,
    },
    Branch {
        then_node: u32,
        else_node: u32,
        cond: RExpr,
        then: Block,
        els: Block,
    },
    Accum(Box<AccumStep>),
    Atomic {
        site: StmtId,
        body: Block,
    },
    Spawn {
        node: u32,
        stmt: StmtId,
        class: ClassId,
        inits: Vec<(FieldId, RExpr)>,
    },
    Destroy {
        node: u32,
        stmt: StmtId,
        target: RExpr,
    },
}

#[derive(Clone, Debug)]
pub struct AccumStep {
    pub acc: LocalId,
    pub combinator: Combinator,
    pub acc_ty: Type,
    pub agg_node: u32,
    pub levels: Vec<Level>,
    /// Re-checked on the joined rows after the last level.
    pub residual: Option<(u32, RExpr)>,
    /// Accumulators of flattened inner loops: assignments to them are
    /// evaluated (they may fault) and their values dropped.
    pub discard: Vec<LocalId>,
    pub body: Block,
    pub after: Block,
}

#[derive(Clone, Debug)]
pub struct Level {
    pub node: u32,
    pub var: LocalId,
    pub source: Source,
    /// Conjuncts true on every row the full condition accepts.
    pub filters: Vec<RExpr>,
}

#[derive(Clone, Debug)]
pub enum Source {
    Scan(ClassId),
    /// Range query over number fields; per dimension, the box bound is the
    /// max of `lo` and the min of `hi` (inclusive).
    Index {
        class: ClassId,
        dims: Vec<FieldId>,
        lo: Vec<Vec<RExpr>>,
        hi: Vec<Vec<RExpr>>,
    },
    Unnest(RExpr),
}

/// Compiled plan of one class under one profile.
#[derive(Clone, Debug)]
pub struct ClassPlan {
    pub class: ClassId,
    pub profile: Profile,
    pub nodes: Vec<PlanNode>,
    pub scan: u32,
    /// Handler preludes, run on every object.
    pub prelude: Block,
    /// Per program counter value: the `Select` node and the segment body.
    pub segments: Vec<(u32, Block)>,
}

impl ClassPlan {
    /// Tree-shaped JSON dump: `EffectEmit`/`Spawn`/`Destroy` roots whose
    /// children lead back to the table scan. A subtree already printed is
    /// referenced by id. `rows` adds observed cardinalities.
    pub fn to_json(&self, program: &Program, rows: Option<&[f64]>) -> serde_json::Value {
        let mut printed = vec![false; self.nodes.len()];
        let roots: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .filter(|n| matches!(n.op, Op::EffectEmit | Op::Spawn | Op::Destroy))
            .map(|n| self.node_json(n.id, rows, &mut printed))
            .collect();
        json!({
            "class": program.class(self.class).name,
            "profile": self.profile.name(),
            "roots": roots,
        })
    }

    fn node_json(&self, id: u32, rows: Option<&[f64]>, printed: &mut [bool]) -> serde_json::Value {
        let n = &self.nodes[id as usize];
        if printed[id as usize] {
            return json!({ "ref": id });
        }
        printed[id as usize] = true;
        let children: Vec<serde_json::Value> = n.children.iter().map(|c| self.node_json(*c, rows, printed)).collect();
        let mut o = json!({ "id": id, "op": n.op, "label": n.label, "children": children });
        if let Some(r) = rows {
            o["rows"] = json!(r.get(id as usize).copied().unwrap_or(0.0));
        }
        o
    }

    /// Structural identity, used to drop duplicate plans from a set.
    pub fn signature(&self) -> String {
        self.nodes
            .iter()
            .map(|n| format!("{:?}:{}:{:?};", n.op, n.label, n.children))
            .collect()
    }

    pub fn join_nodes(&self) -> impl Iterator<Item = &PlanNode> {
        self.nodes.iter().filter(|n| n.join.is_some())
    }
}

/// Compiles the tick program of a class with a body.
pub fn compile_class(program: &Program, class: ClassId, profile: Profile) -> ClassPlan {
    let info = program.class(class);
    let body = info.body.as_ref().expect("class without a body has no plan");
    let mut c = Compiler {
        program,
        class,
        profile,
        nodes: Vec::new(),
    };
    let scan = c.node(Op::TableScan, format!("{}_state", info.name), vec![], None);
    let handlers: Vec<RStmt> = body
        .handlers
        .iter()
        .map(|h| RStmt::If {
            cond: h.cond.clone(),
            then: h.body.clone(),
            els: Vec::new(),
        })
        .collect();
    let prelude = c.block(&handlers, scan);
    let mut segments = Vec::new();
    for (k, seg) in body.segments.iter().enumerate() {
        let input = if info.pc.is_some() {
            c.node(Op::Select, format!("{} == {k}", crate::analyze::PC_FIELD), vec![scan], None)
        } else {
            scan
        };
        segments.push((input, c.block(seg, input)));
    }
    ClassPlan {
        class,
        profile,
        nodes: c.nodes,
        scan,
        prelude,
        segments,
    }
}

struct Compiler<'a> {
    program: &'a Program,
    class: ClassId,
    profile: Profile,
    nodes: Vec<PlanNode>,
}

/// A conjunct `var.field op bound` usable as one side of a box.
struct BoxTerm {
    var: LocalId,
    class: ClassId,
    field: FieldId,
    lo: Option<RExpr>,
    hi: Option<RExpr>,
}

impl Compiler<'_> {
    fn node(&mut self, op: Op, label: String, children: Vec<u32>, join: Option<JoinShape>) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(PlanNode {
            id,
            op,
            label,
            children,
            join,
        });
        id
    }

    fn local_kind(&self, l: LocalId) -> LocalKind {
        self.program.class(self.class).body.as_ref().unwrap().locals[l as usize].kind
    }

    fn local_name(&self, l: LocalId) -> String {
        self.program.class(self.class).body.as_ref().unwrap().locals[l as usize].name.clone()
    }

    fn block(&mut self, stmts: &[RStmt], mut input: u32) -> Block {
        let mut steps = Vec::new();
        for s in stmts {
            match s {
                RStmt::Let { local, value } => {
                    let label = format!("{} := {}", self.local_name(*local), self.text(value));
                    input = self.node(Op::Map, label, vec![input], None);
                    steps.push(Step::Let {
                        node: input,
                        local: *local,
                        expr: value.clone(),
                    });
                }
                RStmt::Emit {
                    id,
                    target,
                    class,
                    effect,
                    value,
                } => {
                    let c = self.program.class(*class);
                    let to = target.as_ref().map(|t| format!("{}.", self.text(t))).unwrap_or_default();
                    let label = format!(
                        "{}_eff_{} <- {to}{}",
                        c.name,
                        c.effects[*effect as usize].name,
                        self.text(value)
                    );
                    let node = self.node(Op::EffectEmit, label, vec![input], None);
                    steps.push(Step::Emit {
                        node,
                        stmt: *id,
                        target: target.clone(),
                        class: *class,
                        effect: *effect,
                        value: value.clone(),
                    });
                }
                RStmt::AccAssign { acc, value, .. } => steps.push(Step::AccAssign {
                    acc: *acc,
                    value: value.clone(),
                }),
                RStmt::If { cond, then, els } => {
                    let t = self.text(cond);
                    let then_node = self.node(Op::Select, t.clone(), vec![input], None);
                    let else_node = self.node(Op::Select, format!("!({t})"), vec![input], None);
                    let then = self.block(then, then_node);
                    let els = self.block(els, else_node);
                    steps.push(Step::Branch {
                        then_node,
                        else_node,
                        cond: cond.clone(),
                        then,
                        els,
                    });
                }
                RStmt::Accum { .. } => {
                    let (step, next) = self.accum(s, input);
                    input = next;
                    steps.push(Step::Accum(Box::new(step)));
                }
                RStmt::Atomic { site, body } => steps.push(Step::Atomic {
                    site: *site,
                    body: self.block(body, input),
                }),
                RStmt::Spawn { id, class, inits } => {
                    let label = format!("spawn {}", self.program.class(*class).name);
                    let node = self.node(Op::Spawn, label, vec![input], None);
                    steps.push(Step::Spawn {
                        node,
                        stmt: *id,
                        class: *class,
                        inits: inits.clone(),
                    });
                }
                RStmt::Destroy { id, target } => {
                    let label = format!("destroy {}", self.text(target));
                    let node = self.node(Op::Destroy, label, vec![input], None);
                    steps.push(Step::Destroy {
                        node,
                        stmt: *id,
                        target: target.clone(),
                    });
                }
                RStmt::Wait => unreachable!("waits are removed by lowering"),
            }
        }
        Block(steps)
    }

    /// Compiles an accum loop; returns the step and the frame node its
    /// second block (and the code after it) runs on.
    fn accum(&mut self, s: &RStmt, input: u32) -> (AccumStep, u32) {
        let RStmt::Accum {
            acc,
            combinator,
            acc_ty,
            var,
            source,
            body,
            after,
            ..
        } = s
        else {
            unreachable!()
        };
        let optimize = self.profile != Profile::Logical;
        let mut vars: Vec<(LocalId, RExpr)> = vec![(*var, source.clone())];
        let mut discard = Vec::new();
        let mut inner: &[RStmt] = body;
        if optimize {
            if let [RStmt::Accum {
                acc: iacc,
                var: ivar,
                source: isrc,
                body: ibody,
                after: iafter,
                ..
            }] = inner
            {
                if iafter.is_empty() && !isrc.uses_local(*var) && self.safe(isrc, &[]) {
                    vars.push((*ivar, isrc.clone()));
                    discard.push(*iacc);
                    inner = ibody;
                }
            }
        }
        let mut cond = None;
        if optimize {
            if let [RStmt::If { cond: c, then, els }] = inner {
                if els.is_empty() {
                    cond = Some(c.clone());
                    inner = then;
                }
            }
        }

        let loop_vars: Vec<LocalId> = vars.iter().map(|(v, _)| *v).collect();
        let live: Vec<LocalId> = vars
            .iter()
            .filter(|(_, src)| matches!(src.kind, RExprKind::Extent(_)))
            .map(|(v, _)| *v)
            .collect();
        let prefix: Vec<RExpr> = cond
            .as_ref()
            .map(|c| {
                conjuncts(c)
                    .into_iter()
                    .take_while(|e| self.safe(e, &live))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();

        let mut orders: Vec<Vec<usize>> = vec![(0..vars.len()).collect()];
        if optimize && vars.len() == 2 {
            orders.push(vec![1, 0]);
        }
        let mut best: Option<(f64, Vec<LevelDraft>)> = None;
        for order in orders {
            let drafts = self.draft_levels(&vars, &order, &loop_vars, &prefix);
            let cost = self.estimate(&drafts);
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, drafts));
            }
        }
        let drafts = best.unwrap().1;

        let mut frame = input;
        let mut levels = Vec::new();
        for d in drafts {
            let src_node = match &d.source {
                Source::Scan(c) => self.node(Op::TableScan, format!("{}_state", self.program.class(*c).name), vec![], None),
                Source::Index { class, dims, .. } => {
                    let c = self.program.class(*class);
                    let names: Vec<&str> = dims.iter().map(|f| c.state[*f as usize].name.as_str()).collect();
                    self.node(Op::IndexRangeScan, format!("{}_state({})", c.name, names.join(", ")), vec![], None)
                }
                Source::Unnest(e) => {
                    let label = self.text(e);
                    self.node(Op::Unnest, label, vec![], None)
                }
            };
            let mut label = self.local_name(d.var);
            if !d.filters.is_empty() {
                let f: Vec<String> = d.filters.iter().map(|e| self.text(e)).collect();
                label = format!("{label} on {}", f.join(" && "));
            }
            let node = self.node(Op::ThetaJoin, label, vec![frame, src_node], Some(d.shape));
            frame = node;
            levels.push(Level {
                node,
                var: d.var,
                source: d.source,
                filters: d.filters,
            });
        }
        let residual = cond.map(|c| {
            let node = self.node(Op::Select, self.text(&c), vec![frame], None);
            frame = node;
            (node, c)
        });
        let body = self.block(inner, frame);
        let agg_label = format!("{}({})", combinator.name(), self.local_name(*acc));
        let agg_node = self.node(Op::GroupAggregate, agg_label, vec![frame], None);
        let after_input = self.node(Op::Map, self.local_name(*acc), vec![input, agg_node], None);
        let after = self.block(after, after_input);
        (
            AccumStep {
                acc: *acc,
                combinator: *combinator,
                acc_ty: acc_ty.clone(),
                agg_node,
                levels,
                residual,
                discard,
                body,
                after,
            },
            input,
        )
    }

    fn draft_levels(&self, vars: &[(LocalId, RExpr)], order: &[usize], loop_vars: &[LocalId], prefix: &[RExpr]) -> Vec<LevelDraft> {
        let mut placed: Vec<LocalId> = Vec::new();
        let mut used = vec![false; prefix.len()];
        let mut out = Vec::new();
        for &k in order {
            let (var, src) = &vars[k];
            placed.push(*var);
            let mine: Vec<usize> = (0..prefix.len())
                .filter(|&i| !used[i] && loop_vars.iter().all(|v| placed.contains(v) || !prefix[i].uses_local(*v)))
                .collect();
            for &i in &mine {
                used[i] = true;
            }
            let boxes: Vec<(usize, BoxTerm)> = mine
                .iter()
                .filter_map(|&i| self.box_term(&prefix[i], *var).map(|b| (i, b)))
                .collect();
            // Disequalities pass almost every pair; they do not count.
            let others = mine
                .iter()
                .filter(|&&i| !boxes.iter().any(|(j, _)| *j == i))
                .filter(|&&i| !matches!(prefix[i].kind, RExprKind::Binary(BinOp::Ne, ..)))
                .count();
            let shape = JoinShape {
                has_box: !boxes.is_empty(),
                others: others as u32,
            };
            let use_index = self.profile == Profile::Uniform && !boxes.is_empty();
            let source = match &src.kind {
                RExprKind::Extent(c) if use_index => {
                    let mut dims: Vec<FieldId> = Vec::new();
                    for (_, b) in &boxes {
                        if !dims.contains(&b.field) && dims.len() < crate::store::rangetree::MAX_DIMS {
                            dims.push(b.field);
                        }
                    }
                    let mut lo = vec![Vec::new(); dims.len()];
                    let mut hi = vec![Vec::new(); dims.len()];
                    for (_, b) in &boxes {
                        if let Some(d) = dims.iter().position(|f| *f == b.field) {
                            debug_assert!(b.var == *var && b.class == *c);
                            lo[d].extend(b.lo.clone());
                            hi[d].extend(b.hi.clone());
                        }
                    }
                    Source::Index { class: *c, dims, lo, hi }
                }
                RExprKind::Extent(c) => Source::Scan(*c),
                _ => Source::Unnest(src.clone()),
            };
            let indexed: Vec<usize> = if matches!(source, Source::Index { .. }) {
                boxes.iter().map(|(i, _)| *i).collect()
            } else {
                Vec::new()
            };
            let filters = mine.iter().filter(|i| !indexed.contains(i)).map(|&i| prefix[i].clone()).collect();
            out.push(LevelDraft {
                var: *var,
                source,
                filters,
                shape,
            });
        }
        out
    }

    /// Estimated total intermediate rows per outer row.
    fn estimate(&self, drafts: &[LevelDraft]) -> f64 {
        let mut rows = 1.0;
        let mut total = 0.0;
        for d in drafts {
            let n = match d.source {
                Source::Unnest(_) => ASSUMED_SET,
                _ => ASSUMED_EXTENT,
            };
            rows *= n * d.shape.assumed(self.profile);
            total += rows;
        }
        total
    }

    fn box_term(&self, e: &RExpr, var: LocalId) -> Option<BoxTerm> {
        let RExprKind::Binary(op, a, b) = &e.kind else { return None };
        let field_of = |x: &RExpr| match &x.kind {
            RExprKind::Field(base, c, f) if base.kind == RExprKind::Local(var) => {
                (self.program.class(*c).state[*f as usize].ty == Type::Number).then_some((*c, *f))
            }
            _ => None,
        };
        let bound_ok = |x: &RExpr| x.ty.is_numeric() && !x.uses_local(var);
        let (class, field, bound, op) = if let Some((c, f)) = field_of(a) {
            if !bound_ok(b) {
                return None;
            }
            (c, f, (**b).clone(), *op)
        } else if let Some((c, f)) = field_of(b) {
            if !bound_ok(a) {
                return None;
            }
            let flipped = match op {
                BinOp::Lt => BinOp::Gt,
                BinOp::Le => BinOp::Ge,
                BinOp::Gt => BinOp::Lt,
                BinOp::Ge => BinOp::Le,
                other => *other,
            };
            (c, f, (**a).clone(), flipped)
        } else {
            return None;
        };
        let (lo, hi) = match op {
            BinOp::Lt | BinOp::Le => (None, Some(bound)),
            BinOp::Gt | BinOp::Ge => (Some(bound), None),
            BinOp::Eq => (Some(bound.clone()), Some(bound)),
            _ => return None,
        };
        Some(BoxTerm {
            var,
            class,
            field,
            lo,
            hi,
        })
    }

    /// Whether evaluating `e` can never fault, given that the variables in
    /// `live` range over class extents (so reads through them succeed).
    fn safe(&self, e: &RExpr, live: &[LocalId]) -> bool {
        match &e.kind {
            RExprKind::Lit(_) | RExprKind::This | RExprKind::SelfField(_) | RExprKind::Extent(_) => true,
            RExprKind::Local(l) => !matches!(
                self.local_kind(*l),
                LocalKind::Accumulator(Combinator::Avg | Combinator::Min | Combinator::Max)
            ),
            RExprKind::Field(base, ..) => matches!(base.kind, RExprKind::Local(v) if live.contains(&v)),
            RExprKind::Effect(_) => false,
            RExprKind::Unary(op, a) => match op {
                UnOp::Not => self.safe(a, live),
                UnOp::Neg => a.ty == Type::Number && self.safe(a, live),
            },
            RExprKind::Binary(op, a, b) => {
                let both = self.safe(a, live) && self.safe(b, live);
                match op {
                    BinOp::Div | BinOp::Rem => false,
                    BinOp::Add | BinOp::Sub | BinOp::Mul => both && !(a.ty == Type::Int && b.ty == Type::Int),
                    _ => both,
                }
            }
            RExprKind::Call(f, args, _) => f.infallible() && args.iter().all(|a| self.safe(a, live)),
        }
    }

    fn text(&self, e: &RExpr) -> String {
        expr_text(self.program, self.class, e)
    }
}

struct LevelDraft {
    var: LocalId,
    source: Source,
    filters: Vec<RExpr>,
    shape: JoinShape,
}

/// The operands of a left-nested `&&` chain, in evaluation order.
pub fn conjuncts(e: &RExpr) -> Vec<&RExpr> {
    match &e.kind {
        RExprKind::Binary(BinOp::And, a, b) => {
            let mut v = conjuncts(a);
            v.extend(conjuncts(b));
            v
        }
        _ => vec![e],
    }
}

/// Source-like rendering of a resolved expression, for plan dumps.
pub fn expr_text(program: &Program, class: ClassId, e: &RExpr) -> String {
    let c = program.class(class);
    let local = |l: LocalId| {
        c.body
            .as_ref()
            .and_then(|b| b.locals.get(l as usize))
            .map(|i| i.name.clone())
            .unwrap_or_else(|| format!("_{l}"))
    };
    match &e.kind {
        RExprKind::Lit(v) => v.to_string(),
        RExprKind::Local(l) => local(*l),
        RExprKind::This => "this".into(),
        RExprKind::SelfField(f) => c.state[*f as usize].name.clone(),
        RExprKind::Field(base, k, f) => {
            format!("{}.{}", expr_text(program, class, base), program.class(*k).state[*f as usize].name)
        }
        RExprKind::Effect(x) => c.effects[*x as usize].name.clone(),
        RExprKind::Extent(k) => program.class(*k).name.clone(),
        RExprKind::Unary(op, a) => {
            let s = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
            };
            format!("{s}{}", expr_text(program, class, a))
        }
        RExprKind::Binary(op, a, b) => format!(
            "({} {} {})",
            expr_text(program, class, a),
            op.symbol(),
            expr_text(program, class, b)
        ),
        RExprKind::Call(f, args, _) => {
            let a: Vec<String> = args.iter().map(|x| expr_text(program, class, x)).collect();
            format!("{}({})", f.name(), a.join(", "))
        }
    }
}
