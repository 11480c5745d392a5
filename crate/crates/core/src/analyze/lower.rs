//! Multi-tick and handler lowering.
//!
//! A script with `waitNextTick` becomes a set of segments selected by the
//! synthesized `_pc` field. Each segment runs straight-line code up to the
//! next wait and emits the index of the segment to resume in. Control flow
//! around a wait is resolved by continuation splitting: the statements
//! after an `if` or `accum` that contains a wait are copied into every path
//! that reaches them. Identical continuations share a segment.

use super::check::Checker;
use super::ir::*;
use crate::diag::{codes, Diagnostic};
use crate::lang::ast::{self, CompilationUnit, Ident, Item, ScriptDef, Stmt, StmtKind};
use crate::value::{ClassId, Type, Value};

/// Upper bound on segments per script; continuation copying is exponential
/// in the number of sequential branches that contain waits.
pub const MAX_SEGMENTS: usize = 4096;

struct Splitter<'a> {
    checker: &'a mut Checker,
    class: ClassId,
    pc: Option<PcFields>,
    segments: Vec<Vec<RStmt>>,
    memo: Vec<(Vec<RStmt>, usize)>,
    overflow: bool,
}

impl Splitter<'_> {
    fn set_pc(&mut self, k: usize) -> Option<RStmt> {
        let pc = self.pc?;
        let id = self.checker.fresh_stmt();
        Some(RStmt::Emit {
            id,
            target: None,
            class: self.class,
            effect: pc.next,
            value: RExpr::lit(Value::Int(k as i64), Type::Int),
        })
    }

    fn segment_for(&mut self, rest: Vec<RStmt>) -> usize {
        if let Some((_, k)) = self.memo.iter().find(|(r, _)| *r == rest) {
            return *k;
        }
        let k = self.segments.len();
        if k >= MAX_SEGMENTS {
            self.overflow = true;
            return 0;
        }
        self.segments.push(Vec::new());
        self.memo.push((rest.clone(), k));
        self.segments[k] = self.emit(rest);
        k
    }

    /// Code for the current segment that runs `stmts` to completion or to
    /// the first wait on each path.
    fn emit(&mut self, stmts: Vec<RStmt>) -> Vec<RStmt> {
        let mut out = Vec::new();
        let mut iter = stmts.into_iter();
        while let Some(s) = iter.next() {
            if !s.contains_wait() {
                out.push(s);
                continue;
            }
            let rest: Vec<RStmt> = iter.collect();
            match s {
                RStmt::Wait => {
                    let k = self.segment_for(rest);
                    out.extend(self.set_pc(k));
                }
                RStmt::If { cond, then, els } => {
                    let then = self.emit(then.into_iter().chain(rest.iter().cloned()).collect());
                    let els = self.emit(els.into_iter().chain(rest).collect());
                    out.push(RStmt::If { cond, then, els });
                }
                RStmt::Accum {
                    id,
                    acc,
                    combinator,
                    acc_ty,
                    var,
                    source,
                    body,
                    after,
                } => {
                    let after = self.emit(after.into_iter().chain(rest).collect());
                    out.push(RStmt::Accum {
                        id,
                        acc,
                        combinator,
                        acc_ty,
                        var,
                        source,
                        body,
                        after,
                    });
                }
                other => unreachable!("wait inside {other:?} is rejected by the checker"),
            }
            return out;
        }
        out.extend(self.set_pc(0));
        out
    }
}

/// Splits a checked script body into per-tick segments. `pc` is `None`
/// when the script has no waits, in which case the single segment emits no
/// program-counter effects.
pub(crate) fn lower_multitick(
    checker: &mut Checker,
    class: ClassId,
    pc: Option<PcFields>,
    body: Vec<RStmt>,
    pos: ast::Pos,
) -> Vec<Vec<RStmt>> {
    let mut s = Splitter {
        checker,
        class,
        pc,
        segments: vec![Vec::new()],
        memo: Vec::new(),
        overflow: false,
    };
    s.segments[0] = s.emit(body);
    if s.overflow {
        s.checker.diags.push(Diagnostic::error(
            codes::E_UNCOMPILABLE,
            format!("script needs more than {MAX_SEGMENTS} segments after lowering"),
            pos.line,
            pos.column,
        ));
    }
    s.segments
}

/// Turns checked handler bodies into preludes. A restart handler also
/// overrides the next program counter with 0.
pub(crate) fn lower_handler(
    checker: &mut Checker,
    class: ClassId,
    pc: Option<PcFields>,
    cond: RExpr,
    mut body: Vec<RStmt>,
    restart: bool,
) -> Handler {
    if restart {
        if let Some(pc) = pc {
            let id = checker.fresh_stmt();
            body.push(RStmt::Emit {
                id,
                target: None,
                class,
                effect: pc.restart,
                value: RExpr::lit(Value::Int(0), Type::Int),
            });
        }
    }
    Handler { cond, body, restart }
}

impl ClassBody {
    /// The full statement list run by an object whose program counter is
    /// `pc`: every handler as a guarded prelude, then the segment.
    pub fn tick_program(&self, pc: usize) -> Vec<RStmt> {
        let mut out: Vec<RStmt> = self
            .handlers
            .iter()
            .map(|h| RStmt::If {
                cond: h.cond.clone(),
                then: h.body.clone(),
                els: Vec::new(),
            })
            .collect();
        if let Some(seg) = self.segments.get(pc) {
            out.extend(seg.iter().cloned());
        }
        out
    }
}

/// Source-level rewrite of non-restart handlers into guarded statements at
/// every point where a tick can begin: the start of the script and right
/// after each `waitNextTick`. Classes without a script get one named
/// `handlers`. Restart handlers are left in place.
pub fn desugar_handlers(unit: &CompilationUnit) -> CompilationUnit {
    let mut items: Vec<Item> = Vec::new();
    let mut preludes: Vec<(String, Vec<Stmt>)> = Vec::new();
    for item in &unit.items {
        match item {
            Item::Handler(h) if !h.restart => {
                let guard = Stmt {
                    kind: StmtKind::If {
                        cond: h.condition.clone(),
                        then: h.body.clone(),
                        els: None,
                    },
                    pos: h.pos,
                };
                match preludes.iter_mut().find(|(c, _)| *c == h.class.name) {
                    Some((_, p)) => p.push(guard),
                    None => preludes.push((h.class.name.clone(), vec![guard])),
                }
            }
            other => items.push(other.clone()),
        }
    }
    for (class, prelude) in preludes {
        let script = items.iter_mut().find_map(|i| match i {
            Item::Script(s) if s.class.name == class => Some(s),
            _ => None,
        });
        match script {
            Some(s) => {
                let body = insert_after_waits(&s.body, &prelude);
                s.body = prelude.iter().cloned().chain(body).collect();
            }
            None => items.push(Item::Script(ScriptDef {
                name: Ident::new("handlers", ast::Pos::default()),
                class: Ident::new(class, ast::Pos::default()),
                body: prelude,
                pos: ast::Pos::default(),
            })),
        }
    }
    CompilationUnit { items }
}

fn insert_after_waits(block: &[Stmt], prelude: &[Stmt]) -> Vec<Stmt> {
    let mut out = Vec::new();
    for s in block {
        let kind = match &s.kind {
            StmtKind::Wait => {
                out.push(s.clone());
                out.extend(prelude.iter().cloned());
                continue;
            }
            StmtKind::If { cond, then, els } => StmtKind::If {
                cond: cond.clone(),
                then: insert_after_waits(then, prelude),
                els: els.as_ref().map(|b| insert_after_waits(b, prelude)),
            },
            StmtKind::Accum {
                acc_ty,
                acc,
                combinator,
                var_ty,
                var,
                source,
                body,
                after,
            } => StmtKind::Accum {
                acc_ty: acc_ty.clone(),
                acc: acc.clone(),
                combinator: *combinator,
                var_ty: var_ty.clone(),
                var: var.clone(),
                source: source.clone(),
                body: body.clone(),
                after: insert_after_waits(after, prelude),
            },
            other => other.clone(),
        };
        out.push(Stmt { kind, pos: s.pos });
    }
    out
}

/// Whether a source block contains a `waitNextTick` anywhere.
pub(crate) fn has_wait(block: &[Stmt]) -> bool {
    block.iter().any(|s| match &s.kind {
        StmtKind::Wait => true,
        StmtKind::If { then, els, .. } => has_wait(then) || els.as_deref().is_some_and(has_wait),
        StmtKind::Accum { body, after, .. } => has_wait(body) || has_wait(after),
        StmtKind::Atomic { body } => has_wait(body),
        _ => false,
    })
}
