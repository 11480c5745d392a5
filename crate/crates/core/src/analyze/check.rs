//! Name resolution, typing and access-mode checking.

use super::ir::*;
use crate::diag::{codes, Diagnostic};
use crate::lang::ast::*;
use crate::lang::format_expr;
use crate::value::{self, Builtin, ClassId, Type, Value};
use std::collections::{HashMap, HashSet};

/// What an expression may read.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Mode {
    /// Script and handler bodies: locals, state of any object, extents.
    Script,
    /// Update rules: state plus the reduced effects of the current object.
    Rule,
    /// Constraints: state fields of the current object only.
    Constraint,
    /// Handler and breakpoint conditions: state of any object.
    Condition,
    /// State initializers: literals and pure operators only.
    Const,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Phase {
    Block1,
    Block2,
}

/// Lexical state of one class body (script plus handlers).
#[derive(Default)]
pub(crate) struct Body {
    pub locals: Vec<LocalInfo>,
    scopes: Vec<(String, LocalId)>,
    epochs: Vec<u32>,
    phases: HashMap<LocalId, Phase>,
    poisoned: HashSet<LocalId>,
    epoch: u32,
    block1_depth: u32,
    atomic_depth: u32,
    in_handler: bool,
}

impl Body {
    fn lookup(&self, name: &str) -> Option<LocalId> {
        self.scopes.iter().rev().find(|(n, _)| n == name).map(|(_, l)| *l)
    }

    fn declare(&mut self, name: &str, ty: Type, kind: LocalKind) -> LocalId {
        let id = self.locals.len() as LocalId;
        self.locals.push(LocalInfo {
            name: name.to_string(),
            ty,
            kind,
        });
        self.epochs.push(self.epoch);
        self.scopes.push((name.to_string(), id));
        id
    }
}

pub(crate) struct Checker {
    pub diags: Vec<Diagnostic>,
    pub classes: Vec<ClassInfo>,
    pub index: HashMap<String, ClassId>,
    pub access: Vec<AccessNote>,
    next_stmt: StmtId,
    next_site: u32,
}

fn err(code: &'static str, msg: impl Into<String>, pos: Pos) -> Diagnostic {
    Diagnostic::error(code, msg, pos.line, pos.column)
}

impl Checker {
    pub fn new() -> Self {
        Checker {
            diags: Vec::new(),
            classes: Vec::new(),
            index: HashMap::new(),
            access: Vec::new(),
            next_stmt: 0,
            next_site: 0,
        }
    }

    pub fn fresh_stmt(&mut self) -> StmtId {
        self.next_stmt += 1;
        self.next_stmt
    }

    fn report(&mut self, d: Diagnostic) {
        self.diags.push(d);
    }

    fn note(&mut self, pos: Pos, name: &str, mode: AccessMode) {
        self.access.push(AccessNote {
            line: pos.line,
            column: pos.column,
            name: name.to_string(),
            mode,
        });
    }

    pub fn resolve_type(&mut self, t: &TypeExpr, pos: Pos) -> Option<Type> {
        Some(match t {
            TypeExpr::Number => Type::Number,
            TypeExpr::Int => Type::Int,
            TypeExpr::Bool => Type::Bool,
            TypeExpr::Str => Type::Str,
            TypeExpr::Ref(c) => match self.index.get(c) {
                Some(id) => Type::Ref(*id),
                None => {
                    self.report(err(codes::E_UNKNOWN_CLASS, format!("unknown class `{c}`"), pos));
                    return None;
                }
            },
            TypeExpr::Set(inner) => {
                if matches!(**inner, TypeExpr::Set(_)) {
                    self.report(err(codes::E_TYPE, "sets of sets are not supported", pos));
                    return None;
                }
                Type::Set(Box::new(self.resolve_type(inner, pos)?))
            }
        })
    }

    /// Reports `E_BAD_COMBINATOR` unless `comb` folds values of type `ty`.
    pub fn check_combinator(&mut self, comb: Combinator, ty: &Type, pos: Pos) -> bool {
        let ok = match comb {
            Combinator::Sum | Combinator::Min | Combinator::Max => ty.is_numeric(),
            Combinator::Avg => *ty == Type::Number,
            Combinator::Count => *ty == Type::Int,
            Combinator::Or | Combinator::And => *ty == Type::Bool,
            Combinator::SetUnion => matches!(ty, Type::Set(_)),
        };
        if !ok {
            self.report(err(
                codes::E_BAD_COMBINATOR,
                format!("combinator {comb} cannot fold values of type {}", self.type_name(ty)),
                pos,
            ));
        }
        ok
    }

    pub fn type_name(&self, ty: &Type) -> String {
        match ty {
            Type::Number => "number".into(),
            Type::Int => "int".into(),
            Type::Bool => "bool".into(),
            Type::Str => "string".into(),
            Type::Null => "null".into(),
            Type::Ref(c) => format!("ref<{}>", self.classes[c.0 as usize].name),
            Type::Set(t) => format!("set<{}>", self.type_name(t)),
        }
    }

    fn expect(&mut self, expected: &Type, got: &RExpr, pos: Pos, what: &str) -> bool {
        if expected.accepts(&got.ty) {
            true
        } else {
            let msg = format!(
                "{what}: expected {}, found {}",
                self.type_name(expected),
                self.type_name(&got.ty)
            );
            self.report(err(codes::E_TYPE, msg, pos));
            false
        }
    }

    // ---- expressions ----

    pub fn expr(&mut self, cls: ClassId, mode: Mode, body: &mut Body, e: &Expr) -> Option<RExpr> {
        let pos = e.pos;
        let c = cls.0 as usize;
        match &e.kind {
            ExprKind::Num(v) => Some(RExpr::lit(Value::Num(*v), Type::Number)),
            ExprKind::Int(v) => Some(RExpr::lit(Value::Int(*v), Type::Int)),
            ExprKind::Str(s) => Some(RExpr::lit(Value::Str(s.as_str().into()), Type::Str)),
            ExprKind::Bool(b) => Some(RExpr::lit(Value::Bool(*b), Type::Bool)),
            ExprKind::Null => Some(RExpr::lit(Value::Ref(None), Type::Null)),
            ExprKind::This => {
                if mode == Mode::Const {
                    self.report(err(codes::E_BAD_INITIALIZER, "initializers must be constant", pos));
                    return None;
                }
                Some(RExpr {
                    kind: RExprKind::This,
                    ty: Type::Ref(cls),
                })
            }
            ExprKind::Ident(name) => {
                if mode == Mode::Const {
                    self.report(err(codes::E_BAD_INITIALIZER, "initializers must be constant", pos));
                    return None;
                }
                if mode == Mode::Script {
                    if let Some(l) = body.lookup(name) {
                        return self.read_local(body, l, name, pos);
                    }
                }
                if let Some(f) = self.classes[c].field(name) {
                    self.note(pos, name, AccessMode::StateReadOnly);
                    let ty = self.classes[c].state[f as usize].ty.clone();
                    return Some(RExpr {
                        kind: RExprKind::SelfField(f),
                        ty,
                    });
                }
                if let Some(x) = self.classes[c].effect(name) {
                    if mode == Mode::Rule {
                        let ty = self.classes[c].effects[x as usize].ty.clone();
                        return Some(RExpr {
                            kind: RExprKind::Effect(x),
                            ty,
                        });
                    }
                    self.report(err(
                        codes::E_READ_EFFECT,
                        format!("effect field `{name}` is write-only here"),
                        pos,
                    ));
                    return None;
                }
                if let Some(id) = self.index.get(name).copied() {
                    if matches!(mode, Mode::Script | Mode::Rule) {
                        return Some(RExpr {
                            kind: RExprKind::Extent(id),
                            ty: Type::Set(Box::new(Type::Ref(id))),
                        });
                    }
                    self.report(err(
                        codes::E_CONSTRAINT_FIELD,
                        format!("class extent `{name}` cannot be used here"),
                        pos,
                    ));
                    return None;
                }
                self.report(err(codes::E_UNKNOWN_NAME, format!("unknown name `{name}`"), pos));
                None
            }
            ExprKind::Field(base, f) => {
                if mode == Mode::Const {
                    self.report(err(codes::E_BAD_INITIALIZER, "initializers must be constant", pos));
                    return None;
                }
                if base.kind == ExprKind::This {
                    let as_ident = Expr::new(ExprKind::Ident(f.name.clone()), f.pos);
                    let mut empty = Body::default();
                    return self.expr(cls, mode, &mut empty, &as_ident);
                }
                if mode == Mode::Constraint {
                    self.report(err(
                        codes::E_CONSTRAINT_FIELD,
                        "constraints may only read state fields of the same object",
                        pos,
                    ));
                    return None;
                }
                let b = self.expr(cls, mode, body, base)?;
                let Type::Ref(target) = b.ty else {
                    let msg = format!("cannot read `.{}` of a {}", f.name, self.type_name(&b.ty));
                    self.report(err(codes::E_TYPE, msg, pos));
                    return None;
                };
                let tc = &self.classes[target.0 as usize];
                if let Some(fid) = tc.field(&f.name) {
                    let ty = tc.state[fid as usize].ty.clone();
                    self.note(f.pos, &f.name, AccessMode::StateReadOnly);
                    return Some(RExpr {
                        kind: RExprKind::Field(Box::new(b), target, fid),
                        ty,
                    });
                }
                if tc.effect(&f.name).is_some() {
                    self.report(err(
                        codes::E_READ_EFFECT,
                        format!("effect field `{}` is write-only", f.name),
                        f.pos,
                    ));
                } else {
                    let msg = format!("class `{}` has no field `{}`", tc.name, f.name);
                    self.report(err(codes::E_UNKNOWN_FIELD, msg, f.pos));
                }
                None
            }
            ExprKind::Unary(op, inner) => {
                let v = self.expr(cls, mode, body, inner)?;
                let ok = match op {
                    UnOp::Neg => v.ty.is_numeric(),
                    UnOp::Not => v.ty == Type::Bool,
                };
                if !ok {
                    let msg = format!("cannot apply `{}` to {}", if *op == UnOp::Neg { "-" } else { "!" }, self.type_name(&v.ty));
                    self.report(err(codes::E_TYPE, msg, pos));
                    return None;
                }
                let ty = v.ty.clone();
                Some(RExpr {
                    kind: RExprKind::Unary(*op, Box::new(v)),
                    ty,
                })
            }
            ExprKind::Binary(op, l, r) => {
                let a = self.expr(cls, mode, body, l);
                let b = self.expr(cls, mode, body, r);
                let (a, b) = (a?, b?);
                let ty = self.binary_type(*op, &a.ty, &b.ty, pos)?;
                Some(RExpr {
                    kind: RExprKind::Binary(*op, Box::new(a), Box::new(b)),
                    ty,
                })
            }
            ExprKind::Call(f, args) => {
                let Some(builtin) = Builtin::from_name(&f.name) else {
                    self.report(err(
                        codes::E_UNKNOWN_FUNCTION,
                        format!("unknown function `{}`", f.name),
                        f.pos,
                    ));
                    return None;
                };
                if builtin == Builtin::Rand && matches!(mode, Mode::Constraint | Mode::Condition | Mode::Const) {
                    self.report(err(codes::E_TYPE, "rand() is only available in scripts and update rules", pos));
                    return None;
                }
                let mut out = Vec::new();
                let mut failed = false;
                for a in args {
                    match self.expr(cls, mode, body, a) {
                        Some(x) => out.push(x),
                        None => failed = true,
                    }
                }
                if failed {
                    return None;
                }
                let ty = self.call_type(builtin, &out, pos)?;
                let site = if builtin == Builtin::Rand {
                    self.next_site += 1;
                    self.next_site
                } else {
                    0
                };
                Some(RExpr {
                    kind: RExprKind::Call(builtin, out, site),
                    ty,
                })
            }
        }
    }

    fn read_local(&mut self, body: &mut Body, l: LocalId, name: &str, pos: Pos) -> Option<RExpr> {
        if body.poisoned.contains(&l) {
            return None;
        }
        let info = &body.locals[l as usize];
        let ty = info.ty.clone();
        let mode = match body.phases.get(&l) {
            Some(Phase::Block1) => {
                self.report(err(
                    codes::E_READ_ACC_IN_BLOCK1,
                    format!("accumulator `{name}` cannot be read inside its loop body"),
                    pos,
                ));
                return None;
            }
            Some(Phase::Block2) => AccessMode::AccumulatorReadOnly,
            None => AccessMode::Local,
        };
        if body.epochs[l as usize] < body.epoch {
            self.report(err(
                codes::E_LOCAL_ACROSS_WAIT,
                format!("`{name}` was bound before a waitNextTick and does not survive it"),
                pos,
            ));
            return None;
        }
        self.note(pos, name, mode);
        Some(RExpr {
            kind: RExprKind::Local(l),
            ty,
        })
    }

    fn binary_type(&mut self, op: BinOp, a: &Type, b: &Type, pos: Pos) -> Option<Type> {
        use BinOp::*;
        let ty = match op {
            Add | Sub | Mul | Div | Rem if a.is_numeric() && b.is_numeric() => {
                if *a == Type::Int && *b == Type::Int {
                    Type::Int
                } else {
                    Type::Number
                }
            }
            Lt | Le | Gt | Ge
                if (a.is_numeric() && b.is_numeric()) || (*a == Type::Str && *b == Type::Str) =>
            {
                Type::Bool
            }
            Eq | Ne if comparable(a, b) => Type::Bool,
            And | Or if *a == Type::Bool && *b == Type::Bool => Type::Bool,
            _ => {
                let msg = format!(
                    "operator `{}` does not apply to {} and {}",
                    op.symbol(),
                    self.type_name(a),
                    self.type_name(b)
                );
                self.report(err(codes::E_TYPE, msg, pos));
                return None;
            }
        };
        Some(ty)
    }

    fn call_type(&mut self, f: Builtin, args: &[RExpr], pos: Pos) -> Option<Type> {
        let tys: Vec<&Type> = args.iter().map(|a| &a.ty).collect();
        let ty = match (f, tys.as_slice()) {
            (Builtin::Abs, [t]) if t.is_numeric() => (*t).clone(),
            (Builtin::Min | Builtin::Max, [a, b]) if a.is_numeric() && b.is_numeric() => {
                if **a == Type::Int && **b == Type::Int {
                    Type::Int
                } else {
                    Type::Number
                }
            }
            (Builtin::Sqrt | Builtin::Floor, [t]) if t.is_numeric() => Type::Number,
            (Builtin::Size, [Type::Set(_)]) => Type::Int,
            (Builtin::Contains, [Type::Set(e), x]) if comparable(e, x) => Type::Bool,
            (Builtin::Union, [Type::Set(a), Type::Set(b)]) if a == b => Type::Set(a.clone()),
            (Builtin::Rand, []) => Type::Number,
            _ => {
                let list: Vec<String> = tys.iter().map(|t| self.type_name(t)).collect();
                let msg = format!("no overload `{}({})`", f.name(), list.join(", "));
                self.report(err(codes::E_TYPE, msg, pos));
                return None;
            }
        };
        Some(ty)
    }

    // ---- statements ----

    pub fn block(&mut self, cls: ClassId, body: &mut Body, stmts: &[Stmt]) -> Vec<RStmt> {
        let mark = body.scopes.len();
        let mut out = Vec::new();
        for s in stmts {
            self.stmt(cls, body, s, &mut out);
        }
        body.scopes.truncate(mark);
        out
    }

    fn declare_checked(&mut self, cls: ClassId, body: &mut Body, name: &Ident, ty: Type, kind: LocalKind) -> LocalId {
        let c = &self.classes[cls.0 as usize];
        if body.lookup(&name.name).is_some()
            || c.field(&name.name).is_some()
            || c.effect(&name.name).is_some()
            || self.index.contains_key(&name.name)
        {
            self.report(err(
                codes::E_DUPLICATE_LOCAL,
                format!("`{}` is already defined in this scope", name.name),
                name.pos,
            ));
        }
        body.declare(&name.name, ty, kind)
    }

    fn stmt(&mut self, cls: ClassId, body: &mut Body, s: &Stmt, out: &mut Vec<RStmt>) {
        match &s.kind {
            StmtKind::Let { name, value } => {
                let v = self.expr(cls, Mode::Script, body, value);
                let ty = v.as_ref().map(|v| v.ty.clone()).unwrap_or(Type::Null);
                let local = self.declare_checked(cls, body, name, ty, LocalKind::Let);
                match v {
                    Some(value) => out.push(RStmt::Let { local, value }),
                    None => {
                        body.poisoned.insert(local);
                    }
                }
            }
            StmtKind::Effect { target, op, value } => {
                if let Some(st) = self.effect_stmt(cls, body, target, *op, value, s.pos) {
                    out.push(st);
                }
            }
            StmtKind::If { cond, then, els } => {
                let c = self.expr(cls, Mode::Script, body, cond);
                if let Some(c) = &c {
                    self.expect(&Type::Bool, c, cond.pos, "if condition");
                }
                let start = body.epoch;
                let then = self.block(cls, body, then);
                let after_then = body.epoch;
                body.epoch = start;
                let els = els.as_ref().map(|b| self.block(cls, body, b)).unwrap_or_default();
                body.epoch = body.epoch.max(after_then);
                if let Some(cond) = c {
                    out.push(RStmt::If { cond, then, els });
                }
            }
            StmtKind::Accum {
                acc_ty,
                acc,
                combinator,
                var_ty,
                var,
                source,
                body: b1,
                after,
            } => {
                let src = self.expr(cls, Mode::Script, body, source);
                let aty = self.resolve_type(acc_ty, acc.pos);
                let vty = self.resolve_type(var_ty, var.pos);
                if let Some(t) = &aty {
                    self.check_combinator(*combinator, t, acc.pos);
                }
                if let (Some(src), Some(vty)) = (&src, &vty) {
                    match &src.ty {
                        Type::Set(elem) if **elem == *vty => {}
                        other => {
                            let msg = format!(
                                "loop over {} requires a {} source, found {}",
                                self.type_name(vty),
                                self.type_name(&Type::Set(Box::new(vty.clone()))),
                                self.type_name(other)
                            );
                            self.report(err(codes::E_TYPE, msg, source.pos));
                        }
                    }
                }
                let mark = body.scopes.len();
                let acc_id = self.declare_checked(
                    cls,
                    body,
                    acc,
                    aty.clone().unwrap_or(Type::Null),
                    LocalKind::Accumulator(*combinator),
                );
                body.phases.insert(acc_id, Phase::Block1);
                let var_id = self.declare_checked(cls, body, var, vty.clone().unwrap_or(Type::Null), LocalKind::LoopVar);
                if src.is_none() || vty.is_none() {
                    body.poisoned.insert(var_id);
                }
                body.block1_depth += 1;
                let inner = self.block(cls, body, b1);
                body.block1_depth -= 1;
                body.scopes.truncate(mark + 1);
                body.phases.insert(acc_id, Phase::Block2);
                if aty.is_none() {
                    body.poisoned.insert(acc_id);
                }
                let after = self.block(cls, body, after);
                body.scopes.truncate(mark);
                let id = self.fresh_stmt();
                if let (Some(source), Some(acc_ty)) = (src, aty) {
                    out.push(RStmt::Accum {
                        id,
                        acc: acc_id,
                        combinator: *combinator,
                        acc_ty,
                        var: var_id,
                        source,
                        body: inner,
                        after,
                    });
                }
            }
            StmtKind::Wait => {
                let code = if body.in_handler {
                    Some((codes::E_WAIT_IN_HANDLER, "event handlers run within a single tick"))
                } else if body.block1_depth > 0 {
                    Some((codes::E_WAIT_IN_ACCUM, "waitNextTick is not allowed inside an accum loop body"))
                } else if body.atomic_depth > 0 {
                    Some((codes::E_WAIT_IN_ATOMIC, "waitNextTick is not allowed inside an atomic block"))
                } else {
                    None
                };
                match code {
                    Some((code, msg)) => self.report(err(code, msg, s.pos)),
                    None => {
                        body.epoch += 1;
                        out.push(RStmt::Wait);
                    }
                }
            }
            StmtKind::Atomic { body: inner } => {
                if body.atomic_depth > 0 {
                    self.report(err(codes::E_NESTED_ATOMIC, "atomic blocks cannot nest", s.pos));
                } else if body.block1_depth > 0 {
                    self.report(err(
                        codes::E_TXN_IN_ACCUM,
                        "atomic blocks are not allowed inside an accum loop body",
                        s.pos,
                    ));
                }
                body.atomic_depth += 1;
                let stmts = self.block(cls, body, inner);
                body.atomic_depth -= 1;
                let site = self.fresh_stmt();
                out.push(RStmt::Atomic { site, body: stmts });
            }
            StmtKind::Spawn { class, inits } => {
                if body.atomic_depth > 0 {
                    self.report(err(codes::E_SPAWN_IN_ATOMIC, "spawn is not allowed inside an atomic block", s.pos));
                }
                let Some(target) = self.index.get(&class.name).copied() else {
                    self.report(err(codes::E_UNKNOWN_CLASS, format!("unknown class `{}`", class.name), class.pos));
                    return;
                };
                let mut seen = HashSet::new();
                let mut resolved = Vec::new();
                for (f, e) in inits {
                    let v = self.expr(cls, Mode::Script, body, e);
                    let tc = &self.classes[target.0 as usize];
                    let fid = tc.field(&f.name).filter(|i| !tc.state[*i as usize].synthetic);
                    let Some(fid) = fid else {
                        let msg = format!("class `{}` has no state field `{}`", tc.name, f.name);
                        self.report(err(codes::E_UNKNOWN_FIELD, msg, f.pos));
                        continue;
                    };
                    if !seen.insert(fid) {
                        self.report(err(codes::E_DUPLICATE_FIELD, format!("`{}` initialized twice", f.name), f.pos));
                        continue;
                    }
                    let fty = tc.state[fid as usize].ty.clone();
                    if let Some(v) = v {
                        if self.expect(&fty, &v, e.pos, "spawn initializer") {
                            resolved.push((fid, v));
                        }
                    }
                }
                let id = self.fresh_stmt();
                out.push(RStmt::Spawn {
                    id,
                    class: target,
                    inits: resolved,
                });
            }
            StmtKind::Destroy { target } => {
                if body.atomic_depth > 0 {
                    self.report(err(codes::E_SPAWN_IN_ATOMIC, "destroy is not allowed inside an atomic block", s.pos));
                }
                let Some(t) = self.expr(cls, Mode::Script, body, target) else {
                    return;
                };
                if !matches!(t.ty, Type::Ref(_)) {
                    let msg = format!("destroy expects a reference, found {}", self.type_name(&t.ty));
                    self.report(err(codes::E_TYPE, msg, target.pos));
                    return;
                }
                let id = self.fresh_stmt();
                out.push(RStmt::Destroy { id, target: t });
            }
        }
    }

    fn effect_stmt(
        &mut self,
        cls: ClassId,
        body: &mut Body,
        lv: &LValue,
        op: EffectOp,
        value: &Expr,
        pos: Pos,
    ) -> Option<RStmt> {
        let name = &lv.field.name;
        let fpos = lv.field.pos;
        let self_target = match &lv.base {
            None => true,
            Some(b) => b.kind == ExprKind::This,
        };

        // Accumulator writes.
        if lv.base.is_none() {
            if let Some(l) = body.lookup(name) {
                let v = self.expr(cls, Mode::Script, body, value);
                let info = &body.locals[l as usize];
                let LocalKind::Accumulator(comb) = info.kind else {
                    self.report(err(codes::E_WRITE_STATE, format!("local `{name}` is immutable"), fpos));
                    return None;
                };
                let acc_ty = info.ty.clone();
                if body.phases.get(&l) == Some(&Phase::Block2) {
                    self.report(err(
                        codes::E_WRITE_ACC_IN_BLOCK2,
                        format!("accumulator `{name}` is read-only after its loop"),
                        fpos,
                    ));
                    return None;
                }
                if body.poisoned.contains(&l) {
                    return None;
                }
                self.note(fpos, name, AccessMode::AccumulatorWriteOnly);
                let v = v?;
                if !self.check_emit_value(comb, &acc_ty, op, &v, value.pos, name) {
                    return None;
                }
                let id = self.fresh_stmt();
                return Some(RStmt::AccAssign { id, acc: l, value: v });
            }
        }

        let (target_expr, target_cls) = if self_target {
            (None, cls)
        } else {
            let b = self.expr(cls, Mode::Script, body, lv.base.as_ref().unwrap())?;
            let Type::Ref(tc) = b.ty else {
                let msg = format!("cannot write `.{name}` of a {}", self.type_name(&b.ty));
                self.report(err(codes::E_TYPE, msg, fpos));
                return None;
            };
            (Some(b), tc)
        };
        let tc = &self.classes[target_cls.0 as usize];
        let Some(eid) = tc.effect(name).filter(|e| !tc.effects[*e as usize].synthetic) else {
            if tc.field(name).is_some() {
                self.report(err(
                    codes::E_WRITE_STATE,
                    format!("state field `{name}` is read-only in scripts; declare an effect and an update rule"),
                    fpos,
                ));
            } else if self_target && lv.base.is_none() {
                self.report(err(codes::E_UNKNOWN_NAME, format!("unknown name `{name}`"), fpos));
            } else {
                let msg = format!("class `{}` has no effect field `{name}`", tc.name);
                self.report(err(codes::E_UNKNOWN_FIELD, msg, fpos));
            }
            return None;
        };
        let info = tc.effects[eid as usize].clone();
        let is_txn = tc.is_txn_effect(eid);
        self.note(fpos, name, AccessMode::EffectWriteOnly);
        let v = self.expr(cls, Mode::Script, body, value)?;
        if !self.check_emit_value(info.combinator, &info.ty, op, &v, value.pos, name) {
            return None;
        }
        if is_txn && body.block1_depth > 0 {
            self.report(err(
                codes::E_TXN_IN_ACCUM,
                format!("`{name}` feeds a constrained field and cannot be written inside an accum loop body"),
                pos,
            ));
            return None;
        }
        let id = self.fresh_stmt();
        let emit = RStmt::Emit {
            id,
            target: target_expr,
            class: target_cls,
            effect: eid,
            value: v,
        };
        if is_txn && body.atomic_depth == 0 {
            let site = self.fresh_stmt();
            return Some(RStmt::Atomic {
                site,
                body: vec![emit],
            });
        }
        Some(emit)
    }

    fn check_emit_value(&mut self, comb: Combinator, ty: &Type, op: EffectOp, v: &RExpr, pos: Pos, name: &str) -> bool {
        match op {
            EffectOp::Insert => {
                let Type::Set(elem) = ty else {
                    self.report(err(
                        codes::E_SET_INSERT_TARGET,
                        format!("`<=` needs a set-typed target; `{name}` is {}", self.type_name(ty)),
                        pos,
                    ));
                    return false;
                };
                if comb != Combinator::SetUnion {
                    self.report(err(
                        codes::E_SET_INSERT_TARGET,
                        format!("`<=` needs a setUnion target; `{name}` uses {comb}"),
                        pos,
                    ));
                    return false;
                }
                let elem = (**elem).clone();
                self.expect(&elem, v, pos, "inserted element")
            }
            EffectOp::Assign => {
                if comb == Combinator::Count {
                    return true;
                }
                self.expect(ty, v, pos, &format!("value for `{name}`"))
            }
        }
    }

    // ---- class-level items ----

    /// Evaluates a constant initializer.
    pub fn const_value(&mut self, cls: ClassId, ty: &Type, e: &Expr) -> Option<Value> {
        let mut empty = Body::default();
        let r = self.expr(cls, Mode::Const, &mut empty, e)?;
        if !self.expect(ty, &r, e.pos, "initializer") {
            return None;
        }
        match eval_const(&r) {
            Ok(v) => Some(v.coerce(ty)),
            Err(f) => {
                self.report(err(codes::E_BAD_INITIALIZER, format!("initializer faults: {f}"), e.pos));
                None
            }
        }
    }

    pub fn condition(&mut self, cls: ClassId, mode: Mode, e: &Expr, what: &str) -> Option<RExpr> {
        let mut empty = Body::default();
        let r = self.expr(cls, mode, &mut empty, e)?;
        self.expect(&Type::Bool, &r, e.pos, what).then_some(r)
    }

    pub fn rule(&mut self, cls: ClassId, e: &Expr) -> Option<RExpr> {
        let mut empty = Body::default();
        self.expr(cls, Mode::Rule, &mut empty, e)
    }

    pub fn handler_body(&mut self, cls: ClassId, body: &mut Body, stmts: &[Stmt]) -> Vec<RStmt> {
        body.in_handler = true;
        body.epoch = 0;
        let out = self.block(cls, body, stmts);
        body.in_handler = false;
        out
    }

    pub fn script_body(&mut self, cls: ClassId, body: &mut Body, stmts: &[Stmt]) -> Vec<RStmt> {
        body.epoch = 0;
        self.block(cls, body, stmts)
    }
}

fn comparable(a: &Type, b: &Type) -> bool {
    (a.is_numeric() && b.is_numeric())
        || a == b
        || matches!((a, b), (Type::Ref(_) | Type::Null, Type::Null) | (Type::Null, Type::Ref(_)))
}

fn eval_const(e: &RExpr) -> Result<Value, value::Fault> {
    match &e.kind {
        RExprKind::Lit(v) => Ok(v.clone()),
        RExprKind::Unary(op, x) => value::unary(*op, &eval_const(x)?),
        RExprKind::Binary(op, a, b) => value::binary(*op, &eval_const(a)?, &eval_const(b)?),
        RExprKind::Call(f, args, _) => {
            let vals = args.iter().map(eval_const).collect::<Result<Vec<_>, _>>()?;
            value::call(*f, &vals)
        }
        _ => Err(value::Fault::Type("not constant".into())),
    }
}

/// Source text of an expression, for traces.
pub(crate) fn text_of(e: &Expr) -> String {
    format_expr(e)
}
