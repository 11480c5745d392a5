//! Semantic analysis: resolves a parsed unit into a [`Program`], enforcing
//! the state/effect access rules, and lowers multi-tick scripts and event
//! handlers.

mod check;
pub mod ir;
pub mod lower;
pub mod schema;

pub use ir::*;
pub use lower::desugar_handlers;
pub use schema::{derive_schema, PhysicalSchema};

use crate::diag::{codes, Diagnostic, Diagnostics};
use crate::lang::ast::{CompilationUnit, Item, Pos, TypeExpr};
use crate::lang::{format_ast, parse, parse_expr};
use crate::value::{ClassId, Type, Value};
use check::{Body, Checker, Mode};
use sha2::{Digest, Sha256};
use std::collections::HashSet;

/// Parses and analyzes a source text.
pub fn compile(source: &str) -> Result<Program, Diagnostics> {
    analyze(&parse(source)?)
}

/// Hex SHA-256 of the canonical formatting of a unit. Checkpoints record it
/// so a restore against a different program is rejected.
pub fn unit_hash(unit: &CompilationUnit) -> String {
    let digest = Sha256::digest(format_ast(unit).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn err(code: &'static str, msg: impl Into<String>, pos: Pos) -> Diagnostic {
    Diagnostic::error(code, msg, pos.line, pos.column)
}

pub fn analyze(unit: &CompilationUnit) -> Result<Program, Diagnostics> {
    let mut ck = Checker::new();
    let classes: Vec<_> = unit.classes().collect();

    for c in &classes {
        if ck.index.contains_key(&c.name.name) {
            ck.diags.push(err(
                codes::E_DUPLICATE_CLASS,
                format!("class `{}` is defined twice", c.name.name),
                c.name.pos,
            ));
            continue;
        }
        let id = ClassId(ck.classes.len() as u32);
        ck.index.insert(c.name.name.clone(), id);
        ck.classes.push(ClassInfo {
            id,
            name: c.name.name.clone(),
            state: Vec::new(),
            effects: Vec::new(),
            rules: Vec::new(),
            constraints: Vec::new(),
            constrained: Vec::new(),
            txn_effects: Vec::new(),
            body: None,
            pc: None,
            txn_status: None,
        });
    }
    let defs: Vec<_> = classes
        .iter()
        .filter(|c| ck.index.contains_key(&c.name.name))
        .enumerate()
        .filter(|(i, c)| ck.index[&c.name.name].0 as usize == *i)
        .map(|(_, c)| *c)
        .collect();

    // Fields and effects.
    for (i, def) in defs.iter().enumerate() {
        let cls = ClassId(i as u32);
        let mut names = HashSet::new();
        for s in &def.state {
            if !names.insert(s.name.name.clone()) {
                continue;
            }
            if s.name.name == TXN_STATUS_FIELD {
                ck.diags.push(err(
                    codes::E_DUPLICATE_FIELD,
                    format!("`{TXN_STATUS_FIELD}` is reserved"),
                    s.name.pos,
                ));
                continue;
            }
            let Some(ty) = ck.resolve_type(&s.ty, s.name.pos) else {
                continue;
            };
            let init = match &s.init {
                Some(e) => ck.const_value(cls, &ty, e).unwrap_or_else(|| ty.default_value()),
                None => ty.default_value(),
            };
            ck.classes[i].state.push(FieldInfo {
                name: s.name.name.clone(),
                ty,
                init,
                synthetic: false,
            });
        }
        for e in &def.effects {
            if !names.insert(e.name.name.clone()) {
                continue;
            }
            let Some(ty) = ck.resolve_type(&e.ty, e.name.pos) else {
                continue;
            };
            ck.check_combinator(e.combinator, &ty, e.name.pos);
            ck.classes[i].effects.push(EffectInfo {
                name: e.name.name.clone(),
                ty,
                combinator: e.combinator,
                synthetic: false,
            });
        }
    }

    // Scripts and handlers, grouped by class.
    let mut scripts = vec![None; defs.len()];
    let mut handlers = vec![Vec::new(); defs.len()];
    for item in &unit.items {
        let (class, pos) = match item {
            Item::Script(s) => (&s.class, s.pos),
            Item::Handler(h) => (&h.class, h.pos),
            Item::Class(_) => continue,
        };
        let Some(id) = ck.index.get(&class.name).copied() else {
            ck.diags.push(err(
                codes::E_UNKNOWN_CLASS,
                format!("unknown class `{}`", class.name),
                class.pos,
            ));
            continue;
        };
        let slot = id.0 as usize;
        match item {
            Item::Script(s) => {
                if scripts[slot].is_some() {
                    ck.diags.push(err(
                        codes::E_DUPLICATE_SCRIPT,
                        format!("class `{}` already has a script", class.name),
                        pos,
                    ));
                } else {
                    scripts[slot] = Some(s);
                }
            }
            Item::Handler(h) => handlers[slot].push(h),
            Item::Class(_) => {}
        }
    }

    // Program counter for scripts that span ticks.
    for (i, script) in scripts.iter().enumerate() {
        if script.is_some_and(|s| lower::has_wait(&s.body)) {
            let c = &mut ck.classes[i];
            let state = c.state.len() as FieldId;
            c.state.push(FieldInfo {
                name: PC_FIELD.into(),
                ty: Type::Int,
                init: Value::Int(0),
                synthetic: true,
            });
            let next = c.effects.len() as EffectId;
            for name in [PC_NEXT, PC_RESTART] {
                c.effects.push(EffectInfo {
                    name: name.into(),
                    ty: Type::Int,
                    combinator: crate::lang::ast::Combinator::Max,
                    synthetic: true,
                });
            }
            c.pc = Some(PcFields {
                state,
                next,
                restart: next + 1,
            });
        }
    }

    // Update rules.
    for (i, def) in defs.iter().enumerate() {
        let cls = ClassId(i as u32);
        for r in &def.updates {
            let c = &ck.classes[i];
            let Some(fid) = c.field(&r.target.name).filter(|f| !c.state[*f as usize].synthetic) else {
                let msg = format!("`{}` is not a state field of `{}`", r.target.name, c.name);
                ck.diags.push(err(codes::E_RULE_TARGET, msg, r.target.pos));
                continue;
            };
            if c.rule(fid).is_some() {
                ck.diags.push(err(
                    codes::E_DUPLICATE_RULE,
                    format!("`{}` already has an update rule", r.target.name),
                    r.target.pos,
                ));
                continue;
            }
            let fty = c.state[fid as usize].ty.clone();
            if let Some(e) = ck.rule(cls, &r.value) {
                if fty.accepts(&e.ty) {
                    ck.classes[i].rules.push((fid, e));
                } else {
                    let msg = format!(
                        "update rule for `{}`: expected {}, found {}",
                        r.target.name,
                        ck.type_name(&fty),
                        ck.type_name(&e.ty)
                    );
                    ck.diags.push(err(codes::E_TYPE, msg, r.value.pos));
                }
            }
        }
    }

    // Constraints and the transaction-owned partition.
    for (i, def) in defs.iter().enumerate() {
        let cls = ClassId(i as u32);
        for e in &def.constraints {
            if let Some(r) = ck.condition(cls, Mode::Constraint, e, "constraint") {
                ck.classes[i].constraints.push(ConstraintDef {
                    expr: r,
                    text: check::text_of(e),
                });
            }
        }
        let c = &mut ck.classes[i];
        let mut constrained = Vec::new();
        for k in &c.constraints {
            k.expr.walk(&mut |x| {
                if let RExprKind::SelfField(f) = x.kind {
                    constrained.push(f);
                }
            });
        }
        constrained.sort_unstable();
        constrained.dedup();
        let mut txn_effects = Vec::new();
        for (f, rule) in &c.rules {
            if constrained.contains(f) {
                rule.walk(&mut |x| {
                    if let RExprKind::Effect(e) = x.kind {
                        txn_effects.push(e);
                    }
                });
            }
        }
        txn_effects.sort_unstable();
        txn_effects.dedup();
        c.constrained = constrained;
        c.txn_effects = txn_effects;
    }

    let any_constraints = ck.classes.iter().any(|c| !c.constraints.is_empty());
    if any_constraints {
        for (i, c) in ck.classes.iter_mut().enumerate() {
            if scripts[i].is_some() || !handlers[i].is_empty() {
                c.txn_status = Some(c.state.len() as FieldId);
                c.state.push(FieldInfo {
                    name: TXN_STATUS_FIELD.into(),
                    ty: Type::Int,
                    init: Value::Int(0),
                    synthetic: true,
                });
            }
        }
    }

    // Bodies.
    for i in 0..defs.len() {
        if scripts[i].is_none() && handlers[i].is_empty() {
            continue;
        }
        let cls = ClassId(i as u32);
        let pc = ck.classes[i].pc;
        let mut body = Body::default();
        let mut lowered_handlers = Vec::new();
        for h in &handlers[i] {
            let cond = ck.condition(cls, Mode::Condition, &h.condition, "handler condition");
            let stmts = ck.handler_body(cls, &mut body, &h.body);
            if let Some(cond) = cond {
                lowered_handlers.push(lower::lower_handler(&mut ck, cls, pc, cond, stmts, h.restart));
            }
        }
        let (script, segments) = match scripts[i] {
            Some(s) => {
                let stmts = ck.script_body(cls, &mut body, &s.body);
                (Some(s.name.name.clone()), lower::lower_multitick(&mut ck, cls, pc, stmts, s.pos))
            }
            None => (None, vec![Vec::new()]),
        };
        ck.classes[i].body = Some(ClassBody {
            script,
            handlers: lowered_handlers,
            segments,
            locals: body.locals,
        });
    }

    // Effects no rule reads.
    let mut warnings = Vec::new();
    for (i, def) in defs.iter().enumerate() {
        let c = &ck.classes[i];
        for e in &def.effects {
            let Some(eid) = c.effect(&e.name.name) else { continue };
            let used = c.rules.iter().any(|(_, r)| {
                let mut hit = false;
                r.walk(&mut |x| hit |= x.kind == RExprKind::Effect(eid));
                hit
            });
            if !used {
                warnings.push(err(
                    codes::W_UNUSED_EFFECT,
                    format!("effect `{}` is not read by any update rule", e.name.name),
                    e.name.pos,
                ));
                warnings.last_mut().unwrap().severity = crate::diag::Severity::Warning;
            }
        }
    }

    let mut program = Program {
        classes: ck.classes,
        unit: unit.clone(),
        unit_hash: unit_hash(unit),
        access: ck.access,
        warnings,
    };
    let dups = derive_schema(&program).duplicate_tables();
    if !dups.is_empty() {
        ck.diags.push(Diagnostic::error(
            codes::E_UNCOMPILABLE,
            format!("fields map to the same physical table: {}", dups.join(", ")),
            1,
            1,
        ));
    }
    if ck.diags.iter().any(Diagnostic::is_error) {
        ck.diags.extend(std::mem::take(&mut program.warnings));
        return Err(Diagnostics(ck.diags));
    }
    Ok(program)
}

/// Compiles a boolean condition over the state of one class, as used by
/// breakpoints.
pub fn compile_condition(p: &Program, class: ClassId, text: &str) -> Result<RExpr, Diagnostics> {
    let e = parse_expr(text)?;
    let mut ck = Checker::new();
    ck.classes = p.classes.clone();
    for c in &p.classes {
        ck.index.insert(c.name.clone(), c.id);
    }
    match ck.condition(class, Mode::Condition, &e, "condition") {
        Some(r) if ck.diags.is_empty() => Ok(r),
        _ => Err(Diagnostics(ck.diags)),
    }
}

/// Resolves a source-level type name against a program.
pub fn resolve_type(p: &Program, t: &TypeExpr) -> Option<Type> {
    let mut ck = Checker::new();
    ck.classes = p.classes.clone();
    for c in &p.classes {
        ck.index.insert(c.name.clone(), c.id);
    }
    ck.resolve_type(t, Pos::default())
}
