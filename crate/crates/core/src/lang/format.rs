//! Canonical pretty-printer. `parse(format_ast(u)) == u` for every parsed unit.

use super::ast::*;
use std::fmt::Write;

pub fn format_ast(unit: &CompilationUnit) -> String {
    let mut out = String::new();
    for (i, item) in unit.items.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match item {
            Item::Class(c) => class(&mut out, c),
            Item::Script(s) => {
                let _ = write!(out, "run {}(this: {}) ", s.name.name, s.class.name);
                block(&mut out, &s.body, 0);
                out.push('\n');
            }
            Item::Handler(h) => {
                let _ = write!(out, "on {} when ({})", h.class.name, format_expr(&h.condition));
                if h.restart {
                    out.push_str(" restart");
                }
                out.push(' ');
                block(&mut out, &h.body, 0);
                out.push('\n');
            }
        }
    }
    out
}

fn class(out: &mut String, c: &ClassDef) {
    let _ = writeln!(out, "class {} {{", c.name.name);
    if !c.state.is_empty() {
        out.push_str("state:\n");
        for s in &c.state {
            let _ = write!(out, "  {} {}", s.ty, s.name.name);
            if let Some(init) = &s.init {
                let _ = write!(out, " = {}", format_expr(init));
            }
            out.push_str(";\n");
        }
    }
    if !c.effects.is_empty() {
        out.push_str("effects:\n");
        for e in &c.effects {
            let _ = writeln!(out, "  {} {} : {};", e.ty, e.name.name, e.combinator);
        }
    }
    if !c.updates.is_empty() {
        out.push_str("update:\n");
        for u in &c.updates {
            let _ = writeln!(out, "  {} = {};", u.target.name, format_expr(&u.value));
        }
    }
    if !c.constraints.is_empty() {
        out.push_str("constraints:\n");
        for e in &c.constraints {
            let _ = writeln!(out, "  {};", format_expr(e));
        }
    }
    out.push_str("}\n");
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn block(out: &mut String, b: &Block, depth: usize) {
    out.push('{');
    if b.is_empty() {
        out.push('}');
        return;
    }
    out.push('\n');
    for s in b {
        indent(out, depth + 1);
        stmt(out, s, depth + 1);
        out.push('\n');
    }
    indent(out, depth);
    out.push('}');
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    match &s.kind {
        StmtKind::Let { name, value } => {
            let _ = write!(out, "let {} = {};", name.name, format_expr(value));
        }
        StmtKind::Effect { target, op, value } => {
            if let Some(base) = &target.base {
                out.push_str(&format_postfix(base));
                out.push('.');
            }
            out.push_str(&target.field.name);
            out.push_str(match op {
                EffectOp::Assign => " <- ",
                EffectOp::Insert => " <= ",
            });
            out.push_str(&format_expr(value));
            out.push(';');
        }
        StmtKind::If { cond, then, els } => {
            let _ = write!(out, "if ({}) ", format_expr(cond));
            block(out, then, depth);
            match els.as_deref() {
                None => {}
                Some([only]) if matches!(only.kind, StmtKind::If { .. }) => {
                    out.push_str(" else ");
                    stmt(out, only, depth);
                }
                Some(b) => {
                    out.push_str(" else ");
                    block(out, &b.to_vec(), depth);
                }
            }
        }
        StmtKind::Accum {
            acc_ty,
            acc,
            combinator,
            var_ty,
            var,
            source,
            body,
            after,
        } => {
            let _ = write!(
                out,
                "accum {} {} with {} over {} {} from {} ",
                acc_ty,
                acc.name,
                combinator,
                var_ty,
                var.name,
                format_expr(source)
            );
            block(out, body, depth);
            out.push_str(" in ");
            block(out, after, depth);
        }
        StmtKind::Wait => out.push_str("waitNextTick;"),
        StmtKind::Atomic { body } => {
            out.push_str("atomic ");
            block(out, body, depth);
        }
        StmtKind::Spawn { class, inits } => {
            let _ = write!(out, "spawn {} {{", class.name);
            for (i, (f, e)) in inits.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, " {}: {}", f.name, format_expr(e));
            }
            if !inits.is_empty() {
                out.push(' ');
            }
            out.push_str("};");
        }
        StmtKind::Destroy { target } => {
            let _ = write!(out, "destroy {};", format_expr(target));
        }
    }
}

pub fn format_expr(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e, 0);
    s
}

/// Formats an expression that appears before `.field`.
fn format_postfix(e: &Expr) -> String {
    let mut s = String::new();
    expr(&mut s, e, 8);
    s
}

fn format_num(v: f64) -> String {
    // Debug output is the shortest round-tripping form and always contains
    // a '.' or an exponent, so it re-lexes as a number literal.
    format!("{v:?}")
}

fn format_str(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// `ctx` is the binding strength required of `e` without parentheses:
/// binary precedences are 1..=6, unary operands need 7, postfix bases 8.
fn expr(out: &mut String, e: &Expr, ctx: u8) {
    match &e.kind {
        ExprKind::Num(v) => out.push_str(&format_num(*v)),
        ExprKind::Int(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Str(s) => out.push_str(&format_str(s)),
        ExprKind::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        ExprKind::Null => out.push_str("null"),
        ExprKind::This => out.push_str("this"),
        ExprKind::Ident(n) => out.push_str(n),
        ExprKind::Field(base, f) => {
            expr(out, base, 8);
            out.push('.');
            out.push_str(&f.name);
        }
        ExprKind::Call(f, args) => {
            out.push_str(&f.name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(out, a, 0);
            }
            out.push(')');
        }
        ExprKind::Unary(op, inner) => {
            let paren = ctx > 7;
            if paren {
                out.push('(');
            }
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            expr(out, inner, 7);
            if paren {
                out.push(')');
            }
        }
        ExprKind::Binary(op, l, r) => {
            let p = op.precedence();
            let paren = p < ctx;
            if paren {
                out.push('(');
            }
            expr(out, l, p);
            let _ = write!(out, " {} ", op.symbol());
            expr(out, r, p + 1);
            if paren {
                out.push(')');
            }
        }
    }
}
