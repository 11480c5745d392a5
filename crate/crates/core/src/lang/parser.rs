//! Recursive-descent parser.
//!
//! ```text
//! unit      = { class | script | handler } ;
//! class     = "class" IDENT "{" { section } "}" ;
//! section   = "state" ":" { type IDENT [ "=" expr ] ";" }
//!           | "effects" ":" { type IDENT ":" COMBINATOR ";" }
//!           | "update" ":" { IDENT "=" expr ";" }
//!           | "constraints" ":" { expr ";" } ;
//! script    = "run" IDENT "(" "this" ":" IDENT ")" block ;
//! handler   = "on" IDENT "when" "(" expr ")" [ "restart" ] block ;
//! block     = "{" { stmt } "}" ;
//! stmt      = "let" IDENT "=" expr ";"
//!           | "if" "(" expr ")" block [ "else" ( block | if ) ]
//!           | "accum" type IDENT "with" COMBINATOR "over" type IDENT "from" expr block "in" block
//!           | "waitNextTick" ";"
//!           | "atomic" block
//!           | "spawn" IDENT "{" [ IDENT ":" expr { "," IDENT ":" expr } ] "}" ";"
//!           | "destroy" expr ";"
//!           | lvalue ( "<-" | "<=" ) expr ";" ;
//! lvalue    = ( IDENT | "this" ) { "." IDENT } ;
//! type      = "number" | "int" | "bool" | "string" | "ref" "<" IDENT ">" | "set" "<" type ">" | IDENT ;
//! ```
//!
//! Expressions use the usual precedence: `||` < `&&` < `== !=` <
//! `< <= > >=` < `+ -` < `* / %` < unary `- !` < postfix `.f`.

use super::ast::*;
use super::token::{tokenize, unescape, Token, TokenKind};
use crate::diag::{codes, Diagnostic, Diagnostics};
use std::collections::HashSet;

const MAX_DEPTH: usize = 200;

/// Tokenizes and parses a source text.
pub fn parse(source: &str) -> Result<CompilationUnit, Diagnostics> {
    let tokens = tokenize(source).map_err(|d| Diagnostics(vec![d]))?;
    parse_unit(&tokens)
}

pub fn parse_unit(tokens: &[Token]) -> Result<CompilationUnit, Diagnostics> {
    let mut p = Parser {
        toks: tokens,
        i: 0,
        diags: Vec::new(),
        depth: 0,
    };
    let unit = p.unit();
    if p.diags.iter().any(|d| d.is_error()) {
        Err(Diagnostics(p.diags))
    } else {
        Ok(unit)
    }
}

/// Parses a standalone expression, e.g. a breakpoint condition.
pub fn parse_expr(source: &str) -> Result<Expr, Diagnostics> {
    let tokens = tokenize(source).map_err(|d| Diagnostics(vec![d]))?;
    let mut p = Parser {
        toks: &tokens,
        i: 0,
        diags: Vec::new(),
        depth: 0,
    };
    let e = p.expr().and_then(|e| p.expect(TokenKind::Eof).map(|_| e));
    match e {
        Ok(e) => Ok(e),
        Err(d) => Err(Diagnostics(vec![d])),
    }
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser<'t> {
    toks: &'t [Token],
    i: usize,
    diags: Vec<Diagnostic>,
    depth: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> &Token {
        let last = self.toks.len().saturating_sub(1);
        &self.toks[self.i.min(last)]
    }

    fn peek_kind(&self) -> TokenKind {
        if self.toks.is_empty() {
            TokenKind::Eof
        } else {
            self.peek().kind
        }
    }

    fn peek_at(&self, k: usize) -> TokenKind {
        self.toks
            .get(self.i + k)
            .map(|t| t.kind)
            .unwrap_or(TokenKind::Eof)
    }

    fn pos(&self) -> Pos {
        if self.toks.is_empty() {
            return Pos::new(1, 1);
        }
        let t = self.peek();
        Pos::new(t.line, t.column)
    }

    fn advance(&mut self) -> Token {
        let t = if self.toks.is_empty() {
            Token {
                kind: TokenKind::Eof,
                lexeme: String::new(),
                line: 1,
                column: 1,
                trivia: String::new(),
            }
        } else {
            self.peek().clone()
        };
        if self.i < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, kind: TokenKind) -> bool {
        if self.peek_kind() == kind {
            self.advance();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &[TokenKind]) -> Diagnostic {
        let t = if self.toks.is_empty() { None } else { Some(self.peek()) };
        let found = match t {
            Some(t) if t.kind == TokenKind::Eof => "end of input".to_string(),
            Some(t) => format!("'{}'", t.lexeme),
            None => "end of input".to_string(),
        };
        let list: Vec<_> = expected.iter().map(|k| k.describe()).collect();
        let pos = self.pos();
        Diagnostic::error(
            codes::E_SYNTAX,
            format!("expected one of [{}], found {found}", list.join(", ")),
            pos.line,
            pos.column,
        )
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<Token> {
        if self.peek_kind() == kind {
            Ok(self.advance())
        } else {
            Err(self.unexpected(&[kind]))
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        let pos = self.pos();
        let t = self.expect(TokenKind::Ident)?;
        Ok(Ident::new(t.lexeme, pos))
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let pos = self.pos();
            return Err(Diagnostic::error(
                codes::E_NESTING,
                "nesting too deep",
                pos.line,
                pos.column,
            ));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn unit(&mut self) -> CompilationUnit {
        let mut items = Vec::new();
        let mut class_names: HashSet<String> = HashSet::new();
        loop {
            let item = match self.peek_kind() {
                TokenKind::Eof => break,
                TokenKind::Class => self.class().map(Item::Class),
                TokenKind::Run => self.script().map(Item::Script),
                TokenKind::On => self.handler().map(Item::Handler),
                _ => Err(self.unexpected(&[TokenKind::Class, TokenKind::Run, TokenKind::On])),
            };
            match item {
                Ok(item) => {
                    if let Item::Class(c) = &item {
                        if !class_names.insert(c.name.name.clone()) {
                            self.diags.push(Diagnostic::error(
                                codes::E_DUPLICATE_CLASS,
                                format!("class '{}' is defined more than once", c.name.name),
                                c.name.pos.line,
                                c.name.pos.column,
                            ));
                        }
                    }
                    items.push(item);
                }
                Err(d) => {
                    self.diags.push(d);
                    self.depth = 0;
                    self.recover();
                }
            }
        }
        CompilationUnit { items }
    }

    /// Skips ahead to the next token that can start a top-level item.
    fn recover(&mut self) {
        self.advance();
        while !matches!(
            self.peek_kind(),
            TokenKind::Eof | TokenKind::Class | TokenKind::Run | TokenKind::On
        ) {
            self.advance();
        }
    }

    fn class(&mut self) -> PResult<ClassDef> {
        let pos = self.pos();
        self.expect(TokenKind::Class)?;
        let name = self.ident()?;
        self.expect(TokenKind::LBrace)?;
        let mut class = ClassDef {
            name,
            state: Vec::new(),
            effects: Vec::new(),
            updates: Vec::new(),
            constraints: Vec::new(),
            pos,
        };
        loop {
            match self.peek_kind() {
                TokenKind::RBrace => {
                    self.advance();
                    break;
                }
                TokenKind::State => {
                    self.advance();
                    self.expect(TokenKind::Colon)?;
                    while !self.at_section_end() {
                        let ty = self.ty()?;
                        let name = self.ident()?;
                        let init = if self.eat(TokenKind::Assign) {
                            Some(self.expr()?)
                        } else {
                            None
                        };
                        self.expect(TokenKind::Semicolon)?;
                        class.state.push(StateDecl { ty, name, init });
                    }
                }
                TokenKind::Effects => {
                    self.advance();
                    self.expect(TokenKind::Colon)?;
                    while !self.at_section_end() {
                        let ty = self.ty()?;
                        let name = self.ident()?;
                        self.expect(TokenKind::Colon)?;
                        let combinator = self.combinator()?;
                        self.expect(TokenKind::Semicolon)?;
                        class.effects.push(EffectDecl {
                            ty,
                            name,
                            combinator,
                        });
                    }
                }
                TokenKind::Update => {
                    self.advance();
                    self.expect(TokenKind::Colon)?;
                    while !self.at_section_end() {
                        let target = self.ident()?;
                        self.expect(TokenKind::Assign)?;
                        let value = self.expr()?;
                        self.expect(TokenKind::Semicolon)?;
                        class.updates.push(UpdateRule { target, value });
                    }
                }
                TokenKind::Constraints => {
                    self.advance();
                    self.expect(TokenKind::Colon)?;
                    while !self.at_section_end() {
                        let e = self.expr()?;
                        self.expect(TokenKind::Semicolon)?;
                        class.constraints.push(e);
                    }
                }
                _ => {
                    return Err(self.unexpected(&[
                        TokenKind::State,
                        TokenKind::Effects,
                        TokenKind::Update,
                        TokenKind::Constraints,
                        TokenKind::RBrace,
                    ]))
                }
            }
        }
        self.check_duplicate_fields(&class);
        Ok(class)
    }

    fn check_duplicate_fields(&mut self, class: &ClassDef) {
        let mut seen = HashSet::new();
        let names = class
            .state
            .iter()
            .map(|s| &s.name)
            .chain(class.effects.iter().map(|e| &e.name));
        for n in names {
            if !seen.insert(n.name.as_str()) {
                self.diags.push(Diagnostic::error(
                    codes::E_DUPLICATE_FIELD,
                    format!(
                        "field '{}' is declared more than once in class '{}'",
                        n.name, class.name.name
                    ),
                    n.pos.line,
                    n.pos.column,
                ));
            }
        }
    }

    fn at_section_end(&self) -> bool {
        matches!(
            self.peek_kind(),
            TokenKind::RBrace
                | TokenKind::State
                | TokenKind::Effects
                | TokenKind::Update
                | TokenKind::Constraints
                | TokenKind::Eof
        )
    }

    fn combinator(&mut self) -> PResult<Combinator> {
        let t = self.peek().clone();
        if t.kind == TokenKind::Ident {
            if let Some(c) = Combinator::from_name(&t.lexeme) {
                self.advance();
                return Ok(c);
            }
        }
        Err(Diagnostic::error(
            codes::E_SYNTAX,
            format!(
                "expected a combinator (sum, avg, min, max, count, or, and, setUnion), found '{}'",
                t.lexeme
            ),
            t.line,
            t.column,
        ))
    }

    fn ty(&mut self) -> PResult<TypeExpr> {
        self.enter()?;
        let r = self.ty_inner();
        self.leave();
        r
    }

    fn ty_inner(&mut self) -> PResult<TypeExpr> {
        let t = match self.peek_kind() {
            TokenKind::Number => TypeExpr::Number,
            TokenKind::Int => TypeExpr::Int,
            TokenKind::Bool => TypeExpr::Bool,
            TokenKind::String => TypeExpr::Str,
            TokenKind::Ref => {
                self.advance();
                self.expect(TokenKind::Lt)?;
                let c = self.ident()?;
                self.expect(TokenKind::Gt)?;
                return Ok(TypeExpr::Ref(c.name));
            }
            TokenKind::Set => {
                self.advance();
                self.expect(TokenKind::Lt)?;
                let inner = self.ty()?;
                self.expect(TokenKind::Gt)?;
                return Ok(TypeExpr::Set(Box::new(inner)));
            }
            TokenKind::Ident => {
                let c = self.advance();
                return Ok(TypeExpr::Ref(c.lexeme));
            }
            _ => {
                return Err(self.unexpected(&[
                    TokenKind::Number,
                    TokenKind::Int,
                    TokenKind::Bool,
                    TokenKind::String,
                    TokenKind::Ref,
                    TokenKind::Set,
                    TokenKind::Ident,
                ]))
            }
        };
        self.advance();
        Ok(t)
    }

    fn script(&mut self) -> PResult<ScriptDef> {
        let pos = self.pos();
        self.expect(TokenKind::Run)?;
        let name = self.ident()?;
        self.expect(TokenKind::LParen)?;
        self.expect(TokenKind::This)?;
        self.expect(TokenKind::Colon)?;
        let class = self.ident()?;
        self.expect(TokenKind::RParen)?;
        let body = self.block()?;
        Ok(ScriptDef {
            name,
            class,
            body,
            pos,
        })
    }

    fn handler(&mut self) -> PResult<HandlerDef> {
        let pos = self.pos();
        self.expect(TokenKind::On)?;
        let class = self.ident()?;
        self.expect(TokenKind::When)?;
        self.expect(TokenKind::LParen)?;
        let condition = self.expr()?;
        self.expect(TokenKind::RParen)?;
        let restart = self.eat(TokenKind::Restart);
        let body = self.block()?;
        Ok(HandlerDef {
            class,
            condition,
            restart,
            body,
            pos,
        })
    }

    fn block(&mut self) -> PResult<Block> {
        self.enter()?;
        self.expect(TokenKind::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(TokenKind::RBrace) {
            if self.peek_kind() == TokenKind::Eof {
                return Err(self.unexpected(&[TokenKind::RBrace]));
            }
            stmts.push(self.stmt()?);
        }
        self.leave();
        Ok(stmts)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let kind = match self.peek_kind() {
            TokenKind::Let => {
                self.advance();
                let name = self.ident()?;
                self.expect(TokenKind::Assign)?;
                let value = self.expr()?;
                self.expect(TokenKind::Semicolon)?;
                StmtKind::Let { name, value }
            }
            TokenKind::If => return self.if_stmt(),
            TokenKind::Accum => {
                self.advance();
                let acc_ty = self.ty()?;
                let acc = self.ident()?;
                self.expect(TokenKind::With)?;
                let combinator = self.combinator()?;
                self.expect(TokenKind::Over)?;
                let var_ty = self.ty()?;
                let var = self.ident()?;
                self.expect(TokenKind::From)?;
                let source = self.expr()?;
                let body = self.block()?;
                self.expect(TokenKind::In)?;
                let after = self.block()?;
                StmtKind::Accum {
                    acc_ty,
                    acc,
                    combinator,
                    var_ty,
                    var,
                    source,
                    body,
                    after,
                }
            }
            TokenKind::WaitNextTick => {
                self.advance();
                self.expect(TokenKind::Semicolon)?;
                StmtKind::Wait
            }
            TokenKind::Atomic => {
                self.advance();
                StmtKind::Atomic {
                    body: self.block()?,
                }
            }
            TokenKind::Spawn => {
                self.advance();
                let class = self.ident()?;
                self.expect(TokenKind::LBrace)?;
                let mut inits = Vec::new();
                if !self.eat(TokenKind::RBrace) {
                    loop {
                        let f = self.ident()?;
                        self.expect(TokenKind::Colon)?;
                        let e = self.expr()?;
                        inits.push((f, e));
                        if self.eat(TokenKind::RBrace) {
                            break;
                        }
                        self.expect(TokenKind::Comma)?;
                    }
                }
                self.expect(TokenKind::Semicolon)?;
                StmtKind::Spawn { class, inits }
            }
            TokenKind::Destroy => {
                self.advance();
                let target = self.expr()?;
                self.expect(TokenKind::Semicolon)?;
                StmtKind::Destroy { target }
            }
            TokenKind::Ident | TokenKind::This => {
                let target = self.lvalue()?;
                let op = match self.peek_kind() {
                    TokenKind::EffectAssign => EffectOp::Assign,
                    TokenKind::Le => EffectOp::Insert,
                    _ => return Err(self.unexpected(&[TokenKind::EffectAssign, TokenKind::Le])),
                };
                self.advance();
                let value = self.expr()?;
                self.expect(TokenKind::Semicolon)?;
                StmtKind::Effect { target, op, value }
            }
            _ => {
                return Err(self.unexpected(&[
                    TokenKind::Let,
                    TokenKind::If,
                    TokenKind::Accum,
                    TokenKind::WaitNextTick,
                    TokenKind::Atomic,
                    TokenKind::Spawn,
                    TokenKind::Destroy,
                    TokenKind::Ident,
                ]))
            }
        };
        Ok(Stmt { kind, pos })
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        self.enter()?;
        let pos = self.pos();
        self.expect(TokenKind::If)?;
        self.expect(TokenKind::LParen)?;
        let cond = self.expr()?;
        self.expect(TokenKind::RParen)?;
        let then = self.block()?;
        let els = if self.eat(TokenKind::Else) {
            if self.peek_kind() == TokenKind::If {
                Some(vec![self.if_stmt()?])
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        self.leave();
        Ok(Stmt {
            kind: StmtKind::If { cond, then, els },
            pos,
        })
    }

    fn lvalue(&mut self) -> PResult<LValue> {
        let pos = self.pos();
        let mut base = match self.peek_kind() {
            TokenKind::This => {
                self.advance();
                Expr::new(ExprKind::This, pos)
            }
            _ => {
                let id = self.ident()?;
                Expr::new(ExprKind::Ident(id.name), pos)
            }
        };
        if self.peek_kind() != TokenKind::Dot {
            return match base.kind {
                ExprKind::Ident(name) => Ok(LValue {
                    base: None,
                    field: Ident::new(name, pos),
                }),
                _ => Err(self.unexpected(&[TokenKind::Dot])),
            };
        }
        loop {
            self.expect(TokenKind::Dot)?;
            let field = self.ident()?;
            if self.peek_kind() == TokenKind::Dot {
                let p = base.pos;
                base = Expr::new(ExprKind::Field(Box::new(base), field), p);
            } else {
                return Ok(LValue {
                    base: Some(base),
                    field,
                });
            }
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.binary(1);
        self.leave();
        r
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek_kind() {
            TokenKind::OrOr => BinOp::Or,
            TokenKind::AndAnd => BinOp::And,
            TokenKind::EqEq => BinOp::Eq,
            TokenKind::Ne => BinOp::Ne,
            TokenKind::Lt => BinOp::Lt,
            TokenKind::Le => BinOp::Le,
            TokenKind::Gt => BinOp::Gt,
            TokenKind::Ge => BinOp::Ge,
            TokenKind::Plus => BinOp::Add,
            TokenKind::Minus => BinOp::Sub,
            TokenKind::Star => BinOp::Mul,
            TokenKind::Slash => BinOp::Div,
            TokenKind::Percent => BinOp::Rem,
            _ => return None,
        })
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.advance();
            self.enter()?;
            let rhs = self.binary(prec + 1)?;
            self.leave();
            let pos = lhs.pos;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let op = match self.peek_kind() {
            TokenKind::Minus => UnOp::Neg,
            TokenKind::Bang => UnOp::Not,
            _ => return self.postfix(),
        };
        self.advance();
        self.enter()?;
        let inner = self.unary()?;
        self.leave();
        Ok(Expr::new(ExprKind::Unary(op, Box::new(inner)), pos))
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.peek_kind() == TokenKind::Dot {
            self.advance();
            let f = self.ident()?;
            let pos = e.pos;
            e = Expr::new(ExprKind::Field(Box::new(e), f), pos);
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let t = self.peek().clone();
        let kind = match t.kind {
            TokenKind::IntLit => ExprKind::Int(t.lexeme.parse().map_err(|_| self.unexpected(&[]))?),
            TokenKind::NumLit => ExprKind::Num(t.lexeme.parse().map_err(|_| self.unexpected(&[]))?),
            TokenKind::StrLit => ExprKind::Str(unescape(&t.lexeme)),
            TokenKind::True => ExprKind::Bool(true),
            TokenKind::False => ExprKind::Bool(false),
            TokenKind::Null => ExprKind::Null,
            TokenKind::This => ExprKind::This,
            TokenKind::Ident => {
                if self.peek_at(1) == TokenKind::LParen {
                    let name = self.ident()?;
                    self.advance();
                    let mut args = Vec::new();
                    if !self.eat(TokenKind::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(TokenKind::RParen) {
                                break;
                            }
                            self.expect(TokenKind::Comma)?;
                        }
                    }
                    return Ok(Expr::new(ExprKind::Call(name, args), pos));
                }
                ExprKind::Ident(t.lexeme.clone())
            }
            TokenKind::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                return Ok(e);
            }
            _ => {
                return Err(self.unexpected(&[
                    TokenKind::Ident,
                    TokenKind::IntLit,
                    TokenKind::NumLit,
                    TokenKind::StrLit,
                    TokenKind::True,
                    TokenKind::False,
                    TokenKind::Null,
                    TokenKind::This,
                    TokenKind::LParen,
                    TokenKind::Minus,
                    TokenKind::Bang,
                ]))
            }
        };
        self.advance();
        Ok(Expr::new(kind, pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const FIG1: &str = "
class Unit {
state:
  number player = 0;
  number x = 0;
  number y = 0;
  number health = 0;
effects:
  number vx : avg;
  number vy : avg;
  number damage : sum;
}
";

    #[test]
    fn class_declaration_fragment() {
        let unit = parse(FIG1).unwrap();
        let c = unit.classes().next().unwrap();
        assert_eq!(c.name.name, "Unit");
        let state: Vec<_> = c.state.iter().map(|s| s.name.name.as_str()).collect();
        assert_eq!(state, ["player", "x", "y", "health"]);
        let effects: Vec<_> = c
            .effects
            .iter()
            .map(|e| (e.name.name.as_str(), e.combinator))
            .collect();
        assert_eq!(
            effects,
            [
                ("vx", Combinator::Avg),
                ("vy", Combinator::Avg),
                ("damage", Combinator::Sum)
            ]
        );
    }

    #[test]
    fn empty_class() {
        let unit = parse("class Empty { state: effects: }").unwrap();
        let c = unit.classes().next().unwrap();
        assert!(c.state.is_empty() && c.effects.is_empty());
    }

    #[test]
    fn accum_loop_as_printed() {
        // The loop exactly as it appears in the literature, `...` dropped.
        let src = "run count(this: Unit) {
accum number cnt with sum over unit w from UNIT {
  if (u.x >= x-range && u.x <= x+range &&
      u.y >= y-range && u.y <= y+range) {
    cnt <- 1;
  }
} in {
}
}";
        let unit = parse(src).unwrap();
        let s = unit.scripts().next().unwrap();
        let StmtKind::Accum {
            acc_ty,
            acc,
            combinator,
            var_ty,
            var,
            source,
            body,
            after,
        } = &s.body[0].kind
        else {
            panic!("not an accum loop")
        };
        assert_eq!(acc.name, "cnt");
        assert_eq!(*acc_ty, TypeExpr::Number);
        assert_eq!(*combinator, Combinator::Sum);
        assert_eq!(var.name, "w");
        assert_eq!(*var_ty, TypeExpr::Ref("unit".into()));
        assert_eq!(source.kind, ExprKind::Ident("UNIT".into()));
        assert!(after.is_empty());
        let StmtKind::If { then, els: None, .. } = &body[0].kind else {
            panic!("block1 should be a guarded assignment")
        };
        assert!(matches!(
            &then[0].kind,
            StmtKind::Effect { target: LValue { base: None, field }, op: EffectOp::Assign, .. }
                if field.name == "cnt"
        ));
    }

    #[test]
    fn set_insert_versus_comparison() {
        let src = "run s(this: U) { if (a <= b) { items <= i; } c.damage <- 1; }";
        let unit = parse(src).unwrap();
        let body = &unit.scripts().next().unwrap().body;
        let StmtKind::If { cond, then, .. } = &body[0].kind else { panic!() };
        assert!(matches!(cond.kind, ExprKind::Binary(BinOp::Le, _, _)));
        assert!(matches!(then[0].kind, StmtKind::Effect { op: EffectOp::Insert, .. }));
        let StmtKind::Effect { target, .. } = &body[1].kind else { panic!() };
        assert_eq!(target.field.name, "damage");
        assert!(matches!(&target.base, Some(Expr { kind: ExprKind::Ident(c), .. }) if c == "c"));
    }

    #[test]
    fn precedence() {
        let e = parse_expr("1 + 2 * 3 < 4 && !a || b").unwrap();
        let ExprKind::Binary(BinOp::Or, lhs, _) = e.kind else { panic!() };
        let ExprKind::Binary(BinOp::And, cmp, not) = lhs.kind else { panic!() };
        assert!(matches!(not.kind, ExprKind::Unary(UnOp::Not, _)));
        let ExprKind::Binary(BinOp::Lt, sum, _) = cmp.kind else { panic!() };
        let ExprKind::Binary(BinOp::Add, _, prod) = sum.kind else { panic!() };
        assert!(matches!(prod.kind, ExprKind::Binary(BinOp::Mul, _, _)));
    }

    #[test]
    fn syntax_error_lists_expected_tokens() {
        let err = parse("class A { state: number x = ; }").unwrap_err();
        let d = &err.0[0];
        assert_eq!(d.code, codes::E_SYNTAX);
        assert_eq!((d.line, d.column), (1, 29));
        assert!(d.message.contains("identifier"), "{}", d.message);
    }

    #[test]
    fn duplicate_class_and_field() {
        let err = parse("class A { } class A { }").unwrap_err();
        assert!(err.has_code(codes::E_DUPLICATE_CLASS));
        let err = parse("class A { state: int x; effects: int x : sum; }").unwrap_err();
        assert!(err.has_code(codes::E_DUPLICATE_FIELD));
    }

    #[test]
    fn recovers_to_report_several_errors() {
        let err = parse("class A { state: int ; } class B { effects: int y : bogus; }").unwrap_err();
        assert_eq!(err.0.len(), 2);
    }

    #[test]
    fn deep_nesting_is_a_diagnostic() {
        let src = format!("class A {{ state: int x = {}1{}; }}", "(".repeat(5000), ")".repeat(5000));
        let err = parse(&src).unwrap_err();
        assert!(err.has_code(codes::E_NESTING));
    }

    proptest::proptest! {
        #[test]
        fn never_panics_on_arbitrary_bytes(bytes in proptest::collection::vec(proptest::num::u8::ANY, 0..200)) {
            let src = String::from_utf8_lossy(&bytes);
            if let Err(diags) = parse(&src) {
                let lines = src.lines().count().max(1) as u32 + 1;
                for d in diags.0 {
                    proptest::prop_assert!(d.line >= 1 && d.line <= lines);
                    proptest::prop_assert!(d.column >= 1);
                }
            }
        }

        #[test]
        fn never_panics_on_token_soup(src in "(class|run|on|when|accum|with|over|from|in|if|else|let|x|y|Unit|\\{|\\}|\\(|\\)|;|:|<-|<=|=|\\.|1|2\\.5|&&|!| )*") {
            let _ = parse(&src);
        }
    }
}
