//! Surface syntax tree.
//!
//! Source positions are carried on every node for diagnostics but are
//! ignored by equality, so two trees compare equal when they have the same
//! shape regardless of where they came from. The formatter round-trip relies
//! on this.

use serde::Serialize;
use std::fmt;

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

impl Pos {
    pub fn new(line: u32, column: u32) -> Self {
        Pos { line, column }
    }
}

impl PartialEq for Pos {
    fn eq(&self, _: &Pos) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ident {
    pub name: String,
    pub pos: Pos,
}

impl Ident {
    pub fn new(name: impl Into<String>, pos: Pos) -> Self {
        Ident {
            name: name.into(),
            pos,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CompilationUnit {
    pub items: Vec<Item>,
}

impl CompilationUnit {
    pub fn classes(&self) -> impl Iterator<Item = &ClassDef> {
        self.items.iter().filter_map(|i| match i {
            Item::Class(c) => Some(c),
            _ => None,
        })
    }

    pub fn scripts(&self) -> impl Iterator<Item = &ScriptDef> {
        self.items.iter().filter_map(|i| match i {
            Item::Script(s) => Some(s),
            _ => None,
        })
    }

    pub fn handlers(&self) -> impl Iterator<Item = &HandlerDef> {
        self.items.iter().filter_map(|i| match i {
            Item::Handler(h) => Some(h),
            _ => None,
        })
    }

    /// Concatenates the items of several units, in order.
    pub fn merge(units: impl IntoIterator<Item = CompilationUnit>) -> CompilationUnit {
        CompilationUnit {
            items: units.into_iter().flat_map(|u| u.items).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Item {
    Class(ClassDef),
    Script(ScriptDef),
    Handler(HandlerDef),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassDef {
    pub name: Ident,
    pub state: Vec<StateDecl>,
    pub effects: Vec<EffectDecl>,
    pub updates: Vec<UpdateRule>,
    pub constraints: Vec<Expr>,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateDecl {
    pub ty: TypeExpr,
    pub name: Ident,
    pub init: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectDecl {
    pub ty: TypeExpr,
    pub name: Ident,
    pub combinator: Combinator,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UpdateRule {
    pub target: Ident,
    pub value: Expr,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScriptDef {
    pub name: Ident,
    pub class: Ident,
    pub body: Block,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HandlerDef {
    pub class: Ident,
    pub condition: Expr,
    pub restart: bool,
    pub body: Block,
    pub pos: Pos,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TypeExpr {
    Number,
    Int,
    Bool,
    Str,
    /// `ref<C>` or a bare class name.
    Ref(String),
    Set(Box<TypeExpr>),
}

impl fmt::Display for TypeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeExpr::Number => f.write_str("number"),
            TypeExpr::Int => f.write_str("int"),
            TypeExpr::Bool => f.write_str("bool"),
            TypeExpr::Str => f.write_str("string"),
            TypeExpr::Ref(c) => write!(f, "ref<{c}>"),
            TypeExpr::Set(t) => write!(f, "set<{t}>"),
        }
    }
}

/// Effect combinators. All are associative and commutative over their
/// element type; `Avg` is carried as a (sum, count) pair until the end.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Combinator {
    Sum,
    Avg,
    Min,
    Max,
    Count,
    Or,
    And,
    SetUnion,
}

impl Combinator {
    pub const ALL: [Combinator; 8] = [
        Combinator::Sum,
        Combinator::Avg,
        Combinator::Min,
        Combinator::Max,
        Combinator::Count,
        Combinator::Or,
        Combinator::And,
        Combinator::SetUnion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Combinator::Sum => "sum",
            Combinator::Avg => "avg",
            Combinator::Min => "min",
            Combinator::Max => "max",
            Combinator::Count => "count",
            Combinator::Or => "or",
            Combinator::And => "and",
            Combinator::SetUnion => "setUnion",
        }
    }

    pub fn from_name(s: &str) -> Option<Combinator> {
        Combinator::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Whether an empty reduction has a natural identity value.
    pub fn has_identity(self) -> bool {
        !matches!(self, Combinator::Avg | Combinator::Min | Combinator::Max)
    }
}

impl fmt::Display for Combinator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type Block = Vec<Stmt>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EffectOp {
    /// `x <- e`
    Assign,
    /// `x <= e`, insert one element into a set-valued effect.
    Insert,
}

/// Left-hand side of an effect assignment: `field` or `expr.field`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LValue {
    pub base: Option<Expr>,
    pub field: Ident,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum StmtKind {
    Let {
        name: Ident,
        value: Expr,
    },
    Effect {
        target: LValue,
        op: EffectOp,
        value: Expr,
    },
    If {
        cond: Expr,
        then: Block,
        els: Option<Block>,
    },
    Accum {
        acc_ty: TypeExpr,
        acc: Ident,
        combinator: Combinator,
        var_ty: TypeExpr,
        var: Ident,
        source: Expr,
        body: Block,
        after: Block,
    },
    Wait,
    Atomic {
        body: Block,
    },
    Spawn {
        class: Ident,
        inits: Vec<(Ident, Expr)>,
    },
    Destroy {
        target: Expr,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "||",
            BinOp::And => "&&",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ExprKind {
    Num(f64),
    Int(i64),
    Str(String),
    Bool(bool),
    Null,
    This,
    Ident(String),
    Field(Box<Expr>, Ident),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Ident, Vec<Expr>),
}
