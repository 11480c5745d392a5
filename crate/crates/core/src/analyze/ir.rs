//! Resolved program representation shared by the relational compiler and
//! the reference interpreter.

use crate::lang::ast::{BinOp, Combinator, CompilationUnit, UnOp};
use crate::value::{Builtin, ClassId, Type, Value};
use serde::Serialize;

pub type FieldId = u32;
pub type EffectId = u32;
pub type LocalId = u32;
pub type StmtId = u32;

/// Name of the synthesized program-counter state field.
pub const PC_FIELD: &str = "_pc";
/// Effect carrying the next segment index (combinator max).
pub const PC_NEXT: &str = "_pcNext";
/// Override channel written by restart handlers (combinator max).
pub const PC_RESTART: &str = "_pcRestart";
/// Per-object transaction outcome of the previous tick:
/// 0 = none issued, 1 = all committed, 2 = at least one aborted.
pub const TXN_STATUS_FIELD: &str = "lastTxnStatus";

#[derive(Clone, Debug, Serialize)]
pub struct Program {
    pub classes: Vec<ClassInfo>,
    #[serde(skip)]
    pub unit: CompilationUnit,
    /// Hex SHA-256 of the canonical formatting of the source unit.
    pub unit_hash: String,
    #[serde(skip)]
    pub access: Vec<AccessNote>,
    #[serde(skip)]
    pub warnings: Vec<crate::diag::Diagnostic>,
}

impl Program {
    pub fn class(&self, id: ClassId) -> &ClassInfo {
        &self.classes[id.0 as usize]
    }

    pub fn class_by_name(&self, name: &str) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_ids(&self) -> impl Iterator<Item = ClassId> {
        (0..self.classes.len() as u32).map(ClassId)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassInfo {
    pub id: ClassId,
    pub name: String,
    pub state: Vec<FieldInfo>,
    pub effects: Vec<EffectInfo>,
    /// Update rules, at most one per state field.
    pub rules: Vec<(FieldId, RExpr)>,
    pub constraints: Vec<ConstraintDef>,
    /// State fields mentioned by any constraint; owned by the transaction engine.
    pub constrained: Vec<FieldId>,
    /// Effects read by the update rules of constrained fields.
    pub txn_effects: Vec<EffectId>,
    pub body: Option<ClassBody>,
    pub pc: Option<PcFields>,
    pub txn_status: Option<FieldId>,
}

impl ClassInfo {
    pub fn field(&self, name: &str) -> Option<FieldId> {
        self.state.iter().position(|f| f.name == name).map(|i| i as FieldId)
    }

    pub fn effect(&self, name: &str) -> Option<EffectId> {
        self.effects.iter().position(|f| f.name == name).map(|i| i as EffectId)
    }

    pub fn rule(&self, field: FieldId) -> Option<&RExpr> {
        self.rules.iter().find(|(f, _)| *f == field).map(|(_, e)| e)
    }

    pub fn is_txn_effect(&self, effect: EffectId) -> bool {
        self.txn_effects.contains(&effect)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PcFields {
    pub state: FieldId,
    pub next: EffectId,
    pub restart: EffectId,
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldInfo {
    pub name: String,
    pub ty: Type,
    pub init: Value,
    pub synthetic: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectInfo {
    pub name: String,
    pub ty: Type,
    pub combinator: Combinator,
    pub synthetic: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstraintDef {
    pub expr: RExpr,
    /// Source text, for traces and diagnostics.
    pub text: String,
}

/// The per-tick program of one class after lowering: handler preludes run
/// first, then the segment selected by the program counter.
#[derive(Clone, Debug, Serialize)]
pub struct ClassBody {
    pub script: Option<String>,
    pub handlers: Vec<Handler>,
    pub segments: Vec<Vec<RStmt>>,
    pub locals: Vec<LocalInfo>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Handler {
    pub cond: RExpr,
    pub body: Vec<RStmt>,
    pub restart: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalInfo {
    pub name: String,
    pub ty: Type,
    pub kind: LocalKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LocalKind {
    Let,
    LoopVar,
    Accumulator(Combinator),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum RStmt {
    Let {
        local: LocalId,
        value: RExpr,
    },
    /// Effect assignment. `target: None` means `this`.
    Emit {
        id: StmtId,
        target: Option<RExpr>,
        class: ClassId,
        effect: EffectId,
        value: RExpr,
    },
    AccAssign {
        id: StmtId,
        acc: LocalId,
        value: RExpr,
    },
    If {
        cond: RExpr,
        then: Vec<RStmt>,
        els: Vec<RStmt>,
    },
    Accum {
        id: StmtId,
        acc: LocalId,
        combinator: Combinator,
        acc_ty: Type,
        var: LocalId,
        source: RExpr,
        body: Vec<RStmt>,
        after: Vec<RStmt>,
    },
    Atomic {
        site: StmtId,
        body: Vec<RStmt>,
    },
    Spawn {
        id: StmtId,
        class: ClassId,
        inits: Vec<(FieldId, RExpr)>,
    },
    Destroy {
        id: StmtId,
        target: RExpr,
    },
    /// Removed by multi-tick lowering.
    Wait,
}

impl RStmt {
    pub fn contains_wait(&self) -> bool {
        match self {
            RStmt::Wait => true,
            RStmt::If { then, els, .. } => {
                then.iter().any(RStmt::contains_wait) || els.iter().any(RStmt::contains_wait)
            }
            RStmt::Accum { body, after, .. } => {
                body.iter().any(RStmt::contains_wait) || after.iter().any(RStmt::contains_wait)
            }
            RStmt::Atomic { body, .. } => body.iter().any(RStmt::contains_wait),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RExpr {
    pub kind: RExprKind,
    pub ty: Type,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum RExprKind {
    Lit(Value),
    Local(LocalId),
    This,
    /// State field of the current object, read from the tick-start snapshot.
    SelfField(FieldId),
    /// State field read through a reference.
    Field(Box<RExpr>, ClassId, FieldId),
    /// Reduced effect value of the current object; update rules only.
    Effect(EffectId),
    /// All live objects of a class.
    Extent(ClassId),
    Unary(UnOp, Box<RExpr>),
    /// `And`/`Or` short-circuit.
    Binary(BinOp, Box<RExpr>, Box<RExpr>),
    Call(Builtin, Vec<RExpr>, u32),
}

impl RExpr {
    pub fn lit(v: Value, ty: Type) -> RExpr {
        RExpr {
            kind: RExprKind::Lit(v),
            ty,
        }
    }

    /// Whether evaluation can never fault, whatever the inputs. Only such
    /// predicates may be reordered or used to prune candidates.
    pub fn infallible(&self) -> bool {
        match &self.kind {
            RExprKind::Lit(_)
            | RExprKind::Local(_)
            | RExprKind::This
            | RExprKind::SelfField(_)
            | RExprKind::Extent(_) => true,
            RExprKind::Effect(_) | RExprKind::Field(..) => false,
            RExprKind::Unary(op, e) => match op {
                UnOp::Not => e.infallible(),
                UnOp::Neg => e.ty == Type::Number && e.infallible(),
            },
            RExprKind::Binary(op, a, b) => {
                let operands = a.infallible() && b.infallible();
                match op {
                    BinOp::Div | BinOp::Rem => false,
                    BinOp::Add | BinOp::Sub | BinOp::Mul => {
                        operands && !(a.ty == Type::Int && b.ty == Type::Int)
                    }
                    _ => operands,
                }
            }
            RExprKind::Call(f, args, _) => {
                f.infallible() && args.iter().all(RExpr::infallible)
            }
        }
    }

    /// Calls `f` on every sub-expression, pre-order.
    pub fn walk(&self, f: &mut impl FnMut(&RExpr)) {
        f(self);
        match &self.kind {
            RExprKind::Field(e, ..) | RExprKind::Unary(_, e) => e.walk(f),
            RExprKind::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            RExprKind::Call(_, args, _) => args.iter().for_each(|a| a.walk(f)),
            _ => {}
        }
    }

    pub fn uses_local(&self, local: LocalId) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if e.kind == RExprKind::Local(local) {
                found = true;
            }
        });
        found
    }
}

/// How an identifier occurrence was classified by the access checker.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AccessMode {
    StateReadOnly,
    EffectWriteOnly,
    AccumulatorWriteOnly,
    AccumulatorReadOnly,
    Local,
}

#[derive(Clone, Debug, Serialize)]
pub struct AccessNote {
    pub line: u32,
    pub column: u32,
    pub name: String,
    pub mode: AccessMode,
}
