//! Tick-boundary inspection: checkpoints, breakpoints and the HTTP debug
//! API.

pub mod checkpoint;
mod server;

pub use checkpoint::{checkpoint, checkpoint_json, restore, restore_json, CheckpointError, CheckpointMeta};
pub use server::{router, Session, SessionHandle, INDEX_HTML};

use crate::analyze::{compile_condition, Program, RExpr};
use crate::diag::Diagnostics;
use crate::interp::Env;
use crate::store::Snapshot;
use crate::value::{ClassId, ObjId, Value};
use serde::Serialize;

/// A condition over the state of one class, checked at tick boundaries.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Breakpoint {
    pub id: u64,
    pub class: String,
    pub cond: String,
    pub enabled: bool,
    #[serde(skip)]
    class_id: ClassId,
    #[serde(skip)]
    expr: RExpr,
}

impl Breakpoint {
    pub fn compile(program: &Program, id: u64, class: &str, cond: &str) -> Result<Breakpoint, BreakpointError> {
        let c = program
            .class_by_name(class)
            .ok_or_else(|| BreakpointError::UnknownClass(class.to_string()))?;
        let expr = compile_condition(program, c.id, cond).map_err(BreakpointError::Condition)?;
        Ok(Breakpoint {
            id,
            class: class.to_string(),
            cond: cond.to_string(),
            enabled: true,
            class_id: c.id,
            expr,
        })
    }

    /// Objects satisfying the condition, ascending. Rows whose evaluation
    /// faults do not match.
    pub fn matches(&self, program: &Program, snap: &Snapshot, seed: u64) -> Vec<ObjId> {
        let t = snap.table(self.class_id);
        (0..t.len())
            .filter(|&row| {
                let env = Env::object(program, snap, self.class_id, row, seed);
                matches!(env.eval_pure(&self.expr, &[]), Ok(Value::Bool(true)))
            })
            .map(|row| t.ids[row])
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BreakpointError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("{0}")]
    Condition(Diagnostics),
}
