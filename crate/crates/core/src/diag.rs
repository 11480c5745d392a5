//! Compiler diagnostics with stable codes.

use serde::Serialize;
use std::fmt;

/// Stable diagnostic codes. Tests and tooling match on these strings.
pub mod codes {
    pub const E_LEX: &str = "E_LEX";
    pub const E_SYNTAX: &str = "E_SYNTAX";
    pub const E_NESTING: &str = "E_NESTING";
    pub const E_DUPLICATE_CLASS: &str = "E_DUPLICATE_CLASS";
    pub const E_DUPLICATE_FIELD: &str = "E_DUPLICATE_FIELD";
    pub const E_DUPLICATE_SCRIPT: &str = "E_DUPLICATE_SCRIPT";
    pub const E_DUPLICATE_LOCAL: &str = "E_DUPLICATE_LOCAL";
    pub const E_DUPLICATE_RULE: &str = "E_DUPLICATE_RULE";
    pub const E_UNKNOWN_CLASS: &str = "E_UNKNOWN_CLASS";
    pub const E_UNKNOWN_NAME: &str = "E_UNKNOWN_NAME";
    pub const E_UNKNOWN_FIELD: &str = "E_UNKNOWN_FIELD";
    pub const E_UNKNOWN_FUNCTION: &str = "E_UNKNOWN_FUNCTION";
    pub const E_TYPE: &str = "E_TYPE";
    pub const E_BAD_COMBINATOR: &str = "E_BAD_COMBINATOR";
    pub const E_BAD_INITIALIZER: &str = "E_BAD_INITIALIZER";
    pub const E_READ_EFFECT: &str = "E_READ_EFFECT";
    pub const E_WRITE_STATE: &str = "E_WRITE_STATE";
    pub const E_READ_ACC_IN_BLOCK1: &str = "E_READ_ACC_IN_BLOCK1";
    pub const E_WRITE_ACC_IN_BLOCK2: &str = "E_WRITE_ACC_IN_BLOCK2";
    pub const E_SET_INSERT_TARGET: &str = "E_SET_INSERT_TARGET";
    pub const E_WAIT_IN_ACCUM: &str = "E_WAIT_IN_ACCUM";
    pub const E_WAIT_IN_ATOMIC: &str = "E_WAIT_IN_ATOMIC";
    pub const E_WAIT_IN_HANDLER: &str = "E_WAIT_IN_HANDLER";
    pub const E_TXN_IN_ACCUM: &str = "E_TXN_IN_ACCUM";
    pub const E_NESTED_ATOMIC: &str = "E_NESTED_ATOMIC";
    pub const E_SPAWN_IN_ATOMIC: &str = "E_SPAWN_IN_ATOMIC";
    pub const E_LOCAL_ACROSS_WAIT: &str = "E_LOCAL_ACROSS_WAIT";
    pub const E_RULE_TARGET: &str = "E_RULE_TARGET";
    pub const E_CONSTRAINT_FIELD: &str = "E_CONSTRAINT_FIELD";
    pub const E_UNPARTITIONED_STATE: &str = "E_UNPARTITIONED_STATE";
    pub const E_UNCOMPILABLE: &str = "E_UNCOMPILABLE";
    pub const W_UNUSED_EFFECT: &str = "W_UNUSED_EFFECT";
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    pub line: u32,
    pub column: u32,
}

impl Diagnostic {
    pub fn error(code: &'static str, message: impl Into<String>, line: u32, column: u32) -> Self {
        Diagnostic {
            severity: Severity::Error,
            code,
            message: message.into(),
            line,
            column,
        }
    }

    pub fn warning(code: &'static str, message: impl Into<String>, line: u32, column: u32) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            code,
            message: message.into(),
            line,
            column,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{}:{}: {}[{}]: {}",
            self.line, self.column, sev, self.code, self.message
        )
    }
}

/// A non-empty list of diagnostics, at least one of which is an error.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn has_code(&self, code: &str) -> bool {
        self.0.iter().any(|d| d.code == code)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter().filter(|d| d.is_error())
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}
