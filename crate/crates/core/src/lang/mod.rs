//! Lexing, parsing and canonical formatting of SGL source text.

pub mod ast;
pub mod format;
pub mod parser;
pub mod token;

pub use ast::CompilationUnit;
pub use format::{format_ast, format_expr};
pub use parser::{parse, parse_expr, parse_unit};
pub use token::{tokenize, Token, TokenKind};
