//! The guide in `book/` as doctests: each chapter is the doc comment of a
//! module, so `cargo test -p sgl-book` compiles and runs every Rust snippet.
//! A failing doctest is named after its chapter module.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/language.md")]
pub mod language {}
#[doc = include_str!("../../../book/src/scripts.md")]
pub mod scripts {}
#[doc = include_str!("../../../book/src/transactions.md")]
pub mod transactions {}
#[doc = include_str!("../../../book/src/plans.md")]
pub mod plans {}
#[doc = include_str!("../../../book/src/embedding.md")]
pub mod embedding {}
#[doc = include_str!("../../../book/src/debugging.md")]
pub mod debugging {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
