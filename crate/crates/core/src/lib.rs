pub mod analyze;
pub mod debug;
pub mod diag;
pub mod effects;
pub mod exec;
pub mod interp;
pub mod lang;
pub mod runtime;
pub mod scenarios;
pub mod store;
pub mod trace;
pub mod txn;
pub mod value;
