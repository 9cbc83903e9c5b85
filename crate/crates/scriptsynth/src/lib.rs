//! Generalizes recorded API-call traces into a reusable script.

pub mod dsl;
pub mod hidden;
pub mod json;
pub mod eval;
pub mod trace;
pub mod cost;
pub mod pbe;
pub mod rewrite;
pub mod search;
pub mod cli;
