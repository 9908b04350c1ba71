pub mod diag;
pub mod engine;
pub mod expr;
pub mod frame;
pub mod ledger;
pub mod lex;
pub mod plan;
pub mod project;
pub mod specml;
pub mod volang;
