//! A small high-level-synthesis optimizer: C subset in, pragma-annotated C++ out.

pub mod corpus;
pub mod directive;
pub mod dse;
pub mod emit;
pub mod frontend;
pub mod graph;
pub mod interp;
pub mod ir;
pub mod loops;
pub mod native;
pub mod passes;
pub mod qor;

pub use ir::{AffineExpr, AffineMap, Function, MemRefType, Program, Stmt};
