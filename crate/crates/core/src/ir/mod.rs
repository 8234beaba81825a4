pub mod affine;
pub mod deps;
pub mod fm;
pub mod printer;
pub mod stmt;
pub mod types;
pub mod util;
pub mod verify;

pub use affine::{AffineError, AffineExpr, AffineMap, LinearForm};
pub use stmt::*;
pub use types::*;
