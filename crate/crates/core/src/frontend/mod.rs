//! Front-end for a restricted C subset.
//!
//! Accepted: functions over fixed-size array parameters, scalar parameters and
//! scalar pointers; `for (int v = L; v < U; v += S)` loops; `if` with
//! conjunctions of integer comparisons; assignments and compound assignments;
//! `+ - * / %`, casts, and calls to other functions of the same file.

use std::fmt;

use thiserror::Error;

use crate::ir::Program;

pub mod lexer;
pub mod parser;
pub mod raise;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

/// Parse C source into general (unraised) IR.
pub fn parse_c(src: &str) -> Result<Program, ParseError> {
    parser::parse_program(src)
}

/// Parse and raise loops / accesses to affine form where possible.
pub fn parse_and_raise(src: &str) -> Result<Program, ParseError> {
    let mut p = parse_c(src)?;
    raise::raise_to_affine(&mut p);
    Ok(p)
}
