//! Loop-band transforms.
//!
//! A band is the chain of loops reached from a top-level loop by repeatedly
//! descending into the single loop of a body. Each top-level loop of a function
//! body roots one band; sibling bands are transformed independently.

use std::collections::HashMap;

use crate::ir::*;

pub mod order;
pub mod perfectize;
pub mod rvb;
pub mod tile;
pub mod unroll;

pub use order::{order_opt, order_opt_band};
pub use perfectize::{perfectize, perfectize_band};
pub use rvb::{remove_variable_bound, remove_variable_bound_band};
pub use tile::{tile, tile_band};
pub use unroll::{unroll_loop, unroll_innermost};

/// Inclusive value ranges of loop variables.
pub type Ranges = HashMap<u32, (i64, i64)>;

/// Number of loops in the possibly imperfect band rooted at `l`.
pub fn band_depth(l: &Loop) -> usize {
    1 + l.only_child_loop().map_or(0, band_depth)
}

/// Number of loops in the perfect prefix of the band rooted at `l`.
pub fn perfect_depth(l: &Loop) -> usize {
    if l.is_perfect_parent() {
        1 + perfect_depth(l.only_child_loop().unwrap())
    } else {
        1
    }
}

pub fn band(l: &Loop) -> Vec<&Loop> {
    let mut out = vec![l];
    while let Some(c) = out.last().unwrap().only_child_loop() {
        out.push(c);
    }
    out
}

/// The `k`-th loop of the band rooted at `l`.
pub fn band_loop_mut(l: &mut Loop, k: usize) -> &mut Loop {
    let mut cur = l;
    for _ in 0..k {
        cur = cur.only_child_loop_mut().expect("band depth");
    }
    cur
}

pub fn band_loop(l: &Loop, k: usize) -> &Loop {
    let mut cur = l;
    for _ in 0..k {
        cur = cur.only_child_loop().expect("band depth");
    }
    cur
}

/// Trip count of `l` when it does not depend on enclosing variables.
pub fn trip_of(l: &Loop) -> Option<i64> {
    let span = (l.upper.as_affine()?.clone() - l.lower.as_affine()?.clone()).simplify().as_const()?;
    Some(trip_count(0, span, l.step))
}

/// Inclusive range of the variable of `l`, given ranges of enclosing variables.
pub fn var_range(l: &Loop, ranges: &Ranges) -> Option<(i64, i64)> {
    let get = |v: u32| ranges.get(&v).copied();
    let (lo, _) = l.lower.as_affine()?.range(&get)?;
    let (_, hi) = l.upper.as_affine()?.range(&get)?;
    (hi > lo).then_some((lo, hi - 1))
}

/// Ranges of the variables of the first `depth` loops of the band.
pub fn band_ranges(root: &Loop, depth: usize) -> Ranges {
    let mut r = Ranges::new();
    for k in 0..depth {
        let l = band_loop(root, k);
        if let Some(x) = var_range(l, &r) {
            r.insert(l.var, x);
        }
    }
    r
}

/// Affine expression of the last value taken by the variable of `l`.
pub fn last_iteration(l: &Loop) -> Option<AffineExpr> {
    let lo = l.lower.as_affine()?.clone();
    let hi = l.upper.as_affine()?.clone();
    if l.step == 1 {
        return Some(hi - 1);
    }
    Some((lo.clone() + (hi - lo - 1).floordiv(l.step) * l.step).simplify())
}

/// Runs `pass` on every top-level loop of `f`. The closure gets the function
/// with its body temporarily detached so it can allocate fresh ids.
pub fn for_each_band(f: &mut Function, pass: &mut dyn FnMut(&mut Loop, &mut Function) -> Vec<String>) -> Vec<String> {
    let mut body = std::mem::take(&mut f.body);
    let mut diags = vec![];
    for s in &mut body {
        if let Stmt::Loop(l) = s {
            diags.extend(pass(l, f));
        }
    }
    f.body = body;
    diags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Kernel;

    #[test]
    fn band_shapes() {
        let p = Kernel::Syrk.program(8, ElemKind::F32);
        let Stmt::Loop(l) = &p.top_function().body[0] else { panic!() };
        assert_eq!(band_depth(l), 3);
        assert_eq!(perfect_depth(l), 2);
        let r = band_ranges(l, 2);
        assert_eq!(r[&band_loop(l, 1).var], (0, 7));
    }

    #[test]
    fn last_iteration_with_step() {
        let l = Loop {
            var: 0,
            name: "i".into(),
            lower: IndexExpr::cst(1),
            upper: IndexExpr::cst(10),
            step: 4,
            body: vec![],
            directive: None,
            tag: LoopTag::Plain,
        };
        assert_eq!(last_iteration(&l).unwrap().as_const(), Some(9));
    }
}
