//! Raising of general index expressions to affine form.

use std::collections::HashMap;

use crate::ir::*;

type Ranges = HashMap<u32, (i64, i64)>;

/// Affine form of `g`, or `None` when it depends on runtime values or on a
/// division that cannot be proven equivalent to a floor division.
pub fn raise_expr(g: &GenExpr, ranges: &Ranges) -> Option<AffineExpr> {
    Some(match g {
        GenExpr::Const(c) => AffineExpr::Const(*c),
        GenExpr::Var(v) => AffineExpr::Var(*v),
        GenExpr::Value(_) => return None,
        GenExpr::Bin(op, a, b) => {
            let x = raise_expr(a, ranges)?;
            let y = raise_expr(b, ranges)?;
            match op {
                GenOp::Add => x + y,
                GenOp::Sub => x - y,
                GenOp::Mul => match (x.as_const(), y.as_const()) {
                    (Some(k), _) => y * k,
                    (_, Some(k)) => x * k,
                    _ => return None,
                },
                GenOp::FloorDiv | GenOp::Mod | GenOp::Div | GenOp::Rem => {
                    let k = y.as_const().filter(|k| *k > 0)?;
                    if matches!(op, GenOp::Div | GenOp::Rem) {
                        // Truncation agrees with flooring only for non-negative dividends.
                        let (lo, _) = x.range(&|v| ranges.get(&v).copied())?;
                        if lo < 0 {
                            return None;
                        }
                    }
                    if matches!(op, GenOp::FloorDiv | GenOp::Div) {
                        x.floordiv(k)
                    } else {
                        x.modulo(k)
                    }
                }
            }
        }
    })
}

fn raise_index(e: &mut IndexExpr, ranges: &Ranges) {
    if let IndexExpr::General(g) = e {
        if let Some(a) = raise_expr(g, ranges) {
            *e = IndexExpr::Affine(a.simplify());
        }
    }
}

fn raise_operand(o: &mut Operand, ranges: &Ranges) {
    if let Operand::Index(e) = o {
        raise_index(e, ranges);
        if let IndexExpr::Affine(AffineExpr::Const(c)) = e {
            if let Ok(c) = i32::try_from(*c) {
                *o = Operand::ConstI(c);
            }
        }
    }
}

fn raise_block(block: &mut [Stmt], ranges: &mut Ranges) {
    for s in block {
        match s {
            Stmt::Loop(l) => {
                raise_index(&mut l.lower, ranges);
                raise_index(&mut l.upper, ranges);
                let lo = l.lower.as_affine().and_then(|e| e.range(&|v| ranges.get(&v).copied()));
                let hi = l.upper.as_affine().and_then(|e| e.range(&|v| ranges.get(&v).copied()));
                let saved = ranges.remove(&l.var);
                if let (Some((lo, _)), Some((_, hi))) = (lo, hi) {
                    if hi > lo {
                        ranges.insert(l.var, (lo, hi - 1));
                    }
                }
                raise_block(&mut l.body, ranges);
                ranges.remove(&l.var);
                if let Some(r) = saved {
                    ranges.insert(l.var, r);
                }
            }
            Stmt::If(i) => {
                raise_block(&mut i.then_body, ranges);
                raise_block(&mut i.else_body, ranges);
            }
            Stmt::Load { indices, .. } => indices.iter_mut().for_each(|e| raise_index(e, ranges)),
            Stmt::Store { value, indices, .. } => {
                raise_operand(value, ranges);
                indices.iter_mut().for_each(|e| raise_index(e, ranges));
            }
            Stmt::Arith { operands, .. } => operands.iter_mut().for_each(|o| raise_operand(o, ranges)),
            Stmt::Call { args, .. } => {
                for a in args {
                    if let CallArg::Scalar(o) = a {
                        raise_operand(o, ranges);
                    }
                }
            }
            Stmt::Copy { .. } => {}
        }
    }
}

/// Raise every loop bound, subscript and index operand that admits an affine form.
pub fn raise_to_affine(p: &mut Program) {
    for f in &mut p.functions {
        raise_block(&mut f.body, &mut Ranges::new());
    }
}

/// True when every loop bound and subscript in `f` is affine.
pub fn is_fully_affine(f: &Function) -> bool {
    let mut ok = true;
    util::walk(&f.body, &mut |s| match s {
        Stmt::Loop(l) => ok &= l.is_affine(),
        Stmt::Load { indices, .. } | Stmt::Store { indices, .. } => ok &= indices.iter().all(|e| e.is_affine()),
        _ => {}
    });
    ok
}
