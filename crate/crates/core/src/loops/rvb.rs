use super::{for_each_band, var_range, Ranges};
use crate::ir::*;

/// Pushes `conds` down to every non-loop statement of `block`, grouping runs of
/// consecutive statements under one guard.
fn distribute(conds: &[Constraint], block: Vec<Stmt>) -> Vec<Stmt> {
    let mut out = vec![];
    let mut run = vec![];
    let flush = |run: &mut Vec<Stmt>, out: &mut Vec<Stmt>| {
        if run.is_empty() {
            return;
        }
        let body = std::mem::take(run);
        if body.len() == 1 {
            if let Stmt::If(i) = &body[0] {
                if i.else_body.is_empty() {
                    let mut c = conds.to_vec();
                    c.extend(i.conds.iter().cloned());
                    out.push(Stmt::If(IfStmt { conds: c, then_body: i.then_body.clone(), else_body: vec![] }));
                    return;
                }
            }
        }
        out.push(Stmt::If(IfStmt { conds: conds.to_vec(), then_body: body, else_body: vec![] }));
    };
    for s in block {
        match s {
            Stmt::Loop(mut l) => {
                flush(&mut run, &mut out);
                l.body = distribute(conds, l.body);
                out.push(Stmt::Loop(l));
            }
            s => run.push(s),
        }
    }
    flush(&mut run, &mut out);
    out
}

fn remove(l: &mut Loop, ranges: &mut Ranges) -> Result<(), String> {
    let get = |r: &Ranges| {
        let r = r.clone();
        move |v: u32| r.get(&v).copied()
    };
    let (Some(lo), Some(hi)) = (l.lower.as_affine().cloned(), l.upper.as_affine().cloned()) else {
        return Err(format!("loop `{}` has non-affine bounds", l.name));
    };
    let mut conds = vec![];
    let var = AffineExpr::var(l.var);
    if lo.as_const().is_none() {
        let Some((min, _)) = lo.range(&get(ranges)) else {
            return Err(format!("lower bound of loop `{}` depends on unknown values", l.name));
        };
        conds.push(Constraint::ge((var.clone() - lo.clone()).simplify()));
        if l.step != 1 {
            conds.push(Constraint::eq((var.clone() - lo.clone()).modulo(l.step).simplify()));
        }
        l.lower = IndexExpr::cst(min);
    }
    if hi.as_const().is_none() {
        let Some((_, max)) = hi.range(&get(ranges)) else {
            return Err(format!("upper bound of loop `{}` depends on unknown values", l.name));
        };
        conds.push(Constraint::ge((hi - var - 1).simplify()));
        l.upper = IndexExpr::cst(max);
    }
    if !conds.is_empty() {
        l.body = distribute(&conds, std::mem::take(&mut l.body));
    }
    if let Some(r) = var_range(l, ranges) {
        ranges.insert(l.var, r);
    }
    let Some(child) = l.only_child_loop_mut() else { return Ok(()) };
    remove(child, ranges)
}

/// Replaces variable loop bounds in the band by their extreme values and guards
/// the body with the original iteration domain.
pub fn remove_variable_bound_band(root: &mut Loop) -> Result<(), String> {
    let mut work = root.clone();
    remove(&mut work, &mut Ranges::new())?;
    *root = work;
    Ok(())
}

pub fn remove_variable_bound(f: &mut Function) -> Vec<String> {
    for_each_band(f, &mut |l, _| remove_variable_bound_band(l).err().into_iter().collect())
}

/// True when some loop of the band rooted at `l` has a non-constant bound.
pub fn has_variable_bound(l: &Loop) -> bool {
    let mut any = false;
    util::walk(std::slice::from_ref(&Stmt::Loop(l.clone())), &mut |s| {
        if let Stmt::Loop(x) = s {
            any |= x.const_bounds().is_none();
        }
    });
    any
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Kernel;
    use crate::loops::band_loop;

    #[test]
    fn syrk_bound_becomes_constant() {
        let mut p = Kernel::Syrk.program(8, ElemKind::I32);
        let f = p.top_function_mut();
        assert!(remove_variable_bound(f).is_empty());
        let Stmt::Loop(l) = &f.body[0] else { panic!() };
        assert!(!has_variable_bound(l));
        let j = band_loop(l, 1);
        assert_eq!(j.const_bounds(), Some((0, 8)));
        let Stmt::If(g) = &j.body[0] else { panic!() };
        // j <= i
        assert_eq!(g.conds[0].expr.eval(&|v| if v == l.var { 3 } else { 3 }), 0);
        assert!(!g.conds[0].eq);
    }

    #[test]
    fn constant_band_unchanged() {
        let mut p = Kernel::Gemm.program(8, ElemKind::I32);
        let before = p.clone();
        remove_variable_bound(p.top_function_mut());
        assert_eq!(p, before);
    }
}
