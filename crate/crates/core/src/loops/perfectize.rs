use std::collections::HashSet;

use super::{for_each_band, last_iteration, var_range, Ranges};
use crate::ir::*;

fn hoistable(s: &Stmt, blocked: &HashSet<ValueId>, written: &HashSet<String>) -> bool {
    let uses_ok = util::stmt_uses(s).is_disjoint(blocked);
    match s {
        Stmt::Load { array, .. } => uses_ok && !written.contains(array) && !written.contains(""),
        Stmt::Arith { op, operands, ty, .. } => {
            let may_trap = *ty == ElemKind::I32
                && matches!(op, ArithOp::Div | ArithOp::Rem)
                && !matches!(operands.get(1), Some(Operand::ConstI(c)) if *c != 0);
            uses_ok && !may_trap
        }
        _ => false,
    }
}

/// Splits `group` into pure operations that may run on every iteration and the
/// rest, which must stay under the guard.
fn split_hoisted(group: Vec<Stmt>) -> (Vec<Stmt>, Vec<Stmt>) {
    let mut blocked = HashSet::new();
    let mut written: HashSet<String> = HashSet::new();
    let mut hoist = vec![];
    let mut keep = vec![];
    for s in group {
        if hoistable(&s, &blocked, &written) {
            hoist.push(s);
            continue;
        }
        if let Some(v) = s.defined_value() {
            blocked.insert(v);
        }
        blocked.extend(util::defined_values(std::slice::from_ref(&s)));
        let (_, w) = util::array_effects(std::slice::from_ref(&s), None);
        written.extend(w);
        if matches!(s, Stmt::Call { .. }) {
            written.insert(String::new());
        }
        keep.push(s);
    }
    (hoist, keep)
}

fn guard(conds: Vec<Constraint>, mut body: Vec<Stmt>) -> Stmt {
    if body.len() == 1 {
        if let Stmt::If(i) = &mut body[0] {
            if i.else_body.is_empty() {
                let mut all = conds;
                all.append(&mut i.conds);
                return Stmt::If(IfStmt { conds: all, then_body: std::mem::take(&mut i.then_body), else_body: vec![] });
            }
        }
    }
    Stmt::If(IfStmt { conds, then_body: body, else_body: vec![] })
}

fn sink(l: &mut Loop, ranges: &mut Ranges) -> Result<(), String> {
    let Some(pos) = l.body.iter().position(|s| matches!(s, Stmt::Loop(_))) else {
        return Ok(());
    };
    if l.only_child_loop().is_none() {
        return Ok(());
    }
    if let Some(r) = var_range(l, ranges) {
        ranges.insert(l.var, r);
    }
    let mut post = l.body.split_off(pos + 1);
    let Some(Stmt::Loop(mut child)) = l.body.pop() else { unreachable!() };
    let pre = std::mem::take(&mut l.body);
    if !pre.is_empty() || !post.is_empty() {
        let group: Vec<&Stmt> = pre.iter().chain(post.iter()).collect();
        let mut has_call = false;
        for s in &group {
            util::walk(std::slice::from_ref(*s), &mut |x| has_call |= matches!(x, Stmt::Call { .. }));
        }
        if has_call {
            return Err(format!("loop `{}`: calls between loops cannot be guarded", l.name));
        }
        let (Some(lo), Some(hi)) = (child.lower.as_affine(), child.upper.as_affine()) else {
            return Err(format!("loop `{}` has non-affine bounds", child.name));
        };
        let min_extent = (hi.clone() - lo.clone()).range(&|v| ranges.get(&v).copied()).map(|r| r.0);
        if min_extent.map_or(true, |m| m < 1) {
            return Err(format!("loop `{}` may execute zero times", child.name));
        }
        let pre_defs = util::defined_values(&pre);
        if !pre_defs.is_disjoint(&util::used_values(&post)) || !pre_defs.is_disjoint(&util::used_values(&child.body)) {
            return Err(format!("values computed before loop `{}` are used inside or after it", child.name));
        }
        let first = AffineExpr::var(child.var) - lo.clone();
        let last = AffineExpr::var(child.var) - last_iteration(&child).unwrap();
        let mut body = vec![];
        if !pre.is_empty() {
            let (hoisted, kept) = split_hoisted(pre);
            body.extend(hoisted);
            if !kept.is_empty() {
                body.push(guard(vec![Constraint::eq(first.simplify())], kept));
            }
        }
        body.append(&mut child.body);
        if !post.is_empty() {
            body.push(guard(vec![Constraint::eq(last.simplify())], std::mem::take(&mut post)));
        }
        child.body = body;
    }
    let r = sink(&mut child, ranges);
    l.body = vec![Stmt::Loop(child)];
    r
}

/// Sinks statements between the loops of the band into its innermost loop.
pub fn perfectize_band(root: &mut Loop) -> Result<(), String> {
    let mut work = root.clone();
    sink(&mut work, &mut Ranges::new())?;
    *root = work;
    Ok(())
}

pub fn perfectize(f: &mut Function) -> Vec<String> {
    for_each_band(f, &mut |l, _| perfectize_band(l).err().into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Kernel;
    use crate::loops::{band_depth, perfect_depth};

    #[test]
    fn syrk_becomes_perfect_with_guard() {
        let mut p = Kernel::Syrk.program(8, ElemKind::I32);
        let f = p.top_function_mut();
        assert!(perfectize(f).is_empty());
        let Stmt::Loop(l) = &f.body[0] else { panic!() };
        assert_eq!(perfect_depth(l), 3);
        assert_eq!(band_depth(l), 3);
        let inner = crate::loops::band_loop(l, 2);
        assert!(matches!(inner.body[0], Stmt::Load { .. }));
        assert!(inner.body.iter().any(|s| matches!(s, Stmt::If(i) if i.conds.len() == 1 && i.conds[0].eq)));
    }

    #[test]
    fn perfect_band_unchanged() {
        let mut p = Kernel::Syrk.program(8, ElemKind::I32);
        let f = p.top_function_mut();
        perfectize(f);
        let once = f.clone();
        perfectize(f);
        assert_eq!(*f, once);
    }

    #[test]
    fn trmm_inner_may_be_empty() {
        let mut p = Kernel::Trmm.program(8, ElemKind::I32);
        let before = p.clone();
        let d = perfectize(p.top_function_mut());
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(p, before);
    }
}
