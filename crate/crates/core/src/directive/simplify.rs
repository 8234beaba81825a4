use std::collections::HashMap;

use crate::ir::fm::System;
use crate::ir::*;
use crate::loops::{var_range, Ranges};

#[derive(Clone, Default)]
struct Ctx {
    facts: Vec<(LinearForm, bool)>,
    ranges: Ranges,
}

impl Ctx {
    fn feasible_with(&self, extra: &[(LinearForm, bool)]) -> bool {
        let mut ids: HashMap<u32, usize> = HashMap::new();
        for (lf, _) in self.facts.iter().chain(extra) {
            for &v in lf.coeffs.keys() {
                let n = ids.len();
                ids.entry(v).or_insert(n);
            }
        }
        let mut sys = System::new(ids.len());
        for (lf, eq) in self.facts.iter().chain(extra) {
            let coeffs: Vec<(usize, i64)> = lf.coeffs.iter().map(|(v, &c)| (ids[v], c)).collect();
            if *eq {
                sys.eq(&coeffs, lf.constant);
            } else {
                sys.ge(&coeffs, lf.constant);
            }
        }
        sys.feasible()
    }

    /// `Some(true)` when `c` holds everywhere in the context, `Some(false)` when nowhere.
    fn decide(&self, c: &Constraint) -> Option<bool> {
        if let Some(lf) = c.expr.as_linear() {
            let shifted = |k: i64, neg: bool| {
                let e = if neg { -c.expr.clone() } else { c.expr.clone() };
                (e + k).as_linear().unwrap()
            };
            return if c.eq {
                if !self.feasible_with(&[(lf, true)]) {
                    Some(false)
                } else if !self.feasible_with(&[(shifted(-1, false), false)]) && !self.feasible_with(&[(shifted(-1, true), false)]) {
                    Some(true)
                } else {
                    None
                }
            } else if !self.feasible_with(&[(lf, false)]) {
                Some(false)
            } else if !self.feasible_with(&[(shifted(-1, true), false)]) {
                Some(true)
            } else {
                None
            };
        }
        let (lo, hi) = c.expr.range(&|v| self.ranges.get(&v).copied())?;
        if c.eq {
            if lo == 0 && hi == 0 {
                Some(true)
            } else if hi < 0 || lo > 0 {
                Some(false)
            } else {
                None
            }
        } else if lo >= 0 {
            Some(true)
        } else if hi < 0 {
            Some(false)
        } else {
            None
        }
    }
}

fn block(stmts: Vec<Stmt>, ctx: &Ctx) -> Vec<Stmt> {
    let mut out = vec![];
    for s in stmts {
        match s {
            Stmt::Loop(mut l) => {
                let mut inner = ctx.clone();
                let v = AffineExpr::var(l.var);
                if let (Some(lo), Some(hi)) = (l.lower.as_affine(), l.upper.as_affine()) {
                    for e in [v.clone() - lo.clone(), hi.clone() - v - 1] {
                        if let Some(lf) = e.as_linear() {
                            inner.facts.push((lf, false));
                        }
                    }
                }
                match var_range(&l, &ctx.ranges) {
                    Some(r) => {
                        inner.ranges.insert(l.var, r);
                    }
                    None => {
                        inner.ranges.remove(&l.var);
                    }
                }
                l.body = block(l.body, &inner);
                out.push(Stmt::Loop(l));
            }
            Stmt::If(i) => {
                let mut kept = vec![];
                let mut dead = false;
                for c in i.conds {
                    match ctx.decide(&c) {
                        Some(true) => {}
                        Some(false) => dead = true,
                        None => kept.push(c),
                    }
                }
                if dead {
                    out.extend(block(i.else_body, ctx));
                    continue;
                }
                let mut inner = ctx.clone();
                for c in &kept {
                    if let Some(lf) = c.expr.as_linear() {
                        inner.facts.push((lf, c.eq));
                    }
                }
                let then_body = block(i.then_body, &inner);
                if kept.is_empty() {
                    out.extend(then_body);
                    continue;
                }
                let else_body = block(i.else_body, ctx);
                if then_body.is_empty() && else_body.is_empty() {
                    continue;
                }
                out.push(Stmt::If(IfStmt { conds: kept, then_body, else_body }));
            }
            s => out.push(s),
        }
    }
    out
}

/// Removes guard conditions that always hold and branches that never run.
pub fn simplify_affine_if(f: &mut Function) {
    let body = std::mem::take(&mut f.body);
    f.body = block(body, &Ctx::default());
}

#[cfg(test)]
mod tests {
    use super::*;

    fn func(cond: Constraint) -> Function {
        let mut f = Function::new("t");
        f.locals.push(ArrayDecl { name: "A".into(), ty: MemRefType::new(vec![8], ElemKind::I32, MemorySpace::OnChip1P) });
        let i = f.fresh_var();
        let store = Stmt::Store { value: Operand::ConstI(1), array: "A".into(), indices: vec![IndexExpr::Affine(AffineExpr::var(i))] };
        f.body = vec![Stmt::Loop(Loop {
            var: i,
            name: "i".into(),
            lower: IndexExpr::cst(0),
            upper: IndexExpr::cst(8),
            step: 1,
            body: vec![Stmt::If(IfStmt { conds: vec![cond], then_body: vec![store], else_body: vec![] })],
            directive: None,
            tag: LoopTag::Plain,
        })];
        f
    }

    #[test]
    fn always_true_inlined() {
        let mut f = func(Constraint::ge(AffineExpr::var(0)));
        simplify_affine_if(&mut f);
        assert!(matches!(f.body[0].as_loop().unwrap().body[0], Stmt::Store { .. }));
    }

    #[test]
    fn never_true_deleted() {
        let mut f = func(Constraint::ge(-AffineExpr::var(0) - 1));
        simplify_affine_if(&mut f);
        assert!(f.body[0].as_loop().unwrap().body.is_empty());
    }

    #[test]
    fn undecided_kept() {
        let mut f = func(Constraint::ge(AffineExpr::var(0) - 3));
        let before = f.clone();
        simplify_affine_if(&mut f);
        assert_eq!(f, before);
    }
}
