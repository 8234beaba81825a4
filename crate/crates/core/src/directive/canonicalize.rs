use std::collections::HashMap;

use crate::interp::{eval_arith, Val};
use crate::ir::*;

fn simplify_index(e: &mut IndexExpr) {
    if let IndexExpr::Affine(a) = e {
        *a = a.simplify();
    }
}

fn const_val(o: &Operand) -> Option<Val> {
    match o {
        Operand::ConstF(f) => Some(Val::F(*f)),
        Operand::ConstI(i) => Some(Val::I(*i)),
        _ => None,
    }
}

fn val_operand(v: Val) -> Operand {
    match v {
        Val::F(f) => Operand::ConstF(f),
        Val::I(i) => Operand::ConstI(i),
    }
}

fn canon_operand(o: &mut Operand) {
    if let Operand::Index(e) = o {
        simplify_index(e);
        if let IndexExpr::Affine(a) = e {
            if let Some(c) = a.as_const().and_then(|c| i32::try_from(c).ok()) {
                *o = Operand::ConstI(c);
            }
        }
    }
}

/// The operand an operation reduces to by an exact algebraic identity.
fn identity(op: ArithOp, ty: ElemKind, a: &[Operand]) -> Option<Operand> {
    let is = |o: &Operand, i: i32, f: f32| match o {
        Operand::ConstI(x) => ty == ElemKind::I32 && *x == i,
        Operand::ConstF(x) => ty == ElemKind::F32 && x.to_bits() == f.to_bits(),
        _ => false,
    };
    match (op, ty) {
        (ArithOp::Mul, _) if is(&a[1], 1, 1.0) => Some(a[0].clone()),
        (ArithOp::Mul, _) if is(&a[0], 1, 1.0) => Some(a[1].clone()),
        (ArithOp::Div, _) if is(&a[1], 1, 1.0) => Some(a[0].clone()),
        (ArithOp::Sub, _) if is(&a[1], 0, 0.0) => Some(a[0].clone()),
        (ArithOp::Add, ElemKind::I32) if is(&a[1], 0, 0.0) => Some(a[0].clone()),
        (ArithOp::Add, ElemKind::I32) if is(&a[0], 0, 0.0) => Some(a[1].clone()),
        (ArithOp::Add, ElemKind::F32) if is(&a[1], 0, -0.0) => Some(a[0].clone()),
        (ArithOp::Add, ElemKind::F32) if is(&a[0], 0, -0.0) => Some(a[1].clone()),
        (ArithOp::Mul, ElemKind::I32) if is(&a[0], 0, 0.0) || is(&a[1], 0, 0.0) => Some(Operand::ConstI(0)),
        _ => None,
    }
}

type Key = (ArithOp, Vec<Operand>, ElemKind);

struct Canon {
    replace: HashMap<ValueId, Operand>,
}

impl Canon {
    fn resolve(&self, o: &mut Operand) {
        if let Operand::Value(v) = o {
            if let Some(r) = self.replace.get(v) {
                *o = r.clone();
            }
        }
        canon_operand(o);
    }

    fn block(&mut self, stmts: &mut Vec<Stmt>, scope: &HashMap<Key, ValueId>) {
        let mut scope = scope.clone();
        let mut out = vec![];
        for mut s in std::mem::take(stmts) {
            match &mut s {
                Stmt::Arith { result, op, operands, ty } => {
                    operands.iter_mut().for_each(|o| self.resolve(o));
                    let consts: Option<Vec<Val>> = operands.iter().map(const_val).collect();
                    if let Some(v) = consts.and_then(|c| eval_arith(*op, *ty, &c)) {
                        self.replace.insert(*result, val_operand(v));
                        continue;
                    }
                    if operands.len() == 2 {
                        if let Some(o) = identity(*op, *ty, operands) {
                            self.replace.insert(*result, o);
                            continue;
                        }
                    }
                    let mut key_ops = operands.clone();
                    if op.commutative() {
                        key_ops.sort_by_key(|o| format!("{o:?}"));
                    }
                    let key = (*op, key_ops, *ty);
                    if let Some(prev) = scope.get(&key) {
                        self.replace.insert(*result, Operand::Value(*prev));
                        continue;
                    }
                    scope.insert(key, *result);
                }
                Stmt::Load { indices, .. } => indices.iter_mut().for_each(simplify_index),
                Stmt::Store { value, indices, .. } => {
                    self.resolve(value);
                    indices.iter_mut().for_each(simplify_index);
                }
                Stmt::Call { args, .. } => {
                    for a in args {
                        if let CallArg::Scalar(o) = a {
                            self.resolve(o);
                        }
                    }
                }
                Stmt::Loop(l) => {
                    simplify_index(&mut l.lower);
                    simplify_index(&mut l.upper);
                    self.block(&mut l.body, &scope);
                    if l.body.is_empty() || l.const_trip() == Some(0) {
                        continue;
                    }
                }
                Stmt::If(i) => {
                    for c in &mut i.conds {
                        c.expr = c.expr.simplify();
                    }
                    self.block(&mut i.then_body, &scope);
                    self.block(&mut i.else_body, &scope);
                    if i.then_body.is_empty() && i.else_body.is_empty() {
                        continue;
                    }
                }
                Stmt::Copy { .. } => {}
            }
            out.push(s);
        }
        *stmts = out;
    }
}

fn dce(block: &mut Vec<Stmt>, used: &std::collections::HashSet<ValueId>) -> bool {
    let before = block.len();
    block.retain(|s| match s {
        Stmt::Arith { result, .. } | Stmt::Load { result, .. } => used.contains(result),
        _ => true,
    });
    let mut changed = block.len() != before;
    for s in block.iter_mut() {
        for b in s.child_blocks_mut() {
            changed |= dce(b, used);
        }
    }
    block.retain(|s| match s {
        Stmt::Loop(l) => !l.body.is_empty(),
        Stmt::If(i) => !(i.then_body.is_empty() && i.else_body.is_empty()),
        _ => true,
    });
    changed
}

/// Constant folding, algebraic identities, common subexpression elimination
/// and dead value removal.
pub fn canonicalize(f: &mut Function) {
    let mut c = Canon { replace: HashMap::new() };
    // Resolve chains so that every replacement points at a surviving operand.
    c.block(&mut f.body, &HashMap::new());
    let keys: Vec<ValueId> = c.replace.keys().copied().collect();
    for k in keys {
        let mut o = c.replace[&k].clone();
        while let Operand::Value(v) = o {
            match c.replace.get(&v) {
                Some(n) if *n != o => o = n.clone(),
                _ => break,
            }
        }
        c.replace.insert(k, o);
    }
    if !c.replace.is_empty() {
        util::replace_uses(&mut f.body, &c.replace);
    }
    loop {
        let used = util::used_values(&f.body);
        if !dce(&mut f.body, &used) {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_of(f: &Function) -> Operand {
        match f.body.last().unwrap() {
            Stmt::Store { value, .. } => value.clone(),
            _ => panic!(),
        }
    }

    #[test]
    fn identities_fold_to_input() {
        let mut f = Function::new("t");
        let x0 = f.fresh_value();
        f.params.push(Param::Scalar { name: "x".into(), elem: ElemKind::I32, value: x0 });
        f.params.push(Param::Array {
            name: "o".into(),
            ty: MemRefType::new(vec![1], ElemKind::I32, MemorySpace::OnChip1P),
            interface: InterfaceKind::Bram,
        });
        let x = Operand::Value(ValueId(0));
        let (a, b) = (f.fresh_value(), f.fresh_value());
        f.body = vec![
            Stmt::Arith { result: a, op: ArithOp::Mul, operands: vec![x.clone(), Operand::ConstI(1)], ty: ElemKind::I32 },
            Stmt::Arith { result: b, op: ArithOp::Add, operands: vec![Operand::Value(a), Operand::ConstI(0)], ty: ElemKind::I32 },
            Stmt::Store { value: Operand::Value(b), array: "o".into(), indices: vec![IndexExpr::cst(0)] },
        ];
        canonicalize(&mut f);
        assert_eq!(f.body.len(), 1);
        assert_eq!(store_of(&f), x);
    }

    #[test]
    fn duplicate_adds_merged_and_idempotent() {
        let mut f = Function::new("t");
        let x = f.fresh_value();
        f.params.push(Param::Scalar { name: "x".into(), elem: ElemKind::F32, value: x });
        f.params.push(Param::Array {
            name: "o".into(),
            ty: MemRefType::new(vec![1], ElemKind::F32, MemorySpace::OnChip1P),
            interface: InterfaceKind::Bram,
        });
        let (a, b, c) = (f.fresh_value(), f.fresh_value(), f.fresh_value());
        let add = |r, l: Operand, m: Operand| Stmt::Arith { result: r, op: ArithOp::Add, operands: vec![l, m], ty: ElemKind::F32 };
        f.body = vec![
            add(a, Operand::Value(x), Operand::ConstF(2.0)),
            add(b, Operand::ConstF(2.0), Operand::Value(x)),
            add(c, Operand::Value(a), Operand::Value(b)),
            Stmt::Store { value: Operand::Value(c), array: "o".into(), indices: vec![IndexExpr::cst(0)] },
        ];
        canonicalize(&mut f);
        assert_eq!(f.body.len(), 3);
        let once = f.clone();
        canonicalize(&mut f);
        assert_eq!(f, once);
    }
}
