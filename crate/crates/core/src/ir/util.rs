use std::collections::{BTreeSet, HashMap, HashSet};

use super::affine::AffineExpr;
use super::stmt::*;

pub fn walk<'a>(block: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in block {
        f(s);
        for b in s.child_blocks() {
            walk(b, f);
        }
    }
}

pub fn walk_mut(block: &mut [Stmt], f: &mut dyn FnMut(&mut Stmt)) {
    for s in block.iter_mut() {
        f(s);
        for b in s.child_blocks_mut() {
            walk_mut(b, f);
        }
    }
}

pub fn count_loops(block: &[Stmt]) -> usize {
    let mut n = 0;
    walk(block, &mut |s| {
        if matches!(s, Stmt::Loop(_)) {
            n += 1
        }
    });
    n
}

pub fn contains_loop(block: &[Stmt]) -> bool {
    count_loops(block) > 0
}

pub fn gen_from_affine(e: &AffineExpr) -> GenExpr {
    match e {
        AffineExpr::Const(c) => GenExpr::Const(*c),
        AffineExpr::Var(v) => GenExpr::Var(*v),
        AffineExpr::Add(a, b) => {
            GenExpr::Bin(GenOp::Add, Box::new(gen_from_affine(a)), Box::new(gen_from_affine(b)))
        }
        AffineExpr::Mul(a, k) => {
            GenExpr::Bin(GenOp::Mul, Box::new(gen_from_affine(a)), Box::new(GenExpr::Const(*k)))
        }
        AffineExpr::FloorDiv(a, c) => GenExpr::Bin(
            GenOp::FloorDiv,
            Box::new(gen_from_affine(a)),
            Box::new(GenExpr::Const(*c)),
        ),
        AffineExpr::Mod(a, c) => {
            GenExpr::Bin(GenOp::Mod, Box::new(gen_from_affine(a)), Box::new(GenExpr::Const(*c)))
        }
    }
}

fn subst_gen(e: &GenExpr, f: &dyn Fn(u32) -> AffineExpr) -> GenExpr {
    match e {
        GenExpr::Const(c) => GenExpr::Const(*c),
        GenExpr::Var(v) => gen_from_affine(&f(*v)),
        GenExpr::Value(x) => GenExpr::Value(*x),
        GenExpr::Bin(op, a, b) => {
            GenExpr::Bin(*op, Box::new(subst_gen(a, f)), Box::new(subst_gen(b, f)))
        }
    }
}

pub fn subst_index(e: &IndexExpr, f: &dyn Fn(u32) -> AffineExpr) -> IndexExpr {
    match e {
        IndexExpr::Affine(a) => IndexExpr::Affine(a.substitute(f)),
        IndexExpr::General(g) => IndexExpr::General(subst_gen(g, f)),
    }
}

fn subst_operand(o: &mut Operand, f: &dyn Fn(u32) -> AffineExpr) {
    if let Operand::Index(e) = o {
        *e = subst_index(e, f);
    }
}

/// Substitute loop variables in every affine / index expression of a block.
pub fn subst_vars(block: &mut [Stmt], f: &dyn Fn(u32) -> AffineExpr) {
    walk_mut(block, &mut |s| match s {
        Stmt::Loop(l) => {
            l.lower = subst_index(&l.lower, f);
            l.upper = subst_index(&l.upper, f);
        }
        Stmt::If(i) => {
            for c in &mut i.conds {
                c.expr = c.expr.substitute(f);
            }
        }
        Stmt::Load { indices, .. } => {
            for e in indices.iter_mut() {
                *e = subst_index(e, f);
            }
        }
        Stmt::Store { value, indices, .. } => {
            subst_operand(value, f);
            for e in indices.iter_mut() {
                *e = subst_index(e, f);
            }
        }
        Stmt::Arith { operands, .. } => {
            for o in operands.iter_mut() {
                subst_operand(o, f);
            }
        }
        Stmt::Call { args, .. } => {
            for a in args.iter_mut() {
                if let CallArg::Scalar(o) = a {
                    subst_operand(o, f);
                }
            }
        }
        Stmt::Copy { .. } => {}
    });
}

pub fn replace_var(block: &mut [Stmt], from: u32, to: &AffineExpr) {
    subst_vars(block, &|v| if v == from { to.clone() } else { AffineExpr::Var(v) });
}

fn rename_gen(e: &mut GenExpr, map: &HashMap<ValueId, Operand>) {
    match e {
        GenExpr::Value(v) => {
            if let Some(o) = map.get(v) {
                *e = match o {
                    Operand::Value(n) => GenExpr::Value(*n),
                    Operand::ConstI(c) => GenExpr::Const(*c as i64),
                    Operand::Index(IndexExpr::Affine(a)) => gen_from_affine(a),
                    Operand::Index(IndexExpr::General(g)) => g.clone(),
                    Operand::ConstF(_) => return,
                };
            }
        }
        GenExpr::Bin(_, a, b) => {
            rename_gen(a, map);
            rename_gen(b, map);
        }
        _ => {}
    }
}

fn rename_index(e: &mut IndexExpr, map: &HashMap<ValueId, Operand>) {
    if let IndexExpr::General(g) = e {
        rename_gen(g, map);
    }
}

fn rename_operand(o: &mut Operand, map: &HashMap<ValueId, Operand>) {
    match o {
        Operand::Value(v) => {
            if let Some(n) = map.get(v) {
                *o = n.clone();
            }
        }
        Operand::Index(e) => rename_index(e, map),
        _ => {}
    }
}

/// Replace uses of values according to `map` (definitions untouched).
pub fn replace_uses(block: &mut [Stmt], map: &HashMap<ValueId, Operand>) {
    if map.is_empty() {
        return;
    }
    walk_mut(block, &mut |s| match s {
        Stmt::Loop(l) => {
            rename_index(&mut l.lower, map);
            rename_index(&mut l.upper, map);
        }
        Stmt::Load { indices, .. } => indices.iter_mut().for_each(|e| rename_index(e, map)),
        Stmt::Store { value, indices, .. } => {
            rename_operand(value, map);
            indices.iter_mut().for_each(|e| rename_index(e, map));
        }
        Stmt::Arith { operands, .. } => operands.iter_mut().for_each(|o| rename_operand(o, map)),
        Stmt::Call { args, .. } => {
            for a in args.iter_mut() {
                if let CallArg::Scalar(o) = a {
                    rename_operand(o, map);
                }
            }
        }
        Stmt::If(_) | Stmt::Copy { .. } => {}
    });
}

/// Clone a block giving every defined value and every loop variable a fresh id.
pub fn clone_fresh(block: &[Stmt], next_value: &mut u32, next_var: &mut u32) -> Vec<Stmt> {
    let mut out = block.to_vec();
    let mut vmap: HashMap<ValueId, Operand> = HashMap::new();
    let mut lmap: HashMap<u32, u32> = HashMap::new();
    walk_mut(&mut out, &mut |s| {
        if let Some(v) = s.defined_value() {
            let n = ValueId(*next_value);
            *next_value += 1;
            vmap.insert(v, Operand::Value(n));
            match s {
                Stmt::Load { result, .. } | Stmt::Arith { result, .. } => *result = n,
                _ => unreachable!(),
            }
        }
        if let Stmt::Loop(l) = s {
            let n = *next_var;
            *next_var += 1;
            lmap.insert(l.var, n);
            l.var = n;
        }
    });
    replace_uses(&mut out, &vmap);
    if !lmap.is_empty() {
        subst_vars(&mut out, &|v| AffineExpr::Var(lmap.get(&v).copied().unwrap_or(v)));
    }
    out
}

fn gen_values(e: &GenExpr, out: &mut HashSet<ValueId>) {
    match e {
        GenExpr::Value(v) => {
            out.insert(*v);
        }
        GenExpr::Bin(_, a, b) => {
            gen_values(a, out);
            gen_values(b, out);
        }
        _ => {}
    }
}

fn index_values(e: &IndexExpr, out: &mut HashSet<ValueId>) {
    if let IndexExpr::General(g) = e {
        gen_values(g, out);
    }
}

fn operand_values(o: &Operand, out: &mut HashSet<ValueId>) {
    match o {
        Operand::Value(v) => {
            out.insert(*v);
        }
        Operand::Index(e) => index_values(e, out),
        _ => {}
    }
}

/// Values read directly by a statement (not by nested statements).
pub fn stmt_uses(s: &Stmt) -> HashSet<ValueId> {
    let mut out = HashSet::new();
    match s {
        Stmt::Loop(l) => {
            index_values(&l.lower, &mut out);
            index_values(&l.upper, &mut out);
        }
        Stmt::Load { indices, .. } => indices.iter().for_each(|e| index_values(e, &mut out)),
        Stmt::Store { value, indices, .. } => {
            operand_values(value, &mut out);
            indices.iter().for_each(|e| index_values(e, &mut out));
        }
        Stmt::Arith { operands, .. } => operands.iter().for_each(|o| operand_values(o, &mut out)),
        Stmt::Call { args, .. } => {
            for a in args {
                if let CallArg::Scalar(o) = a {
                    operand_values(o, &mut out);
                }
            }
        }
        Stmt::If(_) | Stmt::Copy { .. } => {}
    }
    out
}

pub fn used_values(block: &[Stmt]) -> HashSet<ValueId> {
    let mut out = HashSet::new();
    walk(block, &mut |s| out.extend(stmt_uses(s)));
    out
}

pub fn defined_values(block: &[Stmt]) -> HashSet<ValueId> {
    let mut out = HashSet::new();
    walk(block, &mut |s| {
        if let Some(v) = s.defined_value() {
            out.insert(v);
        }
    });
    out
}

/// Arrays read and written by a block. Calls and copies need the program for
/// precise callee effects; without it call arguments count as both.
pub fn array_effects(block: &[Stmt], prog: Option<&Program>) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut reads = BTreeSet::new();
    let mut writes = BTreeSet::new();
    walk(block, &mut |s| match s {
        Stmt::Load { array, .. } => {
            reads.insert(array.clone());
        }
        Stmt::Store { array, .. } => {
            writes.insert(array.clone());
        }
        Stmt::Copy { src, dst } => {
            reads.insert(src.clone());
            writes.insert(dst.clone());
        }
        Stmt::Call { callee, args } => {
            let callee_fn = prog.and_then(|p| p.function(callee));
            for (i, a) in args.iter().enumerate() {
                let CallArg::Array(name) = a else { continue };
                match callee_fn.and_then(|f| f.params.get(i)).map(|p| p.name().to_string()) {
                    Some(pname) => {
                        let f = callee_fn.unwrap();
                        let (r, w) = array_effects(&f.body, prog);
                        if r.contains(&pname) {
                            reads.insert(name.clone());
                        }
                        if w.contains(&pname) {
                            writes.insert(name.clone());
                        }
                    }
                    None => {
                        reads.insert(name.clone());
                        writes.insert(name.clone());
                    }
                }
            }
        }
        Stmt::Loop(_) | Stmt::If(_) | Stmt::Arith { .. } => {}
    });
    (reads, writes)
}

/// Largest value id and loop var used anywhere in the function, plus one.
pub fn id_bounds(f: &Function) -> (u32, u32) {
    let mut nv = 0;
    let mut nl = 0;
    for p in &f.params {
        if let Param::Scalar { value, .. } = p {
            nv = nv.max(value.0 + 1);
        }
    }
    walk(&f.body, &mut |s| {
        if let Some(v) = s.defined_value() {
            nv = nv.max(v.0 + 1);
        }
        if let Stmt::Loop(l) = s {
            nl = nl.max(l.var + 1);
        }
    });
    (nv, nl)
}

/// Strip every performance annotation: loop/function directives and layouts.
pub fn erase_directives(p: &mut Program) {
    for f in &mut p.functions {
        f.directive = FuncDirective::default();
        for prm in &mut f.params {
            if let Param::Array { ty, .. } = prm {
                ty.strip_layout();
            }
        }
        for l in &mut f.locals {
            l.ty.strip_layout();
        }
        walk_mut(&mut f.body, &mut |s| {
            if let Stmt::Loop(l) = s {
                l.directive = None;
            }
        });
    }
}

/// Paths (child indices) of the top-level loops of a block.
pub fn top_level_loops(block: &[Stmt]) -> Vec<usize> {
    block
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Stmt::Loop(_)))
        .map(|(i, _)| i)
        .collect()
}
