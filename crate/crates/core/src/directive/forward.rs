use std::collections::{BTreeSet, HashMap};

use crate::ir::*;

fn same_index(a: &IndexExpr, b: &IndexExpr) -> bool {
    match (a, b) {
        (IndexExpr::Affine(x), IndexExpr::Affine(y)) => (x.clone() - y.clone()).simplify().as_const() == Some(0),
        _ => a == b,
    }
}

fn same_addr(a: &[IndexExpr], b: &[IndexExpr]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same_index(x, y))
}

/// False only when some dimension differs by a non-zero constant.
fn may_alias(a: &[IndexExpr], b: &[IndexExpr]) -> bool {
    !a.iter().zip(b).any(|(x, y)| match (x, y) {
        (IndexExpr::Affine(x), IndexExpr::Affine(y)) => {
            matches!((x.clone() - y.clone()).simplify().as_const(), Some(k) if k != 0)
        }
        _ => false,
    })
}

#[derive(Clone, Default)]
struct Avail {
    entries: Vec<(String, Vec<IndexExpr>, Operand)>,
}

impl Avail {
    fn kill_arrays(&mut self, arrays: &BTreeSet<String>) {
        self.entries.retain(|(a, _, _)| !arrays.contains(a));
    }

    fn kill_alias(&mut self, array: &str, idx: &[IndexExpr]) {
        self.entries.retain(|(a, i, _)| a != array || !may_alias(i, idx));
    }

    fn lookup(&self, array: &str, idx: &[IndexExpr]) -> Option<&Operand> {
        self.entries.iter().rev().find(|(a, i, _)| a == array && same_addr(i, idx)).map(|(_, _, o)| o)
    }
}

struct Engine {
    forward_stores: bool,
    merge_loads: bool,
    replace: HashMap<ValueId, Operand>,
}

impl Engine {
    fn resolve(&self, o: &Operand) -> Operand {
        match o {
            Operand::Value(v) => self.replace.get(v).cloned().unwrap_or_else(|| o.clone()),
            _ => o.clone(),
        }
    }

    fn writes(block: &[Stmt]) -> Option<BTreeSet<String>> {
        let mut call = false;
        util::walk(block, &mut |s| call |= matches!(s, Stmt::Call { .. }));
        (!call).then(|| util::array_effects(block, None).1)
    }

    fn block(&mut self, stmts: Vec<Stmt>, avail: &mut Avail) -> Vec<Stmt> {
        let mut out = vec![];
        for s in stmts {
            match s {
                Stmt::Load { result, array, indices } => {
                    if let Some(o) = avail.lookup(&array, &indices) {
                        let o = self.resolve(&o.clone());
                        self.replace.insert(result, o);
                        continue;
                    }
                    if self.merge_loads {
                        avail.entries.push((array.clone(), indices.clone(), Operand::Value(result)));
                    }
                    out.push(Stmt::Load { result, array, indices });
                }
                Stmt::Store { value, array, indices } => {
                    avail.kill_alias(&array, &indices);
                    if self.forward_stores {
                        avail.entries.push((array.clone(), indices.clone(), self.resolve(&value)));
                    }
                    out.push(Stmt::Store { value, array, indices });
                }
                Stmt::Loop(mut l) => {
                    let written = Self::writes(&l.body);
                    let mut inner = match &written {
                        Some(w) => {
                            let mut a = avail.clone();
                            a.kill_arrays(w);
                            a
                        }
                        None => Avail::default(),
                    };
                    l.body = self.block(l.body, &mut inner);
                    match written {
                        Some(w) => avail.kill_arrays(&w),
                        None => *avail = Avail::default(),
                    }
                    out.push(Stmt::Loop(l));
                }
                Stmt::If(mut i) => {
                    let w1 = Self::writes(&i.then_body);
                    let w2 = Self::writes(&i.else_body);
                    let mut a1 = avail.clone();
                    i.then_body = self.block(i.then_body, &mut a1);
                    let mut a2 = avail.clone();
                    i.else_body = self.block(i.else_body, &mut a2);
                    match (w1, w2) {
                        (Some(x), Some(y)) => {
                            avail.kill_arrays(&x);
                            avail.kill_arrays(&y);
                        }
                        _ => *avail = Avail::default(),
                    }
                    out.push(Stmt::If(i));
                }
                Stmt::Call { .. } => {
                    *avail = Avail::default();
                    out.push(s);
                }
                Stmt::Copy { ref dst, .. } => {
                    avail.kill_arrays(&BTreeSet::from([dst.clone()]));
                    out.push(s);
                }
                Stmt::Arith { .. } => out.push(s),
            }
        }
        out
    }

    fn run(mut self, f: &mut Function) {
        let body = std::mem::take(&mut f.body);
        let mut body = self.block(body, &mut Avail::default());
        if !self.replace.is_empty() {
            util::replace_uses(&mut body, &self.replace);
        }
        f.body = body;
    }
}

/// Removes stores to local buffers that are never read, then the buffers themselves.
fn remove_dead_locals(f: &mut Function) {
    let (reads, writes) = util::array_effects(&f.body, None);
    let mut passed = BTreeSet::new();
    util::walk(&f.body, &mut |s| match s {
        Stmt::Call { args, .. } => args.iter().for_each(|a| {
            if let CallArg::Array(n) = a {
                passed.insert(n.clone());
            }
        }),
        Stmt::Copy { src, .. } => {
            passed.insert(src.clone());
        }
        _ => {}
    });
    let dead: BTreeSet<String> =
        f.locals.iter().map(|l| l.name.clone()).filter(|n| !reads.contains(n) && !passed.contains(n)).collect();
    if dead.is_empty() {
        return;
    }
    fn strip(block: &mut Vec<Stmt>, dead: &BTreeSet<String>) {
        block.retain(|s| match s {
            Stmt::Store { array, .. } => !dead.contains(array),
            Stmt::Copy { dst, .. } => !dead.contains(dst),
            _ => true,
        });
        for s in block.iter_mut() {
            for b in s.child_blocks_mut() {
                strip(b, dead);
            }
        }
    }
    if dead.iter().any(|d| writes.contains(d)) {
        strip(&mut f.body, &dead);
    }
    f.locals.retain(|l| !dead.contains(&l.name));
}

/// Forwards stored values to later loads of the same address.
pub fn store_forward(f: &mut Function) {
    Engine { forward_stores: true, merge_loads: false, replace: HashMap::new() }.run(f);
    remove_dead_locals(f);
}

fn collapse_stores(block: &mut Vec<Stmt>) {
    let mut pending: Vec<(String, Vec<IndexExpr>)> = vec![];
    let mut keep = vec![true; block.len()];
    for (k, s) in block.iter().enumerate().rev() {
        match s {
            Stmt::Store { array, indices, .. } => {
                if pending.iter().any(|(a, i)| a == array && same_addr(i, indices)) {
                    keep[k] = false;
                } else {
                    pending.push((array.clone(), indices.clone()));
                }
            }
            Stmt::Load { array, indices, .. } => pending.retain(|(a, i)| a != array || !may_alias(i, indices)),
            Stmt::Arith { .. } => {}
            Stmt::Call { .. } => pending.clear(),
            other => {
                let mut call = false;
                util::walk(std::slice::from_ref(other), &mut |x| call |= matches!(x, Stmt::Call { .. }));
                if call {
                    pending.clear();
                } else {
                    let (reads, _) = util::array_effects(std::slice::from_ref(other), None);
                    pending.retain(|(a, _)| !reads.contains(a));
                }
            }
        }
    }
    let mut k = 0;
    block.retain(|_| {
        k += 1;
        keep[k - 1]
    });
    for s in block.iter_mut() {
        for b in s.child_blocks_mut() {
            collapse_stores(b);
        }
    }
}

/// Merges repeated loads of one address and drops stores overwritten before any read.
pub fn simplify_memref_access(f: &mut Function) {
    Engine { forward_stores: false, merge_loads: true, replace: HashMap::new() }.run(f);
    collapse_stores(&mut f.body);
}
