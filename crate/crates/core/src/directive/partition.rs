use std::collections::{BTreeMap, HashMap};

use crate::ir::*;

/// Outcome of the partition formula for one array dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DimDecision {
    /// Distinct index expressions seen in this dimension.
    pub accesses: i64,
    /// Largest `index_m - index_n + 1` over access pairs; `None` when some pair
    /// has a non-constant difference.
    pub max_distance: Option<i64>,
    pub partition: DimPartition,
}

impl DimDecision {
    /// `accesses / max_distance >= 1`.
    pub fn is_cyclic(&self) -> bool {
        self.max_distance.map_or(false, |d| self.accesses >= d)
    }
}

fn index_diff(a: &IndexExpr, b: &IndexExpr) -> Option<i64> {
    match (a, b) {
        (IndexExpr::Affine(x), IndexExpr::Affine(y)) => (x.clone() - y.clone()).simplify().as_const(),
        _ if a == b => Some(0),
        _ => None,
    }
}

/// Applies the partition formula to the distinct indices of one dimension.
pub fn decide_dim(exprs: &[IndexExpr], extent: i64) -> DimDecision {
    let mut distinct: Vec<&IndexExpr> = vec![];
    for e in exprs {
        if !distinct.iter().any(|d| index_diff(d, e) == Some(0)) {
            distinct.push(e);
        }
    }
    let accesses = distinct.len() as i64;
    let mut max_distance = Some(1);
    for m in &distinct {
        for n in &distinct {
            max_distance = match (max_distance, index_diff(m, n)) {
                (Some(d), Some(k)) => Some(d.max(k + 1)),
                _ => None,
            };
        }
    }
    let factor = accesses.clamp(1, extent.max(1));
    let mut d = DimDecision { accesses, max_distance, partition: DimPartition::NONE };
    if factor > 1 {
        d.partition = if d.is_cyclic() { DimPartition::cyclic(factor) } else { DimPartition::block(factor) };
    }
    d
}

/// Index tuples of every access inside pipelined regions of `f`, per array.
pub fn region_accesses(f: &Function) -> BTreeMap<String, Vec<Vec<IndexExpr>>> {
    let mut out: BTreeMap<String, Vec<Vec<IndexExpr>>> = BTreeMap::new();
    let mut collect = |block: &[Stmt]| {
        util::walk(block, &mut |s| match s {
            Stmt::Load { array, indices, .. } | Stmt::Store { array, indices, .. } => {
                out.entry(array.clone()).or_default().push(indices.clone());
            }
            _ => {}
        })
    };
    if f.directive.pipeline {
        collect(&f.body);
    } else {
        fn regions<'a>(block: &'a [Stmt], acc: &mut Vec<&'a [Stmt]>) {
            for s in block {
                match s {
                    Stmt::Loop(l) if l.is_pipelined() => acc.push(&l.body),
                    _ => s.child_blocks().into_iter().for_each(|b| regions(b, acc)),
                }
            }
        }
        let mut acc = vec![];
        regions(&f.body, &mut acc);
        for b in acc {
            collect(b);
        }
    }
    out
}

/// Per-dimension decisions for every array accessed in a pipelined region of `f`.
pub fn analyze_function(f: &Function) -> BTreeMap<String, Vec<DimDecision>> {
    let mut out = BTreeMap::new();
    for (array, tuples) in region_accesses(f) {
        let Some(ty) = f.array_type(&array) else { continue };
        let decisions = (0..ty.rank())
            .map(|d| {
                let exprs: Vec<IndexExpr> = tuples.iter().filter_map(|t| t.get(d).cloned()).collect();
                decide_dim(&exprs, ty.shape[d])
            })
            .collect();
        out.insert(array, decisions);
    }
    out
}

/// Maps every (function, array) to the (function, array) that owns the storage.
fn storage_roots(p: &Program) -> HashMap<(String, String), (String, String)> {
    let mut parent: HashMap<(String, String), (String, String)> = HashMap::new();
    for f in &p.functions {
        util::walk(&f.body, &mut |s| {
            if let Stmt::Call { callee, args } = s {
                let Some(g) = p.function(callee) else { return };
                for (param, arg) in g.params.iter().zip(args) {
                    if let (Param::Array { name, .. }, CallArg::Array(a)) = (param, arg) {
                        parent.entry((g.name.clone(), name.clone())).or_insert((f.name.clone(), a.clone()));
                    }
                }
            }
        });
    }
    let mut roots = HashMap::new();
    for f in &p.functions {
        for a in f.array_names() {
            let mut cur = (f.name.clone(), a.clone());
            let mut hops = 0;
            while let Some(next) = parent.get(&cur) {
                cur = next.clone();
                hops += 1;
                if hops > p.functions.len() {
                    break;
                }
            }
            roots.insert((f.name.clone(), a), cur);
        }
    }
    roots
}

/// Partitions arrays accessed in pipelined regions. Decisions from different
/// functions sharing one buffer are merged: the largest factor wins and the
/// fashion comes from the scope with the most distinct accesses. `overrides`
/// gives explicit per-dimension factors by array name.
pub fn array_partition(p: &mut Program, overrides: &BTreeMap<String, Vec<i64>>) {
    let roots = storage_roots(p);
    let mut merged: HashMap<(String, String), Vec<DimDecision>> = HashMap::new();
    for f in &p.functions {
        for (array, ds) in analyze_function(f) {
            let root = roots[&(f.name.clone(), array)].clone();
            let entry = merged.entry(root).or_insert_with(|| ds.clone());
            for (m, d) in entry.iter_mut().zip(&ds) {
                let factor = m.partition.factor.max(d.partition.factor);
                let fashion_src = if d.accesses > m.accesses { *d } else { *m };
                *m = DimDecision {
                    accesses: m.accesses.max(d.accesses),
                    max_distance: fashion_src.max_distance,
                    partition: DimPartition { fashion: fashion_src.partition.fashion, factor },
                };
                if m.partition.factor > 1 && m.partition.fashion == Fashion::None {
                    m.partition.fashion = Fashion::Cyclic;
                }
            }
        }
    }
    for f in &mut p.functions {
        let fname = f.name.clone();
        for a in f.array_names() {
            let root = &roots[&(fname.clone(), a.clone())];
            let ty = f.array_type_mut(&a).unwrap();
            ty.strip_layout();
            let mut parts: Vec<DimPartition> = match merged.get(root) {
                Some(ds) => ds.iter().map(|d| d.partition).collect(),
                None => vec![DimPartition::NONE; ty.rank()],
            };
            if let Some(fs) = overrides.get(&a).or_else(|| overrides.get(&root.1)) {
                for (part, &k) in parts.iter_mut().zip(fs) {
                    *part = match (part.fashion, k) {
                        (_, k) if k <= 1 => DimPartition::NONE,
                        (Fashion::Block, k) => DimPartition::block(k),
                        (_, k) => DimPartition::cyclic(k),
                    };
                }
            }
            *ty = ty.clone().with_partition(&parts);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(x: AffineExpr) -> IndexExpr {
        IndexExpr::Affine(x)
    }

    #[test]
    fn neighbouring_rows_cyclic_two() {
        let i = AffineExpr::var(0);
        let d = decide_dim(&[e(i.clone()), e(i + 1)], 32);
        assert_eq!((d.accesses, d.max_distance), (2, Some(2)));
        assert_eq!(d.partition, DimPartition::cyclic(2));
    }

    #[test]
    fn far_apart_block_two() {
        let j = AffineExpr::var(0);
        let d = decide_dim(&[e(j.clone()), e(j + 8)], 64);
        assert_eq!(d.max_distance, Some(9));
        assert_eq!(d.partition, DimPartition::block(2));
    }

    #[test]
    fn single_access_no_partition() {
        let d = decide_dim(&[e(AffineExpr::var(0)), e(AffineExpr::var(0))], 8);
        assert_eq!(d.accesses, 1);
        assert_eq!(d.partition, DimPartition::NONE);
    }

    #[test]
    fn unrelated_indices_block_clamped() {
        let xs: Vec<IndexExpr> = (0..5).map(|v| e(AffineExpr::var(v))).collect();
        let d = decide_dim(&xs, 4);
        assert_eq!(d.max_distance, None);
        assert_eq!(d.partition, DimPartition::block(4));
    }
}
