//! Affine memory dependence analysis over a loop band.
//!
//! Two views are provided. [`analyze_dependences`] reports distance vectors with
//! "nearest instance" semantics: for each sink instance, the distance to the
//! latest earlier instance of the source access touching the same address.
//! [`band_directions`] computes, for all instance pairs, the set of feasible
//! direction (sign) vectors using Fourier–Motzkin; this drives legality checks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::affine::AffineExpr;
use super::fm::System;
use super::stmt::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DepError {
    #[error("non-affine {what} in dependence analysis")]
    NonAffine { what: &'static str },
    #[error("band contains a {what}, which dependence analysis does not model")]
    Unsupported { what: &'static str },
    #[error("band iteration space too large to enumerate ({0} access instances)")]
    TooLarge(u64),
}

#[derive(Clone, Debug)]
pub struct LoopCtx {
    pub var: u32,
    pub lower: AffineExpr,
    pub upper: AffineExpr,
    pub step: i64,
}

#[derive(Clone, Debug)]
pub struct Access {
    /// Preorder position inside the band; also the textual order.
    pub id: usize,
    pub array: String,
    pub is_write: bool,
    pub indices: Vec<AffineExpr>,
    pub loops: Vec<LoopCtx>,
    pub guards: Vec<Constraint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Dist {
    Const(i64),
    Unknown,
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dist::Const(c) => write!(f, "{c}"),
            Dist::Unknown => f.write_str("?"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum DepKind {
    Raw,
    War,
    Waw,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DependenceVector {
    pub src: usize,
    pub sink: usize,
    pub array: String,
    pub kind: DepKind,
    /// One entry per loop common to source and sink, outermost first.
    pub distance: Vec<Dist>,
}

impl DependenceVector {
    /// Index of the first component that is not a constant zero.
    pub fn carrier(&self) -> Option<usize> {
        self.distance.iter().position(|d| *d != Dist::Const(0))
    }
}

fn affine(e: &IndexExpr, what: &'static str) -> Result<AffineExpr, DepError> {
    e.as_affine().cloned().ok_or(DepError::NonAffine { what })
}

pub fn collect_accesses(root: &Loop) -> Result<Vec<Access>, DepError> {
    let mut out = vec![];
    let mut loops = vec![];
    let mut guards = vec![];
    collect_loop(root, &mut loops, &mut guards, &mut out)?;
    Ok(out)
}

fn collect_loop(
    l: &Loop,
    loops: &mut Vec<LoopCtx>,
    guards: &mut Vec<Constraint>,
    out: &mut Vec<Access>,
) -> Result<(), DepError> {
    loops.push(LoopCtx {
        var: l.var,
        lower: affine(&l.lower, "loop bound")?,
        upper: affine(&l.upper, "loop bound")?,
        step: l.step,
    });
    collect_block(&l.body, loops, guards, out)?;
    loops.pop();
    Ok(())
}

fn collect_block(
    block: &[Stmt],
    loops: &mut Vec<LoopCtx>,
    guards: &mut Vec<Constraint>,
    out: &mut Vec<Access>,
) -> Result<(), DepError> {
    for s in block {
        match s {
            Stmt::Loop(l) => collect_loop(l, loops, guards, out)?,
            Stmt::If(i) => {
                let n = guards.len();
                guards.extend(i.conds.iter().cloned());
                collect_block(&i.then_body, loops, guards, out)?;
                guards.truncate(n);
                if !i.else_body.is_empty() {
                    if i.conds.len() != 1 || i.conds[0].eq {
                        // The negation of a conjunction is not a conjunction; drop the guard.
                        collect_block(&i.else_body, loops, guards, out)?;
                    } else {
                        guards.push(Constraint::ge(-i.conds[0].expr.clone() - 1));
                        collect_block(&i.else_body, loops, guards, out)?;
                        guards.truncate(n);
                    }
                }
            }
            Stmt::Load { array, indices, .. } | Stmt::Store { array, indices, .. } => {
                let idx = indices
                    .iter()
                    .map(|e| affine(e, "access index"))
                    .collect::<Result<Vec<_>, _>>()?;
                out.push(Access {
                    id: out.len(),
                    array: array.clone(),
                    is_write: matches!(s, Stmt::Store { .. }),
                    indices: idx,
                    loops: loops.clone(),
                    guards: guards.clone(),
                });
            }
            Stmt::Arith { .. } => {}
            Stmt::Call { .. } => return Err(DepError::Unsupported { what: "call" }),
            Stmt::Copy { .. } => return Err(DepError::Unsupported { what: "copy" }),
        }
    }
    Ok(())
}

fn common_depth(a: &Access, b: &Access) -> usize {
    a.loops.iter().zip(&b.loops).take_while(|(x, y)| x.var == y.var).count()
}

fn kind_of(src_write: bool, sink_write: bool) -> DepKind {
    match (src_write, sink_write) {
        (true, true) => DepKind::Waw,
        (true, false) => DepKind::Raw,
        _ => DepKind::War,
    }
}

const ENUM_CAP: u64 = 1 << 24;

/// Nearest-instance dependence vectors of every access pair in the band rooted at `root`.
/// The root's bounds must be constant.
pub fn analyze_dependences(root: &Loop) -> Result<Vec<DependenceVector>, DepError> {
    let accesses = collect_accesses(root)?;
    match enumerate_nearest(root, &accesses) {
        Ok(v) => Ok(v),
        Err(DepError::TooLarge(_)) => fallback_from_directions(&accesses),
        Err(e) => Err(e),
    }
}

struct Walker<'a> {
    accesses: &'a [Access],
    env: Vec<i64>,
    next: usize,
    arrays: HashMap<&'a str, usize>,
    last: HashMap<(usize, Vec<i64>), Vec<(usize, Vec<i64>)>>,
    summary: BTreeMap<(usize, usize), Vec<Dist>>,
    budget: u64,
}

impl<'a> Walker<'a> {
    fn ivs(&self, a: &Access) -> Vec<i64> {
        a.loops.iter().map(|l| self.env[l.var as usize]).collect()
    }

    fn run_loop(&mut self, l: &'a Loop) -> Result<(), DepError> {
        let get = |e: &IndexExpr, env: &[i64]| e.as_affine().unwrap().eval(&|v| env[v as usize]);
        let lo = get(&l.lower, &self.env);
        let hi = get(&l.upper, &self.env);
        let start = self.next;
        let mut i = lo;
        while i < hi {
            self.env[l.var as usize] = i;
            self.next = start;
            self.run_block(&l.body)?;
            i += l.step;
        }
        self.next = start;
        self.skip_accesses(&l.body);
        Ok(())
    }

    fn skip_accesses(&mut self, block: &[Stmt]) {
        super::util::walk(block, &mut |s| {
            if s.is_memory() {
                self.next += 1;
            }
        });
    }

    fn run_block(&mut self, block: &'a [Stmt]) -> Result<(), DepError> {
        for s in block {
            match s {
                Stmt::Loop(l) => self.run_loop(l)?,
                Stmt::If(i) => {
                    let env = &self.env;
                    let take = i.conds.iter().all(|c| c.holds(&|v| env[v as usize]));
                    if take {
                        self.run_block(&i.then_body)?;
                        self.skip_accesses(&i.else_body);
                    } else {
                        self.skip_accesses(&i.then_body);
                        self.run_block(&i.else_body)?;
                    }
                }
                Stmt::Load { .. } | Stmt::Store { .. } => {
                    let a = &self.accesses[self.next];
                    self.next += 1;
                    if self.budget == 0 {
                        return Err(DepError::TooLarge(ENUM_CAP));
                    }
                    self.budget -= 1;
                    let env = &self.env;
                    let addr: Vec<i64> = a.indices.iter().map(|e| e.eval(&|v| env[v as usize])).collect();
                    let arr = self.arrays[a.array.as_str()];
                    let ivs = self.ivs(a);
                    let key = (arr, addr);
                    let entry = self.last.entry(key).or_default();
                    for (src, src_ivs) in entry.iter() {
                        let sa = &self.accesses[*src];
                        if !sa.is_write && !a.is_write {
                            continue;
                        }
                        let m = common_depth(sa, a);
                        let d: Vec<Dist> = (0..m).map(|k| Dist::Const(ivs[k] - src_ivs[k])).collect();
                        self.summary
                            .entry((*src, a.id))
                            .and_modify(|cur| {
                                for (c, n) in cur.iter_mut().zip(&d) {
                                    if c != n {
                                        *c = Dist::Unknown;
                                    }
                                }
                            })
                            .or_insert(d);
                    }
                    match entry.iter_mut().find(|(s, _)| *s == a.id) {
                        Some(slot) => slot.1 = ivs,
                        None => entry.push((a.id, ivs)),
                    }
                }
                Stmt::Arith { .. } => {}
                Stmt::Call { .. } | Stmt::Copy { .. } => {
                    return Err(DepError::Unsupported { what: "call" })
                }
            }
        }
        Ok(())
    }
}

fn max_var(root: &Loop) -> usize {
    let mut m = root.var;
    super::util::walk(&root.body, &mut |s| {
        if let Stmt::Loop(l) = s {
            m = m.max(l.var)
        }
    });
    m as usize + 1
}

fn enumerate_nearest(root: &Loop, accesses: &[Access]) -> Result<Vec<DependenceVector>, DepError> {
    if root.const_bounds().is_none() {
        return Err(DepError::NonAffine { what: "free variable in band root bound" });
    }
    let mut arrays = HashMap::new();
    for a in accesses {
        let n = arrays.len();
        arrays.entry(a.array.as_str()).or_insert(n);
    }
    let mut w = Walker {
        accesses,
        env: vec![0; max_var(root)],
        next: 0,
        arrays,
        last: HashMap::new(),
        summary: BTreeMap::new(),
        budget: ENUM_CAP,
    };
    w.run_loop(root)?;
    Ok(w
        .summary
        .into_iter()
        .map(|((src, sink), distance)| DependenceVector {
            src,
            sink,
            array: accesses[src].array.clone(),
            kind: kind_of(accesses[src].is_write, accesses[sink].is_write),
            distance,
        })
        .collect())
}

fn fallback_from_directions(accesses: &[Access]) -> Result<Vec<DependenceVector>, DepError> {
    let mut out = vec![];
    for a in accesses {
        for b in accesses {
            if a.array != b.array || !(a.is_write || b.is_write) {
                continue;
            }
            let m = common_depth(a, b);
            let pats = pair_patterns(a, b, m);
            if pats.is_empty() {
                continue;
            }
            let distance = (0..m)
                .map(|k| if pats.iter().all(|p| p[k] == 0) { Dist::Const(0) } else { Dist::Unknown })
                .collect();
            out.push(DependenceVector {
                src: a.id,
                sink: b.id,
                array: a.array.clone(),
                kind: kind_of(a.is_write, b.is_write),
                distance,
            });
        }
    }
    Ok(out)
}

/// Builds the integer system describing instances of one access.
struct Builder {
    sys: System,
    var_map: HashMap<(u8, u32), usize>,
}

impl Builder {
    fn var(&mut self, side: u8, v: u32) -> usize {
        if let Some(&i) = self.var_map.get(&(side, v)) {
            return i;
        }
        let i = self.sys.add_var();
        self.var_map.insert((side, v), i);
        i
    }

    /// Linear form of `e` over system variables, introducing quotient
    /// variables for floordiv and mod.
    fn lin(&mut self, side: u8, e: &AffineExpr) -> (BTreeMap<usize, i64>, i64) {
        match e {
            AffineExpr::Const(c) => (BTreeMap::new(), *c),
            AffineExpr::Var(v) => {
                let i = self.var(side, *v);
                (BTreeMap::from([(i, 1)]), 0)
            }
            AffineExpr::Add(a, b) => {
                let (mut ca, ka) = self.lin(side, a);
                let (cb, kb) = self.lin(side, b);
                for (v, c) in cb {
                    *ca.entry(v).or_insert(0) += c;
                }
                (ca, ka + kb)
            }
            AffineExpr::Mul(a, k) => {
                let (ca, ka) = self.lin(side, a);
                (ca.into_iter().map(|(v, c)| (v, c * k)).collect(), ka * k)
            }
            AffineExpr::FloorDiv(a, c) | AffineExpr::Mod(a, c) => {
                let (ca, ka) = self.lin(side, a);
                let q = self.sys.add_var();
                // c*q <= a <= c*q + c - 1
                let mut lo: Vec<(usize, i64)> = ca.iter().map(|(&v, &k)| (v, k)).collect();
                lo.push((q, -c));
                self.sys.ge(&lo, ka);
                let mut hi: Vec<(usize, i64)> = ca.iter().map(|(&v, &k)| (v, -k)).collect();
                hi.push((q, *c));
                self.sys.ge(&hi, c - 1 - ka);
                if matches!(e, AffineExpr::FloorDiv(..)) {
                    (BTreeMap::from([(q, 1)]), 0)
                } else {
                    let mut r = ca;
                    *r.entry(q).or_insert(0) -= c;
                    (r, ka)
                }
            }
        }
    }

    fn ge(&mut self, side: u8, e: &AffineExpr) {
        let (c, k) = self.lin(side, e);
        let row: Vec<(usize, i64)> = c.into_iter().collect();
        self.sys.ge(&row, k);
    }

    fn eq(&mut self, side: u8, e: &AffineExpr) {
        let (c, k) = self.lin(side, e);
        let row: Vec<(usize, i64)> = c.into_iter().collect();
        self.sys.eq(&row, k);
    }

    fn domain(&mut self, side: u8, a: &Access) {
        for l in &a.loops {
            let x = AffineExpr::Var(l.var);
            self.ge(side, &(x.clone() - l.lower.clone()));
            self.ge(side, &(l.upper.clone() - x.clone() - 1));
            if l.step > 1 {
                let t = self.sys.add_var();
                let xi = self.var(side, l.var);
                let (lc, lk) = self.lin(side, &l.lower);
                // x - lower - step*t == 0
                let mut row: Vec<(usize, i64)> = lc.into_iter().map(|(v, c)| (v, -c)).collect();
                row.push((xi, 1));
                row.push((t, -l.step));
                self.sys.eq(&row, -lk);
            }
        }
        for g in &a.guards {
            if g.eq {
                self.eq(side, &g.expr);
            } else {
                self.ge(side, &g.expr);
            }
        }
    }
}

/// Feasible direction vectors over the first `depth` loops for source `a` and sink `b`,
/// restricted to lexicographically positive ones (all-zero vectors are omitted).
pub fn pair_patterns(a: &Access, b: &Access, depth: usize) -> Vec<Vec<i8>> {
    let depth = depth.min(common_depth(a, b));
    if a.array != b.array || !(a.is_write || b.is_write) || depth == 0 {
        return vec![];
    }
    let mut base = Builder { sys: System::new(0), var_map: HashMap::new() };
    base.domain(0, a);
    base.domain(1, b);
    for (ia, ib) in a.indices.iter().zip(&b.indices) {
        let (ca, ka) = base.lin(0, ia);
        let (cb, kb) = base.lin(1, ib);
        let mut row: BTreeMap<usize, i64> = ca;
        for (v, c) in cb {
            *row.entry(v).or_insert(0) -= c;
        }
        let row: Vec<(usize, i64)> = row.into_iter().collect();
        base.sys.eq(&row, ka - kb);
    }
    if !base.sys.feasible() {
        return vec![];
    }
    let xs: Vec<usize> = a.loops[..depth].iter().map(|l| base.var_map[&(0, l.var)]).collect();
    let ys: Vec<usize> = b.loops[..depth].iter().map(|l| base.var_map[&(1, l.var)]).collect();
    let mut out = vec![];
    let mut pat = vec![0i8; depth];
    search(&base.sys, &xs, &ys, 0, &mut pat, false, &mut out);
    out
}

/// Depth-first enumeration of sign patterns with pruning of infeasible prefixes.
fn search(
    sys: &System,
    xs: &[usize],
    ys: &[usize],
    k: usize,
    pat: &mut Vec<i8>,
    positive: bool,
    out: &mut Vec<Vec<i8>>,
) {
    if k == xs.len() {
        if positive {
            out.push(pat.clone());
        }
        return;
    }
    for s in [1i8, 0, -1] {
        // Before the first non-zero entry only 0 and + keep the vector lex-positive.
        if !positive && s < 0 {
            continue;
        }
        let mut next = sys.clone();
        match s {
            1 => next.ge(&[(ys[k], 1), (xs[k], -1)], -1),
            0 => next.eq(&[(ys[k], 1), (xs[k], -1)], 0),
            _ => next.ge(&[(xs[k], 1), (ys[k], -1)], -1),
        }
        if !next.feasible() {
            continue;
        }
        pat[k] = s;
        search(&next, xs, ys, k + 1, pat, positive || s > 0, out);
    }
    pat[k] = 0;
}

/// Distinct non-zero direction vectors over the first `depth` loops of the band.
pub fn band_directions(root: &Loop, depth: usize) -> Result<Vec<Vec<i8>>, DepError> {
    let accesses = collect_accesses(root)?;
    let mut set = std::collections::BTreeSet::new();
    for a in &accesses {
        for b in &accesses {
            for p in pair_patterns(a, b, depth) {
                set.insert(p);
            }
        }
    }
    Ok(set.into_iter().collect())
}

fn lex_nonneg(v: &[i8]) -> bool {
    match v.iter().find(|&&s| s != 0) {
        None => true,
        Some(&s) => s > 0,
    }
}

/// `perm[i]` is the new position of loop `i`.
pub fn permutation_legal(patterns: &[Vec<i8>], perm: &[usize]) -> bool {
    patterns.iter().all(|p| {
        let mut q = vec![0i8; p.len()];
        for (i, &s) in p.iter().enumerate() {
            q[perm[i]] = s;
        }
        lex_nonneg(&q)
    })
}

/// Tiling the band in its current order (inter-tile loops first, then intra-tile
/// loops of the tiled dimensions) preserves every direction vector.
pub fn tiling_legal(patterns: &[Vec<i8>], tiled: &[bool]) -> bool {
    patterns.iter().all(|p| {
        // Each tiled component expands into (inter, intra) sign options.
        let mut combos: Vec<(Vec<i8>, Vec<i8>)> = vec![(vec![], vec![])];
        for (k, &s) in p.iter().enumerate() {
            let opts: Vec<(i8, Option<i8>)> = if !tiled.get(k).copied().unwrap_or(false) {
                vec![(s, None)]
            } else {
                match s {
                    0 => vec![(0, Some(0))],
                    1 => vec![(0, Some(1)), (1, Some(-1)), (1, Some(0)), (1, Some(1))],
                    _ => vec![(0, Some(-1)), (-1, Some(-1)), (-1, Some(0)), (-1, Some(1))],
                }
            };
            let mut next = vec![];
            for (inter, intra) in &combos {
                for &(o, i) in &opts {
                    let mut a = inter.clone();
                    a.push(o);
                    let mut b = intra.clone();
                    if let Some(i) = i {
                        b.push(i);
                    }
                    next.push((a, b));
                }
            }
            combos = next;
        }
        combos.into_iter().all(|(mut a, b)| {
            a.extend(b);
            lex_nonneg(&a)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(var: u32, lo: i64, hi: AffineExpr, body: Vec<Stmt>) -> Loop {
        Loop {
            var,
            name: format!("l{var}"),
            lower: IndexExpr::cst(lo),
            upper: IndexExpr::Affine(hi),
            step: 1,
            body,
            directive: None,
            tag: LoopTag::Plain,
        }
    }

    fn v(x: u32) -> AffineExpr {
        AffineExpr::var(x)
    }

    fn acc(array: &str, idx: Vec<AffineExpr>, write: Option<u32>, res: u32) -> Stmt {
        let indices = idx.into_iter().map(IndexExpr::Affine).collect();
        match write {
            Some(val) => Stmt::Store { value: Operand::Value(ValueId(val)), array: array.into(), indices },
            None => Stmt::Load { result: ValueId(res), array: array.into(), indices },
        }
    }

    /// for i, j, k: C[i][j] = C[i][j] + A[i][k]
    fn gemm_like(n: i64) -> Loop {
        let body = vec![
            acc("C", vec![v(0), v(1)], None, 0),
            acc("A", vec![v(0), v(2)], None, 1),
            Stmt::Arith {
                result: ValueId(2),
                op: ArithOp::Add,
                operands: vec![Operand::Value(ValueId(0)), Operand::Value(ValueId(1))],
                ty: crate::ir::ElemKind::I32,
            },
            acc("C", vec![v(0), v(1)], Some(2), 0),
        ];
        lp(0, 0, n.into(), vec![Stmt::Loop(lp(1, 0, n.into(), vec![Stmt::Loop(lp(2, 0, n.into(), body))]))])
    }

    #[test]
    fn gemm_store_to_load_distance() {
        let deps = analyze_dependences(&gemm_like(4)).unwrap();
        let raw = deps.iter().find(|d| d.kind == DepKind::Raw && d.array == "C").unwrap();
        assert_eq!(raw.distance, vec![Dist::Const(0), Dist::Const(0), Dist::Const(1)]);
        assert_eq!(raw.carrier(), Some(2));
    }

    #[test]
    fn copy_has_no_carried_deps() {
        let body = vec![acc("A", vec![v(0)], None, 0), acc("B", vec![v(0)], Some(0), 0)];
        let deps = analyze_dependences(&lp(0, 0, 8.into(), body)).unwrap();
        assert!(deps.is_empty());
    }

    #[test]
    fn gemm_directions_and_legality() {
        let pats = band_directions(&gemm_like(4), 3).unwrap();
        assert_eq!(pats, vec![vec![0, 0, 1]]);
        assert!(permutation_legal(&pats, &[1, 2, 0]));
        assert!(tiling_legal(&pats, &[true, true, true]));
    }

    #[test]
    fn skewed_dependence_blocks_interchange() {
        // A[i][j] = A[i-1][j+1]
        let body = vec![
            acc("A", vec![v(0) - 1, v(1) + 1], None, 0),
            acc("A", vec![v(0), v(1)], Some(0), 0),
        ];
        let root = lp(0, 1, 8.into(), vec![Stmt::Loop(lp(1, 0, 7.into(), body))]);
        let pats = band_directions(&root, 2).unwrap();
        assert!(pats.contains(&vec![1, -1]));
        assert!(!permutation_legal(&pats, &[1, 0]));
        assert!(!tiling_legal(&pats, &[true, true]));
        assert!(tiling_legal(&pats, &[false, true]));
    }
}
