//! A cycle-driven simulator of the estimator's hardware model: each block is
//! list-scheduled cycle by cycle from the end, and each pipelined nest is
//! replayed instance by instance at a candidate II.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use hlsforge::corpus::Kernel;
use hlsforge::ir::*;
use hlsforge::qor::{OpClass, TargetSpec};
use hlsforge::{directive, loops};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Env = HashMap<u32, i64>;

#[derive(Clone)]
enum K {
    Op,
    Mem { array: String, write: bool, addr: Vec<AffineExpr>, bank: Vec<Option<i64>> },
    Reg { reads: BTreeSet<String>, writes: BTreeSet<String> },
}

#[derive(Clone)]
struct N<'a> {
    k: K,
    lat: u64,
    def: Option<ValueId>,
    uses: Vec<ValueId>,
    guards: Vec<(&'a [Constraint], bool)>,
}

fn vals(o: &Operand) -> Option<ValueId> {
    match o {
        Operand::Value(v) => Some(*v),
        _ => None,
    }
}

fn lin_differs(a: &AffineExpr, b: &AffineExpr) -> bool {
    matches!((a.clone() - b.clone()).simplify().as_const(), Some(k) if k != 0)
}

fn same(a: &[AffineExpr], b: &[AffineExpr]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x.clone() - y.clone()).simplify().as_const() == Some(0))
}

fn sets(n: &N) -> (BTreeSet<String>, BTreeSet<String>) {
    match &n.k {
        K::Op => Default::default(),
        K::Mem { array, write, .. } => {
            let s = BTreeSet::from([array.clone()]);
            if *write {
                (BTreeSet::new(), s)
            } else {
                (s, BTreeSet::new())
            }
        }
        K::Reg { reads, writes } => (reads.clone(), writes.clone()),
    }
}

/// Minimum distance in cycles from the start of `a` to the start of a later `b`.
fn dep(a: &N, b: &N) -> Option<u64> {
    let mut out = None::<u64>;
    if a.def.is_some_and(|d| b.uses.contains(&d)) {
        out = Some(a.lat);
    }
    let disjoint = match (&a.k, &b.k) {
        (K::Mem { addr: x, .. }, K::Mem { addr: y, .. }) => x.iter().zip(y).any(|(p, q)| lin_differs(p, q)),
        _ => false,
    };
    if disjoint {
        return out;
    }
    let (ar, aw) = sets(a);
    let (br, bw) = sets(b);
    if aw.iter().any(|x| br.contains(x) || bw.contains(x)) {
        out = Some(out.unwrap_or(0).max(a.lat));
    }
    if ar.iter().any(|x| bw.contains(x)) {
        out = Some(out.unwrap_or(0));
    }
    out
}

pub struct Sim<'p> {
    pub p: &'p Program,
    pub t: &'p TargetSpec,
}

/// Static bank of each dimension, from loop-variable congruences and ranges.
fn bank(ty: &MemRefType, addr: &[AffineExpr], loops_in: &[&Loop]) -> Vec<Option<i64>> {
    let parts = ty.decode_partition().unwrap();
    let mut congr: HashMap<u32, (i64, i64)> = HashMap::new();
    let mut ranges: HashMap<u32, (i64, i64)> = HashMap::new();
    for l in loops_in {
        let lo = l.lower.as_affine().and_then(|e| e.as_const());
        congr.insert(l.var, lo.map_or((1, 0), |c| (l.step, c.rem_euclid(l.step))));
        match loops::var_range(l, &ranges) {
            Some(r) => ranges.insert(l.var, r),
            None => ranges.remove(&l.var),
        };
    }
    parts
        .iter()
        .zip(addr)
        .enumerate()
        .map(|(d, (p, e))| {
            if p.factor <= 1 {
                return Some(0);
            }
            if p.fashion == Fashion::Block {
                let b = block_size(ty.shape[d], p.factor);
                let (lo, hi) = e.range(&|v| ranges.get(&v).copied())?;
                return (lo / b == hi / b).then_some(lo / b);
            }
            let lf = e.as_linear()?;
            let mut r = lf.constant;
            for (v, c) in &lf.coeffs {
                let (m, k) = congr.get(v).copied().unwrap_or((1, 0));
                if (c * m) % p.factor != 0 {
                    return None;
                }
                r += c * k;
            }
            Some(r.rem_euclid(p.factor))
        })
        .collect()
}

fn overlap(a: &[Option<i64>], b: &[Option<i64>]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.is_none() || y.is_none() || x == y)
}

fn nest_loops(l: &Loop) -> Vec<&Loop> {
    let mut out = vec![l];
    while !out.last().unwrap().is_pipelined() {
        let c = out.last().unwrap();
        if !c.is_flattened() || !c.is_perfect_parent() {
            return vec![];
        }
        out.push(c.only_child_loop().unwrap());
    }
    out
}

impl<'p> Sim<'p> {
    fn cyc(&self, c: OpClass) -> u64 {
        self.t.cost(c).cycles as u64
    }

    fn nodes<'a>(&self, f: &Function, block: &'a [Stmt], g: &[(&'a [Constraint], bool)], scope: &[&Loop], env: &mut Env, out: &mut Vec<N<'a>>) {
        for s in block {
            let reg = |lat: u64| {
                let (reads, writes) = util::array_effects(std::slice::from_ref(s), Some(self.p));
                N { k: K::Reg { reads, writes }, lat, def: None, uses: util::used_values(std::slice::from_ref(s)).into_iter().collect(), guards: g.to_vec() }
            };
            let n = match s {
                Stmt::If(i) if !util::contains_loop(&i.then_body) && !util::contains_loop(&i.else_body) => {
                    let mut gg = g.to_vec();
                    gg.push((&i.conds[..], true));
                    self.nodes(f, &i.then_body, &gg, scope, env, out);
                    gg.pop();
                    gg.push((&i.conds[..], false));
                    self.nodes(f, &i.else_body, &gg, scope, env, out);
                    continue;
                }
                Stmt::If(i) => {
                    let a = self.block(f, &i.then_body, scope, env);
                    let b = self.block(f, &i.else_body, scope, env);
                    reg(a.max(b))
                }
                Stmt::Loop(l) => {
                    let lat = self.lp(f, l, scope, env);
                    reg(lat)
                }
                Stmt::Call { callee, .. } => reg(self.func(callee).0),
                Stmt::Copy { src, .. } => reg(f.array_type(src).unwrap().num_elements() as u64 + 1),
                Stmt::Load { result, array, indices } => {
                    let addr: Vec<AffineExpr> = indices.iter().map(|e| e.as_affine().expect("affine").clone()).collect();
                    N {
                        k: K::Mem { array: array.clone(), write: false, bank: bank(f.array_type(array).unwrap(), &addr, scope), addr },
                        lat: self.cyc(OpClass::Load),
                        def: Some(*result),
                        uses: vec![],
                        guards: g.to_vec(),
                    }
                }
                Stmt::Store { value, array, indices } => {
                    let addr: Vec<AffineExpr> = indices.iter().map(|e| e.as_affine().expect("affine").clone()).collect();
                    N {
                        k: K::Mem { array: array.clone(), write: true, bank: bank(f.array_type(array).unwrap(), &addr, scope), addr },
                        lat: self.cyc(OpClass::Store),
                        def: None,
                        uses: vals(value).into_iter().collect(),
                        guards: g.to_vec(),
                    }
                }
                Stmt::Arith { result, op, operands, ty } => N {
                    k: K::Op,
                    lat: self.cyc(OpClass::of(*op, *ty)),
                    def: Some(*result),
                    uses: operands.iter().filter_map(vals).collect(),
                    guards: g.to_vec(),
                },
            };
            out.push(n);
        }
    }

    fn fits(&self, f: &Function, j: &N, here: &[&N]) -> bool {
        let K::Mem { array, write, addr, bank: bk } = &j.k else { return true };
        let (r, w, s) = f.array_type(array).unwrap().space.ports();
        let mut reads: Vec<&[AffineExpr]> = vec![];
        let mut writes = 0;
        for o in here {
            let K::Mem { array: a2, write: w2, addr: x2, bank: b2 } = &o.k else { continue };
            if a2 != array || !overlap(bk, b2) {
                continue;
            }
            if *w2 {
                writes += 1;
            } else if !reads.iter().any(|x| same(x, x2)) {
                reads.push(x2);
            }
        }
        if !write && reads.iter().any(|x| same(x, addr)) {
            return true;
        }
        let nr = reads.len() as u32;
        if s > 0 {
            nr + writes < s
        } else if *write {
            writes < w
        } else {
            nr < r
        }
    }

    /// Reverse list scheduling, one cycle at a time. Returns start times and depth.
    fn sched(&self, f: &Function, ns: &[N]) -> (Vec<u64>, u64) {
        let n = ns.len();
        if n == 0 {
            return (vec![], 0);
        }
        let mut succ: Vec<Vec<(usize, u64)>> = vec![vec![]; n];
        let mut asap = vec![0u64; n];
        for j in 0..n {
            for i in 0..j {
                if let Some(d) = dep(&ns[i], &ns[j]) {
                    succ[i].push((j, d));
                    asap[j] = asap[j].max(asap[i] + d);
                }
            }
        }
        let horizon = (0..n).map(|i| asap[i] + ns[i].lat).max().unwrap() as i64;
        let mut at: Vec<Option<i64>> = vec![None; n];
        let mut by: HashMap<i64, Vec<usize>> = HashMap::new();
        let mut left = n;
        let mut c = horizon;
        while left > 0 {
            for j in (0..n).rev() {
                if at[j].is_some() || succ[j].iter().any(|(k, _)| at[*k].is_none()) {
                    continue;
                }
                let limit = succ[j].iter().map(|(k, d)| at[*k].unwrap() - *d as i64).fold(horizon - ns[j].lat as i64, i64::min);
                if c > limit {
                    continue;
                }
                let here: Vec<&N> = by.get(&c).map_or(vec![], |v| v.iter().map(|&i| &ns[i]).collect());
                if self.fits(f, &ns[j], &here) {
                    at[j] = Some(c);
                    by.entry(c).or_default().push(j);
                    left -= 1;
                }
            }
            c -= 1;
        }
        let lo = at.iter().map(|x| x.unwrap()).min().unwrap();
        let start: Vec<u64> = at.iter().map(|x| (x.unwrap() - lo) as u64).collect();
        let depth = (0..n).map(|i| start[i] + ns[i].lat).max().unwrap();
        (start, depth)
    }

    fn block(&self, f: &Function, b: &[Stmt], scope: &[&Loop], env: &mut Env) -> u64 {
        let mut ns = vec![];
        self.nodes(f, b, &[], scope, env, &mut ns);
        self.sched(f, &ns).1
    }

    fn bounds(l: &Loop, env: &Env) -> (i64, i64) {
        let ev = |e: &IndexExpr| e.as_affine().unwrap().eval(&|v| env[&v]);
        (ev(&l.lower), ev(&l.upper))
    }

    fn lp(&self, f: &Function, l: &Loop, scope: &[&Loop], env: &mut Env) -> u64 {
        let chain = nest_loops(l);
        if !chain.is_empty() {
            return self.pipe(f, &chain, scope, env);
        }
        let (lo, hi) = Self::bounds(l, env);
        let mut inner = scope.to_vec();
        inner.push(l);
        let mut total = self.t.loop_overhead;
        let mut v = lo;
        while v < hi {
            env.insert(l.var, v);
            total += self.block(f, &l.body, &inner, env);
            v += l.step;
        }
        env.remove(&l.var);
        total
    }

    fn pipe(&self, f: &Function, chain: &[&Loop], scope: &[&Loop], env: &mut Env) -> u64 {
        let pipe = *chain.last().unwrap();
        let mut inner = scope.to_vec();
        inner.extend_from_slice(chain);
        let mut ns = vec![];
        self.nodes(f, &pipe.body, &[], &inner, env, &mut ns);
        let (start, depth) = self.sched(f, &ns);

        let mut ii0 = pipe.directive.unwrap().target_ii.max(1) as u64;
        for a in &ns {
            let K::Mem { array, bank: ba, .. } = &a.k else { continue };
            let mut reads: Vec<&[AffineExpr]> = vec![];
            let mut writes = 0u64;
            for b in &ns {
                let K::Mem { array: x, write, addr, bank: bb } = &b.k else { continue };
                if x == array && overlap(ba, bb) {
                    if *write {
                        writes += 1;
                    } else if !reads.iter().any(|r| same(r, addr)) {
                        reads.push(addr);
                    }
                }
            }
            let (r, w, s) = f.array_type(array).unwrap().space.ports();
            let nr = reads.len() as u64;
            let need = if s > 0 { (nr + writes).div_ceil(s as u64) } else {
                nr.div_ceil(r as u64).max(writes.div_ceil(w as u64))
            };
            ii0 = ii0.max(need);
        }

        // Concrete access instances in issue order.
        let mut inst: Vec<(u64, usize, String, Vec<i64>)> = vec![];
        let mut q = 0u64;
        fn walk(ls: &[&Loop], env: &mut Env, visit: &mut dyn FnMut(&Env)) {
            let Some((l, rest)) = ls.split_first() else { return visit(env) };
            let (lo, hi) = Sim::bounds(l, env);
            let mut v = lo;
            while v < hi {
                env.insert(l.var, v);
                walk(rest, env, visit);
                v += l.step;
            }
            env.remove(&l.var);
        }
        walk(chain, env, &mut |env| {
            let get = |v: u32| env[&v];
            for (i, n) in ns.iter().enumerate() {
                let K::Mem { array, addr, .. } = &n.k else { continue };
                if n.guards.iter().all(|(c, t)| c.iter().all(|c| c.holds(&get)) == *t) {
                    inst.push((q, i, array.clone(), addr.iter().map(|e| e.eval(&get)).collect()));
                }
            }
            q += 1;
        });
        let trip = q;
        if trip == 0 {
            return 0;
        }
        let ok = |ii: u64| {
            // Per address: (latest write end, latest read start) of earlier iterations and of the current one.
            let mut st: HashMap<(&str, &[i64]), (u64, [u64; 2], [u64; 2])> = HashMap::new();
            for (q, i, array, addr) in &inst {
                let n = &ns[*i];
                let K::Mem { write, .. } = &n.k else { unreachable!() };
                let t = q * ii + start[*i] + 1;
                let e = st.entry((array.as_str(), addr.as_slice())).or_insert((*q, [0; 2], [0; 2]));
                if e.0 != *q {
                    e.1 = [e.1[0].max(e.2[0]), e.1[1].max(e.2[1])];
                    e.2 = [0; 2];
                    e.0 = *q;
                }
                if t < e.1[0] || (*write && t < e.1[1]) {
                    return false;
                }
                if *write {
                    e.2[0] = e.2[0].max(t + n.lat);
                } else {
                    e.2[1] = e.2[1].max(t);
                }
            }
            true
        };
        let mut ii = ii0;
        while !ok(ii) {
            ii += 1;
        }
        ii * (trip - 1) + depth
    }

    /// (latency, interval) of one call of `name`.
    pub fn func(&self, name: &str) -> (u64, u64) {
        let f = self.p.function(name).unwrap();
        let mut env = Env::new();
        if f.directive.dataflow {
            let mut lat = 0;
            let mut int = 0;
            for s in &f.body {
                let (l, i) = match s {
                    Stmt::Call { callee, .. } => self.func(callee),
                    Stmt::Loop(l) => {
                        let x = self.lp(f, l, &[], &mut env);
                        (x, x)
                    }
                    _ => {
                        let x = self.block(f, std::slice::from_ref(s), &[], &mut env);
                        (x, x)
                    }
                };
                lat += l;
                if l > 0 {
                    int = int.max(i);
                }
            }
            (lat, int)
        } else {
            let x = self.block(f, &f.body, &[], &mut env);
            (x, x)
        }
    }
}


/// A corpus kernel under a random mix of loop and directive passes.
pub fn random_design(k: Kernel, n: usize, rng: &mut ChaCha8Rng) -> Program {
    let mut p = k.program(n, ElemKind::F32);
    let f = p.top_function_mut();
    if rng.gen_bool(0.7) {
        loops::remove_variable_bound(f);
    }
    if rng.gen_bool(0.7) {
        loops::perfectize(f);
    }
    if rng.gen_bool(0.5) {
        loops::order_opt(f, None);
    }
    if rng.gen_bool(0.6) {
        let sizes: Vec<i64> = (0..3).map(|_| [1, 2, 4][rng.gen_range(0..3)]).collect();
        loops::tile(f, &sizes);
    }
    if rng.gen_bool(0.8) {
        let level = if rng.gen_bool(0.5) { None } else { Some(rng.gen_range(0..3)) };
        directive::pipeline_bands(f, rng.gen_range(1..4), level);
    }
    if rng.gen_bool(0.7) {
        directive::simplify_all(f);
    }
    if rng.gen_bool(0.7) {
        directive::array_partition(&mut p, &BTreeMap::new());
    }
    p
}
