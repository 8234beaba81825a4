use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use super::schedule::{addr_of, banks_overlap, peak_units, schedule, Addr, Node, NodeKind};
use super::target::{OpClass, TargetSpec};
use crate::ir::util::{array_effects, contains_loop, used_values};
use crate::ir::*;
use crate::loops::{var_range, Ranges};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EstimateError {
    #[error("loop `{0}` has no bounded trip count")]
    Unbounded(String),
    #[error("call to unknown function `{0}`")]
    UnknownCallee(String),
    #[error("recursive call through `{0}`")]
    Recursive(String),
    #[error("DSP efficiency is undefined for a design without DSPs")]
    NoDsp,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FuncReport {
    pub latency: u64,
    pub interval: u64,
    pub dsp: u64,
    pub lut: u64,
    pub units: BTreeMap<OpClass, u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct QoRReport {
    pub latency: u64,
    pub interval: u64,
    pub dsp: u64,
    pub lut: u64,
    pub bram_bits: u64,
    pub functions: BTreeMap<String, FuncReport>,
    pub assumptions: Vec<String>,
}

/// Operations per cycle per DSP over one interval.
pub fn dsp_efficiency(ops_per_inference: u64, r: &QoRReport) -> Result<f64, EstimateError> {
    if r.dsp == 0 {
        return Err(EstimateError::NoDsp);
    }
    Ok(ops_per_inference as f64 / (r.interval.max(1) as f64 * r.dsp as f64))
}

/// Interval of a dataflow pipeline: its slowest stage.
pub fn dataflow_interval(stage_intervals: &[u64]) -> u64 {
    stage_intervals.iter().copied().max().unwrap_or(0)
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Res {
    pub latency: u64,
    pub interval: u64,
    pub units: BTreeMap<OpClass, u64>,
}

/// Static facts about loop variables in scope.
#[derive(Clone, Default)]
pub(crate) struct Ctx {
    pub env: HashMap<u32, i64>,
    /// `(modulus, residue)` congruence of each variable.
    pub congr: HashMap<u32, (i64, i64)>,
    pub ranges: Ranges,
}

impl Ctx {
    fn enter(&self, l: &Loop) -> Ctx {
        let mut c = self.clone();
        match l.lower.as_affine().and_then(|e| e.as_const()) {
            Some(lo) => c.congr.insert(l.var, (l.step, lo.rem_euclid(l.step))),
            None => c.congr.insert(l.var, (1, 0)),
        };
        match var_range(l, &self.ranges) {
            Some(r) => c.ranges.insert(l.var, r),
            None => c.ranges.remove(&l.var),
        };
        c
    }
}

/// Statically known bank of an access per dimension.
pub(crate) fn bank_pattern(ty: &MemRefType, indices: &[IndexExpr], cx: &Ctx) -> Vec<Option<i64>> {
    let Ok(parts) = ty.decode_partition() else { return vec![None] };
    parts
        .iter()
        .enumerate()
        .map(|(d, p)| {
            if p.factor <= 1 {
                return Some(0);
            }
            let e = indices.get(d)?.as_affine()?;
            match p.fashion {
                Fashion::Block => {
                    let b = block_size(ty.shape[d], p.factor);
                    let (lo, hi) = e.range(&|v| cx.ranges.get(&v).copied())?;
                    (lo.div_euclid(b) == hi.div_euclid(b)).then(|| lo.div_euclid(b))
                }
                _ => {
                    let lf = e.as_linear()?;
                    let f = p.factor;
                    let mut acc = lf.constant;
                    for (v, &c) in &lf.coeffs {
                        let (m, r) = cx.congr.get(v).copied().unwrap_or((1, 0));
                        if (c * m).rem_euclid(f) != 0 {
                            return None;
                        }
                        acc += c * r;
                    }
                    Some(acc.rem_euclid(f))
                }
            }
        })
        .collect()
}

pub(crate) fn ports_of(f: &Function, array: &str) -> (u32, u32, u32) {
    f.array_type(array).map_or((0, 0, 1), |t| t.space.ports())
}

fn index_values(indices: &[IndexExpr]) -> Vec<ValueId> {
    let mut out = vec![];
    for e in indices {
        if let IndexExpr::General(g) = e {
            gen_values(g, &mut out);
        }
    }
    out
}

fn gen_values(g: &GenExpr, out: &mut Vec<ValueId>) {
    match g {
        GenExpr::Value(v) => out.push(*v),
        GenExpr::Bin(_, a, b) => {
            gen_values(a, out);
            gen_values(b, out);
        }
        _ => {}
    }
}

fn operand_values(o: &Operand) -> Vec<ValueId> {
    match o {
        Operand::Value(v) => vec![*v],
        Operand::Index(IndexExpr::General(g)) => {
            let mut out = vec![];
            gen_values(g, &mut out);
            out
        }
        _ => vec![],
    }
}

pub(crate) struct Est<'p> {
    pub prog: &'p Program,
    pub t: &'p TargetSpec,
    funcs: HashMap<String, Res>,
    active: BTreeSet<String>,
    loop_memo: HashMap<(usize, Vec<i64>), Res>,
    sensitive: HashMap<usize, Vec<u32>>,
    pipes: HashMap<usize, PipeStatic>,
}

/// A node with the guards under which it executes.
pub(crate) struct Item<'a> {
    pub node: Node,
    pub guards: Vec<Guard<'a>>,
    #[allow(dead_code)]
    pub stmt: &'a Stmt,
}

/// Guard of an inlined `if` branch: all conditions hold (`then`) or not all do.
#[derive(Clone, Copy)]
pub(crate) struct Guard<'a> {
    pub conds: &'a [Constraint],
    pub then: bool,
}

impl Guard<'_> {
    fn holds(&self, vars: &dyn Fn(u32) -> i64) -> bool {
        self.conds.iter().all(|c| c.holds(vars)) == self.then
    }
}

fn eval_bound(e: &IndexExpr, env: &HashMap<u32, i64>) -> Option<i64> {
    let a = e.as_affine()?;
    if a.vars().iter().any(|v| !env.contains_key(v)) {
        return None;
    }
    Some(a.eval(&|v| env[&v]))
}

fn collect_vars(block: &[Stmt], out: &mut BTreeSet<u32>, bound: &mut BTreeSet<u32>) {
    let idx = |e: &IndexExpr, out: &mut BTreeSet<u32>| match e {
        IndexExpr::Affine(a) => out.extend(a.vars()),
        IndexExpr::General(g) => gen_vars(g, out),
    };
    for s in block {
        match s {
            Stmt::Loop(l) => {
                bound.insert(l.var);
                idx(&l.lower, out);
                idx(&l.upper, out);
                collect_vars(&l.body, out, bound);
            }
            Stmt::If(i) => {
                for c in &i.conds {
                    out.extend(c.expr.vars());
                }
                collect_vars(&i.then_body, out, bound);
                collect_vars(&i.else_body, out, bound);
            }
            Stmt::Load { indices, .. } | Stmt::Store { indices, .. } => indices.iter().for_each(|e| idx(e, out)),
            Stmt::Arith { operands, .. } => {
                for o in operands {
                    if let Operand::Index(e) = o {
                        idx(e, out);
                    }
                }
            }
            _ => {}
        }
    }
}

fn gen_vars(g: &GenExpr, out: &mut BTreeSet<u32>) {
    match g {
        GenExpr::Var(v) => {
            out.insert(*v);
        }
        GenExpr::Bin(_, a, b) => {
            gen_vars(a, out);
            gen_vars(b, out);
        }
        _ => {}
    }
}

/// The perfect chain from a flattened loop down to the pipelined loop.
pub(crate) fn flat_chain(l: &Loop) -> Option<Vec<&Loop>> {
    let mut chain = vec![l];
    let mut cur = l;
    while !cur.is_pipelined() {
        if !cur.is_flattened() || !cur.is_perfect_parent() {
            return None;
        }
        cur = cur.only_child_loop()?;
        chain.push(cur);
    }
    Some(chain)
}

fn ceil_div(a: u64, b: u64) -> u64 {
    (a + b - 1) / b
}

/// Enumerate the iterations of a loop chain in order, calling `visit` with the env.
fn enumerate(chain: &[&Loop], env: &mut HashMap<u32, i64>, visit: &mut dyn FnMut(&HashMap<u32, i64>)) -> Result<(), EstimateError> {
    let Some((l, rest)) = chain.split_first() else {
        visit(env);
        return Ok(());
    };
    let lo = eval_bound(&l.lower, env).ok_or_else(|| EstimateError::Unbounded(l.name.clone()))?;
    let hi = eval_bound(&l.upper, env).ok_or_else(|| EstimateError::Unbounded(l.name.clone()))?;
    let mut v = lo;
    while v < hi {
        env.insert(l.var, v);
        enumerate(rest, env, visit)?;
        v += l.step;
    }
    env.remove(&l.var);
    Ok(())
}

/// Schedule-level facts of a pipelined body that do not depend on outer iterations.
#[derive(Clone)]
struct PipeStatic {
    depth: u64,
    start: Vec<u64>,
    res_ii: u64,
    counts: BTreeMap<OpClass, u64>,
    region_units: BTreeMap<OpClass, u64>,
}

impl<'p> Est<'p> {
    pub fn new(prog: &'p Program, t: &'p TargetSpec) -> Self {
        Est {
            prog,
            t,
            funcs: HashMap::new(),
            active: BTreeSet::new(),
            loop_memo: HashMap::new(),
            sensitive: HashMap::new(),
            pipes: HashMap::new(),
        }
    }

    fn cycles(&self, c: OpClass) -> u64 {
        self.t.cost(c).cycles as u64
    }

    /// Variables from outside `l` that its latency depends on.
    fn sensitive(&mut self, l: &Loop) -> Vec<u32> {
        let key = l as *const Loop as usize;
        if let Some(v) = self.sensitive.get(&key) {
            return v.clone();
        }
        let mut out = BTreeSet::new();
        let mut bound = BTreeSet::from([l.var]);
        for e in [&l.lower, &l.upper] {
            if let Some(a) = e.as_affine() {
                out.extend(a.vars());
            }
        }
        if flat_chain(l).is_some() || l.is_pipelined() {
            collect_vars(&l.body, &mut out, &mut bound);
        } else {
            let mut inner = vec![];
            nested_loops(&l.body, &mut inner);
            for c in inner {
                out.extend(self.sensitive(c));
            }
        }
        let v: Vec<u32> = out.into_iter().filter(|v| !bound.contains(v)).collect();
        self.sensitive.insert(key, v.clone());
        v
    }

    /// Flatten a block into schedulable nodes, inlining loop-free `if`s.
    fn items<'a>(&mut self, f: &Function, block: &'a [Stmt], guards: &[Guard<'a>], cx: &Ctx, out: &mut Vec<Item<'a>>) -> Result<(), EstimateError> {
        for s in block {
            let guards_v = guards.to_vec();
            let node = match s {
                Stmt::If(i) if !contains_loop(&i.then_body) && !contains_loop(&i.else_body) => {
                    let mut g = guards.to_vec();
                    g.push(Guard { conds: &i.conds, then: true });
                    self.items(f, &i.then_body, &g, cx, out)?;
                    g.pop();
                    g.push(Guard { conds: &i.conds, then: false });
                    self.items(f, &i.else_body, &g, cx, out)?;
                    continue;
                }
                Stmt::If(i) => {
                    let a = self.block(f, &i.then_body, cx)?;
                    let b = self.block(f, &i.else_body, cx)?;
                    let mut units = a.units.clone();
                    for (c, k) in b.units {
                        let e = units.entry(c).or_default();
                        *e = (*e).max(k);
                    }
                    let (reads, writes) = array_effects(std::slice::from_ref(s), Some(self.prog));
                    Node {
                        kind: NodeKind::Region { reads, writes, units },
                        latency: a.latency.max(b.latency),
                        def: None,
                        uses: used_values(std::slice::from_ref(s)).into_iter().collect(),
                    }
                }
                Stmt::Loop(l) => {
                    let r = self.loop_(f, l, cx)?;
                    let (reads, writes) = array_effects(&l.body, Some(self.prog));
                    Node {
                        kind: NodeKind::Region { reads, writes, units: r.units },
                        latency: r.latency,
                        def: None,
                        uses: used_values(&l.body).into_iter().collect(),
                    }
                }
                Stmt::Call { callee, args } => {
                    let r = self.function(callee)?;
                    let (reads, writes) = array_effects(std::slice::from_ref(s), Some(self.prog));
                    let uses = args
                        .iter()
                        .flat_map(|a| match a {
                            CallArg::Scalar(o) => operand_values(o),
                            CallArg::Array(_) => vec![],
                        })
                        .collect();
                    Node { kind: NodeKind::Region { reads, writes, units: r.units }, latency: r.latency, def: None, uses }
                }
                Stmt::Copy { src, dst } => {
                    let n = f.array_type(src).map_or(0, |t| t.num_elements()) as u64;
                    Node {
                        kind: NodeKind::Region {
                            reads: BTreeSet::from([src.clone()]),
                            writes: BTreeSet::from([dst.clone()]),
                            units: BTreeMap::new(),
                        },
                        latency: n + 1,
                        def: None,
                        uses: vec![],
                    }
                }
                Stmt::Load { result, array, indices } => Node {
                    kind: NodeKind::Mem {
                        array: array.clone(),
                        write: false,
                        indices: indices.clone(),
                        bank: f.array_type(array).map_or(vec![None], |t| bank_pattern(t, indices, cx)),
                    },
                    latency: self.cycles(OpClass::Load),
                    def: Some(*result),
                    uses: index_values(indices),
                },
                Stmt::Store { value, array, indices } => {
                    let mut uses = operand_values(value);
                    uses.extend(index_values(indices));
                    Node {
                        kind: NodeKind::Mem {
                            array: array.clone(),
                            write: true,
                            indices: indices.clone(),
                            bank: f.array_type(array).map_or(vec![None], |t| bank_pattern(t, indices, cx)),
                        },
                        latency: self.cycles(OpClass::Store),
                        def: None,
                        uses,
                    }
                }
                Stmt::Arith { result, op, operands, ty } => {
                    let c = OpClass::of(*op, *ty);
                    Node {
                        kind: NodeKind::Op(c),
                        latency: self.cycles(c),
                        def: Some(*result),
                        uses: operands.iter().flat_map(operand_values).collect(),
                    }
                }
            };
            out.push(Item { node, guards: guards_v, stmt: s });
        }
        Ok(())
    }
}

fn nested_loops<'a>(block: &'a [Stmt], out: &mut Vec<&'a Loop>) {
    for s in block {
        match s {
            Stmt::Loop(l) => out.push(l),
            Stmt::If(i) => {
                nested_loops(&i.then_body, out);
                nested_loops(&i.else_body, out);
            }
            _ => {}
        }
    }
}

impl<'p> Est<'p> {
    pub(crate) fn block(&mut self, f: &Function, block: &[Stmt], cx: &Ctx) -> Result<Res, EstimateError> {
        let mut items = vec![];
        self.items(f, block, &[], cx, &mut items)?;
        let nodes: Vec<Node> = items.into_iter().map(|i| i.node).collect();
        let s = schedule(&nodes, &|a| ports_of(f, a));
        Ok(Res { latency: s.depth, interval: s.depth, units: peak_units(&nodes, &s) })
    }

    pub(crate) fn loop_(&mut self, f: &Function, l: &Loop, cx: &Ctx) -> Result<Res, EstimateError> {
        let sens = self.sensitive(l);
        let key = (l as *const Loop as usize, sens.iter().map(|v| cx.env.get(v).copied().unwrap_or(i64::MIN)).collect());
        if let Some(r) = self.loop_memo.get(&key) {
            return Ok(r.clone());
        }
        let r = match flat_chain(l) {
            Some(chain) => self.pipe_nest(f, &chain, cx)?,
            None => self.plain_loop(f, l, cx)?,
        };
        self.loop_memo.insert(key, r.clone());
        Ok(r)
    }

    fn plain_loop(&mut self, f: &Function, l: &Loop, cx: &Ctx) -> Result<Res, EstimateError> {
        let lo = eval_bound(&l.lower, &cx.env).ok_or_else(|| EstimateError::Unbounded(l.name.clone()))?;
        let hi = eval_bound(&l.upper, &cx.env).ok_or_else(|| EstimateError::Unbounded(l.name.clone()))?;
        let trip = trip_count(lo, hi, l.step) as u64;
        let mut inner = cx.enter(l);
        let mut nested = vec![];
        nested_loops(&l.body, &mut nested);
        let mut depends = false;
        for c in nested {
            depends |= self.sensitive(c).contains(&l.var);
        }
        let overhead = self.t.loop_overhead;
        if trip == 0 {
            return Ok(Res { latency: overhead, interval: overhead, units: BTreeMap::new() });
        }
        if !depends {
            let b = self.block(f, &l.body, &inner)?;
            let lat = trip * b.latency + overhead;
            return Ok(Res { latency: lat, interval: lat, units: b.units });
        }
        let mut total = overhead;
        let mut units: BTreeMap<OpClass, u64> = BTreeMap::new();
        let mut v = lo;
        while v < hi {
            inner.env.insert(l.var, v);
            let b = self.block(f, &l.body, &inner)?;
            total += b.latency;
            for (c, k) in b.units {
                let e = units.entry(c).or_default();
                *e = (*e).max(k);
            }
            v += l.step;
        }
        Ok(Res { latency: total, interval: total, units })
    }

    fn pipe_static(&mut self, f: &Function, items: &[Item], ii_floor: u64) -> PipeStatic {
        let nodes: Vec<Node> = items.iter().map(|i| i.node.clone()).collect();
        let s = schedule(&nodes, &|a| ports_of(f, a));
        let mut res_ii = ii_floor.max(1);
        let addrs: Vec<Option<Addr>> = nodes.iter().map(addr_of).collect();
        let mut seen: HashSet<(&str, &[Option<i64>])> = HashSet::new();
        for n in &nodes {
            let NodeKind::Mem { array, bank, .. } = &n.kind else { continue };
            if !seen.insert((array.as_str(), bank.as_slice())) {
                continue;
            }
            let mut reads: HashSet<&Addr> = HashSet::new();
            let mut writes = 0u64;
            for (o, oa) in nodes.iter().zip(&addrs) {
                let NodeKind::Mem { array: oa_name, write, bank: ob, .. } = &o.kind else { continue };
                if oa_name != array || !banks_overlap(bank, ob) {
                    continue;
                }
                if *write {
                    writes += 1;
                } else {
                    reads.insert(oa.as_ref().unwrap());
                }
            }
            let reads = reads.len() as u64;
            let (r, w, sh) = ports_of(f, array);
            let need = if sh > 0 {
                ceil_div(reads + writes, sh as u64)
            } else {
                ceil_div(reads, r.max(1) as u64).max(ceil_div(writes, w.max(1) as u64))
            };
            res_ii = res_ii.max(need);
        }
        let mut counts: BTreeMap<OpClass, u64> = BTreeMap::new();
        let mut region_units: BTreeMap<OpClass, u64> = BTreeMap::new();
        for n in &nodes {
            match &n.kind {
                NodeKind::Op(c) => *counts.entry(*c).or_default() += 1,
                NodeKind::Region { units, .. } => {
                    for (c, k) in units {
                        *region_units.entry(*c).or_default() += k;
                    }
                }
                NodeKind::Mem { .. } => {}
            }
        }
        PipeStatic { depth: s.depth, start: s.start, res_ii, counts, region_units }
    }

    fn pipe_units(&self, st: &PipeStatic, ii: u64) -> BTreeMap<OpClass, u64> {
        let mut units = st.region_units.clone();
        for (c, n) in &st.counts {
            *units.entry(*c).or_default() += ceil_div(*n, ii);
        }
        units
    }

    fn pipe_nest(&mut self, f: &Function, chain: &[&Loop], cx: &Ctx) -> Result<Res, EstimateError> {
        let pipe = *chain.last().unwrap();
        let mut icx = cx.clone();
        for l in chain {
            icx = icx.enter(l);
        }
        let mut items = vec![];
        self.items(f, &pipe.body, &[], &icx, &mut items)?;
        let target = pipe.directive.map_or(1, |d| d.target_ii.max(1)) as u64;
        let key = pipe as *const Loop as usize;
        let st = match self.pipes.get(&key) {
            Some(st) => st.clone(),
            None => {
                let st = self.pipe_static(f, &items, target);
                self.pipes.insert(key, st.clone());
                st
            }
        };

        // Flattened iteration space with guards evaluated: recurrence bound per carried pair.
        let mems: Vec<usize> = (0..items.len()).filter(|&i| matches!(items[i].node.kind, NodeKind::Mem { .. })).collect();
        let general: BTreeSet<&str> = mems
            .iter()
            .filter_map(|&i| match &items[i].node.kind {
                NodeKind::Mem { array, indices, .. } if indices.iter().any(|e| !e.is_affine()) => Some(array.as_str()),
                _ => None,
            })
            .collect();
        let mut last: HashMap<(&str, Vec<i64>), Vec<(usize, u64)>> = HashMap::new();
        let mut rec_ii = 1u64;
        let mut q = 0u64;
        let mut env = cx.env.clone();
        enumerate(chain, &mut env, &mut |env| {
            let get = |v: u32| env.get(&v).copied().unwrap_or(0);
            for &a in &mems {
                let it = &items[a];
                if !it.guards.iter().all(|g| g.holds(&get)) {
                    continue;
                }
                let NodeKind::Mem { array, write, indices, .. } = &it.node.kind else { unreachable!() };
                if general.contains(array.as_str()) {
                    continue;
                }
                let addr: Vec<i64> = indices.iter().map(|e| e.as_affine().unwrap().eval(&get)).collect();
                let entry = last.entry((array.as_str(), addr)).or_default();
                for &(b, p) in entry.iter() {
                    if p == q {
                        continue;
                    }
                    let bn = &items[b].node;
                    let bw = matches!(bn.kind, NodeKind::Mem { write: true, .. });
                    let edge = if bw {
                        bn.latency as i64
                    } else if *write {
                        0
                    } else {
                        continue;
                    };
                    let need = st.start[b] as i64 + edge - st.start[a] as i64;
                    if need > 0 {
                        rec_ii = rec_ii.max(ceil_div(need as u64, q - p));
                    }
                }
                match entry.iter_mut().find(|(b, _)| *b == a) {
                    Some(e) => e.1 = q,
                    None => entry.push((a, q)),
                }
            }
            q += 1;
        })?;
        let trip = q;
        if trip > 1 {
            for &a in &mems {
                for &b in &mems {
                    let (NodeKind::Mem { array: xa, write: wa, .. }, NodeKind::Mem { array: xb, write: wb, .. }) =
                        (&items[a].node.kind, &items[b].node.kind)
                    else {
                        continue;
                    };
                    if xa != xb || !general.contains(xa.as_str()) || !(*wa || *wb) {
                        continue;
                    }
                    let edge = if *wb { items[b].node.latency as i64 } else { 0 };
                    let need = st.start[b] as i64 + edge - st.start[a] as i64;
                    if need > 0 {
                        rec_ii = rec_ii.max(need as u64);
                    }
                }
            }
        }
        let ii = st.res_ii.max(rec_ii);
        let latency = if trip == 0 { 0 } else { ii * (trip - 1) + st.depth };
        Ok(Res { latency, interval: latency, units: self.pipe_units(&st, ii) })
    }
}

impl<'p> Est<'p> {
    pub(crate) fn function(&mut self, name: &str) -> Result<Res, EstimateError> {
        if let Some(r) = self.funcs.get(name) {
            return Ok(r.clone());
        }
        if !self.active.insert(name.to_string()) {
            return Err(EstimateError::Recursive(name.to_string()));
        }
        let prog = self.prog;
        let f = prog.function(name).ok_or_else(|| EstimateError::UnknownCallee(name.to_string()))?;
        let cx = Ctx::default();
        let r = if f.directive.dataflow {
            let mut r = Res::default();
            for s in &f.body {
                let stage = match s {
                    Stmt::Call { callee, .. } => self.function(callee)?,
                    Stmt::Loop(l) => self.loop_(f, l, &cx)?,
                    _ => self.block(f, std::slice::from_ref(s), &cx)?,
                };
                if stage.latency == 0 {
                    continue;
                }
                r.latency += stage.latency;
                r.interval = r.interval.max(stage.interval);
                for (c, k) in stage.units {
                    *r.units.entry(c).or_default() += k;
                }
            }
            r
        } else if f.directive.pipeline {
            let mut items = vec![];
            self.items(f, &f.body, &[], &cx, &mut items)?;
            let st = self.pipe_static(f, &items, f.directive.target_ii.max(1) as u64);
            Res { latency: st.depth, interval: st.res_ii.min(st.depth.max(1)), units: self.pipe_units(&st, st.res_ii) }
        } else {
            self.block(f, &f.body, &cx)?
        };
        self.active.remove(name);
        self.funcs.insert(name.to_string(), r.clone());
        Ok(r)
    }

    fn report(&self, r: &Res) -> FuncReport {
        let (mut dsp, mut lut) = (0, 0);
        for (c, k) in &r.units {
            let cost = self.t.cost(*c);
            dsp += k * cost.dsp as u64;
            lut += k * cost.lut as u64;
        }
        FuncReport { latency: r.latency, interval: r.interval, dsp, lut, units: r.units.clone() }
    }
}

fn reachable<'a>(p: &'a Program, name: &str, out: &mut Vec<&'a Function>) {
    let Some(f) = p.function(name) else { return };
    if out.iter().any(|g| g.name == f.name) {
        return;
    }
    out.push(f);
    let mut callees = vec![];
    crate::ir::util::walk(&f.body, &mut |s| {
        if let Stmt::Call { callee, .. } = s {
            callees.push(callee.clone());
        }
    });
    for c in callees {
        reachable(p, &c, out);
    }
}

/// On-chip memory bits: top-level array arguments plus every local buffer.
/// Locals of a dataflow function are double-buffered.
pub fn bram_bits(p: &Program) -> u64 {
    let top = p.top_function();
    let mut bits: u64 = top
        .params
        .iter()
        .filter_map(|q| match q {
            Param::Array { ty, .. } if ty.space.is_on_chip() => Some(ty.bits()),
            _ => None,
        })
        .sum();
    let mut fs = vec![];
    reachable(p, &p.top, &mut fs);
    for f in fs {
        let k = if f.directive.dataflow { 2 } else { 1 };
        bits += f.locals.iter().filter(|l| l.ty.space.is_on_chip()).map(|l| l.ty.bits() * k).sum::<u64>();
    }
    bits
}

pub const SHARING_NOTE: &str =
    "functional units are shared between operations that never overlap in a non-pipelined schedule; pipelined regions use ceil(ops / II) units per class";

pub fn estimate(p: &Program, t: &TargetSpec) -> Result<QoRReport, EstimateError> {
    let mut est = Est::new(p, t);
    let top = est.function(&p.top)?;
    let head = est.report(&top);
    let mut functions = BTreeMap::new();
    let mut fs = vec![];
    reachable(p, &p.top, &mut fs);
    for f in fs {
        if let Some(r) = est.funcs.get(&f.name) {
            functions.insert(f.name.clone(), est.report(r));
        }
    }
    Ok(QoRReport {
        latency: head.latency,
        interval: head.interval,
        dsp: head.dsp,
        lut: head.lut,
        bram_bits: bram_bits(p),
        functions,
        assumptions: vec![SHARING_NOTE.to_string()],
    })
}

/// Latency of a pipelined loop with `trip` iterations.
pub fn pipelined_latency(ii: u64, trip: u64, depth: u64) -> u64 {
    if trip == 0 {
        0
    } else {
        ii * (trip - 1) + depth
    }
}

/// Arithmetic operations executed by one call of the top function, by interpretation of trip counts.
pub fn count_ops(p: &Program) -> Result<u64, EstimateError> {
    fn block(p: &Program, b: &[Stmt], env: &mut HashMap<u32, i64>) -> Result<u64, EstimateError> {
        let mut n = 0;
        for s in b {
            n += match s {
                Stmt::Arith { .. } => 1,
                Stmt::Loop(l) => {
                    let lo = eval_bound(&l.lower, env).ok_or_else(|| EstimateError::Unbounded(l.name.clone()))?;
                    let hi = eval_bound(&l.upper, env).ok_or_else(|| EstimateError::Unbounded(l.name.clone()))?;
                    let mut k = 0;
                    let mut v = lo;
                    while v < hi {
                        env.insert(l.var, v);
                        k += block(p, &l.body, env)?;
                        v += l.step;
                    }
                    env.remove(&l.var);
                    k
                }
                Stmt::If(i) => {
                    let vars = |v: u32| env.get(&v).copied().unwrap_or(0);
                    if i.conds.iter().all(|c| c.holds(&vars)) {
                        block(p, &i.then_body, env)?
                    } else {
                        block(p, &i.else_body, env)?
                    }
                }
                Stmt::Call { callee, .. } => {
                    let f = p.function(callee).ok_or_else(|| EstimateError::UnknownCallee(callee.clone()))?;
                    block(p, &f.body, &mut HashMap::new())?
                }
                _ => 0,
            };
        }
        Ok(n)
    }
    block(p, &p.top_function().body, &mut HashMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_formula() {
        assert_eq!(pipelined_latency(3, 16, 5), 50);
        assert_eq!(pipelined_latency(4, 1, 9), 9);
        assert_eq!(pipelined_latency(2, 0, 9), 0);
        assert!(pipelined_latency(2, 10, 5) < pipelined_latency(3, 10, 5));
    }

    #[test]
    fn efficiency() {
        let mut r = QoRReport { interval: 100, dsp: 10, ..Default::default() };
        assert_eq!(dsp_efficiency(1000, &r).unwrap(), 1.0);
        r.dsp = 0;
        assert_eq!(dsp_efficiency(1000, &r), Err(EstimateError::NoDsp));
    }

    #[test]
    fn dataflow_interval_is_slowest_stage() {
        assert_eq!(dataflow_interval(&[5, 3, 1]), 5);
    }
}
