//! Function-level dataflow: extraction, legalization into stages, and
//! outlining of stage groups into sub-functions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::ir::util::{array_effects, defined_values, used_values};
use crate::ir::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("buffer `{buffer}` is read by node {reader} before node {writer} writes it")]
    Feedback { buffer: String, reader: usize, writer: usize },
    #[error("value computed in node {from} is used by node {to}")]
    ScalarCrossing { from: usize, to: usize },
    #[error("buffer `{0}` has more than one producer")]
    MultiProducer(String),
    #[error("buffer `{buffer}` is consumed in stages {stages:?}")]
    MultiConsumer { buffer: String, stages: Vec<usize> },
    #[error("graph is not staged")]
    Unstaged,
    #[error("function `{0}` not found")]
    NoFunction(String),
    #[error("function `{0}` is pipelined and cannot become a dataflow region")]
    Pipelined(String),
    #[error("minimum granularity must be positive")]
    ZeroGranularity,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Proc,
    /// Whole-buffer copy; `origin` is the buffer whose type it takes.
    Copy { origin: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DfNode {
    pub id: usize,
    pub kind: NodeKind,
    pub stmts: Vec<Stmt>,
    pub latency: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DfEdge {
    pub from: usize,
    pub to: usize,
    pub buffer: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataflowGraph {
    pub name: String,
    pub nodes: Vec<DfNode>,
    pub edges: Vec<DfEdge>,
    pub stage: Vec<Option<usize>>,
    /// Buffers written by a node that does not read the previous contents.
    pub multi_producer: Vec<String>,
}

/// Splits a block into groups, each ending at a loop, call or copy.
fn groups(body: &[Stmt]) -> Vec<Vec<Stmt>> {
    let mut out: Vec<Vec<Stmt>> = vec![];
    let mut cur = vec![];
    for s in body {
        cur.push(s.clone());
        if matches!(s, Stmt::Loop(_) | Stmt::Call { .. } | Stmt::Copy { .. }) {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        match out.last_mut() {
            Some(g) => g.append(&mut cur),
            None => out.push(cur),
        }
    }
    out
}

pub fn extract_dataflow(f: &Function, prog: Option<&Program>) -> Result<DataflowGraph, GraphError> {
    let gs = groups(&f.body);
    let effects: Vec<(BTreeSet<String>, BTreeSet<String>)> = gs.iter().map(|g| array_effects(g, prog)).collect();
    let defs: Vec<_> = gs.iter().map(|g| defined_values(g)).collect();
    for (j, g) in gs.iter().enumerate() {
        let uses = used_values(g);
        for (i, d) in defs.iter().enumerate() {
            if i != j && !d.is_disjoint(&uses) {
                return Err(GraphError::ScalarCrossing { from: i, to: j });
            }
        }
    }
    let mut edges = vec![];
    let mut multi = vec![];
    let arrays: BTreeSet<&String> = effects.iter().flat_map(|(r, w)| r.iter().chain(w)).collect();
    for x in arrays {
        let readers: Vec<usize> = (0..gs.len()).filter(|&j| effects[j].0.contains(x)).collect();
        let writers: Vec<usize> = (0..gs.len()).filter(|&j| effects[j].1.contains(x)).collect();
        for &r in &readers {
            if let Some(&w) = writers.iter().find(|&&w| w > r) {
                return Err(GraphError::Feedback { buffer: x.clone(), reader: r, writer: w });
            }
            if let Some(&w) = writers.iter().rev().find(|&&w| w < r) {
                edges.push(DfEdge { from: w, to: r, buffer: x.clone() });
            }
        }
        if writers.iter().skip(1).any(|w| !readers.contains(w)) {
            multi.push(x.clone());
        }
    }
    edges.sort();
    let nodes = gs
        .into_iter()
        .enumerate()
        .map(|(id, stmts)| DfNode { id, kind: NodeKind::Proc, stmts, latency: 1 })
        .collect::<Vec<_>>();
    let stage = vec![None; nodes.len()];
    Ok(DataflowGraph { name: f.name.clone(), nodes, edges, stage, multi_producer: multi })
}

impl DataflowGraph {
    /// Longest-path level of every node from the sources.
    fn levels(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut indeg = vec![0; n];
        for e in &self.edges {
            indeg[e.to] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut lv = vec![0; n];
        while let Some(u) = ready.pop() {
            for e in self.edges.iter().filter(|e| e.from == u) {
                lv[e.to] = lv[e.to].max(lv[u] + 1);
                indeg[e.to] -= 1;
                if indeg[e.to] == 0 {
                    ready.push(e.to);
                }
            }
        }
        lv
    }

    pub fn num_stages(&self) -> usize {
        self.stage.iter().flatten().max().map_or(0, |s| s + 1)
    }

    pub fn copies(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Copy { .. })).count()
    }

    pub fn stage_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]; self.num_stages()];
        for (i, s) in self.stage.iter().enumerate() {
            if let Some(s) = s {
                out[*s].push(i);
            }
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut s = format!("digraph \"{}\" {{\n", self.name);
        for n in &self.nodes {
            let (label, shape) = match &n.kind {
                NodeKind::Proc => (format!("proc{}", n.id), "ellipse"),
                NodeKind::Copy { .. } => (format!("copy{}", n.id), "box"),
            };
            let stage = self.stage[n.id].map_or(String::new(), |s| format!(" [stage {s}]"));
            let _ = writeln!(s, "  n{} [label=\"{label}{stage}\" shape={shape}];", n.id);
        }
        for e in &self.edges {
            let _ = writeln!(s, "  n{} -> n{} [label=\"{}\"];", e.from, e.to, e.buffer);
        }
        s.push_str("}\n");
        s
    }
}

fn rename_array(block: &mut [Stmt], from: &str, to: &str) {
    let fix = |a: &mut String| {
        if a == from {
            *a = to.to_string();
        }
    };
    crate::ir::util::walk_mut(block, &mut |s| match s {
        Stmt::Load { array, .. } | Stmt::Store { array, .. } => fix(array),
        Stmt::Copy { src, dst } => {
            fix(src);
            fix(dst);
        }
        Stmt::Call { args, .. } => {
            for a in args {
                if let CallArg::Array(x) = a {
                    fix(x);
                }
            }
        }
        _ => {}
    });
}

fn node_effects(n: &DfNode) -> (BTreeSet<String>, BTreeSet<String>) {
    array_effects(&n.stmts, None)
}

fn check_consumers(g: &DataflowGraph) -> Result<(), GraphError> {
    let mut by: BTreeMap<(usize, &str), BTreeSet<usize>> = BTreeMap::new();
    for e in &g.edges {
        let (a, b) = (g.stage[e.from].unwrap(), g.stage[e.to].unwrap());
        if a != b {
            by.entry((e.from, &e.buffer)).or_default().insert(b);
        }
    }
    for ((_, buf), stages) in by {
        if stages.len() > 1 {
            return Err(GraphError::MultiConsumer { buffer: buf.to_string(), stages: stages.into_iter().collect() });
        }
    }
    Ok(())
}

/// Assigns stages so that every edge crossing stages spans exactly one.
/// Without copies, nodes under a bypass edge are merged into one stage;
/// with copies, the bypassing buffer is forwarded through copy nodes.
pub fn legalize_dataflow(g: &DataflowGraph, insert_copy: bool) -> Result<DataflowGraph, GraphError> {
    if let Some(b) = g.multi_producer.first() {
        return Err(GraphError::MultiProducer(b.clone()));
    }
    let mut out = g.clone();
    let mut lv = g.levels();
    if !insert_copy {
        loop {
            let long = g.edges.iter().filter(|e| lv[e.to] > lv[e.from] + 1).min_by_key(|e| (e.from, e.to));
            let Some(e) = long else { break };
            let (a, b) = (lv[e.from], lv[e.to]);
            for l in lv.iter_mut() {
                if *l > a && *l <= b {
                    *l = a + 1;
                } else if *l > b {
                    *l -= b - a - 1;
                }
            }
        }
        out.stage = lv.into_iter().map(Some).collect();
        check_consumers(&out)?;
        return Ok(out);
    }
    let mut names: BTreeSet<String> = BTreeSet::new();
    for n in &g.nodes {
        let (r, w) = node_effects(n);
        names.extend(r);
        names.extend(w);
    }
    let mut edges = vec![];
    let mut by: BTreeMap<(usize, String), Vec<usize>> = BTreeMap::new();
    for e in &g.edges {
        by.entry((e.from, e.buffer.clone())).or_default().push(e.to);
    }
    for ((from, buf), consumers) in by {
        let span = consumers.iter().map(|&v| lv[v] - lv[from]).max().unwrap();
        // chain[k] = (node, buffer) holding the value at level lv[from] + k.
        let mut chain = vec![(from, buf.clone())];
        for k in 1..span {
            let mut name = format!("{buf}_cp{k}");
            while names.contains(&name) {
                name.push('_');
            }
            names.insert(name.clone());
            let id = out.nodes.len();
            let (prev, prev_buf) = chain.last().unwrap().clone();
            out.nodes.push(DfNode {
                id,
                kind: NodeKind::Copy { origin: buf.clone() },
                stmts: vec![Stmt::Copy { src: prev_buf.clone(), dst: name.clone() }],
                latency: 1,
            });
            lv.push(lv[from] + k);
            edges.push(DfEdge { from: prev, to: id, buffer: prev_buf });
            chain.push((id, name));
        }
        for v in consumers {
            let k = lv[v] - lv[from];
            let (src, src_buf) = chain[k - 1].clone();
            if k > 1 {
                if node_effects(&out.nodes[v]).1.contains(&buf) {
                    return Err(GraphError::MultiConsumer { buffer: buf.clone(), stages: vec![lv[from] + 1, lv[v]] });
                }
                rename_array(&mut out.nodes[v].stmts, &buf, &src_buf);
            }
            edges.push(DfEdge { from: src, to: v, buffer: src_buf });
        }
    }
    edges.sort();
    out.edges = edges;
    out.stage = lv.into_iter().map(Some).collect();
    check_consumers(&out)?;
    Ok(out)
}

/// Groups of stage indices: `min_gran` adjacent stages per group.
pub fn stage_groups(stages: usize, min_gran: usize) -> Vec<Vec<usize>> {
    (0..stages).collect::<Vec<_>>().chunks(min_gran.max(1)).map(|c| c.to_vec()).collect()
}

/// Interval of the staged graph in units of node latency when every node takes
/// one unit; nodes of a group run in dependence order, independent ones overlap.
pub fn unit_interval(g: &DataflowGraph, min_gran: usize) -> u64 {
    if g.stage.iter().any(Option::is_none) {
        return g.nodes.len() as u64;
    }
    let mut worst = 0;
    for grp in stage_groups(g.num_stages(), min_gran) {
        let mut members: Vec<usize> = (0..g.nodes.len()).filter(|&i| grp.contains(&g.stage[i].unwrap())).collect();
        members.sort_by_key(|&i| (g.stage[i], i));
        let mut dist: BTreeMap<usize, u64> = BTreeMap::new();
        for &v in &members {
            let before = g
                .edges
                .iter()
                .filter(|e| e.to == v)
                .filter_map(|e| dist.get(&e.from))
                .max()
                .copied()
                .unwrap_or(0);
            dist.insert(v, before + g.nodes[v].latency);
        }
        worst = worst.max(dist.values().copied().max().unwrap_or(0));
    }
    worst
}

fn unique_name(p: &Program, base: String) -> String {
    let mut name = base;
    while p.function(&name).is_some() {
        name.push('_');
    }
    name
}

/// Outlines every group of `min_gran` adjacent stages into a sub-function and
/// turns `fname` into a dataflow region calling them in stage order.
pub fn split_function(p: &Program, fname: &str, g: &DataflowGraph, min_gran: usize) -> Result<Program, GraphError> {
    if min_gran == 0 {
        return Err(GraphError::ZeroGranularity);
    }
    if g.stage.iter().any(Option::is_none) {
        return Err(GraphError::Unstaged);
    }
    let f = p.function(fname).ok_or_else(|| GraphError::NoFunction(fname.to_string()))?;
    if f.directive.pipeline {
        return Err(GraphError::Pipelined(fname.to_string()));
    }
    let mut order: Vec<usize> = (0..g.nodes.len()).collect();
    order.sort_by_key(|&i| (g.stage[i], i));
    let groups = stage_groups(g.num_stages(), min_gran);
    let bodies: Vec<Vec<Stmt>> = groups
        .iter()
        .map(|grp| {
            order
                .iter()
                .filter(|&&i| grp.contains(&g.stage[i].unwrap()))
                .flat_map(|&i| g.nodes[i].stmts.clone())
                .collect()
        })
        .collect();

    let mut types: Vec<(String, MemRefType, Option<InterfaceKind>)> = f
        .params
        .iter()
        .filter_map(|q| match q {
            Param::Array { name, ty, interface } => Some((name.clone(), ty.clone(), Some(*interface))),
            _ => None,
        })
        .collect();
    types.extend(f.locals.iter().map(|l| (l.name.clone(), l.ty.clone(), None)));
    for n in &g.nodes {
        if let (NodeKind::Copy { origin }, Some(Stmt::Copy { dst, .. })) = (&n.kind, n.stmts.first()) {
            let ty = f.array_type(origin).cloned().ok_or_else(|| GraphError::NoFunction(origin.clone()))?;
            let mut ty = ty;
            ty.space = MemorySpace::OnChip2PTrue;
            types.push((dst.clone(), ty, None));
        }
    }
    let used: Vec<BTreeSet<String>> = bodies
        .iter()
        .map(|b| {
            let (r, w) = array_effects(b, Some(p));
            r.union(&w).cloned().collect()
        })
        .collect();

    let mut out = p.clone();
    let mut top = f.clone();
    top.locals.clear();
    top.body.clear();
    top.directive.dataflow = true;
    let mut subs = vec![];
    for (k, body) in bodies.into_iter().enumerate() {
        let name = unique_name(&out, format!("{fname}_stage{k}"));
        let mut sub = Function::new(name.clone());
        sub.next_value = f.next_value;
        sub.next_var = f.next_var;
        let mut args = vec![];
        for (arr, ty, iface) in &types {
            if !used[k].contains(arr) {
                continue;
            }
            let shared = iface.is_some() || used.iter().filter(|u| u.contains(arr)).count() > 1;
            if shared {
                sub.params.push(Param::Array { name: arr.clone(), ty: ty.clone(), interface: iface.unwrap_or(InterfaceKind::Bram) });
                args.push(CallArg::Array(arr.clone()));
            } else {
                sub.locals.push(ArrayDecl { name: arr.clone(), ty: ty.clone() });
            }
        }
        let vals = used_values(&body);
        for q in &f.params {
            if let Param::Scalar { value, .. } = q {
                if vals.contains(value) {
                    sub.params.push(q.clone());
                    args.push(CallArg::Scalar(Operand::Value(*value)));
                }
            }
        }
        sub.body = body;
        top.body.push(Stmt::Call { callee: name, args });
        subs.push(sub);
        // Reserve the name before the next group picks one.
        out.functions.push(Function::new(subs.last().unwrap().name.clone()));
    }
    for (arr, ty, iface) in &types {
        if iface.is_none() && used.iter().filter(|u| u.contains(arr)).count() > 1 {
            top.locals.push(ArrayDecl { name: arr.clone(), ty: ty.clone() });
        }
    }
    out.functions.truncate(p.functions.len());
    let pos = out.functions.iter().position(|h| h.name == fname).unwrap();
    out.functions[pos] = top;
    for (k, s) in subs.into_iter().enumerate() {
        out.functions.insert(pos + 1 + k, s);
    }
    Ok(out)
}

/// Extract, legalize and split `fname` in place.
pub fn dataflow_split(p: &mut Program, fname: &str, insert_copy: bool, min_gran: usize) -> Result<DataflowGraph, GraphError> {
    let f = p.function(fname).ok_or_else(|| GraphError::NoFunction(fname.to_string()))?;
    let g = extract_dataflow(f, Some(p))?;
    let g = legalize_dataflow(&g, insert_copy)?;
    *p = split_function(p, fname, &g, min_gran)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping_attaches_plain_statements_to_next_loop() {
        let p = crate::frontend::parse_and_raise(
            "void f(float a[4], float b[4]) { float t = 1.0f; for (int i = 0; i < 4; i++) a[i] = t; \
             for (int i = 0; i < 4; i++) b[i] = a[i]; b[0] = 2.0f; }",
        )
        .unwrap();
        let g = extract_dataflow(p.top_function(), Some(&p)).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges, vec![DfEdge { from: 0, to: 1, buffer: "a".into() }]);
    }

    #[test]
    fn feedback_rejected() {
        let p = crate::frontend::parse_and_raise(
            "void f(float a[4], float b[4]) { for (int i = 0; i < 4; i++) b[i] = a[i]; \
             for (int i = 0; i < 4; i++) a[i] = 1.0f; }",
        )
        .unwrap();
        assert!(matches!(extract_dataflow(p.top_function(), Some(&p)), Err(GraphError::Feedback { .. })));
    }

    #[test]
    fn single_band_single_node() {
        let p = crate::corpus::Kernel::Gemm.program(4, ElemKind::F32);
        let g = extract_dataflow(p.top_function(), Some(&p)).unwrap();
        assert_eq!((g.nodes.len(), g.edges.len()), (1, 0));
    }
}
