//! As-late-as-possible scheduling of one straight-line block under memory-port limits.

use std::collections::{BTreeMap, BTreeSet};

use super::target::OpClass;
use crate::ir::*;

#[derive(Clone, Debug)]
pub enum NodeKind {
    Op(OpClass),
    Mem {
        array: String,
        write: bool,
        indices: Vec<IndexExpr>,
        /// Bank per partitioned dimension, `None` when not statically known.
        bank: Vec<Option<i64>>,
    },
    /// A nested loop, call or copy, treated as one opaque node.
    Region { reads: BTreeSet<String>, writes: BTreeSet<String>, units: BTreeMap<OpClass, u64> },
}

#[derive(Clone, Debug)]
pub struct Node {
    pub kind: NodeKind,
    pub latency: u64,
    pub def: Option<ValueId>,
    pub uses: Vec<ValueId>,
}

/// Ports of an array: (read-only, write-only, shared).
pub type PortFn<'a> = dyn Fn(&str) -> (u32, u32, u32) + 'a;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schedule {
    /// Start cycle of every node, the earliest being 0.
    pub start: Vec<u64>,
    pub depth: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Coord {
    Affine(AffineExpr, i64),
    General(IndexExpr),
}

/// Access address with every affine index split into symbolic part and offset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct Addr(Vec<Coord>);

impl Addr {
    pub(crate) fn of(indices: &[IndexExpr]) -> Addr {
        Addr(
            indices
                .iter()
                .map(|e| match e {
                    IndexExpr::Affine(x) => {
                        let (s, c) = x.split_offset();
                        Coord::Affine(s, c)
                    }
                    _ => Coord::General(e.clone()),
                })
                .collect(),
        )
    }

    fn may_alias(&self, o: &Addr) -> bool {
        !self.0.iter().zip(&o.0).any(|(x, y)| matches!((x, y), (Coord::Affine(a, c), Coord::Affine(b, d)) if a == b && c != d))
    }
}

/// True when the two bank patterns may name the same bank.
pub fn banks_overlap(a: &[Option<i64>], b: &[Option<i64>]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.is_none() || y.is_none() || x == y)
}

/// Edge delay from `a` to a later node `b`, if `b` must wait for `a`.
pub fn delay(a: &Node, b: &Node) -> Option<u64> {
    delay_at(a, addr_of(a).as_ref(), b, addr_of(b).as_ref())
}

pub(crate) fn addr_of(n: &Node) -> Option<Addr> {
    match &n.kind {
        NodeKind::Mem { indices, .. } => Some(Addr::of(indices)),
        _ => None,
    }
}

fn delay_at(a: &Node, aa: Option<&Addr>, b: &Node, ba: Option<&Addr>) -> Option<u64> {
    let mut d: Option<u64> = None;
    let mut need = |x: u64| d = Some(d.map_or(x, |y| y.max(x)));
    if let Some(v) = a.def {
        if b.uses.contains(&v) {
            need(a.latency);
        }
    }
    let (aw, bw, br) = match (&a.kind, &b.kind) {
        (NodeKind::Op(_), _) | (_, NodeKind::Op(_)) => return d,
        (NodeKind::Mem { array: x, write: wa, .. }, NodeKind::Mem { array: y, write: wb, .. }) => {
            if x != y || !(*wa || *wb) || !aa.unwrap().may_alias(ba.unwrap()) {
                return d;
            }
            (*wa, *wb, !*wb)
        }
        _ => {
            let (ar, aw) = effects(a);
            let (br, bw) = effects(b);
            let w = aw.iter().any(|x| br.contains(x) || bw.contains(x));
            if w {
                need(a.latency);
            }
            if ar.iter().any(|x| bw.contains(x)) {
                need(0);
            }
            return d;
        }
    };
    if aw && (br || bw) {
        need(a.latency);
    } else if bw {
        need(0);
    }
    d
}

fn effects(n: &Node) -> (BTreeSet<&str>, BTreeSet<&str>) {
    match &n.kind {
        NodeKind::Op(_) => (BTreeSet::new(), BTreeSet::new()),
        NodeKind::Mem { array, write: false, .. } => (BTreeSet::from([array.as_str()]), BTreeSet::new()),
        NodeKind::Mem { array, write: true, .. } => (BTreeSet::new(), BTreeSet::from([array.as_str()])),
        NodeKind::Region { reads, writes, .. } => {
            (reads.iter().map(|s| s.as_str()).collect(), writes.iter().map(|s| s.as_str()).collect())
        }
    }
}

/// Port demand of `a` when issued together with `others`: `true` if it fits.
pub fn port_fits(a: &Node, others: &[&Node], ports: &PortFn) -> bool {
    let here: Vec<(&Node, Option<Addr>)> = others.iter().map(|&o| (o, addr_of(o))).collect();
    port_fits_at(a, addr_of(a).as_ref(), &here.iter().map(|(n, x)| (*n, x.as_ref())).collect::<Vec<_>>(), ports)
}

fn port_fits_at(a: &Node, aa: Option<&Addr>, others: &[(&Node, Option<&Addr>)], ports: &PortFn) -> bool {
    let NodeKind::Mem { array, write, bank, .. } = &a.kind else { return true };
    let (r, w, shared) = ports(array);
    let mut reads: Vec<&Addr> = vec![];
    let mut writes = 0u32;
    for (o, oa) in others {
        let NodeKind::Mem { array: ar, write: ow, bank: ob, .. } = &o.kind else { continue };
        if ar != array || !banks_overlap(bank, ob) {
            continue;
        }
        let oa = oa.unwrap();
        if *ow {
            writes += 1;
        } else if !reads.contains(&oa) {
            reads.push(oa);
        }
    }
    if !write && reads.contains(&aa.unwrap()) {
        return true;
    }
    let reads = reads.len() as u32;
    if shared > 0 {
        reads + writes < shared
    } else if *write {
        writes < w
    } else {
        reads < r
    }
}

pub fn schedule(nodes: &[Node], ports: &PortFn) -> Schedule {
    let n = nodes.len();
    if n == 0 {
        return Schedule::default();
    }
    let addrs: Vec<Option<Addr>> = nodes.iter().map(addr_of).collect();
    let mut succs: Vec<Vec<(usize, u64)>> = vec![vec![]; n];
    let mut asap = vec![0u64; n];
    for j in 0..n {
        for i in 0..j {
            if let Some(d) = delay_at(&nodes[i], addrs[i].as_ref(), &nodes[j], addrs[j].as_ref()) {
                succs[i].push((j, d));
                asap[j] = asap[j].max(asap[i] + d);
            }
        }
    }
    let horizon = (0..n).map(|i| asap[i] + nodes[i].latency).max().unwrap() as i64;
    let mut start = vec![0i64; n];
    let mut by_cycle: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for j in (0..n).rev() {
        let mut t = horizon - nodes[j].latency as i64;
        for &(k, d) in &succs[j] {
            t = t.min(start[k] - d as i64);
        }
        if matches!(nodes[j].kind, NodeKind::Mem { .. }) {
            loop {
                let here: Vec<(&Node, Option<&Addr>)> =
                    by_cycle.get(&t).map_or(vec![], |v| v.iter().map(|&i| (&nodes[i], addrs[i].as_ref())).collect());
                if port_fits_at(&nodes[j], addrs[j].as_ref(), &here, ports) {
                    break;
                }
                t -= 1;
            }
        }
        start[j] = t;
        by_cycle.entry(t).or_default().push(j);
    }
    let lo = *start.iter().min().unwrap();
    let start: Vec<u64> = start.iter().map(|&s| (s - lo) as u64).collect();
    let depth = (0..n).map(|i| start[i] + nodes[i].latency).max().unwrap();
    Schedule { start, depth }
}

/// Peak number of concurrently busy units per class in a schedule. Operations
/// hold a unit in their issue cycle; regions hold their units while active.
pub fn peak_units(nodes: &[Node], s: &Schedule) -> BTreeMap<OpClass, u64> {
    let mut events: BTreeMap<u64, BTreeMap<OpClass, i64>> = BTreeMap::new();
    for (n, &t) in nodes.iter().zip(&s.start) {
        let (units, len): (BTreeMap<OpClass, u64>, u64) = match &n.kind {
            NodeKind::Op(c) => (BTreeMap::from([(*c, 1)]), 1),
            NodeKind::Region { units, .. } => (units.clone(), n.latency.max(1)),
            NodeKind::Mem { .. } => continue,
        };
        for (c, k) in units {
            *events.entry(t).or_default().entry(c).or_default() += k as i64;
            *events.entry(t + len).or_default().entry(c).or_default() -= k as i64;
        }
    }
    let mut cur: BTreeMap<OpClass, i64> = BTreeMap::new();
    let mut peak: BTreeMap<OpClass, u64> = BTreeMap::new();
    for (_, delta) in events {
        for (c, d) in delta {
            let v = cur.entry(c).or_default();
            *v += d;
            let p = peak.entry(c).or_default();
            *p = (*p).max(*v as u64);
        }
    }
    peak.retain(|_, v| *v > 0);
    peak
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(c: OpClass, lat: u64, def: u32, uses: &[u32]) -> Node {
        Node { kind: NodeKind::Op(c), latency: lat, def: Some(ValueId(def)), uses: uses.iter().map(|&u| ValueId(u)).collect() }
    }

    fn load(k: i64, def: u32) -> Node {
        Node {
            kind: NodeKind::Mem { array: "A".into(), write: false, indices: vec![IndexExpr::cst(k)], bank: vec![Some(0)] },
            latency: 1,
            def: Some(ValueId(def)),
            uses: vec![],
        }
    }

    const T2P: &PortFn = &|_| (0, 0, 2);

    #[test]
    fn parallel_adds() {
        let s = schedule(&[op(OpClass::Fadd, 4, 1, &[]), op(OpClass::Fadd, 4, 2, &[])], T2P);
        assert_eq!(s.depth, 4);
    }

    #[test]
    fn mul_then_add() {
        let s = schedule(&[op(OpClass::Fmul, 3, 1, &[]), op(OpClass::Fadd, 4, 2, &[1])], T2P);
        assert_eq!(s.depth, 7);
    }

    #[test]
    fn four_loads_two_ports() {
        let s = schedule(&[load(0, 1), load(1, 2), load(2, 3), load(3, 4)], T2P);
        assert_eq!(s.depth, 2);
        let same = schedule(&[load(0, 1), load(0, 2), load(0, 3)], T2P);
        assert_eq!(same.depth, 1);
    }
}
