use std::collections::{BTreeMap, BTreeSet};

use hlsforge::corpus::Kernel;
use hlsforge::frontend::parse_and_raise;
use hlsforge::ir::deps::{analyze_dependences, collect_accesses, Access, DepKind, Dist, LoopCtx};
use hlsforge::ir::{block_size, verify, AffineExpr, AffineMap, DimPartition, ElemKind, Fashion, MemRefType, MemorySpace, Stmt};
use proptest::prelude::*;

// ---- dependences against a flat trace ----

fn iterate(loops: &[LoopCtx], env: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
    let Some((l, rest)) = loops.split_first() else {
        out.push(loops_ivs(env));
        return;
    };
    let get = |e: &AffineExpr, env: &[i64]| e.eval(&|v| env[v as usize]);
    let (lo, hi) = (get(&l.lower, env), get(&l.upper, env));
    let mut i = lo;
    while i < hi {
        env[l.var as usize] = i;
        iterate(rest, env, out);
        i += l.step;
    }
}

fn loops_ivs(env: &[i64]) -> Vec<i64> {
    env.to_vec()
}

/// Nearest earlier conflicting instance of every access pair, found by scanning the trace.
fn brute_force(accesses: &[Access]) -> BTreeMap<(usize, usize), (DepKind, Vec<Dist>)> {
    let loops = &accesses[0].loops;
    let width = loops.iter().map(|l| l.var as usize + 1).max().unwrap();
    let mut points = vec![];
    iterate(loops, &mut vec![0; width], &mut points);
    let mut trace: Vec<(usize, Vec<i64>, Vec<i64>)> = vec![];
    for env in &points {
        for a in accesses {
            let addr = a.indices.iter().map(|e| e.eval(&|v| env[v as usize])).collect();
            let ivs = loops.iter().map(|l| env[l.var as usize]).collect();
            trace.push((a.id, ivs, addr));
        }
    }
    let mut dists: BTreeMap<(usize, usize), BTreeSet<Vec<i64>>> = BTreeMap::new();
    for (n, (sink, ivs, addr)) in trace.iter().enumerate() {
        let b = &accesses[*sink];
        for a in accesses {
            if a.array != b.array || !(a.is_write || b.is_write) {
                continue;
            }
            let prev = trace[..n].iter().rev().find(|(id, _, ad)| *id == a.id && ad == addr);
            if let Some((_, src_ivs, _)) = prev {
                let d = ivs.iter().zip(src_ivs).map(|(x, y)| x - y).collect();
                dists.entry((a.id, *sink)).or_default().insert(d);
            }
        }
    }
    dists
        .into_iter()
        .map(|((s, t), set)| {
            let first = set.iter().next().unwrap().clone();
            let v = (0..first.len())
                .map(|k| if set.iter().all(|d| d[k] == first[k]) { Dist::Const(first[k]) } else { Dist::Unknown })
                .collect();
            let kind = match (accesses[s].is_write, accesses[t].is_write) {
                (true, true) => DepKind::Waw,
                (true, false) => DepKind::Raw,
                _ => DepKind::War,
            };
            ((s, t), (kind, v))
        })
        .collect()
}

fn index_src(c: &[i64; 3], off: i64, wrap: u8, m: i64, depth: usize) -> String {
    let mut s = off.to_string();
    for (v, k) in ["i", "j", "k"].iter().zip(c).take(depth) {
        // C division truncates, so only nonnegative dividends raise to floordiv / mod.
        let k = if wrap == 1 || wrap == 2 { k.abs() } else { *k };
        if k != 0 {
            s += &format!(" + ({k}) * {v}");
        }
    }
    match wrap {
        1 => format!("({s}) % {m}"),
        2 => format!("({s}) / {m}"),
        _ => s,
    }
}

type Idx = ([i64; 3], i64, u8, i64);

fn idx() -> impl Strategy<Value = Idx> {
    (prop::array::uniform3(-1i64..3), 0i64..4, 0u8..4, 2i64..4)
}

fn band_source(depth: usize, trips: [i64; 3], tri: bool, subs: &[Idx]) -> String {
    let e = |x: &Idx| index_src(&x.0, x.1, x.2, x.3, depth);
    let vars = ["i", "j", "k"];
    let mut s = String::from("void f(int A[64][64], int B[64][64]) {\n");
    for d in 0..depth {
        let hi = if d == 1 && tri { "i + 1".to_string() } else { trips[d].to_string() };
        s += &format!("for (int {v} = 0; {v} < {hi}; {v}++) {{\n", v = vars[d]);
    }
    s += &format!("A[{}][{}] = A[{}][{}] + B[{}][{}];\n", e(&subs[0]), e(&subs[1]), e(&subs[2]), e(&subs[3]), e(&subs[4]), e(&subs[5]));
    s += &format!("B[{}][{}] = A[{}][{}];\n", e(&subs[6]), e(&subs[7]), e(&subs[8]), e(&subs[9]));
    s += &"}\n".repeat(depth + 1);
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn dependences_match_brute_force(
        depth in 2usize..4,
        trips in prop::array::uniform3(1i64..6),
        tri: bool,
        subs in prop::collection::vec(idx(), 10),
    ) {
        let src = band_source(depth, trips, tri, &subs);
        let p = parse_and_raise(&src).unwrap();
        let Stmt::Loop(root) = &p.top_function().body[0] else { panic!() };
        let accesses = collect_accesses(root).unwrap();
        let got: BTreeMap<_, _> = analyze_dependences(root)
            .unwrap()
            .into_iter()
            .map(|d| ((d.src, d.sink), (d.kind, d.distance)))
            .collect();
        prop_assert_eq!(got, brute_force(&accesses), "{}", src);
    }
}

#[test]
fn single_assignment_has_no_dependences() {
    let p = parse_and_raise("void f(float A[8], float B[8]) { for (int i = 0; i < 8; i++) B[i] = A[i]; }").unwrap();
    let Stmt::Loop(root) = &p.top_function().body[0] else { panic!() };
    assert!(analyze_dependences(root).unwrap().is_empty());
}

#[test]
fn syrk_c_dependence_carried_by_k() {
    let p = Kernel::Syrk.program(8, ElemKind::F32);
    let Stmt::Loop(root) = &p.top_function().body[0] else { panic!() };
    let carried: Vec<_> = analyze_dependences(root)
        .unwrap()
        .into_iter()
        .filter(|d| d.array == "C" && d.distance.len() == 3 && d.carrier().is_some())
        .collect();
    assert!(!carried.is_empty());
    for d in carried {
        assert_eq!(d.distance, vec![Dist::Const(0), Dist::Const(0), Dist::Const(1)], "{d:?}");
    }
}

// ---- layouts ----

#[test]
fn layouts_are_bijections() {
    for ext in 1..=64i64 {
        for f in 1..=ext {
            for fashion in [Fashion::Cyclic, Fashion::Block] {
                let t = MemRefType::new(vec![ext], ElemKind::I32, MemorySpace::OnChip1P)
                    .with_partition(&[DimPartition { fashion, factor: f }]);
                t.check_layout().unwrap();
                let (banks, depth) = match fashion {
                    _ if f == 1 => (1, ext),
                    Fashion::Cyclic => (f, block_size(ext, f)),
                    _ => (block_size(ext, block_size(ext, f)), block_size(ext, f)),
                };
                assert!(banks <= f);
                let mut seen = BTreeSet::new();
                for i in 0..ext {
                    let (part, phys) = t.partition_indices(&[i]).unwrap();
                    assert!((0..banks).contains(&part[0]) && (0..depth).contains(&phys[0]), "{ext} {f} {fashion:?} {i}");
                    assert!(seen.insert((part[0], phys[0])));
                }
            }
        }
    }
}

#[test]
fn partition_index_examples() {
    let t = |parts: &[DimPartition], shape: Vec<i64>| MemRefType::new(shape, ElemKind::F32, MemorySpace::OnChip1P).with_partition(parts);
    let cyc = t(&[DimPartition::cyclic(2), DimPartition::NONE], vec![8, 8]);
    assert_eq!(cyc.partition_indices(&[5, 1]).unwrap(), (vec![1, 0], vec![2, 1]));
    let id = t(&[DimPartition::NONE, DimPartition::NONE], vec![8, 8]);
    assert_eq!(id.partition_indices(&[3, 7]).unwrap(), (vec![0, 0], vec![3, 7]));
    let blk = t(&[DimPartition::NONE, DimPartition::block(4)], vec![4, 16]);
    assert_eq!(blk.partition_indices(&[0, 9]).unwrap(), (vec![0, 2], vec![0, 1]));
    assert!(blk.partition_indices(&[0, 16]).is_err());
}

// ---- affine maps ----

fn expr(n: u32) -> impl Strategy<Value = AffineExpr> {
    let leaf = prop_oneof![(-5i64..6).prop_map(AffineExpr::Const), (0..n).prop_map(AffineExpr::Var)];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| AffineExpr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), -3i64..4).prop_map(|(a, c)| AffineExpr::Mul(Box::new(a), c)),
            (inner.clone(), 1i64..5).prop_map(|(a, c)| AffineExpr::FloorDiv(Box::new(a), c)),
            (inner, 1i64..5).prop_map(|(a, c)| AffineExpr::Mod(Box::new(a), c)),
        ]
    })
}

fn map2() -> impl Strategy<Value = AffineMap> {
    prop::collection::vec(expr(2), 2).prop_map(|r| AffineMap::new(2, r).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn compose_is_pointwise_and_associative(a in map2(), b in map2(), c in map2(), x in prop::array::uniform2(-40i64..40)) {
        let ab = AffineMap::compose(&a, &b).unwrap();
        let bc = AffineMap::compose(&b, &c).unwrap();
        let direct = a.eval(&b.eval(&c.eval(&x).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(ab.eval(&c.eval(&x).unwrap()).unwrap(), a.eval(&b.eval(&c.eval(&x).unwrap()).unwrap()).unwrap());
        prop_assert_eq!(AffineMap::compose(&a, &bc).unwrap().eval(&x).unwrap(), direct.clone());
        prop_assert_eq!(AffineMap::compose(&ab, &c).unwrap().eval(&x).unwrap(), direct);
    }

    #[test]
    fn simplify_preserves_value(e in expr(2), x in prop::array::uniform2(-40i64..40)) {
        let s = e.simplify();
        prop_assert!(s.is_well_formed());
        prop_assert_eq!(s.eval(&|v| x[v as usize]), e.eval(&|v| x[v as usize]));
    }

    #[test]
    fn split_offset_matches_difference(a in expr(2), b in expr(2), x in prop::array::uniform2(-40i64..40)) {
        let (sa, ca) = a.split_offset();
        let (sb, cb) = b.split_offset();
        prop_assert_eq!(sa.eval(&|v| x[v as usize]) + ca, a.eval(&|v| x[v as usize]));
        let diff = (a.clone() - b.clone()).simplify().as_const();
        prop_assert_eq!(diff, (sa == sb).then_some(ca - cb));
    }
}

// ---- verifier ----

#[test]
fn verify_is_pure_and_idempotent() {
    for k in Kernel::ALL {
        let p = k.program(8, ElemKind::I32);
        let before = p.clone();
        assert!(verify::verify(&p).is_empty());
        assert_eq!(verify::verify(&p), verify::verify(&p));
        assert_eq!(p, before);
    }
}

#[test]
fn verify_reports_rule_ids() {
    let mut p = Kernel::Gemm.program(8, ElemKind::F32);
    let f = p.functions.iter_mut().find(|f| f.name == "gemm").unwrap();
    let Stmt::Loop(l) = &mut f.body[0] else { panic!() };
    l.directive = Some(hlsforge::ir::LoopDirective { pipeline: true, target_ii: 1, flatten: false });
    let d = verify::verify(&p);
    assert!(d.iter().any(|d| d.rule == "pipeline-nested-loop"), "{d:?}");
    assert!(d.iter().all(|d| !d.path.is_empty()));

    let mut p = Kernel::Gemm.program(8, ElemKind::F32);
    let f = p.functions.iter_mut().find(|f| f.name == "gemm").unwrap();
    let arr = f.params.iter_mut().find_map(|q| match q {
        hlsforge::ir::Param::Array { ty, .. } => Some(ty),
        _ => None,
    });
    arr.unwrap().layout.results.pop();
    let d = verify::verify(&p);
    assert_eq!(d.iter().filter(|d| d.rule == "layout-arity").count(), 1, "{d:?}");
}
