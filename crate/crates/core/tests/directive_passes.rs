use std::collections::BTreeMap;

use hlsforge::corpus::Kernel;
use hlsforge::directive::{self, partition};
use hlsforge::interp::{execute, random_tape, tapes_match};
use hlsforge::ir::{util, verify, DimPartition, ElemKind, Program};
use hlsforge::loops;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_equiv(before: &Program, after: &Program, tapes: usize, what: &str) {
    assert!(verify::verify(after).is_empty(), "{what}: {:?}", verify::verify(after));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..tapes {
        let t = random_tape(before.top_function(), &mut rng);
        let a = execute(before, &t).unwrap();
        let b = execute(after, &t).unwrap_or_else(|e| panic!("{what}: {e}"));
        tapes_match(&a, &b, 1e-5).unwrap_or_else(|e| panic!("{what}: {e}"));
    }
}

fn optimize(p: &Program, tiles: &[i64], ii: u32) -> Program {
    let mut q = p.clone();
    let f = q.top_function_mut();
    loops::remove_variable_bound(f);
    loops::perfectize(f);
    loops::order_opt(f, None);
    let depth = f.body.iter().filter_map(|s| s.as_loop()).map(loops::perfect_depth).max().unwrap_or(0);
    loops::tile(f, &tiles[..tiles.len().min(depth)]);
    directive::pipeline_bands(f, ii, None);
    directive::array_partition(&mut q, &BTreeMap::new());
    directive::simplify_all(q.top_function_mut());
    q
}

#[test]
fn full_chain_preserves_semantics() {
    for k in Kernel::ALL {
        for elem in [ElemKind::I32, ElemKind::F32] {
            let p = k.program(8, elem);
            for tiles in [[1, 1, 1], [1, 2, 1], [2, 1, 4]] {
                let q = optimize(&p, &tiles, 2);
                check_equiv(&p, &q, 4, &format!("{k} {elem:?} {tiles:?}"));
            }
        }
    }
}

#[test]
fn each_cleanup_pass_preserves_semantics() {
    type Pass = fn(&mut hlsforge::ir::Function);
    let passes: [(&str, Pass); 4] = [
        ("simplify_affine_if", directive::simplify_affine_if),
        ("store_forward", directive::store_forward),
        ("simplify_memref_access", directive::simplify_memref_access),
        ("canonicalize", directive::canonicalize),
    ];
    for k in Kernel::ALL {
        let p = k.program(8, ElemKind::I32);
        let mut base = p.clone();
        let f = base.top_function_mut();
        loops::remove_variable_bound(f);
        loops::perfectize(f);
        loops::tile(f, &[2, 2]);
        directive::pipeline_bands(f, 1, None);
        for (name, pass) in passes {
            let mut q = base.clone();
            pass(q.top_function_mut());
            check_equiv(&p, &q, 3, &format!("{k} {name}"));
        }
    }
}

#[test]
fn syrk_row_pair_gets_cyclic_two() {
    let p = Kernel::Syrk.program(16, ElemKind::F32);
    let mut q = p.clone();
    let f = q.top_function_mut();
    loops::remove_variable_bound(f);
    loops::perfectize(f);
    loops::order_opt(f, None);
    loops::tile(f, &[1, 2, 1]);
    directive::pipeline_bands(f, 1, None);
    let d = &partition::analyze_function(f)["C"][0];
    assert_eq!((d.max_distance, d.accesses), (Some(2), 2));
    assert!(d.is_cyclic());
    assert_eq!(d.partition, DimPartition::cyclic(2));
    directive::array_partition(&mut q, &BTreeMap::new());
    let ty = q.top_function().array_type("C").unwrap();
    assert_eq!(ty.decode_partition().unwrap()[0], DimPartition::cyclic(2));
}

#[test]
fn pipelined_bodies_have_no_loops() {
    for k in Kernel::ALL {
        let q = optimize(&k.program(8, ElemKind::F32), &[1, 2, 2], 1);
        util::walk(&q.top_function().body, &mut |s| {
            if let hlsforge::ir::Stmt::Loop(l) = s {
                if l.is_pipelined() {
                    assert!(!util::contains_loop(&l.body), "{k}");
                }
            }
        });
    }
}

/// Brute-force version of the partition formula: two indices are the same
/// access when they agree on every sampled point, and their distance is
/// constant when the difference is.
fn brute_dim(exprs: &[hlsforge::ir::IndexExpr], extent: i64, samples: &[Vec<i64>]) -> (i64, Option<i64>, DimPartition) {
    use hlsforge::ir::IndexExpr;
    let val = |e: &IndexExpr, s: &[i64]| -> Option<i64> { e.as_affine().map(|a| a.eval(&|v| s[v as usize])) };
    let diff = |a: &IndexExpr, b: &IndexExpr| -> Option<i64> {
        if a == b {
            return Some(0);
        }
        let ds: Vec<Option<i64>> = samples.iter().map(|s| Some(val(a, s)? - val(b, s)?)).collect();
        let first = ds[0]?;
        ds.iter().all(|d| *d == Some(first)).then_some(first)
    };
    let mut distinct: Vec<&IndexExpr> = vec![];
    for e in exprs {
        if !distinct.iter().any(|d| diff(d, e) == Some(0)) {
            distinct.push(e);
        }
    }
    let n = distinct.len() as i64;
    let mut dist = Some(1);
    for a in &distinct {
        for b in &distinct {
            dist = match (dist, diff(a, b)) {
                (Some(d), Some(k)) => Some(d.max(k + 1)),
                _ => None,
            };
        }
    }
    let f = n.clamp(1, extent);
    let part = match dist {
        _ if f == 1 => DimPartition::NONE,
        Some(d) if n >= d => DimPartition::cyclic(f),
        _ => DimPartition::block(f),
    };
    (n, dist, part)
}

#[test]
fn partition_formula_matches_brute_force() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut dims = 0;
    for k in Kernel::ALL {
        for (tiles, ii) in [(vec![1, 2, 1], 1), (vec![2, 2, 2], 2), (vec![1, 4, 1], 1), (vec![4, 1, 2], 3), (vec![2, 1, 4], 1)] {
            let mut q = optimize(&k.program(16, ElemKind::F32), &tiles, ii);
            let f = q.top_function();
            let samples: Vec<Vec<i64>> = (0..48).map(|_| (0..f.next_var + 1).map(|_| rng.gen_range(-64..64)).collect()).collect();
            let decided = partition::analyze_function(f);
            for (array, tuples) in partition::region_accesses(f) {
                let ty = f.array_type(&array).unwrap();
                for d in 0..ty.rank() {
                    let exprs: Vec<_> = tuples.iter().map(|t| t[d].clone()).collect();
                    let (n, dist, part) = brute_dim(&exprs, ty.shape[d], &samples);
                    let got = &decided[&array][d];
                    assert_eq!((got.accesses, got.max_distance, got.partition), (n, dist, part), "{k} {tiles:?} {array} dim {d}");
                    dims += 1;
                }
            }
            directive::array_partition(&mut q, &BTreeMap::new());
            for f in &q.functions {
                for a in f.array_names() {
                    let ty = f.array_type(&a).unwrap();
                    assert_eq!(ty.layout.results.len(), 2 * ty.rank());
                    ty.check_layout().unwrap_or_else(|e| panic!("{k} {a}: {e}"));
                }
            }
        }
    }
    assert!(dims > 60, "{dims}");
}

#[test]
fn canonicalize_is_idempotent() {
    for k in Kernel::ALL {
        for (tiles, ii) in [(vec![1, 2, 1], 1), (vec![2, 2, 2], 2)] {
            let mut q = optimize(&k.program(8, ElemKind::I32), &tiles, ii);
            let f = q.top_function_mut();
            directive::canonicalize(f);
            let once = f.clone();
            directive::canonicalize(f);
            assert_eq!(*f, once, "{k}");
            directive::simplify_all(f);
            let again = f.clone();
            directive::simplify_all(f);
            assert_eq!(*f, again, "{k}");
        }
    }
}
