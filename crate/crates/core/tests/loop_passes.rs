use hlsforge::corpus::Kernel;
use hlsforge::interp::{execute, execute_with_stats, random_tape, tapes_match};
use hlsforge::ir::{util, verify, ElemKind, Program, Stmt};
use hlsforge::loops;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_equiv(before: &Program, after: &Program, tapes: usize, what: &str) {
    assert!(verify::verify(after).is_empty(), "{what}: {:?}", verify::verify(after));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let elem_tol = 1e-5;
    for _ in 0..tapes {
        let t = random_tape(before.top_function(), &mut rng);
        let a = execute(before, &t).unwrap();
        let b = execute(after, &t).unwrap_or_else(|e| panic!("{what}: {e}"));
        tapes_match(&a, &b, elem_tol).unwrap_or_else(|e| panic!("{what}: {e}"));
    }
}

fn pipeline(p: &Program, steps: &[&str]) -> Program {
    let mut q = p.clone();
    let f = q.top_function_mut();
    for s in steps {
        match *s {
            "rvb" => drop(loops::remove_variable_bound(f)),
            "perfect" => drop(loops::perfectize(f)),
            "order" => drop(loops::order_opt(f, None)),
            "tile2" => drop(loops::tile(f, &[2, 2, 2])),
            "tile3" => drop(loops::tile(f, &[3, 1, 5])),
            "unroll3" => drop(loops::unroll_innermost(f, 3)),
            _ => unreachable!(),
        }
    }
    q
}

#[test]
fn every_loop_pass_preserves_semantics() {
    let seqs: &[&[&str]] = &[
        &["perfect"],
        &["rvb"],
        &["rvb", "perfect"],
        &["rvb", "perfect", "order"],
        &["rvb", "perfect", "tile2"],
        &["rvb", "perfect", "order", "tile3"],
        &["unroll3"],
        &["rvb", "perfect", "order", "tile2", "unroll3"],
    ];
    for k in Kernel::ALL {
        for elem in [ElemKind::I32, ElemKind::F32] {
            for n in [7, 8] {
                let p = k.program(n, elem);
                for s in seqs {
                    let q = pipeline(&p, s);
                    check_equiv(&p, &q, 4, &format!("{k} n={n} {elem:?} {s:?}"));
                }
            }
        }
    }
}

#[test]
fn syrk_order_after_rvb_and_perfectize() {
    let p = pipeline(&Kernel::Syrk.program(8, ElemKind::I32), &["rvb", "perfect", "order"]);
    let Stmt::Loop(l) = &p.top_function().body[0] else { panic!() };
    let names: Vec<_> = loops::band(l).iter().map(|l| l.name.clone()).collect();
    assert_eq!(names, ["k", "i", "j"]);
}

#[test]
fn tiling_keeps_executed_body_count() {
    for k in [Kernel::Gemm, Kernel::Syrk, Kernel::Trmm] {
        let p = pipeline(&k.program(9, ElemKind::I32), &["rvb", "perfect"]);
        let q = pipeline(&p, &["tile2"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tape(p.top_function(), &mut rng);
        let (_, s0) = execute_with_stats(&p, &p.top, &t).unwrap();
        let (_, s1) = execute_with_stats(&q, &q.top, &t).unwrap();
        assert_eq!((s0.loads, s0.stores, s0.arith), (s1.loads, s1.stores, s1.arith), "{k}");
    }
}

#[test]
fn full_unroll_leaves_no_loop() {
    let mut p = Kernel::Gemm.program(4, ElemKind::I32);
    let f = p.top_function_mut();
    let body = f.body.clone();
    let out = loops::unroll::unroll_all(&body, f).unwrap();
    assert!(!util::contains_loop(&out));
    let before = p.clone();
    p.top_function_mut().body = out;
    check_equiv(&before, &p, 2, "full unroll");
}
