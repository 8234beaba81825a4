use hlsforge::corpus::Kernel;
use hlsforge::frontend::{parse_and_raise, parse_c};
use hlsforge::interp::{execute, random_tape, tapes_match, Buffer, Tape, Trap, Val};
use hlsforge::ir::util::{erase_directives, walk};
use hlsforge::ir::{verify, ElemKind, IndexExpr, Param, Program, Stmt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;

fn loops(p: &Program) -> Vec<hlsforge::ir::Loop> {
    let mut out = vec![];
    walk(&p.top_function().body, &mut |s| {
        if let Stmt::Loop(l) = s {
            out.push(l.clone());
        }
    });
    out
}

#[test]
fn scalar_pointer_becomes_unit_array() {
    let p = parse_and_raise("void f(float *x) { *x = *x + 1; }").unwrap();
    let f = p.top_function();
    assert_eq!(f.params.len(), 1);
    let Param::Array { name, ty, .. } = &f.params[0] else { panic!("{:?}", f.params[0]) };
    assert_eq!((name.as_str(), ty.shape.as_slice()), ("x", &[1][..]));
    let mut t = Tape::default();
    t.arrays.insert("x".into(), Buffer::filled(ElemKind::F32, vec![1], vec![Val::F(2.5)]));
    let out = execute(&p, &t).unwrap();
    assert_eq!(out.arrays["x"].data, vec![Val::F(3.5)]);
}

#[test]
fn pointer_to_pointer_is_rejected() {
    let e = parse_c("void f(float **p, float x[4]) {\n  x[0] = 1;\n}").unwrap_err();
    assert_eq!(e.line, 1);
    assert!(e.msg.contains('p'), "{e}");
}

#[test]
fn rejections_carry_positions() {
    for (src, line) in [
        ("void f(float x[4]) {\n  while (1) { }\n}", 2),
        ("void f(float x[4], int n) {\n  for (int i = 0; i < 4; i += n) x[i] = 1;\n}", 2),
        ("struct s { int a; };", 1),
    ] {
        let e = parse_c(src).expect_err(src);
        assert_eq!(e.line, line, "{src}: {e}");
    }
}

#[test]
fn variable_divisor_stays_general() {
    let p = parse_and_raise("void f(int x[4], int n) {\n  for (int i = 0; i < 4; i++) x[i / n] = 1;\n}").unwrap();
    let mut general = false;
    walk(&p.top_function().body, &mut |s| {
        if let Stmt::Store { indices, .. } = s {
            general = matches!(indices[0], IndexExpr::General(_));
        }
    });
    assert!(general);
}

#[test]
fn triangular_bound_raises() {
    let p = Kernel::Syrk.program(8, ElemKind::F32);
    let ls = loops(&p);
    assert_eq!(ls.len(), 3);
    assert!(ls.iter().all(|l| l.is_affine()));
    let j = &ls[1];
    assert!(j.upper.as_affine().unwrap().uses_var(ls[0].var));
}

#[test]
fn data_dependent_bound_stays_general() {
    let src = "void f(int n[1], int x[8][8]) {
      for (int i = 0; i < n[0]; i++)
        for (int j = 0; j < 8; j++)
          x[i * 2 + 1 - i][j] = j;
    }";
    let p = parse_and_raise(src).unwrap();
    let ls = loops(&p);
    assert!(matches!(ls[0].upper, IndexExpr::General(_)));
    assert!(ls[1].is_affine());
    let mut affine_access = false;
    walk(&p.top_function().body, &mut |s| {
        if let Stmt::Store { indices, .. } = s {
            affine_access = indices.iter().all(|e| e.is_affine());
        }
    });
    assert!(affine_access);
}

#[test]
fn raising_preserves_semantics() {
    let extra = [
        "void f(int n[1], int x[8], int y[8]) {
          for (int i = 0; i < 8; i++) y[i] = 0;
          for (int i = 0; i < n[0] % 8; i++) y[x[i] % 8 < 0 ? 0 : 0] += i;
        }",
        "void g(int a[16], int b[16]) {
          for (int i = 0; i < 16; i += 3) { if (i >= 4 && i < 13) b[i / 2] = a[i % 5]; else b[i] = a[15 - i]; }
        }",
    ];
    let mut srcs: Vec<String> = Kernel::ALL.iter().map(|k| k.source(8, ElemKind::I32)).collect();
    srcs.extend(extra.iter().filter_map(|s| parse_c(s).ok().map(|_| s.to_string())));
    assert!(srcs.len() >= 7);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for src in &srcs {
        let general = parse_c(src).unwrap();
        let raised = parse_and_raise(src).unwrap();
        assert!(verify::verify(&raised).is_empty());
        for _ in 0..32 {
            let t = random_tape(general.top_function(), &mut rng);
            let a = execute(&general, &t);
            let b = execute(&raised, &t);
            match (a, b) {
                (Ok(a), Ok(b)) => tapes_match(&a, &b, 0.0).unwrap(),
                (Err(_), Err(_)) => {}
                (a, b) => panic!("{src}: {a:?} vs {b:?}"),
            }
        }
    }
}

#[test]
fn gemm_matches_naive_matmul() {
    let n = 4usize;
    let p = Kernel::Gemm.program(n, ElemKind::I32);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..8 {
        let t = random_tape(p.top_function(), &mut rng);
        let i = |name: &str| -> Vec<i32> { t.arrays[name].data.iter().map(|v| v.as_i32()).collect() };
        let (a, b, c) = (i("A"), i("B"), i("C"));
        let (alpha, beta) = (t.scalars["alpha"].as_i32(), t.scalars["beta"].as_i32());
        let mut want = vec![0i32; n * n];
        for r in 0..n {
            for col in 0..n {
                let mut acc = c[r * n + col].wrapping_mul(beta);
                for k in 0..n {
                    acc = acc.wrapping_add(alpha.wrapping_mul(a[r * n + k]).wrapping_mul(b[k * n + col]));
                }
                want[r * n + col] = acc;
            }
        }
        let out = execute(&p, &t).unwrap();
        let got: Vec<i32> = out.arrays["C"].data.iter().map(|v| v.as_i32()).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn empty_body_is_identity() {
    let p = parse_and_raise("void f(float x[4], int y[2][2]) { }").unwrap();
    let t = random_tape(p.top_function(), &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(execute(&p, &t).unwrap(), t);
}

#[test]
fn traps() {
    let oob = parse_and_raise("void f(int x[4]) { for (int i = 0; i < 5; i++) x[i] = 1; }").unwrap();
    let t = random_tape(oob.top_function(), &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(execute(&oob, &t), Err(Trap::OutOfBounds { .. })));

    let uninit = parse_and_raise("void f(int x[4]) { int a[4]; for (int i = 0; i < 4; i++) x[i] = a[i]; }").unwrap();
    let t = random_tape(uninit.top_function(), &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(execute(&uninit, &t), Err(Trap::Uninitialized { .. })));

    let div = parse_and_raise("void f(int x[4], int d) { for (int i = 0; i < 4; i++) x[i] = x[i] / d; }").unwrap();
    let mut t = random_tape(div.top_function(), &mut ChaCha8Rng::seed_from_u64(0));
    t.scalars.insert("d".into(), Val::I(0));
    assert!(matches!(execute(&div, &t), Err(Trap::DivByZero { .. })));
}

#[test]
fn directives_and_layouts_are_erasable() {
    for k in [Kernel::Syrk, Kernel::Bicg, Kernel::Gemm] {
        let p = common::golden_design(k);
        let mut bare = p.clone();
        erase_directives(&mut bare);
        assert_ne!(bare, p);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..4 {
            let t = random_tape(p.top_function(), &mut rng);
            let a = execute(&p, &t).unwrap();
            let b = execute(&bare, &t).unwrap();
            assert_eq!(a, b, "{k}");
            assert_eq!(execute(&p, &t).unwrap(), a);
        }
    }
}
