use std::collections::HashSet;

use hlsforge::corpus::Kernel;
use hlsforge::dse::{build_space, dominates, evaluate, explore, finalize, write_csv, DseError, ExploreOptions, Frontier, SpaceCaps};
use hlsforge::interp::{execute, random_tape, tapes_match};
use hlsforge::ir::ElemKind;
use hlsforge::qor::TargetSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> SpaceCaps {
    SpaceCaps { tile_cap: 2, ii_max: 2, dataflow: true }
}

#[test]
fn full_budget_recovers_exhaustive_frontier() {
    let p = Kernel::Gesummv.program(8, ElemKind::F32);
    let t = TargetSpec::edge();
    let s = build_space(&p, "gesummv", &small()).unwrap();
    let n = s.size() as usize;
    assert!(n <= 400, "space too large for the test: {n}");
    let mut exhaustive = Frontier::default();
    for i in 0..n {
        if let Ok(q) = evaluate(&s, &p, &s.point_at(i as u128), &t) {
            exhaustive.insert(i, q);
        }
    }
    let opts = ExploreOptions { budget: n, patience: usize::MAX, seed: 3, jobs: 2, ..Default::default() };
    let x = explore(&s, &p, &t, &opts).unwrap();
    assert_eq!(x.records.len(), n);
    let mut a: Vec<_> = exhaustive.members.iter().map(|m| m.1).collect();
    let mut b: Vec<_> = x.frontier.members.iter().map(|m| m.1).collect();
    let key = |q: &hlsforge::dse::Qor| (q.latency, q.dsp, q.lut, q.bram_bits);
    a.sort_by_key(key);
    b.sort_by_key(key);
    assert_eq!(a, b);
}

#[test]
fn exploration_invariants() {
    let p = Kernel::Gemm.program(16, ElemKind::F32);
    let t = TargetSpec::edge();
    let s = build_space(&p, "gemm", &SpaceCaps { tile_cap: 4, ii_max: 4, dataflow: true }).unwrap();
    for seed in 0..3 {
        let x = explore(&s, &p, &t, &ExploreOptions { budget: 48, seed, ..Default::default() }).unwrap();
        assert!(x.records.len() <= 48);
        let pts: HashSet<_> = x.records.iter().map(|r| r.point.clone()).collect();
        assert_eq!(pts.len(), x.records.len(), "duplicate evaluation");
        assert!(x.frontier.is_consistent());
        for (_, m) in &x.frontier.members {
            for r in &x.records {
                if let Ok(q) = &r.result {
                    assert!(!dominates(q, m));
                }
            }
        }
        assert!(x.hv_history.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(x.hv_history.len(), x.records.len() - x.records.len().min(32) + 1);
    }
}

#[test]
fn same_seed_same_result_regardless_of_jobs() {
    let p = Kernel::Syrk.program(8, ElemKind::F32);
    let t = TargetSpec::edge();
    let s = build_space(&p, "syrk", &small()).unwrap();
    let a = explore(&s, &p, &t, &ExploreOptions { budget: 40, seed: 11, jobs: 1, ..Default::default() }).unwrap();
    let b = explore(&s, &p, &t, &ExploreOptions { budget: 40, seed: 11, jobs: 4, ..Default::default() }).unwrap();
    assert_eq!(a, b);
}

#[test]
fn budget_below_initial_sample_is_rejected() {
    let p = Kernel::Gemm.program(8, ElemKind::F32);
    let s = build_space(&p, "gemm", &SpaceCaps::default()).unwrap();
    let e = explore(&s, &p, &TargetSpec::edge(), &ExploreOptions { budget: 4, ..Default::default() }).unwrap_err();
    assert_eq!(e, DseError::Budget { budget: 4, n0: 32 });
}

#[test]
fn finalize_respects_limits_and_reports_closest() {
    let p = Kernel::Gemm.program(16, ElemKind::F32);
    let t = TargetSpec::edge();
    let s = build_space(&p, "gemm", &SpaceCaps { tile_cap: 4, ii_max: 3, dataflow: true }).unwrap();
    let x = explore(&s, &p, &t, &ExploreOptions { budget: 64, seed: 1, ..Default::default() }).unwrap();
    let best = finalize(&x, &t).unwrap();
    let q = best.result.clone().unwrap();
    assert!(q.dsp <= t.dsp_total && q.lut <= t.lut_total && q.bram_bits <= t.bram_bits_total);
    for (_, m) in &x.frontier.members {
        if m.dsp <= t.dsp_total && m.lut <= t.lut_total && m.bram_bits <= t.bram_bits_total {
            assert!(m.latency >= q.latency);
        }
    }
    let tiny = TargetSpec { dsp_total: 0, ..t.clone() };
    assert!(matches!(finalize(&x, &tiny), Err(DseError::OverBudget { .. })));
}

#[test]
fn visited_points_preserve_semantics() {
    let p = Kernel::Trmm.program(8, ElemKind::F32);
    let t = TargetSpec::edge();
    let s = build_space(&p, "trmm", &small()).unwrap();
    let x = explore(&s, &p, &t, &ExploreOptions { budget: 40, seed: 5, ..Default::default() }).unwrap();
    let tape = random_tape(p.top_function(), &mut ChaCha8Rng::seed_from_u64(9));
    let want = execute(&p, &tape).unwrap();
    for r in x.records.iter().filter(|r| r.result.is_ok()) {
        let q = hlsforge::dse::apply(&p, "trmm", &s.config(&r.point)).unwrap();
        let got = execute(&q, &tape).unwrap();
        tapes_match(&want, &got, 1e-5).unwrap_or_else(|e| panic!("point {:?}: {e}", s.describe(&r.point)));
    }
}

#[test]
fn csv_has_header_and_one_row_per_record() {
    let p = Kernel::Bicg.program(8, ElemKind::F32);
    let t = TargetSpec::edge();
    let s = build_space(&p, "bicg", &small()).unwrap();
    let x = explore(&s, &p, &t, &ExploreOptions { budget: 36, seed: 2, ..Default::default() }).unwrap();
    let mut buf = vec![];
    write_csv(&mut buf, &s, &x).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("id,") && lines[0].ends_with(",latency,dsp,lut,bram_bits,pareto"));
    assert_eq!(lines.len(), x.records.len() + 1);
    let cols = lines[0].split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == cols));
    assert_eq!(lines.iter().filter(|l| l.ends_with(",true")).count(), x.frontier.members.len());
}
