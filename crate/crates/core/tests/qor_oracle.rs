//! The estimator against the separate cycle-driven simulator in `common::sim`.

use hlsforge::corpus::Kernel;
use hlsforge::ir::*;
use hlsforge::qor::{estimate, TargetSpec};
use hlsforge::directive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::sim::{random_design, Sim};

#[test]
fn estimator_matches_simulator() {
    let t = TargetSpec::edge();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for round in 0..10 {
        for k in Kernel::ALL {
            let n = [4, 8, 12, 16][round % 4];
            let p = random_design(k, n, &mut rng);
            let est = estimate(&p, &t).unwrap();
            let sim = Sim { p: &p, t: &t }.func(&p.top);
            assert_eq!((est.latency, est.interval), sim, "{k} n={n} round {round}\n{}", printer::print_program(&p));
            checked += 1;
        }
    }
    assert!(checked >= 50);
}

#[test]
fn baseline_gemm_by_hand() {
    // One statement group per (i, j): C scaled, then an accumulation chain over k.
    let t = TargetSpec::edge();
    let p = Kernel::Gemm.program(4, ElemKind::F32);
    let r = estimate(&p, &t).unwrap();
    let sim = Sim { p: &p, t: &t }.func(&p.top);
    assert_eq!(r.latency, sim.0);
    assert!(r.latency > 4 * 4 * 4 * 7);
}

#[test]
fn pipelined_loop_latency_formula() {
    let t = TargetSpec::edge();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let lat = |trip: i64, ii: u32| {
        let src = format!("void f(float x[{trip}], float y[{trip}]) {{ for (int i = 0; i < {trip}; i++) y[i] = x[i] * 2.0f + 1.0f; }}");
        let mut p = hlsforge::frontend::parse_and_raise(&src).unwrap();
        directive::pipeline_bands(p.top_function_mut(), ii, None);
        estimate(&p, &t).unwrap().latency
    };
    for _ in 0..20 {
        let trip = rng.gen_range(2..200);
        let ii = rng.gen_range(1..5);
        // A single iteration costs the pipeline depth plus the fixed function overhead.
        let one = lat(1, ii);
        assert_eq!(lat(trip, ii), ii as u64 * (trip as u64 - 1) + one);
    }
}
