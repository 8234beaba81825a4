#![allow(dead_code)]

pub mod sim;

use std::path::PathBuf;

use hlsforge::corpus::Kernel;
use hlsforge::dse::{optimize, ExploreOptions, SpaceCaps};
use hlsforge::interp::{random_tape, Tape};
use hlsforge::ir::{ElemKind, Program};
use hlsforge::qor::TargetSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GOLDEN_SIZE: usize = 16;

/// The design the pragma goldens are taken from: a fixed, seeded search on the edge profile.
pub fn golden_design(k: Kernel) -> Program {
    let p = k.program(GOLDEN_SIZE, ElemKind::F32);
    let caps = SpaceCaps { tile_cap: 4, ii_max: 4, dataflow: true };
    let opts = ExploreOptions { budget: 64, seed: 0, jobs: 2, ..Default::default() };
    optimize(&p, &caps, &opts, &TargetSpec::edge()).unwrap_or_else(|e| panic!("{k}: {e}")).2
}

pub fn golden_path(k: Kernel) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{}.pragmas", k.name()))
}

pub fn tapes(p: &Program, n: usize, seed: u64) -> Vec<Tape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_tape(p.top_function(), &mut rng)).collect()
}
