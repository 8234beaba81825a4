//! Directive passes (pipelining, array partitioning) and IR clean-ups.

pub mod canonicalize;
pub mod forward;
pub mod partition;
pub mod pipeline;
pub mod simplify;

pub use canonicalize::canonicalize;
pub use forward::{simplify_memref_access, store_forward};
pub use partition::{array_partition, decide_dim, DimDecision};
pub use pipeline::{pipeline_bands, pipeline_func, pipeline_loop};
pub use simplify::simplify_affine_if;

use crate::ir::Function;

/// The clean-up sequence run after directive passes.
pub fn simplify_all(f: &mut Function) {
    simplify_affine_if(f);
    canonicalize(f);
    store_forward(f);
    simplify_memref_access(f);
    canonicalize(f);
}
