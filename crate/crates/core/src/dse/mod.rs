//! Design space exploration over loop and directive parameters.

pub mod explore;
pub mod pareto;
pub mod space;

pub use explore::{explore, finalize, optimize, write_csv, DseError, ExploreOptions, Exploration, Record};
pub use pareto::{dominates, hypervolume_2d, Frontier};
pub use space::{apply, build_space, evaluate, Config, Point, Qor, Space, SpaceCaps};
