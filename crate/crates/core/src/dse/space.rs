//! Design space: one dimension per tunable pass parameter.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::graph;
use crate::ir::util::top_level_loops;
use crate::ir::*;
use crate::loops::{self, rvb::has_variable_bound};
use crate::qor::{estimate, TargetSpec};
use crate::{directive, loops::perfect_depth};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpaceCaps {
    /// Largest tile size offered.
    pub tile_cap: i64,
    /// Largest target II offered.
    pub ii_max: u32,
    /// Offer dataflow splitting of functions with several bands.
    pub dataflow: bool,
}

impl Default for SpaceCaps {
    fn default() -> Self {
        SpaceCaps { tile_cap: 8, ii_max: 32, dataflow: true }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum DimKind {
    Rvb { band: usize },
    Perfectize { band: usize },
    Perm { band: usize },
    Tile { band: usize, level: usize },
    /// Target II; option 0 leaves the band unpipelined.
    Ii { band: usize },
    /// Dataflow granularity; option 0 keeps the function unsplit.
    MinGran,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Dim {
    pub name: String,
    pub kind: DimKind,
    /// Option values in order; for permutations an index into `Space::perms`.
    pub options: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Space {
    pub func: String,
    pub dims: Vec<Dim>,
    /// Legal permutation candidates per band.
    pub perms: Vec<Vec<Vec<usize>>>,
    pub bands: usize,
}

/// A point: one option index per dimension.
pub type Point = Vec<usize>;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BandConfig {
    pub rvb: bool,
    pub perfectize: bool,
    pub perm: Option<Vec<usize>>,
    pub tiles: Vec<i64>,
    pub ii: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Config {
    pub bands: Vec<BandConfig>,
    pub min_gran: usize,
}

/// Estimated quality of one evaluated point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Qor {
    pub latency: u64,
    pub interval: u64,
    pub dsp: u64,
    pub lut: u64,
    pub bram_bits: u64,
}

impl fmt::Display for Qor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "latency {} dsp {} lut {} bram {}b", self.latency, self.dsp, self.lut, self.bram_bits)
    }
}

fn tile_options(extent: i64, cap: i64) -> Vec<i64> {
    let mut v: Vec<i64> = (1..=cap.min(extent.max(1))).filter(|&t| (t as u64).is_power_of_two() || extent % t == 0).collect();
    v.dedup();
    v
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Runs `op` on the `band`-th top-level loop of `f`.
pub(crate) fn with_band<T>(f: &mut Function, band: usize, op: impl FnOnce(&mut Loop, &mut Function) -> T) -> Option<T> {
    let idx = *top_level_loops(&f.body).get(band)?;
    let mut body = std::mem::take(&mut f.body);
    let r = match &mut body[idx] {
        Stmt::Loop(l) => Some(op(l, f)),
        _ => None,
    };
    f.body = body;
    r
}

pub fn build_space(p: &Program, func: &str, caps: &SpaceCaps) -> Result<Space, String> {
    let f = p.function(func).ok_or_else(|| format!("no function `{func}`"))?;
    let roots: Vec<&Loop> = top_level_loops(&f.body).into_iter().filter_map(|i| f.body[i].as_loop()).collect();
    let mut dims = vec![];
    let mut perms = vec![];
    for (b, root) in roots.iter().enumerate() {
        let mut work = (*root).clone();
        let variable = has_variable_bound(&work);
        if variable {
            dims.push(Dim { name: format!("b{b}.rvb"), kind: DimKind::Rvb { band: b }, options: vec![0, 1] });
            let _ = loops::remove_variable_bound_band(&mut work);
        }
        if work.only_child_loop().is_some() && perfect_depth(&work) < loops::band_depth(&work) {
            dims.push(Dim { name: format!("b{b}.perfectize"), kind: DimKind::Perfectize { band: b }, options: vec![0, 1] });
        }
        let _ = loops::perfectize_band(&mut work);
        let depth = perfect_depth(&work);
        let legal: Vec<Vec<usize>> = permutations(depth)
            .into_iter()
            .filter(|q| {
                let mut l = work.clone();
                loops::order_opt_band(&mut l, Some(q)).is_ok()
            })
            .collect();
        if legal.len() > 1 {
            dims.push(Dim {
                name: format!("b{b}.perm"),
                kind: DimKind::Perm { band: b },
                options: (0..legal.len() as i64).collect(),
            });
        }
        perms.push(legal);
        for level in 0..depth {
            let l = loops::band_loop(&work, level);
            let extent = loops::trip_of(l).unwrap_or(1);
            let opts = tile_options(extent, caps.tile_cap);
            if opts.len() > 1 {
                dims.push(Dim { name: format!("b{b}.tile{level}"), kind: DimKind::Tile { band: b, level }, options: opts });
            }
        }
        dims.push(Dim { name: format!("b{b}.ii"), kind: DimKind::Ii { band: b }, options: (0..=caps.ii_max as i64).collect() });
    }
    if caps.dataflow && roots.len() > 1 {
        dims.push(Dim { name: "min_gran".into(), kind: DimKind::MinGran, options: (0..=roots.len() as i64).collect() });
    }
    Ok(Space { func: func.to_string(), dims, perms, bands: roots.len() })
}

impl Space {
    /// Number of points, saturating.
    pub fn size(&self) -> u128 {
        self.dims.iter().fold(1u128, |a, d| a.saturating_mul(d.options.len() as u128))
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.len() == self.dims.len() && p.iter().zip(&self.dims).all(|(&i, d)| i < d.options.len())
    }

    /// Point with the given linear index (mixed radix, first dimension fastest).
    pub fn point_at(&self, mut idx: u128) -> Point {
        self.dims
            .iter()
            .map(|d| {
                let n = d.options.len() as u128;
                let k = (idx % n) as usize;
                idx /= n;
                k
            })
            .collect()
    }

    /// The point that applies no transform and no directive.
    pub fn baseline(&self) -> Point {
        vec![0; self.dims.len()]
    }

    pub fn config(&self, p: &Point) -> Config {
        let mut bands: Vec<BandConfig> = (0..self.bands).map(|_| BandConfig::default()).collect();
        let mut c = Config { bands: vec![], min_gran: 0 };
        for (d, &i) in self.dims.iter().zip(p) {
            let v = d.options[i];
            match d.kind {
                DimKind::Rvb { band } => bands[band].rvb = v == 1,
                DimKind::Perfectize { band } => bands[band].perfectize = v == 1,
                DimKind::Perm { band } => bands[band].perm = Some(self.perms[band][v as usize].clone()),
                DimKind::Tile { band, level } => {
                    let t = &mut bands[band].tiles;
                    if t.len() <= level {
                        t.resize(level + 1, 1);
                    }
                    t[level] = v;
                }
                DimKind::Ii { band } => bands[band].ii = v as u32,
                DimKind::MinGran => c.min_gran = v as usize,
            }
        }
        // A band whose imperfection was removed by variable-bound removal alone
        // still needs perfectization when it has no toggle.
        for (b, cfg) in bands.iter_mut().enumerate() {
            if !self.dims.iter().any(|d| d.kind == DimKind::Perfectize { band: b }) {
                cfg.perfectize = true;
            }
        }
        c.bands = bands;
        c
    }

    /// `name=value` pairs of a point, in dimension order.
    pub fn describe(&self, p: &Point) -> Vec<(String, String)> {
        self.dims
            .iter()
            .zip(p)
            .map(|(d, &i)| {
                let v = match d.kind {
                    DimKind::Perm { band } => {
                        self.perms[band][d.options[i] as usize].iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
                    }
                    _ => d.options[i].to_string(),
                };
                (d.name.clone(), v)
            })
            .collect()
    }
}

/// Applies a configuration to a copy of the program: per band variable-bound
/// removal, perfectization, loop order, tiling and pipelining; then cleanup,
/// array partitioning and dataflow splitting.
pub fn apply(p: &Program, func: &str, c: &Config) -> Result<Program, String> {
    let mut q = p.clone();
    let f = q.function_mut(func).ok_or_else(|| format!("no function `{func}`"))?;
    for (b, cfg) in c.bands.iter().enumerate() {
        let r = with_band(f, b, |l, f| -> Result<(), String> {
            if cfg.rvb {
                loops::remove_variable_bound_band(l)?;
            }
            if cfg.perfectize {
                loops::perfectize_band(l)?;
            }
            // Without perfectization the band may be shallower than the
            // perfectized one the options were built for.
            let depth = perfect_depth(l);
            if let Some(perm) = &cfg.perm {
                let (head, tail) = perm.split_at(depth.min(perm.len()));
                if tail.iter().enumerate().any(|(k, &x)| x != depth + k) {
                    return Err(format!("permutation {perm:?} moves loops below the perfect depth {depth}"));
                }
                loops::order_opt_band(l, Some(head))?;
            }
            let mut tiles = cfg.tiles.clone();
            if tiles.iter().skip(depth).any(|&t| t != 1) {
                return Err(format!("tiling {tiles:?} reaches below the perfect depth {depth}"));
            }
            tiles.truncate(depth);
            if tiles.iter().any(|&t| t != 1) {
                loops::tile_band(l, &tiles, f)?;
            }
            Ok(())
        });
        r.ok_or_else(|| format!("band {b} not found"))??;
        if cfg.ii > 0 {
            let var = with_band(f, b, |l, _| directive::pipeline::default_target(l)).unwrap();
            directive::pipeline_loop(f, var, cfg.ii)?;
        }
    }
    directive::simplify_all(f);
    directive::array_partition(&mut q, &BTreeMap::new());
    if c.min_gran > 0 {
        graph::dataflow_split(&mut q, func, true, c.min_gran).map_err(|e| e.to_string())?;
    }
    Ok(q)
}

/// Applies and estimates a point. Pass failures make the point infeasible.
pub fn evaluate(space: &Space, p: &Program, point: &Point, t: &TargetSpec) -> Result<Qor, String> {
    let q = apply(p, &space.func, &space.config(point))?;
    let r = estimate(&q, t).map_err(|e| e.to_string())?;
    Ok(Qor { latency: r.latency, interval: r.interval, dsp: r.dsp, lut: r.lut, bram_bits: r.bram_bits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Kernel;

    #[test]
    fn gemm_space_shape() {
        let p = Kernel::Gemm.program(32, ElemKind::F32);
        let s = build_space(&p, "gemm", &SpaceCaps::default()).unwrap();
        let names: Vec<&str> = s.dims.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, ["b0.perfectize", "b0.perm", "b0.tile0", "b0.tile1", "b0.tile2", "b0.ii"]);
        assert_eq!(s.perms[0].len(), 6);
        assert_eq!(s.dims[2].options, vec![1, 2, 4, 8]);
        assert_eq!(s.size(), 2 * 6 * 4 * 4 * 4 * 33);
    }

    #[test]
    fn syrk_has_rvb_toggle() {
        let p = Kernel::Syrk.program(16, ElemKind::F32);
        let s = build_space(&p, "syrk", &SpaceCaps::default()).unwrap();
        assert!(s.dims.iter().any(|d| d.kind == DimKind::Rvb { band: 0 }));
    }

    #[test]
    fn loop_free_function_has_one_point() {
        let p = crate::frontend::parse_and_raise("void f(float a[2]) { a[0] = a[1]; }").unwrap();
        let s = build_space(&p, "f", &SpaceCaps::default()).unwrap();
        assert_eq!(s.size(), 1);
    }

    #[test]
    fn evaluation_is_deterministic_and_baseline_is_plain() {
        let p = Kernel::Gemm.program(8, ElemKind::F32);
        let t = TargetSpec::edge();
        let s = build_space(&p, "gemm", &SpaceCaps::default()).unwrap();
        let base = evaluate(&s, &p, &s.baseline(), &t).unwrap();
        assert_eq!(base.latency, estimate(&p, &t).unwrap().latency);
        let pt = s.point_at(12345 % s.size());
        assert_eq!(evaluate(&s, &p, &pt, &t), evaluate(&s, &p, &pt, &t));
    }

    #[test]
    fn reference_gemm_point_is_legal() {
        // perfectized, order [1, 2, 0], tiles [8, 1, 16] at size 32 (cap 16), II 3
        let p = Kernel::Gemm.program(32, ElemKind::F32);
        let caps = SpaceCaps { tile_cap: 16, ..SpaceCaps::default() };
        let s = build_space(&p, "gemm", &caps).unwrap();
        let pick = |name: &str, v: i64| s.dims.iter().find(|d| d.name == name).unwrap().options.iter().position(|&o| o == v).unwrap();
        let perm = s.perms[0].iter().position(|q| q == &[1, 2, 0]).unwrap();
        let pt = vec![pick("b0.perfectize", 1), perm, pick("b0.tile0", 8), pick("b0.tile1", 1), pick("b0.tile2", 16), pick("b0.ii", 3)];
        let r = evaluate(&s, &p, &pt, &TargetSpec::edge()).unwrap();
        assert!(r.latency < estimate(&p, &TargetSpec::edge()).unwrap().latency / 20);
    }
}
