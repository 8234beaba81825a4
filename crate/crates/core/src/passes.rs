//! Named passes and ordered pass pipelines, as driven from the command line.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::directive;
use crate::dse::{optimize, ExploreOptions, SpaceCaps};
use crate::graph;
use crate::ir::{Function, Program};
use crate::loops;
use crate::qor::TargetSpec;

/// Flag name, parameters, summary.
pub const CATALOG: &[(&str, &str, &str)] = &[
    ("-legalize-dataflow", "insert-copy=<bool>", "check the top function's dataflow graph and choose the copy mode"),
    ("-split-function", "min-gran=<n>", "split the top function into dataflow stages"),
    ("-affine-loop-perfectization", "", "sink statements into the innermost loop of each band"),
    ("-remove-variable-bound", "", "replace variable loop bounds by constant bounds and guards"),
    ("-affine-loop-order-opt", "perm-map=<i,j,..>", "permute each perfect band (automatic when no map is given)"),
    ("-affine-loop-tile", "tile-sizes=<t0,t1,..>", "tile each perfect band"),
    ("-affine-loop-unroll", "unroll-factor=<n>", "unroll the innermost loop of each band"),
    ("-loop-pipelining", "target-ii=<n> [pipeline-level=<k>]", "pipeline one loop of each band"),
    ("-func-pipelining", "target-ii=<n>", "fully unroll and pipeline the top function"),
    ("-array-partition", "[part-factors=<A:f0:f1,B:f0>]", "partition arrays accessed in pipelined regions"),
    ("-simplify-affine-if", "", "drop always-true conditions and dead branches"),
    ("-affine-store-forward", "", "forward stored values to later loads"),
    ("-simplify-memref-access", "", "remove redundant loads and overwritten stores"),
    ("-canonicalize", "", "fold constants and remove dead code"),
    ("-dse", "[budget=<n>] [seed=<n>]", "explore the design space and apply the best point"),
];

#[derive(Clone, Debug, PartialEq)]
pub enum Pass {
    LegalizeDataflow { insert_copy: bool },
    SplitFunction { min_gran: usize },
    Perfectize,
    RemoveVariableBound,
    OrderOpt { perm: Option<Vec<usize>> },
    Tile { sizes: Vec<i64> },
    Unroll { factor: i64 },
    LoopPipelining { target_ii: u32, level: Option<usize> },
    FuncPipelining { target_ii: u32 },
    ArrayPartition { factors: BTreeMap<String, Vec<i64>> },
    SimplifyAffineIf,
    StoreForward,
    SimplifyMemrefAccess,
    Canonicalize,
    Dse { budget: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PassError {
    #[error("unknown pass `{0}`")]
    Unknown(String),
    #[error("`{flag}`: bad parameter `{param}`: {msg}")]
    Param { flag: String, param: String, msg: String },
    #[error("`{0}` is missing a required parameter")]
    Missing(String),
}

/// Usage lines listing every pass.
pub fn catalog_text() -> String {
    CATALOG.iter().map(|(f, p, d)| format!("  {f:<30} {p:<36} {d}\n")).collect()
}

fn list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

fn factors(s: &str) -> Option<BTreeMap<String, Vec<i64>>> {
    s.split(',')
        .map(|item| {
            let mut it = item.split(':');
            let name = it.next()?.to_string();
            let fs: Option<Vec<i64>> = it.map(|x| x.parse().ok().filter(|f| *f >= 1)).collect();
            Some((name, fs.filter(|v| !v.is_empty())?))
        })
        .collect()
}

impl Pass {
    fn build(flag: &str, params: &[(String, String)]) -> Result<Pass, PassError> {
        let get = |k: &str| params.iter().find(|(n, _)| n == k).map(|(_, v)| v.as_str());
        let bad = |k: &str, msg: &str| PassError::Param { flag: flag.into(), param: k.into(), msg: msg.into() };
        let allowed: Vec<&str> = CATALOG
            .iter()
            .find(|c| c.0 == flag)
            .ok_or_else(|| PassError::Unknown(flag.into()))?
            .1
            .split_whitespace()
            .map(|p| p.trim_matches(|c| c == '[' || c == ']').split('=').next().unwrap())
            .collect();
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(bad(k, "not a parameter of this pass"));
        }
        let num = |k: &str, default: Option<u64>| -> Result<u64, PassError> {
            match get(k) {
                Some(v) => v.parse().map_err(|_| bad(k, "expected a non-negative integer")),
                None => default.ok_or_else(|| PassError::Missing(flag.into())),
            }
        };
        Ok(match flag {
            "-legalize-dataflow" => Pass::LegalizeDataflow {
                insert_copy: match get("insert-copy").unwrap_or("false") {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(bad("insert-copy", "expected true or false")),
                },
            },
            "-split-function" => Pass::SplitFunction { min_gran: num("min-gran", Some(1))? as usize },
            "-affine-loop-perfectization" => Pass::Perfectize,
            "-remove-variable-bound" => Pass::RemoveVariableBound,
            "-affine-loop-order-opt" => Pass::OrderOpt {
                perm: get("perm-map").map(|v| list(v).ok_or_else(|| bad("perm-map", "expected a comma-separated list"))).transpose()?,
            },
            "-affine-loop-tile" => Pass::Tile {
                sizes: list(get("tile-sizes").ok_or_else(|| PassError::Missing(flag.into()))?)
                    .ok_or_else(|| bad("tile-sizes", "expected a comma-separated list"))?,
            },
            "-affine-loop-unroll" => Pass::Unroll { factor: num("unroll-factor", None)? as i64 },
            "-loop-pipelining" => Pass::LoopPipelining {
                target_ii: num("target-ii", Some(1))? as u32,
                level: get("pipeline-level").map(|_| num("pipeline-level", None).map(|v| v as usize)).transpose()?,
            },
            "-func-pipelining" => Pass::FuncPipelining { target_ii: num("target-ii", Some(1))? as u32 },
            "-array-partition" => Pass::ArrayPartition {
                factors: match get("part-factors") {
                    Some(v) => factors(v).ok_or_else(|| bad("part-factors", "expected NAME:f0:f1,..."))?,
                    None => BTreeMap::new(),
                },
            },
            "-simplify-affine-if" => Pass::SimplifyAffineIf,
            "-affine-store-forward" => Pass::StoreForward,
            "-simplify-memref-access" => Pass::SimplifyMemrefAccess,
            "-canonicalize" => Pass::Canonicalize,
            "-dse" => Pass::Dse { budget: num("budget", Some(128))? as usize, seed: num("seed", Some(0))? },
            _ => unreachable!(),
        })
    }
}

impl fmt::Display for Pass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Pass::LegalizeDataflow { .. } => "-legalize-dataflow",
            Pass::SplitFunction { .. } => "-split-function",
            Pass::Perfectize => "-affine-loop-perfectization",
            Pass::RemoveVariableBound => "-remove-variable-bound",
            Pass::OrderOpt { .. } => "-affine-loop-order-opt",
            Pass::Tile { .. } => "-affine-loop-tile",
            Pass::Unroll { .. } => "-affine-loop-unroll",
            Pass::LoopPipelining { .. } => "-loop-pipelining",
            Pass::FuncPipelining { .. } => "-func-pipelining",
            Pass::ArrayPartition { .. } => "-array-partition",
            Pass::SimplifyAffineIf => "-simplify-affine-if",
            Pass::StoreForward => "-affine-store-forward",
            Pass::SimplifyMemrefAccess => "-simplify-memref-access",
            Pass::Canonicalize => "-canonicalize",
            Pass::Dse { .. } => "-dse",
        };
        f.write_str(name)
    }
}

/// Splits arguments into passes. A `key=value` argument belongs to the flag before it;
/// anything else that does not start with `-` is returned as a positional argument.
pub fn parse_pipeline(args: &[String]) -> Result<(Vec<Pass>, Vec<String>), PassError> {
    let mut passes = vec![];
    let mut positional = vec![];
    let mut cur: Option<(String, Vec<(String, String)>)> = None;
    for a in args {
        if a.starts_with('-') && a.len() > 1 {
            if let Some((f, ps)) = cur.take() {
                passes.push(Pass::build(&f, &ps)?);
            }
            cur = Some((a.clone(), vec![]));
        } else if let (Some((_, ps)), Some((k, v))) = (cur.as_mut(), a.split_once('=')) {
            ps.push((k.to_string(), v.to_string()));
        } else {
            positional.push(a.clone());
        }
    }
    if let Some((f, ps)) = cur {
        passes.push(Pass::build(&f, &ps)?);
    }
    Ok((passes, positional))
}

fn each_function(p: &mut Program, mut pass: impl FnMut(&mut Function) -> Vec<String>) -> Vec<String> {
    p.functions.iter_mut().flat_map(|f| pass(f).into_iter().map(|d| format!("@{}: {d}", f.name)).collect::<Vec<_>>()).collect()
}

/// Runs `passes` in order. Returns diagnostics prefixed by the pass that raised them.
/// A pass that cannot transform a band leaves that band unchanged and carries on.
pub fn run_pipeline(p: &mut Program, passes: &[Pass], target: &TargetSpec) -> Vec<String> {
    let mut insert_copy = false;
    let mut diags = vec![];
    for pass in passes {
        let top = p.top.clone();
        let ds: Vec<String> = match pass {
            Pass::Perfectize => each_function(p, loops::perfectize),
            Pass::RemoveVariableBound => each_function(p, loops::remove_variable_bound),
            Pass::OrderOpt { perm } => each_function(p, |f| loops::order_opt(f, perm.as_deref())),
            Pass::Tile { sizes } => each_function(p, |f| loops::tile(f, sizes)),
            Pass::Unroll { factor } => each_function(p, |f| loops::unroll_innermost(f, *factor)),
            Pass::LoopPipelining { target_ii, level } => each_function(p, |f| directive::pipeline_bands(f, *target_ii, *level)),
            Pass::FuncPipelining { target_ii } => directive::pipeline_func(p.top_function_mut(), *target_ii).err().into_iter().collect(),
            Pass::ArrayPartition { factors } => {
                directive::array_partition(p, factors);
                vec![]
            }
            Pass::SimplifyAffineIf => each_function(p, |f| {
                directive::simplify_affine_if(f);
                vec![]
            }),
            Pass::StoreForward => each_function(p, |f| {
                directive::store_forward(f);
                vec![]
            }),
            Pass::SimplifyMemrefAccess => each_function(p, |f| {
                directive::simplify_memref_access(f);
                vec![]
            }),
            Pass::Canonicalize => each_function(p, |f| {
                directive::canonicalize(f);
                vec![]
            }),
            Pass::LegalizeDataflow { insert_copy: c } => {
                insert_copy = *c;
                graph::extract_dataflow(p.top_function(), Some(p))
                    .and_then(|g| graph::legalize_dataflow(&g, *c))
                    .err()
                    .map(|e| e.to_string())
                    .into_iter()
                    .collect()
            }
            Pass::SplitFunction { min_gran } => {
                graph::dataflow_split(p, &top, insert_copy, *min_gran).err().map(|e| e.to_string()).into_iter().collect()
            }
            Pass::Dse { budget, seed } => {
                let opts = ExploreOptions { budget: *budget, seed: *seed, ..Default::default() };
                match optimize(p, &SpaceCaps::default(), &opts, target) {
                    Ok((_, _, q)) => {
                        *p = q;
                        vec![]
                    }
                    Err(e) => vec![e.to_string()],
                }
            }
        };
        diags.extend(ds.into_iter().map(|d| format!("{pass}: {d}")));
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn flags_take_following_parameters() {
        let (ps, rest) =
            parse_pipeline(&args("-affine-loop-perfectization -affine-loop-order-opt -loop-pipelining target-ii=3 syrk.c")).unwrap();
        assert_eq!(ps, vec![Pass::Perfectize, Pass::OrderOpt { perm: None }, Pass::LoopPipelining { target_ii: 3, level: None }]);
        assert_eq!(rest, vec!["syrk.c"]);
        let (ps, _) = parse_pipeline(&args("-affine-loop-tile tile-sizes=8,1,16 -array-partition part-factors=C:2:1,A:4")).unwrap();
        assert_eq!(ps[0], Pass::Tile { sizes: vec![8, 1, 16] });
        let Pass::ArrayPartition { factors } = &ps[1] else { panic!() };
        assert_eq!(factors["C"], vec![2, 1]);
        assert_eq!(factors["A"], vec![4]);
    }

    #[test]
    fn bad_flags_are_rejected() {
        assert_eq!(parse_pipeline(&args("-loop-unrolling")).unwrap_err(), PassError::Unknown("-loop-unrolling".into()));
        assert!(matches!(parse_pipeline(&args("-affine-loop-tile")), Err(PassError::Missing(_))));
        assert!(matches!(parse_pipeline(&args("-canonicalize target-ii=2")), Err(PassError::Param { .. })));
        assert!(matches!(parse_pipeline(&args("-loop-pipelining target-ii=x")), Err(PassError::Param { .. })));
    }

    #[test]
    fn every_catalog_entry_parses() {
        for (flag, params, _) in CATALOG {
            let mut a = vec![flag.to_string()];
            for p in params.split_whitespace().filter(|p| !p.starts_with('[')) {
                let key = p.split('=').next().unwrap();
                a.push(format!("{key}=1"));
            }
            let (ps, _) = parse_pipeline(&a).unwrap();
            assert_eq!(ps[0].to_string(), *flag);
        }
    }
}
