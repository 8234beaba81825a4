use crate::ir::*;
use crate::loops::unroll::unroll_all;

enum Found {
    No,
    /// Found below; the flag says whether the loop just visited may still be flattened.
    Yes(bool),
}

fn go(block: &mut [Stmt], var: u32, ii: u32, f: &mut Function) -> Result<Found, String> {
    for s in block.iter_mut() {
        match s {
            Stmt::Loop(l) if l.var == var => {
                if !l.is_affine() {
                    return Err(format!("loop `{}` is not affine", l.name));
                }
                if l.is_flattened() {
                    return Err(format!("loop `{}` is already flattened into an inner pipeline", l.name));
                }
                l.body = unroll_all(&l.body, f).map_err(|e| format!("cannot pipeline loop `{}`: {e}", l.name))?;
                l.directive = Some(LoopDirective { pipeline: true, target_ii: ii, flatten: false });
                return Ok(Found::Yes(true));
            }
            Stmt::Loop(l) => {
                if let Found::Yes(chain) = go(&mut l.body, var, ii, f)? {
                    let chain = chain && l.is_perfect_parent();
                    if chain {
                        let d = l.directive.get_or_insert_with(LoopDirective::default);
                        d.flatten = true;
                    }
                    return Ok(Found::Yes(chain));
                }
            }
            Stmt::If(i) => {
                if let Found::Yes(_) = go(&mut i.then_body, var, ii, f)? {
                    return Ok(Found::Yes(false));
                }
                if let Found::Yes(_) = go(&mut i.else_body, var, ii, f)? {
                    return Ok(Found::Yes(false));
                }
            }
            _ => {}
        }
    }
    Ok(Found::No)
}

/// Pipelines the loop with variable `var`: nested loops are fully unrolled and
/// perfectly nesting outer loops are marked for flattening.
pub fn pipeline_loop(f: &mut Function, var: u32, target_ii: u32) -> Result<(), String> {
    if target_ii == 0 {
        return Err("target II must be positive".into());
    }
    let mut work = f.clone();
    let mut body = std::mem::take(&mut work.body);
    match go(&mut body, var, target_ii, &mut work)? {
        Found::No => Err(format!("no loop with variable {var}")),
        Found::Yes(_) => {
            work.body = body;
            *f = work;
            Ok(())
        }
    }
}

/// Variable of the loop pipelined by default in the band rooted at `l`: the
/// deepest loop that is not an intra-tile loop.
pub fn default_target(l: &Loop) -> u32 {
    let band = crate::loops::band(l);
    band.iter().rev().find(|x| x.tag != LoopTag::TileIntra).unwrap_or(&band[0]).var
}

/// Pipelines the default target of every band, or the loop at `level` when given.
pub fn pipeline_bands(f: &mut Function, target_ii: u32, level: Option<usize>) -> Vec<String> {
    let targets: Vec<u32> = f
        .body
        .iter()
        .filter_map(|s| s.as_loop())
        .map(|l| match level {
            Some(k) => {
                let b = crate::loops::band(l);
                b[k.min(b.len() - 1)].var
            }
            None => default_target(l),
        })
        .collect();
    targets.into_iter().filter_map(|v| pipeline_loop(f, v, target_ii).err()).collect()
}

/// Fully unrolls the function body and marks the function pipelined.
pub fn pipeline_func(f: &mut Function, target_ii: u32) -> Result<(), String> {
    if target_ii == 0 {
        return Err("target II must be positive".into());
    }
    if f.directive.dataflow {
        return Err(format!("function `{}` is a dataflow region", f.name));
    }
    let body = std::mem::take(&mut f.body);
    match unroll_all(&body, f) {
        Ok(b) => {
            f.body = b;
            f.directive.pipeline = true;
            f.directive.target_ii = target_ii;
            Ok(())
        }
        Err(e) => {
            f.body = body;
            Err(format!("cannot pipeline function `{}`: {e}", f.name))
        }
    }
}
