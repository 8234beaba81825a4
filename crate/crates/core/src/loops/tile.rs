use super::order::{rebuild_band, take_band};
use super::{for_each_band, perfect_depth};
use crate::ir::deps;
use crate::ir::*;

/// Tiles the outer `sizes.len()` loops of the perfect band. Inter-tile loops keep
/// the original order and all intra-tile loops follow them, innermost.
pub fn tile_band(root: &mut Loop, sizes: &[i64], f: &mut Function) -> Result<(), String> {
    if sizes.iter().any(|&s| s < 1) {
        return Err(format!("tile sizes {sizes:?} must be positive"));
    }
    let depth = perfect_depth(root);
    if sizes.len() > depth {
        return Err(format!("{} tile sizes given but the perfect band has depth {depth}", sizes.len()));
    }
    let n = sizes.len();
    let (headers, mut body) = take_band(root, n);
    let mut sizes = sizes.to_vec();
    for (h, t) in headers.iter().zip(sizes.iter_mut()) {
        if *t == 1 {
            continue;
        }
        let Some(trip) = h.const_trip() else {
            return Err(format!("loop `{}` is not rectangular", h.name));
        };
        *t = (*t).min(trip.max(1));
    }
    let tiled: Vec<bool> = sizes.iter().map(|&t| t > 1).collect();
    if !tiled.iter().any(|&t| t) {
        return Ok(());
    }
    // Intra-tile loops sink below every inter-tile loop, so no untiled loop may bound on a tiled variable.
    for h in headers.iter().zip(&tiled).filter(|x| !x.1).map(|x| x.0) {
        let (Some(lo), Some(hi)) = (h.lower.as_affine(), h.upper.as_affine()) else {
            return Err(format!("loop `{}` has non-affine bounds", h.name));
        };
        if let Some((o, _)) = headers.iter().zip(&tiled).find(|(o, &t)| t && (lo.uses_var(o.var) || hi.uses_var(o.var))) {
            return Err(format!("loop `{}` is bounded by tiled loop `{}`", h.name, o.name));
        }
    }
    let patterns = deps::band_directions(root, n).map_err(|e| e.to_string())?;
    if !deps::tiling_legal(&patterns, &tiled) {
        return Err(format!("tiling {sizes:?} violates a dependence"));
    }
    let mut inters = vec![];
    let mut intras = vec![];
    let mut guards = vec![];
    for (h, &t) in headers.into_iter().zip(sizes.iter()) {
        if t == 1 {
            inters.push(h);
            continue;
        }
        let (lo, hi) = h.const_bounds().unwrap();
        let span = h.step * t;
        let it = f.fresh_var();
        if (hi - lo) % span != 0 {
            guards.push(Constraint::ge(AffineExpr::cst(hi - 1) - AffineExpr::var(h.var)));
        }
        inters.push(Loop {
            var: it,
            name: h.name.clone(),
            lower: h.lower.clone(),
            upper: h.upper.clone(),
            step: span,
            body: vec![],
            directive: None,
            tag: LoopTag::TileInter,
        });
        intras.push(Loop {
            var: h.var,
            name: format!("{}{}", h.name, h.name),
            lower: IndexExpr::Affine(AffineExpr::var(it)),
            upper: IndexExpr::Affine(AffineExpr::var(it) + span),
            step: h.step,
            body: vec![],
            directive: None,
            tag: LoopTag::TileIntra,
        });
    }
    if !guards.is_empty() {
        body = vec![Stmt::If(IfStmt { conds: guards, then_body: body, else_body: vec![] })];
    }
    inters.extend(intras);
    *root = rebuild_band(inters, body);
    Ok(())
}

pub fn tile(f: &mut Function, sizes: &[i64]) -> Vec<String> {
    for_each_band(f, &mut |l, f| tile_band(l, sizes, f).err().into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Kernel;
    use crate::loops::{band, perfectize, remove_variable_bound};

    #[test]
    fn triangular_band_needs_rvb_first() {
        let mut p = Kernel::Syr2k.program(8, ElemKind::I32);
        let f = p.top_function_mut();
        perfectize(f);
        let before = f.clone();
        assert_eq!(tile(f, &[4, 1, 2]), vec!["loop `j` is bounded by tiled loop `i`".to_string()]);
        assert_eq!(*f, before);
        assert!(tile(f, &[1, 1, 2]).is_empty());
    }

    #[test]
    fn syrk_i_by_two_intra_innermost() {
        let mut p = Kernel::Syrk.program(8, ElemKind::I32);
        let f = p.top_function_mut();
        remove_variable_bound(f);
        perfectize(f);
        assert!(tile(f, &[2, 1, 1]).is_empty());
        let Stmt::Loop(l) = &f.body[0] else { panic!() };
        let b = band(l);
        assert_eq!(b.len(), 4);
        assert_eq!(b[3].tag, LoopTag::TileIntra);
        assert_eq!(b[3].name, "ii");
        assert_eq!(b[0].step, 2);
    }

    #[test]
    fn unit_sizes_unchanged() {
        let mut p = Kernel::Gemm.program(8, ElemKind::I32);
        let f = p.top_function_mut();
        perfectize(f);
        let before = f.clone();
        assert!(tile(f, &[1, 1, 1]).is_empty());
        assert_eq!(*f, before);
    }
}
