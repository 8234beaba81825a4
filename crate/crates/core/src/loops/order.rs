use super::{band_loop, for_each_band, perfect_depth};
use crate::ir::deps::{self, Dist};
use crate::ir::*;

/// Detaches the perfect band of `depth` loops into headers (outermost first)
/// and the innermost body.
pub(crate) fn take_band(root: &Loop, depth: usize) -> (Vec<Loop>, Vec<Stmt>) {
    let mut headers = vec![];
    for k in 0..depth {
        let mut h = band_loop(root, k).clone();
        h.body.clear();
        headers.push(h);
    }
    let body = band_loop(root, depth - 1).body.clone();
    (headers, body)
}

pub(crate) fn rebuild_band(headers: Vec<Loop>, body: Vec<Stmt>) -> Loop {
    let mut body = body;
    let mut it = headers.into_iter().rev();
    let mut cur = it.next().expect("non-empty band");
    cur.body = body;
    for mut h in it {
        body = vec![Stmt::Loop(cur)];
        h.body = body;
        cur = h;
    }
    cur
}

/// Ordering that moves loops carrying dependences outward, larger distances first.
pub fn auto_permutation(root: &Loop, depth: usize) -> Result<Vec<usize>, String> {
    let dvs = deps::analyze_dependences(root).map_err(|e| e.to_string())?;
    let mut score = vec![(false, 0i64); depth];
    for d in &dvs {
        if let Some(k) = d.carrier() {
            if k < depth {
                let dist = match d.distance[k] {
                    Dist::Const(c) => c.abs(),
                    Dist::Unknown => 1,
                };
                score[k].0 = true;
                score[k].1 = score[k].1.max(dist);
            }
        }
    }
    let mut order: Vec<usize> = (0..depth).collect();
    order.sort_by(|&a, &b| score[b].cmp(&score[a]).then(a.cmp(&b)));
    let mut perm = vec![0; depth];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    Ok(perm)
}

/// Permutes the outer `perm.len()` loops of the band; `perm[i]` is the new position of loop `i`.
pub fn order_opt_band(root: &mut Loop, perm: Option<&[usize]>) -> Result<(), String> {
    let depth = perfect_depth(root);
    let perm = match perm {
        Some(p) => {
            let mut sorted = p.to_vec();
            sorted.sort_unstable();
            if sorted != (0..p.len()).collect::<Vec<_>>() {
                return Err(format!("perm-map {p:?} is not a permutation"));
            }
            if p.len() > depth {
                return Err(format!("perm-map has {} entries but the perfect band has depth {depth}", p.len()));
            }
            p.to_vec()
        }
        None => auto_permutation(root, depth)?,
    };
    let n = perm.len();
    if perm.iter().enumerate().all(|(i, &p)| i == p) {
        return Ok(());
    }
    let (headers, body) = take_band(root, n);
    if headers.iter().any(|h| !h.is_affine()) {
        return Err("band has non-affine bounds".into());
    }
    for (i, h) in headers.iter().enumerate() {
        for (j, g) in headers.iter().enumerate() {
            let uses = h.lower.as_affine().unwrap().uses_var(g.var) || h.upper.as_affine().unwrap().uses_var(g.var);
            if uses && perm[j] > perm[i] {
                return Err(format!("bounds of loop `{}` depend on loop `{}`", h.name, g.name));
            }
        }
    }
    let patterns = deps::band_directions(root, n).map_err(|e| e.to_string())?;
    if !deps::permutation_legal(&patterns, &perm) {
        return Err(format!("permutation {perm:?} violates a dependence"));
    }
    let mut slots: Vec<Option<Loop>> = vec![None; n];
    for (i, h) in headers.into_iter().enumerate() {
        slots[perm[i]] = Some(h);
    }
    *root = rebuild_band(slots.into_iter().map(Option::unwrap).collect(), body);
    Ok(())
}

pub fn order_opt(f: &mut Function, perm: Option<&[usize]>) -> Vec<String> {
    for_each_band(f, &mut |l, _| order_opt_band(l, perm).err().into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Kernel;
    use crate::loops::{band, perfectize};

    fn names(f: &Function) -> Vec<String> {
        let Stmt::Loop(l) = &f.body[0] else { panic!() };
        band(l).iter().map(|l| l.name.clone()).collect()
    }

    #[test]
    fn gemm_perm_map() {
        let mut p = Kernel::Gemm.program(8, ElemKind::I32);
        let f = p.top_function_mut();
        perfectize(f);
        assert!(order_opt(f, Some(&[1, 2, 0])).is_empty());
        assert_eq!(names(f), ["k", "i", "j"]);
    }

    #[test]
    fn syrk_auto_moves_k_out() {
        let mut p = Kernel::Syrk.program(8, ElemKind::I32);
        let f = p.top_function_mut();
        perfectize(f);
        assert!(order_opt(f, None).is_empty());
        assert_eq!(names(f), ["k", "i", "j"]);
    }

    #[test]
    fn identity_and_bad_maps() {
        let mut p = Kernel::Gemm.program(8, ElemKind::I32);
        let f = p.top_function_mut();
        perfectize(f);
        let before = f.clone();
        assert!(order_opt(f, Some(&[0, 1, 2])).is_empty());
        assert_eq!(*f, before);
        assert_eq!(order_opt(f, Some(&[0, 0, 2])).len(), 1);
        assert_eq!(*f, before);
    }
}
