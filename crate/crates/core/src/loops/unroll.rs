use crate::ir::*;

/// Unrolls `l` by `factor`. Returns the replacement statements: the unrolled
/// main loop (or its fully expanded body) followed by any remainder iterations.
pub fn unroll_loop(l: &Loop, factor: i64, f: &mut Function) -> Result<Vec<Stmt>, String> {
    if factor < 1 {
        return Err(format!("unroll factor {factor} must be positive"));
    }
    if factor == 1 {
        return Ok(vec![Stmt::Loop(l.clone())]);
    }
    let Some(trip) = super::trip_of(l) else {
        return Err(format!("loop `{}` has no constant trip count", l.name));
    };
    let lo = l.lower.as_affine().unwrap().clone();
    let copy = |f: &mut Function, at: AffineExpr| {
        let mut b = util::clone_fresh(&l.body, &mut f.next_value, &mut f.next_var);
        util::replace_var(&mut b, l.var, &at);
        b
    };
    let mut out = vec![];
    if factor >= trip {
        for k in 0..trip {
            out.extend(copy(f, (lo.clone() + k * l.step).simplify()));
        }
        return Ok(out);
    }
    let main = trip / factor;
    let mut body = vec![];
    for k in 0..factor {
        body.extend(copy(f, AffineExpr::var(l.var) + k * l.step));
    }
    let main_hi = (lo.clone() + main * factor * l.step).simplify();
    if main == 1 {
        let mut b = body;
        util::replace_var(&mut b, l.var, &lo);
        out.extend(b);
    } else {
        out.push(Stmt::Loop(Loop {
            var: l.var,
            name: l.name.clone(),
            lower: l.lower.clone(),
            upper: IndexExpr::Affine(main_hi),
            step: l.step * factor,
            body,
            directive: l.directive,
            tag: l.tag,
        }));
    }
    for k in main * factor..trip {
        out.extend(copy(f, (lo.clone() + k * l.step).simplify()));
    }
    Ok(out)
}

fn full_unroll_block(block: Vec<Stmt>, f: &mut Function) -> Result<Vec<Stmt>, String> {
    let mut out = vec![];
    for s in block {
        match s {
            Stmt::Loop(mut l) => {
                l.body = full_unroll_block(l.body, f)?;
                let trip = super::trip_of(&l).ok_or_else(|| format!("loop `{}` has no constant trip count", l.name))?;
                out.extend(unroll_loop(&l, trip.max(1), f)?);
            }
            Stmt::If(mut i) => {
                i.then_body = full_unroll_block(i.then_body, f)?;
                i.else_body = full_unroll_block(i.else_body, f)?;
                out.push(Stmt::If(i));
            }
            s => out.push(s),
        }
    }
    Ok(out)
}

/// Fully unrolls every loop nested in `block`.
pub fn unroll_all(block: &[Stmt], f: &mut Function) -> Result<Vec<Stmt>, String> {
    full_unroll_block(block.to_vec(), f)
}

/// Unrolls the innermost loop of each band of `f` by `factor`.
pub fn unroll_innermost(f: &mut Function, factor: i64) -> Vec<String> {
    fn go(block: &mut Vec<Stmt>, factor: i64, f: &mut Function, diags: &mut Vec<String>) {
        let mut out = vec![];
        for s in std::mem::take(block) {
            match s {
                Stmt::Loop(mut l) if util::contains_loop(&l.body) => {
                    go(&mut l.body, factor, f, diags);
                    out.push(Stmt::Loop(l));
                }
                Stmt::Loop(l) => match unroll_loop(&l, factor, f) {
                    Ok(v) => out.extend(v),
                    Err(e) => {
                        diags.push(e);
                        out.push(Stmt::Loop(l));
                    }
                },
                Stmt::If(mut i) => {
                    go(&mut i.then_body, factor, f, diags);
                    go(&mut i.else_body, factor, f, diags);
                    out.push(Stmt::If(i));
                }
                s => out.push(s),
            }
        }
        *block = out;
    }
    let mut body = std::mem::take(&mut f.body);
    let mut diags = vec![];
    go(&mut body, factor, f, &mut diags);
    f.body = body;
    diags
}
