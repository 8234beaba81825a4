//! Affine expressions and maps.
//!
//! An [`AffineExpr`] is an integer function built from constants, variables,
//! addition, multiplication by a constant, and floor-division / modulo by a
//! positive constant. Variables are plain indices: inside an [`AffineMap`] they
//! are the map's positional inputs, inside the IR they name loop induction
//! variables.
//!
//! Every constructor returns a canonical (simplified) expression, so structural
//! equality is a reasonably strong proxy for semantic equality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AffineError {
    #[error("map arity mismatch: outer map takes {expected} inputs but inner map yields {got} results")]
    ArityMismatch { expected: usize, got: usize },
    #[error("expression references input d{index} but the map only has {num_inputs} inputs")]
    InputOutOfRange { index: u32, num_inputs: usize },
    #[error("expected {expected} input values, got {got}")]
    WrongInputCount { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AffineExpr {
    Const(i64),
    Var(u32),
    Add(Box<AffineExpr>, Box<AffineExpr>),
    /// Multiplication by a constant; the affine restriction forbids var * var.
    Mul(Box<AffineExpr>, i64),
    /// Floor division by a strictly positive constant.
    FloorDiv(Box<AffineExpr>, i64),
    /// Euclidean modulo by a strictly positive constant (result in `[0, c)`).
    Mod(Box<AffineExpr>, i64),
}

/// Non-constant atom of a canonical sum.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Atom {
    Var(u32),
    FloorDiv(AffineExpr, i64),
    Mod(AffineExpr, i64),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Sum {
    terms: BTreeMap<Atom, i64>,
    constant: i64,
}

impl Sum {
    fn constant(c: i64) -> Self {
        Sum { terms: BTreeMap::new(), constant: c }
    }

    fn atom(a: Atom) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(a, 1);
        Sum { terms, constant: 0 }
    }

    fn add(mut self, other: Sum) -> Sum {
        self.constant += other.constant;
        for (a, c) in other.terms {
            *self.terms.entry(a).or_insert(0) += c;
        }
        self.terms.retain(|_, c| *c != 0);
        self
    }

    fn scale(mut self, k: i64) -> Sum {
        if k == 0 {
            return Sum::constant(0);
        }
        self.constant *= k;
        for c in self.terms.values_mut() {
            *c *= k;
        }
        self
    }

    fn as_const(&self) -> Option<i64> {
        self.terms.is_empty().then_some(self.constant)
    }

    fn gcd_all(&self) -> i64 {
        self.terms
            .values()
            .fold(self.constant.abs(), |g, c| gcd(g, c.abs()))
    }

    fn into_expr(self) -> AffineExpr {
        let mut acc: Option<AffineExpr> = None;
        for (atom, coeff) in self.terms {
            let base = match atom {
                Atom::Var(v) => AffineExpr::Var(v),
                Atom::FloorDiv(e, c) => AffineExpr::FloorDiv(Box::new(e), c),
                Atom::Mod(e, c) => AffineExpr::Mod(Box::new(e), c),
            };
            let term = if coeff == 1 { base } else { AffineExpr::Mul(Box::new(base), coeff) };
            acc = Some(match acc {
                None => term,
                Some(prev) => AffineExpr::Add(Box::new(prev), Box::new(term)),
            });
        }
        match acc {
            None => AffineExpr::Const(self.constant),
            Some(e) if self.constant == 0 => e,
            Some(e) => AffineExpr::Add(Box::new(e), Box::new(AffineExpr::Const(self.constant))),
        }
    }
}

pub(crate) fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn to_sum(e: &AffineExpr) -> Sum {
    match e {
        AffineExpr::Const(c) => Sum::constant(*c),
        AffineExpr::Var(v) => Sum::atom(Atom::Var(*v)),
        AffineExpr::Add(a, b) => to_sum(a).add(to_sum(b)),
        AffineExpr::Mul(a, k) => to_sum(a).scale(*k),
        AffineExpr::FloorDiv(a, c) => floordiv_sum(to_sum(a), *c),
        AffineExpr::Mod(a, c) => mod_sum(to_sum(a), *c),
    }
}

fn floordiv_sum(s: Sum, c: i64) -> Sum {
    assert!(c > 0, "floordiv by non-positive constant {c}");
    if c == 1 {
        return s;
    }
    if let Some(k) = s.as_const() {
        return Sum::constant(k.div_euclid(c));
    }
    // Pull out the part that divides exactly: (c*q + r) floordiv c = q + r floordiv c.
    let mut exact = Sum::default();
    let mut rest = Sum::default();
    for (a, coeff) in s.terms {
        if coeff % c == 0 {
            exact.terms.insert(a, coeff / c);
        } else {
            rest.terms.insert(a, coeff);
        }
    }
    exact.constant = s.constant.div_euclid(c);
    rest.constant = s.constant.rem_euclid(c);
    if rest.terms.is_empty() {
        return exact;
    }
    // Normalise by the common factor of what is left.
    let g = gcd(rest.gcd_all(), c);
    let (rest, c) = if g > 1 {
        (Sum {
            terms: rest.terms.into_iter().map(|(a, k)| (a, k / g)).collect(),
            constant: rest.constant / g,
        }, c / g)
    } else {
        (rest, c)
    };
    if c == 1 {
        return exact.add(rest);
    }
    exact.add(Sum::atom(Atom::FloorDiv(rest.into_expr(), c)))
}

fn mod_sum(s: Sum, c: i64) -> Sum {
    assert!(c > 0, "mod by non-positive constant {c}");
    if c == 1 {
        return Sum::constant(0);
    }
    let mut reduced = Sum::constant(s.constant.rem_euclid(c));
    for (a, coeff) in s.terms {
        // (x mod c) mod c == x mod c
        let coeff = coeff.rem_euclid(c);
        if coeff == 0 {
            continue;
        }
        let a = match a {
            Atom::Mod(inner, c2) if c2 == c => {
                let inner_sum = to_sum(&inner);
                reduced = reduced.add(inner_sum.scale(coeff));
                continue;
            }
            other => other,
        };
        reduced.terms.insert(a, coeff);
    }
    reduced.terms.retain(|_, k| *k != 0);
    if let Some(k) = reduced.as_const() {
        return Sum::constant(k.rem_euclid(c));
    }
    // Reapply the reduction once more in case the merge above introduced multiples of c.
    let again: Sum = Sum {
        constant: reduced.constant.rem_euclid(c),
        terms: reduced
            .terms
            .into_iter()
            .map(|(a, k)| (a, k.rem_euclid(c)))
            .filter(|(_, k)| *k != 0)
            .collect(),
    };
    if let Some(k) = again.as_const() {
        return Sum::constant(k.rem_euclid(c));
    }
    Sum::atom(Atom::Mod(again.into_expr(), c))
}

/// Purely linear view of an expression: `sum(coeff * var) + constant`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LinearForm {
    pub coeffs: BTreeMap<u32, i64>,
    pub constant: i64,
}

impl LinearForm {
    pub fn coeff(&self, v: u32) -> i64 {
        self.coeffs.get(&v).copied().unwrap_or(0)
    }

    pub fn to_expr(&self) -> AffineExpr {
        let mut e = AffineExpr::Const(self.constant);
        for (&v, &c) in &self.coeffs {
            e = e + AffineExpr::Var(v) * c;
        }
        e
    }
}

impl AffineExpr {
    pub fn cst(c: i64) -> Self {
        AffineExpr::Const(c)
    }

    pub fn var(v: u32) -> Self {
        AffineExpr::Var(v)
    }

    /// Canonical form of this expression.
    pub fn simplify(&self) -> AffineExpr {
        to_sum(self).into_expr()
    }

    /// Canonical symbolic part and constant offset. Two expressions differ by a
    /// constant exactly when their symbolic parts are equal.
    pub fn split_offset(&self) -> (AffineExpr, i64) {
        let mut s = to_sum(self);
        let c = std::mem::take(&mut s.constant);
        (s.into_expr(), c)
    }

    pub fn floordiv(self, c: i64) -> AffineExpr {
        assert!(c > 0, "floordiv by non-positive constant {c}");
        floordiv_sum(to_sum(&self), c).into_expr()
    }

    pub fn modulo(self, c: i64) -> AffineExpr {
        assert!(c > 0, "mod by non-positive constant {c}");
        mod_sum(to_sum(&self), c).into_expr()
    }

    pub fn as_const(&self) -> Option<i64> {
        match self {
            AffineExpr::Const(c) => Some(*c),
            _ => to_sum(self).as_const(),
        }
    }

    pub fn as_linear(&self) -> Option<LinearForm> {
        let s = to_sum(self);
        let mut coeffs = BTreeMap::new();
        for (a, c) in s.terms {
            match a {
                Atom::Var(v) => {
                    coeffs.insert(v, c);
                }
                _ => return None,
            }
        }
        Some(LinearForm { coeffs, constant: s.constant })
    }

    pub fn is_linear(&self) -> bool {
        self.as_linear().is_some()
    }

    pub fn eval(&self, vars: &dyn Fn(u32) -> i64) -> i64 {
        match self {
            AffineExpr::Const(c) => *c,
            AffineExpr::Var(v) => vars(*v),
            AffineExpr::Add(a, b) => a.eval(vars) + b.eval(vars),
            AffineExpr::Mul(a, k) => a.eval(vars) * k,
            AffineExpr::FloorDiv(a, c) => a.eval(vars).div_euclid(*c),
            AffineExpr::Mod(a, c) => a.eval(vars).rem_euclid(*c),
        }
    }

    pub fn vars(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<u32>) {
        match self {
            AffineExpr::Const(_) => {}
            AffineExpr::Var(v) => {
                out.insert(*v);
            }
            AffineExpr::Add(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            AffineExpr::Mul(a, _) | AffineExpr::FloorDiv(a, _) | AffineExpr::Mod(a, _) => {
                a.collect_vars(out)
            }
        }
    }

    pub fn uses_var(&self, v: u32) -> bool {
        match self {
            AffineExpr::Const(_) => false,
            AffineExpr::Var(x) => *x == v,
            AffineExpr::Add(a, b) => a.uses_var(v) || b.uses_var(v),
            AffineExpr::Mul(a, _) | AffineExpr::FloorDiv(a, _) | AffineExpr::Mod(a, _) => {
                a.uses_var(v)
            }
        }
    }

    /// Replace every variable with the expression returned by `f`, then simplify.
    pub fn substitute(&self, f: &dyn Fn(u32) -> AffineExpr) -> AffineExpr {
        self.substitute_raw(f).simplify()
    }

    fn substitute_raw(&self, f: &dyn Fn(u32) -> AffineExpr) -> AffineExpr {
        match self {
            AffineExpr::Const(c) => AffineExpr::Const(*c),
            AffineExpr::Var(v) => f(*v),
            AffineExpr::Add(a, b) => {
                AffineExpr::Add(Box::new(a.substitute_raw(f)), Box::new(b.substitute_raw(f)))
            }
            AffineExpr::Mul(a, k) => AffineExpr::Mul(Box::new(a.substitute_raw(f)), *k),
            AffineExpr::FloorDiv(a, c) => AffineExpr::FloorDiv(Box::new(a.substitute_raw(f)), *c),
            AffineExpr::Mod(a, c) => AffineExpr::Mod(Box::new(a.substitute_raw(f)), *c),
        }
    }

    /// Rename a single variable.
    pub fn replace_var(&self, from: u32, to: &AffineExpr) -> AffineExpr {
        self.substitute(&|v| if v == from { to.clone() } else { AffineExpr::Var(v) })
    }

    /// Inclusive value range given inclusive ranges for the variables.
    /// Returns `None` when some variable has no known range.
    pub fn range(&self, vars: &dyn Fn(u32) -> Option<(i64, i64)>) -> Option<(i64, i64)> {
        match self {
            AffineExpr::Const(c) => Some((*c, *c)),
            AffineExpr::Var(v) => vars(*v),
            AffineExpr::Add(a, b) => {
                let (la, ha) = a.range(vars)?;
                let (lb, hb) = b.range(vars)?;
                Some((la + lb, ha + hb))
            }
            AffineExpr::Mul(a, k) => {
                let (l, h) = a.range(vars)?;
                Some(if *k >= 0 { (l * k, h * k) } else { (h * k, l * k) })
            }
            AffineExpr::FloorDiv(a, c) => {
                let (l, h) = a.range(vars)?;
                Some((l.div_euclid(*c), h.div_euclid(*c)))
            }
            AffineExpr::Mod(a, c) => {
                let r = a.range(vars);
                match r {
                    Some((l, h)) if l.div_euclid(*c) == h.div_euclid(*c) => {
                        Some((l.rem_euclid(*c), h.rem_euclid(*c)))
                    }
                    _ => Some((0, c - 1)),
                }
            }
        }
    }

    /// Render using `name` for variables.
    pub fn render(&self, name: &dyn Fn(u32) -> String) -> String {
        match self {
            AffineExpr::Const(c) => c.to_string(),
            AffineExpr::Var(v) => name(*v),
            AffineExpr::Add(a, b) => {
                let rhs = b.render(name);
                match b.as_ref() {
                    AffineExpr::Const(c) if *c < 0 => format!("{} - {}", a.render(name), -c),
                    AffineExpr::Mul(inner, k) if *k < 0 => {
                        let abs = if *k == -1 { inner.render_atom(name) } else { format!("{} * {}", inner.render_atom(name), -k) };
                        format!("{} - {}", a.render(name), abs)
                    }
                    _ => format!("{} + {}", a.render(name), rhs),
                }
            }
            AffineExpr::Mul(a, k) => {
                if *k == -1 {
                    format!("-{}", a.render_atom(name))
                } else {
                    format!("{} * {}", a.render_atom(name), k)
                }
            }
            AffineExpr::FloorDiv(a, c) => format!("{} floordiv {}", a.render_atom(name), c),
            AffineExpr::Mod(a, c) => format!("{} mod {}", a.render_atom(name), c),
        }
    }

    fn render_atom(&self, name: &dyn Fn(u32) -> String) -> String {
        match self {
            AffineExpr::Const(c) if *c < 0 => format!("({c})"),
            AffineExpr::Const(_) | AffineExpr::Var(_) => self.render(name),
            _ => format!("({})", self.render(name)),
        }
    }

    /// Check the structural invariants: positive divisors, no zero multipliers hidden in trees.
    pub fn is_well_formed(&self) -> bool {
        match self {
            AffineExpr::Const(_) | AffineExpr::Var(_) => true,
            AffineExpr::Add(a, b) => a.is_well_formed() && b.is_well_formed(),
            AffineExpr::Mul(a, _) => a.is_well_formed(),
            AffineExpr::FloorDiv(a, c) | AffineExpr::Mod(a, c) => *c > 0 && a.is_well_formed(),
        }
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|v| format!("d{v}")))
    }
}

impl From<i64> for AffineExpr {
    fn from(c: i64) -> Self {
        AffineExpr::Const(c)
    }
}

impl ops::Add for AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: AffineExpr) -> AffineExpr {
        to_sum(&self).add(to_sum(&rhs)).into_expr()
    }
}

impl ops::Add<i64> for AffineExpr {
    type Output = AffineExpr;
    fn add(self, rhs: i64) -> AffineExpr {
        self + AffineExpr::Const(rhs)
    }
}

impl ops::Sub for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: AffineExpr) -> AffineExpr {
        to_sum(&self).add(to_sum(&rhs).scale(-1)).into_expr()
    }
}

impl ops::Sub<i64> for AffineExpr {
    type Output = AffineExpr;
    fn sub(self, rhs: i64) -> AffineExpr {
        self + AffineExpr::Const(-rhs)
    }
}

impl ops::Mul<i64> for AffineExpr {
    type Output = AffineExpr;
    fn mul(self, rhs: i64) -> AffineExpr {
        to_sum(&self).scale(rhs).into_expr()
    }
}

impl ops::Neg for AffineExpr {
    type Output = AffineExpr;
    fn neg(self) -> AffineExpr {
        self * -1
    }
}

/// A list of affine result expressions over `num_inputs` positional inputs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffineMap {
    pub num_inputs: usize,
    pub results: Vec<AffineExpr>,
}

impl AffineMap {
    pub fn new(num_inputs: usize, results: Vec<AffineExpr>) -> Result<Self, AffineError> {
        let map = AffineMap { num_inputs, results: results.iter().map(|e| e.simplify()).collect() };
        map.check()?;
        Ok(map)
    }

    pub fn identity(n: usize) -> Self {
        AffineMap { num_inputs: n, results: (0..n as u32).map(AffineExpr::Var).collect() }
    }

    pub fn check(&self) -> Result<(), AffineError> {
        for e in &self.results {
            if let Some(&v) = e.vars().iter().find(|&&v| v as usize >= self.num_inputs) {
                return Err(AffineError::InputOutOfRange { index: v, num_inputs: self.num_inputs });
            }
        }
        Ok(())
    }

    pub fn num_results(&self) -> usize {
        self.results.len()
    }

    pub fn eval(&self, inputs: &[i64]) -> Result<Vec<i64>, AffineError> {
        if inputs.len() != self.num_inputs {
            return Err(AffineError::WrongInputCount { expected: self.num_inputs, got: inputs.len() });
        }
        Ok(self.results.iter().map(|e| e.eval(&|v| inputs[v as usize])).collect())
    }

    /// `outer ∘ inner`: feeds the results of `inner` into the inputs of `outer`.
    pub fn compose(outer: &AffineMap, inner: &AffineMap) -> Result<AffineMap, AffineError> {
        if outer.num_inputs != inner.results.len() {
            return Err(AffineError::ArityMismatch {
                expected: outer.num_inputs,
                got: inner.results.len(),
            });
        }
        let results = outer
            .results
            .iter()
            .map(|e| e.substitute(&|v| inner.results[v as usize].clone()))
            .collect();
        Ok(AffineMap { num_inputs: inner.num_inputs, results })
    }

    /// Apply the map to expressions instead of values (e.g. to access indices).
    pub fn apply(&self, args: &[AffineExpr]) -> Result<Vec<AffineExpr>, AffineError> {
        if args.len() != self.num_inputs {
            return Err(AffineError::WrongInputCount { expected: self.num_inputs, got: args.len() });
        }
        Ok(self.results.iter().map(|e| e.substitute(&|v| args[v as usize].clone())).collect())
    }
}

impl fmt::Display for AffineMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ins: Vec<String> = (0..self.num_inputs).map(|i| format!("d{i}")).collect();
        let outs: Vec<String> = self.results.iter().map(|e| e.to_string()).collect();
        write!(f, "({}) -> ({})", ins.join(", "), outs.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: u32) -> AffineExpr {
        AffineExpr::var(v)
    }

    #[test]
    fn compose_cyclic_layout_with_shift() {
        let outer = AffineMap::new(1, vec![d(0).modulo(2), d(0).floordiv(2)]).unwrap();
        let inner = AffineMap::new(1, vec![d(0) + 1]).unwrap();
        let m = AffineMap::compose(&outer, &inner).unwrap();
        assert_eq!(m.eval(&[3]).unwrap(), vec![0, 2]);
    }

    #[test]
    fn compose_identity_is_noop() {
        let inner = AffineMap::new(2, vec![d(0) * 2 + d(1), d(1).floordiv(3)]).unwrap();
        let m = AffineMap::compose(&AffineMap::identity(2), &inner).unwrap();
        assert_eq!(m, inner);
    }

    #[test]
    fn compose_layout_with_strided_access() {
        let layout = AffineMap::new(1, vec![d(0).modulo(2), d(0).floordiv(2)]).unwrap();
        let access = AffineMap::new(1, vec![d(0) * 2]).unwrap();
        let m = AffineMap::compose(&layout, &access).unwrap();
        assert_eq!(m.eval(&[3]).unwrap(), vec![0, 3]);
        // (2*i) mod 2 folds to the constant 0.
        assert_eq!(m.results[0], AffineExpr::Const(0));
    }

    #[test]
    fn compose_arity_mismatch() {
        let outer = AffineMap::identity(2);
        let inner = AffineMap::identity(1);
        assert_eq!(
            AffineMap::compose(&outer, &inner),
            Err(AffineError::ArityMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn simplification_rules() {
        assert_eq!((d(0) * 1 + 0), d(0));
        assert_eq!((d(0) + d(1) - d(0)), d(1));
        assert_eq!((d(0) * 4 + 8).floordiv(4), d(0) + 2);
        assert_eq!((d(0) * 4 + 5).modulo(2), AffineExpr::Const(1));
        assert_eq!(d(0).modulo(2).modulo(2), d(0).modulo(2));
        assert_eq!(AffineExpr::cst(-7).floordiv(2), AffineExpr::Const(-4));
        assert_eq!(AffineExpr::cst(-7).modulo(2), AffineExpr::Const(1));
    }

    #[test]
    fn ranges() {
        let r = |v: u32| match v {
            0 => Some((0, 7)),
            1 => Some((2, 3)),
            _ => None,
        };
        assert_eq!((d(0) - d(1)).range(&r), Some((-3, 5)));
        assert_eq!(d(0).modulo(4).range(&r), Some((0, 3)));
        assert_eq!(d(1).modulo(4).range(&r), Some((2, 3)));
        assert_eq!(d(0).floordiv(2).range(&r), Some((0, 3)));
        assert_eq!(d(2).range(&r), None);
    }

    #[test]
    fn render_is_readable() {
        assert_eq!((d(0) * 2 - d(1) - 3).to_string(), "d0 * 2 - d1 - 3");
        assert_eq!(d(0).modulo(2).to_string(), "d0 mod 2");
    }
}
