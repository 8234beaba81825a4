//! Fourier–Motzkin feasibility for small integer linear systems.
//!
//! The check is a rational relaxation with integer tightening of each
//! constraint, so "infeasible" is always exact while "feasible" may be a
//! false positive. Systems that grow past a size cap are reported feasible.

use std::collections::HashSet;

const MAX_CONSTRAINTS: usize = 4000;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Row {
    pub coeffs: Vec<i128>,
    pub constant: i128,
}

#[derive(Clone, Debug, Default)]
pub struct System {
    pub nvars: usize,
    /// `coeffs . x + constant >= 0`
    pub ineqs: Vec<Row>,
    /// `coeffs . x + constant == 0`
    pub eqs: Vec<Row>,
}

fn gcd128(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn row_gcd(r: &Row) -> i128 {
    r.coeffs.iter().fold(0, |g, &c| gcd128(g, c))
}

impl System {
    pub fn new(nvars: usize) -> Self {
        System { nvars, ineqs: vec![], eqs: vec![] }
    }

    pub fn add_var(&mut self) -> usize {
        self.nvars += 1;
        for r in self.ineqs.iter_mut().chain(self.eqs.iter_mut()) {
            r.coeffs.push(0);
        }
        self.nvars - 1
    }

    fn row(&self, coeffs: &[(usize, i64)], constant: i64) -> Row {
        let mut c = vec![0i128; self.nvars];
        for &(v, k) in coeffs {
            c[v] += k as i128;
        }
        Row { coeffs: c, constant: constant as i128 }
    }

    pub fn ge(&mut self, coeffs: &[(usize, i64)], constant: i64) {
        let r = self.row(coeffs, constant);
        self.ineqs.push(r);
    }

    pub fn eq(&mut self, coeffs: &[(usize, i64)], constant: i64) {
        let r = self.row(coeffs, constant);
        self.eqs.push(r);
    }

    pub fn feasible(&self) -> bool {
        let mut ineqs = self.ineqs.clone();
        let mut eqs = self.eqs.clone();
        // Eliminate equalities by substitution where a unit coefficient exists.
        while let Some(eq) = eqs.pop() {
            let g = row_gcd(&eq);
            if g == 0 {
                if eq.constant != 0 {
                    return false;
                }
                continue;
            }
            if eq.constant % g != 0 {
                return false;
            }
            match eq.coeffs.iter().position(|c| c.abs() == 1) {
                Some(v) => {
                    let s = eq.coeffs[v];
                    // x_v = -s * (rest . x + constant)
                    let subst = |r: &mut Row| {
                        let k = r.coeffs[v];
                        if k == 0 {
                            return;
                        }
                        for i in 0..r.coeffs.len() {
                            if i != v {
                                r.coeffs[i] -= k * s * eq.coeffs[i];
                            }
                        }
                        r.constant -= k * s * eq.constant;
                        r.coeffs[v] = 0;
                    };
                    for r in eqs.iter_mut() {
                        subst(r);
                    }
                    for r in ineqs.iter_mut() {
                        subst(r);
                    }
                }
                None => {
                    let neg = Row { coeffs: eq.coeffs.iter().map(|c| -c).collect(), constant: -eq.constant };
                    ineqs.push(eq);
                    ineqs.push(neg);
                }
            }
        }
        let mut rows = match normalize(ineqs) {
            Some(r) => r,
            None => return false,
        };
        for _ in 0..self.nvars {
            // Pick the variable whose elimination creates the fewest rows.
            let mut best: Option<(usize, usize)> = None;
            for v in 0..self.nvars {
                let pos = rows.iter().filter(|r| r.coeffs[v] > 0).count();
                let neg = rows.iter().filter(|r| r.coeffs[v] < 0).count();
                if pos + neg == 0 {
                    continue;
                }
                let cost = pos * neg;
                if best.map_or(true, |(_, c)| cost < c) {
                    best = Some((v, cost));
                }
            }
            let Some((v, _)) = best else { break };
            let (pos, rest): (Vec<Row>, Vec<Row>) = rows.into_iter().partition(|r| r.coeffs[v] > 0);
            let (neg, mut keep): (Vec<Row>, Vec<Row>) = rest.into_iter().partition(|r| r.coeffs[v] < 0);
            for p in &pos {
                for n in &neg {
                    let a = p.coeffs[v];
                    let b = -n.coeffs[v];
                    let coeffs = p.coeffs.iter().zip(&n.coeffs).map(|(x, y)| b * x + a * y).collect();
                    keep.push(Row { coeffs, constant: b * p.constant + a * n.constant });
                }
            }
            rows = match normalize(keep) {
                Some(r) => r,
                None => return false,
            };
            if rows.len() > MAX_CONSTRAINTS {
                return true;
            }
        }
        rows.iter().all(|r| r.constant >= 0)
    }
}

/// Tighten and deduplicate rows; `None` when a constant row is violated.
fn normalize(rows: Vec<Row>) -> Option<Vec<Row>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for mut r in rows {
        let g = row_gcd(&r);
        if g == 0 {
            if r.constant < 0 {
                return None;
            }
            continue;
        }
        if g > 1 {
            for c in r.coeffs.iter_mut() {
                *c /= g;
            }
            r.constant = r.constant.div_euclid(g);
        }
        if seen.insert(r.clone()) {
            out.push(r);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_is_feasible() {
        let mut s = System::new(2);
        s.ge(&[(0, 1)], 0);
        s.ge(&[(0, -1)], 7);
        s.ge(&[(1, 1), (0, -1)], -1);
        s.ge(&[(1, -1)], 7);
        assert!(s.feasible());
    }

    #[test]
    fn contradiction() {
        let mut s = System::new(1);
        s.ge(&[(0, 1)], -5);
        s.ge(&[(0, -1)], 3);
        assert!(!s.feasible());
    }

    #[test]
    fn integer_tightening() {
        // 2x == 1 has no integer solution.
        let mut s = System::new(1);
        s.eq(&[(0, 2)], -1);
        assert!(!s.feasible());
        // 1 <= 3x <= 2 has no integer solution; tightening catches it.
        let mut s = System::new(1);
        s.ge(&[(0, 3)], -1);
        s.ge(&[(0, -3)], 2);
        assert!(!s.feasible());
    }

    #[test]
    fn equality_substitution() {
        let mut s = System::new(2);
        s.eq(&[(0, 1), (1, -1)], -1);
        s.ge(&[(0, 1)], 0);
        s.ge(&[(0, -1)], 0);
        s.ge(&[(1, 1)], 0);
        assert!(!s.feasible());
    }
}
