use serde::Serialize;

use super::space::Qor;

fn objectives(q: &Qor) -> [u64; 4] {
    [q.latency, q.dsp, q.lut, q.bram_bits]
}

/// `a` is no worse than `b` in latency and every resource, and better in one.
pub fn dominates(a: &Qor, b: &Qor) -> bool {
    let (x, y) = (objectives(a), objectives(b));
    x.iter().zip(&y).all(|(p, q)| p <= q) && x != y
}

/// Mutually non-dominated evaluated points, identified by record id.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Frontier {
    pub members: Vec<(usize, Qor)>,
}

impl Frontier {
    /// Adds the point unless it is dominated; drops members it dominates.
    /// Returns whether the point joined.
    pub fn insert(&mut self, id: usize, q: Qor) -> bool {
        if self.members.iter().any(|(_, m)| dominates(m, &q)) {
            return false;
        }
        self.members.retain(|(_, m)| !dominates(&q, m));
        self.members.push((id, q));
        true
    }

    pub fn ids(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.members.iter().map(|m| m.0).collect();
        v.sort_unstable();
        v
    }

    pub fn is_consistent(&self) -> bool {
        self.members.iter().all(|(_, a)| !self.members.iter().any(|(_, b)| dominates(b, a)))
    }

    /// Hypervolume in the (latency, dsp) plane.
    pub fn hypervolume(&self, reference: (f64, f64)) -> f64 {
        let pts: Vec<(f64, f64)> = self.members.iter().map(|(_, q)| (q.latency as f64, q.dsp as f64)).collect();
        hypervolume_2d(&pts, reference)
    }
}

/// Area dominated by `points` (both coordinates minimized) and bounded by `reference`.
pub fn hypervolume_2d(points: &[(f64, f64)], reference: (f64, f64)) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|&(x, y)| x < reference.0 && y < reference.1).collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut area = 0.0;
    let mut floor = reference.1;
    for (x, y) in pts {
        if y < floor {
            area += (reference.0 - x) * (floor - y);
            floor = y;
        }
    }
    area
}
