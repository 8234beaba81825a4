//! Neighbor-traversing Pareto search.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::pareto::Frontier;
use super::space::{apply, build_space, evaluate, Point, Qor, Space, SpaceCaps};
use crate::ir::Program;
use crate::qor::TargetSpec;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DseError {
    #[error("budget {budget} is smaller than the initial sample of {n0} points")]
    Budget { budget: usize, n0: usize },
    #[error("no evaluated design point is feasible; relax the space or the constraints")]
    NoFeasible,
    #[error("no frontier point meets the resource limits; closest: {closest}")]
    OverBudget { closest: String },
    #[error("{0}")]
    Space(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreOptions {
    pub budget: usize,
    pub seed: u64,
    /// Worker threads for the initial sample.
    pub jobs: usize,
    pub initial: usize,
    /// Stop after this many consecutive proposals that do not join the frontier.
    pub patience: usize,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions { budget: 128, seed: 0, jobs: 1, initial: 32, patience: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Record {
    pub id: usize,
    pub point: Point,
    pub result: Result<Qor, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Exploration {
    pub records: Vec<Record>,
    pub frontier: Frontier,
    /// (latency, dsp) reference fixed after the initial sample.
    pub reference: (f64, f64),
    pub hv_history: Vec<f64>,
    pub stop: String,
}

fn evaluate_all(space: &Space, p: &Program, t: &TargetSpec, points: &[Point], jobs: usize) -> Vec<Result<Qor, String>> {
    let jobs = jobs.max(1).min(points.len().max(1));
    if jobs == 1 {
        return points.iter().map(|pt| evaluate(space, p, pt, t)).collect();
    }
    let chunk = points.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = points
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|pt| evaluate(space, p, pt, t)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("evaluation thread panicked")).collect()
    })
}

fn lcm(a: u128, b: u128) -> u128 {
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Nearest point to `from` not in `visited`, by L1 distance over option indices
/// with each dimension scaled to unit length. Ties go to the smaller point.
pub fn nearest_unvisited(space: &Space, from: &Point, visited: &HashSet<Point>) -> Option<Point> {
    let l = space.dims.iter().map(|d| d.options.len() as u128).filter(|&n| n > 1).fold(1, |a, n| lcm(a, n - 1));
    let w: Vec<u128> = space.dims.iter().map(|d| if d.options.len() > 1 { l / (d.options.len() as u128 - 1) } else { 0 }).collect();
    let mut heap = BinaryHeap::from([Reverse((0u128, from.clone()))]);
    let mut seen: HashSet<Point> = HashSet::from([from.clone()]);
    while let Some(Reverse((dist, pt))) = heap.pop() {
        if !visited.contains(&pt) {
            return Some(pt);
        }
        for (d, dim) in space.dims.iter().enumerate() {
            for step in [-1i64, 1] {
                let k = pt[d] as i64 + step;
                if k < 0 || k >= dim.options.len() as i64 {
                    continue;
                }
                let mut q = pt.clone();
                q[d] = k as usize;
                if seen.insert(q.clone()) {
                    heap.push(Reverse((dist + w[d], q)));
                }
            }
        }
    }
    None
}

pub fn explore(space: &Space, p: &Program, t: &TargetSpec, opts: &ExploreOptions) -> Result<Exploration, DseError> {
    let size = space.size();
    let n0 = (opts.initial as u128).min(size) as usize;
    if opts.budget < n0 {
        return Err(DseError::Budget { budget: opts.budget, n0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut visited: HashSet<Point> = HashSet::new();
    let mut sample = vec![];
    if size <= n0 as u128 {
        sample = (0..size).map(|i| space.point_at(i)).collect();
    } else {
        while sample.len() < n0 {
            let pt: Point = space.dims.iter().map(|d| rng.gen_range(0..d.options.len())).collect();
            if visited.insert(pt.clone()) {
                sample.push(pt);
            }
        }
    }
    visited.extend(sample.iter().cloned());
    let results = evaluate_all(space, p, t, &sample, opts.jobs);
    let mut records: Vec<Record> = vec![];
    let mut frontier = Frontier::default();
    for (pt, r) in sample.into_iter().zip(results) {
        let id = records.len();
        if let Ok(q) = &r {
            frontier.insert(id, *q);
        }
        records.push(Record { id, point: pt, result: r });
    }
    let feasible: Vec<&Qor> = records.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let reference = (
        feasible.iter().map(|q| q.latency).max().unwrap_or(0) as f64 * 2.0 + 1.0,
        feasible.iter().map(|q| q.dsp).max().unwrap_or(0) as f64 * 2.0 + 1.0,
    );
    let mut hv_history = vec![frontier.hypervolume(reference)];
    let mut stall = 0;
    let stop = loop {
        if records.len() >= opts.budget {
            break "budget".to_string();
        }
        if stall >= opts.patience {
            break format!("{} proposals without improvement", opts.patience);
        }
        let next = if frontier.members.is_empty() {
            if visited.len() as u128 >= size {
                None
            } else {
                let mut pt: Point;
                loop {
                    pt = space.dims.iter().map(|d| rng.gen_range(0..d.options.len())).collect();
                    if !visited.contains(&pt) {
                        break;
                    }
                }
                Some(pt)
            }
        } else {
            let (id, _) = frontier.members[rng.gen_range(0..frontier.members.len())];
            nearest_unvisited(space, &records[id].point, &visited)
        };
        let Some(pt) = next else { break "space exhausted".to_string() };
        visited.insert(pt.clone());
        let r = evaluate(space, p, &pt, t);
        let id = records.len();
        let joined = match &r {
            Ok(q) => frontier.insert(id, *q),
            Err(_) => false,
        };
        stall = if joined { 0 } else { stall + 1 };
        records.push(Record { id, point: pt, result: r });
        hv_history.push(frontier.hypervolume(reference));
    };
    Ok(Exploration { records, frontier, reference, hv_history, stop })
}

/// Lowest-latency frontier point within the target's resources.
pub fn finalize<'a>(x: &'a Exploration, t: &TargetSpec) -> Result<&'a Record, DseError> {
    if x.frontier.members.is_empty() {
        return Err(DseError::NoFeasible);
    }
    let mut members = x.frontier.members.clone();
    members.sort_by_key(|(id, q)| (q.latency, *id));
    let fits = |q: &Qor| q.dsp <= t.dsp_total && q.lut <= t.lut_total && q.bram_bits <= t.bram_bits_total;
    if let Some((id, _)) = members.iter().find(|(_, q)| fits(q)) {
        return Ok(&x.records[*id]);
    }
    let over = |q: &Qor| {
        [q.dsp as f64 / t.dsp_total as f64, q.lut as f64 / t.lut_total as f64, q.bram_bits as f64 / t.bram_bits_total as f64]
            .into_iter()
            .fold(0.0, f64::max)
    };
    let (id, q) = members.iter().min_by(|a, b| over(&a.1).partial_cmp(&over(&b.1)).unwrap()).unwrap();
    Err(DseError::OverBudget { closest: format!("point {id}: {q}") })
}

pub fn write_csv(out: &mut dyn Write, space: &Space, x: &Exploration) -> io::Result<()> {
    let mut head = vec!["id".to_string()];
    head.extend(space.dims.iter().map(|d| d.name.clone()));
    head.extend(["latency", "dsp", "lut", "bram_bits", "pareto"].map(String::from));
    writeln!(out, "{}", head.join(","))?;
    let on = x.frontier.ids();
    for r in &x.records {
        let mut row = vec![r.id.to_string()];
        row.extend(space.describe(&r.point).into_iter().map(|(_, v)| v));
        match &r.result {
            Ok(q) => row.extend([q.latency, q.dsp, q.lut, q.bram_bits].map(|v| v.to_string())),
            Err(_) => row.extend(["", "", "", ""].map(String::from)),
        }
        row.push(on.binary_search(&r.id).is_ok().to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Builds the space of the top function, explores it, and applies the chosen point.
pub fn optimize(p: &Program, caps: &SpaceCaps, opts: &ExploreOptions, t: &TargetSpec) -> Result<(Space, Exploration, Program), DseError> {
    let space = build_space(p, &p.top, caps).map_err(DseError::Space)?;
    let x = explore(&space, p, t, opts)?;
    let best = finalize(&x, t)?;
    let q = apply(p, &space.func, &space.config(&best.point)).map_err(DseError::Space)?;
    Ok((space, x, q))
}
