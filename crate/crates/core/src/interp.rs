//! Reference interpreter. Directives and layouts carry no meaning here.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::ir::util::id_bounds;
use crate::ir::*;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Val {
    F(f32),
    I(i32),
}

impl Val {
    pub fn as_f32(self) -> f32 {
        match self {
            Val::F(f) => f,
            Val::I(i) => i as f32,
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            Val::F(f) => f as i32,
            Val::I(i) => i,
        }
    }

    fn zero(kind: ElemKind) -> Val {
        match kind {
            ElemKind::F32 => Val::F(0.0),
            ElemKind::I32 => Val::I(0),
        }
    }

    fn cast(self, kind: ElemKind) -> Val {
        match kind {
            ElemKind::F32 => Val::F(self.as_f32()),
            ElemKind::I32 => Val::I(self.as_i32()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Buffer {
    pub elem: ElemKind,
    pub shape: Vec<i64>,
    pub data: Vec<Val>,
    pub init: Vec<bool>,
}

impl Buffer {
    pub fn uninit(elem: ElemKind, shape: Vec<i64>) -> Self {
        let n = shape.iter().product::<i64>() as usize;
        Buffer { elem, shape, data: vec![Val::zero(elem); n], init: vec![false; n] }
    }

    pub fn filled(elem: ElemKind, shape: Vec<i64>, data: Vec<Val>) -> Self {
        let n = data.len();
        assert_eq!(n as i64, shape.iter().product::<i64>());
        Buffer { elem, shape, data, init: vec![true; n] }
    }

    fn offset(&self, idx: &[i64]) -> Option<usize> {
        let mut off = 0i64;
        for (&i, &e) in idx.iter().zip(&self.shape) {
            if i < 0 || i >= e {
                return None;
            }
            off = off * e + i;
        }
        Some(off as usize)
    }
}

/// Array and scalar values keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tape {
    pub arrays: BTreeMap<String, Buffer>,
    pub scalars: BTreeMap<String, Val>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Trap {
    #[error("{path}: index {index:?} out of bounds for `{array}`")]
    OutOfBounds { path: String, array: String, index: Vec<i64> },
    #[error("{path}: read of uninitialized element {index:?} of `{array}`")]
    Uninitialized { path: String, array: String, index: Vec<i64> },
    #[error("{path}: division by zero")]
    DivByZero { path: String },
    #[error("{0}")]
    Setup(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub loads: u64,
    pub stores: u64,
    pub arith: u64,
}

struct Frame {
    arrays: HashMap<String, usize>,
    values: Vec<Option<Val>>,
    vars: Vec<i64>,
}

pub struct Interp<'p> {
    prog: &'p Program,
    buffers: Vec<Buffer>,
    pub stats: Stats,
}

fn div_trunc(a: i64, b: i64) -> Option<i64> {
    (b != 0).then(|| a.wrapping_div(b))
}

impl<'p> Interp<'p> {
    pub fn new(prog: &'p Program) -> Self {
        Interp { prog, buffers: vec![], stats: Stats::default() }
    }

    fn gen(&self, e: &GenExpr, fr: &Frame, path: &dyn Fn() -> String) -> Result<i64, Trap> {
        Ok(match e {
            GenExpr::Const(c) => *c,
            GenExpr::Var(v) => fr.vars[*v as usize],
            GenExpr::Value(v) => fr.values[v.0 as usize]
                .ok_or_else(|| Trap::Setup(format!("{}: value {v} undefined", path())))?
                .as_i32() as i64,
            GenExpr::Bin(op, a, b) => {
                let x = self.gen(a, fr, path)?;
                let y = self.gen(b, fr, path)?;
                let dz = || Trap::DivByZero { path: path() };
                match op {
                    GenOp::Add => x + y,
                    GenOp::Sub => x - y,
                    GenOp::Mul => x * y,
                    GenOp::Div => div_trunc(x, y).ok_or_else(dz)?,
                    GenOp::Rem => (y != 0).then(|| x.wrapping_rem(y)).ok_or_else(dz)?,
                    GenOp::FloorDiv => (y != 0).then(|| x.div_euclid(y)).ok_or_else(dz)?,
                    GenOp::Mod => (y != 0).then(|| x.rem_euclid(y)).ok_or_else(dz)?,
                }
            }
        })
    }

    fn index(&self, e: &IndexExpr, fr: &Frame, path: &dyn Fn() -> String) -> Result<i64, Trap> {
        match e {
            IndexExpr::Affine(a) => Ok(a.eval(&|v| fr.vars[v as usize])),
            IndexExpr::General(g) => self.gen(g, fr, path),
        }
    }

    fn operand(&self, o: &Operand, fr: &Frame, path: &dyn Fn() -> String) -> Result<Val, Trap> {
        Ok(match o {
            Operand::Value(v) => fr.values[v.0 as usize]
                .ok_or_else(|| Trap::Setup(format!("{}: value {v} undefined", path())))?,
            Operand::ConstF(f) => Val::F(*f),
            Operand::ConstI(i) => Val::I(*i),
            Operand::Index(e) => Val::I(self.index(e, fr, path)? as i32),
        })
    }

    fn addr(&self, array: &str, idx: &[IndexExpr], fr: &Frame, path: &dyn Fn() -> String) -> Result<(usize, usize, Vec<i64>), Trap> {
        let b = *fr
            .arrays
            .get(array)
            .ok_or_else(|| Trap::Setup(format!("{}: unknown array `{array}`", path())))?;
        let index: Vec<i64> = idx.iter().map(|e| self.index(e, fr, path)).collect::<Result<_, _>>()?;
        match self.buffers[b].offset(&index) {
            Some(off) => Ok((b, off, index)),
            None => Err(Trap::OutOfBounds { path: path(), array: array.to_string(), index }),
        }
    }

    fn arith(op: ArithOp, ty: ElemKind, a: &[Val], path: &dyn Fn() -> String) -> Result<Val, Trap> {
        let dz = || Trap::DivByZero { path: path() };
        Ok(match op {
            ArithOp::IToF => Val::F(a[0].as_i32() as f32),
            ArithOp::FToI => Val::I(a[0].as_f32() as i32),
            _ => match ty {
                ElemKind::F32 => {
                    let x = a[0].as_f32();
                    let y = a.get(1).map_or(0.0, |v| v.as_f32());
                    Val::F(match op {
                        ArithOp::Add => x + y,
                        ArithOp::Sub => x - y,
                        ArithOp::Mul => x * y,
                        ArithOp::Div => x / y,
                        ArithOp::Rem => x % y,
                        ArithOp::Neg => -x,
                        _ => unreachable!(),
                    })
                }
                ElemKind::I32 => {
                    let x = a[0].as_i32();
                    let y = a.get(1).map_or(0, |v| v.as_i32());
                    Val::I(match op {
                        ArithOp::Add => x.wrapping_add(y),
                        ArithOp::Sub => x.wrapping_sub(y),
                        ArithOp::Mul => x.wrapping_mul(y),
                        ArithOp::Div => (y != 0).then(|| x.wrapping_div(y)).ok_or_else(dz)?,
                        ArithOp::Rem => (y != 0).then(|| x.wrapping_rem(y)).ok_or_else(dz)?,
                        ArithOp::Neg => x.wrapping_neg(),
                        _ => unreachable!(),
                    })
                }
            },
        })
    }

    fn block(&mut self, block: &[Stmt], fr: &mut Frame, path: &str) -> Result<(), Trap> {
        for (i, s) in block.iter().enumerate() {
            self.stmt(s, fr, path, i)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, fr: &mut Frame, path: &str, pos: usize) -> Result<(), Trap> {
        let here = || format!("{path}/{pos}");
        match s {
            Stmt::Loop(l) => {
                let lo = self.index(&l.lower, fr, &here)?;
                let hi = self.index(&l.upper, fr, &here)?;
                let mut i = lo;
                let p = format!("{path}/{pos}:for {}", l.name);
                while i < hi {
                    fr.vars[l.var as usize] = i;
                    self.block(&l.body, fr, &p)?;
                    i += l.step;
                }
            }
            Stmt::If(g) => {
                let take = g.conds.iter().all(|c| c.holds(&|v| fr.vars[v as usize]));
                let p = format!("{path}/{pos}:if");
                if take {
                    self.block(&g.then_body, fr, &p)?;
                } else {
                    self.block(&g.else_body, fr, &p)?;
                }
            }
            Stmt::Load { result, array, indices } => {
                let (b, off, index) = self.addr(array, indices, fr, &here)?;
                if !self.buffers[b].init[off] {
                    return Err(Trap::Uninitialized { path: here(), array: array.clone(), index });
                }
                self.stats.loads += 1;
                fr.values[result.0 as usize] = Some(self.buffers[b].data[off]);
            }
            Stmt::Store { value, array, indices } => {
                let v = self.operand(value, fr, &here)?;
                let (b, off, _) = self.addr(array, indices, fr, &here)?;
                self.stats.stores += 1;
                let buf = &mut self.buffers[b];
                buf.data[off] = v.cast(buf.elem);
                buf.init[off] = true;
            }
            Stmt::Arith { result, op, operands, ty } => {
                let mut vals = [Val::I(0); 2];
                for (k, o) in operands.iter().enumerate().take(2) {
                    vals[k] = self.operand(o, fr, &here)?;
                }
                self.stats.arith += 1;
                fr.values[result.0 as usize] = Some(Self::arith(*op, *ty, &vals[..operands.len().min(2)], &here)?);
            }
            Stmt::Call { callee, args } => {
                let p = here();
                let f = self
                    .prog
                    .function(callee)
                    .ok_or_else(|| Trap::Setup(format!("{p}: unknown callee `{callee}`")))?;
                let mut arrays = HashMap::new();
                let mut scalars = vec![];
                for (prm, a) in f.params.iter().zip(args) {
                    match (prm, a) {
                        (Param::Array { name, .. }, CallArg::Array(src)) => {
                            let b = *fr
                                .arrays
                                .get(src)
                                .ok_or_else(|| Trap::Setup(format!("{p}: unknown array `{src}`")))?;
                            arrays.insert(name.clone(), b);
                        }
                        (Param::Scalar { value, elem, .. }, CallArg::Scalar(o)) => {
                            scalars.push((*value, self.operand(o, fr, &here)?.cast(*elem)));
                        }
                        _ => return Err(Trap::Setup(format!("{p}: argument kind mismatch calling `{callee}`"))),
                    }
                }
                self.run(f, arrays, scalars)?;
            }
            Stmt::Copy { src, dst } => {
                let s = fr.arrays[src];
                let d = fr.arrays[dst];
                let (data, init) = (self.buffers[s].data.clone(), self.buffers[s].init.clone());
                self.buffers[d].data = data;
                self.buffers[d].init = init;
            }
        }
        Ok(())
    }

    fn run(&mut self, f: &Function, mut arrays: HashMap<String, usize>, scalars: Vec<(ValueId, Val)>) -> Result<(), Trap> {
        let (nv, nl) = id_bounds(f);
        for l in &f.locals {
            self.buffers.push(Buffer::uninit(l.ty.elem, l.ty.shape.clone()));
            arrays.insert(l.name.clone(), self.buffers.len() - 1);
        }
        let mut fr = Frame { arrays, values: vec![None; nv.max(f.next_value) as usize], vars: vec![0; nl.max(f.next_var) as usize] };
        for (v, x) in scalars {
            fr.values[v.0 as usize] = Some(x);
        }
        self.block(&f.body, &mut fr, &f.name)
    }
}

/// Run function `name` of `prog` on `inputs`; returns the final parameter values.
/// Evaluates one arithmetic operation; `None` on integer division by zero.
pub fn eval_arith(op: ArithOp, ty: ElemKind, args: &[Val]) -> Option<Val> {
    Interp::arith(op, ty, args, &String::new).ok()
}

pub fn execute_with_stats(prog: &Program, name: &str, inputs: &Tape) -> Result<(Tape, Stats), Trap> {
    let f = prog.function(name).ok_or_else(|| Trap::Setup(format!("no function `{name}`")))?;
    let mut it = Interp::new(prog);
    let mut arrays = HashMap::new();
    let mut scalars = vec![];
    for p in &f.params {
        match p {
            Param::Array { name, ty, .. } => {
                let b = inputs
                    .arrays
                    .get(name)
                    .ok_or_else(|| Trap::Setup(format!("tape has no array `{name}`")))?;
                if b.shape != ty.shape {
                    return Err(Trap::Setup(format!("tape array `{name}` has shape {:?}, expected {:?}", b.shape, ty.shape)));
                }
                it.buffers.push(b.clone());
                arrays.insert(name.clone(), it.buffers.len() - 1);
            }
            Param::Scalar { name, elem, value } => {
                let v = inputs
                    .scalars
                    .get(name)
                    .ok_or_else(|| Trap::Setup(format!("tape has no scalar `{name}`")))?;
                scalars.push((*value, v.cast(*elem)));
            }
        }
    }
    let handles = arrays.clone();
    it.run(f, arrays, scalars)?;
    let mut out = Tape { arrays: BTreeMap::new(), scalars: inputs.scalars.clone() };
    for p in &f.params {
        if let Param::Array { name, .. } = p {
            out.arrays.insert(name.clone(), it.buffers[handles[name]].clone());
        }
    }
    Ok((out, it.stats))
}

pub fn execute(prog: &Program, inputs: &Tape) -> Result<Tape, Trap> {
    execute_with_stats(prog, &prog.top, inputs).map(|(t, _)| t)
}

/// Random inputs for every parameter of `f`: i32 in [-8, 8], f32 in [-1, 1].
pub fn random_tape(f: &Function, rng: &mut impl Rng) -> Tape {
    let mut t = Tape::default();
    let gen = |elem: ElemKind, rng: &mut dyn rand::RngCore| match elem {
        ElemKind::I32 => Val::I(rng.gen_range(-8..=8)),
        ElemKind::F32 => Val::F(rng.gen_range(-1.0f32..=1.0)),
    };
    for p in &f.params {
        match p {
            Param::Array { name, ty, .. } => {
                let data = (0..ty.num_elements()).map(|_| gen(ty.elem, rng)).collect();
                t.arrays.insert(name.clone(), Buffer::filled(ty.elem, ty.shape.clone(), data));
            }
            Param::Scalar { name, elem, .. } => {
                t.scalars.insert(name.clone(), gen(*elem, rng));
            }
        }
    }
    t
}

/// Compare two tapes: exact for i32, relative `tol` (with an absolute floor) for f32.
pub fn tapes_match(a: &Tape, b: &Tape, tol: f32) -> Result<(), String> {
    if a.arrays.keys().ne(b.arrays.keys()) {
        return Err("tapes have different arrays".into());
    }
    for (name, x) in &a.arrays {
        let y = &b.arrays[name];
        if x.shape != y.shape {
            return Err(format!("`{name}`: shapes differ"));
        }
        for (k, (p, q)) in x.data.iter().zip(&y.data).enumerate() {
            if x.init[k] != y.init[k] {
                return Err(format!("`{name}`[{k}]: initialisation differs"));
            }
            let ok = match (p, q) {
                (Val::I(p), Val::I(q)) => p == q,
                (Val::F(p), Val::F(q)) => {
                    let scale = p.abs().max(q.abs()).max(1.0);
                    (p - q).abs() <= tol * scale || (p.is_nan() && q.is_nan())
                }
                _ => false,
            };
            if !ok {
                return Err(format!("`{name}`[{k}]: {p:?} vs {q:?}"));
            }
        }
    }
    Ok(())
}

fn val_json(v: Val) -> Json {
    match v {
        Val::F(f) => json!(f),
        Val::I(i) => json!(i),
    }
}

fn nest(data: &[Val], shape: &[i64]) -> Json {
    if shape.len() <= 1 {
        return Json::Array(data.iter().map(|v| val_json(*v)).collect());
    }
    let inner: i64 = shape[1..].iter().product();
    Json::Array(data.chunks(inner as usize).map(|c| nest(c, &shape[1..])).collect())
}

pub fn tape_to_json(t: &Tape) -> Json {
    let mut arrays = serde_json::Map::new();
    for (k, b) in &t.arrays {
        arrays.insert(k.clone(), nest(&b.data, &b.shape));
    }
    let mut scalars = serde_json::Map::new();
    for (k, v) in &t.scalars {
        scalars.insert(k.clone(), val_json(*v));
    }
    json!({ "arrays": arrays, "scalars": scalars })
}

fn flatten(j: &Json, elem: ElemKind, out: &mut Vec<Val>) -> Result<(), String> {
    match j {
        Json::Array(xs) => xs.iter().try_for_each(|x| flatten(x, elem, out)),
        Json::Number(n) => {
            out.push(match elem {
                ElemKind::F32 => Val::F(n.as_f64().ok_or("bad number")? as f32),
                ElemKind::I32 => Val::I(n.as_i64().ok_or("expected integer")? as i32),
            });
            Ok(())
        }
        _ => Err(format!("unexpected JSON value {j}")),
    }
}

/// Read a tape for the parameters of `f` from JSON (`{"arrays": {..}, "scalars": {..}}`).
pub fn tape_from_json(f: &Function, j: &Json) -> Result<Tape, String> {
    let mut t = Tape::default();
    for p in &f.params {
        match p {
            Param::Array { name, ty, .. } => {
                let v = j
                    .get("arrays")
                    .and_then(|a| a.get(name))
                    .ok_or_else(|| format!("missing array `{name}`"))?;
                let mut data = vec![];
                flatten(v, ty.elem, &mut data)?;
                if data.len() as i64 != ty.num_elements() {
                    return Err(format!("`{name}`: expected {} elements, got {}", ty.num_elements(), data.len()));
                }
                t.arrays.insert(name.clone(), Buffer::filled(ty.elem, ty.shape.clone(), data));
            }
            Param::Scalar { name, elem, .. } => {
                let v = j
                    .get("scalars")
                    .and_then(|a| a.get(name))
                    .ok_or_else(|| format!("missing scalar `{name}`"))?;
                let mut data = vec![];
                flatten(v, *elem, &mut data)?;
                t.scalars.insert(name.clone(), *data.first().ok_or("empty scalar")?);
            }
        }
    }
    Ok(t)
}
