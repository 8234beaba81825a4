//! Deterministic textual dump of the IR.

use std::collections::HashMap;
use std::fmt::Write;

use super::stmt::*;
use super::util::walk;

/// Unique, C-friendly names for the loop variables of a function. A loop keeps
/// its hint when no other loop uses the same hint.
pub fn loop_names(f: &Function) -> HashMap<u32, String> {
    let mut count: HashMap<String, usize> = HashMap::new();
    let mut loops = vec![];
    walk(&f.body, &mut |s| {
        if let Stmt::Loop(l) = s {
            *count.entry(l.name.clone()).or_default() += 1;
            loops.push((l.var, l.name.clone()));
        }
    });
    let reserved: Vec<String> = f.array_names().into_iter().chain(f.params.iter().map(|p| p.name().to_string())).collect();
    loops
        .into_iter()
        .map(|(v, n)| {
            let base = if n.is_empty() { "i".to_string() } else { n };
            let unique = count.get(&base).copied().unwrap_or(0) <= 1 && !reserved.contains(&base);
            (v, if unique { base } else { format!("{base}_{v}") })
        })
        .collect()
}

pub struct Printer<'a> {
    names: HashMap<u32, String>,
    values: HashMap<ValueId, usize>,
    func: &'a Function,
}

impl<'a> Printer<'a> {
    pub fn new(func: &'a Function) -> Self {
        let mut values = HashMap::new();
        for p in &func.params {
            if let Param::Scalar { value, .. } = p {
                let n = values.len();
                values.insert(*value, n);
            }
        }
        walk(&func.body, &mut |s| {
            if let Some(v) = s.defined_value() {
                let n = values.len();
                values.entry(v).or_insert(n);
            }
        });
        Printer { names: loop_names(func), values, func }
    }

    pub fn var(&self, v: u32) -> String {
        self.names.get(&v).cloned().unwrap_or_else(|| format!("d{v}"))
    }

    pub fn value(&self, v: ValueId) -> String {
        match self.values.get(&v) {
            Some(n) => format!("%{n}"),
            None => format!("%?{}", v.0),
        }
    }

    pub fn gen(&self, e: &GenExpr) -> String {
        match e {
            GenExpr::Const(c) => c.to_string(),
            GenExpr::Var(v) => self.var(*v),
            GenExpr::Value(x) => self.value(*x),
            GenExpr::Bin(op, a, b) => {
                let o = match op {
                    GenOp::Add => "+",
                    GenOp::Sub => "-",
                    GenOp::Mul => "*",
                    GenOp::Div => "/",
                    GenOp::Rem => "%",
                    GenOp::FloorDiv => "floordiv",
                    GenOp::Mod => "mod",
                };
                format!("({} {} {})", self.gen(a), o, self.gen(b))
            }
        }
    }

    pub fn index(&self, e: &IndexExpr) -> String {
        match e {
            IndexExpr::Affine(a) => a.render(&|v| self.var(v)),
            IndexExpr::General(g) => format!("gen{}", self.gen(g)),
        }
    }

    pub fn operand(&self, o: &Operand) -> String {
        match o {
            Operand::Value(v) => self.value(*v),
            Operand::ConstF(f) => format!("{f:?}f"),
            Operand::ConstI(i) => i.to_string(),
            Operand::Index(e) => format!("index({})", self.index(e)),
        }
    }

    fn indices(&self, idx: &[IndexExpr]) -> String {
        idx.iter().map(|e| self.index(e)).collect::<Vec<_>>().join(", ")
    }

    pub fn block(&self, block: &[Stmt], depth: usize, out: &mut String) {
        for s in block {
            self.stmt(s, depth, out);
        }
    }

    pub fn stmt(&self, s: &Stmt, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        match s {
            Stmt::Loop(l) => {
                let kind = if l.is_affine() { "affine.for" } else { "for" };
                let _ = write!(
                    out,
                    "{pad}{kind} {} = {} to {} step {}",
                    self.var(l.var),
                    self.index(&l.lower),
                    self.index(&l.upper),
                    l.step
                );
                match l.tag {
                    LoopTag::Plain => {}
                    LoopTag::TileInter => out.push_str(" tile.inter"),
                    LoopTag::TileIntra => out.push_str(" tile.intra"),
                }
                if let Some(d) = l.directive {
                    let _ = write!(
                        out,
                        " {{pipeline={}, ii={}, flatten={}}}",
                        d.pipeline, d.target_ii, d.flatten
                    );
                }
                out.push_str(" {\n");
                self.block(&l.body, depth + 1, out);
                let _ = writeln!(out, "{pad}}}");
            }
            Stmt::If(i) => {
                let conds: Vec<String> = i
                    .conds
                    .iter()
                    .map(|c| {
                        format!("{} {} 0", c.expr.render(&|v| self.var(v)), if c.eq { "==" } else { ">=" })
                    })
                    .collect();
                let _ = writeln!(out, "{pad}affine.if ({}) {{", conds.join(", "));
                self.block(&i.then_body, depth + 1, out);
                if !i.else_body.is_empty() {
                    let _ = writeln!(out, "{pad}}} else {{");
                    self.block(&i.else_body, depth + 1, out);
                }
                let _ = writeln!(out, "{pad}}}");
            }
            Stmt::Load { result, array, indices } => {
                let _ = writeln!(out, "{pad}{} = load {array}[{}]", self.value(*result), self.indices(indices));
            }
            Stmt::Store { value, array, indices } => {
                let _ = writeln!(out, "{pad}store {}, {array}[{}]", self.operand(value), self.indices(indices));
            }
            Stmt::Arith { result, op, operands, ty } => {
                let ops: Vec<String> = operands.iter().map(|o| self.operand(o)).collect();
                let _ = writeln!(out, "{pad}{} = {}.{ty} {}", self.value(*result), op.name(), ops.join(", "));
            }
            Stmt::Call { callee, args } => {
                let a: Vec<String> = args
                    .iter()
                    .map(|a| match a {
                        CallArg::Array(n) => n.clone(),
                        CallArg::Scalar(o) => self.operand(o),
                    })
                    .collect();
                let _ = writeln!(out, "{pad}call @{callee}({})", a.join(", "));
            }
            Stmt::Copy { src, dst } => {
                let _ = writeln!(out, "{pad}copy {src} -> {dst}");
            }
        }
    }

    pub fn function(&self) -> String {
        let f = self.func;
        let mut out = String::new();
        let params: Vec<String> = f
            .params
            .iter()
            .map(|p| match p {
                Param::Scalar { name, elem, value } => format!("{} {name}: {elem}", self.value(*value)),
                Param::Array { name, ty, interface } => {
                    format!("{name}: {ty} {}", match interface {
                        crate::ir::InterfaceKind::Axi => "axi",
                        crate::ir::InterfaceKind::Bram => "bram",
                    })
                }
            })
            .collect();
        let _ = write!(out, "func @{}({})", f.name, params.join(", "));
        let d = f.directive;
        if d.dataflow {
            out.push_str(" {dataflow}");
        }
        if d.pipeline {
            let _ = write!(out, " {{pipeline, ii={}}}", d.target_ii);
        }
        out.push_str(" {\n");
        for l in &f.locals {
            let _ = writeln!(out, "  local {}: {}", l.name, l.ty);
        }
        self.block(&f.body, 1, &mut out);
        out.push_str("}\n");
        out
    }
}

pub fn print_function(f: &Function) -> String {
    Printer::new(f).function()
}

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for (i, f) in p.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if f.name == p.top {
            out.push_str("// top\n");
        }
        out.push_str(&print_function(f));
    }
    out
}
