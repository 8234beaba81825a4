use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::affine::AffineExpr;
use super::stmt::*;
use super::types::LayoutError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub rule: &'static str,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.path, self.rule, self.message)
    }
}

struct Ctx<'a> {
    prog: Option<&'a Program>,
    func: &'a Function,
    diags: Vec<Diagnostic>,
    defined: HashSet<ValueId>,
}

impl<'a> Ctx<'a> {
    fn report(&mut self, rule: &'static str, path: &str, message: String) {
        self.diags.push(Diagnostic { rule, path: path.to_string(), message });
    }

    fn check_affine(&mut self, e: &AffineExpr, scope: &[u32], path: &str) {
        if !e.is_well_formed() {
            self.report("affine-divisor", path, format!("non-positive divisor in {e}"));
        }
        for v in e.vars() {
            if !scope.contains(&v) {
                self.report("var-scope", path, format!("loop variable d{v} not in scope"));
            }
        }
    }

    fn check_gen(&mut self, e: &GenExpr, scope: &[u32], path: &str) {
        match e {
            GenExpr::Const(_) => {}
            GenExpr::Var(v) => {
                if !scope.contains(v) {
                    self.report("var-scope", path, format!("loop variable d{v} not in scope"));
                }
            }
            GenExpr::Value(v) => self.check_use(*v, path),
            GenExpr::Bin(_, a, b) => {
                self.check_gen(a, scope, path);
                self.check_gen(b, scope, path);
            }
        }
    }

    fn check_index(&mut self, e: &IndexExpr, scope: &[u32], path: &str) {
        match e {
            IndexExpr::Affine(a) => self.check_affine(a, scope, path),
            IndexExpr::General(g) => self.check_gen(g, scope, path),
        }
    }

    fn check_use(&mut self, v: ValueId, path: &str) {
        if !self.defined.contains(&v) {
            self.report("ssa-use-before-def", path, format!("value {v} used before definition"));
        }
    }

    fn check_operand(&mut self, o: &Operand, scope: &[u32], path: &str) {
        match o {
            Operand::Value(v) => self.check_use(*v, path),
            Operand::Index(e) => self.check_index(e, scope, path),
            _ => {}
        }
    }

    fn define(&mut self, v: ValueId, path: &str, seen: &mut HashSet<ValueId>) {
        if !seen.insert(v) {
            self.report("ssa-redefinition", path, format!("value {v} defined more than once"));
        }
        self.defined.insert(v);
    }

    fn check_access(&mut self, array: &str, indices: &[IndexExpr], scope: &[u32], path: &str) {
        match self.func.array_type(array) {
            None => self.report("unknown-array", path, format!("array `{array}` is not declared")),
            Some(t) => {
                if t.rank() != indices.len() {
                    self.report(
                        "index-rank",
                        path,
                        format!("`{array}` has rank {} but access uses {} indices", t.rank(), indices.len()),
                    );
                }
            }
        }
        for e in indices {
            self.check_index(e, scope, path);
        }
    }

    fn block(&mut self, block: &[Stmt], scope: &mut Vec<u32>, path: &str, seen: &mut HashSet<ValueId>) {
        // Values defined in a nested region are not visible after it.
        let saved = self.defined.clone();
        for (i, s) in block.iter().enumerate() {
            let p = format!("{path}/{i}");
            self.stmt(s, scope, &p, seen);
        }
        self.defined = saved;
    }

    fn stmt(&mut self, s: &Stmt, scope: &mut Vec<u32>, path: &str, seen: &mut HashSet<ValueId>) {
        match s {
            Stmt::Loop(l) => {
                let p = format!("{path}:for {}", l.name);
                if l.step <= 0 {
                    self.report("loop-step", &p, format!("step {} is not positive", l.step));
                }
                if scope.contains(&l.var) {
                    self.report("var-shadow", &p, format!("loop variable d{} reused in nested loop", l.var));
                }
                self.check_index(&l.lower, scope, &p);
                self.check_index(&l.upper, scope, &p);
                if let Some(d) = l.directive {
                    if d.pipeline && super::util::contains_loop(&l.body) {
                        self.report("pipeline-nested-loop", &p, "pipelined loop contains a nested loop".into());
                    }
                    if d.pipeline && d.target_ii == 0 {
                        self.report("pipeline-ii", &p, "target II must be positive".into());
                    }
                    if d.flatten && !flattens_to_pipeline(l) {
                        self.report(
                            "flatten-placement",
                            &p,
                            "flatten set on a loop that does not perfectly nest around a pipelined loop".into(),
                        );
                    }
                }
                scope.push(l.var);
                self.block(&l.body, scope, &p, seen);
                scope.pop();
            }
            Stmt::If(i) => {
                for c in &i.conds {
                    self.check_affine(&c.expr, scope, path);
                }
                self.block(&i.then_body, scope, &format!("{path}:then"), seen);
                self.block(&i.else_body, scope, &format!("{path}:else"), seen);
            }
            Stmt::Load { result, array, indices } => {
                self.check_access(array, indices, scope, path);
                self.define(*result, path, seen);
            }
            Stmt::Store { value, array, indices } => {
                self.check_operand(value, scope, path);
                self.check_access(array, indices, scope, path);
            }
            Stmt::Arith { result, op, operands, .. } => {
                if operands.len() != op.arity() {
                    self.report(
                        "arith-arity",
                        path,
                        format!("{} expects {} operands, got {}", op.name(), op.arity(), operands.len()),
                    );
                }
                for o in operands {
                    self.check_operand(o, scope, path);
                }
                self.define(*result, path, seen);
            }
            Stmt::Call { callee, args } => {
                for a in args {
                    match a {
                        CallArg::Array(n) => {
                            if self.func.array_type(n).is_none() {
                                self.report("unknown-array", path, format!("array `{n}` is not declared"));
                            }
                        }
                        CallArg::Scalar(o) => self.check_operand(o, scope, path),
                    }
                }
                if let Some(prog) = self.prog {
                    match prog.function(callee) {
                        None => self.report("unknown-callee", path, format!("no function `{callee}`")),
                        Some(cf) if cf.params.len() != args.len() => self.report(
                            "call-arity",
                            path,
                            format!("`{callee}` takes {} arguments, got {}", cf.params.len(), args.len()),
                        ),
                        Some(_) => {}
                    }
                }
            }
            Stmt::Copy { src, dst } => {
                let (a, b) = (self.func.array_type(src), self.func.array_type(dst));
                match (a, b) {
                    (Some(a), Some(b)) if a.shape != b.shape || a.elem != b.elem => {
                        self.report("copy-shape", path, format!("copy between `{src}` and `{dst}` of different types"))
                    }
                    (None, _) | (_, None) => {
                        self.report("unknown-array", path, format!("copy `{src}` -> `{dst}` names an undeclared array"))
                    }
                    _ => {}
                }
            }
        }
    }
}

/// A loop may carry flatten only if it is a perfect chain down to a pipelined loop.
fn flattens_to_pipeline(l: &Loop) -> bool {
    let mut cur = l;
    loop {
        if !cur.is_perfect_parent() {
            return false;
        }
        let Stmt::Loop(child) = &cur.body[0] else { return false };
        if child.is_pipelined() {
            return true;
        }
        if !child.is_flattened() {
            return false;
        }
        cur = child;
    }
}

pub fn verify_function(f: &Function, prog: Option<&Program>) -> Vec<Diagnostic> {
    let mut ctx = Ctx { prog, func: f, diags: vec![], defined: HashSet::new() };
    let root = f.name.clone();
    let mut seen = HashSet::new();
    let mut names = HashSet::new();
    if f.directive.dataflow && f.directive.pipeline {
        ctx.report("func-directive-exclusive", &root, "dataflow and pipeline both set".into());
    }
    if f.directive.pipeline && f.directive.target_ii == 0 {
        ctx.report("pipeline-ii", &root, "target II must be positive".into());
    }
    for p in &f.params {
        if !names.insert(p.name().to_string()) {
            ctx.report("duplicate-name", &root, format!("`{}` declared twice", p.name()));
        }
        match p {
            Param::Scalar { value, .. } => ctx.define(*value, &root, &mut seen),
            Param::Array { name, ty, .. } => check_type(&mut ctx, name, ty, &root),
        }
    }
    for l in &f.locals {
        if !names.insert(l.name.clone()) {
            ctx.report("duplicate-name", &root, format!("`{}` declared twice", l.name));
        }
        check_type(&mut ctx, &l.name, &l.ty, &root);
    }
    let mut scope = vec![];
    ctx.block(&f.body, &mut scope, &root, &mut seen);
    ctx.diags
}

fn check_type(ctx: &mut Ctx, name: &str, ty: &super::types::MemRefType, path: &str) {
    if ty.shape.is_empty() || ty.shape.iter().any(|&e| e <= 0) {
        ctx.report("shape", path, format!("`{name}` must have positive extents"));
    }
    match ty.check_layout() {
        Ok(()) => {}
        Err(LayoutError::Arity { .. }) => {
            ctx.report("layout-arity", path, format!("`{name}`: layout needs 2N results for rank {}", ty.rank()))
        }
        Err(e) => ctx.report("layout-fashion", path, format!("`{name}`: {e}")),
    }
}

pub fn verify(p: &Program) -> Vec<Diagnostic> {
    let mut out = vec![];
    if p.function(&p.top).is_none() {
        out.push(Diagnostic { rule: "missing-top", path: p.top.clone(), message: "top function not found".into() });
    }
    for f in &p.functions {
        out.extend(verify_function(f, Some(p)));
    }
    out
}
