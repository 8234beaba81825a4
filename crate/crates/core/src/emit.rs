//! HLS C++ emission.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::ir::verify::verify;
use crate::ir::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error("program does not verify: {0}")]
    Invalid(String),
    #[error("array `{array}`: {msg}")]
    Layout { array: String, msg: String },
    #[error("{0}")]
    Unsupported(String),
}

/// Pragma syntax (Vivado HLS 2019.1 dialect).
pub mod pragma {
    use crate::ir::{Fashion, InterfaceKind, MemorySpace};

    pub fn pipeline(ii: u32) -> String {
        format!("#pragma HLS pipeline II={ii}")
    }

    pub fn loop_flatten() -> String {
        "#pragma HLS loop_flatten".into()
    }

    pub fn dataflow() -> String {
        "#pragma HLS dataflow".into()
    }

    pub fn interface_array(port: &str, kind: InterfaceKind) -> String {
        match kind {
            InterfaceKind::Axi => format!("#pragma HLS interface m_axi port={port} offset=slave"),
            InterfaceKind::Bram => format!("#pragma HLS interface bram port={port}"),
        }
    }

    pub fn interface_scalar(port: &str) -> String {
        format!("#pragma HLS interface s_axilite port={port}")
    }

    pub fn resource(var: &str, space: MemorySpace) -> Option<String> {
        let core = match space {
            MemorySpace::OnChip1P => "RAM_1P_BRAM",
            MemorySpace::OnChip2PSimple => "RAM_S2P_BRAM",
            MemorySpace::OnChip2PTrue => "RAM_T2P_BRAM",
            MemorySpace::OffChip => return None,
        };
        Some(format!("#pragma HLS resource variable={var} core={core}"))
    }

    /// `dim` is zero-based here and one-based in the output.
    pub fn array_partition(var: &str, fashion: Fashion, factor: i64, dim: usize) -> Option<String> {
        let f = match fashion {
            Fashion::None => return None,
            Fashion::Cyclic => "cyclic",
            Fashion::Block => "block",
        };
        Some(format!("#pragma HLS array_partition variable={var} {f} factor={factor} dim={}", dim + 1))
    }
}

const FLOORDIV_HELPER: &str = "static inline int hls_floordiv(int a, int b) {\n  return a >= 0 ? a / b : -((-a + b - 1) / b);\n}\n";
const MOD_HELPER: &str = "static inline int hls_mod(int a, int b) {\n  int r = a % b;\n  return r < 0 ? r + b : r;\n}\n";

const RESERVED: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern", "float",
    "for", "goto", "if", "inline", "int", "long", "register", "return", "short", "signed", "sizeof", "static", "struct",
    "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "bool", "class", "new", "delete", "this",
    "true", "false", "hls_floordiv", "hls_mod",
];

/// Lines of `src` that are pragmas, trimmed.
pub fn pragma_lines(src: &str) -> Vec<&str> {
    src.lines().map(str::trim).filter(|l| l.starts_with("#pragma")).collect()
}

/// The C declaration of a parameter.
fn param_decl(p: &Param) -> String {
    match p {
        Param::Scalar { name, elem, .. } => format!("{} {name}", elem.c_name()),
        Param::Array { name, ty, .. } => format!("{} {name}{}", ty.elem.c_name(), dims(&ty.shape)),
    }
}

fn dims(shape: &[i64]) -> String {
    shape.iter().map(|e| format!("[{e}]")).collect()
}

fn signature(f: &Function) -> String {
    let ps: Vec<String> = f.params.iter().map(param_decl).collect();
    format!("void {}({})", f.name, ps.join(", "))
}

/// Prototype of the top function.
pub fn emit_header(p: &Program) -> Result<String, EmitError> {
    check(p)?;
    Ok(format!("#pragma once\n\n{};\n", signature(p.top_function())))
}

fn check(p: &Program) -> Result<(), EmitError> {
    let diags = verify(p);
    if !diags.is_empty() {
        let msgs: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return Err(EmitError::Invalid(msgs.join("; ")));
    }
    Ok(())
}

/// Callees before callers, otherwise in program order.
fn emission_order(p: &Program) -> Vec<&Function> {
    fn visit<'a>(p: &'a Program, f: &'a Function, done: &mut HashSet<String>, out: &mut Vec<&'a Function>) {
        if !done.insert(f.name.clone()) {
            return;
        }
        util::walk(&f.body, &mut |s| {
            if let Stmt::Call { callee, .. } = s {
                if let Some(g) = p.function(callee) {
                    visit(p, g, done, out);
                }
            }
        });
        out.push(f);
    }
    let mut done = HashSet::new();
    let mut out = vec![];
    for f in &p.functions {
        visit(p, f, &mut done, &mut out);
    }
    out
}

/// Emits the program as C++ with synthesis pragmas.
pub fn emit(p: &Program) -> Result<String, EmitError> {
    check(p)?;
    let mut body = String::new();
    for (k, f) in emission_order(p).into_iter().enumerate() {
        if k > 0 {
            body.push('\n');
        }
        body.push_str(&FnEmitter::new(f, f.name == p.top).run()?);
    }
    let mut out = String::new();
    if body.contains("hls_floordiv(") {
        out.push_str(FLOORDIV_HELPER);
        out.push('\n');
    }
    if body.contains("hls_mod(") {
        out.push_str(MOD_HELPER);
        out.push('\n');
    }
    out.push_str(&body);
    Ok(out)
}

fn gen_values(g: &GenExpr, out: &mut Vec<ValueId>) {
    match g {
        GenExpr::Value(v) => out.push(*v),
        GenExpr::Bin(_, a, b) => {
            gen_values(a, out);
            gen_values(b, out);
        }
        GenExpr::Const(_) | GenExpr::Var(_) => {}
    }
}

fn index_values(ix: &IndexExpr, out: &mut Vec<ValueId>) {
    if let IndexExpr::General(g) = ix {
        gen_values(g, out);
    }
}

fn operand_values(o: &Operand, out: &mut Vec<ValueId>) {
    match o {
        Operand::Value(v) => out.push(*v),
        Operand::Index(ix) => index_values(ix, out),
        Operand::ConstF(_) | Operand::ConstI(_) => {}
    }
}

/// Values read by the statement itself, not by nested blocks. Loop bounds count
/// only when `bounds` is set.
fn own_values(s: &Stmt, bounds: bool, out: &mut Vec<ValueId>) {
    match s {
        Stmt::Load { indices, .. } => indices.iter().for_each(|i| index_values(i, out)),
        Stmt::Store { value, indices, .. } => {
            operand_values(value, out);
            indices.iter().for_each(|i| index_values(i, out));
        }
        Stmt::Arith { operands, .. } => operands.iter().for_each(|o| operand_values(o, out)),
        Stmt::Call { args, .. } => {
            for a in args {
                if let CallArg::Scalar(o) = a {
                    operand_values(o, out);
                }
            }
        }
        Stmt::Loop(l) if bounds => {
            index_values(&l.lower, out);
            index_values(&l.upper, out);
        }
        Stmt::Loop(_) | Stmt::If(_) | Stmt::Copy { .. } => {}
    }
}

fn float_lit(x: f32) -> Result<String, EmitError> {
    if !x.is_finite() {
        return Err(EmitError::Unsupported(format!("non-finite constant {x}")));
    }
    Ok(format!("{x:?}f"))
}

fn sanitize(name: &str) -> String {
    let s: String = name.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
    match s.chars().next() {
        Some(c) if !c.is_ascii_digit() => s,
        _ => format!("i{s}"),
    }
}

struct FnEmitter<'a> {
    f: &'a Function,
    top: bool,
    out: String,
    indent: usize,
    globals: HashSet<String>,
    loop_names: HashSet<String>,
    scope: Vec<String>,
    vars: HashMap<u32, String>,
    ranges: HashMap<u32, (i64, i64)>,
    names: HashMap<ValueId, String>,
    types: std::collections::BTreeMap<ValueId, ElemKind>,
    uses: HashMap<ValueId, usize>,
    pending: Vec<(ValueId, String)>,
}

type R<T> = Result<T, EmitError>;

impl<'a> FnEmitter<'a> {
    fn new(f: &'a Function, top: bool) -> Self {
        let mut globals: HashSet<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        globals.extend(f.params.iter().map(|p| p.name().to_string()));
        globals.extend(f.locals.iter().map(|l| l.name.clone()));
        globals.insert(f.name.clone());
        let mut loop_names = HashSet::new();
        let mut uses: HashMap<ValueId, usize> = HashMap::new();
        util::walk(&f.body, &mut |s| {
            if let Stmt::Loop(l) = s {
                loop_names.insert(l.name.clone());
            }
            let mut v = vec![];
            own_values(s, true, &mut v);
            for x in v {
                *uses.entry(x).or_default() += 1;
            }
        });
        let mut names = HashMap::new();
        for p in &f.params {
            if let Param::Scalar { name, value, .. } = p {
                names.insert(*value, name.clone());
            }
        }
        FnEmitter {
            f,
            top,
            out: String::new(),
            indent: 0,
            globals,
            loop_names,
            scope: vec![],
            vars: HashMap::new(),
            ranges: HashMap::new(),
            names,
            types: f.value_types(),
            uses,
            pending: vec![],
        }
    }

    fn line(&mut self, s: &str) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn array_pragmas(&mut self, name: &str, ty: &MemRefType) -> R<()> {
        let parts = ty.decode_partition().map_err(|e| EmitError::Layout { array: name.into(), msg: e.to_string() })?;
        if let Some(r) = pragma::resource(name, ty.space) {
            self.line(&r);
        }
        for (d, p) in parts.iter().enumerate() {
            if let Some(s) = pragma::array_partition(name, p.fashion, p.factor, d) {
                self.line(&s);
            }
        }
        Ok(())
    }

    fn run(mut self) -> R<String> {
        let f = self.f;
        self.line(&format!("{} {{", signature(f)));
        self.indent += 1;
        if self.top {
            for p in &f.params {
                let s = match p {
                    Param::Scalar { name, .. } => pragma::interface_scalar(name),
                    Param::Array { name, interface, .. } => pragma::interface_array(name, *interface),
                };
                self.line(&s);
            }
        }
        for p in &f.params {
            if let Param::Array { name, ty, .. } = p {
                self.array_pragmas(name, ty)?;
            }
        }
        if f.directive.dataflow {
            self.line(&pragma::dataflow());
        }
        if f.directive.pipeline {
            self.line(&pragma::pipeline(f.directive.target_ii));
        }
        for l in &f.locals {
            self.line(&format!("{} {}{};", l.ty.elem.c_name(), l.name, dims(&l.ty.shape)));
            self.array_pragmas(&l.name, &l.ty)?;
        }
        self.block(&f.body, false)?;
        self.indent -= 1;
        self.line("}");
        Ok(self.out)
    }

    fn fresh_name(&self, base: &str, tag: u32) -> String {
        let taken = |n: &str| self.globals.contains(n) || self.scope.iter().any(|s| s == n);
        if !taken(base) {
            return base.to_string();
        }
        let first = format!("{base}_{tag}");
        if !taken(&first) {
            return first;
        }
        (2..).map(|k| format!("{base}_{tag}_{k}")).find(|n| !taken(n)).unwrap()
    }

    fn value(&mut self, v: ValueId) -> R<String> {
        if let Some(k) = self.pending.iter().position(|(id, _)| *id == v) {
            return Ok(self.pending.remove(k).1);
        }
        self.names.get(&v).cloned().ok_or_else(|| EmitError::Unsupported(format!("value {v} has no definition in scope")))
    }

    fn flush(&mut self) {
        for (v, e) in std::mem::take(&mut self.pending) {
            self.declare(v, e);
        }
    }

    fn declare(&mut self, v: ValueId, expr: String) {
        let mut name = format!("v{}", v.0);
        while self.globals.contains(&name) || self.loop_names.contains(&name) {
            name.push('_');
        }
        let ty = self.types.get(&v).copied().unwrap_or(ElemKind::I32);
        self.line(&format!("{} {name} = {expr};", ty.c_name()));
        self.names.insert(v, name);
    }

    fn define(&mut self, v: ValueId, expr: String, direct: &HashSet<ValueId>) {
        match self.uses.get(&v).copied().unwrap_or(0) {
            0 => {}
            1 if direct.contains(&v) => self.pending.push((v, expr)),
            _ => self.declare(v, expr),
        }
    }

    fn nonneg(&self, e: &AffineExpr) -> bool {
        e.range(&|v| self.ranges.get(&v).copied()).map_or(false, |(lo, _)| lo >= 0)
    }

    fn var(&self, v: u32) -> String {
        self.vars.get(&v).cloned().unwrap_or_else(|| format!("d{v}"))
    }

    fn aff(&self, e: &AffineExpr) -> String {
        match e {
            AffineExpr::Const(c) => c.to_string(),
            AffineExpr::Var(v) => self.var(*v),
            AffineExpr::Add(a, b) => match b.as_ref() {
                AffineExpr::Const(c) if *c < 0 => format!("{} - {}", self.aff(a), -c),
                AffineExpr::Mul(inner, k) if *k < 0 => {
                    let abs = if *k == -1 { self.aff_atom(inner) } else { format!("{} * {}", self.aff_atom(inner), -k) };
                    format!("{} - {}", self.aff(a), abs)
                }
                _ => format!("{} + {}", self.aff(a), self.aff(b)),
            },
            AffineExpr::Mul(a, k) if *k == -1 => format!("-{}", self.aff_atom(a)),
            AffineExpr::Mul(a, k) => format!("{} * {k}", self.aff_atom(a)),
            AffineExpr::FloorDiv(a, c) if self.nonneg(a) => format!("{} / {c}", self.aff_atom(a)),
            AffineExpr::FloorDiv(a, c) => format!("hls_floordiv({}, {c})", self.aff(a)),
            AffineExpr::Mod(a, c) if self.nonneg(a) => format!("{} % {c}", self.aff_atom(a)),
            AffineExpr::Mod(a, c) => format!("hls_mod({}, {c})", self.aff(a)),
        }
    }

    fn aff_atom(&self, e: &AffineExpr) -> String {
        match e {
            AffineExpr::Const(c) if *c < 0 => format!("({c})"),
            AffineExpr::Const(_) | AffineExpr::Var(_) => self.aff(e),
            _ => format!("({})", self.aff(e)),
        }
    }

    fn general(&mut self, g: &GenExpr) -> R<String> {
        Ok(match g {
            GenExpr::Const(c) => c.to_string(),
            GenExpr::Var(v) => self.var(*v),
            GenExpr::Value(v) => self.value(*v)?,
            GenExpr::Bin(op, a, b) => {
                let (x, y) = (self.general(a)?, self.general(b)?);
                match op {
                    GenOp::Add => format!("({x} + {y})"),
                    GenOp::Sub => format!("({x} - {y})"),
                    GenOp::Mul => format!("({x} * {y})"),
                    GenOp::Div => format!("({x} / {y})"),
                    GenOp::Rem => format!("({x} % {y})"),
                    GenOp::FloorDiv => format!("hls_floordiv({x}, {y})"),
                    GenOp::Mod => format!("hls_mod({x}, {y})"),
                }
            }
        })
    }

    fn index(&mut self, ix: &IndexExpr) -> R<String> {
        match ix {
            IndexExpr::Affine(e) => Ok(self.aff(e)),
            IndexExpr::General(g) => self.general(g),
        }
    }

    fn subscripts(&mut self, ix: &[IndexExpr]) -> R<String> {
        let mut s = String::new();
        for i in ix {
            let _ = write!(s, "[{}]", self.index(i)?);
        }
        Ok(s)
    }

    fn operand(&mut self, o: &Operand) -> R<String> {
        match o {
            Operand::Value(v) => self.value(*v),
            Operand::ConstF(x) => float_lit(*x),
            Operand::ConstI(i) => Ok(i.to_string()),
            Operand::Index(ix) => {
                let s = self.index(ix)?;
                let compound = match ix {
                    IndexExpr::Affine(AffineExpr::Add(..) | AffineExpr::Mul(..)) => true,
                    IndexExpr::Affine(AffineExpr::FloorDiv(a, _) | AffineExpr::Mod(a, _)) => self.nonneg(a),
                    _ => false,
                };
                Ok(if compound { format!("({s})") } else { s })
            }
        }
    }

    fn arith(&mut self, op: ArithOp, operands: &[Operand], ty: ElemKind) -> R<String> {
        let a = self.operand(&operands[0])?;
        let sym = match op {
            ArithOp::Neg => return Ok(if a.starts_with('-') { format!("(-({a}))") } else { format!("(-{a})") }),
            ArithOp::IToF => return Ok(format!("((float){a})")),
            ArithOp::FToI => return Ok(format!("((int){a})")),
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Rem if ty == ElemKind::F32 => {
                return Err(EmitError::Unsupported("floating-point remainder has no C operator".into()))
            }
            ArithOp::Rem => "%",
        };
        let b = self.operand(&operands[1])?;
        Ok(format!("({a} {sym} {b})"))
    }

    fn block(&mut self, b: &[Stmt], flatten_into: bool) -> R<()> {
        let mut direct = vec![];
        for s in b {
            own_values(s, false, &mut direct);
        }
        let direct: HashSet<ValueId> = direct.into_iter().collect();
        for s in b {
            self.stmt(s, &direct, flatten_into)?;
        }
        self.flush();
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, direct: &HashSet<ValueId>, flatten_into: bool) -> R<()> {
        match s {
            Stmt::Load { result, array, indices } => {
                let e = format!("{array}{}", self.subscripts(indices)?);
                self.define(*result, e, direct);
            }
            Stmt::Arith { result, op, operands, ty } => {
                let e = self.arith(*op, operands, *ty)?;
                self.define(*result, e, direct);
            }
            Stmt::Store { value, array, indices } => {
                let v = self.operand(value)?;
                let ix = self.subscripts(indices)?;
                self.flush();
                self.line(&format!("{array}{ix} = {v};"));
            }
            Stmt::Call { callee, args } => {
                let mut xs = vec![];
                for a in args {
                    xs.push(match a {
                        CallArg::Array(n) => n.clone(),
                        CallArg::Scalar(o) => self.operand(o)?,
                    });
                }
                self.flush();
                self.line(&format!("{callee}({});", xs.join(", ")));
            }
            Stmt::Copy { src, dst } => {
                self.flush();
                let ty = self.f.array_type(dst).ok_or_else(|| EmitError::Unsupported(format!("copy into unknown `{dst}`")))?;
                let shape = ty.shape.clone();
                let mut idx = String::new();
                for (d, e) in shape.iter().enumerate() {
                    let n = self.fresh_name(&format!("c{d}"), d as u32);
                    self.line(&format!("for (int {n} = 0; {n} < {e}; {n}++) {{"));
                    self.indent += 1;
                    self.scope.push(n.clone());
                    let _ = write!(idx, "[{n}]");
                }
                self.line(&format!("{dst}{idx} = {src}{idx};"));
                for _ in &shape {
                    self.scope.pop();
                    self.indent -= 1;
                    self.line("}");
                }
            }
            Stmt::Loop(l) => {
                self.flush();
                self.emit_loop(l, flatten_into)?;
            }
            Stmt::If(i) => {
                self.flush();
                let conds: Vec<String> =
                    i.conds.iter().map(|c| format!("{} {} 0", self.aff(&c.expr), if c.eq { "==" } else { ">=" })).collect();
                let conds = if conds.is_empty() { "0 == 0".to_string() } else { conds.join(" && ") };
                self.line(&format!("if ({conds}) {{"));
                self.indent += 1;
                self.block(&i.then_body, false)?;
                self.indent -= 1;
                if !i.else_body.is_empty() {
                    self.line("} else {");
                    self.indent += 1;
                    self.block(&i.else_body, false)?;
                    self.indent -= 1;
                }
                self.line("}");
            }
        }
        Ok(())
    }

    fn emit_loop(&mut self, l: &Loop, flatten_into: bool) -> R<()> {
        let name = self.fresh_name(&sanitize(&l.name), l.var);
        let lower = self.index(&l.lower)?;
        let upper = self.index(&l.upper)?;
        if let (Some(lo), Some(up)) = (l.lower.as_affine(), l.upper.as_affine()) {
            let r = |v: u32| self.ranges.get(&v).copied();
            if let (Some((a, _)), Some((_, b))) = (lo.range(&r), up.range(&r)) {
                self.ranges.insert(l.var, (a, b - 1));
            }
        }
        let step = if l.step == 1 { format!("{name}++") } else { format!("{name} += {}", l.step) };
        self.line(&format!("for (int {name} = {lower}; {name} < {upper}; {step}) {{"));
        self.indent += 1;
        if let Some(d) = l.directive.filter(|d| d.pipeline) {
            self.line(&pragma::pipeline(d.target_ii));
            if flatten_into {
                self.line(&pragma::loop_flatten());
            }
        }
        self.vars.insert(l.var, name.clone());
        self.scope.push(name);
        self.block(&l.body, l.is_flattened())?;
        self.scope.pop();
        self.ranges.remove(&l.var);
        self.indent -= 1;
        self.line("}");
        Ok(())
    }
}

/// Array names mentioned by the program's partition pragmas, for checks.
pub fn partitioned_dims(src: &str) -> BTreeSet<(String, usize, String, i64)> {
    pragma_lines(src)
        .into_iter()
        .filter_map(|l| {
            let rest = l.strip_prefix("#pragma HLS array_partition variable=")?;
            let w: Vec<&str> = rest.split_whitespace().collect();
            let factor = w.get(2)?.strip_prefix("factor=")?.parse().ok()?;
            let dim: usize = w.get(3)?.strip_prefix("dim=")?.parse().ok()?;
            Some((w[0].to_string(), dim - 1, w[1].to_string(), factor))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_and_raise;

    #[test]
    fn empty_function_has_interface_pragmas_only() {
        let p = parse_and_raise("void f(float a[4], int n) { }").unwrap();
        let s = emit(&p).unwrap();
        assert_eq!(
            s,
            "void f(float a[4], int n) {\n  #pragma HLS interface bram port=a\n  #pragma HLS interface s_axilite port=n\n  #pragma HLS resource variable=a core=RAM_T2P_BRAM\n}\n"
        );
    }

    #[test]
    fn single_use_values_are_inlined() {
        let p = parse_and_raise("void f(float a[4], float b[4]) { for (int i = 0; i < 4; i++) b[i] = a[i] * 2.0f + b[i]; }").unwrap();
        let s = emit(&p).unwrap();
        assert!(s.contains("b[i] = ((a[i] * 2.0f) + b[i]);"), "{s}");
    }

    #[test]
    fn negative_dividends_use_helpers() {
        let mut f = Function::new("f");
        f.params.push(Param::Array {
            name: "a".into(),
            ty: MemRefType::new(vec![8], ElemKind::I32, MemorySpace::OnChip2PTrue),
            interface: InterfaceKind::Bram,
        });
        let v = f.fresh_var();
        let i = AffineExpr::Var(v);
        let body = vec![Stmt::Store {
            value: Operand::Index(IndexExpr::Affine(AffineExpr::FloorDiv(
                Box::new(AffineExpr::Add(Box::new(i.clone()), Box::new(AffineExpr::Const(-3)))),
                2,
            ))),
            array: "a".into(),
            indices: vec![IndexExpr::Affine(i.clone().modulo(8))],
        }];
        f.body = vec![Stmt::Loop(Loop {
            var: v,
            name: "i".into(),
            lower: IndexExpr::cst(0),
            upper: IndexExpr::cst(8),
            step: 1,
            body,
            directive: None,
            tag: LoopTag::Plain,
        })];
        let s = emit(&Program::single(f)).unwrap();
        assert!(s.starts_with(FLOORDIV_HELPER), "{s}");
        assert!(!s.contains("hls_mod("), "{s}");
        assert!(s.contains("a[i % 8] = hls_floordiv(i - 3, 2);"), "{s}");
    }
}
