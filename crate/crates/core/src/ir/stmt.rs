use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::affine::AffineExpr;
use super::types::{ElemKind, InterfaceKind, MemRefType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValueId(pub u32);

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GenOp {
    Add,
    Sub,
    Mul,
    /// C division (truncates toward zero).
    Div,
    /// C remainder (sign follows the dividend).
    Rem,
    /// Floor division (only produced by substituting affine expressions).
    FloorDiv,
    /// Euclidean modulo.
    Mod,
}

/// Integer index expression outside the affine fragment.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GenExpr {
    Const(i64),
    Var(u32),
    Value(ValueId),
    Bin(GenOp, Box<GenExpr>, Box<GenExpr>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexExpr {
    Affine(AffineExpr),
    General(GenExpr),
}

impl IndexExpr {
    pub fn as_affine(&self) -> Option<&AffineExpr> {
        match self {
            IndexExpr::Affine(e) => Some(e),
            IndexExpr::General(_) => None,
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, IndexExpr::Affine(_))
    }

    pub fn cst(c: i64) -> Self {
        IndexExpr::Affine(AffineExpr::Const(c))
    }
}

impl From<AffineExpr> for IndexExpr {
    fn from(e: AffineExpr) -> Self {
        IndexExpr::Affine(e)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Operand {
    Value(ValueId),
    ConstF(f32),
    ConstI(i32),
    /// An index expression used as an i32 value.
    Index(IndexExpr),
}

impl PartialEq for Operand {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Operand::Value(a), Operand::Value(b)) => a == b,
            (Operand::ConstF(a), Operand::ConstF(b)) => a.to_bits() == b.to_bits(),
            (Operand::ConstI(a), Operand::ConstI(b)) => a == b,
            (Operand::Index(a), Operand::Index(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Operand {}

impl Hash for Operand {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Operand::Value(v) => v.hash(state),
            Operand::ConstF(f) => f.to_bits().hash(state),
            Operand::ConstI(i) => i.hash(state),
            Operand::Index(e) => e.hash(state),
        }
    }
}

impl Operand {
    pub fn as_value(&self) -> Option<ValueId> {
        match self {
            Operand::Value(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Neg,
    /// i32 -> f32
    IToF,
    /// f32 -> i32 (truncating)
    FToI,
}

impl ArithOp {
    pub fn arity(self) -> usize {
        match self {
            ArithOp::Neg | ArithOp::IToF | ArithOp::FToI => 1,
            _ => 2,
        }
    }

    pub fn commutative(self) -> bool {
        matches!(self, ArithOp::Add | ArithOp::Mul)
    }

    pub fn name(self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::Mul => "mul",
            ArithOp::Div => "div",
            ArithOp::Rem => "rem",
            ArithOp::Neg => "neg",
            ArithOp::IToF => "itof",
            ArithOp::FToI => "ftoi",
        }
    }
}

/// `expr >= 0` or `expr == 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub expr: AffineExpr,
    pub eq: bool,
}

impl Constraint {
    pub fn ge(expr: AffineExpr) -> Self {
        Constraint { expr, eq: false }
    }

    pub fn eq(expr: AffineExpr) -> Self {
        Constraint { expr, eq: true }
    }

    pub fn holds(&self, vars: &dyn Fn(u32) -> i64) -> bool {
        let v = self.expr.eval(vars);
        if self.eq {
            v == 0
        } else {
            v >= 0
        }
    }
}

#[derive(Clone, Default, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoopDirective {
    pub pipeline: bool,
    pub target_ii: u32,
    pub flatten: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FuncDirective {
    pub dataflow: bool,
    pub pipeline: bool,
    pub target_ii: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoopTag {
    #[default]
    Plain,
    TileInter,
    TileIntra,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Loop {
    pub var: u32,
    pub name: String,
    pub lower: IndexExpr,
    /// Exclusive upper bound.
    pub upper: IndexExpr,
    pub step: i64,
    pub body: Vec<Stmt>,
    pub directive: Option<LoopDirective>,
    pub tag: LoopTag,
}

impl Loop {
    pub fn is_affine(&self) -> bool {
        self.lower.is_affine() && self.upper.is_affine()
    }

    pub fn const_bounds(&self) -> Option<(i64, i64)> {
        Some((self.lower.as_affine()?.as_const()?, self.upper.as_affine()?.as_const()?))
    }

    pub fn const_trip(&self) -> Option<i64> {
        self.const_bounds().map(|(l, u)| trip_count(l, u, self.step))
    }

    pub fn is_pipelined(&self) -> bool {
        self.directive.map_or(false, |d| d.pipeline)
    }

    pub fn is_flattened(&self) -> bool {
        self.directive.map_or(false, |d| d.flatten)
    }

    /// The single loop nested in this loop's body, if the body contains exactly one loop.
    pub fn only_child_loop(&self) -> Option<&Loop> {
        let mut found = None;
        for s in &self.body {
            if let Stmt::Loop(l) = s {
                if found.is_some() {
                    return None;
                }
                found = Some(l);
            }
        }
        found
    }

    pub fn only_child_loop_mut(&mut self) -> Option<&mut Loop> {
        let n = self.body.iter().filter(|s| matches!(s, Stmt::Loop(_))).count();
        if n != 1 {
            return None;
        }
        self.body.iter_mut().find_map(|s| match s {
            Stmt::Loop(l) => Some(l),
            _ => None,
        })
    }

    /// True when the body is exactly one loop and nothing else.
    pub fn is_perfect_parent(&self) -> bool {
        self.body.len() == 1 && matches!(self.body[0], Stmt::Loop(_))
    }
}

pub fn trip_count(lower: i64, upper: i64, step: i64) -> i64 {
    if upper <= lower {
        0
    } else {
        (upper - lower + step - 1) / step
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IfStmt {
    pub conds: Vec<Constraint>,
    pub then_body: Vec<Stmt>,
    pub else_body: Vec<Stmt>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CallArg {
    Array(String),
    Scalar(Operand),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Stmt {
    Loop(Loop),
    If(IfStmt),
    Load { result: ValueId, array: String, indices: Vec<IndexExpr> },
    Store { value: Operand, array: String, indices: Vec<IndexExpr> },
    Arith { result: ValueId, op: ArithOp, operands: Vec<Operand>, ty: ElemKind },
    Call { callee: String, args: Vec<CallArg> },
    Copy { src: String, dst: String },
}

impl Stmt {
    pub fn as_loop(&self) -> Option<&Loop> {
        match self {
            Stmt::Loop(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_loop_mut(&mut self) -> Option<&mut Loop> {
        match self {
            Stmt::Loop(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_memory(&self) -> bool {
        matches!(self, Stmt::Load { .. } | Stmt::Store { .. })
    }

    /// Statements with effects beyond defining an SSA value.
    pub fn has_side_effects(&self) -> bool {
        match self {
            Stmt::Load { .. } | Stmt::Arith { .. } => false,
            Stmt::Store { .. } | Stmt::Call { .. } | Stmt::Copy { .. } => true,
            Stmt::Loop(l) => l.body.iter().any(Stmt::has_side_effects),
            Stmt::If(i) => {
                i.then_body.iter().any(Stmt::has_side_effects)
                    || i.else_body.iter().any(Stmt::has_side_effects)
            }
        }
    }

    pub fn defined_value(&self) -> Option<ValueId> {
        match self {
            Stmt::Load { result, .. } | Stmt::Arith { result, .. } => Some(*result),
            _ => None,
        }
    }

    pub fn child_blocks(&self) -> Vec<&Vec<Stmt>> {
        match self {
            Stmt::Loop(l) => vec![&l.body],
            Stmt::If(i) => vec![&i.then_body, &i.else_body],
            _ => vec![],
        }
    }

    pub fn child_blocks_mut(&mut self) -> Vec<&mut Vec<Stmt>> {
        match self {
            Stmt::Loop(l) => vec![&mut l.body],
            Stmt::If(i) => vec![&mut i.then_body, &mut i.else_body],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Param {
    Scalar { name: String, elem: ElemKind, value: ValueId },
    Array { name: String, ty: MemRefType, interface: InterfaceKind },
}

impl Param {
    pub fn name(&self) -> &str {
        match self {
            Param::Scalar { name, .. } | Param::Array { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayDecl {
    pub name: String,
    pub ty: MemRefType,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub locals: Vec<ArrayDecl>,
    pub body: Vec<Stmt>,
    pub directive: FuncDirective,
    pub next_value: u32,
    pub next_var: u32,
}

impl Function {
    pub fn new(name: impl Into<String>) -> Self {
        Function {
            name: name.into(),
            params: vec![],
            locals: vec![],
            body: vec![],
            directive: FuncDirective::default(),
            next_value: 0,
            next_var: 0,
        }
    }

    pub fn fresh_value(&mut self) -> ValueId {
        let v = ValueId(self.next_value);
        self.next_value += 1;
        v
    }

    pub fn fresh_var(&mut self) -> u32 {
        let v = self.next_var;
        self.next_var += 1;
        v
    }

    pub fn array_type(&self, name: &str) -> Option<&MemRefType> {
        self.params
            .iter()
            .find_map(|p| match p {
                Param::Array { name: n, ty, .. } if n == name => Some(ty),
                _ => None,
            })
            .or_else(|| self.locals.iter().find(|l| l.name == name).map(|l| &l.ty))
    }

    pub fn array_type_mut(&mut self, name: &str) -> Option<&mut MemRefType> {
        for p in &mut self.params {
            if let Param::Array { name: n, ty, .. } = p {
                if n == name {
                    return Some(ty);
                }
            }
        }
        self.locals.iter_mut().find(|l| l.name == name).map(|l| &mut l.ty)
    }

    pub fn array_names(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .params
            .iter()
            .filter_map(|p| match p {
                Param::Array { name, .. } => Some(name.clone()),
                _ => None,
            })
            .collect();
        out.extend(self.locals.iter().map(|l| l.name.clone()));
        out
    }

    pub fn is_local(&self, name: &str) -> bool {
        self.locals.iter().any(|l| l.name == name)
    }

    /// Element kind of every SSA value defined in the function.
    pub fn value_types(&self) -> BTreeMap<ValueId, ElemKind> {
        let mut out = BTreeMap::new();
        for p in &self.params {
            if let Param::Scalar { elem, value, .. } = p {
                out.insert(*value, *elem);
            }
        }
        super::util::walk(&self.body, &mut |s| match s {
            Stmt::Load { result, array, .. } => {
                if let Some(t) = self.array_type(array) {
                    out.insert(*result, t.elem);
                }
            }
            Stmt::Arith { result, ty, .. } => {
                out.insert(*result, *ty);
            }
            _ => {}
        });
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub functions: Vec<Function>,
    pub top: String,
}

impl Program {
    pub fn single(f: Function) -> Self {
        let top = f.name.clone();
        Program { functions: vec![f], top }
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_mut(&mut self, name: &str) -> Option<&mut Function> {
        self.functions.iter_mut().find(|f| f.name == name)
    }

    pub fn top_function(&self) -> &Function {
        self.function(&self.top).expect("top function exists")
    }

    pub fn top_function_mut(&mut self) -> &mut Function {
        let top = self.top.clone();
        self.function_mut(&top).expect("top function exists")
    }
}
