use std::collections::HashMap;

use super::lexer::{lex, Tok, Token};
use super::ParseError;
use crate::ir::*;

const BUILTINS: &[&str] = &["hls_floordiv", "hls_mod"];

#[derive(Clone, Debug)]
enum Sym {
    Array(String),
    /// Scalar passed by value (read-only).
    Scalar(ValueId, ElemKind),
    /// Local scalar or scalar pointer, stored as a rank-1 extent-1 array.
    Cell(String, ElemKind),
    LoopVar(u32),
}

/// Lowered expression: either a pure integer index expression or a runtime value.
#[derive(Clone, Debug)]
enum EVal {
    Idx(GenExpr),
    V(Operand, ElemKind),
}

struct FnCtx {
    func: Function,
    scopes: Vec<HashMap<String, Sym>>,
    ret: Option<ElemKind>,
    /// Statement lists under construction; the last is the current block.
    blocks: Vec<Vec<Stmt>>,
}

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(ParseError { line: t.line, col: t.col, msg: msg.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(q) if q == k)
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.is(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> PResult<()> {
        if self.eat(p) {
            Ok(())
        } else {
            self.err(format!("expected `{p}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", describe(&t))),
        }
    }

    fn int_lit(&mut self) -> PResult<i64> {
        let neg = self.eat("-");
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            t => self.err(format!("expected integer constant, found {}", describe(&t))),
        }
    }

    /// Parses `const`/`static`/`inline` qualifiers and a base type.
    fn base_type(&mut self) -> PResult<Option<ElemKind>> {
        while self.is_kw("const") || self.is_kw("static") || self.is_kw("inline") || self.is_kw("unsigned") || self.is_kw("signed") {
            self.bump();
        }
        let t = match self.peek() {
            Tok::Ident(s) if s == "float" || s == "double" => Some(ElemKind::F32),
            Tok::Ident(s) if s == "int" || s == "long" || s == "short" || s == "char" => Some(ElemKind::I32),
            Tok::Ident(s) if s == "void" => None,
            Tok::Ident(s) if s == "struct" || s == "union" || s == "typedef" || s == "enum" => {
                return self.err(format!("unsupported construct `{s}`"))
            }
            t => return self.err(format!("expected a type, found {}", describe(t))),
        };
        self.bump();
        Ok(t)
    }

    fn is_type_start(&self) -> bool {
        matches!(self.peek(), Tok::Ident(s) if matches!(s.as_str(),
            "float" | "double" | "int" | "long" | "short" | "char" | "void" | "const" | "static" | "unsigned" | "signed"))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Float(v) => format!("`{v}`"),
        Tok::Str(s) => format!("\"{s}\""),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".into(),
    }
}

pub fn parse_program(src: &str) -> PResult<Program> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let mut functions: Vec<Function> = vec![];
    while *p.peek() != Tok::Eof {
        if p.is_kw("extern") {
            // extern "C" { ... } wrappers and declarations are skipped.
            p.bump();
            if matches!(p.peek(), Tok::Str(_)) {
                p.bump();
            }
            if p.eat("{") {
                continue;
            }
        }
        if p.eat("}") || p.eat(";") {
            continue;
        }
        let ret = p.base_type()?;
        if p.is("*") {
            return p.err("pointer return types are not supported");
        }
        let name = p.ident()?;
        if BUILTINS.contains(&name.as_str()) {
            skip_balanced_function(&mut p)?;
            continue;
        }
        let f = parse_function(&mut p, name, ret)?;
        if let Some(f) = f {
            functions.push(f);
        }
    }
    if functions.is_empty() {
        return Err(ParseError { line: 1, col: 1, msg: "no function definitions".into() });
    }
    let called: Vec<String> = functions
        .iter()
        .flat_map(|f| {
            let mut v = vec![];
            util::walk(&f.body, &mut |s| {
                if let Stmt::Call { callee, .. } = s {
                    v.push(callee.clone());
                }
            });
            v
        })
        .collect();
    let top = functions
        .iter()
        .rev()
        .find(|f| !called.contains(&f.name))
        .unwrap_or(functions.last().unwrap())
        .name
        .clone();
    Ok(Program { functions, top })
}

fn skip_balanced_function(p: &mut Parser) -> PResult<()> {
    while !p.is("{") && !p.is(";") {
        if *p.peek() == Tok::Eof {
            return p.err("unexpected end of input");
        }
        p.bump();
    }
    if p.eat(";") {
        return Ok(());
    }
    let mut depth = 0;
    loop {
        if p.eat("{") {
            depth += 1;
        } else if p.eat("}") {
            depth -= 1;
            if depth == 0 {
                return Ok(());
            }
        } else if *p.peek() == Tok::Eof {
            return p.err("unbalanced braces");
        } else {
            p.bump();
        }
    }
}

fn parse_function(p: &mut Parser, name: String, ret: Option<ElemKind>) -> PResult<Option<Function>> {
    let mut cx = FnCtx { func: Function::new(name), scopes: vec![HashMap::new()], ret, blocks: vec![vec![]] };
    p.expect("(")?;
    if p.is_kw("void") && matches!(p.peek_at(1), Tok::Punct(")")) {
        p.bump();
    }
    while !p.is(")") {
        let elem = match p.base_type()? {
            Some(e) => e,
            None => return p.err("`void` parameter"),
        };
        let mut stars = 0;
        while p.eat("*") {
            stars += 1;
        }
        if stars > 1 {
            return p.err("pointer to pointer is not supported");
        }
        let pname = p.ident()?;
        let mut shape = vec![];
        while p.eat("[") {
            if p.is("]") {
                return p.err(format!("array `{pname}` must have a fixed size"));
            }
            let e = p.int_lit()?;
            if e <= 0 {
                return p.err(format!("array `{pname}` has non-positive extent"));
            }
            shape.push(e);
            p.expect("]")?;
        }
        if stars == 1 && !shape.is_empty() {
            return p.err("arrays of pointers are not supported");
        }
        if stars == 1 {
            shape.push(1);
        }
        if shape.is_empty() {
            let v = cx.func.fresh_value();
            cx.func.params.push(Param::Scalar { name: pname.clone(), elem, value: v });
            cx.scopes[0].insert(pname, Sym::Scalar(v, elem));
        } else {
            let ty = MemRefType::new(shape, elem, MemorySpace::OnChip2PTrue);
            cx.func.params.push(Param::Array { name: pname.clone(), ty, interface: InterfaceKind::Bram });
            let sym = if stars == 1 { Sym::Cell(pname.clone(), elem) } else { Sym::Array(pname.clone()) };
            cx.scopes[0].insert(pname, sym);
        }
        if !p.eat(",") {
            break;
        }
    }
    p.expect(")")?;
    if p.eat(";") {
        return Ok(None);
    }
    if let Some(elem) = ret {
        let ty = MemRefType::new(vec![1], elem, MemorySpace::OnChip2PTrue);
        cx.func.params.push(Param::Array { name: "ret".into(), ty, interface: InterfaceKind::Bram });
    }
    p.expect("{")?;
    while !p.eat("}") {
        if *p.peek() == Tok::Eof {
            return p.err("unexpected end of input in function body");
        }
        stmt(p, &mut cx)?;
    }
    cx.func.body = cx.blocks.pop().unwrap();
    Ok(Some(cx.func))
}

impl FnCtx {
    fn lookup(&self, name: &str) -> Option<&Sym> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn emit(&mut self, s: Stmt) {
        self.blocks.last_mut().unwrap().push(s);
    }

    fn unique_local(&self, base: &str) -> String {
        let taken = |n: &str| self.func.array_type(n).is_some();
        if !taken(base) {
            return base.to_string();
        }
        (1..).map(|k| format!("{base}_{k}")).find(|n| !taken(n)).unwrap()
    }
}

fn stmt(p: &mut Parser, cx: &mut FnCtx) -> PResult<()> {
    if p.eat(";") {
        return Ok(());
    }
    if p.eat("{") {
        cx.scopes.push(HashMap::new());
        while !p.eat("}") {
            if *p.peek() == Tok::Eof {
                return p.err("unexpected end of input in block");
            }
            stmt(p, cx)?;
        }
        cx.scopes.pop();
        return Ok(());
    }
    if p.is_kw("for") {
        return for_stmt(p, cx);
    }
    if p.is_kw("if") {
        return if_stmt(p, cx);
    }
    if p.is_kw("while") || p.is_kw("do") || p.is_kw("goto") || p.is_kw("switch") || p.is_kw("break") || p.is_kw("continue") {
        return p.err(format!("unsupported statement {}", describe(p.peek())));
    }
    if p.is_kw("return") {
        p.bump();
        if !p.is(";") {
            let e = expr(p, cx)?;
            let Some(elem) = cx.ret else { return p.err("returning a value from a void function") };
            let op = to_operand(cx, e, elem);
            cx.emit(Stmt::Store { value: op, array: "ret".into(), indices: vec![IndexExpr::cst(0)] });
        }
        p.expect(";")?;
        if !p.is("}") {
            return p.err("`return` must be the last statement");
        }
        return Ok(());
    }
    if p.is_type_start() {
        return decl(p, cx);
    }
    // Call statement.
    if let (Tok::Ident(name), Tok::Punct("(")) = (p.peek().clone(), p.peek_at(1).clone()) {
        if cx.lookup(&name).is_none() && !BUILTINS.contains(&name.as_str()) {
            p.bump();
            p.bump();
            let mut args = vec![];
            while !p.is(")") {
                if let (Tok::Ident(a), Tok::Punct(",") | Tok::Punct(")")) = (p.peek().clone(), p.peek_at(1).clone()) {
                    if let Some(Sym::Array(n)) | Some(Sym::Cell(n, _)) = cx.lookup(&a).cloned() {
                        p.bump();
                        args.push(CallArg::Array(n));
                        if !p.eat(",") {
                            break;
                        }
                        continue;
                    }
                }
                let e = expr(p, cx)?;
                let op = match e {
                    EVal::Idx(g) => Operand::Index(IndexExpr::General(g)),
                    EVal::V(o, _) => o,
                };
                args.push(CallArg::Scalar(op));
                if !p.eat(",") {
                    break;
                }
            }
            p.expect(")")?;
            p.expect(";")?;
            cx.emit(Stmt::Call { callee: name, args });
            return Ok(());
        }
    }
    assign(p, cx)?;
    p.expect(";")
}

fn decl(p: &mut Parser, cx: &mut FnCtx) -> PResult<()> {
    let Some(elem) = p.base_type()? else { return p.err("`void` variable") };
    loop {
        if p.is("*") {
            return p.err("local pointers are not supported");
        }
        let name = p.ident()?;
        let mut shape = vec![];
        while p.eat("[") {
            shape.push(p.int_lit()?);
            p.expect("]")?;
        }
        let scalar = shape.is_empty();
        if scalar {
            shape.push(1);
        }
        let ir_name = cx.unique_local(&name);
        cx.func.locals.push(ArrayDecl { name: ir_name.clone(), ty: MemRefType::new(shape, elem, MemorySpace::OnChip2PTrue) });
        let sym = if scalar { Sym::Cell(ir_name.clone(), elem) } else { Sym::Array(ir_name.clone()) };
        cx.scopes.last_mut().unwrap().insert(name, sym);
        if p.eat("=") {
            if !scalar {
                return p.err("array initialisers are not supported");
            }
            let e = expr(p, cx)?;
            let op = to_operand(cx, e, elem);
            cx.emit(Stmt::Store { value: op, array: ir_name, indices: vec![IndexExpr::cst(0)] });
        }
        if !p.eat(",") {
            break;
        }
    }
    p.expect(";")
}

fn for_stmt(p: &mut Parser, cx: &mut FnCtx) -> PResult<()> {
    p.bump();
    p.expect("(")?;
    if p.is_type_start() {
        match p.base_type()? {
            Some(ElemKind::I32) => {}
            _ => return p.err("loop variable must be an int"),
        }
    }
    let name = p.ident()?;
    p.expect("=")?;
    let lower = index_expr(p, cx)?;
    p.expect(";")?;
    let cond_var = p.ident()?;
    if cond_var != name {
        return p.err(format!("loop condition must test `{name}`"));
    }
    let inclusive = if p.eat("<") {
        false
    } else if p.eat("<=") {
        true
    } else {
        return p.err("loop condition must be `<` or `<=`");
    };
    let mut upper = index_expr(p, cx)?;
    if inclusive {
        upper = GenExpr::Bin(GenOp::Add, Box::new(upper), Box::new(GenExpr::Const(1)));
    }
    p.expect(";")?;
    let step = if p.eat("++") {
        if p.ident()? != name {
            return p.err("loop increment must update the loop variable");
        }
        1
    } else {
        if p.ident()? != name {
            return p.err("loop increment must update the loop variable");
        }
        if p.eat("++") {
            1
        } else if p.eat("+=") {
            p.int_lit()?
        } else if p.eat("=") {
            if p.ident()? != name || !p.eat("+") {
                return p.err("loop increment must have the form `v = v + c`");
            }
            p.int_lit()?
        } else {
            return p.err("unsupported loop increment");
        }
    };
    if step <= 0 {
        return p.err("loop step must be a positive constant");
    }
    p.expect(")")?;
    let var = cx.func.fresh_var();
    cx.scopes.push(HashMap::from([(name.clone(), Sym::LoopVar(var))]));
    cx.blocks.push(vec![]);
    stmt(p, cx)?;
    let body = cx.blocks.pop().unwrap();
    cx.scopes.pop();
    cx.emit(Stmt::Loop(Loop {
        var,
        name,
        lower: IndexExpr::General(lower),
        upper: IndexExpr::General(upper),
        step,
        body,
        directive: None,
        tag: LoopTag::Plain,
    }));
    Ok(())
}

fn if_stmt(p: &mut Parser, cx: &mut FnCtx) -> PResult<()> {
    p.bump();
    p.expect("(")?;
    let mut conds = vec![];
    loop {
        let a = index_expr(p, cx)?;
        let op = match p.bump() {
            Tok::Punct(op @ ("<" | "<=" | ">" | ">=" | "==")) => op,
            Tok::Punct("!=") => return p.err("`!=` conditions are not supported"),
            t => return p.err(format!("expected a comparison, found {}", describe(&t))),
        };
        let b = index_expr(p, cx)?;
        let (Some(a), Some(b)) = (gen_to_affine(&a), gen_to_affine(&b)) else {
            return p.err("if condition must be an affine comparison");
        };
        conds.push(match op {
            "<" => Constraint::ge(b - a - 1),
            "<=" => Constraint::ge(b - a),
            ">" => Constraint::ge(a - b - 1),
            ">=" => Constraint::ge(a - b),
            _ => Constraint::eq(a - b),
        });
        if !p.eat("&&") {
            break;
        }
    }
    p.expect(")")?;
    cx.blocks.push(vec![]);
    cx.scopes.push(HashMap::new());
    stmt(p, cx)?;
    cx.scopes.pop();
    let then_body = cx.blocks.pop().unwrap();
    let mut else_body = vec![];
    if p.is_kw("else") {
        p.bump();
        cx.blocks.push(vec![]);
        cx.scopes.push(HashMap::new());
        stmt(p, cx)?;
        cx.scopes.pop();
        else_body = cx.blocks.pop().unwrap();
    }
    cx.emit(Stmt::If(IfStmt { conds, then_body, else_body }));
    Ok(())
}

/// Affine view of a general expression built only from constants, loop variables,
/// addition and constant multiplication.
pub fn gen_to_affine(g: &GenExpr) -> Option<AffineExpr> {
    Some(match g {
        GenExpr::Const(c) => AffineExpr::Const(*c),
        GenExpr::Var(v) => AffineExpr::Var(*v),
        GenExpr::Value(_) => return None,
        GenExpr::Bin(op, a, b) => {
            let x = gen_to_affine(a)?;
            let y = gen_to_affine(b)?;
            match op {
                GenOp::Add => x + y,
                GenOp::Sub => x - y,
                GenOp::Mul => match (x.as_const(), y.as_const()) {
                    (Some(k), _) => y * k,
                    (_, Some(k)) => x * k,
                    _ => return None,
                },
                GenOp::FloorDiv | GenOp::Mod => {
                    let k = y.as_const().filter(|k| *k > 0)?;
                    if *op == GenOp::FloorDiv {
                        x.floordiv(k)
                    } else {
                        x.modulo(k)
                    }
                }
                GenOp::Div | GenOp::Rem => return None,
            }
        }
    })
}

enum LValue {
    Elem(String, ElemKind, Vec<IndexExpr>),
}

fn lvalue(p: &mut Parser, cx: &mut FnCtx) -> PResult<LValue> {
    let deref = p.eat("*");
    let name = p.ident()?;
    let sym = match cx.lookup(&name) {
        Some(s) => s.clone(),
        None => return p.err(format!("unknown variable `{name}`")),
    };
    match sym {
        Sym::Cell(arr, elem) => {
            if p.eat("[") {
                let i = index_expr(p, cx)?;
                p.expect("]")?;
                return Ok(LValue::Elem(arr, elem, vec![IndexExpr::General(i)]));
            }
            Ok(LValue::Elem(arr, elem, vec![IndexExpr::cst(0)]))
        }
        Sym::Array(arr) if !deref => {
            let idx = subscripts(p, cx)?;
            let elem = cx.func.array_type(&arr).unwrap().elem;
            Ok(LValue::Elem(arr, elem, idx))
        }
        Sym::Array(_) => p.err("dereferencing an array is not supported"),
        Sym::Scalar(..) => p.err(format!("cannot assign to by-value parameter `{name}`")),
        Sym::LoopVar(_) => p.err(format!("cannot assign to loop variable `{name}`")),
    }
}

fn subscripts(p: &mut Parser, cx: &mut FnCtx) -> PResult<Vec<IndexExpr>> {
    let mut idx = vec![];
    while p.eat("[") {
        let i = index_expr(p, cx)?;
        p.expect("]")?;
        idx.push(IndexExpr::General(i));
    }
    Ok(idx)
}

fn assign(p: &mut Parser, cx: &mut FnCtx) -> PResult<()> {
    let LValue::Elem(array, elem, indices) = lvalue(p, cx)?;
    let op = match p.bump() {
        Tok::Punct(op @ ("=" | "+=" | "-=" | "*=" | "/=" | "%=" | "++" | "--")) => op,
        t => return p.err(format!("expected an assignment, found {}", describe(&t))),
    };
    let value = if op == "=" {
        let e = expr(p, cx)?;
        to_operand(cx, e, elem)
    } else {
        let cur = cx.func.fresh_value();
        cx.emit(Stmt::Load { result: cur, array: array.clone(), indices: indices.clone() });
        let rhs = match op {
            "++" | "--" => EVal::Idx(GenExpr::Const(1)),
            _ => expr(p, cx)?,
        };
        let bop = match op {
            "+=" | "++" => GenOp::Add,
            "-=" | "--" => GenOp::Sub,
            "*=" => GenOp::Mul,
            "/=" => GenOp::Div,
            _ => GenOp::Rem,
        };
        let r = binop(cx, bop, EVal::V(Operand::Value(cur), elem), rhs);
        to_operand(cx, r, elem)
    };
    cx.emit(Stmt::Store { value, array, indices });
    Ok(())
}

fn index_expr(p: &mut Parser, cx: &mut FnCtx) -> PResult<GenExpr> {
    let e = expr(p, cx)?;
    match e {
        EVal::Idx(g) => Ok(g),
        EVal::V(Operand::ConstI(c), _) => Ok(GenExpr::Const(c as i64)),
        EVal::V(Operand::Value(v), ElemKind::I32) => Ok(GenExpr::Value(v)),
        EVal::V(Operand::Index(IndexExpr::General(g)), _) => Ok(g),
        EVal::V(Operand::Index(IndexExpr::Affine(a)), _) => Ok(util::gen_from_affine(&a)),
        EVal::V(_, _) => p.err("index expressions must be integers"),
    }
}

fn expr(p: &mut Parser, cx: &mut FnCtx) -> PResult<EVal> {
    let mut lhs = term(p, cx)?;
    loop {
        let op = if p.eat("+") {
            GenOp::Add
        } else if p.eat("-") {
            GenOp::Sub
        } else {
            return Ok(lhs);
        };
        let rhs = term(p, cx)?;
        lhs = binop(cx, op, lhs, rhs);
    }
}

fn term(p: &mut Parser, cx: &mut FnCtx) -> PResult<EVal> {
    let mut lhs = unary(p, cx)?;
    loop {
        let op = if p.eat("*") {
            GenOp::Mul
        } else if p.eat("/") {
            GenOp::Div
        } else if p.eat("%") {
            GenOp::Rem
        } else {
            return Ok(lhs);
        };
        let rhs = unary(p, cx)?;
        lhs = binop(cx, op, lhs, rhs);
    }
}

fn unary(p: &mut Parser, cx: &mut FnCtx) -> PResult<EVal> {
    if p.eat("-") {
        let e = unary(p, cx)?;
        return Ok(match e {
            EVal::Idx(GenExpr::Const(c)) => EVal::Idx(GenExpr::Const(-c)),
            EVal::V(Operand::ConstF(f), k) => EVal::V(Operand::ConstF(-f), k),
            EVal::Idx(g) => EVal::Idx(GenExpr::Bin(GenOp::Sub, Box::new(GenExpr::Const(0)), Box::new(g))),
            EVal::V(o, k) => {
                let r = cx.func.fresh_value();
                cx.emit(Stmt::Arith { result: r, op: ArithOp::Neg, operands: vec![o], ty: k });
                EVal::V(Operand::Value(r), k)
            }
        });
    }
    if p.eat("+") {
        return unary(p, cx);
    }
    // Cast: `(float) e` / `(int) e`.
    if p.is("(") && matches!(p.peek_at(1), Tok::Ident(s) if matches!(s.as_str(), "float" | "double" | "int")) && matches!(p.peek_at(2), Tok::Punct(")")) {
        p.bump();
        let Some(to) = p.base_type()? else { return p.err("cast to void") };
        p.expect(")")?;
        let e = unary(p, cx)?;
        return Ok(match (to, e) {
            (ElemKind::I32, EVal::Idx(g)) => EVal::Idx(g),
            (ElemKind::I32, EVal::V(o, ElemKind::F32)) => {
                let r = cx.func.fresh_value();
                cx.emit(Stmt::Arith { result: r, op: ArithOp::FToI, operands: vec![o], ty: ElemKind::I32 });
                EVal::V(Operand::Value(r), ElemKind::I32)
            }
            (k, e) => EVal::V(to_operand(cx, e, k), k),
        });
    }
    primary(p, cx)
}

fn primary(p: &mut Parser, cx: &mut FnCtx) -> PResult<EVal> {
    match p.peek().clone() {
        Tok::Int(v) => {
            p.bump();
            Ok(EVal::Idx(GenExpr::Const(v)))
        }
        Tok::Float(f) => {
            p.bump();
            Ok(EVal::V(Operand::ConstF(f), ElemKind::F32))
        }
        Tok::Punct("(") => {
            p.bump();
            let e = expr(p, cx)?;
            p.expect(")")?;
            Ok(e)
        }
        Tok::Punct("*") => {
            p.bump();
            let name = p.ident()?;
            match cx.lookup(&name).cloned() {
                Some(Sym::Cell(arr, elem)) => Ok(load(cx, arr, elem, vec![IndexExpr::cst(0)])),
                _ => p.err(format!("`{name}` is not a scalar pointer")),
            }
        }
        Tok::Ident(name) => {
            p.bump();
            if BUILTINS.contains(&name.as_str()) {
                p.expect("(")?;
                let a = index_expr(p, cx)?;
                p.expect(",")?;
                let b = index_expr(p, cx)?;
                p.expect(")")?;
                let op = if name == "hls_floordiv" { GenOp::FloorDiv } else { GenOp::Mod };
                return Ok(EVal::Idx(GenExpr::Bin(op, Box::new(a), Box::new(b))));
            }
            match cx.lookup(&name).cloned() {
                None => p.err(format!("unknown variable `{name}`")),
                Some(Sym::LoopVar(v)) => Ok(EVal::Idx(GenExpr::Var(v))),
                Some(Sym::Scalar(v, ElemKind::I32)) => Ok(EVal::Idx(GenExpr::Value(v))),
                Some(Sym::Scalar(v, k)) => Ok(EVal::V(Operand::Value(v), k)),
                Some(Sym::Cell(arr, elem)) => {
                    let idx = if p.is("[") { subscripts(p, cx)? } else { vec![IndexExpr::cst(0)] };
                    Ok(load(cx, arr, elem, idx))
                }
                Some(Sym::Array(arr)) => {
                    let idx = subscripts(p, cx)?;
                    let ty = cx.func.array_type(&arr).unwrap();
                    if idx.len() != ty.rank() {
                        return p.err(format!("`{name}` has rank {} but {} subscripts were given", ty.rank(), idx.len()));
                    }
                    let elem = ty.elem;
                    Ok(load(cx, arr, elem, idx))
                }
            }
        }
        t => p.err(format!("unexpected {} in expression", describe(&t))),
    }
}

fn load(cx: &mut FnCtx, array: String, elem: ElemKind, indices: Vec<IndexExpr>) -> EVal {
    let r = cx.func.fresh_value();
    cx.emit(Stmt::Load { result: r, array, indices });
    EVal::V(Operand::Value(r), elem)
}

fn fold(op: GenOp, a: i64, b: i64) -> Option<i64> {
    Some(match op {
        GenOp::Add => a + b,
        GenOp::Sub => a - b,
        GenOp::Mul => a * b,
        GenOp::Div if b != 0 => a / b,
        GenOp::Rem if b != 0 => a % b,
        GenOp::FloorDiv if b != 0 => a.div_euclid(b),
        GenOp::Mod if b != 0 => a.rem_euclid(b),
        _ => return None,
    })
}

fn binop(cx: &mut FnCtx, op: GenOp, a: EVal, b: EVal) -> EVal {
    match (a, b) {
        (EVal::Idx(x), EVal::Idx(y)) => {
            if let (GenExpr::Const(p), GenExpr::Const(q)) = (&x, &y) {
                if let Some(c) = fold(op, *p, *q) {
                    return EVal::Idx(GenExpr::Const(c));
                }
            }
            EVal::Idx(GenExpr::Bin(op, Box::new(x), Box::new(y)))
        }
        (a, b) => {
            let kind = match (&a, &b) {
                (EVal::V(_, ElemKind::F32), _) | (_, EVal::V(_, ElemKind::F32)) => ElemKind::F32,
                _ => ElemKind::I32,
            };
            let x = to_operand(cx, a, kind);
            let y = to_operand(cx, b, kind);
            let aop = match op {
                GenOp::Add => ArithOp::Add,
                GenOp::Sub => ArithOp::Sub,
                GenOp::Mul => ArithOp::Mul,
                GenOp::Div | GenOp::FloorDiv => ArithOp::Div,
                GenOp::Rem | GenOp::Mod => ArithOp::Rem,
            };
            let r = cx.func.fresh_value();
            cx.emit(Stmt::Arith { result: r, op: aop, operands: vec![x, y], ty: kind });
            EVal::V(Operand::Value(r), kind)
        }
    }
}

fn to_operand(cx: &mut FnCtx, e: EVal, kind: ElemKind) -> Operand {
    match (e, kind) {
        (EVal::Idx(GenExpr::Const(c)), ElemKind::I32) => Operand::ConstI(c as i32),
        (EVal::Idx(GenExpr::Const(c)), ElemKind::F32) => Operand::ConstF(c as f32),
        (EVal::Idx(GenExpr::Value(v)), ElemKind::I32) => Operand::Value(v),
        (EVal::Idx(g), ElemKind::I32) => Operand::Index(IndexExpr::General(g)),
        (EVal::Idx(g), ElemKind::F32) => {
            let src = match g {
                GenExpr::Value(v) => Operand::Value(v),
                g => Operand::Index(IndexExpr::General(g)),
            };
            let r = cx.func.fresh_value();
            cx.emit(Stmt::Arith { result: r, op: ArithOp::IToF, operands: vec![src], ty: ElemKind::F32 });
            Operand::Value(r)
        }
        (EVal::V(o, k), want) if k == want => o,
        (EVal::V(Operand::ConstI(c), _), ElemKind::F32) => Operand::ConstF(c as f32),
        (EVal::V(Operand::ConstF(f), _), ElemKind::I32) => Operand::ConstI(f as i32),
        (EVal::V(o, _), want) => {
            let op = if want == ElemKind::F32 { ArithOp::IToF } else { ArithOp::FToI };
            let r = cx.func.fresh_value();
            cx.emit(Stmt::Arith { result: r, op, operands: vec![o], ty: want });
            Operand::Value(r)
        }
    }
}
