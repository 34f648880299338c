//! Text format for games.
//!
//! ```text
//! game "name"
//! vars x y
//! param U = 3/2
//! param U : 2 - U > 0
//! domain: 0 <= x <= U + 1 & y >= 0
//! init A: x = 0, y = 1
//! label A reach
//! label B safe
//! trans A -> B when x >= 0 update x' = x + 1 & y' = y
//! target B: x > U
//! pre_target A: x > U - 1
//! ```
//!
//! `#` starts a line comment. Statements may span lines. Relations chain
//! (`0 <= x <= 1`), and `<=`, `<`, `!=` are normalized to `>=`, `>` and
//! disjunctions of `>` at parse time.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use thiserror::Error;

use super::pred::{Atom, Pred};
use super::{cur, kind_of, primed, slot_of, GameSpec, LabelDecl, Owner, ParamDecl, Transition};
use crate::poly::{parse_rational, q_to_string, Polynomial, Q, Var};

/// Parse or resolution error with a source position.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}, column {col}: {msg}")]
pub struct ParseError {
    /// 1-based line.
    pub line: usize,
    /// 1-based column.
    pub col: usize,
    /// Description.
    pub msg: String,
}

/// Override for a declared parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamSetting {
    /// Pin to a rational value.
    Value(Q),
    /// Keep symbolic, constrained by the declared constraint.
    Symbolic,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Primed(String),
    Num(Q),
    Str(String),
    Sym(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const KEYWORDS: &[&str] =
    &["game", "vars", "param", "domain", "init", "label", "trans", "target", "pre_target", "when", "update", "reach", "safe", "true", "false"];
const STATEMENTS: &[&str] = &["game", "vars", "param", "domain", "init", "label", "trans", "target", "pre_target"];
const SYMBOLS: &[&str] = &["->", ">=", "<=", "!=", "+", "-", "*", "/", "^", "(", ")", ",", ":", "=", ">", "<", "&", "|", "!"];

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    for (li, raw_line) in text.lines().enumerate() {
        let line = li + 1;
        let chars: Vec<char> = raw_line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c == '"' {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && chars[j] != '"' {
                    j += 1;
                }
                if j >= chars.len() {
                    return Err(ParseError { line, col, msg: "unterminated string".into() });
                }
                out.push(Token { tok: Tok::Str(chars[start..j].iter().collect()), line, col });
                i = j + 1;
                continue;
            }
            if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '-' || chars[j] == '+') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit: String = chars[start..i].iter().collect();
                let v = parse_rational(&lit).ok_or_else(|| ParseError { line, col, msg: format!("bad number `{lit}`") })?;
                out.push(Token { tok: Tok::Num(v), line, col });
                continue;
            }
            if c.is_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let name: String = chars[start..i].iter().collect();
                if i < chars.len() && chars[i] == '\'' {
                    i += 1;
                    out.push(Token { tok: Tok::Primed(name), line, col });
                } else {
                    out.push(Token { tok: Tok::Ident(name), line, col });
                }
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    out.push(Token { tok: Tok::Sym(s), line, col });
                    i += s.len();
                }
                None => return Err(ParseError { line, col, msg: format!("unexpected character `{c}`") }),
            }
        }
    }
    let (line, col) = out.last().map_or((1, 1), |t| (t.line, t.col + 1));
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

#[derive(Clone, Debug)]
enum Expr {
    Num(Q),
    Var { name: String, primed: bool, line: usize, col: usize },
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>, usize, usize),
    Neg(Box<Expr>),
    Pow(Box<Expr>, u32),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum CmpOp {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
    Ne,
}

#[derive(Clone, Debug)]
enum PExpr {
    True,
    False,
    Chain(Vec<Expr>, Vec<CmpOp>),
    And(Vec<PExpr>),
    Or(Vec<PExpr>),
    Not(Box<PExpr>),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        (self.toks[self.pos].line, self.toks[self.pos].col)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError { line, col, msg: msg.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), ParseError> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{k}`"))
        }
    }

    fn ident(&mut self) -> Result<(String, usize, usize), ParseError> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.bump();
                Ok((name, line, col))
            }
            _ => self.err("expected identifier"),
        }
    }

    fn pred(&mut self) -> Result<PExpr, ParseError> {
        let mut items = vec![self.conj()?];
        while self.is_sym("|") {
            self.bump();
            items.push(self.conj()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { PExpr::Or(items) })
    }

    fn conj(&mut self) -> Result<PExpr, ParseError> {
        let mut items = vec![self.unary_pred()?];
        while self.is_sym("&") {
            self.bump();
            items.push(self.unary_pred()?);
        }
        Ok(if items.len() == 1 { items.pop().unwrap() } else { PExpr::And(items) })
    }

    fn unary_pred(&mut self) -> Result<PExpr, ParseError> {
        if self.is_sym("!") {
            self.bump();
            return Ok(PExpr::Not(Box::new(self.unary_pred()?)));
        }
        if self.is_kw("true") {
            self.bump();
            return Ok(PExpr::True);
        }
        if self.is_kw("false") {
            self.bump();
            return Ok(PExpr::False);
        }
        if self.is_sym("(") {
            let save = self.pos;
            if let Ok(chain) = self.chain() {
                return Ok(chain);
            }
            self.pos = save;
            self.bump();
            let inner = self.pred()?;
            self.expect_sym(")")?;
            return Ok(inner);
        }
        self.chain()
    }

    fn chain(&mut self) -> Result<PExpr, ParseError> {
        let mut exprs = vec![self.expr()?];
        let mut ops = Vec::new();
        loop {
            let op = match self.peek() {
                Tok::Sym(">=") => CmpOp::Ge,
                Tok::Sym(">") => CmpOp::Gt,
                Tok::Sym("<=") => CmpOp::Le,
                Tok::Sym("<") => CmpOp::Lt,
                Tok::Sym("=") => CmpOp::Eq,
                Tok::Sym("!=") => CmpOp::Ne,
                _ => break,
            };
            self.bump();
            ops.push(op);
            exprs.push(self.expr()?);
        }
        if ops.is_empty() {
            return self.err("expected a comparison");
        }
        Ok(PExpr::Chain(exprs, ops))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.is_sym("+") {
                self.bump();
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.is_sym("-") {
                self.bump();
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.is_sym("*") {
                self.bump();
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.is_sym("/") {
                let (line, col) = self.here();
                self.bump();
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?), line, col);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.is_sym("-") {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.is_sym("+") {
            self.bump();
            return self.unary();
        }
        let base = self.atom()?;
        if self.is_sym("^") {
            self.bump();
            match self.bump() {
                Tok::Num(n) if n.is_integer() && n >= Q::zero() => {
                    let e: u32 = n.to_integer().try_into().map_err(|_| ParseError {
                        line: self.toks[self.pos - 1].line,
                        col: self.toks[self.pos - 1].col,
                        msg: "exponent too large".into(),
                    })?;
                    return Ok(Expr::Pow(Box::new(base), e));
                }
                _ => {
                    self.pos -= 1;
                    return self.err("exponent must be a non-negative integer literal");
                }
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.bump();
                Ok(Expr::Var { name, primed: false, line, col })
            }
            Tok::Primed(name) => {
                self.bump();
                Ok(Expr::Var { name, primed: true, line, col })
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            _ => self.err("expected an expression"),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Ctx {
    Plain,
    Update,
    ParamOnly,
}

struct Resolver<'a> {
    var_slots: BTreeMap<String, usize>,
    pinned: BTreeMap<String, Q>,
    ctx_name: &'a str,
}

impl Resolver<'_> {
    fn poly(&self, e: &Expr, ctx: Ctx) -> Result<Polynomial, ParseError> {
        Ok(match e {
            Expr::Num(v) => Polynomial::from_q(v),
            Expr::Var { name, primed: is_primed, line, col } => {
                if let Some(v) = self.pinned.get(name) {
                    if *is_primed {
                        return Err(ParseError { line: *line, col: *col, msg: format!("parameter `{name}` cannot be primed") });
                    }
                    return Ok(Polynomial::from_q(v));
                }
                let slot = *self.var_slots.get(name).ok_or_else(|| ParseError {
                    line: *line,
                    col: *col,
                    msg: format!("undeclared variable `{name}`"),
                })?;
                if *is_primed && ctx != Ctx::Update {
                    return Err(ParseError {
                        line: *line,
                        col: *col,
                        msg: format!("primed variable `{name}'` is only allowed in updates, not in {}", self.ctx_name),
                    });
                }
                Polynomial::var(if *is_primed { primed(slot) } else { cur(slot) })
            }
            Expr::Add(a, b) => self.poly(a, ctx)?.add(&self.poly(b, ctx)?),
            Expr::Sub(a, b) => self.poly(a, ctx)?.sub(&self.poly(b, ctx)?),
            Expr::Mul(a, b) => self.poly(a, ctx)?.mul(&self.poly(b, ctx)?),
            Expr::Neg(a) => self.poly(a, ctx)?.neg(),
            Expr::Pow(a, k) => self.poly(a, ctx)?.pow(*k),
            Expr::Div(a, b, line, col) => {
                let d = self.poly(b, ctx)?;
                match d.as_constant() {
                    Some(c) if !c.is_zero() => self.poly(a, ctx)?.scale(&(Q::one() / c)),
                    _ => return Err(ParseError { line: *line, col: *col, msg: "division by a non-constant or zero".into() }),
                }
            }
        })
    }

    fn pred(&self, p: &PExpr, ctx: Ctx) -> Result<Pred, ParseError> {
        Ok(match p {
            PExpr::True => Pred::True,
            PExpr::False => Pred::False,
            PExpr::And(ps) => Pred::And(ps.iter().map(|q| self.pred(q, ctx)).collect::<Result<_, _>>()?),
            PExpr::Or(ps) => Pred::Or(ps.iter().map(|q| self.pred(q, ctx)).collect::<Result<_, _>>()?),
            PExpr::Not(q) => Pred::Not(Box::new(self.pred(q, ctx)?)),
            PExpr::Chain(exprs, ops) => {
                let polys: Vec<Polynomial> = exprs.iter().map(|e| self.poly(e, ctx)).collect::<Result<_, _>>()?;
                let mut atoms: Vec<Pred> = Vec::new();
                for (i, op) in ops.iter().enumerate() {
                    let (a, b) = (&polys[i], &polys[i + 1]);
                    atoms.push(match op {
                        CmpOp::Ge => Pred::Atom(Atom::ge(a.sub(b))),
                        CmpOp::Gt => Pred::Atom(Atom::gt(a.sub(b))),
                        CmpOp::Le => Pred::Atom(Atom::ge(b.sub(a))),
                        CmpOp::Lt => Pred::Atom(Atom::gt(b.sub(a))),
                        CmpOp::Eq => Pred::Atom(Atom::eq(a.sub(b))),
                        CmpOp::Ne => Pred::Or(vec![Pred::Atom(Atom::gt(a.sub(b))), Pred::Atom(Atom::gt(b.sub(a)))]),
                    });
                }
                if atoms.len() == 1 {
                    atoms.pop().unwrap()
                } else {
                    Pred::And(atoms)
                }
            }
        })
    }
}

enum Stmt {
    Game(String),
    Vars(Vec<(String, usize, usize)>),
    ParamPin(String, Expr, usize, usize),
    ParamConstraint(String, PExpr, usize, usize),
    Domain(PExpr),
    Init(String, Vec<(String, Expr, usize, usize)>, usize, usize),
    Label(String, Owner, usize, usize),
    Trans(String, String, PExpr, PExpr, usize, usize),
    Target(String, PExpr, usize, usize),
    PreTarget(String, PExpr, usize, usize),
}

fn parse_statements(text: &str) -> Result<Vec<Stmt>, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let mut out = Vec::new();
    while *p.peek() != Tok::Eof {
        let (line, col) = p.here();
        let kw = match p.peek() {
            Tok::Ident(k) if STATEMENTS.contains(&k.as_str()) => k.clone(),
            _ => return p.err("expected a statement keyword"),
        };
        p.bump();
        match kw.as_str() {
            "game" => match p.bump() {
                Tok::Str(s) => out.push(Stmt::Game(s)),
                _ => {
                    p.pos -= 1;
                    return p.err("expected a quoted game name");
                }
            },
            "vars" => {
                let mut names = Vec::new();
                while let Tok::Ident(n) = p.peek() {
                    if KEYWORDS.contains(&n.as_str()) {
                        break;
                    }
                    names.push(p.ident()?);
                }
                if names.is_empty() {
                    return p.err("expected at least one variable name");
                }
                out.push(Stmt::Vars(names));
            }
            "param" => {
                let (name, l, c) = p.ident()?;
                if p.is_sym("=") {
                    p.bump();
                    out.push(Stmt::ParamPin(name, p.expr()?, l, c));
                } else if p.is_sym(":") {
                    p.bump();
                    out.push(Stmt::ParamConstraint(name, p.pred()?, l, c));
                } else {
                    return p.err("expected `=` or `:` after parameter name");
                }
            }
            "domain" => {
                p.expect_sym(":")?;
                out.push(Stmt::Domain(p.pred()?));
            }
            "init" => {
                let (label, l, c) = p.ident()?;
                p.expect_sym(":")?;
                let mut assigns = Vec::new();
                loop {
                    let (v, vl, vc) = p.ident()?;
                    p.expect_sym("=")?;
                    assigns.push((v, p.expr()?, vl, vc));
                    if p.is_sym(",") {
                        p.bump();
                    } else {
                        break;
                    }
                }
                out.push(Stmt::Init(label, assigns, l, c));
            }
            "label" => {
                let (name, l, c) = p.ident()?;
                let owner = if p.is_kw("reach") {
                    Owner::Reach
                } else if p.is_kw("safe") {
                    Owner::Safe
                } else {
                    return p.err("expected `reach` or `safe`");
                };
                p.bump();
                out.push(Stmt::Label(name, owner, l, c));
            }
            "trans" => {
                let (src, l, c) = p.ident()?;
                p.expect_sym("->")?;
                let (dst, _, _) = p.ident()?;
                p.expect_kw("when")?;
                let guard = p.pred()?;
                p.expect_kw("update")?;
                let update = p.pred()?;
                out.push(Stmt::Trans(src, dst, guard, update, l, c));
            }
            "target" | "pre_target" => {
                let (label, l, c) = p.ident()?;
                p.expect_sym(":")?;
                let pred = p.pred()?;
                out.push(if kw == "target" { Stmt::Target(label, pred, l, c) } else { Stmt::PreTarget(label, pred, l, c) });
            }
            _ => unreachable!(),
        }
        let _ = (line, col);
    }
    Ok(out)
}

/// Parses a game file with the parameter pins it declares.
pub fn parse_game(text: &str) -> Result<GameSpec, ParseError> {
    parse_game_with(text, &BTreeMap::new())
}

/// Parses a game file, overriding parameter settings. A parameter is pinned
/// when the file or an override gives it a value, and symbolic otherwise.
pub fn parse_game_with(text: &str, overrides: &BTreeMap<String, ParamSetting>) -> Result<GameSpec, ParseError> {
    let stmts = parse_statements(text)?;
    let mut name = None;
    let mut var_decls: Vec<(String, usize, usize)> = Vec::new();
    let mut param_order: Vec<String> = Vec::new();
    let mut param_pins: BTreeMap<String, (Expr, usize, usize)> = BTreeMap::new();
    let mut param_constraints: BTreeMap<String, (PExpr, usize, usize)> = BTreeMap::new();
    let mut domain = None;
    let mut init = None;
    let mut labels: Vec<LabelDecl> = Vec::new();
    for s in &stmts {
        match s {
            Stmt::Game(n) => name = Some(n.clone()),
            Stmt::Vars(vs) => var_decls.extend(vs.iter().cloned()),
            Stmt::ParamPin(n, e, l, c) => {
                if !param_order.contains(n) {
                    param_order.push(n.clone());
                }
                if param_pins.insert(n.clone(), (e.clone(), *l, *c)).is_some() {
                    return Err(ParseError { line: *l, col: *c, msg: format!("parameter `{n}` pinned twice") });
                }
            }
            Stmt::ParamConstraint(n, p, l, c) => {
                if !param_order.contains(n) {
                    param_order.push(n.clone());
                }
                if param_constraints.insert(n.clone(), (p.clone(), *l, *c)).is_some() {
                    return Err(ParseError { line: *l, col: *c, msg: format!("parameter `{n}` constrained twice") });
                }
            }
            Stmt::Domain(p) => {
                if domain.replace(p.clone()).is_some() {
                    return Err(ParseError { line: 1, col: 1, msg: "duplicate `domain` section".into() });
                }
            }
            Stmt::Init(label, assigns, l, c) => {
                if init.replace((label.clone(), assigns.clone(), *l, *c)).is_some() {
                    return Err(ParseError { line: *l, col: *c, msg: "duplicate `init` section".into() });
                }
            }
            Stmt::Label(n, owner, l, c) => {
                if labels.iter().any(|d| &d.name == n) {
                    return Err(ParseError { line: *l, col: *c, msg: format!("duplicate label `{n}`") });
                }
                labels.push(LabelDecl { name: n.clone(), owner: *owner, sink: false });
            }
            _ => {}
        }
    }
    let name = name.ok_or(ParseError { line: 1, col: 1, msg: "missing `game` section".into() })?;
    if var_decls.is_empty() {
        return Err(ParseError { line: 1, col: 1, msg: "missing `vars` section".into() });
    }
    let (init_label, init_assigns, init_line, init_col) =
        init.ok_or(ParseError { line: 1, col: 1, msg: "missing `init` section".into() })?;
    if labels.is_empty() {
        return Err(ParseError { line: 1, col: 1, msg: "missing `label` declarations".into() });
    }

    let mut var_names: Vec<String> = Vec::new();
    let mut var_slots: BTreeMap<String, usize> = BTreeMap::new();
    for (n, l, c) in &var_decls {
        if var_slots.contains_key(n) {
            return Err(ParseError { line: *l, col: *c, msg: format!("duplicate variable `{n}`") });
        }
        var_slots.insert(n.clone(), var_names.len());
        var_names.push(n.clone());
    }
    for (n, _) in overrides {
        if !param_order.contains(n) {
            return Err(ParseError { line: 1, col: 1, msg: format!("unknown parameter `{n}` in override") });
        }
    }

    let constant_resolver = Resolver { var_slots: BTreeMap::new(), pinned: BTreeMap::new(), ctx_name: "parameter values" };
    let mut pinned: BTreeMap<String, Q> = BTreeMap::new();
    let mut file_pins: BTreeMap<String, Q> = BTreeMap::new();
    for n in &param_order {
        if var_slots.contains_key(n) {
            let (l, c) = param_pins.get(n).map(|(_, l, c)| (*l, *c)).unwrap_or_else(|| {
                let (_, l, c) = &param_constraints[n];
                (*l, *c)
            });
            return Err(ParseError { line: l, col: c, msg: format!("parameter `{n}` clashes with a variable") });
        }
        if let Some((e, l, c)) = param_pins.get(n) {
            let v = constant_resolver.poly(e, Ctx::ParamOnly)?.as_constant().ok_or(ParseError {
                line: *l,
                col: *c,
                msg: format!("parameter `{n}` must be pinned to a constant"),
            })?;
            file_pins.insert(n.clone(), v);
        }
        match overrides.get(n) {
            Some(ParamSetting::Value(v)) => {
                pinned.insert(n.clone(), v.clone());
            }
            Some(ParamSetting::Symbolic) => {
                if !param_constraints.contains_key(n) {
                    return Err(ParseError { line: 1, col: 1, msg: format!("parameter `{n}` has no declared constraint to stay symbolic") });
                }
            }
            None => {
                if let Some(v) = file_pins.get(n) {
                    pinned.insert(n.clone(), v.clone());
                }
            }
        }
    }
    let mut params = Vec::new();
    for n in &param_order {
        let slot = if pinned.contains_key(n) {
            None
        } else {
            let s = var_names.len();
            var_slots.insert(n.clone(), s);
            var_names.push(n.clone());
            Some(s)
        };
        params.push(ParamDecl { name: n.clone(), pin: file_pins.get(n).cloned(), constraint: None, slot, value: pinned.get(n).cloned() });
    }
    let param_names: BTreeSet<String> = param_order.iter().cloned().collect();
    let mut resolver = Resolver { var_slots: var_slots.clone(), pinned: pinned.clone(), ctx_name: "parameter constraints" };
    for decl in params.iter_mut() {
        if let Some((p, l, c)) = param_constraints.get(&decl.name) {
            let only_params = Resolver {
                var_slots: var_slots.iter().filter(|(k, _)| param_names.contains(*k)).map(|(k, v)| (k.clone(), *v)).collect(),
                pinned: pinned.clone(),
                ctx_name: "parameter constraints",
            };
            let pred = only_params.pred(p, Ctx::Plain).map_err(|e| {
                if e.msg.starts_with("undeclared variable") {
                    ParseError { line: e.line, col: e.col, msg: format!("parameter constraints may only mention parameters ({})", e.msg) }
                } else {
                    e
                }
            })?;
            if let Some(v) = &decl.value {
                let pt = |_: Var| None;
                if !pred.eval(&pt).unwrap_or(true) {
                    return Err(ParseError {
                        line: *l,
                        col: *c,
                        msg: format!("value {} of parameter `{}` violates its constraint", q_to_string(v), decl.name),
                    });
                }
            }
            decl.constraint = Some(pred);
        }
    }

    let mut targets = vec![Pred::False; labels.len()];
    let mut seen_targets = vec![false; labels.len()];
    let mut pre_targets = vec![None; labels.len()];
    let mut transitions = Vec::new();
    let lookup = |n: &str, l: usize, c: usize| -> Result<usize, ParseError> {
        labels.iter().position(|d| d.name == n).ok_or(ParseError { line: l, col: c, msg: format!("undeclared label `{n}`") })
    };
    resolver.ctx_name = "the domain";
    let domain = match &domain {
        Some(p) => resolver.pred(p, Ctx::Plain)?,
        None => return Err(ParseError { line: 1, col: 1, msg: "missing `domain` section".into() }),
    };
    for s in &stmts {
        match s {
            Stmt::Trans(src, dst, g, u, l, c) => {
                let source = lookup(src, *l, *c)?;
                let target = lookup(dst, *l, *c)?;
                resolver.ctx_name = "guards";
                let guard = resolver.pred(g, Ctx::Plain)?;
                resolver.ctx_name = "updates";
                let update = resolver.pred(u, Ctx::Update)?;
                transitions.push(Transition { source, target, guard, update, sink: false });
            }
            Stmt::Target(lab, p, l, c) => {
                let id = lookup(lab, *l, *c)?;
                if seen_targets[id] {
                    return Err(ParseError { line: *l, col: *c, msg: format!("duplicate target for label `{lab}`") });
                }
                seen_targets[id] = true;
                resolver.ctx_name = "targets";
                targets[id] = resolver.pred(p, Ctx::Plain)?;
            }
            Stmt::PreTarget(lab, p, l, c) => {
                let id = lookup(lab, *l, *c)?;
                resolver.ctx_name = "pre-targets";
                pre_targets[id] = Some(resolver.pred(p, Ctx::Plain)?);
            }
            _ => {}
        }
    }
    let init_label = lookup(&init_label, init_line, init_col)?;
    let mut init = BTreeMap::new();
    let init_resolver = Resolver { var_slots: BTreeMap::new(), pinned: pinned.clone(), ctx_name: "initial values" };
    for (v, e, l, c) in &init_assigns {
        let slot = *var_slots.get(v).ok_or(ParseError { line: *l, col: *c, msg: format!("undeclared variable `{v}`") })?;
        if slot >= var_decls.len() {
            return Err(ParseError { line: *l, col: *c, msg: format!("`{v}` is a parameter, not a variable") });
        }
        let val = init_resolver
            .poly(e, Ctx::Plain)?
            .as_constant()
            .ok_or(ParseError { line: *l, col: *c, msg: "initial values must be constants".into() })?;
        if init.insert(slot, val).is_some() {
            return Err(ParseError { line: *l, col: *c, msg: format!("variable `{v}` initialised twice") });
        }
    }
    for (slot, n) in var_names.iter().enumerate().take(var_decls.len()) {
        if !init.contains_key(&slot) {
            return Err(ParseError { line: init_line, col: init_col, msg: format!("`init` does not assign variable `{n}`") });
        }
    }
    let g = GameSpec {
        name,
        var_names,
        state_vars: (0..var_decls.len()).collect(),
        params,
        domain,
        init_label,
        init,
        labels,
        transitions,
        targets,
        pre_targets,
        expanded: None,
        normalized: false,
    };
    if g.params.iter().all(|p| p.slot.is_none()) {
        let s0 = g.initial_state(&BTreeMap::new());
        if !g.in_domain(&s0.valuation).unwrap_or(false) {
            return Err(ParseError { line: init_line, col: init_col, msg: "initial valuation lies outside the domain".into() });
        }
    }
    let _ = kind_of;
    let _ = slot_of;
    Ok(g)
}

/// Renders a game in the file format. Reparsing the output yields a
/// structurally identical game (parameters keep their effective pins).
pub fn render_game(g: &GameSpec) -> String {
    let names = g.namer();
    let mut out = String::new();
    out.push_str(&format!("game \"{}\"\n", g.name));
    let declared: Vec<&String> = g.var_names.iter().enumerate().filter(|(s, _)| g.init.contains_key(s)).map(|(_, n)| n).collect();
    out.push_str(&format!("vars {}\n", declared.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" ")));
    for p in &g.params {
        if let Some(v) = &p.value {
            out.push_str(&format!("param {} = {}\n", p.name, q_to_string(v)));
        }
        if let Some(c) = &p.constraint {
            out.push_str(&format!("param {} : {}\n", p.name, c.render(&names)));
        }
    }
    out.push_str(&format!("domain: {}\n", g.domain.render(&names)));
    for l in &g.labels {
        out.push_str(&format!("label {} {}\n", l.name, if l.owner == Owner::Reach { "reach" } else { "safe" }));
    }
    let inits: Vec<String> = g.init.iter().map(|(s, v)| format!("{} = {}", g.var_names[*s], q_to_string(v))).collect();
    out.push_str(&format!("init {}: {}\n", g.labels[g.init_label].name, inits.join(", ")));
    for t in &g.transitions {
        out.push_str(&format!(
            "trans {} -> {} when {} update {}\n",
            g.labels[t.source].name,
            g.labels[t.target].name,
            t.guard.render(&names),
            t.update.render(&names)
        ));
    }
    for (l, t) in g.targets.iter().enumerate() {
        if *t != Pred::False {
            out.push_str(&format!("target {}: {}\n", g.labels[l].name, t.render(&names)));
        }
    }
    for (l, t) in g.pre_targets.iter().enumerate() {
        if let Some(t) = t {
            out.push_str(&format!("pre_target {}: {}\n", g.labels[l].name, t.render(&names)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{q, qf};

    const SMALL: &str = r#"
game "small"   # comment
vars x y
param U = 3/2
domain: 0 <= x <= U + 1 & y >= 0
label A reach
label B safe
init A: x = 0, y = 1
trans A -> B when x >= 0 update x' = x + 1 & y' = y
trans B -> A when true update x' = 0 | x' = x & y' = y
target B: x > U
"#;

    #[test]
    fn parses_small_game() {
        let g = parse_game(SMALL).unwrap();
        assert_eq!(g.name, "small");
        assert_eq!(g.var_names, vec!["x", "y"]);
        assert_eq!(g.labels.len(), 2);
        assert_eq!(g.transitions.len(), 2);
        let names = g.namer();
        assert_eq!(g.targets[1].render(&names), "-3/2 + x > 0");
        assert_eq!(g.transitions[0].update.render(&names), "(-1 - x + x' = 0 & -y + y' = 0)");
        assert_eq!(g.init[&0], q(0));
    }

    #[test]
    fn decimal_literals_are_exact() {
        let g = parse_game(&SMALL.replace("3/2", "1.5")).unwrap();
        assert_eq!(g.params[0].value, Some(qf(3, 2)));
    }

    #[test]
    fn missing_init_is_reported() {
        let text = SMALL.replace("init A: x = 0, y = 1\n", "");
        let err = parse_game(&text).unwrap_err();
        assert!(err.msg.contains("missing `init`"), "{err}");
    }

    #[test]
    fn primed_in_guard_is_rejected() {
        let text = SMALL.replace("when x >= 0", "when x' >= 0");
        let err = parse_game(&text).unwrap_err();
        assert!(err.msg.contains("only allowed in updates"), "{err}");
        assert_eq!(err.line, 9);
    }

    #[test]
    fn undeclared_names_are_reported() {
        let err = parse_game(&SMALL.replace("target B: x > U", "target B: z > U")).unwrap_err();
        assert!(err.msg.contains("undeclared variable `z`"), "{err}");
        let err = parse_game(&SMALL.replace("trans B -> A", "trans B -> C")).unwrap_err();
        assert!(err.msg.contains("undeclared label `C`"), "{err}");
        let err = parse_game(&SMALL.replace("label B safe", "label B safe\nlabel A safe")).unwrap_err();
        assert!(err.msg.contains("duplicate label"), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_game("game \"g\"\nvars x\ndomain: x >= @").unwrap_err();
        assert_eq!((err.line, err.col), (3, 14));
    }

    #[test]
    fn not_equal_expands_to_strict_disjunction() {
        let g = parse_game(&SMALL.replace("target B: x > U", "target B: x != 1")).unwrap();
        assert!(matches!(&g.targets[1], Pred::Or(v) if v.len() == 2));
    }

    #[test]
    fn render_round_trip() {
        let g = parse_game(SMALL).unwrap();
        let text = render_game(&g);
        let back = parse_game(&text).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn symbolic_override_keeps_parameter_as_slot() {
        let text = SMALL.replace("param U = 3/2", "param U = 3/2\nparam U : 2 - U > 0");
        let mut ov = BTreeMap::new();
        ov.insert("U".to_string(), ParamSetting::Symbolic);
        let g = parse_game_with(&text, &ov).unwrap();
        assert_eq!(g.params[0].slot, Some(2));
        assert_eq!(g.var_names[2], "U");
        ov.insert("U".to_string(), ParamSetting::Value(q(3)));
        assert!(parse_game_with(&text, &ov).unwrap_err().msg.contains("violates"));
    }

    #[test]
    fn parenthesised_predicates_and_expressions() {
        let text = SMALL.replace("target B: x > U", "target B: (x + y) * 2 > 1 & (x > 0 | !(y >= 1))");
        let g = parse_game(&text).unwrap();
        assert!(matches!(&g.targets[1], Pred::And(v) if v.len() == 2));
    }
}
