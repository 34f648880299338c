//! Atoms and boolean predicates over polynomial constraints.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::poly::{Polynomial, Q, Var};

/// Relation of an atom `lhs rel 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    /// `lhs >= 0`
    Ge,
    /// `lhs > 0`
    Gt,
    /// `lhs = 0`
    Eq,
}

impl Rel {
    /// SMT-LIB / surface symbol.
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Ge => ">=",
            Rel::Gt => ">",
            Rel::Eq => "=",
        }
    }

    /// Decides `value rel 0`.
    pub fn holds(self, value: &Q) -> bool {
        match self {
            Rel::Ge => !value.is_negative(),
            Rel::Gt => value.is_positive(),
            Rel::Eq => value.is_zero(),
        }
    }

    /// Decides `value rel 0` with an absolute slack in favour of the atom.
    pub fn holds_f64(self, value: f64, slack: f64) -> bool {
        match self {
            Rel::Ge => value >= -slack,
            Rel::Gt => value > -slack,
            Rel::Eq => value.abs() <= slack,
        }
    }
}

/// Polynomial constraint `lhs rel 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    /// Constrained polynomial.
    pub lhs: Polynomial,
    /// Relation to zero.
    pub rel: Rel,
}

impl Atom {
    /// `lhs >= 0`
    pub fn ge(lhs: Polynomial) -> Self {
        Self { lhs, rel: Rel::Ge }
    }
    /// `lhs > 0`
    pub fn gt(lhs: Polynomial) -> Self {
        Self { lhs, rel: Rel::Gt }
    }
    /// `lhs = 0`
    pub fn eq(lhs: Polynomial) -> Self {
        Self { lhs, rel: Rel::Eq }
    }

    /// Exact truth value at a point.
    pub fn eval(&self, point: &dyn Fn(Var) -> Option<Q>) -> Result<bool, PredError> {
        let v = self.lhs.eval(point, &|v| format!("#{v}")).map_err(|e| PredError::Eval(e.to_string()))?;
        Ok(self.rel.holds(&v))
    }

    /// Negation as a predicate in negation normal form.
    pub fn negate(&self) -> Pred {
        match self.rel {
            Rel::Ge => Pred::Atom(Atom::gt(self.lhs.neg())),
            Rel::Gt => Pred::Atom(Atom::ge(self.lhs.neg())),
            Rel::Eq => Pred::Or(vec![Pred::Atom(Atom::gt(self.lhs.clone())), Pred::Atom(Atom::gt(self.lhs.neg()))]),
        }
    }

    /// Truth value when the polynomial is constant.
    pub fn constant_truth(&self) -> Option<bool> {
        self.lhs.as_constant().map(|c| self.rel.holds(&c))
    }

    /// Renders as `poly rel 0`.
    pub fn render(&self, names: &dyn Fn(Var) -> String) -> String {
        format!("{} {} 0", self.lhs.render(names), self.rel.symbol())
    }
}

/// Errors raised by predicate manipulation.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PredError {
    /// Disjunctive normal form would exceed the configured number of cubes.
    #[error("disjunctive normal form exceeds {0} disjuncts; raise the cap or rewrite the predicate")]
    DnfTooLarge(usize),
    /// Evaluation failure.
    #[error("evaluation failed: {0}")]
    Eval(String),
}

/// Boolean combination of atoms.
#[derive(Clone, Debug, PartialEq)]
pub enum Pred {
    /// Always true.
    True,
    /// Always false.
    False,
    /// Single constraint.
    Atom(Atom),
    /// Conjunction.
    And(Vec<Pred>),
    /// Disjunction.
    Or(Vec<Pred>),
    /// Negation.
    Not(Box<Pred>),
}

/// Default cap on the number of DNF cubes.
pub const DEFAULT_DNF_CAP: usize = 4096;

impl Pred {
    /// Conjunction of two predicates with trivial simplification.
    pub fn and(self, other: Pred) -> Pred {
        Pred::And(vec![self, other]).simplify()
    }

    /// Disjunction of two predicates with trivial simplification.
    pub fn or(self, other: Pred) -> Pred {
        Pred::Or(vec![self, other]).simplify()
    }

    /// Negation pushed to the atoms.
    pub fn negate(&self) -> Pred {
        Pred::Not(Box::new(self.clone())).nnf()
    }

    /// Conjunction of atoms.
    pub fn conj(atoms: Vec<Atom>) -> Pred {
        Pred::And(atoms.into_iter().map(Pred::Atom).collect()).simplify()
    }

    /// Negation normal form: no `Not` nodes, same semantics.
    pub fn nnf(&self) -> Pred {
        self.nnf_signed(false).simplify()
    }

    fn nnf_signed(&self, negated: bool) -> Pred {
        match (self, negated) {
            (Pred::True, false) | (Pred::False, true) => Pred::True,
            (Pred::True, true) | (Pred::False, false) => Pred::False,
            (Pred::Atom(a), false) => Pred::Atom(a.clone()),
            (Pred::Atom(a), true) => a.negate(),
            (Pred::And(ps), false) => Pred::And(ps.iter().map(|p| p.nnf_signed(false)).collect()),
            (Pred::And(ps), true) => Pred::Or(ps.iter().map(|p| p.nnf_signed(true)).collect()),
            (Pred::Or(ps), false) => Pred::Or(ps.iter().map(|p| p.nnf_signed(false)).collect()),
            (Pred::Or(ps), true) => Pred::And(ps.iter().map(|p| p.nnf_signed(true)).collect()),
            (Pred::Not(p), s) => p.nnf_signed(!s),
        }
    }

    /// Folds constant atoms, flattens nested connectives of the same kind
    /// and removes neutral elements. Semantics are preserved.
    pub fn simplify(&self) -> Pred {
        match self {
            Pred::True | Pred::False => self.clone(),
            Pred::Atom(a) => match a.constant_truth() {
                Some(true) => Pred::True,
                Some(false) => Pred::False,
                None => self.clone(),
            },
            Pred::Not(p) => match p.simplify() {
                Pred::True => Pred::False,
                Pred::False => Pred::True,
                q => Pred::Not(Box::new(q)),
            },
            Pred::And(ps) => {
                let mut out = Vec::new();
                for p in ps {
                    match p.simplify() {
                        Pred::True => {}
                        Pred::False => return Pred::False,
                        Pred::And(inner) => out.extend(inner),
                        q => out.push(q),
                    }
                }
                dedup(&mut out);
                match out.len() {
                    0 => Pred::True,
                    1 => out.pop().unwrap(),
                    _ => Pred::And(out),
                }
            }
            Pred::Or(ps) => {
                let mut out = Vec::new();
                for p in ps {
                    match p.simplify() {
                        Pred::False => {}
                        Pred::True => return Pred::True,
                        Pred::Or(inner) => out.extend(inner),
                        q => out.push(q),
                    }
                }
                dedup(&mut out);
                match out.len() {
                    0 => Pred::False,
                    1 => out.pop().unwrap(),
                    _ => Pred::Or(out),
                }
            }
        }
    }

    /// Disjunctive normal form as a list of cubes (conjunctions of atoms).
    /// An empty list means `false`; a list holding an empty cube means `true`.
    pub fn dnf(&self, cap: usize) -> Result<Vec<Vec<Atom>>, PredError> {
        let p = self.nnf();
        dnf_rec(&p, cap)
    }

    /// Exact truth value at a point.
    pub fn eval(&self, point: &dyn Fn(Var) -> Option<Q>) -> Result<bool, PredError> {
        Ok(match self {
            Pred::True => true,
            Pred::False => false,
            Pred::Atom(a) => a.eval(point)?,
            Pred::And(ps) => {
                for p in ps {
                    if !p.eval(point)? {
                        return Ok(false);
                    }
                }
                true
            }
            Pred::Or(ps) => {
                for p in ps {
                    if p.eval(point)? {
                        return Ok(true);
                    }
                }
                false
            }
            Pred::Not(p) => !p.eval(point)?,
        })
    }

    /// Exact truth value at a point given as a map.
    pub fn eval_map(&self, point: &BTreeMap<Var, Q>) -> Result<bool, PredError> {
        self.eval(&|v| point.get(&v).cloned())
    }

    /// Floating-point truth value with slack, used as a cheap filter.
    pub fn eval_f64(&self, point: &dyn Fn(Var) -> f64, slack: f64) -> bool {
        match self {
            Pred::True => true,
            Pred::False => false,
            Pred::Atom(a) => a.rel.holds_f64(a.lhs.eval_f64(point), slack),
            Pred::And(ps) => ps.iter().all(|p| p.eval_f64(point, slack)),
            Pred::Or(ps) => ps.iter().any(|p| p.eval_f64(point, slack)),
            Pred::Not(p) => !p.eval_f64(point, -slack),
        }
    }

    /// Applies `f` to every atom polynomial.
    pub fn map_polys(&self, f: &dyn Fn(&Polynomial) -> Polynomial) -> Pred {
        match self {
            Pred::True => Pred::True,
            Pred::False => Pred::False,
            Pred::Atom(a) => Pred::Atom(Atom { lhs: f(&a.lhs), rel: a.rel }),
            Pred::And(ps) => Pred::And(ps.iter().map(|p| p.map_polys(f)).collect()),
            Pred::Or(ps) => Pred::Or(ps.iter().map(|p| p.map_polys(f)).collect()),
            Pred::Not(p) => Pred::Not(Box::new(p.map_polys(f))),
        }
    }

    /// Sorted, deduplicated variables occurring in the predicate.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Pred::True | Pred::False => {}
            Pred::Atom(a) => out.extend(a.lhs.vars()),
            Pred::And(ps) | Pred::Or(ps) => ps.iter().for_each(|p| p.collect_vars(out)),
            Pred::Not(p) => p.collect_vars(out),
        }
    }

    /// Every atom in the tree, in syntactic order.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Pred::True | Pred::False => {}
            Pred::Atom(a) => out.push(a),
            Pred::And(ps) | Pred::Or(ps) => ps.iter().for_each(|p| p.collect_atoms(out)),
            Pred::Not(p) => p.collect_atoms(out),
        }
    }

    /// True when every atom is of degree at most one.
    pub fn is_linear(&self) -> bool {
        self.atoms().iter().all(|a| a.lhs.degree() <= 1)
    }

    /// Renders in the surface syntax of game files.
    pub fn render(&self, names: &dyn Fn(Var) -> String) -> String {
        match self {
            Pred::True => "true".into(),
            Pred::False => "false".into(),
            Pred::Atom(a) => a.render(names),
            Pred::And(ps) => format!("({})", ps.iter().map(|p| p.render(names)).collect::<Vec<_>>().join(" & ")),
            Pred::Or(ps) => format!("({})", ps.iter().map(|p| p.render(names)).collect::<Vec<_>>().join(" | ")),
            Pred::Not(p) => format!("!{}", wrap(&p.render(names), p)),
        }
    }
}

fn wrap(text: &str, p: &Pred) -> String {
    match p {
        Pred::Atom(_) => format!("({text})"),
        _ => text.to_string(),
    }
}

fn dedup(items: &mut Vec<Pred>) {
    let mut out: Vec<Pred> = Vec::with_capacity(items.len());
    for p in items.drain(..) {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    *items = out;
}

fn dnf_rec(p: &Pred, cap: usize) -> Result<Vec<Vec<Atom>>, PredError> {
    match p {
        Pred::True => Ok(vec![vec![]]),
        Pred::False => Ok(vec![]),
        Pred::Atom(a) => Ok(vec![vec![a.clone()]]),
        Pred::Or(ps) => {
            let mut out = Vec::new();
            for q in ps {
                out.extend(dnf_rec(q, cap)?);
                if out.len() > cap {
                    return Err(PredError::DnfTooLarge(cap));
                }
            }
            Ok(out)
        }
        Pred::And(ps) => {
            let mut acc: Vec<Vec<Atom>> = vec![vec![]];
            for q in ps {
                let cubes = dnf_rec(q, cap)?;
                if cubes.len() == 1 {
                    for cube in acc.iter_mut() {
                        cube.extend(cubes[0].iter().cloned());
                    }
                    continue;
                }
                let mut next = Vec::with_capacity(acc.len() * cubes.len());
                for left in &acc {
                    for right in &cubes {
                        let mut cube = left.clone();
                        cube.extend(right.iter().cloned());
                        next.push(cube);
                    }
                }
                if next.len() > cap {
                    return Err(PredError::DnfTooLarge(cap));
                }
                acc = next;
            }
            Ok(acc)
        }
        Pred::Not(_) => unreachable!("dnf input is in negation normal form"),
    }
}
