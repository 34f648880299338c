//! Translation of universally quantified implications into existential
//! constraints over template and multiplier unknowns.
//!
//! Farkas: `p = λ0 + Σ λi gi` with `λ ≥ 0`, for implications that are affine
//! in the quantified variables. Putinar: `p = σ0 + Σ σi gi + Σ hj ej` where
//! every `σ` is a sum of squares of polynomials of half the multiplier
//! degree and `hj` are free multipliers of equality hypotheses.

use std::collections::BTreeMap;

use num_traits::Zero;
use thiserror::Error;

use crate::constraints::{CandidateSystem, Implication, TAtom, TemplateSet, Unknowns};
use crate::game::Rel;
use crate::par;
use crate::poly::{monomials_up_to, Monomial, TemplatePolynomial, UnknownPoly, Q, Var};

/// Shape of the sum-of-squares multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct SosConfig {
    /// Degree of every multiplier in the quantified variables; even.
    pub multiplier_degree: u32,
    /// Squares per multiplier; `None` uses one per basis monomial.
    pub squares: Option<usize>,
}

impl Default for SosConfig {
    fn default() -> Self {
        Self { multiplier_degree: 2, squares: None }
    }
}

/// Which translation was applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Method {
    /// Affine Farkas multipliers.
    Farkas,
    /// Putinar sums of squares.
    Putinar,
}

/// Translation failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsatzError {
    /// Farkas needs affine atoms.
    #[error("implication `{origin}` is not linear in its quantified variables; use the Putinar translation")]
    Nonlinear {
        /// Provenance.
        origin: String,
    },
    /// Conclusion degree beyond what the multipliers can match.
    #[error("implication `{origin}` has conclusion degree {degree}; multiplier degree {required} or more is required")]
    Degree {
        /// Provenance.
        origin: String,
        /// Degree of the conclusion.
        degree: u32,
        /// Smallest sufficient multiplier degree.
        required: u32,
    },
    /// Odd or otherwise invalid configuration.
    #[error("invalid SOS configuration: {0}")]
    Config(String),
}

/// Constraint `poly rel 0` over unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct EConstraint {
    /// Polynomial over unknowns.
    pub poly: UnknownPoly,
    /// Relation.
    pub rel: Rel,
    /// Provenance.
    pub origin: String,
}

/// Purely existential system over template and multiplier unknowns.
#[derive(Clone, Debug)]
pub struct ExistentialSystem {
    /// Unknown names; the first `template_unknowns` are template unknowns.
    pub unknowns: Unknowns,
    /// Number of template unknowns.
    pub template_unknowns: usize,
    /// Constraints.
    pub constraints: Vec<EConstraint>,
    /// Translation used.
    pub method: Method,
}

impl ExistentialSystem {
    /// Exact check of every constraint; unknowns absent from the model are zero.
    /// Returns the provenance of the first violated constraint.
    pub fn check_exact(&self, model: &BTreeMap<Var, Q>) -> Result<(), String> {
        let point = |v: Var| Some(model.get(&v).cloned().unwrap_or_else(Q::zero));
        for c in &self.constraints {
            let v = c.poly.eval(&point, &|v| v.to_string()).map_err(|e| e.to_string())?;
            if !c.rel.holds(&v) {
                return Err(format!("{} ({} {} 0 fails)", c.origin, c.poly.render(&|v| self.unknowns.name(v).to_string()), c.rel.symbol()));
            }
        }
        Ok(())
    }

    /// Largest amount by which a constraint misses its relation; zero when
    /// the model satisfies every non-strict constraint exactly. A strict
    /// constraint at zero counts as satisfied.
    pub fn max_violation(&self, model: &BTreeMap<Var, Q>) -> Result<Q, String> {
        let point = |v: Var| Some(model.get(&v).cloned().unwrap_or_else(Q::zero));
        let mut worst = Q::zero();
        for c in &self.constraints {
            let v = c.poly.eval(&point, &|v| v.to_string()).map_err(|e| e.to_string())?;
            let miss = match c.rel {
                Rel::Eq => num_traits::Signed::abs(&v),
                _ => (-v).max(Q::zero()),
            };
            worst = worst.max(miss);
        }
        Ok(worst)
    }
}

struct Block {
    names: Vec<String>,
    constraints: Vec<EConstraint>,
}

struct Fresh<'a> {
    base: usize,
    prefix: String,
    names: &'a mut Vec<String>,
}

impl Fresh<'_> {
    fn next(&mut self, suffix: String) -> Var {
        self.names.push(format!("{}_{}", self.prefix, suffix));
        (self.base + self.names.len() - 1) as Var
    }
}

fn coefficient_match(residual: &TemplatePolynomial, origin: &str, out: &mut Vec<EConstraint>) {
    for (_, c) in residual.terms() {
        out.push(EConstraint { poly: c.clone(), rel: Rel::Eq, origin: origin.to_string() });
    }
}

fn farkas_block(imp: &Implication, block: usize, base: usize) -> Result<Block, PsatzError> {
    if !imp.is_linear() {
        return Err(PsatzError::Nonlinear { origin: imp.origin.clone() });
    }
    let mut names = Vec::new();
    let mut constraints = Vec::new();
    for (ri, p) in imp.rhs.iter().enumerate() {
        let origin = format!("{} goal {}", imp.origin, ri);
        let mut fresh = Fresh { base, prefix: format!("l_{block}_{ri}"), names: &mut names };
        let l0 = fresh.next("0".into());
        let mut residual = p.poly.sub(&TemplatePolynomial::constant(UnknownPoly::var(l0)));
        constraints.push(EConstraint { poly: UnknownPoly::var(l0), rel: Rel::Ge, origin: origin.clone() });
        for (gi, g) in imp.lhs.iter().enumerate() {
            let l = fresh.next(format!("{}", gi + 1));
            residual = residual.sub(&g.poly.scale_coeff(&UnknownPoly::var(l)));
            if g.rel != Rel::Eq {
                constraints.push(EConstraint { poly: UnknownPoly::var(l), rel: Rel::Ge, origin: origin.clone() });
            }
        }
        coefficient_match(&residual, &origin, &mut constraints);
    }
    Ok(Block { names, constraints })
}

fn sos_template(basis: &[Monomial], squares: usize, fresh: &mut Fresh, tag: &str) -> TemplatePolynomial {
    let n = basis.len();
    let mut sum = TemplatePolynomial::zero();
    for j in 0..squares {
        let start = if j < n { j } else { 0 };
        let h = TemplatePolynomial::from_terms(
            (start..n).map(|m| (basis[m].clone(), UnknownPoly::var(fresh.next(format!("{tag}_{j}_{m}"))))),
        );
        sum = sum.add(&h.mul(&h));
    }
    sum
}

fn free_template(monos: &[Monomial], fresh: &mut Fresh, tag: &str) -> TemplatePolynomial {
    TemplatePolynomial::from_terms(monos.iter().enumerate().map(|(m, mono)| (mono.clone(), UnknownPoly::var(fresh.next(format!("{tag}_{m}"))))))
}

fn putinar_block(imp: &Implication, cfg: &SosConfig, block: usize, base: usize) -> Result<Block, PsatzError> {
    let md = cfg.multiplier_degree;
    if md % 2 != 0 {
        return Err(PsatzError::Config(format!("multiplier degree {md} is odd")));
    }
    if cfg.squares == Some(0) {
        return Err(PsatzError::Config("at least one square per multiplier is required".into()));
    }
    let basis = monomials_up_to(&imp.universals, md / 2);
    let squares = cfg.squares.unwrap_or(basis.len());
    let full = monomials_up_to(&imp.universals, md);
    let max_g = imp.lhs.iter().map(|g| g.poly.degree()).max();
    let reach = md + max_g.unwrap_or(0);
    let mut names = Vec::new();
    let mut constraints = Vec::new();
    for (ri, p) in imp.rhs.iter().enumerate() {
        let origin = format!("{} goal {}", imp.origin, ri);
        let deg = p.poly.degree();
        if deg > reach.max(md) {
            let required = deg.saturating_sub(max_g.unwrap_or(0)).max(deg.min(md));
            let required = required + required % 2;
            return Err(PsatzError::Degree { origin, degree: deg, required });
        }
        let mut fresh = Fresh { base, prefix: format!("q_{block}_{ri}"), names: &mut names };
        let mut residual = p.poly.sub(&sos_template(&basis, squares, &mut fresh, "0"));
        for (gi, g) in imp.lhs.iter().enumerate() {
            let tag = format!("{}", gi + 1);
            let mult = match g.rel {
                Rel::Eq => free_template(&full, &mut fresh, &tag),
                _ => sos_template(&basis, squares, &mut fresh, &tag),
            };
            residual = residual.sub(&mult.mul(&g.poly));
        }
        coefficient_match(&residual, &origin, &mut constraints);
    }
    Ok(Block { names, constraints })
}

fn assemble(template: &Unknowns, blocks: Vec<Block>, method: Method) -> ExistentialSystem {
    let base = template.len();
    let mut unknowns = template.clone();
    let mut constraints = Vec::new();
    for b in blocks {
        let offset = unknowns.len() - base;
        for n in b.names {
            unknowns.fresh(n);
        }
        let shift = |v: Var| if (v as usize) >= base { v + offset as Var } else { v };
        for c in b.constraints {
            constraints.push(EConstraint { poly: c.poly.map_vars(&shift), ..c });
        }
    }
    ExistentialSystem { unknowns, template_unknowns: base, constraints, method }
}

/// Farkas translation of one implication.
pub fn farkas_translate(imp: &Implication, template: &Unknowns) -> Result<ExistentialSystem, PsatzError> {
    let block = farkas_block(imp, 0, template.len())?;
    Ok(assemble(template, vec![block], Method::Farkas))
}

/// Putinar translation of one implication.
pub fn putinar_translate(imp: &Implication, cfg: &SosConfig, template: &Unknowns) -> Result<ExistentialSystem, PsatzError> {
    let block = putinar_block(imp, cfg, 0, template.len())?;
    Ok(assemble(template, vec![block], Method::Putinar))
}

/// Translates a whole candidate system: Farkas when every implication is
/// linear, Putinar for all implications otherwise. `force` overrides the
/// choice.
pub fn translate_system(
    cand: &CandidateSystem,
    ts: &TemplateSet,
    cfg: &SosConfig,
    force: Option<Method>,
) -> Result<ExistentialSystem, PsatzError> {
    let method = force.unwrap_or(if cand.is_linear() { Method::Farkas } else { Method::Putinar });
    let base = ts.unknowns.len();
    let blocks: Vec<Result<Block, PsatzError>> = par::map_range(cand.implications.len(), |i| {
        let imp = &cand.implications[i];
        match method {
            Method::Farkas => farkas_block(imp, i, base),
            Method::Putinar => putinar_block(imp, cfg, i, base),
        }
    });
    let blocks = blocks.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(&ts.unknowns, blocks, method))
}

impl TAtom {
    /// Instantiates the unknowns.
    pub fn instantiate(&self, model: &dyn Fn(Var) -> Option<Q>) -> crate::poly::Polynomial {
        self.poly.instantiate(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::cur;
    use crate::poly::{q, qf, Polynomial};

    fn x() -> Polynomial {
        Polynomial::var(cur(0))
    }

    fn atom(p: Polynomial, rel: Rel) -> TAtom {
        TAtom { poly: p.to_template(), rel }
    }

    fn imp(lhs: Vec<TAtom>, rhs: Vec<TAtom>) -> Implication {
        Implication { universals: vec![cur(0)], lhs, rhs, origin: "test".into() }
    }

    fn model(sys: &ExistentialSystem, values: &[(&str, Q)]) -> BTreeMap<Var, Q> {
        values.iter().map(|(n, v)| (sys.unknowns.lookup(n).unwrap(), v.clone())).collect()
    }

    #[test]
    fn farkas_box_example() {
        let i = imp(
            vec![atom(x(), Rel::Ge), atom(x().neg().add_constant(&q(1)), Rel::Ge)],
            vec![atom(x().add_constant(&q(1)), Rel::Ge)],
        );
        let sys = farkas_translate(&i, &Unknowns::default()).unwrap();
        assert_eq!(sys.unknowns.len(), 3);
        let m = model(&sys, &[("l_0_0_0", q(1)), ("l_0_0_1", q(1)), ("l_0_0_2", q(0))]);
        assert!(sys.check_exact(&m).is_ok());
        let bad = model(&sys, &[("l_0_0_0", q(1)), ("l_0_0_1", q(0)), ("l_0_0_2", q(0))]);
        assert!(sys.check_exact(&bad).is_err());
    }

    #[test]
    fn farkas_refutes_false_implication() {
        let i = imp(vec![atom(x(), Rel::Ge)], vec![atom(x().neg(), Rel::Ge)]);
        let sys = farkas_translate(&i, &Unknowns::default()).unwrap();
        let m = model(&sys, &[("l_0_0_1", q(-1))]);
        let err = sys.check_exact(&m).unwrap_err();
        assert!(err.contains("test goal 0"));
    }

    #[test]
    fn farkas_rejects_nonlinear() {
        let i = imp(vec![atom(x().mul(&x()), Rel::Ge)], vec![atom(x(), Rel::Ge)]);
        assert!(matches!(farkas_translate(&i, &Unknowns::default()), Err(PsatzError::Nonlinear { .. })));
    }

    #[test]
    fn putinar_disk_example() {
        let g = x().mul(&x()).neg().add_constant(&q(1));
        let p = x().neg().add_constant(&q(1)).scale(&q(2));
        let i = imp(vec![atom(g, Rel::Ge)], vec![atom(p, Rel::Ge)]);
        let sys = putinar_translate(&i, &SosConfig::default(), &Unknowns::default()).unwrap();
        assert_eq!(sys.method, Method::Putinar);
        let basis = monomials_up_to(&[cur(0)], 1);
        let one = basis.iter().position(|m| m.degree() == 0).unwrap();
        let lin = 1 - one;
        let first = one.min(lin);
        let name = |tag: &str, m: usize| format!("q_0_0_{tag}_{first}_{m}");
        let witness = model(&sys, &[(&name("0", one), q(1)), (&name("0", lin), q(-1)), (&name("1", one), q(1))]);
        let (a, b, c) = (name("0", one), name("0", lin), name("1", one));
        assert!(sys.check_exact(&witness).is_ok(), "{a} {b} {c}");
        let half = model(&sys, &[(&name("0", one), qf(1, 2)), (&name("1", one), q(1))]);
        assert!(sys.check_exact(&half).is_err());
    }

    #[test]
    fn putinar_rejects_high_degree_goal() {
        let p = x().mul(&x()).mul(&x());
        let i = imp(vec![], vec![atom(p, Rel::Ge)]);
        let err = putinar_translate(&i, &SosConfig::default(), &Unknowns::default()).unwrap_err();
        assert!(matches!(err, PsatzError::Degree { degree: 3, required: 4, .. }), "{err}");
        let odd = SosConfig { multiplier_degree: 3, squares: None };
        assert!(matches!(putinar_translate(&i, &odd, &Unknowns::default()), Err(PsatzError::Config(_))));
    }
}
