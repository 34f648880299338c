//! Hand-built implications with known template solutions, translated,
//! solved by every installed backend and checked exactly.

use std::collections::BTreeMap;
use std::time::Duration;

use rgames::certify::CheckConfig;
use rgames::cli::exact_model;
use rgames::constraints::{Implication, TAtom, Unknowns};
use rgames::game::{cur, Rel};
use rgames::poly::{q, qf, Monomial, Poly, Polynomial, Q, TemplatePolynomial, UnknownPoly, Var};
use rgames::psatz::{farkas_translate, putinar_translate, ExistentialSystem, SosConfig};
use rgames::smt::{emit_smtlib, run_backend, Backend, ParseOptions, SolverStatus};

fn x() -> Polynomial {
    Polynomial::var(cur(0))
}

fn y() -> Polynomial {
    Polynomial::var(cur(1))
}

fn k(v: i64) -> Polynomial {
    Polynomial::from_q(&q(v))
}

struct Fixture {
    name: &'static str,
    imp: Implication,
    unknowns: Unknowns,
    witness: Option<Vec<Q>>,
    box_: [(Q, Q); 2],
}

struct Builder {
    unknowns: Unknowns,
    lhs: Vec<TAtom>,
    rhs: Vec<TAtom>,
}

impl Builder {
    fn new(n: usize) -> (Self, Vec<UnknownPoly>) {
        let mut unknowns = Unknowns::default();
        let cs = (0..n).map(|i| UnknownPoly::var(unknowns.fresh(format!("c{i}")))).collect();
        (Builder { unknowns, lhs: Vec::new(), rhs: Vec::new() }, cs)
    }

    fn hyp(mut self, p: Polynomial, rel: Rel) -> Self {
        self.lhs.push(TAtom { poly: p.to_template(), rel });
        self
    }

    fn goal(mut self, p: TemplatePolynomial) -> Self {
        self.rhs.push(TAtom { poly: p, rel: Rel::Ge });
        self
    }

    fn done(self, name: &'static str, witness: Option<Vec<Q>>, box_: [(Q, Q); 2]) -> Fixture {
        let imp = Implication { universals: vec![cur(0), cur(1)], lhs: self.lhs, rhs: self.rhs, origin: name.into() };
        Fixture { name, imp, unknowns: self.unknowns, witness, box_ }
    }
}

fn times(c: &UnknownPoly, p: &Polynomial) -> TemplatePolynomial {
    Poly::from_terms(p.terms().map(|(m, v)| (m.clone(), c.scale(v))))
}

fn lit(c: &UnknownPoly) -> TemplatePolynomial {
    Poly::term(Monomial::one(), c.clone())
}

fn fixtures() -> Vec<Fixture> {
    let unit = || [(q(0), q(1)), (q(0), q(1))];
    let mut out = Vec::new();

    let (b, c) = Builder::new(1);
    out.push(b.hyp(x(), Rel::Ge).goal(times(&c[0], &x())).done("scaled_nonnegative", Some(vec![q(1)]), [(q(0), q(5)), (q(0), q(1))]));

    let (b, c) = Builder::new(2);
    out.push(
        b.hyp(x(), Rel::Ge)
            .hyp(k(1).sub(&x()), Rel::Ge)
            .goal(lit(&c[0]).add(&times(&c[1], &x())).add(&k(-1).to_template()))
            .done("affine_lower_bound", Some(vec![q(1), q(0)]), unit()),
    );

    let (b, c) = Builder::new(1);
    out.push(
        b.hyp(x(), Rel::Ge)
            .hyp(y(), Rel::Ge)
            .hyp(k(2).sub(&x()).sub(&y()), Rel::Ge)
            .goal(k(3).sub(&x()).sub(&y()).to_template().sub(&lit(&c[0])))
            .done("simplex_slack", Some(vec![q(1)]), [(q(0), q(2)), (q(0), q(2))]),
    );

    let (b, c) = Builder::new(1);
    out.push(
        b.hyp(x().sub(&k(1)), Rel::Ge)
            .goal(times(&c[0], &x()).add(&k(-2).to_template()))
            .done("ray_slope", Some(vec![q(2)]), [(q(1), q(9)), (q(0), q(1))]),
    );

    let (b, c) = Builder::new(1);
    out.push(b.hyp(x(), Rel::Eq).goal(lit(&c[0]).add(&x().to_template())).done("equality_hypothesis", Some(vec![q(0)]), [(q(0), q(0)), (q(0), q(1))]));

    let (b, c) = Builder::new(1);
    out.push(b.hyp(x(), Rel::Ge).goal(lit(&c[0]).sub(&x().to_template())).done("unbounded_is_unsat", None, [(q(0), q(9)), (q(0), q(1))]));

    let (b, c) = Builder::new(2);
    out.push(
        b.hyp(x().add(&k(2)), Rel::Ge)
            .hyp(k(2).sub(&x()), Rel::Ge)
            .goal(lit(&c[0]).sub(&x().to_template()))
            .goal(x().to_template().add(&lit(&c[1])))
            .done("two_conclusions", Some(vec![q(2), q(2)]), [(q(-2), q(2)), (q(0), q(1))]),
    );

    let (b, c) = Builder::new(1);
    out.push(
        b.hyp(x().add(&k(1)), Rel::Ge)
            .hyp(k(1).sub(&x()), Rel::Ge)
            .goal(k(1).sub(&x().mul(&x())).to_template().add(&lit(&c[0])))
            .done("interval_square", Some(vec![q(0)]), [(q(-1), q(1)), (q(0), q(1))]),
    );

    let (b, c) = Builder::new(1);
    out.push(
        b.hyp(x(), Rel::Ge)
            .goal(x().mul(&x()).to_template().add(&times(&c[0], &x())))
            .done("square_plus_ray", Some(vec![q(0)]), [(q(0), q(4)), (q(0), q(1))]),
    );

    let (b, c) = Builder::new(1);
    out.push(
        b.hyp(y().sub(&x().mul(&x())), Rel::Eq)
            .goal(y().to_template().add(&lit(&c[0])))
            .done("parabola_equality", Some(vec![q(0)]), [(q(-2), q(2)), (q(0), q(4))]),
    );

    let (b, c) = Builder::new(1);
    out.push(
        b.hyp(x(), Rel::Ge)
            .hyp(k(1).sub(&x()), Rel::Ge)
            .hyp(y(), Rel::Ge)
            .hyp(k(1).sub(&y()), Rel::Ge)
            .goal(lit(&c[0]).sub(&x().mul(&x()).add(&y().mul(&y())).to_template()))
            .done("box_disc", Some(vec![q(2)]), unit()),
    );

    let (b, c) = Builder::new(1);
    out.push(
        b.hyp(k(1).sub(&x().mul(&x())).sub(&y().mul(&y())), Rel::Ge)
            .goal(times(&c[0], &x().mul(&x())).add(&k(1).sub(&x()).to_template()).add(&k(-3).to_template()))
            .done("disc_is_unsat", None, [(qf(-1, 2), qf(1, 2)), (qf(-1, 2), qf(1, 2))]),
    );

    out
}

fn grid(box_: &[(Q, Q); 2]) -> Vec<BTreeMap<Var, Q>> {
    let steps = 8;
    let mut pts = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps {
            let at = |(lo, hi): &(Q, Q), t: i64| lo + (hi - lo) * qf(t, steps);
            pts.push(BTreeMap::from([(cur(0), at(&box_[0], i)), (cur(1), at(&box_[1], j))]));
        }
    }
    pts
}

fn in_lhs(imp: &Implication, pt: &BTreeMap<Var, Q>) -> bool {
    imp.lhs.iter().all(|a| {
        let p = a.poly.instantiate(&|_| Some(q(0)));
        a.rel.holds(&p.eval_map(pt).expect("point"))
    })
}

fn holds_everywhere(f: &Fixture, values: &BTreeMap<Var, Q>, slack: &Q) -> bool {
    let unknown = |v: Var| Some(values.get(&v).cloned().unwrap_or_else(|| q(0)));
    grid(&f.box_).into_iter().filter(|pt| in_lhs(&f.imp, pt)).all(|pt| {
        let point = |v: Var| pt.get(&v).cloned();
        f.imp.holds_at(&unknown, &point, slack)
    })
}

fn translate(f: &Fixture) -> ExistentialSystem {
    if f.imp.is_linear() {
        farkas_translate(&f.imp, &f.unknowns).expect("farkas")
    } else {
        putinar_translate(&f.imp, &SosConfig::default(), &f.unknowns).expect("putinar")
    }
}

#[test]
fn fixtures_are_well_posed() {
    let fs = fixtures();
    assert!(fs.len() >= 10);
    for f in &fs {
        if let Some(w) = &f.witness {
            let values: BTreeMap<Var, Q> = w.iter().cloned().enumerate().map(|(i, v)| (i as Var, v)).collect();
            assert!(holds_everywhere(f, &values, &q(0)), "{}: witness fails", f.name);
        }
        let sys = translate(f);
        let doc = emit_smtlib(&sys);
        assert!(doc.contains("(check-sat)"), "{}", f.name);
        assert_eq!(doc.matches('(').count(), doc.matches(')').count(), "{}", f.name);
    }
}

#[test]
fn installed_backends_round_trip() {
    let backends: Vec<Backend> = ["z3", "yices"].iter().filter_map(|n| Backend::named(n).ok()).filter(|b| b.available()).collect();
    if backends.is_empty() {
        eprintln!("no solver installed; skipping");
        return;
    }
    for f in fixtures() {
        let sys = translate(&f);
        let doc = emit_smtlib(&sys);
        let mut validated = 0;
        for b in &backends {
            let out = run_backend(&doc, b, Duration::from_secs(20), None, ParseOptions::default()).expect("backend runs");
            match (&f.witness, out.status) {
                (None, SolverStatus::Sat) => panic!("{} on {}: sat on an invalid implication", f.name, b.name),
                (Some(_), SolverStatus::Sat) => match exact_model(&sys, &out.model_vars(&sys.unknowns), out.approximate) {
                    Some((model, approximate)) => {
                        let slack = CheckConfig::slack_for(approximate);
                        assert!(holds_everywhere(&f, &model, &slack), "{} on {}: model violates the implication", f.name, b.name);
                        validated += 1;
                    }
                    None => assert!(out.approximate, "{} on {}: exact model fails the recheck", f.name, b.name),
                },
                (Some(_), s) => panic!("{} on {}: expected sat, got {s:?}", f.name, b.name),
                (None, _) => {}
            }
        }
        if f.witness.is_some() {
            assert!(validated > 0, "{}: no backend produced a usable model", f.name);
        }
    }
}
