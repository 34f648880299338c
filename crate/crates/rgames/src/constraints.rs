//! Polynomial templates for the ranking function and the REACH strategy,
//! and collection of the implications that define a ranking certificate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::game::{
    cur, kind_of, linear_infeasible, primed, slot_of, witness, Atom, GameSpec, LabelId, Owner, PreMechanism, Pred,
    PredError, Rel, Slot, DEFAULT_DNF_CAP,
};
use crate::poly::{binomial, monomials_up_to, Monomial, Polynomial, TemplatePolynomial, UnknownPoly, Q, Var};

/// Table of named unknowns; an unknown's index is its variable id in
/// [`UnknownPoly`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Unknowns {
    names: Vec<String>,
}

impl Unknowns {
    /// Registers a new unknown.
    pub fn fresh(&mut self, name: String) -> Var {
        self.names.push(name);
        (self.names.len() - 1) as Var
    }

    /// Name of an unknown.
    pub fn name(&self, v: Var) -> &str {
        &self.names[v as usize]
    }

    /// Number of unknowns.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// True when no unknown is registered.
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// All names in id order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Id of a name.
    pub fn lookup(&self, name: &str) -> Option<Var> {
        self.names.iter().position(|n| n == name).map(|i| i as Var)
    }
}

/// Configuration errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    /// Template degree below one.
    #[error("template degree must be at least 1, got {0}")]
    Degree(u32),
    /// Too many candidate systems.
    #[error("{count} disjunct combinations exceed the cap of {cap}; raise the cap or rewrite the disjunctive updates")]
    TooManyCandidates {
        /// Number of combinations.
        count: u128,
        /// Configured cap.
        cap: usize,
    },
    /// Predicate manipulation failed.
    #[error(transparent)]
    Pred(#[from] PredError),
}

/// Templates for one degree.
#[derive(Clone, Debug)]
pub struct TemplateSet {
    /// Degree of the ranking templates.
    pub degree: u32,
    /// Degree of the strategy templates.
    pub strategy_degree: u32,
    /// Unknown names.
    pub unknowns: Unknowns,
    /// Ranking template per label.
    pub f: Vec<TemplatePolynomial>,
    /// Strategy template per REACH label and state slot.
    pub sigma: BTreeMap<LabelId, BTreeMap<Slot, TemplatePolynomial>>,
}

fn template(monos: &[Monomial], unknowns: &mut Unknowns, prefix: &str) -> TemplatePolynomial {
    TemplatePolynomial::from_terms(
        monos.iter().enumerate().map(|(i, m)| (m.clone(), UnknownPoly::var(unknowns.fresh(format!("{prefix}_{i}"))))),
    )
}

/// Builds ranking templates for every label and strategy templates for every
/// REACH label, over the current-state variables in graded-lex order.
pub fn build_templates(g: &GameSpec, degree: u32, strategy_degree: Option<u32>) -> Result<TemplateSet, ConstraintError> {
    let sd = strategy_degree.unwrap_or(degree);
    if degree < 1 {
        return Err(ConstraintError::Degree(degree));
    }
    if sd < 1 {
        return Err(ConstraintError::Degree(sd));
    }
    let vars = g.cur_vars();
    let f_monos = monomials_up_to(&vars, degree);
    let s_monos = monomials_up_to(&vars, sd);
    debug_assert_eq!(f_monos.len() as u64, binomial(vars.len() as u64 + degree as u64, degree as u64));
    let mut unknowns = Unknowns::default();
    let mut f = Vec::new();
    for l in &g.labels {
        f.push(template(&f_monos, &mut unknowns, &format!("s_{}", l.name)));
    }
    let mut sigma = BTreeMap::new();
    for (id, l) in g.labels.iter().enumerate() {
        if l.owner != Owner::Reach {
            continue;
        }
        let mut per = BTreeMap::new();
        for &s in &g.state_vars {
            per.insert(s, template(&s_monos, &mut unknowns, &format!("t_{}_{}", l.name, g.var_names[s])));
        }
        sigma.insert(id, per);
    }
    Ok(TemplateSet { degree, strategy_degree: sd, unknowns, f, sigma })
}

/// Which certificate condition a group encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupKind {
    /// Nonnegativity at the initial state.
    C1,
    /// Decrease along every SAFE successor.
    C2,
    /// Decrease along the strategy's REACH successor.
    C3,
}

/// Template-valued atom `poly rel 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TAtom {
    /// Polynomial in game variables with unknown-polynomial coefficients.
    pub poly: TemplatePolynomial,
    /// Relation to zero.
    pub rel: Rel,
}

impl TAtom {
    fn from_atom(a: &Atom) -> TAtom {
        TAtom { poly: a.lhs.to_template(), rel: a.rel }
    }

    fn ge(poly: TemplatePolynomial) -> TAtom {
        TAtom { poly, rel: Rel::Ge }
    }
}

/// Implications of one condition instance, before disjunct splitting.
#[derive(Clone, Debug)]
pub struct ImplicationGroup {
    /// Condition.
    pub kind: GroupKind,
    /// Source label.
    pub label: LabelId,
    /// Transition, for C2 and C3.
    pub transition: Option<usize>,
    /// True for groups generated by deadlock plumbing.
    pub sink: bool,
    /// Concrete hypothesis.
    pub hyp: Pred,
    /// Template hypotheses (`f_l(x) >= 0`).
    pub hyp_templates: Vec<TAtom>,
    /// Conclusion atoms. For C3 they mention primed variables that are
    /// replaced by the strategy when the group is split.
    pub concl: Vec<TAtom>,
    /// For C3: DNF cubes of `U(x, x') ∧ domain(x')`, one per candidate
    /// choice. A single empty cube otherwise.
    pub choices: Vec<Vec<Atom>>,
}

impl ImplicationGroup {
    /// Provenance tag.
    pub fn tag(&self, g: &GameSpec) -> String {
        match (self.kind, self.transition) {
            (GroupKind::C1, _) => "C1".to_string(),
            (k, Some(t)) => {
                let tr = &g.transitions[t];
                format!("{:?} t{} {}->{}", k, t, g.labels[tr.source].name, g.labels[tr.target].name)
            }
            (k, None) => format!("{k:?}"),
        }
    }
}

/// Options for constraint collection.
#[derive(Clone, Debug)]
pub struct CollectOptions {
    /// Use the expanded targets and the implicit encoding.
    pub pre_mode: bool,
}

fn f_at(ts: &TemplateSet, l: LabelId, rename: &dyn Fn(Var) -> Var) -> TemplatePolynomial {
    ts.f[l].map_vars(rename)
}

fn target_for(g: &GameSpec, l: LabelId, pre_mode: bool) -> Pred {
    if pre_mode {
        g.effective_target(l).clone()
    } else {
        g.targets[l].clone()
    }
}

/// Collects the C1, C2 and C3 groups of a normalized game.
pub fn collect_constraints(g: &GameSpec, ts: &TemplateSet, opts: &CollectOptions) -> Vec<ImplicationGroup> {
    let mut out = Vec::new();
    let ident = |v: Var| v;
    let to_primed = |v: Var| if kind_of(v) == 0 { primed(slot_of(v)) } else { v };
    let to_witness = |v: Var| if kind_of(v) == 0 { witness(slot_of(v)) } else { v };

    let params = g.param_slots();
    let init_subst: BTreeMap<Var, Polynomial> =
        g.init.iter().filter(|(s, _)| !params.contains(s)).map(|(&s, v)| (cur(s), Polynomial::from_q(v))).collect();
    let init_t: BTreeMap<Var, TemplatePolynomial> = init_subst.iter().map(|(k, v)| (*k, v.to_template())).collect();
    let f_init = ts.f[g.init_label].substitute(&init_t);
    let param_hyp = Pred::And(g.params.iter().filter(|p| p.slot.is_some()).filter_map(|p| p.constraint.clone()).collect()).simplify();
    out.push(ImplicationGroup {
        kind: GroupKind::C1,
        label: g.init_label,
        transition: None,
        sink: false,
        hyp: param_hyp,
        hyp_templates: vec![],
        concl: vec![TAtom::ge(f_init)],
        choices: vec![vec![]],
    });

    let dom = g.domain.clone();
    let dom_primed = dom.map_polys(&|p| g.cur_to_primed(p));
    let dom_witness = dom.map_polys(&|p| g.cur_to_witness(p));
    let one = TemplatePolynomial::constant(UnknownPoly::constant(Q::one()));
    for (ti, t) in g.transitions.iter().enumerate() {
        let l = t.source;
        let sink = t.sink || g.labels[l].sink;
        let not_target = target_for(g, l, opts.pre_mode).negate();
        let f_l = f_at(ts, l, &ident);
        let f_next = f_at(ts, t.target, &to_primed);
        let decrease = f_l.sub(&one).sub(&f_next);
        match g.owner(l) {
            Owner::Safe => {
                let mut hyp = vec![dom.clone(), dom_primed.clone(), not_target, t.guard.clone(), t.update.clone()];
                let implicit = opts.pre_mode
                    && g.expanded.as_ref().is_some_and(|e| e[l].mechanism == PreMechanism::Implicit);
                if implicit {
                    let upd_w = t.update.map_polys(&|p| g.prime_to_witness(p));
                    let escape = g.targets[t.target].map_polys(&|p| p.map_vars(&to_witness)).negate();
                    hyp.extend([upd_w, dom_witness.clone(), escape]);
                }
                out.push(ImplicationGroup {
                    kind: GroupKind::C2,
                    label: l,
                    transition: Some(ti),
                    sink,
                    hyp: Pred::And(hyp).simplify(),
                    hyp_templates: vec![TAtom::ge(f_l)],
                    concl: vec![TAtom::ge(decrease), TAtom::ge(f_next)],
                    choices: vec![vec![]],
                });
            }
            Owner::Reach => {
                let choices = Pred::And(vec![t.update.clone(), dom_primed.clone()])
                    .simplify()
                    .dnf(DEFAULT_DNF_CAP)
                    .unwrap_or_else(|_| vec![vec![Atom::ge(Polynomial::from_q(&-Q::one()))]]);
                out.push(ImplicationGroup {
                    kind: GroupKind::C3,
                    label: l,
                    transition: Some(ti),
                    sink,
                    hyp: Pred::And(vec![dom.clone(), not_target, t.guard.clone()]).simplify(),
                    hyp_templates: vec![TAtom::ge(f_l)],
                    concl: vec![TAtom::ge(decrease), TAtom::ge(f_next)],
                    choices,
                });
            }
        }
    }
    out
}

/// Number of (C1, C2, C3) groups excluding deadlock plumbing.
pub fn group_counts(groups: &[ImplicationGroup]) -> (usize, usize, usize) {
    let count = |k| groups.iter().filter(|gr| gr.kind == k && !gr.sink).count();
    (count(GroupKind::C1), count(GroupKind::C2), count(GroupKind::C3))
}

/// Universally quantified implication `lhs ⟹ rhs` over `universals`.
#[derive(Clone, Debug)]
pub struct Implication {
    /// Quantified game variables.
    pub universals: Vec<Var>,
    /// Conjunction of hypotheses (`>=` or `=` atoms).
    pub lhs: Vec<TAtom>,
    /// Conjunction of conclusions (`>=` atoms).
    pub rhs: Vec<TAtom>,
    /// Provenance tag.
    pub origin: String,
}

impl Implication {
    /// True when every atom has degree at most one in game variables.
    pub fn is_linear(&self) -> bool {
        self.lhs.iter().chain(&self.rhs).all(|a| a.poly.degree() <= 1)
    }

    /// Evaluates the implication at a point of the universals after
    /// instantiating the unknowns. Strict relaxations are not undone.
    pub fn holds_at(&self, unknown: &dyn Fn(Var) -> Option<Q>, point: &dyn Fn(Var) -> Option<Q>, slack: &Q) -> bool {
        let val = |a: &TAtom| a.poly.instantiate(unknown).eval(point, &|v| format!("#{v}")).ok();
        let lhs_ok = self.lhs.iter().all(|a| match val(a) {
            Some(v) => a.rel.holds(&v),
            None => false,
        });
        !lhs_ok
            || self.rhs.iter().all(|a| match val(a) {
                Some(v) => a.rel.holds(&(v + slack)),
                None => false,
            })
    }
}

/// Splitting options.
#[derive(Clone, Debug)]
pub struct SplitOptions {
    /// Slack that turns strict conclusions `p > 0` into `p - delta >= 0`.
    pub delta: Q,
    /// Maximum number of candidate systems.
    pub cap: usize,
    /// Maximum number of DNF cubes per hypothesis.
    pub dnf_cap: usize,
    /// Replace strategy components by the update's assignment when the
    /// chosen disjunct assigns them.
    pub force_assignments: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { delta: Q::new(1.into(), 1_000_000.into()), cap: 64, dnf_cap: DEFAULT_DNF_CAP, force_assignments: true }
    }
}

/// One conjunctive system of implications, corresponding to one choice of
/// update disjunct per C3 group.
#[derive(Clone, Debug)]
pub struct CandidateSystem {
    /// Chosen disjunct index per group (zero for groups without choices).
    pub choice: Vec<usize>,
    /// Strategy components fixed by assignment-form disjuncts.
    pub forced: BTreeMap<LabelId, BTreeMap<Slot, Polynomial>>,
    /// Implications.
    pub implications: Vec<Implication>,
}

impl CandidateSystem {
    /// True when every implication is linear in the game variables.
    pub fn is_linear(&self) -> bool {
        self.implications.iter().all(Implication::is_linear)
    }
}

fn strict_rhs(a: &TAtom, delta: &Q) -> Vec<TAtom> {
    match a.rel {
        Rel::Ge => vec![a.clone()],
        Rel::Gt => vec![TAtom::ge(a.poly.sub(&TemplatePolynomial::constant(UnknownPoly::from_q(delta))))],
        Rel::Eq => vec![TAtom::ge(a.poly.clone()), TAtom::ge(a.poly.neg())],
    }
}

fn assignment_of(a: &Atom) -> Option<(Slot, Polynomial)> {
    if a.rel != Rel::Eq {
        return None;
    }
    let pv: Vec<Var> = a.lhs.vars().into_iter().filter(|&v| kind_of(v) != 0).collect();
    if pv.len() != 1 || kind_of(pv[0]) != 1 {
        return None;
    }
    let v = pv[0];
    let m = Monomial::var(v);
    let c = a.lhs.coeff(&m);
    if c.is_zero() || a.lhs.degree_in(&|w| w == v) != 1 {
        return None;
    }
    Some((slot_of(v), a.lhs.sub(&Polynomial::term(m, c.clone())).scale(&(-(Q::one() / c)))))
}

/// Strategy components forced by a chosen cube: primed variables equal to a
/// polynomial in current variables.
pub fn forced_assignments(cube: &[Atom]) -> BTreeMap<Slot, Polynomial> {
    let mut out = BTreeMap::new();
    for a in cube {
        if let Some((s, p)) = assignment_of(a) {
            out.entry(s).or_insert(p);
        }
    }
    out
}

/// Eliminates non-current universals fixed by linear equalities in the
/// hypotheses. Returns `None` when the hypotheses become contradictory.
fn eliminate(lhs: &mut Vec<TAtom>, rhs: &mut [TAtom]) -> Option<()> {
    loop {
        let mut found = None;
        for (i, a) in lhs.iter().enumerate() {
            if a.rel != Rel::Eq {
                continue;
            }
            for v in a.poly.vars() {
                if kind_of(v) == 0 {
                    continue;
                }
                if a.poly.degree_in(&|w| w == v) != 1 {
                    continue;
                }
                let m = Monomial::var(v);
                let Some(c) = a.poly.coeff(&m).as_constant() else { continue };
                if c.is_zero() || a.poly.terms().any(|(mm, _)| mm != &m && mm.exponent(v) > 0) {
                    continue;
                }
                let rest = a.poly.sub(&TemplatePolynomial::term(m.clone(), UnknownPoly::from_q(&c)));
                found = Some((i, v, rest.scale(&(-(Q::one() / c)))));
                break;
            }
            if found.is_some() {
                break;
            }
        }
        let Some((i, v, value)) = found else { return Some(()) };
        lhs.remove(i);
        let subst: BTreeMap<Var, TemplatePolynomial> = [(v, value)].into_iter().collect();
        for a in lhs.iter_mut().chain(rhs.iter_mut()) {
            a.poly = a.poly.substitute(&subst);
        }
        let mut keep = Vec::with_capacity(lhs.len());
        for a in lhs.drain(..) {
            match a.poly.as_constant().and_then(|c| c.as_constant()) {
                Some(c) if a.rel.holds(&c) => {}
                Some(_) => return None,
                None => keep.push(a),
            }
        }
        *lhs = keep;
    }
}

/// Splits one group for a fixed disjunct choice into implications with
/// conjunctive hypotheses and single-atom conclusions grouped per
/// implication.
pub fn implication_split(
    g: &GameSpec,
    ts: &TemplateSet,
    group: &ImplicationGroup,
    choice: usize,
    forced: &BTreeMap<LabelId, BTreeMap<Slot, Polynomial>>,
    opts: &SplitOptions,
) -> Result<Vec<Implication>, ConstraintError> {
    let cubes = group.hyp.dnf(opts.dnf_cap)?;
    let mut concl = group.concl.clone();
    if group.kind == GroupKind::C3 {
        let cube = &group.choices[choice];
        let sigma: BTreeMap<Var, TemplatePolynomial> = g
            .state_vars
            .iter()
            .map(|&s| {
                let p = match forced.get(&group.label).and_then(|m| m.get(&s)) {
                    Some(p) => p.to_template(),
                    None => ts.sigma[&group.label][&s].clone(),
                };
                (primed(s), p)
            })
            .collect();
        concl.extend(cube.iter().map(TAtom::from_atom));
        for a in concl.iter_mut() {
            a.poly = a.poly.substitute(&sigma);
        }
    }
    let mut rhs: Vec<TAtom> = Vec::new();
    for a in &concl {
        for r in strict_rhs(a, &opts.delta) {
            match r.poly.as_constant().and_then(|c| c.as_constant()) {
                Some(c) if c >= Q::zero() => {}
                _ => rhs.push(r),
            }
        }
    }
    let tag = group.tag(g);
    let mut out = Vec::new();
    for (ci, cube) in cubes.iter().enumerate() {
        if linear_infeasible(cube) {
            continue;
        }
        let mut lhs: Vec<TAtom> = cube
            .iter()
            .map(|a| TAtom { poly: a.lhs.to_template(), rel: if a.rel == Rel::Gt { Rel::Ge } else { a.rel } })
            .collect();
        lhs.extend(group.hyp_templates.iter().cloned());
        let mut r = rhs.clone();
        if eliminate(&mut lhs, &mut r).is_none() {
            continue;
        }
        r.retain(|a| !matches!(a.poly.as_constant().and_then(|c| c.as_constant()), Some(c) if c >= Q::zero()));
        if r.is_empty() {
            continue;
        }
        let mut universals: Vec<Var> = lhs.iter().chain(&r).flat_map(|a| a.poly.vars()).collect();
        universals.sort_unstable();
        universals.dedup();
        let origin = if cubes.len() > 1 { format!("{tag} case {ci}") } else { tag.clone() };
        let origin = if group.choices.len() > 1 { format!("{origin} choice {choice}") } else { origin };
        out.push(Implication { universals, lhs, rhs: r, origin });
    }
    Ok(out)
}

/// Enumerates candidate systems: one per combination of update disjuncts
/// across C3 groups.
pub fn candidate_systems(
    g: &GameSpec,
    ts: &TemplateSet,
    groups: &[ImplicationGroup],
    opts: &SplitOptions,
) -> Result<Vec<CandidateSystem>, ConstraintError> {
    let sizes: Vec<usize> = groups.iter().map(|gr| gr.choices.len().max(1)).collect();
    let count: u128 = sizes.iter().map(|&s| s as u128).product();
    if count > opts.cap as u128 {
        return Err(ConstraintError::TooManyCandidates { count, cap: opts.cap });
    }
    if groups.iter().any(|gr| gr.choices.is_empty()) {
        return Ok(vec![]);
    }
    let mut out = Vec::new();
    let mut choice = vec![0usize; groups.len()];
    loop {
        let mut forced: BTreeMap<LabelId, BTreeMap<Slot, Polynomial>> = BTreeMap::new();
        if opts.force_assignments {
            for l in ts.sigma.keys() {
                let main: Vec<usize> =
                    (0..groups.len()).filter(|&i| groups[i].kind == GroupKind::C3 && groups[i].label == *l && !groups[i].sink).collect();
                if main.len() == 1 {
                    let i = main[0];
                    let fa = forced_assignments(&groups[i].choices[choice[i]]);
                    if !fa.is_empty() {
                        forced.insert(*l, fa);
                    }
                }
            }
        }
        let mut implications = Vec::new();
        for (i, gr) in groups.iter().enumerate() {
            implications.extend(implication_split(g, ts, gr, choice[i], &forced, opts)?);
        }
        out.push(CandidateSystem { choice: choice.clone(), forced, implications });
        let mut i = 0;
        loop {
            if i == groups.len() {
                return Ok(out);
            }
            choice[i] += 1;
            if choice[i] < sizes[i] {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Human-readable dump of implications, one block each.
pub fn render_implications(g: &GameSpec, ts: &TemplateSet, imps: &[Implication]) -> String {
    let names = g.namer();
    let unk = |v: Var| ts.unknowns.names().get(v as usize).cloned().unwrap_or_else(|| format!("u{v}"));
    let show = |a: &TAtom| {
        let terms: Vec<String> = a
            .poly
            .terms()
            .map(|(m, c)| {
                let c = c.render(&unk);
                if m.is_one() {
                    format!("({c})")
                } else {
                    format!("({c})*{}", m.render(&names))
                }
            })
            .collect();
        let body = if terms.is_empty() { "0".to_string() } else { terms.join(" + ") };
        format!("{body} {} 0", a.rel.symbol())
    };
    let mut out = String::new();
    for imp in imps {
        let vars: Vec<String> = imp.universals.iter().map(|&v| names(v)).collect();
        let _ = writeln!(out, "[{}] forall {}", imp.origin, vars.join(" "));
        for a in &imp.lhs {
            let _ = writeln!(out, "  hyp  {}", show(a));
        }
        for a in &imp.rhs {
            let _ = writeln!(out, "  goal {}", show(a));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{normalize_game, parse_game};
    use crate::poly::q;

    const GAME: &str = r#"
game "line"
vars x
domain: -4 <= x <= 4
label A reach
label B safe
init A: x = 0
trans A -> B when true update x' = x + 1 | x' = x - 1
trans B -> A when true update x' >= x - 1 & x' <= x
target B: x >= 3
"#;

    fn setup() -> (GameSpec, TemplateSet) {
        let g = normalize_game(&parse_game(GAME).unwrap()).unwrap();
        let ts = build_templates(&g, 1, None).unwrap();
        (g, ts)
    }

    #[test]
    fn template_shapes() {
        let (g, ts) = setup();
        assert_eq!(ts.f.len(), 2);
        assert_eq!(ts.f[0].len(), 2);
        assert_eq!(ts.unknowns.names()[..2], ["s_A_0".to_string(), "s_A_1".to_string()]);
        assert_eq!(ts.sigma[&0][&0].len(), 2);
        assert_eq!(ts.unknowns.len(), 6);
        assert!(build_templates(&g, 0, None).is_err());
    }

    #[test]
    fn group_counts_and_choices() {
        let (g, ts) = setup();
        let groups = collect_constraints(&g, &ts, &CollectOptions { pre_mode: false });
        assert_eq!(group_counts(&groups), (1, 1, 1));
        let c3 = groups.iter().find(|gr| gr.kind == GroupKind::C3).unwrap();
        assert_eq!(c3.choices.len(), 2);
        let systems = candidate_systems(&g, &ts, &groups, &SplitOptions::default()).unwrap();
        assert_eq!(systems.len(), 2);
        assert!(systems.iter().all(|s| s.forced[&0][&0].degree() == 1));
        let tiny = SplitOptions { cap: 1, ..SplitOptions::default() };
        assert!(matches!(candidate_systems(&g, &ts, &groups, &tiny), Err(ConstraintError::TooManyCandidates { .. })));
    }

    #[test]
    fn c1_is_ground() {
        let (g, ts) = setup();
        let groups = collect_constraints(&g, &ts, &CollectOptions { pre_mode: false });
        let imps = implication_split(&g, &ts, &groups[0], 0, &BTreeMap::new(), &SplitOptions::default()).unwrap();
        assert_eq!(imps.len(), 1);
        assert!(imps[0].universals.is_empty() && imps[0].lhs.is_empty());
        assert_eq!(imps[0].rhs[0].poly.degree(), 0);
    }

    #[test]
    fn strictness_policy() {
        let (g, ts) = setup();
        let groups = collect_constraints(&g, &ts, &CollectOptions { pre_mode: false });
        let c2 = groups.iter().find(|gr| gr.kind == GroupKind::C2).unwrap();
        let imps = implication_split(&g, &ts, c2, 0, &BTreeMap::new(), &SplitOptions::default()).unwrap();
        assert_eq!(imps.len(), 1);
        assert!(imps[0].lhs.iter().all(|a| a.rel == Rel::Ge));
        assert_eq!(imps[0].rhs.len(), 2);
    }

    #[test]
    fn c3_substitution_matches_pointwise_evaluation() {
        let (g, ts) = setup();
        let groups = collect_constraints(&g, &ts, &CollectOptions { pre_mode: false });
        let c3 = groups.iter().find(|gr| gr.kind == GroupKind::C3).unwrap();
        let opts = SplitOptions { force_assignments: false, ..SplitOptions::default() };
        let imps = implication_split(&g, &ts, c3, 0, &BTreeMap::new(), &opts).unwrap();
        let decrease = &imps[0].rhs[0].poly;
        let vals = [q(2), q(-1), q(3), q(1), q(1), q(5)];
        let u = |v: Var| vals.get(v as usize).cloned();
        let x = q(2);
        let lhs = decrease.instantiate(&u).eval(&|_| Some(x.clone()), &|v| v.to_string()).unwrap();
        let sig = ts.sigma[&0][&0].instantiate(&u).eval(&|_| Some(x.clone()), &|v| v.to_string()).unwrap();
        let fa = ts.f[0].instantiate(&u).eval(&|_| Some(x.clone()), &|v| v.to_string()).unwrap();
        let fb = ts.f[1].instantiate(&u).eval(&|_| Some(sig.clone()), &|v| v.to_string()).unwrap();
        assert_eq!(lhs, fa - q(1) - fb);
    }

    #[test]
    fn primed_equalities_are_eliminated() {
        let text = GAME.replace("update x' >= x - 1 & x' <= x", "update x' = x - 1");
        let g = normalize_game(&parse_game(&text).unwrap()).unwrap();
        let ts = build_templates(&g, 1, None).unwrap();
        let groups = collect_constraints(&g, &ts, &CollectOptions { pre_mode: false });
        let c2 = groups.iter().find(|gr| gr.kind == GroupKind::C2).unwrap();
        let imps = implication_split(&g, &ts, c2, 0, &BTreeMap::new(), &SplitOptions::default()).unwrap();
        assert_eq!(imps[0].universals, vec![cur(0)]);
    }
}
