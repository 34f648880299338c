//! Normalization: symbolic parameters become frozen state variables,
//! overlapping guards are made disjoint, and guard coverage is completed
//! with deadlock sinks.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::pred::{Atom, Pred, PredError, DEFAULT_DNF_CAP};
use super::sample::{Sampler, SamplerConfig};
use super::{cur, primed, GameSpec, LabelDecl, LabelId, Owner, Transition};
use crate::poly::{Monomial, Polynomial, Q};

/// Name of the REACH-owned sink label.
pub const SINK_REACH: &str = "__sink_reach";
/// Name of the SAFE-owned sink label.
pub const SINK_SAFE: &str = "__sink_safe";

const FM_ROW_CAP: usize = 4000;
const OVERLAP_WITNESS_BUDGET: usize = 400;

/// Normalization failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalizeError {
    /// Two guards of one label overlap while leading to different labels.
    #[error(
        "guards of transitions {first} and {second} from label `{label}` overlap at {witness} but lead to different labels; \
         rewrite the guards so that they are disjoint"
    )]
    CrossTargetOverlap {
        /// Source label.
        label: String,
        /// Index of the first transition.
        first: usize,
        /// Index of the second transition.
        second: usize,
        /// A valuation in both guards.
        witness: String,
    },
    /// Predicate manipulation failed.
    #[error(transparent)]
    Pred(#[from] PredError),
}

#[derive(Clone, Debug, PartialEq)]
struct Row {
    coeffs: BTreeMap<Monomial, Q>,
    c: Q,
    strict: bool,
}

impl Row {
    fn from_poly(p: &Polynomial, strict: bool) -> Row {
        let mut coeffs = BTreeMap::new();
        let mut c = Q::zero();
        for (m, v) in p.terms() {
            if m.is_one() {
                c = v.clone();
            } else {
                coeffs.insert(m.clone(), v.clone());
            }
        }
        Row { coeffs, c, strict }.normalized()
    }

    fn normalized(mut self) -> Row {
        if let Some(scale) = self.coeffs.values().next().map(|v| v.abs()) {
            for v in self.coeffs.values_mut() {
                *v = &*v / &scale;
            }
            self.c = &self.c / &scale;
        }
        self
    }

    fn contradicts(&self) -> bool {
        self.coeffs.is_empty() && (self.c.is_negative() || (self.strict && self.c.is_zero()))
    }
}

/// Fourier-Motzkin refutation of a conjunction of atoms. Every non-constant
/// monomial is treated as an independent real variable, which relaxes the
/// conjunction. Returns `true` only when the relaxation is infeasible, so a
/// `true` answer proves the conjunction unsatisfiable. `false` means either
/// feasible or undecided.
pub fn linear_infeasible(atoms: &[Atom]) -> bool {
    let mut rows: Vec<Row> = Vec::new();
    for a in atoms {
        match a.rel {
            super::Rel::Ge => rows.push(Row::from_poly(&a.lhs, false)),
            super::Rel::Gt => rows.push(Row::from_poly(&a.lhs, true)),
            super::Rel::Eq => {
                rows.push(Row::from_poly(&a.lhs, false));
                rows.push(Row::from_poly(&a.lhs.neg(), false));
            }
        }
    }
    loop {
        if rows.iter().any(Row::contradicts) {
            return true;
        }
        rows.retain(|r| !r.coeffs.is_empty());
        dedup_rows(&mut rows);
        let mut counts: BTreeMap<&Monomial, (usize, usize)> = BTreeMap::new();
        for r in &rows {
            for (m, v) in &r.coeffs {
                let e = counts.entry(m).or_default();
                if v.is_positive() {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        let Some((pivot, _)) = counts.iter().min_by_key(|(_, (p, n))| p * n) else {
            return false;
        };
        let pivot = (*pivot).clone();
        let (with, without): (Vec<Row>, Vec<Row>) = rows.into_iter().partition(|r| r.coeffs.contains_key(&pivot));
        let (pos, neg): (Vec<Row>, Vec<Row>) = with.into_iter().partition(|r| r.coeffs[&pivot].is_positive());
        rows = without;
        if pos.len() * neg.len() + rows.len() > FM_ROW_CAP {
            return false;
        }
        for p in &pos {
            for n in &neg {
                let a = p.coeffs[&pivot].clone();
                let b = -n.coeffs[&pivot].clone();
                let mut coeffs: BTreeMap<Monomial, Q> = BTreeMap::new();
                for (m, v) in &p.coeffs {
                    *coeffs.entry(m.clone()).or_insert_with(Q::zero) += v * &b;
                }
                for (m, v) in &n.coeffs {
                    *coeffs.entry(m.clone()).or_insert_with(Q::zero) += v * &a;
                }
                coeffs.retain(|_, v| !v.is_zero());
                let row = Row { coeffs, c: &p.c * &b + &n.c * &a, strict: p.strict || n.strict }.normalized();
                rows.push(row);
            }
        }
    }
}

fn dedup_rows(rows: &mut Vec<Row>) {
    let mut out: Vec<Row> = Vec::with_capacity(rows.len());
    'outer: for r in rows.drain(..) {
        for o in out.iter_mut() {
            if o.coeffs == r.coeffs {
                if r.c < o.c || (r.c == o.c && r.strict) {
                    *o = r;
                }
                continue 'outer;
            }
        }
        out.push(r);
    }
    *rows = out;
}

/// True when `p ∧ domain` is proven empty by Fourier-Motzkin on every DNF cube.
pub(crate) fn provably_empty(p: &Pred, domain: &Pred) -> bool {
    match Pred::And(vec![p.clone(), domain.clone()]).dnf(DEFAULT_DNF_CAP) {
        Ok(cubes) => cubes.iter().all(|c| linear_infeasible(c)),
        Err(_) => false,
    }
}

/// Rewrites `p` as a disjunction of the DNF cubes that are not provably
/// empty inside the domain, dropping atoms implied by the rest of their cube.
pub(crate) fn tidy(p: &Pred, domain: &Pred) -> Pred {
    let Ok(cubes) = p.dnf(DEFAULT_DNF_CAP) else {
        return p.clone();
    };
    let mut out = Vec::new();
    for cube in cubes {
        if provably_empty(&Pred::conj(cube.clone()), domain) {
            continue;
        }
        let mut kept = cube;
        let mut i = 0;
        while i < kept.len() {
            let mut rest = kept.clone();
            let a = rest.remove(i);
            let probe = Pred::And(vec![Pred::conj(rest.clone()), a.negate()]);
            if provably_empty(&probe, domain) {
                kept = rest;
            } else {
                i += 1;
            }
        }
        out.push(Pred::conj(kept));
    }
    Pred::Or(out).simplify()
}

/// Normalizes a game. Idempotent.
pub fn normalize_game(g: &GameSpec) -> Result<GameSpec, NormalizeError> {
    if g.normalized {
        return Ok(g.clone());
    }
    let mut g = g.clone();
    freeze_params(&mut g);
    make_disjoint(&mut g)?;
    complete_coverage(&mut g);
    g.normalized = true;
    Ok(g)
}

fn freeze_params(g: &mut GameSpec) {
    let mut frame = Vec::new();
    for p in &g.params {
        if let Some(s) = p.slot {
            if !g.state_vars.contains(&s) {
                g.state_vars.push(s);
            }
            if let Some(c) = &p.constraint {
                g.domain = Pred::And(vec![g.domain.clone(), c.clone()]).simplify();
            }
            frame.push(Pred::Atom(Atom::eq(Polynomial::var(primed(s)).sub(&Polynomial::var(cur(s))))));
        }
    }
    if frame.is_empty() {
        return;
    }
    for t in g.transitions.iter_mut() {
        let mut parts = vec![t.update.clone()];
        parts.extend(frame.iter().cloned());
        t.update = Pred::And(parts).simplify();
    }
}

fn make_disjoint(g: &mut GameSpec) -> Result<(), NormalizeError> {
    let original = std::mem::take(&mut g.transitions);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for l in 0..g.labels.len() {
        let mut done: Vec<(usize, Transition)> = Vec::new();
        for (idx, t) in original.iter().enumerate().filter(|(_, t)| t.source == l) {
            let mut pending = vec![t.clone()];
            let mut next_done: Vec<(usize, Transition)> = Vec::new();
            for (uidx, u) in done.into_iter() {
                let mut still_pending = Vec::new();
                let mut u_pieces = vec![u];
                for p in pending {
                    let mut new_u_pieces = Vec::new();
                    let mut p_rest = Some(p);
                    for up in u_pieces {
                        let Some(pr) = p_rest.take() else {
                            new_u_pieces.push(up);
                            continue;
                        };
                        let overlap = Pred::And(vec![up.guard.clone(), pr.guard.clone()]).simplify();
                        if provably_empty(&overlap, &g.domain) {
                            new_u_pieces.push(up);
                            p_rest = Some(pr);
                            continue;
                        }
                        if up.target != pr.target {
                            let sampler = Sampler::new(g, SamplerConfig { budget: OVERLAP_WITNESS_BUDGET, ..SamplerConfig::default() });
                            if let Ok(w) = sampler.sample_in(&overlap, &mut rng) {
                                return Err(NormalizeError::CrossTargetOverlap {
                                    label: g.labels[l].name.clone(),
                                    first: uidx,
                                    second: idx,
                                    witness: g.show_state(&super::State { label: l, valuation: w }),
                                });
                            }
                            new_u_pieces.push(up);
                            p_rest = Some(pr);
                            continue;
                        }
                        let only_u = tidy(&Pred::And(vec![up.guard.clone(), pr.guard.negate()]), &g.domain);
                        let only_p = tidy(&Pred::And(vec![pr.guard.clone(), up.guard.negate()]), &g.domain);
                        let u_empty = provably_empty(&only_u, &g.domain);
                        let p_empty = provably_empty(&only_p, &g.domain);
                        let both_guard = if p_empty {
                            pr.guard.clone()
                        } else if u_empty {
                            up.guard.clone()
                        } else {
                            overlap
                        };
                        if !u_empty {
                            new_u_pieces.push(Transition { guard: only_u, ..up.clone() });
                        }
                        new_u_pieces.push(Transition {
                            source: l,
                            target: up.target,
                            guard: both_guard,
                            update: Pred::Or(vec![up.update.clone(), pr.update.clone()]).simplify(),
                            sink: false,
                        });
                        if !p_empty {
                            p_rest = Some(Transition { guard: only_p, ..pr });
                        }
                    }
                    u_pieces = new_u_pieces;
                    still_pending.extend(p_rest);
                }
                pending = still_pending;
                next_done.extend(u_pieces.into_iter().map(|p| (uidx, p)));
            }
            next_done.extend(pending.into_iter().map(|p| (idx, p)));
            done = next_done;
        }
        g.transitions.extend(done.into_iter().map(|(_, t)| t));
    }
    Ok(())
}

fn complete_coverage(g: &mut GameSpec) {
    let identity = Pred::And(
        g.state_vars
            .iter()
            .map(|&s| Pred::Atom(Atom::eq(Polynomial::var(primed(s)).sub(&Polynomial::var(cur(s))))))
            .collect(),
    )
    .simplify();
    let mut sinks: BTreeMap<Owner, LabelId> = BTreeMap::new();
    let labels = g.labels.len();
    for l in 0..labels {
        let guards: Vec<Pred> = g.transitions.iter().filter(|t| t.source == l).map(|t| t.guard.clone()).collect();
        let union = Pred::Or(guards).simplify();
        if union == Pred::True {
            continue;
        }
        let complement = tidy(&union.negate(), &g.domain);
        if complement == Pred::False || provably_empty(&complement, &g.domain) {
            continue;
        }
        let owner = g.labels[l].owner.opponent();
        let sink = *sinks.entry(owner).or_insert_with(|| {
            let name = if owner == Owner::Reach { SINK_REACH } else { SINK_SAFE };
            g.labels.push(LabelDecl { name: name.to_string(), owner, sink: true });
            g.targets.push(Pred::False);
            g.pre_targets.push(None);
            g.transitions.push(Transition {
                source: g.labels.len() - 1,
                target: g.labels.len() - 1,
                guard: Pred::True,
                update: identity.clone(),
                sink: true,
            });
            g.labels.len() - 1
        });
        g.transitions.push(Transition { source: l, target: sink, guard: complement, update: identity.clone(), sink: true });
    }
    g.transitions.sort_by_key(|t| t.source);
}
