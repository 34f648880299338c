//! One application of the predecessor operator to the target.
//!
//! Each label receives an [`ExpandedTarget`]. The increment comes from the
//! game file when given (after a sampling sanity check), is computed by
//! substitution when every outgoing update is in assignment form, and is
//! otherwise left to the constraint encoding (SAFE labels) or omitted
//! (REACH labels).

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::pred::{Pred, PredError};
use super::sample::{SampleError, Sampler, SamplerConfig};
use super::{cur, GameSpec, LabelId, Owner, State};
use crate::poly::{Polynomial, Var};

/// How the target of a label was expanded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreMechanism {
    /// Increment taken from a `pre_target` line.
    Provided,
    /// Increment computed by substituting assignment-form updates.
    Assignment,
    /// SAFE label whose membership in the predecessor set is encoded inside
    /// the constraints with a witness successor.
    Implicit,
    /// No expansion: the original target is used.
    Plain,
}

/// Expanded target of one label.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandedTarget {
    /// Target used by the solving pipeline: original target or increment.
    pub pred: Pred,
    /// The increment alone, when one was computed or provided.
    pub increment: Option<Pred>,
    /// Mechanism used.
    pub mechanism: PreMechanism,
}

impl ExpandedTarget {
    /// True when a REACH player standing in the increment must find its
    /// one-step move into the original target at play time.
    pub fn needs_resolution(&self, owner: Owner) -> bool {
        owner == Owner::Reach && self.increment.is_some()
    }
}

/// Expansion failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreError {
    /// The game must be normalized first.
    #[error("target expansion requires a normalized game")]
    NotNormalized,
    /// A provided `pre_target` contains a state from which the required
    /// one-step move does not exist.
    #[error("pre_target of label `{label}` fails its sanity check at {state}: {reason}")]
    SanityCheck {
        /// Label name.
        label: String,
        /// Counterexample state.
        state: String,
        /// What went wrong.
        reason: String,
    },
    /// Predicate manipulation failed.
    #[error(transparent)]
    Pred(#[from] PredError),
}

impl From<SampleError> for PreError {
    fn from(e: SampleError) -> Self {
        match e {
            SampleError::Pred(p) => PreError::Pred(p),
            other => PreError::Pred(PredError::Eval(other.to_string())),
        }
    }
}

/// Number of sampled states checked per provided `pre_target`.
pub const PRE_SANITY_SAMPLES: usize = 200;

/// Expands the target of every label once. `seed` drives the sanity check
/// of provided increments.
pub fn pre_expand(g: &GameSpec, seed: u64) -> Result<GameSpec, PreError> {
    if !g.normalized {
        return Err(PreError::NotNormalized);
    }
    let mut out = g.clone();
    out.expanded = None;
    let mut exp = Vec::with_capacity(g.labels.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in 0..g.labels.len() {
        let original = g.targets[l].clone();
        let owner = g.owner(l);
        let entry = if let Some(p) = &g.pre_targets[l] {
            sanity_check(g, l, p, &mut rng)?;
            ExpandedTarget { pred: original.clone().or(p.clone()), increment: Some(p.clone()), mechanism: PreMechanism::Provided }
        } else if let Some(inc) = assignment_increment(g, l)? {
            ExpandedTarget { pred: original.clone().or(inc.clone()), increment: Some(inc), mechanism: PreMechanism::Assignment }
        } else if owner == Owner::Safe && !g.labels[l].sink {
            ExpandedTarget { pred: original, increment: None, mechanism: PreMechanism::Implicit }
        } else {
            ExpandedTarget { pred: original, increment: None, mechanism: PreMechanism::Plain }
        };
        exp.push(entry);
    }
    out.expanded = Some(exp);
    Ok(out)
}

fn substitute_target(g: &GameSpec, target: &Pred, assign: &BTreeMap<usize, Polynomial>) -> Pred {
    let subst: BTreeMap<Var, Polynomial> = assign.iter().map(|(&s, p)| (cur(s), p.clone())).collect();
    let _ = g;
    target.map_polys(&|p| p.substitute(&subst))
}

fn assignment_increment(g: &GameSpec, l: LabelId) -> Result<Option<Pred>, PreError> {
    let owner = g.owner(l);
    let mut parts = Vec::new();
    for t in g.outgoing(l) {
        let tr = &g.transitions[t];
        let Some(disjuncts) = g.assignment_form(&tr.update) else {
            return Ok(None);
        };
        let target = &g.targets[tr.target];
        let per: Vec<Pred> = disjuncts
            .iter()
            .map(|(assign, side)| {
                let in_target = substitute_target(g, target, assign);
                match owner {
                    Owner::Reach => {
                        let dom = substitute_target(g, &g.domain, assign);
                        let mut conj: Vec<Pred> = side.iter().cloned().map(Pred::Atom).collect();
                        conj.push(dom);
                        conj.push(in_target);
                        Pred::And(conj).simplify()
                    }
                    Owner::Safe => in_target.simplify(),
                }
            })
            .collect();
        let moves = match owner {
            Owner::Reach => Pred::Or(per).simplify(),
            Owner::Safe => Pred::And(per).simplify(),
        };
        parts.push(Pred::And(vec![tr.guard.clone(), moves]).simplify());
    }
    Ok(Some(Pred::Or(parts).simplify()))
}

fn sanity_check(g: &GameSpec, l: LabelId, inc: &Pred, rng: &mut ChaCha8Rng) -> Result<(), PreError> {
    let sampler = Sampler::new(g, SamplerConfig::default());
    let region = Pred::And(vec![inc.clone(), g.targets[l].negate()]);
    let fail = |x: &[crate::poly::Q], reason: &str| PreError::SanityCheck {
        label: g.labels[l].name.clone(),
        state: g.show_state(&State { label: l, valuation: x.to_vec() }),
        reason: reason.to_string(),
    };
    for _ in 0..PRE_SANITY_SAMPLES {
        let x = match sampler.sample_in(&region, rng) {
            Ok(x) => x,
            Err(SampleError::Empty) | Err(SampleError::Exhausted { .. }) => return Ok(()),
            Err(e) => return Err(e.into()),
        };
        let s = State { label: l, valuation: x.clone() };
        let t = match g.enabled(&s) {
            Ok(t) => t,
            Err(_) => return Err(fail(&x, "no transition is enabled")),
        };
        let dst = g.transitions[t].target;
        let in_o = |y: &Vec<crate::poly::Q>| g.targets[dst].eval(&g.point(y));
        let succ = match sampler.enumerate(t, &x)? {
            Some(all) => all,
            None => sampler.candidates(t, &x, 64, rng)?,
        };
        match g.owner(l) {
            Owner::Reach => {
                let mut found = false;
                for y in &succ {
                    if in_o(y)? {
                        found = true;
                        break;
                    }
                }
                if !found {
                    return Err(fail(&x, "no one-step move into the target was found"));
                }
            }
            Owner::Safe => {
                for y in &succ {
                    if !in_o(y)? {
                        return Err(fail(&x, &format!("successor {} escapes the target", g.show_state(&State { label: dst, valuation: y.clone() }))));
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{normalize_game, parse_game};
    use crate::poly::q;

    const COUNTDOWN: &str = r#"
game "countdown"
vars x
domain: -5 <= x <= 5
label A reach
init A: x = 3
trans A -> A when true update x' = x - 1
target A: x < 0
"#;

    #[test]
    fn assignment_form_expansion() {
        let g = pre_expand(&normalize_game(&parse_game(COUNTDOWN).unwrap()).unwrap(), 0).unwrap();
        let e = &g.expanded.as_ref().unwrap()[0];
        assert_eq!(e.mechanism, PreMechanism::Assignment);
        let names = g.namer();
        assert_eq!(e.increment.as_ref().unwrap().render(&names), "(4 + x >= 0 & 6 - x >= 0 & 1 - x > 0)");
        let st = |v: i64| State { label: 0, valuation: vec![q(v)] };
        assert!(g.in_effective_target(&st(0)).unwrap());
        assert!(!g.in_effective_target(&st(1)).unwrap());
    }

    const TWO_SUCC: &str = r#"
game "two"
vars x
domain: 0 <= x <= 2
label S safe
label R reach
init S: x = 0
trans S -> R when true update x' = 1 | x' = 2
trans R -> R when true update x' = x
target R: x > 3/2
"#;

    #[test]
    fn safe_with_escaping_successor_is_not_expanded() {
        let g = pre_expand(&normalize_game(&parse_game(TWO_SUCC).unwrap()).unwrap(), 0).unwrap();
        let e = &g.expanded.as_ref().unwrap()[0];
        assert_eq!(e.mechanism, PreMechanism::Assignment);
        assert_eq!(e.increment, Some(Pred::False));
        assert!(!g.in_effective_target(&State { label: 0, valuation: vec![q(0)] }).unwrap());
    }

    #[test]
    fn provided_increment_is_checked() {
        let good = COUNTDOWN.replace("target A: x < 0", "target A: x < 0\npre_target A: x < 1");
        let g = normalize_game(&parse_game(&good).unwrap()).unwrap();
        assert!(pre_expand(&g, 0).is_ok());
        let bad = COUNTDOWN.replace("target A: x < 0", "target A: x < 0\npre_target A: x < 2");
        let g = normalize_game(&parse_game(&bad).unwrap()).unwrap();
        let err = pre_expand(&g, 0).unwrap_err();
        assert!(matches!(err, PreError::SanityCheck { .. }), "{err}");
    }

    #[test]
    fn relational_safe_label_is_implicit() {
        let text = TWO_SUCC.replace("update x' = 1 | x' = 2", "update x' >= 1");
        let g = pre_expand(&normalize_game(&parse_game(&text).unwrap()).unwrap(), 0).unwrap();
        assert_eq!(g.expanded.as_ref().unwrap()[0].mechanism, PreMechanism::Implicit);
    }
}
