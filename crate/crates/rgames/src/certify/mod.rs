//! Certificates and strategies: extraction from solver models, sampling
//! checks of the ranking conditions, play simulation and an exact attractor
//! oracle for finite games.

mod check;
mod json;
mod oracle;
mod play;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use num_bigint::BigInt;
use num_traits::Zero;
use thiserror::Error;

use crate::constraints::TemplateSet;
use crate::game::{GameSpec, LabelId, Owner, Slot, State};
use crate::poly::{cf_round, Polynomial, Q, Var};
use crate::smt::Backend;

pub use check::{check_certificate, check_states, initial_states, CheckConfig, Condition, Report, Violation};
pub use json::{certificate_from_json, certificate_to_json, CertificateFile, JsonError};
pub use oracle::{finite_oracle, OracleError, OracleResult, Winner, DEFAULT_STATE_CAP};
pub use play::{simulate_play, step_bound, validate_plays, BoundSummary, Outcome, Play, PlayConfig, SafePolicy};

/// Ranking function value at a state.
pub type RankFn = Arc<dyn Fn(&State) -> Q + Send + Sync>;

/// REACH move at a state: successor valuation, or `None` when undefined.
pub type MoveFn = Arc<dyn Fn(&State) -> Option<Vec<Q>> + Send + Sync>;

/// Ranking certificate.
#[derive(Clone)]
pub enum Certificate {
    /// One polynomial per label over current variables.
    Poly(Vec<Polynomial>),
    /// Evaluable function, for fixtures that are not polynomial.
    BlackBox(RankFn),
}

impl fmt::Debug for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Certificate::Poly(p) => f.debug_tuple("Poly").field(p).finish(),
            Certificate::BlackBox(_) => f.write_str("BlackBox"),
        }
    }
}

impl Certificate {
    /// Value at a state. Missing polynomials evaluate to zero.
    pub fn value(&self, g: &GameSpec, s: &State) -> Q {
        match self {
            Certificate::Poly(ps) => match ps.get(s.label) {
                Some(p) => p.eval(&g.point(&s.valuation), &|v| g.var_name(v)).unwrap_or_else(|_| Q::zero()),
                None => Q::zero(),
            },
            Certificate::BlackBox(f) => f(s),
        }
    }

    /// The polynomials, when available.
    pub fn polys(&self) -> Option<&[Polynomial]> {
        match self {
            Certificate::Poly(p) => Some(p),
            Certificate::BlackBox(_) => None,
        }
    }
}

/// REACH strategy moves.
#[derive(Clone)]
pub enum Moves {
    /// Per REACH label, a polynomial for every state slot.
    Poly(BTreeMap<LabelId, BTreeMap<Slot, Polynomial>>),
    /// Evaluable function.
    BlackBox(MoveFn),
}

impl fmt::Debug for Moves {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Moves::Poly(p) => f.debug_tuple("Poly").field(p).finish(),
            Moves::BlackBox(_) => f.write_str("BlackBox"),
        }
    }
}

/// Memoryless REACH strategy.
#[derive(Clone, Debug)]
pub struct Strategy {
    /// Moves.
    pub moves: Moves,
    /// Resolve the move by one-step search at states of the expanded target.
    pub pre_move_resolution: bool,
    /// Time limit of one solver query during one-step search.
    pub search_budget: Duration,
    /// Solvers for one-step search.
    pub backends: Vec<Backend>,
}

impl Strategy {
    /// Strategy from explicit moves with resolution off.
    pub fn new(moves: Moves) -> Self {
        Self { moves, pre_move_resolution: false, search_budget: Duration::from_secs(5), backends: Vec::new() }
    }

    /// Successor proposed at a state. Slots without a polynomial keep their
    /// value.
    pub fn move_at(&self, g: &GameSpec, s: &State) -> Option<Vec<Q>> {
        match &self.moves {
            Moves::Poly(per) => {
                let m = per.get(&s.label)?;
                let mut y = s.valuation.clone();
                for (&slot, p) in m {
                    y[slot] = p.eval(&g.point(&s.valuation), &|v| g.var_name(v)).ok()?;
                }
                Some(y)
            }
            Moves::BlackBox(f) => f(s),
        }
    }
}

/// Certificate and strategy extracted from a model.
#[derive(Clone, Debug)]
pub struct Solution {
    /// Ranking certificate.
    pub certificate: Certificate,
    /// REACH strategy.
    pub strategy: Strategy,
    /// Model values were approximations.
    pub approximate: bool,
}

/// Instantiates every template with `model`; absent unknowns are zero and
/// `forced` strategy components replace their templates.
pub fn extract_solution(
    g: &GameSpec,
    model: &BTreeMap<Var, Q>,
    ts: &TemplateSet,
    forced: &BTreeMap<LabelId, BTreeMap<Slot, Polynomial>>,
    approximate: bool,
) -> Solution {
    let lookup = |v: Var| Some(model.get(&v).cloned().unwrap_or_else(Q::zero));
    let f = ts.f.iter().map(|t| t.instantiate(&lookup)).collect();
    let mut moves = BTreeMap::new();
    for (l, per) in &ts.sigma {
        let mut m: BTreeMap<Slot, Polynomial> = per.iter().map(|(&s, t)| (s, t.instantiate(&lookup))).collect();
        if let Some(fx) = forced.get(l) {
            for (&s, p) in fx {
                m.insert(s, p.clone());
            }
        }
        moves.insert(*l, m);
    }
    for l in 0..g.labels.len() {
        if g.owner(l) == Owner::Reach {
            moves.entry(l).or_default();
        }
    }
    Solution { certificate: Certificate::Poly(f), strategy: Strategy::new(Moves::Poly(moves)), approximate }
}

/// Continued-fraction rounding of every model value to denominators at most
/// `max_den`.
pub fn round_model(model: &BTreeMap<Var, Q>, max_den: u64) -> BTreeMap<Var, Q> {
    let cap = BigInt::from(max_den);
    model.iter().map(|(&k, v)| (k, cf_round(v, &cap))).collect()
}

/// Failure of certificate processing.
#[derive(Debug, Error)]
pub enum CertifyError {
    /// Game-level failure.
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
    /// Predicate failure.
    #[error(transparent)]
    Pred(#[from] crate::game::PredError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::build_templates;
    use crate::game::{normalize_game, parse_game};
    use crate::poly::{q, qf};

    const CHAIN: &str = r#"
game "chain"
vars x
domain: 0 <= x <= 10
label R reach
init R: x = 2
trans R -> R when true update x' = x - 1 | x' = x
target R: x <= 0
"#;

    #[test]
    fn extraction_instantiates_and_defaults() {
        let g = normalize_game(&parse_game(CHAIN).unwrap()).unwrap();
        let ts = build_templates(&g, 1, None).unwrap();
        let s0 = ts.unknowns.lookup("s_R_0").unwrap();
        let model = BTreeMap::from([(s0, q(6))]);
        let sol = extract_solution(&g, &model, &ts, &BTreeMap::new(), false);
        let st = State { label: 0, valuation: vec![q(5)] };
        assert_eq!(sol.certificate.value(&g, &st), q(6));
        assert_eq!(sol.strategy.move_at(&g, &st), Some(vec![q(0)]));
        let empty = extract_solution(&g, &BTreeMap::new(), &ts, &BTreeMap::new(), false);
        assert_eq!(empty.certificate.value(&g, &st), q(0));
        let third = BTreeMap::from([(s0, qf(1, 3))]);
        let sol = extract_solution(&g, &third, &ts, &BTreeMap::new(), false);
        assert_eq!(sol.certificate.value(&g, &st), qf(1, 3));
    }

    #[test]
    fn forced_components_override_templates() {
        let g = normalize_game(&parse_game(CHAIN).unwrap()).unwrap();
        let ts = build_templates(&g, 1, None).unwrap();
        let forced = BTreeMap::from([(0, BTreeMap::from([(0, Polynomial::var(crate::game::cur(0)).add_constant(&q(-1)))]))]);
        let sol = extract_solution(&g, &BTreeMap::new(), &ts, &forced, false);
        assert_eq!(sol.strategy.move_at(&g, &State { label: 0, valuation: vec![q(5)] }), Some(vec![q(4)]));
    }

    #[test]
    fn rounding_recovers_simple_fractions() {
        let m = BTreeMap::from([(0, Q::new(333_333_333.into(), 1_000_000_000.into()))]);
        assert_eq!(round_model(&m, 1000)[&0], qf(1, 3));
    }
}
