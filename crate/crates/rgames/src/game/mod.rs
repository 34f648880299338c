//! Game model: labels, variables, guarded relational transitions and
//! per-label targets, together with parsing, normalization, the one-step
//! target expansion and successor sampling.

pub mod generate;
mod normalize;
mod parse;
mod pre;
pub mod pred;
mod sample;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{Polynomial, Q, Var};
pub use normalize::{linear_infeasible, normalize_game, NormalizeError};
pub use parse::{parse_game, parse_game_with, render_game, ParamSetting, ParseError};
pub use pre::{pre_expand, ExpandedTarget, PreError, PreMechanism};
pub use pred::{Atom, Pred, PredError, Rel, DEFAULT_DNF_CAP};
pub use sample::{box_of, Sampler, SampleError, SamplerConfig};

/// Index of a label in [`GameSpec::labels`].
pub type LabelId = usize;

/// Index of a variable slot in [`GameSpec::var_names`].
pub type Slot = usize;

/// Current-state copy of a slot.
pub fn cur(slot: Slot) -> Var {
    (slot * 3) as Var
}

/// Primed (post-state) copy of a slot.
pub fn primed(slot: Slot) -> Var {
    (slot * 3 + 1) as Var
}

/// Witness copy of a slot, used by the implicit one-step target encoding.
pub fn witness(slot: Slot) -> Var {
    (slot * 3 + 2) as Var
}

/// Slot of a polynomial variable.
pub fn slot_of(v: Var) -> Slot {
    (v / 3) as Slot
}

/// Copy kind of a polynomial variable: 0 current, 1 primed, 2 witness.
pub fn kind_of(v: Var) -> u32 {
    v % 3
}

/// Player owning a label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Owner {
    /// The player trying to reach the target.
    Reach,
    /// The player trying to avoid the target.
    Safe,
}

impl Owner {
    /// The other player.
    pub fn opponent(self) -> Owner {
        match self {
            Owner::Reach => Owner::Safe,
            Owner::Safe => Owner::Reach,
        }
    }
}

/// Declared label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDecl {
    /// Label name.
    pub name: String,
    /// Owning player.
    pub owner: Owner,
    /// True for the auxiliary deadlock sinks added by normalization.
    pub sink: bool,
}

/// Guarded relational transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Source label.
    pub source: LabelId,
    /// Target label.
    pub target: LabelId,
    /// Guard over current variables.
    pub guard: Pred,
    /// Update relation over current and primed variables.
    pub update: Pred,
    /// True for transitions added to complete guard coverage.
    pub sink: bool,
}

/// Symbolic parameter declaration.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDecl {
    /// Parameter name.
    pub name: String,
    /// Rational pin from the game file, if any.
    pub pin: Option<Q>,
    /// Constraint from the game file, if any.
    pub constraint: Option<Pred>,
    /// Variable slot when the parameter is symbolic; `None` when pinned.
    pub slot: Option<Slot>,
    /// Value actually substituted when pinned.
    pub value: Option<Q>,
}

/// A reachability game.
#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    /// Game name.
    pub name: String,
    /// Names of all variable slots: declared variables then symbolic
    /// parameters.
    pub var_names: Vec<String>,
    /// Slots that are state variables. Symbolic parameters join this list
    /// during normalization.
    pub state_vars: Vec<Slot>,
    /// Parameter declarations in file order.
    pub params: Vec<ParamDecl>,
    /// Allowed valuations.
    pub domain: Pred,
    /// Initial label.
    pub init_label: LabelId,
    /// Initial values of the declared variables.
    pub init: BTreeMap<Slot, Q>,
    /// Labels.
    pub labels: Vec<LabelDecl>,
    /// Transitions.
    pub transitions: Vec<Transition>,
    /// Target predicate per label (`False` when the label has none).
    pub targets: Vec<Pred>,
    /// Optional user-provided one-step target increments per label.
    pub pre_targets: Vec<Option<Pred>>,
    /// Target expansion computed by [`pre_expand`], if applied.
    pub expanded: Option<Vec<ExpandedTarget>>,
    /// True after [`normalize_game`].
    pub normalized: bool,
}

/// A game state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    /// Current label.
    pub label: LabelId,
    /// Value per slot; entries of non-state slots are unused.
    pub valuation: Vec<Q>,
}

/// Errors surfaced by game-level queries.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    /// No outgoing guard holds at the state.
    #[error("no transition enabled at label `{label}`")]
    NoTransition {
        /// Label name.
        label: String,
    },
    /// Predicate evaluation failed.
    #[error(transparent)]
    Pred(#[from] PredError),
}

impl GameSpec {
    /// Label id by name.
    pub fn label_id(&self, name: &str) -> Option<LabelId> {
        self.labels.iter().position(|l| l.name == name)
    }

    /// Slot by variable name.
    pub fn slot_id(&self, name: &str) -> Option<Slot> {
        self.var_names.iter().position(|n| n == name)
    }

    /// Display name of a polynomial variable (`x`, `x'` or `x''`).
    pub fn var_name(&self, v: Var) -> String {
        let base = self.var_names.get(slot_of(v)).cloned().unwrap_or_else(|| format!("v{}", slot_of(v)));
        match kind_of(v) {
            0 => base,
            1 => format!("{base}'"),
            _ => format!("{base}''"),
        }
    }

    /// Name renderer for polynomials over this game's variables.
    pub fn namer(&self) -> impl Fn(Var) -> String + '_ {
        move |v| self.var_name(v)
    }

    /// Current-state variables of all state slots, in slot order.
    pub fn cur_vars(&self) -> Vec<Var> {
        self.state_vars.iter().map(|&s| cur(s)).collect()
    }

    /// Slots of symbolic parameters.
    pub fn param_slots(&self) -> Vec<Slot> {
        self.params.iter().filter_map(|p| p.slot).collect()
    }

    /// Owner of a label.
    pub fn owner(&self, l: LabelId) -> Owner {
        self.labels[l].owner
    }

    /// Outgoing transitions of a label, as indices.
    pub fn outgoing(&self, l: LabelId) -> Vec<usize> {
        (0..self.transitions.len()).filter(|&i| self.transitions[i].source == l).collect()
    }

    /// Target predicate used for solving: the expanded target when
    /// [`pre_expand`] was applied, the original target otherwise.
    pub fn effective_target(&self, l: LabelId) -> &Pred {
        match &self.expanded {
            Some(exp) => &exp[l].pred,
            None => &self.targets[l],
        }
    }

    /// Lookup function for the current-state variables of a valuation.
    pub fn point<'a>(&self, valuation: &'a [Q]) -> impl Fn(Var) -> Option<Q> + 'a {
        move |v| if kind_of(v) == 0 { valuation.get(slot_of(v)).cloned() } else { None }
    }

    /// Lookup for a pair of valuations: current variables from `x`,
    /// primed variables from `y`.
    pub fn point2<'a>(&self, x: &'a [Q], y: &'a [Q]) -> impl Fn(Var) -> Option<Q> + 'a {
        move |v| match kind_of(v) {
            0 => x.get(slot_of(v)).cloned(),
            1 => y.get(slot_of(v)).cloned(),
            _ => None,
        }
    }

    /// Exact membership of a valuation in the domain.
    pub fn in_domain(&self, valuation: &[Q]) -> Result<bool, PredError> {
        self.domain.eval(&self.point(valuation))
    }

    /// Exact membership of a state in the original target.
    pub fn in_target(&self, s: &State) -> Result<bool, PredError> {
        self.targets[s.label].eval(&self.point(&s.valuation))
    }

    /// Exact membership of a state in the effective (possibly expanded)
    /// target. States whose expansion is encoded implicitly count as
    /// outside unless they lie in the original target.
    pub fn in_effective_target(&self, s: &State) -> Result<bool, PredError> {
        self.effective_target(s.label).eval(&self.point(&s.valuation))
    }

    /// Index of the unique transition enabled at a state.
    pub fn enabled(&self, s: &State) -> Result<usize, GameError> {
        for i in self.outgoing(s.label) {
            if self.transitions[i].guard.eval(&self.point(&s.valuation))? {
                return Ok(i);
            }
        }
        Err(GameError::NoTransition { label: self.labels[s.label].name.clone() })
    }

    /// Exact check that `(x, y)` satisfies the update of transition `t` and
    /// that `y` lies in the domain.
    pub fn is_move(&self, t: usize, x: &[Q], y: &[Q]) -> Result<bool, PredError> {
        Ok(self.transitions[t].update.eval(&self.point2(x, y))? && self.in_domain(y)?)
    }

    /// The initial state. Symbolic parameter slots take the values in
    /// `params` (zero when absent).
    pub fn initial_state(&self, params: &BTreeMap<Slot, Q>) -> State {
        let mut valuation = vec![Q::from_integer(0.into()); self.var_names.len()];
        for (&s, v) in &self.init {
            valuation[s] = v.clone();
        }
        for (&s, v) in params {
            valuation[s] = v.clone();
        }
        State { label: self.init_label, valuation }
    }

    /// Renders a state for diagnostics.
    pub fn show_state(&self, s: &State) -> String {
        let vals: Vec<String> = self
            .state_vars
            .iter()
            .map(|&slot| format!("{}={}", self.var_names[slot], crate::poly::q_to_string(&s.valuation[slot])))
            .collect();
        format!("({}, {})", self.labels[s.label].name, vals.join(", "))
    }

    /// Substitutes primed variables by witness variables.
    pub fn prime_to_witness(&self, p: &Polynomial) -> Polynomial {
        p.map_vars(&|v| if kind_of(v) == 1 { witness(slot_of(v)) } else { v })
    }

    /// Substitutes current variables by primed variables.
    pub fn cur_to_primed(&self, p: &Polynomial) -> Polynomial {
        p.map_vars(&|v| if kind_of(v) == 0 { primed(slot_of(v)) } else { v })
    }

    /// Substitutes current variables by witness variables.
    pub fn cur_to_witness(&self, p: &Polynomial) -> Polynomial {
        p.map_vars(&|v| if kind_of(v) == 0 { witness(slot_of(v)) } else { v })
    }

    /// Assignment form of an update: when every disjunct of the update
    /// assigns every state variable a polynomial in current variables, the
    /// list of per-disjunct assignments. Disjuncts may carry additional
    /// constraints over current variables, returned alongside.
    pub fn assignment_form(&self, update: &Pred) -> Option<Vec<(BTreeMap<Slot, Polynomial>, Vec<Atom>)>> {
        let cubes = update.dnf(DEFAULT_DNF_CAP).ok()?;
        let mut out = Vec::new();
        for cube in cubes {
            let mut assign: BTreeMap<Slot, Polynomial> = BTreeMap::new();
            let mut side = Vec::new();
            for atom in &cube {
                let primed_vars: Vec<Var> = atom.lhs.vars().into_iter().filter(|&v| kind_of(v) == 1).collect();
                if primed_vars.is_empty() {
                    side.push(atom.clone());
                    continue;
                }
                if atom.rel != Rel::Eq || primed_vars.len() != 1 {
                    return None;
                }
                let pv = primed_vars[0];
                let m = crate::poly::Monomial::var(pv);
                let c = atom.lhs.coeff(&m);
                let rest = atom.lhs.sub(&Polynomial::term(m, c.clone()));
                if num_traits::Zero::is_zero(&c) || rest.vars().contains(&pv) {
                    return None;
                }
                let value = rest.scale(&(-(Q::from_integer(1.into()) / c)));
                if assign.insert(slot_of(pv), value).is_some() {
                    return None;
                }
            }
            if !self.state_vars.iter().all(|s| assign.contains_key(s)) {
                return None;
            }
            out.push((assign, side));
        }
        Some(out)
    }
}
