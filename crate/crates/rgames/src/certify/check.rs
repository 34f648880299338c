//! Sampling check of the ranking-certificate conditions.

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Certificate, Strategy};
use crate::game::{cur, GameSpec, LabelId, Owner, Pred, PreMechanism, SampleError, Sampler, SamplerConfig, State};
use crate::par;
use crate::poly::{q_to_string, Polynomial, Q};

/// Certificate condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// Non-negative at the initial state.
    C1,
    /// Decrease for every SAFE successor.
    C2,
    /// Decrease for the strategy's REACH successor.
    C3,
}

/// One violated condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    /// Condition.
    pub condition: Condition,
    /// Witness state.
    pub state: String,
    /// What failed.
    pub detail: String,
}

/// Check summary.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    /// Violations with witnesses.
    pub violations: Vec<Violation>,
    /// States or labels where sampling gave up, distinct from violations.
    pub exhausted: Vec<String>,
    /// States at which a condition was evaluated.
    pub checked_states: usize,
    /// Successors examined.
    pub checked_successors: usize,
}

impl Report {
    /// True when no violation was found.
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn merge(&mut self, other: Report) {
        self.violations.extend(other.violations);
        self.exhausted.extend(other.exhausted);
        self.checked_states += other.checked_states;
        self.checked_successors += other.checked_successors;
    }
}

/// Checker settings.
#[derive(Clone, Debug)]
pub struct CheckConfig {
    /// Sampled states, spread over the labels.
    pub samples: usize,
    /// Seed.
    pub seed: u64,
    /// Tolerance added to every inequality; zero for exact models.
    pub slack: Q,
    /// Sampled successors per SAFE state when they cannot be enumerated.
    pub successors: usize,
    /// Sampled parameter valuations for the initial-state condition.
    pub param_samples: usize,
    /// Sampler settings.
    pub sampler: SamplerConfig,
    /// Stop after this many violations.
    pub max_violations: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            slack: Q::zero(),
            successors: 32,
            param_samples: 64,
            sampler: SamplerConfig::default(),
            max_violations: 100,
        }
    }
}

impl CheckConfig {
    /// Slack of 10^-9 for approximate certificates, zero otherwise.
    pub fn slack_for(approximate: bool) -> Q {
        if approximate {
            Q::new(1.into(), 1_000_000_000.into())
        } else {
            Q::zero()
        }
    }
}

fn ge(a: &Q, b: &Q, slack: &Q) -> bool {
    a + slack >= *b
}

struct Ctx<'a> {
    g: &'a GameSpec,
    sampler: Sampler<'a>,
    cert: &'a Certificate,
    strat: &'a Strategy,
    cfg: &'a CheckConfig,
}

impl Ctx<'_> {
    fn implicit(&self, l: LabelId) -> bool {
        !self.g.labels[l].sink && self.g.expanded.as_ref().is_some_and(|e| e[l].mechanism == PreMechanism::Implicit)
    }

    fn decrease(&self, s: &State, fx: &Q, dst: LabelId, y: &[Q], cond: Condition, rep: &mut Report) {
        let g = self.g;
        let next = State { label: dst, valuation: y.to_vec() };
        let fy = self.cert.value(g, &next);
        rep.checked_successors += 1;
        let slack = &self.cfg.slack;
        if !ge(&fy, &Q::zero(), slack) {
            rep.violations.push(Violation {
                condition: cond,
                state: g.show_state(s),
                detail: format!("successor {} has f = {} < 0", g.show_state(&next), q_to_string(&fy)),
            });
        } else if !ge(&(fx - Q::one()), &fy, slack) {
            rep.violations.push(Violation {
                condition: cond,
                state: g.show_state(s),
                detail: format!("f = {} but successor {} has f = {}", q_to_string(fx), g.show_state(&next), q_to_string(&fy)),
            });
        }
    }

    fn check_state<R: Rng>(&self, s: &State, exhaustive: bool, rng: &mut R) -> Report {
        let g = self.g;
        let mut rep = Report::default();
        let fx = self.cert.value(g, s);
        if !ge(&fx, &Q::zero(), &self.cfg.slack) {
            return rep;
        }
        match g.in_effective_target(s) {
            Ok(true) => return rep,
            Ok(false) => {}
            Err(e) => {
                rep.exhausted.push(format!("{}: {e}", g.show_state(s)));
                return rep;
            }
        }
        rep.checked_states += 1;
        let owner = g.owner(s.label);
        let cond = if owner == Owner::Safe { Condition::C2 } else { Condition::C3 };
        let t = match g.enabled(s) {
            Ok(t) => t,
            Err(e) => {
                rep.violations.push(Violation { condition: cond, state: g.show_state(s), detail: e.to_string() });
                return rep;
            }
        };
        let dst = g.transitions[t].target;
        let x = &s.valuation;
        match owner {
            Owner::Safe => {
                let succ = match self.sampler.enumerate(t, x) {
                    Ok(Some(all)) => all,
                    Ok(None) if exhaustive => {
                        rep.exhausted.push(format!("{}: successors are not enumerable", g.show_state(s)));
                        return rep;
                    }
                    Ok(None) => match self.sampler.candidates(t, x, self.cfg.successors, rng) {
                        Ok(c) => c,
                        Err(SampleError::Empty) => Vec::new(),
                        Err(e) => {
                            rep.exhausted.push(format!("{}: {e}", g.show_state(s)));
                            return rep;
                        }
                    },
                    Err(e) => {
                        rep.exhausted.push(format!("{}: {e}", g.show_state(s)));
                        return rep;
                    }
                };
                if self.implicit(s.label) {
                    let escapes = succ.iter().any(|y| !g.targets[dst].eval(&g.point(y)).unwrap_or(false));
                    if !escapes {
                        rep.checked_states -= 1;
                        return rep;
                    }
                }
                for y in &succ {
                    self.decrease(s, &fx, dst, y, cond, &mut rep);
                }
            }
            Owner::Reach => {
                let Some(y) = self.strat.move_at(g, s) else {
                    rep.violations.push(Violation { condition: cond, state: g.show_state(s), detail: "strategy undefined".into() });
                    return rep;
                };
                match g.is_move(t, x, &y) {
                    Ok(true) => self.decrease(s, &fx, dst, &y, cond, &mut rep),
                    Ok(false) => rep.violations.push(Violation {
                        condition: cond,
                        state: g.show_state(s),
                        detail: format!("strategy move {} violates the update or the domain", g.show_state(&State { label: dst, valuation: y })),
                    }),
                    Err(e) => rep.exhausted.push(format!("{}: {e}", g.show_state(s))),
                }
            }
        }
        rep
    }
}

/// Initial states: the unique one, or `n` sampled parameter valuations
/// when parameters are symbolic. Sampling failures are returned as text.
pub fn initial_states(g: &GameSpec, n: usize, seed: u64) -> (Vec<State>, Vec<String>) {
    let sampler = Sampler::new(g, SamplerConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report::default();
    let states = sample_initial(g, &sampler, n, &mut rng, &mut rep);
    (states, rep.exhausted)
}

fn sample_initial<R: Rng>(g: &GameSpec, sampler: &Sampler, n: usize, rng: &mut R, rep: &mut Report) -> Vec<State> {
    let params = g.param_slots();
    if params.is_empty() {
        return vec![g.initial_state(&Default::default())];
    }
    let fix: Vec<Pred> = g
        .init
        .iter()
        .filter(|(s, _)| !params.contains(s))
        .map(|(&s, v)| Pred::Atom(crate::game::Atom::eq(Polynomial::var(cur(s)).add_constant(&-v.clone()))))
        .collect();
    let region = Pred::And(fix);
    let mut out = Vec::new();
    for _ in 0..n {
        match sampler.sample_in(&region, rng) {
            Ok(x) => out.push(State { label: g.init_label, valuation: x }),
            Err(e) => {
                rep.exhausted.push(format!("initial parameter valuation: {e}"));
                break;
            }
        }
    }
    out
}

/// Checks the three conditions on sampled states of every label. SAFE
/// successors are enumerated when finite and sampled otherwise; REACH moves
/// come from the strategy.
pub fn check_certificate(g: &GameSpec, cert: &Certificate, strat: &Strategy, cfg: &CheckConfig) -> Report {
    let ctx = Ctx { g, sampler: Sampler::new(g, cfg.sampler.clone()), cert, strat, cfg };
    let mut rep = Report::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for s in sample_initial(g, &ctx.sampler, cfg.param_samples, &mut rng, &mut rep) {
        let f0 = cert.value(g, &s);
        if !ge(&f0, &Q::zero(), &cfg.slack) {
            rep.violations.push(Violation { condition: Condition::C1, state: g.show_state(&s), detail: format!("f = {} < 0", q_to_string(&f0)) });
        }
    }
    let labels = g.labels.len();
    let regions: Vec<Pred> = (0..labels).map(|l| g.effective_target(l).negate()).collect();
    let seed = cfg.seed;
    let results: Vec<Report> = par::map_range(cfg.samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
        let l = i % labels;
        match ctx.sampler.sample_in(&regions[l], &mut rng) {
            Ok(x) => ctx.check_state(&State { label: l, valuation: x }, false, &mut rng),
            Err(SampleError::Empty) => Report::default(),
            Err(e) => Report { exhausted: vec![format!("label {}: {e}", g.labels[l].name)], ..Report::default() },
        }
    });
    for r in results {
        rep.merge(r);
    }
    rep.exhausted.sort();
    rep.exhausted.dedup();
    rep.violations.truncate(cfg.max_violations);
    rep
}

/// Checks the conditions at the given states with full successor
/// enumeration; non-enumerable states are reported as exhausted.
pub fn check_states(g: &GameSpec, cert: &Certificate, strat: &Strategy, states: &[State], cfg: &CheckConfig) -> Report {
    let ctx = Ctx { g, sampler: Sampler::new(g, cfg.sampler.clone()), cert, strat, cfg };
    let mut rep = Report::default();
    let init = g.initial_state(&Default::default());
    let f0 = cert.value(g, &init);
    if !ge(&f0, &Q::zero(), &cfg.slack) {
        rep.violations.push(Violation { condition: Condition::C1, state: g.show_state(&init), detail: format!("f = {} < 0", q_to_string(&f0)) });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for s in states {
        rep.merge(ctx.check_state(s, true, &mut rng));
    }
    rep
}
