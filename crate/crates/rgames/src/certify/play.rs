//! Play simulation against SAFE policies.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Certificate, Strategy};
use crate::game::{primed, slot_of, GameSpec, Owner, SampleError, Sampler, SamplerConfig, State};
use crate::poly::{cf_round, q_to_string, Q, Var};
use crate::smt::{run_backend, smt_pred, smt_symbol, ParseOptions, SolverStatus};

/// SAFE move chooser: successor valuation, or `None` to give up.
pub type ScriptFn = Arc<dyn Fn(&GameSpec, &State) -> Option<Vec<Q>> + Send + Sync>;

/// How the SAFE player moves.
#[derive(Clone)]
pub enum SafePolicy {
    /// Uniform among enumerated successors, or one sampled successor.
    Random,
    /// Among up to `n` candidate successors, the one maximizing the
    /// certificate at the successor.
    Greedy {
        /// Candidates per move.
        n: usize,
    },
    /// Fixed policy.
    Scripted(ScriptFn),
}

impl std::fmt::Debug for SafePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SafePolicy::Random => f.write_str("Random"),
            SafePolicy::Greedy { n } => write!(f, "Greedy({n})"),
            SafePolicy::Scripted(_) => f.write_str("Scripted"),
        }
    }
}

/// Simulation settings.
#[derive(Clone, Debug)]
pub struct PlayConfig {
    /// Transition budget.
    pub max_steps: usize,
    /// Seed.
    pub seed: u64,
    /// Candidate successors drawn by the one-step search before asking a
    /// solver.
    pub search_candidates: usize,
    /// Sampler settings.
    pub sampler: SamplerConfig,
}

impl Default for PlayConfig {
    fn default() -> Self {
        Self { max_steps: 1000, seed: 0, search_candidates: 64, sampler: SamplerConfig::default() }
    }
}

/// How a play ended.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub enum Outcome {
    /// The original target was entered after `step` transitions.
    ReachedTarget {
        /// Transitions taken.
        step: usize,
    },
    /// The step budget ran out.
    NotReached,
    /// A move could not be made.
    Stuck {
        /// Diagnostic.
        reason: String,
    },
}

/// Finite play prefix.
#[derive(Clone, Debug)]
pub struct Play {
    /// Visited states; consecutive states are successors.
    pub states: Vec<State>,
    /// Certificate value at every visited state.
    pub f_values: Vec<Q>,
    /// End of the play.
    pub outcome: Outcome,
    /// First step in the original target.
    pub target_step: Option<usize>,
    /// First step in the effective target.
    pub expanded_step: Option<usize>,
    /// Steps whose REACH move came from one-step search.
    pub resolved_steps: Vec<usize>,
    /// Seed.
    pub seed: u64,
}

impl Play {
    /// JSON transcript.
    pub fn transcript(&self, g: &GameSpec) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "outcome": self.outcome,
            "target_step": self.target_step,
            "expanded_step": self.expanded_step,
            "resolved_steps": self.resolved_steps,
            "states": self.states.iter().map(|s| g.show_state(s)).collect::<Vec<_>>(),
            "f": self.f_values.iter().map(q_to_string).collect::<Vec<_>>(),
        })
    }
}

fn safe_move<R: Rng>(g: &GameSpec, sampler: &Sampler, cert: &Certificate, policy: &SafePolicy, t: usize, s: &State, rng: &mut R) -> Result<Vec<Q>, String> {
    let x = &s.valuation;
    let dst = g.transitions[t].target;
    let pool = |n: usize, rng: &mut R| -> Result<Vec<Vec<Q>>, String> {
        match sampler.enumerate(t, x) {
            Ok(Some(all)) => Ok(all),
            Ok(None) => sampler.candidates(t, x, n, rng).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        }
    };
    match policy {
        SafePolicy::Random => match sampler.enumerate(t, x) {
            Ok(Some(all)) if all.is_empty() => Err("SAFE has no successor".into()),
            Ok(Some(all)) => Ok(all[rng.random_range(0..all.len())].clone()),
            Ok(None) => sampler.sample_successor(t, x, rng).map_err(|e| match e {
                SampleError::Empty => "SAFE has no successor".to_string(),
                other => other.to_string(),
            }),
            Err(e) => Err(e.to_string()),
        },
        SafePolicy::Greedy { n } => {
            let all = pool(*n, rng)?;
            let mut best: Option<(Q, Vec<Q>)> = None;
            for y in all {
                let v = cert.value(g, &State { label: dst, valuation: y.clone() });
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, y));
                }
            }
            best.map(|(_, y)| y).ok_or_else(|| "SAFE has no successor".into())
        }
        SafePolicy::Scripted(f) => {
            let y = f(g, s).ok_or_else(|| "scripted policy gave no move".to_string())?;
            match g.is_move(t, x, &y) {
                Ok(true) => Ok(y),
                Ok(false) => Err(format!("scripted move {} is not a successor", g.show_state(&State { label: dst, valuation: y }))),
                Err(e) => Err(e.to_string()),
            }
        }
    }
}

/// Ground query `∃x'. U(x, x') ∧ dom(x') ∧ O(x')` for the current state.
pub fn ground_query(g: &GameSpec, t: usize, x: &[Q]) -> String {
    let tr = &g.transitions[t];
    let fixed: BTreeMap<Var, Q> = g.state_vars.iter().map(|&s| (crate::game::cur(s), x[s].clone())).collect();
    let names = |v: Var| smt_symbol(&g.var_name(primed(slot_of(v))));
    let upd = tr.update.map_polys(&|p| p.partial_eval(&fixed));
    let dom = g.domain.map_polys(&|p| g.cur_to_primed(p));
    let tgt = g.targets[tr.target].map_polys(&|p| g.cur_to_primed(p));
    let mut out = String::from("(set-option :produce-models true)\n(set-logic QF_NRA)\n");
    for &s in &g.state_vars {
        out.push_str(&format!("(declare-const {} Real)\n", names(primed(s))));
    }
    for p in [upd, dom, tgt] {
        out.push_str(&format!("(assert {})\n", smt_pred(&p.simplify(), &names)));
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

fn one_step<R: Rng>(g: &GameSpec, sampler: &Sampler, strat: &Strategy, t: usize, x: &[Q], n: usize, rng: &mut R) -> Result<Vec<Q>, String> {
    let dst = g.transitions[t].target;
    let hits = |y: &Vec<Q>| g.targets[dst].eval(&g.point(y)).unwrap_or(false);
    let pool = match sampler.enumerate(t, x) {
        Ok(Some(all)) => all,
        _ => sampler.candidates(t, x, n, rng).unwrap_or_default(),
    };
    if let Some(y) = pool.into_iter().find(hits) {
        return Ok(y);
    }
    let doc = ground_query(g, t, x);
    for b in &strat.backends {
        let Ok(o) = run_backend(&doc, b, strat.search_budget, None, ParseOptions::default()) else { continue };
        if o.status != SolverStatus::Sat {
            continue;
        }
        let model = o.model.unwrap_or_default();
        let mut y = x.to_vec();
        for &s in &g.state_vars {
            let name = g.var_name(primed(s));
            if let Some(v) = model.get(&name) {
                y[s] = v.clone();
            }
        }
        let ok = |y: &Vec<Q>| g.is_move(t, x, y).unwrap_or(false) && hits(y);
        if ok(&y) {
            return Ok(y);
        }
        for digits in [3u32, 6, 9, 12, 18] {
            let cap = num_traits::pow(BigInt::from(10), digits as usize);
            let r: Vec<Q> = y.iter().map(|v| cf_round(v, &cap)).collect();
            if ok(&r) {
                return Ok(r);
            }
        }
    }
    Err("one-step search found no move into the target".into())
}

/// Simulates one play from the initial state (parameters taken from
/// `params` when symbolic).
pub fn simulate_play(
    g: &GameSpec,
    strat: &Strategy,
    cert: &Certificate,
    policy: &SafePolicy,
    params: &BTreeMap<usize, Q>,
    cfg: &PlayConfig,
) -> Play {
    let sampler = Sampler::new(g, cfg.sampler.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s = g.initial_state(params);
    let mut play = Play {
        states: vec![],
        f_values: vec![],
        outcome: Outcome::NotReached,
        target_step: None,
        expanded_step: None,
        resolved_steps: vec![],
        seed: cfg.seed,
    };
    let mut step = 0;
    loop {
        play.f_values.push(cert.value(g, &s));
        play.states.push(s.clone());
        if play.expanded_step.is_none() && g.in_effective_target(&s).unwrap_or(false) {
            play.expanded_step = Some(step);
        }
        if g.in_target(&s).unwrap_or(false) {
            play.target_step = Some(step);
            play.outcome = Outcome::ReachedTarget { step };
            return play;
        }
        if step >= cfg.max_steps {
            play.outcome = Outcome::NotReached;
            return play;
        }
        let t = match g.enabled(&s) {
            Ok(t) => t,
            Err(e) => {
                play.outcome = Outcome::Stuck { reason: e.to_string() };
                return play;
            }
        };
        let dst = g.transitions[t].target;
        let next = match g.owner(s.label) {
            Owner::Safe => safe_move(g, &sampler, cert, policy, t, &s, &mut rng),
            Owner::Reach => {
                let resolve = strat.pre_move_resolution
                    && g.expanded.as_ref().is_some_and(|e| e[s.label].needs_resolution(Owner::Reach))
                    && g.in_effective_target(&s).unwrap_or(false);
                if resolve {
                    play.resolved_steps.push(step);
                    one_step(g, &sampler, strat, t, &s.valuation, cfg.search_candidates, &mut rng)
                } else {
                    match strat.move_at(g, &s) {
                        None => Err("strategy undefined".to_string()),
                        Some(y) => match g.is_move(t, &s.valuation, &y) {
                            Ok(true) => Ok(y),
                            Ok(false) => Err(format!(
                                "strategy move {} violates the update or the domain",
                                g.show_state(&State { label: dst, valuation: y })
                            )),
                            Err(e) => Err(e.to_string()),
                        },
                    }
                }
            }
        };
        match next {
            Ok(y) => s = State { label: dst, valuation: y },
            Err(reason) => {
                play.outcome = Outcome::Stuck { reason: format!("at {}: {reason}", g.show_state(&s)) };
                return play;
            }
        }
        step += 1;
    }
}

/// Largest admissible target step for a play starting with certificate
/// value `f0`: `⌈f0⌉`, or `⌊f0⌋ + 1` when the target was expanded and the
/// last step is the one-step move out of the increment.
pub fn step_bound(f0: &Q, expanded: bool) -> usize {
    let b = if expanded { crate::poly::q_floor(f0) + 1 } else { crate::poly::q_ceil(f0) };
    usize::try_from(b.max(BigInt::from(0))).unwrap_or(usize::MAX)
}

/// Aggregate of many seeded plays.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct BoundSummary {
    /// Plays run.
    pub plays: usize,
    /// Plays that entered the original target.
    pub reached: usize,
    /// Plays that entered it within the step bound.
    pub within_bound: usize,
    /// Largest target step seen.
    pub max_step: usize,
    /// Largest bound seen.
    pub max_bound: usize,
    /// Descriptions of failing plays (capped).
    pub failures: Vec<String>,
}

impl BoundSummary {
    /// True when every play reached the target within its bound with a
    /// decreasing certificate.
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.within_bound == self.plays
    }
}

/// Runs `n` plays with seeds `seed, seed + 1, ...` and checks that each
/// enters the target within its step bound while the certificate stays
/// non-negative and drops by at least one per transition before the
/// effective target is entered.
pub fn validate_plays(g: &GameSpec, strat: &Strategy, cert: &Certificate, policy: &SafePolicy, n: usize, seed: u64, max_steps: usize) -> BoundSummary {
    let expanded = g.expanded.is_some();
    let (inits, _) = super::check::initial_states(g, n.min(64), seed);
    let plays = crate::par::map_range(n, |i| {
        let params: BTreeMap<usize, Q> = match inits.get(i % inits.len().max(1)) {
            Some(s) => g.param_slots().into_iter().map(|p| (p, s.valuation[p].clone())).collect(),
            None => BTreeMap::new(),
        };
        let cfg = PlayConfig { max_steps, seed: seed.wrapping_add(i as u64), ..PlayConfig::default() };
        simulate_play(g, strat, cert, policy, &params, &cfg)
    });
    let mut sum = BoundSummary { plays: n, ..BoundSummary::default() };
    for p in plays {
        let bound = step_bound(&p.f_values[0], expanded);
        sum.max_bound = sum.max_bound.max(bound);
        let mut problems = Vec::new();
        match &p.outcome {
            Outcome::ReachedTarget { step } => {
                sum.reached += 1;
                sum.max_step = sum.max_step.max(*step);
                if *step <= bound {
                    sum.within_bound += 1;
                } else {
                    problems.push(format!("target reached at step {step} > bound {bound}"));
                }
            }
            other => problems.push(format!("{other:?}")),
        }
        let until = p.expanded_step.unwrap_or(p.f_values.len() - 1);
        for k in 0..until {
            let (a, b) = (&p.f_values[k], &p.f_values[k + 1]);
            if a.is_negative() || b.is_negative() || a - b < Q::from_integer(1.into()) {
                problems.push(format!("certificate does not decrease at step {k}: {} -> {}", q_to_string(a), q_to_string(b)));
                break;
            }
        }
        if !problems.is_empty() && sum.failures.len() < 10 {
            sum.failures.push(format!("seed {}: {}", p.seed, problems.join("; ")));
        }
    }
    sum
}
