//! Exact solution of finite games by backward attractor computation, with
//! the ranking built level by level.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use super::check::{check_states, CheckConfig, Condition};
use super::{Certificate, Moves, Strategy};
use crate::game::{GameSpec, Owner, Sampler, SamplerConfig, State};
use crate::poly::Q;

/// Default cap on explored states.
pub const DEFAULT_STATE_CAP: usize = 10_000;

/// Winner from the initial state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Winner {
    /// The REACH player.
    Reach,
    /// The SAFE player.
    Safe,
}

/// Oracle failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    /// Some update admits infinitely many successors.
    #[error("successors of {0} are not enumerable; the oracle needs finite branching")]
    NotEnumerable(String),
    /// Too many reachable states.
    #[error("more than {0} reachable states")]
    StateCap(usize),
    /// Symbolic parameters make the initial state ambiguous.
    #[error("symbolic parameters are not supported by the oracle; pin them")]
    Symbolic,
    /// Successor computation failed.
    #[error("{0}")]
    Game(String),
    /// The constructed ranking is not a certificate.
    #[error("constructed ranking fails the certificate check: {0}")]
    Incoherent(String),
}

/// Oracle output.
#[derive(Clone, Debug)]
pub struct OracleResult {
    /// Winner from the initial state.
    pub winner: Winner,
    /// Rank of every reachable state: steps to the target under optimal play,
    /// or −1 where SAFE wins.
    pub ranking: BTreeMap<State, Q>,
    /// REACH successor choice at every ranked REACH state.
    pub choice: BTreeMap<State, Vec<Q>>,
    /// Reachable states in discovery order.
    pub states: Vec<State>,
}

impl OracleResult {
    /// The ranking as a certificate (−1 outside the explored states).
    pub fn certificate(&self) -> Certificate {
        let r = self.ranking.clone();
        Certificate::BlackBox(Arc::new(move |s: &State| r.get(s).cloned().unwrap_or_else(|| Q::from_integer((-1).into()))))
    }

    /// The REACH choices as a strategy.
    pub fn strategy(&self) -> Strategy {
        let c = self.choice.clone();
        Strategy::new(Moves::BlackBox(Arc::new(move |s: &State| c.get(s).cloned())))
    }
}

/// Solves a finite game from its initial state. The returned ranking is
/// checked against the certificate conditions on every reachable state.
pub fn finite_oracle(game: &GameSpec, cap: usize) -> Result<OracleResult, OracleError> {
    if !game.param_slots().is_empty() {
        return Err(OracleError::Symbolic);
    }
    let mut g = game.clone();
    g.expanded = None;
    let g = &g;
    let sampler = Sampler::new(g, SamplerConfig::default());
    let init = g.initial_state(&BTreeMap::new());
    let mut index: BTreeMap<State, usize> = BTreeMap::new();
    let mut states: Vec<State> = Vec::new();
    let mut succ: Vec<Vec<usize>> = Vec::new();
    let mut target: Vec<bool> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(init.clone(), 0);
    states.push(init);
    queue.push_back(0);
    while let Some(i) = queue.pop_front() {
        let s = states[i].clone();
        let in_o = g.in_target(&s).map_err(|e| OracleError::Game(e.to_string()))?;
        target.push(in_o);
        debug_assert_eq!(target.len(), i + 1);
        let mut out = Vec::new();
        if !in_o {
            let t = g.enabled(&s).map_err(|e| OracleError::Game(e.to_string()))?;
            let dst = g.transitions[t].target;
            let ys = sampler
                .enumerate(t, &s.valuation)
                .map_err(|e| OracleError::Game(e.to_string()))?
                .ok_or_else(|| OracleError::NotEnumerable(g.show_state(&s)))?;
            for y in ys {
                let n = State { label: dst, valuation: y };
                let j = match index.get(&n) {
                    Some(&j) => j,
                    None => {
                        if states.len() >= cap {
                            return Err(OracleError::StateCap(cap));
                        }
                        let j = states.len();
                        index.insert(n.clone(), j);
                        states.push(n);
                        queue.push_back(j);
                        j
                    }
                };
                if !out.contains(&j) {
                    out.push(j);
                }
            }
        }
        succ.push(out);
    }
    let n = states.len();
    let mut rank: Vec<Option<u64>> = (0..n).map(|i| if target[i] { Some(0) } else { None }).collect();
    let mut level = 0u64;
    loop {
        level += 1;
        let mut fresh = Vec::new();
        for i in 0..n {
            if rank[i].is_some() {
                continue;
            }
            let ranked = |j: &usize| rank[*j].is_some();
            let joins = match g.owner(states[i].label) {
                Owner::Reach => succ[i].iter().any(ranked),
                Owner::Safe => succ[i].iter().all(ranked),
            };
            if joins {
                fresh.push(i);
            }
        }
        if fresh.is_empty() {
            break;
        }
        for i in fresh {
            rank[i] = Some(level);
        }
    }
    let mut ranking = BTreeMap::new();
    let mut choice = BTreeMap::new();
    for i in 0..n {
        let r = rank[i].map_or(-1, |r| r as i64);
        ranking.insert(states[i].clone(), Q::from_integer(r.into()));
        if !target[i] && g.owner(states[i].label) == Owner::Reach && r > 0 {
            let best = succ[i].iter().filter(|&&j| rank[j].is_some()).min_by_key(|&&j| rank[j]);
            if let Some(&j) = best {
                choice.insert(states[i].clone(), states[j].valuation.clone());
            }
        }
    }
    let winner = if rank[0].is_some() { Winner::Reach } else { Winner::Safe };
    let result = OracleResult { winner, ranking, choice, states };
    let report = check_states(g, &result.certificate(), &result.strategy(), &result.states, &CheckConfig::default());
    let relevant: Vec<_> = report
        .violations
        .iter()
        .filter(|v| winner == Winner::Reach || v.condition != Condition::C1)
        .collect();
    if let Some(v) = relevant.first() {
        return Err(OracleError::Incoherent(format!("{:?} at {}: {}", v.condition, v.state, v.detail)));
    }
    if !report.exhausted.is_empty() {
        return Err(OracleError::Incoherent(report.exhausted.join("; ")));
    }
    Ok(result)
}
