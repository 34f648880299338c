//! Random finite games for cross-checking the solver against the exact
//! oracle.
//!
//! Variables range over small integer boxes and every update is a
//! disjunction of integer assignments, so each state has finitely many
//! successors and the reachable state space stays small.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shape of generated games.
#[derive(Clone, Debug)]
pub struct FiniteGameConfig {
    /// Largest variable value; values range over `0..=max_value`.
    pub max_value: i64,
    /// Number of variables (1 or 2).
    pub vars: usize,
    /// Number of labels.
    pub labels: usize,
    /// Most assignment disjuncts per update.
    pub max_choices: usize,
}

impl Default for FiniteGameConfig {
    fn default() -> Self {
        Self { max_value: 5, vars: 2, labels: 3, max_choices: 3 }
    }
}

impl FiniteGameConfig {
    /// Upper bound on the number of states.
    pub fn state_bound(&self) -> usize {
        self.labels * (self.max_value as usize + 1).pow(self.vars as u32)
    }
}

const NAMES: [&str; 2] = ["x", "y"];

fn guards(rng: &mut ChaCha8Rng, cfg: &FiniteGameConfig) -> Vec<String> {
    if rng.random_bool(0.4) {
        return vec!["true".into()];
    }
    let v = NAMES[rng.random_range(0..cfg.vars)];
    let c = rng.random_range(0..cfg.max_value);
    vec![format!("{v} <= {c}"), format!("{v} >= {}", c + 1)]
}

fn assignment(rng: &mut ChaCha8Rng, cfg: &FiniteGameConfig) -> String {
    let parts: Vec<String> = NAMES[..cfg.vars]
        .iter()
        .map(|v| match rng.random_range(0..6) {
            0 => format!("{v}' = {v}"),
            1 => format!("{v}' = {}", rng.random_range(0..=cfg.max_value)),
            _ => {
                let d = rng.random_range(-1i64..=2);
                match d.signum() {
                    0 => format!("{v}' = {v}"),
                    1 => format!("{v}' = {v} + {d}"),
                    _ => format!("{v}' = {v} - {}", -d),
                }
            }
        })
        .collect();
    format!("({})", parts.join(" & "))
}

fn target(rng: &mut ChaCha8Rng, cfg: &FiniteGameConfig) -> Option<String> {
    let v = NAMES[rng.random_range(0..cfg.vars)];
    let c = rng.random_range(1..=cfg.max_value);
    match rng.random_range(0..6) {
        0 => None,
        1 => Some(format!("{v} = {c}")),
        _ => Some(format!("{v} >= {c}")),
    }
}

/// Text of a random finite game, determined by `seed`. Play starts at
/// the origin, which no target contains.
pub fn finite_game(seed: u64, cfg: &FiniteGameConfig) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = &NAMES[..cfg.vars];
    let mut out = String::new();
    let _ = writeln!(out, "game \"finite_{seed}\"");
    let _ = writeln!(out, "vars {}", vars.join(" "));
    let dom: Vec<String> = vars.iter().map(|v| format!("0 <= {v} <= {}", cfg.max_value)).collect();
    let _ = writeln!(out, "domain: {}", dom.join(" & "));
    for l in 0..cfg.labels {
        let owner = if l % 2 == 0 { "reach" } else { "safe" };
        let _ = writeln!(out, "label L{l} {owner}");
    }
    let init: Vec<String> = vars.iter().map(|v| format!("{v} = 0")).collect();
    let _ = writeln!(out, "init L0: {}", init.join(", "));
    for l in 0..cfg.labels {
        for g in guards(&mut rng, cfg) {
            let to = rng.random_range(0..cfg.labels);
            let n = rng.random_range(1..=cfg.max_choices);
            let choices: Vec<String> = (0..n).map(|_| assignment(&mut rng, cfg)).collect();
            let _ = writeln!(out, "trans L{l} -> L{to} when {g} update {}", choices.join(" | "));
        }
    }
    for l in 0..cfg.labels {
        if let Some(t) = target(&mut rng, cfg) {
            let _ = writeln!(out, "target L{l}: {t}");
        }
    }
    out
}
