//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `RGAMES_ACCEPT_BUDGET` sets the wall-clock budget in seconds of each
//! solver run (default 60; the desk budget of the criteria is 600).
//! `RGAMES_ACCEPT_STRICT=1` makes the process exit with status 1 when a
//! criterion fails; by default failures are reported and the exit status is 0.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rgames::certify::{
    check_certificate, finite_oracle, round_model, simulate_play, step_bound, Certificate, CheckConfig, Moves, Outcome, PlayConfig, SafePolicy,
    Strategy, Winner, DEFAULT_STATE_CAP,
};
use rgames::cli::{parse_param, prepare_game, solve, RunConfig, RunResult, RunStatus};
use rgames::constraints::{Implication, TAtom, Unknowns};
use rgames::game::generate::{finite_game, FiniteGameConfig};
use rgames::game::{cur, GameSpec, Rel, State};
use rgames::poly::{q, q_to_f64, qf, Poly, Polynomial, Q, TemplatePolynomial, UnknownPoly, Var};
use rgames::psatz::{farkas_translate, putinar_translate, ExistentialSystem, SosConfig};
use rgames::smt::{emit_smtlib, run_backend, Backend, ParseOptions, SolverStatus};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn bench_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

fn game_text(name: &str) -> String {
    std::fs::read_to_string(bench_dir().join(name)).unwrap_or_else(|e| panic!("cannot read {name}: {e}"))
}

fn budget() -> Duration {
    let secs = std::env::var("RGAMES_ACCEPT_BUDGET").ok().and_then(|v| v.parse::<f64>().ok()).unwrap_or(60.0);
    Duration::from_secs_f64(secs.max(1.0))
}

fn run_config(degrees: Vec<u32>, pre: bool, params: &[&str]) -> RunConfig {
    let b = budget();
    RunConfig {
        degrees,
        pre,
        params: params.iter().map(|p| parse_param(p).expect("parameter")).collect(),
        timeout: b,
        deadline: Some(b),
        check_samples: 10_000,
        plays: 1000,
        ..RunConfig::default()
    }
}

fn fully_validated(r: &RunResult) -> bool {
    r.status == RunStatus::Certified && r.report.as_ref().is_some_and(|c| c.passed()) && r.plays.as_ref().is_some_and(|p| p.passed())
}

fn describe(r: &RunResult) -> String {
    let timeouts = r.jobs.iter().filter(|j| j.status == "Timeout").count();
    let unsat = r.jobs.iter().filter(|j| j.status == "Unsat").count();
    let rejected = r.jobs.iter().filter(|j| j.rejection.is_some()).count();
    let mut s = format!(
        "{} after {:.1}s ({} solver runs: {} unsat, {} timeout, {} rejected)",
        r.status,
        r.timings.get("total").copied().unwrap_or(0.0),
        r.jobs.len(),
        unsat,
        timeouts,
        rejected
    );
    if let Some(d) = r.diagnostics.first() {
        s.push_str(&format!("; {d}"));
    }
    s
}

fn well_formed(doc: &str) -> Result<(), String> {
    let mut depth = 0i64;
    for c in doc.lines().filter(|l| !l.trim_start().starts_with(';')).flat_map(|l| l.chars()) {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if depth < 0 {
            return Err("unbalanced parentheses".into());
        }
    }
    if depth != 0 {
        return Err("unbalanced parentheses".into());
    }
    if !doc.contains("(check-sat)") || !doc.contains("(set-logic QF_NRA)") {
        return Err("missing commands".into());
    }
    if let Some(z3) = Backend::named("z3").ok().filter(|b| b.available()) {
        let o = run_backend(doc, &z3, Duration::from_secs(2), None, ParseOptions::default()).map_err(|e| e.to_string())?;
        if o.status == SolverStatus::SolverError {
            return Err(format!("z3 rejects the document: {}", o.stderr.lines().next().unwrap_or_default()));
        }
    }
    Ok(())
}

fn emitted_ok(r: &RunResult) -> Result<usize, String> {
    let mut n = 0;
    for (_, docs) in &r.documents {
        for d in docs {
            well_formed(d)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err("no system was emitted".into());
    }
    Ok(n)
}

fn criterion_1() -> Verdict {
    let text = game_text("cinderella_classical.game");
    let mut notes = Vec::new();
    let mut pass = true;
    for u in ["3/2", "17/10", "19/10"] {
        let r = solve(&text, &run_config(vec![1, 2], true, &[&format!("U={u}")]));
        pass &= fully_validated(&r);
        notes.push(format!("U={u}: {}", describe(&r)));
    }
    verdict(pass, notes.join(" | "))
}

fn criterion_2() -> Verdict {
    let text = game_text("cinderella_classical.game");
    let mut notes = Vec::new();
    let mut pass = true;
    for p in ["U=19999999999/10000000000", "U=symbolic"] {
        let r = solve(&text, &run_config(vec![1, 2], true, &[p]));
        let ok = match r.status {
            RunStatus::Certified => fully_validated(&r),
            RunStatus::Unknown => emitted_ok(&r).is_ok(),
            RunStatus::Error => false,
        };
        let emitted = match emitted_ok(&r) {
            Ok(n) => format!("{n} well-formed systems"),
            Err(e) => e,
        };
        pass &= ok;
        notes.push(format!("{p}: {}; {emitted}", describe(&r)));
    }
    verdict(pass, notes.join(" | "))
}

fn max_leak_policy() -> SafePolicy {
    SafePolicy::Scripted(Arc::new(|g: &GameSpec, s: &State| {
        let a = g.slot_id("a")?;
        let b = g.slot_id("b")?;
        let mut y = s.valuation.clone();
        y[a] += qf(1, 5);
        y[b] += qf(1, 5);
        Some(y)
    }))
}

fn criterion_3() -> Verdict {
    let text = game_text("faulty_robot.game");
    let r = solve(&text, &run_config(vec![1, 2], false, &[]));
    let mut detail = describe(&r);
    let mut pass = fully_validated(&r);
    if let (Some(sol), Some(g)) = (&r.solution, &r.game) {
        let play = simulate_play(g, &sol.strategy, &sol.certificate, &max_leak_policy(), &BTreeMap::new(), &PlayConfig { max_steps: 10_000, ..PlayConfig::default() });
        let reached = matches!(play.outcome, Outcome::ReachedTarget { .. });
        detail.push_str(&format!("; max-leak play: {:?}", play.outcome));
        pass &= reached;
    } else {
        detail.push_str("; no synthesized strategy for the max-leak play");
    }
    verdict(pass, detail)
}

fn criterion_4() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["incomplete.game", "compact.game"] {
        let text = game_text(name);
        for d in 1..=3 {
            let r = solve(&text, &run_config(vec![d], false, &[]));
            pass &= r.status == RunStatus::Unknown;
            notes.push(format!("{name} D={d}: {}", r.status));
        }
    }
    verdict(pass, notes.join(", "))
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let cfg = FiniteGameConfig { vars: 1, ..FiniteGameConfig::default() };
    let games = 24u64;
    let per_game = Duration::from_secs_f64(1.5);
    let mut certified = 0;
    let mut reach_wins = 0;
    let mut bad = Vec::new();
    for seed in 0..games {
        let text = finite_game(seed, &cfg);
        let g = match prepare_game(&text, &BTreeMap::new(), false, seed) {
            Ok(g) => g,
            Err(e) => return verdict(false, format!("seed {seed}: {e}")),
        };
        let oracle = match finite_oracle(&g, DEFAULT_STATE_CAP) {
            Ok(o) => o,
            Err(e) => return verdict(false, format!("seed {seed}: oracle error {e}")),
        };
        if oracle.states.len() > 200 {
            return verdict(false, format!("seed {seed}: {} states exceed 200", oracle.states.len()));
        }
        if oracle.winner == Winner::Reach {
            reach_wins += 1;
        }
        let run = RunConfig {
            degrees: vec![1],
            timeout: per_game,
            deadline: Some(per_game),
            check_samples: 1000,
            plays: 50,
            max_steps: 1000,
            seed,
            ..RunConfig::default()
        };
        let r = solve(&text, &run);
        if r.status == RunStatus::Certified {
            certified += 1;
            if oracle.winner != Winner::Reach {
                bad.push(seed);
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && elapsed < Duration::from_secs(60);
    verdict(
        pass,
        format!(
            "{games} games, oracle REACH wins {reach_wins}, solver CERTIFIED {certified}, contradictions {:?}, {:.1}s total",
            bad,
            elapsed.as_secs_f64()
        ),
    )
}

fn x() -> Var {
    cur(0)
}

fn y() -> Var {
    cur(1)
}

fn rand_poly(rng: &mut ChaCha8Rng, degree: u32) -> Polynomial {
    let mut terms = vec![];
    for m in rgames::poly::monomials_up_to(&[x(), y()], degree) {
        if rng.random_bool(0.7) {
            terms.push((m, q(rng.random_range(-4..=4))));
        }
    }
    Polynomial::from_terms(terms)
}

fn at(p: &Polynomial, pt: &[Q; 2]) -> Q {
    let m = BTreeMap::from([(x(), pt[0].clone()), (y(), pt[1].clone())]);
    p.eval_map(&m).expect("point")
}

struct RandomImplication {
    imp: Implication,
    unknowns: Unknowns,
    bounds: [(Q, Q); 2],
}

fn random_implication(rng: &mut ChaCha8Rng, nonlinear: bool) -> RandomImplication {
    let deg = if nonlinear { 2 } else { 1 };
    let mut bounds = [(q(0), q(1)), (q(0), q(1))];
    let mut lhs = Vec::new();
    for (i, v) in [x(), y()].into_iter().enumerate() {
        let lo = q(rng.random_range(-3..=0));
        let hi = &lo + q(rng.random_range(1..=4));
        lhs.push(TAtom { poly: Polynomial::var(v).add_constant(&-&lo).to_template(), rel: Rel::Ge });
        lhs.push(TAtom { poly: Polynomial::var(v).neg().add_constant(&hi).to_template(), rel: Rel::Ge });
        bounds[i] = (lo, hi);
    }
    let center = [
        (&bounds[0].0 + &bounds[0].1) / q(2),
        (&bounds[1].0 + &bounds[1].1) / q(2),
    ];
    for _ in 0..rng.random_range(0..=2) {
        let p = rand_poly(rng, deg);
        let shift = -at(&p, &center) + q(rng.random_range(0..=2));
        lhs.push(TAtom { poly: p.add_constant(&shift).to_template(), rel: Rel::Ge });
    }
    let mut unknowns = Unknowns::default();
    let mut template: TemplatePolynomial = Poly::zero();
    for (k, m) in rgames::poly::monomials_up_to(&[x(), y()], deg).into_iter().enumerate() {
        let u = unknowns.fresh(format!("c{k}"));
        template = template.add(&Poly::term(m, UnknownPoly::var(u)));
    }
    let fixed = rand_poly(rng, deg).add_constant(&q(-rng.random_range(1..=5)));
    let rhs = vec![TAtom { poly: template.add(&fixed.to_template()), rel: Rel::Ge }];
    RandomImplication { imp: Implication { universals: vec![x(), y()], lhs, rhs, origin: "random".into() }, unknowns, bounds }
}

fn solve_system(sys: &ExistentialSystem, z3: &Backend) -> Option<BTreeMap<Var, Q>> {
    let o = run_backend(&emit_smtlib(sys), z3, Duration::from_secs(10), None, ParseOptions::default()).ok()?;
    if o.status != SolverStatus::Sat {
        return None;
    }
    let model = o.model_vars(&sys.unknowns);
    if sys.check_exact(&model).is_ok() {
        return Some(model);
    }
    [3u32, 6, 9, 12].into_iter().map(|d| round_model(&model, 10u64.pow(d))).find(|m| sys.check_exact(m).is_ok())
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let Some(z3) = Backend::named("z3").ok().filter(|b| b.available()) else {
        return verdict(false, "z3 is not available");
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let points_per = 1000;
    let (mut sat, mut tried, mut points, mut violations, mut farkas, mut putinar) = (0, 0, 0usize, 0usize, 0, 0);
    while sat < 100 && tried < 400 {
        tried += 1;
        let nonlinear = tried % 2 == 0;
        let ri = random_implication(&mut rng, nonlinear);
        let sys = if nonlinear {
            putinar_translate(&ri.imp, &SosConfig::default(), &ri.unknowns)
        } else {
            farkas_translate(&ri.imp, &ri.unknowns)
        };
        let Ok(sys) = sys else { continue };
        let Some(model) = solve_system(&sys, &z3) else { continue };
        sat += 1;
        if nonlinear {
            putinar += 1;
        } else {
            farkas += 1;
        }
        let unknown = |v: Var| Some(model.get(&v).cloned().unwrap_or_else(|| q(0)));
        for _ in 0..points_per {
            let pt: Vec<Q> = ri
                .bounds
                .iter()
                .map(|(lo, hi)| {
                    let t = Q::new(rng.random_range(0..=1000).into(), 1000.into());
                    lo + (hi - lo) * t
                })
                .collect();
            let m = BTreeMap::from([(x(), pt[0].clone()), (y(), pt[1].clone())]);
            let point = |v: Var| m.get(&v).cloned();
            points += 1;
            if !ri.imp.holds_at(&unknown, &point, &q(0)) {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = sat >= 100 && violations == 0 && elapsed < Duration::from_secs(300);
    verdict(
        pass,
        format!(
            "{sat} sat implications ({farkas} Farkas, {putinar} Putinar) of {tried} generated, {points} exact point checks, {violations} violations, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn closed_form(g: &GameSpec, u: Q) -> (Certificate, Strategy) {
    let sm = g.label_id("SM").expect("SM");
    let c = g.label_id("C").expect("C");
    let b1 = g.slot_id("b1").expect("b1");
    let b3 = g.slot_id("b3").expect("b3");
    let uc = u.clone();
    let cert = Certificate::BlackBox(Arc::new(move |s: &State| {
        let m = s.valuation[b1].clone().max(s.valuation[b3].clone());
        let base = (&uc - m) / (q(2) - &uc) * q(2);
        if s.label == sm {
            base
        } else if s.label == c {
            base + q(1)
        } else {
            q(-1)
        }
    }));
    let moves = Moves::BlackBox(Arc::new(move |s: &State| {
        if s.label != sm {
            return None;
        }
        let mut v = s.valuation.clone();
        let one = q(1);
        if v[b1] > &u - &one {
            v[b1] += one;
        } else if v[b3] > &u - &one {
            v[b3] += one;
        } else {
            let avg = (&v[b1] + &v[b3] + one) / q(2);
            v[b1] = avg.clone();
            v[b3] = avg;
        }
        Some(v)
    }));
    (cert, Strategy::new(moves))
}

fn adjacent_pair_policy() -> SafePolicy {
    SafePolicy::Scripted(Arc::new(|g: &GameSpec, s: &State| {
        let b: Vec<usize> = (0..5).map(|i| g.slot_id(&format!("b{i}")).expect("bucket")).collect();
        let mut best = 0;
        let mut best_sum = q(-1);
        for i in 0..5 {
            let sum = &s.valuation[b[i]] + &s.valuation[b[(i + 1) % 5]];
            if sum > best_sum {
                best_sum = sum;
                best = i;
            }
        }
        let mut v = s.valuation.clone();
        v[b[best]] = q(0);
        v[b[(best + 1) % 5]] = q(0);
        Some(v)
    }))
}

fn criterion_7() -> Verdict {
    let text = game_text("cinderella_classical.game");
    let g = match prepare_game(&text, &BTreeMap::from([("U".to_string(), rgames::game::ParamSetting::Value(qf(3, 2)))]), false, 0) {
        Ok(g) => g,
        Err(e) => return verdict(false, e),
    };
    let (cert, strat) = closed_form(&g, qf(3, 2));
    let report = check_certificate(&g, &cert, &strat, &CheckConfig { samples: 10_000, ..CheckConfig::default() });
    let s0 = g.initial_state(&BTreeMap::new());
    let f0 = cert.value(&g, &s0);
    let bound = step_bound(&f0, false);
    let play = simulate_play(&g, &strat, &cert, &adjacent_pair_policy(), &BTreeMap::new(), &PlayConfig::default());
    let within = matches!(play.outcome, Outcome::ReachedTarget { step } if step <= 6);
    let first = report.violations.first().map(|v| format!("; first violation {:?} at {}: {}", v.condition, v.state, v.detail)).unwrap_or_default();
    verdict(
        report.passed() && within && bound == 6,
        format!(
            "sampling check: {} violations over {} states{first}; f(s_init) = {} so the bound is {bound}; hand play {:?}",
            report.violations.len(),
            report.checked_states,
            q_to_f64(&f0),
            play.outcome
        ),
    )
}

fn criterion_8() -> Verdict {
    let text = game_text("cinderella_nonlinear.game");
    let mut notes = Vec::new();
    let mut pass = true;
    for u in ["3/2", "17/10", "19/10"] {
        let r = solve(&text, &run_config(vec![1, 2], true, &[&format!("U={u}")]));
        let putinar = r.degrees.iter().all(|d| d.methods.iter().all(|m| m == "Putinar"));
        let emitted = emitted_ok(&r);
        let ok = r.status != RunStatus::Error && putinar && emitted.is_ok() && (r.status != RunStatus::Certified || fully_validated(&r));
        pass &= ok;
        let e = match emitted {
            Ok(n) => format!("{n} well-formed Putinar systems"),
            Err(e) => e,
        };
        notes.push(format!("U={u}: {}; {e}", describe(&r)));
    }
    verdict(pass, notes.join(" | "))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("1 classical Cinderella U in {1.5,1.7,1.9} CERTIFIED and validated", criterion_1),
        ("2 classical Cinderella U=2-1e-10 and symbolic eps: no false CERTIFIED", criterion_2),
        ("3 faulty robot CERTIFIED and max-leak play reaches the target", criterion_3),
        ("4 incompleteness fixtures UNKNOWN for degrees 1..3", criterion_4),
        ("5 oracle agreement on generated finite games", criterion_5),
        ("6 translation soundness on 100 random implications", criterion_6),
        ("7 closed-form Cinderella fixture calibration", criterion_7),
        ("8 nonlinear Cinderella emits well-formed Putinar systems", criterion_8),
    ];
    println!("acceptance: solver budget {:.0}s per run", budget().as_secs_f64());
    let mut failed = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let v = f();
        if !v.pass {
            failed += 1;
        }
        println!("{} criterion {name} ({:.1}s): {}", if v.pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64(), v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 && std::env::var("RGAMES_ACCEPT_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
