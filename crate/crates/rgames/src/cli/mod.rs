//! End-to-end driver: solving over a degree ladder, artifact output and the
//! benchmark runner.

mod bench;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::certify::{
    certificate_to_json, check_certificate, extract_solution, round_model, validate_plays, BoundSummary, CheckConfig, Report, SafePolicy, Solution,
};
use crate::constraints::{build_templates, candidate_systems, collect_constraints, group_counts, render_implications, CollectOptions, SplitOptions, TemplateSet};
use crate::game::{normalize_game, parse_game_with, pre_expand, GameSpec, LabelId, ParamSetting, Slot};
use crate::poly::{parse_rational, Polynomial};
use crate::psatz::{translate_system, ExistentialSystem, Method, SosConfig};
use crate::smt::{emit_smtlib, portfolio, Backend, Job, JobResult, ParseOptions, SolverStatus};

pub use bench::{bench_command, load_manifest, render_table, rows_json, BenchRow, Manifest, RowResult};

/// Backend name that only writes the SMT documents.
pub const EMIT_ONLY: &str = "smtlib-out";

/// Driver configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Ranking template degrees, tried in order.
    pub degrees: Vec<u32>,
    /// Strategy template degree; defaults to the ranking degree.
    pub strategy_degree: Option<u32>,
    /// Sum-of-squares multiplier shape.
    pub sos: SosConfig,
    /// Force one translation.
    pub method: Option<Method>,
    /// Expand the target by one predecessor step.
    pub pre: bool,
    /// Backend names.
    pub backends: Vec<String>,
    /// Time limit per solver run.
    pub timeout: Duration,
    /// Time limit for the whole run.
    pub deadline: Option<Duration>,
    /// Parameter settings.
    pub params: BTreeMap<String, ParamSetting>,
    /// Seed for every randomized step.
    pub seed: u64,
    /// Run directory.
    pub out_dir: Option<PathBuf>,
    /// Samples of the mandatory certificate check.
    pub check_samples: usize,
    /// Plays of the mandatory simulation check.
    pub plays: usize,
    /// Step budget per play.
    pub max_steps: usize,
    /// Cap on candidate systems per degree.
    pub candidate_cap: usize,
    /// Concurrent solver processes.
    pub concurrency: usize,
    /// Write the implications next to each SMT document.
    pub dump_implications: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            degrees: vec![1, 2],
            strategy_degree: None,
            sos: SosConfig::default(),
            method: None,
            pre: false,
            backends: Backend::detect().into_iter().map(|b| b.name).collect(),
            timeout: Duration::from_secs(300),
            deadline: None,
            params: BTreeMap::new(),
            seed: 0,
            out_dir: None,
            check_samples: 10_000,
            plays: 1000,
            max_steps: 10_000,
            candidate_cap: SplitOptions::default().cap,
            concurrency: std::thread::available_parallelism().map_or(2, |n| n.get()),
            dump_implications: false,
        }
    }
}

/// Configuration problem.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    /// No degrees.
    #[error("the degree ladder is empty")]
    EmptyLadder,
    /// Zero timeout.
    #[error("timeouts must be positive")]
    Timeout,
    /// No backend.
    #[error("no backend selected")]
    NoBackend,
    /// Malformed `NAME=VALUE`.
    #[error("cannot parse parameter `{0}`; expected NAME=RATIONAL or NAME=symbolic")]
    Param(String),
}

impl RunConfig {
    /// Validates the invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.degrees.is_empty() {
            return Err(ConfigError::EmptyLadder);
        }
        if self.timeout.is_zero() || self.deadline.is_some_and(|d| d.is_zero()) {
            return Err(ConfigError::Timeout);
        }
        if self.backends.is_empty() {
            return Err(ConfigError::NoBackend);
        }
        Ok(())
    }

    fn emit_only(&self) -> bool {
        self.backends.iter().all(|b| b == EMIT_ONLY)
    }
}

/// Parses `NAME=3/2`, `NAME=1.5` or `NAME=symbolic`.
pub fn parse_param(text: &str) -> Result<(String, ParamSetting), ConfigError> {
    let (name, value) = text.split_once('=').ok_or_else(|| ConfigError::Param(text.into()))?;
    let name = name.trim();
    if name.is_empty() {
        return Err(ConfigError::Param(text.into()));
    }
    let value = value.trim();
    if value.eq_ignore_ascii_case("symbolic") {
        return Ok((name.to_string(), ParamSetting::Symbolic));
    }
    let v = parse_rational(value).ok_or_else(|| ConfigError::Param(text.into()))?;
    Ok((name.to_string(), ParamSetting::Value(v)))
}

/// Final verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    /// A certificate was found and passed every check.
    #[serde(rename = "CERTIFIED")]
    Certified,
    /// No certificate was found.
    #[serde(rename = "UNKNOWN")]
    Unknown,
    /// The run could not proceed.
    #[serde(rename = "ERROR")]
    Error,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Certified => "CERTIFIED",
            RunStatus::Unknown => "UNKNOWN",
            RunStatus::Error => "ERROR",
        })
    }
}

/// One solver run in the portfolio.
#[derive(Clone, Debug, Serialize)]
pub struct JobRecord {
    /// Template degree.
    pub degree: u32,
    /// Candidate system index.
    pub candidate: usize,
    /// Backend.
    pub backend: String,
    /// Outcome.
    pub status: String,
    /// Seconds.
    pub seconds: f64,
    /// Why a Sat model was rejected, if it was.
    pub rejection: Option<String>,
}

/// Sizes of one degree's encoding.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DegreeStats {
    /// Degree.
    pub degree: u32,
    /// C1, C2 and C3 groups.
    pub groups: (usize, usize, usize),
    /// Candidate systems.
    pub candidates: usize,
    /// Implications per candidate.
    pub implications: Vec<usize>,
    /// Unknowns per candidate.
    pub unknowns: Vec<usize>,
    /// Constraints per candidate.
    pub constraints: Vec<usize>,
    /// Translation per candidate.
    pub methods: Vec<String>,
    /// Emitted files.
    pub files: Vec<String>,
}

/// Outcome of a solve run.
#[derive(Debug)]
pub struct RunResult {
    /// Verdict.
    pub status: RunStatus,
    /// Degree of the certificate.
    pub degree: Option<u32>,
    /// Certificate and strategy.
    pub solution: Option<Solution>,
    /// Mandatory checker report.
    pub report: Option<Report>,
    /// Mandatory simulation summary.
    pub plays: Option<BoundSummary>,
    /// The processed game.
    pub game: Option<GameSpec>,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
    /// Encoding sizes.
    pub degrees: Vec<DegreeStats>,
    /// Solver runs.
    pub jobs: Vec<JobRecord>,
    /// Messages.
    pub diagnostics: Vec<String>,
    /// Emitted SMT documents, per degree, in candidate order.
    pub documents: Vec<(u32, Vec<String>)>,
}

impl RunResult {
    fn error(msg: String, timings: BTreeMap<String, f64>) -> Self {
        RunResult {
            status: RunStatus::Error,
            degree: None,
            solution: None,
            report: None,
            plays: None,
            game: None,
            timings,
            degrees: vec![],
            jobs: vec![],
            diagnostics: vec![msg],
            documents: vec![],
        }
    }

    /// Statistics object stored in result files.
    pub fn stats(&self, cfg: &RunConfig) -> serde_json::Value {
        let params: BTreeMap<String, String> = cfg
            .params
            .iter()
            .map(|(k, v)| {
                let text = match v {
                    ParamSetting::Value(q) => crate::poly::q_to_string(q),
                    ParamSetting::Symbolic => "symbolic".into(),
                };
                (k.clone(), text)
            })
            .collect();
        serde_json::json!({
            "pre": cfg.pre,
            "params": params,
            "seed": cfg.seed,
            "timings": self.timings,
            "degrees": self.degrees,
            "jobs": self.jobs,
            "diagnostics": self.diagnostics,
            "check": self.report,
            "plays": self.plays,
        })
    }
}

/// Parses, normalizes and optionally expands a game.
pub fn prepare_game(text: &str, params: &BTreeMap<String, ParamSetting>, pre: bool, seed: u64) -> Result<GameSpec, String> {
    let g = parse_game_with(text, params).map_err(|e| format!("parse error: {e}"))?;
    let g = normalize_game(&g).map_err(|e| format!("normalization error: {e}"))?;
    if pre {
        pre_expand(&g, seed).map_err(|e| format!("target expansion error: {e}"))
    } else {
        Ok(g)
    }
}

/// Encoding of one degree.
pub struct Encoding {
    /// Degree.
    pub degree: u32,
    /// Templates.
    pub templates: TemplateSet,
    /// Translated systems with their forced strategy components.
    pub systems: Vec<(ExistentialSystem, BTreeMap<LabelId, BTreeMap<Slot, Polynomial>>)>,
    /// Implication dumps.
    pub dumps: Vec<String>,
    /// Sizes.
    pub stats: DegreeStats,
}

/// Builds templates, constraints and translated systems for one degree.
pub fn encode(g: &GameSpec, degree: u32, cfg: &RunConfig) -> Result<Encoding, String> {
    let ts = build_templates(g, degree, cfg.strategy_degree).map_err(|e| e.to_string())?;
    let groups = collect_constraints(g, &ts, &CollectOptions { pre_mode: cfg.pre && g.expanded.is_some() });
    let split = SplitOptions { cap: cfg.candidate_cap, ..SplitOptions::default() };
    let cands = candidate_systems(g, &ts, &groups, &split).map_err(|e| e.to_string())?;
    let mut stats = DegreeStats { degree, groups: group_counts(&groups), candidates: cands.len(), ..DegreeStats::default() };
    let mut systems = Vec::new();
    let mut dumps = Vec::new();
    for c in &cands {
        let sys = translate_system(c, &ts, &cfg.sos, cfg.method).map_err(|e| e.to_string())?;
        stats.implications.push(c.implications.len());
        stats.unknowns.push(sys.unknowns.len());
        stats.constraints.push(sys.constraints.len());
        stats.methods.push(format!("{:?}", sys.method));
        if cfg.dump_implications {
            dumps.push(render_implications(g, &ts, &c.implications));
        }
        systems.push((sys, c.forced.clone()));
    }
    Ok(Encoding { degree, templates: ts, systems, dumps, stats })
}

struct Accepted {
    solution: Solution,
    report: Report,
    plays: BoundSummary,
}

/// Exact model of `sys`, recovered from `model` by continued-fraction
/// rounding. When the solver reported algebraic values and no rounding is
/// exact, the unrounded model is kept if every constraint holds within
/// 10^-9. The flag marks models that are not the solver's
/// own exact values.
pub fn exact_model(sys: &ExistentialSystem, model: &BTreeMap<u32, crate::poly::Q>, algebraic: bool) -> Option<(BTreeMap<u32, crate::poly::Q>, bool)> {
    if sys.check_exact(model).is_ok() {
        return Some((model.clone(), algebraic));
    }
    for digits in [2u32, 3, 4, 6, 8, 10, 12] {
        let rounded = round_model(model, 10u64.pow(digits));
        if sys.check_exact(&rounded).is_ok() {
            return Some((rounded, true));
        }
    }
    let tol = crate::poly::qf(1, ALGEBRAIC_TOLERANCE_INV);
    match sys.max_violation(model) {
        Ok(v) if algebraic && v <= tol => Some((model.clone(), true)),
        _ => None,
    }
}

/// Inverse of the residual tolerance for models with algebraic values.
pub const ALGEBRAIC_TOLERANCE_INV: i64 = 1_000_000_000;

fn write(path: &Path, text: &str, diags: &mut Vec<String>) {
    if let Some(dir) = path.parent() {
        let _ = std::fs::create_dir_all(dir);
    }
    if let Err(e) = std::fs::write(path, text) {
        diags.push(format!("cannot write {}: {e}", path.display()));
    }
}

/// Runs the whole pipeline on game text.
pub fn solve(text: &str, cfg: &RunConfig) -> RunResult {
    let start = Instant::now();
    let mut timings = BTreeMap::new();
    if let Err(e) = cfg.validate() {
        return RunResult::error(format!("configuration error: {e}"), timings);
    }
    let g = match prepare_game(text, &cfg.params, cfg.pre, cfg.seed) {
        Ok(g) => g,
        Err(e) => return RunResult::error(e, timings),
    };
    timings.insert("prepare".into(), start.elapsed().as_secs_f64());
    let emit_only = cfg.emit_only();
    let mut backends = Vec::new();
    if !emit_only {
        for name in cfg.backends.iter().filter(|b| *b != EMIT_ONLY) {
            match Backend::named(name) {
                Ok(b) if b.available() => backends.push(b),
                Ok(b) => return RunResult::error(format!("backend `{}` not found at {}", name, b.program.display()), timings),
                Err(e) => return RunResult::error(e.to_string(), timings),
            }
        }
    }
    let mut diagnostics = Vec::new();
    let mut encodings = Vec::new();
    let t_enc = Instant::now();
    for &d in &cfg.degrees {
        if cfg.deadline.is_some_and(|dl| start.elapsed() >= dl) {
            diagnostics.push(format!("deadline reached before degree {d}"));
            break;
        }
        match encode(&g, d, cfg) {
            Ok(e) => encodings.push(e),
            Err(e) => {
                let mut r = RunResult::error(format!("encoding error at degree {d}: {e}"), timings);
                r.game = Some(g);
                return r;
            }
        }
    }
    timings.insert("encode".into(), t_enc.elapsed().as_secs_f64());
    let mut documents = Vec::new();
    let mut jobs = Vec::new();
    let mut meta = Vec::new();
    for (ei, e) in encodings.iter().enumerate() {
        let docs: Vec<String> = e.systems.iter().map(|(s, _)| emit_smtlib(s)).collect();
        if let Some(dir) = &cfg.out_dir {
            for (i, doc) in docs.iter().enumerate() {
                let p = dir.join(format!("d{}", e.degree)).join(format!("candidate_{i}.smt2"));
                write(&p, doc, &mut diagnostics);
                if let Some(dump) = e.dumps.get(i) {
                    write(&dir.join(format!("d{}", e.degree)).join(format!("implications_{i}.txt")), dump, &mut diagnostics);
                }
            }
        }
        for (ci, doc) in docs.iter().enumerate() {
            for b in &backends {
                jobs.push(Job { doc: doc.clone(), backend: b.clone(), tag: format!("d{} candidate {} {}", e.degree, ci, b.name) });
                meta.push((ei, ci));
            }
        }
        documents.push((e.degree, docs));
    }
    let mut degree_stats: Vec<DegreeStats> = encodings.iter().map(|e| e.stats.clone()).collect();
    if let Some(dir) = &cfg.out_dir {
        for ds in &mut degree_stats {
            ds.files = (0..ds.candidates).map(|i| dir.join(format!("d{}", ds.degree)).join(format!("candidate_{i}.smt2")).display().to_string()).collect();
        }
    }
    let mut result = RunResult {
        status: RunStatus::Unknown,
        degree: None,
        solution: None,
        report: None,
        plays: None,
        game: None,
        timings,
        degrees: degree_stats,
        jobs: vec![],
        diagnostics,
        documents,
    };
    if emit_only {
        result.diagnostics.push("emit-only run: no solver was called".into());
        result.game = Some(g);
        finish(&mut result, cfg, start);
        return result;
    }
    let accepted: Mutex<BTreeMap<usize, Accepted>> = Mutex::new(BTreeMap::new());
    let rejections: Mutex<BTreeMap<usize, String>> = Mutex::new(BTreeMap::new());
    let gref = &g;
    let accept = |idx: usize, o: &crate::smt::SolverOutcome| -> bool {
        let (ei, ci) = meta[idx];
        let enc = &encodings[ei];
        let (sys, forced) = &enc.systems[ci];
        let reject = |why: String| {
            if let Ok(mut r) = rejections.lock() {
                r.insert(idx, why);
            }
            false
        };
        let model = o.model_vars(&sys.unknowns);
        let Some((model, approximate)) = exact_model(sys, &model, o.approximate) else {
            return reject("model fails the exact recheck of the constraint system".into());
        };
        let mut sol = extract_solution(gref, &model, &enc.templates, forced, approximate);
        sol.strategy.pre_move_resolution = cfg.pre;
        sol.strategy.backends = backends.clone();
        let ccfg = CheckConfig { samples: cfg.check_samples, seed: cfg.seed, ..CheckConfig::default() };
        let report = check_certificate(gref, &sol.certificate, &sol.strategy, &ccfg);
        if !report.passed() {
            let v = &report.violations[0];
            return reject(format!("certificate check: {:?} at {}: {}", v.condition, v.state, v.detail));
        }
        let plays = validate_plays(gref, &sol.strategy, &sol.certificate, &SafePolicy::Random, cfg.plays, cfg.seed, cfg.max_steps);
        if !plays.passed() {
            return reject(format!("simulation: {}", plays.failures.first().cloned().unwrap_or_default()));
        }
        if let Ok(mut a) = accepted.lock() {
            a.insert(idx, Accepted { solution: sol, report, plays });
        }
        true
    };
    let deadline = cfg.deadline.map(|d| start + d);
    let t_solve = Instant::now();
    let pr = portfolio(&jobs, cfg.timeout, deadline, cfg.concurrency, ParseOptions::default(), &accept);
    result.timings.insert("solve".into(), t_solve.elapsed().as_secs_f64());
    let rejections = rejections.into_inner().unwrap_or_default();
    for (idx, r) in pr.results.iter().enumerate() {
        let (ei, ci) = meta[idx];
        let (status, seconds) = match r {
            JobResult::Skipped => ("Skipped".to_string(), 0.0),
            JobResult::Failed(e) => (format!("SolverError: {e}"), 0.0),
            JobResult::Done(o) => {
                let mut s = format!("{:?}", o.status);
                if o.status == SolverStatus::SolverError && !o.stderr.is_empty() {
                    s = format!("SolverError: {}", o.stderr.lines().next().unwrap_or_default());
                }
                (s, o.elapsed.as_secs_f64())
            }
        };
        result.jobs.push(JobRecord {
            degree: encodings[ei].degree,
            candidate: ci,
            backend: jobs[idx].backend.name.clone(),
            status,
            seconds,
            rejection: rejections.get(&idx).cloned(),
        });
    }
    if let Some(w) = pr.winner {
        let mut acc = accepted.into_inner().unwrap_or_default();
        if let Some(a) = acc.remove(&w) {
            result.status = RunStatus::Certified;
            result.degree = Some(encodings[meta[w].0].degree);
            result.solution = Some(a.solution);
            result.report = Some(a.report);
            result.plays = Some(a.plays);
        }
    }
    result.game = Some(g);
    finish(&mut result, cfg, start);
    result
}

fn finish(result: &mut RunResult, cfg: &RunConfig, start: Instant) {
    result.timings.insert("total".into(), start.elapsed().as_secs_f64());
    let Some(dir) = &cfg.out_dir else { return };
    let mut diags = Vec::new();
    let status = result.status.to_string();
    let stats = result.stats(cfg);
    let body = match (&result.solution, &result.game) {
        (Some(sol), Some(g)) => match certificate_to_json(g, sol, &status, result.degree.unwrap_or(0), stats.clone()) {
            Ok(f) => serde_json::to_value(f).unwrap_or_default(),
            Err(e) => serde_json::json!({"status": "ERROR", "error": e.to_string()}),
        },
        _ => serde_json::json!({
            "status": status,
            "degree": result.degree.unwrap_or(0),
            "certificate": {},
            "strategy": {},
            "approximate": false,
            "stats": stats,
        }),
    };
    write(&dir.join("result.json"), &serde_json::to_string_pretty(&body).unwrap_or_default(), &mut diags);
    if let Some(r) = &result.report {
        write(&dir.join("check_report.json"), &serde_json::to_string_pretty(r).unwrap_or_default(), &mut diags);
    }
    result.diagnostics.extend(diags);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::qf;

    #[test]
    fn params_parse() {
        assert_eq!(parse_param("U=3/2").unwrap(), ("U".into(), ParamSetting::Value(qf(3, 2))));
        assert_eq!(parse_param("U=1.5").unwrap(), ("U".into(), ParamSetting::Value(qf(3, 2))));
        assert_eq!(parse_param("eps=symbolic").unwrap(), ("eps".into(), ParamSetting::Symbolic));
        assert!(parse_param("U").is_err());
        assert!(parse_param("=1").is_err());
    }

    #[test]
    fn empty_ladder_is_an_error() {
        let cfg = RunConfig { degrees: vec![], backends: vec![EMIT_ONLY.into()], ..RunConfig::default() };
        let r = solve("game \"x\"", &cfg);
        assert_eq!(r.status, RunStatus::Error);
        assert!(r.diagnostics[0].contains("degree ladder is empty"));
    }

    const CHAIN: &str = r#"
game "chain"
vars x
domain: -1 <= x <= 10
label R reach
init R: x = 7
trans R -> R when true update x' = x - 1 | x' = x
target R: x <= 0
"#;

    #[test]
    fn emit_only_is_deterministic() {
        let cfg = RunConfig { degrees: vec![1], backends: vec![EMIT_ONLY.into()], ..RunConfig::default() };
        let a = solve(CHAIN, &cfg);
        let b = solve(CHAIN, &cfg);
        assert_eq!(a.status, RunStatus::Unknown);
        assert_eq!(a.documents, b.documents);
        assert_eq!(a.documents[0].1.len(), 2);
    }

    #[test]
    fn chain_is_certified_when_a_solver_exists() {
        if Backend::detect().is_empty() {
            return;
        }
        let cfg = RunConfig { degrees: vec![1], check_samples: 500, plays: 50, timeout: Duration::from_secs(60), ..RunConfig::default() };
        let r = solve(CHAIN, &cfg);
        assert_eq!(r.status, RunStatus::Certified, "{:?} {:?}", r.diagnostics, r.jobs);
        assert!(r.report.as_ref().unwrap().passed());
        assert!(r.plays.as_ref().unwrap().passed());
    }
}
