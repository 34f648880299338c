//! SMT-LIB rendering of existential systems, external solver processes and
//! model parsing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::constraints::Unknowns;
use crate::poly::{parse_rational, Monomial, UnknownPoly, Q, Var};
use crate::psatz::ExistentialSystem;

/// Renders a rational as an SMT-LIB real term.
pub fn smt_rational(v: &Q) -> String {
    let body = |a: &Q| {
        if a.is_integer() {
            a.numer().to_string()
        } else {
            format!("(/ {} {})", a.numer(), a.denom())
        }
    };
    if v.is_negative() {
        format!("(- {})", body(&-v.clone()))
    } else {
        body(v)
    }
}

/// Renders an identifier, quoting it when it is not a simple symbol.
pub fn smt_symbol(name: &str) -> String {
    const EXTRA: &str = "~!@$%^&*_-+=<>.?/";
    let simple = !name.is_empty()
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && name.chars().all(|c| c.is_ascii_alphanumeric() || EXTRA.contains(c))
        && !matches!(name, "let" | "forall" | "exists" | "par" | "_" | "!" | "as");
    if simple {
        name.to_string()
    } else {
        format!("|{}|", name.replace(['|', '\\'], "_"))
    }
}

fn monomial_factors(m: &Monomial, names: &dyn Fn(Var) -> String) -> Vec<String> {
    let mut out = Vec::new();
    for &(v, e) in m.exponents() {
        for _ in 0..e {
            out.push(names(v));
        }
    }
    out
}

/// Renders a polynomial over unknowns in prefix form.
pub fn smt_poly(p: &UnknownPoly, names: &dyn Fn(Var) -> String) -> String {
    let mut terms = Vec::new();
    for (m, c) in p.terms() {
        let mut factors = Vec::new();
        if !c.is_one() || m.is_one() {
            factors.push(smt_rational(c));
        }
        factors.extend(monomial_factors(m, names));
        terms.push(if factors.len() == 1 { factors.pop().unwrap_or_default() } else { format!("(* {})", factors.join(" ")) });
    }
    match terms.len() {
        0 => "0".to_string(),
        1 => terms.pop().unwrap_or_default(),
        _ => format!("(+ {})", terms.join(" ")),
    }
}

/// Renders a predicate over polynomials.
pub fn smt_pred(p: &crate::game::Pred, names: &dyn Fn(Var) -> String) -> String {
    use crate::game::Pred;
    match p {
        Pred::True => "true".into(),
        Pred::False => "false".into(),
        Pred::Atom(a) => format!("({} {} 0)", a.rel.symbol(), smt_poly(&a.lhs, names)),
        Pred::And(ps) if ps.is_empty() => "true".into(),
        Pred::Or(ps) if ps.is_empty() => "false".into(),
        Pred::And(ps) => format!("(and {})", ps.iter().map(|q| smt_pred(q, names)).collect::<Vec<_>>().join(" ")),
        Pred::Or(ps) => format!("(or {})", ps.iter().map(|q| smt_pred(q, names)).collect::<Vec<_>>().join(" ")),
        Pred::Not(q) => format!("(not {})", smt_pred(q, names)),
    }
}

fn comment(text: &str) -> String {
    text.lines().map(|l| format!("; {l}\n")).collect()
}

/// Renders a system as a self-contained SMT-LIB 2 script over nonlinear
/// real arithmetic. The output depends only on the system.
pub fn emit_smtlib(sys: &ExistentialSystem) -> String {
    let names = |v: Var| smt_symbol(sys.unknowns.name(v));
    let mut out = String::new();
    let _ = writeln!(out, "; method: {:?}", sys.method);
    let _ = writeln!(out, "; unknowns: {} ({} template)", sys.unknowns.len(), sys.template_unknowns);
    let _ = writeln!(out, "; constraints: {}", sys.constraints.len());
    out.push_str("(set-option :produce-models true)\n(set-logic QF_NRA)\n");
    for n in sys.unknowns.names() {
        let _ = writeln!(out, "(declare-const {} Real)", smt_symbol(n));
    }
    let mut last_origin: Option<&str> = None;
    for c in &sys.constraints {
        if last_origin != Some(c.origin.as_str()) {
            out.push_str(&comment(&c.origin));
            last_origin = Some(c.origin.as_str());
        }
        let op = c.rel.symbol();
        let _ = writeln!(out, "(assert ({op} {} 0))", smt_poly(&c.poly, &names));
    }
    out.push_str("(check-sat)\n(get-model)\n");
    out
}

/// Result classification of one solver run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum SolverStatus {
    /// Satisfiable with a model.
    Sat,
    /// Unsatisfiable.
    Unsat,
    /// The solver gave up.
    Unknown,
    /// Killed at the time limit.
    Timeout,
    /// Killed on request.
    Cancelled,
    /// Crash or unusable output.
    SolverError,
}

/// One solver run.
#[derive(Clone, Debug)]
pub struct SolverOutcome {
    /// Classification.
    pub status: SolverStatus,
    /// Model by unknown name; present iff the status is `Sat`.
    pub model: Option<BTreeMap<String, Q>>,
    /// Some model value was an approximation of an algebraic number.
    pub approximate: bool,
    /// Captured standard output.
    pub raw: String,
    /// Captured standard error.
    pub stderr: String,
    /// Wall time.
    pub elapsed: Duration,
}

impl SolverOutcome {
    /// Model keyed by unknown index; names absent from `unknowns` are ignored.
    pub fn model_vars(&self, unknowns: &Unknowns) -> BTreeMap<Var, Q> {
        let mut out = BTreeMap::new();
        for (name, v) in self.model.iter().flatten() {
            let bare = name.trim_matches('|');
            if let Some(i) = unknowns.lookup(bare) {
                out.insert(i, v.clone());
            }
        }
        out
    }
}

/// Solver process failure that prevents any outcome.
#[derive(Debug, Error)]
pub enum SmtError {
    /// Executable missing or not runnable.
    #[error("cannot run solver `{program}`: {source}")]
    Spawn {
        /// Program path.
        program: String,
        /// Cause.
        source: std::io::Error,
    },
    /// Unknown backend name.
    #[error("unknown backend `{0}` (expected z3, mathsat, cvc5 or yices)")]
    UnknownBackend(String),
    /// I/O while talking to the solver.
    #[error("solver I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// External solver command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Backend {
    /// Short name.
    pub name: String,
    /// Executable.
    pub program: PathBuf,
    /// Arguments; the script is written to standard input.
    pub args: Vec<String>,
}

/// Backend names in portfolio preference order.
pub const BACKEND_NAMES: [&str; 4] = ["z3", "mathsat", "cvc5", "yices"];

impl Backend {
    /// Backend by name; the executable path can be overridden through
    /// `RGAMES_Z3`, `RGAMES_MATHSAT`, `RGAMES_CVC5` or `RGAMES_YICES`.
    pub fn named(name: &str) -> Result<Backend, SmtError> {
        let (env, program, args): (&str, &str, &[&str]) = match name {
            "z3" => ("RGAMES_Z3", "z3", &["-in", "-smt2"]),
            "mathsat" => ("RGAMES_MATHSAT", "mathsat", &["-input=smt2"]),
            "cvc5" => ("RGAMES_CVC5", "cvc5", &["--lang", "smt2", "--produce-models"]),
            "yices" => ("RGAMES_YICES", "yices-smt2", &["--smt2-model-format"]),
            other => return Err(SmtError::UnknownBackend(other.to_string())),
        };
        let program = std::env::var_os(env).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(program));
        Ok(Backend { name: name.to_string(), program, args: args.iter().map(|s| s.to_string()).collect() })
    }

    /// True when the executable can be found.
    pub fn available(&self) -> bool {
        if self.program.components().count() > 1 {
            return self.program.is_file();
        }
        std::env::var_os("PATH")
            .map(|paths| std::env::split_paths(&paths).any(|d| d.join(&self.program).is_file()))
            .unwrap_or(false)
    }

    /// All named backends whose executable is present.
    pub fn detect() -> Vec<Backend> {
        BACKEND_NAMES.iter().filter_map(|n| Backend::named(n).ok()).filter(Backend::available).collect()
    }
}

/// Model parsing options.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParseOptions {
    /// Decimal digits kept when approximating algebraic values.
    pub approx_digits: u32,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { approx_digits: 30 }
    }
}

fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: signalling the process group created for this child.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
}

fn drain<R: Read + Send + 'static>(r: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut s = String::new();
        if let Some(mut r) = r {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            s = String::from_utf8_lossy(&buf).into_owned();
        }
        s
    })
}

/// Runs `doc` through `backend`, killing the solver's process group at the
/// time limit or when `cancel` becomes true.
pub fn run_backend(doc: &str, backend: &Backend, timeout: Duration, cancel: Option<&AtomicBool>, opts: ParseOptions) -> Result<SolverOutcome, SmtError> {
    let start = Instant::now();
    let mut child = Command::new(&backend.program)
        .args(&backend.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|source| SmtError::Spawn { program: backend.program.display().to_string(), source })?;
    let mut stdin = child.stdin.take();
    let input = doc.to_string();
    let writer = thread::spawn(move || {
        if let Some(s) = stdin.as_mut() {
            let _ = s.write_all(input.as_bytes());
        }
        drop(stdin);
    });
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());
    let mut killed = None;
    let exit = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if start.elapsed() >= timeout {
            kill_group(&mut child);
            killed = Some(SolverStatus::Timeout);
            break None;
        }
        if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            kill_group(&mut child);
            killed = Some(SolverStatus::Cancelled);
            break None;
        }
        thread::sleep(Duration::from_millis(5));
    };
    if killed.is_some() {
        let _ = child.wait();
    }
    let _ = writer.join();
    let raw = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    let elapsed = start.elapsed();
    if let Some(status) = killed {
        return Ok(SolverOutcome { status, model: None, approximate: false, raw, stderr, elapsed });
    }
    let _ = exit;
    let (status, model, approximate) = parse_output(&raw, opts);
    Ok(SolverOutcome { status, model, approximate, raw, stderr, elapsed })
}

/// Parses solver output: the first status line, then every
/// `(define-fun name () Real value)` of the model.
pub fn parse_output(raw: &str, opts: ParseOptions) -> (SolverStatus, Option<BTreeMap<String, Q>>, bool) {
    let status = raw
        .lines()
        .map(str::trim)
        .find_map(|l| match l {
            "sat" => Some(SolverStatus::Sat),
            "unsat" => Some(SolverStatus::Unsat),
            "unknown" => Some(SolverStatus::Unknown),
            _ => None,
        })
        .unwrap_or(SolverStatus::SolverError);
    if status != SolverStatus::Sat {
        return (status, None, false);
    }
    let mut model = BTreeMap::new();
    let mut approximate = false;
    let mut ok = true;
    for sx in parse_sexps(raw) {
        collect_defs(&sx, &mut model, &mut approximate, &mut ok, opts);
    }
    if !ok {
        return (SolverStatus::SolverError, None, false);
    }
    (status, Some(model), approximate)
}

#[derive(Clone, Debug, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn parse_sexps(text: &str) -> Vec<Sexp> {
    let chars: Vec<char> = text.chars().collect();
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '(' => {
                stack.push(Vec::new());
                i += 1;
            }
            ')' => {
                if stack.len() > 1 {
                    let done = stack.pop().unwrap_or_default();
                    if let Some(top) = stack.last_mut() {
                        top.push(Sexp::List(done));
                    }
                }
                i += 1;
            }
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '"' => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i] != '"' {
                    i += 1;
                }
                i += 1;
                let s: String = chars[start..i.min(chars.len())].iter().collect();
                if let Some(top) = stack.last_mut() {
                    top.push(Sexp::Atom(s));
                }
            }
            '|' => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i] != '|' {
                    i += 1;
                }
                let s: String = chars[start + 1..i.min(chars.len())].iter().collect();
                i += 1;
                if let Some(top) = stack.last_mut() {
                    top.push(Sexp::Atom(s));
                }
            }
            c if c.is_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"()|;\"".contains(chars[i]) {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                if let Some(top) = stack.last_mut() {
                    top.push(Sexp::Atom(s));
                }
            }
        }
    }
    while stack.len() > 1 {
        let done = stack.pop().unwrap_or_default();
        if let Some(top) = stack.last_mut() {
            top.push(Sexp::List(done));
        }
    }
    stack.pop().unwrap_or_default()
}

fn collect_defs(sx: &Sexp, model: &mut BTreeMap<String, Q>, approximate: &mut bool, ok: &mut bool, opts: ParseOptions) {
    let Sexp::List(items) = sx else { return };
    if let [Sexp::Atom(head), Sexp::Atom(name), Sexp::List(args), Sexp::Atom(sort), value] = items.as_slice() {
        if head == "define-fun" && args.is_empty() {
            if sort == "Real" || sort == "Int" {
                match value_of(value, opts) {
                    Some((v, approx)) => {
                        *approximate |= approx;
                        model.insert(name.clone(), v);
                    }
                    None => *ok = false,
                }
            }
            return;
        }
    }
    for it in items {
        collect_defs(it, model, approximate, ok, opts);
    }
}

fn value_of(sx: &Sexp, opts: ParseOptions) -> Option<(Q, bool)> {
    match sx {
        Sexp::Atom(a) => {
            if let Some(stripped) = a.strip_suffix('?') {
                return parse_rational(stripped).map(|v| (v, true));
            }
            let truncated = a.split_once('.').is_some_and(|(_, frac)| frac.bytes().any(|b| b != b'0'));
            parse_rational(a).map(|v| (v, truncated))
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), x] if op == "-" => value_of(x, opts).map(|(v, a)| (-v, a)),
            [Sexp::Atom(op), x, y] if op == "/" => {
                let (a, fa) = value_of(x, opts)?;
                let (b, fb) = value_of(y, opts)?;
                if b.is_zero() {
                    return None;
                }
                Some((a / b, fa || fb))
            }
            [Sexp::Atom(op), x, y] if op == "-" => {
                let (a, fa) = value_of(x, opts)?;
                let (b, fb) = value_of(y, opts)?;
                Some((a - b, fa || fb))
            }
            [Sexp::Atom(op), rest @ ..] if op == "+" || op == "*" => {
                let mut acc = if op == "+" { Q::zero() } else { Q::one() };
                let mut approx = false;
                for r in rest {
                    let (v, a) = value_of(r, opts)?;
                    approx |= a;
                    acc = if op == "+" { acc + v } else { acc * v };
                }
                Some((acc, approx))
            }
            [Sexp::Atom(op), poly, Sexp::Atom(k)] if op == "root-obj" => {
                let coeffs = univariate(poly)?;
                let k: usize = k.parse().ok()?;
                real_root(&coeffs, k, opts.approx_digits).map(|v| (v, true))
            }
            _ => None,
        },
    }
}

fn univariate(sx: &Sexp) -> Option<Vec<Q>> {
    fn add(a: &[Q], b: &[Q]) -> Vec<Q> {
        let n = a.len().max(b.len());
        (0..n).map(|i| a.get(i).cloned().unwrap_or_else(Q::zero) + b.get(i).cloned().unwrap_or_else(Q::zero)).collect()
    }
    fn mul(a: &[Q], b: &[Q]) -> Vec<Q> {
        let mut out = vec![Q::zero(); a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        out
    }
    match sx {
        Sexp::Atom(a) => match parse_rational(a) {
            Some(v) => Some(vec![v]),
            None => Some(vec![Q::zero(), Q::one()]),
        },
        Sexp::List(items) => {
            let (Sexp::Atom(op), rest) = items.split_first()? else { return None };
            let parts: Vec<Vec<Q>> = rest.iter().map(univariate).collect::<Option<_>>()?;
            match (op.as_str(), parts.len()) {
                ("-", 1) => Some(parts[0].iter().map(|c| -c.clone()).collect()),
                ("-", _) => {
                    let mut acc = parts[0].clone();
                    for p in &parts[1..] {
                        acc = add(&acc, &p.iter().map(|c| -c.clone()).collect::<Vec<_>>());
                    }
                    Some(acc)
                }
                ("+", _) => Some(parts.iter().fold(vec![Q::zero()], |a, b| add(&a, b))),
                ("*", _) => Some(parts.iter().fold(vec![Q::one()], |a, b| mul(&a, b))),
                ("/", 2) if parts[1].len() == 1 && !parts[1][0].is_zero() => Some(parts[0].iter().map(|c| c / &parts[1][0]).collect()),
                ("^", 2) => {
                    let e = parts[1].first()?.to_integer();
                    let e: u32 = e.try_into().ok()?;
                    let mut acc = vec![Q::one()];
                    for _ in 0..e {
                        acc = mul(&acc, &parts[0]);
                    }
                    Some(acc)
                }
                _ => None,
            }
        }
    }
}

fn trim(mut p: Vec<Q>) -> Vec<Q> {
    while p.len() > 1 && p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
    p
}

fn peval(p: &[Q], x: &Q) -> Q {
    p.iter().rev().fold(Q::zero(), |acc, c| acc * x + c)
}

fn prem(a: &[Q], b: &[Q]) -> Vec<Q> {
    let mut r = trim(a.to_vec());
    let b = trim(b.to_vec());
    let lead = b.last().cloned().unwrap_or_else(Q::one);
    while r.len() >= b.len() && !(r.len() == 1 && r[0].is_zero()) {
        let shift = r.len() - b.len();
        let f = r.last().cloned().unwrap_or_else(Q::zero) / &lead;
        for (i, c) in b.iter().enumerate() {
            r[i + shift] -= &f * c;
        }
        r.pop();
        if r.is_empty() {
            r.push(Q::zero());
        }
        r = trim(r);
    }
    r
}

fn sturm(p: &[Q]) -> Vec<Vec<Q>> {
    let p = trim(p.to_vec());
    let dp: Vec<Q> = trim(p.iter().enumerate().skip(1).map(|(i, c)| c * Q::from_integer(BigInt::from(i))).collect());
    let mut seq = vec![p, dp];
    loop {
        let n = seq.len();
        if seq[n - 1].len() == 1 && seq[n - 1][0].is_zero() {
            seq.pop();
            break;
        }
        if seq[n - 1].len() == 1 {
            break;
        }
        let r: Vec<Q> = prem(&seq[n - 2], &seq[n - 1]).into_iter().map(|c| -c).collect();
        seq.push(r);
    }
    seq
}

fn variations(seq: &[Vec<Q>], x: &Q) -> usize {
    let signs: Vec<i32> = seq
        .iter()
        .map(|p| peval(p, x))
        .filter(|v| !v.is_zero())
        .map(|v| if v.is_positive() { 1 } else { -1 })
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// The `k`-th smallest real root (1-based) of `Σ coeffs[i] x^i`, to within
/// `10^-digits`.
pub fn real_root(coeffs: &[Q], k: usize, digits: u32) -> Option<Q> {
    let p = trim(coeffs.to_vec());
    if p.len() < 2 || k == 0 {
        return None;
    }
    let lead = p.last()?.abs();
    let bound = Q::one() + p[..p.len() - 1].iter().map(|c| c.abs() / &lead).fold(Q::zero(), |a, b| if b > a { b } else { a });
    let seq = sturm(&p);
    let below = |x: &Q| variations(&seq, &(-bound.clone())) - variations(&seq, x);
    if below(&bound) < k {
        return None;
    }
    let (mut lo, mut hi) = (-bound.clone(), bound.clone());
    let eps = Q::new(BigInt::one(), num_traits::pow(BigInt::from(10), digits as usize));
    while &hi - &lo > eps {
        let mid = (&lo + &hi) / Q::from_integer(BigInt::from(2));
        if below(&mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// One portfolio job.
#[derive(Clone, Debug)]
pub struct Job {
    /// Script.
    pub doc: String,
    /// Solver.
    pub backend: Backend,
    /// Caller-defined tag.
    pub tag: String,
}

/// Record of one portfolio job.
#[derive(Debug)]
pub enum JobResult {
    /// Never started because a lower-indexed job had already won.
    Skipped,
    /// The solver could not be run.
    Failed(SmtError),
    /// The solver ran.
    Done(SolverOutcome),
}

/// Portfolio summary.
#[derive(Debug)]
pub struct PortfolioResult {
    /// Index of the winning job.
    pub winner: Option<usize>,
    /// Per-job records, in job order.
    pub results: Vec<JobResult>,
}

/// Runs jobs concurrently. A job wins when its outcome is Sat and `accept`
/// agrees; the lowest-indexed winning job is reported and every job with a
/// higher index is cancelled or skipped once a winner is known. Jobs that
/// would start after `deadline` are skipped and running ones are cut short.
pub fn portfolio(
    jobs: &[Job],
    timeout: Duration,
    deadline: Option<Instant>,
    concurrency: usize,
    opts: ParseOptions,
    accept: &(dyn Fn(usize, &SolverOutcome) -> bool + Sync),
) -> PortfolioResult {
    struct Shared {
        next: usize,
        best: Option<usize>,
    }
    let shared = Mutex::new(Shared { next: 0, best: None });
    let cancels: Vec<AtomicBool> = jobs.iter().map(|_| AtomicBool::new(false)).collect();
    let results: Vec<Mutex<Option<JobResult>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let workers = concurrency.max(1).min(jobs.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let idx = {
                    let Ok(mut sh) = shared.lock() else { return };
                    if sh.next >= jobs.len() {
                        return;
                    }
                    let i = sh.next;
                    sh.next += 1;
                    if sh.best.is_some_and(|b| i > b) {
                        if let Ok(mut r) = results[i].lock() {
                            *r = Some(JobResult::Skipped);
                        }
                        continue;
                    }
                    i
                };
                let job = &jobs[idx];
                let budget = match deadline {
                    Some(d) => d.saturating_duration_since(Instant::now()).min(timeout),
                    None => timeout,
                };
                if budget.is_zero() {
                    if let Ok(mut r) = results[idx].lock() {
                        *r = Some(JobResult::Skipped);
                    }
                    continue;
                }
                let rec = match run_backend(&job.doc, &job.backend, budget, Some(&cancels[idx]), opts) {
                    Err(e) => JobResult::Failed(e),
                    Ok(o) => {
                        if o.status == SolverStatus::Sat && accept(idx, &o) {
                            if let Ok(mut sh) = shared.lock() {
                                if sh.best.is_none_or(|b| idx < b) {
                                    sh.best = Some(idx);
                                    for c in &cancels[idx + 1..] {
                                        c.store(true, Ordering::Relaxed);
                                    }
                                }
                            }
                        }
                        JobResult::Done(o)
                    }
                };
                if let Ok(mut r) = results[idx].lock() {
                    *r = Some(rec);
                }
            });
        }
    });
    let winner = shared.lock().ok().and_then(|s| s.best);
    let results = results.into_iter().map(|m| m.into_inner().ok().flatten().unwrap_or(JobResult::Skipped)).collect();
    PortfolioResult { winner, results }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Rel;
    use crate::poly::{q, qf};
    use crate::psatz::{EConstraint, Method};

    fn system(cons: Vec<(UnknownPoly, Rel)>, names: &[&str]) -> ExistentialSystem {
        let mut unknowns = Unknowns::default();
        for n in names {
            unknowns.fresh(n.to_string());
        }
        ExistentialSystem {
            unknowns,
            template_unknowns: names.len(),
            constraints: cons.into_iter().map(|(poly, rel)| EConstraint { poly, rel, origin: "c".into() }).collect(),
            method: Method::Farkas,
        }
    }

    #[test]
    fn emits_declarations_and_assertions() {
        let l0 = UnknownPoly::var(0);
        let sys = system(vec![(l0.clone(), Rel::Ge), (l0.add_constant(&q(-1)), Rel::Eq)], &["l0"]);
        let doc = emit_smtlib(&sys);
        assert_eq!(doc.matches("(declare-const").count(), 1);
        assert_eq!(doc.matches("(assert").count(), 2);
        assert!(doc.contains("(set-logic QF_NRA)"));
        assert!(doc.contains("(assert (= (+ (- 1) l0) 0))"), "{doc}");
        assert!(doc.ends_with("(check-sat)\n(get-model)\n"));
        assert_eq!(doc, emit_smtlib(&sys));
    }

    #[test]
    fn prefix_products_and_fractions() {
        let p = UnknownPoly::var(0).mul(&UnknownPoly::var(1)).scale(&qf(-2, 3)).add_constant(&q(-1));
        let sys = system(vec![(p, Rel::Eq)], &["s1", "t 1"]);
        let doc = emit_smtlib(&sys);
        assert!(doc.contains("(* (- (/ 2 3)) s1 |t 1|)"), "{doc}");
    }

    #[test]
    fn parses_models() {
        let (st, m, approx) = parse_output("sat\n(\n  (define-fun l0 () Real 1.0)\n  (define-fun |a b| () Real (/ (- 1.0) 3.0))\n)\n", ParseOptions::default());
        assert_eq!(st, SolverStatus::Sat);
        let m = m.unwrap();
        assert_eq!(m["l0"], q(1));
        assert_eq!(m["a b"], qf(-1, 3));
        assert!(!approx);
        assert_eq!(parse_output("unsat\n", ParseOptions::default()).0, SolverStatus::Unsat);
        assert_eq!(parse_output("unknown\n(error \"no model\")", ParseOptions::default()).1, None);
        assert_eq!(parse_output("segfault", ParseOptions::default()).0, SolverStatus::SolverError);
        let (_, m, _) = parse_output("sat\n(model\n  (define-fun x () Real (- 3)))", ParseOptions::default());
        assert_eq!(m.unwrap()["x"], q(-3));
    }

    #[test]
    fn algebraic_values_are_approximated() {
        let out = "sat\n(\n  (define-fun x () Real\n    (root-obj (+ (^ x 2) (- 2)) 2))\n  (define-fun y () Real 0.5?)\n)";
        let (_, m, approx) = parse_output(out, ParseOptions { approx_digits: 12 });
        assert!(approx);
        let m = m.unwrap();
        let x = &m["x"];
        let err = (x * x - q(2)).abs();
        assert!(err < qf(1, 100_000_000_000), "{x}");
        assert!(x > &q(1));
        assert_eq!(m["y"], qf(1, 2));
        let neg = real_root(&[q(-2), q(0), q(1)], 1, 10).unwrap();
        assert!(neg < q(-1));
        assert!(real_root(&[q(1), q(0), q(1)], 1, 10).is_none());
    }

    #[test]
    fn truncated_decimals_are_approximate() {
        let (_, m, approx) = parse_output("sat\n(\n  (define-fun a () Real -1.414214)\n)", ParseOptions::default());
        assert!(approx);
        assert_eq!(m.unwrap()["a"], qf(-1_414_214, 1_000_000));
        let (_, _, approx) = parse_output("sat\n(\n  (define-fun a () Real 3.0)\n  (define-fun b () Real (/ 41 4))\n)", ParseOptions::default());
        assert!(!approx);
    }

    #[test]
    fn symbols_are_quoted_when_needed() {
        assert_eq!(smt_symbol("s_A_0"), "s_A_0");
        assert_eq!(smt_symbol("0x"), "|0x|");
        assert_eq!(smt_symbol("a|b"), "|a_b|");
        assert_eq!(smt_symbol("let"), "|let|");
    }

    #[test]
    fn missing_executable_is_an_error() {
        let b = Backend { name: "none".into(), program: "/nonexistent/solver".into(), args: vec![] };
        assert!(!b.available());
        assert!(matches!(run_backend("", &b, Duration::from_secs(1), None, ParseOptions::default()), Err(SmtError::Spawn { .. })));
        assert!(matches!(Backend::named("nope"), Err(SmtError::UnknownBackend(_))));
    }

    #[test]
    fn timeout_kills_the_child() {
        let b = Backend { name: "sleep".into(), program: "sh".into(), args: vec!["-c".into(), "sleep 30".into()] };
        let t = Duration::from_millis(200);
        let o = run_backend("", &b, t, None, ParseOptions::default()).unwrap();
        assert_eq!(o.status, SolverStatus::Timeout);
        assert!(o.elapsed >= t && o.elapsed < Duration::from_secs(10));
    }

    #[test]
    fn portfolio_prefers_lowest_accepted_index() {
        let echo = |text: &str| Backend { name: "echo".into(), program: "sh".into(), args: vec!["-c".into(), format!("cat >/dev/null; printf '{text}'")] };
        let jobs = vec![
            Job { doc: String::new(), backend: echo("unsat\\n"), tag: "a".into() },
            Job { doc: String::new(), backend: echo("sat\\n(model (define-fun x () Real 1))\\n"), tag: "b".into() },
            Job { doc: String::new(), backend: echo("sat\\n(model (define-fun x () Real 2))\\n"), tag: "c".into() },
        ];
        let r = portfolio(&jobs, Duration::from_secs(5), None, 3, ParseOptions::default(), &|_, _| true);
        assert_eq!(r.winner, Some(1));
        let r = portfolio(&jobs, Duration::from_secs(5), None, 1, ParseOptions::default(), &|i, _| i == 2);
        assert_eq!(r.winner, Some(2));
    }

    #[test]
    fn installed_solvers_round_trip() {
        let p = UnknownPoly::var(0).mul(&UnknownPoly::var(1)).add_constant(&q(-1));
        let sys = system(vec![(p, Rel::Eq), (UnknownPoly::var(0).add_constant(&q(-3)), Rel::Eq)], &["s1", "t1"]);
        let doc = emit_smtlib(&sys);
        for b in Backend::detect() {
            let o = run_backend(&doc, &b, Duration::from_secs(30), None, ParseOptions::default()).unwrap();
            assert_eq!(o.status, SolverStatus::Sat, "{}: {}", b.name, o.raw);
            let m = o.model_vars(&sys.unknowns);
            assert_eq!(m.get(&1), Some(&qf(1, 3)), "{}", b.name);
            assert!(sys.check_exact(&m).is_ok());
        }
    }
}
