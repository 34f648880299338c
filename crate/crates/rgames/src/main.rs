use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rgames::certify::{
    certificate_from_json, check_certificate, finite_oracle, simulate_play, validate_plays, CertificateFile, CheckConfig, PlayConfig, SafePolicy,
    Winner, DEFAULT_STATE_CAP,
};
use rgames::cli::{bench_command, load_manifest, parse_param, prepare_game, render_table, rows_json, solve, RunConfig, RunStatus, EMIT_ONLY};
use rgames::game::ParamSetting;
use rgames::poly::q_to_string;
use rgames::psatz::{Method, SosConfig};
use rgames::smt::Backend;

#[derive(Parser)]
#[command(name = "rgames", version, about = "Ranking-certificate synthesis for polynomial reachability games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for a certificate over a degree ladder.
    Solve(SolveArgs),
    /// Check a certificate file by sampling.
    Check(CheckArgs),
    /// Simulate plays under a certificate file.
    Play(PlayArgs),
    /// Solve a finite game exactly.
    Oracle(OracleArgs),
    /// Write the SMT documents of one degree.
    Emit(EmitArgs),
    /// Run a benchmark manifest.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct GameOpts {
    /// Game file.
    game: PathBuf,
    /// Expand the target by one predecessor step.
    #[arg(long)]
    pre: bool,
    /// Parameter pin, NAME=RATIONAL or NAME=symbolic.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Seed for every randomized step.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Farkas,
    Putinar,
}

#[derive(Args)]
struct EncodeOpts {
    /// Multiplier degree of the Putinar translation.
    #[arg(long = "sos-degree", default_value_t = 2)]
    sos_degree: u32,
    /// Squares per multiplier (defaults to the basis size).
    #[arg(long)]
    squares: Option<usize>,
    /// Strategy template degree (defaults to the ranking degree).
    #[arg(long = "strategy-degree")]
    strategy_degree: Option<u32>,
    /// Force one translation.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Maximum candidate systems per degree.
    #[arg(long = "candidate-cap", default_value_t = 64)]
    candidate_cap: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Expect {
    Certified,
    Unknown,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    game: GameOpts,
    #[command(flatten)]
    enc: EncodeOpts,
    /// Degree ladder.
    #[arg(long = "degree", value_delimiter = ',', default_values_t = [1u32, 2])]
    degrees: Vec<u32>,
    /// Backends (z3, mathsat, cvc5, yices, or smtlib-out to only write files).
    #[arg(long = "backend", value_delimiter = ',')]
    backends: Vec<String>,
    /// Seconds per solver run.
    #[arg(long, default_value_t = 300.0)]
    timeout: f64,
    /// Seconds for the whole run.
    #[arg(long)]
    deadline: Option<f64>,
    /// Run directory.
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
    /// Samples of the mandatory certificate check.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Simulated plays of the mandatory check.
    #[arg(long, default_value_t = 1000)]
    plays: usize,
    /// Step budget per play.
    #[arg(long = "max-steps", default_value_t = 10_000)]
    max_steps: usize,
    /// Concurrent solver processes.
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the implications next to each SMT document.
    #[arg(long = "dump-implications")]
    dump_implications: bool,
    /// Exit with 0 when this status is reached.
    #[arg(long, value_enum)]
    expect: Option<Expect>,
}

#[derive(Args)]
struct CertOpts {
    #[command(flatten)]
    game: GameOpts,
    /// Certificate file written by `solve`.
    cert: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    cert: CertOpts,
    /// Sampled states.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Random,
    Greedy,
}

#[derive(Args)]
struct PlayArgs {
    #[command(flatten)]
    cert: CertOpts,
    /// SAFE policy.
    #[arg(long, value_enum, default_value = "random")]
    policy: PolicyArg,
    /// Number of plays.
    #[arg(long, default_value_t = 1000)]
    plays: usize,
    /// Step budget per play.
    #[arg(long = "max-steps", default_value_t = 10_000)]
    max_steps: usize,
    /// Write the transcript of the first play here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    game: GameOpts,
    /// Maximum explored states.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    cap: usize,
}

#[derive(Args)]
struct EmitArgs {
    #[command(flatten)]
    game: GameOpts,
    #[command(flatten)]
    enc: EncodeOpts,
    /// Template degree.
    #[arg(long, default_value_t = 1)]
    degree: u32,
    /// Output file; further candidates go to `<stem>_<i>.smt2`.
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML manifest.
    manifest: PathBuf,
    /// Run directory for per-row artifacts.
    #[arg(short = 'o', long = "out")]
    out: Option<PathBuf>,
    /// Write the JSON results here instead of standard output.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Run rows in parallel.
    #[arg(long)]
    parallel: bool,
}

const EXIT_OK: u8 = 0;
const EXIT_UNKNOWN: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn params_of(list: &[String]) -> Result<BTreeMap<String, ParamSetting>, String> {
    list.iter().map(|p| parse_param(p).map_err(|e| e.to_string())).collect()
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn seconds(v: f64, what: &str) -> Result<Duration, String> {
    Duration::try_from_secs_f64(v).map_err(|e| format!("bad {what}: {e}"))
}

fn encode_config(enc: &EncodeOpts, cfg: &mut RunConfig) {
    cfg.sos = SosConfig { multiplier_degree: enc.sos_degree, squares: enc.squares };
    cfg.strategy_degree = enc.strategy_degree;
    cfg.method = enc.method.map(|m| match m {
        MethodArg::Farkas => Method::Farkas,
        MethodArg::Putinar => Method::Putinar,
    });
    cfg.candidate_cap = enc.candidate_cap;
}

fn run_solve(a: SolveArgs) -> Result<u8, String> {
    let text = read(&a.game.game)?;
    let mut cfg = RunConfig {
        degrees: a.degrees,
        pre: a.game.pre,
        params: params_of(&a.game.params)?,
        seed: a.game.seed,
        timeout: seconds(a.timeout, "timeout")?,
        deadline: a.deadline.map(|d| seconds(d, "deadline")).transpose()?,
        out_dir: a.out.clone(),
        check_samples: a.samples,
        plays: a.plays,
        max_steps: a.max_steps,
        dump_implications: a.dump_implications,
        ..RunConfig::default()
    };
    if !a.backends.is_empty() {
        cfg.backends = a.backends;
    }
    if let Some(j) = a.jobs {
        cfg.concurrency = j.max(1);
    }
    encode_config(&a.enc, &mut cfg);
    let r = solve(&text, &cfg);
    println!("status: {}", r.status);
    if let Some(d) = r.degree {
        println!("degree: {d}");
    }
    if let (Some(sol), Some(g)) = (&r.solution, &r.game) {
        if let Some(fs) = sol.certificate.polys() {
            for (l, p) in fs.iter().enumerate() {
                println!("f[{}] = {}", g.labels[l].name, p.render(&g.namer()));
            }
        }
        if sol.approximate {
            println!("note: solver values were approximate; the exact recheck passed after rounding");
        }
    }
    for d in &r.diagnostics {
        eprintln!("{d}");
    }
    if let Some(dir) = &a.out {
        println!("artifacts: {}", dir.display());
    }
    Ok(match (r.status, a.expect) {
        (RunStatus::Error, _) => EXIT_ERROR,
        (RunStatus::Certified, _) => EXIT_OK,
        (RunStatus::Unknown, Some(Expect::Unknown)) => EXIT_OK,
        (RunStatus::Unknown, _) => EXIT_UNKNOWN,
    })
}

struct Loaded {
    game: rgames::game::GameSpec,
    solution: rgames::certify::Solution,
    pre: bool,
}

fn load_cert(c: &CertOpts) -> Result<Loaded, String> {
    let text = read(&c.game.game)?;
    let file: CertificateFile = serde_json::from_str(&read(&c.cert)?).map_err(|e| format!("cannot parse {}: {e}", c.cert.display()))?;
    let pre = c.game.pre || file.stats.get("pre").and_then(|v| v.as_bool()).unwrap_or(false);
    let mut params = BTreeMap::new();
    if let Some(obj) = file.stats.get("params").and_then(|v| v.as_object()) {
        for (k, v) in obj {
            if let Some(s) = v.as_str() {
                let (k, v) = parse_param(&format!("{k}={s}")).map_err(|e| e.to_string())?;
                params.insert(k, v);
            }
        }
    }
    params.extend(params_of(&c.game.params)?);
    let seed = file.stats.get("seed").and_then(|v| v.as_u64()).unwrap_or(c.game.seed);
    let game = prepare_game(&text, &params, pre, seed)?;
    let mut solution = certificate_from_json(&game, &file).map_err(|e| e.to_string())?;
    solution.strategy.pre_move_resolution = pre;
    solution.strategy.backends = Backend::detect();
    Ok(Loaded { game, solution, pre })
}

fn run_check(a: CheckArgs) -> Result<u8, String> {
    let l = load_cert(&a.cert)?;
    let cfg = CheckConfig {
        samples: a.samples,
        seed: a.cert.game.seed,
        slack: CheckConfig::slack_for(l.solution.approximate),
        ..CheckConfig::default()
    };
    let report = check_certificate(&l.game, &l.solution.certificate, &l.solution.strategy, &cfg);
    println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
    println!("violations: {}", report.violations.len());
    Ok(if report.passed() { EXIT_OK } else { EXIT_UNKNOWN })
}

fn run_play(a: PlayArgs) -> Result<u8, String> {
    let l = load_cert(&a.cert)?;
    let policy = match a.policy {
        PolicyArg::Random => SafePolicy::Random,
        PolicyArg::Greedy => SafePolicy::Greedy { n: 64 },
    };
    let seed = a.cert.game.seed;
    let (strat, cert) = (&l.solution.strategy, &l.solution.certificate);
    let summary = validate_plays(&l.game, strat, cert, &policy, a.plays, seed, a.max_steps);
    if let Some(path) = &a.transcript {
        let cfg = PlayConfig { max_steps: a.max_steps, seed, ..PlayConfig::default() };
        let play = simulate_play(&l.game, strat, cert, &policy, &BTreeMap::new(), &cfg);
        std::fs::write(path, serde_json::to_string_pretty(&play.transcript(&l.game)).unwrap_or_default())
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
    println!(
        "reached {}/{} plays, {} within the step bound{}",
        summary.reached,
        summary.plays,
        summary.within_bound,
        if l.pre { " (expanded target)" } else { "" }
    );
    Ok(if summary.passed() { EXIT_OK } else { EXIT_UNKNOWN })
}

fn run_oracle(a: OracleArgs) -> Result<u8, String> {
    let text = read(&a.game.game)?;
    let g = prepare_game(&text, &params_of(&a.game.params)?, false, a.game.seed)?;
    let r = finite_oracle(&g, a.cap).map_err(|e| e.to_string())?;
    let s0 = g.initial_state(&BTreeMap::new());
    println!("explored states: {}", r.states.len());
    match r.winner {
        Winner::Reach => {
            let rank = r.ranking.get(&s0).map(q_to_string).unwrap_or_default();
            println!("REACH player wins from the initial state in at most {rank} step{}", if rank == "1" { "" } else { "s" });
        }
        Winner::Safe => println!("REACH player does not win from the initial state"),
    }
    Ok(EXIT_OK)
}

fn run_emit(a: EmitArgs) -> Result<u8, String> {
    let text = read(&a.game.game)?;
    let mut cfg = RunConfig {
        degrees: vec![a.degree],
        pre: a.game.pre,
        params: params_of(&a.game.params)?,
        seed: a.game.seed,
        backends: vec![EMIT_ONLY.into()],
        ..RunConfig::default()
    };
    encode_config(&a.enc, &mut cfg);
    let r = solve(&text, &cfg);
    if r.status == RunStatus::Error {
        return Err(r.diagnostics.join("\n"));
    }
    let docs = r.documents.first().map(|(_, d)| d.clone()).unwrap_or_default();
    match &a.out {
        None => {
            let mut out = std::io::stdout().lock();
            for d in &docs {
                if writeln!(out, "{d}").is_err() {
                    break;
                }
            }
        }
        Some(path) => {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "candidate".into());
            for (i, d) in docs.iter().enumerate() {
                let p = if i == 0 { path.clone() } else { path.with_file_name(format!("{stem}_{i}.smt2")) };
                std::fs::write(&p, d).map_err(|e| format!("cannot write {}: {e}", p.display()))?;
                println!("{}", p.display());
            }
        }
    }
    Ok(EXIT_OK)
}

fn run_bench(a: BenchArgs) -> Result<u8, String> {
    let mut manifest = load_manifest(&a.manifest)?;
    manifest.parallel |= a.parallel;
    let dir = a.manifest.parent().unwrap_or(Path::new("."));
    let base = RunConfig { out_dir: a.out, ..RunConfig::default() };
    let rows = bench_command(&manifest, dir, &base);
    print!("{}", render_table(&rows));
    let json = serde_json::to_string_pretty(&rows_json(&rows)).unwrap_or_default();
    match &a.json {
        Some(p) => std::fs::write(p, json).map_err(|e| format!("cannot write {}: {e}", p.display()))?,
        None => println!("{json}"),
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Check(a) => run_check(a),
        Command::Play(a) => run_play(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Emit(a) => run_emit(a),
        Command::Bench(a) => run_bench(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            println!("status: ERROR");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
