//! Benchmark suites described by TOML manifests.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{parse_param, solve, RunConfig, RunStatus};
use crate::psatz::SosConfig;

/// One manifest row.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRow {
    /// Row name.
    pub name: String,
    /// Game file, relative to the manifest.
    pub game: PathBuf,
    /// Degree ladder.
    pub degrees: Option<Vec<u32>>,
    /// Target expansion.
    #[serde(default)]
    pub pre: bool,
    /// Parameter pins as `NAME=VALUE`.
    #[serde(default)]
    pub params: Vec<String>,
    /// Seconds per solver run.
    pub timeout: Option<f64>,
    /// Seconds for the whole row.
    pub deadline: Option<f64>,
    /// Expected status.
    pub expect: Option<String>,
    /// Backend names.
    pub backends: Option<Vec<String>>,
    /// Multiplier degree.
    pub sos_degree: Option<u32>,
    /// Checker samples.
    pub samples: Option<usize>,
    /// Simulated plays.
    pub plays: Option<usize>,
    /// Seed.
    pub seed: Option<u64>,
}

/// A suite.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Run rows in parallel.
    #[serde(default)]
    pub parallel: bool,
    /// Rows.
    #[serde(default)]
    pub row: Vec<BenchRow>,
}

/// Outcome of one row.
#[derive(Clone, Debug, Serialize)]
pub struct RowResult {
    /// Row name.
    pub name: String,
    /// Verdict.
    pub status: RunStatus,
    /// Expected verdict, when given.
    pub expected: Option<String>,
    /// Verdict equals the expectation.
    pub as_expected: Option<bool>,
    /// Wall time.
    pub seconds: f64,
    /// Certificate degree.
    pub degree: Option<u32>,
    /// First diagnostic.
    pub note: Option<String>,
}

/// Reads a manifest file.
pub fn load_manifest(path: &Path) -> Result<Manifest, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
}

fn row_config(row: &BenchRow, base: &RunConfig) -> Result<RunConfig, String> {
    let mut cfg = base.clone();
    if let Some(d) = &row.degrees {
        cfg.degrees = d.clone();
    }
    cfg.pre = row.pre;
    for p in &row.params {
        let (k, v) = parse_param(p).map_err(|e| e.to_string())?;
        cfg.params.insert(k, v);
    }
    if let Some(t) = row.timeout {
        cfg.timeout = Duration::try_from_secs_f64(t).map_err(|e| format!("bad timeout: {e}"))?;
    }
    if let Some(d) = row.deadline {
        cfg.deadline = Some(Duration::try_from_secs_f64(d).map_err(|e| format!("bad deadline: {e}"))?);
    }
    if let Some(b) = &row.backends {
        cfg.backends = b.clone();
    }
    if let Some(m) = row.sos_degree {
        cfg.sos = SosConfig { multiplier_degree: m, ..cfg.sos };
    }
    if let Some(s) = row.samples {
        cfg.check_samples = s;
    }
    if let Some(p) = row.plays {
        cfg.plays = p;
    }
    if let Some(s) = row.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run_row(row: &BenchRow, dir: &Path, base: &RunConfig) -> RowResult {
    let start = Instant::now();
    let done = |status: RunStatus, degree: Option<u32>, note: Option<String>| {
        let as_expected = row.expect.as_ref().map(|e| e.eq_ignore_ascii_case(&status.to_string()));
        RowResult { name: row.name.clone(), status, expected: row.expect.clone(), as_expected, seconds: start.elapsed().as_secs_f64(), degree, note }
    };
    let mut cfg = match row_config(row, base) {
        Ok(c) => c,
        Err(e) => return done(RunStatus::Error, None, Some(e)),
    };
    if let Some(out) = &base.out_dir {
        cfg.out_dir = Some(out.join(&row.name));
    }
    let path = dir.join(&row.game);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return done(RunStatus::Error, None, Some(format!("cannot read {}: {e}", path.display()))),
    };
    let r = solve(&text, &cfg);
    done(r.status, r.degree, r.diagnostics.first().cloned())
}

/// Runs every row of a manifest; `base` supplies defaults for fields the
/// rows leave out. Rows keep manifest order.
pub fn bench_command(manifest: &Manifest, manifest_dir: &Path, base: &RunConfig) -> Vec<RowResult> {
    if manifest.parallel {
        crate::par::map(&manifest.row, |row| run_row(row, manifest_dir, base))
    } else {
        manifest.row.iter().map(|row| run_row(row, manifest_dir, base)).collect()
    }
}

/// Aligned text table of row results.
pub fn render_table(rows: &[RowResult]) -> String {
    let headers = ["benchmark", "status", "expected", "seconds", "degree"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.status.to_string(),
                r.expected.clone().unwrap_or_else(|| "-".into()),
                format!("{:.2}", r.seconds),
                r.degree.map_or("-".into(), |d| d.to_string()),
            ]
        })
        .collect();
    let mut width: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: &[String]| row.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string();
    let mut out = line(&headers.map(String::from));
    out.push('\n');
    for row in &cells {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// Rows as JSON.
pub fn rows_json(rows: &[RowResult]) -> serde_json::Value {
    serde_json::json!({ "rows": rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::EMIT_ONLY;

    #[test]
    fn empty_manifest_gives_empty_table() {
        let m: Manifest = toml::from_str("").unwrap();
        let rows = bench_command(&m, Path::new("."), &RunConfig::default());
        assert!(rows.is_empty());
        assert_eq!(render_table(&rows), "benchmark  status  expected  seconds  degree\n");
    }

    #[test]
    fn shipped_manifest_is_consistent() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks");
        let m = load_manifest(&dir.join("manifest.toml")).unwrap();
        assert!(m.row.len() >= 9);
        for row in &m.row {
            let cfg = row_config(row, &RunConfig::default()).unwrap();
            let text = std::fs::read_to_string(dir.join(&row.game)).unwrap();
            crate::cli::prepare_game(&text, &cfg.params, false, cfg.seed).unwrap_or_else(|e| panic!("{}: {e}", row.name));
            if let Some(e) = &row.expect {
                assert!(["CERTIFIED", "UNKNOWN", "ERROR"].contains(&e.as_str()), "{}", row.name);
            }
        }
    }

    #[test]
    fn unreadable_row_is_isolated() {
        let dir = std::env::temp_dir().join(format!("rgames-bench-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            dir.join("ok.game"),
            "game \"ok\"\nvars x\ndomain: 0 <= x <= 3\nlabel R reach\ninit R: x = 2\ntrans R -> R when true update x' = x - 1\ntarget R: x <= 0\n",
        )
        .unwrap();
        let m: Manifest = toml::from_str(&format!(
            "[[row]]\nname = \"missing\"\ngame = \"nope.game\"\n[[row]]\nname = \"ok\"\ngame = \"ok.game\"\ndegrees = [1]\nbackends = [\"{EMIT_ONLY}\"]\nexpect = \"UNKNOWN\"\n"
        ))
        .unwrap();
        let rows = bench_command(&m, &dir, &RunConfig::default());
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].status, RunStatus::Error);
        assert_eq!(rows[1].status, RunStatus::Unknown);
        assert_eq!(rows[1].as_expected, Some(true));
        let table = render_table(&rows);
        let cols: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
        assert_eq!(&cols[..3], &["missing", "ERROR", "-"]);
        let header = table.lines().next().unwrap();
        assert_eq!(header.find("status"), table.lines().nth(2).unwrap().find("UNKNOWN"));
        let _ = std::fs::remove_dir_all(&dir);
    }
}
