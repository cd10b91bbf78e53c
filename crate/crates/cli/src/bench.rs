//! Batch runs with timing and reference errors.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::{load_config, ReferenceSpec, RunConfig};
use crate::csv::fmt_f64;
use crate::reference::ReferenceCache;
use crate::runner::{run_with, RunOptions};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub name: String,
    pub problem: String,
    pub scheme: String,
    pub ns: usize,
    pub nr: usize,
    pub dt: String,
    pub seconds: Option<f64>,
    pub error: Option<f64>,
    /// `ok` or the failure message.
    pub status: String,
}

impl BenchRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Run every config, at most `jobs` at a time. Shared references are computed
/// first, serially, so that no timed run includes reference work. A failing
/// run yields a row with its error message; the others proceed.
pub fn bench(configs: &[RunConfig], jobs: usize, opts: &RunOptions) -> Vec<BenchRow> {
    let cache = opts.cache.clone().unwrap_or_else(ReferenceCache::from_env);
    let mut ref_failures = vec![None; configs.len()];
    for (k, cfg) in configs.iter().enumerate() {
        if matches!(cfg.reference, Some(ReferenceSpec::Auto { .. })) {
            if let Err(e) = cache.load_or_compute(cfg, opts.progress) {
                ref_failures[k] = Some(format!("reference failed: {e}"));
            }
        }
    }
    let run_opts = RunOptions {
        cache: Some(cache),
        ..opts.clone()
    };
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; configs.len()]);
    let workers = jobs.clamp(1, configs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(k) else { break };
                let mut row = BenchRow {
                    name: cfg.name.clone(),
                    problem: cfg.problem.to_string(),
                    scheme: cfg.scheme.to_string(),
                    ns: cfg.ns,
                    nr: cfg.nr,
                    dt: cfg.dt_label(),
                    seconds: None,
                    error: None,
                    status: "ok".into(),
                };
                if let Some(msg) = &ref_failures[k] {
                    row.status = msg.clone();
                } else {
                    match run_with(cfg, &run_opts) {
                        Ok(report) => {
                            row.seconds = Some(report.wall_seconds);
                            row.error = report.relative_error;
                        }
                        Err(e) => row.status = e.to_string(),
                    }
                }
                rows.lock().unwrap()[k] = Some(row);
            });
        }
    });
    rows.into_inner().unwrap().into_iter().map(|r| r.expect("every row filled")).collect()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("name,problem,scheme,ns,nr,dt,seconds,error,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            quote(&r.name),
            r.problem,
            r.scheme,
            r.ns,
            r.nr,
            r.dt,
            r.seconds.map(fmt_f64).unwrap_or_default(),
            r.error.map(fmt_f64).unwrap_or_default(),
            quote(&r.status)
        ));
    }
    out
}

/// All `*.conf` files of a directory, sorted by file name.
pub fn load_config_dir(dir: &Path) -> Result<Vec<RunConfig>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "conf") {
            paths.push(path);
        }
    }
    paths.sort();
    paths.iter().map(|p| load_config(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg(name: &str, dt: &str) -> RunConfig {
        parse_config(&format!(
            "name = {name}\nproblem = 1d\nscheme = explicit\nns = 10\ndt = {dt}\nt_end = 0.05\nt0 = 5\nk_par = 1\ngamma = 2\n"
        ))
        .unwrap()
    }

    #[test]
    fn single_config_one_row() {
        let rows = bench(&[cfg("a", "cfl")], 4, &RunOptions::default());
        assert_eq!(rows.len(), 1);
        assert!(rows[0].is_ok());
        assert!(rows[0].seconds.is_some());
    }

    #[test]
    fn failures_are_per_row() {
        let rows = bench(&[cfg("bad", "1e-2"), cfg("good", "cfl")], 2, &RunOptions::default());
        assert!(!rows[0].is_ok());
        assert!(rows[0].status.contains("blow"), "{}", rows[0].status);
        assert!(rows[1].is_ok());
        let text = bench_csv(&rows);
        assert_eq!(text.lines().count(), 3);
    }
}
