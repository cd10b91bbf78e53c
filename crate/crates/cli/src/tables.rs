//! Regenerate the timing and error tables of the experiments.

use std::collections::HashMap;
use std::path::Path;

use solheat_core::Scheme;

use crate::bench::{bench, bench_csv, BenchRow};
use crate::config::{Problem, RunConfig};
use crate::csv::fmt_f64;
use crate::presets::{edge_2d, limiter_1d};
use crate::runner::RunOptions;
use crate::CliError;

const DT_1D: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
const DT_2D: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
const MESH_SPLIT: [usize; 4] = [50, 100, 300, 500];

/// 1: 1D timings, 2: 1D errors, 3: 2D timings, 4: 2D errors,
/// 5: split vs unsplit timings, 6: split vs unsplit errors.
pub fn table_configs(which: u8) -> Vec<RunConfig> {
    match which {
        1 | 2 => [Scheme::Implicit, Scheme::Imex]
            .iter()
            .flat_map(|&s| [50, 150].into_iter().flat_map(move |n| DT_1D.map(|dt| limiter_1d(s, n, Some(dt)))))
            .collect(),
        3 | 4 => [Scheme::Implicit, Scheme::Imex]
            .iter()
            .flat_map(|&s| DT_2D.map(|dt| edge_2d(Problem::TwoD, s, 100, Some(dt))))
            .collect(),
        5 => [Problem::TwoDUnsplit, Problem::TwoD]
            .iter()
            .flat_map(|&p| {
                MESH_SPLIT.map(|n| {
                    let mut c = edge_2d(p, Scheme::Imex, n, Some(1e-3));
                    c.reference = None;
                    c
                })
            })
            .collect(),
        6 => vec![
            edge_2d(Problem::TwoD, Scheme::Implicit, 100, Some(1e-3)),
            edge_2d(Problem::TwoD, Scheme::Imex, 100, Some(1e-3)),
            edge_2d(Problem::TwoDUnsplit, Scheme::Implicit, 100, Some(1e-3)),
            edge_2d(Problem::TwoDUnsplit, Scheme::Imex, 100, Some(1e-3)),
        ],
        _ => Vec::new(),
    }
}

fn cell(row: Option<&BenchRow>, seconds: bool) -> String {
    match row {
        Some(r) if r.is_ok() => {
            let v = if seconds { r.seconds } else { r.error };
            v.map(fmt_f64).unwrap_or_default()
        }
        Some(_) => "failed".into(),
        None => String::new(),
    }
}

/// Table-layout CSV for one table from finished runs keyed by name.
pub fn layout(which: u8, rows: &HashMap<String, BenchRow>) -> String {
    let get = |c: &RunConfig| rows.get(&c.name);
    let cfgs = table_configs(which);
    let seconds = matches!(which, 1 | 3 | 5);
    let mut out = String::new();
    match which {
        1 | 2 => {
            out.push_str("scheme,ns,dt=1e-2,dt=1e-3,dt=1e-4,dt=1e-5\n");
            for chunk in cfgs.chunks(4) {
                let cells: Vec<String> = chunk.iter().map(|c| cell(get(c), seconds)).collect();
                out.push_str(&format!("{},{},{}\n", chunk[0].scheme, chunk[0].ns, cells.join(",")));
            }
        }
        3 | 4 => {
            out.push_str("scheme,dt=1e-1,dt=1e-2,dt=1e-3,dt=1e-4\n");
            for chunk in cfgs.chunks(4) {
                let cells: Vec<String> = chunk.iter().map(|c| cell(get(c), seconds)).collect();
                out.push_str(&format!("{},{}\n", chunk[0].scheme, cells.join(",")));
            }
        }
        5 => {
            out.push_str("scheme,50x50,100x100,300x300,500x500\n");
            for (label, chunk) in ["imex-unsplit", "imex-split"].iter().zip(cfgs.chunks(4)) {
                let cells: Vec<String> = chunk.iter().map(|c| cell(get(c), seconds)).collect();
                out.push_str(&format!("{label},{}\n", cells.join(",")));
            }
        }
        6 => {
            out.push_str("split-implicit,split-imex,implicit,imex\n");
            let cells: Vec<String> = cfgs.iter().map(|c| cell(get(c), false)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        _ => {}
    }
    out
}

/// Parse `1`..`6` or `all`.
pub fn parse_which(which: &str) -> Option<Vec<u8>> {
    match which {
        "all" => Some((1..=6).collect()),
        w => w.parse::<u8>().ok().filter(|n| (1..=6).contains(n)).map(|n| vec![n]),
    }
}

/// Run what the requested tables need (each distinct run once) and write
/// `table<N>.csv` plus `table<N>_runs.csv` into `out`.
pub fn write_tables(which: &[u8], out: &Path, jobs: usize, opts: &RunOptions) -> Result<Vec<BenchRow>, CliError> {
    let mut configs: Vec<RunConfig> = Vec::new();
    for &w in which {
        for c in table_configs(w) {
            if !configs.iter().any(|d| d.name == c.name) {
                configs.push(c);
            }
        }
    }
    let rows = bench(&configs, jobs, opts);
    let by_name: HashMap<String, BenchRow> = rows.iter().map(|r| (r.name.clone(), r.clone())).collect();
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for &w in which {
        let path = out.join(format!("table{w}.csv"));
        std::fs::write(&path, layout(w, &by_name)).map_err(|e| CliError::io(&path, e))?;
        let mine: Vec<BenchRow> = table_configs(w).iter().filter_map(|c| by_name.get(&c.name).cloned()).collect();
        let path = out.join(format!("table{w}_runs.csv"));
        std::fs::write(&path, bench_csv(&mine)).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(rows)
}
