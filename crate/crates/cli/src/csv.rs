//! Plain CSV for fields and time series, floats at 17 significant digits.

use std::fmt::Write as _;

use solheat_core::diagnostics::{EnergyBreakdown, TimeSample};
use solheat_core::{Field2D, Mesh1D, Mesh2D, MeshField};

/// Lossless text form of a float: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn field_to_csv(field: &MeshField) -> String {
    let mut out = String::new();
    match field {
        MeshField::One(m, t) => {
            out.push_str("s,T\n");
            for (s, v) in m.centers().iter().zip(t) {
                let _ = writeln!(out, "{},{}", fmt_f64(*s), fmt_f64(*v));
            }
        }
        MeshField::Two(m, t) => {
            out.push_str("s,r,T\n");
            let (sc, rc) = (m.s().centers(), m.r().centers());
            for (j, r) in rc.iter().enumerate() {
                for (i, s) in sc.iter().enumerate() {
                    let _ = writeln!(out, "{},{},{}", fmt_f64(*s), fmt_f64(*r), fmt_f64(t[(i, j)]));
                }
            }
        }
    }
    out
}

fn parse_row(line: &str, width: usize, lineno: usize) -> Result<Vec<f64>, String> {
    let vals: Result<Vec<f64>, _> = line.split(',').map(|x| x.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == width => Ok(v),
        Ok(v) => Err(format!("line {lineno}: expected {width} fields, found {}", v.len())),
        Err(e) => Err(format!("line {lineno}: {e}")),
    }
}

fn check_uniform(centers: &[f64], axis: &str) -> Result<(), String> {
    let m = Mesh1D::uniform(centers.len()).map_err(|e| e.to_string())?;
    for (a, b) in centers.iter().zip(m.centers()) {
        if (a - b).abs() > 1e-12 {
            return Err(format!("{axis} coordinates are not cell centers of a uniform mesh"));
        }
    }
    Ok(())
}

/// Inverse of [`field_to_csv`] for fields on uniform meshes.
pub fn field_from_csv(text: &str) -> Result<MeshField, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty field file")?.trim();
    match header {
        "s,T" => {
            let mut s = Vec::new();
            let mut t = Vec::new();
            for (k, line) in lines.enumerate() {
                let v = parse_row(line, 2, k + 2)?;
                s.push(v[0]);
                t.push(v[1]);
            }
            check_uniform(&s, "s")?;
            Ok(MeshField::One(Mesh1D::uniform(s.len()).map_err(|e| e.to_string())?, t))
        }
        "s,r,T" => {
            let mut rows = Vec::new();
            for (k, line) in lines.enumerate() {
                rows.push(parse_row(line, 3, k + 2)?);
            }
            let r0 = rows.first().ok_or("field file has no data")?[1];
            let ns = rows.iter().take_while(|v| v[1] == r0).count();
            if rows.len() % ns != 0 {
                return Err("row count is not a multiple of the s-dimension".into());
            }
            let nr = rows.len() / ns;
            let s: Vec<f64> = rows[..ns].iter().map(|v| v[0]).collect();
            let r: Vec<f64> = rows.iter().step_by(ns).map(|v| v[1]).collect();
            check_uniform(&s, "s")?;
            check_uniform(&r, "r")?;
            for (k, v) in rows.iter().enumerate() {
                if v[0] != s[k % ns] || v[1] != r[k / ns] {
                    return Err(format!("line {}: cells are not in row-major order", k + 2));
                }
            }
            let mesh = Mesh2D::uniform(ns, nr).map_err(|e| e.to_string())?;
            let data = rows.into_iter().map(|v| v[2]).collect();
            Ok(MeshField::Two(mesh, Field2D::from_rows(ns, nr, data).expect("shape checked")))
        }
        other => Err(format!("unrecognized field header `{other}`")),
    }
}

pub const SERIES_HEADER: &str = "time,l2,mass,e1,e2,e3,nu";

pub fn series_to_csv(series: &[TimeSample]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for s in series {
        let vals = [s.time, s.l2, s.mass, s.energy.e1, s.energy.e2, s.energy.e3, s.nu];
        let line: Vec<String> = vals.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Error marker row appended to a partial series.
pub fn error_row(message: &str) -> String {
    format!("error,\"{}\"\n", message.replace('"', "'"))
}

/// Parse a series; returns the samples and the error marker, if any.
pub fn series_from_csv(text: &str) -> Result<(Vec<TimeSample>, Option<String>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(SERIES_HEADER) {
        return Err("missing time-series header".into());
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        if let Some(msg) = line.strip_prefix("error,") {
            return Ok((out, Some(msg.trim_matches('"').to_string())));
        }
        let v = parse_row(line, 7, k + 2)?;
        out.push(TimeSample {
            time: v[0],
            l2: v[1],
            mass: v[2],
            energy: EnergyBreakdown {
                e1: v[3],
                e2: v[4],
                e3: v[5],
            },
            nu: v[6],
        });
    }
    Ok((out, None))
}
