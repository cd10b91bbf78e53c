//! Run configuration: flat `key = value` documents with `#` comments and
//! dotted section keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use solheat_core::coupled::CoupledParams;
use solheat_core::heat2d::{Params2D, UnsplitOptions};
use solheat_core::{Mesh1D, Mesh2D, NewtonOptions, Params1D, Scheme};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { key: String, line: usize },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: String },
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    OneD,
    TwoD,
    TwoDUnsplit,
    Coupled,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::OneD => "1d",
            Problem::TwoD => "2d",
            Problem::TwoDUnsplit => "2d-unsplit",
            Problem::Coupled => "coupled",
        }
    }

    pub fn is_2d(self) -> bool {
        self != Problem::OneD
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Physics {
    One(Params1D),
    Two(Params2D),
    Coupled(CoupledParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    /// Fraction of the explicit stability bound at the current maximum.
    Cfl(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    /// Explicit run on a finer nested mesh, cached on disk.
    Auto { ns: usize, nr: usize },
    /// Field CSV written by an earlier run.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Record a time-series sample every `stride` steps; 0 keeps only the
    /// initial and final samples.
    pub stride: usize,
    pub snapshots: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub problem: Problem,
    pub scheme: Scheme,
    pub ns: usize,
    /// 1 for one-dimensional problems.
    pub nr: usize,
    pub dt: TimeStep,
    pub t_end: f64,
    /// Initial temperature (ions for the coupled problem).
    pub t0: f64,
    /// Initial electron temperature (coupled problem only).
    pub t0_electron: f64,
    pub physics: Physics,
    pub newton: NewtonOptions,
    pub unsplit: UnsplitOptions,
    pub output: OutputConfig,
    pub reference: Option<ReferenceSpec>,
}

impl RunConfig {
    pub fn mesh_1d(&self) -> Mesh1D {
        Mesh1D::uniform(self.ns).expect("validated")
    }

    pub fn mesh_2d(&self) -> Mesh2D {
        Mesh2D::uniform(self.ns, self.nr).expect("validated")
    }

    pub fn dt_label(&self) -> String {
        match self.dt {
            TimeStep::Fixed(dt) => format!("{dt:e}"),
            TimeStep::Cfl(f) => format!("cfl*{f}"),
        }
    }
}

pub const DEFAULT_REFERENCE_NS_1D: usize = 450;
pub const DEFAULT_REFERENCE_N_2D: usize = 300;
pub const DEFAULT_CFL_FRACTION: f64 = 0.9;

/// Split a document into key/value pairs, rejecting duplicates.
fn tokenize(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: idx + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigError::Syntax { line: idx + 1 });
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ConfigError::Duplicate {
                key: k.to_string(),
                line: idx + 1,
            });
        }
    }
    Ok(out)
}

struct Keys {
    map: BTreeMap<String, String>,
    used: Vec<String>,
}

impl Keys {
    fn take(&mut self, key: &str) -> Option<String> {
        let v = self.map.remove(key);
        if v.is_some() {
            self.used.push(key.to_string());
        }
        v
    }

    fn required(&mut self, key: &str) -> Result<String, ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::MissingKey { key: key.into() })
    }

    fn real(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.take(key)
            .map(|v| {
                let x: f64 = v.parse().map_err(|_| bad(key, format!("`{v}` is not a number")))?;
                if !x.is_finite() {
                    return Err(bad(key, "must be finite"));
                }
                Ok(x)
            })
            .transpose()
    }

    fn real_req(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.real(key)?.ok_or_else(|| ConfigError::MissingKey { key: key.into() })
    }

    fn nonneg(&mut self, key: &str) -> Result<f64, ConfigError> {
        let x = self.real_req(key)?;
        if x < 0.0 {
            return Err(bad(key, "must be nonnegative"));
        }
        Ok(x)
    }

    fn positive(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.real(key)? {
            Some(x) if x <= 0.0 => Err(bad(key, "must be positive")),
            v => Ok(v),
        }
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.take(key)
            .map(|v| {
                let n: usize = v
                    .parse()
                    .map_err(|_| bad(key, format!("`{v}` is not a nonnegative integer")))?;
                Ok(n)
            })
            .transpose()
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.map.into_keys().next() {
            Some(key) => Err(ConfigError::UnknownKey { key }),
            None => Ok(()),
        }
    }
}

fn params_2d(keys: &mut Keys, prefix: &str) -> Result<Params2D, ConfigError> {
    let k = |name: &str| format!("{prefix}{name}");
    let p = Params2D {
        k_par: keys.nonneg(&k("k_par"))?,
        k_perp: keys.nonneg(&k("k_perp"))?,
        gamma: keys.nonneg(&k("gamma"))?,
        q_perp: keys.nonneg(&k("q_perp"))?,
    };
    Ok(p)
}

/// Parse and validate a configuration document. Relative paths are kept as
/// written; see [`load_config`] for file-relative resolution.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut keys = Keys {
        map: tokenize(text)?,
        used: Vec::new(),
    };
    let problem = match keys.required("problem")?.as_str() {
        "1d" => Problem::OneD,
        "2d" => Problem::TwoD,
        "2d-unsplit" => Problem::TwoDUnsplit,
        "coupled" => Problem::Coupled,
        other => return Err(bad("problem", format!("`{other}` is not one of 1d, 2d, 2d-unsplit, coupled"))),
    };
    let scheme = match keys.required("scheme")?.as_str() {
        "explicit" => Scheme::Explicit,
        "implicit" => Scheme::Implicit,
        "imex" => Scheme::Imex,
        other => return Err(bad("scheme", format!("`{other}` is not one of explicit, implicit, imex"))),
    };
    if scheme == Scheme::Explicit && matches!(problem, Problem::TwoDUnsplit | Problem::Coupled) {
        return Err(bad("scheme", format!("explicit is not available for problem {problem}")));
    }
    let name = keys.take("name").unwrap_or_else(|| format!("{problem}-{scheme}"));

    let ns = keys.count("ns")?.ok_or_else(|| ConfigError::MissingKey { key: "ns".into() })?;
    if ns == 0 {
        return Err(bad("ns", "must be positive"));
    }
    let nr = if problem.is_2d() {
        let nr = keys.count("nr")?.ok_or_else(|| ConfigError::MissingKey { key: "nr".into() })?;
        if nr == 0 || nr % 2 == 1 {
            return Err(bad("nr", "must be a positive even number so that r = 1/2 is a face"));
        }
        nr
    } else {
        1
    };

    let cfl_fraction = keys.positive("cfl_fraction")?;
    let dt = match keys.take("dt") {
        Some(v) if v == "cfl" => {
            if scheme != Scheme::Explicit {
                return Err(bad("dt", "`cfl` is only meaningful for the explicit scheme"));
            }
            TimeStep::Cfl(cfl_fraction.unwrap_or(DEFAULT_CFL_FRACTION))
        }
        Some(v) => {
            let x: f64 = v.parse().map_err(|_| bad("dt", format!("`{v}` is not a number")))?;
            if !(x > 0.0 && x.is_finite()) {
                return Err(bad("dt", format!("must be positive, got {v}")));
            }
            if cfl_fraction.is_some() {
                return Err(bad("cfl_fraction", "only used with `dt = cfl`"));
            }
            TimeStep::Fixed(x)
        }
        None if scheme == Scheme::Explicit => TimeStep::Cfl(cfl_fraction.unwrap_or(DEFAULT_CFL_FRACTION)),
        None => return Err(ConfigError::MissingKey { key: "dt".into() }),
    };
    let t_end = keys.positive("t_end")?.ok_or_else(|| ConfigError::MissingKey { key: "t_end".into() })?;

    let (physics, t0, t0_electron) = match problem {
        Problem::OneD => {
            let p = Params1D {
                k_par: keys.nonneg("k_par")?,
                gamma: keys.nonneg("gamma")?,
            };
            let t0 = keys.nonneg("t0")?;
            (Physics::One(p), t0, t0)
        }
        Problem::TwoD | Problem::TwoDUnsplit => {
            let p = params_2d(&mut keys, "")?;
            let t0 = keys.nonneg("t0")?;
            (Physics::Two(p), t0, t0)
        }
        Problem::Coupled => {
            let ions = params_2d(&mut keys, "ion.")?;
            let electrons = params_2d(&mut keys, "electron.")?;
            let beta = keys.real_req("beta")?;
            let params = CoupledParams::new(ions, electrons, beta).map_err(|e| bad("beta", e.to_string()))?;
            let shared = keys.real("t0")?;
            let ti = keys.real("ion.t0")?.or(shared);
            let te = keys.real("electron.t0")?.or(shared);
            let ti = ti.ok_or_else(|| ConfigError::MissingKey { key: "ion.t0".into() })?;
            let te = te.ok_or_else(|| ConfigError::MissingKey { key: "electron.t0".into() })?;
            if ti < 0.0 {
                return Err(bad("ion.t0", "must be nonnegative"));
            }
            if te <= 0.0 {
                return Err(bad("electron.t0", "must be positive"));
            }
            (Physics::Coupled(params), ti, te)
        }
    };

    let mut newton = NewtonOptions::default();
    if let Some(tol) = keys.positive("newton.tol")? {
        newton.tol = tol;
    }
    if let Some(n) = keys.count("newton.max_iter")? {
        if n == 0 {
            return Err(bad("newton.max_iter", "must be positive"));
        }
        newton.max_iter = n;
    }
    let mut unsplit = UnsplitOptions::default();
    if problem == Problem::TwoDUnsplit {
        unsplit.newton = NewtonOptions {
            tol: newton.tol,
            max_iter: unsplit.newton.max_iter.max(newton.max_iter),
        };
    }
    if let Some(tol) = keys.positive("cg.tol")? {
        unsplit.cg_tol = tol;
    }
    if let Some(n) = keys.count("cg.max_iter")? {
        if n == 0 {
            return Err(bad("cg.max_iter", "must be positive"));
        }
        unsplit.cg_max_iter = n;
    }

    let output = OutputConfig {
        dir: keys.take("output.dir").map(PathBuf::from),
        stride: keys.count("output.stride")?.unwrap_or(1),
        snapshots: match keys.take("output.snapshots") {
            None => Vec::new(),
            Some(v) => {
                let mut times = Vec::new();
                for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                    let x: f64 = part
                        .parse()
                        .map_err(|_| bad("output.snapshots", format!("`{part}` is not a number")))?;
                    if !(x >= 0.0 && x <= t_end) {
                        return Err(bad("output.snapshots", format!("{x} is outside [0, t_end]")));
                    }
                    times.push(x);
                }
                times.sort_by(f64::total_cmp);
                times
            }
        },
    };

    let ref_ns = keys.count("reference.ns")?;
    let ref_nr = keys.count("reference.nr")?;
    let reference = match keys.take("reference").as_deref() {
        None => {
            if ref_ns.is_some() || ref_nr.is_some() {
                return Err(bad("reference.ns", "requires `reference = auto`"));
            }
            None
        }
        Some("auto") => {
            if problem == Problem::Coupled {
                return Err(bad("reference", "no reference solver for the coupled problem"));
            }
            let (dns, dnr) = if problem.is_2d() {
                (DEFAULT_REFERENCE_N_2D, DEFAULT_REFERENCE_N_2D)
            } else {
                (DEFAULT_REFERENCE_NS_1D, 1)
            };
            let rns = ref_ns.unwrap_or(dns);
            let rnr = if problem.is_2d() { ref_nr.unwrap_or(dnr) } else { 1 };
            if rns == 0 || rns % ns != 0 {
                return Err(bad("reference.ns", format!("{rns} is not a multiple of ns = {ns}")));
            }
            if problem.is_2d() && (rnr == 0 || rnr % nr != 0 || rnr % 2 == 1) {
                return Err(bad("reference.nr", format!("{rnr} is not an even multiple of nr = {nr}")));
            }
            if !problem.is_2d() && ref_nr.is_some() {
                return Err(ConfigError::UnknownKey { key: "reference.nr".into() });
            }
            Some(ReferenceSpec::Auto { ns: rns, nr: rnr })
        }
        Some(path) => {
            if ref_ns.is_some() || ref_nr.is_some() {
                return Err(bad("reference.ns", "only used with `reference = auto`"));
            }
            Some(ReferenceSpec::File(PathBuf::from(path)))
        }
    };

    keys.finish()?;
    let cfg = RunConfig {
        name,
        problem,
        scheme,
        ns,
        nr,
        dt,
        t_end,
        t0,
        t0_electron,
        physics,
        newton,
        unsplit,
        output,
        reference,
    };
    Ok(cfg)
}

/// Read and parse a configuration file; relative output and reference paths
/// are resolved against the file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig, crate::CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::CliError::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    if let Some(dir) = &mut cfg.output.dir {
        if dir.is_relative() {
            *dir = base.join(&*dir);
        }
    }
    if let Some(ReferenceSpec::File(p)) = &mut cfg.reference {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

/// Canonical text of a configuration with default time-series settings and no
/// outputs; parsing it yields an equal physics/numerics setup.
pub fn to_text(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("name", cfg.name.clone());
    kv("problem", cfg.problem.to_string());
    kv("scheme", cfg.scheme.to_string());
    kv("ns", cfg.ns.to_string());
    if cfg.problem.is_2d() {
        kv("nr", cfg.nr.to_string());
    }
    match cfg.dt {
        TimeStep::Fixed(dt) => kv("dt", format!("{dt:?}")),
        TimeStep::Cfl(f) => {
            kv("dt", "cfl".into());
            kv("cfl_fraction", format!("{f:?}"));
        }
    }
    kv("t_end", format!("{:?}", cfg.t_end));
    let p2 = |kv: &mut dyn FnMut(&str, String), prefix: &str, p: &Params2D| {
        kv(&format!("{prefix}k_par"), format!("{:?}", p.k_par));
        kv(&format!("{prefix}k_perp"), format!("{:?}", p.k_perp));
        kv(&format!("{prefix}gamma"), format!("{:?}", p.gamma));
        kv(&format!("{prefix}q_perp"), format!("{:?}", p.q_perp));
    };
    match &cfg.physics {
        Physics::One(p) => {
            kv("k_par", format!("{:?}", p.k_par));
            kv("gamma", format!("{:?}", p.gamma));
            kv("t0", format!("{:?}", cfg.t0));
        }
        Physics::Two(p) => {
            p2(&mut kv, "", p);
            kv("t0", format!("{:?}", cfg.t0));
        }
        Physics::Coupled(c) => {
            p2(&mut kv, "ion.", &c.ions);
            p2(&mut kv, "electron.", &c.electrons);
            kv("beta", format!("{:?}", c.beta));
            kv("ion.t0", format!("{:?}", cfg.t0));
            kv("electron.t0", format!("{:?}", cfg.t0_electron));
        }
    }
    kv("newton.tol", format!("{:?}", cfg.newton.tol));
    kv("newton.max_iter", cfg.newton.max_iter.to_string());
    kv("cg.tol", format!("{:?}", cfg.unsplit.cg_tol));
    kv("cg.max_iter", cfg.unsplit.cg_max_iter.to_string());
    out
}
