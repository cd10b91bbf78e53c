//! Time loop driving one configured run.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use solheat_core::coupled::{CoupledParams, CoupledState, CoupledStepper};
use solheat_core::diagnostics::{
    energy_breakdown, energy_breakdown_1d, l2_norm, relative_error, RunReport, TimeSample,
};
use solheat_core::heat1d::{self, cfl_dt, ImexStepper1D, State1D};
use solheat_core::heat2d::{
    explicit_dt_2d, ExplicitStepper2D, Params2D, SplitStepper, State2D, UnsplitStepper,
};
use solheat_core::{Error, MeshField, Params1D, Scheme, ViscosityState};

use crate::config::{Physics, Problem, ReferenceSpec, RunConfig, TimeStep};
use crate::csv::{error_row, field_to_csv, series_to_csv};
use crate::reference::ReferenceCache;
use crate::CliError;

/// A run blowing up beyond this multiple of its initial max-norm is aborted.
pub const BLOW_UP_FACTOR: f64 = 10.0;

enum Integrator {
    One {
        state: State1D,
        params: Params1D,
        imex: ImexStepper1D,
    },
    Split {
        state: State2D,
        params: Params2D,
        stepper: SplitStepper,
    },
    Unsplit {
        state: State2D,
        params: Params2D,
        stepper: UnsplitStepper,
    },
    Explicit2D {
        state: State2D,
        params: Params2D,
        stepper: ExplicitStepper2D,
    },
    Coupled {
        state: CoupledState,
        params: CoupledParams,
        stepper: CoupledStepper,
        visc_e: ViscosityState,
    },
}

struct Driver {
    integ: Integrator,
    scheme: Scheme,
    newton: solheat_core::NewtonOptions,
    /// Ion (or sole) viscosity.
    visc: ViscosityState,
    steps: u64,
    time: f64,
}

impl Driver {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let (integ, visc) = match (&cfg.physics, cfg.problem) {
            (Physics::One(p), _) => {
                let mesh = Arc::new(cfg.mesh_1d());
                let state = State1D::constant(mesh, cfg.t0)?;
                let visc = ViscosityState::initial(p.k_par, cfg.t0);
                (
                    Integrator::One {
                        state,
                        params: *p,
                        imex: ImexStepper1D::default(),
                    },
                    visc,
                )
            }
            (Physics::Two(p), problem) => {
                let mesh = Arc::new(cfg.mesh_2d());
                let state = State2D::constant(Arc::clone(&mesh), cfg.t0)?;
                let visc = ViscosityState::initial(p.k_par, cfg.t0);
                let integ = match (problem, cfg.scheme) {
                    (_, Scheme::Explicit) => Integrator::Explicit2D {
                        stepper: ExplicitStepper2D::new(&mesh, p),
                        state,
                        params: *p,
                    },
                    (Problem::TwoDUnsplit, s) => Integrator::Unsplit {
                        state,
                        params: *p,
                        stepper: UnsplitStepper::new(s, cfg.unsplit)?,
                    },
                    (_, s) => Integrator::Split {
                        state,
                        params: *p,
                        stepper: SplitStepper::new(s, cfg.newton)?,
                    },
                };
                (integ, visc)
            }
            (Physics::Coupled(p), _) => {
                let mesh = Arc::new(cfg.mesh_2d());
                let state = CoupledState::constant(mesh, cfg.t0, cfg.t0_electron)?;
                (
                    Integrator::Coupled {
                        state,
                        params: *p,
                        stepper: CoupledStepper::new(cfg.scheme, cfg.newton)?,
                        visc_e: ViscosityState::initial(p.electrons.k_par, cfg.t0_electron),
                    },
                    ViscosityState::initial(p.ions.k_par, cfg.t0),
                )
            }
        };
        Ok(Self {
            integ,
            scheme: cfg.scheme,
            newton: cfg.newton,
            visc,
            steps: 0,
            time: 0.0,
        })
    }

    fn max_abs(&self) -> f64 {
        match &self.integ {
            Integrator::One { state, .. } => state.max_abs(),
            Integrator::Split { state, .. }
            | Integrator::Unsplit { state, .. } => state.max_abs(),
            Integrator::Explicit2D { state, stepper, .. } => stepper.last_max_abs().unwrap_or_else(|| state.max_abs()),
            Integrator::Coupled { state, .. } => state.ions.max_abs().max(state.electrons.max_abs()),
        }
    }

    /// Explicit stability bound at the current maximum.
    fn stable_dt(&self) -> Result<f64, Error> {
        match &self.integ {
            Integrator::One { state, params, .. } => cfl_dt(&state.mesh, state.max_abs(), params),
            Integrator::Explicit2D { state, params, .. } => explicit_dt_2d(&state.mesh, self.max_abs(), params),
            _ => Err(Error::InvalidArgument("no explicit bound for this scheme".into())),
        }
    }

    fn step(&mut self, dt: f64) -> Result<(), Error> {
        let visc = self.visc;
        match &mut self.integ {
            Integrator::One { state, params, imex } => {
                *state = match self.scheme {
                    Scheme::Explicit => heat1d::step_explicit(state, params, dt)?,
                    Scheme::Implicit => heat1d::step_implicit(state, params, dt, &self.newton)?,
                    Scheme::Imex => imex.step(state, params, dt, &visc)?,
                };
                self.visc = heat1d::update_viscosity(visc, &state.t, params.k_par);
            }
            Integrator::Split { state, params, stepper } => {
                *state = stepper.step(state, params, dt, &visc)?;
                self.visc = heat1d::update_viscosity(visc, state.t.as_slice(), params.k_par);
            }
            Integrator::Unsplit { state, params, stepper } => {
                *state = stepper.step(state, params, dt, &visc)?;
                self.visc = heat1d::update_viscosity(visc, state.t.as_slice(), params.k_par);
            }
            Integrator::Explicit2D { state, stepper, .. } => {
                stepper.step_in_place(&mut state.t, dt)?;
                state.time += dt;
                state.steps += 1;
            }
            Integrator::Coupled {
                state,
                params,
                stepper,
                visc_e,
            } => {
                *state = stepper.step(state, params, dt, &visc, visc_e)?;
                self.visc = heat1d::update_viscosity(visc, state.ions.t.as_slice(), params.ions.k_par);
                *visc_e = heat1d::update_viscosity(*visc_e, state.electrons.t.as_slice(), params.electrons.k_par);
            }
        }
        self.steps += 1;
        Ok(())
    }

    fn fields(&self) -> Vec<(String, MeshField)> {
        match &self.integ {
            Integrator::One { state, .. } => {
                vec![("T".into(), MeshField::One((*state.mesh).clone(), state.t.clone()))]
            }
            Integrator::Split { state, .. }
            | Integrator::Unsplit { state, .. }
            | Integrator::Explicit2D { state, .. } => {
                vec![("T".into(), MeshField::Two((*state.mesh).clone(), state.t.clone()))]
            }
            Integrator::Coupled { state, .. } => vec![
                ("Ti".into(), MeshField::Two(state.mesh().clone(), state.ions.t.clone())),
                ("Te".into(), MeshField::Two(state.mesh().clone(), state.electrons.t.clone())),
            ],
        }
    }

    fn sample(&self) -> TimeSample {
        let (l2, mass, energy) = match &self.integ {
            Integrator::One { state, params, .. } => {
                let f = MeshField::One((*state.mesh).clone(), state.t.clone());
                (l2_norm(&f), state.mass(), energy_breakdown_1d(&state.mesh, &state.t, params))
            }
            Integrator::Split { state, params, .. }
            | Integrator::Unsplit { state, params, .. }
            | Integrator::Explicit2D { state, params, .. } => {
                let f = MeshField::Two((*state.mesh).clone(), state.t.clone());
                (l2_norm(&f), state.mass(), energy_breakdown(state, params))
            }
            Integrator::Coupled { state, params, .. } => {
                let mesh = state.mesh().clone();
                let li = l2_norm(&MeshField::Two(mesh.clone(), state.ions.t.clone()));
                let le = l2_norm(&MeshField::Two(mesh, state.electrons.t.clone()));
                (
                    (li * li + le * le).sqrt(),
                    state.ions.mass() + state.electrons.mass(),
                    energy_breakdown(&state.ions, &params.ions) + energy_breakdown(&state.electrons, &params.electrons),
                )
            }
        };
        TimeSample {
            time: self.time,
            l2,
            mass,
            energy,
            nu: self.visc.nu(),
        }
    }
}

/// Number of fixed steps to reach `t_end`; a trailing partial step is
/// shortened.
fn fixed_steps(t_end: f64, dt: f64) -> u64 {
    let q = t_end / dt;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.max(1.0) {
        r.max(1.0) as u64
    } else {
        q.ceil() as u64
    }
}

/// Options of [`run_with`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reference cache for `reference = auto`; [`ReferenceCache::from_env`] when absent.
    pub cache: Option<ReferenceCache>,
    /// Print progress to stderr roughly every tenth of the run.
    pub progress: bool,
    /// Skip writing outputs even if the config names a directory.
    pub no_output: bool,
}

/// Integrate the configured problem and compute its reference error if
/// requested. Outputs are written when the config names a directory.
pub fn run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    run_with(cfg, &RunOptions::default())
}

pub fn run_with(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let out_dir = if opts.no_output { None } else { cfg.output.dir.clone() };
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut driver = Driver::new(cfg)?;
    let limit = BLOW_UP_FACTOR * driver.max_abs().max(f64::MIN_POSITIVE);
    let mut series = vec![driver.sample()];
    let mut snapshots = cfg.output.snapshots.iter().copied().peekable();
    let mut snap_index = 0usize;
    let mut wall = Duration::ZERO;
    let mut next_report = 0.1;

    let fixed = match cfg.dt {
        TimeStep::Fixed(dt) => Some((dt, fixed_steps(cfg.t_end, dt))),
        TimeStep::Cfl(_) => None,
    };
    let mut failure: Option<CliError> = None;
    loop {
        while let Some(&ts) = snapshots.peek() {
            if driver.time + 1e-12 * cfg.t_end < ts {
                break;
            }
            snapshots.next();
            if let Some(dir) = &out_dir {
                write_fields(dir, &format!("snapshot{snap_index}_"), &driver.fields())?;
            }
            snap_index += 1;
        }
        let dt = match (fixed, cfg.dt) {
            (Some((dt, n)), _) => {
                if driver.steps >= n {
                    break;
                }
                if driver.steps + 1 == n {
                    cfg.t_end - (n - 1) as f64 * dt
                } else {
                    dt
                }
            }
            (None, TimeStep::Cfl(frac)) => {
                let remaining = cfg.t_end - driver.time;
                if remaining <= 1e-12 * cfg.t_end {
                    break;
                }
                match driver.stable_dt() {
                    Ok(b) => (frac * b).min(remaining),
                    Err(e) => {
                        failure = Some(e.into());
                        break;
                    }
                }
            }
            (None, TimeStep::Fixed(_)) => unreachable!(),
        };
        let started = Instant::now();
        let result = driver.step(dt);
        wall += started.elapsed();
        let step_index = driver.steps + u64::from(result.is_err());
        match result {
            Err(Error::BlowUp { max_abs, .. }) => {
                failure = Some(CliError::Numerical(Error::BlowUp {
                    step: step_index as usize,
                    max_abs,
                }));
                break;
            }
            Err(e) => {
                failure = Some(e.into());
                break;
            }
            Ok(()) => {}
        }
        driver.time = match fixed {
            Some((_, n)) if driver.steps == n => cfg.t_end,
            Some((dt, _)) => driver.steps as f64 * dt,
            None => driver.time + dt,
        };
        let m = driver.max_abs();
        if !(m <= limit) {
            failure = Some(CliError::Numerical(Error::BlowUp {
                step: driver.steps as usize,
                max_abs: m,
            }));
            break;
        }
        if cfg.output.stride > 0 && driver.steps % cfg.output.stride as u64 == 0 {
            series.push(driver.sample());
        }
        if opts.progress && driver.time >= next_report * cfg.t_end {
            eprintln!(
                "[{}] t = {:.4} ({} steps, {:.1} s)",
                cfg.name,
                driver.time,
                driver.steps,
                wall.as_secs_f64()
            );
            next_report += 0.1;
        }
    }

    if let Some(err) = failure {
        if let Some(dir) = &out_dir {
            let mut text = series_to_csv(&series);
            text.push_str(&error_row(&err.to_string()));
            write_file(&dir.join("series.csv"), &text)?;
        }
        return Err(err);
    }
    if series.last().map(|s| s.time) != Some(driver.time) {
        series.push(driver.sample());
    }
    let fields = driver.fields();
    let relative_error = match &cfg.reference {
        None => None,
        Some(spec) => {
            let reference = match spec {
                ReferenceSpec::File(path) => crate::reference::read_field(path)?,
                ReferenceSpec::Auto { .. } => {
                    let cache = opts.cache.clone().unwrap_or_else(ReferenceCache::from_env);
                    cache.load_or_compute(cfg, opts.progress)?.0
                }
            };
            Some(relative_error(&fields[0].1, &reference)?)
        }
    };
    let report = RunReport {
        fields,
        series,
        wall_seconds: wall.as_secs_f64(),
        steps: driver.steps,
        relative_error,
    };
    if let Some(dir) = &out_dir {
        write_report(dir, &report)?;
    }
    Ok(report)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_fields(dir: &Path, prefix: &str, fields: &[(String, MeshField)]) -> Result<(), CliError> {
    for (name, f) in fields {
        write_file(&dir.join(format!("{prefix}{name}.csv")), &field_to_csv(f))?;
    }
    Ok(())
}

/// Write `series.csv`, `field_<name>.csv` and `summary.csv` into `dir`.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<(), CliError> {
    write_file(&dir.join("series.csv"), &series_to_csv(&report.series))?;
    write_fields(dir, "field_", &report.fields)?;
    let err = report.relative_error.map(crate::csv::fmt_f64).unwrap_or_default();
    let summary = format!(
        "steps,wall_seconds,relative_error\n{},{},{}\n",
        report.steps,
        crate::csv::fmt_f64(report.wall_seconds),
        err
    );
    write_file(&dir.join("summary.csv"), &summary)
}
