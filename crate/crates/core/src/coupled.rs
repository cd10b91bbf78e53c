//! Ion/electron system: two 2D temperatures relaxing toward each other through
//! an implicit source step, each diffusing with its own coefficients.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::field::Field2D;
use crate::heat1d::ViscosityState;
use crate::heat2d::{Params2D, SplitStepper, State2D};
use crate::line::NewtonOptions;
use crate::mesh::Mesh2D;
use crate::Scheme;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledParams {
    pub ions: Params2D,
    pub electrons: Params2D,
    /// Relaxation rate; negative.
    pub beta: f64,
}

impl CoupledParams {
    pub fn new(ions: Params2D, electrons: Params2D, beta: f64) -> Result<Self> {
        if !(beta < 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be negative and finite, got {beta}")));
        }
        ions.validate()?;
        electrons.validate()?;
        Ok(Self { ions, electrons, beta })
    }

    /// Species without exchange (`beta = 0`), for testing the composition.
    pub fn decoupled(ions: Params2D, electrons: Params2D) -> Result<Self> {
        ions.validate()?;
        electrons.validate()?;
        Ok(Self {
            ions,
            electrons,
            beta: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub ions: State2D,
    pub electrons: State2D,
    pub time: f64,
}

impl CoupledState {
    pub fn new(ions: State2D, electrons: State2D) -> Result<Self> {
        if ions.mesh != electrons.mesh {
            return Err(invalid("ion and electron fields must share a mesh"));
        }
        if ions.time != electrons.time {
            return Err(invalid("ion and electron times differ"));
        }
        let time = ions.time;
        Ok(Self {
            ions,
            electrons,
            time,
        })
    }

    pub fn constant(mesh: Arc<Mesh2D>, ti: f64, te: f64) -> Result<Self> {
        Self::new(
            State2D::constant(Arc::clone(&mesh), ti)?,
            State2D::constant(mesh, te)?,
        )
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.ions.mesh
    }

    /// `T_i / T_e` at `(s, r)`, both temperatures interpolated bilinearly
    /// between cell centers (constant beyond the outermost centers).
    pub fn ratio_at(&self, s: f64, r: f64) -> f64 {
        let mesh = self.mesh();
        let (sx, rx) = (bracket(mesh.s().centers(), s), bracket(mesh.r().centers(), r));
        let sample = |f: &Field2D| {
            let (i0, i1, a) = sx;
            let (j0, j1, b) = rx;
            (1.0 - b) * ((1.0 - a) * f[(i0, j0)] + a * f[(i1, j0)]) + b * ((1.0 - a) * f[(i0, j1)] + a * f[(i1, j1)])
        };
        sample(&self.ions.t) / sample(&self.electrons.t)
    }
}

/// Neighbouring centers around `x` and the weight of the upper one.
fn bracket(centers: &[f64], x: f64) -> (usize, usize, f64) {
    let n = centers.len();
    let k = centers.partition_point(|&c| c <= x);
    if k == 0 {
        (0, 0, 0.0)
    } else if k == n {
        (n - 1, n - 1, 0.0)
    } else {
        let (lo, hi) = (centers[k - 1], centers[k]);
        (k - 1, k, (x - lo) / (hi - lo))
    }
}

/// Implicit relaxation over `dt`:
/// `T_i* = ½(1 - a) T_e + ½(1 + a) T_i` with `a = 1 / (1 - 2 beta dt)`, and
/// symmetrically for `T_e*`. Evaluated as mean plus damped half-difference so
/// the pointwise sum is preserved to rounding.
pub fn source_step(ti: &Field2D, te: &Field2D, beta: f64, dt: f64) -> Result<(Field2D, Field2D)> {
    if ti.ns() != te.ns() || ti.nr() != te.nr() {
        return Err(invalid("ion and electron fields differ in shape"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid(format!("dt must be positive and finite, got {dt}")));
    }
    let denom = 1.0 - 2.0 * beta * dt;
    if denom == 0.0 || !denom.is_finite() {
        return Err(invalid("1 - 2 beta dt must be nonzero"));
    }
    if beta == 0.0 {
        return Ok((ti.clone(), te.clone()));
    }
    let a = 1.0 / denom;
    let mut oi = ti.clone();
    let mut oe = te.clone();
    for ((vi, ve), (&i, &e)) in oi
        .as_mut_slice()
        .iter_mut()
        .zip(oe.as_mut_slice().iter_mut())
        .zip(ti.as_slice().iter().zip(te.as_slice()))
    {
        let m = 0.5 * (i + e);
        let d = 0.5 * a * (i - e);
        *vi = m + d;
        *ve = m - d;
    }
    Ok((oi, oe))
}

/// Source step followed by one split step per species.
#[derive(Debug, Clone)]
pub struct CoupledStepper {
    ions: SplitStepper,
    electrons: SplitStepper,
}

impl CoupledStepper {
    pub fn new(scheme: Scheme, newton: NewtonOptions) -> Result<Self> {
        Ok(Self {
            ions: SplitStepper::new(scheme, newton)?,
            electrons: SplitStepper::new(scheme, newton)?,
        })
    }

    pub fn step(
        &mut self,
        state: &CoupledState,
        params: &CoupledParams,
        dt: f64,
        visc_i: &ViscosityState,
        visc_e: &ViscosityState,
    ) -> Result<CoupledState> {
        let (ti, te) = source_step(&state.ions.t, &state.electrons.t, params.beta, dt)?;
        let ions = State2D { t: ti, ..state.ions.clone() };
        let electrons = State2D { t: te, ..state.electrons.clone() };
        let ions = self.ions.step(&ions, &params.ions, dt, visc_i)?;
        let electrons = self.electrons.step(&electrons, &params.electrons, dt, visc_e)?;
        if ions.t.as_slice().iter().chain(electrons.t.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: ions.steps,
                max_abs: f64::INFINITY,
            });
        }
        CoupledState::new(ions, electrons)
    }
}

/// One coupled step with the IMEX parallel sweep.
pub fn step_coupled(
    state: &CoupledState,
    params: &CoupledParams,
    dt: f64,
    visc_i: &ViscosityState,
    visc_e: &ViscosityState,
) -> Result<CoupledState> {
    CoupledStepper::new(Scheme::Imex, NewtonOptions::default())?.step(state, params, dt, visc_i, visc_e)
}
