//! Anisotropic heat conduction on the unit square `(s, r)`.
//!
//! Rows `r < 1/2` (core) are periodic in `s`; rows `r > 1/2` (scrape-off
//! layer) lose heat through limiter fluxes at `s = 0, 1`. Radially, a heat
//! influx `K⊥ Q⊥` enters at `r = 0` and `r = 1` is insulated.
//!
//! [`SplitStepper`] advances by Lie splitting: a parallel sweep (IMEX or
//! Newton, one independent line solve per row) followed by an implicit radial
//! sweep (one shared tridiagonal matrix for every column). [`UnsplitStepper`]
//! solves the full five-point system instead, and [`step_explicit_2d`] is the
//! forward-Euler scheme used to produce reference solutions.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::field::{pow_5_2, pow_7_2, Field2D};
use crate::heat1d::{self, check_growth, Params1D, ViscosityState};
use crate::line::{self, ImexLineOperator, LineBoundary, NewtonOptions};
use crate::linsolve::{conjugate_gradient, CsrMatrix, TridiagonalFactor, DEFAULT_CG_TOL};
use crate::mesh::Mesh2D;
use crate::Scheme;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params2D {
    pub k_par: f64,
    pub k_perp: f64,
    pub gamma: f64,
    /// Radial gradient magnitude imposed at `r = 0` (`∂_r T = -Q⊥`).
    pub q_perp: f64,
}

impl Params2D {
    pub fn new(k_par: f64, k_perp: f64, gamma: f64, q_perp: f64) -> Result<Self> {
        let p = Self {
            k_par,
            k_perp,
            gamma,
            q_perp,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_par", self.k_par),
            ("k_perp", self.k_perp),
            ("gamma", self.gamma),
            ("q_perp", self.q_perp),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and nonnegative")));
            }
        }
        Ok(())
    }

    pub fn parallel(&self) -> Params1D {
        Params1D {
            k_par: self.k_par,
            gamma: self.gamma,
        }
    }

    /// Radial face flux at `r = 0`.
    pub fn inner_flux(&self) -> f64 {
        -self.k_perp * self.q_perp
    }

    /// Boundary treatment of row `j`: periodic in the core, limiter in the SOL.
    pub fn row_boundary(&self, mesh: &Mesh2D, j: usize) -> LineBoundary {
        if mesh.is_sol_row(j) {
            LineBoundary::Limiter { gamma: self.gamma }
        } else {
            LineBoundary::Periodic
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State2D {
    pub mesh: Arc<Mesh2D>,
    pub t: Field2D,
    pub time: f64,
    pub steps: usize,
}

impl State2D {
    pub fn new(mesh: Arc<Mesh2D>, t: Field2D) -> Result<Self> {
        if t.ns() != mesh.ns() || t.nr() != mesh.nr() {
            return Err(invalid("field shape does not match mesh"));
        }
        if !t.is_finite() {
            return Err(invalid("initial field must be finite"));
        }
        Ok(Self {
            mesh,
            t,
            time: 0.0,
            steps: 0,
        })
    }

    pub fn constant(mesh: Arc<Mesh2D>, value: f64) -> Result<Self> {
        let t = Field2D::filled(mesh.ns(), mesh.nr(), value);
        Self::new(mesh, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.t.max_abs()
    }

    pub fn mass(&self) -> f64 {
        let ws = self.mesh.s().widths();
        (0..self.mesh.nr())
            .map(|j| {
                let row: f64 = self.t.row(j).iter().zip(ws).map(|(v, w)| v * w).sum();
                row * self.mesh.r().widths()[j]
            })
            .sum()
    }

    pub(crate) fn advanced(&self, t: Field2D, dt: f64) -> Self {
        Self {
            mesh: Arc::clone(&self.mesh),
            t,
            time: self.time + dt,
            steps: self.steps + 1,
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("time step must be positive, got {dt}")))
    }
}

/// Factored radial operator `W + dt K⊥ L_r`, shared by every column.
fn radial_factor(mesh: &Mesh2D, k_perp: f64, dt: f64) -> Result<TridiagonalFactor> {
    let w = mesh.r().widths();
    let n = w.len();
    let mut diag = w.to_vec();
    let mut off = vec![0.0; n.saturating_sub(1)];
    for j in 0..n.saturating_sub(1) {
        let b = dt * 2.0 * k_perp / (w[j] + w[j + 1]);
        diag[j] += b;
        diag[j + 1] += b;
        off[j] = -b;
    }
    TridiagonalFactor::new(&off, &diag, &off)
}

/// Lie-split stepper; keeps factored line operators between steps.
#[derive(Debug, Clone)]
pub struct SplitStepper {
    pub scheme: Scheme,
    pub newton: NewtonOptions,
    core_op: Option<ImexLineOperator>,
    sol_op: Option<ImexLineOperator>,
    radial: Option<((f64, f64, usize), TridiagonalFactor)>,
    scratch: Vec<f64>,
}

impl SplitStepper {
    /// `scheme` selects the parallel sweep: [`Scheme::Imex`] or [`Scheme::Implicit`].
    pub fn new(scheme: Scheme, newton: NewtonOptions) -> Result<Self> {
        if scheme == Scheme::Explicit {
            return Err(invalid("split stepping supports implicit and imex parallel sweeps"));
        }
        Ok(Self {
            scheme,
            newton,
            core_op: None,
            sol_op: None,
            radial: None,
            scratch: Vec::new(),
        })
    }

    /// Parallel sweep only: every row advanced by one 1D step.
    pub fn parallel_sweep(
        &mut self,
        t: &mut Field2D,
        mesh: &Mesh2D,
        params: &Params2D,
        dt: f64,
        visc: &ViscosityState,
    ) -> Result<()> {
        let ws = mesh.s().widths();
        match self.scheme {
            Scheme::Imex => {
                let nu = visc.nu();
                for (slot, bc) in [
                    (&mut self.core_op, LineBoundary::Periodic),
                    (&mut self.sol_op, LineBoundary::Limiter { gamma: params.gamma }),
                ] {
                    if !slot.as_ref().is_some_and(|op| op.matches(nu, dt)) {
                        *slot = Some(ImexLineOperator::new(ws, nu, dt, bc)?);
                    }
                }
                for j in 0..mesh.nr() {
                    let bc = params.row_boundary(mesh, j);
                    let op = if mesh.is_sol_row(j) {
                        self.sol_op.as_ref()
                    } else {
                        self.core_op.as_ref()
                    };
                    op.unwrap()
                        .step(t.row_mut(j), ws, params.k_par, bc, &mut self.scratch);
                }
            }
            Scheme::Implicit => {
                for j in 0..mesh.nr() {
                    let bc = params.row_boundary(mesh, j);
                    let (row, _) =
                        line::newton_line(t.row(j), ws, params.k_par, bc, dt, &self.newton)?;
                    t.row_mut(j).copy_from_slice(&row);
                }
            }
            Scheme::Explicit => unreachable!(),
        }
        Ok(())
    }

    /// Radial sweep only: implicit linear diffusion in every column.
    pub fn radial_sweep(&mut self, t: &mut Field2D, mesh: &Mesh2D, params: &Params2D, dt: f64) -> Result<()> {
        let key = (dt, params.k_perp, mesh.nr());
        if !self.radial.as_ref().is_some_and(|(k, _)| *k == key) {
            self.radial = Some((key, radial_factor(mesh, params.k_perp, dt)?));
        }
        let factor = &self.radial.as_ref().unwrap().1;
        let wr = mesh.r().widths();
        let ns = mesh.ns();
        let data = t.as_mut_slice();
        for (j, w) in wr.iter().enumerate() {
            data[j * ns..(j + 1) * ns].iter_mut().for_each(|v| *v *= w);
        }
        let influx = -dt * params.inner_flux();
        data[..ns].iter_mut().for_each(|v| *v += influx);
        factor.solve_lanes_in_place(data, ns);
        Ok(())
    }

    pub fn step(
        &mut self,
        state: &State2D,
        params: &Params2D,
        dt: f64,
        visc: &ViscosityState,
    ) -> Result<State2D> {
        check_dt(dt)?;
        let mut t = state.t.clone();
        self.parallel_sweep(&mut t, &state.mesh, params, dt, visc)?;
        self.radial_sweep(&mut t, &state.mesh, params, dt)?;
        if !t.is_finite() {
            return Err(Error::BlowUp {
                step: state.steps + 1,
                max_abs: f64::INFINITY,
            });
        }
        Ok(state.advanced(t, dt))
    }
}

/// One Lie-split step (parallel IMEX or Newton sweep, then radial sweep).
pub fn step_split(
    state: &State2D,
    params: &Params2D,
    dt: f64,
    scheme: Scheme,
    visc: &ViscosityState,
    newton: &NewtonOptions,
) -> Result<State2D> {
    SplitStepper::new(scheme, *newton)?.step(state, params, dt, visc)
}

/// `out[i, j]` = net parallel plus radial flux into cell `(i, j)`, divided by
/// its area; i.e. `dT/dt` of the semi-discrete system.
pub fn rates(t: &Field2D, mesh: &Mesh2D, params: &Params2D, out: &mut Field2D) {
    let ws = mesh.s().widths();
    let wr = mesh.r().widths();
    let ns = mesh.ns();
    let mut p = Vec::with_capacity(ns);
    for j in 0..mesh.nr() {
        let bc = params.row_boundary(mesh, j);
        let row_out = out.row_mut(j);
        line::flux_divergence(t.row(j), ws, params.k_par, bc, &mut p, row_out);
        for (v, w) in row_out.iter_mut().zip(ws) {
            *v /= w;
        }
    }
    let data = out.as_mut_slice();
    let tv = t.as_slice();
    for j in 0..mesh.nr().saturating_sub(1) {
        let b = 2.0 * params.k_perp / (wr[j] + wr[j + 1]);
        let (inv_lo, inv_hi) = (1.0 / wr[j], 1.0 / wr[j + 1]);
        for i in 0..ns {
            let g = b * (tv[(j + 1) * ns + i] - tv[j * ns + i]);
            data[j * ns + i] += g * inv_lo;
            data[(j + 1) * ns + i] -= g * inv_hi;
        }
    }
    let g0 = params.inner_flux() / wr[0];
    data[..ns].iter_mut().for_each(|v| *v -= g0);
}

/// Largest stable forward-Euler step for a field bounded by `max_t`: the
/// parallel and radial monotonicity limits combined harmonically.
pub fn explicit_dt_2d(mesh: &Mesh2D, max_t: f64, params: &Params2D) -> Result<f64> {
    let s_rate = match heat1d::cfl_dt(mesh.s(), max_t, &params.parallel()) {
        Ok(b) => 1.0 / b,
        Err(Error::Degenerate(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let (xi_r, dr) = (mesh.r().xi(), mesh.r().max_width());
    let r_rate = 2.0 * params.k_perp / (xi_r * xi_r * dr * dr);
    let rate = s_rate + r_rate;
    if rate <= 0.0 {
        return Err(Error::Degenerate("no diffusion and no outflow".into()));
    }
    Ok(1.0 / rate)
}

/// Forward-Euler step of the unsplit semi-discrete system.
pub fn step_explicit_2d(state: &State2D, params: &Params2D, dt: f64) -> Result<State2D> {
    let mut stepper = ExplicitStepper2D::new(&state.mesh, params);
    let mut t = state.t.clone();
    stepper.step_in_place(&mut t, dt)?;
    check_growth(state.t.as_slice(), t.as_slice(), state.steps + 1)?;
    Ok(state.advanced(t, dt))
}

/// Fused forward-Euler kernel with precomputed face coefficients; used for
/// long reference integrations.
#[derive(Debug, Clone)]
pub struct ExplicitStepper2D {
    ns: usize,
    nr: usize,
    sol_start: usize,
    /// `(4K∥/7) / (Δs_i + Δs_{i+1})` for interior faces, then the wrap face.
    cs: Vec<f64>,
    cs_wrap: f64,
    /// `2K⊥ / (Δr_j + Δr_{j+1})`.
    cr: Vec<f64>,
    inv_ws: Vec<f64>,
    inv_wr: Vec<f64>,
    gamma: f64,
    inner_flux: f64,
    p: Vec<f64>,
    out: Vec<f64>,
    last_max: Option<f64>,
}

impl ExplicitStepper2D {
    pub fn new(mesh: &Mesh2D, params: &Params2D) -> Self {
        let ws = mesh.s().widths();
        let wr = mesh.r().widths();
        let c = 4.0 * params.k_par / 7.0;
        let ns = ws.len();
        Self {
            ns,
            nr: wr.len(),
            sol_start: mesh.sol_start_index(),
            cs: ws.windows(2).map(|w| c / (w[0] + w[1])).collect(),
            cs_wrap: c / (ws[ns - 1] + ws[0]),
            cr: wr.windows(2).map(|w| 2.0 * params.k_perp / (w[0] + w[1])).collect(),
            inv_ws: ws.iter().map(|w| 1.0 / w).collect(),
            inv_wr: wr.iter().map(|w| 1.0 / w).collect(),
            gamma: params.gamma,
            inner_flux: params.inner_flux(),
            p: vec![0.0; ns],
            out: vec![0.0; ns * wr.len()],
            last_max: None,
        }
    }

    /// `max |T|` after the most recent successful step.
    pub fn last_max_abs(&self) -> Option<f64> {
        self.last_max
    }

    /// Advance `t` by `dt`; fails on non-finite values.
    pub fn step_in_place(&mut self, t: &mut Field2D, dt: f64) -> Result<()> {
        check_dt(dt)?;
        let (ns, nr) = (self.ns, self.nr);
        let tv = t.as_slice();
        self.last_max = None;
        let mut max = 0.0f64;
        let mut finite = true;
        for j in 0..nr {
            let row = &tv[j * ns..(j + 1) * ns];
            for (p, &v) in self.p.iter_mut().zip(row) {
                *p = pow_7_2(v);
            }
            let out = &mut self.out[j * ns..(j + 1) * ns];
            // parallel flux divergence
            let p = &self.p;
            for i in 1..ns.saturating_sub(1) {
                out[i] = self.cs[i] * (p[i + 1] - p[i]) - self.cs[i - 1] * (p[i] - p[i - 1]);
            }
            if ns == 1 {
                out[0] = 0.0;
            } else {
                out[0] = self.cs[0] * (p[1] - p[0]);
                out[ns - 1] = -self.cs[ns - 2] * (p[ns - 1] - p[ns - 2]);
            }
            if j >= self.sol_start {
                out[0] -= self.gamma * row[0];
                out[ns - 1] -= self.gamma * row[ns - 1];
            } else if ns > 1 {
                let f = self.cs_wrap * (p[0] - p[ns - 1]);
                out[ns - 1] += f;
                out[0] -= f;
            }
            for (o, iw) in out.iter_mut().zip(&self.inv_ws) {
                *o *= iw;
            }
            // radial flux divergence
            let iwr = self.inv_wr[j];
            if j + 1 < nr {
                let up = &tv[(j + 1) * ns..(j + 2) * ns];
                let c = self.cr[j] * iwr;
                for ((o, a), b) in out.iter_mut().zip(row).zip(up) {
                    *o += c * (b - a);
                }
            } else {
                // insulated outer edge
            }
            if j > 0 {
                let down = &tv[(j - 1) * ns..j * ns];
                let c = self.cr[j - 1] * iwr;
                for ((o, a), b) in out.iter_mut().zip(row).zip(down) {
                    *o -= c * (a - b);
                }
            } else {
                let g = self.inner_flux * iwr;
                out.iter_mut().for_each(|o| *o -= g);
            }
            for (o, &a) in out.iter_mut().zip(row) {
                *o = a + dt * *o;
                finite &= o.is_finite();
                max = max.max(o.abs());
            }
        }
        t.swap_data(&mut self.out);
        if !finite {
            return Err(Error::BlowUp {
                step: 0,
                max_abs: f64::INFINITY,
            });
        }
        self.last_max = Some(max);
        Ok(())
    }
}

/// Options of the unsplit solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnsplitOptions {
    /// Nonlinear iteration control (implicit mode).
    pub newton: NewtonOptions,
    /// Relative residual of the conjugate-gradient solves.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for UnsplitOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions {
                tol: 1e-10,
                max_iter: 100,
            },
            cg_tol: DEFAULT_CG_TOL,
            cg_max_iter: 20_000,
        }
    }
}

/// Five-point sparsity pattern with precomputed storage slots per face.
#[derive(Debug, Clone)]
struct FivePoint {
    matrix: CsrMatrix,
    area: Vec<f64>,
    diag_slot: Vec<usize>,
    /// `(left, right, weight, [ll, lr, rl, rr])`; `weight = Δr_j / hsum`.
    s_faces: Vec<(usize, usize, f64, [usize; 4])>,
    /// `(lower, upper, weight, slots)`; `weight = Δs_i * 2 / hsum`.
    r_faces: Vec<(usize, usize, f64, [usize; 4])>,
    /// Limiter cells `(k, Δr_j)`, once per limiter face.
    limiter: Vec<(usize, f64)>,
}

impl FivePoint {
    fn new(mesh: &Mesh2D) -> Result<Self> {
        let (ns, nr) = (mesh.ns(), mesh.nr());
        let n = ns * nr;
        let ws = mesh.s().widths();
        let wr = mesh.r().widths();
        let mut s_faces = Vec::new();
        let mut r_faces = Vec::new();
        let mut limiter = Vec::new();
        for j in 0..nr {
            let bc = if mesh.is_sol_row(j) {
                LineBoundary::Limiter { gamma: 0.0 }
            } else {
                LineBoundary::Periodic
            };
            for (l, r, hsum) in line::faces(ws, bc) {
                if l != r {
                    s_faces.push((j * ns + l, j * ns + r, wr[j] / hsum, [0; 4]));
                }
            }
            if mesh.is_sol_row(j) {
                limiter.push((j * ns, wr[j]));
                limiter.push((j * ns + ns - 1, wr[j]));
            }
        }
        for j in 0..nr.saturating_sub(1) {
            for i in 0..ns {
                r_faces.push((j * ns + i, (j + 1) * ns + i, ws[i] * 2.0 / (wr[j] + wr[j + 1]), [0; 4]));
            }
        }
        let mut triplets: Vec<(usize, usize, f64)> = (0..n).map(|k| (k, k, 0.0)).collect();
        for &(l, r, _, _) in s_faces.iter().chain(&r_faces) {
            triplets.push((l, r, 0.0));
            triplets.push((r, l, 0.0));
        }
        let matrix = CsrMatrix::from_triplets(n, triplets)?;
        let slot = |a, b| matrix.position(a, b).expect("entry in pattern");
        for f in s_faces.iter_mut().chain(r_faces.iter_mut()) {
            f.3 = [slot(f.0, f.0), slot(f.0, f.1), slot(f.1, f.0), slot(f.1, f.1)];
        }
        let diag_slot = (0..n).map(|k| slot(k, k)).collect();
        let area = (0..nr)
            .flat_map(|j| (0..ns).map(move |i| (i, j)))
            .map(|(i, j)| mesh.cell_area(i, j))
            .collect();
        Ok(Self {
            matrix,
            area,
            diag_slot,
            s_faces,
            r_faces,
            limiter,
        })
    }

    /// `W + dt (Σ_s κ_f Δr/hsum + K⊥ L_r + γ limiter)`, with per-face parallel
    /// conductance `kappa(face index)` (already including the `2ν` or secant factor).
    fn assemble(&mut self, dt: f64, params: &Params2D, kappa: impl Fn(usize) -> f64) {
        let vals = self.matrix.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (k, &slot) in self.diag_slot.iter().enumerate() {
            vals[slot] = self.area[k];
        }
        let add_face = |vals: &mut [f64], slots: &[usize; 4], c: f64| {
            vals[slots[0]] += c;
            vals[slots[1]] -= c;
            vals[slots[2]] -= c;
            vals[slots[3]] += c;
        };
        for (f, (_, _, weight, slots)) in self.s_faces.iter().enumerate() {
            add_face(vals, slots, dt * weight * kappa(f));
        }
        for (_, _, weight, slots) in &self.r_faces {
            add_face(vals, slots, dt * weight * params.k_perp);
        }
        for &(k, dr) in &self.limiter {
            vals[self.diag_slot[k]] += dt * params.gamma * dr;
        }
    }
}

/// Unsplit stepper: implicit mode uses a secant-conductance iteration whose
/// linearizations are SPD; IMEX mode solves one constant SPD system per step.
#[derive(Debug, Clone)]
pub struct UnsplitStepper {
    pub scheme: Scheme,
    pub options: UnsplitOptions,
    pattern: Option<FivePoint>,
    imex_key: Option<(f64, f64)>,
    /// Conjugate-gradient iterations spent in the last step.
    pub last_cg_iterations: usize,
    /// Nonlinear iterations spent in the last step (implicit mode).
    pub last_nonlinear_iterations: usize,
}

impl UnsplitStepper {
    pub fn new(scheme: Scheme, options: UnsplitOptions) -> Result<Self> {
        if scheme == Scheme::Explicit {
            return Err(invalid("unsplit stepping supports implicit and imex schemes"));
        }
        Ok(Self {
            scheme,
            options,
            pattern: None,
            imex_key: None,
            last_cg_iterations: 0,
            last_nonlinear_iterations: 0,
        })
    }

    pub fn step(
        &mut self,
        state: &State2D,
        params: &Params2D,
        dt: f64,
        visc: &ViscosityState,
    ) -> Result<State2D> {
        check_dt(dt)?;
        let mesh = &*state.mesh;
        if self.pattern.as_ref().map(|p| p.area.len()) != Some(mesh.ns() * mesh.nr()) {
            self.pattern = Some(FivePoint::new(mesh)?);
            self.imex_key = None;
        }
        let t = match self.scheme {
            Scheme::Imex => self.imex(state, params, dt, visc.nu())?,
            Scheme::Implicit => self.implicit(state, params, dt)?,
            Scheme::Explicit => unreachable!(),
        };
        Ok(state.advanced(t, dt))
    }

    fn imex(&mut self, state: &State2D, params: &Params2D, dt: f64, nu: f64) -> Result<Field2D> {
        let mesh = &*state.mesh;
        let pattern = self.pattern.as_mut().unwrap();
        if self.imex_key != Some((nu, dt)) {
            pattern.assemble(dt, params, |_| 2.0 * nu);
            self.imex_key = Some((nu, dt));
        }
        let (ns, nr) = (mesh.ns(), mesh.nr());
        let ws = mesh.s().widths();
        let wr = mesh.r().widths();
        let mut rhs = Vec::with_capacity(ns * nr);
        let mut row = Vec::with_capacity(ns);
        for j in 0..nr {
            let bc = params.row_boundary(mesh, j);
            line::imex_rhs(state.t.row(j), ws, params.k_par, nu, dt, bc, &mut row);
            rhs.extend(row.iter().map(|v| v * wr[j]));
        }
        let influx = -dt * params.inner_flux();
        for (v, w) in rhs[..ns].iter_mut().zip(ws) {
            *v += influx * w;
        }
        let sol = conjugate_gradient(
            &pattern.matrix,
            &rhs,
            Some(state.t.as_slice()),
            self.options.cg_tol,
            self.options.cg_max_iter,
        )?;
        self.last_cg_iterations = sol.iterations;
        self.last_nonlinear_iterations = 0;
        Ok(Field2D::from_rows(ns, nr, sol.x).unwrap())
    }

    fn implicit(&mut self, state: &State2D, params: &Params2D, dt: f64) -> Result<Field2D> {
        self.imex_key = None;
        let mesh = &*state.mesh;
        let (ns, nr) = (mesh.ns(), mesh.nr());
        let n = ns * nr;
        let c = 4.0 * params.k_par / 7.0;
        let opts = self.options.newton;
        let target = opts.tol * (1.0 + state.max_abs());
        let old = state.t.as_slice();
        let mut x = state.t.clone();
        let mut rate = Field2D::filled(ns, nr, 0.0);
        let mut res = vec![0.0; n];
        let mut cg_total = 0;
        let mut residual = f64::INFINITY;
        for it in 0..=opts.max_iter {
            rates(&x, mesh, params, &mut rate);
            let pattern = self.pattern.as_mut().unwrap();
            residual = 0.0;
            for k in 0..n {
                let r = x.as_slice()[k] - old[k] - dt * rate.as_slice()[k];
                residual = f64::max(residual, r.abs());
                res[k] = -r * pattern.area[k];
            }
            if !residual.is_finite() {
                break;
            }
            if residual <= target {
                self.last_cg_iterations = cg_total;
                self.last_nonlinear_iterations = it;
                return Ok(x);
            }
            if it == opts.max_iter {
                break;
            }
            let xs = x.as_slice();
            let faces: Vec<(usize, usize)> = pattern.s_faces.iter().map(|f| (f.0, f.1)).collect();
            pattern.assemble(dt, params, |f| {
                let (l, r) = faces[f];
                let (a, b) = (xs[l], xs[r]);
                let secant = if a != b {
                    (pow_7_2(b) - pow_7_2(a)) / (b - a)
                } else {
                    3.5 * pow_5_2(a)
                };
                c * secant
            });
            let sol = conjugate_gradient(&pattern.matrix, &res, None, 1e-8, self.options.cg_max_iter)?;
            cg_total += sol.iterations;
            for (v, d) in x.as_mut_slice().iter_mut().zip(&sol.x) {
                *v += d;
            }
        }
        Err(Error::NonConvergence {
            solver: "secant-conductance iteration",
            iterations: opts.max_iter,
            residual,
        })
    }
}

/// One unsplit step (fresh stepper; see [`UnsplitStepper`] for reuse).
pub fn step_unsplit(
    state: &State2D,
    params: &Params2D,
    dt: f64,
    scheme: Scheme,
    visc: &ViscosityState,
    options: &UnsplitOptions,
) -> Result<State2D> {
    UnsplitStepper::new(scheme, *options)?.step(state, params, dt, visc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{boundary_mass_rate, relative_error, split_energy_2d};
    use crate::heat1d::update_viscosity;
    use crate::mesh::MeshField;

    fn edge() -> Params2D {
        Params2D::new(1.0, 0.01, 2.0, 10.0).unwrap()
    }

    fn bumpy(ns: usize, nr: usize) -> Field2D {
        Field2D::from_fn(ns, nr, |i, j| {
            let s = (i as f64 + 0.5) / ns as f64;
            let r = (j as f64 + 0.5) / nr as f64;
            2.0 + (6.0 * s).sin() * 0.7 + r * (1.0 - r) + 0.3 * ((i * 7 + j * 3) % 5) as f64
        })
    }

    fn all_steppers() -> Vec<Box<dyn FnMut(&State2D, &Params2D, f64, &ViscosityState) -> Result<State2D>>> {
        let mut a = SplitStepper::new(Scheme::Imex, NewtonOptions::default()).unwrap();
        let mut b = SplitStepper::new(Scheme::Implicit, NewtonOptions::default()).unwrap();
        let mut c = UnsplitStepper::new(Scheme::Imex, UnsplitOptions::default()).unwrap();
        let mut d = UnsplitStepper::new(Scheme::Implicit, UnsplitOptions::default()).unwrap();
        vec![
            Box::new(move |s, p, dt, v| a.step(s, p, dt, v)),
            Box::new(move |s, p, dt, v| b.step(s, p, dt, v)),
            Box::new(move |s, p, dt, v| c.step(s, p, dt, v)),
            Box::new(move |s, p, dt, v| d.step(s, p, dt, v)),
            Box::new(|s, p, dt, _| step_explicit_2d(s, p, dt)),
        ]
    }

    #[test]
    fn constant_insulated_field_is_steady() {
        let mesh = Arc::new(Mesh2D::uniform(8, 6).unwrap());
        let state = State2D::constant(mesh, 3.0).unwrap();
        let p = Params2D::new(1.0, 0.01, 0.0, 0.0).unwrap();
        let v = ViscosityState::initial(1.0, 3.0);
        for mut step in all_steppers() {
            let next = step(&state, &p, 1e-4, &v).unwrap();
            for x in next.t.as_slice() {
                assert!((x - 3.0).abs() < 1e-12, "{x}");
            }
        }
    }

    #[test]
    fn core_influx_adds_exact_mass() {
        let mesh = Arc::new(Mesh2D::uniform(10, 10).unwrap());
        let state = State2D::constant(mesh, 3.0).unwrap();
        let p = Params2D::new(1.0, 0.01, 0.0, 10.0).unwrap();
        let v = ViscosityState::initial(1.0, 3.0);
        for mut step in all_steppers() {
            let next = step(&state, &p, 1e-3, &v).unwrap();
            let gain = next.mass() - state.mass();
            assert!((gain - 1e-4).abs() < 1e-12, "{gain}");
        }
    }

    #[test]
    fn explicit_mass_budget_with_limiter() {
        let mesh = Arc::new(Mesh2D::uniform(12, 8).unwrap());
        let p = edge();
        let mut state = State2D::new(Arc::clone(&mesh), bumpy(12, 8)).unwrap();
        let dt = explicit_dt_2d(&mesh, state.max_abs(), &p).unwrap();
        for _ in 0..100 {
            let rate = boundary_mass_rate(&state.t, &mesh, &p);
            let next = step_explicit_2d(&state, &p, dt).unwrap();
            assert!((next.mass() - state.mass() - dt * rate).abs() < 1e-13);
            state = next;
        }
    }

    #[test]
    fn split_mass_budget_uses_post_sweep_boundary_values() {
        let mesh = Arc::new(Mesh2D::uniform(12, 8).unwrap());
        let p = edge();
        let state = State2D::new(Arc::clone(&mesh), bumpy(12, 8)).unwrap();
        let v = ViscosityState::initial(1.0, state.max_abs());
        let dt = 1e-3;
        let mut st = SplitStepper::new(Scheme::Imex, NewtonOptions::default()).unwrap();
        let mut t = state.t.clone();
        st.parallel_sweep(&mut t, &mesh, &p, dt, &v).unwrap();
        let mid = State2D::new(Arc::clone(&mesh), t.clone()).unwrap();
        let no_influx = Params2D { q_perp: 0.0, ..p };
        let expect = dt * boundary_mass_rate(&t, &mesh, &no_influx);
        assert!((mid.mass() - state.mass() - expect).abs() < 1e-13);
        st.radial_sweep(&mut t, &mesh, &p, dt).unwrap();
        let end = State2D::new(mesh, t).unwrap();
        assert!((end.mass() - mid.mass() - dt * 0.1).abs() < 1e-13);
    }

    #[test]
    fn s_independence_is_preserved() {
        let mesh = Arc::new(Mesh2D::uniform(9, 6).unwrap());
        let p = Params2D::new(1.0, 0.01, 0.0, 10.0).unwrap();
        let init = Field2D::from_fn(9, 6, |_, j| 1.0 + 0.4 * j as f64);
        let state = State2D::new(mesh, init).unwrap();
        let v = ViscosityState::initial(1.0, state.max_abs());
        for (k, mut step) in all_steppers().into_iter().enumerate() {
            let mut s = state.clone();
            for _ in 0..5 {
                s = step(&s, &p, 1e-4, &v).unwrap();
            }
            for j in 0..6 {
                let row = s.t.row(j);
                // unsplit steppers are exact only up to the CG tolerance
                let tol = if k == 2 || k == 3 { 1e-9 } else { 1e-12 };
                for x in row {
                    assert!((x - row[0]).abs() < tol * row[0], "stepper {k}: {x} vs {}", row[0]);
                }
            }
        }
    }

    #[test]
    fn core_rows_are_rotation_equivariant() {
        // Shifting a core row periodically commutes with the step.
        let (ns, nr) = (8, 4);
        let mesh = Arc::new(Mesh2D::uniform(ns, nr).unwrap());
        let p = edge();
        let base = bumpy(ns, nr);
        let shifted = Field2D::from_fn(ns, nr, |i, j| base[((i + 3) % ns, j)]);
        let v = ViscosityState::initial(1.0, base.max_abs());
        let mut st = SplitStepper::new(Scheme::Imex, NewtonOptions::default()).unwrap();
        let mut a = base.clone();
        let mut b = shifted;
        st.parallel_sweep(&mut a, &mesh, &p, 1e-3, &v).unwrap();
        st.parallel_sweep(&mut b, &mesh, &p, 1e-3, &v).unwrap();
        for j in 0..mesh.sol_start_index() {
            for i in 0..ns {
                assert!((b[(i, j)] - a[((i + 3) % ns, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn split_energy_estimate() {
        let (ns, nr) = (16, 10);
        let mesh = Arc::new(Mesh2D::uniform(ns, nr).unwrap());
        let p = edge();
        let mut state = State2D::new(Arc::clone(&mesh), bumpy(ns, nr)).unwrap();
        let mut v = ViscosityState::initial(1.0, state.max_abs());
        let dt = 1e-3;
        let mut st = SplitStepper::new(Scheme::Imex, NewtonOptions::default()).unwrap();
        for _ in 0..50 {
            assert!(v.nu() >= ViscosityState::bound(state.t.as_slice(), p.k_par));
            let before = split_energy_2d(&state.t, &mesh, p.gamma, v.nu(), dt);
            let next = st.step(&state, &p, dt, &v).unwrap();
            let after = split_energy_2d(&next.t, &mesh, p.gamma, v.nu(), dt);
            let ws = mesh.s().widths();
            let influx: f64 = dt * p.k_perp * p.q_perp * next.t.row(0).iter().zip(ws).map(|(t, w)| t * w).sum::<f64>();
            assert!(after <= before + influx + 1e-12 * before, "{after} > {before} + {influx}");
            v = update_viscosity(v, next.t.as_slice(), p.k_par);
            state = next;
        }
    }

    #[test]
    fn schemes_agree_as_dt_shrinks() {
        let (ns, nr) = (16, 8);
        let mesh = Arc::new(Mesh2D::uniform(ns, nr).unwrap());
        let p = edge();
        let init = State2D::new(Arc::clone(&mesh), bumpy(ns, nr)).unwrap();
        let t_end = 0.02;
        let mut reference = init.clone();
        let mut stepper = ExplicitStepper2D::new(&mesh, &p);
        let dt = explicit_dt_2d(&mesh, init.max_abs(), &p).unwrap();
        let n = (t_end / dt).ceil() as usize;
        for _ in 0..n {
            stepper.step_in_place(&mut reference.t, t_end / n as f64).unwrap();
        }
        let reference = MeshField::Two((*mesh).clone(), reference.t);
        for scheme in [Scheme::Imex, Scheme::Implicit] {
            for unsplit in [false, true] {
                let mut errs = Vec::new();
                for k in [20usize, 80] {
                    let dt = t_end / k as f64;
                    let mut s = init.clone();
                    let mut v = ViscosityState::initial(1.0, s.max_abs());
                    let mut sp = SplitStepper::new(scheme, NewtonOptions::default()).unwrap();
                    let mut us = UnsplitStepper::new(scheme, UnsplitOptions::default()).unwrap();
                    for _ in 0..k {
                        s = if unsplit { us.step(&s, &p, dt, &v) } else { sp.step(&s, &p, dt, &v) }.unwrap();
                        v = update_viscosity(v, s.t.as_slice(), p.k_par);
                    }
                    errs.push(relative_error(&MeshField::Two((*mesh).clone(), s.t), &reference).unwrap());
                }
                assert!(errs[1] < errs[0] / 2.0, "{scheme} unsplit={unsplit}: {errs:?}");
            }
        }
    }

    #[test]
    fn fused_step_tracks_max() {
        let mesh = Arc::new(Mesh2D::uniform(8, 6).unwrap());
        let t = Field2D::from_fn(8, 6, |i, j| 1.0 + 0.3 * i as f64 + 0.1 * (j * j) as f64);
        let mut state = State2D::new(Arc::clone(&mesh), t).unwrap();
        let mut stepper = ExplicitStepper2D::new(&mesh, &edge());
        assert_eq!(stepper.last_max_abs(), None);
        stepper.step_in_place(&mut state.t, 1e-5).unwrap();
        assert_eq!(stepper.last_max_abs(), Some(state.max_abs()));
    }

    #[test]
    fn explicit_blows_up_beyond_bound() {
        let mesh = Arc::new(Mesh2D::uniform(10, 10).unwrap());
        let p = edge();
        let mut state = State2D::new(Arc::clone(&mesh), bumpy(10, 10)).unwrap();
        let dt = 50.0 * explicit_dt_2d(&mesh, state.max_abs(), &p).unwrap();
        let mut failed = false;
        for _ in 0..200 {
            match step_explicit_2d(&state, &p, dt) {
                Ok(s) => state = s,
                Err(Error::BlowUp { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => panic!("{e}"),
            }
        }
        assert!(failed);
    }

    #[test]
    fn rejects_bad_steps() {
        let mesh = Arc::new(Mesh2D::uniform(4, 4).unwrap());
        let state = State2D::constant(mesh, 1.0).unwrap();
        let v = ViscosityState::initial(1.0, 1.0);
        assert!(step_split(&state, &edge(), 0.0, Scheme::Imex, &v, &NewtonOptions::default()).is_err());
        assert!(step_explicit_2d(&state, &edge(), -1.0).is_err());
        assert!(SplitStepper::new(Scheme::Explicit, NewtonOptions::default()).is_err());
    }
}
