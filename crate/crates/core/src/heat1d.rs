//! Parallel heat conduction on a line with limiter outflow at both ends.
//!
//! The cell balance is `dT_i/dt = (F_{i+1/2} - F_{i-1/2}) / Δs_i` with the
//! nonlinear face flux `F = (4K/7) (P(T_R) - P(T_L)) / (Δs_L + Δs_R)`,
//! `P(T) = sign(T) |T|^{7/2}`, and boundary fluxes `+γT` (left), `-γT` (right).

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::field::{max_abs, pow_5_2, pow_7_2};
use crate::line::{self, ImexLineOperator, LineBoundary, NewtonOptions};
use crate::mesh::Mesh1D;

/// Smallest viscosity ever used, so the IMEX operator stays well defined when
/// the field or the conductivity vanishes.
pub const NU_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params1D {
    /// Parallel conductivity prefactor `K∥`.
    pub k_par: f64,
    /// Limiter outflow coefficient `γ`.
    pub gamma: f64,
}

impl Params1D {
    pub fn new(k_par: f64, gamma: f64) -> Result<Self> {
        let p = Self { k_par, gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_par >= 0.0 && self.k_par.is_finite()) {
            return Err(invalid("k_par must be finite and nonnegative"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma must be finite and nonnegative"));
        }
        Ok(())
    }

    pub(crate) fn boundary(&self) -> LineBoundary {
        LineBoundary::Limiter { gamma: self.gamma }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State1D {
    pub mesh: Arc<Mesh1D>,
    /// Cell averages.
    pub t: Vec<f64>,
    pub time: f64,
    /// Number of steps taken since the initial state.
    pub steps: usize,
}

impl State1D {
    pub fn new(mesh: Arc<Mesh1D>, t: Vec<f64>) -> Result<Self> {
        if t.len() != mesh.len() {
            return Err(invalid("field length does not match mesh"));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial field must be finite"));
        }
        Ok(Self {
            mesh,
            t,
            time: 0.0,
            steps: 0,
        })
    }

    pub fn constant(mesh: Arc<Mesh1D>, value: f64) -> Result<Self> {
        let n = mesh.len();
        Self::new(mesh, vec![value; n])
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.t)
    }

    pub fn mass(&self) -> f64 {
        self.t.iter().zip(self.mesh.widths()).map(|(v, w)| v * w).sum()
    }

    fn advanced(&self, t: Vec<f64>, dt: f64) -> Self {
        Self {
            mesh: Arc::clone(&self.mesh),
            t,
            time: self.time + dt,
            steps: self.steps + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Interior face flux between a left and a right cell.
pub fn parallel_flux(t_left: f64, t_right: f64, w_left: f64, w_right: f64, k_par: f64) -> f64 {
    4.0 * k_par / 7.0 * (pow_7_2(t_right) - pow_7_2(t_left)) / (w_left + w_right)
}

/// Limiter flux at the left (`+γT`) or right (`-γT`) end of a line.
pub fn boundary_flux(t_cell: f64, gamma: f64, side: Side) -> f64 {
    match side {
        Side::Left => gamma * t_cell,
        Side::Right => -gamma * t_cell,
    }
}

/// Largest explicit time step that keeps every update a convex combination of
/// old values: `ξ² Δs² / (2 max(K∥ M^{5/2}, γ Δs))` with `M = t0_max`.
pub fn cfl_dt(mesh: &Mesh1D, t0_max: f64, params: &Params1D) -> Result<f64> {
    if !(t0_max >= 0.0) {
        return Err(invalid("t0_max must be nonnegative"));
    }
    let ds = mesh.max_width();
    let denom = 2.0 * f64::max(params.k_par * pow_5_2(t0_max), params.gamma * ds);
    if denom <= 0.0 {
        return Err(Error::Degenerate(
            "no diffusion and no outflow: every time step is stable".into(),
        ));
    }
    let xi = mesh.xi();
    Ok(xi * xi * ds * ds / denom)
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("time step must be positive, got {dt}")))
    }
}

/// Forward Euler step with fluxes evaluated at the current level.
pub fn step_explicit(state: &State1D, params: &Params1D, dt: f64) -> Result<State1D> {
    check_dt(dt)?;
    let widths = state.mesh.widths();
    let mut div = vec![0.0; widths.len()];
    let mut p = Vec::with_capacity(widths.len());
    line::flux_divergence(&state.t, widths, params.k_par, params.boundary(), &mut p, &mut div);
    let t: Vec<f64> = state
        .t
        .iter()
        .zip(&div)
        .zip(widths)
        .map(|((v, d), w)| v + dt * d / w)
        .collect();
    check_growth(&state.t, &t, state.steps + 1)?;
    Ok(state.advanced(t, dt))
}

/// Non-finite values, or growth of the max-norm by more than a factor of ten
/// in one step, are reported as a blow-up.
pub(crate) fn check_growth(old: &[f64], new: &[f64], step: usize) -> Result<()> {
    let new_max = new.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if !new_max.is_finite() || new_max > 10.0 * max_abs(old).max(f64::MIN_POSITIVE) {
        return Err(Error::BlowUp { step, max_abs: new_max });
    }
    Ok(())
}

/// Backward Euler step: solves the nonlinear balance at the new level by Newton.
pub fn step_implicit(
    state: &State1D,
    params: &Params1D,
    dt: f64,
    newton: &NewtonOptions,
) -> Result<State1D> {
    check_dt(dt)?;
    let (t, _) = line::newton_line(
        &state.t,
        state.mesh.widths(),
        params.k_par,
        params.boundary(),
        dt,
        newton,
    )?;
    Ok(state.advanced(t, dt))
}

/// IMEX step: the `ν`-Laplacian and the limiter fluxes are implicit, the
/// remainder `(K∥ avg(T^{5/2}) - ν) ∂_s T` of the parallel flux is explicit.
pub fn step_imex(
    state: &State1D,
    params: &Params1D,
    dt: f64,
    visc: &ViscosityState,
) -> Result<State1D> {
    ImexStepper1D::default().step(state, params, dt, visc)
}

/// IMEX stepper that keeps the factored implicit operator while `ν` and `dt`
/// are unchanged.
#[derive(Debug, Clone, Default)]
pub struct ImexStepper1D {
    op: Option<ImexLineOperator>,
    scratch: Vec<f64>,
}

impl ImexStepper1D {
    pub fn step(
        &mut self,
        state: &State1D,
        params: &Params1D,
        dt: f64,
        visc: &ViscosityState,
    ) -> Result<State1D> {
        check_dt(dt)?;
        let widths = state.mesh.widths();
        let nu = visc.nu();
        let op = match self.op.take() {
            Some(op) if op.matches(nu, dt) => op,
            _ => ImexLineOperator::new(widths, nu, dt, params.boundary())?,
        };
        let mut t = state.t.clone();
        op.step(&mut t, widths, params.k_par, params.boundary(), &mut self.scratch);
        self.op = Some(op);
        Ok(state.advanced(t, dt))
    }
}

/// Implicit viscosity `ν` of the IMEX scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityState {
    nu: f64,
}

impl ViscosityState {
    pub fn new(nu: f64) -> Result<Self> {
        if nu > 0.0 && nu.is_finite() {
            Ok(Self { nu })
        } else {
            Err(invalid(format!("viscosity must be positive, got {nu}")))
        }
    }

    /// `ν = 2 K∥ ‖T0‖∞^{5/2}`.
    pub fn initial(k_par: f64, t0_max: f64) -> Self {
        Self {
            nu: (2.0 * k_par * pow_5_2(t0_max)).max(NU_MIN),
        }
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Stability floor `K∥ max|T|^{5/2}` for a field.
    pub fn bound(field: &[f64], k_par: f64) -> f64 {
        k_par * pow_5_2(max_abs(field))
    }
}

/// Readjust `ν` after a step from the new field's max-norm.
///
/// With `b = K∥ ‖T‖∞^{5/2}`: if `ν ≤ 5b/4` reset to `2b`; if `ν ≥ 4b` reset
/// to `b/2`; finally raise to the floor `b` (and to [`NU_MIN`]).
pub fn update_viscosity(visc: ViscosityState, field: &[f64], k_par: f64) -> ViscosityState {
    update_viscosity_with_bound(visc, ViscosityState::bound(field, k_par))
}

pub(crate) fn update_viscosity_with_bound(visc: ViscosityState, b: f64) -> ViscosityState {
    let mut nu = visc.nu;
    if b > 0.0 {
        if nu <= 1.25 * b {
            nu = 2.0 * b;
        }
        if nu >= 4.0 * b {
            nu = 0.5 * b;
        }
        nu = nu.max(b);
    }
    ViscosityState { nu: nu.max(NU_MIN) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mesh(n: usize) -> Arc<Mesh1D> {
        Arc::new(Mesh1D::uniform(n).unwrap())
    }

    #[test]
    fn flux_examples() {
        assert_eq!(parallel_flux(1.0, 1.0, 0.1, 0.1, 1.0), 0.0);
        let f = parallel_flux(0.0, 1.0, 0.1, 0.1, 1.0);
        assert!((f - 20.0 / 7.0).abs() < 1e-12);
        assert_eq!(parallel_flux(1.0, 0.0, 0.1, 0.1, 1.0), -f);
    }

    #[test]
    fn boundary_flux_examples() {
        assert_eq!(boundary_flux(5.0, 2.0, Side::Left), 10.0);
        assert_eq!(boundary_flux(5.0, 2.0, Side::Right), -10.0);
        assert_eq!(boundary_flux(5.0, 0.0, Side::Left), 0.0);
    }

    #[test]
    fn cfl_examples() {
        let p = Params1D::new(1.0, 2.0).unwrap();
        let dt = cfl_dt(&Mesh1D::uniform(450).unwrap(), 5.0, &p).unwrap();
        // (1/450)^2 / (2 * 5^{5/2})
        assert!((dt - 4.416924e-8).abs() < 1e-13, "{dt}");
        let p0 = Params1D::new(0.0, 2.0).unwrap();
        let dt = cfl_dt(&Mesh1D::uniform(10).unwrap(), 5.0, &p0).unwrap();
        assert!((dt - 0.025).abs() < 1e-15);
        let dt = cfl_dt(&Mesh1D::uniform(10).unwrap(), 0.0, &p).unwrap();
        assert!((dt - 0.025).abs() < 1e-15);
        let none = Params1D::new(0.0, 0.0).unwrap();
        assert!(matches!(
            cfl_dt(&Mesh1D::uniform(10).unwrap(), 1.0, &none),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn bound_without_derivative_factor_is_unstable() {
        // Δs² / ((4K/7) M^{5/2}) omits the factor 7/2 of d(T^{7/2})/dT and
        // exceeds the monotone limit; at 0.9 of it the scheme blows up.
        let m = mesh(50);
        let p = Params1D::new(1.0, 2.0).unwrap();
        let ds = 1.0 / 50.0;
        let loose = ds * ds / f64::max(4.0 / 7.0 * pow_5_2(5.0), 2.0 * ds);
        let mut s = State1D::constant(m, 5.0).unwrap();
        let outcome = (0..1000).try_for_each(|_| {
            s = step_explicit(&s, &p, 0.9 * loose)?;
            Ok::<_, Error>(())
        });
        assert!(matches!(outcome, Err(Error::BlowUp { .. })));
    }

    #[test]
    fn explicit_constant_neumann() {
        let p = Params1D::new(1.0, 0.0).unwrap();
        let s = State1D::constant(mesh(8), 2.0).unwrap();
        let next = step_explicit(&s, &p, 1e-3).unwrap();
        assert_eq!(next.t, s.t);
        assert_eq!(next.steps, 1);
    }

    #[test]
    fn single_cell_closed_forms() {
        let p = Params1D::new(1.0, 2.0).unwrap();
        let s = State1D::constant(mesh(1), 5.0).unwrap();
        let e = step_explicit(&s, &p, 0.1).unwrap();
        assert!((e.t[0] - 3.0).abs() < 1e-14);
        let i = step_implicit(&s, &p, 0.1, &NewtonOptions::default()).unwrap();
        assert!((i.t[0] - 5.0 / 1.4).abs() < 1e-12);
        for nu in [0.1, 10.0, 1e3] {
            let v = ViscosityState::new(nu).unwrap();
            let m = step_imex(&s, &p, 0.1, &v).unwrap();
            assert!((m.t[0] - 5.0 / 1.4).abs() < 1e-12);
        }
    }

    #[test]
    fn implicit_constant_neumann() {
        let p = Params1D::new(1.0, 0.0).unwrap();
        let s = State1D::constant(mesh(16), 3.0).unwrap();
        let (t, its) = line::newton_line(&s.t, s.mesh.widths(), 1.0, p.boundary(), 0.1, &NewtonOptions::default()).unwrap();
        assert_eq!(t, s.t);
        assert!(its <= 1);
    }

    #[test]
    fn imex_constant_neumann() {
        let p = Params1D::new(1.0, 0.0).unwrap();
        let s = State1D::constant(mesh(16), 3.0).unwrap();
        let v = ViscosityState::initial(1.0, 3.0);
        let next = step_imex(&s, &p, 0.01, &v).unwrap();
        for x in &next.t {
            assert!((x - 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn explicit_under_cfl_stays_in_range() {
        let m = mesh(50);
        let p = Params1D::new(1.0, 2.0).unwrap();
        let dt = 0.9 * cfl_dt(&m, 5.0, &p).unwrap();
        let mut s = State1D::constant(m, 5.0).unwrap();
        for _ in 0..20_000 {
            s = step_explicit(&s, &p, dt).unwrap();
            assert!(s.t.iter().all(|&v| (0.0..=5.0).contains(&v)));
        }
    }

    #[test]
    fn implicit_random_fields_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = Params1D::new(1.0, 2.0).unwrap();
        for _ in 0..20 {
            let n = rng.gen_range(2..40);
            let m: f64 = rng.gen_range(0.5..6.0);
            let t0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..m)).collect();
            let max0 = max_abs(&t0);
            let mut s = State1D::new(mesh(n), t0).unwrap();
            for _ in 0..5 {
                s = step_implicit(&s, &p, 1e-2, &NewtonOptions::default()).unwrap();
                assert!(s.t.iter().all(|&v| v >= 0.0 && v <= max0));
            }
        }
    }

    #[test]
    fn viscosity_rules() {
        let v = ViscosityState::initial(1.0, 5.0);
        assert!((v.nu() - 111.80339887498948).abs() < 1e-10);
        let b = 2f64.powf(2.5);
        let v = update_viscosity(ViscosityState::new(100.0).unwrap(), &[2.0, -1.0], 1.0);
        assert!((v.nu() - b).abs() < 1e-12);
        let v = update_viscosity(ViscosityState::new(2.0 * b).unwrap(), &[2.0], 1.0);
        assert_eq!(v.nu(), 2.0 * b);
        let v = update_viscosity(ViscosityState::new(1.2 * b).unwrap(), &[2.0], 1.0);
        assert!((v.nu() - 2.0 * b).abs() < 1e-12);
        let zero = update_viscosity(ViscosityState::new(3.0).unwrap(), &[0.0, 0.0], 1.0);
        assert_eq!(zero.nu(), 3.0);
        assert!(ViscosityState::new(0.0).is_err());
    }

    #[test]
    fn mass_conserved_without_outflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Params1D::new(1.0, 0.0).unwrap();
        let t0: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..3.0)).collect();
        let s = State1D::new(mesh(30), t0).unwrap();
        let m0 = s.mass();
        let v = ViscosityState::initial(1.0, s.max_abs());
        let a = step_imex(&s, &p, 1e-3, &v).unwrap();
        let b = step_implicit(&s, &p, 1e-3, &NewtonOptions::default()).unwrap();
        let dt = 0.9 * cfl_dt(&s.mesh, s.max_abs(), &p).unwrap();
        let c = step_explicit(&s, &p, dt).unwrap();
        for next in [a, b, c] {
            assert!((next.mass() - m0).abs() < 1e-12);
        }
    }
}
