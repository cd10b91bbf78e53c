//! Norms, relative errors, energy terms and convergence orders.

use crate::error::{invalid, Error, Result};
use crate::field::{pow_5_2, Field2D};
use crate::heat2d::{Params2D, State2D};
use crate::line::{faces, LineBoundary};
use crate::mesh::{Mesh1D, Mesh2D, MeshField};
use crate::Params1D;

/// Discrete L2 norm, `sqrt(Σ |cell| F²)`.
pub fn l2_norm(field: &MeshField) -> f64 {
    field
        .weighted_values()
        .iter()
        .map(|(w, v)| w * v * v)
        .sum::<f64>()
        .sqrt()
}

/// Relative discrete L2 distance between `candidate` and `reference`
/// restricted onto the candidate mesh.
pub fn relative_error(candidate: &MeshField, reference: &MeshField) -> Result<f64> {
    let restricted = reference.restrict_to(&candidate.mesh())?;
    let c = candidate.weighted_values();
    let r = restricted.weighted_values();
    let mut num = 0.0;
    let mut den = 0.0;
    for ((w, a), (_, b)) in c.iter().zip(&r) {
        num += w * (a - b) * (a - b);
        den += w * b * b;
    }
    if den == 0.0 {
        return Err(Error::UndefinedError);
    }
    Ok((num / den).sqrt())
}

/// Least-squares slope of `log(error)` against `log(parameter)`.
pub fn convergence_order(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(invalid("convergence order needs at least two points"));
    }
    if points.iter().any(|&(h, e)| !(h > 0.0 && e > 0.0)) {
        return Err(invalid("convergence order needs positive parameters and errors"));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid("convergence order needs distinct parameters"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Rates of change of the L2 energy: volumetric dissipation, limiter outflow
/// and core influx.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.e1 + self.e2 + self.e3
    }
}

impl std::ops::Add for EnergyBreakdown {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            e1: self.e1 + o.e1,
            e2: self.e2 + o.e2,
            e3: self.e3 + o.e3,
        }
    }
}

/// `Σ_faces K∥ avg(T^{5/2}) (δT)² / h_f` along one line.
fn line_dissipation(t: &[f64], widths: &[f64], k_par: f64, bc: LineBoundary) -> f64 {
    faces(widths, bc)
        .map(|(l, r, hsum)| {
            let d = t[r] - t[l];
            let a = 0.5 * (pow_5_2(t[l]) + pow_5_2(t[r]));
            k_par * a * d * d * 2.0 / hsum
        })
        .sum()
}

pub fn energy_breakdown(state: &State2D, params: &Params2D) -> EnergyBreakdown {
    let mesh = &state.mesh;
    let t = &state.t;
    let ws = mesh.s().widths();
    let wr = mesh.r().widths();
    let (ns, nr) = (mesh.ns(), mesh.nr());
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for j in 0..nr {
        let bc = params.row_boundary(mesh, j);
        e1 -= wr[j] * line_dissipation(t.row(j), ws, params.k_par, bc);
        if mesh.is_sol_row(j) {
            let row = t.row(j);
            e2 -= params.gamma * wr[j] * (row[0] * row[0] + row[ns - 1] * row[ns - 1]);
        }
    }
    for j in 0..nr.saturating_sub(1) {
        let h = 0.5 * (wr[j] + wr[j + 1]);
        for i in 0..ns {
            let d = t[(i, j + 1)] - t[(i, j)];
            e1 -= ws[i] * params.k_perp * d * d / h;
        }
    }
    let e3 = params.q_perp * params.k_perp * ws.iter().zip(t.row(0)).map(|(w, v)| w * v).sum::<f64>();
    EnergyBreakdown { e1, e2, e3 }
}

/// 1D counterpart: no core influx.
pub fn energy_breakdown_1d(mesh: &Mesh1D, t: &[f64], params: &Params1D) -> EnergyBreakdown {
    let bc = LineBoundary::Limiter { gamma: params.gamma };
    let n = t.len();
    EnergyBreakdown {
        e1: -line_dissipation(t, mesh.widths(), params.k_par, bc),
        e2: -params.gamma * (t[0] * t[0] + t[n - 1] * t[n - 1]),
        e3: 0.0,
    }
}

/// `Σ_faces (δT)² / h_f` along one line, `h_f` the center distance.
pub fn line_seminorm_sq(t: &[f64], widths: &[f64], bc: LineBoundary) -> f64 {
    faces(widths, bc)
        .map(|(l, r, hsum)| {
            let d = t[r] - t[l];
            2.0 * d * d / hsum
        })
        .sum()
}

/// IMEX energy `½ Σ w T² + (ν dt / 2) |T|²` of one line.
pub fn imex_energy_1d(t: &[f64], widths: &[f64], nu: f64, dt: f64, bc: LineBoundary) -> f64 {
    let l2: f64 = t.iter().zip(widths).map(|(v, w)| w * v * v).sum();
    0.5 * l2 + 0.5 * nu * dt * line_seminorm_sq(t, widths, bc)
}

/// Split-scheme energy `½ ∬T² + (ν dt / 2) ∬|D_s T|²`.
pub fn split_energy_2d(t: &Field2D, mesh: &Mesh2D, gamma: f64, nu: f64, dt: f64) -> f64 {
    let ws = mesh.s().widths();
    let wr = mesh.r().widths();
    (0..mesh.nr())
        .map(|j| {
            let bc = if mesh.is_sol_row(j) {
                LineBoundary::Limiter { gamma }
            } else {
                LineBoundary::Periodic
            };
            wr[j] * imex_energy_1d(t.row(j), ws, nu, dt, bc)
        })
        .sum()
}

/// Instantaneous rate of mass change from boundary fluxes:
/// `K⊥Q⊥ Σ Δs_i - γ Σ_SOL Δr_j (T_{0,j} + T_{ns-1,j})`.
pub fn boundary_mass_rate(t: &Field2D, mesh: &Mesh2D, params: &Params2D) -> f64 {
    let ws = mesh.s().widths();
    let wr = mesh.r().widths();
    let ns = mesh.ns();
    let influx = -params.inner_flux() * ws.iter().sum::<f64>();
    let outflux: f64 = (mesh.sol_start_index()..mesh.nr())
        .map(|j| wr[j] * (t.row(j)[0] + t.row(j)[ns - 1]))
        .sum();
    influx - params.gamma * outflux
}

/// One time-series sample of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSample {
    pub time: f64,
    pub l2: f64,
    pub mass: f64,
    pub energy: EnergyBreakdown,
    pub nu: f64,
}

/// Outcome of a driven run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// Final fields by name (`T`, or `Ti` and `Te`).
    pub fields: Vec<(String, MeshField)>,
    pub series: Vec<TimeSample>,
    pub wall_seconds: f64,
    pub steps: u64,
    pub relative_error: Option<f64>,
}

impl RunReport {
    pub fn field(&self, name: &str) -> Option<&MeshField> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn final_time(&self) -> Option<f64> {
        self.series.last().map(|s| s.time)
    }

    /// True if sample times are strictly increasing.
    pub fn is_time_ordered(&self) -> bool {
        self.series.windows(2).all(|w| w[0].time < w[1].time)
    }
}
