//! Kernels acting on one mesh line in the parallel direction.
//!
//! All assembled matrices are in width-scaled form: row `i` is the cell
//! balance multiplied by `w_i`, which keeps the IMEX operator symmetric.

use crate::error::{Error, Result};
use crate::field::{max_abs, pow_5_2, pow_7_2};
use crate::linsolve::CyclicFactor;

/// Treatment of the two ends of a parallel line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineBoundary {
    /// Outflow `F = +gamma T` at the left end and `F = -gamma T` at the right end.
    Limiter { gamma: f64 },
    /// The last cell is adjacent to the first.
    Periodic,
}

/// Newton iteration controls for implicit steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Residual max-norm target, relative to `1 + max|T^n|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Faces of a line as `(left cell, right cell, w_left + w_right)`, including
/// the wrap face of a periodic line (listed last).
pub(crate) fn faces(widths: &[f64], bc: LineBoundary) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    let n = widths.len();
    let interior = (0..n.saturating_sub(1)).map(move |i| (i, i + 1, widths[i] + widths[i + 1]));
    let wrap = matches!(bc, LineBoundary::Periodic).then(|| (n - 1, 0, widths[n - 1] + widths[0]));
    interior.chain(wrap)
}

/// `out[i] = F_{i+1/2} - F_{i-1/2}` for the nonlinear parallel flux.
pub(crate) fn flux_divergence(t: &[f64], widths: &[f64], k_par: f64, bc: LineBoundary, p: &mut Vec<f64>, out: &mut [f64]) {
    let n = t.len();
    p.clear();
    p.extend(t.iter().map(|&v| pow_7_2(v)));
    let c = 4.0 * k_par / 7.0;
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n.saturating_sub(1) {
        let f = c * (p[i + 1] - p[i]) / (widths[i] + widths[i + 1]);
        out[i] += f;
        out[i + 1] -= f;
    }
    match bc {
        LineBoundary::Limiter { gamma } => {
            out[0] -= gamma * t[0];
            out[n - 1] -= gamma * t[n - 1];
        }
        LineBoundary::Periodic => {
            let f = c * (p[0] - p[n - 1]) / (widths[n - 1] + widths[0]);
            out[n - 1] += f;
            out[0] -= f;
        }
    }
}

/// Factored IMEX matrix `W + dt * (nu-Laplacian + limiter terms)` of one line.
#[derive(Debug, Clone)]
pub(crate) struct ImexLineOperator {
    pub nu: f64,
    pub dt: f64,
    factor: CyclicFactor,
}

impl ImexLineOperator {
    pub fn new(widths: &[f64], nu: f64, dt: f64, bc: LineBoundary) -> Result<Self> {
        let n = widths.len();
        let mut diag = widths.to_vec();
        let mut sub = vec![0.0; n.saturating_sub(1)];
        let mut sup = vec![0.0; n.saturating_sub(1)];
        let (mut tr, mut bl) = (0.0, 0.0);
        for (l, r, hsum) in faces(widths, bc) {
            let a = dt * 2.0 * nu / hsum;
            diag[l] += a;
            diag[r] += a;
            if r == l + 1 {
                sup[l] -= a;
                sub[l] -= a;
            } else {
                tr -= a;
                bl -= a;
            }
        }
        if let LineBoundary::Limiter { gamma } = bc {
            diag[0] += dt * gamma;
            diag[n - 1] += dt * gamma;
        }
        Ok(Self {
            nu,
            dt,
            factor: CyclicFactor::new(&sub, &diag, &sup, tr, bl)?,
        })
    }

    pub fn matches(&self, nu: f64, dt: f64) -> bool {
        self.nu == nu && self.dt == dt
    }

    /// Advance `t` in place by one IMEX step; `scratch` is reused storage.
    pub fn step(&self, t: &mut [f64], widths: &[f64], k_par: f64, bc: LineBoundary, scratch: &mut Vec<f64>) {
        imex_rhs(t, widths, k_par, self.nu, self.dt, bc, scratch);
        self.factor.solve_in_place(scratch);
        t.copy_from_slice(scratch);
    }
}

/// Right-hand side `w_i T_i + dt (E_{i+1/2} - E_{i-1/2})` with `E` the
/// explicit part of the IMEX flux.
pub(crate) fn imex_rhs(t: &[f64], widths: &[f64], k_par: f64, nu: f64, dt: f64, bc: LineBoundary, out: &mut Vec<f64>) {
    out.clear();
    out.extend(t.iter().zip(widths).map(|(v, w)| v * w));
    let mut prev_p = pow_5_2(t[0]);
    let n = t.len();
    for i in 0..n.saturating_sub(1) {
        let next_p = pow_5_2(t[i + 1]);
        let e = 2.0 * (k_par * 0.5 * (prev_p + next_p) - nu) * (t[i + 1] - t[i]) / (widths[i] + widths[i + 1]);
        out[i] += dt * e;
        out[i + 1] -= dt * e;
        prev_p = next_p;
    }
    if let LineBoundary::Periodic = bc {
        let (pl, pr) = (pow_5_2(t[n - 1]), pow_5_2(t[0]));
        let e = 2.0 * (k_par * 0.5 * (pl + pr) - nu) * (t[0] - t[n - 1]) / (widths[n - 1] + widths[0]);
        out[n - 1] += dt * e;
        out[0] -= dt * e;
    }
}

/// Fully implicit step of one line by Newton iteration with a banded Jacobian.
/// Returns the new values and the number of Newton iterations used.
pub(crate) fn newton_line(
    t_old: &[f64],
    widths: &[f64],
    k_par: f64,
    bc: LineBoundary,
    dt: f64,
    opts: &NewtonOptions,
) -> Result<(Vec<f64>, usize)> {
    let n = t_old.len();
    let target = opts.tol * (1.0 + max_abs(t_old));
    let c = 4.0 * k_par / 7.0;
    let mut x = t_old.to_vec();
    let mut p = Vec::with_capacity(n);
    let mut div = vec![0.0; n];
    let mut res = vec![0.0; n];
    let mut residual_norm = f64::INFINITY;
    for it in 0..=opts.max_iter {
        flux_divergence(&x, widths, k_par, bc, &mut p, &mut div);
        residual_norm = 0.0;
        for i in 0..n {
            res[i] = widths[i] * (x[i] - t_old[i]) - dt * div[i];
            residual_norm = f64::max(residual_norm, (res[i] / widths[i]).abs());
        }
        if !residual_norm.is_finite() {
            break;
        }
        if residual_norm <= target {
            return Ok((x, it));
        }
        if it == opts.max_iter {
            break;
        }
        // Jacobian of the width-scaled residual.
        let mut diag = widths.to_vec();
        let mut sub = vec![0.0; n.saturating_sub(1)];
        let mut sup = vec![0.0; n.saturating_sub(1)];
        let (mut tr, mut bl) = (0.0, 0.0);
        for (l, r, hsum) in faces(widths, bc) {
            let dl = dt * c * 3.5 * pow_5_2(x[l]) / hsum;
            let dr = dt * c * 3.5 * pow_5_2(x[r]) / hsum;
            diag[l] += dl;
            diag[r] += dr;
            if r == l + 1 {
                sup[l] -= dr;
                sub[l] -= dl;
            } else {
                // wrap face: row l = n-1 couples to column 0, row r = 0 to column n-1
                bl -= dr;
                tr -= dl;
            }
        }
        if let LineBoundary::Limiter { gamma } = bc {
            diag[0] += dt * gamma;
            diag[n - 1] += dt * gamma;
        }
        let jac = CyclicFactor::new(&sub, &diag, &sup, tr, bl)?;
        for v in res.iter_mut() {
            *v = -*v;
        }
        jac.solve_in_place(&mut res);
        for (xi, d) in x.iter_mut().zip(&res) {
            *xi += d;
        }
    }
    Err(Error::NonConvergence {
        solver: "Newton",
        iterations: opts.max_iter,
        residual: residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_divergence_sums_to_zero() {
        let t = [1.0, 3.0, 0.5, 2.0, 4.0];
        let w = [0.2; 5];
        let mut p = Vec::new();
        let mut out = [0.0; 5];
        flux_divergence(&t, &w, 1.3, LineBoundary::Periodic, &mut p, &mut out);
        assert!(out.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn newton_solves_implicit_balance() {
        // A wrong Jacobian entry shows up as slow (linear) convergence.
        let t_old = [2.0, 1.5, 0.7, 1.1, 2.4, 0.9];
        let w = [1.0 / 6.0; 6];
        for bc in [LineBoundary::Periodic, LineBoundary::Limiter { gamma: 2.0 }] {
            let (x, its) = newton_line(&t_old, &w, 1.0, bc, 0.01, &NewtonOptions::default()).unwrap();
            assert!(its <= 8, "too many iterations: {its}");
            let mut p = Vec::new();
            let mut div = [0.0; 6];
            flux_divergence(&x, &w, 1.0, bc, &mut p, &mut div);
            for i in 0..6 {
                assert!((x[i] - t_old[i] - 0.01 * div[i] / w[i]).abs() < 1e-9);
            }
        }
    }
}
