//! The experiment setups: 1D limiter problem, 2D edge problem and the
//! ion/electron system.

use solheat_core::Scheme;

use crate::config::{parse_config, Problem, RunConfig};

fn dt_line(dt: Option<f64>) -> String {
    match dt {
        Some(dt) => format!("dt = {dt:e}"),
        None => "dt = cfl".into(),
    }
}

/// `γ = 2, K∥ = 1, T0 = 5, T_end = 1`; `dt = None` selects the explicit bound.
pub fn limiter_1d(scheme: Scheme, ns: usize, dt: Option<f64>) -> RunConfig {
    let text = format!(
        "name = 1d-{scheme}-{ns}-{dt}\nproblem = 1d\nscheme = {scheme}\nns = {ns}\n{dtl}\nt_end = 1\nt0 = 5\nk_par = 1\ngamma = 2\nreference = auto\n",
        dt = dt.map(|d| format!("{d:e}")).unwrap_or_else(|| "cfl".into()),
        dtl = dt_line(dt),
    );
    parse_config(&text).expect("valid preset")
}

/// `K∥ = 1, K⊥ = 0.01, γ = 2, Q⊥ = 10, T0 = 3, T_end = 2` on an `n × n` mesh.
pub fn edge_2d(problem: Problem, scheme: Scheme, n: usize, dt: Option<f64>) -> RunConfig {
    let text = format!(
        "name = {problem}-{scheme}-{n}-{dt}\nproblem = {problem}\nscheme = {scheme}\nns = {n}\nnr = {n}\n{dtl}\nt_end = 2\nt0 = 3\nk_par = 1\nk_perp = 0.01\ngamma = 2\nq_perp = 10\n",
        dt = dt.map(|d| format!("{d:e}")).unwrap_or_else(|| "cfl".into()),
        dtl = dt_line(dt),
    );
    let mut cfg = parse_config(&text).expect("valid preset");
    if n != 0 && crate::config::DEFAULT_REFERENCE_N_2D % n == 0 {
        cfg.reference = Some(crate::config::ReferenceSpec::Auto {
            ns: crate::config::DEFAULT_REFERENCE_N_2D,
            nr: crate::config::DEFAULT_REFERENCE_N_2D,
        });
    }
    cfg
}

/// Ion/electron setup: `K∥,i = 0.02, K∥,e = 1, K⊥ = 0.01, γ_i = 0, γ_e = 2.5,
/// Q⊥ = 10, T0 = 3, T_end = 1`.
pub fn ion_electron(n: usize, dt: f64, beta: f64) -> RunConfig {
    let text = format!(
        "name = coupled-{n}-{dt:e}-beta{beta}\nproblem = coupled\nscheme = imex\nns = {n}\nnr = {n}\ndt = {dt:e}\nt_end = 1\nt0 = 3\n\
         ion.k_par = 0.02\nion.k_perp = 0.01\nion.gamma = 0\nion.q_perp = 10\n\
         electron.k_par = 1\nelectron.k_perp = 0.01\nelectron.gamma = 2.5\nelectron.q_perp = 10\nbeta = {beta:e}\n"
    );
    parse_config(&text).expect("valid preset")
}
