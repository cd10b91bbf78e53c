//! Finite-volume solvers for the nonlinear, anisotropic heat equation of the
//! tokamak scrape-off layer.
//!
//! The parallel conductivity scales as `K∥ T^{5/2}`; the perpendicular one is a
//! constant `K⊥`. One-dimensional problems ([`heat1d`]) are advanced by
//! explicit, implicit (Newton) or IMEX steps; two-dimensional problems
//! ([`heat2d`]) by Lie splitting into parallel and radial sweeps, or by unsplit
//! five-point schemes; [`coupled`] adds an ion/electron temperature exchange.

pub mod coupled;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod heat1d;
pub mod heat2d;
mod line;
pub mod linsolve;
pub mod mesh;

pub use error::{Error, Result};
pub use field::Field2D;
pub use heat1d::{Params1D, State1D, ViscosityState};
pub use line::{LineBoundary, NewtonOptions};
pub use mesh::{Mesh, Mesh1D, Mesh2D, MeshField};

/// Time discretization of the parallel (and, unsplit, full) operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Explicit,
    Implicit,
    Imex,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Explicit => "explicit",
            Scheme::Implicit => "implicit",
            Scheme::Imex => "imex",
        })
    }
}
