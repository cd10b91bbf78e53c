//! Cell-centered finite-volume meshes on the unit interval and unit square.
//!
//! Cell `i` of a [`Mesh1D`] spans `faces[i]..faces[i + 1]`. A [`Mesh2D`] is the
//! tensor product of a parallel (`s`) mesh and a radial (`r`) mesh; the radial
//! mesh must place a face exactly at `r = 1/2`, the interface between the
//! periodic core band and the scrape-off layer.

use crate::error::{invalid, Error, Result};
use crate::field::Field2D;

const FACE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    faces: Vec<f64>,
    widths: Vec<f64>,
    centers: Vec<f64>,
    xi: f64,
}

impl Mesh1D {
    /// Uniform mesh with `n` cells of width `1/n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("mesh needs at least one cell"));
        }
        let faces = (0..=n).map(|k| k as f64 / n as f64).collect();
        Self::from_faces(faces)
    }

    /// Mesh from explicit face coordinates `0 = f_0 < f_1 < ... < f_n = 1`.
    pub fn from_faces(faces: Vec<f64>) -> Result<Self> {
        if faces.len() < 2 {
            return Err(invalid("mesh needs at least two faces"));
        }
        if faces.iter().any(|f| !f.is_finite()) {
            return Err(invalid("mesh faces must be finite"));
        }
        if faces[0] != 0.0 || faces[faces.len() - 1] != 1.0 {
            return Err(invalid("mesh faces must start at 0 and end at 1"));
        }
        let widths: Vec<f64> = faces.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(k) = widths.iter().position(|&w| w <= 0.0) {
            return Err(invalid(format!("faces not strictly increasing at cell {k}")));
        }
        let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let max = widths.iter().cloned().fold(0.0, f64::max);
        let min = widths.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            faces,
            widths,
            centers,
            xi: min / max,
        })
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Quasi-uniformity ratio: smallest over largest cell width.
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn max_width(&self) -> f64 {
        self.widths.iter().cloned().fold(0.0, f64::max)
    }

    /// For every cell of `self` (the coarse mesh), the range of cells of `fine`
    /// it is made of. Fails unless every coarse face is also a fine face.
    pub fn nesting_in(&self, fine: &Mesh1D) -> Result<Vec<std::ops::Range<usize>>> {
        let mut ranges = Vec::with_capacity(self.len());
        let mut k = 0;
        for c in 0..self.len() {
            let start = k;
            let right = self.faces[c + 1];
            while k < fine.len() && fine.faces[k + 1] < right - FACE_TOL {
                k += 1;
            }
            if k >= fine.len() || (fine.faces[k + 1] - right).abs() > FACE_TOL {
                return Err(invalid(format!(
                    "meshes are not nested: coarse face {right} is not a fine face"
                )));
            }
            k += 1;
            ranges.push(start..k);
        }
        Ok(ranges)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    s: Mesh1D,
    r: Mesh1D,
    sol_start: usize,
}

impl Mesh2D {
    /// Uniform tensor-product mesh; `nr` must be even so that `r = 1/2` is a face.
    pub fn uniform(ns: usize, nr: usize) -> Result<Self> {
        if ns == 0 || nr == 0 {
            return Err(invalid("mesh needs at least one cell per direction"));
        }
        if nr % 2 != 0 {
            return Err(invalid(format!(
                "nr = {nr} is odd: the core/SOL interface r = 1/2 must coincide with a cell face"
            )));
        }
        Self::new(Mesh1D::uniform(ns)?, Mesh1D::uniform(nr)?)
    }

    pub fn new(s: Mesh1D, r: Mesh1D) -> Result<Self> {
        let sol_start = r
            .faces()
            .iter()
            .position(|&f| (f - 0.5).abs() <= FACE_TOL)
            .ok_or_else(|| {
                invalid("the core/SOL interface r = 1/2 must coincide with a cell face")
            })?;
        Ok(Self { s, r, sol_start })
    }

    pub fn s(&self) -> &Mesh1D {
        &self.s
    }

    pub fn r(&self) -> &Mesh1D {
        &self.r
    }

    pub fn ns(&self) -> usize {
        self.s.len()
    }

    pub fn nr(&self) -> usize {
        self.r.len()
    }

    /// Index of the first radial cell lying in the scrape-off layer (`r > 1/2`).
    pub fn sol_start_index(&self) -> usize {
        self.sol_start
    }

    pub fn is_sol_row(&self, j: usize) -> bool {
        j >= self.sol_start
    }

    /// Largest cell width over both directions.
    pub fn h(&self) -> f64 {
        self.s.max_width().max(self.r.max_width())
    }

    /// Joint quasi-uniformity ratio relative to `h`.
    pub fn xi(&self) -> f64 {
        let min = self
            .s
            .widths()
            .iter()
            .chain(self.r.widths())
            .cloned()
            .fold(f64::INFINITY, f64::min);
        min / self.h()
    }

    pub fn cell_area(&self, i: usize, j: usize) -> f64 {
        self.s.widths()[i] * self.r.widths()[j]
    }

    pub fn zeros(&self) -> Field2D {
        Field2D::filled(self.ns(), self.nr(), 0.0)
    }
}

/// Either kind of mesh, for operations that accept both.
#[derive(Debug, Clone, PartialEq)]
pub enum Mesh {
    One(Mesh1D),
    Two(Mesh2D),
}

impl From<Mesh1D> for Mesh {
    fn from(m: Mesh1D) -> Self {
        Mesh::One(m)
    }
}

impl From<Mesh2D> for Mesh {
    fn from(m: Mesh2D) -> Self {
        Mesh::Two(m)
    }
}

/// Width-weighted average of `fine` over each cell of `coarse`.
pub fn restrict_1d(fine: &[f64], fine_mesh: &Mesh1D, coarse: &Mesh1D) -> Result<Vec<f64>> {
    if fine.len() != fine_mesh.len() {
        return Err(invalid("field length does not match its mesh"));
    }
    let ranges = coarse.nesting_in(fine_mesh)?;
    let w = fine_mesh.widths();
    Ok(ranges
        .iter()
        .zip(coarse.widths())
        .map(|(range, &cw)| range.clone().map(|k| w[k] * fine[k]).sum::<f64>() / cw)
        .collect())
}

/// Area-weighted average of `fine` over each cell of `coarse`.
pub fn restrict_2d(fine: &Field2D, fine_mesh: &Mesh2D, coarse: &Mesh2D) -> Result<Field2D> {
    if fine.ns() != fine_mesh.ns() || fine.nr() != fine_mesh.nr() {
        return Err(invalid("field shape does not match its mesh"));
    }
    let s_ranges = coarse.s().nesting_in(fine_mesh.s())?;
    let r_ranges = coarse.r().nesting_in(fine_mesh.r())?;
    let mut out = coarse.zeros();
    for (jc, rr) in r_ranges.iter().enumerate() {
        for (ic, sr) in s_ranges.iter().enumerate() {
            let mut acc = 0.0;
            for j in rr.clone() {
                for i in sr.clone() {
                    acc += fine_mesh.cell_area(i, j) * fine[(i, j)];
                }
            }
            out[(ic, jc)] = acc / coarse.cell_area(ic, jc);
        }
    }
    Ok(out)
}

/// A field together with the mesh it lives on.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshField {
    One(Mesh1D, Vec<f64>),
    Two(Mesh2D, Field2D),
}

impl MeshField {
    /// Restrict onto a coarser nested mesh of the same dimension.
    pub fn restrict_to(&self, coarse: &Mesh) -> Result<MeshField> {
        match (self, coarse) {
            (MeshField::One(m, f), Mesh::One(c)) => {
                Ok(MeshField::One(c.clone(), restrict_1d(f, m, c)?))
            }
            (MeshField::Two(m, f), Mesh::Two(c)) => {
                Ok(MeshField::Two(c.clone(), restrict_2d(f, m, c)?))
            }
            _ => Err(Error::InvalidArgument(
                "cannot restrict between meshes of different dimension".into(),
            )),
        }
    }

    pub fn mesh(&self) -> Mesh {
        match self {
            MeshField::One(m, _) => Mesh::One(m.clone()),
            MeshField::Two(m, _) => Mesh::Two(m.clone()),
        }
    }

    /// Cell measures and values in matching order.
    pub fn weighted_values(&self) -> Vec<(f64, f64)> {
        match self {
            MeshField::One(m, f) => m.widths().iter().cloned().zip(f.iter().cloned()).collect(),
            MeshField::Two(m, f) => {
                let mut out = Vec::with_capacity(f.len());
                for j in 0..m.nr() {
                    for i in 0..m.ns() {
                        out.push((m.cell_area(i, j), f[(i, j)]));
                    }
                }
                out
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.weighted_values().iter().map(|(w, v)| w * v).sum()
    }
}

/// Restrict a fine field onto a coarse nested mesh (1D or 2D).
pub fn restrict_cell_averages(fine: &MeshField, coarse: &Mesh) -> Result<MeshField> {
    fine.restrict_to(coarse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_cell() {
        let m = Mesh1D::uniform(1).unwrap();
        assert_eq!(m.faces(), &[0.0, 1.0]);
        assert_eq!(m.widths(), &[1.0]);
        assert_eq!(m.xi(), 1.0);
    }

    #[test]
    fn four_cells() {
        let m = Mesh1D::uniform(4).unwrap();
        assert_eq!(m.faces(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(m.centers(), &[0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn reference_resolution() {
        let m = Mesh1D::uniform(450).unwrap();
        assert_eq!(m.len(), 450);
        assert!((m.max_width() - 1.0 / 450.0).abs() < 1e-15);
        assert!((m.xi() - 1.0).abs() < 1e-12);
        let total: f64 = m.widths().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_cells_rejected() {
        assert!(matches!(Mesh1D::uniform(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bad_faces_rejected() {
        assert!(Mesh1D::from_faces(vec![0.0, 0.6, 0.4, 1.0]).is_err());
        assert!(Mesh1D::from_faces(vec![0.1, 1.0]).is_err());
        assert!(Mesh1D::from_faces(vec![0.0, 0.9]).is_err());
    }

    #[test]
    fn nonuniform_xi() {
        let m = Mesh1D::from_faces(vec![0.0, 0.2, 0.6, 1.0]).unwrap();
        assert!((m.xi() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn minimal_2d() {
        let m = Mesh2D::uniform(2, 2).unwrap();
        assert_eq!(m.sol_start_index(), 1);
        assert_eq!(m.r().faces(), &[0.0, 0.5, 1.0]);
        assert!(!m.is_sol_row(0));
        assert!(m.is_sol_row(1));
    }

    #[test]
    fn square_2d_mesh() {
        let m = Mesh2D::uniform(100, 100).unwrap();
        assert_eq!(m.sol_start_index(), 50);
        let area: f64 = (0..m.nr())
            .map(|j| (0..m.ns()).map(|i| m.cell_area(i, j)).sum::<f64>())
            .sum();
        assert!((area - 1.0).abs() < 1e-14, "{area}");
    }

    #[test]
    fn odd_nr_rejected() {
        match Mesh2D::uniform(3, 5) {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("r = 1/2")),
            other => panic!("expected error, got {other:?}"),
        }
    }

    #[test]
    fn restrict_pair() {
        let fine = Mesh1D::uniform(2).unwrap();
        let coarse = Mesh1D::uniform(1).unwrap();
        assert_eq!(restrict_1d(&[1.0, 3.0], &fine, &coarse).unwrap(), vec![2.0]);
    }

    #[test]
    fn restrict_rejects_non_nested() {
        let fine = Mesh1D::uniform(4).unwrap();
        let coarse = Mesh1D::uniform(3).unwrap();
        assert!(restrict_1d(&[0.0; 4], &fine, &coarse).is_err());
    }

    #[test]
    fn restrict_nested_ratios() {
        let fine = Mesh1D::uniform(450).unwrap();
        for n in [50, 150, 450] {
            let coarse = Mesh1D::uniform(n).unwrap();
            let out = restrict_1d(&vec![2.5; 450], &fine, &coarse).unwrap();
            assert!(out.iter().all(|v| (v - 2.5).abs() < 1e-13));
        }
        let fine2 = Mesh2D::uniform(300, 300).unwrap();
        let coarse2 = Mesh2D::uniform(100, 100).unwrap();
        let out = restrict_2d(&fine2.zeros(), &fine2, &coarse2).unwrap();
        assert_eq!((out.ns(), out.nr()), (100, 100));
    }

    #[test]
    fn restrict_2d_constant() {
        let fine = Mesh2D::uniform(6, 4).unwrap();
        let coarse = Mesh2D::uniform(3, 2).unwrap();
        let f = Field2D::filled(6, 4, 7.0);
        let out = restrict_2d(&f, &fine, &coarse).unwrap();
        assert!(out.as_slice().iter().all(|v| (v - 7.0).abs() < 1e-14));
    }

    fn nested_pair() -> impl Strategy<Value = (usize, usize)> {
        (1usize..20, 1usize..6).prop_map(|(c, k)| (c, c * k))
    }

    proptest! {
        #[test]
        fn restriction_preserves_mass(
            (nc, nf) in nested_pair(),
            seed in proptest::collection::vec(0.0f64..10.0, 120),
        ) {
            let fine = Mesh1D::uniform(nf).unwrap();
            let coarse = Mesh1D::uniform(nc).unwrap();
            let f: Vec<f64> = seed.iter().cycle().take(nf).cloned().collect();
            let out = restrict_1d(&f, &fine, &coarse).unwrap();
            let m_in: f64 = f.iter().zip(fine.widths()).map(|(v, w)| v * w).sum();
            let m_out: f64 = out.iter().zip(coarse.widths()).map(|(v, w)| v * w).sum();
            prop_assert!((m_in - m_out).abs() <= 1e-12 * (1.0 + m_in.abs()));
        }

        #[test]
        fn restriction_is_linear_and_idempotent(
            n in 1usize..40,
            a in -5.0f64..5.0,
            seed in proptest::collection::vec(-10.0f64..10.0, 40),
        ) {
            let mesh = Mesh1D::uniform(n).unwrap();
            let f: Vec<f64> = seed[..n].to_vec();
            let same = restrict_1d(&f, &mesh, &mesh).unwrap();
            for (x, y) in same.iter().zip(&f) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
            let coarse = Mesh1D::uniform(1).unwrap();
            let scaled: Vec<f64> = f.iter().map(|v| a * v).collect();
            let lhs = restrict_1d(&scaled, &mesh, &coarse).unwrap()[0];
            let rhs = a * restrict_1d(&f, &mesh, &coarse).unwrap()[0];
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }
}
