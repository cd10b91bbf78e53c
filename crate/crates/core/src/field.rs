//! Cell-averaged fields on tensor-product meshes.

use std::ops::{Index, IndexMut};

/// Values `T[i, j]` for parallel index `i < ns` and radial index `j < nr`.
///
/// Stored row by row: each radial row `j` is a contiguous run of `ns` values,
/// so parallel sweeps work on contiguous slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    ns: usize,
    nr: usize,
    data: Vec<f64>,
}

impl Field2D {
    pub fn filled(ns: usize, nr: usize, value: f64) -> Self {
        Self {
            ns,
            nr,
            data: vec![value; ns * nr],
        }
    }

    /// Build from row-major data (`data[j * ns + i]`).
    pub fn from_rows(ns: usize, nr: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == ns * nr).then_some(Self { ns, nr, data })
    }

    pub fn from_fn(ns: usize, nr: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(ns * nr);
        for j in 0..nr {
            for i in 0..ns {
                data.push(f(i, j));
            }
        }
        Self { ns, nr, data }
    }

    pub fn ns(&self) -> usize {
        self.ns
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Exchange storage with a buffer of the same length.
    pub(crate) fn swap_data(&mut self, other: &mut Vec<f64>) {
        debug_assert_eq!(self.data.len(), other.len());
        std::mem::swap(&mut self.data, other);
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.ns..(j + 1) * self.ns]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.ns..(j + 1) * self.ns]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.nr).map(|j| self[(i, j)]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            ns: self.ns,
            nr: self.nr,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Index<(usize, usize)> for Field2D {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.ns && j < self.nr);
        &self.data[j * self.ns + i]
    }
}

impl IndexMut<(usize, usize)> for Field2D {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.ns && j < self.nr);
        &mut self.data[j * self.ns + i]
    }
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Sign-preserving `x^{7/2}`.
#[inline]
pub fn pow_7_2(x: f64) -> f64 {
    let a = x.abs();
    let p = a * a * a * a.sqrt();
    if x < 0.0 {
        -p
    } else {
        p
    }
}

/// `|x|^{5/2}`.
#[inline]
pub fn pow_5_2(x: f64) -> f64 {
    let a = x.abs();
    a * a * a.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn powers_match_powf() {
        for x in [0.0, 0.3, 1.0, 2.0, 5.0, 17.5] {
            assert!((pow_7_2(x) - x.powf(3.5)).abs() <= 1e-12 * x.powf(3.5).max(1.0));
            assert!((pow_5_2(x) - x.powf(2.5)).abs() <= 1e-12 * x.powf(2.5).max(1.0));
            assert_eq!(pow_7_2(-x), -pow_7_2(x));
            assert_eq!(pow_5_2(-x), pow_5_2(x));
        }
    }

    #[test]
    fn row_major_layout() {
        let f = Field2D::from_fn(3, 2, |i, j| (10 * j + i) as f64);
        assert_eq!(f.row(1), &[10.0, 11.0, 12.0]);
        assert_eq!(f.column(2), vec![2.0, 12.0]);
        assert_eq!(f[(1, 1)], 11.0);
    }
}
