//! Thin sparse-matrix layer: triplet accumulation, sparse-dense products,
//! and a direct LU solve.
//!
//! Assembly accumulates raw (row, col, value) triplets; duplicates are merged
//! here before handing the matrix to the factorization. The solver is the
//! sparse LU from `faer` with its default fill-reducing ordering.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square sparse matrix under assembly, in coordinate form.
#[derive(Debug, Clone)]
pub struct CooMatrix {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn new(n: usize) -> Self {
        CooMatrix { n, triplets: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.triplets.push((row, col, value));
    }

    /// Sorts and merges duplicate entries in place.
    pub fn compress(&mut self) {
        self.triplets.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.triplets.len());
        for &(r, c, v) in &self.triplets {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        self.triplets = out;
    }

    /// Dense product `A * x` straight from the triplets.
    pub fn mul_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    /// Dense product `A * X` straight from the triplets.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.n, x.ncols());
        for &(r, c, v) in &self.triplets {
            for k in 0..x.ncols() {
                y[(r, k)] += v * x[(c, k)];
            }
        }
        y
    }

    /// Largest relative asymmetry |A - A^T| / |A| over the stored pattern.
    pub fn symmetry_defect(&self) -> f64 {
        let mut map = std::collections::HashMap::new();
        let mut max_entry = 0.0f64;
        for &(r, c, v) in &self.triplets {
            *map.entry((r, c)).or_insert(0.0) += v;
            max_entry = max_entry.max(v.abs());
        }
        let mut defect = 0.0f64;
        for (&(r, c), &v) in &map {
            let vt = map.get(&(c, r)).copied().unwrap_or(0.0);
            defect = defect.max((v - vt).abs());
        }
        if max_entry == 0.0 {
            0.0
        } else {
            defect / max_entry
        }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut merged = self.clone();
        merged.compress();
        let triplets: Vec<Triplet<usize, usize, f64>> = merged
            .triplets
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| Error::SingularJacobian(format!("sparse matrix construction failed: {e:?}")))
    }

    /// Solves `A x = b` by sparse LU. Fails on structural or numerical
    /// singularity, including solutions containing non-finite values.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.to_faer()?;
        let lu = a
            .as_ref()
            .sp_lu()
            .map_err(|e| Error::SingularJacobian(format!("sparse LU failed: {e:?}")))?;
        let mut rhs = Mat::<f64>::zeros(self.n, 1);
        for i in 0..self.n {
            rhs[(i, 0)] = b[i];
        }
        let x = lu.solve(&rhs);
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            let v = x[(i, 0)];
            if !v.is_finite() {
                return Err(Error::SingularJacobian(
                    "solution contains non-finite entries".into(),
                ));
            }
            out[i] = v;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_small_spd_system() {
        // [4 1; 1 3] x = [1; 2], x = (1/11, 7/11).
        let mut a = CooMatrix::new(2);
        a.push(0, 0, 4.0);
        a.push(0, 1, 1.0);
        a.push(1, 0, 1.0);
        a.push(1, 1, 3.0);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = a.solve(&b).unwrap();
        assert_relative_eq!(x[0], 1.0 / 11.0, epsilon = 1e-14);
        assert_relative_eq!(x[1], 7.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        // Diagonal 2 given as 1 + 1.
        let mut a = CooMatrix::new(1);
        a.push(0, 0, 1.0);
        a.push(0, 0, 1.0);
        let x = a.solve(&DVector::from_vec(vec![2.0])).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = CooMatrix::new(2);
        a.push(0, 0, 1.0);
        a.push(0, 1, 1.0);
        a.push(1, 0, 1.0);
        a.push(1, 1, 1.0);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(a.solve(&b), Err(Error::SingularJacobian(_))));
    }

    #[test]
    fn structurally_singular_matrix_is_reported() {
        // Empty row/column.
        let mut a = CooMatrix::new(3);
        a.push(0, 0, 1.0);
        a.push(1, 1, 1.0);
        let b = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(a.solve(&b).is_err());
    }

    #[test]
    fn mul_dense_matches_manual_product() {
        let mut a = CooMatrix::new(2);
        a.push(0, 0, 2.0);
        a.push(0, 1, -1.0);
        a.push(1, 1, 3.0);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = a.mul_dense(&x);
        assert_eq!(y[(0, 0)], 2.0 * 1.0 - 1.0 * 3.0);
        assert_eq!(y[(0, 1)], 2.0 * 2.0 - 1.0 * 4.0);
        assert_eq!(y[(1, 0)], 3.0 * 3.0);
    }
}
