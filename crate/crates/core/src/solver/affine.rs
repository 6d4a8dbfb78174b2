//! Euclidean projection onto `{x : A x = b}` through a sparse Cholesky
//! factorization of `A Aᵀ`, computed once.

use std::collections::HashMap;

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

pub struct AffineProjector {
    llt: Llt<usize, f64>,
    rows: usize,
}

impl std::fmt::Debug for AffineProjector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineProjector").field("rows", &self.rows).finish()
    }
}

/// Rejects zero rows and exact duplicates (up to scale) before factoring.
fn check_rows(a: &CsrMatrix) -> Result<()> {
    let mut seen: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
    for i in 0..a.nrows() {
        let (c, v) = a.row(i);
        if c.is_empty() {
            return Err(Error::RankDeficientEqualities(format!("row {i} is empty")));
        }
        let lead = v[0];
        let key: Vec<(usize, u64)> = c.iter().zip(v).map(|(&c, &v)| (c, (v / lead).to_bits())).collect();
        if let Some(j) = seen.insert(key, i) {
            return Err(Error::RankDeficientEqualities(format!("rows {j} and {i} are parallel")));
        }
    }
    Ok(())
}

impl AffineProjector {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        check_rows(a)?;
        let m = a.nrows();
        // Lower triangle of the symmetric A Aᵀ.
        let trip: Vec<Triplet<usize, usize, f64>> =
            a.gram_upper().into_iter().map(|(r, c, v)| Triplet::new(c, r, v)).collect();
        let aat = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &trip)
            .map_err(|e| Error::InvalidProblem(format!("assembling A·Aᵀ: {e:?}")))?;
        let llt = aat.sp_cholesky(Side::Lower).map_err(|e| match e {
            LltError::Numeric(faer::linalg::solvers::LltError::NonPositivePivot { index }) => {
                Error::RankDeficientEqualities(format!(
                    "A·Aᵀ is singular: non-positive pivot at elimination step {index} of {m}"
                ))
            }
            other => Error::InvalidProblem(format!("factorizing A·Aᵀ: {other:?}")),
        })?;
        Ok(Self { llt, rows: m })
    }

    /// `rhs ← (A Aᵀ)⁻¹ rhs`.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        debug_assert_eq!(rhs.len(), self.rows);
        let n = rhs.len();
        let view = MatMut::from_column_major_slice_mut(rhs, n, 1);
        self.llt.solve_in_place(view);
    }

    /// `x ← x − Aᵀ (A Aᵀ)⁻¹ (A x − b)`; `work_m` and `work_n` are scratch.
    pub fn project(&self, a: &CsrMatrix, b: &[f64], x: &mut [f64], work_m: &mut [f64], work_n: &mut [f64]) {
        a.mul_into(x, work_m);
        for (w, bi) in work_m.iter_mut().zip(b) {
            *w -= bi;
        }
        self.solve_in_place(work_m);
        a.mul_t_into(work_m, work_n);
        for (xi, wi) in x.iter_mut().zip(work_n.iter()) {
            *xi -= wi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projects_onto_affine_set() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0), (1, 2, -1.0)]).unwrap();
        let b = [1.0, 0.0];
        let p = AffineProjector::new(&a).unwrap();
        let mut x = vec![3.0, -1.0, 2.0];
        let orig = x.clone();
        let (mut wm, mut wn) = (vec![0.0; 2], vec![0.0; 3]);
        p.project(&a, &b, &mut x, &mut wm, &mut wn);
        let ax = a.mul(&x);
        assert!((ax[0] - 1.0).abs() < 1e-12 && ax[1].abs() < 1e-12);
        // The step is in the row space: orthogonal to the null vector (1,−1,−1).
        let d: Vec<f64> = orig.iter().zip(&x).map(|(o, n)| o - n).collect();
        assert!((d[0] - d[1] - d[2]).abs() < 1e-12);
    }

    #[test]
    fn rejects_redundant_rows() {
        let dup = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, -2.0), (1, 1, -4.0)]).unwrap();
        assert!(matches!(AffineProjector::new(&dup), Err(Error::RankDeficientEqualities(_))));
        let empty = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(AffineProjector::new(&empty), Err(Error::RankDeficientEqualities(_))));
        // Linearly dependent but not parallel.
        let dep = CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, 1.0), (2, 0, 1.0), (2, 1, 1.0)]).unwrap();
        assert!(matches!(AffineProjector::new(&dep), Err(Error::RankDeficientEqualities(_))));
    }
}
