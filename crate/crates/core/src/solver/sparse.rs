//! Compressed sparse row matrices for the equality constraints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// Row-by-row builder; entries within a row may repeat and are summed.
#[derive(Debug, Clone)]
pub struct CsrBuilder {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrBuilder {
    pub fn new(ncols: usize) -> Self {
        Self { ncols, indptr: vec![0], indices: Vec::new(), values: Vec::new() }
    }

    pub fn rows(&self) -> usize {
        self.indptr.len() - 1
    }

    /// Appends a row; returns its index.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<usize> {
        let start = self.indices.len();
        for (c, v) in entries {
            if c >= self.ncols {
                return Err(Error::InvalidProblem(format!("column {c} out of range {}", self.ncols)));
            }
            if v != 0.0 {
                self.indices.push(c);
                self.values.push(v);
            }
        }
        let mut row: Vec<(usize, f64)> =
            self.indices[start..].iter().copied().zip(self.values[start..].iter().copied()).collect();
        row.sort_by_key(|e| e.0);
        self.indices.truncate(start);
        self.values.truncate(start);
        for (c, v) in row {
            match self.indices.last() {
                Some(&last) if self.indices.len() > start && last == c => *self.values.last_mut().unwrap() += v,
                _ => {
                    self.indices.push(c);
                    self.values.push(v);
                }
            }
        }
        self.indptr.push(self.indices.len());
        Ok(self.rows() - 1)
    }

    pub fn finish(self) -> CsrMatrix {
        CsrMatrix {
            nrows: self.indptr.len() - 1,
            ncols: self.ncols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

impl CsrMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            if r >= nrows {
                return Err(Error::InvalidProblem(format!("row {r} out of range {nrows}")));
            }
            rows[r].push((c, v));
        }
        let mut b = CsrBuilder::new(ncols);
        for row in rows {
            b.push_row(row)?;
        }
        Ok(b.finish())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).map(move |(&c, &v)| (i, c, v))
        })
    }

    /// `out = A·x`.
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (i, o) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *o = c.iter().zip(v).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_into(x, &mut out);
        out
    }

    /// `out = Aᵀ·y`.
    pub fn mul_t_into(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.nrows);
        out.fill(0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&c, &v) in c.iter().zip(v) {
                out[c] += v * yi;
            }
        }
    }

    pub fn mul_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        self.mul_t_into(y, &mut out);
        out
    }

    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }

    pub fn col_sq_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (&c, &v) in self.indices.iter().zip(&self.values) {
            out[c] += v * v;
        }
        out
    }

    /// `diag(d)·A·diag(e)` in place.
    pub fn scale(&mut self, d: &[f64], e: &[f64]) {
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                self.values[k] *= d[i] * e[self.indices[k]];
            }
        }
    }

    /// Upper triangle of `A·Aᵀ` as `(row, col, value)` with `row ≤ col`.
    pub fn gram_upper(&self) -> Vec<(usize, usize, f64)> {
        // Column-wise incidence lists.
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.ncols];
        for (r, c, v) in self.triplets() {
            by_col[c].push((r, v));
        }
        let mut acc: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
        for col in &by_col {
            for (a, &(ra, va)) in col.iter().enumerate() {
                for &(rb, vb) in &col[a..] {
                    let key = if ra <= rb { (ra, rb) } else { (rb, ra) };
                    *acc.entry(key).or_insert(0.0) += va * vb;
                }
            }
        }
        let mut out: Vec<(usize, usize, f64)> = acc.into_iter().map(|((r, c), v)| (r, c, v)).collect();
        out.sort_by_key(|&(r, c, _)| (c, r));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_and_duplicates() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.mul(&[1.0, 2.0, 3.0]), vec![7.0, 8.0]);
        assert_eq!(a.mul_t(&[1.0, -1.0]), vec![1.0, -4.0, 2.0]);
        let g = a.gram_upper();
        assert_eq!(g, vec![(0, 0, 5.0), (1, 1, 16.0)]);
        assert!(CsrMatrix::from_triplets(1, 1, &[(0, 4, 1.0)]).is_err());
    }

    #[test]
    fn gram_matches_dense() {
        let t = [(0, 0, 1.0), (0, 1, -2.0), (1, 1, 0.5), (1, 3, 1.5), (2, 0, 2.0), (2, 3, -1.0)];
        let a = CsrMatrix::from_triplets(3, 4, &t).unwrap();
        let mut dense = [[0.0; 4]; 3];
        for &(r, c, v) in &t {
            dense[r][c] += v;
        }
        for (r, c, v) in a.gram_upper() {
            let want: f64 = (0..4).map(|k| dense[r][k] * dense[c][k]).sum();
            assert!((v - want).abs() < 1e-14);
        }
    }
}
