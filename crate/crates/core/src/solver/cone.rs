//! Cones of the standard form and their Euclidean projections.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Maps a Hermitian `d×d` matrix to `d²` reals: row-major upper triangle,
/// diagonal entries as is, off-diagonal entries as `(√2·Re, √2·Im)`.
/// The map is an isometry from the Frobenius norm to the Euclidean norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermitianPacking {
    dim: usize,
}

impl HermitianPacking {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dim * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    #[inline]
    fn row_start(&self, i: usize) -> usize {
        // Σ_{r<i} (1 + 2(d−1−r))
        i + 2 * i * (self.dim - 1) - i * i.saturating_sub(1)
    }

    /// Coordinate of the real diagonal entry `(i,i)`.
    #[inline]
    pub fn diag(&self, i: usize) -> usize {
        self.row_start(i)
    }

    /// Coordinates `(re, im)` of the off-diagonal entry `(i,j)`, `i < j`.
    #[inline]
    pub fn off(&self, i: usize, j: usize) -> (usize, usize) {
        debug_assert!(i < j && j < self.dim);
        let k = self.row_start(i) + 1 + 2 * (j - i - 1);
        (k, k + 1)
    }

    pub fn pack_into(&self, h: &CMatrix, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        let mut k = 0;
        for i in 0..self.dim {
            out[k] = h[(i, i)].re;
            k += 1;
            for j in i + 1..self.dim {
                let z = h[(i, j)];
                out[k] = SQRT2 * z.re;
                out[k + 1] = SQRT2 * z.im;
                k += 2;
            }
        }
    }

    pub fn pack(&self, h: &CMatrix) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.pack_into(h, &mut out);
        out
    }

    pub fn unpack(&self, x: &[f64]) -> CMatrix {
        debug_assert_eq!(x.len(), self.len());
        let d = self.dim;
        let mut h = CMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            h[(i, i)] = C64::new(x[k], 0.0);
            k += 1;
            for j in i + 1..d {
                let z = C64::new(x[k], x[k + 1]) / SQRT2;
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
                k += 2;
            }
        }
        h
    }

    fn to_faer(&self, x: &[f64]) -> Mat<C64> {
        let d = self.dim;
        let mut m = Mat::<C64>::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            m[(i, i)] = C64::new(x[k], 0.0);
            k += 1;
            for j in i + 1..d {
                let z = C64::new(x[k], x[k + 1]) / SQRT2;
                m[(j, i)] = z.conj();
                k += 2;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Cone {
    /// Unconstrained coordinates.
    Free { len: usize },
    /// Complex Hermitian PSD matrices of order `dim`, packed by
    /// [`HermitianPacking`]. Equivalent to a real PSD block of order `2·dim`.
    HermitianPsd { dim: usize },
}

impl Cone {
    pub fn len(&self) -> usize {
        match *self {
            Cone::Free { len } => len,
            Cone::HermitianPsd { dim } => dim * dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Order of the real symmetric block this cone embeds into.
    pub fn embedded_size(&self) -> Option<usize> {
        match *self {
            Cone::Free { .. } => None,
            Cone::HermitianPsd { dim } => Some(2 * dim),
        }
    }

    /// Projects `x` onto the cone in place.
    pub fn project(&self, x: &mut [f64]) -> Result<()> {
        match *self {
            Cone::Free { .. } => Ok(()),
            Cone::HermitianPsd { dim } => project_hermitian_packed(HermitianPacking::new(dim), x),
        }
    }

    /// Smallest eigenvalue of the unpacked block; `None` for free cones.
    pub fn min_eigenvalue(&self, x: &[f64]) -> Result<Option<f64>> {
        match *self {
            Cone::Free { .. } => Ok(None),
            Cone::HermitianPsd { dim } => {
                if dim == 0 {
                    return Ok(None);
                }
                let m = HermitianPacking::new(dim).to_faer(x);
                let ev = m.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::Eigen(dim))?;
                Ok(ev.first().copied())
            }
        }
    }
}

fn project_hermitian_packed(pack: HermitianPacking, x: &mut [f64]) -> Result<()> {
    let d = pack.dim();
    if d == 0 {
        return Ok(());
    }
    if d == 1 {
        x[0] = x[0].max(0.0);
        return Ok(());
    }
    let m = pack.to_faer(x);
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen(d))?;
    let s: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
    let u = evd.U();
    // Already PSD: nothing to do.
    if s[0] >= 0.0 {
        return Ok(());
    }
    // Eigenvalues ascend; reconstruct from whichever side is smaller.
    let first_pos = (0..d).find(|&i| s[i] > 0.0).unwrap_or(d);
    let positive = d - first_pos;
    let build = |range: std::ops::Range<usize>| {
        let mut scaled = Mat::<C64>::zeros(d, range.len());
        for (c, i) in range.clone().enumerate() {
            let w = s[i].abs().sqrt();
            for r in 0..d {
                scaled[(r, c)] = u[(r, i)] * w;
            }
        }
        &scaled * scaled.adjoint()
    };
    let result = if positive <= first_pos {
        build(first_pos..d)
    } else {
        // P = X + N N^H where N spans the negative part.
        let mut full = m.clone();
        let neg = build(0..first_pos);
        for j in 0..d {
            for i in j..d {
                full[(i, j)] += neg[(i, j)];
            }
        }
        full
    };
    let mut k = 0;
    for i in 0..d {
        x[k] = result[(i, i)].re;
        k += 1;
        for j in i + 1..d {
            // upper (i,j) = conj(lower (j,i))
            let z = result[(j, i)].conj();
            x[k] = SQRT2 * z.re;
            x[k + 1] = SQRT2 * z.im;
            k += 2;
        }
    }
    Ok(())
}

/// Euclidean projection of a real symmetric matrix onto the PSD cone.
pub fn project_psd_block(s: &Mat<f64>) -> Result<Mat<f64>> {
    let d = s.nrows();
    if s.ncols() != d {
        return Err(Error::Shape(format!("{}×{} block is not square", d, s.ncols())));
    }
    if d == 0 {
        return Ok(s.clone());
    }
    let evd = s.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen(d))?;
    let ev = evd.S().column_vector();
    let u = evd.U();
    let mut scaled = Mat::<f64>::zeros(d, d);
    for i in 0..d {
        let w = ev[i].max(0.0).sqrt();
        for r in 0..d {
            scaled[(r, i)] = u[(r, i)] * w;
        }
    }
    let p = &scaled * scaled.transpose();
    Ok(Mat::from_fn(d, d, |i, j| 0.5 * (p[(i, j)] + p[(j, i)])))
}

/// `[[Re H, −Im H], [Im H, Re H]]`.
pub fn hermitian_embed(h: &CMatrix, tol: f64) -> Result<Mat<f64>> {
    let defect = h.hermitian_defect();
    if defect > tol {
        return Err(Error::NotHermitian { defect, tol });
    }
    let d = h.rows();
    Ok(Mat::from_fn(2 * d, 2 * d, |i, j| {
        let z = h[(i % d, j % d)];
        match (i < d, j < d) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    }))
}

pub fn symmetric_eigenvalues(s: &Mat<f64>) -> Result<Vec<f64>> {
    s.self_adjoint_eigenvalues(Side::Lower).map_err(|_| Error::Eigen(s.nrows()))
}
