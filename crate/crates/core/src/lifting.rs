//! Sensing operators on the lifted rank-one matrices.
//!
//! `X_r = v·h_rᴴ` (`K×J`) and `X_c = u·h_cᴴ` (`P·K×J`). Measurement `j` reads
//! column `j` of each through row `n+N` of `T` and row `m` of `D`:
//!
//! ```text
//! y[j] = T[n+N, :]·X_r[:, j] + D[m, :]·X_c[:, j]
//! ```
//!
//! The per-measurement sensing matrices are never formed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis2pi, dot, serde_complex, CMatrix, C64, ZERO};
use crate::scene::{atom_vector, ChannelSpec, Dims, Scene, Subspaces};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedPair {
    pub xr: CMatrix,
    pub xc: CMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub dims: Dims,
    #[serde(with = "serde_complex::vec")]
    pub y: Vec<C64>,
}

impl Measurement {
    pub fn new(dims: Dims, y: Vec<C64>) -> Result<Self> {
        if y.len() != dims.measurements() {
            return Err(Error::Shape(format!("measurement has {} entries, J = {}", y.len(), dims.measurements())));
        }
        Ok(Self { dims, y })
    }
}

/// `h = Σ_k amps[k]·w(triples[k])`.
pub fn channel_vector(spec: &ChannelSpec, dims: &Dims) -> Vec<C64> {
    let mut h = vec![ZERO; dims.measurements()];
    for (r, &amp) in spec.triples.iter().zip(&spec.amps) {
        for (hj, wj) in h.iter_mut().zip(atom_vector(r, dims)) {
            *hj += amp * wj;
        }
    }
    h
}

pub fn lift(scene: &Scene, subspaces: &Subspaces) -> Result<LiftedPair> {
    scene.validate()?;
    subspaces.check_dims(&scene.dims)?;
    let hr = channel_vector(&scene.radar, &scene.dims);
    let hc = channel_vector(&scene.comms, &scene.dims);
    Ok(LiftedPair { xr: CMatrix::outer_conj(&scene.v, &hr), xc: CMatrix::outer_conj(&scene.u, &hc) })
}

fn check_matrix(name: &str, x: &CMatrix, rows: usize, cols: usize) -> Result<()> {
    if x.rows() != rows || x.cols() != cols {
        return Err(Error::Shape(format!("{name} is {}×{}, expected {rows}×{cols}", x.rows(), x.cols())));
    }
    Ok(())
}

/// `B_r(X_r)`.
pub fn apply_radar(xr: &CMatrix, subspaces: &Subspaces, dims: &Dims) -> Result<Vec<C64>> {
    let (k, jn) = (dims.subspace(), dims.measurements());
    check_matrix("X_r", xr, k, jn)?;
    subspaces.check_dims(dims)?;
    Ok((0..jn)
        .map(|j| {
            let t = subspaces.t.row(dims.t_row(j));
            (0..k).map(|i| t[i] * xr[(i, j)]).sum()
        })
        .collect())
}

/// `B_c(X_c)`. Only the `K` rows of block `p(j)` contribute to column `j`.
pub fn apply_comms(xc: &CMatrix, subspaces: &Subspaces, dims: &Dims) -> Result<Vec<C64>> {
    let (k, jn) = (dims.subspace(), dims.measurements());
    check_matrix("X_c", xc, dims.comms_len(), jn)?;
    subspaces.check_dims(dims)?;
    Ok((0..jn)
        .map(|j| {
            let (p, d) = subspaces.d_block_row(dims.d_row(j));
            (0..k).map(|i| d[i] * xc[(p * k + i, j)]).sum()
        })
        .collect())
}

pub fn apply_forward(pair: &LiftedPair, subspaces: &Subspaces, dims: &Dims) -> Result<Measurement> {
    let yr = apply_radar(&pair.xr, subspaces, dims)?;
    let yc = apply_comms(&pair.xc, subspaces, dims)?;
    Measurement::new(*dims, yr.into_iter().zip(yc).map(|(a, b)| a + b).collect())
}

fn check_dual(q: &[C64], dims: &Dims) -> Result<()> {
    if q.len() != dims.measurements() {
        return Err(Error::Shape(format!("dual vector has {} entries, J = {}", q.len(), dims.measurements())));
    }
    Ok(())
}

/// `B_r⋆(q)`, `K×J`: column `j` is `q[j]·conj(T[n+N, :])ᵀ`.
///
/// Satisfies `Re⟨q, B_r(X)⟩ = Re⟨B_r⋆(q), X⟩` with `⟨A,B⟩ = Tr(AᴴB)`.
pub fn adjoint_radar(q: &[C64], subspaces: &Subspaces, dims: &Dims) -> Result<CMatrix> {
    check_dual(q, dims)?;
    subspaces.check_dims(dims)?;
    let mut out = CMatrix::zeros(dims.subspace(), dims.measurements());
    for (j, &qj) in q.iter().enumerate() {
        let t = subspaces.t.row(dims.t_row(j));
        for (i, ti) in t.iter().enumerate() {
            out[(i, j)] = qj * ti.conj();
        }
    }
    Ok(out)
}

/// `B_c⋆(q)`, `P·K×J`; column `j` is nonzero only in block `p(j)`.
pub fn adjoint_comms(q: &[C64], subspaces: &Subspaces, dims: &Dims) -> Result<CMatrix> {
    check_dual(q, dims)?;
    subspaces.check_dims(dims)?;
    let k = dims.subspace();
    let mut out = CMatrix::zeros(dims.comms_len(), dims.measurements());
    for (j, &qj) in q.iter().enumerate() {
        let (p, d) = subspaces.d_block_row(dims.d_row(j));
        for (i, di) in d.iter().enumerate() {
            out[(p * k + i, j)] = qj * di.conj();
        }
    }
    Ok(out)
}

/// Measurement synthesized directly from the scene parameters:
///
/// ```text
/// y[j] = Σ_ℓ conj(α_ℓ)·e^{+i2π(nτ_ℓ+pν_ℓ+aβ_ℓ)}·(T v)[n+N]
///      + Σ_q conj(α_q)·e^{+i2π(nτ_q+pν_q+aβ_q)}·(D u)[m]
/// ```
///
/// which is what `B_r(v·h_rᴴ) + B_c(u·h_cᴴ)` evaluates to. Computed without
/// forming any lifted matrix or atom vector.
pub fn synthesize_measurements(scene: &Scene, subspaces: &Subspaces) -> Result<Measurement> {
    scene.validate()?;
    let dims = &scene.dims;
    subspaces.check_dims(dims)?;
    let k = dims.subspace();
    let waveform: Vec<C64> = (0..dims.samples()).map(|n| dot(subspaces.t.row(n), &scene.v)).collect();
    let symbols: Vec<C64> = (0..dims.samples() * dims.pulses())
        .map(|m| {
            let (p, d) = subspaces.d_block_row(m);
            dot(d, &scene.u[p * k..(p + 1) * k])
        })
        .collect();
    let mut y = vec![ZERO; dims.measurements()];
    for (j, yj) in y.iter_mut().enumerate() {
        let g = dims.grid(j);
        let (n, p, a) = (g.freq as f64, g.pulse as f64, g.antenna as f64);
        let phase = |tau: f64, nu: f64, beta: f64| cis2pi(n * tau + p * nu + a * beta);
        let radar: C64 = scene
            .radar
            .triples
            .iter()
            .zip(&scene.radar.amps)
            .map(|(r, amp)| amp.conj() * phase(r.tau, r.nu, r.beta))
            .sum();
        let comms: C64 = scene
            .comms
            .triples
            .iter()
            .zip(&scene.comms.amps)
            .map(|(c, amp)| amp.conj() * phase(c.tau, c.nu, c.beta))
            .sum();
        *yj = radar * waveform[dims.t_row(j)] + comms * symbols[dims.d_row(j)];
    }
    Measurement::new(*dims, y)
}
