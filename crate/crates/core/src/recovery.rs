//! Parameter and coefficient recovery from a dual solution.
//!
//! The dual polynomials `f_r(r) = B_r⋆(q)·w(r)` and `f_c(c) = B_c⋆(q)·w(c)`
//! reach unit norm exactly at the channel parameters. Peaks are located on
//! a coarse FFT grid and refined by gradient ascent; the coefficient
//! vectors then follow from a linear least-squares fit to `y`.

use std::io::Write;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{adjoint_comms, adjoint_radar, channel_vector, Measurement};
use crate::linalg::{cis2pi, dot_conj, norm2, serde_complex, CMatrix, C64, ZERO};
use crate::scene::{atom_vector, torus_distance, wrap_unit, Dims, ParamTriple, Scene, Subspaces};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Radar,
    Comms,
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Channel::Radar => "radar",
            Channel::Comms => "comms",
        })
    }
}

/// Axes along which the atom actually varies (`[τ, ν, β]`): a single
/// delay sample, pulse or antenna leaves the matching parameter unobservable.
pub fn identifiable_axes(dims: &Dims) -> [bool; 3] {
    [dims.samples() > 1, dims.pulses() > 1, dims.antennas() > 1]
}

/// Axes that `‖f‖` of one channel can localize. Every message block of
/// the communications signal has its own coefficients, so a common Doppler
/// shift of all paths is absorbed by `u` and `‖f_c‖` is constant along `ν`.
pub fn channel_axes(dims: &Dims, which: Channel) -> [bool; 3] {
    let mut axes = identifiable_axes(dims);
    if which == Channel::Comms {
        axes[1] = false;
    }
    axes
}

/// Wrap-around `ℓ∞` distance restricted to identifiable axes.
pub fn observable_distance(a: &ParamTriple, b: &ParamTriple, dims: &Dims) -> f64 {
    masked_distance(a, b, identifiable_axes(dims))
}

pub fn masked_distance(a: &ParamTriple, b: &ParamTriple, axes: [bool; 3]) -> f64 {
    a.as_array()
        .iter()
        .zip(b.as_array())
        .zip(axes)
        .filter(|&(_, keep)| keep)
        .map(|((x, y), _)| torus_distance(*x, y))
        .fold(0.0, f64::max)
}

/// `f(r) = C·w(r)` with `C = B⋆(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolynomial {
    pub which: Channel,
    pub dims: Dims,
    pub coeffs: CMatrix,
}

impl DualPolynomial {
    pub fn new(q: &[C64], subspaces: &Subspaces, dims: &Dims, which: Channel) -> Result<Self> {
        let coeffs = match which {
            Channel::Radar => adjoint_radar(q, subspaces, dims)?,
            Channel::Comms => adjoint_comms(q, subspaces, dims)?,
        };
        Ok(Self { which, dims: *dims, coeffs })
    }

    pub fn eval(&self, r: &ParamTriple) -> Vec<C64> {
        self.coeffs.mul_vec(&atom_vector(r, &self.dims))
    }

    pub fn norm(&self, r: &ParamTriple) -> f64 {
        norm2(&self.eval(r))
    }

    /// `‖f(r)‖²` and its gradient in `(τ, ν, β)`.
    pub fn value_and_gradient(&self, r: &ParamTriple) -> (f64, [f64; 3]) {
        let w = atom_vector(r, &self.dims);
        let f = self.coeffs.mul_vec(&w);
        let mut grad = [0.0; 3];
        let two_pi = 2.0 * std::f64::consts::PI;
        for (axis, g) in grad.iter_mut().enumerate() {
            let dw: Vec<C64> = w
                .iter()
                .enumerate()
                .map(|(j, wj)| {
                    let p = self.dims.grid(j);
                    let k = [p.freq as f64, p.pulse as f64, p.antenna as f64][axis];
                    wj * C64::new(0.0, -two_pi * k)
                })
                .collect();
            *g = 2.0 * dot_conj(&f, &self.coeffs.mul_vec(&dw)).re;
        }
        (f.iter().map(|z| z.norm_sqr()).sum(), grad)
    }

    /// `‖f‖` on the grid `origin + (i1/g1, i2/g2, i3/g3)` over
    /// `(ν, τ, β)` by zero-padded 3-D FFTs, one per output coordinate.
    pub fn field(&self, sizes: [usize; 3], origin: ParamTriple) -> Result<PolyField> {
        let d = &self.dims;
        let need = [2 * d.pulses(), 2 * d.samples(), 2 * d.antennas()];
        if sizes.iter().zip(&need).any(|(g, n)| g < n) {
            return Err(Error::GridTooSmall { got: sizes, need });
        }
        let [g1, g2, g3] = sizes;
        let total = g1 * g2 * g3;
        let mut planner = FftPlanner::<f64>::new();
        let ffts = [planner.plan_fft_forward(g1), planner.plan_fft_forward(g2), planner.plan_fft_forward(g3)];
        let shift: Vec<C64> = (0..d.measurements())
            .map(|j| {
                let p = d.grid(j);
                cis2pi(-(p.pulse as f64 * origin.nu + p.freq as f64 * origin.tau + p.antenna as f64 * origin.beta))
            })
            .collect();
        let slot: Vec<usize> = (0..d.measurements())
            .map(|j| {
                let p = d.grid(j);
                let i2 = p.freq.rem_euclid(g2 as isize) as usize;
                (p.pulse * g2 + i2) * g3 + p.antenna
            })
            .collect();
        let mut power = vec![0.0; total];
        let mut buf = vec![ZERO; total];
        let mut line = Vec::new();
        for k in 0..self.coeffs.rows() {
            let row = self.coeffs.row(k);
            if row.iter().all(|z| *z == ZERO) {
                continue;
            }
            buf.fill(ZERO);
            for j in 0..d.measurements() {
                buf[slot[j]] = row[j] * shift[j];
            }
            // Innermost axis is contiguous.
            for chunk in buf.chunks_mut(g3) {
                ffts[2].process(chunk);
            }
            for i1 in 0..g1 {
                for i3 in 0..g3 {
                    line.clear();
                    line.extend((0..g2).map(|i2| buf[(i1 * g2 + i2) * g3 + i3]));
                    ffts[1].process(&mut line);
                    for (i2, v) in line.iter().enumerate() {
                        buf[(i1 * g2 + i2) * g3 + i3] = *v;
                    }
                }
            }
            for i2 in 0..g2 {
                for i3 in 0..g3 {
                    line.clear();
                    line.extend((0..g1).map(|i1| buf[(i1 * g2 + i2) * g3 + i3]));
                    ffts[0].process(&mut line);
                    for (i1, v) in line.iter().enumerate() {
                        buf[(i1 * g2 + i2) * g3 + i3] = *v;
                    }
                }
            }
            for (p, v) in power.iter_mut().zip(&buf) {
                *p += v.norm_sqr();
            }
        }
        Ok(PolyField { which: self.which, sizes, origin, values: power.into_iter().map(f64::sqrt).collect() })
    }
}

/// `‖f‖` sampled on a regular torus grid, axes ordered Doppler, delay, DoA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyField {
    pub which: Channel,
    /// Grid sizes along `(ν, τ, β)`.
    pub sizes: [usize; 3],
    /// Parameter triple at grid index `(0, 0, 0)`.
    pub origin: ParamTriple,
    pub values: Vec<f64>,
}

impl PolyField {
    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.sizes[1] + i[1]) * self.sizes[2] + i[2]
    }

    pub fn get(&self, i: [usize; 3]) -> f64 {
        self.values[self.index(i)]
    }

    pub fn triple_at(&self, i: [usize; 3]) -> ParamTriple {
        let [g1, g2, g3] = self.sizes;
        ParamTriple::new(
            self.origin.tau + i[1] as f64 / g2 as f64,
            self.origin.nu + i[0] as f64 / g1 as f64,
            self.origin.beta + i[2] as f64 / g3 as f64,
        )
    }

    fn unravel(&self, flat: usize) -> [usize; 3] {
        let [_, g2, g3] = self.sizes;
        [flat / (g2 * g3), (flat / g3) % g2, flat % g3]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Writes the 2-D plane through grid index `at` spanned by axes `a`, `b`
    /// (`0 = ν`, `1 = τ`, `2 = β`) in long format.
    pub fn write_plane(&self, out: &mut impl Write, at: [usize; 3], a: usize, b: usize) -> Result<()> {
        let names = ["nu", "tau", "beta"];
        let fixed = 3 - a - b;
        let t = self.triple_at(at);
        let fixed_val = [t.nu, t.tau, t.beta][fixed];
        writeln!(
            out,
            "# {} |f| plane {}-{}, {}={:.6}, grid {}x{}",
            self.which, names[a], names[b], names[fixed], fixed_val, self.sizes[a], self.sizes[b]
        )?;
        writeln!(out, "tau,nu,beta,value")?;
        for i in 0..self.sizes[a] {
            for j in 0..self.sizes[b] {
                let mut idx = at;
                idx[a] = i;
                idx[b] = j;
                let p = self.triple_at(idx);
                writeln!(out, "{:.6},{:.6},{:.6},{:.12}", p.tau, p.nu, p.beta, self.get(idx))?;
            }
        }
        Ok(())
    }

    /// 1-D cut through `at` along `axis`.
    pub fn write_cut(&self, out: &mut impl Write, at: [usize; 3], axis: usize) -> Result<()> {
        let names = ["nu", "tau", "beta"];
        writeln!(out, "# {} |f| cut along {}, grid {}", self.which, names[axis], self.sizes[axis])?;
        writeln!(out, "tau,nu,beta,value")?;
        for i in 0..self.sizes[axis] {
            let mut idx = at;
            idx[axis] = i;
            let p = self.triple_at(idx);
            writeln!(out, "{:.6},{:.6},{:.6},{:.12}", p.tau, p.nu, p.beta, self.get(idx))?;
        }
        Ok(())
    }
}

/// Coarse grid of `factor ×` the bandwidth of each axis.
pub fn coarse_sizes(dims: &Dims, factor: usize) -> [usize; 3] {
    let f = factor.max(2);
    [f * dims.pulses(), f * dims.samples(), f * dims.antennas()]
}

pub fn eval_dual_poly(
    q: &[C64],
    subspaces: &Subspaces,
    dims: &Dims,
    which: Channel,
    sizes: [usize; 3],
) -> Result<PolyField> {
    DualPolynomial::new(q, subspaces, dims, which)?.field(sizes, ParamTriple::new(0.0, 0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPeak {
    pub index: [usize; 3],
    pub triple: ParamTriple,
    pub value: f64,
}

/// Local maxima over the 26-neighbourhood on the torus. Within a plateau
/// only the lexicographically first point counts. Sorted by value, ties by
/// grid index.
pub fn local_maxima(field: &PolyField, floor: f64) -> Vec<GridPeak> {
    let [g1, g2, g3] = field.sizes;
    let mut peaks = Vec::new();
    for flat in 0..field.values.len() {
        let v = field.values[flat];
        if v < floor {
            continue;
        }
        let idx = field.unravel(flat);
        let mut is_max = true;
        'scan: for d1 in [g1 - 1, 0, 1] {
            for d2 in [g2 - 1, 0, 1] {
                for d3 in [g3 - 1, 0, 1] {
                    let nb = [(idx[0] + d1) % g1, (idx[1] + d2) % g2, (idx[2] + d3) % g3];
                    let nf = field.index(nb);
                    if nf == flat {
                        continue;
                    }
                    let w = field.values[nf];
                    if w > v || (w == v && nf < flat) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
        }
        if is_max {
            peaks.push(GridPeak { index: idx, triple: field.triple_at(idx), value: v });
        }
    }
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.index.cmp(&b.index)));
    peaks
}

pub fn find_peaks(field: &PolyField, order: usize, floor: f64) -> Result<Vec<GridPeak>> {
    if order == 0 {
        return Err(Error::InvalidProblem("peak order must be at least 1".into()));
    }
    let mut peaks = local_maxima(field, floor);
    if peaks.len() < order {
        return Err(Error::TooFewPeaks { found: peaks.len(), wanted: order });
    }
    peaks.truncate(order);
    Ok(peaks)
}

pub const REFINE_MAX_ITERS: usize = 200;
pub const REFINE_MIN_STEP: f64 = 1e-10;

/// Gradient ascent on `‖f‖²` with backtracking, preconditioned by the
/// squared bandwidth of each axis. Unobservable axes stay at the seed.
pub fn refine_peak(poly: &DualPolynomial, seed: &ParamTriple) -> ParamTriple {
    let d = &poly.dims;
    let axes = channel_axes(d, poly.which);
    let band = [d.samples() as f64, d.pulses() as f64, d.antennas() as f64];
    let precond: Vec<f64> =
        (0..3).map(|a| if axes[a] { 1.0 / (2.0 * std::f64::consts::PI * band[a]).powi(2) } else { 0.0 }).collect();
    let mut r = *seed;
    let (mut val, mut grad) = poly.value_and_gradient(&r);
    let mut t = 1.0;
    for _ in 0..REFINE_MAX_ITERS {
        let dir: Vec<f64> = (0..3).map(|a| precond[a] * grad[a]).collect();
        let slope: f64 = (0..3).map(|a| grad[a] * dir[a]).sum();
        if slope <= 0.0 {
            break;
        }
        let mut accepted = false;
        let mut step_len = 0.0;
        while t > 1e-16 {
            let cand = r.as_array();
            let trial = ParamTriple::new(cand[0] + t * dir[0], cand[1] + t * dir[1], cand[2] + t * dir[2]);
            let (tv, tg) = poly.value_and_gradient(&trial);
            if tv >= val + 1e-4 * t * slope {
                step_len = t * dir.iter().map(|x| x * x).sum::<f64>().sqrt();
                r = trial;
                val = tv;
                grad = tg;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || step_len < REFINE_MIN_STEP {
            break;
        }
        t = (t * 2.0).min(4.0);
    }
    r
}

/// `W = [W_r, W_c]` such that `W·z = B_r(Σ z_ℓ·w_ℓᴴ) + B_c(Σ z_q·w_qᴴ)`.
pub fn build_ls_system(
    radar: &[ParamTriple],
    comms: &[ParamTriple],
    subspaces: &Subspaces,
    dims: &Dims,
) -> Result<CMatrix> {
    subspaces.check_dims(dims)?;
    if radar.is_empty() && comms.is_empty() {
        return Err(Error::InvalidProblem("no atoms to fit".into()));
    }
    let (k, pk) = (dims.subspace(), dims.comms_len());
    let cols = radar.len() * k + comms.len() * pk;
    let mut w = CMatrix::zeros(dims.measurements(), cols);
    let ra: Vec<Vec<C64>> = radar.iter().map(|r| atom_vector(r, dims)).collect();
    let ca: Vec<Vec<C64>> = comms.iter().map(|c| atom_vector(c, dims)).collect();
    for j in 0..dims.measurements() {
        let t = subspaces.t.row(dims.t_row(j));
        for (l, atom) in ra.iter().enumerate() {
            let a = atom[j].conj();
            for (i, ti) in t.iter().enumerate() {
                w[(j, l * k + i)] = a * ti;
            }
        }
        let (p, drow) = subspaces.d_block_row(dims.d_row(j));
        for (q, atom) in ca.iter().enumerate() {
            let a = atom[j].conj();
            let base = radar.len() * k + q * pk + p * k;
            for (i, di) in drow.iter().enumerate() {
                w[(j, base + i)] = a * di;
            }
        }
    }
    Ok(w)
}

/// Least-squares solution of `W z = y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsFit {
    pub z: Vec<C64>,
    pub residual: f64,
    pub condition_number: f64,
    pub rank: usize,
}

/// Relative singular-value threshold for the numerical rank.
pub const RANK_TOL: f64 = 1e-10;

pub fn solve_least_squares(w: &CMatrix, y: &[C64]) -> Result<LsFit> {
    let (m, n) = (w.rows(), w.cols());
    if y.len() != m {
        return Err(Error::Shape(format!("W has {m} rows, y has {}", y.len())));
    }
    if m < n {
        return Err(Error::RankDeficientSystem { rank: m, cols: n });
    }
    let svd = w.to_faer().thin_svd().map_err(|_| Error::Eigen(n))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let smax = if n > 0 { s[0] } else { 0.0 };
    let rank = (0..n).filter(|&i| s[i] > RANK_TOL * smax).count();
    if rank < n {
        return Err(Error::RankDeficientSystem { rank, cols: n });
    }
    let (u, v) = (svd.U(), svd.V());
    let mut z = vec![ZERO; n];
    for i in 0..n {
        let coef: C64 = (0..m).map(|r| u[(r, i)].conj() * y[r]).sum::<C64>() / s[i];
        for (c, zc) in z.iter_mut().enumerate() {
            *zc += v[(c, i)] * coef;
        }
    }
    let wz = w.mul_vec(&z);
    let residual = norm2(&wz.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(LsFit { z, residual, condition_number: if n > 0 { smax / s[n - 1] } else { 1.0 }, rank })
}

/// `Σ_ℓ z_ℓ·w(r_ℓ)ᴴ` for consecutive blocks of `block` entries of `z`.
pub fn assemble_lifted(z: &[C64], triples: &[ParamTriple], block: usize, dims: &Dims) -> CMatrix {
    let mut x = CMatrix::zeros(block, dims.measurements());
    for (l, r) in triples.iter().enumerate() {
        x.add_assign(&CMatrix::outer_conj(&z[l * block..(l + 1) * block], &atom_vector(r, dims)));
    }
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    #[serde(with = "serde_complex::vec")]
    pub z: Vec<C64>,
    pub xr_hat: CMatrix,
    pub xc_hat: CMatrix,
    pub residual: f64,
    pub condition_number: f64,
}

pub fn recover_coefficients(
    radar: &[ParamTriple],
    comms: &[ParamTriple],
    subspaces: &Subspaces,
    y: &Measurement,
) -> Result<Coefficients> {
    let dims = &y.dims;
    let w = build_ls_system(radar, comms, subspaces, dims)?;
    let fit = solve_least_squares(&w, &y.y)?;
    let split = radar.len() * dims.subspace();
    Ok(Coefficients {
        xr_hat: assemble_lifted(&fit.z[..split], radar, dims.subspace(), dims),
        xc_hat: assemble_lifted(&fit.z[split..], comms, dims.comms_len(), dims),
        z: fit.z,
        residual: fit.residual,
        condition_number: fit.condition_number,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ModelOrder {
    /// Use `L` and `Q_c` from the dimensions.
    Known,
    /// Every peak with `‖f‖ ≥ 1 − eps`.
    Threshold { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryOptions {
    pub grid_factor: usize,
    pub floor: f64,
    pub order: ModelOrder,
    pub refine: bool,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self { grid_factor: 4, floor: 0.5, order: ModelOrder::Known, refine: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub radar_triples: Vec<ParamTriple>,
    pub comms_triples: Vec<ParamTriple>,
    /// `‖f‖` at the recovered triples.
    pub radar_peak_values: Vec<f64>,
    pub comms_peak_values: Vec<f64>,
    /// `L` blocks of length `K`, then `Q_c` blocks of length `P·K`.
    #[serde(with = "serde_complex::vec")]
    pub z: Vec<C64>,
    pub xr_hat: CMatrix,
    pub xc_hat: CMatrix,
    pub residual: f64,
    pub relative_residual: f64,
    pub condition_number: f64,
}

impl RecoveryResult {
    pub fn radar_block(&self, l: usize, k: usize) -> &[C64] {
        &self.z[l * k..(l + 1) * k]
    }
}

fn localize(poly: &DualPolynomial, order: usize, opts: &RecoveryOptions) -> Result<Vec<(ParamTriple, f64)>> {
    if order == 0 && matches!(opts.order, ModelOrder::Known) {
        return Ok(Vec::new());
    }
    let mut field = poly.field(coarse_sizes(&poly.dims, opts.grid_factor), ParamTriple::new(0.0, 0.0, 0.0))?;
    if poly.which == Channel::Comms {
        // Constant along ν: search the ν = 0 plane only.
        let plane = field.sizes[1] * field.sizes[2];
        field.values.truncate(plane);
        field.sizes[0] = 1;
    }
    let peaks = match opts.order {
        ModelOrder::Known => find_peaks(&field, order, opts.floor)?,
        ModelOrder::Threshold { eps } => local_maxima(&field, opts.floor.max(1.0 - eps)),
    };
    let mut out: Vec<(ParamTriple, f64)> = Vec::with_capacity(peaks.len());
    for p in peaks {
        let r = if opts.refine { refine_peak(poly, &p.triple) } else { p.triple };
        out.push((r, poly.norm(&r)));
    }
    if let ModelOrder::Threshold { eps } = opts.order {
        // Grid maxima can sit below threshold before refinement.
        out.retain(|&(_, v)| v >= 1.0 - eps);
    }
    if poly.which == Channel::Comms && poly.dims.pulses() > 1 {
        if let Some(&(anchor, _)) = out.first() {
            for item in out.iter_mut().skip(1) {
                item.0.nu = align_doppler(poly, &anchor, &item.0);
            }
        }
    }
    Ok(out)
}

/// Doppler of a communications path relative to `anchor`: the value of
/// `ν` that makes the message blocks of `f_c(r)` phase-coherent with those
/// of `f_c(anchor)`, maximizing `|Σ_p ⟨f_p(anchor), f_p(r)⟩ e^{−i2πpν}|`.
pub fn align_doppler(poly: &DualPolynomial, anchor: &ParamTriple, r: &ParamTriple) -> f64 {
    let (p_len, k) = (poly.dims.pulses(), poly.dims.subspace());
    let a = poly.eval(anchor);
    let b = poly.eval(&ParamTriple::new(r.tau, 0.0, r.beta));
    let c: Vec<C64> = (0..p_len).map(|p| dot_conj(&a[p * k..(p + 1) * k], &b[p * k..(p + 1) * k])).collect();
    let score = |nu: f64| c.iter().enumerate().map(|(p, cp)| cp * cis2pi(-(p as f64) * nu)).sum::<C64>().norm();
    let n = 16 * p_len;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..n {
        let nu = i as f64 / n as f64;
        let v = score(nu);
        if v > best.1 {
            best = (nu, v);
        }
    }
    let (mut lo, mut hi) = (best.0 - 1.0 / n as f64, best.0 + 1.0 / n as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (score(x1), score(x2));
    while hi - lo > 1e-13 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = score(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = score(x1);
        }
    }
    wrap_unit(0.5 * (lo + hi))
}

/// Peaks of both dual polynomials, then least squares.
pub fn recover(q: &[C64], subspaces: &Subspaces, y: &Measurement, opts: &RecoveryOptions) -> Result<RecoveryResult> {
    let dims = &y.dims;
    let fr = DualPolynomial::new(q, subspaces, dims, Channel::Radar)?;
    let fc = DualPolynomial::new(q, subspaces, dims, Channel::Comms)?;
    let radar = localize(&fr, dims.targets(), opts)?;
    let comms = localize(&fc, dims.paths(), opts)?;
    let rt: Vec<ParamTriple> = radar.iter().map(|p| p.0).collect();
    let ct: Vec<ParamTriple> = comms.iter().map(|p| p.0).collect();
    let coef = recover_coefficients(&rt, &ct, subspaces, y)?;
    let yn = norm2(&y.y);
    Ok(RecoveryResult {
        radar_peak_values: radar.iter().map(|p| p.1).collect(),
        comms_peak_values: comms.iter().map(|p| p.1).collect(),
        radar_triples: rt,
        comms_triples: ct,
        z: coef.z,
        xr_hat: coef.xr_hat,
        xc_hat: coef.xc_hat,
        residual: coef.residual,
        relative_residual: if yn > 0.0 { coef.residual / yn } else { coef.residual },
        condition_number: coef.condition_number,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCertificate {
    /// `‖f‖` at each true atom.
    pub on_support: Vec<f64>,
    /// `max |‖f‖ − 1|` over the atoms.
    pub on_support_deviation: f64,
    /// `max_ℓ (1 − |⟨ĉ, f(r_ℓ)⟩|/‖f(r_ℓ)‖)`, `ĉ` the normalized true
    /// coefficient vector.
    pub alignment_deviation: f64,
    /// `max_{ℓ,k} |f_ℓ/f_k − conj(sgn α_ℓ)·sgn α_k|` with the ratio taken as
    /// `⟨f_k, f_ℓ⟩/‖f_k‖²`.
    pub ratio_deviation: f64,
    /// Grid maximum of `‖f‖` outside the exclusion balls.
    pub off_support_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub radar: ChannelCertificate,
    pub comms: ChannelCertificate,
    pub exclusion_radius: f64,
    pub grid: [usize; 3],
}

impl CertificateReport {
    pub fn on_support_deviation(&self) -> f64 {
        self.radar.on_support_deviation.max(self.comms.on_support_deviation)
    }

    pub fn off_support_max(&self) -> f64 {
        self.radar.off_support_max.max(self.comms.off_support_max)
    }
}

fn channel_certificate(
    poly: &DualPolynomial,
    triples: &[ParamTriple],
    amps: &[C64],
    coeff: &[C64],
    sizes: [usize; 3],
    radius: f64,
) -> Result<ChannelCertificate> {
    let vals: Vec<Vec<C64>> = triples.iter().map(|r| poly.eval(r)).collect();
    let on_support: Vec<f64> = vals.iter().map(|f| norm2(f)).collect();
    let on_support_deviation = on_support.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let cn = norm2(coeff);
    let alignment_deviation = vals
        .iter()
        .zip(&on_support)
        .map(|(f, &n)| if n > 0.0 && cn > 0.0 { 1.0 - dot_conj(coeff, f).norm() / (cn * n) } else { 1.0 })
        .fold(0.0, f64::max);
    let sgn = |a: C64| if a.norm() > 0.0 { a / a.norm() } else { ZERO };
    let mut ratio_deviation: f64 = 0.0;
    for l in 0..vals.len() {
        for k in 0..vals.len() {
            if l == k {
                continue;
            }
            let nk = on_support[k] * on_support[k];
            let ratio = if nk > 0.0 { dot_conj(&vals[k], &vals[l]) / nk } else { ZERO };
            let want = sgn(amps[l]).conj() * sgn(amps[k]);
            ratio_deviation = ratio_deviation.max((ratio - want).norm());
        }
    }
    let axes = channel_axes(&poly.dims, poly.which);
    let field = poly.field(sizes, ParamTriple::new(0.0, 0.0, 0.0))?;
    let mut off_support_max: f64 = 0.0;
    for flat in 0..field.values.len() {
        let r = field.triple_at(field.unravel(flat));
        if triples.iter().all(|t| masked_distance(t, &r, axes) > radius) {
            off_support_max = off_support_max.max(field.values[flat]);
        }
    }
    Ok(ChannelCertificate { on_support, on_support_deviation, alignment_deviation, ratio_deviation, off_support_max })
}

/// Checks the optimality conditions of a dual vector against the true
/// scene: unit norm and coefficient alignment on the support, strict
/// sub-unit norm away from it.
pub fn verify_certificate(
    q: &[C64],
    scene: &Scene,
    subspaces: &Subspaces,
    grid_factor: usize,
) -> Result<CertificateReport> {
    let dims = &scene.dims;
    let radius = 0.5 / dims.samples().max(dims.pulses()).max(dims.antennas()) as f64;
    let sizes = coarse_sizes(dims, grid_factor);
    let fr = DualPolynomial::new(q, subspaces, dims, Channel::Radar)?;
    let fc = DualPolynomial::new(q, subspaces, dims, Channel::Comms)?;
    Ok(CertificateReport {
        radar: channel_certificate(&fr, &scene.radar.triples, &scene.radar.amps, &scene.v, sizes, radius)?,
        comms: channel_certificate(&fc, &scene.comms.triples, &scene.comms.amps, &scene.u, sizes, radius)?,
        exclusion_radius: radius,
        grid: sizes,
    })
}

/// Minimum-cost perfect matching of a square cost matrix (subset DP).
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(n <= 20, "assignment size {n} too large");
    let full = 1usize << n;
    let mut best = vec![f64::INFINITY; full];
    let mut choice = vec![usize::MAX; full];
    best[0] = 0.0;
    for mask in 0..full {
        if !best[mask].is_finite() {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == n {
            continue;
        }
        for col in 0..n {
            if mask & (1 << col) == 0 {
                let next = mask | (1 << col);
                let c = best[mask] + cost[row][col];
                if c < best[next] {
                    best[next] = c;
                    choice[next] = col;
                }
            }
        }
    }
    let mut out = vec![0; n];
    let mut mask = full - 1;
    for row in (0..n).rev() {
        let col = choice[mask];
        out[row] = col;
        mask &= !(1 << col);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedErrors {
    /// Per true atom: wrap-around absolute error per coordinate
    /// `(τ, ν, β)`; `0.5` (worst case) for unmatched atoms.
    pub per_atom: Vec<[f64; 3]>,
    /// Largest coordinate error over observable axes.
    pub max_error: f64,
    pub unmatched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub radar_frobenius: f64,
    pub radar_frobenius_rel: f64,
    pub comms_frobenius: f64,
    pub comms_frobenius_rel: f64,
    pub radar_params: MatchedErrors,
    pub comms_params: MatchedErrors,
    /// Common Doppler shift that best aligns the recovered paths with the
    /// truth. It is not determined by the measurements.
    pub comms_doppler_offset: f64,
    /// Communications errors after applying `comms_doppler_offset`.
    pub comms_params_aligned: MatchedErrors,
    pub comms_frobenius_aligned: f64,
    pub comms_frobenius_rel_aligned: f64,
}

pub const WORST_DISTANCE: f64 = 0.5;

pub fn match_triples(truth: &[ParamTriple], est: &[ParamTriple], dims: &Dims) -> MatchedErrors {
    let n = truth.len().max(est.len());
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (truth.get(i), est.get(j)) {
                    (Some(a), Some(b)) => observable_distance(a, b, dims),
                    _ => WORST_DISTANCE,
                })
                .collect()
        })
        .collect();
    let perm = min_cost_assignment(&cost);
    let axes = identifiable_axes(dims);
    let mut per_atom = Vec::with_capacity(truth.len());
    let mut unmatched = 0;
    let mut max_error: f64 = 0.0;
    for (i, t) in truth.iter().enumerate() {
        match est.get(perm[i]) {
            Some(e) => {
                let (a, b) = (t.as_array(), e.as_array());
                let err = [0, 1, 2].map(|k| if axes[k] { torus_distance(a[k], b[k]) } else { 0.0 });
                max_error = max_error.max(err.iter().copied().fold(0.0, f64::max));
                per_atom.push(err);
            }
            None => {
                unmatched += 1;
                max_error = WORST_DISTANCE;
                per_atom.push([WORST_DISTANCE; 3]);
            }
        }
    }
    if est.len() > truth.len() {
        unmatched += est.len() - truth.len();
    }
    MatchedErrors { per_atom, max_error, unmatched }
}

pub fn error_metrics(scene: &Scene, result: &RecoveryResult) -> Result<ErrorMetrics> {
    let dims = &scene.dims;
    let xr = CMatrix::outer_conj(&scene.v, &channel_vector(&scene.radar, dims));
    let xc = CMatrix::outer_conj(&scene.u, &channel_vector(&scene.comms, dims));
    if result.xr_hat.rows() != xr.rows()
        || result.xr_hat.cols() != xr.cols()
        || result.xc_hat.rows() != xc.rows()
        || result.xc_hat.cols() != xc.cols()
    {
        return Err(Error::Shape("recovered lifted matrices do not match the scene".into()));
    }
    let rel = |e: f64, n: f64| if n > 0.0 { e / n } else { e };
    let er = xr.sub(&result.xr_hat).frobenius_norm();
    let ec = xc.sub(&result.xc_hat).frobenius_norm();
    let offset = doppler_offset(&scene.comms.triples, &result.comms_triples, dims);
    let (shifted, xc_aligned) = shift_comms_doppler(result, offset, dims);
    let eca = xc.sub(&xc_aligned).frobenius_norm();
    Ok(ErrorMetrics {
        radar_frobenius: er,
        radar_frobenius_rel: rel(er, xr.frobenius_norm()),
        comms_frobenius: ec,
        comms_frobenius_rel: rel(ec, xc.frobenius_norm()),
        radar_params: match_triples(&scene.radar.triples, &result.radar_triples, dims),
        comms_params: match_triples(&scene.comms.triples, &result.comms_triples, dims),
        comms_doppler_offset: offset,
        comms_params_aligned: match_triples(&scene.comms.triples, &shifted, dims),
        comms_frobenius_aligned: eca,
        comms_frobenius_rel_aligned: rel(eca, xc.frobenius_norm()),
    })
}

/// Circular mean of `ν_true − ν_est` over paths matched on `(τ, β)`.
pub fn doppler_offset(truth: &[ParamTriple], est: &[ParamTriple], dims: &Dims) -> f64 {
    let axes = channel_axes(dims, Channel::Comms);
    let n = truth.len().max(est.len());
    let cost: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match (truth.get(i), est.get(j)) {
                    (Some(a), Some(b)) => masked_distance(a, b, axes),
                    _ => WORST_DISTANCE,
                })
                .collect()
        })
        .collect();
    let perm = min_cost_assignment(&cost);
    let mut acc = ZERO;
    for (i, t) in truth.iter().enumerate() {
        if let Some(e) = est.get(perm[i]) {
            acc += cis2pi(t.nu - e.nu);
        }
    }
    if acc.norm() == 0.0 {
        0.0
    } else {
        wrap_unit(acc.arg() / (2.0 * std::f64::consts::PI))
    }
}

/// The equivalent communications solution with every Doppler moved by
/// `delta`: path blocks of message `p` pick up `e^{−i2πpδ}`, which leaves
/// `B_c(X̂_c)` unchanged.
pub fn shift_comms_doppler(result: &RecoveryResult, delta: f64, dims: &Dims) -> (Vec<ParamTriple>, CMatrix) {
    let (k, pk) = (dims.subspace(), dims.comms_len());
    let base = result.radar_triples.len() * k;
    let triples: Vec<ParamTriple> =
        result.comms_triples.iter().map(|c| ParamTriple::new(c.tau, c.nu + delta, c.beta)).collect();
    let mut z = result.z[base..].to_vec();
    if z.len() != triples.len() * pk {
        return (triples, result.xc_hat.clone());
    }
    for (i, zi) in z.iter_mut().enumerate() {
        let p = (i % pk) / k;
        *zi *= cis2pi(-(p as f64) * delta);
    }
    let x = assemble_lifted(&z, &triples, pk, dims);
    (triples, x)
}

/// Nearest grid index of a triple.
pub fn nearest_index(field: &PolyField, r: &ParamTriple) -> [usize; 3] {
    let rel =
        [wrap_unit(r.nu - field.origin.nu), wrap_unit(r.tau - field.origin.tau), wrap_unit(r.beta - field.origin.beta)];
    [0, 1, 2].map(|a| ((rel[a] * field.sizes[a] as f64).round() as usize) % field.sizes[a])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::synthesize_measurements;
    use crate::scene::{make_subspaces, sample_scene, ChannelSpec, SceneConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    }

    fn random_triple(rng: &mut ChaCha8Rng) -> ParamTriple {
        ParamTriple::new(rng.random(), rng.random(), rng.random())
    }

    fn small() -> Dims {
        Dims::with_samples(5, 3, 2, 2, 2, 1).unwrap()
    }

    #[test]
    fn zero_q_gives_zero_field() {
        let d = small();
        let sub = make_subspaces(&d, 1);
        let f = eval_dual_poly(&vec![ZERO; d.measurements()], &sub, &d, Channel::Radar, coarse_sizes(&d, 4)).unwrap();
        assert!(f.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fft_matches_direct() {
        let d = small();
        let sub = make_subspaces(&d, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_q(&mut rng, d.measurements());
        for which in [Channel::Radar, Channel::Comms] {
            let poly = DualPolynomial::new(&q, &sub, &d, which).unwrap();
            let origin = random_triple(&mut rng);
            let field = poly.field([7, 11, 5], origin).unwrap();
            for flat in 0..field.values.len() {
                let idx = field.unravel(flat);
                let direct = poly.norm(&field.triple_at(idx));
                assert!((direct - field.values[flat]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn grid_too_small() {
        let d = small();
        let sub = make_subspaces(&d, 2);
        let q = vec![ZERO; d.measurements()];
        assert!(matches!(eval_dual_poly(&q, &sub, &d, Channel::Radar, [6, 9, 4]), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = small();
        let sub = make_subspaces(&d, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_q(&mut rng, d.measurements());
        let poly = DualPolynomial::new(&q, &sub, &d, Channel::Comms).unwrap();
        let h = 1e-6;
        for _ in 0..20 {
            let r = random_triple(&mut rng);
            let (_, g) = poly.value_and_gradient(&r);
            for a in 0..3 {
                let mut p = r.as_array();
                let mut m = r.as_array();
                p[a] += h;
                m[a] -= h;
                let fd = (poly.value_and_gradient(&ParamTriple::from_array(p)).0
                    - poly.value_and_gradient(&ParamTriple::from_array(m)).0)
                    / (2.0 * h);
                assert!((fd - g[a]).abs() <= 1e-5 * g[a].abs().max(1e-3), "{fd} vs {}", g[a]);
            }
        }
    }

    fn synthetic_field(sizes: [usize; 3], hot: &[([usize; 3], f64)]) -> PolyField {
        let mut f = PolyField {
            which: Channel::Radar,
            sizes,
            origin: ParamTriple::new(0.0, 0.0, 0.0),
            values: vec![0.0; sizes.iter().product()],
        };
        for &(i, v) in hot {
            let k = f.index(i);
            f.values[k] = v;
        }
        f
    }

    #[test]
    fn peak_picking_rules() {
        let f = synthetic_field([6, 8, 4], &[([2, 5, 1], 0.9)]);
        let p = find_peaks(&f, 1, 0.5).unwrap();
        assert_eq!(p[0].index, [2, 5, 1]);
        let t = p[0].triple;
        assert!((t.nu - 2.0 / 6.0).abs() < 1e-15 && (t.tau - 5.0 / 8.0).abs() < 1e-15 && (t.beta - 0.25).abs() < 1e-15);

        let f = synthetic_field([6, 8, 4], &[([4, 0, 0], 0.8), ([1, 3, 2], 0.8)]);
        let p = find_peaks(&f, 2, 0.5).unwrap();
        assert_eq!(p[0].index, [1, 3, 2]);
        assert_eq!(p[1].index, [4, 0, 0]);

        // Wrap-around neighbour dominates.
        let f = synthetic_field([6, 8, 4], &[([0, 0, 0], 0.7), ([5, 7, 3], 0.9)]);
        assert_eq!(local_maxima(&f, 0.5).len(), 1);
        assert!(matches!(find_peaks(&f, 2, 0.5), Err(Error::TooFewPeaks { found: 1, wanted: 2 })));

        // A plateau yields one peak.
        let f = synthetic_field([6, 8, 4], &[([1, 1, 1], 0.9), ([1, 2, 1], 0.9)]);
        assert_eq!(local_maxima(&f, 0.5).len(), 1);
    }

    #[test]
    fn argmax_invariant_under_positive_scaling() {
        let d = small();
        let sub = make_subspaces(&d, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q = random_q(&mut rng, d.measurements());
        let q2: Vec<C64> = q.iter().map(|z| z * 3.7).collect();
        let sizes = coarse_sizes(&d, 4);
        let a = eval_dual_poly(&q, &sub, &d, Channel::Radar, sizes).unwrap();
        let b = eval_dual_poly(&q2, &sub, &d, Channel::Radar, sizes).unwrap();
        let ia: Vec<_> = local_maxima(&a, 0.0).iter().map(|p| p.index).collect();
        let ib: Vec<_> = local_maxima(&b, 0.0).iter().map(|p| p.index).collect();
        assert_eq!(ia, ib);
    }

    /// A dual vector whose radar polynomial peaks at `r`: `q_j ∝ w(r)_j·T row`.
    fn peaked(d: &Dims, sub: &Subspaces, r: &ParamTriple) -> Vec<C64> {
        let w = atom_vector(r, d);
        (0..d.measurements()).map(|j| w[j] * sub.t[(d.t_row(j), 0)]).collect()
    }

    #[test]
    fn refinement_climbs_and_fixes_maxima() {
        let d = small();
        let sub = make_subspaces(&d, 7);
        let truth = ParamTriple::new(0.31, 0.62, 0.18);
        let q = peaked(&d, &sub, &truth);
        let poly = DualPolynomial::new(&q, &sub, &d, Channel::Radar).unwrap();
        let field = poly.field(coarse_sizes(&d, 4), ParamTriple::new(0.0, 0.0, 0.0)).unwrap();
        let seed = local_maxima(&field, 0.0)[0];
        let refined = refine_peak(&poly, &seed.triple);
        assert!(poly.norm(&refined) >= seed.value);
        let again = refine_peak(&poly, &refined);
        assert!(again.distance(&refined) < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let s = random_triple(&mut rng);
            assert!(poly.norm(&refine_peak(&poly, &s)) >= poly.norm(&s) - 1e-15);
        }
    }

    #[test]
    fn ls_system_reproduces_measurements() {
        let d = Dims::with_samples(13, 13, 13, 2, 2, 2).unwrap();
        let mut cfg = SceneConfig::new(d, 11);
        cfg.separation = true;
        let scene = sample_scene(&cfg).unwrap();
        let sub = make_subspaces(&d, 11);
        let y = synthesize_measurements(&scene, &sub).unwrap();
        let w = build_ls_system(&scene.radar.triples, &scene.comms.triples, &sub, &d).unwrap();
        let mut z = Vec::new();
        for a in &scene.radar.amps {
            z.extend(scene.v.iter().map(|v| a.conj() * v));
        }
        for a in &scene.comms.amps {
            z.extend(scene.u.iter().map(|u| a.conj() * u));
        }
        let wz = w.mul_vec(&z);
        let err = norm2(&wz.iter().zip(&y.y).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err / norm2(&y.y) < 1e-9);
        let fit = solve_least_squares(&w, &y.y).unwrap();
        assert!(fit.condition_number < 1e6);
        assert!(fit.residual / norm2(&y.y) < 1e-9);
        let coef = recover_coefficients(&scene.radar.triples, &scene.comms.triples, &sub, &y).unwrap();
        let xr = CMatrix::outer_conj(&scene.v, &channel_vector(&scene.radar, &d));
        assert!(coef.xr_hat.sub(&xr).frobenius_norm() < 1e-6);
    }

    #[test]
    fn ls_trivial_case() {
        let d = Dims::with_samples(3, 2, 1, 1, 1, 0).unwrap();
        let sub = make_subspaces(&d, 1);
        let w = build_ls_system(&[ParamTriple::new(0.0, 0.0, 0.0)], &[], &sub, &d).unwrap();
        assert_eq!(w.cols(), 1);
        for j in 0..d.measurements() {
            assert_eq!(w[(j, 0)], sub.t[(d.t_row(j), 0)]);
        }
        let fit = solve_least_squares(&w, &vec![ZERO; d.measurements()]).unwrap();
        assert!(fit.z.iter().all(|z| *z == ZERO));
    }

    #[test]
    fn duplicate_atoms_are_rank_deficient() {
        let d = small();
        let sub = make_subspaces(&d, 1);
        let r = ParamTriple::new(0.2, 0.3, 0.4);
        let w = build_ls_system(&[r, r], &[], &sub, &d).unwrap();
        let y = vec![ZERO; d.measurements()];
        assert!(matches!(solve_least_squares(&w, &y), Err(Error::RankDeficientSystem { .. })));
    }

    #[test]
    fn assignment_is_optimal() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let p = min_cost_assignment(&cost);
        let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn metrics_of_ground_truth_and_permutations() {
        let d = small();
        let scene = sample_scene(&SceneConfig::new(d, 12)).unwrap();
        let sub = make_subspaces(&d, 12);
        let y = synthesize_measurements(&scene, &sub).unwrap();
        let coef = recover_coefficients(&scene.radar.triples, &scene.comms.triples, &sub, &y).unwrap();
        let result = RecoveryResult {
            radar_triples: scene.radar.triples.clone(),
            comms_triples: scene.comms.triples.clone(),
            radar_peak_values: vec![],
            comms_peak_values: vec![],
            z: coef.z,
            xr_hat: coef.xr_hat,
            xc_hat: coef.xc_hat,
            residual: coef.residual,
            relative_residual: 0.0,
            condition_number: coef.condition_number,
        };
        let m = error_metrics(&scene, &result).unwrap();
        assert!(m.radar_frobenius < 1e-10 && m.comms_frobenius < 1e-10);
        assert_eq!(m.radar_params.max_error, 0.0);
        let mut perm = result.clone();
        perm.radar_triples.reverse();
        let mp = error_metrics(&scene, &perm).unwrap();
        assert_eq!(mp.radar_params, m.radar_params);
        let mut short = result;
        short.radar_triples.pop();
        let ms = error_metrics(&scene, &short).unwrap();
        assert_eq!(ms.radar_params.unmatched, 1);
        assert_eq!(ms.radar_params.max_error, WORST_DISTANCE);
    }

    #[test]
    fn field_invariant_under_atom_relabeling() {
        let d = small();
        let mut scene = sample_scene(&SceneConfig::new(d, 13)).unwrap();
        let sub = make_subspaces(&d, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let q = random_q(&mut rng, d.measurements());
        let a = verify_certificate(&q, &scene, &sub, 4).unwrap();
        scene.radar = ChannelSpec::new(
            scene.radar.triples.iter().rev().copied().collect(),
            scene.radar.amps.iter().rev().copied().collect(),
        )
        .unwrap();
        let b = verify_certificate(&q, &scene, &sub, 4).unwrap();
        let mut on = b.radar.on_support.clone();
        on.reverse();
        for (x, y) in on.iter().zip(&a.radar.on_support) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!((a.radar.off_support_max - b.radar.off_support_max).abs() < 1e-10);
    }

    #[test]
    fn zero_dual_certificate_fails_cleanly() {
        let d = small();
        let scene = sample_scene(&SceneConfig::new(d, 14)).unwrap();
        let sub = make_subspaces(&d, 14);
        let rep = verify_certificate(&vec![ZERO; d.measurements()], &scene, &sub, 4).unwrap();
        assert_eq!(rep.on_support_deviation(), 1.0);
        assert_eq!(rep.off_support_max(), 0.0);
    }

    #[test]
    fn slices_match_field_entries() {
        let d = small();
        let sub = make_subspaces(&d, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let q = random_q(&mut rng, d.measurements());
        let poly = DualPolynomial::new(&q, &sub, &d, Channel::Radar).unwrap();
        let f = poly.field([6, 10, 4], ParamTriple::new(0.1, 0.2, 0.3)).unwrap();
        let mut buf = Vec::new();
        f.write_plane(&mut buf, [0, 0, 0], 0, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(rows.len(), 60);
        let last: f64 = rows[0].split(',').nth(3).unwrap().parse().unwrap();
        assert!((last - f.get([0, 0, 0])).abs() < 1e-11);
        assert_eq!(nearest_index(&f, &ParamTriple::new(0.1 + 0.3, 0.2 + 0.5, 0.3)), [3, 3, 0]);
    }
}
