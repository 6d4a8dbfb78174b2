//! Dual semidefinite program of the two-channel atomic norm problem.
//!
//! ```text
//! maximize   Re⟨q, y⟩
//! subject to [[Q,  C_r], [C_rᴴ, I_K ]] ⪰ 0,   C_r = B_r⋆(q)ᴴ
//!            [[Q', C_c], [C_cᴴ, I_PK]] ⪰ 0,   C_c = B_c⋆(q)ᴴ
//!            Σ_{grid(j) − grid(j') = d} Q[j, j'] = δ_d   for every offset d
//! ```
//!
//! with `Q' = Q` (shared) or an independent copy with its own trace rows
//! (split). Each LMI bounds `sup_r ‖B⋆(q)·w(r)‖ ≤ 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::Measurement;
use crate::linalg::{dot_conj, serde_complex, CMatrix, C64};
use crate::scene::{Dims, Subspaces};
use crate::solver::{Cone, CsrBuilder, HermitianPacking, RawSolution, SolverStatus, StandardForm};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramMode {
    /// One Gram matrix in both LMIs.
    #[default]
    Shared,
    /// Independent Gram matrices per LMI.
    Split,
}

impl GramMode {
    pub fn copies(self) -> usize {
        match self {
            GramMode::Shared => 1,
            GramMode::Split => 2,
        }
    }
}

impl std::str::FromStr for GramMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(GramMode::Shared),
            "split" => Ok(GramMode::Split),
            other => Err(Error::InvalidProblem(format!("unknown gram mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for GramMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GramMode::Shared => "shared",
            GramMode::Split => "split",
        })
    }
}

/// Offset between two grid points: pulse `n1`, delay `n2`, antenna `n3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ToeplitzIndex {
    pub n1: isize,
    pub n2: isize,
    pub n3: isize,
}

impl ToeplitzIndex {
    pub fn new(n1: isize, n2: isize, n3: isize) -> Self {
        Self { n1, n2, n3 }
    }

    pub fn zero() -> Self {
        Self::new(0, 0, 0)
    }

    /// Membership in the half space `{n1>0} ∪ {n1=0, n2>0} ∪ {n1=n2=0, n3≥0}`.
    pub fn is_canonical(&self) -> bool {
        self.n1 > 0 || (self.n1 == 0 && (self.n2 > 0 || (self.n2 == 0 && self.n3 >= 0)))
    }

    pub fn negate(&self) -> Self {
        Self::new(-self.n1, -self.n2, -self.n3)
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    pub fn in_box(&self, dims: &Dims) -> bool {
        let (p, m, a) = (dims.pulses() as isize, dims.samples() as isize, dims.antennas() as isize);
        self.n1.abs() < p && self.n2.abs() < m && self.n3.abs() < a
    }
}

/// Every canonical offset of the box `|n1| < P, |n2| < M, |n3| < N_r`.
pub fn toeplitz_constraint_set(dims: &Dims) -> Vec<ToeplitzIndex> {
    let (p, m, a) = (dims.pulses() as isize, dims.samples() as isize, dims.antennas() as isize);
    let mut out = Vec::with_capacity(toeplitz_count(dims));
    for n1 in 0..p {
        for n2 in -(m - 1)..m {
            for n3 in -(a - 1)..a {
                let idx = ToeplitzIndex::new(n1, n2, n3);
                if idx.is_canonical() {
                    out.push(idx);
                }
            }
        }
    }
    out
}

/// `((2P−1)(2M−1)(2N_r−1)+1)/2`.
pub fn toeplitz_count(dims: &Dims) -> usize {
    ((2 * dims.pulses() - 1) * (2 * dims.samples() - 1) * (2 * dims.antennas() - 1) + 1) / 2
}

/// `Σ_{(j,j') ∈ pairs} Q[j, j'] = rhs`, with `grid(j) − grid(j') = index`.
/// For canonical offsets `j ≥ j'` on every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub index: ToeplitzIndex,
    pub pairs: Vec<(usize, usize)>,
    pub rhs: f64,
}

pub fn trace_constraint_row(idx: ToeplitzIndex, dims: &Dims) -> TraceRow {
    let mut pairs = Vec::new();
    if idx.in_box(dims) {
        for jp in 0..dims.measurements() {
            let g = dims.grid(jp);
            let pulse = g.pulse as isize + idx.n1;
            let freq = g.freq + idx.n2;
            let ant = g.antenna as isize + idx.n3;
            let n = dims.half_band() as isize;
            if (0..dims.pulses() as isize).contains(&pulse)
                && (-n..=n).contains(&freq)
                && (0..dims.antennas() as isize).contains(&ant)
            {
                pairs.push((dims.flat(pulse as usize, freq, ant as usize), jp));
            }
        }
    }
    TraceRow { index: idx, pairs, rhs: if idx.is_zero() { 1.0 } else { 0.0 } }
}

/// Limits applied while assembling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpConfig {
    pub gram_mode: GramMode,
    /// Largest admissible complex LMI order (`J + P·K`).
    pub max_lmi_dim: usize,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self { gram_mode: GramMode::Shared, max_lmi_dim: 1024 }
    }
}

/// Offsets of each variable group in the packed vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpLayout {
    pub dims: Dims,
    pub gram_mode: GramMode,
    /// `(Re q_j, Im q_j)` at `q_offset + 2j`.
    pub q_offset: usize,
    /// One offset per Gram copy; copy 0 feeds the radar LMI, the last copy
    /// the comms LMI.
    pub gram_offsets: Vec<usize>,
    pub s1_offset: usize,
    pub s1_dim: usize,
    pub s2_offset: usize,
    pub s2_dim: usize,
    pub num_vars: usize,
}

impl SdpLayout {
    fn new(dims: Dims, mode: GramMode) -> Self {
        let j = dims.measurements();
        let q_offset = 0;
        let gram_offsets: Vec<usize> = (0..mode.copies()).map(|c| 2 * j + c * j * j).collect();
        let s1_offset = 2 * j + mode.copies() * j * j;
        let s1_dim = j + dims.subspace();
        let s2_offset = s1_offset + s1_dim * s1_dim;
        let s2_dim = j + dims.comms_len();
        Self {
            dims,
            gram_mode: mode,
            q_offset,
            gram_offsets,
            s1_offset,
            s1_dim,
            s2_offset,
            s2_dim,
            num_vars: s2_offset + s2_dim * s2_dim,
        }
    }

    pub fn radar_gram(&self) -> usize {
        self.gram_offsets[0]
    }

    pub fn comms_gram(&self) -> usize {
        *self.gram_offsets.last().unwrap()
    }

    pub fn free_len(&self) -> usize {
        self.s1_offset
    }

    pub fn cones(&self) -> Vec<Cone> {
        vec![
            Cone::Free { len: self.free_len() },
            Cone::HermitianPsd { dim: self.s1_dim },
            Cone::HermitianPsd { dim: self.s2_dim },
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdpStats {
    pub toeplitz_indices: usize,
    /// Toeplitz rows per Gram copy.
    pub toeplitz_rows: usize,
    pub corner_rows: usize,
    pub offdiag_rows: usize,
    pub total_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub form: StandardForm,
    pub layout: SdpLayout,
    pub stats: SdpStats,
    #[serde(with = "serde_complex::vec")]
    pub y: Vec<C64>,
}

fn conj_t_row(subspaces: &Subspaces, dims: &Dims, j: usize) -> Vec<C64> {
    subspaces.t.row(dims.t_row(j)).to_vec()
}

/// Column block of `C_c` row `j`: `(first column, D row restricted to it)`.
fn d_row(subspaces: &Subspaces, dims: &Dims, j: usize) -> (usize, Vec<C64>) {
    let (p, d) = subspaces.d_block_row(dims.d_row(j));
    (p * dims.subspace(), d.to_vec())
}

pub fn build_dual_sdp(y: &Measurement, subspaces: &Subspaces, cfg: &SdpConfig) -> Result<ConicProblem> {
    let dims = y.dims;
    subspaces.check_dims(&dims)?;
    let j_len = dims.measurements();
    let lmi = j_len + dims.comms_len();
    if lmi > cfg.max_lmi_dim {
        return Err(Error::TooLarge { size: lmi, cap: cfg.max_lmi_dim });
    }
    let layout = SdpLayout::new(dims, cfg.gram_mode);
    let mut a = CsrBuilder::new(layout.num_vars);
    let mut b = Vec::new();
    let mut stats = SdpStats::default();
    let pj = HermitianPacking::new(j_len);

    // (S offset, S dim, Gram offset, number of right columns, C row provider)
    let rows_r: Vec<(usize, Vec<C64>)> = (0..j_len).map(|j| (0, conj_t_row(subspaces, &dims, j))).collect();
    let rows_c: Vec<(usize, Vec<C64>)> = (0..j_len).map(|j| d_row(subspaces, &dims, j)).collect();
    let lmis = [
        (layout.s1_offset, layout.s1_dim, layout.radar_gram(), dims.subspace(), &rows_r),
        (layout.s2_offset, layout.s2_dim, layout.comms_gram(), dims.comms_len(), &rows_c),
    ];
    for (s_off, s_dim, g_off, right, crow) in lmis {
        let ps = HermitianPacking::new(s_dim);
        // Top-left block equals the Gram matrix.
        for i in 0..j_len {
            a.push_row([(s_off + ps.diag(i), 1.0), (g_off + pj.diag(i), -1.0)])?;
            b.push(0.0);
            for k in i + 1..j_len {
                let (sr, si) = ps.off(i, k);
                let (gr, gi) = pj.off(i, k);
                a.push_row([(s_off + sr, 1.0), (g_off + gr, -1.0)])?;
                a.push_row([(s_off + si, 1.0), (g_off + gi, -1.0)])?;
                b.extend([0.0, 0.0]);
            }
        }
        // Bottom-right block is the identity.
        for i in 0..right {
            a.push_row([(s_off + ps.diag(j_len + i), 1.0)])?;
            b.push(1.0);
            for k in i + 1..right {
                let (sr, si) = ps.off(j_len + i, j_len + k);
                a.push_row([(s_off + sr, 1.0)])?;
                a.push_row([(s_off + si, 1.0)])?;
                b.extend([0.0, 0.0]);
            }
        }
        stats.corner_rows += j_len * j_len + right * right;
        // Off-diagonal block: S[j, J+k] = conj(q_j)·row_j[k].
        for (j, (first, row)) in crow.iter().enumerate() {
            let (qr, qi) = (layout.q_offset + 2 * j, layout.q_offset + 2 * j + 1);
            for k in 0..right {
                let (sr, si) = ps.off(j, j_len + k);
                let t = if (*first..*first + row.len()).contains(&k) { row[k - first] } else { C64::new(0.0, 0.0) };
                // Re: qr·tr + qi·ti; Im: qr·ti − qi·tr.
                a.push_row([(s_off + sr, 1.0), (qr, -SQRT2 * t.re), (qi, -SQRT2 * t.im)])?;
                a.push_row([(s_off + si, 1.0), (qr, -SQRT2 * t.im), (qi, SQRT2 * t.re)])?;
                b.extend([0.0, 0.0]);
            }
        }
        stats.offdiag_rows += 2 * j_len * right;
    }

    let indices = toeplitz_constraint_set(&dims);
    stats.toeplitz_indices = indices.len();
    let trace_rows: Vec<TraceRow> = indices.iter().map(|&i| trace_constraint_row(i, &dims)).collect();
    for &g_off in &layout.gram_offsets {
        for row in &trace_rows {
            if row.index.is_zero() {
                a.push_row(row.pairs.iter().map(|&(j, _)| (g_off + pj.diag(j), 1.0)))?;
                b.push(row.rhs);
            } else {
                // Q[j, j'] = conj(Q[j', j]) and the packed (j', j) entry is
                // √2·Q[j', j].
                let re = row.pairs.iter().map(|&(j, jp)| (g_off + pj.off(jp, j).0, 1.0 / SQRT2));
                a.push_row(re)?;
                let im = row.pairs.iter().map(|&(j, jp)| (g_off + pj.off(jp, j).1, -1.0 / SQRT2));
                a.push_row(im)?;
                b.extend([row.rhs, 0.0]);
            }
        }
    }
    stats.toeplitz_rows = 2 * indices.len() - 1;
    stats.total_rows = b.len();

    let mut c = vec![0.0; layout.num_vars];
    for (j, yj) in y.y.iter().enumerate() {
        c[layout.q_offset + 2 * j] = -yj.re;
        c[layout.q_offset + 2 * j + 1] = -yj.im;
    }
    let form = StandardForm::new(c, a.finish(), b, layout.cones())?;
    Ok(ConicProblem { form, layout, stats, y: y.y.clone() })
}

impl ConicProblem {
    pub fn dims(&self) -> &Dims {
        &self.layout.dims
    }

    /// Self-describing standard form for external solvers.
    pub fn to_standard_json(&self) -> serde_json::Value {
        let f = &self.form;
        let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        for (r, c, v) in f.a.triplets() {
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        let mut offset = 0;
        let cones: Vec<serde_json::Value> = f
            .cones
            .iter()
            .map(|k| {
                let v = match *k {
                    Cone::Free { len } => serde_json::json!({"type": "free", "offset": offset, "len": len}),
                    Cone::HermitianPsd { dim } => serde_json::json!({
                        "type": "hermitian_psd",
                        "offset": offset,
                        "dim": dim,
                        "len": dim * dim,
                        "embedded_size": 2 * dim,
                        "packing": "upper triangle row-major; diagonal real; off-diagonal (sqrt2*re, sqrt2*im)",
                    }),
                };
                offset += k.len();
                v
            })
            .collect();
        serde_json::json!({
            "format": "standard-form/v1",
            "sense": "minimize c'x s.t. Ax = b, x in K",
            "num_vars": f.num_vars(),
            "num_rows": f.num_rows(),
            "c": f.c,
            "A": {"rows": rows, "cols": cols, "vals": vals},
            "b": f.b,
            "cones": cones,
            "layout": self.layout,
            "stats": self.stats,
        })
    }

    /// Packs a dual vector and Gram matrices (one per copy) into a point
    /// that satisfies every equality row when the Gram copies satisfy the
    /// trace rows.
    pub fn pack_point(&self, q: &[C64], grams: &[CMatrix], subspaces: &Subspaces) -> Result<Vec<f64>> {
        let l = &self.layout;
        let dims = l.dims;
        let j_len = dims.measurements();
        if q.len() != j_len || grams.len() != l.gram_offsets.len() {
            return Err(Error::Packing(format!(
                "expected q of length {j_len} and {} Gram matrices",
                l.gram_offsets.len()
            )));
        }
        if grams.iter().any(|g| g.rows() != j_len || g.cols() != j_len) {
            return Err(Error::Packing("Gram matrix has the wrong order".into()));
        }
        let mut x = vec![0.0; l.num_vars];
        for (j, z) in q.iter().enumerate() {
            x[l.q_offset + 2 * j] = z.re;
            x[l.q_offset + 2 * j + 1] = z.im;
        }
        let pj = HermitianPacking::new(j_len);
        for (g, &off) in grams.iter().zip(&l.gram_offsets) {
            pj.pack_into(g, &mut x[off..off + j_len * j_len]);
        }
        let radar = crate::lifting::adjoint_radar(q, subspaces, &dims)?;
        let comms = crate::lifting::adjoint_comms(q, subspaces, &dims)?;
        let blocks = [(l.s1_offset, l.s1_dim, &grams[0], radar), (l.s2_offset, l.s2_dim, grams.last().unwrap(), comms)];
        for (off, dim, g, adj) in blocks {
            let right = dim - j_len;
            let s = CMatrix::from_fn(dim, dim, |r, c| match (r < j_len, c < j_len) {
                (true, true) => g[(r, c)],
                (true, false) => adj[(c - j_len, r)].conj(),
                (false, true) => adj[(r - j_len, c)],
                (false, false) => {
                    if r == c {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }
            });
            debug_assert_eq!(right, adj.rows());
            HermitianPacking::new(dim).pack_into(&s, &mut x[off..off + dim * dim]);
        }
        Ok(x)
    }

    /// `Re⟨q, y⟩` of a packed point.
    pub fn dual_objective(&self, x: &[f64]) -> f64 {
        -self.form.objective(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    #[serde(with = "serde_complex::vec")]
    pub q: Vec<C64>,
    /// Radar-LMI Gram matrix.
    pub gram: CMatrix,
    /// Comms-LMI Gram matrix in split mode.
    pub gram_comms: Option<CMatrix>,
    pub gram_mode: GramMode,
    pub status: SolverStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// `Re⟨q, y⟩`.
    pub objective: f64,
}

pub fn extract_dual_solution(raw: &RawSolution, problem: &ConicProblem) -> Result<DualSolution> {
    let l = &problem.layout;
    if raw.x.len() != l.num_vars {
        return Err(Error::Packing(format!("solution has {} entries, layout {}", raw.x.len(), l.num_vars)));
    }
    let j_len = l.dims.measurements();
    let q: Vec<C64> = (0..j_len).map(|j| C64::new(raw.x[l.q_offset + 2 * j], raw.x[l.q_offset + 2 * j + 1])).collect();
    let pj = HermitianPacking::new(j_len);
    let unpack = |off: usize| pj.unpack(&raw.x[off..off + j_len * j_len]).hermitian_part();
    let gram = unpack(l.radar_gram());
    let gram_comms = (l.gram_mode == GramMode::Split).then(|| unpack(l.comms_gram()));
    let objective = dot_conj(&q, &problem.y).re;
    Ok(DualSolution {
        q,
        gram,
        gram_comms,
        gram_mode: l.gram_mode,
        status: raw.status,
        iterations: raw.iterations,
        primal_residual: raw.residuals.primal,
        dual_residual: raw.residuals.dual,
        gap: raw.residuals.gap,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::synthesize_measurements;
    use crate::linalg::ZERO;
    use crate::scene::{make_subspaces, sample_scene, SceneConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims(m: usize, p: usize, nr: usize, k: usize) -> Dims {
        Dims::with_samples(m, p, nr, k, 1, 1).unwrap()
    }

    fn problem(d: Dims, mode: GramMode, seed: u64) -> (ConicProblem, Subspaces) {
        let scene = sample_scene(&SceneConfig::new(d, seed)).unwrap();
        let sub = make_subspaces(&d, seed);
        let y = synthesize_measurements(&scene, &sub).unwrap();
        let cfg = SdpConfig { gram_mode: mode, ..Default::default() };
        (build_dual_sdp(&y, &sub, &cfg).unwrap(), sub)
    }

    #[test]
    fn toeplitz_set_examples() {
        assert_eq!(toeplitz_constraint_set(&dims(1, 1, 1, 1)), vec![ToeplitzIndex::zero()]);
        let d = dims(3, 2, 1, 1);
        let set = toeplitz_constraint_set(&d);
        assert_eq!(set.len(), 8);
        assert_eq!(set.len(), toeplitz_count(&d));
        assert!(set.iter().all(ToeplitzIndex::is_canonical));
        assert_eq!(toeplitz_count(&dims(3, 2, 2, 2)), 23);
        for d in [dims(5, 3, 2, 1), dims(9, 9, 3, 3), dims(3, 1, 4, 1)] {
            let set = toeplitz_constraint_set(&d);
            assert_eq!(set.len(), toeplitz_count(&d));
            let all: std::collections::HashSet<_> = set.iter().copied().collect();
            assert!(set.iter().filter(|i| !i.is_zero()).all(|i| !all.contains(&i.negate())));
            assert!(all.contains(&ToeplitzIndex::zero()));
        }
    }

    #[test]
    fn zero_row_is_trace() {
        let d = dims(5, 2, 2, 1);
        let row = trace_constraint_row(ToeplitzIndex::zero(), &d);
        assert_eq!(row.rhs, 1.0);
        assert_eq!(row.pairs, (0..d.measurements()).map(|j| (j, j)).collect::<Vec<_>>());
        let outside = trace_constraint_row(ToeplitzIndex::new(2, 0, 0), &d);
        assert!(outside.pairs.is_empty());
    }

    #[test]
    fn trace_rows_match_pair_scan() {
        let d = dims(5, 3, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set = toeplitz_constraint_set(&d);
        for _ in 0..20 {
            let idx = set[rng.random_range(0..set.len())];
            let mut want = Vec::new();
            for j in 0..d.measurements() {
                for jp in 0..d.measurements() {
                    let (a, b) = (d.grid(j), d.grid(jp));
                    let diff = ToeplitzIndex::new(
                        a.pulse as isize - b.pulse as isize,
                        a.freq - b.freq,
                        a.antenna as isize - b.antenna as isize,
                    );
                    if diff == idx {
                        want.push((j, jp));
                    }
                }
            }
            let mut got = trace_constraint_row(idx, &d).pairs;
            got.sort();
            want.sort();
            assert_eq!(got, want);
            assert!(got.iter().all(|&(j, jp)| j >= jp));
        }
        // Every unordered pair appears in exactly one row.
        let n: usize = set.iter().map(|&i| trace_constraint_row(i, &d).pairs.len()).sum();
        let jn = d.measurements();
        assert_eq!(n, jn * (jn + 1) / 2);
    }

    #[test]
    fn row_counts() {
        let d = Dims::with_samples(3, 2, 2, 2, 1, 1).unwrap();
        let (shared, _) = problem(d, GramMode::Shared, 1);
        let (split, _) = problem(d, GramMode::Split, 1);
        assert_eq!(shared.stats.toeplitz_indices, 23);
        assert_eq!(shared.stats.toeplitz_rows, 45);
        let j = 12;
        let (k, pk) = (2, 4);
        assert_eq!(shared.stats.corner_rows, 2 * j * j + k * k + pk * pk);
        assert_eq!(shared.stats.offdiag_rows, 2 * j * (k + pk));
        assert_eq!(shared.stats.total_rows, shared.stats.corner_rows + shared.stats.offdiag_rows + 45);
        assert_eq!(split.stats.total_rows, shared.stats.total_rows + 45);
        assert_eq!(split.form.num_vars() - shared.form.num_vars(), j * j);
        assert_eq!(split.layout.gram_offsets.len(), 2);
        assert_eq!(shared.form.cones[1], Cone::HermitianPsd { dim: j + k });
        assert_eq!(shared.form.cones[1].embedded_size(), Some(2 * (j + k)));
        assert_eq!(shared.form.cones[2].embedded_size(), Some(2 * (j + pk)));
    }

    #[test]
    fn size_guard() {
        let d = dims(9, 9, 3, 3);
        let sub = make_subspaces(&d, 0);
        let y = Measurement::new(d, vec![ZERO; d.measurements()]).unwrap();
        let cfg = SdpConfig { max_lmi_dim: 100, ..Default::default() };
        assert!(matches!(build_dual_sdp(&y, &sub, &cfg), Err(Error::TooLarge { size: 270, cap: 100 })));
    }

    #[test]
    fn feasible_point_satisfies_everything() {
        for mode in [GramMode::Shared, GramMode::Split] {
            let (p, sub) = problem(dims(3, 2, 2, 2), mode, 3);
            let jn = p.dims().measurements();
            let gram = CMatrix::identity(jn).scale(C64::new(1.0 / jn as f64, 0.0));
            let grams = vec![gram; mode.copies()];
            let x = p.pack_point(&vec![ZERO; jn], &grams, &sub).unwrap();
            let r: Vec<f64> = p.form.a.mul(&x).iter().zip(&p.form.b).map(|(a, b)| a - b).collect();
            assert!(r.iter().all(|v| v.abs() < 1e-12));
            for (k, range) in p.form.cones.iter().zip(p.form.cone_ranges()) {
                if let Some(ev) = k.min_eigenvalue(&x[range]).unwrap() {
                    assert!(ev >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn pinning_rows_encode_the_adjoint() {
        // Random q with a Gram that satisfies the trace rows: only the
        // corner and off-diagonal rows are exercised by q ≠ 0.
        let (p, sub) = problem(dims(3, 2, 2, 2), GramMode::Split, 4);
        let jn = p.dims().measurements();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q: Vec<C64> = (0..jn).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let gram = CMatrix::identity(jn).scale(C64::new(1.0 / jn as f64, 0.0));
        let x = p.pack_point(&q, &[gram.clone(), gram], &sub).unwrap();
        let r: Vec<f64> = p.form.a.mul(&x).iter().zip(&p.form.b).map(|(a, b)| a - b).collect();
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        // Objective is Re⟨q, y⟩.
        let want: f64 = q.iter().zip(&p.y).map(|(a, b)| (a.conj() * b).re).sum();
        assert!((p.dual_objective(&x) - want).abs() < 1e-12);
    }

    #[test]
    fn extract_roundtrip() {
        let (p, sub) = problem(dims(3, 2, 1, 1), GramMode::Split, 6);
        let jn = p.dims().measurements();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let q: Vec<C64> = (0..jn).map(|_| C64::new(rng.random(), rng.random())).collect();
        let g1 = CMatrix::from_fn(jn, jn, |_, _| C64::new(rng.random(), rng.random())).hermitian_part();
        let g2 = CMatrix::from_fn(jn, jn, |_, _| C64::new(rng.random(), rng.random())).hermitian_part();
        let x = p.pack_point(&q, &[g1.clone(), g2.clone()], &sub).unwrap();
        let raw = RawSolution {
            s: vec![0.0; x.len()],
            nu: vec![0.0; p.form.num_rows()],
            x,
            status: SolverStatus::Optimal,
            iterations: 1,
            residuals: Default::default(),
            wall_time: 0.0,
            history: vec![],
        };
        let sol = extract_dual_solution(&raw, &p).unwrap();
        assert_eq!(sol.q, q);
        assert!(sol.gram.sub(&g1).frobenius_norm() < 1e-14);
        assert!(sol.gram_comms.as_ref().unwrap().sub(&g2).frobenius_norm() < 1e-14);
        assert!(sol.gram.hermitian_defect() < 1e-12);
        let want: f64 = q.iter().zip(&p.y).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
        assert!((sol.objective - want).abs() < 1e-9);
        let bad = RawSolution { x: vec![0.0; 3], ..raw };
        assert!(matches!(extract_dual_solution(&bad, &p), Err(Error::Packing(_))));
    }

    #[test]
    fn json_export_is_consistent() {
        let (p, _) = problem(dims(3, 1, 1, 1), GramMode::Shared, 2);
        let v = p.to_standard_json();
        assert_eq!(v["num_vars"], p.form.num_vars());
        assert_eq!(v["A"]["vals"].as_array().unwrap().len(), p.form.a.nnz());
        assert_eq!(v["cones"][1]["embedded_size"], 2 * p.layout.s1_dim);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn halfspace_has_no_antipodes(p in 1usize..4, m in 0usize..3, nr in 1usize..4) {
            let d = Dims::new(m, p, nr, 1, 1, 0).unwrap();
            let set = toeplitz_constraint_set(&d);
            prop_assert_eq!(set.len(), toeplitz_count(&d));
            let all: std::collections::HashSet<_> = set.iter().copied().collect();
            for i in &set {
                prop_assert!(i.is_zero() || !all.contains(&i.negate()));
                prop_assert!(all.contains(i) && (i.is_canonical() || all.contains(&i.negate())));
            }
        }
    }
}
