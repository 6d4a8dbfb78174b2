//! First-order conic solver for
//!
//! ```text
//! minimize cᵀx  subject to  A x = b,  x ∈ K = K_1 × … × K_p
//! ```
//!
//! where each `K_i` is a free block or a packed Hermitian PSD cone. The
//! method is ADMM on the split `x ∈ {Ax = b}`, `z ∈ K`, `x = z`, with
//! over-relaxation, diagonal equilibration and residual-balanced penalty
//! updates. The affine projection reuses one sparse Cholesky factor.

pub mod affine;
pub mod cone;
pub mod sparse;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use affine::AffineProjector;
pub use cone::{hermitian_embed, project_psd_block, Cone, HermitianPacking};
pub use sparse::{CsrBuilder, CsrMatrix};

/// Problem data in standard form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardForm {
    pub c: Vec<f64>,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl StandardForm {
    pub fn new(c: Vec<f64>, a: CsrMatrix, b: Vec<f64>, cones: Vec<Cone>) -> Result<Self> {
        let f = Self { c, a, b, cones };
        f.validate()?;
        Ok(f)
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n: usize = self.cones.iter().map(Cone::len).sum();
        if n != self.c.len() || self.a.ncols() != n {
            return Err(Error::InvalidProblem(format!(
                "cones cover {n} variables, c has {}, A has {} columns",
                self.c.len(),
                self.a.ncols()
            )));
        }
        if self.a.nrows() != self.b.len() {
            return Err(Error::InvalidProblem(format!("A has {} rows, b has {}", self.a.nrows(), self.b.len())));
        }
        if self.c.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite problem data".into()));
        }
        Ok(())
    }

    /// Variable ranges of each cone block.
    pub fn cone_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut off = 0;
        self.cones
            .iter()
            .map(|k| {
                let r = off..off + k.len();
                off = r.end;
                r
            })
            .collect()
    }

    pub fn project_cone(&self, x: &mut [f64]) -> Result<()> {
        for (k, r) in self.cones.iter().zip(self.cone_ranges()) {
            k.project(&mut x[r])?;
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iters: usize,
    /// Over-relaxation factor in `(0, 2)`.
    pub alpha: f64,
    pub scaling: bool,
    pub check_interval: usize,
    /// Initial penalty.
    pub rho: f64,
    pub adaptive_rho: bool,
    /// Wall-clock budget in seconds; `None` for no limit.
    pub time_limit: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            max_iters: 200_000,
            alpha: 1.6,
            scaling: true,
            check_interval: 50,
            rho: 1.0,
            adaptive_rho: true,
            time_limit: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProblem(format!("solver options: {m}")));
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iters == 0 || self.check_interval == 0 {
            return bad("max_iters and check_interval must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad("over-relaxation must lie in (0, 2)");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    MaxIters,
    TimeLimit,
    /// Iterates became non-finite or blew up; typically an infeasible or
    /// unbounded problem.
    Diverged,
}

/// Absolute and relative residuals, all in `∞`-norm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖A x − b‖`
    pub primal: f64,
    /// `‖c − s − Aᵀν‖`
    pub dual: f64,
    /// `|cᵀx − bᵀν|`
    pub gap: f64,
    pub primal_rel: f64,
    pub dual_rel: f64,
    pub gap_rel: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl Residuals {
    pub fn max_abs(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }

    pub fn max_rel(&self) -> f64 {
        self.primal_rel.max(self.dual_rel).max(self.gap_rel)
    }

    fn converged(&self, opts: &SolverOptions) -> bool {
        // rel = abs / scale, so abs ≤ eps_abs + eps_rel·scale ⇔ the test below.
        let ok = |abs: f64, rel: f64| {
            let scale = if rel > 0.0 { abs / rel } else { 0.0 };
            abs <= opts.eps_abs + opts.eps_rel * scale
        };
        ok(self.primal, self.primal_rel) && ok(self.dual, self.dual_rel) && ok(self.gap, self.gap_rel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub iter: usize,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSolution {
    /// Primal point, always inside the cone.
    pub x: Vec<f64>,
    /// Cone multiplier, always inside the dual cone.
    pub s: Vec<f64>,
    /// Equality multipliers.
    pub nu: Vec<f64>,
    pub status: SolverStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    pub wall_time: f64,
    pub history: Vec<CheckRecord>,
}

impl RawSolution {
    /// JSON summary; packed vectors only when asked.
    pub fn to_json(&self, include_vectors: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "status": self.status,
            "iterations": self.iterations,
            "residuals": self.residuals,
            "wall_time": self.wall_time,
        });
        if include_vectors {
            v["x"] = serde_json::json!(self.x);
            v["s"] = serde_json::json!(self.s);
            v["nu"] = serde_json::json!(self.nu);
        }
        v
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Residuals of a primal-dual triple `(x, ν, s)` against the unscaled data.
pub fn residuals(form: &StandardForm, x: &[f64], nu: &[f64], s: &[f64]) -> Residuals {
    let ax = form.a.mul(x);
    let atnu = form.a.mul_t(nu);
    let rp: Vec<f64> = ax.iter().zip(&form.b).map(|(a, b)| a - b).collect();
    let rd: Vec<f64> = (0..form.num_vars()).map(|i| form.c[i] - s[i] - atnu[i]).collect();
    let pobj = dot(&form.c, x);
    let dobj = dot(&form.b, nu);
    let primal = inf_norm(&rp);
    let dual = inf_norm(&rd);
    let gap = (pobj - dobj).abs();
    let p_scale = inf_norm(&ax).max(inf_norm(&form.b));
    let d_scale = inf_norm(&form.c).max(inf_norm(&atnu)).max(inf_norm(s));
    let g_scale = pobj.abs().max(dobj.abs());
    let rel = |a: f64, s: f64| if s > 0.0 { a / s } else { a };
    Residuals {
        primal,
        dual,
        gap,
        primal_rel: rel(primal, p_scale),
        dual_rel: rel(dual, d_scale),
        gap_rel: rel(gap, g_scale),
        primal_objective: pobj,
        dual_objective: dobj,
    }
}

/// Diagonal equilibration `Â = D A E`, `ĉ = σ E c`, `b̂ = D b`. `E` is
/// constant on every PSD block so that `E⁻¹K = K`.
#[derive(Debug, Clone)]
struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
    sigma: f64,
}

impl Scaling {
    fn identity(m: usize, n: usize) -> Self {
        Self { d: vec![1.0; m], e: vec![1.0; n], sigma: 1.0 }
    }

    fn ruiz(form: &StandardForm, passes: usize) -> Self {
        let (m, n) = (form.num_rows(), form.num_vars());
        let mut s = Self::identity(m, n);
        let ranges = form.cone_ranges();
        let mut a = form.a.clone();
        for _ in 0..passes {
            // Rows: ∞-norm.
            let mut dr = vec![1.0; m];
            for (i, d) in dr.iter_mut().enumerate() {
                let r = inf_norm(a.row(i).1);
                if r > 0.0 {
                    *d = 1.0 / r.sqrt();
                }
            }
            let ones = vec![1.0; n];
            a.scale(&dr, &ones);
            // Columns: ∞-norm, pooled over each PSD block.
            let mut colmax = vec![0.0f64; n];
            for (_, c, v) in a.triplets() {
                colmax[c] = colmax[c].max(v.abs());
            }
            let mut er = vec![1.0; n];
            for (k, r) in form.cones.iter().zip(&ranges) {
                match k {
                    Cone::Free { .. } => {
                        for i in r.clone() {
                            if colmax[i] > 0.0 {
                                er[i] = 1.0 / colmax[i].sqrt();
                            }
                        }
                    }
                    Cone::HermitianPsd { .. } => {
                        let mx = colmax[r.clone()].iter().fold(0.0f64, |m, v| m.max(*v));
                        if mx > 0.0 {
                            er[r.clone()].fill(1.0 / mx.sqrt());
                        }
                    }
                }
            }
            let onesm = vec![1.0; m];
            a.scale(&onesm, &er);
            for (d, f) in s.d.iter_mut().zip(&dr) {
                *d *= f;
            }
            for (e, f) in s.e.iter_mut().zip(&er) {
                *e *= f;
            }
        }
        let ec: Vec<f64> = form.c.iter().zip(&s.e).map(|(c, e)| c * e).collect();
        let cn = inf_norm(&ec);
        s.sigma = if cn > 0.0 { 1.0 / cn } else { 1.0 };
        s
    }

    fn apply(&self, form: &StandardForm) -> StandardForm {
        let mut a = form.a.clone();
        a.scale(&self.d, &self.e);
        StandardForm {
            c: form.c.iter().zip(&self.e).map(|(c, e)| self.sigma * c * e).collect(),
            a,
            b: form.b.iter().zip(&self.d).map(|(b, d)| b * d).collect(),
            cones: form.cones.clone(),
        }
    }
}

/// Prepared solver: scaling and factorization are done once and reused
/// across solves of problems sharing `A` and the cones.
pub struct Workspace {
    form: StandardForm,
    scaled: StandardForm,
    scaling: Scaling,
    proj: AffineProjector,
}

impl std::fmt::Debug for Workspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workspace").field("rows", &self.form.num_rows()).field("vars", &self.form.num_vars()).finish()
    }
}

const RUIZ_PASSES: usize = 10;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_ADAPT_EVERY: usize = 200;

impl Workspace {
    pub fn new(form: &StandardForm, scaling: bool) -> Result<Self> {
        form.validate()?;
        let sc = if scaling {
            Scaling::ruiz(form, RUIZ_PASSES)
        } else {
            Scaling::identity(form.num_rows(), form.num_vars())
        };
        let scaled = sc.apply(form);
        let proj = AffineProjector::new(&scaled.a)?;
        Ok(Self { form: form.clone(), scaled, scaling: sc, proj })
    }

    pub fn form(&self) -> &StandardForm {
        &self.form
    }

    fn unscale(&self, z: &[f64], lam: &[f64], rho: f64, nu_hat: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let sc = &self.scaling;
        let x = z.iter().zip(&sc.e).map(|(z, e)| z * e).collect();
        let s = lam.iter().zip(&sc.e).map(|(l, e)| -rho * l / (e * sc.sigma)).collect();
        let nu = nu_hat.iter().zip(&sc.d).map(|(n, d)| n * d / sc.sigma).collect();
        (x, s, nu)
    }

    /// Least-squares equality multipliers for a scaled cone multiplier:
    /// `ν̂ = (ÂÂᵀ)⁻¹ Â (ĉ − ŝ)`.
    fn dual_multipliers(&self, s_hat: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self.scaled.c.iter().zip(s_hat).map(|(c, s)| c - s).collect();
        let mut nu = self.scaled.a.mul(&r);
        self.proj.solve_in_place(&mut nu);
        nu
    }

    pub fn solve(&self, opts: &SolverOptions, warm: Option<(&[f64], &[f64])>) -> Result<RawSolution> {
        opts.validate()?;
        let start = Instant::now();
        let sf = &self.scaled;
        let (m, n) = (sf.num_rows(), sf.num_vars());
        let sc = &self.scaling;
        let mut rho = opts.rho;
        let mut z = vec![0.0; n];
        let mut lam = vec![0.0; n];
        if let Some((x0, s0)) = warm {
            if x0.len() != n || s0.len() != n {
                return Err(Error::Shape(format!("warm start needs {n} entries")));
            }
            for i in 0..n {
                z[i] = x0[i] / sc.e[i];
                lam[i] = -sc.sigma * sc.e[i] * s0[i] / rho;
            }
            sf.project_cone(&mut z)?;
        }
        let mut xt = vec![0.0; n];
        let mut xh = vec![0.0; n];
        let mut z_prev = vec![0.0; n];
        let (mut wm, mut wn) = (vec![0.0; m], vec![0.0; n]);
        let mut history = Vec::new();
        let mut status = SolverStatus::MaxIters;
        let mut iterations = opts.max_iters;
        let mut last = Residuals::default();
        for it in 0..opts.max_iters {
            for i in 0..n {
                xt[i] = z[i] - lam[i] - sf.c[i] / rho;
            }
            self.proj.project(&sf.a, &sf.b, &mut xt, &mut wm, &mut wn);
            z_prev.copy_from_slice(&z);
            for i in 0..n {
                xh[i] = opts.alpha * xt[i] + (1.0 - opts.alpha) * z[i];
                z[i] = xh[i] + lam[i];
            }
            sf.project_cone(&mut z)?;
            for i in 0..n {
                lam[i] += xh[i] - z[i];
            }

            let last_iter = it + 1 == opts.max_iters;
            if it % opts.check_interval != 0 && !last_iter {
                continue;
            }
            if z.iter().chain(&lam).any(|v| !v.is_finite()) {
                status = SolverStatus::Diverged;
                iterations = it + 1;
                break;
            }
            let s_hat: Vec<f64> = lam.iter().map(|l| -rho * l).collect();
            let nu_hat = self.dual_multipliers(&s_hat);
            let (x, s, nu) = self.unscale(&z, &lam, rho, &nu_hat);
            last = residuals(&self.form, &x, &nu, &s);
            history.push(CheckRecord { iter: it, primal: last.primal, dual: last.dual, gap: last.gap, rho });
            log::debug!(
                "iter {it}: primal {:.2e} dual {:.2e} gap {:.2e} obj {:.8} rho {rho:.3e}",
                last.primal,
                last.dual,
                last.gap,
                last.primal_objective
            );
            if last.converged(opts) {
                status = SolverStatus::Optimal;
                iterations = it + 1;
                break;
            }
            if let Some(limit) = opts.time_limit {
                if start.elapsed().as_secs_f64() > limit {
                    status = SolverStatus::TimeLimit;
                    iterations = it + 1;
                    break;
                }
            }
            if opts.adaptive_rho && it > 0 && it % RHO_ADAPT_EVERY == 0 {
                let pr = l2(&xt.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>()) / l2(&z).max(1e-12);
                let dr = rho * l2(&z.iter().zip(&z_prev).map(|(a, b)| a - b).collect::<Vec<_>>())
                    / (rho * l2(&lam)).max(1e-12);
                let ratio = (pr / dr.max(1e-16)).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
                    for l in lam.iter_mut() {
                        *l *= rho / new_rho;
                    }
                    rho = new_rho;
                }
            }
        }
        let s_hat: Vec<f64> = lam.iter().map(|l| -rho * l).collect();
        let nu_hat = self.dual_multipliers(&s_hat);
        let (x, s, nu) = self.unscale(&z, &lam, rho, &nu_hat);
        if status != SolverStatus::Diverged {
            last = residuals(&self.form, &x, &nu, &s);
        }
        Ok(RawSolution {
            x,
            s,
            nu,
            status,
            iterations,
            residuals: last,
            wall_time: start.elapsed().as_secs_f64(),
            history,
        })
    }
}

/// One-shot solve.
pub fn solve(form: &StandardForm, opts: &SolverOptions) -> Result<RawSolution> {
    Workspace::new(form, opts.scaling)?.solve(opts, None)
}

pub fn solve_warm(form: &StandardForm, opts: &SolverOptions, x0: &[f64], s0: &[f64]) -> Result<RawSolution> {
    Workspace::new(form, opts.scaling)?.solve(opts, Some((x0, s0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// maximize x  s.t. [[1, x], [x, 1]] ⪰ 0.
    pub(crate) fn toy() -> StandardForm {
        let sq = std::f64::consts::SQRT_2;
        // x, then the packed 2×2 block (S00, √2·Re S01, √2·Im S01, S11).
        let a =
            CsrMatrix::from_triplets(4, 5, &[(0, 1, 1.0), (1, 4, 1.0), (2, 2, 1.0), (2, 0, -sq), (3, 3, 1.0)]).unwrap();
        StandardForm::new(
            vec![-1.0, 0.0, 0.0, 0.0, 0.0],
            a,
            vec![1.0, 1.0, 0.0, 0.0],
            vec![Cone::Free { len: 1 }, Cone::HermitianPsd { dim: 2 }],
        )
        .unwrap()
    }

    #[test]
    fn toy_sdp_optimum() {
        for scaling in [true, false] {
            let opts = SolverOptions { scaling, ..Default::default() };
            let sol = solve(&toy(), &opts).unwrap();
            assert_eq!(sol.status, SolverStatus::Optimal);
            assert!((sol.x[0] - 1.0).abs() < 1e-6, "x = {}", sol.x[0]);
            assert!((sol.residuals.primal_objective + 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn toy_exact_pair_has_zero_residuals() {
        let f = toy();
        let sq = std::f64::consts::SQRT_2;
        let x = [1.0, 1.0, sq, 0.0, 1.0];
        // S* = ½[[1, −1], [−1, 1]] packed; c − s = Aᵀν.
        let s = [0.0, 0.5, -0.5 * sq, 0.0, 0.5];
        let nu = [-0.5, -0.5, 1.0 / sq, 0.0];
        let r = residuals(&f, &x, &nu, &s);
        assert!(r.max_abs() < 1e-12, "{r:?}");
        // Perturbing the primal grows the primal residual linearly.
        for eps in [1e-3, 1e-5] {
            let mut xp = x;
            xp[1] += eps;
            let r = residuals(&f, &xp, &nu, &s);
            assert!((r.primal - eps).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_trace_feasibility() {
        // minimize Tr(Q) s.t. Tr(Q) = 1, Q ⪰ 0, J = 4.
        let p = HermitianPacking::new(4);
        let diag: Vec<(usize, usize, f64)> = (0..4).map(|i| (0, p.diag(i), 1.0)).collect();
        let a = CsrMatrix::from_triplets(1, 16, &diag).unwrap();
        let mut c = vec![0.0; 16];
        for i in 0..4 {
            c[p.diag(i)] = 1.0;
        }
        let f = StandardForm::new(c, a, vec![1.0], vec![Cone::HermitianPsd { dim: 4 }]).unwrap();
        let sol = solve(&f, &SolverOptions::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.residuals.primal_objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn deterministic_and_warm_start() {
        let f = toy();
        let opts = SolverOptions::default();
        let a = solve(&f, &opts).unwrap();
        let b = solve(&f, &opts).unwrap();
        assert_eq!(a, RawSolution { wall_time: a.wall_time, ..b.clone() });
        let w = solve_warm(&f, &opts, &a.x, &a.s).unwrap();
        assert_eq!(w.status, SolverStatus::Optimal);
        assert!(w.iterations <= a.iterations);
    }

    #[test]
    fn options_validation_and_limits() {
        let f = toy();
        assert!(solve(&f, &SolverOptions { alpha: 2.0, ..Default::default() }).is_err());
        assert!(solve(&f, &SolverOptions { max_iters: 0, ..Default::default() }).is_err());
        let sol = solve(&f, &SolverOptions { max_iters: 3, ..Default::default() }).unwrap();
        assert_eq!(sol.status, SolverStatus::MaxIters);
        assert_eq!(sol.iterations, 3);
        assert!(sol.residuals.primal.is_finite());
    }
}
