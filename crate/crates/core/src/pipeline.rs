//! End-to-end run: measurement → dual SDP → solve → recovery → metrics.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lifting::{synthesize_measurements, Measurement};
use crate::linalg::norm2;
use crate::recovery::{
    error_metrics, recover, verify_certificate, CertificateReport, ErrorMetrics, RecoveryOptions, RecoveryResult,
};
use crate::scene::{Scene, Subspaces};
use crate::sdp::{build_dual_sdp, extract_dual_solution, ConicProblem, DualSolution, GramMode, SdpConfig, SdpStats};
use crate::solver::{solve, solve_warm, CheckRecord, RawSolution, Residuals, SolverOptions, SolverStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub sdp: SdpConfig,
    pub solver: SolverOptions,
    pub recovery: RecoveryOptions,
    /// Re-solve with split Gram matrices when the shared solve does not
    /// certify its own recovery.
    pub fallback_split: bool,
    /// Tolerance of the self-consistency test.
    pub certify_tol: f64,
    pub certificate_grid: usize,
    /// Before a shared solve that may fall back, screen it at this looser
    /// tolerance and iteration cap. Only a screen that certifies itself is
    /// continued to full accuracy.
    pub screen_tol: f64,
    pub screen_max_iters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sdp: SdpConfig::default(),
            solver: SolverOptions::default(),
            recovery: RecoveryOptions::default(),
            fallback_split: true,
            certify_tol: 1e-2,
            certificate_grid: 4,
            screen_tol: 1e-4,
            screen_max_iters: 20_000,
        }
    }
}

/// Self-consistency of one solve, computed without ground truth: the
/// recovered atoms must fit `y`, sit at unit-norm peaks, and their
/// coefficient norms must add up to the dual objective (zero duality gap
/// of the atomic problem).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub dual_objective: f64,
    /// `Σ‖z_ℓ‖`, an upper bound on the atomic norm of the fit.
    pub atomic_norm_bound: f64,
    pub relative_gap: f64,
    pub relative_residual: f64,
    pub peak_deviation: f64,
    pub certified: bool,
}

pub fn consistency(dual: &DualSolution, rec: &RecoveryResult, k: usize, pk: usize, tol: f64) -> Consistency {
    let nr = rec.radar_triples.len();
    let bound: f64 = (0..nr).map(|l| norm2(&rec.z[l * k..(l + 1) * k])).sum::<f64>()
        + (0..rec.comms_triples.len()).map(|q| norm2(&rec.z[nr * k + q * pk..nr * k + (q + 1) * pk])).sum::<f64>();
    let gap = (bound - dual.objective).abs() / bound.max(1e-12);
    let peak_deviation =
        rec.radar_peak_values.iter().chain(&rec.comms_peak_values).map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    Consistency {
        dual_objective: dual.objective,
        atomic_norm_bound: bound,
        relative_gap: gap,
        relative_residual: rec.relative_residual,
        peak_deviation,
        certified: gap <= tol && rec.relative_residual <= tol && peak_deviation <= tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub gram_mode: GramMode,
    pub status: SolverStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    pub wall_time: f64,
    pub objective: f64,
    pub consistency: Option<Consistency>,
    pub recovery_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub problem_stats: SdpStats,
    pub dual: DualSolution,
    pub residuals: Residuals,
    pub wall_time: f64,
    pub history: Vec<CheckRecord>,
}

pub fn solve_dual(
    y: &Measurement,
    subspaces: &Subspaces,
    sdp: &SdpConfig,
    opts: &SolverOptions,
) -> Result<(ConicProblem, RawSolution, DualSolution)> {
    let problem = build_dual_sdp(y, subspaces, sdp)?;
    let raw = solve(&problem.form, opts)?;
    let dual = extract_dual_solution(&raw, &problem)?;
    Ok((problem, raw, dual))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub measurement: Measurement,
    /// Mode of the attempt reported below.
    pub gram_mode: GramMode,
    pub attempts: Vec<Attempt>,
    pub solve: SolveOutput,
    pub recovery: Option<RecoveryResult>,
    pub recovery_error: Option<String>,
    pub certificate: Option<CertificateReport>,
    pub metrics: Option<ErrorMetrics>,
}

struct Stage {
    attempt: Attempt,
    solve: SolveOutput,
    recovery: std::result::Result<RecoveryResult, String>,
    warm: (Vec<f64>, Vec<f64>),
}

impl Stage {
    fn certified(&self) -> bool {
        self.attempt.consistency.map(|c| c.certified).unwrap_or(false)
    }
}

fn stage(
    y: &Measurement,
    subspaces: &Subspaces,
    cfg: &PipelineConfig,
    mode: GramMode,
    opts: &SolverOptions,
    warm: Option<&(Vec<f64>, Vec<f64>)>,
) -> Result<Stage> {
    let sdp = SdpConfig { gram_mode: mode, ..cfg.sdp };
    let problem = build_dual_sdp(y, subspaces, &sdp)?;
    let raw = match warm {
        Some((x, s)) => solve_warm(&problem.form, opts, x, s)?,
        None => solve(&problem.form, opts)?,
    };
    let dual = extract_dual_solution(&raw, &problem)?;
    let recovery = recover(&dual.q, subspaces, y, &cfg.recovery).map_err(|e| e.to_string());
    let dims = &y.dims;
    let cons =
        recovery.as_ref().ok().map(|r| consistency(&dual, r, dims.subspace(), dims.comms_len(), cfg.certify_tol));
    let attempt = Attempt {
        gram_mode: mode,
        status: raw.status,
        iterations: raw.iterations,
        residuals: raw.residuals,
        wall_time: raw.wall_time,
        objective: dual.objective,
        consistency: cons,
        recovery_error: recovery.as_ref().err().cloned(),
    };
    let solve = SolveOutput {
        problem_stats: problem.stats,
        residuals: raw.residuals,
        wall_time: raw.wall_time,
        history: raw.history,
        dual,
    };
    let warm = (raw.x, raw.s);
    Ok(Stage { attempt, solve, recovery, warm })
}

/// Solve and recover from a measurement alone.
pub fn run_measurement(
    y: &Measurement,
    subspaces: &Subspaces,
    cfg: &PipelineConfig,
) -> Result<(RunOutput, Option<RecoveryResult>)> {
    let first_mode = cfg.sdp.gram_mode;
    let full = &cfg.solver;
    let mut attempts = Vec::new();
    let st = if cfg.fallback_split && first_mode == GramMode::Shared {
        let screen = SolverOptions {
            eps_abs: full.eps_abs.max(cfg.screen_tol),
            eps_rel: full.eps_rel.max(cfg.screen_tol),
            max_iters: full.max_iters.min(cfg.screen_max_iters),
            ..*full
        };
        let mut st = stage(y, subspaces, cfg, GramMode::Shared, &screen, None)?;
        attempts.push(st.attempt.clone());
        if st.certified() && screen != *full {
            st = stage(y, subspaces, cfg, GramMode::Shared, full, Some(&st.warm))?;
            attempts.push(st.attempt.clone());
        }
        if !st.certified() {
            st = stage(y, subspaces, cfg, GramMode::Split, full, None)?;
            attempts.push(st.attempt.clone());
        }
        st
    } else {
        let st = stage(y, subspaces, cfg, first_mode, full, None)?;
        attempts.push(st.attempt.clone());
        st
    };
    let (recovery, recovery_error) = match st.recovery {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e)),
    };
    let out = RunOutput {
        measurement: y.clone(),
        gram_mode: st.attempt.gram_mode,
        attempts,
        solve: st.solve,
        recovery: recovery.clone(),
        recovery_error,
        certificate: None,
        metrics: None,
    };
    Ok((out, recovery))
}

/// Full run against a known scene, with certificate and error metrics.
pub fn run_scene(scene: &Scene, subspaces: &Subspaces, cfg: &PipelineConfig) -> Result<RunOutput> {
    let y = synthesize_measurements(scene, subspaces)?;
    let (mut out, recovery) = run_measurement(&y, subspaces, cfg)?;
    out.certificate = Some(verify_certificate(&out.solve.dual.q, scene, subspaces, cfg.certificate_grid)?);
    if let Some(r) = &recovery {
        out.metrics = Some(error_metrics(scene, r)?);
    }
    Ok(out)
}
