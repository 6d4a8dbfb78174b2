//! Single runs, sweeps and plot-data emission.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dbd_core::lifting::synthesize_measurements;
use dbd_core::pipeline::{run_measurement, Attempt, PipelineConfig};
use dbd_core::recovery::{
    error_metrics, verify_certificate, CertificateReport, Channel, DualPolynomial, ErrorMetrics, WORST_DISTANCE,
};
use dbd_core::scene::{make_subspaces, sample_scene};
use dbd_core::sdp::{build_dual_sdp, extract_dual_solution, SdpConfig, SdpStats};
use dbd_core::solver::{solve, Residuals};
use dbd_core::{
    CMatrix, DualSolution, GramMode, Measurement, ParamTriple, RecoveryResult, Scene, SceneConfig, SolverStatus,
    Subspaces,
};

use crate::config::{Axis, ExperimentConfig};

/// Contents of `scene.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBundle {
    pub scene: Scene,
    pub subspaces: Subspaces,
    pub measurement: Measurement,
}

pub fn synth(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<SceneBundle> {
    let sc = SceneConfig {
        dims: cfg.dims,
        amplitude: cfg.amplitude,
        separation: cfg.separation,
        seed,
        radar_triples: cfg.radar_triples.clone(),
        comms_triples: cfg.comms_triples.clone(),
    };
    let scene = sample_scene(&sc)?;
    let subspaces = make_subspaces(&cfg.dims, seed);
    let measurement = synthesize_measurements(&scene, &subspaces)?;
    Ok(SceneBundle { scene, subspaces, measurement })
}

pub fn pipeline_config(cfg: &ExperimentConfig) -> PipelineConfig {
    PipelineConfig {
        sdp: SdpConfig { gram_mode: cfg.gram_mode, ..SdpConfig::default() },
        solver: cfg.solver,
        recovery: cfg.recovery,
        fallback_split: cfg.fallback_split,
        ..PipelineConfig::default()
    }
}

/// One solve attempt without timing, so artifacts are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub gram_mode: GramMode,
    pub status: SolverStatus,
    pub iterations: usize,
    pub residuals: Residuals,
    pub objective: f64,
    pub certified: Option<bool>,
    pub relative_gap: Option<f64>,
    pub recovery_error: Option<String>,
}

impl From<&Attempt> for AttemptRecord {
    fn from(a: &Attempt) -> Self {
        Self {
            gram_mode: a.gram_mode,
            status: a.status,
            iterations: a.iterations,
            residuals: a.residuals,
            objective: a.objective,
            certified: a.consistency.map(|c| c.certified),
            relative_gap: a.consistency.map(|c| c.relative_gap),
            recovery_error: a.recovery_error.clone(),
        }
    }
}

/// Contents of `solution.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub gram_mode: GramMode,
    pub attempts: Vec<AttemptRecord>,
    pub stats: SdpStats,
    pub residuals: Residuals,
    pub dual: DualSolution,
}

/// Contents of `recovery.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryFile {
    pub recovery: Option<RecoveryResult>,
    pub recovery_error: Option<String>,
    pub metrics: ErrorMetrics,
    pub certificate: CertificateReport,
}

/// One row of `sweep_trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub axis: String,
    pub value: usize,
    pub trial: usize,
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Nr")]
    pub nr: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "Qc")]
    pub qc: usize,
    /// `ok`, or the failure.
    pub outcome: String,
    pub solver_status: String,
    pub gram_mode: String,
    pub attempts: usize,
    pub iterations: usize,
    pub objective: f64,
    /// `Σ|α_r| + Σ|α_c|`.
    pub atomic_norm: f64,
    pub radar_frob: f64,
    pub radar_frob_rel: f64,
    pub comms_frob: f64,
    pub comms_frob_rel: f64,
    pub radar_param_err: f64,
    pub comms_param_err: f64,
    /// Common communications Doppler shift, which the data cannot fix.
    pub comms_doppler_offset: f64,
    pub comms_frob_rel_aligned: f64,
    pub comms_param_err_aligned: f64,
    pub on_support_dev: f64,
    pub off_support_max: f64,
    pub certified: bool,
}

/// Solve artifacts of a single run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub bundle: SceneBundle,
    pub solution: Option<SolutionFile>,
    pub recovery: Option<RecoveryFile>,
    pub wall_time: f64,
}

fn worst_metrics(scene: &Scene) -> ErrorMetrics {
    let dims = &scene.dims;
    let empty = RecoveryResult {
        radar_triples: vec![],
        comms_triples: vec![],
        radar_peak_values: vec![],
        comms_peak_values: vec![],
        z: vec![],
        xr_hat: CMatrix::zeros(dims.subspace(), dims.measurements()),
        xc_hat: CMatrix::zeros(dims.comms_len(), dims.measurements()),
        residual: f64::NAN,
        relative_residual: f64::NAN,
        condition_number: f64::NAN,
    };
    error_metrics(scene, &empty).expect("zero estimate has the scene's shapes")
}

fn run_artifacts(cfg: &ExperimentConfig, bundle: SceneBundle) -> anyhow::Result<RunArtifacts> {
    let pc = pipeline_config(cfg);
    let (out, recovery) = run_measurement(&bundle.measurement, &bundle.subspaces, &pc)?;
    let wall_time = out.attempts.iter().map(|a| a.wall_time).sum();
    let scene = &bundle.scene;
    let metrics = match &recovery {
        Some(r) => error_metrics(scene, r)?,
        // Nothing recovered: the estimate is zero.
        None => worst_metrics(scene),
    };
    let certificate = verify_certificate(&out.solve.dual.q, scene, &bundle.subspaces, pc.certificate_grid)?;
    let solution = SolutionFile {
        gram_mode: out.gram_mode,
        attempts: out.attempts.iter().map(AttemptRecord::from).collect(),
        stats: out.solve.problem_stats,
        residuals: out.solve.residuals,
        dual: out.solve.dual,
    };
    let recovery = RecoveryFile { recovery, recovery_error: out.recovery_error, metrics, certificate };
    Ok(RunArtifacts { bundle, solution: Some(solution), recovery: Some(recovery), wall_time })
}

fn record(
    axis: Option<Axis>,
    value: usize,
    trial: usize,
    seed: u64,
    cfg: &ExperimentConfig,
    art: &anyhow::Result<RunArtifacts>,
) -> TrialRecord {
    let d = &cfg.dims;
    let mut r = TrialRecord {
        axis: axis.map(|a| a.to_string()).unwrap_or_else(|| "none".into()),
        value,
        trial,
        seed,
        m: d.samples(),
        p: d.pulses(),
        nr: d.antennas(),
        k: d.subspace(),
        l: d.targets(),
        qc: d.paths(),
        outcome: "ok".into(),
        solver_status: "none".into(),
        gram_mode: cfg.gram_mode.to_string(),
        attempts: 0,
        iterations: 0,
        objective: f64::NAN,
        atomic_norm: f64::NAN,
        radar_frob: f64::NAN,
        radar_frob_rel: 1.0,
        comms_frob: f64::NAN,
        comms_frob_rel: 1.0,
        radar_param_err: WORST_DISTANCE,
        comms_param_err: WORST_DISTANCE,
        comms_doppler_offset: f64::NAN,
        comms_frob_rel_aligned: 1.0,
        comms_param_err_aligned: WORST_DISTANCE,
        on_support_dev: f64::NAN,
        off_support_max: f64::NAN,
        certified: false,
    };
    let a = match art {
        Ok(a) => a,
        Err(e) => {
            r.outcome = format!("error: {e:#}");
            return r;
        }
    };
    let s = &a.bundle.scene;
    r.atomic_norm = s.radar.l1_norm() + s.comms.l1_norm();
    if let Some(sol) = &a.solution {
        r.solver_status = format!("{:?}", sol.dual.status).to_lowercase();
        r.gram_mode = sol.gram_mode.to_string();
        r.attempts = sol.attempts.len();
        r.iterations = sol.attempts.iter().map(|t| t.iterations).sum();
        r.objective = sol.dual.objective;
        r.certified = sol.attempts.last().and_then(|t| t.certified).unwrap_or(false);
    }
    if let Some(rec) = &a.recovery {
        if let Some(e) = &rec.recovery_error {
            r.outcome = format!("recovery failed: {e}");
        }
        let m = &rec.metrics;
        r.radar_frob = m.radar_frobenius;
        r.radar_frob_rel = m.radar_frobenius_rel;
        r.comms_frob = m.comms_frobenius;
        r.comms_frob_rel = m.comms_frobenius_rel;
        r.radar_param_err = m.radar_params.max_error;
        r.comms_param_err = m.comms_params.max_error;
        r.comms_doppler_offset = m.comms_doppler_offset;
        r.comms_frob_rel_aligned = m.comms_frobenius_rel_aligned;
        r.comms_param_err_aligned = m.comms_params_aligned.max_error;
        r.on_support_dev = rec.certificate.on_support_deviation();
        r.off_support_max = rec.certificate.off_support_max();
    }
    r
}

/// End-to-end run at `cfg.seed`; failures end up in the record.
pub fn run_single(cfg: &ExperimentConfig) -> (TrialRecord, anyhow::Result<RunArtifacts>) {
    let art = synth(cfg, cfg.seed).and_then(|b| run_artifacts(cfg, b));
    (record(None, 0, 0, cfg.seed, cfg, &art), art)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
}

pub fn write_scene(dir: &Path, bundle: &SceneBundle) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join("scene.json");
    write_json(&p, bundle)?;
    Ok(p)
}

pub fn write_solution(dir: &Path, sol: &SolutionFile) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join("solution.json");
    write_json(&p, sol)?;
    Ok(p)
}

pub fn write_recovery(dir: &Path, rec: &RecoveryFile) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join("recovery.json");
    write_json(&p, rec)?;
    Ok(p)
}

/// Solve only, from a stored scene.
pub fn solve_bundle(cfg: &ExperimentConfig, bundle: &SceneBundle) -> anyhow::Result<(SolutionFile, Vec<f64>)> {
    let sdp = SdpConfig { gram_mode: cfg.gram_mode, ..SdpConfig::default() };
    let problem = build_dual_sdp(&bundle.measurement, &bundle.subspaces, &sdp)?;
    let raw = solve(&problem.form, &cfg.solver)?;
    let dual = extract_dual_solution(&raw, &problem)?;
    let attempt = AttemptRecord {
        gram_mode: cfg.gram_mode,
        status: raw.status,
        iterations: raw.iterations,
        residuals: raw.residuals,
        objective: dual.objective,
        certified: None,
        relative_gap: None,
        recovery_error: None,
    };
    Ok((
        SolutionFile {
            gram_mode: cfg.gram_mode,
            attempts: vec![attempt],
            stats: problem.stats,
            residuals: raw.residuals,
            dual,
        },
        raw.x,
    ))
}

/// Recovery only, from a stored scene and solution.
pub fn recover_bundle(
    cfg: &ExperimentConfig,
    bundle: &SceneBundle,
    sol: &SolutionFile,
) -> anyhow::Result<RecoveryFile> {
    let scene = &bundle.scene;
    let rec = dbd_core::recovery::recover(&sol.dual.q, &bundle.subspaces, &bundle.measurement, &cfg.recovery);
    let certificate =
        verify_certificate(&sol.dual.q, scene, &bundle.subspaces, PipelineConfig::default().certificate_grid)?;
    Ok(match rec {
        Ok(r) => {
            RecoveryFile { metrics: error_metrics(scene, &r)?, recovery: Some(r), recovery_error: None, certificate }
        }
        Err(e) => RecoveryFile {
            metrics: worst_metrics(scene),
            recovery: None,
            recovery_error: Some(e.to_string()),
            certificate,
        },
    })
}

/// Writes `scene.json`, `solution.json`, `recovery.json` and slices.
/// Timing goes to `timing.json` only when asked, so the default outputs
/// are reproducible byte for byte.
pub fn write_run(
    dir: &Path,
    art: &RunArtifacts,
    slice_resolution: usize,
    timings: bool,
) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = vec![write_scene(dir, &art.bundle)?];
    if let Some(s) = &art.solution {
        files.push(write_solution(dir, s)?);
        files.extend(emit_slices(dir, &art.bundle, &s.dual.q, slice_resolution)?);
    }
    if let Some(r) = &art.recovery {
        files.push(write_recovery(dir, r)?);
    }
    if timings {
        let timing = dir.join("timing.json");
        write_json(&timing, &serde_json::json!({ "solve_seconds": art.wall_time }))?;
        files.push(timing);
    }
    Ok(files)
}

/// 2-D planes and 1-D cuts of both dual polynomials through every true
/// atom: the `τ–ν` plane at the atom's `β`, the `ν–β` plane at its `τ`.
pub fn emit_slices(
    dir: &Path,
    bundle: &SceneBundle,
    q: &[dbd_core::C64],
    resolution: usize,
) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let dims = &bundle.scene.dims;
    let (p, m, nr) = (dims.pulses(), dims.samples(), dims.antennas());
    let res = resolution.max(2);
    let mut files = Vec::new();
    for (which, spec) in [(Channel::Radar, &bundle.scene.radar), (Channel::Comms, &bundle.scene.comms)] {
        let poly = DualPolynomial::new(q, &bundle.subspaces, dims, which)?;
        for (l, t) in spec.triples.iter().enumerate() {
            let tn = poly.field([res * p, res * m, 2 * nr], *t)?;
            let nb = poly.field([res * p, 2 * m, res * nr], *t)?;
            let outputs: [(&str, &dbd_core::recovery::PolyField, Option<(usize, usize)>, usize); 5] = [
                ("tau_nu", &tn, Some((0, 1)), 0),
                ("nu_beta", &nb, Some((0, 2)), 0),
                ("cut_tau", &tn, None, 1),
                ("cut_nu", &tn, None, 0),
                ("cut_beta", &nb, None, 2),
            ];
            for (name, field, plane, axis) in outputs {
                let path = dir.join(format!("slice_{which}_{l}_{name}.csv"));
                let mut w = BufWriter::new(fs::File::create(&path)?);
                match plane {
                    Some((a, b)) => field.write_plane(&mut w, [0, 0, 0], a, b)?,
                    None => field.write_cut(&mut w, [0, 0, 0], axis)?,
                }
                w.flush()?;
                files.push(path);
            }
        }
    }
    Ok(files)
}

/// One row of `sweep_summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: String,
    pub value: usize,
    pub trials: usize,
    pub failures: usize,
    pub certified: usize,
    pub radar_rel_mean: f64,
    pub radar_rel_median: f64,
    pub radar_rel_q25: f64,
    pub radar_rel_q75: f64,
    pub comms_rel_mean: f64,
    pub comms_rel_median: f64,
    pub comms_rel_q25: f64,
    pub comms_rel_q75: f64,
    pub radar_frob_mean: f64,
    pub comms_frob_mean: f64,
    pub radar_param_median: f64,
    pub comms_param_median: f64,
    pub comms_rel_aligned_median: f64,
    /// Median of the mean of the two relative errors.
    pub error_median: f64,
    /// Same, with the communications error taken after Doppler alignment.
    pub error_median_aligned: f64,
}

/// Linear-interpolation quantile of a sorted slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sorted(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = v.filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn summarize(axis: Axis, value: usize, rows: &[&TrialRecord]) -> SummaryRow {
    let rr = sorted(rows.iter().map(|r| r.radar_frob_rel));
    let cr = sorted(rows.iter().map(|r| r.comms_frob_rel));
    let both = sorted(rows.iter().map(|r| 0.5 * (r.radar_frob_rel + r.comms_frob_rel)));
    let both_aligned = sorted(rows.iter().map(|r| 0.5 * (r.radar_frob_rel + r.comms_frob_rel_aligned)));
    SummaryRow {
        axis: axis.to_string(),
        value,
        trials: rows.len(),
        failures: rows.iter().filter(|r| r.outcome != "ok").count(),
        certified: rows.iter().filter(|r| r.certified).count(),
        radar_rel_mean: mean(&rr),
        radar_rel_median: quantile(&rr, 0.5),
        radar_rel_q25: quantile(&rr, 0.25),
        radar_rel_q75: quantile(&rr, 0.75),
        comms_rel_mean: mean(&cr),
        comms_rel_median: quantile(&cr, 0.5),
        comms_rel_q25: quantile(&cr, 0.25),
        comms_rel_q75: quantile(&cr, 0.75),
        radar_frob_mean: mean(&sorted(rows.iter().map(|r| r.radar_frob))),
        comms_frob_mean: mean(&sorted(rows.iter().map(|r| r.comms_frob))),
        radar_param_median: quantile(&sorted(rows.iter().map(|r| r.radar_param_err)), 0.5),
        comms_param_median: quantile(&sorted(rows.iter().map(|r| r.comms_param_err)), 0.5),
        comms_rel_aligned_median: quantile(&sorted(rows.iter().map(|r| r.comms_frob_rel_aligned)), 0.5),
        error_median: quantile(&both, 0.5),
        error_median_aligned: quantile(&both_aligned, 0.5),
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    /// Solve seconds per trial, aligned with `trials`.
    pub wall_times: Vec<f64>,
}

/// Runs `cfg.trials` trials per sweep value; trial `i` uses seed
/// `cfg.seed + i` at every value.
pub fn run_sweep(cfg: &ExperimentConfig) -> anyhow::Result<SweepResult> {
    let sweep = cfg.sweep.clone().context("no sweep axis/values configured")?;
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = sweep.values.iter().flat_map(|&v| (0..cfg.trials).map(move |t| (v, t))).collect();
    let run = |&(value, trial): &(usize, usize)| -> (TrialRecord, f64) {
        let seed = cfg.seed + trial as u64;
        let mut c = cfg.clone();
        c.seed = seed;
        let art = sweep.axis.apply(&cfg.dims, value).and_then(|d| {
            c.dims = d;
            synth(&c, seed).and_then(|b| run_artifacts(&c, b))
        });
        let wall = art.as_ref().map(|a| a.wall_time).unwrap_or(0.0);
        (record(Some(sweep.axis), value, trial, seed, &c, &art), wall)
    };
    let results: Vec<(TrialRecord, f64)> = if cfg.workers == 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };
    let (trials, wall_times): (Vec<TrialRecord>, Vec<f64>) = results.into_iter().unzip();
    let summary = sweep
        .values
        .iter()
        .map(|&v| {
            let rows: Vec<&TrialRecord> = trials.iter().filter(|r| r.value == v).collect();
            summarize(sweep.axis, v, &rows)
        })
        .collect();
    Ok(SweepResult { trials, summary, wall_times })
}

pub fn write_sweep(dir: &Path, res: &SweepResult, timings: bool) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let summary = dir.join("sweep_summary.csv");
    let mut w = csv::Writer::from_path(&summary)?;
    for r in &res.summary {
        w.serialize(r)?;
    }
    w.flush()?;
    let trials = dir.join("sweep_trials.csv");
    let mut w = csv::Writer::from_path(&trials)?;
    for r in &res.trials {
        w.serialize(r)?;
    }
    w.flush()?;
    if !timings {
        return Ok(vec![summary, trials]);
    }
    let timings = dir.join("sweep_timings.csv");
    let mut w = csv::Writer::from_path(&timings)?;
    w.write_record(["value", "trial", "solve_seconds"])?;
    for (r, t) in res.trials.iter().zip(&res.wall_times) {
        w.write_record([r.value.to_string(), r.trial.to_string(), format!("{t:.3}")])?;
    }
    w.flush()?;
    Ok(vec![summary, trials, timings])
}

/// True triples of a scene, for reporting.
pub fn truth(bundle: &SceneBundle) -> (Vec<ParamTriple>, Vec<ParamTriple>) {
    (bundle.scene.radar.triples.clone(), bundle.scene.comms.triples.clone())
}
