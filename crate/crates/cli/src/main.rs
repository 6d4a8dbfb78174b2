use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use dbd_cli::config::{Axis, ExperimentConfig, SweepSpec};
use dbd_cli::experiment::{self, read_json, SceneBundle, SolutionFile};
use dbd_core::sdp::{build_dual_sdp, SdpConfig};
use dbd_core::GramMode;

#[derive(Parser)]
#[command(name = "dbd", version, about = "Dual-blind deconvolution of overlaid radar and communications signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config; defaults to the reference scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_gram)]
    gram: Option<GramMode>,
    /// Sets both the absolute and relative solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Also write wall-clock timings (not reproducible).
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a scene and its measurements.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the dual SDP for a stored scene.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/scene.json`.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Write the real standard form to `problem.json`.
        #[arg(long)]
        export_problem: bool,
        /// Write the packed primal vector to `packed.json`.
        #[arg(long)]
        packed: bool,
    },
    /// Peak finding and least squares from a stored solution.
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Synthesize, solve, recover and emit slices.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo sweep over one dimension.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: Option<Axis>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads; 0 uses every CPU.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Dual polynomial slices through the true atoms.
    Slices {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Grid points per unit bandwidth.
        #[arg(long)]
        resolution: Option<usize>,
    },
}

fn parse_gram(s: &str) -> Result<GramMode, String> {
    s.parse().map_err(|e: dbd_core::Error| e.to_string())
}

fn load(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::reference(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(g) = common.gram {
        cfg.gram_mode = g;
    }
    if let Some(t) = common.tol {
        cfg.solver.eps_abs = t;
        cfg.solver.eps_rel = t;
    }
    if let Some(n) = common.max_iters {
        cfg.solver.max_iters = n;
    }
    Ok(cfg)
}

fn or_default(p: &Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| dir.join(name))
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { common } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let bundle = experiment::synth(&cfg, cfg.seed)?;
            report(&[experiment::write_scene(&cfg.out_dir, &bundle)?]);
        }
        Command::Solve { common, scene, export_problem, packed } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let bundle: SceneBundle = read_json(&or_default(&scene, &cfg.out_dir, "scene.json"))?;
            let start = std::time::Instant::now();
            let (sol, x) = experiment::solve_bundle(&cfg, &bundle)?;
            log::info!(
                "{:?} after {} iterations, objective {:.6}, {:.1}s",
                sol.dual.status,
                sol.dual.iterations,
                sol.dual.objective,
                start.elapsed().as_secs_f64()
            );
            let mut files = vec![experiment::write_solution(&cfg.out_dir, &sol)?];
            if export_problem {
                let sdp = SdpConfig { gram_mode: cfg.gram_mode, ..SdpConfig::default() };
                let problem = build_dual_sdp(&bundle.measurement, &bundle.subspaces, &sdp)?;
                let p = cfg.out_dir.join("problem.json");
                std::fs::write(&p, serde_json::to_string(&problem.to_standard_json())?)?;
                files.push(p);
            }
            if packed {
                let p = cfg.out_dir.join("packed.json");
                std::fs::write(&p, serde_json::to_string(&x)?)?;
                files.push(p);
            }
            report(&files);
        }
        Command::Recover { common, scene, solution } => {
            let cfg = load(&common)?;
            let bundle: SceneBundle = read_json(&or_default(&scene, &cfg.out_dir, "scene.json"))?;
            let sol: SolutionFile = read_json(&or_default(&solution, &cfg.out_dir, "solution.json"))?;
            let rec = experiment::recover_bundle(&cfg, &bundle, &sol)?;
            if let Some(e) = &rec.recovery_error {
                log::warn!("recovery failed: {e}");
            }
            report(&[experiment::write_recovery(&cfg.out_dir, &rec)?]);
        }
        Command::Run { common } => {
            let cfg = load(&common)?;
            cfg.validate()?;
            let (record, art) = experiment::run_single(&cfg);
            println!(
                "outcome {} | gram {} | iterations {} | objective {:.6} (atomic norm {:.6}) | rel err radar {:.3e} comms {:.3e} | param err radar {:.3e} comms {:.3e}",
                record.outcome,
                record.gram_mode,
                record.iterations,
                record.objective,
                record.atomic_norm,
                record.radar_frob_rel,
                record.comms_frob_rel,
                record.radar_param_err,
                record.comms_param_err
            );
            let art = art?;
            report(&experiment::write_run(&cfg.out_dir, &art, cfg.slice_resolution, common.timings)?);
        }
        Command::Sweep { common, axis, values, trials, workers } => {
            let mut cfg = load(&common)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            match (axis, values) {
                (Some(axis), Some(values)) => cfg.sweep = Some(SweepSpec { axis, values }),
                (None, None) => {}
                (a, v) => {
                    let mut s = cfg.sweep.clone().context("--axis and --values must be given together")?;
                    if let Some(a) = a {
                        s.axis = a;
                    }
                    if let Some(v) = v {
                        s.values = v;
                    }
                    cfg.sweep = Some(s);
                }
            }
            let res = experiment::run_sweep(&cfg)?;
            for r in &res.summary {
                println!(
                    "{}={} trials {} failures {} certified {} median rel err radar {:.3e} comms {:.3e}",
                    r.axis, r.value, r.trials, r.failures, r.certified, r.radar_rel_median, r.comms_rel_median
                );
            }
            report(&experiment::write_sweep(&cfg.out_dir, &res, common.timings)?);
        }
        Command::Slices { common, scene, solution, resolution } => {
            let cfg = load(&common)?;
            let bundle: SceneBundle = read_json(&or_default(&scene, &cfg.out_dir, "scene.json"))?;
            let sol: SolutionFile = read_json(&or_default(&solution, &cfg.out_dir, "solution.json"))?;
            let res = resolution.unwrap_or(cfg.slice_resolution);
            report(&experiment::emit_slices(&cfg.out_dir, &bundle, &sol.dual.q, res)?);
        }
    }
    Ok(())
}
