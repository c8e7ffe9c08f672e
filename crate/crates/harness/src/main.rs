use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rkpm_core::modes::SkinningModes;
use rkpm_harness::bench::{bench_beam, BeamTest, BenchParams, PAPER_MODE_COUNTS};
use rkpm_harness::config::SceneConfig;
use rkpm_harness::error::{HarnessError, Stage};
use rkpm_harness::export::export_modes;
use rkpm_harness::metrics::compare;
use rkpm_harness::pipeline::{prepare, run_scene, run_with_modes, solve_modes_timed};
use rkpm_harness::trajectory::{write_atomic, TrajectoryFile};

#[derive(Parser)]
#[command(name = "rkpm", version, about = "Reduced-order RKPM elastodynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SceneOverrides {
    /// Scene file (TOML).
    #[arg(long)]
    scene: PathBuf,
    /// Override the number of non-constant modes.
    #[arg(long)]
    m: Option<usize>,
    /// Override the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep every kernel active everywhere (no support cutoff).
    #[arg(long)]
    dense_basis: bool,
    /// Use the raw elastic Hessian in Newton (diagnostics).
    #[arg(long)]
    no_psd_projection: bool,
}

impl SceneOverrides {
    fn load(&self) -> Result<SceneConfig, HarnessError> {
        let mut cfg = SceneConfig::load(&self.scene)?;
        if let Some(m) = self.m {
            cfg.modes.count = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.dense_basis {
            cfg.sampling.dense_basis = true;
        }
        if self.no_psd_projection {
            cfg.solver.psd_projection = Some(false);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene; writes the trajectory and a JSON report.
    Run {
        #[command(flatten)]
        scene: SceneOverrides,
        /// Trajectory output path; the report goes to `<out>.report.json`.
        #[arg(long)]
        out: PathBuf,
        /// Reuse a mode file instead of solving for modes.
        #[arg(long)]
        modes: Option<PathBuf>,
    },
    /// Normalized MSE and max error of a trajectory against a reference.
    Compare { reference: PathBuf, candidate: PathBuf },
    /// Reduced models against the full-order reference on the standard beam.
    BenchBeam {
        #[arg(long, default_value = "bend")]
        mode: BeamTest,
        /// Comma-separated mode counts.
        #[arg(long, value_delimiter = ',', default_values_t = PAPER_MODE_COUNTS)]
        m: Vec<usize>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        kernels: Option<usize>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dense_basis: bool,
        #[arg(long)]
        no_psd_projection: bool,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes `<out>.modes` and the per-point weight dump `<out>.weights.txt`.
    ModesExport {
        #[command(flatten)]
        scene: SceneOverrides,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    write_atomic(path, |f| std::io::Write::write_all(f, text.as_bytes()))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { scene, out, modes } => {
            let cfg = scene.load()?;
            let output = match modes {
                Some(path) => {
                    let file = std::fs::File::open(&path).map_err(|e| HarnessError::io(Stage::Modes, &path, e))?;
                    let modes = SkinningModes::read_from(std::io::BufReader::new(file))
                        .map_err(|e| HarnessError::io(Stage::Modes, &path, e))?;
                    run_with_modes(&cfg, modes.truncated(cfg.modes.count))?
                }
                None => run_scene(&cfg)?,
            };
            output.trajectory.save(&out)?;
            let report = serde_json::to_value(&output.report).expect("report serializes");
            let mut report_path = out.clone().into_os_string();
            report_path.push(".report.json");
            write_json(Path::new(&report_path), &report)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Compare { reference, candidate } => {
            let a = TrajectoryFile::load(&reference)?;
            let b = TrajectoryFile::load(&candidate)?;
            let c = compare(&a, &b)?;
            println!("{}", serde_json::to_string_pretty(&c).expect("comparison serializes"));
        }
        Command::BenchBeam {
            mode,
            m,
            points,
            kernels,
            step,
            duration,
            seed,
            dense_basis,
            no_psd_projection,
            out,
        } => {
            let d = BenchParams::default();
            let params = BenchParams {
                points: points.unwrap_or(d.points),
                kernels: kernels.unwrap_or(d.kernels),
                step: step.unwrap_or(d.step),
                duration: duration.unwrap_or(d.duration),
                seed: seed.unwrap_or(d.seed),
                dense_basis,
                psd_projection: !no_psd_projection,
            };
            let table = bench_beam(mode, &m, &params)?;
            print!("{}", table.render());
            if let Some(path) = out {
                write_json(&path, &serde_json::to_value(&table).expect("table serializes"))?;
            }
        }
        Command::ModesExport { scene, out } => {
            let cfg = scene.load()?;
            let prep = prepare(&cfg)?;
            let (modes, seconds) = solve_modes_timed(&cfg, &prep.disc, cfg.modes.count)?;
            let (modes_path, dump_path) = export_modes(&out, &prep.disc, &modes)?;
            let summary = serde_json::json!({
                "modes_file": modes_path.display().to_string(),
                "weights_file": dump_path.display().to_string(),
                "kernels": modes.n_kernels(),
                "modes": modes.m(),
                "eigenvalues": modes.eigenvalues,
                "eigensolve_s": seconds,
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), HarnessError> {
    let Ok(value) = std::env::var("RKPM_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| HarnessError::Config {
        field: "RKPM_THREADS".into(),
        message: format!("expected a positive integer, got `{value}`"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HarnessError::Config {
            field: "RKPM_THREADS".into(),
            message: e.to_string(),
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
