//! sample → basis → modes → simulate, with per-stage timings.

use std::time::Instant;

use rkpm_core::basis::{BasisTable, RkpmBasis};
use rkpm_core::discretize::Discretization;
use rkpm_core::modes::{compute_modes, SkinningModes};
use rkpm_core::sampling::{sample_grid, KernelSet};
use rkpm_core::simulate::{build_kinematics, Simulator, Trajectory};
use serde::Serialize;

use crate::config::SceneConfig;
use crate::error::{HarnessError, Stage, StageExt};
use crate::trajectory::TrajectoryFile;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub sampling_s: f64,
    pub basis_s: f64,
    /// Weight-space Hessian and mass assembly plus the eigensolve.
    pub eigensolve_s: f64,
    pub simulate_s: f64,
    pub per_step_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverStats {
    pub steps: usize,
    pub newton_iterations: usize,
    pub nonconverged_steps: usize,
    pub stalled_steps: usize,
    pub max_gradient_norm: f64,
    pub gradient_tolerance: f64,
    pub max_deformation_gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub integration_points: usize,
    pub kernels: usize,
    pub modes: usize,
    pub dofs: usize,
    pub time_step: f64,
    pub frames: usize,
    pub seed: u64,
    pub eigenvalues: Vec<f64>,
    pub timings: StageTimings,
    pub solver: SolverStats,
}

/// Discretization plus how long each part took.
pub struct Prepared {
    pub disc: Discretization,
    pub sampling_s: f64,
    pub basis_s: f64,
}

pub fn prepare(cfg: &SceneConfig) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    let shape = cfg.shape_source()?;
    let material = cfg.material_spec()?;
    let t = Instant::now();
    let integ = sample_grid(&shape, &material, cfg.sampling.points, cfg.seed).stage(Stage::Sampling)?;
    let kernels = KernelSet::select(&integ, cfg.sampling.kernels).stage(Stage::Sampling)?;
    let sampling_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let basis = RkpmBasis::with_cutoff(kernels, cfg.cutoff());
    let table = BasisTable::build(&basis, &integ.points).stage(Stage::Basis)?;
    let basis_s = t.elapsed().as_secs_f64();
    Ok(Prepared {
        disc: Discretization { integ, basis, table },
        sampling_s,
        basis_s,
    })
}

pub fn solve_modes_timed(cfg: &SceneConfig, disc: &Discretization, m: usize) -> Result<(SkinningModes, f64), HarnessError> {
    let t = Instant::now();
    let modes = compute_modes(&disc.table, &disc.integ, cfg.cutoff(), m).stage(Stage::Modes)?;
    Ok((modes, t.elapsed().as_secs_f64()))
}

pub fn solver_stats(sim: &Simulator, traj: &Trajectory) -> SolverStats {
    let max_f = traj
        .states
        .iter()
        .flat_map(|s| sim.deformation_gradients(s))
        .map(|f| f.norm())
        .fold(0.0, f64::max);
    SolverStats {
        steps: traj.reports.len(),
        newton_iterations: traj.reports.iter().map(|r| r.iterations).sum(),
        nonconverged_steps: traj.reports.iter().filter(|r| !r.converged).count(),
        stalled_steps: traj.reports.iter().filter(|r| r.stalled).count(),
        max_gradient_norm: traj.reports.iter().map(|r| r.gradient_norm).fold(0.0, f64::max),
        gradient_tolerance: sim.gradient_tolerance(),
        max_deformation_gradient_norm: max_f,
    }
}

pub struct RunOutput {
    pub trajectory: TrajectoryFile,
    pub modes: SkinningModes,
    pub report: RunReport,
}

/// Runs a full scene.
pub fn run_scene(cfg: &SceneConfig) -> Result<RunOutput, HarnessError> {
    let prep = prepare(cfg)?;
    let (modes, eigensolve_s) = solve_modes_timed(cfg, &prep.disc, cfg.modes.count)?;
    simulate_prepared(cfg, &prep, modes, eigensolve_s)
}

/// Runs a scene with precomputed modes; the eigensolve time is reported as 0.
pub fn run_with_modes(cfg: &SceneConfig, modes: SkinningModes) -> Result<RunOutput, HarnessError> {
    let prep = prepare(cfg)?;
    if modes.n_kernels() != prep.disc.n_kernels() {
        return Err(HarnessError::Core {
            stage: Stage::Modes,
            source: rkpm_core::Error::ContractViolation(format!(
                "mode file has {} kernels, scene has {}",
                modes.n_kernels(),
                prep.disc.n_kernels()
            )),
        });
    }
    simulate_prepared(cfg, &prep, modes, 0.0)
}

fn simulate_prepared(
    cfg: &SceneConfig,
    prep: &Prepared,
    modes: SkinningModes,
    eigensolve_s: f64,
) -> Result<RunOutput, HarnessError> {
    let disc = &prep.disc;
    let kin = build_kinematics(&modes, &disc.table, &disc.integ).stage(Stage::Simulate)?;
    let sim = Simulator::new(kin, disc.integ.clone(), cfg.boundary_conditions()?, cfg.solver_options())
        .stage(Stage::Simulate)?;
    let steps = cfg.steps();
    let t = Instant::now();
    let traj = sim.run(cfg.time.step, steps).stage(Stage::Simulate)?;
    let simulate_s = t.elapsed().as_secs_f64();
    let solver = solver_stats(&sim, &traj);
    let trajectory = TrajectoryFile::new(cfg.time.step, traj.frames)?;
    let report = RunReport {
        integration_points: disc.integ.len(),
        kernels: disc.n_kernels(),
        modes: modes.m(),
        dofs: sim.kinematics().n_dofs(),
        time_step: cfg.time.step,
        frames: trajectory.n_frames(),
        seed: cfg.seed,
        eigenvalues: modes.eigenvalues.clone(),
        timings: StageTimings {
            sampling_s: prep.sampling_s,
            basis_s: prep.basis_s,
            eigensolve_s,
            simulate_s,
            per_step_ms: 1e3 * simulate_s / steps as f64,
        },
        solver,
    };
    Ok(RunOutput {
        trajectory,
        modes,
        report,
    })
}
