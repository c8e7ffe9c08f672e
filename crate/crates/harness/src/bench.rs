//! Beam benchmark: reduced models at several mode counts against the
//! full-order RKPM reference on the same discretization.

use std::fmt::Write as _;
use std::time::Instant;

use rkpm_core::oracle::{fit_basis_residual, full_order_simulator};
use rkpm_core::simulate::{build_kinematics, Simulator};
use serde::Serialize;

use crate::config::{beam_scene, BoundaryConfig, BoxConfig, SceneConfig};
use crate::error::{HarnessError, Stage, StageExt};
use crate::metrics::compare_frames;
use crate::pipeline::{prepare, solve_modes_timed, solver_stats, SolverStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamTest {
    /// Leftmost 0.5 m held, the rest bends under gravity.
    Bend,
    /// Leftmost 0.5 m held, rightmost 0.5 m rotated about the beam axis to
    /// 720° at the final frame.
    Twist,
}

impl std::str::FromStr for BeamTest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bend" => Ok(BeamTest::Bend),
            "twist" => Ok(BeamTest::Twist),
            _ => Err(format!("unknown beam test `{s}` (expected bend or twist)")),
        }
    }
}

pub const PAPER_MODE_COUNTS: [usize; 4] = [6, 9, 16, 32];
pub const TWIST_ANGLE_DEGREES: f64 = 720.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchParams {
    pub points: usize,
    pub kernels: usize,
    pub step: f64,
    pub duration: f64,
    pub seed: u64,
    pub dense_basis: bool,
    pub psd_projection: bool,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            points: 1200,
            kernels: 100,
            step: 0.01,
            duration: 1.0,
            seed: 0,
            dense_basis: false,
            psd_projection: true,
        }
    }
}

/// The beam scene for one test with mode count `m`.
pub fn beam_test_scene(test: BeamTest, params: &BenchParams, m: usize) -> SceneConfig {
    let mut cfg = beam_scene(m);
    cfg.seed = params.seed;
    cfg.sampling.points = params.points;
    cfg.sampling.kernels = params.kernels;
    cfg.sampling.dense_basis = params.dense_basis;
    cfg.time.step = params.step;
    cfg.time.duration = params.duration;
    cfg.solver.psd_projection = Some(params.psd_projection);
    if test == BeamTest::Twist {
        cfg.gravity = None;
        cfg.boundary.push(BoundaryConfig::TwistHandle {
            region: Some(BoxConfig {
                min: [4.5, -1.0, -1.0],
                max: [6.0, 2.0, 2.0],
            }),
            indices: None,
            axis_origin: [2.5, 0.5, 0.5],
            axis_direction: [1.0, 0.0, 0.0],
            angle_degrees: TWIST_ANGLE_DEGREES,
            ramp_time: None,
            stiffness: None,
        });
    }
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    /// `None` for the full-order reference row.
    pub m: Option<usize>,
    pub dofs: usize,
    pub normalized_mse: f64,
    pub normalized_max_error: f64,
    pub fit_residual: Option<f64>,
    pub eigensolve_s: Option<f64>,
    pub simulate_s: f64,
    pub solver: SolverStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTable {
    pub test: BeamTest,
    pub params: BenchParams,
    pub integration_points: usize,
    pub kernels: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn reduced_rows(&self) -> impl Iterator<Item = &BenchRow> {
        self.rows.iter().filter(|r| r.m.is_some())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# beam {:?}: N = {}, K = {}, h = {}, T = {} s",
            self.test, self.integration_points, self.kernels, self.params.step, self.params.duration
        );
        let _ = writeln!(
            s,
            "# reference: full-order RKPM on the same points; errors are not comparable to FEM-referenced tables"
        );
        let _ = writeln!(
            s,
            "{:>9} {:>6} {:>12} {:>12} {:>12} {:>9} {:>9} {:>7}",
            "m", "dofs", "mse", "max_err", "fit_resid", "eig_s", "sim_s", "nonconv"
        );
        for r in &self.rows {
            let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$e}"));
            let _ = writeln!(
                s,
                "{:>9} {:>6} {:>12.3e} {:>12.3e} {:>12} {:>9} {:>9.2} {:>7}",
                r.m.map_or("reference".to_string(), |m| m.to_string()),
                r.dofs,
                r.normalized_mse,
                r.normalized_max_error,
                opt(r.fit_residual, 3),
                r.eigensolve_s.map_or("-".to_string(), |v| format!("{v:.2}")),
                r.simulate_s,
                r.solver.nonconverged_steps
            );
        }
        s
    }
}

/// Runs the full-order reference and then every `m` in `mode_counts`.
pub fn bench_beam(test: BeamTest, mode_counts: &[usize], params: &BenchParams) -> Result<BenchTable, HarnessError> {
    let max_m = *mode_counts.iter().max().ok_or_else(|| HarnessError::Config {
        field: "m".into(),
        message: "at least one mode count is required".into(),
    })?;
    let cfg = beam_test_scene(test, params, max_m);
    let prep = prepare(&cfg)?;
    let disc = &prep.disc;
    let bcs = cfg.boundary_conditions()?;
    let steps = cfg.steps();

    let reference_sim =
        full_order_simulator(&disc.table, &disc.integ, bcs.clone(), cfg.solver_options()).stage(Stage::Reference)?;
    let t = Instant::now();
    let reference = reference_sim.run(cfg.time.step, steps).stage(Stage::Reference)?;
    let mut rows = vec![BenchRow {
        m: None,
        dofs: reference_sim.kinematics().n_dofs(),
        normalized_mse: 0.0,
        normalized_max_error: 0.0,
        fit_residual: None,
        eigensolve_s: None,
        simulate_s: t.elapsed().as_secs_f64(),
        solver: solver_stats(&reference_sim, &reference),
    }];

    let (all_modes, eigensolve_s) = solve_modes_timed(&cfg, disc, max_m)?;
    for &m in mode_counts {
        let modes = all_modes.truncated(m);
        let kin = build_kinematics(&modes, &disc.table, &disc.integ).stage(Stage::Simulate)?;
        let fit = fit_basis_residual(&reference.frames, &kin).stage(Stage::Compare)?;
        let sim = Simulator::new(kin, disc.integ.clone(), bcs.clone(), cfg.solver_options()).stage(Stage::Simulate)?;
        let t = Instant::now();
        let traj = sim.run(cfg.time.step, steps).stage(Stage::Simulate)?;
        let simulate_s = t.elapsed().as_secs_f64();
        let cmp = compare_frames(&reference.frames, &traj.frames)?;
        rows.push(BenchRow {
            m: Some(m),
            dofs: sim.kinematics().n_dofs(),
            normalized_mse: cmp.normalized_mse,
            normalized_max_error: cmp.normalized_max_error,
            fit_residual: Some(fit.residual),
            eigensolve_s: Some(eigensolve_s),
            simulate_s,
            solver: solver_stats(&sim, &traj),
        });
    }
    Ok(BenchTable {
        test,
        params: params.clone(),
        integration_points: disc.integ.len(),
        kernels: disc.n_kernels(),
        rows,
    })
}
