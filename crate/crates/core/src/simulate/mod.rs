//! Implicit time stepping of the skinning model.
//!
//! Both the reduced model and the full-order RKPM field are affine in their
//! DoFs (see [`Kinematics`]), so one incremental potential and one Newton
//! solver serve both.

mod boundary;
mod kinematics;
mod newton;
mod objective;
mod stress;

pub use boundary::{BoundaryCondition, Motion, PointSelector};
pub use kinematics::{DofLayout, Kinematics};
pub use newton::{newton_solve, Evaluation, NewtonReport, Objective, Order, SolverOptions};
pub use objective::{default_ground_stiffness, default_penalty_stiffness, StepObjective};
pub use stress::{evaluate_stress_field, StressField, DEFAULT_STRESS_RANGE};

use nalgebra::{DMatrix, DVector, Matrix3, Point3};

use crate::basis::BasisTable;
use crate::error::{Error, Result};
use crate::modes::SkinningModes;
use crate::sampling::IntegrationSet;

/// Builds the reduced kinematics of `modes` at the points of `integ`.
pub fn build_kinematics(modes: &SkinningModes, table: &BasisTable, integ: &IntegrationSet) -> Result<Kinematics> {
    Kinematics::skinning(modes, table, integ)
}

/// DoFs, their velocity and the current time.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub z: DVector<f64>,
    pub velocity: DVector<f64>,
    pub time: f64,
}

impl ReducedState {
    pub fn rest(n_dofs: usize) -> Self {
        Self {
            z: DVector::zeros(n_dofs),
            velocity: DVector::zeros(n_dofs),
            time: 0.0,
        }
    }
}

/// A scene ready to be stepped: kinematics, per-point material and loads,
/// plus everything about the incremental potential that does not depend on
/// the state.
#[derive(Debug, Clone)]
pub struct Simulator {
    kin: Kinematics,
    integ: IntegrationSet,
    bcs: Vec<BoundaryCondition>,
    options: SolverOptions,
    pub(crate) cache: objective::Cache,
}

impl Simulator {
    pub fn new(kin: Kinematics, integ: IntegrationSet, bcs: Vec<BoundaryCondition>, options: SolverOptions) -> Result<Self> {
        if kin.n_points() != integ.len() {
            return Err(Error::ContractViolation(format!(
                "kinematics over {} points, integration set of {}",
                kin.n_points(),
                integ.len()
            )));
        }
        options.validate()?;
        for bc in &bcs {
            bc.validate()?;
        }
        let cache = objective::Cache::build(&kin, &integ, &bcs, &options)?;
        Ok(Self {
            kin,
            integ,
            bcs,
            options,
            cache,
        })
    }

    pub fn kinematics(&self) -> &Kinematics {
        &self.kin
    }

    pub fn integration(&self) -> &IntegrationSet {
        &self.integ
    }

    pub fn boundary_conditions(&self) -> &[BoundaryCondition] {
        &self.bcs
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Absolute gradient tolerance: `tolerance · μ̄ · V / diag`.
    pub fn gradient_tolerance(&self) -> f64 {
        self.options.tolerance * self.cache.force_scale
    }

    /// Force scale `μ̄ · V / diag` used to normalize gradients.
    pub fn force_scale(&self) -> f64 {
        self.cache.force_scale
    }

    /// The incremental potential for stepping `state` by `h`.
    pub fn objective<'a>(&'a self, state: &'a ReducedState, h: f64) -> Result<StepObjective<'a>> {
        StepObjective::new(self, state, h)
    }

    /// Energy, gradient and Hessian of the incremental potential at `z`.
    pub fn incremental_potential(&self, z: &DVector<f64>, state: &ReducedState, h: f64) -> Result<Evaluation> {
        self.objective(state, h)?.evaluate(z, Order::Hessian)
    }

    /// One implicit Euler step.
    pub fn step(&self, state: &ReducedState, h: f64) -> Result<(ReducedState, NewtonReport)> {
        let obj = self.objective(state, h)?;
        let z0 = &state.z + &state.velocity * h;
        let report = newton_solve(&z0, &obj, &self.options.newton(self.gradient_tolerance()))?;
        if report.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedState(format!("non-finite DoFs at t = {}", state.time + h)));
        }
        let velocity = (&report.z - &state.z) / h;
        let next = ReducedState {
            z: report.z.clone(),
            velocity,
            time: state.time + h,
        };
        Ok((next, report))
    }

    pub fn positions(&self, state: &ReducedState) -> Vec<Point3<f64>> {
        self.kin.positions(&state.z)
    }

    pub fn deformation_gradients(&self, state: &ReducedState) -> Vec<Matrix3<f64>> {
        self.kin.deformation_gradients(&state.z)
    }

    /// Total elastic energy `Σ v_i Ψ(F_i)` at `z`.
    pub fn elastic_energy(&self, z: &DVector<f64>) -> f64 {
        objective::elastic_energy(&self.kin, &self.cache, z)
    }

    /// Runs `steps` steps from rest and returns every frame's positions,
    /// starting with the rest frame.
    pub fn run(&self, h: f64, steps: usize) -> Result<Trajectory> {
        let mut state = ReducedState::rest(self.kin.n_dofs());
        let mut frames = vec![self.positions(&state)];
        let mut reports = Vec::with_capacity(steps);
        let mut states = vec![state.clone()];
        for _ in 0..steps {
            let (next, report) = self.step(&state, h)?;
            state = next;
            frames.push(self.positions(&state));
            states.push(state.clone());
            reports.push(report);
        }
        Ok(Trajectory { frames, states, reports })
    }

    /// `M_ψ = Σ ρ_i v_i ψ_i ψ_iᵀ`, the mass matrix of one coordinate of `U`.
    pub fn mass_matrix_u(&self) -> &DMatrix<f64> {
        &self.cache.mass_psi
    }
}

/// Output of [`Simulator::run`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frames: Vec<Vec<Point3<f64>>>,
    pub states: Vec<ReducedState>,
    pub reports: Vec<NewtonReport>,
}
