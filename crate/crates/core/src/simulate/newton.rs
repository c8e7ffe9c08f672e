use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::solve_spd_with_ridge;

/// How many derivatives an [`Objective`] should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Energy,
    Gradient,
    Hessian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energy: f64,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

impl Evaluation {
    pub fn gradient(&self) -> &DVector<f64> {
        self.gradient.as_ref().expect("evaluated without gradient")
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        self.hessian.as_ref().expect("evaluated without Hessian")
    }
}

/// A smooth scalar function of a DoF vector.
pub trait Objective {
    fn evaluate(&self, z: &DVector<f64>, order: Order) -> Result<Evaluation>;
}

/// Newton and line-search controls.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative tolerance on `‖g‖∞`; scaled by `μ̄ · V / diag` in a scene.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub armijo: f64,
    pub curvature: f64,
    /// Clamp negative eigenvalues of every per-point elastic Hessian.
    pub psd_projection: bool,
    /// Penalty stiffness for point constraints without their own value.
    pub penalty_stiffness: Option<f64>,
    pub ground_stiffness: Option<f64>,
    /// Absolute gradient tolerance. Filled in by the scene.
    pub absolute_tolerance: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 20,
            max_halvings: 30,
            armijo: 1e-4,
            curvature: 0.9,
            psd_projection: true,
            penalty_stiffness: None,
            ground_stiffness: None,
            absolute_tolerance: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidInput(format!("solver tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        if !(0.0 < self.armijo && self.armijo < self.curvature && self.curvature < 1.0) {
            return Err(Error::InvalidInput(format!(
                "Wolfe constants need 0 < c1 < c2 < 1 (c1 = {}, c2 = {})",
                self.armijo, self.curvature
            )));
        }
        for k in [self.penalty_stiffness, self.ground_stiffness].into_iter().flatten() {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::InvalidInput(format!("penalty stiffness must be > 0, got {k}")));
            }
        }
        Ok(())
    }

    pub(crate) fn newton(&self, absolute_tolerance: f64) -> Self {
        Self {
            absolute_tolerance: Some(absolute_tolerance),
            ..self.clone()
        }
    }
}

/// Result of a Newton solve. `energies[0]` is the objective at the initial
/// guess, followed by one entry per accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    pub z: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub gradient_norm: f64,
    pub energies: Vec<f64>,
    pub ridge_retries: usize,
}

/// Minimizes `obj` from `z0` with Newton steps and a Wolfe line search.
///
/// Stops once `‖g‖∞` drops below the absolute tolerance (or `tolerance`
/// when none is set), or after `max_iterations` steps. A line search that
/// finds no acceptable step within `max_halvings` halvings stops the solve
/// with `stalled` set and returns the best iterate so far.
pub fn newton_solve(z0: &DVector<f64>, obj: &dyn Objective, opts: &SolverOptions) -> Result<NewtonReport> {
    let tol = opts.absolute_tolerance.unwrap_or(opts.tolerance);
    let mut z = z0.clone();
    let mut eval = obj.evaluate(&z, Order::Hessian)?;
    if !eval.energy.is_finite() {
        return Err(Error::DivergedState(format!("objective is {} at the initial guess", eval.energy)));
    }
    let mut report = NewtonReport {
        z: z.clone(),
        iterations: 0,
        converged: false,
        stalled: false,
        gradient_norm: eval.gradient().amax(),
        energies: vec![eval.energy],
        ridge_retries: 0,
    };
    for _ in 0..opts.max_iterations {
        let g = eval.gradient().clone();
        if g.amax() < tol {
            report.converged = true;
            break;
        }
        let (mut dir, ridged) = match solve_spd_with_ridge(eval.hessian(), &(-&g)) {
            Some(s) => s,
            None => (-&g, true),
        };
        if ridged {
            report.ridge_retries += 1;
        }
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            dir = -&g;
            slope = -g.norm_squared();
        }
        match line_search(obj, &z, &dir, eval.energy, slope, opts)? {
            Some(alpha) => {
                z += &dir * alpha;
                eval = obj.evaluate(&z, Order::Hessian)?;
                report.iterations += 1;
                report.energies.push(eval.energy);
            }
            None => {
                report.stalled = true;
                break;
            }
        }
    }
    report.gradient_norm = eval.gradient().amax();
    report.converged = report.gradient_norm < tol;
    report.z = z;
    Ok(report)
}

/// Backtracking from the full step. Returns the accepted step length.
fn line_search(
    obj: &dyn Objective,
    z: &DVector<f64>,
    dir: &DVector<f64>,
    f0: f64,
    slope: f64,
    opts: &SolverOptions,
) -> Result<Option<f64>> {
    let mut alpha = 1.0;
    for _ in 0..=opts.max_halvings {
        let trial = obj.evaluate(&(z + dir * alpha), Order::Gradient)?;
        let sufficient = trial.energy.is_finite() && trial.energy <= f0 + opts.armijo * alpha * slope;
        if sufficient {
            let curv = trial.gradient().dot(dir);
            // The curvature condition can only fail on the full step, since
            // any shorter step was reached by backtracking from a longer one.
            if curv < opts.curvature * slope && alpha >= 1.0 {
                return Ok(Some(expand(obj, z, dir, f0, slope, alpha, opts)?.unwrap_or(alpha)));
            }
            return Ok(Some(alpha));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

fn expand(obj: &dyn Objective, z: &DVector<f64>, dir: &DVector<f64>, f0: f64, slope: f64, start: f64, opts: &SolverOptions) -> Result<Option<f64>> {
    let mut best = None;
    let mut alpha = start;
    for _ in 0..8 {
        alpha *= 2.0;
        let trial = obj.evaluate(&(z + dir * alpha), Order::Gradient)?;
        if !(trial.energy.is_finite() && trial.energy <= f0 + opts.armijo * alpha * slope) {
            break;
        }
        best = Some(alpha);
        if trial.gradient().dot(dir) >= opts.curvature * slope {
            break;
        }
    }
    Ok(best)
}
