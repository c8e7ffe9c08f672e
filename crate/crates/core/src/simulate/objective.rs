use nalgebra::{DMatrix, DVector, Matrix3, Point3, Vector3};
use rayon::prelude::*;

use super::boundary::{BoundaryCondition, Motion};
use super::kinematics::Kinematics;
use super::newton::{Evaluation, Objective, Order, SolverOptions};
use super::{ReducedState, Simulator};
use crate::elasticity::{energy_density, hessian_cofactor, pk1_cofactor, psd_project_unchecked, LameParams, Matrix9};
use crate::error::{Error, Result};
use crate::linalg::{at_b, chunked_reduce};
use crate::sampling::IntegrationSet;

/// `1e4 · max(λ + 2μ) · mean v`.
pub fn default_penalty_stiffness(integ: &IntegrationSet) -> f64 {
    1e4 * max_p_modulus(integ) * integ.total_volume() / integ.len() as f64
}

/// `1e2 · max(λ + 2μ) / ℓ²` with `ℓ` the mean point spacing `(mean v)^⅓`.
pub fn default_ground_stiffness(integ: &IntegrationSet) -> f64 {
    let spacing = (integ.total_volume() / integ.len() as f64).cbrt();
    1e2 * max_p_modulus(integ) / (spacing * spacing)
}

fn max_p_modulus(integ: &IntegrationSet) -> f64 {
    integ
        .lame_lambda
        .iter()
        .zip(&integ.lame_mu)
        .map(|(l, m)| l + 2.0 * m)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
struct PenaltySet {
    indices: Vec<usize>,
    motion: Motion,
    stiffness: f64,
}

#[derive(Debug, Clone)]
struct Ground {
    normal: Vector3<f64>,
    offset: f64,
    stiffness: f64,
}

/// State-independent parts of the incremental potential.
#[derive(Debug, Clone)]
pub(crate) struct Cache {
    lame: Vec<LameParams>,
    volumes: Vec<f64>,
    pub(crate) mass_psi: DMatrix<f64>,
    mass_vector: DVector<f64>,
    penalty_psi: DMatrix<f64>,
    penalties: Vec<PenaltySet>,
    grounds: Vec<Ground>,
    gravity: Vector3<f64>,
    pub(crate) force_scale: f64,
    psd_projection: bool,
}

impl Cache {
    pub(crate) fn build(kin: &Kinematics, integ: &IntegrationSet, bcs: &[BoundaryCondition], opts: &SolverOptions) -> Result<Self> {
        let lame = integ
            .lame_lambda
            .iter()
            .zip(&integ.lame_mu)
            .map(|(&l, &m)| LameParams::new(l, m))
            .collect::<Result<Vec<_>>>()?;
        let psi = kin.values();
        let n = psi.ncols();
        let masses: Vec<f64> = integ.weights.iter().zip(&integ.density).map(|(v, r)| v * r).collect();
        let mass_psi = weighted_gram(psi, &masses, None);
        let mass_vector = psi.transpose() * DVector::from_vec(masses);

        let mut penalties = Vec::new();
        let mut grounds = Vec::new();
        let mut gravity = Vector3::zeros();
        for bc in bcs {
            match bc {
                BoundaryCondition::Penalty { selector, motion, stiffness } => {
                    let mut indices = selector.select(kin.rest())?;
                    indices.sort_unstable();
                    indices.dedup();
                    penalties.push(PenaltySet {
                        indices,
                        motion: motion.clone(),
                        stiffness: stiffness
                            .or(opts.penalty_stiffness)
                            .unwrap_or_else(|| default_penalty_stiffness(integ)),
                    })
                }
                BoundaryCondition::GroundPlane { normal, offset, stiffness } => grounds.push(Ground {
                    normal: normal.normalize(),
                    offset: *offset,
                    stiffness: stiffness
                        .or(opts.ground_stiffness)
                        .unwrap_or_else(|| default_ground_stiffness(integ)),
                }),
                BoundaryCondition::Gravity(g) => gravity += g,
            }
        }
        let mut penalty_psi = DMatrix::zeros(n, n);
        for set in &penalties {
            let w = vec![set.stiffness; psi.nrows()];
            penalty_psi += weighted_gram(psi, &w, Some(&set.indices));
        }
        let force_scale = integ.mean_mu() * integ.total_volume() / integ.bounding_box().diagonal();
        Ok(Self {
            lame,
            volumes: integ.weights.clone(),
            mass_psi,
            mass_vector,
            penalty_psi,
            penalties,
            grounds,
            gravity,
            force_scale,
            psd_projection: opts.psd_projection,
        })
    }
}

/// `Σ_i w_i ψ_i ψ_iᵀ` over `rows` (all rows when `None`).
fn weighted_gram(psi: &DMatrix<f64>, w: &[f64], rows: Option<&[usize]>) -> DMatrix<f64> {
    let idx: Vec<usize> = match rows {
        Some(r) => r.to_vec(),
        None => (0..psi.nrows()).collect(),
    };
    let sub = DMatrix::from_fn(idx.len(), psi.ncols(), |r, c| psi[(idx[r], c)]);
    let scaled = DMatrix::from_fn(idx.len(), psi.ncols(), |r, c| psi[(idx[r], c)] * w[idx[r]]);
    at_b(&sub, &scaled)
}

fn sum_energy(fs: &[Matrix3<f64>], cache: &Cache) -> f64 {
    chunked_reduce(
        fs.len(),
        |r| r.map(|i| cache.volumes[i] * energy_density(&fs[i], &cache.lame[i])).sum::<f64>(),
        |a, b| a + b,
        0.0,
    )
}

pub(crate) fn elastic_energy(kin: &Kinematics, cache: &Cache, z: &DVector<f64>) -> f64 {
    sum_energy(&kin.deformation_gradients(z), cache)
}

/// The incremental potential of one implicit Euler step, in the public DoF
/// ordering of the kinematics. Gravity enters through displacements only,
/// so the energy is defined up to the constant `−Σ ρ_i v_i g·X_i`.
pub struct StepObjective<'a> {
    sim: &'a Simulator,
    h: f64,
    predicted: DMatrix<f64>,
    targets: Vec<Vec<Point3<f64>>>,
}

impl<'a> StepObjective<'a> {
    pub(crate) fn new(sim: &'a Simulator, state: &ReducedState, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidInput(format!("time step must be > 0, got {h}")));
        }
        let kin = sim.kinematics();
        if state.z.len() != kin.n_dofs() || state.velocity.len() != kin.n_dofs() {
            return Err(Error::ContractViolation(format!(
                "state has {} DoFs, kinematics {}",
                state.z.len(),
                kin.n_dofs()
            )));
        }
        let predicted = kin.unpack(&(&state.z + &state.velocity * h));
        let t = state.time + h;
        let targets = sim
            .cache
            .penalties
            .iter()
            .map(|p| p.indices.iter().map(|&i| p.motion.target(&kin.rest()[i], t)).collect())
            .collect();
        Ok(Self {
            sim,
            h,
            predicted,
            targets,
        })
    }
}

impl Objective for StepObjective<'_> {
    fn evaluate(&self, z: &DVector<f64>, order: Order) -> Result<Evaluation> {
        let kin = self.sim.kinematics();
        let cache = &self.sim.cache;
        let layout = kin.layout();
        let n = layout.columns();
        let u = kin.unpack(z);
        let inv_h2 = 1.0 / (self.h * self.h);

        // Inertia and gravity act on U directly.
        let diff = &u - &self.predicted;
        let diff_m = &diff * &cache.mass_psi;
        let mut energy = 0.5 * inv_h2 * diff.component_mul(&diff_m).sum();
        let um = &u * &cache.mass_vector;
        energy -= cache.gravity.dot(&Vector3::new(um[0], um[1], um[2]));
        let mut grad_u = diff_m * inv_h2;
        for a in 0..3 {
            for c in 0..n {
                grad_u[(a, c)] -= cache.gravity[a] * cache.mass_vector[c];
            }
        }

        // Point penalties and contact, through per-point forces.
        let mut ground_grams: Vec<(Vector3<f64>, DMatrix<f64>)> = Vec::new();
        if !cache.penalties.is_empty() || !cache.grounds.is_empty() {
            let disp = kin.displacements_u(&u);
            let pos = |i: usize| kin.rest()[i] + Vector3::new(disp[(i, 0)], disp[(i, 1)], disp[(i, 2)]);
            let mut forces = DMatrix::<f64>::zeros(kin.n_points(), 3);
            for (set, targets) in cache.penalties.iter().zip(&self.targets) {
                for (&i, target) in set.indices.iter().zip(targets) {
                    let r = pos(i) - target;
                    energy += 0.5 * set.stiffness * r.norm_squared();
                    for a in 0..3 {
                        forces[(i, a)] += set.stiffness * r[a];
                    }
                }
            }
            for g in &cache.grounds {
                let mut active = Vec::new();
                let mut w = vec![0.0; kin.n_points()];
                for i in 0..kin.n_points() {
                    let depth = g.offset - pos(i).coords.dot(&g.normal);
                    if depth > 0.0 {
                        let k = g.stiffness * cache.volumes[i];
                        energy += 0.5 * k * depth * depth;
                        for a in 0..3 {
                            forces[(i, a)] -= k * depth * g.normal[a];
                        }
                        active.push(i);
                        w[i] = k;
                    }
                }
                if order == Order::Hessian && !active.is_empty() {
                    ground_grams.push((g.normal, weighted_gram(kin.values(), &w, Some(&active))));
                }
            }
            grad_u += at_b(&forces, kin.values());
        }

        // Elasticity.
        let fs = kin.deformation_gradients_u(&u);
        let np = fs.len();
        energy += sum_energy(&fs, cache);
        if !energy.is_finite() {
            return Err(Error::DivergedState(format!("incremental potential is {energy}")));
        }
        if order == Order::Energy {
            return Ok(Evaluation {
                energy,
                gradient: None,
                hessian: None,
            });
        }

        let v = &cache.volumes;
        let stresses: Vec<Matrix3<f64>> = (0..np)
            .into_par_iter()
            .map(|i| pk1_cofactor(&fs[i], &cache.lame[i]) * v[i])
            .collect();
        let q = DMatrix::from_fn(3, 3 * np, |a, col| stresses[col / 3][(a, col % 3)]);
        grad_u += q * kin.gradients();

        let mut gradient = DVector::zeros(layout.n_dofs());
        for a in 0..3 {
            for c in 0..n {
                gradient[layout.dof(a, c)] = grad_u[(a, c)];
            }
        }
        if order == Order::Gradient {
            return Ok(Evaluation {
                energy,
                gradient: Some(gradient),
                hessian: None,
            });
        }

        let project = cache.psd_projection;
        let blocks: Vec<Matrix9> = (0..np)
            .into_par_iter()
            .map(|i| {
                let h = hessian_cofactor(&fs[i], &cache.lame[i]);
                let h = if project { psd_project_unchecked(&h) } else { h };
                h * v[i]
            })
            .collect();

        let grads = kin.gradients();
        let grads_t = kin.gradients_t();
        let mut hessian = DMatrix::zeros(layout.n_dofs(), layout.n_dofs());
        let shared = &cache.mass_psi * inv_h2 + &cache.penalty_psi;
        let mut scaled_t = DMatrix::zeros(n, 3 * np);
        for a in 0..3 {
            for b in a..3 {
                // Column 3i+t of `scaled_t` is Σ_s W_i[3a+s, 3b+t] A_i[s, :]ᵀ.
                for i in 0..np {
                    for t in 0..3 {
                        let w = [
                            blocks[i][(3 * a, 3 * b + t)],
                            blocks[i][(3 * a + 1, 3 * b + t)],
                            blocks[i][(3 * a + 2, 3 * b + t)],
                        ];
                        let (c0, c1, c2) = (grads_t.column(3 * i), grads_t.column(3 * i + 1), grads_t.column(3 * i + 2));
                        let mut col = scaled_t.column_mut(3 * i + t);
                        for r in 0..n {
                            col[r] = w[0] * c0[r] + w[1] * c1[r] + w[2] * c2[r];
                        }
                    }
                }
                let mut block = &scaled_t * grads;
                if a == b {
                    block += &shared;
                }
                for (normal, gram) in &ground_grams {
                    block += gram * (normal[a] * normal[b]);
                }
                for d in 0..n {
                    for c in 0..n {
                        let x = block[(c, d)];
                        hessian[(layout.dof(a, c), layout.dof(b, d))] = x;
                        hessian[(layout.dof(b, d), layout.dof(a, c))] = x;
                    }
                }
            }
        }
        Ok(Evaluation {
            energy,
            gradient: Some(gradient),
            hessian: Some(hessian),
        })
    }
}
