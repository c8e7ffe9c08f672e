use nalgebra::{DMatrix, DVector, Matrix3, Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rkpm_core::discretize::Discretization;
use rkpm_core::modes::{compute_modes, SkinningModes};
use rkpm_core::sampling::{Aabb, MaterialSpec, ShapeSource, Solid};
use rkpm_core::simulate::{
    build_kinematics, evaluate_stress_field, BoundaryCondition, Kinematics, Objective, Order, PointSelector, ReducedState,
    Simulator, SolverOptions, DEFAULT_STRESS_RANGE,
};

struct Bar {
    disc: Discretization,
    modes: SkinningModes,
}

fn bar() -> Bar {
    bar_with(MaterialSpec::homogeneous(1e5, 0.4, 1e3))
}

fn bar_with(material: MaterialSpec) -> Bar {
    let shape = ShapeSource::Solid(Solid::Box(Aabb::new(Point3::origin(), Point3::new(2.0, 0.5, 0.5))));
    let disc = Discretization::build(&shape, &material, 400, 40, 0, Some(7.0)).unwrap();
    let modes = compute_modes(&disc.table, &disc.integ, Some(7.0), 6).unwrap();
    Bar { disc, modes }
}

fn simulator(b: &Bar, bcs: Vec<BoundaryCondition>, options: SolverOptions) -> Simulator {
    let kin = build_kinematics(&b.modes, &b.disc.table, &b.disc.integ).unwrap();
    Simulator::new(kin, b.disc.integ.clone(), bcs, options).unwrap()
}

fn random_z(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

#[test]
fn rest_dofs_give_rest_configuration() {
    let b = bar();
    let kin = build_kinematics(&b.modes, &b.disc.table, &b.disc.integ).unwrap();
    let z = DVector::zeros(kin.n_dofs());
    assert_eq!(kin.positions(&z), kin.rest());
    assert!(kin.deformation_gradients(&z).iter().all(|f| *f == Matrix3::identity()));
}

#[test]
fn translation_through_constant_mode() {
    let b = bar();
    let kin = build_kinematics(&b.modes, &b.disc.table, &b.disc.integ).unwrap();
    let w0 = b.modes.constant_weight();
    let t = Vector3::new(0.3, -0.2, 1.5);
    // One unit of DoF moves points by w0.
    let z = kin.translation_dofs(&(t * w0), w0);
    for (x, x0) in kin.positions(&z).iter().zip(kin.rest()) {
        assert!((x - x0 - t * w0).norm() < 1e-10);
    }
    for f in kin.deformation_gradients(&z) {
        assert!((f - Matrix3::identity()).amax() < 1e-8);
    }
}

#[test]
fn gradient_map_matches_finite_differences_of_positions() {
    let b = bar();
    let kin = build_kinematics(&b.modes, &b.disc.table, &b.disc.integ).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = random_z(&mut rng, kin.n_dofs(), 0.05);
    let fs = kin.deformation_gradients(&z);
    // F is the spatial derivative of the deformation map; differentiate the
    // weights through the basis at shifted rest positions.
    let step = 1e-6;
    let u = kin.unpack(&z);
    let origin = kin.frame_origin();
    let map = |x: &Point3<f64>| -> Vector3<f64> {
        let w = b.modes.weights_at(&b.disc.basis, x).unwrap();
        let xb = x - origin;
        let hom = [xb.x, xb.y, xb.z, 1.0];
        let mut psi = DVector::zeros(u.ncols());
        for j in 0..w.len() {
            for q in 0..4 {
                psi[4 * j + q] = w[j] * hom[q];
            }
        }
        x.coords + &u * psi
    };
    for i in (0..kin.n_points()).step_by(37) {
        let x = kin.rest()[i];
        let mut fd = Matrix3::zeros();
        for s in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[s] += step;
            xm[s] -= step;
            fd.set_column(s, &((map(&xp) - map(&xm)) / (2.0 * step)));
        }
        let rel = (fd - fs[i]).norm() / fs[i].norm();
        assert!(rel < 1e-6, "point {i}: {rel:e}");
        // B_i and G_i agree with the positions and gradients they linearize.
        let bi = kin.position_map(i);
        assert!(((bi * &z) - (kin.positions(&z)[i] - x)).norm() < 1e-12);
        let gi = kin.gradient_map(i);
        let vecf = gi * &z;
        let expected = fs[i] - Matrix3::identity();
        for a in 0..3 {
            for s in 0..3 {
                assert!((vecf[3 * a + s] - expected[(a, s)]).abs() < 1e-12);
            }
        }
    }
}

fn scenario_bcs(b: &Bar) -> Vec<BoundaryCondition> {
    let left = Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(0.3, 2.0, 2.0));
    let right = Aabb::new(Point3::new(1.7, -1.0, -1.0), Point3::new(3.0, 2.0, 2.0));
    let _ = b;
    vec![
        BoundaryCondition::fix_region(left),
        BoundaryCondition::twist_handle(right, Point3::new(1.0, 0.25, 0.25), Vector3::x(), 1.0, 0.1),
        BoundaryCondition::Gravity(Vector3::new(0.0, 0.0, -9.81)),
        BoundaryCondition::GroundPlane {
            normal: Vector3::z(),
            offset: 0.1,
            stiffness: None,
        },
    ]
}

#[test]
fn objective_derivatives_match_finite_differences() {
    let b = bar();
    let opts = SolverOptions {
        psd_projection: false,
        ..SolverOptions::default()
    };
    let sim = simulator(&b, scenario_bcs(&b), opts);
    let n = sim.kinematics().n_dofs();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..10 {
        let state = ReducedState {
            z: random_z(&mut rng, n, 0.02),
            velocity: random_z(&mut rng, n, 0.1),
            time: 0.01 * trial as f64,
        };
        let obj = sim.objective(&state, 0.01).unwrap();
        let z = &state.z + random_z(&mut rng, n, 0.02);
        let eval = obj.evaluate(&z, Order::Hessian).unwrap();
        let g = eval.gradient();
        let h = eval.hessian();
        let step = 1e-6;
        let mut fd_g = DVector::zeros(n);
        let mut fd_h = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += step;
            zm[k] -= step;
            let ep = obj.evaluate(&zp, Order::Gradient).unwrap();
            let em = obj.evaluate(&zm, Order::Gradient).unwrap();
            fd_g[k] = (ep.energy - em.energy) / (2.0 * step);
            fd_h.set_column(k, &((ep.gradient() - em.gradient()) / (2.0 * step)));
        }
        let eg = (&fd_g - g).norm() / g.norm();
        let eh = (&fd_h - h).norm() / h.norm();
        assert!(eg < 1e-5, "gradient {eg:e}");
        assert!(eh < 1e-4, "hessian {eh:e}");
    }
}

#[test]
fn rest_is_equilibrium_without_loads() {
    let b = bar();
    let sim = simulator(&b, vec![], SolverOptions::default());
    let state = ReducedState::rest(sim.kinematics().n_dofs());
    let eval = sim.incremental_potential(&state.z, &state, 0.01).unwrap();
    assert!(eval.gradient().amax() < 1e-12 * sim.force_scale());
    let (next, report) = sim.step(&state, 0.01).unwrap();
    assert!(report.converged);
    assert!(next.z.amax() < 1e-14);
}

#[test]
fn rigid_motion_is_energy_free() {
    let b = bar();
    let sim = simulator(&b, vec![], SolverOptions::default());
    let kin: &Kinematics = sim.kinematics();
    let r = Rotation3::from_euler_angles(0.4, -1.1, 2.0).into_inner();
    let z = kin.rigid_dofs(&r, &Point3::new(1.0, 0.0, 0.0), &Vector3::new(0.5, 1.0, -2.0), b.modes.constant_weight());
    let mu = b.disc.integ.lame_mu[0];
    let e = sim.elastic_energy(&z);
    assert!(e.abs() < 1e-8 * mu * b.disc.integ.total_volume(), "{e:e}");
    let stress = evaluate_stress_field(&z, kin, &b.disc.integ, DEFAULT_STRESS_RANGE).unwrap();
    assert!(stress.inverted.is_empty());
    assert!(stress.max_abs(&(0..kin.n_points()).collect::<Vec<_>>()) < 1e-6 * mu);
}

#[test]
fn free_fall_centroid_follows_ballistic_path() {
    let b = bar();
    let g = Vector3::new(0.0, 0.0, -9.81);
    let sim = simulator(&b, vec![BoundaryCondition::Gravity(g)], SolverOptions::default());
    let (h, t) = (0.005f64, 0.5f64);
    let steps = (t / h).round() as usize;
    let traj = sim.run(h, steps).unwrap();
    let centroid = |frame: &[Point3<f64>]| {
        let integ = &b.disc.integ;
        let mut c = Vector3::zeros();
        for (i, p) in frame.iter().enumerate() {
            c += p.coords * integ.weights[i] * integ.density[i];
        }
        c / integ.total_mass()
    };
    let drop = centroid(traj.frames.last().unwrap()) - centroid(&traj.frames[0]);
    let expected = 0.5 * g.z * t * t;
    assert!(((drop.z - expected) / expected).abs() < 0.02, "{} vs {}", drop.z, expected);
    assert!(drop.x.abs() < 1e-9 && drop.y.abs() < 1e-9);
}

#[test]
fn fully_pinned_body_stays_at_rest() {
    let b = bar_with(MaterialSpec::homogeneous(5e6, 0.45, 1e3));
    let all = PointSelector::Indices((0..b.disc.integ.len()).collect());
    let bcs = vec![
        BoundaryCondition::Penalty {
            selector: all,
            motion: rkpm_core::simulate::Motion::Fixed,
            stiffness: None,
        },
        BoundaryCondition::Gravity(Vector3::new(0.0, 0.0, -9.81)),
    ];
    let sim = simulator(&b, bcs, SolverOptions::default());
    let traj = sim.run(0.01, 20).unwrap();
    let diag = b.disc.integ.bounding_box().diagonal();
    for frame in &traj.frames {
        for (x, x0) in frame.iter().zip(sim.kinematics().rest()) {
            assert!((x - x0).norm() < 1e-6 * diag);
        }
    }
}

#[test]
fn accepted_newton_steps_do_not_increase_energy() {
    let b = bar();
    let sim = simulator(&b, scenario_bcs(&b), SolverOptions::default());
    let traj = sim.run(0.01, 15).unwrap();
    for r in &traj.reports {
        for w in r.energies.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }
}

#[test]
fn velocity_update_is_exact() {
    let b = bar();
    let sim = simulator(&b, scenario_bcs(&b), SolverOptions::default());
    let state = ReducedState::rest(sim.kinematics().n_dofs());
    let (next, _) = sim.step(&state, 0.01).unwrap();
    assert_eq!(next.velocity, (&next.z - &state.z) / 0.01);
    assert!((next.time - 0.01).abs() < 1e-15);
}
