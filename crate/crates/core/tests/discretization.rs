mod common;

use cosserat_observer::actuation::Actuation;
use cosserat_observer::discretize::*;
use cosserat_observer::se3::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn random_state(model: &RodModel, rng: &mut ChaCha8Rng, strain_amp: f64, vel_amp: f64) -> SimulationState {
    let n = model.grid().nodes();
    let strain = (0..n)
        .map(|i| model.reference_strain(i) + Twist6::from_fn(|_, _| rng.random_range(-strain_amp..strain_amp)))
        .collect();
    let mut velocity: Vec<Twist6> = (0..n)
        .map(|_| Twist6::from_fn(|_, _| rng.random_range(-vel_amp..vel_amp)))
        .collect();
    velocity[0] = Twist6::zeros();
    SimulationState::new(0.3, strain, velocity, model.grid(), &model.params().base_pose).unwrap()
}

/// Dense first-derivative matrix: central inside, first-order one-sided at
/// both ends.
fn sbp_matrix(n: usize, h: f64) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n, n);
    d[(0, 0)] = -1.0 / h;
    d[(0, 1)] = 1.0 / h;
    for i in 1..n - 1 {
        d[(i, i - 1)] = -0.5 / h;
        d[(i, i + 1)] = 0.5 / h;
    }
    d[(n - 1, n - 2)] = -1.0 / h;
    d[(n - 1, n - 1)] = 1.0 / h;
    d
}

fn apply_blockwise(d: &DMatrix<f64>, field: &[Twist6]) -> Vec<Twist6> {
    let n = field.len();
    let mut stacked = DMatrix::zeros(n, 6);
    for (i, f) in field.iter().enumerate() {
        stacked.set_row(i, &f.transpose());
    }
    let out = d * stacked;
    (0..n).map(|i| out.row(i).transpose().fixed_rows::<6>(0).into()).collect()
}

#[test]
fn sbp_matrix_is_summation_by_parts() {
    let grid = Grid::new(9, 0.5).unwrap();
    let d = sbp_matrix(9, grid.spacing());
    let h = DMatrix::from_diagonal(&DVector::from_fn(9, |i, _| grid.weight(i)));
    let q = &h * &d + d.transpose() * &h;
    let mut b = DMatrix::zeros(9, 9);
    b[(0, 0)] = -1.0;
    b[(8, 8)] = 1.0;
    assert!((q - b).amax() < 1e-12);
    let field: Vec<Twist6> = (0..9).map(|i| Twist6::repeat((i as f64 * 0.7).sin())).collect();
    let mut out = vec![Twist6::zeros(); 9];
    sbp_derivative_into(&field, grid.spacing(), &mut out);
    for (a, b) in out.iter().zip(apply_blockwise(&d, &field)) {
        assert!((a - b).amax() < 1e-12);
    }
}

/// The right-hand side against a dense re-derivation of the semi-discrete
/// equations, including tendons, gravity, a global tip load and a damped tip
/// closure.
#[test]
fn rhs_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let params = steel()
        .with_gravity(Vec3::new(0.0, 0.0, -9.81))
        .with_tip_load_global(Twist6::new(0.0, 0.0, 0.0, 0.2, 0.0, -1.0));
    let model = RodModel::new(params, Actuation::paper(), 9).unwrap();
    let state = random_state(&model, &mut rng, 0.5, 0.05);
    let gamma = Mat6::from_diagonal(&Twist6::new(0.01, 0.02, 0.03, 0.5, 0.4, 0.3));
    let reference = Twist6::new(0.1, -0.2, 0.05, 0.01, 0.0, -0.02);
    let extra = Twist6::new(0.0, 1e-3, 0.0, 0.0, 0.0, 0.05);
    let cond = TipCondition {
        extra_wrench: extra,
        damping: Some(TipDamping {
            gain: gamma,
            reference_velocity: reference,
        }),
        rotation: None,
    };
    let source = |_t: f64| Ok(cond.clone());
    let icfg = IntegratorConfig::from_cfl(&model, 0.5, 1.0).unwrap();
    let mut sim = Simulator::new(model.clone(), icfg).unwrap();
    let (ds, dv) = sim.rhs(&state, &source).unwrap();

    let n = 9;
    let h = model.grid().spacing();
    let d = sbp_matrix(n, h);
    let t = state.time;
    let act = model.actuation_wrench(t);
    let poses = reconstruct_poses(&state.strain, &model.params().base_pose, h);
    let phi: Vec<Twist6> = (0..n)
        .map(|i| model.stiffness(i) * (state.strain[i] - model.reference_strain(i)) + act[i])
        .collect();
    let deta = apply_blockwise(&d, &state.velocity);
    let dphi = apply_blockwise(&d, &phi);
    let mut ds_ref: Vec<Twist6> = (0..n).map(|i| deta[i] + adjoint(&state.strain[i]) * state.velocity[i]).collect();
    let mut dv_ref: Vec<Twist6> = (0..n)
        .map(|i| {
            let s = model.grid().s(i);
            let g = cosserat_observer::actuation::gravity_field(model.params(), s);
            let psi = t_transform(&poses[i].rotation).transpose() * g;
            let j = model.inertia(i);
            let f = dphi[i] - adjoint(&state.strain[i]).transpose() * phi[i]
                + adjoint(&state.velocity[i]).transpose() * (j * state.velocity[i])
                + psi;
            j.try_inverse().unwrap() * f
        })
        .collect();
    dv_ref[0] = Twist6::zeros();

    // Tip closure: shared outgoing invariant, damped incoming one.
    let z = model.tip_impedance();
    let r_tip = t_transform(&poses[n - 1].rotation);
    let w = r_tip.transpose() * model.params().tip_load_global + extra;
    let a = phi[n - 1] - z * state.velocity[n - 1];
    let eta_star = (z + gamma).try_inverse().unwrap() * (w + gamma * reference - a);
    let phi_star = a + z * eta_star;
    let wn = model.grid().weight(n - 1);
    dv_ref[n - 1] -= model.inertia(n - 1).try_inverse().unwrap() * (phi[n - 1] - phi_star) / wn;
    ds_ref[n - 1] -= (state.velocity[n - 1] - eta_star) / wn;

    for i in 0..n {
        let scale_s = ds_ref[i].amax().max(1.0);
        let scale_v = dv_ref[i].amax().max(1.0);
        assert!((ds[i] - ds_ref[i]).amax() <= 1e-10 * scale_s, "strain rate at node {i}");
        assert!((dv[i] - dv_ref[i]).amax() <= 1e-10 * scale_v, "velocity rate at node {i}");
    }
    assert!((sim.tip_velocity(&state, &source).unwrap() - eta_star).amax() < 1e-12);
}

fn assert_ratios(errors: &[f64], target: f64, tol: f64) {
    for r in ratios(errors) {
        assert!((r - target).abs() <= tol, "ratio {r}, errors {errors:?}");
    }
}

#[test]
fn spatial_derivative_is_second_order() {
    assert_ratios(&derivative_errors(), 4.0, 0.5);
}

#[test]
fn pose_reconstruction_is_second_order() {
    assert_ratios(&pose_errors(), 4.0, 0.5);
}

#[test]
fn constant_curvature_matches_circular_arc() {
    assert!(arc_error() <= 1e-8);
}

#[test]
fn rk4_is_fourth_order_in_time() {
    assert_ratios(&rk4_errors(), 16.0, 4.0);
}

#[test]
fn reference_state_is_a_fixed_point() {
    assert!(fixed_point_drift(100) <= 1e-12);
}
