//! Measurements shared by the discretization suite and the acceptance run.
#![allow(dead_code)]

use cosserat_observer::actuation::Actuation;
use cosserat_observer::discretize::*;
use cosserat_observer::rod::{Material, RodParameters};
use cosserat_observer::se3::*;

pub fn steel() -> RodParameters {
    RodParameters::from_material(0.5, &Material::spring_steel_with_disks())
}

/// Steel rod with the shear and axial stiffness lowered and the rotary
/// inertia raised, as in the soft preset.
pub fn soft() -> RodParameters {
    let mut p = steel();
    for k in 0..3 {
        p.sections.base.inertia[(k, k)] *= 1e4;
        p.sections.base.stiffness[(k + 3, k + 3)] *= 0.05;
    }
    p
}

pub fn max_error(a: &[Twist6], b: impl Fn(usize) -> Twist6) -> f64 {
    a.iter().enumerate().map(|(i, x)| (x - b(i)).amax()).fold(0.0, f64::max)
}

/// Successive error ratios of a sequence measured under halving.
pub fn ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}

/// Max error of the derivative of a smooth field at N = 21, 41, 81, 161.
pub fn derivative_errors() -> Vec<f64> {
    let f = |s: f64| Twist6::new((3.0 * s).sin(), s.cos(), s * s * s, (2.0 * s).exp(), 0.0, 1.0 / (1.0 + s));
    let df = |s: f64| {
        Twist6::new(
            3.0 * (3.0 * s).cos(),
            -s.sin(),
            3.0 * s * s,
            2.0 * (2.0 * s).exp(),
            0.0,
            -1.0 / ((1.0 + s) * (1.0 + s)),
        )
    };
    [21, 41, 81, 161]
        .iter()
        .map(|&n| {
            let g = Grid::new(n, 1.0).unwrap();
            let field: Vec<Twist6> = (0..n).map(|i| f(g.s(i))).collect();
            max_error(&spatial_derivative(&field, g.spacing()), |i| df(g.s(i)))
        })
        .collect()
}

fn smooth_strain(s: f64) -> Twist6 {
    Twist6::new(0.5 * s.sin(), 2.0 + (3.0 * s).cos(), 1.5 * s, 1.0 + 0.1 * s, 0.05 * (2.0 * s).sin(), 0.0)
}

/// Max pose error at N = 33 … 257 against a reconstruction at N = 8193.
pub fn pose_errors() -> Vec<f64> {
    let reference_nodes = 8193;
    let fine = Grid::new(reference_nodes, 0.5).unwrap();
    let fine_strain: Vec<Twist6> = (0..reference_nodes).map(|i| smooth_strain(fine.s(i))).collect();
    let fine_poses = reconstruct_poses(&fine_strain, &Pose::identity(), fine.spacing());
    [33, 65, 129, 257]
        .iter()
        .map(|&n| {
            let g = Grid::new(n, 0.5).unwrap();
            let stride = (reference_nodes - 1) / (n - 1);
            let strain: Vec<Twist6> = (0..n).map(|i| smooth_strain(g.s(i))).collect();
            let poses = reconstruct_poses(&strain, &Pose::identity(), g.spacing());
            poses
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let q = &fine_poses[i * stride];
                    (p.position - q.position).norm().max((p.rotation.matrix() - q.rotation.matrix()).norm())
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Largest position or rotation deviation from the analytic arc of a
/// constant-curvature rod at N = 201.
pub fn arc_error() -> f64 {
    let kappa = 4.0;
    let grid = Grid::new(201, 0.5).unwrap();
    let strain = vec![Twist6::new(0.0, 0.0, kappa, 1.0, 0.0, 0.0); 201];
    let poses = reconstruct_poses(&strain, &Pose::identity(), grid.spacing());
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let s = grid.s(i);
            let expected = Vec3::new((kappa * s).sin() / kappa, (1.0 - (kappa * s).cos()) / kappa, 0.0);
            let rot = exp_so3(&Vec3::new(0.0, 0.0, kappa * s));
            (p.position - expected).norm().max((p.rotation.matrix() - rot.matrix()).amax())
        })
        .fold(0.0, f64::max)
}

/// Free vibration from a smooth, boundary-compatible velocity field whose
/// tip moves at `amplitude` m/s.
pub fn vibration_state(model: &RodModel, amplitude: f64) -> SimulationState {
    let grid = model.grid();
    let l = grid.length();
    let n = grid.nodes();
    let strain = (0..n).map(|i| model.reference_strain(i)).collect();
    let velocity = (0..n)
        .map(|i| {
            let x = std::f64::consts::PI * grid.s(i) / l;
            let f = 0.5 * amplitude * (1.0 - x.cos());
            let df = 0.5 * amplitude * std::f64::consts::PI / l * x.sin();
            Twist6::new(0.0, -df, 0.0, 0.0, 0.0, f)
        })
        .collect();
    SimulationState::new(0.0, strain, velocity, grid, &model.params().base_pose).unwrap()
}

fn integrate(model: &RodModel, dt: f64, steps: usize) -> SimulationState {
    let icfg = IntegratorConfig {
        dt,
        cfl_safety: 0.5,
        end_time: dt * steps as f64,
        reorthonormalize_every: 0,
    };
    let mut sim = Simulator::new(model.clone(), icfg).unwrap();
    let mut state = vibration_state(model, 0.1);
    for _ in 0..steps {
        sim.step(&mut state, &FreeTip).unwrap();
    }
    state
}

/// Free-vibration error after a fixed horizon at dt, dt/2 and dt/4 against
/// dt/64.
pub fn rk4_errors() -> Vec<f64> {
    let model = RodModel::new(soft(), Actuation::none(), 11).unwrap();
    let dt0 = stable_dt(model.params(), model.grid().spacing(), 0.5).unwrap();
    let steps0 = 16;
    let reference = integrate(&model, dt0 / 64.0, steps0 * 64);
    [1, 2, 4]
        .iter()
        .map(|&k| {
            let s = integrate(&model, dt0 / k as f64, steps0 * k);
            max_error(&s.velocity, |i| reference.velocity[i]).max(max_error(&s.strain, |i| reference.strain[i]))
        })
        .collect()
}

/// Largest per-step drift of the unloaded steel reference state over
/// `steps` steps.
pub fn fixed_point_drift(steps: usize) -> f64 {
    let model = RodModel::new(steel(), Actuation::none(), 41).unwrap();
    let icfg = IntegratorConfig::from_cfl(&model, 0.5, 1.0).unwrap();
    let mut sim = Simulator::new(model.clone(), icfg).unwrap();
    let mut state = model.reference_state(0.0);
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let before = state.clone();
        sim.step(&mut state, &FreeTip).unwrap();
        worst = worst
            .max(max_error(&state.strain, |i| before.strain[i]))
            .max(max_error(&state.velocity, |i| before.velocity[i]));
    }
    worst
}
