//! Estimation-error norms and the output quantities that are plotted (tip
//! pose, Euler angles, midpoint strain).

use serde::{Deserialize, Serialize};

use crate::discretize::{spatial_derivative, Grid, RodModel, SimulationState};
use crate::error::{Error, Result};
use crate::se3::{Rotation, TwistExt, Vec3};

/// Errors between a truth state and an estimate at one time.
///
/// `linf_state` is the energy-weighted pointwise error
/// `max_i sqrt(η̃ᵢᵀJη̃ᵢ + φ̃ᵢᵀK⁻¹φ̃ᵢ)`; convergence and steady-state figures
/// are measured on it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub t: f64,
    pub linf_pos: f64,
    pub linf_rot: f64,
    pub linf_linvel: f64,
    pub linf_angvel: f64,
    pub linf_angstrain: f64,
    pub linf_linstrain: f64,
    pub l2_state: f64,
    pub h1_state: f64,
    pub error_energy: f64,
    pub linf_rot_geodesic: f64,
    pub linf_state: f64,
}

impl ErrorRecord {
    pub const COLUMNS: [&'static str; 12] = [
        "t",
        "linf_pos",
        "linf_rot",
        "linf_linvel",
        "linf_angvel",
        "linf_angstrain",
        "linf_linstrain",
        "l2_state",
        "h1_state",
        "error_energy",
        "linf_rot_geodesic",
        "linf_state",
    ];

    pub fn values(&self) -> [f64; 12] {
        [
            self.t,
            self.linf_pos,
            self.linf_rot,
            self.linf_linvel,
            self.linf_angvel,
            self.linf_angstrain,
            self.linf_linstrain,
            self.l2_state,
            self.h1_state,
            self.error_energy,
            self.linf_rot_geodesic,
            self.linf_state,
        ]
    }

    pub fn from_values(v: &[f64; 12]) -> Self {
        ErrorRecord {
            t: v[0],
            linf_pos: v[1],
            linf_rot: v[2],
            linf_linvel: v[3],
            linf_angvel: v[4],
            linf_angstrain: v[5],
            linf_linstrain: v[6],
            l2_state: v[7],
            h1_state: v[8],
            error_energy: v[9],
            linf_rot_geodesic: v[10],
            linf_state: v[11],
        }
    }
}

fn check_pair(truth: &SimulationState, est: &SimulationState, grid: &Grid) -> Result<()> {
    let n = grid.nodes();
    if truth.nodes() != n || est.nodes() != n || truth.poses.len() != n || est.poses.len() != n {
        return Err(Error::GridMismatch(format!(
            "states have {} and {} nodes, grid has {n}",
            truth.nodes(),
            est.nodes()
        )));
    }
    if (truth.time - est.time).abs() > 1e-8 * truth.time.abs().max(1.0) {
        return Err(Error::GridMismatch(format!(
            "states are at different times ({} and {})",
            truth.time, est.time
        )));
    }
    Ok(())
}

/// Stacked error `ỹᵢ = [φ̃ᵢ; η̃ᵢ]` with `φ̃ = K(ξ̂ − ξ)`.
fn stacked(truth: &SimulationState, est: &SimulationState, model: &RodModel) -> Vec<[f64; 12]> {
    (0..truth.nodes())
        .map(|i| {
            let phi = model.stiffness(i) * (est.strain[i] - truth.strain[i]);
            let eta = est.velocity[i] - truth.velocity[i];
            let mut y = [0.0; 12];
            y[..6].copy_from_slice(phi.as_slice());
            y[6..].copy_from_slice(eta.as_slice());
            y
        })
        .collect()
}

fn sq(y: &[f64; 12]) -> f64 {
    y.iter().map(|x| x * x).sum()
}

/// Trapezoidal `(∫ |ỹ|² ds)^{1/2}`.
pub fn l2_error(truth: &SimulationState, est: &SimulationState, model: &RodModel) -> Result<f64> {
    let grid = model.grid();
    check_pair(truth, est, grid)?;
    let y = stacked(truth, est, model);
    Ok(y.iter().enumerate().map(|(i, y)| grid.weight(i) * sq(y)).sum::<f64>().sqrt())
}

/// Trapezoidal `(∫ |ỹ|² + |∂ₛỹ|² ds)^{1/2}`.
pub fn h1_error(truth: &SimulationState, est: &SimulationState, model: &RodModel) -> Result<f64> {
    let grid = model.grid();
    check_pair(truth, est, grid)?;
    let y = stacked(truth, est, model);
    let part = |offset: usize| -> Vec<crate::se3::Twist6> {
        y.iter()
            .map(|y| crate::se3::Twist6::from_column_slice(&y[offset..offset + 6]))
            .collect()
    };
    let dphi = spatial_derivative(&part(0), grid.spacing());
    let deta = spatial_derivative(&part(6), grid.spacing());
    let total: f64 = (0..grid.nodes())
        .map(|i| grid.weight(i) * (sq(&y[i]) + dphi[i].norm_squared() + deta[i].norm_squared()))
        .sum();
    Ok(total.sqrt())
}

/// `∫ η̃ᵀJη̃ + φ̃ᵀK⁻¹φ̃ ds` with `φ̃ = K(ξ̂ − ξ)`.
pub fn error_energy(truth: &SimulationState, est: &SimulationState, model: &RodModel) -> Result<f64> {
    let grid = model.grid();
    check_pair(truth, est, grid)?;
    Ok((0..grid.nodes())
        .map(|i| grid.weight(i) * energy_density(truth, est, model, i))
        .sum())
}

fn energy_density(truth: &SimulationState, est: &SimulationState, model: &RodModel, i: usize) -> f64 {
    let dxi = est.strain[i] - truth.strain[i];
    let deta = est.velocity[i] - truth.velocity[i];
    deta.dot(&(model.inertia(i) * deta)) + dxi.dot(&(model.stiffness(i) * dxi))
}

/// Geodesic angle between two rotations, rad.
pub fn rotation_angle_between(a: &Rotation, b: &Rotation) -> f64 {
    (a.transpose() * *b).angle()
}

/// All error measures of `est` against `truth`.
pub fn state_error(truth: &SimulationState, est: &SimulationState, model: &RodModel) -> Result<ErrorRecord> {
    let grid = model.grid();
    check_pair(truth, est, grid)?;
    let mut r = ErrorRecord {
        t: truth.time,
        ..Default::default()
    };
    for i in 0..grid.nodes() {
        let (pt, pe) = (&truth.poses[i], &est.poses[i]);
        r.linf_pos = r.linf_pos.max((pe.position - pt.position).norm());
        r.linf_rot = r.linf_rot.max((pe.rotation.matrix() - pt.rotation.matrix()).norm());
        r.linf_rot_geodesic = r.linf_rot_geodesic.max(rotation_angle_between(&pt.rotation, &pe.rotation));
        let dv = est.velocity[i] - truth.velocity[i];
        let dx = est.strain[i] - truth.strain[i];
        r.linf_angvel = r.linf_angvel.max(dv.angular().norm());
        r.linf_linvel = r.linf_linvel.max(dv.linear().norm());
        r.linf_angstrain = r.linf_angstrain.max(dx.angular().norm());
        r.linf_linstrain = r.linf_linstrain.max(dx.linear().norm());
        r.linf_state = r.linf_state.max(energy_density(truth, est, model, i).sqrt());
    }
    r.l2_state = l2_error(truth, est, model)?;
    r.h1_state = h1_error(truth, est, model)?;
    r.error_energy = error_energy(truth, est, model)?;
    Ok(r)
}

/// First record time after which `linf_state` stays below
/// `threshold_fraction` times its initial value. `None` if the last record
/// is still above the threshold.
pub fn convergence_time(records: &[ErrorRecord], threshold_fraction: f64) -> Option<f64> {
    let first = records.first()?;
    let threshold = threshold_fraction * first.linf_state;
    let below = |r: &ErrorRecord| r.linf_state < threshold || r.linf_state == 0.0;
    match records.iter().rposition(|r| !below(r)) {
        None => Some(first.t),
        Some(k) if k + 1 < records.len() => Some(records[k + 1].t),
        Some(_) => None,
    }
}

/// Mean of `linf_state` over records with `t ≥ from`.
pub fn steady_state_error(records: &[ErrorRecord], from: f64) -> Option<f64> {
    let tail: Vec<f64> = records.iter().filter(|r| r.t >= from).map(|r| r.linf_state).collect();
    if tail.is_empty() {
        None
    } else {
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// Intrinsic Z-Y-X angles `[yaw, pitch, roll]` with `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.
/// At gimbal lock the roll is set to zero and the remaining rotation is
/// reported as yaw.
pub fn euler_angles(r: &Rotation) -> Vec3 {
    let m = r.matrix();
    let s = (-m[(2, 0)]).clamp(-1.0, 1.0);
    if s.abs() > 1.0 - 1e-12 {
        let pitch = s.signum() * std::f64::consts::FRAC_PI_2;
        let yaw = (-m[(0, 1)]).atan2(m[(1, 1)]);
        return Vec3::new(yaw, pitch, 0.0);
    }
    Vec3::new(m[(1, 0)].atan2(m[(0, 0)]), s.asin(), m[(2, 1)].atan2(m[(2, 2)]))
}

/// Inverse of [`euler_angles`].
pub fn rotation_from_euler(angles: &Vec3) -> Rotation {
    use crate::se3::exp_so3;
    exp_so3(&Vec3::new(0.0, 0.0, angles[0]))
        * exp_so3(&Vec3::new(0.0, angles[1], 0.0))
        * exp_so3(&Vec3::new(angles[2], 0.0, 0.0))
}

/// Node index used for midpoint quantities, `⌊N/2⌋`.
pub fn midpoint_index(nodes: usize) -> usize {
    nodes / 2
}

/// Tip position and Z-Y-X angles.
pub fn tip_outputs(state: &SimulationState) -> (Vec3, Vec3) {
    let tip = state.tip_pose();
    (tip.position, euler_angles(&tip.rotation))
}

/// Angular strain `u` at the midpoint node.
pub fn midpoint_angular_strain(state: &SimulationState) -> Vec3 {
    state.strain[midpoint_index(state.nodes())].angular()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::Actuation;
    use crate::rod::{Material, RodParameters};
    use crate::se3::{exp_so3, Twist6};
    use approx::assert_relative_eq;

    fn unit_model() -> RodModel {
        RodModel::new(
            RodParameters::from_material(1.0, &Material::spring_steel_with_disks()),
            Actuation::none(),
            11,
        )
        .unwrap()
    }

    #[test]
    fn identical_states_have_zero_error() {
        let m = unit_model();
        let s = m.reference_state(0.0);
        let r = state_error(&s, &s, &m).unwrap();
        assert!(r.values()[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_node_offset() {
        let m = unit_model();
        let s = m.reference_state(0.0);
        let mut e = s.clone();
        let delta = Vec3::new(3e-3, -4e-3, 0.0);
        e.poses[4].position += delta;
        let r = state_error(&s, &e, &m).unwrap();
        assert_relative_eq!(r.linf_pos, 5e-3, epsilon = 1e-15);
        assert_eq!(r.linf_rot, 0.0);
    }

    #[test]
    fn constant_offset_h1_equals_norm() {
        let m = unit_model();
        let s = m.reference_state(0.0);
        let mut e = s.clone();
        let c = Twist6::new(0.1, -0.2, 0.3, 0.4, 0.0, -0.5);
        e.velocity.iter_mut().for_each(|v| *v += c);
        assert_relative_eq!(h1_error(&s, &e, &m).unwrap(), c.norm(), max_relative = 1e-12);
        assert_relative_eq!(l2_error(&s, &e, &m).unwrap(), c.norm(), max_relative = 1e-12);
        let expected = c.dot(&(m.inertia(0) * c));
        assert_relative_eq!(error_energy(&s, &e, &m).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn mismatched_grids_error() {
        let m = unit_model();
        let s = m.reference_state(0.0);
        let mut e = s.clone();
        e.strain.pop();
        assert!(matches!(state_error(&s, &e, &m), Err(Error::GridMismatch(_))));
    }

    fn records(values: &[(f64, f64)]) -> Vec<ErrorRecord> {
        values
            .iter()
            .map(|&(t, v)| ErrorRecord { t, linf_state: v, ..Default::default() })
            .collect()
    }

    #[test]
    fn convergence_time_cases() {
        let zero = records(&[(0.0, 0.0), (0.1, 0.0), (0.2, 0.0)]);
        assert_eq!(convergence_time(&zero, 0.05), Some(0.0));
        let decay: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64 * 0.1, 1.0 - k as f64 * 0.1)).collect();
        let r = records(&decay);
        // Below 0.75 from t = 0.3 on.
        assert_relative_eq!(convergence_time(&r, 0.75).unwrap(), 0.3, epsilon = 1e-12);
        let rebound = records(&[(0.0, 1.0), (0.1, 0.01), (0.2, 0.5)]);
        assert_eq!(convergence_time(&rebound, 0.05), None);
    }

    #[test]
    fn euler_cases() {
        assert_eq!(euler_angles(&Rotation::identity()), Vec3::zeros());
        let yaw = euler_angles(&exp_so3(&Vec3::new(0.0, 0.0, std::f64::consts::FRAC_PI_4)));
        assert_relative_eq!(yaw, Vec3::new(std::f64::consts::FRAC_PI_4, 0.0, 0.0), epsilon = 1e-15);
        let a = Vec3::new(0.3, -0.7, 1.2);
        let r = rotation_from_euler(&a);
        assert_relative_eq!(euler_angles(&r), a, epsilon = 1e-12);
        let lock = rotation_from_euler(&Vec3::new(0.4, std::f64::consts::FRAC_PI_2, 0.0));
        let back = rotation_from_euler(&euler_angles(&lock));
        assert!((back.matrix() - lock.matrix()).norm() < 1e-7);
    }

    #[test]
    fn midpoint_index_floor() {
        assert_eq!(midpoint_index(41), 20);
        assert_eq!(midpoint_index(40), 20);
    }
}
