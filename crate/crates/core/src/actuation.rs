//! Tendon actuation and gravity inputs.
//!
//! Tendon `i` passes through the point `Dᵢ(s)` of each cross-section frame.
//! Its tangent is `Tᵢ = qₒ + uₒ × Dᵢ + Dᵢ'` and a (nonpositive) tension `τᵢ`
//! produces the internal wrench `[Dᵢ × Tᵢ; Tᵢ] τᵢ / ‖Tᵢ‖`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rod::RodParameters;
use crate::se3::{twist, Twist6, TwistExt, Vec3};

/// Tangents shorter than this are treated as degenerate.
const MIN_TANGENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TendonRouting {
    /// Constant offset from the centerline.
    Parallel { offset: Vec3 },
    /// `D(s) = [0, a·sin(k s), a·cos(k s)]`.
    Helical { amplitude: f64, wavenumber: f64 },
    /// Offsets sampled on a uniform grid over `[0, length]`, linearly
    /// interpolated; the derivative uses central differences.
    Sampled { length: f64, offsets: Vec<Vec3> },
    /// `D̄(s) = D(s)·(1 + a·sin(f s))`.
    Modulated {
        base: Box<TendonRouting>,
        amplitude: f64,
        frequency: f64,
    },
}

impl TendonRouting {
    /// Parallel tendon 1 of the two-tendon robot.
    pub fn paper_parallel() -> Self {
        TendonRouting::Parallel {
            offset: Vec3::new(0.0, -0.01, 0.01),
        }
    }

    /// Helical tendon 2 of the two-tendon robot: amplitude 0.15, two turns per meter.
    pub fn paper_helical() -> Self {
        TendonRouting::Helical {
            amplitude: 0.15,
            wavenumber: 4.0 * PI,
        }
    }

    pub fn offset(&self, s: f64) -> Vec3 {
        match self {
            TendonRouting::Parallel { offset } => *offset,
            TendonRouting::Helical {
                amplitude,
                wavenumber,
            } => {
                let (sn, cs) = (wavenumber * s).sin_cos();
                Vec3::new(0.0, amplitude * sn, amplitude * cs)
            }
            TendonRouting::Sampled { length, offsets } => {
                let n = offsets.len();
                if n == 1 {
                    return offsets[0];
                }
                let h = length / (n - 1) as f64;
                let x = (s / h).clamp(0.0, (n - 1) as f64);
                let i = (x.floor() as usize).min(n - 2);
                let frac = x - i as f64;
                offsets[i] * (1.0 - frac) + offsets[i + 1] * frac
            }
            TendonRouting::Modulated {
                base,
                amplitude,
                frequency,
            } => base.offset(s) * (1.0 + amplitude * (frequency * s).sin()),
        }
    }

    pub fn offset_derivative(&self, s: f64) -> Vec3 {
        match self {
            TendonRouting::Parallel { .. } => Vec3::zeros(),
            TendonRouting::Helical {
                amplitude,
                wavenumber,
            } => {
                let (sn, cs) = (wavenumber * s).sin_cos();
                Vec3::new(0.0, amplitude * wavenumber * cs, -amplitude * wavenumber * sn)
            }
            TendonRouting::Sampled { length, offsets } => {
                let n = offsets.len();
                if n < 2 {
                    return Vec3::zeros();
                }
                let h = length / (n - 1) as f64;
                let lo = (s - h).max(0.0);
                let hi = (s + h).min(*length);
                (self.offset(hi) - self.offset(lo)) / (hi - lo)
            }
            TendonRouting::Modulated {
                base,
                amplitude,
                frequency,
            } => {
                let (sn, cs) = (frequency * s).sin_cos();
                base.offset_derivative(s) * (1.0 + amplitude * sn)
                    + base.offset(s) * (amplitude * frequency * cs)
            }
        }
    }
}

/// Tendon tangent `T = qₒ + uₒ × D + D'`.
pub fn tendon_tangent(routing: &TendonRouting, s: f64, reference_strain: &Twist6) -> Result<Vec3> {
    let d = routing.offset(s);
    let t = reference_strain.linear()
        + reference_strain.angular().cross(&d)
        + routing.offset_derivative(s);
    if !(t.norm() > MIN_TANGENT) {
        return Err(Error::Degenerate(format!(
            "tendon tangent vanishes at s = {s}"
        )));
    }
    Ok(t)
}

/// Wrench generated by a unit tension: `[D × T; T] / ‖T‖`.
pub fn tendon_unit_wrench(routing: &TendonRouting, s: f64, reference_strain: &Twist6) -> Result<Twist6> {
    let t = tendon_tangent(routing, s, reference_strain)?;
    let d = routing.offset(s);
    Ok(twist(d.cross(&t), t) / t.norm())
}

/// `φ_loc(s) = Σᵢ [Dᵢ × Tᵢ; Tᵢ] τᵢ / ‖Tᵢ‖`.
pub fn tendon_wrench(
    routings: &[TendonRouting],
    tensions: &[f64],
    s: f64,
    reference_strain: &Twist6,
) -> Result<Twist6> {
    if routings.len() != tensions.len() {
        return Err(Error::Config(format!(
            "{} routings but {} tensions",
            routings.len(),
            tensions.len()
        )));
    }
    let mut total = Twist6::zeros();
    for (routing, &tau) in routings.iter().zip(tensions) {
        if !tau.is_finite() {
            return Err(Error::Config(format!("non-finite tendon tension {tau}")));
        }
        total += tendon_unit_wrench(routing, s, reference_strain)? * tau;
    }
    Ok(total)
}

/// `τ₁(t) = −[40 sin t]₊`, `τ₂(t) = [100 sin t]₋` (N). Both nonpositive.
pub fn paper_tension_schedule(t: f64) -> (f64, f64) {
    let s = t.sin();
    (-(40.0 * s).max(0.0), (100.0 * s).min(0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensionSchedule {
    /// The alternating two-tendon pull, multiplied by `scale`.
    Paper { scale: f64 },
    Constant(Vec<f64>),
}

impl TensionSchedule {
    pub fn paper() -> Self {
        TensionSchedule::Paper { scale: 1.0 }
    }

    pub fn tendon_count(&self) -> usize {
        match self {
            TensionSchedule::Paper { .. } => 2,
            TensionSchedule::Constant(v) => v.len(),
        }
    }

    pub fn tensions(&self, t: f64) -> Vec<f64> {
        match self {
            TensionSchedule::Paper { scale } => {
                let (a, b) = paper_tension_schedule(t);
                vec![a * scale, b * scale]
            }
            TensionSchedule::Constant(v) => v.clone(),
        }
    }
}

/// Tendon routings together with their tension schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Actuation {
    pub routings: Vec<TendonRouting>,
    pub schedule: TensionSchedule,
}

impl Actuation {
    pub fn none() -> Self {
        Actuation {
            routings: Vec::new(),
            schedule: TensionSchedule::Constant(Vec::new()),
        }
    }

    /// Parallel + helical tendons driven by the alternating schedule.
    pub fn paper() -> Self {
        Actuation {
            routings: vec![TendonRouting::paper_parallel(), TendonRouting::paper_helical()],
            schedule: TensionSchedule::paper(),
        }
    }

    pub fn with_schedule(mut self, schedule: TensionSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.routings.len() != self.schedule.tendon_count() {
            return Err(Error::Config(format!(
                "{} tendon routings but the schedule drives {} tendons",
                self.routings.len(),
                self.schedule.tendon_count()
            )));
        }
        if let TensionSchedule::Constant(v) = &self.schedule {
            if let Some(bad) = v.iter().find(|&&x| !(x <= 0.0)) {
                return Err(Error::Config(format!("tendon tension {bad} must be nonpositive")));
            }
        }
        Ok(())
    }
}

/// Weight per unit length in the global frame: `[0; ρA(s) g]`.
pub fn gravity_field(params: &RodParameters, s: f64) -> Twist6 {
    twist(Vec3::zeros(), params.gravity * params.linear_density_at(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rod::{straight_reference_strain, Material};
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn parallel_tangent_is_axial() {
        let t = tendon_tangent(&TendonRouting::paper_parallel(), 0.2, &straight_reference_strain()).unwrap();
        assert_eq!(t, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn helical_tangent_at_base() {
        let t = tendon_tangent(&TendonRouting::paper_helical(), 0.0, &straight_reference_strain()).unwrap();
        assert_relative_eq!(t, Vec3::new(1.0, 0.6 * PI, 0.0), epsilon = 1e-14);
    }

    #[test]
    fn constant_offset_without_curvature_follows_reference_stretch() {
        let xi_o = Twist6::new(0.0, 0.0, 0.0, 1.2, 0.1, 0.0);
        let r = TendonRouting::Parallel { offset: Vec3::new(0.0, 0.02, -0.01) };
        for s in [0.0, 0.1, 0.45] {
            assert_eq!(tendon_tangent(&r, s, &xi_o).unwrap(), xi_o.linear());
        }
    }

    #[test]
    fn degenerate_tangent() {
        let r = TendonRouting::Parallel { offset: Vec3::zeros() };
        assert!(matches!(
            tendon_tangent(&r, 0.0, &Twist6::zeros()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn single_parallel_tendon_wrench() {
        let w = tendon_wrench(
            &[TendonRouting::paper_parallel()],
            &[-40.0],
            0.3,
            &straight_reference_strain(),
        )
        .unwrap();
        assert_relative_eq!(w.linear(), Vec3::new(-40.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(w.angular(), Vec3::new(0.0, -0.4, -0.4), epsilon = 1e-12);
    }

    #[test]
    fn tendon_wrench_zero_and_linear() {
        let routings = [TendonRouting::paper_parallel(), TendonRouting::paper_helical()];
        let xi_o = straight_reference_strain();
        assert_eq!(tendon_wrench(&routings, &[0.0, 0.0], 0.17, &xi_o).unwrap(), Twist6::zeros());
        let a = tendon_wrench(&routings, &[-3.0, -7.0], 0.17, &xi_o).unwrap();
        let b = tendon_wrench(&routings, &[-6.0, -14.0], 0.17, &xi_o).unwrap();
        assert_relative_eq!(b, a * 2.0, epsilon = 1e-13);
        assert!(tendon_wrench(&routings, &[-1.0], 0.0, &xi_o).is_err());
    }

    #[test]
    fn paper_schedule_values() {
        let (a, b) = paper_tension_schedule(FRAC_PI_2);
        assert_relative_eq!(a, -40.0, epsilon = 1e-12);
        assert_eq!(b, 0.0);
        let (a, b) = paper_tension_schedule(3.0 * FRAC_PI_2);
        assert_eq!(a, 0.0);
        assert_relative_eq!(b, -100.0, epsilon = 1e-12);
        let (a, b) = paper_tension_schedule(0.0);
        assert_eq!((a.abs(), b.abs()), (0.0, 0.0));
    }

    #[test]
    fn gravity_field_of_steel_rod() {
        let params = RodParameters::from_material(0.5, &Material::spring_steel_with_disks())
            .with_gravity(Vec3::new(0.0, 0.0, -9.81));
        let g = gravity_field(&params, 0.25);
        let expected = -1.6e4 * PI * 1e-6 * 9.81;
        assert_relative_eq!(g[5], expected, max_relative = 1e-12);
        assert!((g[5] + 0.4931).abs() < 1e-4);
        assert_eq!(g.angular(), Vec3::zeros());
        let flat = RodParameters::from_material(0.5, &Material::spring_steel_with_disks());
        assert_eq!(gravity_field(&flat, 0.1), Twist6::zeros());
    }

    #[test]
    fn sampled_routing_reproduces_helix() {
        let helix = TendonRouting::paper_helical();
        let n = 401;
        let offsets = (0..n).map(|i| helix.offset(0.5 * i as f64 / (n - 1) as f64)).collect();
        let sampled = TendonRouting::Sampled { length: 0.5, offsets };
        let s = 0.2137;
        assert!((sampled.offset(s) - helix.offset(s)).norm() < 1e-4);
        assert!((sampled.offset_derivative(s) - helix.offset_derivative(s)).norm() < 1e-2);
    }
}
