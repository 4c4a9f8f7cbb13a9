//! Per-cross-section physics of a Cosserat rod: the linear (optionally
//! viscous) constitutive law, input wrench assembly and the strain/velocity
//! evolution equations.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::se3::{
    ad_mul, ad_transpose_mul, t_transform_transpose_mul, twist, Mat6, Pose, Rotation, Twist6,
    Vec3,
};

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Straight, unstretched reference strain: no curvature, unit stretch along local x.
pub fn straight_reference_strain() -> Twist6 {
    Twist6::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// Isotropic circular cross-section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub radius: f64,
    pub density: f64,
    pub youngs_modulus: f64,
    pub shear_modulus: f64,
}

impl Material {
    /// Spring-steel backbone with the disk mass lumped into the density.
    pub fn spring_steel_with_disks() -> Self {
        Material {
            radius: 1e-3,
            density: 1.6e4,
            youngs_modulus: 207e9,
            shear_modulus: 79.6e9,
        }
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius.powi(2)
    }

    /// Second moment of area about a diameter, `πr⁴/4`.
    pub fn area_moment(&self) -> f64 {
        std::f64::consts::PI * self.radius.powi(4) / 4.0
    }

    pub fn linear_density(&self) -> f64 {
        self.density * self.area()
    }

    /// `J = diag(J₁, J₂)`, `J₁ = diag(2,1,1)ρπr⁴/4`, `J₂ = ρπr² I` (x longitudinal).
    pub fn inertia(&self) -> Mat6 {
        let rot = self.density * self.area_moment();
        let lin = self.linear_density();
        Mat6::from_diagonal(&Twist6::new(2.0 * rot, rot, rot, lin, lin, lin))
    }

    /// `K = diag(K₁, K₂)`, `K₁ = diag(2G,E,E)πr⁴/4`, `K₂ = diag(E,G,G)πr²`.
    pub fn stiffness(&self) -> Mat6 {
        let i = self.area_moment();
        let a = self.area();
        let (e, g) = (self.youngs_modulus, self.shear_modulus);
        Mat6::from_diagonal(&Twist6::new(2.0 * g * i, e * i, e * i, e * a, g * a, g * a))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionProperties {
    pub inertia: Mat6,
    pub stiffness: Mat6,
    pub damping: Option<Mat6>,
    pub reference_strain: Twist6,
}

impl SectionProperties {
    pub fn from_material(material: &Material) -> Self {
        SectionProperties {
            inertia: material.inertia(),
            stiffness: material.stiffness(),
            damping: None,
            reference_strain: straight_reference_strain(),
        }
    }

    pub fn with_damping(mut self, damping: Mat6) -> Self {
        self.damping = Some(damping);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_spd(&self.inertia, "inertia J")?;
        check_spd(&self.stiffness, "stiffness K")?;
        if let Some(d) = &self.damping {
            check_symmetric(d, "damping D")?;
            let eig = d.symmetric_eigenvalues();
            if eig.min() < -1e-12 * eig.amax().max(1.0) {
                return Err(Error::Config(format!(
                    "damping D must be positive semidefinite (min eigenvalue {:.3e})",
                    eig.min()
                )));
            }
        }
        if !self.reference_strain.iter().all(|x| x.is_finite()) {
            return Err(Error::Config("reference strain must be finite".into()));
        }
        Ok(())
    }

    pub fn inertia_inverse(&self) -> Result<Mat6> {
        spd_inverse(&self.inertia, "inertia J")
    }

    pub fn compliance(&self) -> Result<Mat6> {
        spd_inverse(&self.stiffness, "stiffness K")
    }
}

fn check_symmetric(m: &Mat6, what: &str) -> Result<()> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(f64::MIN_POSITIVE) {
        return Err(Error::Config(format!("{what} is not symmetric")));
    }
    Ok(())
}

fn check_spd(m: &Mat6, what: &str) -> Result<()> {
    check_symmetric(m, what)?;
    if Cholesky::new(*m).is_none() {
        return Err(Error::Config(format!("{what} is not positive definite")));
    }
    Ok(())
}

pub(crate) fn spd_inverse(m: &Mat6, what: &str) -> Result<Mat6> {
    Cholesky::new(*m)
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Config(format!("{what} is not positive definite")))
}

/// Multiplicative modulation `1 + amplitude·sin(frequency·s)` of J and K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub amplitude: f64,
    pub frequency: f64,
}

impl Modulation {
    pub fn factor(&self, s: f64) -> f64 {
        1.0 + self.amplitude * (self.frequency * s).sin()
    }
}

/// Cross-section properties as a function of arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionProfile {
    pub base: SectionProperties,
    /// ρA, kg/m. Used for the weight of the rod.
    pub linear_density: f64,
    pub modulations: Vec<Modulation>,
}

impl SectionProfile {
    pub fn uniform(base: SectionProperties, linear_density: f64) -> Self {
        SectionProfile {
            base,
            linear_density,
            modulations: Vec::new(),
        }
    }

    pub fn at(&self, s: f64) -> SectionProperties {
        let scale: f64 = self.modulations.iter().map(|m| m.factor(s)).product();
        let mut props = self.base.clone();
        props.inertia *= scale;
        props.stiffness *= scale;
        props
    }
}

/// Base motion `η₋(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseMotion {
    Fixed,
    ConstantTwist(Twist6),
}

impl BaseMotion {
    pub fn velocity(&self, _t: f64) -> Twist6 {
        match self {
            BaseMotion::Fixed => Twist6::zeros(),
            BaseMotion::ConstantTwist(eta) => *eta,
        }
    }

    pub fn acceleration(&self, _t: f64) -> Twist6 {
        Twist6::zeros()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RodParameters {
    pub length: f64,
    pub sections: SectionProfile,
    /// Gravitational acceleration in the global frame.
    pub gravity: Vec3,
    /// Distributed wrench specified in the local frames, per unit length.
    pub distributed_load_local: Twist6,
    /// Point wrench at the tip, global frame (e.g. a hanging load).
    pub tip_load_global: Twist6,
    /// Point wrench at the tip, local frame.
    pub tip_load_local: Twist6,
    pub base_motion: BaseMotion,
    pub base_pose: Pose,
}

impl RodParameters {
    /// The 0.5 m spring-steel tendon robot: gravity along -z and a 1 N tip load.
    pub fn tendon_robot() -> Self {
        Self::from_material(0.5, &Material::spring_steel_with_disks())
            .with_gravity(Vec3::new(0.0, 0.0, -STANDARD_GRAVITY))
            .with_tip_load_global(twist(Vec3::zeros(), Vec3::new(0.0, 0.0, -1.0)))
    }

    /// A uniform rod with no loads and a fixed base at the origin.
    pub fn from_material(length: f64, material: &Material) -> Self {
        RodParameters {
            length,
            sections: SectionProfile::uniform(
                SectionProperties::from_material(material),
                material.linear_density(),
            ),
            gravity: Vec3::zeros(),
            distributed_load_local: Twist6::zeros(),
            tip_load_global: Twist6::zeros(),
            tip_load_local: Twist6::zeros(),
            base_motion: BaseMotion::Fixed,
            base_pose: Pose::identity(),
        }
    }

    pub fn with_gravity(mut self, g: Vec3) -> Self {
        self.gravity = g;
        self
    }

    pub fn with_tip_load_global(mut self, w: Twist6) -> Self {
        self.tip_load_global = w;
        self
    }

    pub fn section_at(&self, s: f64) -> SectionProperties {
        self.sections.at(s)
    }

    pub fn linear_density_at(&self, _s: f64) -> f64 {
        self.sections.linear_density
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::Config(format!("rod length must be positive, got {}", self.length)));
        }
        if !(self.sections.linear_density >= 0.0) {
            return Err(Error::Config("linear density must be nonnegative".into()));
        }
        // Modulated profiles must stay SPD at every s; check a dense sample.
        for k in 0..=64 {
            let s = self.length * k as f64 / 64.0;
            self.section_at(s).validate()?;
        }
        for m in &self.sections.modulations {
            if m.amplitude.abs() >= 1.0 {
                return Err(Error::Config(format!(
                    "modulation amplitude {} would make J, K indefinite",
                    m.amplitude
                )));
            }
        }
        Ok(())
    }
}

/// `φ = K(ξ − ξₒ)`.
#[inline]
pub fn constitutive(xi: &Twist6, props: &SectionProperties) -> Twist6 {
    props.stiffness * (xi - props.reference_strain)
}

/// `φ = K(ξ − ξₒ) + D ∂ₜξ`.
pub fn constitutive_damped(
    xi: &Twist6,
    xi_rate: &Twist6,
    props: &SectionProperties,
) -> Result<Twist6> {
    let d = props
        .damping
        .as_ref()
        .ok_or_else(|| Error::Config("damped constitutive law requires a damping matrix".into()))?;
    Ok(constitutive(xi, props) + d * xi_rate)
}

/// Inverse of the elastic law: `ξ = K⁻¹φ + ξₒ`.
pub fn strain_from_wrench(phi: &Twist6, props: &SectionProperties) -> Result<Twist6> {
    Ok(props.compliance()? * phi + props.reference_strain)
}

/// Compatibility: `∂ₜξ = ∂ₛη + ad_ξ η`.
#[inline]
pub fn strain_rate(xi: &Twist6, eta: &Twist6, deta_ds: &Twist6) -> Twist6 {
    deta_ds + ad_mul(xi, eta)
}

/// Balance of momentum solved for `∂ₜη`, with `Φ` the total internal wrench.
pub fn velocity_rate(
    xi: &Twist6,
    eta: &Twist6,
    phi: &Twist6,
    dphi_ds: &Twist6,
    psi: &Twist6,
    props: &SectionProperties,
) -> Result<Twist6> {
    let j_inv = props.inertia_inverse()?;
    Ok(velocity_rate_with(
        &props.inertia,
        &j_inv,
        xi,
        eta,
        phi,
        dphi_ds,
        psi,
    ))
}

/// [`velocity_rate`] with a precomputed `J⁻¹`.
#[inline]
pub fn velocity_rate_with(
    inertia: &Mat6,
    inertia_inv: &Mat6,
    xi: &Twist6,
    eta: &Twist6,
    phi: &Twist6,
    dphi_ds: &Twist6,
    psi: &Twist6,
) -> Twist6 {
    let momentum = inertia * eta;
    inertia_inv * (dphi_ds - ad_transpose_mul(xi, phi) + ad_transpose_mul(eta, &momentum) + psi)
}

/// `Ψ = ψ_loc + T_Rᵀ ψ_glb`.
#[inline]
pub fn distributed_wrench(psi_loc: &Twist6, psi_glb: &Twist6, r: &Rotation) -> Twist6 {
    psi_loc + t_transform_transpose_mul(r, psi_glb)
}

/// `Ψ₊ = ψ⁺_loc + T_R(ℓ)ᵀ ψ⁺_glb`.
#[inline]
pub fn tip_wrench(psi_loc_tip: &Twist6, psi_glb_tip: &Twist6, r_tip: &Rotation) -> Twist6 {
    distributed_wrench(psi_loc_tip, psi_glb_tip, r_tip)
}
