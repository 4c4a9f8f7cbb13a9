//! Method-of-lines discretization of the rod equations.
//!
//! The state `{ξ, η}` lives on a collocated uniform grid and is advanced with
//! classical RK4. Inside the right-hand side, derivatives use the
//! summation-by-parts operator matched to the trapezoidal energy norm, so the
//! discrete energy balance mirrors the continuous one. Boundary conditions:
//!
//! * base: `η₀ = η₋(t)`, imposed strongly at every stage;
//! * tip: `Φ(ℓ) = Ψ₊ − Γ(η(ℓ) − η_ref)`, imposed by an upwind penalty on the
//!   incoming characteristic. `Z` is the sectional impedance (`Z J⁻¹ Z = K`).
//!   The penalty rate is bounded by the wave speed for any `Γ ⪰ 0`, so large
//!   gains do not make the step stiff.
//!
//! [`apply_boundary_conditions`] performs the strong version of the same
//! closure and is used to make initial states consistent.
//!
//! Poses are never integrated in time; they are rebuilt from the strain field.

use nalgebra::{Cholesky, SMatrix, SymmetricEigen};

use crate::actuation::{gravity_field, tendon_unit_wrench, Actuation};
use crate::error::{Error, Result};
use crate::rod::{spd_inverse, tip_wrench, RodParameters};
use crate::se3::{
    ad_mul, ad_transpose_mul, adjoint, exp_se3, orthonormalize, t_transform_transpose_mul, Mat6, Pose,
    Rotation, Twist6,
};

/// Uniform grid `sᵢ = i·h`, `h = ℓ/(N−1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nodes: usize,
    length: f64,
}

impl Grid {
    pub const MIN_NODES: usize = 5;

    pub fn new(nodes: usize, length: f64) -> Result<Self> {
        if nodes < Self::MIN_NODES {
            return Err(Error::Config(format!(
                "grid needs at least {} nodes, got {nodes}",
                Self::MIN_NODES
            )));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Config(format!("grid length must be positive, got {length}")));
        }
        Ok(Grid { nodes, length })
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.length / (self.nodes - 1) as f64
    }

    #[inline]
    pub fn s(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nodes).map(move |i| self.s(i))
    }

    /// Trapezoidal quadrature weights.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.nodes {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }
}

/// Discrete rod state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub time: f64,
    pub strain: Vec<Twist6>,
    pub velocity: Vec<Twist6>,
    /// Reconstructed from `strain`; `poses[0]` is the base pose.
    pub poses: Vec<Pose>,
}

impl SimulationState {
    /// Builds a state and reconstructs its poses.
    pub fn new(
        time: f64,
        strain: Vec<Twist6>,
        velocity: Vec<Twist6>,
        grid: &Grid,
        base_pose: &Pose,
    ) -> Result<Self> {
        if strain.len() != grid.nodes() || velocity.len() != grid.nodes() {
            return Err(Error::GridMismatch(format!(
                "fields have {} / {} entries, grid has {} nodes",
                strain.len(),
                velocity.len(),
                grid.nodes()
            )));
        }
        let poses = reconstruct_poses(&strain, base_pose, grid.spacing());
        Ok(SimulationState {
            time,
            strain,
            velocity,
            poses,
        })
    }

    pub fn nodes(&self) -> usize {
        self.strain.len()
    }

    pub fn tip_pose(&self) -> &Pose {
        self.poses.last().expect("state has at least one node")
    }

    pub fn tip_velocity(&self) -> Twist6 {
        *self.velocity.last().expect("state has at least one node")
    }

    /// Checks field lengths, finiteness and rotation orthogonality.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let n = grid.nodes();
        if self.strain.len() != n || self.velocity.len() != n || self.poses.len() != n {
            return Err(Error::GridMismatch(format!("state does not have {n} nodes")));
        }
        for i in 0..n {
            let finite = self.strain[i].iter().chain(self.velocity[i].iter()).all(|x| x.is_finite());
            if !finite {
                return Err(Error::Structure(format!("non-finite state at node {i}")));
            }
            if self.poses[i].rotation.orthogonality_defect() > 1e-6 {
                return Err(Error::Structure(format!("pose rotation at node {i} is not orthonormal")));
            }
        }
        Ok(())
    }
}

/// Time stepping controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub cfl_safety: f64,
    pub end_time: f64,
    pub reorthonormalize_every: u64,
}

impl IntegratorConfig {
    pub const DEFAULT_CFL: f64 = 0.5;

    /// Step from [`stable_dt`] at the given safety factor.
    pub fn from_cfl(model: &RodModel, cfl_safety: f64, end_time: f64) -> Result<Self> {
        let dt = stable_dt(model.params(), model.grid().spacing(), cfl_safety)?;
        Ok(IntegratorConfig {
            dt,
            cfl_safety,
            end_time,
            reorthonormalize_every: 100,
        })
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn steps(&self) -> u64 {
        (self.end_time / self.dt - 1e-9).ceil().max(0.0) as u64
    }
}

/// Second-order finite differences of a nodal field.
pub fn spatial_derivative(field: &[Twist6], h: f64) -> Vec<Twist6> {
    let mut out = vec![Twist6::zeros(); field.len()];
    spatial_derivative_into(field, h, &mut out);
    out
}

pub fn spatial_derivative_into(field: &[Twist6], h: f64, out: &mut [Twist6]) {
    let n = field.len();
    debug_assert!(n >= Grid::MIN_NODES && out.len() == n);
    let inv2h = 0.5 / h;
    out[0] = (-3.0 * field[0] + 4.0 * field[1] - field[2]) * inv2h;
    for i in 1..n - 1 {
        out[i] = (field[i + 1] - field[i - 1]) * inv2h;
    }
    out[n - 1] = (3.0 * field[n - 1] - 4.0 * field[n - 2] + field[n - 3]) * inv2h;
}

/// Summation-by-parts first derivative: central in the interior, first-order
/// one-sided at the ends. Together with the trapezoidal weights `H` it
/// satisfies `H D + (H D)ᵀ = diag(−1, 0, …, 0, 1)`.
pub fn sbp_derivative_into(field: &[Twist6], h: f64, out: &mut [Twist6]) {
    let n = field.len();
    debug_assert!(n >= 2 && out.len() == n);
    let inv2h = 0.5 / h;
    out[0] = (field[1] - field[0]) / h;
    for i in 1..n - 1 {
        out[i] = (field[i + 1] - field[i - 1]) * inv2h;
    }
    out[n - 1] = (field[n - 1] - field[n - 2]) / h;
}

/// Square roots of the generalized eigenvalues of `K v = λ J v`, i.e. the
/// characteristic speeds of the linearized section.
fn wave_speeds(inertia: &Mat6, stiffness: &Mat6) -> Result<SymmetricEigen<f64, nalgebra::U6>> {
    let chol = Cholesky::new(*inertia)
        .ok_or_else(|| Error::Config("inertia J is not positive definite".into()))?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Config("inertia J is singular".into()))?;
    let m = l_inv * stiffness * l_inv.transpose();
    let m = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Config("stiffness K is not positive definite".into()));
    }
    Ok(eig)
}

/// Fastest characteristic speed over the rod, m/s.
pub fn max_wave_speed(params: &RodParameters) -> Result<f64> {
    let samples = 128;
    let mut c_max: f64 = 0.0;
    for k in 0..=samples {
        let props = params.section_at(params.length * k as f64 / samples as f64);
        let eig = wave_speeds(&props.inertia, &props.stiffness)?;
        c_max = c_max.max(eig.eigenvalues.max().sqrt());
    }
    Ok(c_max)
}

/// `dt = safety · h / c_max`.
pub fn cfl_dt(params: &RodParameters, h: f64, cfl_safety: f64) -> Result<f64> {
    if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
        return Err(Error::Config(format!("cfl_safety must lie in (0, 1], got {cfl_safety}")));
    }
    Ok(cfl_safety * h / max_wave_speed(params)?)
}

/// Highest angular frequency of the semi-discrete system linearized about
/// the reference strain, rad/s.
///
/// Central differences have the symbol `iσ` with `σ ∈ [0, 1/h]`; for each
/// sampled `s` and `σ` the squared frequencies are the eigenvalues of
/// `J⁻¹ Bᴴ K B` with `B = iσ + ad(ξₒ)`. At `σ = 1/h` without the `ad` term
/// this is `c_max / h`. The `ad` term couples shear to rotary inertia and
/// dominates for thin sections.
pub fn max_frequency(params: &RodParameters, h: f64) -> Result<f64> {
    let samples = 64;
    let sigmas = 16;
    let mut omega2: f64 = 0.0;
    for k in 0..=samples {
        let props = params.section_at(params.length * k as f64 / samples as f64);
        let chol = Cholesky::new(props.inertia)
            .ok_or_else(|| Error::Config("inertia J is not positive definite".into()))?;
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or_else(|| Error::Config("inertia J is singular".into()))?;
        let a = adjoint(&props.reference_strain);
        let kk = props.stiffness;
        for j in 0..=sigmas {
            let sigma = j as f64 / (sigmas as f64 * h);
            let x = l_inv * (a.transpose() * kk * a + kk * (sigma * sigma)) * l_inv.transpose();
            let y = l_inv * ((a.transpose() * kk - kk * a) * sigma) * l_inv.transpose();
            // Real embedding of the Hermitian matrix X + iY.
            let mut m = SMatrix::<f64, 12, 12>::zeros();
            m.fixed_view_mut::<6, 6>(0, 0).copy_from(&x);
            m.fixed_view_mut::<6, 6>(6, 6).copy_from(&x);
            m.fixed_view_mut::<6, 6>(0, 6).copy_from(&(-y));
            m.fixed_view_mut::<6, 6>(6, 0).copy_from(&y);
            let m = (m + m.transpose()) * 0.5;
            omega2 = omega2.max(m.symmetric_eigenvalues().max());
        }
    }
    Ok(omega2.sqrt())
}

/// Default step: `safety / ω_max` with `ω_max` from [`max_frequency`]. Never
/// larger than [`cfl_dt`].
pub fn stable_dt(params: &RodParameters, h: f64, cfl_safety: f64) -> Result<f64> {
    let wave = cfl_dt(params, h, cfl_safety)?;
    Ok(wave.min(cfl_safety / max_frequency(params, h)?))
}

/// Impedance `Z` (symmetric positive definite, `Z J⁻¹ Z = K`).
pub fn impedance(inertia: &Mat6, stiffness: &Mat6) -> Result<Mat6> {
    let chol = Cholesky::new(*inertia)
        .ok_or_else(|| Error::Config("inertia J is not positive definite".into()))?;
    let l = chol.l();
    let eig = wave_speeds(inertia, stiffness)?;
    let sqrt_m = eig.eigenvectors
        * Mat6::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    let z = l * sqrt_m * l.transpose();
    Ok((z + z.transpose()) * 0.5)
}

/// Rebuilds `g(sᵢ)` from the strain field by integrating `∂ₛg = g ξ^` with the
/// midpoint strain on every cell.
pub fn reconstruct_poses(strain: &[Twist6], base_pose: &Pose, h: f64) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(strain.len());
    reconstruct_poses_into(strain, base_pose, h, &mut poses);
    poses
}

fn reconstruct_poses_into(strain: &[Twist6], base_pose: &Pose, h: f64, poses: &mut Vec<Pose>) {
    poses.clear();
    poses.push(*base_pose);
    for pair in strain.windows(2) {
        let mid = (pair[0] + pair[1]) * 0.5;
        let last = *poses.last().unwrap();
        poses.push(last.compose(&exp_se3(&mid, h)));
    }
}

/// Per-node coefficients, precomputed from the rod parameters.
#[derive(Debug, Clone)]
pub(crate) struct NodeSection {
    pub inertia: Mat6,
    pub inertia_inv: Mat6,
    pub stiffness: Mat6,
    pub compliance: Mat6,
    pub damping: Option<Mat6>,
    pub reference_strain: Twist6,
}

/// Rod parameters and actuation sampled on a grid.
#[derive(Debug, Clone)]
pub struct RodModel {
    params: RodParameters,
    actuation: Actuation,
    grid: Grid,
    pub(crate) sections: Vec<NodeSection>,
    gravity: Vec<Twist6>,
    /// `tendon_unit[j][i]`: wrench of tendon `j` per unit tension at node `i`.
    tendon_unit: Vec<Vec<Twist6>>,
    tip_impedance: Mat6,
    tip_impedance_inv: Mat6,
    needs_poses: bool,
}

impl RodModel {
    pub fn new(params: RodParameters, actuation: Actuation, nodes: usize) -> Result<Self> {
        params.validate()?;
        actuation.validate()?;
        let grid = Grid::new(nodes, params.length)?;
        let mut sections = Vec::with_capacity(nodes);
        for s in grid.positions() {
            let props = params.section_at(s);
            props.validate()?;
            sections.push(NodeSection {
                inertia_inv: spd_inverse(&props.inertia, "inertia J")?,
                compliance: spd_inverse(&props.stiffness, "stiffness K")?,
                inertia: props.inertia,
                stiffness: props.stiffness,
                damping: props.damping,
                reference_strain: props.reference_strain,
            });
        }
        let gravity: Vec<Twist6> = grid.positions().map(|s| gravity_field(&params, s)).collect();
        let tendon_unit = actuation
            .routings
            .iter()
            .map(|r| {
                grid.positions()
                    .zip(&sections)
                    .map(|(s, sec)| tendon_unit_wrench(r, s, &sec.reference_strain))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let tip = sections.last().unwrap();
        let tip_impedance = impedance(&tip.inertia, &tip.stiffness)?;
        let tip_impedance_inv = spd_inverse(&tip_impedance, "tip impedance")?;
        let needs_poses = gravity.iter().any(|g| g.amax() > 0.0);
        Ok(RodModel {
            params,
            actuation,
            grid,
            sections,
            gravity,
            tendon_unit,
            tip_impedance,
            tip_impedance_inv,
            needs_poses,
        })
    }

    pub fn params(&self) -> &RodParameters {
        &self.params
    }

    pub fn actuation(&self) -> &Actuation {
        &self.actuation
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tip_impedance(&self) -> &Mat6 {
        &self.tip_impedance
    }

    pub fn reference_strain(&self, i: usize) -> Twist6 {
        self.sections[i].reference_strain
    }

    pub fn stiffness(&self, i: usize) -> &Mat6 {
        &self.sections[i].stiffness
    }

    pub fn compliance(&self, i: usize) -> &Mat6 {
        &self.sections[i].compliance
    }

    pub fn inertia(&self, i: usize) -> &Mat6 {
        &self.sections[i].inertia
    }

    /// Elastic wrench `K(ξᵢ − ξₒ)` at node `i`.
    #[inline]
    pub fn elastic_wrench(&self, i: usize, xi: &Twist6) -> Twist6 {
        let sec = &self.sections[i];
        sec.stiffness * (xi - sec.reference_strain)
    }

    /// Straight rod at rest, poses rebuilt from the base.
    pub fn reference_state(&self, time: f64) -> SimulationState {
        let strain = (0..self.grid.nodes()).map(|i| self.reference_strain(i)).collect();
        let velocity = vec![Twist6::zeros(); self.grid.nodes()];
        SimulationState::new(time, strain, velocity, &self.grid, &self.params.base_pose)
            .expect("field sizes match the grid")
    }

    /// Tendon wrench field `φ_loc(sᵢ, t)`.
    pub fn actuation_wrench(&self, t: f64) -> Vec<Twist6> {
        let mut out = vec![Twist6::zeros(); self.grid.nodes()];
        self.actuation_wrench_into(t, &mut out);
        out
    }

    fn actuation_wrench_into(&self, t: f64, out: &mut [Twist6]) {
        out.iter_mut().for_each(|w| *w = Twist6::zeros());
        let tensions = self.actuation.schedule.tensions(t);
        for (unit, tau) in self.tendon_unit.iter().zip(tensions) {
            if tau == 0.0 {
                continue;
            }
            for (w, u) in out.iter_mut().zip(unit) {
                *w += u * tau;
            }
        }
    }

    /// Replaces the tension schedule (routings stay the same).
    pub fn set_schedule(&mut self, schedule: crate::actuation::TensionSchedule) -> Result<()> {
        let mut actuation = self.actuation.clone();
        actuation.schedule = schedule;
        actuation.validate()?;
        self.actuation = actuation;
        Ok(())
    }

    /// Whether the distributed load depends on the section rotations.
    pub fn needs_poses(&self) -> bool {
        self.needs_poses
    }
}

/// Dissipative tip term `−Γ(η_tip − η_ref)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipDamping {
    pub gain: Mat6,
    pub reference_velocity: Twist6,
}

/// Everything the tip closure needs besides the model's own loads.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TipCondition {
    /// Constant extra tip wrench added to `Ψ₊`.
    pub extra_wrench: Twist6,
    pub damping: Option<TipDamping>,
    /// Tip rotation used to express `ψ⁺_glb` locally; the reconstructed one
    /// is used when absent.
    pub rotation: Option<Rotation>,
}

impl TipCondition {
    pub fn free() -> Self {
        TipCondition::default()
    }
}

/// Imposes `η₀ = η₋(t)` and the tip wrench condition on `strain`/`velocity`.
///
/// `actuation_tip` is `φ_loc(ℓ, t)`; `tip_rotation` is used for `ψ⁺_glb`
/// unless `tip.rotation` overrides it.
pub fn apply_boundary_conditions(
    strain: &mut [Twist6],
    velocity: &mut [Twist6],
    model: &RodModel,
    t: f64,
    actuation_tip: &Twist6,
    tip_rotation: &Rotation,
    tip: &TipCondition,
) -> Result<()> {
    let n = strain.len();
    velocity[0] = model.params.base_motion.velocity(t);

    let r_tip = tip.rotation.as_ref().unwrap_or(tip_rotation);
    let target = tip_wrench(
        &model.params.tip_load_local,
        &model.params.tip_load_global,
        r_tip,
    ) + tip.extra_wrench;
    let sec = &model.sections[n - 1];
    let z = &model.tip_impedance;
    let total = sec.stiffness * (strain[n - 1] - sec.reference_strain) + actuation_tip;
    let outgoing = total - z * velocity[n - 1];

    let (eta, wrench) = match &tip.damping {
        None => {
            // Z is SPD, so the solve cannot fail for a valid model.
            let eta = Cholesky::new(*z)
                .ok_or_else(|| Error::Degenerate("tip impedance is not positive definite".into()))?
                .solve(&(target - outgoing));
            (eta, target)
        }
        Some(d) => {
            let lhs = z + d.gain;
            let rhs = target + d.gain * d.reference_velocity - outgoing;
            let eta = lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Degenerate("singular tip closure Z + Γ".into()))?;
            (eta, target - d.gain * (eta - d.reference_velocity))
        }
    };
    velocity[n - 1] = eta;
    strain[n - 1] = sec.compliance * (wrench - actuation_tip) + sec.reference_strain;
    if !strain[n - 1].iter().all(|x| x.is_finite()) {
        return Err(Error::Degenerate("tip strain is not finite".into()));
    }
    Ok(())
}

/// Boundary values `(η*, Φ*)` at the tip: they share the outgoing invariant
/// `Φ − Zη` with the node values and satisfy `Φ* = W − Γ(η* − η_ref)`, where
/// `W` is the prescribed tip wrench.
fn tip_trace(
    model: &RodModel,
    velocity: &Twist6,
    wrench: &Twist6,
    r_tip: &Rotation,
    cond: &TipCondition,
) -> Result<(Twist6, Twist6)> {
    let target = tip_wrench(&model.params.tip_load_local, &model.params.tip_load_global, r_tip)
        + cond.extra_wrench;
    let z = &model.tip_impedance;
    let outgoing = wrench - z * velocity;
    let eta_star = match &cond.damping {
        None => model.tip_impedance_inv * (target - outgoing),
        Some(d) => (z + d.gain)
            .lu()
            .solve(&(target + d.gain * d.reference_velocity - outgoing))
            .ok_or_else(|| Error::Degenerate("singular tip closure Z + Γ".into()))?,
    };
    Ok((eta_star, outgoing + z * eta_star))
}

/// Scratch buffers for [`Simulator`].
#[derive(Debug, Clone, Default)]
struct Workspace {
    actuation: Vec<Twist6>,
    wrench: Vec<Twist6>,
    dwrench: Vec<Twist6>,
    deta: Vec<Twist6>,
    poses: Vec<Pose>,
    stage_strain: Vec<Twist6>,
    stage_velocity: Vec<Twist6>,
    k_strain: [Vec<Twist6>; 4],
    k_velocity: [Vec<Twist6>; 4],
    traces: [StageTrace; 4],
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = vec![Twist6::zeros(); n];
        Workspace {
            actuation: z.clone(),
            wrench: z.clone(),
            dwrench: z.clone(),
            deta: z.clone(),
            poses: Vec::with_capacity(n),
            stage_strain: z.clone(),
            stage_velocity: z.clone(),
            k_strain: [z.clone(), z.clone(), z.clone(), z.clone()],
            k_velocity: [z.clone(), z.clone(), z.clone(), z],
            traces: [StageTrace::default(); 4],
        }
    }
}

/// Source of the tip condition at arbitrary (stage) times.
pub trait TipSource {
    fn tip_condition(&self, t: f64) -> Result<TipCondition>;

    /// Condition for RK4 stage `stage` (0..4) evaluated at time `t`.
    fn stage_condition(&self, t: f64, _stage: usize) -> Result<TipCondition> {
        self.tip_condition(t)
    }
}

/// Tip velocity `η*` and tip rotation seen by one RK4 stage of the plant.
/// The rotation is present whenever the stage rebuilt its poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTrace {
    pub time: f64,
    pub velocity: Twist6,
    pub rotation: Option<Rotation>,
}

impl Default for StageTrace {
    fn default() -> Self {
        StageTrace {
            time: 0.0,
            velocity: Twist6::zeros(),
            rotation: None,
        }
    }
}

/// Uncorrected plant: no extra tip wrench.
pub struct FreeTip;

impl TipSource for FreeTip {
    fn tip_condition(&self, _t: f64) -> Result<TipCondition> {
        Ok(TipCondition::free())
    }
}

impl<F: Fn(f64) -> Result<TipCondition>> TipSource for F {
    fn tip_condition(&self, t: f64) -> Result<TipCondition> {
        self(t)
    }
}

/// Explicit RK4 integrator for one rod model.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: RodModel,
    config: IntegratorConfig,
    work: Workspace,
    steps_taken: u64,
    drag: f64,
}

impl Simulator {
    pub fn new(model: RodModel, config: IntegratorConfig) -> Result<Self> {
        if !(config.dt > 0.0) || !config.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", config.dt)));
        }
        let limit = stable_dt(model.params(), model.grid().spacing(), config.cfl_safety)?;
        if config.dt > limit * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "dt = {:.3e} s exceeds the stability limit {:.3e} s at safety {}",
                config.dt, limit, config.cfl_safety
            )));
        }
        let n = model.grid().nodes();
        Ok(Simulator {
            model,
            config,
            work: Workspace::new(n),
            steps_taken: 0,
            drag: 0.0,
        })
    }

    /// Adds a uniform velocity drag `−c·η` to every section. Only meant for
    /// dynamic relaxation towards static equilibria.
    pub fn with_drag(mut self, rate: f64) -> Self {
        self.drag = rate;
        self
    }

    pub fn model(&self) -> &RodModel {
        &self.model
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    /// Projects `state` onto the boundary conditions at `state.time` and
    /// rebuilds its poses. Used for initial states only; stepping imposes the
    /// tip condition weakly.
    pub fn prepare(&mut self, state: &mut SimulationState, tip: &dyn TipSource) -> Result<()> {
        let cond = tip.tip_condition(state.time)?;
        let n = state.nodes();
        let h = self.model.grid.spacing();
        let base = self.model.params.base_pose;
        self.model.actuation_wrench_into(state.time, &mut self.work.actuation);
        reconstruct_poses_into(&state.strain, &base, h, &mut self.work.poses);
        let r_tip = self.work.poses[n - 1].rotation;
        let act_tip = self.work.actuation[n - 1];
        apply_boundary_conditions(
            &mut state.strain,
            &mut state.velocity,
            &self.model,
            state.time,
            &act_tip,
            &r_tip,
            &cond,
        )?;
        reconstruct_poses_into(&state.strain, &base, h, &mut state.poses);
        Ok(())
    }

    /// Semi-discrete right-hand side.
    ///
    /// Derivatives use the diagonal-norm summation-by-parts operator whose
    /// norm is the trapezoidal rule, so the discrete energy obeys the same
    /// boundary identity as the continuum. The tip condition enters as an
    /// upwind penalty on the incoming characteristic.
    fn rhs_into(
        &mut self,
        strain: &[Twist6],
        velocity: &[Twist6],
        t: f64,
        cond: &TipCondition,
        dstrain: &mut [Twist6],
        dvelocity: &mut [Twist6],
    ) -> Result<(Twist6, Option<Rotation>)> {
        let model = &self.model;
        let w = &mut self.work;
        let n = strain.len();
        let h = model.grid.spacing();

        model.actuation_wrench_into(t, &mut w.actuation);
        let need_tip_pose = cond.rotation.is_none() && model.params.tip_load_global.amax() > 0.0;
        if model.needs_poses || need_tip_pose {
            reconstruct_poses_into(strain, &model.params.base_pose, h, &mut w.poses);
        }

        sbp_derivative_into(velocity, h, &mut w.deta);
        for i in 0..n {
            dstrain[i] = w.deta[i] + ad_mul(&strain[i], &velocity[i]);
        }
        for i in 0..n {
            let sec = &model.sections[i];
            let mut phi = sec.stiffness * (strain[i] - sec.reference_strain) + w.actuation[i];
            if let Some(d) = &sec.damping {
                phi += d * dstrain[i];
            }
            w.wrench[i] = phi;
        }
        sbp_derivative_into(&w.wrench, h, &mut w.dwrench);
        let psi_loc = model.params.distributed_load_local;
        for i in 0..n {
            let sec = &model.sections[i];
            let mut psi = psi_loc;
            if model.needs_poses {
                psi += t_transform_transpose_mul(&w.poses[i].rotation, &model.gravity[i]);
            }
            let momentum = sec.inertia * velocity[i];
            let mut force = w.dwrench[i] - ad_transpose_mul(&strain[i], &w.wrench[i])
                + ad_transpose_mul(&velocity[i], &momentum)
                + psi;
            if self.drag > 0.0 {
                force -= momentum * self.drag;
            }
            dvelocity[i] = sec.inertia_inv * force;
        }
        dvelocity[0] = model.params.base_motion.acceleration(t);

        let built = model.needs_poses || need_tip_pose;
        let r_tip = match (&cond.rotation, built) {
            (Some(r), _) => *r,
            (None, true) => w.poses[n - 1].rotation,
            (None, false) => Rotation::identity(),
        };
        let (eta_star, phi_star) = tip_trace(model, &velocity[n - 1], &w.wrench[n - 1], &r_tip, cond)?;
        let inv_w = 1.0 / model.grid.weight(n - 1);
        let sec = &model.sections[n - 1];
        dvelocity[n - 1] -= sec.inertia_inv * (w.wrench[n - 1] - phi_star) * inv_w;
        dstrain[n - 1] -= (velocity[n - 1] - eta_star) * inv_w;
        Ok((eta_star, built.then(|| w.poses[n - 1].rotation)))
    }

    /// Tip velocity `η(ℓ, t)` of `state` as seen by the tip closure. This is
    /// the quantity a tip sensor measures.
    pub fn tip_velocity(&mut self, state: &SimulationState, tip: &dyn TipSource) -> Result<Twist6> {
        let n = state.nodes();
        let model = &self.model;
        let cond = tip.tip_condition(state.time)?;
        model.actuation_wrench_into(state.time, &mut self.work.actuation);
        let sec = &model.sections[n - 1];
        let mut phi = sec.stiffness * (state.strain[n - 1] - sec.reference_strain)
            + self.work.actuation[n - 1];
        if let Some(d) = &sec.damping {
            let h = model.grid.spacing();
            let deta = (state.velocity[n - 1] - state.velocity[n - 2]) / h;
            phi += d * (deta + ad_mul(&state.strain[n - 1], &state.velocity[n - 1]));
        }
        let r_tip = cond.rotation.unwrap_or(state.tip_pose().rotation);
        Ok(tip_trace(model, &state.velocity[n - 1], &phi, &r_tip, &cond)?.0)
    }

    /// Right-hand side `(∂ₜξ, ∂ₜη)` at `state.time` with the base velocity
    /// imposed.
    pub fn rhs(
        &mut self,
        state: &SimulationState,
        tip: &dyn TipSource,
    ) -> Result<(Vec<Twist6>, Vec<Twist6>)> {
        let mut velocity = state.velocity.clone();
        velocity[0] = self.model.params.base_motion.velocity(state.time);
        let cond = tip.tip_condition(state.time)?;
        let n = state.nodes();
        let mut ds = vec![Twist6::zeros(); n];
        let mut dv = vec![Twist6::zeros(); n];
        self.rhs_into(&state.strain, &velocity, state.time, &cond, &mut ds, &mut dv)?;
        Ok((ds, dv))
    }

    /// Tip traces of the four stages of the last step.
    pub fn stage_traces(&self) -> &[StageTrace; 4] {
        &self.work.traces
    }

    /// Advances `state` by one RK4 step of size `config.dt`.
    pub fn step(&mut self, state: &mut SimulationState, tip: &dyn TipSource) -> Result<()> {
        let dt = self.config.dt;
        let t0 = state.time;
        let n = state.nodes();
        const C: [f64; 4] = [0.0, 0.5, 0.5, 1.0];

        for stage in 0..4 {
            let t = t0 + C[stage] * dt;
            let mut ss = std::mem::take(&mut self.work.stage_strain);
            let mut sv = std::mem::take(&mut self.work.stage_velocity);
            if stage == 0 {
                ss.copy_from_slice(&state.strain);
                sv.copy_from_slice(&state.velocity);
            } else {
                let prev_s = &self.work.k_strain[stage - 1];
                let prev_v = &self.work.k_velocity[stage - 1];
                let a = C[stage] * dt;
                for i in 0..n {
                    ss[i] = state.strain[i] + prev_s[i] * a;
                    sv[i] = state.velocity[i] + prev_v[i] * a;
                }
            }
            sv[0] = self.model.params.base_motion.velocity(t);
            let cond = tip.stage_condition(t, stage)?;
            let mut ks = std::mem::take(&mut self.work.k_strain[stage]);
            let mut kv = std::mem::take(&mut self.work.k_velocity[stage]);
            let res = self.rhs_into(&ss, &sv, t, &cond, &mut ks, &mut kv);
            self.work.k_strain[stage] = ks;
            self.work.k_velocity[stage] = kv;
            self.work.stage_strain = ss;
            self.work.stage_velocity = sv;
            let (velocity, rotation) = res?;
            self.work.traces[stage] = StageTrace {
                time: t,
                velocity,
                rotation,
            };
        }

        let w = &self.work;
        for i in 0..n {
            state.strain[i] += (w.k_strain[0][i]
                + 2.0 * (w.k_strain[1][i] + w.k_strain[2][i])
                + w.k_strain[3][i])
                * (dt / 6.0);
            state.velocity[i] += (w.k_velocity[0][i]
                + 2.0 * (w.k_velocity[1][i] + w.k_velocity[2][i])
                + w.k_velocity[3][i])
                * (dt / 6.0);
        }
        self.steps_taken += 1;
        state.time = t0 + dt;
        state.velocity[0] = self.model.params.base_motion.velocity(state.time);

        if let Some(node) = (0..n).find(|&i| {
            !state.strain[i].iter().chain(state.velocity[i].iter()).all(|x| x.is_finite())
        }) {
            return Err(Error::Divergence {
                step: self.steps_taken,
                time: state.time,
                node,
            });
        }

        reconstruct_poses_into(
            &state.strain,
            &self.model.params.base_pose,
            self.model.grid.spacing(),
            &mut state.poses,
        );
        let every = self.config.reorthonormalize_every;
        if every > 0 && self.steps_taken % every == 0 {
            for pose in state.poses.iter_mut() {
                pose.rotation = orthonormalize(pose.rotation.matrix())?;
            }
        }
        Ok(())
    }
}

/// One RK4 step of the uncorrected plant.
pub fn step(state: &mut SimulationState, simulator: &mut Simulator) -> Result<()> {
    simulator.step(state, &FreeTip)
}

/// `E = ∫ ηᵀJη + φᵀK⁻¹φ ds` by the trapezoidal rule, `φ = K(ξ − ξₒ)`.
pub fn total_energy(state: &SimulationState, model: &RodModel) -> f64 {
    let grid = model.grid();
    (0..grid.nodes())
        .map(|i| {
            let sec = &model.sections[i];
            let eta = &state.velocity[i];
            let dxi = state.strain[i] - sec.reference_strain;
            grid.weight(i) * (eta.dot(&(sec.inertia * eta)) + dxi.dot(&(sec.stiffness * dxi)))
        })
        .sum()
}

/// Physical kinetic energy `½∫ ηᵀJη ds`.
pub fn kinetic_energy(state: &SimulationState, model: &RodModel) -> f64 {
    let grid = model.grid();
    0.5 * (0..grid.nodes())
        .map(|i| {
            let eta = &state.velocity[i];
            grid.weight(i) * eta.dot(&(model.sections[i].inertia * eta))
        })
        .sum::<f64>()
}
