use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actuation::{Actuation, TendonRouting, TensionSchedule};
use crate::discretize::{stable_dt, IntegratorConfig, RodModel};
use crate::error::{Error, Result};
use crate::observer::{ObserverGain, DEFAULT_GAIN};
use crate::rod::{Material, RodParameters, SectionProfile, SectionProperties};
use crate::se3::{Twist6, Vec3};

/// Table 1 rod plus the CI-friendly knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodConfig {
    pub length_m: f64,
    pub radius_m: f64,
    pub density_kg_m3: f64,
    pub youngs_modulus_pa: f64,
    pub shear_modulus_pa: f64,
    /// Multiplies the angular block of `J`.
    #[serde(default = "one")]
    pub rotary_inertia_factor: f64,
    /// Multiplies the linear (shear and axial) block of `K`.
    #[serde(default = "one")]
    pub shear_axial_stiffness_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for RodConfig {
    fn default() -> Self {
        let m = Material::spring_steel_with_disks();
        RodConfig {
            length_m: 0.5,
            radius_m: m.radius,
            density_kg_m3: m.density,
            youngs_modulus_pa: m.youngs_modulus,
            shear_modulus_pa: m.shear_modulus,
            rotary_inertia_factor: 1.0,
            shear_axial_stiffness_factor: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    /// Acceleration of gravity along `−z`; zero disables gravity.
    pub gravity_m_s2: f64,
    /// Tip force in the global frame.
    pub tip_force_global_n: [f64; 3],
    /// Multiplies the tendon tension schedule and the holding tensions of
    /// the initial configurations.
    pub tension_scale: f64,
}

impl Default for LoadConfig {
    fn default() -> Self {
        LoadConfig {
            gravity_m_s2: crate::rod::STANDARD_GRAVITY,
            tip_force_global_n: [0.0, 0.0, -1.0],
            tension_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum RoutingConfig {
    Parallel { offset_m: [f64; 3] },
    Helical { amplitude_m: f64, wavenumber_rad_m: f64 },
}

impl RoutingConfig {
    pub fn build(&self) -> TendonRouting {
        match *self {
            RoutingConfig::Parallel { offset_m } => TendonRouting::Parallel {
                offset: Vec3::from(offset_m),
            },
            RoutingConfig::Helical {
                amplitude_m,
                wavenumber_rad_m,
            } => TendonRouting::Helical {
                amplitude: amplitude_m,
                wavenumber: wavenumber_rad_m,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ScheduleConfig {
    /// `τ₁ = −[40 sin t]₊`, `τ₂ = [100 sin t]₋`, scaled by `tension_scale`.
    Paper,
    Constant { tensions_n: Vec<f64> },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuationConfig {
    pub routings: Vec<RoutingConfig>,
    pub schedule: ScheduleConfig,
}

impl Default for ActuationConfig {
    fn default() -> Self {
        ActuationConfig {
            routings: vec![
                RoutingConfig::Parallel {
                    offset_m: [0.0, -0.01, 0.01],
                },
                RoutingConfig::Helical {
                    amplitude_m: 0.15,
                    wavenumber_rad_m: 4.0 * std::f64::consts::PI,
                },
            ],
            schedule: ScheduleConfig::Paper,
        }
    }
}

/// Initial truth state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialConfig {
    /// Stand-in configuration 1, 2 or 3: static equilibrium under constant
    /// holding tensions.
    Configuration(u8),
    /// Explicit strain per node, `[u1, u2, u3, q1, q2, q3]`, at rest.
    Strain(Vec<[f64; 6]>),
    Straight,
}

impl InitialConfig {
    /// Holding tensions of the stand-in configurations, N.
    pub fn holding_tensions(id: u8) -> Result<[f64; 2]> {
        match id {
            1 => Ok([-20.0, 0.0]),
            2 => Ok([0.0, -50.0]),
            3 => Ok([-30.0, -30.0]),
            _ => Err(Error::Config(format!("initial configuration must be 1, 2 or 3, got {id}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatePolicy {
    Straight,
    /// Start from the exact truth state.
    Truth,
    /// Explicit strain per node, at rest.
    Strain(Vec<[f64; 6]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Noise,
    #[serde(alias = "params")]
    ParamPerturbation,
    #[serde(alias = "routing")]
    RoutingPerturbation,
}

impl StudyKind {
    /// Amplitude used in the reference studies.
    pub fn paper_amplitude(self) -> f64 {
        match self {
            StudyKind::Noise => 0.2,
            StudyKind::ParamPerturbation => 0.2,
            StudyKind::RoutingPerturbation => 0.1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Noise => "noise",
            StudyKind::ParamPerturbation => "params",
            StudyKind::RoutingPerturbation => "routing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub kind: StudyKind,
    pub amplitude: f64,
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Config(format!("study amplitude must be ≥ 0, got {}", self.amplitude)));
        }
        if self.kind == StudyKind::Noise && self.amplitude > 1.0 {
            return Err(Error::Config("noise amplitude must lie in [0, 1]".into()));
        }
        if self.kind == StudyKind::ParamPerturbation && self.amplitude >= 1.0 {
            return Err(Error::Config("parameter perturbation amplitude must be < 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    /// Explicit step; the stability limit is used when absent.
    pub dt_s: Option<f64>,
    pub cfl_safety: f64,
    pub end_time_s: f64,
    pub reorthonormalize_every: u64,
    /// Observer step as a multiple of the truth step.
    pub observer_dt_ratio: u32,
    pub snapshot_interval_s: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            dt_s: None,
            cfl_safety: IntegratorConfig::DEFAULT_CFL,
            end_time_s: 2.0,
            reorthonormalize_every: 100,
            observer_dt_ratio: 1,
            snapshot_interval_s: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationConfig {
    /// Velocity drag rate; derived from the first bending frequency when absent.
    pub drag_per_s: Option<f64>,
    pub kinetic_energy_j: f64,
    pub min_time_s: f64,
    /// Relaxation stops here even if the energy target is not met.
    pub max_time_s: f64,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        RelaxationConfig {
            drag_per_s: None,
            kinetic_energy_j: 1e-8,
            min_time_s: 0.05,
            max_time_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
        }
    }
}

/// Everything one twin experiment needs. Serialized as JSON with units in
/// the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rod: RodConfig,
    pub nodes: usize,
    pub integrator: IntegratorSettings,
    pub actuation: ActuationConfig,
    pub loads: LoadConfig,
    /// `Γ = γ·I`; zero runs the observer open loop.
    pub observer_gain: f64,
    pub initial_configuration: InitialConfig,
    pub initial_estimate: EstimatePolicy,
    pub relaxation: RelaxationConfig,
    pub study: Option<StudySpec>,
    pub seed: u64,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::paper()
    }
}

impl ExperimentConfig {
    pub const DEFAULT_NODES: usize = 41;

    /// Steel rod of Table 1 with both tendons, gravity and a 1 N tip load.
    pub fn paper() -> Self {
        ExperimentConfig {
            rod: RodConfig::default(),
            nodes: Self::DEFAULT_NODES,
            integrator: IntegratorSettings::default(),
            actuation: ActuationConfig::default(),
            loads: LoadConfig::default(),
            observer_gain: DEFAULT_GAIN,
            initial_configuration: InitialConfig::Configuration(1),
            initial_estimate: EstimatePolicy::Straight,
            relaxation: RelaxationConfig::default(),
            study: None,
            seed: 0,
            output: OutputConfig::default(),
        }
    }

    /// Reduced-cost preset. Bending and torsion stiffness, linear density
    /// and all loads keep their Table 1 values; the shear and axial stiffness
    /// is lowered and the rotary inertia raised (it stands for the spacer
    /// disks). Only the fast shear, axial and rotary waves slow down, so the
    /// stable step grows about seventy-fold while the bending response is
    /// nearly unchanged.
    pub fn soft() -> Self {
        let mut c = ExperimentConfig::paper();
        c.rod.shear_axial_stiffness_factor = Self::SOFT_SHEAR_AXIAL_FACTOR;
        c.rod.rotary_inertia_factor = Self::SOFT_ROTARY_INERTIA_FACTOR;
        c
    }

    pub const SOFT_SHEAR_AXIAL_FACTOR: f64 = 0.05;
    pub const SOFT_ROTARY_INERTIA_FACTOR: f64 = 1e4;

    /// Loads from `path`; a missing field falls back to [`ExperimentConfig::paper`].
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rod;
        for (name, v) in [
            ("length_m", r.length_m),
            ("radius_m", r.radius_m),
            ("density_kg_m3", r.density_kg_m3),
            ("youngs_modulus_pa", r.youngs_modulus_pa),
            ("shear_modulus_pa", r.shear_modulus_pa),
            ("rotary_inertia_factor", r.rotary_inertia_factor),
            ("shear_axial_stiffness_factor", r.shear_axial_stiffness_factor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("rod.{name} must be positive, got {v}")));
            }
        }
        let i = &self.integrator;
        if !(i.end_time_s > 0.0) {
            return Err(Error::Config("integrator.end_time_s must be positive".into()));
        }
        if !(i.snapshot_interval_s > 0.0) {
            return Err(Error::Config("integrator.snapshot_interval_s must be positive".into()));
        }
        if i.observer_dt_ratio == 0 {
            return Err(Error::Config("integrator.observer_dt_ratio must be ≥ 1".into()));
        }
        if !(self.observer_gain >= 0.0) || !self.observer_gain.is_finite() {
            return Err(Error::Config("observer_gain must be ≥ 0".into()));
        }
        if let InitialConfig::Configuration(id) = self.initial_configuration {
            InitialConfig::holding_tensions(id)?;
        }
        if let InitialConfig::Strain(s) = &self.initial_configuration {
            if s.len() != self.nodes {
                return Err(Error::GridMismatch(format!(
                    "initial strain has {} entries, grid has {} nodes",
                    s.len(),
                    self.nodes
                )));
            }
        }
        if let EstimatePolicy::Strain(s) = &self.initial_estimate {
            if s.len() != self.nodes {
                return Err(Error::GridMismatch(format!(
                    "initial estimate has {} entries, grid has {} nodes",
                    s.len(),
                    self.nodes
                )));
            }
        }
        if let Some(study) = &self.study {
            study.validate()?;
        }
        if self.nodes < crate::discretize::Grid::MIN_NODES {
            return Err(Error::Config(format!("nodes must be ≥ 5, got {}", self.nodes)));
        }
        Ok(())
    }

    pub fn material(&self) -> Material {
        Material {
            radius: self.rod.radius_m,
            density: self.rod.density_kg_m3,
            youngs_modulus: self.rod.youngs_modulus_pa,
            shear_modulus: self.rod.shear_modulus_pa,
        }
    }

    /// Truth-plant parameters.
    pub fn rod_parameters(&self) -> RodParameters {
        let material = self.material();
        let mut params = RodParameters::from_material(self.rod.length_m, &material);
        let mut base = SectionProperties::from_material(&material);
        for k in 0..3 {
            base.inertia[(k, k)] *= self.rod.rotary_inertia_factor;
            base.stiffness[(k + 3, k + 3)] *= self.rod.shear_axial_stiffness_factor;
        }
        params.sections = SectionProfile::uniform(base, material.linear_density());
        params
            .with_gravity(Vec3::new(0.0, 0.0, -self.loads.gravity_m_s2))
            .with_tip_load_global(Twist6::new(
                0.0,
                0.0,
                0.0,
                self.loads.tip_force_global_n[0],
                self.loads.tip_force_global_n[1],
                self.loads.tip_force_global_n[2],
            ))
    }

    pub fn routings(&self) -> Vec<TendonRouting> {
        self.actuation.routings.iter().map(RoutingConfig::build).collect()
    }

    pub fn schedule(&self) -> TensionSchedule {
        match &self.actuation.schedule {
            ScheduleConfig::Paper => TensionSchedule::Paper {
                scale: self.loads.tension_scale,
            },
            ScheduleConfig::Constant { tensions_n } => TensionSchedule::Constant(
                tensions_n.iter().map(|t| t * self.loads.tension_scale).collect(),
            ),
            ScheduleConfig::None => TensionSchedule::Constant(vec![0.0; self.actuation.routings.len()]),
        }
    }

    pub fn actuation(&self) -> Actuation {
        Actuation {
            routings: self.routings(),
            schedule: self.schedule(),
        }
    }

    pub fn model(&self) -> Result<RodModel> {
        RodModel::new(self.rod_parameters(), self.actuation(), self.nodes)
    }

    pub fn gain(&self) -> Result<ObserverGain> {
        if self.observer_gain == 0.0 {
            Ok(ObserverGain::open_loop())
        } else {
            ObserverGain::scalar(self.observer_gain)
        }
    }

    /// Truth integrator settings.
    pub fn integrator_config(&self, model: &RodModel) -> Result<IntegratorConfig> {
        let i = &self.integrator;
        let dt = match i.dt_s {
            Some(dt) => dt,
            None => stable_dt(model.params(), model.grid().spacing(), i.cfl_safety)?,
        };
        Ok(IntegratorConfig {
            dt,
            cfl_safety: i.cfl_safety,
            end_time: i.end_time_s,
            reorthonormalize_every: i.reorthonormalize_every,
        })
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, o: &Overrides) -> Self {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(n) = o.nodes {
            self.nodes = n;
        }
        if let Some(dt) = o.dt {
            self.integrator.dt_s = Some(dt);
        }
        if let Some(t) = o.end_time {
            self.integrator.end_time_s = t;
        }
        if let Some(g) = o.gain {
            self.observer_gain = g;
        }
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        self
    }
}

/// Optional per-run overrides of an [`ExperimentConfig`].
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub nodes: Option<usize>,
    pub dt: Option<f64>,
    pub end_time: Option<f64>,
    pub gain: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}
