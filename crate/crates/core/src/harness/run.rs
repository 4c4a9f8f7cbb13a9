use serde::{Deserialize, Serialize};

use super::config::{EstimatePolicy, ExperimentConfig, InitialConfig, StudyKind};
use super::studies::{apply_noise, perturb_params, perturb_routing, NoiseGenerator};
use crate::actuation::TensionSchedule;
use crate::discretize::{
    kinetic_energy, FreeTip, IntegratorConfig, RodModel, SimulationState, Simulator,
};
use crate::error::{Error, Result};
use crate::metrics::{convergence_time, state_error, steady_state_error, ErrorRecord};
use crate::observer::{LogMetadata, Measurement, MeasurementLog, MeasurementSource, Observer};
use crate::se3::{Twist6, TwistExt};

/// Snapshots of a rod state at a fixed stride.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub snapshots: Vec<SimulationState>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&SimulationState> {
        self.snapshots.last()
    }
}

#[derive(Debug, Clone)]
pub struct TruthRun {
    pub trajectory: Trajectory,
    pub log: MeasurementLog,
}

#[derive(Debug, Clone)]
pub struct ObserverRun {
    pub trajectory: Trajectory,
    pub errors: Option<Vec<ErrorRecord>>,
}

#[derive(Debug, Clone)]
pub struct TwinRun {
    pub truth: Trajectory,
    pub estimate: Trajectory,
    pub errors: Vec<ErrorRecord>,
    /// Present when requested; it holds one sample per truth step.
    pub log: Option<MeasurementLog>,
}

/// Headline numbers of a twin run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinSummary {
    pub initial_error: f64,
    pub final_error: f64,
    /// Time after which the error stays below 5 % of its initial value.
    pub convergence_time_s: Option<f64>,
    /// Mean error over the last quarter of the horizon.
    pub steady_state_error: Option<f64>,
}

impl TwinSummary {
    pub const THRESHOLD: f64 = 0.05;

    pub fn from_records(records: &[ErrorRecord]) -> Self {
        let end = records.last().map_or(0.0, |r| r.t);
        TwinSummary {
            initial_error: records.first().map_or(0.0, |r| r.linf_state),
            final_error: records.last().map_or(0.0, |r| r.linf_state),
            convergence_time_s: convergence_time(records, Self::THRESHOLD),
            steady_state_error: steady_state_error(records, 0.75 * end),
        }
    }
}

/// Snapshot stride in truth steps; a multiple of the observer step ratio.
fn snapshot_stride(config: &ExperimentConfig, dt: f64) -> u64 {
    let ratio = config.integrator.observer_dt_ratio as u64;
    let raw = ((config.integrator.snapshot_interval_s / dt).round() as u64).max(1);
    raw.div_ceil(ratio) * ratio
}

/// Cantilever estimate of the first bending frequency, rad/s.
pub fn first_bending_frequency(model: &RodModel) -> f64 {
    let k = model.stiffness(0);
    let j = model.inertia(0);
    let ei = k[(1, 1)].min(k[(2, 2)]);
    let rho_a = j[(3, 3)];
    let l = model.grid().length();
    1.875f64.powi(2) * (ei / (rho_a * l.powi(4))).sqrt()
}

/// Static equilibrium under constant tendon tensions, reached by dynamic
/// relaxation with a uniform velocity drag. The returned state is at `t = 0`.
pub fn relax_to_equilibrium(
    config: &ExperimentConfig,
    model: &RodModel,
    dt: f64,
    tensions: &[f64],
) -> Result<SimulationState> {
    let mut held = model.clone();
    held.set_schedule(TensionSchedule::Constant(
        tensions.iter().map(|t| t * config.loads.tension_scale).collect(),
    ))?;
    let r = &config.relaxation;
    let drag = r.drag_per_s.unwrap_or_else(|| 2.0 * first_bending_frequency(model));
    let icfg = IntegratorConfig {
        dt,
        cfl_safety: config.integrator.cfl_safety,
        end_time: r.max_time_s,
        reorthonormalize_every: config.integrator.reorthonormalize_every,
    };
    let mut sim = Simulator::new(held, icfg)?.with_drag(drag);
    let mut state = sim.model().reference_state(0.0);
    sim.prepare(&mut state, &FreeTip)?;
    let check = ((1e-3 / dt).round() as u64).max(1);
    loop {
        sim.step(&mut state, &FreeTip)?;
        if sim.steps_taken() % check == 0 && state.time >= r.min_time_s {
            let ke = kinetic_energy(&state, sim.model());
            if ke < r.kinetic_energy_j {
                log::info!("relaxed after {:.3} s (kinetic energy {ke:.3e} J)", state.time);
                break;
            }
        }
        if state.time >= r.max_time_s {
            log::warn!(
                "relaxation stopped at {} s with kinetic energy {:.3e} J (target {} J)",
                r.max_time_s,
                kinetic_energy(&state, sim.model()),
                r.kinetic_energy_j
            );
            break;
        }
    }
    state.time = 0.0;
    Ok(state)
}

/// Initial truth state for `config`.
pub fn initial_truth_state(config: &ExperimentConfig, model: &RodModel, dt: f64) -> Result<SimulationState> {
    let base = model.params().base_pose;
    let grid = *model.grid();
    let mut state = match &config.initial_configuration {
        InitialConfig::Configuration(id) => {
            let tensions = InitialConfig::holding_tensions(*id)?;
            return relax_to_equilibrium(config, model, dt, &tensions);
        }
        InitialConfig::Straight => model.reference_state(0.0),
        InitialConfig::Strain(rows) => {
            let strain = rows.iter().map(|r| Twist6::from_row_slice(r)).collect();
            SimulationState::new(0.0, strain, vec![Twist6::zeros(); grid.nodes()], &grid, &base)?
        }
    };
    let icfg = IntegratorConfig {
        dt,
        cfl_safety: config.integrator.cfl_safety,
        end_time: config.integrator.end_time_s,
        reorthonormalize_every: 0,
    };
    Simulator::new(model.clone(), icfg)?.prepare(&mut state, &FreeTip)?;
    Ok(state)
}

fn measure(sim: &mut Simulator, state: &SimulationState) -> Result<Measurement> {
    Ok(Measurement {
        time: state.time,
        tip_velocity: sim.tip_velocity(state, &FreeTip)?,
        tip_rotation: Some(state.tip_pose().rotation),
    })
}

struct Truth {
    sim: Simulator,
    state: SimulationState,
    steps: u64,
}

impl Truth {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = config.model()?;
        let icfg = config.integrator_config(&model)?;
        let state = initial_truth_state(config, &model, icfg.dt)?;
        Ok(Truth {
            sim: Simulator::new(model, icfg)?,
            state,
            steps: 0,
        })
    }

    fn dt(&self) -> f64 {
        self.sim.config().dt
    }

    fn total_steps(&self) -> u64 {
        self.sim.config().steps()
    }

    fn advance(&mut self) -> Result<Measurement> {
        self.sim.step(&mut self.state, &FreeTip)?;
        self.steps += 1;
        measure(&mut self.sim, &self.state)
    }
}

/// Integrates the plant from the configured initial state, logging the tip
/// velocity and rotation after every step.
pub fn run_truth(config: &ExperimentConfig) -> Result<TruthRun> {
    let mut truth = Truth::new(config)?;
    let dt = truth.dt();
    let stride = snapshot_stride(config, dt);
    let mut log = MeasurementLog::new(LogMetadata {
        dt,
        seed: None,
        noise_amplitude: 0.0,
    });
    log.push(measure(&mut truth.sim, &truth.state)?)?;
    let mut trajectory = Trajectory {
        snapshots: vec![truth.state.clone()],
    };
    for _ in 0..truth.total_steps() {
        let m = truth.advance()?;
        log.push(m)?;
        if truth.steps % stride == 0 {
            trajectory.snapshots.push(truth.state.clone());
        }
    }
    Ok(TruthRun { trajectory, log })
}

/// Measurements as the observer sees them: noise is added for a noise study.
pub fn study_measurements(config: &ExperimentConfig, log: &MeasurementLog) -> Result<MeasurementLog> {
    match config.study {
        Some(s) if s.kind == StudyKind::Noise => apply_noise(log, s.amplitude, config.seed),
        _ => Ok(log.clone()),
    }
}

/// Observer model: the truth model with the study's perturbation applied.
pub fn observer_model(config: &ExperimentConfig) -> Result<RodModel> {
    let mut params = config.rod_parameters();
    let mut actuation = config.actuation();
    if let Some(s) = config.study {
        match s.kind {
            StudyKind::Noise => {}
            StudyKind::ParamPerturbation => params = perturb_params(&params, s.amplitude)?,
            StudyKind::RoutingPerturbation => {
                actuation.routings = actuation
                    .routings
                    .iter()
                    .map(|r| perturb_routing(r, s.amplitude))
                    .collect::<Result<_>>()?;
            }
        }
    }
    RodModel::new(params, actuation, config.nodes)
}

fn build_observer(
    config: &ExperimentConfig,
    truth_dt: f64,
    meas: &dyn MeasurementSource,
    truth_initial: Option<&SimulationState>,
) -> Result<Observer> {
    let model = observer_model(config)?;
    let icfg = IntegratorConfig {
        dt: truth_dt * config.integrator.observer_dt_ratio as f64,
        cfl_safety: config.integrator.cfl_safety,
        end_time: config.integrator.end_time_s,
        reorthonormalize_every: config.integrator.reorthonormalize_every,
    };
    let observer = Observer::new(model, icfg, config.gain()?, 0.0)?;
    match &config.initial_estimate {
        EstimatePolicy::Straight => {
            let mut o = observer;
            o.prepare(meas)?;
            Ok(o)
        }
        EstimatePolicy::Strain(rows) => {
            let model = observer.simulator().model();
            let grid = *model.grid();
            let strain = rows.iter().map(|r| Twist6::from_row_slice(r)).collect();
            let est = SimulationState::new(0.0, strain, vec![Twist6::zeros(); grid.nodes()], &grid, &model.params().base_pose)?;
            let mut o = observer.with_estimate(est)?;
            o.prepare(meas)?;
            Ok(o)
        }
        EstimatePolicy::Truth => {
            let init = truth_initial.ok_or_else(|| {
                Error::Config("initial_estimate = truth needs the truth trajectory".into())
            })?;
            observer.with_estimate(init.clone())
        }
    }
}

/// Replays `log` through the observer. Errors are computed against `truth`
/// when given; the estimate itself depends on `log` only (and on `truth`'s
/// first snapshot when the estimate policy asks for it).
pub fn run_observer(
    config: &ExperimentConfig,
    log: &MeasurementLog,
    truth: Option<&Trajectory>,
) -> Result<ObserverRun> {
    config.validate()?;
    let truth_dt = log.metadata.dt;
    if !(truth_dt > 0.0) {
        return Err(Error::Config("measurement log has no time step in its metadata".into()));
    }
    let (_, end) = log
        .span()
        .ok_or_else(|| Error::Config("measurement log is empty".into()))?;
    let mut observer = build_observer(config, truth_dt, log, truth.and_then(|t| t.snapshots.first()))?;
    let steps = observer.simulator().config().steps();
    let obs_dt = observer.simulator().config().dt;
    if steps as f64 * obs_dt > end + 1e-9 * end.max(1.0) {
        return Err(Error::MissingMeasurement {
            time: steps as f64 * obs_dt,
            start: 0.0,
            end,
        });
    }
    let ratio = config.integrator.observer_dt_ratio as u64;
    let stride = snapshot_stride(config, truth_dt) / ratio;
    let mut trajectory = Trajectory {
        snapshots: vec![observer.estimate().clone()],
    };
    let mut errors = Vec::new();
    let compare = |k: usize, est: &SimulationState, model: &RodModel, errors: &mut Vec<ErrorRecord>| -> Result<()> {
        if let Some(t) = truth {
            let snap = t.snapshots.get(k).ok_or_else(|| {
                Error::GridMismatch("truth trajectory is shorter than the observer run".into())
            })?;
            errors.push(state_error(snap, est, model)?);
        }
        Ok(())
    };
    // Errors are weighed with the truth model's J and K.
    let model = config.model()?;
    compare(0, observer.estimate(), &model, &mut errors)?;
    for k in 1..=steps {
        observer.step(log)?;
        if k % stride == 0 {
            trajectory.snapshots.push(observer.estimate().clone());
            compare(trajectory.snapshots.len() - 1, observer.estimate(), &model, &mut errors)?;
        }
    }
    Ok(ObserverRun {
        trajectory,
        errors: truth.map(|_| errors),
    })
}

/// Truth run followed by an observer run on its (study-modified) log.
///
/// Truth and observer advance in lockstep and only a short window of the
/// log is held in memory unless `retain_log` is set. The result is identical
/// to [`run_truth`], [`study_measurements`] and [`run_observer`] in sequence.
pub fn run_twin(config: &ExperimentConfig, retain_log: bool) -> Result<TwinRun> {
    let mut noise = match config.study {
        Some(s) if s.kind == StudyKind::Noise => {
            // The noise scale needs the whole log; a first pass finds it.
            let mut pass = Truth::new(config)?;
            let mut max = [0.0f64; 2];
            let mut track = |m: &Measurement| {
                max[0] = max[0].max(m.tip_velocity.angular().norm());
                max[1] = max[1].max(m.tip_velocity.linear().norm());
            };
            track(&measure(&mut pass.sim, &pass.state)?);
            for _ in 0..pass.total_steps() {
                track(&pass.advance()?);
            }
            Some(NoiseGenerator::new(s.amplitude, max, config.seed)?)
        }
        _ => None,
    };

    let mut truth = Truth::new(config)?;
    let dt = truth.dt();
    let stride = snapshot_stride(config, dt);
    let ratio = config.integrator.observer_dt_ratio as u64;
    let metadata = LogMetadata {
        dt,
        seed: noise.as_ref().map(|_| config.seed),
        noise_amplitude: config.study.filter(|s| s.kind == StudyKind::Noise).map_or(0.0, |s| s.amplitude),
    };
    let mut window = MeasurementLog::new(metadata.clone());
    let mut full = retain_log.then(|| MeasurementLog::new(metadata));
    let mut record = |m: Measurement, window: &mut MeasurementLog| -> Result<()> {
        let mut m = m;
        if let Some(g) = noise.as_mut() {
            g.apply(&mut m);
        }
        if let Some(f) = full.as_mut() {
            f.push(m)?;
        }
        window.push(m)
    };
    record(measure(&mut truth.sim, &truth.state)?, &mut window)?;

    let mut observer = build_observer(config, dt, &window, Some(&truth.state))?;
    let model = config.model()?;
    let mut truth_traj = Trajectory {
        snapshots: vec![truth.state.clone()],
    };
    let mut est_traj = Trajectory {
        snapshots: vec![observer.estimate().clone()],
    };
    let mut errors = vec![state_error(&truth.state, observer.estimate(), &model)?];
    let obs_steps = observer.simulator().config().steps();
    for _ in 0..obs_steps * ratio {
        let m = truth.advance()?;
        record(m, &mut window)?;
        if truth.steps % ratio == 0 {
            observer.step(&window)?;
            window.discard_before(observer.estimate().time);
        }
        if truth.steps % stride == 0 {
            truth_traj.snapshots.push(truth.state.clone());
            est_traj.snapshots.push(observer.estimate().clone());
            errors.push(state_error(&truth.state, observer.estimate(), &model)?);
        }
    }
    drop(record);
    Ok(TwinRun {
        truth: truth_traj,
        estimate: est_traj,
        errors,
        log: full,
    })
}
