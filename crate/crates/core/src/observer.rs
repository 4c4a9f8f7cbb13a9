//! Boundary observer: a copy of the discretized plant whose tip condition
//! carries the extra wrench `−Γ(η̂ − η)(ℓ, t)` built from tip-velocity
//! measurements.

use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::discretize::{
    IntegratorConfig, RodModel, SimulationState, Simulator, StageTrace, TipCondition, TipDamping, TipSource,
};
use crate::error::{Error, Result};
use crate::se3::{Mat6, Rotation, Twist6};

/// Default gain magnitude, `Γ = 0.01·I`.
pub const DEFAULT_GAIN: f64 = 0.01;

/// Symmetric positive definite observer gain `Γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGain(Mat6);

impl ObserverGain {
    pub fn new(gamma: Mat6) -> Result<Self> {
        let asym = (gamma - gamma.transpose()).amax();
        if asym > 1e-12 * gamma.amax().max(1.0) {
            return Err(Error::Config("observer gain Γ must be symmetric".into()));
        }
        if Cholesky::new(gamma).is_none() {
            return Err(Error::Config("observer gain Γ must be positive definite".into()));
        }
        Ok(ObserverGain(gamma))
    }

    /// `Γ = γ·I` with `γ > 0`.
    pub fn scalar(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("observer gain must be positive, got {gamma}")));
        }
        Ok(ObserverGain(Mat6::identity() * gamma))
    }

    /// `Γ = 0`: the observer degenerates to an open-loop model prediction.
    pub fn open_loop() -> Self {
        ObserverGain(Mat6::zeros())
    }

    pub fn matrix(&self) -> &Mat6 {
        &self.0
    }

    pub fn max_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0).eigenvalues.max()
    }

    pub fn is_open_loop(&self) -> bool {
        self.0.amax() == 0.0
    }
}

impl Default for ObserverGain {
    fn default() -> Self {
        ObserverGain(Mat6::identity() * DEFAULT_GAIN)
    }
}

/// One tip sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub time: f64,
    pub tip_velocity: Twist6,
    pub tip_rotation: Option<Rotation>,
}

/// Provenance of a measurement log.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LogMetadata {
    pub dt: f64,
    pub seed: Option<u64>,
    pub noise_amplitude: f64,
}

/// Tip measurements with strictly increasing sample times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementLog {
    samples: Vec<Measurement>,
    pub metadata: LogMetadata,
}

impl MeasurementLog {
    pub fn new(metadata: LogMetadata) -> Self {
        MeasurementLog {
            samples: Vec::new(),
            metadata,
        }
    }

    pub fn from_samples(samples: Vec<Measurement>, metadata: LogMetadata) -> Result<Self> {
        let mut log = MeasurementLog::new(metadata);
        log.samples.reserve(samples.len());
        for m in samples {
            log.push(m)?;
        }
        Ok(log)
    }

    pub fn push(&mut self, m: Measurement) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if !(m.time > last.time) {
                return Err(Error::Config(format!(
                    "measurement times must increase strictly ({} after {})",
                    m.time, last.time
                )));
            }
        }
        if !m.time.is_finite() || !m.tip_velocity.iter().all(|x| x.is_finite()) {
            return Err(Error::Config(format!("non-finite measurement at t = {}", m.time)));
        }
        self.samples.push(m);
        Ok(())
    }

    pub fn samples(&self) -> &[Measurement] {
        &self.samples
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [Measurement] {
        &mut self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.time, self.samples.last()?.time))
    }

    /// Drops samples that are no longer needed to serve times `≥ t`.
    pub fn discard_before(&mut self, t: f64) {
        let idx = self.samples.partition_point(|m| m.time <= t);
        if idx > 1 {
            self.samples.drain(..idx - 1);
        }
    }
}

/// Anything that can produce a tip measurement at a requested time.
pub trait MeasurementSource {
    fn measurement_at(&self, t: f64) -> Result<Measurement>;
}

/// A single sample held for all times.
impl MeasurementSource for Measurement {
    fn measurement_at(&self, _t: f64) -> Result<Measurement> {
        Ok(*self)
    }
}

impl MeasurementSource for MeasurementLog {
    fn measurement_at(&self, t: f64) -> Result<Measurement> {
        measurement_interpolate(self, t)
    }
}

/// Linear interpolation of the tip velocity and nearest-sample rotation.
/// Times within a round-off margin of the span ends are clamped.
pub fn measurement_interpolate(log: &MeasurementLog, t: f64) -> Result<Measurement> {
    let samples = log.samples();
    let (start, end) = log.span().ok_or(Error::MissingMeasurement {
        time: t,
        start: f64::NAN,
        end: f64::NAN,
    })?;
    let slack = 1e-9 * (end - start).max(log.metadata.dt).max(f64::MIN_POSITIVE);
    if !(t >= start - slack && t <= end + slack) {
        return Err(Error::MissingMeasurement {
            time: t,
            start,
            end,
        });
    }
    let t = t.clamp(start, end);
    let hi = samples.partition_point(|m| m.time < t);
    if hi == 0 {
        return Ok(Measurement { time: t, ..samples[0] });
    }
    if samples[hi.min(samples.len() - 1)].time == t {
        return Ok(samples[hi]);
    }
    let (a, b) = (&samples[hi - 1], &samples[hi]);
    let lambda = (t - a.time) / (b.time - a.time);
    let tip_velocity = a.tip_velocity + (b.tip_velocity - a.tip_velocity) * lambda;
    let tip_rotation = if lambda < 0.5 { a.tip_rotation } else { b.tip_rotation };
    Ok(Measurement {
        time: t,
        tip_velocity,
        tip_rotation,
    })
}

/// `−Γ(η̂_tip − η_tip)`.
pub fn injection_wrench(estimate_tip: &Twist6, meas: &Measurement, gain: &ObserverGain) -> Twist6 {
    -(gain.matrix() * (estimate_tip - meas.tip_velocity))
}

/// Largest decay rate the tip penalty imposes on the last node,
/// `ρ(J⁻¹ Z (Z + Γ)⁻¹ Γ) / w_N`. RK4 needs `dt` times this below about 2.78.
pub fn boundary_penalty_rate(model: &RodModel, gain: &ObserverGain) -> f64 {
    let n = model.grid().nodes();
    let z = model.tip_impedance();
    let Some(series) = (z + gain.matrix()).try_inverse() else {
        return 0.0;
    };
    let Some(j_inv) = model.inertia(n - 1).try_inverse() else {
        return f64::INFINITY;
    };
    let m = j_inv * z * series * gain.matrix();
    let rho = m.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max);
    rho / model.grid().weight(n - 1)
}

/// RK4 stability limit on the negative real axis.
const RK4_REAL_LIMIT: f64 = 2.78;

/// Estimated rod state.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub estimate: SimulationState,
}

/// Straight, motionless estimate: `ξ̂ ≡ ξₒ`, `η̂ ≡ 0`.
pub fn init_straight_estimate(model: &RodModel, time: f64) -> ObserverState {
    ObserverState {
        estimate: model.reference_state(time),
    }
}

fn tip_condition(
    use_rotation: bool,
    gain: &ObserverGain,
    meas: &dyn MeasurementSource,
    t: f64,
) -> Result<TipCondition> {
    let m = meas.measurement_at(t)?;
    let rotation = if use_rotation {
        m.tip_rotation
    } else {
        None
    };
    Ok(TipCondition {
        extra_wrench: Twist6::zeros(),
        damping: Some(TipDamping {
            gain: *gain.matrix(),
            reference_velocity: m.tip_velocity,
        }),
        rotation,
    })
}

/// Advances the estimate by one step of `simulator`, reading measurements at
/// every stage time.
pub fn observer_step(
    obs: &mut ObserverState,
    simulator: &mut Simulator,
    meas: &dyn MeasurementSource,
    gain: &ObserverGain,
) -> Result<()> {
    let use_rotation = simulator.model().params().tip_load_global.amax() > 0.0;
    let source = |t: f64| tip_condition(use_rotation, gain, meas, t);
    simulator.step(&mut obs.estimate, &source)
}

/// Tip source replaying the plant's own stage traces, one per RK4 stage.
struct StageSource<'a> {
    traces: &'a [StageTrace; 4],
    gain: &'a ObserverGain,
    use_rotation: bool,
}

impl StageSource<'_> {
    fn condition(&self, trace: &StageTrace) -> Result<TipCondition> {
        let m = Measurement {
            time: trace.time,
            tip_velocity: trace.velocity,
            tip_rotation: trace.rotation,
        };
        if self.use_rotation && m.tip_rotation.is_none() {
            return Err(Error::MissingMeasurement {
                time: m.time,
                start: m.time,
                end: m.time,
            });
        }
        tip_condition(self.use_rotation, self.gain, &m, m.time)
    }
}

impl TipSource for StageSource<'_> {
    fn tip_condition(&self, t: f64) -> Result<TipCondition> {
        let trace = self.traces.iter().find(|s| s.time == t).ok_or(Error::MissingMeasurement {
            time: t,
            start: self.traces[0].time,
            end: self.traces[3].time,
        })?;
        self.condition(trace)
    }

    fn stage_condition(&self, t: f64, stage: usize) -> Result<TipCondition> {
        let trace = &self.traces[stage];
        if (trace.time - t).abs() > 1e-12 * t.abs().max(1.0) {
            return Err(Error::MissingMeasurement {
                time: t,
                start: self.traces[0].time,
                end: self.traces[3].time,
            });
        }
        self.condition(trace)
    }
}

/// Observer session: model copy, integrator, gain and current estimate.
#[derive(Debug, Clone)]
pub struct Observer {
    simulator: Simulator,
    gain: ObserverGain,
    state: ObserverState,
}

impl Observer {
    /// Starts from the straight estimate at `t0`.
    pub fn new(model: RodModel, config: IntegratorConfig, gain: ObserverGain, t0: f64) -> Result<Self> {
        let rate = boundary_penalty_rate(&model, &gain);
        if rate * config.dt > RK4_REAL_LIMIT {
            log::warn!(
                "observer gain {:.3e} gives a tip penalty rate {rate:.3e}/s; dt = {:.3e} s exceeds the RK4 limit {:.3e} s",
                gain.max_eigenvalue(),
                config.dt,
                RK4_REAL_LIMIT / rate
            );
        }
        let state = init_straight_estimate(&model, t0);
        let simulator = Simulator::new(model, config)?;
        Ok(Observer {
            simulator,
            gain,
            state,
        })
    }

    pub fn with_estimate(mut self, estimate: SimulationState) -> Result<Self> {
        estimate.validate(self.simulator.model().grid())?;
        self.state.estimate = estimate;
        Ok(self)
    }

    /// Makes the estimate consistent with the tip condition at its time.
    pub fn prepare(&mut self, meas: &dyn MeasurementSource) -> Result<()> {
        let use_rotation = self.simulator.model().params().tip_load_global.amax() > 0.0;
        let gain = self.gain;
        let source = |t: f64| tip_condition(use_rotation, &gain, meas, t);
        self.simulator.prepare(&mut self.state.estimate, &source)
    }

    pub fn step(&mut self, meas: &dyn MeasurementSource) -> Result<()> {
        observer_step(&mut self.state, &mut self.simulator, meas, &self.gain)
    }

    /// Steps with the plant's stage traces as measurements, so each observer
    /// stage sees exactly the tip velocity the matching plant stage produced.
    /// Both integrators must share the step.
    pub fn step_with_stages(&mut self, traces: &[StageTrace; 4]) -> Result<()> {
        let source = StageSource {
            traces,
            gain: &self.gain,
            use_rotation: self.simulator.model().params().tip_load_global.amax() > 0.0,
        };
        self.simulator.step(&mut self.state.estimate, &source)
    }

    pub fn estimate(&self) -> &SimulationState {
        &self.state.estimate
    }

    pub fn state(&self) -> &ObserverState {
        &self.state
    }

    pub fn gain(&self) -> &ObserverGain {
        &self.gain
    }

    pub fn simulator(&self) -> &Simulator {
        &self.simulator
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(t: f64, v: f64) -> Measurement {
        Measurement {
            time: t,
            tip_velocity: Twist6::repeat(v),
            tip_rotation: Some(Rotation::identity()),
        }
    }

    #[test]
    fn gain_validation() {
        assert!(ObserverGain::scalar(0.0).is_err());
        assert!(ObserverGain::new(Mat6::identity() * -1.0).is_err());
        let mut asym = Mat6::identity();
        asym[(0, 1)] = 0.5;
        assert!(ObserverGain::new(asym).is_err());
        assert_eq!(ObserverGain::default(), ObserverGain::scalar(0.01).unwrap());
    }

    #[test]
    fn injection_examples() {
        let gain = ObserverGain::default();
        let meas = sample(0.0, 0.3);
        assert_eq!(injection_wrench(&Twist6::repeat(0.3), &meas, &gain), Twist6::zeros());
        let zero = Measurement { tip_velocity: Twist6::zeros(), ..meas };
        let w = injection_wrench(&Twist6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0), &zero, &gain);
        assert_relative_eq!(w, Twist6::new(0.0, 0.0, 0.0, 0.0, 0.0, -0.01));
        let big = ObserverGain::scalar(0.03).unwrap();
        let w3 = injection_wrench(&Twist6::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0), &zero, &big);
        assert_relative_eq!(w3, w * 3.0, epsilon = 1e-15);
    }

    #[test]
    fn log_requires_increasing_time() {
        let mut log = MeasurementLog::default();
        log.push(sample(0.0, 0.0)).unwrap();
        assert!(log.push(sample(0.0, 1.0)).is_err());
        assert!(log.push(sample(-1.0, 1.0)).is_err());
        log.push(sample(0.1, 1.0)).unwrap();
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn interpolation_cases() {
        let log = MeasurementLog::from_samples(
            vec![sample(0.0, 0.0), sample(0.1, 1.0), sample(0.2, 4.0)],
            LogMetadata::default(),
        )
        .unwrap();
        assert_eq!(measurement_interpolate(&log, 0.1).unwrap(), log.samples()[1]);
        let mid = measurement_interpolate(&log, 0.15).unwrap();
        assert_relative_eq!(mid.tip_velocity, Twist6::repeat(2.5), epsilon = 1e-14);
        assert!(matches!(
            measurement_interpolate(&log, 0.3),
            Err(Error::MissingMeasurement { .. })
        ));
        assert!(measurement_interpolate(&log, -0.01).is_err());
        assert!(measurement_interpolate(&MeasurementLog::default(), 0.0).is_err());
    }

    #[test]
    fn interpolation_error_is_second_order() {
        let err = |dt: f64| {
            let samples = (0..=(1.0 / dt).round() as usize)
                .map(|k| sample(k as f64 * dt, (k as f64 * dt * 3.0).sin()))
                .collect();
            let log = MeasurementLog::from_samples(samples, LogMetadata { dt, ..Default::default() }).unwrap();
            (0..200)
                .map(|k| {
                    let t = 0.0037 + k as f64 * 0.0049;
                    (measurement_interpolate(&log, t).unwrap().tip_velocity[0] - (3.0 * t).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(0.01) / err(0.005);
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn discard_keeps_bracketing_sample() {
        let mut log = MeasurementLog::from_samples(
            (0..10).map(|k| sample(k as f64, k as f64)).collect(),
            LogMetadata::default(),
        )
        .unwrap();
        log.discard_before(4.5);
        assert_eq!(log.samples()[0].time, 4.0);
        assert!(measurement_interpolate(&log, 4.5).is_ok());
    }

    #[test]
    fn penalty_rate_is_bounded_by_the_impedance() {
        use crate::actuation::Actuation;
        use crate::discretize::stable_dt;
        use crate::rod::{Material, RodParameters};
        let params = RodParameters::from_material(0.5, &Material::spring_steel_with_disks());
        let model = RodModel::new(params, Actuation::none(), 41).unwrap();
        assert_eq!(boundary_penalty_rate(&model, &ObserverGain::open_loop()), 0.0);
        let dt = stable_dt(model.params(), model.grid().spacing(), 0.5).unwrap();
        let paper = boundary_penalty_rate(&model, &ObserverGain::default());
        assert!(paper * dt < RK4_REAL_LIMIT);
        let huge = boundary_penalty_rate(&model, &ObserverGain::scalar(1e9).unwrap());
        let stiff = boundary_penalty_rate(&model, &ObserverGain::scalar(1e3).unwrap());
        assert!(paper < stiff && stiff < huge);
        assert!(huge.is_finite());
    }
}
