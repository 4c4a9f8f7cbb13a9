use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actuation::TendonRouting;
use crate::error::{Error, Result};
use crate::observer::{Measurement, MeasurementLog};
use crate::rod::{Modulation, RodParameters};
use crate::se3::TwistExt;

/// Spatial frequency of the parameter and routing perturbations, rad/m.
pub const PERTURBATION_FREQUENCY: f64 = 20.0;

/// Largest `‖w‖` and `‖v‖` over the log.
pub fn block_maxima(log: &MeasurementLog) -> [f64; 2] {
    log.samples().iter().fold([0.0f64; 2], |acc, m| {
        [
            acc[0].max(m.tip_velocity.angular().norm()),
            acc[1].max(m.tip_velocity.linear().norm()),
        ]
    })
}

/// Per-sample, per-component uniform noise on the tip velocity. Each
/// component gets `U(−1, 1) · amplitude · scale` where `scale` is the
/// maximum magnitude of its (angular | linear) block.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    rng: ChaCha8Rng,
    amplitude: f64,
    scale: [f64; 2],
}

impl NoiseGenerator {
    pub fn new(amplitude: f64, block_maxima: [f64; 2], seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(Error::Config(format!("noise amplitude must lie in [0, 1], got {amplitude}")));
        }
        Ok(NoiseGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            amplitude,
            scale: block_maxima,
        })
    }

    pub fn apply(&mut self, m: &mut Measurement) {
        for c in 0..6 {
            let u: f64 = self.rng.random_range(-1.0..=1.0);
            m.tip_velocity[c] += u * self.amplitude * self.scale[c / 3];
        }
    }
}

/// Noisy copy of `log`; rotations are left untouched.
pub fn apply_noise(log: &MeasurementLog, amplitude: f64, seed: u64) -> Result<MeasurementLog> {
    let mut gen = NoiseGenerator::new(amplitude, block_maxima(log), seed)?;
    let mut out = log.clone();
    for m in out.samples_mut() {
        gen.apply(m);
    }
    out.metadata.seed = Some(seed);
    out.metadata.noise_amplitude = amplitude;
    Ok(out)
}

/// `J(s)`, `K(s)` scaled by `1 + amplitude·sin(20 s)`.
pub fn perturb_params(params: &RodParameters, amplitude: f64) -> Result<RodParameters> {
    if !(amplitude >= 0.0) || amplitude >= 1.0 {
        return Err(Error::Config(format!(
            "parameter perturbation amplitude must lie in [0, 1) to keep J and K positive definite, got {amplitude}"
        )));
    }
    let mut out = params.clone();
    if amplitude > 0.0 {
        out.sections.modulations.push(Modulation {
            amplitude,
            frequency: PERTURBATION_FREQUENCY,
        });
    }
    Ok(out)
}

/// `D(s)` scaled by `1 + amplitude·sin(20 s)`; the derivative follows by the
/// product rule.
pub fn perturb_routing(routing: &TendonRouting, amplitude: f64) -> Result<TendonRouting> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::Config(format!("routing perturbation amplitude must be ≥ 0, got {amplitude}")));
    }
    if amplitude == 0.0 {
        return Ok(routing.clone());
    }
    Ok(TendonRouting::Modulated {
        base: Box::new(routing.clone()),
        amplitude,
        frequency: PERTURBATION_FREQUENCY,
    })
}
