//! Measurement-noise study: one truth run, the observer replayed on noisy
//! copies of its log.
//!
//! `cargo run --release --example noise_study -- [end time]`

use cosserat_observer::harness::{run_observer, run_truth, study_measurements, ExperimentConfig, StudyKind, StudySpec};
use cosserat_observer::metrics::steady_state_error;

fn main() -> cosserat_observer::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let end: f64 = std::env::args().nth(1).map_or(2.0, |a| a.parse().expect("end time in seconds"));
    let mut c = ExperimentConfig::soft();
    c.integrator.end_time_s = end;
    let truth = run_truth(&c)?;
    println!("amplitude  steady error (last 0.5 s)  final error");
    for amplitude in [0.0, 0.05, 0.1, 0.2] {
        let mut noisy = c.clone();
        noisy.study = Some(StudySpec {
            kind: StudyKind::Noise,
            amplitude,
        });
        let log = study_measurements(&noisy, &truth.log)?;
        let errors = run_observer(&noisy, &log, Some(&truth.trajectory))?.errors.unwrap_or_default();
        let steady = steady_state_error(&errors, end - 0.5).unwrap_or(f64::NAN);
        println!("{amplitude:9.2}  {steady:26.4e}  {:.4e}", errors.last().map_or(f64::NAN, |r| r.linf_state));
    }
    Ok(())
}
