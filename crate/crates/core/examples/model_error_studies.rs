//! Observer with a mismatched model: perturbed inertia and stiffness, then a
//! perturbed tendon routing. Prints the steady error per output.
//!
//! `cargo run --release --example model_error_studies -- [end time]`

use cosserat_observer::harness::{run_observer, run_truth, ExperimentConfig, StudyKind, StudySpec};
use cosserat_observer::metrics::ErrorRecord;

fn main() -> cosserat_observer::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let end: f64 = std::env::args().nth(1).map_or(2.0, |a| a.parse().expect("end time in seconds"));
    let mut c = ExperimentConfig::soft();
    c.integrator.end_time_s = end;
    let truth = run_truth(&c)?;
    let columns = &ErrorRecord::COLUMNS[1..];
    println!("{:>22} {}", "", columns.iter().map(|n| format!("{n:>17}")).collect::<String>());
    for study in [
        None,
        Some(StudyKind::ParamPerturbation),
        Some(StudyKind::RoutingPerturbation),
    ] {
        let mut cc = c.clone();
        cc.study = study.map(|kind| StudySpec {
            kind,
            amplitude: kind.paper_amplitude(),
        });
        let errors = run_observer(&cc, &truth.log, Some(&truth.trajectory))?.errors.unwrap_or_default();
        let tail: Vec<_> = errors.iter().filter(|r| r.t >= end - 0.5).collect();
        let mut mean = [0.0; 12];
        for r in &tail {
            for (m, v) in mean.iter_mut().zip(r.values()) {
                *m += v / tail.len() as f64;
            }
        }
        let name = study.map_or("baseline", |k| k.name());
        println!("{name:>22} {}", mean[1..].iter().map(|v| format!("{v:17.3e}")).collect::<String>());
    }
    Ok(())
}
