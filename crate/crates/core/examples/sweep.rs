//! Parallel sweep over study kinds, amplitudes and seeds on a short horizon.

use cosserat_observer::harness::config::InitialConfig;
use cosserat_observer::harness::sweep::write_sweep;
use cosserat_observer::harness::{run_sweep, ExperimentConfig, OutputFormat, StudyKind, SweepSpec};

fn main() -> cosserat_observer::Result<()> {
    let mut c = ExperimentConfig::soft();
    c.initial_configuration = InitialConfig::Straight;
    c.integrator.end_time_s = 0.3;
    let spec = SweepSpec {
        kinds: vec![
            None,
            Some(StudyKind::Noise),
            Some(StudyKind::ParamPerturbation),
            Some(StudyKind::RoutingPerturbation),
        ],
        amplitudes: vec![0.05, 0.1],
        seeds: vec![1, 2],
    };
    let cells = run_sweep(&c, &spec)?;
    println!("{:>22} {:>9} {:>5} {:>12} {:>12}", "study", "amplitude", "seed", "final", "steady");
    for cell in &cells {
        println!(
            "{:>22} {:9.2} {:5} {:12.4e} {:12.4e}",
            cell.study,
            cell.amplitude,
            cell.seed,
            cell.final_error,
            cell.steady_state_error.unwrap_or(f64::NAN)
        );
    }
    let dir = std::path::Path::new("out");
    std::fs::create_dir_all(dir).expect("output directory");
    write_sweep(&cells, &dir.join("sweep.csv"), OutputFormat::Csv)?;
    Ok(())
}
