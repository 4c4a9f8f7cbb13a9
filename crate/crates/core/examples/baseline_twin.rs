//! Twin run: a truth rod and the boundary observer fed with its tip velocity.
//! Writes truth, estimate and error tables to `out/baseline_twin/`.
//!
//! `cargo run --release --example baseline_twin -- [configuration] [end time]`

use cosserat_observer::harness::config::InitialConfig;
use cosserat_observer::harness::export::{write_errors, write_trajectory};
use cosserat_observer::harness::{run_twin, ExperimentConfig, OutputFormat, TwinSummary};
use cosserat_observer::metrics::tip_outputs;

fn main() -> cosserat_observer::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let id: u8 = args.next().map_or(1, |a| a.parse().expect("configuration 1, 2 or 3"));
    let end: f64 = args.next().map_or(2.0, |a| a.parse().expect("end time in seconds"));

    let mut c = ExperimentConfig::soft();
    c.initial_configuration = InitialConfig::Configuration(id);
    c.integrator.end_time_s = end;
    let run = run_twin(&c, false)?;

    println!("    t      error     truth tip z   estimate tip z");
    for (k, r) in run.errors.iter().enumerate().step_by(20) {
        let (pt, _) = tip_outputs(&run.truth.snapshots[k]);
        let (pe, _) = tip_outputs(&run.estimate.snapshots[k]);
        println!("{:6.3}  {:9.3e}  {:+.5}       {:+.5}", r.t, r.linf_state, pt.z, pe.z);
    }
    let summary = TwinSummary::from_records(&run.errors);
    println!("{summary:#?}");

    let dir = std::path::Path::new("out/baseline_twin");
    std::fs::create_dir_all(dir).expect("output directory");
    write_trajectory(&run.truth, &dir.join("truth.csv"), OutputFormat::Csv)?;
    write_trajectory(&run.estimate, &dir.join("estimate.csv"), OutputFormat::Csv)?;
    write_errors(&run.errors, &dir.join("errors.csv"), OutputFormat::Csv)?;
    println!("tables written to {}", dir.display());
    Ok(())
}
