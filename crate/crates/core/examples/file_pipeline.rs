//! Offline pipeline: simulate, save the measurement log and truth to disk,
//! reload them and run the observer from the files alone.

use cosserat_observer::harness::config::InitialConfig;
use cosserat_observer::harness::export::{metadata_path, read_log, read_trajectory, write_log, write_trajectory};
use cosserat_observer::harness::{run_observer, run_truth, ExperimentConfig, OutputFormat, TwinSummary};

fn main() -> cosserat_observer::Result<()> {
    let mut c = ExperimentConfig::soft();
    c.initial_configuration = InitialConfig::Straight;
    c.integrator.end_time_s = 0.2;
    let truth = run_truth(&c)?;

    let dir = std::path::Path::new("out/file_pipeline");
    std::fs::create_dir_all(dir).expect("output directory");
    for format in [OutputFormat::Csv, OutputFormat::Json] {
        let log_path = dir.join(format!("log.{}", format.extension()));
        let truth_path = dir.join(format!("truth.{}", format.extension()));
        write_log(&truth.log, &log_path, format)?;
        write_trajectory(&truth.trajectory, &truth_path, format)?;

        let log = read_log(&log_path, format)?;
        let reloaded = read_trajectory(&truth_path, format)?;
        assert_eq!(reloaded, truth.trajectory);
        let run = run_observer(&c, &log, Some(&reloaded))?;
        let summary = TwinSummary::from_records(run.errors.as_deref().unwrap_or_default());
        println!(
            "{}: {} samples (metadata in {}), final error {:.3e}",
            log_path.display(),
            log.len(),
            metadata_path(&log_path).display(),
            summary.final_error
        );
    }
    Ok(())
}
