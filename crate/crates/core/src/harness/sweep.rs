use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OutputFormat, StudyKind, StudySpec};
use super::run::{run_observer, run_truth, run_twin, study_measurements, TruthRun, TwinSummary};
use crate::error::{Error, Result};

/// Logs larger than this are not shared between cells; each cell then
/// streams its own truth run.
const SHARED_LOG_LIMIT_BYTES: f64 = 1e9;
const BYTES_PER_SAMPLE: f64 = 160.0;

/// Grid of study cells. A `None` kind is the baseline, run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub kinds: Vec<Option<StudyKind>>,
    pub amplitudes: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub study: String,
    pub amplitude: f64,
    pub seed: u64,
    pub initial_error: f64,
    pub final_error: f64,
    pub convergence_time_s: Option<f64>,
    pub steady_state_error: Option<f64>,
}

impl SweepSpec {
    fn cells(&self) -> Vec<(Option<StudySpec>, u64)> {
        let mut out = Vec::new();
        for kind in &self.kinds {
            for &seed in &self.seeds {
                match kind {
                    None => out.push((None, seed)),
                    Some(k) => out.extend(
                        self.amplitudes
                            .iter()
                            .map(|&amplitude| (Some(StudySpec { kind: *k, amplitude }), seed)),
                    ),
                }
            }
        }
        out
    }
}

fn cell_config(base: &ExperimentConfig, study: Option<StudySpec>, seed: u64) -> ExperimentConfig {
    let mut c = base.clone();
    c.study = study;
    c.seed = seed;
    c
}

fn summarize(study: Option<StudySpec>, seed: u64, s: TwinSummary) -> SweepCell {
    SweepCell {
        study: study.map_or("baseline", |s| s.kind.name()).to_string(),
        amplitude: study.map_or(0.0, |s| s.amplitude),
        seed,
        initial_error: s.initial_error,
        final_error: s.final_error,
        convergence_time_s: s.convergence_time_s,
        steady_state_error: s.steady_state_error,
    }
}

/// Runs every cell in parallel. The truth run is shared when its log fits in
/// memory; cell results do not depend on which path is taken.
pub fn run_sweep(base: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    let cells = spec.cells();
    for (study, _) in &cells {
        if let Some(s) = study {
            s.validate()?;
        }
    }
    let model = base.model()?;
    let icfg = base.integrator_config(&model)?;
    let log_bytes = icfg.steps() as f64 * BYTES_PER_SAMPLE;
    if log_bytes < SHARED_LOG_LIMIT_BYTES {
        let truth: TruthRun = run_truth(base)?;
        cells
            .into_par_iter()
            .map(|(study, seed)| {
                let c = cell_config(base, study, seed);
                let log = study_measurements(&c, &truth.log)?;
                let run = run_observer(&c, &log, Some(&truth.trajectory))?;
                let errors = run.errors.unwrap_or_default();
                Ok(summarize(study, seed, TwinSummary::from_records(&errors)))
            })
            .collect()
    } else {
        cells
            .into_par_iter()
            .map(|(study, seed)| {
                let run = run_twin(&cell_config(base, study, seed), false)?;
                Ok(summarize(study, seed, TwinSummary::from_records(&run.errors)))
            })
            .collect()
    }
}

pub fn write_sweep(cells: &[SweepCell], path: &Path, format: OutputFormat) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    match format {
        OutputFormat::Csv => {
            let csv_err = |source| Error::Csv {
                path: path.to_path_buf(),
                source,
            };
            let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
            for c in cells {
                w.serialize(c).map_err(csv_err)?;
            }
            w.flush().map_err(io)
        }
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(cells).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?;
            std::fs::write(path, text + "\n").map_err(io)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_grid() {
        let spec = SweepSpec {
            kinds: vec![None, Some(StudyKind::Noise)],
            amplitudes: vec![0.1, 0.2],
            seeds: vec![1, 2, 3],
        };
        let cells = spec.cells();
        assert_eq!(cells.len(), 3 + 6);
        assert!(cells[..3].iter().all(|(s, _)| s.is_none()));
    }
}
