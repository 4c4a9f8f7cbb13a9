use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use super::run::Trajectory;
use crate::error::{Error, Result};
use crate::metrics::ErrorRecord;
use crate::observer::{LogMetadata, Measurement, MeasurementLog};
use crate::se3::{Mat3, Pose, Rotation, Twist6, Vec3};
use crate::discretize::SimulationState;

pub const TRAJECTORY_COLUMNS: [&str; 26] = [
    "t", "node", "px", "py", "pz", "R11", "R12", "R13", "R21", "R22", "R23", "R31", "R32", "R33", "u1",
    "u2", "u3", "q1", "q2", "q3", "w1", "w2", "w3", "v1", "v2", "v3",
];

pub const LOG_COLUMNS: [&str; 16] = [
    "t", "w1", "w2", "w3", "v1", "v2", "v3", "R11", "R12", "R13", "R21", "R22", "R23", "R31", "R32", "R33",
];

/// Named columns of reals, one row per record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct JsonTable {
    columns: Vec<String>,
    data: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn check_columns(&self, expected: &[&str]) -> Result<()> {
        if self.columns.len() < expected.len() || self.columns.iter().zip(expected).any(|(a, b)| a != b) {
            return Err(Error::Config(format!(
                "unexpected columns {:?}, expected {:?}",
                self.columns, expected
            )));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io)?;
        match format {
            OutputFormat::Csv => {
                let csv_err = |source| Error::Csv {
                    path: path.to_path_buf(),
                    source,
                };
                let mut w = csv::Writer::from_writer(BufWriter::new(file));
                w.write_record(&self.columns).map_err(csv_err)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(|x| x.to_string())).map_err(csv_err)?;
                }
                w.flush().map_err(io)?;
            }
            OutputFormat::Json => {
                let data = (0..self.columns.len())
                    .map(|c| self.rows.iter().map(|r| r[c]).collect())
                    .collect();
                let table = JsonTable {
                    columns: self.columns.clone(),
                    data,
                };
                let mut w = BufWriter::new(file);
                serde_json::to_writer(&mut w, &table).map_err(|source| Error::Json {
                    path: path.to_path_buf(),
                    source,
                })?;
                w.write_all(b"\n").map_err(io)?;
                w.flush().map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read(path: &Path, format: OutputFormat) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        match format {
            OutputFormat::Csv => {
                let csv_err = |source| Error::Csv {
                    path: path.to_path_buf(),
                    source,
                };
                let mut r = csv::Reader::from_reader(BufReader::new(file));
                let columns = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
                let mut rows = Vec::new();
                for rec in r.records() {
                    let rec = rec.map_err(csv_err)?;
                    let row = rec
                        .iter()
                        .map(|f| {
                            f.parse::<f64>()
                                .map_err(|e| Error::Config(format!("{}: bad number {f:?}: {e}", path.display())))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    rows.push(row);
                }
                Ok(Table { columns, rows })
            }
            OutputFormat::Json => {
                let t: JsonTable = serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
                    path: path.to_path_buf(),
                    source,
                })?;
                let n = t.data.first().map_or(0, Vec::len);
                if t.data.len() != t.columns.len() || t.data.iter().any(|c| c.len() != n) {
                    return Err(Error::Config(format!("{}: ragged column data", path.display())));
                }
                let rows = (0..n).map(|i| t.data.iter().map(|c| c[i]).collect()).collect();
                Ok(Table {
                    columns: t.columns,
                    rows,
                })
            }
        }
    }
}

fn push_rotation(row: &mut Vec<f64>, r: &Rotation) {
    let m = r.matrix();
    for i in 0..3 {
        for j in 0..3 {
            row.push(m[(i, j)]);
        }
    }
}

fn rotation_from(cells: &[f64]) -> Rotation {
    Rotation::from_matrix_unchecked(Mat3::from_row_slice(&cells[..9]))
}

pub fn errors_table(records: &[ErrorRecord]) -> Table {
    let mut t = Table::new(&ErrorRecord::COLUMNS);
    t.rows = records.iter().map(|r| r.values().to_vec()).collect();
    t
}

pub fn errors_from_table(t: &Table) -> Result<Vec<ErrorRecord>> {
    t.check_columns(&ErrorRecord::COLUMNS)?;
    t.rows
        .iter()
        .map(|r| {
            let v: [f64; 12] = r[..12]
                .try_into()
                .map_err(|_| Error::Config("error row is too short".into()))?;
            Ok(ErrorRecord::from_values(&v))
        })
        .collect()
}

pub fn trajectory_table(traj: &Trajectory) -> Table {
    let mut t = Table::new(&TRAJECTORY_COLUMNS);
    for s in &traj.snapshots {
        for i in 0..s.nodes() {
            let mut row = Vec::with_capacity(TRAJECTORY_COLUMNS.len());
            row.push(s.time);
            row.push(i as f64);
            row.extend(s.poses[i].position.iter());
            push_rotation(&mut row, &s.poses[i].rotation);
            row.extend(s.strain[i].iter());
            row.extend(s.velocity[i].iter());
            t.rows.push(row);
        }
    }
    t
}

pub fn trajectory_from_table(t: &Table) -> Result<Trajectory> {
    t.check_columns(&TRAJECTORY_COLUMNS)?;
    let mut snapshots: Vec<SimulationState> = Vec::new();
    for row in &t.rows {
        let node = row[1] as usize;
        if node == 0 {
            snapshots.push(SimulationState {
                time: row[0],
                strain: Vec::new(),
                velocity: Vec::new(),
                poses: Vec::new(),
            });
        }
        let s = snapshots
            .last_mut()
            .filter(|s| s.nodes() == node && s.time == row[0])
            .ok_or_else(|| Error::Config(format!("trajectory rows out of order at t = {}, node {node}", row[0])))?;
        s.poses.push(Pose::new(rotation_from(&row[5..14]), Vec3::new(row[2], row[3], row[4])));
        s.strain.push(Twist6::from_row_slice(&row[14..20]));
        s.velocity.push(Twist6::from_row_slice(&row[20..26]));
    }
    Ok(Trajectory { snapshots })
}

pub fn log_table(log: &MeasurementLog) -> Table {
    let mut t = Table::new(&LOG_COLUMNS);
    for m in log.samples() {
        let mut row = Vec::with_capacity(LOG_COLUMNS.len());
        row.push(m.time);
        row.extend(m.tip_velocity.iter());
        push_rotation(&mut row, m.tip_rotation.as_ref().unwrap_or(&Rotation::identity()));
        t.rows.push(row);
    }
    t
}

pub fn log_from_table(t: &Table, metadata: LogMetadata) -> Result<MeasurementLog> {
    t.check_columns(&LOG_COLUMNS)?;
    let samples = t
        .rows
        .iter()
        .map(|r| Measurement {
            time: r[0],
            tip_velocity: Twist6::from_row_slice(&r[1..7]),
            tip_rotation: Some(rotation_from(&r[7..16])),
        })
        .collect();
    MeasurementLog::from_samples(samples, metadata)
}

/// Path of the metadata file written next to a log.
pub fn metadata_path(log_path: &Path) -> PathBuf {
    log_path.with_extension("meta.json")
}

pub fn write_log(log: &MeasurementLog, path: &Path, format: OutputFormat) -> Result<()> {
    log_table(log).write(path, format)?;
    let meta = metadata_path(path);
    let json = serde_json::to_string_pretty(&log.metadata).map_err(|source| Error::Json {
        path: meta.clone(),
        source,
    })?;
    std::fs::write(&meta, json + "\n").map_err(|source| Error::Io { path: meta, source })
}

/// Reads a log; without a metadata file the step is taken from the first
/// two samples.
pub fn read_log(path: &Path, format: OutputFormat) -> Result<MeasurementLog> {
    let table = Table::read(path, format)?;
    let meta = metadata_path(path);
    let metadata = if meta.exists() {
        let text = std::fs::read_to_string(&meta).map_err(|source| Error::Io {
            path: meta.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: meta, source })?
    } else {
        let dt = match table.rows.as_slice() {
            [a, b, ..] => b[0] - a[0],
            _ => 0.0,
        };
        LogMetadata {
            dt,
            ..LogMetadata::default()
        }
    };
    log_from_table(&table, metadata)
}

pub fn write_errors(records: &[ErrorRecord], path: &Path, format: OutputFormat) -> Result<()> {
    errors_table(records).write(path, format)
}

pub fn read_errors(path: &Path, format: OutputFormat) -> Result<Vec<ErrorRecord>> {
    errors_from_table(&Table::read(path, format)?)
}

pub fn write_trajectory(traj: &Trajectory, path: &Path, format: OutputFormat) -> Result<()> {
    trajectory_table(traj).write(path, format)
}

pub fn read_trajectory(path: &Path, format: OutputFormat) -> Result<Trajectory> {
    trajectory_from_table(&Table::read(path, format)?)
}

/// Guesses the format from the file extension.
pub fn format_of(path: &Path) -> OutputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => OutputFormat::Json,
        _ => OutputFormat::Csv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Grid;

    fn trajectory() -> Trajectory {
        let grid = Grid::new(5, 0.5).unwrap();
        let snapshots = (0..3)
            .map(|k| {
                let strain = (0..5)
                    .map(|i| Twist6::new(0.1 * i as f64, 1.0 / 3.0, 0.0, 0.0, 0.0, 1.0 + 1e-17 * k as f64))
                    .collect();
                let velocity = (0..5).map(|i| Twist6::repeat(0.01 * (i + k) as f64)).collect();
                SimulationState::new(k as f64 * 0.1, strain, velocity, &grid, &Pose::identity()).unwrap()
            })
            .collect();
        Trajectory { snapshots }
    }

    #[test]
    fn empty_error_csv_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_errors(&[], &p, OutputFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("t,linf_pos,linf_rot,linf_linvel,linf_angvel,linf_angstrain,linf_linstrain,l2_state,h1_state,error_energy"));
        assert!(read_errors(&p, OutputFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn roundtrips_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let traj = trajectory();
        let records: Vec<_> = (0..4)
            .map(|k| ErrorRecord::from_values(&[k as f64 * 0.1, 1.0 / 7.0, 2e-300, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 0.1, 0.2]))
            .collect();
        let log = MeasurementLog::from_samples(
            traj.snapshots
                .iter()
                .map(|s| Measurement {
                    time: s.time,
                    tip_velocity: s.velocity[4],
                    tip_rotation: Some(s.tip_pose().rotation),
                })
                .collect(),
            LogMetadata {
                dt: 0.1,
                seed: Some(3),
                noise_amplitude: 0.2,
            },
        )
        .unwrap();
        for format in [OutputFormat::Csv, OutputFormat::Json] {
            let p = dir.path().join(format!("traj.{}", format.extension()));
            write_trajectory(&traj, &p, format).unwrap();
            assert_eq!(read_trajectory(&p, format).unwrap(), traj);
            let p = dir.path().join(format!("err.{}", format.extension()));
            write_errors(&records, &p, format).unwrap();
            assert_eq!(read_errors(&p, format).unwrap(), records);
            let p = dir.path().join(format!("log.{}", format.extension()));
            write_log(&log, &p, format).unwrap();
            assert_eq!(read_log(&p, format).unwrap(), log);
        }
    }

    #[test]
    fn io_errors_carry_the_path() {
        let p = Path::new("/nonexistent/dir/x.csv");
        match write_errors(&[], p, OutputFormat::Csv) {
            Err(Error::Io { path, .. }) => assert_eq!(path, p),
            other => panic!("{other:?}"),
        }
    }
}
