//! CSV and JSON artifact writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::agent_sim::FleetTrajectory;
use crate::error::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a matrix with one CSV line per row and no header.
pub fn write_matrix_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let mut w = create(path)?;
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Reads a header-less numeric CSV matrix.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat)
        .map_err(|e| Error::Parse(format!("{}: ragged matrix: {e}", path.display())))
}

/// Writes `t` followed by one column per named series.
pub fn write_series_csv(path: &Path, times: &[f64], columns: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = create(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(columns.iter().map(|(name, _)| name.clone()));
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for (k, t) in times.iter().enumerate() {
        let mut line = vec![t.to_string()];
        line.extend(columns.iter().map(|(_, s)| s[k].to_string()));
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    finish(w, path)
}

/// Long-format trajectory: `t,uav_id,z,v,rate,epr`.
pub fn write_trajectory_csv(path: &Path, traj: &FleetTrajectory) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,uav_id,z,v,rate,epr").map_err(|e| Error::io(path, e))?;
    for (k, t) in traj.times.iter().enumerate() {
        for i in 0..traj.n_uav() {
            writeln!(
                w,
                "{t},{i},{},{},{},{}",
                traj.positions[[i, k]],
                traj.velocities[[i, k]],
                traj.rates[[i, k]],
                traj.energy_per_rate[[i, k]]
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    finish(w, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    finish(w, path)
}
