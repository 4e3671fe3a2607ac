//! Files written by the commands.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use lagflow::dynamics::Trajectory;
use lagflow::snapshot::{self, Snapshot};
use lagflow::Vec2;
use serde::Serialize;

use crate::error::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    serde_json::to_writer(BufWriter::new(f), value)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    csv::Writer::from_path(path).map_err(CliError::from)
}

pub fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("snapshot_{step:06}.json"))
}

/// One JSON file per recorded frame under `dir/snapshots`; returns the paths.
pub fn write_snapshots(dir: &Path, traj: &Trajectory) -> Result<Vec<PathBuf>, CliError> {
    let sub = dir.join("snapshots");
    ensure_dir(&sub)?;
    traj.frames
        .iter()
        .map(|f| {
            let path = snapshot_path(&sub, f.step);
            write_json_compact(&path, &Snapshot::from_frame(f))?;
            Ok(path)
        })
        .collect()
}

/// Long format: one row per particle per recorded frame.
pub fn write_trajectories_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(snapshot::write_trajectories_csv(BufWriter::new(f), traj)?)
}

/// Energy and mean squared speed at every step (not only recorded ones).
pub fn write_energy_csv(path: &Path, traj: &Trajectory, tau: f64) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "t", "energy", "mean_sq_speed"])?;
    for (k, (e, s)) in traj.energies.iter().zip(&traj.mean_sq_speed).enumerate() {
        w.serialize((k, k as f64 * tau, e, s))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_timeout_csv(path: &Path, x0: &[Vec2], timeouts: &[Option<f64>]) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(snapshot::write_timeout_csv(BufWriter::new(f), x0, timeouts)?)
}

pub fn write_rows<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
