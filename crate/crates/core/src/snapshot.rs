//! Serializable per-frame records consumed by the plotting scripts.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Frame, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryEdge, CellRegion, Vec2};

/// One piece of a cell boundary loop, in global coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LoopPiece {
    Segment { a: [f64; 2], b: [f64; 2] },
    /// Counter-clockwise arc from angle `a0` to `a1`.
    Arc { center: [f64; 2], radius: f64, a0: f64, a1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub owner: usize,
    pub loops: Vec<Vec<LoopPiece>>,
}

impl CellRecord {
    pub fn from_region(cell: &CellRegion) -> Self {
        let xy = |v: Vec2| [v.x, v.y];
        let loops = cell
            .global_loops()
            .into_iter()
            .map(|l| {
                l.into_iter()
                    .map(|e| match e {
                        BoundaryEdge::Segment { a, b, .. } => LoopPiece::Segment { a: xy(a), b: xy(b) },
                        BoundaryEdge::Arc { center, radius, theta0, theta1 } => {
                            LoopPiece::Arc { center: xy(center), radius, a0: theta0, a1: theta1 }
                        }
                    })
                    .collect()
            })
            .collect();
        Self { owner: cell.owner, loops }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub positions: Vec<[f64; 2]>,
    pub psi: Vec<f64>,
    pub energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speeds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<CellRecord>>,
    /// Entropy-mode cell coloring weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Snapshot {
    pub fn from_frame(f: &Frame) -> Self {
        Self {
            step: f.step,
            t: f.t,
            positions: f.positions.iter().map(|p| [p.x, p.y]).collect(),
            psi: f.psi.clone(),
            energy: f.energy,
            speeds: Some(f.speeds.clone()),
            cells: f.cells.as_ref().map(|c| c.iter().map(CellRecord::from_region).collect()),
            weights: f.weights.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Checks that every per-particle array has length `N` and that all
    /// numbers are finite.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            Some(self.psi.len()),
            self.speeds.as_ref().map(Vec::len),
            self.cells.as_ref().map(Vec::len),
            self.weights.as_ref().map(Vec::len),
        ];
        if lens.iter().flatten().any(|&l| l != n) {
            return Err(Error::InvalidInput(format!("snapshot arrays do not all have length {n}")));
        }
        let finite = self.t.is_finite()
            && self.energy.is_finite()
            && self.positions.iter().flatten().all(|v| v.is_finite())
            && self.psi.iter().all(|v| v.is_finite())
            && self.speeds.iter().flatten().all(|v| v.is_finite())
            && self.weights.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("snapshot"));
        }
        Ok(())
    }
}

/// Long format: one row per particle per recorded frame.
pub fn write_trajectories_csv<W: Write>(out: W, traj: &Trajectory) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "t", "particle", "x", "y", "psi", "speed"])?;
    for f in &traj.frames {
        for (i, p) in f.positions.iter().enumerate() {
            w.serialize((f.step, f.t, i, p.x, p.y, f.psi[i], f.speeds[i]))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Arrival time per particle; an empty field means the particle never
/// arrived.
pub fn write_timeout_csv<W: Write>(out: W, x0: &[Vec2], timeouts: &[Option<f64>]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["particle", "x0", "y0", "timeout"])?;
    for (i, (p, t)) in x0.iter().zip(timeouts).enumerate() {
        w.serialize((i, p.x, p.y, t))?;
    }
    w.flush()?;
    Ok(())
}
