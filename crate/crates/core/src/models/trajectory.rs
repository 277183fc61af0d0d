//! Space-time coefficient trajectories.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVectorView};
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::fem2d::TimeGrid;

const MAGIC: &[u8; 8] = b"RBTRAJ01";

/// Which spatial basis the coefficients refer to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BasisTag {
    FullOrder,
    Reduced { basis_id: String },
}

/// Coefficients of a trajectory at the `nt + 1` levels of a time grid.
/// Column `n` holds the spatial coefficients at `t_n`; column 0 is the
/// initial condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeTrajectory {
    pub coefficients: DMatrix<f64>,
    pub grid: TimeGrid,
    pub basis: BasisTag,
}

impl SpaceTimeTrajectory {
    pub fn from_states(states: &[Vec<f64>], grid: TimeGrid, basis: BasisTag) -> Self {
        assert_eq!(states.len(), grid.nt + 1, "one state per time level");
        let ndof = states.first().map_or(0, Vec::len);
        let mut coefficients = DMatrix::zeros(ndof, states.len());
        for (n, s) in states.iter().enumerate() {
            coefficients.column_mut(n).copy_from_slice(s);
        }
        Self { coefficients, grid, basis }
    }

    pub fn num_dofs(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn num_levels(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn state(&self, n: usize) -> DVectorView<'_, f64> {
        self.coefficients.column(n)
    }

    /// Lifts reduced coefficients to the full space: `basis * coefficients`.
    pub fn reconstruct(&self, basis: &DMatrix<f64>) -> Self {
        Self { coefficients: basis * &self.coefficients, grid: self.grid, basis: BasisTag::FullOrder }
    }

    /// Writes one row per time level: `t, c_0, c_1, ...`.
    pub fn write_csv(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| ModelError::Io(e.to_string()))?;
        let mut header = vec!["t".to_string()];
        header.extend((0..self.num_dofs()).map(|i| format!("c{i}")));
        w.write_record(&header).map_err(|e| ModelError::Io(e.to_string()))?;
        for n in 0..self.num_levels() {
            let mut row = vec![self.grid.time(n).to_string()];
            row.extend(self.state(n).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| ModelError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| ModelError::Io(e.to_string()))
    }

    /// Little-endian binary dump: magic, dims, grid, column-major values.
    pub fn write_binary(&self, path: &Path) -> Result<(), ModelError> {
        let io = |e: std::io::Error| ModelError::Io(e.to_string());
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(MAGIC).map_err(io)?;
        w.write_u64::<LittleEndian>(self.num_dofs() as u64).map_err(io)?;
        w.write_u64::<LittleEndian>(self.num_levels() as u64).map_err(io)?;
        w.write_f64::<LittleEndian>(self.grid.t_end).map_err(io)?;
        w.write_f64::<LittleEndian>(self.grid.dt).map_err(io)?;
        for v in self.coefficients.iter() {
            w.write_f64::<LittleEndian>(*v).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a file written by [`write_binary`](Self::write_binary). The
    /// basis tag is not stored and comes back as full order.
    pub fn read_binary(path: &Path) -> Result<Self, ModelError> {
        let io = |e: std::io::Error| ModelError::Io(e.to_string());
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(ModelError::Io(format!("{} is not a trajectory file", path.display())));
        }
        let ndof = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let levels = r.read_u64::<LittleEndian>().map_err(io)? as usize;
        let t_end = r.read_f64::<LittleEndian>().map_err(io)?;
        let dt = r.read_f64::<LittleEndian>().map_err(io)?;
        let mut data = vec![0.0; ndof * levels];
        r.read_f64_into::<LittleEndian>(&mut data).map_err(io)?;
        let grid = TimeGrid { t_end, dt, nt: levels.saturating_sub(1) };
        Ok(Self { coefficients: DMatrix::from_vec(ndof, levels, data), grid, basis: BasisTag::FullOrder })
    }
}
