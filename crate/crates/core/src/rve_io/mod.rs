//! Strain-step datasets: the in-memory model, the binary field-map format and
//! a deterministic synthetic generator with planted ground truth.

mod format;
mod synthetic;

pub use format::{read_step, write_step, HEADER_LEN, MAGIC, RECORD_LEN};
pub use synthetic::{
    generate_synthetic, true_boundary_distances, PlantedGradient, PlantedStress, SyntheticRve,
    SyntheticSpec,
};

use crate::{Mat3, Quat, Vec3};
use std::path::PathBuf;
use thiserror::Error;

/// Quaternions closer than this to unit norm are accepted untouched.
pub const UNIT_EXACT_TOL: f64 = 1e-9;
/// Quaternions within this drift are renormalised on read.
pub const UNIT_RENORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RveIoError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("point {index}: quaternion norm {norm} is not unit")]
    NonUnitQuaternion { index: usize, norm: f64 },
    #[error("point {index}: det(F) = {det} is not positive")]
    NonPositiveJacobian { index: usize, det: f64 },
    #[error("invalid generator request: {0}")]
    SpecViolation(String),
    #[error("dataset has {found} points but grid {dims:?} needs {expected}")]
    PointCount {
        dims: [u32; 3],
        expected: usize,
        found: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Header flag bits describing which fields carry data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecordFlags(pub u32);

impl RecordFlags {
    pub const DEFORMED: u32 = 1;
    pub const STRESS: u32 = 2;
    pub const ORIENTATION: u32 = 4;
    pub const KNOWN: u32 = Self::DEFORMED | Self::STRESS | Self::ORIENTATION;

    pub fn has(self, bit: u32) -> bool {
        self.0 & bit != 0
    }
}

/// One material point of the RVE at a given strain step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialPoint {
    pub position: Vec3,
    /// Deformation gradient F.
    pub def_grad: Mat3,
    /// First Piola-Kirchhoff stress P.
    pub piola: Mat3,
    /// Crystal orientation as a unit quaternion.
    pub orientation: Quat,
    pub texture_id: u32,
}

/// All material points of one strain step, ordered x-fastest on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainStepDataset {
    pub grid_dims: [u32; 3],
    pub rve_edge: f64,
    pub strain_label: f64,
    pub flags: RecordFlags,
    pub points: Vec<MaterialPoint>,
}

impl StrainStepDataset {
    /// Validates the invariants and returns the dataset.
    pub fn new(
        grid_dims: [u32; 3],
        rve_edge: f64,
        strain_label: f64,
        flags: RecordFlags,
        points: Vec<MaterialPoint>,
    ) -> Result<Self, RveIoError> {
        let ds = Self {
            grid_dims,
            rve_edge,
            strain_label,
            flags,
            points,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), RveIoError> {
        if self.grid_dims.iter().any(|&d| d == 0) {
            return Err(RveIoError::MalformedHeader(format!(
                "zero grid dimension {:?}",
                self.grid_dims
            )));
        }
        if !(self.rve_edge > 0.0 && self.rve_edge.is_finite()) {
            return Err(RveIoError::MalformedHeader(format!(
                "rve edge {} must be positive",
                self.rve_edge
            )));
        }
        let expected = self.len_expected();
        if self.points.len() != expected {
            return Err(RveIoError::PointCount {
                dims: self.grid_dims,
                expected,
                found: self.points.len(),
            });
        }
        for (index, p) in self.points.iter().enumerate() {
            let norm = p.orientation.norm();
            if (norm - 1.0).abs() > UNIT_EXACT_TOL || !norm.is_finite() {
                return Err(RveIoError::NonUnitQuaternion { index, norm });
            }
            let det = p.def_grad.determinant();
            if !(det > 0.0) {
                return Err(RveIoError::NonPositiveJacobian { index, det });
            }
        }
        Ok(())
    }

    fn len_expected(&self) -> usize {
        self.grid_dims.iter().map(|&d| d as usize).product()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Lattice spacing of the undeformed grid.
    pub fn spacing(&self) -> f64 {
        self.rve_edge / self.grid_dims[0] as f64
    }

    /// Undeformed edge lengths along x, y, z.
    pub fn initial_edges(&self) -> [f64; 3] {
        let h = self.spacing();
        [
            self.grid_dims[0] as f64 * h,
            self.grid_dims[1] as f64 * h,
            self.grid_dims[2] as f64 * h,
        ]
    }

    /// Flat index of grid cell (i, j, k).
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.grid_dims;
        i + nx as usize * (j + ny as usize * k)
    }

    pub fn grid_coords(&self, index: usize) -> [usize; 3] {
        let nx = self.grid_dims[0] as usize;
        let ny = self.grid_dims[1] as usize;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }
}
