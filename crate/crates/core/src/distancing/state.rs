//! Per-point state attached to distance records.

use super::{DistanceError, DistanceRecord, Method};
use crate::grains::GrainPartition;
use crate::orientation::{disorientation_deg_unchecked, mean_orientation, MeanOrientation};
use crate::rve_io::StrainStepDataset;
use crate::tensor::{cauchy_from, von_mises_stress};
use crate::Quat;
use rayon::prelude::*;
use std::sync::Arc;

/// Quantities carried by every record of a material point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    /// Cauchy stress s11, s22, s33, s12, s13, s23.
    pub sigma: [f64; 6],
    pub sigma_vm: f64,
    /// Disorientation (degrees) to the mean orientation of the point's grain.
    pub disorientation: Option<f64>,
}

/// Mean orientation of every grain of the partition.
pub fn grain_mean_orientations(
    dataset: &StrainStepDataset,
    partition: &GrainPartition,
) -> Vec<MeanOrientation> {
    partition
        .members()
        .par_iter()
        .map(|m| {
            let qs: Vec<Quat> = m.iter().map(|&i| dataset.points[i as usize].orientation).collect();
            mean_orientation(&qs).expect("grains are non-empty")
        })
        .collect()
}

/// Cauchy stress of every point, and its disorientation to the grain mean
/// when `with_disorientation` is set.
pub fn point_states(
    dataset: &StrainStepDataset,
    partition: Option<&GrainPartition>,
    with_disorientation: bool,
) -> Result<Vec<PointState>, DistanceError> {
    let means = match (with_disorientation, partition) {
        (true, None) => return Err(DistanceError::MissingPartition),
        (true, Some(p)) => Some(grain_mean_orientations(dataset, p)),
        (false, _) => None,
    };
    let states = dataset
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let c = cauchy_from(&p.def_grad, &p.piola)?;
            let disorientation = match (&means, partition) {
                (Some(m), Some(part)) => Some(disorientation_deg_unchecked(
                    &p.orientation,
                    &m[part.labels[i] as usize].q,
                )),
                _ => None,
            };
            Ok(PointState {
                sigma: c.voigt(),
                sigma_vm: von_mises_stress(&c.sigma),
                disorientation,
            })
        })
        .collect::<Result<Vec<_>, DistanceError>>()?;
    Ok(states)
}

/// Records of one method together with the state table they index into.
#[derive(Debug, Clone)]
pub struct AttachedRecords {
    pub method: Method,
    pub records: Vec<DistanceRecord>,
    pub states: Arc<Vec<PointState>>,
}

impl AttachedRecords {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn state(&self, r: usize) -> &PointState {
        &self.states[self.records[r].owner as usize]
    }

    pub fn has_disorientation(&self) -> bool {
        self.states.first().is_some_and(|s| s.disorientation.is_some())
    }
}

/// Binds records to the per-point state table.
pub fn attach_state(
    method: Method,
    records: Vec<DistanceRecord>,
    states: Arc<Vec<PointState>>,
) -> Result<AttachedRecords, DistanceError> {
    if let Some(r) = records.iter().find(|r| r.owner as usize >= states.len() || r.method != method) {
        return Err(DistanceError::InvalidParameter(format!(
            "record for point {} ({:?}) does not fit a {:?} table of {} points",
            r.owner,
            r.method,
            method,
            states.len()
        )));
    }
    Ok(AttachedRecords {
        method,
        records,
        states,
    })
}
