//! Nearest-disoriented-neighbour distances.

use super::{DistanceError, DistanceRecord, Method};
use crate::orientation::disorientation_deg_unchecked;
use crate::point_clouds::{CloudKind, PeriodicPointCloud, SpatialBinIndex};
use crate::rve_io::StrainStepDataset;
use rayon::prelude::*;

/// Work distribution over points. Both produce identical records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Contiguous equal-sized ranges, one per worker.
    Static,
    /// Work stealing over small chunks.
    #[default]
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisParams {
    /// Search radius in length units.
    pub radius: f64,
    /// Disorientation threshold in degrees.
    pub theta_c: f64,
    pub schedule: Schedule,
}

/// For every point, records the distance to the nearest `P0+eps` neighbour
/// within the radius whose disorientation reaches `theta_c`, ties broken by
/// entry index. Points without such a neighbour get no record.
pub fn distance_dis(
    dataset: &StrainStepDataset,
    p0_eps: &PeriodicPointCloud,
    params: &DisParams,
) -> Result<Vec<DistanceRecord>, DistanceError> {
    if !(params.radius > 0.0) || !(params.theta_c > 0.0) {
        return Err(DistanceError::InvalidParameter(format!(
            "radius {} / theta_c {}",
            params.radius, params.theta_c
        )));
    }
    if p0_eps.kind() != CloudKind::P0Eps || p0_eps.n_base() != dataset.len() {
        return Err(DistanceError::InvalidParameter("expected the P0+eps cloud of this dataset".into()));
    }
    if p0_eps.thickness() < params.radius {
        return Err(DistanceError::ShellTooThin {
            radius: params.radius,
            thickness: p0_eps.thickness(),
        });
    }
    let index = SpatialBinIndex::build(p0_eps, params.radius)?;
    let spacing = dataset.spacing();
    let n = dataset.len();

    // The symmetry-free rotation angle bounds the disorientation from above,
    // so pairs whose quaternions are closer than theta_c/2 can be skipped.
    let skip_dot = (params.theta_c.to_radians() / 2.0).cos() + 1e-12;

    let one = |i: usize, buf: &mut Vec<(f64, u32)>| -> Option<DistanceRecord> {
        buf.clear();
        let pi = p0_eps.position(i);
        let qi = dataset.points[i].orientation;
        index.visit_within(&pi, params.radius, |e, d2| {
            if e as usize != i {
                buf.push((d2, e));
            }
        });
        let mut best: Option<(f64, u32)> = None;
        for &(d2, e) in buf.iter() {
            if let Some(b) = best {
                if d2.total_cmp(&b.0).then(e.cmp(&b.1)).is_ge() {
                    continue;
                }
            }
            let qo = dataset.points[p0_eps.owner(e as usize) as usize].orientation;
            if qi.coords.dot(&qo.coords).abs() > skip_dot {
                continue;
            }
            if disorientation_deg_unchecked(&qi, &qo) >= params.theta_c {
                best = Some((d2, e));
            }
        }
        best.map(|(d2, _)| DistanceRecord {
            distance: d2.sqrt() / spacing,
            owner: i as u32,
            method: Method::Dis,
        })
    };

    let records = match params.schedule {
        Schedule::Static => {
            let workers = rayon::current_num_threads().max(1);
            let chunk = n.div_ceil(workers).max(1);
            let parts: Vec<Vec<DistanceRecord>> = (0..n)
                .collect::<Vec<_>>()
                .par_chunks(chunk)
                .map(|ids| {
                    let mut buf = Vec::new();
                    ids.iter().filter_map(|&i| one(i, &mut buf)).collect()
                })
                .collect();
            parts.into_iter().flatten().collect()
        }
        Schedule::Dynamic => (0..n)
            .into_par_iter()
            .with_min_len(64)
            .map_init(Vec::new, |buf, i| one(i, buf))
            .flatten_iter()
            .collect(),
    };
    Ok(records)
}
