//! Grain hulls from Voronoi cells and point-to-hull distances.
//!
//! For each representative grain copy, the `P1` points inside its bounding
//! box fattened by a guard are gathered and the Voronoi cell of every member
//! point is clipped out of that box. Cell faces shared with a non-member
//! point form the hull. If any member cell could still be affected by points
//! outside the guard box, the guard is doubled and the grain redone.

use super::bvh::FacetBvh;
use super::cell::ConvexCell;
use super::hull::{point_facet_distance, GrainHull, HullFacet};
use super::{DistanceError, DistanceRecord, Method};
use crate::geom::{Aabb, dist_sq};
use crate::grains::{GrainGeometry, GrainImage, GrainPartition};
use crate::point_clouds::{P1View, SpatialBinIndex};
use crate::Vec3;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VorParams {
    /// Initial guard thickness in length units.
    pub guard: f64,
    pub use_bvh: bool,
    pub max_retries: usize,
}

impl VorParams {
    pub fn new(guard: f64) -> Self {
        Self {
            guard,
            use_bvh: true,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VorOutput {
    pub records: Vec<DistanceRecord>,
    /// Present when requested.
    pub hulls: Vec<GrainHull>,
    /// Grains whose hull failed the closure checks.
    pub non_manifold: Vec<u32>,
}

/// Voronoi cell of local point `i`, or `None` if points outside the box
/// could still cut it.
fn member_cell(
    i: usize,
    pos: &[Vec3],
    index: &SpatialBinIndex,
    bx: &Aabb,
    spacing: f64,
) -> Option<ConvexCell> {
    let p = pos[i];
    let tol = 1e-9 * spacing;
    let wall_dist = (0..3)
        .map(|a| (p[a] - bx.min[a]).min(bx.max[a] - p[a]))
        .fold(f64::INFINITY, f64::min);
    let mut cell = ConvexCell::cuboid(bx.min - p, bx.max - p);
    let mut done_r2 = -1.0f64;
    let mut r = 2.0 * spacing;
    let mut list: Vec<(f64, u32)> = Vec::new();
    loop {
        list.clear();
        let r2 = r * r;
        index.visit_box(&(p - Vec3::repeat(r)), &(p + Vec3::repeat(r)), |j, q| {
            let d2 = dist_sq(&p, q);
            if j as usize != i && d2 > done_r2 && d2 <= r2 {
                list.push((d2, j));
            }
        });
        list.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut finished = false;
        for &(d2, j) in &list {
            if d2.sqrt() > 2.0 * cell.max_radius_sq().sqrt() + tol {
                finished = true;
                break;
            }
            cell.clip_by_neighbour(&(pos[j as usize] - p), j as i64, tol);
        }
        let rmax = cell.max_radius_sq().sqrt();
        if finished || 2.0 * rmax <= r {
            break;
        }
        done_r2 = r2;
        r = 2.0 * rmax + tol;
    }
    let rmax = cell.max_radius_sq().sqrt();
    if cell.touches_wall() || 2.0 * rmax > wall_dist {
        None
    } else {
        Some(cell)
    }
}

/// Hull of one representative grain copy.
pub fn grain_hull(
    grain: &GrainImage,
    partition: &GrainPartition,
    geometry: &GrainGeometry,
    p1: &P1View<'_>,
    spacing: f64,
    params: &VorParams,
) -> Result<GrainHull, DistanceError> {
    let cloud = p1.cloud();
    let k = grain.grain;
    let mut guard = params.guard;
    for _attempt in 0..=params.max_retries {
        let bx = grain.bbox.fattened(guard);
        let mut pts: Vec<(usize, Vec3)> = Vec::new();
        p1.visit_box(&bx, |e, q| pts.push((e, *q)));
        pts.sort_unstable_by_key(|&(e, _)| e);
        let pos: Vec<Vec3> = pts.iter().map(|&(_, q)| q).collect();
        let member: Vec<bool> = pts
            .iter()
            .map(|&(e, _)| {
                let (o, img) = cloud.owner_image(e);
                partition.labels[o as usize] == k && geometry.is_representative(o, img)
            })
            .collect();
        debug_assert_eq!(member.iter().filter(|&&m| m).count(), grain.members.len());
        let index = SpatialBinIndex::from_points(&pos, 2.0 * spacing)?;

        let cells: Vec<Option<Vec<HullFacet>>> = (0..pos.len())
            .filter(|&i| member[i])
            .map(|i| {
                member_cell(i, &pos, &index, &bx, spacing).map(|cell| {
                    cell.faces
                        .iter()
                        .filter(|f| f.neighbour >= 0 && !member[f.neighbour as usize])
                        .map(|f| {
                            let verts = f.verts.iter().map(|&v| pos[i] + cell.verts[v as usize]).collect();
                            HullFacet::new(verts, f.normal, pts[i].0 as u32, pts[f.neighbour as usize].0 as u32)
                        })
                        .collect()
                })
            })
            .collect();
        if cells.iter().any(|c| c.is_none()) {
            log::debug!("grain {k}: guard {guard} too thin, enlarging");
            guard *= 2.0;
            continue;
        }
        let facets: Vec<HullFacet> = cells.into_iter().flatten().flatten().collect();
        let mut hull = GrainHull {
            grain: k,
            facets,
            guard,
            unmatched_edges: 0,
            flux_defect: 0.0,
        };
        hull.check_closure(1e-6 * spacing);
        return Ok(hull);
    }
    Err(DistanceError::GuardExhausted {
        grain: k,
        retries: params.max_retries,
    })
}

/// Distance from every member of every valid grain to its grain hull.
pub fn distance_vor(
    geometry: &GrainGeometry,
    partition: &GrainPartition,
    p1: &P1View<'_>,
    spacing: f64,
    params: &VorParams,
    keep_hulls: bool,
) -> Result<VorOutput, DistanceError> {
    if !(spacing > 0.0) || !(params.guard > 0.0) {
        return Err(DistanceError::InvalidParameter(format!(
            "spacing {spacing} / guard {}",
            params.guard
        )));
    }
    let cloud = p1.cloud();
    let grains: Vec<&GrainImage> = geometry.valid_grains().collect();
    let per_grain: Vec<Result<(Vec<DistanceRecord>, GrainHull), DistanceError>> = grains
        .par_iter()
        .map(|g| {
            let hull = grain_hull(g, partition, geometry, p1, spacing, params)?;
            let bvh = params.use_bvh.then(|| FacetBvh::build(&hull.facets));
            let records = g
                .members
                .par_iter()
                .with_min_len(256)
                .map(|&e| {
                    let p = cloud.position(e as usize);
                    let d = match &bvh {
                        Some(b) => b.nearest_distance(&p, &hull.facets),
                        None => hull
                            .facets
                            .iter()
                            .map(|f| point_facet_distance(&p, f))
                            .fold(f64::INFINITY, f64::min),
                    };
                    DistanceRecord {
                        distance: d / spacing,
                        owner: cloud.owner(e as usize),
                        method: Method::Vor,
                    }
                })
                .collect();
            Ok((records, hull))
        })
        .collect();
    let mut records = Vec::new();
    let mut hulls = Vec::new();
    let mut non_manifold = Vec::new();
    for r in per_grain {
        let (recs, hull) = r?;
        records.extend(recs);
        if !hull.is_watertight() {
            log::warn!(
                "grain {}: hull not watertight ({} unmatched edges, flux defect {:.3e})",
                hull.grain,
                hull.unmatched_edges,
                hull.flux_defect
            );
            non_manifold.push(hull.grain);
        }
        if keep_hulls {
            hulls.push(hull);
        }
    }
    Ok(VorOutput {
        records,
        hulls,
        non_manifold,
    })
}

/// Writes hull facets as a Wavefront OBJ file, one object per grain.
pub fn write_hull_obj(path: &Path, hulls: &[GrainHull]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut next = 1usize;
    for h in hulls {
        writeln!(w, "o grain_{}", h.grain)?;
        for f in &h.facets {
            for v in &f.verts {
                writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
            }
            write!(w, "f")?;
            for t in 0..f.verts.len() {
                write!(w, " {}", next + t)?;
            }
            writeln!(w)?;
            next += f.verts.len();
        }
    }
    w.flush()
}
