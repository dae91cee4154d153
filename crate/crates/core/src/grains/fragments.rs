//! Reassembles grains cut by the periodic boundary into one contiguous copy.
//!
//! For each grain, the members of all 27 images are clustered by radius
//! connectivity (DBSCAN with minpts 1). A cluster holding every grain point
//! exactly once is a complete copy; the complete copy nearest the domain
//! centre becomes the representative.

use crate::geom::{dist_sq, Aabb};
use crate::point_clouds::{CloudKind, PeriodicPointCloud, SpatialBinIndex};
use crate::Vec3;
use rayon::prelude::*;
use thiserror::Error;

use super::{GrainError, GrainPartition};

/// Relative slack on the connectivity radius so that lattice diagonals at
/// exactly sqrt(3) spacings stay connected.
const RADIUS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FragmentError {
    #[error("grain {grain} percolates through the periodic domain")]
    GrainWrapsDomain { grain: u32 },
    #[error("grain {grain} has no connected copy containing all its points")]
    FragmentedGrain { grain: u32 },
}

/// Representative copy of one grain.
#[derive(Debug, Clone, PartialEq)]
pub struct GrainImage {
    pub grain: u32,
    /// `P1` entry indices, one per grain point, in ascending owner order.
    pub members: Vec<u32>,
    pub bbox: Aabb,
    pub centroid: Vec3,
    /// Translation of the image that holds most of the members.
    pub translation: Vec3,
}

#[derive(Debug, Clone)]
pub struct GrainGeometry {
    /// Indexed by grain id; `None` for flagged grains.
    pub grains: Vec<Option<GrainImage>>,
    pub flagged: Vec<FragmentError>,
    /// Image id of the representative copy of each point, `u8::MAX` for
    /// points of flagged grains.
    pub rep_image: Vec<u8>,
    /// Union of all representative bounding boxes.
    pub global_box: Aabb,
}

impl GrainGeometry {
    /// Whether `P1` entry (owner, image) belongs to a representative copy.
    #[inline]
    pub fn is_representative(&self, owner: u32, image: u8) -> bool {
        self.rep_image[owner as usize] == image
    }

    pub fn valid_grains(&self) -> impl Iterator<Item = &GrainImage> {
        self.grains.iter().flatten()
    }
}

/// Clusters the `P1` members of every grain and picks representatives.
/// `spacing` sets the connectivity radius sqrt(3) * spacing.
pub fn merge_periodic_fragments(
    partition: &GrainPartition,
    p1: &PeriodicPointCloud,
    spacing: f64,
) -> Result<GrainGeometry, GrainError> {
    if p1.kind() != CloudKind::P1 || p1.n_base() != partition.labels.len() {
        return Err(GrainError::InvalidParameter("expected the P1 cloud of this partition".into()));
    }
    if !(spacing > 0.0) {
        return Err(GrainError::InvalidParameter(format!("spacing {spacing}")));
    }
    let radius = 3f64.sqrt() * spacing * (1.0 + RADIUS_SLACK);
    let centre = p1.base_box().center();
    let members = partition.members();
    let results: Vec<Result<GrainImage, FragmentError>> = members
        .par_iter()
        .enumerate()
        .map(|(g, owners)| representative(g as u32, owners, p1, radius, &centre))
        .collect();

    let mut rep_image = vec![u8::MAX; p1.n_base()];
    let mut grains = Vec::with_capacity(results.len());
    let mut flagged = Vec::new();
    let mut global_box = Aabb::empty();
    let n = p1.n_base();
    for r in results {
        match r {
            Ok(img) => {
                for &e in &img.members {
                    let e = e as usize;
                    rep_image[e % n] = (e / n) as u8;
                }
                global_box = global_box.merge(&img.bbox);
                grains.push(Some(img));
            }
            Err(e) => {
                log::warn!("{e}; grain excluded from boundary distancing");
                flagged.push(e);
                grains.push(None);
            }
        }
    }
    Ok(GrainGeometry {
        grains,
        flagged,
        rep_image,
        global_box,
    })
}

fn representative(
    grain: u32,
    owners: &[u32],
    p1: &PeriodicPointCloud,
    radius: f64,
    centre: &Vec3,
) -> Result<GrainImage, FragmentError> {
    let m = owners.len();
    // Local index l = image * m + k refers to owners[k] in image `image`.
    let entries: Vec<(u32, u8)> = (0..27u8)
        .flat_map(|img| owners.iter().map(move |&o| (o, img)))
        .collect();
    let pos: Vec<Vec3> = entries.iter().map(|&(o, img)| p1.position_of(o, img)).collect();
    let index = SpatialBinIndex::from_points(&pos, radius).expect("non-empty grain");
    let r2 = radius * radius;

    let mut cluster = vec![u32::MAX; pos.len()];
    let mut clusters: Vec<Vec<u32>> = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..pos.len() {
        if cluster[seed] != u32::MAX {
            continue;
        }
        let cid = clusters.len() as u32;
        cluster[seed] = cid;
        let mut list = vec![seed as u32];
        stack.push(seed);
        while let Some(i) = stack.pop() {
            index.visit_box(
                &(pos[i] - Vec3::repeat(radius)),
                &(pos[i] + Vec3::repeat(radius)),
                |j, p| {
                    if cluster[j as usize] == u32::MAX && dist_sq(&pos[i], p) <= r2 {
                        cluster[j as usize] = cid;
                        list.push(j);
                        stack.push(j as usize);
                    }
                },
            );
        }
        list.sort_unstable();
        clusters.push(list);
    }

    let mut seen = vec![u32::MAX; m];
    let mut best: Option<(f64, u32, usize)> = None;
    for (cid, list) in clusters.iter().enumerate() {
        for &l in list {
            let k = l as usize % m;
            if seen[k] == cid as u32 {
                return Err(FragmentError::GrainWrapsDomain { grain });
            }
            seen[k] = cid as u32;
        }
        if list.len() == m {
            let c = list.iter().fold(Vec3::zeros(), |a, &l| a + pos[l as usize]) / m as f64;
            let key = (dist_sq(&c, centre), list[0], cid);
            if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
                best = Some(key);
            }
        }
    }
    let (_, _, cid) = best.ok_or(FragmentError::FragmentedGrain { grain })?;
    let list = &clusters[cid];
    let mut by_owner: Vec<(u32, u8)> = list.iter().map(|&l| entries[l as usize]).collect();
    by_owner.sort_unstable();
    let n = p1.n_base();
    let members: Vec<u32> = by_owner
        .iter()
        .map(|&(o, img)| (img as usize * n + o as usize) as u32)
        .collect();
    let bbox = Aabb::from_points(list.iter().map(|&l| &pos[l as usize]));
    let centroid = list.iter().fold(Vec3::zeros(), |a, &l| a + pos[l as usize]) / m as f64;
    let mut counts = [0usize; 27];
    for &(_, img) in &by_owner {
        counts[img as usize] += 1;
    }
    let major = (0..27).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).unwrap();
    Ok(GrainImage {
        grain,
        members,
        bbox,
        centroid,
        translation: p1.translation(major as u8),
    })
}
