//! Voxel map over the representative grain copies.
//!
//! Each voxel centre is assigned the nearest `P1` entry (ties to the lowest
//! entry index). Only voxels inside a grain's fattened bounding box are
//! evaluated, one block per grain; blocks are aligned to a common grid so
//! overlapping voxels get identical assignments.

use super::{GrainError, GrainGeometry};
use crate::geom::Aabb;
use crate::point_clouds::P1View;
use crate::Vec3;
use rayon::prelude::*;

/// Global voxel lattice: voxel (i, j, k) has centre
/// `origin + (i + 1/2, j + 1/2, k + 1/2) * d_cell`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub d_cell: f64,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn centre(&self, ijk: [i64; 3]) -> Vec3 {
        self.origin + Vec3::new(ijk[0] as f64 + 0.5, ijk[1] as f64 + 0.5, ijk[2] as f64 + 0.5) * self.d_cell
    }

    /// Voxel index range (inclusive lower, exclusive upper) whose centres
    /// cover `bx`, clamped to the grid.
    pub fn covering(&self, bx: &Aabb) -> ([i64; 3], [i64; 3]) {
        let lo = [0, 1, 2].map(|a| {
            (((bx.min[a] - self.origin[a]) / self.d_cell - 0.5).floor() as i64).clamp(0, self.dims[a] as i64)
        });
        let hi = [0, 1, 2].map(|a| {
            (((bx.max[a] - self.origin[a]) / self.d_cell - 0.5).ceil() as i64 + 1).clamp(0, self.dims[a] as i64)
        });
        (lo, hi)
    }
}

/// Nearest `P1` entry for every voxel of one grain's block.
#[derive(Debug, Clone)]
pub struct VoxelBlock {
    pub grain: u32,
    /// Global index of the block's first voxel.
    pub lo: [i64; 3],
    pub dims: [usize; 3],
    /// x-fastest.
    pub nearest: Vec<u32>,
}

impl VoxelBlock {
    pub fn len(&self) -> usize {
        self.nearest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nearest.is_empty()
    }

    #[inline]
    pub fn local_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn global_ijk(&self, local: usize) -> [i64; 3] {
        let i = local % self.dims[0];
        let j = (local / self.dims[0]) % self.dims[1];
        let k = local / (self.dims[0] * self.dims[1]);
        [self.lo[0] + i as i64, self.lo[1] + j as i64, self.lo[2] + k as i64]
    }
}

#[derive(Debug, Clone)]
pub struct GlobalVoxelization {
    pub grid: VoxelGrid,
    pub margin: f64,
    /// One block per valid grain, in grain order.
    pub blocks: Vec<VoxelBlock>,
}

impl GlobalVoxelization {
    /// Nearest `P1` entry of a global voxel, if some block covers it.
    pub fn nearest_at(&self, ijk: [i64; 3]) -> Option<u32> {
        self.blocks.iter().find_map(|b| {
            let l: Vec<i64> = (0..3).map(|a| ijk[a] - b.lo[a]).collect();
            if (0..3).all(|a| l[a] >= 0 && (l[a] as usize) < b.dims[a]) {
                Some(b.nearest[b.local_index(l[0] as usize, l[1] as usize, l[2] as usize)])
            } else {
                None
            }
        })
    }
}

/// Builds the voxel grid over all representative copies fattened by
/// `margin` and assigns each block voxel its nearest `P1` entry.
pub fn build_global_voxelization(
    geometry: &GrainGeometry,
    p1: &P1View<'_>,
    d_cell: f64,
    margin: f64,
) -> Result<GlobalVoxelization, GrainError> {
    if !(d_cell > 0.0) {
        return Err(GrainError::InvalidParameter(format!("d_cell = {d_cell}")));
    }
    if !(margin >= 0.0) {
        return Err(GrainError::InvalidParameter(format!("margin = {margin}")));
    }
    let global = if geometry.global_box.is_empty() {
        Aabb::new(Vec3::zeros(), Vec3::zeros())
    } else {
        geometry.global_box.fattened(margin)
    };
    let dims = [0, 1, 2].map(|a| ((global.extent()[a] / d_cell).ceil() as usize).max(1));
    let grid = VoxelGrid {
        origin: global.min,
        d_cell,
        dims,
    };
    let valid: Vec<_> = geometry.valid_grains().collect();
    let blocks = valid
        .par_iter()
        .map(|g| {
            let (lo, hi) = grid.covering(&g.bbox.fattened(margin));
            let bd = [0, 1, 2].map(|a| (hi[a] - lo[a]).max(0) as usize);
            let n = bd[0] * bd[1] * bd[2];
            let nearest: Vec<u32> = (0..n)
                .map(|l| {
                    let i = l % bd[0];
                    let j = (l / bd[0]) % bd[1];
                    let k = l / (bd[0] * bd[1]);
                    let c = grid.centre([lo[0] + i as i64, lo[1] + j as i64, lo[2] + k as i64]);
                    p1.nearest(&c).0 as u32
                })
                .collect();
            VoxelBlock {
                grain: g.grain,
                lo,
                dims: bd,
                nearest,
            }
        })
        .collect();
    Ok(GlobalVoxelization { grid, margin, blocks })
}
