//! Signed distance fields per grain by fast sweeping.
//!
//! Voxels whose nearest `P1` entry belongs to the grain's representative
//! copy are inside. Voxels with a 6-neighbour of opposite sign start at
//! `+-d_cell` and stay fixed; the rest start at infinity and are relaxed with
//! the Godunov upwind update over the 8 sweep orderings until the largest
//! change in a round drops below `1e-3 d_cell`.

use super::{DistanceError, DistanceRecord, Method};
use crate::grains::{GlobalVoxelization, GrainGeometry, GrainPartition, VoxelBlock};
use crate::point_clouds::PeriodicPointCloud;
use rayon::prelude::*;

const MAX_ROUNDS: usize = 5;
const CONVERGENCE: f64 = 1e-3;

/// Upwind solution of |grad u| = 1 at a voxel given the smallest neighbour
/// value along each axis.
#[inline]
pub fn godunov_update(mut a: f64, mut b: f64, mut c: f64, h: f64) -> f64 {
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    if b > c {
        std::mem::swap(&mut b, &mut c);
    }
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x = a + h;
    if x > b {
        x = 0.5 * (a + b + (2.0 * h * h - (a - b) * (a - b)).sqrt());
        if x > c {
            let s = a + b + c;
            let q = a * a + b * b + c * c;
            x = (s + (s * s - 3.0 * (q - h * h)).sqrt()) / 3.0;
        }
    }
    x
}

/// Signed distance on one grain's voxel block; positive inside.
#[derive(Debug, Clone)]
pub struct SignedDistanceGrid {
    pub grain: u32,
    pub lo: [i64; 3],
    pub dims: [usize; 3],
    pub h: f64,
    pub phi: Vec<f64>,
    /// Interface-adjacent voxels whose value was fixed at initialisation.
    pub fixed: Vec<bool>,
    pub rounds: usize,
}

impl SignedDistanceGrid {
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }
}

#[derive(Debug, Clone)]
pub struct SdfOutput {
    pub records: Vec<DistanceRecord>,
    /// Present when requested.
    pub grids: Vec<SignedDistanceGrid>,
}

fn solve_block(
    block: &VoxelBlock,
    inside: &[bool],
    h: f64,
) -> (Vec<f64>, Vec<bool>, usize) {
    let [nx, ny, nz] = block.dims;
    let n = inside.len();
    let id = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut u = vec![f64::INFINITY; n];
    let mut fixed = vec![false; n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = id(i, j, k);
                let s = inside[v];
                let differs = (i > 0 && inside[v - 1] != s)
                    || (i + 1 < nx && inside[v + 1] != s)
                    || (j > 0 && inside[v - nx] != s)
                    || (j + 1 < ny && inside[v + nx] != s)
                    || (k > 0 && inside[v - nx * ny] != s)
                    || (k + 1 < nz && inside[v + nx * ny] != s);
                if differs {
                    u[v] = h;
                    fixed[v] = true;
                }
            }
        }
    }
    let mut rounds = 0;
    for _ in 0..MAX_ROUNDS {
        rounds += 1;
        let mut max_change = 0.0f64;
        for dir in 0..8 {
            let ri: Vec<usize> = if dir & 1 == 0 { (0..nx).collect() } else { (0..nx).rev().collect() };
            let rj: Vec<usize> = if dir & 2 == 0 { (0..ny).collect() } else { (0..ny).rev().collect() };
            let rk: Vec<usize> = if dir & 4 == 0 { (0..nz).collect() } else { (0..nz).rev().collect() };
            for &k in &rk {
                for &j in &rj {
                    for &i in &ri {
                        let v = id(i, j, k);
                        if fixed[v] {
                            continue;
                        }
                        let a = f64::min(
                            if i > 0 { u[v - 1] } else { f64::INFINITY },
                            if i + 1 < nx { u[v + 1] } else { f64::INFINITY },
                        );
                        let b = f64::min(
                            if j > 0 { u[v - nx] } else { f64::INFINITY },
                            if j + 1 < ny { u[v + nx] } else { f64::INFINITY },
                        );
                        let c = f64::min(
                            if k > 0 { u[v - nx * ny] } else { f64::INFINITY },
                            if k + 1 < nz { u[v + nx * ny] } else { f64::INFINITY },
                        );
                        if a.min(b).min(c).is_infinite() {
                            continue;
                        }
                        let cand = godunov_update(a, b, c, h);
                        if cand < u[v] {
                            let change = if u[v].is_finite() { u[v] - cand } else { f64::INFINITY };
                            max_change = max_change.max(change);
                            u[v] = cand;
                        }
                    }
                }
            }
        }
        if max_change < CONVERGENCE * h {
            break;
        }
    }
    (u, fixed, rounds)
}

/// Solves the signed distance field of every valid grain and emits one
/// record per inside voxel, carrying the state of the voxel's nearest
/// material point.
pub fn distance_sdf(
    geometry: &GrainGeometry,
    partition: &GrainPartition,
    voxels: &GlobalVoxelization,
    p1: &PeriodicPointCloud,
    spacing: f64,
    keep_grids: bool,
) -> Result<SdfOutput, DistanceError> {
    if !(spacing > 0.0) {
        return Err(DistanceError::InvalidParameter(format!("spacing {spacing}")));
    }
    let h = voxels.grid.d_cell;
    let per_grain: Vec<(Vec<DistanceRecord>, Option<SignedDistanceGrid>)> = voxels
        .blocks
        .par_iter()
        .map(|block| {
            let inside: Vec<bool> = block
                .nearest
                .iter()
                .map(|&e| {
                    let (o, img) = p1.owner_image(e as usize);
                    partition.labels[o as usize] == block.grain && geometry.is_representative(o, img)
                })
                .collect();
            let (u, fixed, rounds) = solve_block(block, &inside, h);
            let records: Vec<DistanceRecord> = (0..u.len())
                .filter(|&v| inside[v])
                .map(|v| DistanceRecord {
                    distance: u[v] / spacing,
                    owner: p1.owner(block.nearest[v] as usize),
                    method: Method::Sdf,
                })
                .collect();
            let grid = keep_grids.then(|| SignedDistanceGrid {
                grain: block.grain,
                lo: block.lo,
                dims: block.dims,
                h,
                phi: u.iter().zip(&inside).map(|(&x, &s)| if s { x } else { -x }).collect(),
                fixed,
                rounds,
            });
            (records, grid)
        })
        .collect();
    let mut records = Vec::new();
    let mut grids = Vec::new();
    for (r, g) in per_grain {
        records.extend(r);
        grids.extend(g);
    }
    Ok(SdfOutput { records, grids })
}

/// Godunov gradient magnitude at every inside voxel that is not fixed, not
/// on the block border and not a ridge (a local maximum along some axis).
pub fn eikonal_residuals(grid: &SignedDistanceGrid) -> Vec<f64> {
    let [nx, ny, nz] = grid.dims;
    let h = grid.h;
    let mut out = Vec::new();
    for k in 1..nz.saturating_sub(1) {
        for j in 1..ny.saturating_sub(1) {
            for i in 1..nx.saturating_sub(1) {
                let v = grid.idx(i, j, k);
                let p = grid.phi[v];
                if !(p > 0.0) || grid.fixed[v] {
                    continue;
                }
                let pairs = [
                    (grid.phi[v - 1], grid.phi[v + 1]),
                    (grid.phi[v - nx], grid.phi[v + nx]),
                    (grid.phi[v - nx * ny], grid.phi[v + nx * ny]),
                ];
                if pairs.iter().any(|&(m, q)| p >= m && p >= q) {
                    continue;
                }
                let g2: f64 = pairs
                    .iter()
                    .map(|&(m, q)| {
                        let d = (p - m.min(q)).max(0.0) / h;
                        d * d
                    })
                    .sum();
                out.push(g2.sqrt());
            }
        }
    }
    out
}
