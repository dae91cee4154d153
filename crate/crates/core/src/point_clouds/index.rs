//! Dense bucket grid over a point set, stored in compressed-row form.

use super::{CloudError, PeriodicPointCloud};
use crate::geom::{dist_sq, Aabb};
use crate::Vec3;

const MAX_CELLS_PER_POINT: u128 = 64;

/// Bucket grid with cubic cells of side `width`. Points are stored sorted by
/// cell, each cell's points in ascending id order.
#[derive(Debug, Clone)]
pub struct SpatialBinIndex {
    origin: Vec3,
    width: f64,
    inv_width: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    ids: Vec<u32>,
    pts: Vec<Vec3>,
    bounds: Aabb,
}

impl SpatialBinIndex {
    /// Index over every entry of `cloud`; ids are entry indices.
    pub fn build(cloud: &PeriodicPointCloud, width: f64) -> Result<Self, CloudError> {
        let pts: Vec<Vec3> = (0..cloud.len()).map(|e| cloud.position(e)).collect();
        Self::from_points(&pts, width)
    }

    /// Index over `points`; ids are slice positions.
    pub fn from_points(points: &[Vec3], width: f64) -> Result<Self, CloudError> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(CloudError::InvalidBucketWidth(width));
        }
        if points.is_empty() {
            return Err(CloudError::Empty);
        }
        let bounds = Aabb::from_points(points);
        let inv_width = 1.0 / width;
        let ext = bounds.extent();
        let dims_f = [0, 1, 2].map(|a| (ext[a] * inv_width).floor() + 1.0);
        let cells: u128 = dims_f.iter().map(|&d| d as u128).product();
        if cells > MAX_CELLS_PER_POINT * points.len() as u128 + (1 << 16) {
            return Err(CloudError::GridTooLarge(cells));
        }
        let dims = dims_f.map(|d| d as usize);
        let mut index = Self {
            origin: bounds.min,
            width,
            inv_width,
            dims,
            starts: Vec::new(),
            ids: Vec::new(),
            pts: Vec::new(),
            bounds,
        };
        let n_cells = dims[0] * dims[1] * dims[2];
        let cell_of: Vec<u32> = points.iter().map(|p| index.cell_id(p) as u32).collect();
        let mut starts = vec![0u32; n_cells + 1];
        for &c in &cell_of {
            starts[c as usize + 1] += 1;
        }
        for c in 0..n_cells {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut ids = vec![0u32; points.len()];
        let mut pts = vec![Vec3::zeros(); points.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            let slot = fill[c as usize] as usize;
            fill[c as usize] += 1;
            ids[slot] = i as u32;
            pts[slot] = points[i];
        }
        index.starts = starts;
        index.ids = ids;
        index.pts = pts;
        Ok(index)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    #[inline]
    fn axis_cell(&self, x: f64, a: usize) -> usize {
        let c = ((x - self.origin[a]) * self.inv_width).floor();
        c.clamp(0.0, (self.dims[a] - 1) as f64) as usize
    }

    fn cell_id(&self, p: &Vec3) -> usize {
        let i = self.axis_cell(p.x, 0);
        let j = self.axis_cell(p.y, 1);
        let k = self.axis_cell(p.z, 2);
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Calls `f(id, position)` for every point in a cell overlapping the box.
    #[inline]
    pub fn visit_box<F: FnMut(u32, &Vec3)>(&self, lo: &Vec3, hi: &Vec3, mut f: F) {
        if (0..3).any(|a| hi[a] < self.bounds.min[a] || lo[a] > self.bounds.max[a]) {
            return;
        }
        let l = [0, 1, 2].map(|a| self.axis_cell(lo[a], a));
        let h = [0, 1, 2].map(|a| self.axis_cell(hi[a], a));
        for k in l[2]..=h[2] {
            for j in l[1]..=h[1] {
                let row = self.dims[0] * (j + self.dims[1] * k);
                let s = self.starts[row + l[0]] as usize;
                let e = self.starts[row + h[0] + 1] as usize;
                for slot in s..e {
                    f(self.ids[slot], &self.pts[slot]);
                }
            }
        }
    }

    /// Calls `f(id, squared distance)` for every point within `radius`.
    #[inline]
    pub fn visit_within<F: FnMut(u32, f64)>(&self, center: &Vec3, radius: f64, mut f: F) {
        let r2 = radius * radius;
        let r = Vec3::repeat(radius);
        self.visit_box(&(center - r), &(center + r), |id, p| {
            let d2 = dist_sq(center, p);
            if d2 <= r2 {
                f(id, d2);
            }
        });
    }

    /// Ids of all points within `radius` of `center`, ascending. The radius
    /// may not exceed the bucket width.
    pub fn range_query(&self, center: &Vec3, radius: f64) -> Result<Vec<u32>, CloudError> {
        if radius > self.width {
            return Err(CloudError::RadiusExceedsBucket {
                radius,
                width: self.width,
            });
        }
        let mut out = Vec::new();
        self.visit_within(center, radius, |id, _| out.push(id));
        out.sort_unstable();
        Ok(out)
    }

    /// Nearest point to `center` as (id, squared distance); ties go to the
    /// lowest id.
    pub fn nearest(&self, center: &Vec3) -> (u32, f64) {
        let mut rho = self.bounds.distance_sq(center).sqrt() + self.width;
        loop {
            let mut best = (u32::MAX, f64::INFINITY);
            self.visit_within(center, rho, |id, d2| {
                if d2 < best.1 || (d2 == best.1 && id < best.0) {
                    best = (id, d2);
                }
            });
            if best.0 != u32::MAX {
                return best;
            }
            rho *= 2.0;
        }
    }
}

/// Queries over the virtual `P1` cloud, answered by translating the query
/// into each of the 27 images of an index built over the original points.
#[derive(Debug, Clone, Copy)]
pub struct P1View<'a> {
    cloud: &'a PeriodicPointCloud,
    index: &'a SpatialBinIndex,
}

impl<'a> P1View<'a> {
    /// `index` must be built over `p1.base_positions()`.
    pub fn new(p1: &'a PeriodicPointCloud, index: &'a SpatialBinIndex) -> Self {
        debug_assert_eq!(index.len(), p1.n_base());
        Self { cloud: p1, index }
    }

    pub fn cloud(&self) -> &PeriodicPointCloud {
        self.cloud
    }

    /// Calls `f(entry, squared distance)` for every `P1` entry within
    /// `radius`, image-major.
    pub fn visit_within<F: FnMut(usize, f64)>(&self, center: &Vec3, radius: f64, mut f: F) {
        let n = self.cloud.n_base();
        let r2 = radius * radius;
        let pad = Vec3::repeat(radius * (1.0 + 1e-12) + 1e-12);
        for img in 0..27u8 {
            let t = self.cloud.translation(img);
            let c = center - t;
            let (lo, hi) = (c - pad, c + pad);
            self.index.visit_box(&lo, &hi, |owner, p| {
                let q = if img == 0 { *p } else { p + t };
                let d2 = dist_sq(center, &q);
                if d2 <= r2 {
                    f(img as usize * n + owner as usize, d2);
                }
            });
        }
    }

    /// Calls `f(entry, position)` for every `P1` entry inside the closed box.
    pub fn visit_box<F: FnMut(usize, &Vec3)>(&self, bx: &Aabb, mut f: F) {
        let n = self.cloud.n_base();
        let pad = Vec3::repeat(1e-9 * (1.0 + bx.extent().amax()));
        for img in 0..27u8 {
            let t = self.cloud.translation(img);
            let lo = bx.min - t - pad;
            let hi = bx.max - t + pad;
            self.index.visit_box(&lo, &hi, |owner, p| {
                let q = if img == 0 { *p } else { p + t };
                if bx.contains(&q) {
                    f(img as usize * n + owner as usize, &q);
                }
            });
        }
    }

    /// `P1` entries within `radius`, ascending.
    pub fn range_query(&self, center: &Vec3, radius: f64) -> Result<Vec<usize>, CloudError> {
        if radius > self.index.width() {
            return Err(CloudError::RadiusExceedsBucket {
                radius,
                width: self.index.width(),
            });
        }
        let mut out = Vec::new();
        self.visit_within(center, radius, |e, _| out.push(e));
        out.sort_unstable();
        Ok(out)
    }

    /// Nearest `P1` entry as (entry, squared distance); ties go to the lowest
    /// entry index.
    pub fn nearest(&self, center: &Vec3) -> (usize, f64) {
        let mut rho = self.index.width();
        loop {
            let mut best = (usize::MAX, f64::INFINITY);
            self.visit_within(center, rho, |e, d2| {
                if d2 < best.1 || (d2 == best.1 && e < best.0) {
                    best = (e, d2);
                }
            });
            if best.0 != usize::MAX {
                return best;
            }
            rho *= 2.0;
        }
    }
}
