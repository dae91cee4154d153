//! Periodic point clouds built from one strain step and a bucketed spatial
//! index over them.
//!
//! Three clouds are used: the original points (`P0`), `P0` plus the periodic
//! images that fall within a shell of thickness epsilon around its bounding
//! box (`P0Eps`), and `P0` with all 26 neighbouring images (`P1`). The full
//! `P1` cloud is never materialised: entry `e` is owner `e % N` translated by
//! image `e / N`.

mod index;

pub use index::{P1View, SpatialBinIndex};

use crate::geom::Aabb;
use crate::{Mat3, Vec3};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("shell thickness {thickness} must be in (0, {limit}]")]
    InvalidThickness { thickness: f64, limit: f64 },
    #[error("query radius {radius} exceeds bucket width {width}")]
    RadiusExceedsBucket { radius: f64, width: f64 },
    #[error("invalid bucket width {0}")]
    InvalidBucketWidth(f64),
    #[error("bucket grid of {0} cells is too large")]
    GridTooLarge(u128),
    #[error("cloud has no points")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudKind {
    P0,
    P0Eps,
    P1,
}

const fn build_image_offsets() -> [[i32; 3]; 27] {
    let mut t = [[0i32; 3]; 27];
    let mut n = 1;
    let mut i = -1;
    while i <= 1 {
        let mut j = -1;
        while j <= 1 {
            let mut k = -1;
            while k <= 1 {
                if !(i == 0 && j == 0 && k == 0) {
                    t[n] = [i, j, k];
                    n += 1;
                }
                k += 1;
            }
            j += 1;
        }
        i += 1;
    }
    t
}

/// Lattice offsets of the periodic images. Image 0 is the original; images
/// 1..=26 follow (i, j, k) in lexicographic order, skipping the centre.
pub const IMAGE_OFFSETS: [[i32; 3]; 27] = build_image_offsets();

/// Period vectors of the deformed RVE, stored as matrix columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicLattice {
    pub vectors: Mat3,
}

impl PeriodicLattice {
    pub fn orthorhombic(edges: [f64; 3]) -> Self {
        Self {
            vectors: Mat3::from_diagonal(&Vec3::from(edges)),
        }
    }

    /// Period vectors of the RVE after the average deformation `f_bar`.
    pub fn from_average_deformation(f_bar: &Mat3, initial_edges: [f64; 3]) -> Self {
        Self {
            vectors: f_bar * Mat3::from_diagonal(&Vec3::from(initial_edges)),
        }
    }

    pub fn translation(&self, image: usize) -> Vec3 {
        let o = IMAGE_OFFSETS[image];
        self.vectors * Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64)
    }

    pub fn translations(&self) -> [Vec3; 27] {
        std::array::from_fn(|k| self.translation(k))
    }

    /// Length of the shortest period vector.
    pub fn min_period(&self) -> f64 {
        (0..3)
            .map(|c| self.vectors.column(c).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// One entry of a periodic cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudEntry {
    pub position: Vec3,
    pub owner: u32,
    pub image: u8,
}

#[derive(Debug, Clone)]
enum Entries {
    /// Every base point, image 0.
    Base,
    /// Every base point in all 27 images, image-major.
    AllImages,
    /// Explicit (owner, image) list.
    Listed(Vec<(u32, u8)>),
}

#[derive(Debug, Clone)]
pub struct PeriodicPointCloud {
    kind: CloudKind,
    base: Arc<[Vec3]>,
    translations: [Vec3; 27],
    entries: Entries,
    base_box: Aabb,
    thickness: f64,
}

impl PeriodicPointCloud {
    /// The original points; `lattice` is kept for building image clouds.
    pub fn build_p0(positions: Vec<Vec3>, lattice: &PeriodicLattice) -> Result<Self, CloudError> {
        if positions.is_empty() {
            return Err(CloudError::Empty);
        }
        let base_box = Aabb::from_points(&positions);
        Ok(Self {
            kind: CloudKind::P0,
            base: positions.into(),
            translations: lattice.translations(),
            entries: Entries::Base,
            base_box,
            thickness: 0.0,
        })
    }

    /// All 27 periodic images of `P0` (virtual).
    pub fn build_p1(&self) -> Self {
        Self {
            kind: CloudKind::P1,
            entries: Entries::AllImages,
            ..self.base_cloud()
        }
    }

    /// `P0` plus image points lying within `thickness` of its bounding box.
    pub fn build_p0_eps(&self, thickness: f64) -> Result<Self, CloudError> {
        let limit = 0.5 * self.min_period();
        if !(thickness > 0.0 && thickness <= limit) {
            return Err(CloudError::InvalidThickness { thickness, limit });
        }
        let shell = self.base_box.fattened(thickness);
        let n = self.base.len();
        let mut listed: Vec<(u32, u8)> = (0..n as u32).map(|o| (o, 0)).collect();
        for image in 1..27 {
            let t = self.translations[image];
            for (owner, p) in self.base.iter().enumerate() {
                if shell.contains(&(p + t)) {
                    listed.push((owner as u32, image as u8));
                }
            }
        }
        Ok(Self {
            kind: CloudKind::P0Eps,
            entries: Entries::Listed(listed),
            thickness,
            ..self.base_cloud()
        })
    }

    fn base_cloud(&self) -> Self {
        Self {
            kind: CloudKind::P0,
            base: self.base.clone(),
            translations: self.translations,
            entries: Entries::Base,
            base_box: self.base_box,
            thickness: 0.0,
        }
    }

    fn min_period(&self) -> f64 {
        (1..27)
            .filter(|&k| {
                let o = IMAGE_OFFSETS[k];
                o.iter().map(|x| x.abs()).sum::<i32>() == 1
            })
            .map(|k| self.translations[k].norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn kind(&self) -> CloudKind {
        self.kind
    }

    /// Number of original points N.
    pub fn n_base(&self) -> usize {
        self.base.len()
    }

    pub fn len(&self) -> usize {
        match &self.entries {
            Entries::Base => self.base.len(),
            Entries::AllImages => 27 * self.base.len(),
            Entries::Listed(l) => l.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base_positions(&self) -> &[Vec3] {
        &self.base
    }

    /// Bounding box of the original points.
    pub fn base_box(&self) -> Aabb {
        self.base_box
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    pub fn translation(&self, image: u8) -> Vec3 {
        self.translations[image as usize]
    }

    #[inline]
    pub fn owner_image(&self, entry: usize) -> (u32, u8) {
        match &self.entries {
            Entries::Base => (entry as u32, 0),
            Entries::AllImages => {
                let n = self.base.len();
                ((entry % n) as u32, (entry / n) as u8)
            }
            Entries::Listed(l) => l[entry],
        }
    }

    #[inline]
    pub fn owner(&self, entry: usize) -> u32 {
        self.owner_image(entry).0
    }

    #[inline]
    pub fn position(&self, entry: usize) -> Vec3 {
        let (o, img) = self.owner_image(entry);
        self.position_of(o, img)
    }

    #[inline]
    pub fn position_of(&self, owner: u32, image: u8) -> Vec3 {
        let p = self.base[owner as usize];
        if image == 0 {
            p
        } else {
            p + self.translations[image as usize]
        }
    }

    pub fn entry(&self, entry: usize) -> CloudEntry {
        let (owner, image) = self.owner_image(entry);
        CloudEntry {
            position: self.position_of(owner, image),
            owner,
            image,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = CloudEntry> + '_ {
        (0..self.len()).map(move |e| self.entry(e))
    }

    /// Entry index of (owner, image) in a `P1` cloud.
    pub fn p1_entry(&self, owner: u32, image: u8) -> usize {
        debug_assert_eq!(self.kind, CloudKind::P1);
        image as usize * self.base.len() + owner as usize
    }
}
