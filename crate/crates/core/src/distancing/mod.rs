//! Distances from material points to grain boundaries.
//!
//! Three estimators are provided:
//! * [`distance_dis`] searches, for every point, the nearest neighbour whose
//!   disorientation exceeds a threshold;
//! * [`distance_sdf`] voxelizes each grain and solves the eikonal equation
//!   inside it by fast sweeping;
//! * [`distance_vor`] extracts the grain hull from the Voronoi tessellation
//!   and measures exact point-to-polygon distances through a BVH.
//!
//! All distances are reported in lattice spacings.

mod bvh;
mod cell;
mod dis;
mod hull;
mod sdf;
mod state;
mod vor;

pub use bvh::FacetBvh;
pub use cell::{CellFace, ConvexCell, WALL_IDS};
pub use dis::{distance_dis, DisParams, Schedule};
pub use hull::{point_facet_distance, GrainHull, HullFacet};
pub use sdf::{distance_sdf, eikonal_residuals, godunov_update, SdfOutput, SignedDistanceGrid};
pub use state::{attach_state, grain_mean_orientations, point_states, AttachedRecords, PointState};
pub use vor::{distance_vor, grain_hull, write_hull_obj, VorOutput, VorParams};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Sdf,
    Vor,
    Dis,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Sdf => "sdf",
            Method::Vor => "vor",
            Method::Dis => "dis",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sdf" => Some(Method::Sdf),
            "vor" => Some(Method::Vor),
            "dis" => Some(Method::Dis),
            _ => None,
        }
    }
}

/// Distance of one material point (or voxel, for SDF) to its grain
/// boundary. `owner` is the index of the material point whose state the
/// record carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceRecord {
    pub distance: f64,
    pub owner: u32,
    pub method: Method,
}

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("grain {grain}: Voronoi cells still touch the guard box after {retries} enlargements")]
    GuardExhausted { grain: u32, retries: usize },
    #[error("orientation statistics requested without a grain partition")]
    MissingPartition,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("search radius {radius} exceeds the periodic shell thickness {thickness}")]
    ShellTooThin { radius: f64, thickness: f64 },
    #[error(transparent)]
    Cloud(#[from] crate::point_clouds::CloudError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}
