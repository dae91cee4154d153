//! Grain reconstruction: texture-id labelling, Louvain community detection
//! on a disorientation graph, periodic fragment merging and voxelization.

mod fragments;
mod graph;
mod louvain;
mod voxel;

pub use fragments::{merge_periodic_fragments, FragmentError, GrainGeometry, GrainImage};
pub use graph::{build_disorientation_graph, edge_weight, DisorientationGraph, GraphEdge};
pub use louvain::{louvain, modularity};
pub use voxel::{build_global_voxelization, GlobalVoxelization, VoxelBlock, VoxelGrid};

use crate::rve_io::StrainStepDataset;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GrainError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("neighbour radius {r_lv} exceeds the periodic shell thickness {thickness}")]
    ShellTooThin { r_lv: f64, thickness: f64 },
    #[error(transparent)]
    Cloud(#[from] crate::point_clouds::CloudError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReconMethod {
    Texture,
    Louvain { k_l: f64 },
}

impl ReconMethod {
    /// Short tag used in output file names.
    pub fn tag(&self) -> String {
        match self {
            ReconMethod::Texture => "tex".into(),
            ReconMethod::Louvain { k_l } => format!("lou{k_l}"),
        }
    }
}

/// Grain label per material point. Labels are dense, numbered by order of
/// first appearance over the point index.
#[derive(Debug, Clone, PartialEq)]
pub struct GrainPartition {
    pub labels: Vec<u32>,
    pub n_grains: usize,
    pub method: ReconMethod,
}

impl GrainPartition {
    /// Renumbers arbitrary labels densely by first appearance.
    pub fn from_raw_labels(raw: &[u32], method: ReconMethod) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels: Vec<u32> = raw
            .iter()
            .map(|&r| {
                let next = map.len() as u32;
                *map.entry(r).or_insert(next)
            })
            .collect();
        Self {
            labels,
            n_grains: map.len(),
            method,
        }
    }

    /// Point indices of every grain, ascending.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut m = vec![Vec::new(); self.n_grains];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l as usize].push(i as u32);
        }
        m
    }

    pub fn grain_sizes(&self) -> Vec<usize> {
        let mut s = vec![0usize; self.n_grains];
        for &l in &self.labels {
            s[l as usize] += 1;
        }
        s
    }
}

/// Grains taken directly from the texture ids stored with each point.
pub fn reconstruct_tex(dataset: &StrainStepDataset) -> GrainPartition {
    let raw: Vec<u32> = dataset.points.iter().map(|p| p.texture_id).collect();
    GrainPartition::from_raw_labels(&raw, ReconMethod::Texture)
}
