//! Grain reconstruction and grain-boundary distance statistics for periodic
//! crystal-plasticity representative volume elements.
//!
//! The crate is organised bottom-up: [`rve_io`] reads and synthesises strain
//! step datasets, [`tensor`] and [`orientation`] hold the per-point kernels,
//! [`point_clouds`] builds periodic clouds and bin indices, [`grains`]
//! reconstructs grains, [`distancing`] computes distances to grain
//! boundaries, [`stats`] bins the results and [`pipeline`] ties it together.

pub mod alloc;
pub mod distancing;
pub mod geom;
pub mod grains;
pub mod orientation;
pub mod pipeline;
pub mod point_clouds;
pub mod rve_io;
pub mod stats;
pub mod tensor;

pub use geom::{Aabb, Mat3, Quat, Vec3};
