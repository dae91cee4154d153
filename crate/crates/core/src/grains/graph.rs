//! Disorientation-weighted neighbour graph over the material points.

use super::GrainError;
use crate::orientation::disorientation_deg_unchecked;
use crate::point_clouds::{CloudKind, PeriodicPointCloud, SpatialBinIndex};
use crate::rve_io::StrainStepDataset;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub a: u32,
    pub b: u32,
    pub weight: f64,
}

/// Undirected graph, one edge per unordered point pair with `a < b`,
/// sorted by `(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorientationGraph {
    pub n_nodes: usize,
    pub edges: Vec<GraphEdge>,
    pub k_l: f64,
}

/// `exp(K_L (cos(theta / 2) - 1))`: 1 for identical orientations, decaying
/// with the scalar part of the disorientation quaternion.
pub fn edge_weight(theta_deg: f64, k_l: f64) -> f64 {
    (k_l * ((0.5 * theta_deg.to_radians()).cos() - 1.0)).exp()
}

/// Connects every pair of points closer than `r_lv`, across periodic
/// boundaries, weighted by their disorientation.
pub fn build_disorientation_graph(
    dataset: &StrainStepDataset,
    p0_eps: &PeriodicPointCloud,
    k_l: f64,
    r_lv: f64,
) -> Result<DisorientationGraph, GrainError> {
    if !(k_l > 0.0 && k_l.is_finite()) {
        return Err(GrainError::InvalidParameter(format!("K_L = {k_l}")));
    }
    if !(r_lv > 0.0) {
        return Err(GrainError::InvalidParameter(format!("R_lv = {r_lv}")));
    }
    if p0_eps.kind() != CloudKind::P0Eps || p0_eps.n_base() != dataset.len() {
        return Err(GrainError::InvalidParameter("expected the P0+eps cloud of this dataset".into()));
    }
    if p0_eps.thickness() < r_lv {
        return Err(GrainError::ShellTooThin {
            r_lv,
            thickness: p0_eps.thickness(),
        });
    }
    let index = SpatialBinIndex::build(p0_eps, r_lv)?;
    let n = dataset.len();
    let chunks: Vec<Vec<GraphEdge>> = (0..n)
        .into_par_iter()
        .with_min_len(256)
        .map(|i| {
            let qi = dataset.points[i].orientation;
            let pi = p0_eps.position(i);
            let mut owners: Vec<u32> = Vec::new();
            index.visit_within(&pi, r_lv, |e, _| {
                let o = p0_eps.owner(e as usize);
                if o as usize > i {
                    owners.push(o);
                }
            });
            owners.sort_unstable();
            owners.dedup();
            owners
                .into_iter()
                .map(|o| {
                    let theta = disorientation_deg_unchecked(&qi, &dataset.points[o as usize].orientation);
                    GraphEdge {
                        a: i as u32,
                        b: o,
                        weight: edge_weight(theta, k_l),
                    }
                })
                .collect()
        })
        .collect();
    let edges = chunks.into_iter().flatten().collect();
    Ok(DisorientationGraph { n_nodes: n, edges, k_l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::axis_angle;
    use crate::point_clouds::PeriodicLattice;
    use crate::rve_io::{generate_synthetic, SyntheticSpec};
    use crate::Vec3;

    #[test]
    fn weight_values() {
        assert_eq!(edge_weight(0.0, 1000.0), 1.0);
        // 5 degrees: cos(2.5 deg) - 1 = -9.5172e-4
        let w75 = edge_weight(5.0, 75.0);
        assert!((w75 - (75.0 * (2.5f64.to_radians().cos() - 1.0)).exp()).abs() < 1e-15);
        assert!(w75 > 0.93 && w75 < 0.94);
        let w1000 = edge_weight(5.0, 1000.0);
        assert!(w1000 > 0.38 && w1000 < 0.39);
        assert!(edge_weight(15.0, 1000.0) < edge_weight(5.0, 1000.0));
    }

    fn eps_cloud(ds: &StrainStepDataset, eps: f64) -> PeriodicPointCloud {
        let lat = PeriodicLattice::orthorhombic(ds.initial_edges());
        let pos = ds.points.iter().map(|p| p.position).collect();
        PeriodicPointCloud::build_p0(pos, &lat).unwrap().build_p0_eps(eps).unwrap()
    }

    #[test]
    fn lattice_neighbour_counts() {
        let ds = generate_synthetic(&SyntheticSpec::new([6, 6, 6], 1, 0)).unwrap().dataset;
        let cloud = eps_cloud(&ds, 2.0);
        // radius 1: six face neighbours per point, each edge counted once.
        let g = build_disorientation_graph(&ds, &cloud, 1000.0, 1.0).unwrap();
        assert_eq!(g.edges.len(), 216 * 3);
        assert!(g.edges.iter().all(|e| e.a < e.b && (e.weight - 1.0).abs() < 1e-12));
        // radius 2 in a 6-periodic lattice: 32 neighbours within distance 2.
        let g = build_disorientation_graph(&ds, &cloud, 1000.0, 2.0).unwrap();
        assert_eq!(g.edges.len(), 216 * 32 / 2);
    }

    #[test]
    fn rejects_thin_shell() {
        let ds = generate_synthetic(&SyntheticSpec::new([6, 6, 6], 1, 0)).unwrap().dataset;
        let cloud = eps_cloud(&ds, 1.0);
        assert!(matches!(
            build_disorientation_graph(&ds, &cloud, 75.0, 2.0),
            Err(GrainError::ShellTooThin { .. })
        ));
    }

    #[test]
    fn weight_reflects_pair_disorientation() {
        let mut ds = generate_synthetic(&SyntheticSpec::new([4, 4, 4], 1, 0)).unwrap().dataset;
        for p in ds.points.iter_mut() {
            p.orientation = crate::Quat::identity();
        }
        ds.points[0].orientation = axis_angle(&Vec3::x(), 20f64.to_radians());
        let cloud = eps_cloud(&ds, 1.0);
        let g = build_disorientation_graph(&ds, &cloud, 75.0, 1.0).unwrap();
        for e in &g.edges {
            let want = if e.a == 0 { edge_weight(20.0, 75.0) } else { 1.0 };
            assert!((e.weight - want).abs() < 1e-12);
        }
    }
}
