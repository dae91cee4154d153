//! Grain hull facets and exact point-to-facet distances.

use crate::geom::Aabb;
use crate::Vec3;

/// One planar convex polygon of a grain hull, with a local 2-D frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HullFacet {
    pub verts: Vec<Vec3>,
    /// Unit normal pointing out of the grain.
    pub normal: Vec3,
    /// Frame origin (first vertex) and in-plane axes.
    pub origin: Vec3,
    pub u: Vec3,
    pub v: Vec3,
    /// Vertex coordinates in the (u, v) frame, counter-clockwise.
    pub poly: Vec<[f64; 2]>,
    pub bbox: Aabb,
    pub diameter: f64,
    pub centroid: Vec3,
    pub area: f64,
    /// `P1` entries on both sides: inside (member) and outside.
    pub inner: u32,
    pub outer: u32,
}

impl HullFacet {
    pub fn new(verts: Vec<Vec3>, normal: Vec3, inner: u32, outer: u32) -> Self {
        let origin = verts[0];
        let far = verts
            .iter()
            .skip(1)
            .max_by(|a, b| (*a - origin).norm_squared().total_cmp(&(*b - origin).norm_squared()))
            .copied()
            .unwrap_or(origin);
        let d = far - origin;
        let u = (d - normal * normal.dot(&d)).normalize();
        let v = normal.cross(&u);
        let poly: Vec<[f64; 2]> = verts
            .iter()
            .map(|p| {
                let r = p - origin;
                [r.dot(&u), r.dot(&v)]
            })
            .collect();
        let bbox = Aabb::from_points(&verts);
        let mut diameter = 0.0f64;
        for a in &verts {
            for b in &verts {
                diameter = diameter.max((a - b).norm());
            }
        }
        let mut area_vec = Vec3::zeros();
        let mut centroid = Vec3::zeros();
        for t in 1..verts.len() - 1 {
            let tri = (verts[t] - origin).cross(&(verts[t + 1] - origin)) * 0.5;
            let w = tri.dot(&normal);
            area_vec += tri;
            centroid += (origin + verts[t] + verts[t + 1]) / 3.0 * w;
        }
        let area = area_vec.dot(&normal);
        let centroid = if area > 0.0 { centroid / area } else { origin };
        Self {
            verts,
            normal,
            origin,
            u,
            v,
            poly,
            bbox,
            diameter,
            centroid,
            area,
            inner,
            outer,
        }
    }
}

/// Exact Euclidean distance from `p` to the facet polygon.
///
/// If the projection of `p` falls inside the polygon (boundary included,
/// with a tolerance of `1e-9` times the facet diameter) the plane distance
/// is returned; otherwise the in-plane distance to the nearest edge point,
/// perpendicular foot or vertex, is combined with the plane offset.
pub fn point_facet_distance(p: &Vec3, f: &HullFacet) -> f64 {
    let r = p - f.origin;
    let h = r.dot(&f.normal);
    let x = [r.dot(&f.u), r.dot(&f.v)];
    let tol = 1e-9 * f.diameter;
    let m = f.poly.len();
    let mut inside = true;
    for t in 0..m {
        let a = f.poly[t];
        let b = f.poly[(t + 1) % m];
        let e = [b[0] - a[0], b[1] - a[1]];
        let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
        let cross = e[0] * (x[1] - a[1]) - e[1] * (x[0] - a[0]);
        if cross < -tol * len {
            inside = false;
            break;
        }
    }
    if inside {
        return h.abs();
    }
    let mut best = f64::INFINITY;
    for t in 0..m {
        let a = f.poly[t];
        let b = f.poly[(t + 1) % m];
        let e = [b[0] - a[0], b[1] - a[1]];
        let w = [x[0] - a[0], x[1] - a[1]];
        let l2 = e[0] * e[0] + e[1] * e[1];
        let s = if l2 > 0.0 { ((w[0] * e[0] + w[1] * e[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
        let dx = w[0] - s * e[0];
        let dy = w[1] - s * e[1];
        best = best.min(dx * dx + dy * dy);
    }
    (h * h + best).sqrt()
}

/// Closed surface bounding one grain.
#[derive(Debug, Clone)]
pub struct GrainHull {
    pub grain: u32,
    pub facets: Vec<HullFacet>,
    /// Guard thickness that produced wall-free cells.
    pub guard: f64,
    /// Directed edges without exactly one opposite partner.
    pub unmatched_edges: usize,
    /// |sum of area-weighted normals| relative to total area.
    pub flux_defect: f64,
}

impl GrainHull {
    pub fn is_watertight(&self) -> bool {
        self.unmatched_edges == 0 && self.flux_defect < 1e-9
    }

    pub fn total_area(&self) -> f64 {
        self.facets.iter().map(|f| f.area).sum()
    }

    /// Computes the closure diagnostics from the facets. Vertices are matched
    /// after snapping to a grid of `snap` length units.
    pub fn check_closure(&mut self, snap: f64) {
        use std::collections::HashMap;
        let key = |p: &Vec3| {
            [
                (p.x / snap).round() as i64,
                (p.y / snap).round() as i64,
                (p.z / snap).round() as i64,
            ]
        };
        let mut edges: HashMap<([i64; 3], [i64; 3]), i64> = HashMap::new();
        for f in &self.facets {
            let m = f.verts.len();
            for t in 0..m {
                let a = key(&f.verts[t]);
                let b = key(&f.verts[(t + 1) % m]);
                if a == b {
                    continue;
                }
                if a < b {
                    *edges.entry((a, b)).or_insert(0) += 1;
                } else {
                    *edges.entry((b, a)).or_insert(0) -= 1;
                }
            }
        }
        self.unmatched_edges = edges.values().map(|&c| c.unsigned_abs() as usize).sum();
        let flux = self
            .facets
            .iter()
            .fold(Vec3::zeros(), |a, f| a + f.normal * f.area);
        let total = self.total_area();
        self.flux_defect = if total > 0.0 { flux.norm() / total } else { 0.0 };
    }
}
