//! Bounding volume hierarchy over hull facets for nearest-facet queries.

use super::hull::{point_facet_distance, HullFacet};
use crate::geom::Aabb;
use crate::Vec3;
use std::cell::RefCell;

const LEAF_SIZE: usize = 4;
/// A query radius is re-issued when the best distance found drops below
/// this fraction of it.
const REQUERY_FRACTION: f64 = 0.9;

#[derive(Debug, Clone)]
struct Node {
    bbox: Aabb,
    /// Leaf: range into `order` (`count > 0`). Internal: child indices.
    start: u32,
    count: u32,
    left: u32,
    right: u32,
}

#[derive(Debug, Clone)]
pub struct FacetBvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

impl FacetBvh {
    /// Median split on the longest axis of the facet centroids.
    pub fn build(facets: &[HullFacet]) -> Self {
        let mut order: Vec<u32> = (0..facets.len() as u32).collect();
        let mut nodes = Vec::new();
        if !facets.is_empty() {
            build_node(facets, &mut order, 0, facets.len(), &mut nodes);
        }
        Self { nodes, order }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn collect_within(&self, p: &Vec3, r2: f64, out: &mut Vec<u32>) {
        let mut stack = vec![0u32];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni as usize];
            if node.bbox.distance_sq(p) > r2 {
                continue;
            }
            if node.count > 0 {
                let s = node.start as usize;
                out.extend_from_slice(&self.order[s..s + node.count as usize]);
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
    }

    /// Distance to the facet found by always descending into the child
    /// whose box is closer.
    fn greedy(&self, p: &Vec3, facets: &[HullFacet]) -> f64 {
        let mut ni = 0usize;
        loop {
            let node = &self.nodes[ni];
            if node.count > 0 {
                let s = node.start as usize;
                return self.order[s..s + node.count as usize]
                    .iter()
                    .map(|&f| point_facet_distance(p, &facets[f as usize]))
                    .fold(f64::INFINITY, f64::min);
            }
            let l = &self.nodes[node.left as usize];
            let r = &self.nodes[node.right as usize];
            ni = if l.bbox.distance_sq(p) <= r.bbox.distance_sq(p) {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    /// Exact distance from `p` to the nearest facet.
    ///
    /// Starts from the greedy facet's distance as search radius; every facet
    /// whose box lies within the radius is evaluated once, and the radius is
    /// re-issued whenever the best distance drops below 0.9 of it.
    pub fn nearest_distance(&self, p: &Vec3, facets: &[HullFacet]) -> f64 {
        if self.nodes.is_empty() {
            return f64::INFINITY;
        }
        thread_local! {
            static SCRATCH: RefCell<(Vec<u32>, u32, Vec<u32>)> = const { RefCell::new((Vec::new(), 0, Vec::new())) };
        }
        SCRATCH.with(|cell| {
            let (stamp, gen, cand) = &mut *cell.borrow_mut();
            if stamp.len() < facets.len() {
                stamp.resize(facets.len(), 0);
            }
            *gen = gen.wrapping_add(1);
            if *gen == 0 {
                stamp.iter_mut().for_each(|s| *s = 0);
                *gen = 1;
            }
            let mut best = self.greedy(p, facets);
            let mut radius = best;
            loop {
                cand.clear();
                self.collect_within(p, radius * radius, cand);
                for &f in cand.iter() {
                    if stamp[f as usize] == *gen {
                        continue;
                    }
                    stamp[f as usize] = *gen;
                    best = best.min(point_facet_distance(p, &facets[f as usize]));
                }
                if best < REQUERY_FRACTION * radius {
                    radius = best;
                } else {
                    break;
                }
            }
            best
        })
    }
}

fn build_node(facets: &[HullFacet], order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let slice = &mut order[start..end];
    let mut bbox = Aabb::empty();
    let mut cbox = Aabb::empty();
    for &f in slice.iter() {
        bbox = bbox.merge(&facets[f as usize].bbox);
        cbox.grow(&facets[f as usize].centroid);
    }
    let id = nodes.len() as u32;
    nodes.push(Node {
        bbox,
        start: start as u32,
        count: (end - start) as u32,
        left: 0,
        right: 0,
    });
    if end - start <= LEAF_SIZE {
        return id;
    }
    let ext = cbox.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        facets[a as usize].centroid[axis]
            .total_cmp(&facets[b as usize].centroid[axis])
            .then(a.cmp(&b))
    });
    let left = build_node(facets, order, start, start + mid, nodes);
    let right = build_node(facets, order, start + mid, end, nodes);
    let node = &mut nodes[id as usize];
    node.count = 0;
    node.left = left;
    node.right = right;
    id
}
