//! Convex polyhedral cells built by successive half-space clipping.
//!
//! Coordinates are relative to the generator so that plane offsets stay
//! small. Vertices within a tolerance of a cutting plane count as lying on
//! it, which keeps degenerate lattice configurations (four or more
//! cospherical generators) from producing slivers.

use crate::Vec3;

/// Neighbour ids of the six walls of the initial box: -x, +x, -y, +y, -z, +z.
pub const WALL_IDS: [i64; 6] = [-1, -2, -3, -4, -5, -6];

#[derive(Debug, Clone, PartialEq)]
pub struct CellFace {
    /// Local id of the neighbouring generator, or a negative wall id.
    pub neighbour: i64,
    /// Outward unit normal.
    pub normal: Vec3,
    /// Vertex loop, counter-clockwise seen from outside.
    pub verts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCell {
    pub verts: Vec<Vec3>,
    pub faces: Vec<CellFace>,
}

impl ConvexCell {
    /// Axis-aligned box `[lo, hi]`.
    pub fn cuboid(lo: Vec3, hi: Vec3) -> Self {
        let verts = (0..8)
            .map(|b| {
                Vec3::new(
                    if b & 1 == 0 { lo.x } else { hi.x },
                    if b & 2 == 0 { lo.y } else { hi.y },
                    if b & 4 == 0 { lo.z } else { hi.z },
                )
            })
            .collect();
        let loops: [[u32; 4]; 6] = [
            [0, 4, 6, 2],
            [1, 3, 7, 5],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 2, 3, 1],
            [4, 5, 7, 6],
        ];
        let normals = [
            -Vec3::x(),
            Vec3::x(),
            -Vec3::y(),
            Vec3::y(),
            -Vec3::z(),
            Vec3::z(),
        ];
        let faces = (0..6)
            .map(|f| CellFace {
                neighbour: WALL_IDS[f],
                normal: normals[f],
                verts: loops[f].to_vec(),
            })
            .collect();
        Self { verts, faces }
    }

    /// Largest squared vertex distance from the origin (the generator).
    pub fn max_radius_sq(&self) -> f64 {
        self.verts.iter().map(|v| v.norm_squared()).fold(0.0, f64::max)
    }

    pub fn touches_wall(&self) -> bool {
        self.faces.iter().any(|f| f.neighbour < 0)
    }

    /// Keeps the half-space `n . x <= d` (`n` unit). Returns whether anything
    /// was cut away.
    pub fn clip(&mut self, n: &Vec3, d: f64, neighbour: i64, tol: f64) -> bool {
        let s: Vec<f64> = self.verts.iter().map(|v| n.dot(v) - d).collect();
        if s.iter().all(|&x| x <= tol) {
            return false;
        }
        let mut new_verts: Vec<Vec3> = Vec::with_capacity(self.verts.len() + 4);
        let mut remap = vec![u32::MAX; self.verts.len()];
        for (i, v) in self.verts.iter().enumerate() {
            if s[i] <= tol {
                remap[i] = new_verts.len() as u32;
                new_verts.push(*v);
            }
        }
        let mut cap: Vec<u32> = (0..self.verts.len())
            .filter(|&i| s[i].abs() <= tol)
            .map(|i| remap[i])
            .collect();
        let mut memo: Vec<((u32, u32), u32)> = Vec::new();
        let mut faces = Vec::with_capacity(self.faces.len() + 1);
        for face in &self.faces {
            let m = face.verts.len();
            let mut out = Vec::with_capacity(m + 1);
            let mut strictly_inside = false;
            for t in 0..m {
                let a = face.verts[t] as usize;
                let b = face.verts[(t + 1) % m] as usize;
                if s[a] <= tol {
                    out.push(remap[a]);
                    strictly_inside |= s[a] < -tol;
                }
                let crosses = (s[a] < -tol && s[b] > tol) || (s[a] > tol && s[b] < -tol);
                if crosses {
                    let key = (a.min(b) as u32, a.max(b) as u32);
                    let id = match memo.iter().find(|(k, _)| *k == key) {
                        Some(&(_, id)) => id,
                        None => {
                            let (p, q) = (key.0 as usize, key.1 as usize);
                            let t = s[p] / (s[p] - s[q]);
                            let x = self.verts[p] + (self.verts[q] - self.verts[p]) * t;
                            let id = new_verts.len() as u32;
                            new_verts.push(x);
                            memo.push((key, id));
                            cap.push(id);
                            id
                        }
                    };
                    out.push(id);
                }
            }
            if out.len() >= 3 && strictly_inside {
                faces.push(CellFace {
                    neighbour: face.neighbour,
                    normal: face.normal,
                    verts: out,
                });
            }
        }
        cap.sort_unstable();
        cap.dedup();
        if cap.len() >= 3 {
            let centre = cap.iter().fold(Vec3::zeros(), |a, &i| a + new_verts[i as usize]) / cap.len() as f64;
            let u = (new_verts[cap[0] as usize] - centre).normalize();
            let w = n.cross(&u);
            let mut keyed: Vec<(f64, u32)> = cap
                .iter()
                .map(|&i| {
                    let r = new_verts[i as usize] - centre;
                    (r.dot(&w).atan2(r.dot(&u)), i)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            faces.push(CellFace {
                neighbour,
                normal: *n,
                verts: keyed.into_iter().map(|(_, i)| i).collect(),
            });
        }
        // drop vertices no longer referenced
        let mut used = vec![false; new_verts.len()];
        for f in &faces {
            for &v in &f.verts {
                used[v as usize] = true;
            }
        }
        let mut compact = vec![u32::MAX; new_verts.len()];
        let mut verts = Vec::with_capacity(new_verts.len());
        for (i, v) in new_verts.into_iter().enumerate() {
            if used[i] {
                compact[i] = verts.len() as u32;
                verts.push(v);
            }
        }
        for f in faces.iter_mut() {
            for v in f.verts.iter_mut() {
                *v = compact[*v as usize];
            }
        }
        self.verts = verts;
        self.faces = faces;
        true
    }

    /// Vector area of a face (normal times area).
    pub fn face_vector_area(&self, f: &CellFace) -> Vec3 {
        let p0 = self.verts[f.verts[0] as usize];
        let mut a = Vec3::zeros();
        for t in 1..f.verts.len() - 1 {
            let p1 = self.verts[f.verts[t] as usize];
            let p2 = self.verts[f.verts[t + 1] as usize];
            a += (p1 - p0).cross(&(p2 - p0));
        }
        a * 0.5
    }

    pub fn volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| self.verts[f.verts[0] as usize].dot(&self.face_vector_area(f)) / 3.0)
            .sum()
    }

    /// Bisector clip against a generator at `q` (relative to this cell's
    /// generator).
    pub fn clip_by_neighbour(&mut self, q: &Vec3, neighbour: i64, tol: f64) -> bool {
        let len = q.norm();
        let n = q / len;
        self.clip(&n, 0.5 * len, neighbour, tol)
    }
}
