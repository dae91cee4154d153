//! Seeded periodic Voronoi microstructures with optional planted
//! orientation gradients and stress profiles.

use super::{MaterialPoint, RecordFlags, RveIoError, StrainStepDataset};
use crate::orientation::{axis_angle, random_axis, random_orientation, MAX_CUBIC_DISORIENTATION_DEG};
use crate::{Mat3, Quat, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Orientation gradient planted inside every grain: the rotation angle away
/// from the grain orientation is `min(slope * d_true, max_angle)` with
/// `d_true` in lattice spacings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedGradient {
    pub slope_deg: f64,
    pub max_angle_deg: f64,
}

/// Uniaxial stress `sigma_33 = interior_mean + boundary_delta * exp(-d_true / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedStress {
    pub interior_mean: f64,
    pub boundary_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub grid_dims: [u32; 3],
    pub n_grains: usize,
    pub seed: u64,
    /// Homogeneous deformation applied to positions and stored as F.
    pub affine: Option<Mat3>,
    pub gradient: Option<PlantedGradient>,
    pub stress: Option<PlantedStress>,
    pub strain_label: f64,
}

impl SyntheticSpec {
    pub fn new(grid_dims: [u32; 3], n_grains: usize, seed: u64) -> Self {
        Self {
            grid_dims,
            n_grains,
            seed,
            affine: None,
            gradient: None,
            stress: None,
            strain_label: 0.0,
        }
    }
}

/// Generated dataset plus the ground truth used to build it.
#[derive(Debug, Clone)]
pub struct SyntheticRve {
    pub dataset: StrainStepDataset,
    /// Grain label per point (equal to the texture id).
    pub labels: Vec<u32>,
    pub grain_orientations: Vec<Quat>,
    pub grain_axes: Vec<Vec3>,
    pub seeds: Vec<Vec3>,
    /// Distance (undeformed, spacings) to the nearest differently labelled
    /// lattice point; present when a gradient or stress is planted.
    pub d_true: Option<Vec<f64>>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticRve, RveIoError> {
    let dims = spec.grid_dims;
    if dims.iter().any(|&d| d == 0) {
        return Err(RveIoError::SpecViolation(format!("zero grid dimension {dims:?}")));
    }
    let n: usize = dims.iter().map(|&d| d as usize).product();
    if spec.n_grains == 0 || spec.n_grains > n {
        return Err(RveIoError::SpecViolation(format!(
            "{} grains for {} points",
            spec.n_grains, n
        )));
    }
    if let Some(g) = spec.gradient {
        if !(g.max_angle_deg >= 0.0 && g.max_angle_deg < MAX_CUBIC_DISORIENTATION_DEG) {
            return Err(RveIoError::SpecViolation(format!(
                "gradient max angle {} outside [0, {MAX_CUBIC_DISORIENTATION_DEG})",
                g.max_angle_deg
            )));
        }
        if !(g.slope_deg >= 0.0 && g.slope_deg.is_finite()) {
            return Err(RveIoError::SpecViolation("negative gradient slope".into()));
        }
    }
    if let Some(f) = spec.affine {
        if !(f.determinant() > 0.0) {
            return Err(RveIoError::SpecViolation("affine map must have det > 0".into()));
        }
    }

    let edges = [dims[0] as f64, dims[1] as f64, dims[2] as f64];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let seeds: Vec<Vec3> = (0..spec.n_grains)
        .map(|_| {
            Vec3::new(
                rng.gen::<f64>() * edges[0],
                rng.gen::<f64>() * edges[1],
                rng.gen::<f64>() * edges[2],
            )
        })
        .collect();
    let grain_orientations: Vec<Quat> =
        (0..spec.n_grains).map(|_| random_orientation(&mut rng)).collect();
    let grain_axes: Vec<Vec3> = (0..spec.n_grains).map(|_| random_axis(&mut rng)).collect();

    let coords = |idx: usize| {
        let nx = dims[0] as usize;
        let ny = dims[1] as usize;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    };

    let labels: Vec<u32> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let c = coords(idx);
            let p = Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64);
            let mut best = (f64::INFINITY, 0u32);
            for (g, s) in seeds.iter().enumerate() {
                let mut d2 = 0.0;
                for a in 0..3 {
                    let mut d = p[a] - s[a];
                    d -= edges[a] * (d / edges[a]).round();
                    d2 += d * d;
                }
                if d2 < best.0 {
                    best = (d2, g as u32);
                }
            }
            best.1
        })
        .collect();

    let d_true = if spec.gradient.is_some() || spec.stress.is_some() {
        Some(true_boundary_distances(dims, &labels))
    } else {
        None
    };

    let f = spec.affine.unwrap_or_else(Mat3::identity);
    let det_f = f.determinant();
    let f_inv_t = f.try_inverse().expect("det > 0").transpose();

    let points: Vec<MaterialPoint> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let c = coords(idx);
            let x0 = Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64);
            let g = labels[idx] as usize;
            let d = d_true.as_ref().map(|d| d[idx]);
            let mut q = grain_orientations[g];
            if let (Some(gr), Some(d)) = (spec.gradient, d) {
                let angle = (gr.slope_deg * d).min(gr.max_angle_deg);
                let sign = if (c[0] + c[1] + c[2]) % 2 == 0 { 1.0 } else { -1.0 };
                q = q * axis_angle(&grain_axes[g], sign * angle.to_radians());
                q /= q.norm();
            }
            let piola = match (spec.stress, d) {
                (Some(st), Some(d)) => {
                    let s33 = st.interior_mean + st.boundary_delta * (-0.5 * d).exp();
                    let mut sigma = Mat3::zeros();
                    sigma[(2, 2)] = s33;
                    det_f * sigma * f_inv_t
                }
                _ => Mat3::zeros(),
            };
            MaterialPoint {
                position: f * x0,
                def_grad: f,
                piola,
                orientation: q,
                texture_id: labels[idx],
            }
        })
        .collect();

    let mut flags = RecordFlags::ORIENTATION;
    if spec.affine.is_some() {
        flags |= RecordFlags::DEFORMED;
    }
    if spec.stress.is_some() {
        flags |= RecordFlags::STRESS;
    }
    let dataset = StrainStepDataset::new(dims, edges[0], spec.strain_label, RecordFlags(flags), points)?;
    Ok(SyntheticRve {
        dataset,
        labels,
        grain_orientations,
        grain_axes,
        seeds,
        d_true,
    })
}

/// Exact periodic lattice distance (in spacings) from every point to the
/// nearest point with a different label; infinite if there is none.
///
/// Lattice offsets are visited in order of increasing length, so the first
/// foreign label found is the nearest one.
pub fn true_boundary_distances(dims: [u32; 3], labels: &[u32]) -> Vec<f64> {
    let n = labels.len();
    if labels.iter().all(|&l| l == labels[0]) {
        return vec![f64::INFINITY; n];
    }
    let [nx, ny, nz] = dims.map(|d| d as i64);
    let range = |m: i64| -((m - 1) / 2)..=(m / 2);
    let mut offsets: Vec<(i64, [i64; 3])> = Vec::new();
    for dk in range(nz) {
        for dj in range(ny) {
            for di in range(nx) {
                if (di, dj, dk) != (0, 0, 0) {
                    offsets.push((di * di + dj * dj + dk * dk, [di, dj, dk]));
                }
            }
        }
    }
    offsets.sort_unstable();
    (0..n)
        .into_par_iter()
        .map(|idx| {
            let i = idx as i64 % nx;
            let j = (idx as i64 / nx) % ny;
            let k = idx as i64 / (nx * ny);
            let own = labels[idx];
            for (n2, o) in &offsets {
                let a = (i + o[0]).rem_euclid(nx);
                let b = (j + o[1]).rem_euclid(ny);
                let c = (k + o[2]).rem_euclid(nz);
                if labels[(a + nx * (b + ny * c)) as usize] != own {
                    return (*n2 as f64).sqrt();
                }
            }
            f64::INFINITY
        })
        .collect()
}
