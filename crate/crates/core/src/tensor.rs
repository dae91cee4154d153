//! Per-point stress and strain kernels and deterministic RVE averages.

use crate::rve_io::MaterialPoint;
use crate::Mat3;
use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use thiserror::Error;

/// Relative antisymmetry above which a Cauchy stress is reported.
pub const ASYMMETRY_REPORT_TOL: f64 = 1e-6;

/// Points per block in the fixed-size block reduction used for averages.
const REDUCTION_BLOCK: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("det(F) = {0} is not positive")]
    NonPositiveJacobian(f64),
    #[error("average over an empty point set")]
    Empty,
}

/// Symmetric Cauchy stress with the relative size of the antisymmetric part
/// that was discarded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyStress {
    pub sigma: Mat3,
    pub asymmetry: f64,
}

impl CauchyStress {
    pub fn reported_asymmetric(&self) -> bool {
        self.asymmetry > ASYMMETRY_REPORT_TOL
    }

    /// Components in the order s11, s22, s33, s12, s13, s23.
    pub fn voigt(&self) -> [f64; 6] {
        let s = &self.sigma;
        [s[(0, 0)], s[(1, 1)], s[(2, 2)], s[(0, 1)], s[(0, 2)], s[(1, 2)]]
    }
}

/// sigma = sym(P F^T / det F).
pub fn cauchy_from(f: &Mat3, p: &Mat3) -> Result<CauchyStress, TensorError> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(TensorError::NonPositiveJacobian(j));
    }
    let raw = p * f.transpose() / j;
    let sigma = (raw + raw.transpose()) * 0.5;
    let skew = (raw - raw.transpose()) * 0.5;
    let scale = raw.norm();
    let asymmetry = if scale > 0.0 { skew.norm() / scale } else { 0.0 };
    Ok(CauchyStress { sigma, asymmetry })
}

fn deviator(m: &Mat3) -> Mat3 {
    m - Mat3::identity() * (m.trace() / 3.0)
}

/// sqrt(3/2 s:s) with s the deviatoric part of sigma.
pub fn von_mises_stress(sigma: &Mat3) -> f64 {
    let s = deviator(sigma);
    (1.5 * s.component_mul(&s).sum()).sqrt()
}

/// Logarithmic (Hencky) strain 1/2 ln(F F^T).
pub fn hencky_strain(f: &Mat3) -> Result<Mat3, TensorError> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(TensorError::NonPositiveJacobian(j));
    }
    let b = f * f.transpose();
    let eig = SymmetricEigen::new(b);
    let logs = eig.eigenvalues.map(|l| 0.5 * l.ln());
    Ok(eig.eigenvectors * Mat3::from_diagonal(&logs) * eig.eigenvectors.transpose())
}

/// sqrt(2/3 e':e') of the Hencky strain.
pub fn von_mises_strain(f: &Mat3) -> Result<f64, TensorError> {
    let e = deviator(&hencky_strain(f)?);
    Ok((2.0 / 3.0 * e.component_mul(&e).sum()).sqrt())
}

/// Volume averages over all material points (each point has equal weight).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RveAverages {
    pub f_bar: Mat3,
    pub sigma_bar: Mat3,
    pub eps_vm_bar: f64,
    pub sigma_vm_bar: f64,
}

/// Sum of a matrix-valued map in fixed blocks so that the rounding does not
/// depend on the number of threads.
fn block_sum<F>(n: usize, f: F) -> Mat3
where
    F: Fn(usize) -> Mat3 + Sync,
{
    let partial: Vec<Mat3> = (0..n.div_ceil(REDUCTION_BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * REDUCTION_BLOCK;
            let hi = (lo + REDUCTION_BLOCK).min(n);
            (lo..hi).fold(Mat3::zeros(), |acc, i| acc + f(i))
        })
        .collect();
    partial.iter().fold(Mat3::zeros(), |acc, m| acc + m)
}

/// Averages F and sigma over the RVE and derives the flow-curve pair from
/// the averaged tensors.
pub fn rve_averages(points: &[MaterialPoint]) -> Result<RveAverages, TensorError> {
    if points.is_empty() {
        return Err(TensorError::Empty);
    }
    if let Some(p) = points.iter().find(|p| !(p.def_grad.determinant() > 0.0)) {
        return Err(TensorError::NonPositiveJacobian(p.def_grad.determinant()));
    }
    let n = points.len();
    let f_bar = block_sum(n, |i| points[i].def_grad) / n as f64;
    let sigma_bar = block_sum(n, |i| {
        cauchy_from(&points[i].def_grad, &points[i].piola)
            .expect("checked above")
            .sigma
    }) / n as f64;
    Ok(RveAverages {
        f_bar,
        sigma_bar,
        eps_vm_bar: von_mises_strain(&f_bar)?,
        sigma_vm_bar: von_mises_stress(&sigma_bar),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Quat, Vec3};
    use proptest::prelude::*;

    #[test]
    fn identity_gradient_gives_symmetric_part_of_p() {
        let p = Mat3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0);
        let c = cauchy_from(&Mat3::identity(), &p).unwrap();
        assert_eq!(c.sigma, (p + p.transpose()) * 0.5);
        assert!(c.reported_asymmetric());
    }

    #[test]
    fn uniaxial_von_mises_is_axial_value() {
        let mut s = Mat3::zeros();
        s[(0, 0)] = 250.0;
        assert!((von_mises_stress(&s) - 250.0).abs() < 1e-12);
        assert!(von_mises_stress(&(Mat3::identity() * 7.0)).abs() < 1e-12);
    }

    #[test]
    fn uniaxial_isochoric_stretch_strain() {
        // diag(l, l^-1/2, l^-1/2) has Hencky strain von Mises value ln(l).
        let l: f64 = 1.2;
        let f = Mat3::from_diagonal(&Vec3::new(l, l.powf(-0.5), l.powf(-0.5)));
        assert!((von_mises_strain(&f).unwrap() - l.ln()).abs() < 1e-12);
        assert!(von_mises_strain(&Mat3::identity()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn negative_jacobian_is_rejected() {
        let f = Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        assert!(cauchy_from(&f, &Mat3::identity()).is_err());
        assert!(von_mises_strain(&f).is_err());
    }

    fn point(f: Mat3, p: Mat3) -> MaterialPoint {
        MaterialPoint {
            position: Vec3::zeros(),
            def_grad: f,
            piola: p,
            orientation: Quat::identity(),
            texture_id: 0,
        }
    }

    #[test]
    fn constant_fields_average_exactly() {
        let f = Mat3::new(1.1, 0.02, 0.0, 0.0, 0.97, 0.01, 0.0, 0.0, 0.95);
        let sigma = Mat3::new(100.0, 5.0, 0.0, 5.0, 20.0, 1.0, 0.0, 1.0, -30.0);
        let p = sigma * f.try_inverse().unwrap().transpose() * f.determinant();
        let pts = vec![point(f, p); 10_000];
        let avg = rve_averages(&pts).unwrap();
        assert!((avg.f_bar - f).abs().max() < 1e-12);
        assert!((avg.sigma_bar - sigma).abs().max() < 1e-9);
        assert!((avg.sigma_vm_bar - von_mises_stress(&sigma)).abs() < 1e-9);
    }

    #[test]
    fn averages_are_independent_of_thread_count() {
        let pts: Vec<MaterialPoint> = (0..20_000)
            .map(|i| {
                let t = i as f64 * 1e-4;
                let f = Mat3::new(1.0 + t, 0.1 * t, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0 - 0.5 * t);
                point(f, Mat3::identity() * (1.0 + t.sin()))
            })
            .collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| rve_averages(&pts).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn cauchy_is_symmetric_and_scale_covariant(
            vals in proptest::array::uniform9(-2.0f64..2.0),
            stretch in 0.5f64..1.5,
        ) {
            let p = Mat3::from_row_slice(&vals);
            let f = Mat3::from_diagonal(&Vec3::new(stretch, 1.0, 1.0 / stretch));
            let c = cauchy_from(&f, &p).unwrap();
            prop_assert_eq!(c.sigma, c.sigma.transpose());
            let vm = von_mises_stress(&c.sigma);
            let c2 = cauchy_from(&f, &(p * 2.0)).unwrap();
            prop_assert!((von_mises_stress(&c2.sigma) - 2.0 * vm).abs() <= 1e-9 * (1.0 + vm));
        }
    }
}
