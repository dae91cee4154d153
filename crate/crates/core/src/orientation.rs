//! Cubic crystal orientations: symmetry operators, disorientation and the
//! mean orientation of a set of quaternions.

use crate::{Quat, Vec3};
use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::Rng;
use std::f64::consts::PI;
use thiserror::Error;

/// Largest possible disorientation angle between two cubic crystals, degrees.
pub const MAX_CUBIC_DISORIENTATION_DEG: f64 = 62.8;

const UNIT_INPUT_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum OrientationError {
    #[error("quaternion norm {0} is not unit")]
    NonUnitInput(f64),
    #[error("mean of an empty orientation set")]
    EmptySet,
}

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// The 24 proper rotations of the cubic point group, scalar first.
pub const CUBIC_SYMMETRY: [[f64; 4]; 24] = [
    [1.0, 0.0, 0.0, 0.0],
    // 180 deg about <100>
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    // +-90 deg about <100>
    [H, H, 0.0, 0.0],
    [H, -H, 0.0, 0.0],
    [H, 0.0, H, 0.0],
    [H, 0.0, -H, 0.0],
    [H, 0.0, 0.0, H],
    [H, 0.0, 0.0, -H],
    // 180 deg about <110>
    [0.0, H, H, 0.0],
    [0.0, H, -H, 0.0],
    [0.0, H, 0.0, H],
    [0.0, H, 0.0, -H],
    [0.0, 0.0, H, H],
    [0.0, 0.0, H, -H],
    // +-120 deg about <111>
    [0.5, 0.5, 0.5, 0.5],
    [0.5, -0.5, -0.5, -0.5],
    [0.5, -0.5, 0.5, 0.5],
    [0.5, 0.5, -0.5, -0.5],
    [0.5, 0.5, -0.5, 0.5],
    [0.5, -0.5, 0.5, -0.5],
    [0.5, 0.5, 0.5, -0.5],
    [0.5, -0.5, -0.5, 0.5],
];

pub fn symmetry_op(k: usize) -> Quat {
    let s = CUBIC_SYMMETRY[k];
    Quat::new(s[0], s[1], s[2], s[3])
}

/// Rotation by `angle_rad` about the unit vector `axis`.
pub fn axis_angle(axis: &Vec3, angle_rad: f64) -> Quat {
    let (s, c) = (0.5 * angle_rad).sin_cos();
    Quat::new(c, s * axis.x, s * axis.y, s * axis.z)
}

/// Largest |scalar part| of `S * d` over the cubic group, where `d` is the
/// misorientation quaternion.
#[inline]
fn max_symmetric_scalar(d: &Quat) -> f64 {
    let mut best = 0.0f64;
    for s in &CUBIC_SYMMETRY {
        let w = s[0] * d.w - s[1] * d.i - s[2] * d.j - s[3] * d.k;
        best = best.max(w.abs());
    }
    best
}

/// Disorientation angle in degrees without input validation.
///
/// Minimising over symmetry on one side only is sufficient: the cubic group
/// is closed under conjugation, so `S1 * d * S2` ranges over the same
/// rotation angles as `S * d`.
#[inline]
pub fn disorientation_deg_unchecked(qa: &Quat, qb: &Quat) -> f64 {
    let d = qa.conjugate() * qb;
    let w = max_symmetric_scalar(&d).min(1.0);
    2.0 * w.acos().to_degrees()
}

/// Minimum rotation angle (degrees) taking `qa` to `qb` under cubic symmetry.
pub fn disorientation_cubic(qa: &Quat, qb: &Quat) -> Result<f64, OrientationError> {
    for q in [qa, qb] {
        let n = q.norm();
        if !((n - 1.0).abs() <= UNIT_INPUT_TOL) {
            return Err(OrientationError::NonUnitInput(n));
        }
    }
    Ok(disorientation_deg_unchecked(qa, qb))
}

/// Result of [`mean_orientation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanOrientation {
    pub q: Quat,
    /// Set when the two largest eigenvalues of the scatter matrix are nearly
    /// degenerate, so the mean is poorly defined.
    pub low_concentration: bool,
}

/// Symmetry-reduced average orientation.
///
/// Each quaternion is replaced by the symmetric equivalent closest to the
/// first one (sign chosen so the dot product is non-negative), then the
/// principal eigenvector of the 4x4 scatter matrix is taken.
pub fn mean_orientation(qs: &[Quat]) -> Result<MeanOrientation, OrientationError> {
    let first = qs.first().ok_or(OrientationError::EmptySet)?;
    let r = first.coords;
    let mut m = Matrix4::<f64>::zeros();
    for q in qs {
        let mut best = Vector4::zeros();
        let mut best_dot = -1.0;
        for k in 0..24 {
            let c = (q * symmetry_op(k)).coords;
            let d = c.dot(&r);
            if d.abs() > best_dot {
                best_dot = d.abs();
                best = if d < 0.0 { -c } else { c };
            }
        }
        m += best * best.transpose();
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let v = eig.eigenvectors.column(order[0]).into_owned();
    let l0 = eig.eigenvalues[order[0]];
    let l1 = eig.eigenvalues[order[1]];
    let mut q = Quat::from(v);
    q /= q.norm();
    if q.w < 0.0 {
        q = -q;
    }
    Ok(MeanOrientation {
        q,
        low_concentration: l0 - l1 <= 1e-3 * l0.abs().max(f64::MIN_POSITIVE),
    })
}

/// Uniformly distributed random rotation (subgroup algorithm).
pub fn random_orientation<R: Rng + ?Sized>(rng: &mut R) -> Quat {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let u3: f64 = rng.gen();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (s2, c2) = (2.0 * PI * u2).sin_cos();
    let (s3, c3) = (2.0 * PI * u3).sin_cos();
    Quat::new(b * c3, a * s2, a * c2, b * s3)
}

/// Uniformly distributed unit vector.
pub fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive two-sided oracle: min over S1, S2 of the angle of
    /// S1 * conj(qa) * qb * S2, including the quaternion sign.
    fn oracle(qa: &Quat, qb: &Quat) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..24 {
            for j in 0..24 {
                let d = symmetry_op(i) * qa.conjugate() * qb * symmetry_op(j);
                let w = d.w.abs().min(1.0);
                best = best.min(2.0 * w.acos().to_degrees());
            }
        }
        best
    }

    #[test]
    fn group_is_closed_and_unit() {
        for i in 0..24 {
            assert!((symmetry_op(i).norm() - 1.0).abs() < 1e-15);
            for j in 0..24 {
                let p = symmetry_op(i) * symmetry_op(j);
                let found = (0..24).any(|k| {
                    let s = symmetry_op(k);
                    (p.coords - s.coords).norm() < 1e-12 || (p.coords + s.coords).norm() < 1e-12
                });
                assert!(found, "product {i}*{j} not in group");
            }
        }
    }

    #[test]
    fn identical_orientations_have_zero_disorientation() {
        let q = axis_angle(&Vec3::new(1.0, 2.0, 3.0).normalize(), 0.7);
        assert!(disorientation_cubic(&q, &q).unwrap().abs() < 1e-6);
    }

    #[test]
    fn ninety_degrees_about_cube_axis_is_symmetric() {
        let qa = Quat::identity();
        let qb = axis_angle(&Vec3::z(), PI / 2.0);
        assert!(disorientation_cubic(&qa, &qb).unwrap() < 1e-6);
    }

    #[test]
    fn small_rotation_keeps_its_angle() {
        let qa = axis_angle(&Vec3::new(0.3, -0.2, 0.9).normalize(), 1.1);
        let qb = qa * axis_angle(&Vec3::x(), 5f64.to_radians());
        let d = disorientation_cubic(&qa, &qb).unwrap();
        assert!((d - 5.0).abs() < 1e-9, "{d}");
    }

    #[test]
    fn non_unit_input_is_rejected() {
        let q = Quat::new(1.01, 0.0, 0.0, 0.0);
        assert!(matches!(
            disorientation_cubic(&q, &Quat::identity()),
            Err(OrientationError::NonUnitInput(_))
        ));
    }

    #[test]
    fn mean_of_symmetric_copies_is_equivalent_to_original() {
        let q = axis_angle(&Vec3::new(1.0, 1.0, 0.2).normalize(), 0.4);
        let copies: Vec<Quat> = (0..24).map(|k| q * symmetry_op(k)).collect();
        let m = mean_orientation(&copies).unwrap();
        assert!(m.q.w >= 0.0);
        assert!(disorientation_cubic(&m.q, &q).unwrap() < 1e-6);
        assert!(!m.low_concentration);
    }

    #[test]
    fn spread_mean_is_central() {
        let q0 = axis_angle(&Vec3::new(0.2, 0.5, 0.1).normalize(), 0.9);
        let ax = Vec3::new(0.0, 0.6, 0.8);
        let qs: Vec<Quat> = [-3.0, -1.0, 1.0, 3.0]
            .iter()
            .map(|d: &f64| q0 * axis_angle(&ax, d.to_radians()))
            .collect();
        let m = mean_orientation(&qs).unwrap();
        assert!(disorientation_cubic(&m.q, &q0).unwrap() < 1e-6);
    }

    #[test]
    fn mean_of_empty_set_fails() {
        assert_eq!(mean_orientation(&[]), Err(OrientationError::EmptySet));
    }

    #[test]
    fn random_orientations_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            assert!((random_orientation(&mut rng).norm() - 1.0).abs() < 1e-12);
        }
    }

    fn quat_strategy() -> impl Strategy<Value = Quat> {
        (any::<u64>()).prop_map(|s| random_orientation(&mut ChaCha8Rng::seed_from_u64(s)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn matches_exhaustive_oracle(qa in quat_strategy(), qb in quat_strategy()) {
            let got = disorientation_cubic(&qa, &qb).unwrap();
            let want = oracle(&qa, &qb);
            prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }

        #[test]
        fn symmetric_and_bounded(qa in quat_strategy(), qb in quat_strategy(), k in 0usize..24) {
            let ab = disorientation_cubic(&qa, &qb).unwrap();
            let ba = disorientation_cubic(&qb, &qa).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!(ab >= 0.0 && ab <= MAX_CUBIC_DISORIENTATION_DEG + 1e-6);
            let moved = disorientation_cubic(&qa, &(qb * symmetry_op(k))).unwrap();
            prop_assert!((ab - moved).abs() < 1e-9);
        }
    }
}
