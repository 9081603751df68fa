//! Small numeric helpers shared across the solver modules.
//!
//! The XPBD inner loop is generic over the scalar type so the same code path
//! can run on plain `f64` and on dual numbers (forward-mode derivatives).
//! Vectors inside that loop are plain `[T; 3]` arrays; `nalgebra` types are
//! used on the public surfaces.

use nalgebra::{Matrix3, Vector3};
use num_dual::DualNum;

pub(crate) type V3<T> = [T; 3];

#[inline]
pub(crate) fn v3_from<T: DualNum<f64> + Copy>(v: &Vector3<f64>) -> V3<T> {
    [T::from(v.x), T::from(v.y), T::from(v.z)]
}

#[inline]
pub(crate) fn v3_re<T: DualNum<f64> + Copy>(v: &V3<T>) -> Vector3<f64> {
    Vector3::new(v[0].re(), v[1].re(), v[2].re())
}

#[inline]
pub(crate) fn add<T: DualNum<f64> + Copy>(a: V3<T>, b: V3<T>) -> V3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn sub<T: DualNum<f64> + Copy>(a: V3<T>, b: V3<T>) -> V3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn scale<T: DualNum<f64> + Copy>(a: V3<T>, s: T) -> V3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot<T: DualNum<f64> + Copy>(a: V3<T>, b: V3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross<T: DualNum<f64> + Copy>(a: V3<T>, b: V3<T>) -> V3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm<T: DualNum<f64> + Copy>(a: V3<T>) -> T {
    dot(a, a).sqrt()
}

/// Signed volume of the tetrahedron (a, b, c, d): det[b−a, c−a, d−a] / 6.
#[inline]
pub(crate) fn signed_volume<T: DualNum<f64> + Copy>(a: V3<T>, b: V3<T>, c: V3<T>, d: V3<T>) -> T {
    dot(cross(sub(b, a), sub(c, a)), sub(d, a)) / 6.0
}

/// Rotation factor of the polar decomposition M = R·S (R ∈ SO(3), S symmetric
/// positive semi-definite), via the scaled Newton iteration
/// X ← (γX + γ⁻¹X⁻ᵀ)/2. Requires `det(M) > 0`; returns `None` when M is
/// singular or the iteration fails to converge.
pub(crate) fn polar_rotation(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let mut x = *m;
    for _ in 0..60 {
        let inv_t = x.try_inverse()?.transpose();
        // Determinant-based scaling accelerates convergence far from SO(3).
        let det = x.determinant().abs();
        if !(det.is_finite() && det > 0.0) {
            return None;
        }
        let gamma = det.powf(-1.0 / 3.0);
        let next = (x * gamma + inv_t / gamma) * 0.5;
        let diff = (next - x).norm();
        x = next;
        if diff < 1e-14 {
            break;
        }
    }
    // Orthonormality check; the iteration converges to the orthogonal factor.
    let err = (x.transpose() * x - Matrix3::identity()).norm();
    if err < 1e-9 && x.determinant() > 0.0 {
        Some(x)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn polar_of_rotation_is_identity_factor() {
        let r = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let m = r.matrix().to_owned();
        let p = polar_rotation(&m).unwrap();
        assert!((p - m).norm() < 1e-12);
    }

    #[test]
    fn polar_matches_svd_factor() {
        // Deterministic non-orthogonal matrices with positive determinant.
        let cases = [
            Matrix3::new(1.2, 0.1, -0.3, 0.0, 0.9, 0.2, 0.1, -0.2, 1.5),
            Matrix3::new(2.0, 0.5, 0.0, -0.4, 1.1, 0.3, 0.2, 0.0, 0.7),
        ];
        for m in cases {
            let p = polar_rotation(&m).unwrap();
            let svd = m.svd(true, true);
            let r = svd.u.unwrap() * svd.v_t.unwrap();
            assert!((p - r).norm() < 1e-10, "mismatch: {p} vs {r}");
        }
    }

    #[test]
    fn polar_rejects_singular() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(polar_rotation(&m).is_none());
    }

    #[test]
    fn volume_gradient_consistency() {
        // signed_volume against a direct determinant evaluation.
        let a = [0.0, 0.0, 0.0];
        let b = [1.0, 0.0, 0.0];
        let c = [0.0, 1.0, 0.0];
        let d = [0.0, 0.0, 1.0];
        assert!((signed_volume(a, b, c, d) - 1.0 / 6.0).abs() < 1e-15);
        assert!((signed_volume(a, c, b, d) + 1.0 / 6.0).abs() < 1e-15);
    }
}
