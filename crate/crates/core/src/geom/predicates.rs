//! Sign-exact geometric predicates.
//!
//! Wrappers around adaptive-precision floating-point predicates that fix the
//! orientation convention used throughout this crate: a tetrahedron
//! (a, b, c, d) is positively oriented when det[b−a, c−a, d−a] > 0, i.e. its
//! signed volume is positive.

use nalgebra::Vector3;
use robust::{incircle, insphere, orient2d, orient3d, Coord, Coord3D};

#[inline]
fn c3(p: &Vector3<f64>) -> Coord3D<f64> {
    Coord3D {
        x: p.x,
        y: p.y,
        z: p.z,
    }
}

#[inline]
fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Sign of det[b−a, c−a, d−a]. +1 when (a, b, c, d) is positively oriented.
pub fn orient(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>, d: &Vector3<f64>) -> i8 {
    // robust::orient3d computes det[a−d, b−d, c−d], which is the negation of
    // this crate's convention.
    -sign(orient3d(c3(a), c3(b), c3(c), c3(d)))
}

/// Circumsphere test for a positively oriented tetrahedron: +1 when p lies
/// strictly inside the circumsphere of (a, b, c, d), 0 on it, −1 outside.
pub fn in_sphere(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
    d: &Vector3<f64>,
    p: &Vector3<f64>,
) -> i8 {
    debug_assert!(orient(a, b, c, d) > 0, "in_sphere requires positive tets");
    -sign(insphere(c3(a), c3(b), c3(c), c3(d), c3(p)))
}

/// Circumcircle test for four coplanar points: +1 when p lies strictly inside
/// the circle through (a, b, c), 0 on it, −1 outside. The points are projected
/// onto the coordinate plane that keeps the triangle non-degenerate.
pub fn in_circle_coplanar(
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
    p: &Vector3<f64>,
) -> i8 {
    let n = (b - a).cross(&(c - a));
    // Preferred projection axis: the dominant normal component. The choice
    // only affects conditioning, never the (exact) result, as long as the
    // projected triangle stays non-degenerate.
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&i, &j| n[j].abs().partial_cmp(&n[i].abs()).unwrap());
    for axis in axes {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let q = |w: &Vector3<f64>| Coord { x: w[u], y: w[v] };
        let o = sign(orient2d(q(a), q(b), q(c)));
        if o == 0 {
            continue;
        }
        return o * sign(incircle(q(a), q(b), q(c), q(p)));
    }
    // Degenerate (collinear) triangle: no circumcircle.
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn orient_signs() {
        let (a, b, c, d) = (v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(0., 0., 1.));
        assert_eq!(orient(&a, &b, &c, &d), 1);
        assert_eq!(orient(&a, &c, &b, &d), -1);
        assert_eq!(orient(&a, &b, &c, &v(0.5, 0.5, 0.0)), 0);
    }

    #[test]
    fn in_sphere_signs() {
        let (a, b, c, d) = (v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(0., 0., 1.));
        assert_eq!(in_sphere(&a, &b, &c, &d, &v(0.1, 0.1, 0.1)), 1);
        assert_eq!(in_sphere(&a, &b, &c, &d, &v(10., 10., 10.)), -1);
        // A cube corner: (1,1,1) is cospherical with the four tet vertices
        // (circumsphere of this tet is the unit cube's circumsphere).
        assert_eq!(in_sphere(&a, &b, &c, &d, &v(1., 1., 1.)), 0);
    }

    #[test]
    fn in_circle_coplanar_signs() {
        let (a, b, c) = (v(0., 0., 5.), v(1., 0., 5.), v(0., 1., 5.));
        assert_eq!(in_circle_coplanar(&a, &b, &c, &v(0.3, 0.3, 5.0)), 1);
        assert_eq!(in_circle_coplanar(&a, &b, &c, &v(4.0, 4.0, 5.0)), -1);
        assert_eq!(in_circle_coplanar(&a, &b, &c, &v(1.0, 1.0, 5.0)), 0);
        // Orientation of the inputs must not matter.
        assert_eq!(in_circle_coplanar(&a, &c, &b, &v(0.3, 0.3, 5.0)), 1);
    }
}
