//! Points and exact geometric predicates.
//!
//! Orientation and in-sphere signs are evaluated with adaptive-precision
//! arithmetic, so every topological decision made by the triangulation is
//! exact for the given floating-point inputs. Degenerate (cospherical or
//! cocircular) configurations are resolved by a symbolic perturbation keyed
//! on a caller-supplied total order of the points.

use nalgebra::{Point3, Vector3};
use robust::Coord3D;

/// A position in meters.
pub type Point = Point3<f64>;
/// A displacement in meters.
pub type Vec3 = Vector3<f64>;

#[inline]
fn coord(p: &Point) -> Coord3D<f64> {
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

/// Sign of `det[b - a, c - a, d - a]`.
///
/// Positive when `d` lies on the side of the plane `abc` that the right-hand
/// normal `(b - a) x (c - a)` points to.
#[inline]
pub fn orient3d(a: &Point, b: &Point, c: &Point, d: &Point) -> i8 {
    // Shewchuk's convention is the mirror image of ours.
    sign(-robust::orient3d(coord(a), coord(b), coord(c), coord(d)))
}

/// In-sphere test for a positively oriented tetrahedron `abcd`.
///
/// Returns `+1` when `p` is strictly inside the circumsphere, `0` on it and
/// `-1` outside.
#[inline]
pub fn in_sphere(a: &Point, b: &Point, c: &Point, d: &Point, p: &Point) -> i8 {
    sign(-robust::insphere(coord(a), coord(b), coord(c), coord(d), coord(p)))
}

/// In-sphere test with symbolic perturbation.
///
/// `pts[0..4]` is a positively oriented tetrahedron and `pts[4]` the query;
/// `keys` gives each point's rank in the perturbation order. The result is
/// never zero for five distinct, non-coplanar-quadruple inputs.
pub fn in_sphere_perturbed(pts: [&Point; 5], keys: [u64; 5]) -> i8 {
    let s = in_sphere(pts[0], pts[1], pts[2], pts[3], pts[4]);
    if s != 0 {
        return s;
    }
    let mut order = [0usize, 1, 2, 3, 4];
    order.sort_by_key(|&i| keys[i]);
    // Leading monomials of the perturbed lifted determinant, highest rank first.
    for &k in order[2..].iter().rev() {
        if k == 4 {
            return -1;
        }
        let mut q = [pts[0], pts[1], pts[2], pts[3]];
        q[k] = pts[4];
        let o = orient3d(q[0], q[1], q[2], q[3]);
        if o != 0 {
            return o;
        }
    }
    -1
}

/// Picks a point off the plane of the non-degenerate triangle `abc`,
/// returning it together with the orientation sign of `(a, b, c, d)`.
fn off_plane(a: &Point, b: &Point, c: &Point) -> (Point, i8) {
    for axis in 0..3 {
        let mut d = *a;
        d[axis] += 1.0;
        let o = orient3d(a, b, c, &d);
        if o != 0 {
            return (d, o);
        }
    }
    // Unreachable for a proper triangle; keep a deterministic answer anyway.
    (*a, 0)
}

/// Side of the circumcircle of triangle `abc` for a point `p` lying in the
/// same plane, with symbolic perturbation.
///
/// Returns `+1` when `p` is inside the circle, `-1` outside.
pub fn coplanar_in_circle_perturbed(pts: [&Point; 4], keys: [u64; 4]) -> i8 {
    let (a, b, c, p) = (pts[0], pts[1], pts[2], pts[3]);
    let (d, local) = off_plane(a, b, c);
    if local == 0 {
        return -1;
    }
    // Any sphere through the circle cuts the plane exactly in the circle.
    let s = if local > 0 {
        in_sphere(a, b, c, &d, p)
    } else {
        in_sphere(b, a, c, &d, p)
    };
    if s != 0 {
        return s;
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by_key(|&i| keys[i]);
    for &k in order[1..].iter().rev() {
        if k == 3 {
            return -1;
        }
        let mut q = [a, b, c];
        q[k] = p;
        let o = orient3d(q[0], q[1], q[2], &d);
        if o != 0 {
            return if o == local { 1 } else { -1 };
        }
    }
    -1
}

/// Circumcenter and circumradius of a tetrahedron, in plain floating point.
/// Returns `None` for (near-)flat inputs.
pub fn circumsphere(a: &Point, b: &Point, c: &Point, d: &Point) -> Option<(Point, f64)> {
    let ba = b - a;
    let ca = c - a;
    let da = d - a;
    let det = 2.0 * ba.dot(&ca.cross(&da));
    if det.abs() < 1e-300 {
        return None;
    }
    let off = (ca.cross(&da) * ba.norm_squared()
        + da.cross(&ba) * ca.norm_squared()
        + ba.cross(&ca) * da.norm_squared())
        / det;
    Some((a + off, off.norm()))
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            for i in 0..3 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        Aabb { min, max }
    }
}

/// Möller–Trumbore ray/triangle intersection. Returns the ray parameter of
/// the hit for `origin + t * dir`, `t > eps`.
pub fn ray_triangle(origin: &Point, dir: &Vec3, tri: [&Point; 3], eps: f64) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pv = dir.cross(&e2);
    let det = e1.dot(&pv);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = origin - tri[0];
    let u = tv.dot(&pv) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qv = tv.cross(&e1);
    let v = dir.dot(&qv) * inv;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&qv) * inv;
    (t > eps).then_some(t)
}
