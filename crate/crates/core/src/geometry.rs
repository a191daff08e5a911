//! Segment versus triangle intersection used for surface-based edge pruning.

use crate::volume_io::{cross, dot, norm, sub};

/// Default geometric tolerance, in mesh units.
pub const GEOMETRY_EPS: f64 = 1e-9;

/// Does the open segment `(p, q)` meet the closed triangle `tri`?
///
/// Contacts within `eps` of the triangle boundary count (grazing is an
/// intersection). Contacts within `eps` of a segment endpoint do not: a
/// segment whose endpoint merely rests on the surface is not cut. A segment
/// lying in the triangle plane intersects when any interior part of it
/// overlaps the triangle.
pub fn segment_intersects_triangle(p: [f64; 3], q: [f64; 3], tri: [[f64; 3]; 3], eps: f64) -> bool {
    let [a, b, c] = tri;
    let n = cross(sub(b, a), sub(c, a));
    let nl = norm(n);
    if nl == 0.0 {
        return false;
    }
    let nh = [n[0] / nl, n[1] / nl, n[2] / nl];
    let dp = dot(nh, sub(p, a));
    let dq = dot(nh, sub(q, a));
    if (dp > eps && dq > eps) || (dp < -eps && dq < -eps) {
        return false;
    }
    let seg_len = norm(sub(q, p));
    if seg_len == 0.0 {
        return false;
    }

    // In-plane inward edge normals (unit length); s_k(x) >= 0 inside.
    let mut edge_normals = [[0.0; 3]; 3];
    let mut edge_origins = [[0.0; 3]; 3];
    for (k, (u, v)) in [(a, b), (b, c), (c, a)].into_iter().enumerate() {
        let e = sub(v, u);
        let m = cross(nh, e);
        let ml = norm(m);
        edge_normals[k] = [m[0] / ml, m[1] / ml, m[2] / ml];
        edge_origins[k] = u;
    }
    let side = |k: usize, x: [f64; 3]| dot(edge_normals[k], sub(x, edge_origins[k]));

    if dp.abs() <= eps && dq.abs() <= eps {
        // Coplanar: clip the parameter range against the three edge half-planes.
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for k in 0..3 {
            let sp = side(k, p) + eps;
            let sq = side(k, q) + eps;
            // sp + t (sq - sp) >= 0
            let ds = sq - sp;
            if ds == 0.0 {
                if sp < 0.0 {
                    return false;
                }
            } else {
                let t = -sp / ds;
                if ds > 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
            }
        }
        let margin = eps / seg_len;
        return t0 <= t1 && t1 > margin && t0 < 1.0 - margin;
    }

    // Proper crossing of the plane; reject crossings at an endpoint.
    let t = dp / (dp - dq);
    let margin = eps / seg_len;
    if !(t > margin && t < 1.0 - margin) {
        return false;
    }
    let x = [
        p[0] + t * (q[0] - p[0]),
        p[1] + t * (q[1] - p[1]),
        p[2] + t * (q[2] - p[2]),
    ];
    (0..3).all(|k| side(k, x) >= -eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI: [[f64; 3]; 3] = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]];

    #[test]
    fn crossing_inside() {
        assert!(segment_intersects_triangle(
            [0.5, 0.5, -1.0],
            [0.5, 0.5, 1.0],
            TRI,
            GEOMETRY_EPS
        ));
    }

    #[test]
    fn crossing_outside() {
        assert!(!segment_intersects_triangle(
            [1.5, 1.5, -1.0],
            [1.5, 1.5, 1.0],
            TRI,
            GEOMETRY_EPS
        ));
    }

    #[test]
    fn same_side() {
        assert!(!segment_intersects_triangle(
            [0.5, 0.5, 0.1],
            [0.5, 0.5, 1.0],
            TRI,
            GEOMETRY_EPS
        ));
    }

    #[test]
    fn grazing_edge_and_vertex_count() {
        // through the hypotenuse midpoint
        assert!(segment_intersects_triangle(
            [1.0, 1.0, -1.0],
            [1.0, 1.0, 1.0],
            TRI,
            GEOMETRY_EPS
        ));
        // through a corner
        assert!(segment_intersects_triangle(
            [0.0, 0.0, -1.0],
            [0.0, 0.0, 1.0],
            TRI,
            GEOMETRY_EPS
        ));
        // just outside the corner, beyond eps
        assert!(!segment_intersects_triangle(
            [-1e-6, 0.0, -1.0],
            [-1e-6, 0.0, 1.0],
            TRI,
            GEOMETRY_EPS
        ));
    }

    #[test]
    fn endpoint_on_surface_is_not_a_cut() {
        assert!(!segment_intersects_triangle(
            [0.5, 0.5, 0.0],
            [0.5, 0.5, 1.0],
            TRI,
            GEOMETRY_EPS
        ));
    }

    #[test]
    fn coplanar_cases() {
        assert!(segment_intersects_triangle(
            [-1.0, 0.5, 0.0],
            [3.0, 0.5, 0.0],
            TRI,
            GEOMETRY_EPS
        ));
        assert!(!segment_intersects_triangle(
            [-1.0, 3.0, 0.0],
            [3.0, 3.0, 0.0],
            TRI,
            GEOMETRY_EPS
        ));
        // touches the triangle only at its own endpoint
        assert!(!segment_intersects_triangle(
            [-1.0, 0.5, 0.0],
            [0.0, 0.5, 0.0],
            TRI,
            GEOMETRY_EPS
        ));
    }
}
