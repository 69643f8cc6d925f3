//! Planar convex hulls, minimum-area oriented rectangles, and cuboid fits.

use nalgebra::Vector3;

/// Cross product of (a - o) and (b - o).
#[inline]
fn cross_f64(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

#[inline]
fn cross_i64(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i128 {
    let (ox, oy) = (o.0 as i128, o.1 as i128);
    (a.0 as i128 - ox) * (b.1 as i128 - oy) - (a.1 as i128 - oy) * (b.0 as i128 - ox)
}

/// Monotone-chain convex hull, counter-clockwise, first vertex not
/// repeated. Collinear points are dropped, so every vertex is a strict
/// turn. Degenerate inputs yield fewer than 3 vertices.
pub fn convex_hull_f64(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && cross_f64(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    // The upper sweep must not pop past the lower hull's last vertex.
    let lower_len = hull.len();
    for &p in pts.iter().rev().skip(1) {
        while hull.len() > lower_len
            && cross_f64(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    // The upper sweep re-pushes the first point.
    hull.pop();
    if hull.len() < 3 {
        // All input points collinear: keep the two extremes.
        return vec![pts[0], pts[pts.len() - 1]];
    }
    hull
}

/// Integer twin of [`convex_hull_f64`] with exact predicates.
pub fn convex_hull_i64(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts: Vec<(i64, i64)> = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && cross_i64(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len();
    for &p in pts.iter().rev().skip(1) {
        while hull.len() > lower_len
            && cross_i64(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        return vec![pts[0], pts[pts.len() - 1]];
    }
    hull
}

/// Minimum-area oriented bounding rectangle.
///
/// `theta` is the yaw of the length axis (the longer side) in [0, pi);
/// for squares the smaller of the two candidate angles is used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: [f64; 2],
    /// Extent along the theta axis (length, >= width).
    pub length: f64,
    /// Extent across the theta axis.
    pub width: f64,
    pub theta: f64,
    pub area: f64,
}

fn angle_mod_pi(a: f64) -> f64 {
    let mut a = a % std::f64::consts::PI;
    if a < 0.0 {
        a += std::f64::consts::PI;
    }
    // The remainder can land exactly on pi after the shift.
    if a >= std::f64::consts::PI {
        a = 0.0;
    }
    a
}

/// Builds the canonical rectangle from one supporting edge direction `u`
/// and the projection intervals along `u` and its left normal.
fn rect_from_axis(
    u: [f64; 2],
    min_u: f64,
    max_u: f64,
    min_n: f64,
    max_n: f64,
) -> OrientedRect {
    let n = [-u[1], u[0]];
    let (eu, en) = (max_u - min_u, max_n - min_n);
    let cu = 0.5 * (min_u + max_u);
    let cn = 0.5 * (min_n + max_n);
    let center = [u[0] * cu + n[0] * cn, u[1] * cu + n[1] * cn];
    let theta_u = angle_mod_pi(u[1].atan2(u[0]));
    let theta_n = angle_mod_pi(n[1].atan2(n[0]));
    let (length, width, theta) = if eu > en {
        (eu, en, theta_u)
    } else if en > eu {
        (en, eu, theta_n)
    } else {
        (eu, en, theta_u.min(theta_n))
    };
    OrientedRect {
        center,
        length,
        width,
        theta,
        area: eu * en,
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn rect_for_degenerate_hull(hull: &[[f64; 2]]) -> Option<OrientedRect> {
    match hull.len() {
        0 => None,
        1 => Some(OrientedRect {
            center: hull[0],
            length: 0.0,
            width: 0.0,
            theta: 0.0,
            area: 0.0,
        }),
        2 => {
            let d = [hull[1][0] - hull[0][0], hull[1][1] - hull[0][1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            Some(OrientedRect {
                center: [
                    0.5 * (hull[0][0] + hull[1][0]),
                    0.5 * (hull[0][1] + hull[1][1]),
                ],
                length: len,
                width: 0.0,
                theta: angle_mod_pi(d[1].atan2(d[0])),
                area: 0.0,
            })
        }
        _ => unreachable!("degenerate hulls have at most 2 vertices"),
    }
}

/// Rotating-calipers minimum-area rectangle. One supporting edge of the
/// optimum lies on a hull edge; the three opposite support points advance
/// monotonically as the edge sweeps, giving linear time in the hull size.
pub fn min_area_rect(points: &[[f64; 2]]) -> Option<OrientedRect> {
    let hull = convex_hull_f64(points);
    if hull.len() < 3 {
        return rect_for_degenerate_hull(&hull);
    }
    let n = hull.len();
    let edge_dir = |i: usize| -> [f64; 2] {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        [d[0] / len, d[1] / len]
    };

    // Initialize the three caliper pointers by full scans on edge 0.
    let u0 = edge_dir(0);
    let n0 = [-u0[1], u0[0]];
    let argmax = |dir: [f64; 2]| -> usize {
        (0..n)
            .max_by(|&a, &b| {
                dot(hull[a], dir)
                    .partial_cmp(&dot(hull[b], dir))
                    .unwrap()
            })
            .unwrap()
    };
    let mut far = argmax(u0); // max projection along the edge direction
    let mut top = argmax(n0); // max along the inward normal
    let mut near = argmax([-u0[0], -u0[1]]); // min along the edge direction

    let mut best: Option<OrientedRect> = None;
    for i in 0..n {
        let u = edge_dir(i);
        let nn = [-u[1], u[0]];
        let advance = |idx: &mut usize, dir: [f64; 2]| {
            while dot(hull[(*idx + 1) % n], dir) > dot(hull[*idx], dir) {
                *idx = (*idx + 1) % n;
            }
        };
        advance(&mut far, u);
        advance(&mut top, nn);
        advance(&mut near, [-u[0], -u[1]]);

        let min_u = dot(hull[near], u);
        let max_u = dot(hull[far], u);
        let base_n = dot(hull[i], nn);
        let max_n = dot(hull[top], nn);
        let rect = rect_from_axis(u, min_u, max_u, base_n, max_n);
        if best.as_ref().is_none_or(|b| rect.area < b.area) {
            best = Some(rect);
        }
    }
    best
}

/// Quadratic-time reference: for every hull edge, scan all hull vertices
/// for the projection extremes. Used to validate the calipers.
pub fn min_area_rect_brute_force(points: &[[f64; 2]]) -> Option<OrientedRect> {
    let hull = convex_hull_f64(points);
    if hull.len() < 3 {
        return rect_for_degenerate_hull(&hull);
    }
    let n = hull.len();
    let mut best: Option<OrientedRect> = None;
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let u = [d[0] / len, d[1] / len];
        let nn = [-u[1], u[0]];
        let (mut min_u, mut max_u) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_n, mut max_n) = (f64::INFINITY, f64::NEG_INFINITY);
        for &p in &hull {
            let pu = dot(p, u);
            let pn = dot(p, nn);
            min_u = min_u.min(pu);
            max_u = max_u.max(pu);
            min_n = min_n.min(pn);
            max_n = max_n.max(pn);
        }
        let rect = rect_from_axis(u, min_u, max_u, min_n, max_n);
        if best.as_ref().is_none_or(|bst| rect.area < bst.area) {
            best = Some(rect);
        }
    }
    best
}

/// Extents below this are clamped and flagged degenerate.
pub const MIN_CUBOID_EXTENT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuboidFit {
    pub center: Vector3<f64>,
    /// Footprint extent along `theta`.
    pub l: f64,
    /// Footprint extent across `theta`.
    pub w: f64,
    /// Vertical extent.
    pub h: f64,
    /// Yaw of the length axis in [0, pi).
    pub theta: f64,
    /// True when any extent was clamped up to [`MIN_CUBOID_EXTENT`].
    pub degenerate: bool,
}

/// Fits the minimum-area footprint rectangle plus the vertical span.
///
/// Footprints whose hull collapses below three vertices (fewer than three
/// points, or all collinear) fall back to the axis-aligned bounding box with
/// theta = 0 and are flagged degenerate.
pub fn fit_cuboid(points: &[Vector3<f64>]) -> Option<CuboidFit> {
    if points.is_empty() {
        return None;
    }
    let xy: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
    let hull = convex_hull_f64(&xy);
    let (rect, collapsed) = if hull.len() >= 3 {
        (min_area_rect(&xy)?, false)
    } else {
        let (mut x_min, mut y_min) = (f64::INFINITY, f64::INFINITY);
        let (mut x_max, mut y_max) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &xy {
            x_min = x_min.min(p[0]);
            x_max = x_max.max(p[0]);
            y_min = y_min.min(p[1]);
            y_max = y_max.max(p[1]);
        }
        let rect = OrientedRect {
            center: [0.5 * (x_min + x_max), 0.5 * (y_min + y_max)],
            length: x_max - x_min,
            width: y_max - y_min,
            theta: 0.0,
            area: (x_max - x_min) * (y_max - y_min),
        };
        (rect, true)
    };
    let (mut z_min, mut z_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        z_min = z_min.min(p.z);
        z_max = z_max.max(p.z);
    }
    let h = z_max - z_min;
    let degenerate = collapsed
        || rect.length < MIN_CUBOID_EXTENT
        || rect.width < MIN_CUBOID_EXTENT
        || h < MIN_CUBOID_EXTENT;
    Some(CuboidFit {
        center: Vector3::new(rect.center[0], rect.center[1], 0.5 * (z_min + z_max)),
        l: rect.length.max(MIN_CUBOID_EXTENT),
        w: rect.width.max(MIN_CUBOID_EXTENT),
        h: h.max(MIN_CUBOID_EXTENT),
        theta: rect.theta,
        degenerate,
    })
}

pub fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    debug_assert!(!points.is_empty());
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}
