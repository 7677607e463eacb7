//! Convex bodies in dimension one and two: gauges, exact volumes, polygon
//! conversion and Minkowski combinations by edge merge.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of support directions used when an ellipsoid is turned into a polygon.
pub const ELLIPSE_SUPPORT_POINTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Body {
    /// `[lo, hi] ⊂ ℝ`.
    Interval { lo: f64, hi: f64 },
    /// Axis-parallel box in the plane.
    Box { lo: [f64; 2], hi: [f64; 2] },
    /// `{x : xᵀ A x ≤ 1}` for a symmetric positive-definite `A`.
    Ellipsoid { a: [[f64; 2]; 2] },
    /// `{x : ‖x‖₁ ≤ scale}`.
    L1Ball { scale: f64 },
    /// Convex polygon; vertices in convex position, either orientation.
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Body {
    pub fn disc(radius: f64) -> Self {
        let a = 1.0 / (radius * radius);
        Body::Ellipsoid { a: [[a, 0.0], [0.0, a]] }
    }

    pub fn square(half_side: f64) -> Self {
        Body::Box { lo: [-half_side; 2], hi: [half_side; 2] }
    }

    /// Regular polygon with `n` vertices on the circle of radius `r`.
    pub fn regular_polygon(n: usize, r: f64, phase: f64) -> Self {
        let vertices = (0..n)
            .map(|k| {
                let th = phase + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [r * th.cos(), r * th.sin()]
            })
            .collect();
        Body::Polygon { vertices }
    }

    pub fn dim(&self) -> usize {
        match self {
            Body::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Body::Interval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                    return Err(Error::InvalidBody(format!("interval [{lo}, {hi}]")));
                }
            }
            Body::Box { lo, hi } => {
                for k in 0..2 {
                    if !(lo[k].is_finite() && hi[k].is_finite()) || lo[k] >= hi[k] {
                        return Err(Error::InvalidBody(format!("box axis {k}: [{}, {}]", lo[k], hi[k])));
                    }
                }
            }
            Body::Ellipsoid { a } => {
                let sym = (a[0][1] - a[1][0]).abs() <= 1e-12 * (a[0][1].abs() + 1.0);
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                if !sym || a[0][0] <= 0.0 || det <= 0.0 {
                    return Err(Error::InvalidBody("ellipsoid matrix must be symmetric positive-definite".into()));
                }
            }
            Body::L1Ball { scale } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::InvalidBody(format!("l1 ball scale {scale}")));
                }
            }
            Body::Polygon { vertices } => {
                ccw_convex(vertices)?;
            }
        }
        Ok(())
    }

    /// True when the origin is an interior point.
    pub fn contains_origin_interior(&self) -> bool {
        match self {
            Body::Interval { lo, hi } => *lo < 0.0 && *hi > 0.0,
            Body::Box { lo, hi } => lo[0] < 0.0 && lo[1] < 0.0 && hi[0] > 0.0 && hi[1] > 0.0,
            Body::Ellipsoid { .. } | Body::L1Ball { .. } => true,
            Body::Polygon { vertices } => match ccw_convex(vertices) {
                Ok(v) => polygon_edges(&v).all(|(p, q)| cross(sub(q, p), sub([0.0, 0.0], p)) > 0.0),
                Err(_) => false,
            },
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            Body::Interval { lo, hi } => lo == &-hi,
            Body::Box { lo, hi } => lo[0] == -hi[0] && lo[1] == -hi[1],
            Body::Ellipsoid { .. } | Body::L1Ball { .. } => true,
            Body::Polygon { vertices } => vertices
                .iter()
                .all(|v| vertices.iter().any(|w| (w[0] + v[0]).abs() < 1e-12 && (w[1] + v[1]).abs() < 1e-12)),
        }
    }

    /// Minkowski gauge `inf{λ > 0 : x ∈ λK}`. The origin must be interior.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        match self {
            Body::Interval { lo, hi } => {
                let v = x[0];
                if v >= 0.0 {
                    v / hi
                } else {
                    v / lo
                }
            }
            Body::Box { lo, hi } => (0..2)
                .map(|k| if x[k] >= 0.0 { x[k] / hi[k] } else { x[k] / lo[k] })
                .fold(0.0, f64::max),
            Body::Ellipsoid { a } => {
                let q = a[0][0] * x[0] * x[0] + 2.0 * a[0][1] * x[0] * x[1] + a[1][1] * x[1] * x[1];
                q.max(0.0).sqrt()
            }
            Body::L1Ball { scale } => (x[0].abs() + x[1].abs()) / scale,
            Body::Polygon { vertices } => {
                let v = ccw_convex(vertices).expect("polygon validated at construction");
                polygon_edges(&v)
                    .map(|(p, q)| {
                        let n = [q[1] - p[1], p[0] - q[0]];
                        (n[0] * x[0] + n[1] * x[1]) / (n[0] * p[0] + n[1] * p[1])
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Exact Lebesgue measure.
    pub fn volume(&self) -> f64 {
        match self {
            Body::Interval { lo, hi } => hi - lo,
            Body::Box { lo, hi } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
            Body::Ellipsoid { a } => std::f64::consts::PI / (a[0][0] * a[1][1] - a[0][1] * a[1][0]).sqrt(),
            Body::L1Ball { scale } => 2.0 * scale * scale,
            Body::Polygon { vertices } => polygon_area(vertices).abs(),
        }
    }

    /// Largest absolute coordinate of a point of the body.
    pub fn extent(&self) -> f64 {
        match self {
            Body::Interval { lo, hi } => lo.abs().max(hi.abs()),
            Body::Box { lo, hi } => lo.iter().chain(hi.iter()).fold(0.0_f64, |m, v| m.max(v.abs())),
            Body::Ellipsoid { a } => {
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                (a[1][1] / det).sqrt().max((a[0][0] / det).sqrt())
            }
            Body::L1Ball { scale } => *scale,
            Body::Polygon { vertices } => vertices.iter().fold(0.0_f64, |m, v| m.max(v[0].abs()).max(v[1].abs())),
        }
    }

    pub fn scaled(&self, s: f64) -> Body {
        match self {
            Body::Interval { lo, hi } => Body::Interval { lo: lo * s, hi: hi * s },
            Body::Box { lo, hi } => Body::Box { lo: [lo[0] * s, lo[1] * s], hi: [hi[0] * s, hi[1] * s] },
            Body::Ellipsoid { a } => {
                let k = 1.0 / (s * s);
                Body::Ellipsoid { a: [[a[0][0] * k, a[0][1] * k], [a[1][0] * k, a[1][1] * k]] }
            }
            Body::L1Ball { scale } => Body::L1Ball { scale: scale * s },
            Body::Polygon { vertices } => Body::Polygon { vertices: vertices.iter().map(|v| [v[0] * s, v[1] * s]).collect() },
        }
    }

    /// Counter-clockwise convex polygon representing a planar body; ellipsoids
    /// are replaced by the polygon through their support points in
    /// [`ELLIPSE_SUPPORT_POINTS`] equally spaced normal directions.
    pub fn to_polygon(&self) -> Result<Vec<[f64; 2]>> {
        self.validate()?;
        match self {
            Body::Interval { .. } => Err(Error::DimensionMismatch { expected: 2, got: 1 }),
            Body::Box { lo, hi } => Ok(vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]),
            Body::L1Ball { scale } => Ok(vec![[*scale, 0.0], [0.0, *scale], [-*scale, 0.0], [0.0, -*scale]]),
            Body::Ellipsoid { a } => {
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
                let m = ELLIPSE_SUPPORT_POINTS;
                Ok((0..m)
                    .map(|k| {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                        let u = [th.cos(), th.sin()];
                        let w = [inv[0][0] * u[0] + inv[0][1] * u[1], inv[1][0] * u[0] + inv[1][1] * u[1]];
                        let norm = (u[0] * w[0] + u[1] * w[1]).sqrt();
                        [w[0] / norm, w[1] / norm]
                    })
                    .collect())
            }
            Body::Polygon { vertices } => ccw_convex(vertices),
        }
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn polygon_edges(v: &[[f64; 2]]) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
    (0..v.len()).map(move |k| (v[k], v[(k + 1) % v.len()]))
}

/// Signed shoelace area (positive for counter-clockwise order).
pub fn polygon_area(v: &[[f64; 2]]) -> f64 {
    0.5 * polygon_edges(v).map(|(p, q)| cross(p, q)).sum::<f64>()
}

/// Returns the vertices in counter-clockwise order, or an error if they are
/// not in strictly convex position.
pub fn ccw_convex(vertices: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    if vertices.len() < 3 || vertices.iter().any(|v| !(v[0].is_finite() && v[1].is_finite())) {
        return Err(Error::NonConvexPolygon);
    }
    let mut v = vertices.to_vec();
    if polygon_area(&v) < 0.0 {
        v.reverse();
    }
    let n = v.len();
    let scale = v.iter().fold(0.0_f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
    let mut total_turn = 0.0;
    for k in 0..n {
        let a = v[k];
        let b = v[(k + 1) % n];
        let c = v[(k + 2) % n];
        if cross(sub(b, a), sub(c, b)) <= 1e-14 * scale * scale {
            return Err(Error::NonConvexPolygon);
        }
        let e1 = sub(b, a);
        let e2 = sub(c, b);
        total_turn += cross(e1, e2).atan2(e1[0] * e2[0] + e1[1] * e2[1]);
    }
    // A star polygon turns by a multiple of 2π larger than one.
    if (total_turn - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
        return Err(Error::NonConvexPolygon);
    }
    Ok(v)
}

fn lowest_vertex(v: &[[f64; 2]]) -> usize {
    (0..v.len())
        .min_by(|&i, &j| v[i][1].total_cmp(&v[j][1]).then(v[i][0].total_cmp(&v[j][0])))
        .unwrap()
}

fn edge_angle(e: [f64; 2]) -> f64 {
    let a = e[1].atan2(e[0]);
    if a < 0.0 {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

/// Minkowski sum of two counter-clockwise convex polygons by merging their
/// edge sequences in order of polar angle.
pub fn minkowski_sum(p: &[[f64; 2]], q: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let (ip, iq) = (lowest_vertex(p), lowest_vertex(q));
    let (np, nq) = (p.len(), q.len());
    let edge = |v: &[[f64; 2]], start: usize, k: usize| {
        let n = v.len();
        sub(v[(start + k + 1) % n], v[(start + k) % n])
    };
    let mut out = Vec::with_capacity(np + nq);
    let mut cur = [p[ip][0] + q[iq][0], p[ip][1] + q[iq][1]];
    let (mut i, mut j) = (0, 0);
    while i < np || j < nq {
        out.push(cur);
        let take_p = if i == np {
            false
        } else if j == nq {
            true
        } else {
            edge_angle(edge(p, ip, i)) <= edge_angle(edge(q, iq, j))
        };
        let e = if take_p {
            i += 1;
            edge(p, ip, i - 1)
        } else {
            j += 1;
            edge(q, iq, j - 1)
        };
        cur = [cur[0] + e[0], cur[1] + e[1]];
    }
    out
}

/// Polygon `(1 − t) P + t Q`.
pub fn minkowski_combination(p: &[[f64; 2]], q: &[[f64; 2]], t: f64) -> Vec<[f64; 2]> {
    let scale = |v: &[[f64; 2]], s: f64| v.iter().map(|x| [x[0] * s, x[1] * s]).collect::<Vec<_>>();
    if t == 0.0 {
        return p.to_vec();
    }
    if t == 1.0 {
        return q.to_vec();
    }
    minkowski_sum(&scale(p, 1.0 - t), &scale(q, t))
}
