//! Max-affine functions `F(x) = max_k (x·y_k − g_k)` with `y_k` on a planar
//! lattice: the regular triangulation of the lifted samples, the cells of
//! `F`, and exact integrals of `e^{−F}` over a box.

use crate::grid::Lattice;
use crate::{Error, Result};
use std::collections::HashMap;

const NONE: usize = usize::MAX;

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Lower convex hull of `(y_k, g_k)` as a triangulation of every lattice
/// point. Valid when all lifted samples lie on that hull, as they do for the
/// restriction of a convex function.
struct Triangulation {
    tris: Vec<[usize; 3]>,
    /// Triangle across the edge opposite each vertex.
    adj: Vec<[usize; 3]>,
}

impl Triangulation {
    fn lower_hull(ys: &[[f64; 2]], shape: [usize; 2], g: &[f64]) -> Result<Self> {
        let [n0, n1] = shape;
        let id = |i: usize, j: usize| i + n0 * j;
        let mut tris = Vec::with_capacity(2 * (n0 - 1) * (n1 - 1));
        for j in 0..n1 - 1 {
            for i in 0..n0 - 1 {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            }
        }
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(3 * tris.len());
        let mut adj = vec![[NONE; 3]; tris.len()];
        for (t, tri) in tris.iter().enumerate() {
            for s in 0..3 {
                let (u, v) = (tri[(s + 1) % 3], tri[(s + 2) % 3]);
                let key = (u.min(v), u.max(v));
                if let Some((t2, s2)) = edges.remove(&key) {
                    adj[t][s] = t2;
                    adj[t2][s2] = t;
                } else {
                    edges.insert(key, (t, s));
                }
            }
        }
        let mut tri = Triangulation { tris, adj };
        let scale = 1.0 + g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-12 * scale;
        let mut stack: Vec<usize> = (0..tri.tris.len()).collect();
        let mut queued = vec![true; tri.tris.len()];
        let cap = 200 * tri.tris.len();
        let mut flips = 0usize;
        while let Some(t) = stack.pop() {
            queued[t] = false;
            for s in 0..3 {
                if let Some(u) = tri.try_flip(t, s, ys, g, tol) {
                    flips += 1;
                    if flips > cap {
                        return Err(Error::InvalidParameter("lifted samples are not convex".into()));
                    }
                    for w in [t, u].into_iter().chain(tri.adj[t]).chain(tri.adj[u]) {
                        if w != NONE && !queued[w] {
                            queued[w] = true;
                            stack.push(w);
                        }
                    }
                    break;
                }
            }
        }
        Ok(tri)
    }

    /// Flips the edge opposite vertex `s` of triangle `t` when the lifted
    /// surface is reflex across it; returns the other triangle.
    fn try_flip(&mut self, t: usize, s: usize, ys: &[[f64; 2]], g: &[f64], tol: f64) -> Option<usize> {
        let u = self.adj[t][s];
        if u == NONE {
            return None;
        }
        let [a, b, c] = [self.tris[t][s], self.tris[t][(s + 1) % 3], self.tris[t][(s + 2) % 3]];
        let r = (0..3).find(|&r| self.tris[u][r] != b && self.tris[u][r] != c)?;
        let d = self.tris[u][r];
        let area = orient(ys[a], ys[b], ys[c]);
        let (la, lb, lc) = (orient(ys[d], ys[b], ys[c]) / area, orient(ys[a], ys[d], ys[c]) / area, orient(ys[a], ys[b], ys[d]) / area);
        if g[d] >= la * g[a] + lb * g[b] + lc * g[c] - tol {
            return None;
        }
        if orient(ys[a], ys[b], ys[d]) <= 0.0 || orient(ys[a], ys[d], ys[c]) <= 0.0 {
            return None;
        }
        let (n_ab, n_ca) = (self.adj[t][(s + 2) % 3], self.adj[t][(s + 1) % 3]);
        let (n_bd, n_dc) = (self.adj[u][(r + 1) % 3], self.adj[u][(r + 2) % 3]);
        self.tris[t] = [a, b, d];
        self.adj[t] = [n_bd, u, n_ab];
        self.tris[u] = [a, d, c];
        self.adj[u] = [n_dc, n_ca, t];
        self.repoint(n_bd, u, t);
        self.repoint(n_ca, t, u);
        Some(u)
    }

    fn repoint(&mut self, w: usize, from: usize, to: usize) {
        if w != NONE {
            for slot in self.adj[w].iter_mut() {
                if *slot == from {
                    *slot = to;
                }
            }
        }
    }

    fn neighbours(&self, count: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); count];
        for tri in &self.tris {
            for s in 0..3 {
                let (u, v) = (tri[s], tri[(s + 1) % 3]);
                out[u].push(v);
                out[v].push(u);
            }
        }
        for n in out.iter_mut() {
            n.sort_unstable();
            n.dedup();
        }
        out
    }
}

/// Convex polygon with the label of the edge leaving each vertex.
type Cell = Vec<([f64; 2], usize)>;

fn clip(poly: &Cell, normal: [f64; 2], offset: f64, label: usize) -> Cell {
    let side = |p: [f64; 2]| normal[0] * p[0] + normal[1] * p[1] - offset;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let (p, l) = poly[i];
        let q = poly[(i + 1) % poly.len()].0;
        let (sp, sq) = (side(p), side(q));
        let cut = || {
            let w = sp / (sp - sq);
            [p[0] + w * (q[0] - p[0]), p[1] + w * (q[1] - p[1])]
        };
        if sp >= 0.0 {
            out.push((p, l));
            if sq < 0.0 {
                out.push((cut(), label));
            }
        } else if sq >= 0.0 {
            out.push((cut(), l));
        }
    }
    out
}

/// `log (e^x − 1)/x`, continuous at zero.
fn log_phi1(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x < 0.0 {
        (-(x.exp_m1()) / -x).ln()
    } else {
        x + (-(-x).exp_m1() / x).ln()
    }
}

/// `log e[a, b]`, the divided difference of `exp`.
fn log_dd2(a: f64, b: f64) -> f64 {
    a.max(b) + log_phi1(-(a - b).abs())
}

/// `log e[a, b, c]`.
fn log_dd3(a: f64, b: f64, c: f64) -> f64 {
    let mut v = [a, b, c];
    v.sort_by(|x, y| y.total_cmp(x));
    let [a, b, c] = v;
    if a - c < 1.0 {
        let m = (a + b + c) / 3.0;
        let d = [a - m, b - m, c - m];
        // Complete homogeneous polynomials of the centred nodes.
        let mut h = [1.0f64; 40];
        let mut h1 = [1.0f64; 40];
        for n in 1..40 {
            h1[n] = h1[n - 1] * d[0];
        }
        for &x in &d[1..] {
            h[0] = 1.0;
            for n in 1..40 {
                h[n] = h1[n] + x * h[n - 1];
            }
            h1 = h;
        }
        let mut sum = 0.0;
        let mut fact = 2.0;
        for (n, &hn) in h.iter().enumerate() {
            sum += hn / fact;
            fact *= (n + 3) as f64;
        }
        m + sum.ln()
    } else {
        let (y, z) = (b - a, c - a);
        a + ((log_phi1(y).exp() - (z + log_phi1(y - z)).exp()) / -z).ln()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// Cells of `F(x) = max_k (x·y_k − g_k)` inside `[lo, hi]`.
pub(crate) struct MaxAffine<'a> {
    ys: &'a [[f64; 2]],
    g: &'a [f64],
    cells: Vec<Cell>,
}

impl<'a> MaxAffine<'a> {
    pub(crate) fn new(dual: &Lattice, ys: &'a [[f64; 2]], g: &'a [f64], lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        let tri = Triangulation::lower_hull(ys, dual.shape(), g)?;
        let boxed: Cell = vec![([lo[0], lo[1]], NONE), ([hi[0], lo[1]], NONE), ([hi[0], hi[1]], NONE), ([lo[0], hi[1]], NONE)];
        let cells = tri
            .neighbours(ys.len())
            .iter()
            .enumerate()
            .map(|(k, nb)| {
                let mut cell = boxed.clone();
                for &j in nb {
                    if cell.is_empty() {
                        break;
                    }
                    let normal = [ys[k][0] - ys[j][0], ys[k][1] - ys[j][1]];
                    cell = clip(&cell, normal, g[k] - g[j], j);
                }
                cell
            })
            .collect();
        Ok(MaxAffine { ys, g, cells })
    }

    fn exponent(&self, k: usize, x: [f64; 2]) -> f64 {
        self.g[k] - x[0] * self.ys[k][0] - x[1] * self.ys[k][1]
    }

    /// `log ∫_{cell k} e^{−F}`, `−∞` for an empty cell.
    fn log_cell_mass(&self, k: usize) -> f64 {
        let cell = &self.cells[k];
        if cell.len() < 3 {
            return f64::NEG_INFINITY;
        }
        let p0 = cell[0].0;
        let u0 = self.exponent(k, p0);
        let terms: Vec<f64> = (1..cell.len() - 1)
            .filter_map(|i| {
                let (p, q) = (cell[i].0, cell[i + 1].0);
                let area = 0.5 * orient(p0, p, q);
                (area > 0.0).then(|| (2.0 * area).ln() + log_dd3(u0, self.exponent(k, p), self.exponent(k, q)))
            })
            .collect();
        log_sum_exp(&terms)
    }

    /// `log ∫_box e^{−F}` with the log-mass of each cell.
    pub(crate) fn log_masses(&self) -> (f64, Vec<f64>) {
        let cells: Vec<f64> = (0..self.cells.len()).map(|k| self.log_cell_mass(k)).collect();
        (log_sum_exp(&cells), cells)
    }

    /// `(log ∫ e^{−F} ds, j)` over each shared edge between cell `k` and a
    /// cell `j > k`.
    fn shared_edges(&self, k: usize) -> impl Iterator<Item = (f64, usize)> + '_ {
        let cell = &self.cells[k];
        (0..cell.len()).filter_map(move |i| {
            let (p, j) = cell[i];
            if j == NONE || j < k || cell.len() < 3 {
                return None;
            }
            let q = cell[(i + 1) % cell.len()].0;
            let len = (q[0] - p[0]).hypot(q[1] - p[1]);
            (len > 0.0).then(|| (len.ln() + log_dd2(self.exponent(k, p), self.exponent(k, q)), j))
        })
    }
}

/// For `F(t, x) = max_k (x·y_k − (1−t)a_k − t b_k)` on a box, `α(t)` and
/// `α″(t) = ∫ ∂²ₜₜF dμ − Var_μ(∂ₜF)` with its comparison scale. `∂ₜF` is
/// constant on each cell and `∂²ₜₜF` is `J²/|Δy|` times length on each
/// moving edge, `J` the jump of `∂ₜF` across it.
pub(crate) fn alpha_and_dd(
    dual: &Lattice,
    a: &[f64],
    b: &[f64],
    t: f64,
    lo: [f64; 2],
    hi: [f64; 2],
) -> Result<(f64, f64, f64)> {
    let ys: Vec<[f64; 2]> = (0..dual.len()).map(|k| dual.point(k)).collect();
    let g: Vec<f64> = a.iter().zip(b).map(|(&p, &q)| (1.0 - t) * p + t * q).collect();
    let model = MaxAffine::new(dual, &ys, &g, lo, hi)?;
    let (log_z, cells) = model.log_masses();
    if !log_z.is_finite() {
        return Err(Error::ZeroMass);
    }
    let ft = |k: usize| a[k] - b[k];
    let w: Vec<f64> = cells.iter().map(|m| (m - log_z).exp()).collect();
    let mean: f64 = w.iter().enumerate().map(|(k, w)| w * ft(k)).sum();
    let var: f64 = w.iter().enumerate().map(|(k, w)| w * (ft(k) - mean).powi(2)).sum();
    let mut edges = 0.0;
    for k in 0..ys.len() {
        for (log_len_mass, j) in model.shared_edges(k) {
            let jump = ft(j) - ft(k);
            let gap = (ys[j][0] - ys[k][0]).hypot(ys[j][1] - ys[k][1]);
            edges += jump * jump / gap * (log_len_mass - log_z).exp();
        }
    }
    Ok((-log_z, edges - var, 1.0 + edges + var))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd3_direct(a: f64, b: f64, c: f64) -> f64 {
        a.exp() / ((a - b) * (a - c)) + b.exp() / ((b - a) * (b - c)) + c.exp() / ((c - a) * (c - b))
    }

    #[test]
    fn divided_differences() {
        for &(a, b, c) in &[(0.3, -0.2, 0.1), (2.0, -1.0, 0.5), (-4.0, 1.0, 3.0), (0.9, 0.0, -0.05)] {
            let v = log_dd3(a, b, c).exp();
            assert!((v / dd3_direct(a, b, c) - 1.0).abs() < 1e-11, "{a} {b} {c}");
        }
        assert!((log_dd3(0.0, 0.0, 0.0).exp() - 0.5).abs() < 1e-15);
        assert!((log_dd2(1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((log_dd2(0.0, -2.0).exp() - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-15);
        // Far apart nodes stay finite in the log domain.
        assert!(log_dd3(0.0, -700.0, -1400.0).is_finite());
    }

    #[test]
    fn clip_labels_the_cut() {
        let sq: Cell = vec![([0.0, 0.0], NONE), ([1.0, 0.0], NONE), ([1.0, 1.0], NONE), ([0.0, 1.0], NONE)];
        let half = clip(&sq, [-1.0, 0.0], -0.5, 7);
        let area: f64 = (1..half.len() - 1).map(|i| 0.5 * orient(half[0].0, half[i].0, half[i + 1].0)).sum();
        assert!((area - 0.5).abs() < 1e-15);
        assert_eq!(half.iter().filter(|v| v.1 == 7).count(), 1);
    }

    #[test]
    fn quadratic_mass() {
        // g = |y|²/2 on a fine dual grid: F ≈ |x|²/2 and ∫ e^{−F} over a wide box ≈ 2π.
        let dual = Lattice::square(-6.0, 6.0, 121).unwrap();
        let ys: Vec<[f64; 2]> = (0..dual.len()).map(|k| dual.point(k)).collect();
        let g: Vec<f64> = ys.iter().map(|y| 0.5 * (y[0] * y[0] + y[1] * y[1])).collect();
        let model = MaxAffine::new(&dual, &ys, &g, [-5.0, -5.0], [5.0, 5.0]).unwrap();
        let z = model.log_masses().0.exp();
        assert!((z / (2.0 * std::f64::consts::PI) - 1.0).abs() < 1e-3, "{z}");
    }

    #[test]
    fn sheared_quadratic_needs_flips() {
        let dual = Lattice::square(-4.0, 4.0, 41).unwrap();
        let ys: Vec<[f64; 2]> = (0..dual.len()).map(|k| dual.point(k)).collect();
        let g: Vec<f64> = ys.iter().map(|y| (y[0] - 2.0 * y[1]).powi(2) + 0.1 * y[1] * y[1]).collect();
        let tri = Triangulation::lower_hull(&ys, dual.shape(), &g).unwrap();
        for (t, tri_v) in tri.tris.iter().enumerate() {
            assert!(orient(ys[tri_v[0]], ys[tri_v[1]], ys[tri_v[2]]) > 0.0);
            for s in 0..3 {
                let u = tri.adj[t][s];
                if u == NONE {
                    continue;
                }
                let [a, b, c] = [tri_v[s], tri_v[(s + 1) % 3], tri_v[(s + 2) % 3]];
                let d = *tri.tris[u].iter().find(|&&v| v != b && v != c).unwrap();
                let area = orient(ys[a], ys[b], ys[c]);
                let plane = (orient(ys[d], ys[b], ys[c]) * g[a] + orient(ys[a], ys[d], ys[c]) * g[b] + orient(ys[a], ys[b], ys[d]) * g[c]) / area;
                assert!(g[d] >= plane - 1e-9);
            }
        }
    }

    #[test]
    fn exact_alpha_is_convex_for_a_mixed_pair() {
        let dual = Lattice::square(-5.0, 5.0, 41).unwrap();
        let ys: Vec<[f64; 2]> = (0..dual.len()).map(|k| dual.point(k)).collect();
        let a: Vec<f64> = ys.iter().map(|y| 0.5 * (y[0] * y[0] + 0.5 * y[1] * y[1])).collect();
        let b: Vec<f64> = ys.iter().map(|y| 0.25 * (y[0] - 0.3).powi(2) + y[1] * y[1] + 0.2 * y[0] * y[1]).collect();
        let n = 17;
        let dt = 1.0 / (n - 1) as f64;
        let rows: Vec<(f64, f64, f64)> =
            (0..n).map(|i| alpha_and_dd(&dual, &a, &b, i as f64 * dt, [-4.0, -4.0], [4.0, 4.0]).unwrap()).collect();
        for i in 1..n - 1 {
            let fd = (rows[i + 1].0 - 2.0 * rows[i].0 + rows[i - 1].0) / (dt * dt);
            assert!(fd > -1e-8, "{i} {fd}");
            assert!(rows[i].1 > -1e-10, "{i} {}", rows[i].1);
            assert!((fd - rows[i].1).abs() < 5.0 * dt * dt * rows[i].2, "{i} {fd} {}", rows[i].1);
        }
    }
}
