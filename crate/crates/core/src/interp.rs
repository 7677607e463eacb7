//! Space-time fields, the closed-form interpolation families (`p = 1` by
//! inf-convolution, `p = ∞` by affine combination), the pointwise residual of
//! the p-interpolation equation and the bordered matrix `H_p`.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::checks::{CheckReport, Location};
use crate::grid::{central_at, Axis, inverse_quadratic_form, sym_eigenvalues, GridFunction, Lattice};
use crate::legendre::{conjugate_line, convex_envelope, hull_slopes, legendre_nd_with, DualLattice, Mode};
use crate::{lifted, Error, Result};

/// Dual refinement used by [`interp_one`] in two dimensions.
const DUAL_REFINE_2D: f64 = 2.0;

/// Default Hessian floor below which a point is degenerate.
pub const HESSIAN_FLOOR: f64 = 1e-6;

/// A family `F(t, ·)` on a uniform time grid over a fixed space lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    t0: f64,
    t1: f64,
    layers: Vec<GridFunction>,
}

impl SpaceTimeField {
    pub fn new(t0: f64, t1: f64, layers: Vec<GridFunction>) -> Result<Self> {
        if layers.len() < 3 {
            return Err(Error::InvalidParameter(format!("a field needs at least 3 layers, got {}", layers.len())));
        }
        if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
            return Err(Error::InvalidParameter(format!("time interval [{t0}, {t1}]")));
        }
        let lat = layers[0].lattice();
        if layers.iter().any(|l| l.lattice() != lat) {
            return Err(Error::LatticeMismatch);
        }
        Ok(SpaceTimeField { t0, t1, layers })
    }

    /// Tabulates `g(t, x)` on `count` layers over `[t0, t1]`.
    pub fn from_fn(lattice: &Lattice, t0: f64, t1: f64, count: usize, g: impl Fn(f64, [f64; 2]) -> f64) -> Result<Self> {
        if count < 3 {
            return Err(Error::InvalidParameter(format!("a field needs at least 3 layers, got {count}")));
        }
        let layers = (0..count)
            .map(|i| {
                let t = time_at(t0, t1, count, i);
                GridFunction::from_fn(lattice, |x| g(t, x))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(t0, t1, layers)
    }

    pub fn lattice(&self) -> &Lattice {
        self.layers[0].lattice()
    }

    pub fn layers(&self) -> &[GridFunction] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &GridFunction {
        &self.layers[i]
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn time(&self, i: usize) -> f64 {
        time_at(self.t0, self.t1, self.layers.len(), i)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.layers.len()).map(|i| self.time(i)).collect()
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / (self.layers.len() - 1) as f64
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    /// Index of the layer at time `t`, if `t` is on the time grid.
    pub fn layer_at(&self, t: f64) -> Option<usize> {
        let s = (t - self.t0) / self.dt();
        let i = s.round();
        ((s - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < self.layers.len()).then_some(i as usize)
    }

    /// Sup of `|F|` over the field, ignoring `+∞`.
    pub fn magnitude(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.values().iter())
            .filter(|v| v.is_finite())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `F + c` on every layer.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let layers = self.layers.iter().map(|l| l.map(|v| v + c)).collect::<Result<Vec<_>>>()?;
        Self::new(self.t0, self.t1, layers)
    }
}

fn time_at(t0: f64, t1: f64, count: usize, i: usize) -> f64 {
    if i == 0 {
        t0
    } else if i == count - 1 {
        t1
    } else {
        t0 + (t1 - t0) * i as f64 / (count - 1) as f64
    }
}

fn check_pair(f0: &GridFunction, f1: &GridFunction, t: f64) -> Result<()> {
    if f0.lattice() != f1.lattice() {
        return Err(Error::LatticeMismatch);
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t = {t} outside [0, 1]")));
    }
    Ok(())
}

/// The inf-convolution family at time `t`, through the dual route
/// `𝓛[(1−t)𝓛F0 + t𝓛F1]`. At the endpoints it is the convex envelope of the
/// corresponding input.
pub fn interp_one(f0: &GridFunction, f1: &GridFunction, t: f64) -> Result<GridFunction> {
    check_pair(f0, f1, t)?;
    if t == 0.0 {
        return convex_envelope(f0);
    }
    if t == 1.0 {
        return convex_envelope(f1);
    }
    if let Some(kinks) = KinkDuals::new(f0, f1) {
        return kinks.layer(t, f0);
    }
    let dual = DualLattice::union(f0, f1, DUAL_REFINE_2D)?;
    interp_one_through(f0, f1, t, &dual)
}

/// One-dimensional transforms of both inputs at the union of their hull
/// slopes. Every `(1−t)𝓛F0 + t𝓛F1` is affine between these points, so
/// transforming back from them is exact for the sampled data.
struct KinkDuals {
    ys: Vec<f64>,
    g0: Vec<f64>,
    g1: Vec<f64>,
}

impl KinkDuals {
    fn new(f0: &GridFunction, f1: &GridFunction) -> Option<Self> {
        if f0.dim() != 1 {
            return None;
        }
        let xs = f0.lattice().axis(0).points();
        let mut ys = hull_slopes(&xs, f0.values());
        ys.extend(hull_slopes(&xs, f1.values()));
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        if ys.len() < 2 {
            return None;
        }
        let g0 = conjugate_line(&xs, f0.values(), &ys, Mode::LatticeSup);
        let g1 = conjugate_line(&xs, f1.values(), &ys, Mode::LatticeSup);
        Some(KinkDuals { ys, g0, g1 })
    }

    fn combined(&self, t: f64) -> Vec<f64> {
        self.g0.iter().zip(&self.g1).map(|(&a, &b)| (1.0 - t) * a + t * b).collect()
    }

    fn layer(&self, t: f64, like: &GridFunction) -> Result<GridFunction> {
        like.with_values(conjugate_line(&self.ys, &self.combined(t), &like.lattice().axis(0).points(), Mode::LatticeSup))
    }

    /// Affine pieces `(k, a, b, log ∫_a^b e^{−F_t})` of
    /// `F_t(x) = max_k (x y_k − G_t(y_k))` over `[lo, hi]`.
    fn pieces(&self, t: f64, lo: f64, hi: f64) -> (Vec<f64>, Vec<(usize, f64, f64, f64)>) {
        let (ys, g) = (&self.ys, self.combined(t));
        let mut hull: Vec<usize> = Vec::new();
        for c in 0..ys.len() {
            while hull.len() >= 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if (g[b] - g[a]) * (ys[c] - ys[a]) >= (g[c] - g[a]) * (ys[b] - ys[a]) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(c);
        }
        let mut out = Vec::new();
        let mut a = lo;
        for (idx, &k) in hull.iter().enumerate() {
            let b = match hull.get(idx + 1) {
                Some(&k2) => ((g[k2] - g[k]) / (ys[k2] - ys[k])).min(hi),
                None => hi,
            };
            if b > a {
                out.push((k, a, b, log_affine_mass(ys[k], g[k], a, b)));
                a = b;
            }
        }
        (g, out)
    }

    /// `log ∫_lo^hi e^{−F_t}`, exact piece by piece.
    fn log_mass(&self, t: f64, lo: f64, hi: f64) -> f64 {
        log_sum_exp(self.pieces(t, lo, hi).1.iter().map(|p| p.3))
    }

    /// `(∫ ∂²ₜₜF dμ − Var_μ(∂ₜF), scale)` on a fixed interval. `∂ₜF` is
    /// constant on each piece and `∂²ₜₜF` is a point mass `J²/Δy` at each
    /// moving kink, `J` the jump of `∂ₜF` and `Δy` the slope gap.
    fn alpha_dd(&self, t: f64, lo: f64, hi: f64) -> (f64, f64) {
        let (g, pieces) = self.pieces(t, lo, hi);
        let log_z = log_sum_exp(pieces.iter().map(|p| p.3));
        let ft = |k: usize| self.g0[k] - self.g1[k];
        let mean = pieces.iter().map(|&(k, _, _, m)| (m - log_z).exp() * ft(k)).sum::<f64>();
        let var = pieces.iter().map(|&(k, _, _, m)| (m - log_z).exp() * (ft(k) - mean).powi(2)).sum::<f64>();
        let kinks = pieces
            .windows(2)
            .map(|w| {
                let (k, k2, s) = (w[0].0, w[1].0, w[1].1);
                let jump = ft(k2) - ft(k);
                let density = (g[k] - s * self.ys[k] - log_z).exp();
                jump * jump / (self.ys[k2] - self.ys[k]) * density
            })
            .sum::<f64>();
        (kinks - var, 1.0 + kinks + var)
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    top + terms.map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// `log ∫_a^b e^{c − y x} dx` without overflow.
fn log_affine_mass(y: f64, c: f64, a: f64, b: f64) -> f64 {
    let l = b - a;
    if y == 0.0 {
        c + l.ln()
    } else if y > 0.0 {
        c - y * a + (-(-y * l).exp_m1() / y).ln()
    } else {
        c - y * b + (-(y * l).exp_m1() / -y).ln()
    }
}

/// `α` and `α″` of the inf-convolution family of a max-affine model of the
/// data, integrated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactAlpha {
    pub alpha: Vec<f64>,
    /// `∫ ∂²ₜₜF dμ − Var_μ(∂ₜF)` with its comparison scale; `None` when the
    /// two domains differ, since the formula then needs boundary terms.
    pub alpha_dd: Option<Vec<(f64, f64)>>,
}

/// Cut above the minimum beyond which samples carry no mass for
/// [`interp_one_alpha`].
const MODEL_MASS_CUT: f64 = 40.0;

/// `α(t) = −log ∫ e^{−F_t}` at `count` uniform times for the model
/// `F(t, x) = max_k (x·y_k − (1−t)𝓛F0(y_k) − t𝓛F1(y_k))`, which is jointly
/// convex in `(t, x)`.
///
/// In 1D the `y_k` are the hull slopes of both inputs, so the model is the
/// inf-convolution of their piecewise-linear interpolants and its layers
/// are those of [`interp_one`]. In 2D they form a lattice over the slopes
/// attained where either input is within a fixed cut of its minimum, and the
/// integrals run over the cells of a regular triangulation.
pub fn interp_one_alpha(f0: &GridFunction, f1: &GridFunction, count: usize) -> Result<ExactAlpha> {
    check_pair(f0, f1, 0.0)?;
    let times: Vec<f64> = (0..count).map(|i| time_at(0.0, 1.0, count, i)).collect();
    if f0.dim() == 1 {
        let kinks = KinkDuals::new(f0, f1).ok_or(Error::EmptySupport)?;
        let ((a0, b0), (a1, b1)) = (line_domain(f0), line_domain(f1));
        let alpha = times.iter().map(|&t| -kinks.log_mass(t, (1.0 - t) * a0 + t * a1, (1.0 - t) * b0 + t * b1)).collect();
        let alpha_dd = ((a0, b0) == (a1, b1)).then(|| times.iter().map(|&t| kinks.alpha_dd(t, a0, b0)).collect());
        return Ok(ExactAlpha { alpha, alpha_dd });
    }
    if f0.values().iter().chain(f1.values()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("the planar model needs finite samples on the whole lattice".into()));
    }
    let dual = model_dual(f0, f1)?;
    let g0 = legendre_nd_with(f0, &DualLattice::explicit(dual.clone()), Mode::LatticeSup)?;
    let g1 = legendre_nd_with(f1, &DualLattice::explicit(dual.clone()), Mode::LatticeSup)?;
    let l = f0.lattice();
    let (lo, hi) = ([l.axis(0).lo, l.axis(1).lo], [l.axis(0).hi, l.axis(1).hi]);
    let rows = times
        .par_iter()
        .map(|&t| lifted::alpha_and_dd(&dual, g0.values(), g1.values(), t, lo, hi))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExactAlpha { alpha: rows.iter().map(|r| r.0).collect(), alpha_dd: Some(rows.iter().map(|r| (r.1, r.2)).collect()) })
}

/// Lattice over the one-sided slopes of both inputs between neighbours one
/// of which lies within [`MODEL_MASS_CUT`] of the minimum, with `2n − 1`
/// points per axis.
fn model_dual(f0: &GridFunction, f1: &GridFunction) -> Result<Lattice> {
    let l = f0.lattice();
    let mut range = [(f64::INFINITY, f64::NEG_INFINITY); 2];
    for f in [f0, f1] {
        let v = f.values();
        let low = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let [n0, n1] = l.shape();
        for j in 0..n1 {
            for i in 0..n0 {
                let k = l.index(i, j);
                for (axis, next) in [(0, (i + 1 < n0).then(|| l.index(i + 1, j))), (1, (j + 1 < n1).then(|| l.index(i, j + 1)))] {
                    let Some(m) = next else { continue };
                    if v[k].min(v[m]) <= low + MODEL_MASS_CUT {
                        let s = (v[m] - v[k]) / l.axis(axis).spacing();
                        range[axis] = (range[axis].0.min(s), range[axis].1.max(s));
                    }
                }
            }
        }
    }
    let axes = range
        .iter()
        .zip(l.axes())
        .map(|(&(lo, hi), a)| {
            let pad = 0.05 * (hi - lo) + 1e-3;
            Axis::new(lo - pad, hi + pad, 2 * a.n - 1)
        })
        .collect::<Result<Vec<_>>>()?;
    Lattice::new(axes)
}

fn line_domain(f: &GridFunction) -> (f64, f64) {
    let xs = f.lattice().axis(0).points();
    let finite: Vec<f64> = xs.iter().zip(f.values()).filter(|(_, v)| v.is_finite()).map(|(x, _)| *x).collect();
    (finite[0], finite[finite.len() - 1])
}

/// As [`interp_one`] with an explicit dual lattice.
pub fn interp_one_through(f0: &GridFunction, f1: &GridFunction, t: f64, dual: &DualLattice) -> Result<GridFunction> {
    check_pair(f0, f1, t)?;
    let g0 = legendre_nd_with(f0, dual, Mode::LatticeSup)?;
    let g1 = legendre_nd_with(f1, dual, Mode::LatticeSup)?;
    combine_duals(&g0, &g1, t, f0.lattice())
}

fn combine_duals(g0: &GridFunction, g1: &GridFunction, t: f64, primal: &Lattice) -> Result<GridFunction> {
    let gt: Vec<f64> = g0.values().iter().zip(g1.values()).map(|(&a, &b)| (1.0 - t) * a + t * b).collect();
    let gt = g0.with_values(gt)?;
    legendre_nd_with(&gt, &DualLattice::explicit(primal.clone()), Mode::LatticeSup)
}

/// The inf-convolution family on `count` layers over `[0, 1]`. The boundary
/// layers are the inputs themselves.
pub fn interp_one_field(f0: &GridFunction, f1: &GridFunction, count: usize) -> Result<SpaceTimeField> {
    check_pair(f0, f1, 0.0)?;
    if count < 3 {
        return Err(Error::InvalidParameter(format!("a field needs at least 3 layers, got {count}")));
    }
    let interior = if let Some(kinks) = KinkDuals::new(f0, f1) {
        (1..count - 1).into_par_iter().map(|i| kinks.layer(time_at(0.0, 1.0, count, i), f0)).collect::<Result<Vec<_>>>()?
    } else {
        let dual = DualLattice::union(f0, f1, DUAL_REFINE_2D)?;
        let g0 = legendre_nd_with(f0, &dual, Mode::LatticeSup)?;
        let g1 = legendre_nd_with(f1, &dual, Mode::LatticeSup)?;
        (1..count - 1)
            .into_par_iter()
            .map(|i| combine_duals(&g0, &g1, time_at(0.0, 1.0, count, i), f0.lattice()))
            .collect::<Result<Vec<_>>>()?
    };
    let mut layers = Vec::with_capacity(count);
    layers.push(f0.clone());
    layers.extend(interior);
    layers.push(f1.clone());
    SpaceTimeField::new(0.0, 1.0, layers)
}

/// `(1−t)F0 + tF1` with `+∞` absorbing; the endpoints return the inputs.
pub fn interp_linear(f0: &GridFunction, f1: &GridFunction, t: f64) -> Result<GridFunction> {
    check_pair(f0, f1, t)?;
    if t == 0.0 {
        return Ok(f0.clone());
    }
    if t == 1.0 {
        return Ok(f1.clone());
    }
    let v = f0
        .values()
        .iter()
        .zip(f1.values())
        .map(|(&a, &b)| if a.is_infinite() || b.is_infinite() { f64::INFINITY } else { (1.0 - t) * a + t * b })
        .collect();
    f0.with_values(v)
}

pub fn interp_linear_field(f0: &GridFunction, f1: &GridFunction, count: usize) -> Result<SpaceTimeField> {
    check_pair(f0, f1, 0.0)?;
    if count < 3 {
        return Err(Error::InvalidParameter(format!("a field needs at least 3 layers, got {count}")));
    }
    let layers = (0..count)
        .map(|i| interp_linear(f0, f1, time_at(0.0, 1.0, count, i)))
        .collect::<Result<Vec<_>>>()?;
    SpaceTimeField::new(0.0, 1.0, layers)
}

/// Residual data at one interior space-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPoint {
    pub layer: usize,
    pub index: usize,
    pub t: f64,
    pub x: [f64; 2],
    /// `∂²ₜₜF − (1/p)(Hess F)⁻¹∇∂ₜF·∇∂ₜF`.
    pub residual: f64,
    pub det_hp: f64,
    pub min_eig_hp: f64,
    /// `det(Hess F)`, for normalising `det H_p`.
    pub det_hess: f64,
    /// `(Hess F)⁻¹∇∂ₜF·∇∂ₜF`.
    pub q: f64,
    pub ftt: f64,
}

#[derive(Debug, Clone)]
pub struct ResidualField {
    pub p: f64,
    pub points: Vec<ResidualPoint>,
    /// Points skipped because the Hessian fell below the floor or the stencil
    /// touched `+∞`.
    pub degenerate: usize,
}

impl ResidualField {
    /// Points whose space coordinate lies in the central `fraction` of the box.
    pub fn in_window<'a>(&'a self, lattice: &'a Lattice, fraction: f64) -> impl Iterator<Item = &'a ResidualPoint> + 'a {
        self.points.iter().filter(move |p| lattice.in_window(p.index, fraction))
    }

    pub fn sup_abs_residual(&self) -> Option<&ResidualPoint> {
        self.points.iter().max_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs()))
    }
}

/// Pointwise residual of the p-interpolation equation at interior layers and
/// interior lattice points, with `det H_p` and its smallest eigenvalue.
pub fn residual_p(field: &SpaceTimeField, p: f64) -> Result<ResidualField> {
    residual_p_with(field, p, HESSIAN_FLOOR)
}

pub fn residual_p_with(field: &SpaceTimeField, p: f64, floor: f64) -> Result<ResidualField> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter(format!("p must be positive, got {p}")));
    }
    let lat = field.lattice();
    let dt = field.dt();
    let dim = lat.dim();
    let per_layer: Vec<(Vec<ResidualPoint>, usize)> = (1..field.layer_count() - 1)
        .into_par_iter()
        .map(|i| {
            let prev = field.layer(i - 1).values();
            let cur = field.layer(i).values();
            let next = field.layer(i + 1).values();
            let ft: Vec<f64> = next.iter().zip(prev).map(|(a, b)| (a - b) / (2.0 * dt)).collect();
            let mut pts = Vec::new();
            let mut degenerate = 0;
            for idx in 0..lat.len() {
                if !lat.is_interior(idx) {
                    continue;
                }
                let d = central_at(lat, cur, idx);
                let g = central_at(lat, &ft, idx).grad;
                let ftt = (next[idx] - 2.0 * cur[idx] + prev[idx]) / (dt * dt);
                let finite = ftt.is_finite()
                    && g.iter().all(|v| v.is_finite())
                    && d.hess.iter().flatten().all(|v| v.is_finite());
                if !finite || sym_eigenvalues(&d.hess, dim).0 < floor {
                    degenerate += 1;
                    continue;
                }
                let q = inverse_quadratic_form(&d.hess, &g, dim);
                let (det_hp, min_eig_hp) = bordered(ftt, &g, &d.hess, p, dim);
                let det_hess = if dim == 1 { d.hess[0][0] } else { d.hess[0][0] * d.hess[1][1] - d.hess[0][1] * d.hess[1][0] };
                pts.push(ResidualPoint {
                    layer: i,
                    index: idx,
                    t: field.time(i),
                    x: lat.point(idx),
                    residual: ftt - q / p,
                    det_hp,
                    min_eig_hp,
                    det_hess,
                    q,
                    ftt,
                });
            }
            (pts, degenerate)
        })
        .collect();
    let mut points = Vec::new();
    let mut degenerate = 0;
    for (p, d) in per_layer {
        points.extend(p);
        degenerate += d;
    }
    Ok(ResidualField { p, points, degenerate })
}

/// Determinant and smallest eigenvalue of `[[F_tt, gᵀ], [g, p·Hess]]`.
pub fn bordered(ftt: f64, g: &[f64; 2], hess: &[[f64; 2]; 2], p: f64, dim: usize) -> (f64, f64) {
    if dim == 1 {
        let (a, b, c) = (ftt, g[0], p * hess[0][0]);
        let det = a * c - b * b;
        let m = 0.5 * (a + c);
        let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        return (det, m - r);
    }
    let m = Matrix3::new(
        ftt,
        g[0],
        g[1],
        g[0],
        p * hess[0][0],
        p * hess[0][1],
        g[1],
        p * hess[1][0],
        p * hess[1][1],
    );
    let eig = m.symmetric_eigenvalues();
    (m.determinant(), eig.min())
}

/// Stencil-error tolerance for a pointwise quantity of [`residual_p`].
///
/// The stencils are second order, so the difference between the quantity on
/// the field and on the field with every other layer (respectively every
/// other lattice point) dropped is three times the error on the fine field.
/// The tolerance is ten times the sum of the two estimates. Fields that
/// cannot be halved fall back to `10 (Δt² + h²) · sup|F|`.
pub fn stencil_tolerance(field: &SpaceTimeField, p: f64, quantity: impl Fn(&ResidualPoint) -> f64 + Copy) -> Result<f64> {
    let fine = residual_p(field, p)?;
    let floor = 1e-12 * field.magnitude().max(1.0);
    let fallback = || {
        let dt = field.dt();
        let h = field.lattice().h();
        10.0 * (dt * dt + h * h) * field.magnitude().max(1.0)
    };
    let lookup: std::collections::HashMap<(usize, usize), f64> =
        fine.points.iter().map(|p| ((p.layer, p.index), quantity(p))).collect();
    let mut total = 0.0;
    match coarsen_time(field) {
        Some(coarse) => {
            let r = residual_p(&coarse, p)?;
            total += r
                .points
                .iter()
                .filter_map(|c| lookup.get(&(2 * c.layer, c.index)).map(|f| (quantity(c) - f).abs() / 3.0))
                .fold(0.0, f64::max);
        }
        None => return Ok(fallback()),
    }
    match coarsen_space(field) {
        Some(coarse) => {
            let r = residual_p(&coarse, p)?;
            let lat = field.lattice();
            let clat = coarse.lattice();
            total += r
                .points
                .iter()
                .filter_map(|c| {
                    let [i, j] = clat.multi_index(c.index);
                    let idx = lat.index(2 * i, if lat.dim() == 2 { 2 * j } else { 0 });
                    lookup.get(&(c.layer, idx)).map(|f| (quantity(c) - f).abs() / 3.0)
                })
                .fold(0.0, f64::max);
        }
        None => return Ok(fallback()),
    }
    Ok(10.0 * total + floor)
}

/// Every other layer, when the layer count is odd and at least five.
pub fn coarsen_time(field: &SpaceTimeField) -> Option<SpaceTimeField> {
    let m = field.layer_count();
    if m % 2 == 0 || m < 5 {
        return None;
    }
    let layers = field.layers().iter().step_by(2).cloned().collect();
    let (t0, t1) = field.interval();
    SpaceTimeField::new(t0, t1, layers).ok()
}

/// Every other lattice point on every axis, when all counts are odd and at
/// least five.
pub fn coarsen_space(field: &SpaceTimeField) -> Option<SpaceTimeField> {
    let lat = field.lattice();
    if lat.axes().iter().any(|a| a.n % 2 == 0 || a.n < 5) {
        return None;
    }
    let axes = lat.axes().iter().map(|a| crate::grid::Axis { lo: a.lo, hi: a.hi, n: (a.n + 1) / 2 }).collect();
    let clat = Lattice::new(axes).ok()?;
    let layers = field
        .layers()
        .iter()
        .map(|l| {
            let v = (0..clat.len())
                .map(|c| {
                    let [i, j] = clat.multi_index(c);
                    l.value(lat.index(2 * i, if lat.dim() == 2 { 2 * j } else { 0 }))
                })
                .collect();
            GridFunction::new(clat.clone(), v)
        })
        .collect::<Result<Vec<_>>>()
        .ok()?;
    let (t0, t1) = field.interval();
    SpaceTimeField::new(t0, t1, layers).ok()
}

/// Whether `H_p ⪰ −tol·I` at every non-degenerate interior point, with a
/// spot-check of the subharmonicity of `(s, t) ↦ F(t, x₀ + (t + √(p−1)s) y₀)`
/// along lattice-aligned directions `y₀ = m h / Δt`.
pub fn subfamily_check(field: &SpaceTimeField, p: f64, tol: Option<f64>) -> Result<CheckReport> {
    if p < 1.0 {
        return Err(Error::InvalidParameter(format!("sub-family check needs p >= 1, got {p}")));
    }
    let tol = match tol {
        Some(t) => t,
        None => stencil_tolerance(field, p, |r| r.min_eig_hp)?,
    };
    let res = residual_p(field, p)?;
    let worst = res.points.iter().min_by(|a, b| a.min_eig_hp.total_cmp(&b.min_eig_hp));
    let Some(worst) = worst else {
        return Err(Error::InvalidParameter("no non-degenerate interior points".into()));
    };
    let margin = worst.min_eig_hp;
    let dim = field.lattice().dim();
    let spot = laplacian_spot_check(field, p, tol, &res);
    let eig_verdict = margin >= -tol;
    let mut report = CheckReport::new(
        format!("subfamily_p{}", fmt_p(p)),
        margin,
        tol,
        format!("field {} layers x {} points, dim {dim}", field.layer_count(), field.lattice().len()),
    )
    .with_location(Location::at(worst.t, &worst.x[..dim]));
    if res.degenerate > 0 {
        report = report.note(format!("{} degenerate points excluded", res.degenerate));
    }
    report = report.note(format!(
        "laplacian spot-check min {:.3e}, verdict {}, {} eigenvalue verdict",
        spot.0,
        if spot.1 { "pass" } else { "fail" },
        if spot.1 == eig_verdict { "agrees with" } else { "disagrees with" }
    ));
    Ok(report)
}

fn fmt_p(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

/// Minimum of the normalised discrete Laplacian over the sampled points and
/// directions, and whether it stays above `−tol`.
fn laplacian_spot_check(field: &SpaceTimeField, p: f64, tol: f64, res: &ResidualField) -> (f64, bool) {
    let lat = field.lattice();
    let dt = field.dt();
    let dim = lat.dim();
    let offsets: Vec<[i64; 2]> = if dim == 1 {
        (-2..=2).map(|m| [m, 0]).collect()
    } else {
        let mut o = Vec::new();
        for a in -1..=1 {
            for b in -1..=1 {
                o.push([a, b]);
            }
        }
        o
    };
    let [n0, n1] = lat.shape();
    let mut min = f64::INFINITY;
    for rp in res.points.iter().step_by(7) {
        let [i, j] = lat.multi_index(rp.index);
        for m in &offsets {
            let shift = |s: i64| -> Option<usize> {
                let a = i as i64 + s * m[0];
                let b = j as i64 + s * m[1];
                (a >= 0 && b >= 0 && (a as usize) < n0 && (b as usize) < n1).then(|| lat.index(a as usize, b as usize))
            };
            let (Some(up), Some(down)) = (shift(1), shift(-1)) else { continue };
            let c = field.layer(rp.layer).value(rp.index);
            let fwd = field.layer(rp.layer + 1).value(up);
            let back = field.layer(rp.layer - 1).value(down);
            let s_up = field.layer(rp.layer).value(up);
            let s_down = field.layer(rp.layer).value(down);
            let lap = (fwd - 2.0 * c + back) / (dt * dt) + (p - 1.0) * (s_up - 2.0 * c + s_down) / (dt * dt);
            if !lap.is_finite() {
                continue;
            }
            let h = lat.spacing();
            let y2: f64 = (0..dim).map(|k| (m[k] as f64 * h[k] / dt).powi(2)).sum();
            min = min.min(lap / (1.0 + y2));
        }
    }
    (min, min >= -tol)
}

/// Per-layer Legendre transforms on a dual lattice shared by all layers: the
/// union of the layers' slope windows with `refine` times the primal
/// resolution.
pub fn dual_family(field: &SpaceTimeField) -> Result<SpaceTimeField> {
    dual_family_with(field, 1.0)
}

pub fn dual_family_with(field: &SpaceTimeField, refine: f64) -> Result<SpaceTimeField> {
    let mut dual = DualLattice::auto_with(field.layer(0), refine, 1.0)?;
    for layer in &field.layers()[1..] {
        let d = DualLattice::auto_with(layer, refine, 1.0)?;
        let axes = dual
            .lattice
            .axes()
            .iter()
            .zip(d.lattice.axes())
            .map(|(a, b)| crate::grid::Axis { lo: a.lo.min(b.lo), hi: a.hi.max(b.hi), n: a.n.max(b.n) })
            .collect();
        dual = DualLattice { lattice: Lattice::new(axes)?, slopes: dual.slopes };
    }
    dual_family_on(field, &dual)
}

pub fn dual_family_on(field: &SpaceTimeField, dual: &DualLattice) -> Result<SpaceTimeField> {
    let layers = field
        .layers()
        .par_iter()
        .map(|l| legendre_nd_with(l, dual, Mode::Clamped))
        .collect::<Result<Vec<_>>>()?;
    let (t0, t1) = field.interval();
    SpaceTimeField::new(t0, t1, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, FamilySpec};

    fn quad(l: &Lattice, lambda: f64) -> GridFunction {
        sample(&FamilySpec::quadratic(lambda), l).unwrap()
    }

    #[test]
    fn harmonic_mean_at_half() {
        let l = Lattice::line(-4.0, 4.0, 129).unwrap();
        let f = interp_one(&quad(&l, 1.0), &quad(&l, 4.0), 0.5).unwrap();
        // Oracle: exhaustive infimum over lattice pairs with (x + y)/2 on the lattice.
        let f0 = quad(&l, 1.0);
        let f1 = quad(&l, 4.0);
        for k in 32..=96 {
            let mut best = f64::INFINITY;
            for i in 0..l.len() {
                let j = 2 * k as i64 - i as i64;
                if j < 0 || j as usize >= l.len() {
                    continue;
                }
                best = best.min(0.5 * f0.value(i) + 0.5 * f1.value(j as usize));
            }
            let x = l.point(k)[0];
            assert!((f.value(k) - 0.8 * x * x).abs() < 2e-3, "x = {x}");
            assert!((f.value(k) - best).abs() < 2e-3, "x = {x}");
        }
    }

    #[test]
    fn endpoints_and_identity() {
        let l = Lattice::line(-3.0, 3.0, 61).unwrap();
        let f = sample(&FamilySpec::EvenPoly { coeffs: vec![0.0, 0.5, 0.05] }, &l).unwrap();
        let g = quad(&l, 2.0);
        assert_eq!(interp_one(&f, &g, 0.0).unwrap(), convex_envelope(&f).unwrap());
        assert_eq!(interp_one(&f, &g, 1.0).unwrap(), convex_envelope(&g).unwrap());
        let same = interp_one(&f, &f, 0.3).unwrap();
        for k in 15..=45 {
            assert!((same.value(k) - f.value(k)).abs() < 1e-3);
        }
    }

    #[test]
    fn linear_examples() {
        let l = Lattice::line(-4.0, 4.0, 81).unwrap();
        let a = quad(&l, 1.0);
        let b = quad(&l, 4.0);
        let m = interp_linear(&a, &b, 0.5).unwrap();
        assert!((m.value(60) - 1.25 * 4.0).abs() < 1e-14);
        assert_eq!(interp_linear(&a, &b, 0.0).unwrap(), a);
        let abs = GridFunction::from_fn(&l, |x| x[0].abs()).unwrap();
        assert_eq!(interp_linear(&abs, &a, 0.5).unwrap().value(60), 2.0);
        let mut v = a.values().to_vec();
        v[3] = f64::INFINITY;
        let c = a.with_values(v).unwrap();
        assert_eq!(interp_linear(&c, &b, 0.5).unwrap().value(3), f64::INFINITY);
    }

    #[test]
    fn inf_convolution_below_affine() {
        let l = Lattice::line(-3.0, 3.0, 61).unwrap();
        let f = sample(&FamilySpec::EvenPoly { coeffs: vec![0.0, 0.3, 0.1] }, &l).unwrap();
        let g = sample(
            &FamilySpec::Translated { base: Box::new(FamilySpec::quadratic(2.0)), offset: [0.5, 0.0] },
            &l,
        )
        .unwrap();
        for t in [0.1, 0.25, 0.5, 0.8] {
            let one = interp_one(&f, &g, t).unwrap();
            let lin = interp_linear(&f, &g, t).unwrap();
            for (a, b) in one.values().iter().zip(lin.values()) {
                assert!(*a <= *b + 1e-13 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn exponential_family_is_two_interpolation() {
        let l = Lattice::line(-3.0, 3.0, 121).unwrap();
        let field = SpaceTimeField::from_fn(&l, 0.0, 1.0, 65, |t, x| t.exp() * x[0] * x[0] / 2.0).unwrap();
        let r = residual_p(&field, 2.0).unwrap();
        let dt = field.dt();
        for p in &r.points {
            // F_tt carries a factor 1 + Δt²/12 and ∂ₜF a factor 1 + Δt²/6, so
            // the residual is −Δt²/4 · eᵗx²/2 to leading order.
            assert!(p.residual.abs() <= dt * dt / 4.0 * p.t.exp() * p.x[0] * p.x[0] / 2.0 * 1.01 + 1e-9);
        }
    }

    #[test]
    fn affine_lambda_residual() {
        let l = Lattice::line(-3.0, 3.0, 61).unwrap();
        let field = SpaceTimeField::from_fn(&l, 0.0, 1.0, 33, |t, x| (1.0 + 3.0 * t) * x[0] * x[0] / 2.0).unwrap();
        let r = residual_p(&field, 2.0).unwrap();
        for p in &r.points {
            let lambda = 1.0 + 3.0 * p.t;
            let expect = -0.5 * 9.0 * p.x[0] * p.x[0] / lambda;
            assert!((p.residual - expect).abs() < 1e-8 * (1.0 + expect.abs()));
            if p.x[0] != 0.0 {
                assert!(p.residual < 0.0);
            }
        }
    }

    #[test]
    fn jointly_convex_quadratic_has_nonnegative_det() {
        let l = Lattice::square(-2.0, 2.0, 21).unwrap();
        // (t, x, y) ↦ ½ vᵀ M v with M positive-definite.
        let m = [[2.0, 0.5, -0.3], [0.5, 1.5, 0.2], [-0.3, 0.2, 1.0]];
        let field = SpaceTimeField::from_fn(&l, 0.0, 1.0, 9, |t, x| {
            let v = [t, x[0], x[1]];
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    s += 0.5 * m[a][b] * v[a] * v[b];
                }
            }
            s
        })
        .unwrap();
        let r = residual_p(&field, 1.0).unwrap();
        assert!(r.points.iter().all(|p| p.det_hp > 0.0 && p.min_eig_hp > 0.0));
    }

    #[test]
    fn subfamily_verdicts() {
        let l = Lattice::line(-4.0, 4.0, 65).unwrap();
        let geo = SpaceTimeField::from_fn(&l, 0.0, 1.0, 33, |t, x| 4f64.powf(t) * x[0] * x[0] / 2.0).unwrap();
        let at2 = subfamily_check(&geo, 2.0, None).unwrap();
        assert!(at2.pass, "{at2:?}");
        assert!(at2.margin.abs() < at2.tol);
        let at1 = subfamily_check(&geo, 1.0, None).unwrap();
        assert!(!at1.pass, "{at1:?}");
        // Harmonic mean of the curvatures solves the p = 1 equation.
        let harm = SpaceTimeField::from_fn(&l, 0.0, 1.0, 33, |t, x| x[0] * x[0] / 2.0 / (1.0 - t + t / 4.0)).unwrap();
        let r = subfamily_check(&harm, 1.0, None).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn dual_of_quadratic_family() {
        let l = Lattice::line(-4.0, 4.0, 801).unwrap();
        let field = SpaceTimeField::from_fn(&l, 0.0, 1.0, 5, |t, x| (1.0 + t) * x[0] * x[0] / 2.0).unwrap();
        let dual = dual_family_with(&field, 0.25).unwrap();
        for (i, layer) in dual.layers().iter().enumerate() {
            let lambda = 1.0 + field.time(i);
            for (k, &v) in layer.values().iter().enumerate() {
                let y = layer.lattice().point(k)[0];
                if v.is_finite() {
                    assert!((v - y * y / (2.0 * lambda)).abs() < 1e-4, "t {} y {y}", field.time(i));
                }
            }
        }
    }

    #[test]
    fn interp_one_field_is_affine_in_dual() {
        let l = Lattice::line(-3.0, 3.0, 121).unwrap();
        let f = interp_one_field(&quad(&l, 1.0), &quad(&l, 2.0), 9).unwrap();
        assert_eq!(f.layer(0), &quad(&l, 1.0));
        assert_eq!(f.layer(8), &quad(&l, 2.0));
        let g = dual_family(&f).unwrap();
        // G_t is affine in t: second time differences vanish up to envelope error.
        for i in 1..8 {
            for k in 0..g.lattice().len() {
                let y = g.lattice().point(k)[0];
                if y.abs() > 1.5 {
                    continue;
                }
                let d2 = g.layer(i + 1).value(k) - 2.0 * g.layer(i).value(k) + g.layer(i - 1).value(k);
                assert!(d2.abs() < l.h() * l.h(), "i {i} y {y} d2 {d2}");
            }
        }
    }
}
