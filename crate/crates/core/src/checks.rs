//! Inequality checkers. Each returns a [`CheckReport`] whose margin is signed
//! so that positive means slack.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{minkowski_combination, polygon_area, Body};
use crate::grid::{finite_diff, Axis, inverse_quadratic_form, sample, sym_eigenvalues, FamilySpec, GridFunction, Lattice};
use crate::interp::{interp_one_alpha, interp_one_field, residual_p, stencil_tolerance, SpaceTimeField, HESSIAN_FLOOR};
use crate::interp::dual_family_with;
use crate::legendre::{legendre_nd, DualLattice};
use crate::measures::{alpha_profile, compensated_sum, variance, weights_from_potential, AlphaProfile, TAIL_MASS_THRESHOLD};
use crate::pde::{solve_p_interpolation, SolverParams};
use crate::quadrature::CompositeRule;
use crate::{Error, Result};

/// Absolute tolerance for sign checks on `α″`.
pub const ALPHA_TOL: f64 = 1e-6;
/// Relative tolerance for quadrature-bound checks.
pub const QUADRATURE_TOL: f64 = 1e-3;
/// Brascamp–Lieb sign tolerance.
pub const BL_TOL: f64 = 1e-8;
/// Relative rounding allowance for exact-geometry volume comparisons.
pub const GEOMETRY_TOL: f64 = 1e-12;

/// Where the worst margin was observed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Location {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
}

impl Location {
    pub fn at_x(x: &[f64]) -> Self {
        Location { t: None, x: Some(x.to_vec()) }
    }

    pub fn at_t(t: f64) -> Self {
        Location { t: Some(t), x: None }
    }

    pub fn at(t: f64, x: &[f64]) -> Self {
        Location { t: Some(t), x: Some(x.to_vec()) }
    }
}

/// Named verdict. `pass` always equals `margin >= -tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
    pub tol: f64,
    pub location: Option<Location>,
    pub provenance: String,
    /// Set for reports that never count towards a verdict.
    #[serde(default)]
    pub exploratory: bool,
    #[serde(default)]
    pub notes: Vec<String>,
    /// Seed of the randomized run that produced the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, margin: f64, tol: f64, provenance: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            pass: margin >= -tol,
            margin,
            tol,
            location: None,
            provenance: provenance.into(),
            exploratory: false,
            notes: Vec::new(),
            seed: None,
        }
    }

    pub fn with_location(mut self, location: Location) -> Self {
        self.location = Some(location);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn exploratory(mut self) -> Self {
        self.exploratory = true;
        self.notes.push("exploratory".into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Recomputes `pass` after `margin` or `tol` were adjusted.
    pub fn settle(mut self) -> Self {
        self.pass = self.margin >= -self.tol;
        self
    }
}

fn x_of(lat: &Lattice, k: usize) -> Vec<f64> {
    lat.point(k)[..lat.dim()].to_vec()
}

/// Reports on the α″ sign and on route agreement for a given profile.
fn alpha_reports(name: &str, prof: &AlphaProfile, provenance: &str) -> Vec<CheckReport> {
    let (i_fd, fd) = prof.min_dd(false);
    let (i_int, int) = prof.min_dd(true);
    let (i, worst) = if fd <= int { (i_fd, fd) } else { (i_int, int) };
    let mut sign = CheckReport::new(name, worst, ALPHA_TOL, provenance)
        .with_location(Location::at_t(prof.times[i]))
        .note(format!("min alpha'' second difference = {fd:.6e}, integral route = {int:.6e}"));
    if prof.boundary_mass > TAIL_MASS_THRESHOLD {
        sign = sign.note(format!("boundary cells carry {:.3e} of the mass", prof.boundary_mass));
    }
    let d = prof.route_disagreement();
    let routes = CheckReport::new(format!("{name}-routes"), 1.0 - d, 0.0, provenance)
        .note(format!("route gap / (5 (dt^2 + h^2) scale) = {d:.6e}"));
    vec![sign, routes]
}

/// Convexity of `α(t) = −log ∫ e^{−F_t}` along the inf-convolution family of
/// `f0`, `f1`, and agreement of the two `α″` routes.
///
/// Both routes use the max-affine model of [`interp_one_alpha`], integrated
/// exactly; lattice sums of a family with kinks between the nodes are not
/// log-concave in `t` to the tolerance.
pub fn check_prekopa(f0: &GridFunction, f1: &GridFunction, layers: usize) -> Result<Vec<CheckReport>> {
    let field = interp_one_field(f0, f1, layers)?;
    let mut prof = alpha_profile(&field, None)?;
    let exact = interp_one_alpha(f0, f1, layers)?;
    let dt = prof.dt;
    for i in 1..layers - 1 {
        prof.alpha_dd_fd[i] = Some((exact.alpha[i + 1] - 2.0 * exact.alpha[i] + exact.alpha[i - 1]) / (dt * dt));
        if let Some(dd) = &exact.alpha_dd {
            prof.alpha_dd_int[i] = Some(dd[i].0);
            prof.route_scale[i] = Some(dd[i].1);
        }
    }
    prof.alpha = exact.alpha;
    Ok(alpha_reports("prekopa", &prof, "inf-convolution family"))
}

/// `|(1−t)K0 + tK1|`, `|K0|` and `|K1|`, by exact interval or polygon
/// arithmetic. Ellipsoids enter through their polygonal approximation, whose
/// own areas are then used for `|K0|`, `|K1|`.
pub fn combination_volume(k0: &Body, k1: &Body, t: f64) -> Result<(f64, f64, f64)> {
    k0.validate()?;
    k1.validate()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t must lie in [0, 1], got {t}")));
    }
    if k0.dim() != k1.dim() {
        return Err(Error::DimensionMismatch { expected: k0.dim(), got: k1.dim() });
    }
    match (k0, k1) {
        (Body::Interval { lo: a0, hi: b0 }, Body::Interval { lo: a1, hi: b1 }) => {
            let (l0, l1) = (b0 - a0, b1 - a1);
            Ok(((1.0 - t) * l0 + t * l1, l0, l1))
        }
        (Body::Box { lo: a0, hi: b0 }, Body::Box { lo: a1, hi: b1 }) => {
            let side = |k: usize| (1.0 - t) * (b0[k] - a0[k]) + t * (b1[k] - a1[k]);
            Ok((side(0) * side(1), k0.volume(), k1.volume()))
        }
        _ => {
            let (p0, p1) = (k0.to_polygon()?, k1.to_polygon()?);
            let pt = minkowski_combination(&p0, &p1, t);
            Ok((polygon_area(&pt).abs(), polygon_area(&p0).abs(), polygon_area(&p1).abs()))
        }
    }
}

/// `|K(t)| ≥ |K0|^{1−t}|K1|^t`, margin relative to the right-hand side.
pub fn check_brunn_minkowski(k0: &Body, k1: &Body, t: f64) -> Result<CheckReport> {
    let (vt, v0, v1) = combination_volume(k0, k1, t)?;
    let gm = v0.powf(1.0 - t) * v1.powf(t);
    Ok(CheckReport::new("brunn-minkowski", (vt - gm) / gm, GEOMETRY_TOL, "exact convex geometry")
        .note(format!("t = {t}, |K(t)| = {vt}, geometric mean = {gm}")))
}

/// `c_{n,p} = p^{n/p} Γ(1 + n/p)`.
pub fn gauge_constant(n: usize, p: f64) -> f64 {
    let r = n as f64 / p;
    p.powf(r) * statrs::function::gamma::gamma(1.0 + r)
}

/// Panels per unit of the scaled integration box for [`volume_via_gauge`].
const GAUGE_PANELS: usize = 160;

/// `∫ e^{−‖x‖_K^p / p} dx / c_{n,p}` by Cartesian composite Gauss–Legendre
/// quadrature over a box outside of which the integrand is below `e^{−32}`.
pub fn volume_via_gauge(body: &Body, p: f64) -> Result<f64> {
    body.validate()?;
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::InvalidParameter(format!("p must be positive, got {p}")));
    }
    if !body.contains_origin_interior() {
        return Err(Error::OriginOutside);
    }
    let n = body.dim();
    let reach = body.extent() * (32.0 * p).powf(1.0 / p);
    // Panels meet at the origin, where the gauge has its kink.
    let rules = [CompositeRule::new(-reach, 0.0, GAUGE_PANELS, 6), CompositeRule::new(0.0, reach, GAUGE_PANELS, 6)];
    let integrand = |x: &[f64]| (-body.gauge(x).powf(p) / p).exp();
    let integral = if n == 1 {
        rules.iter().map(|r| r.integrate(|x| integrand(&[x]))).sum::<f64>()
    } else {
        let nodes: Vec<(f64, f64)> = rules.iter().flat_map(|r| r.nodes.iter().copied().zip(r.weights.iter().copied())).collect();
        let rows: Vec<f64> = nodes
            .par_iter()
            .map(|&(y, wy)| wy * compensated_sum(nodes.iter().map(|&(x, wx)| wx * integrand(&[x, y]))))
            .collect();
        compensated_sum(rows)
    };
    Ok(integral / gauge_constant(n, p))
}

/// `Var_μ(u) ≤ ∫ (Hess F)⁻¹∇u·∇u dμ` for `μ ∝ e^{−F}`, margin = right minus
/// left. Points without a strongly convex central Hessian are dropped from
/// the right-hand side and their mass is reported.
pub fn check_brascamp_lieb(f: &GridFunction, u: &GridFunction) -> Result<CheckReport> {
    if f.lattice() != u.lattice() {
        return Err(Error::LatticeMismatch);
    }
    let mu = weights_from_potential(f, None)?;
    let var = variance(&mu, u.values())?;
    let (df, du) = (finite_diff(f), finite_diff(u));
    let dim = f.dim();
    let w = mu.weights();
    let mut excluded = 0.0;
    let mut terms = Vec::with_capacity(w.len());
    for k in (0..w.len()).filter(|&k| w[k] > 0.0) {
        match (df.points[k], du.points[k]) {
            (Some(pf), Some(pu)) if sym_eigenvalues(&pf.hess, dim).0 >= HESSIAN_FLOOR => {
                terms.push(w[k] * inverse_quadratic_form(&pf.hess, &pu.grad, dim));
            }
            _ => excluded += w[k],
        }
    }
    let rhs = compensated_sum(terms);
    let mut r = CheckReport::new("brascamp-lieb", rhs - var, BL_TOL, "weighted Poincare inequality")
        .note(format!("variance = {var:.12e}, energy = {rhs:.12e}"));
    if excluded > TAIL_MASS_THRESHOLD {
        r = r.note(format!("points carrying {excluded:.3e} of the mass have no usable Hessian"));
    }
    Ok(r)
}

/// `(2π)ⁿ − ∫e^{−f} ∫e^{−𝓛f}` for even `f`; passes within
/// `10⁻³ (2π)ⁿ`.
pub fn check_santalo(f: &GridFunction) -> Result<CheckReport> {
    let scale = f.values().iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    f.require_even(1e-9 * (1.0 + scale))?;
    let lf = legendre_nd(f, &santalo_dual(f)?)?;
    let (a, b) = (weights_from_potential(f, None)?, weights_from_potential(&lf, None)?);
    let product = a.z() * b.z();
    let bound = (2.0 * std::f64::consts::PI).powi(f.dim() as i32);
    let mut r = CheckReport::new("santalo", bound - product, QUADRATURE_TOL * bound, "functional volume product")
        .note(format!("product = {product:.12e}"));
    for w in [a.tail_warning(), b.tail_warning()].into_iter().flatten() {
        r = r.note(w);
    }
    Ok(r)
}

/// Range of `𝓛f` above its minimum beyond which `e^{−𝓛f}` is dropped.
const DUAL_MASS_CUT: f64 = 40.0;

/// Dual lattice for integrating `e^{−𝓛f}`: the automatic window, cut to the
/// box where a first transform stays within [`DUAL_MASS_CUT`] of its minimum
/// (plus one cell), with twice the primal resolution.
fn santalo_dual(f: &GridFunction) -> Result<DualLattice> {
    let coarse = DualLattice::auto(f)?;
    let lf = legendre_nd(f, &coarse)?;
    let dl = &coarse.lattice;
    let low = lf.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut reach = vec![0.0f64; dl.dim()];
    for (k, &v) in lf.values().iter().enumerate() {
        if v <= low + DUAL_MASS_CUT {
            let y = dl.point(k);
            for (a, r) in reach.iter_mut().enumerate() {
                *r = r.max(y[a].abs());
            }
        }
    }
    let axes = dl
        .axes()
        .iter()
        .zip(f.lattice().axes())
        .zip(&reach)
        .map(|((d, a), &r)| {
            let cell = (d.hi - d.lo) / (d.n - 1) as f64;
            let r = (r + cell).min(d.hi.abs().max(d.lo.abs()));
            Axis::new((-r).max(d.lo), r.min(d.hi), 2 * a.n - 1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DualLattice::explicit(Lattice::new(axes)?))
}

/// The volume product `∫e^{−f} ∫e^{−𝓛f}` computed by [`check_santalo`].
pub fn santalo_product(f: &GridFunction) -> Result<f64> {
    let r = check_santalo(f)?;
    let bound = (2.0 * std::f64::consts::PI).powi(f.dim() as i32);
    Ok(bound - r.margin)
}

/// Derivative data of one time layer, as flat arrays with `+∞` where the
/// stencil is unavailable.
struct LayerTerms {
    ftt: Vec<f64>,
    grad: [Vec<f64>; 2],
    /// `∇∂ₜF`.
    grad_t: [Vec<f64>; 2],
    hess: [Vec<f64>; 3],
}

fn layer_terms(field: &SpaceTimeField, i: usize) -> LayerTerms {
    let lat = field.lattice();
    let dt = field.dt();
    let (a, b, c) = (field.layer(i - 1).values(), field.layer(i).values(), field.layer(i + 1).values());
    let n = lat.len();
    let nan = || vec![f64::INFINITY; n];
    let mut out = LayerTerms { ftt: nan(), grad: [nan(), nan()], grad_t: [nan(), nan()], hess: [nan(), nan(), nan()] };
    let ft: Vec<f64> = (0..n).map(|k| (c[k] - a[k]) / (2.0 * dt)).collect();
    let dft = GridFunction::new(lat.clone(), ft.into_iter().map(finite_or_inf).collect()).map(|f| finite_diff(&f)).ok();
    let db = finite_diff(field.layer(i));
    for k in 0..n {
        out.ftt[k] = finite_or_inf((c[k] - 2.0 * b[k] + a[k]) / (dt * dt));
        if let Some(d) = db.points[k] {
            out.grad[0][k] = d.grad[0];
            out.grad[1][k] = d.grad[1];
            out.hess[0][k] = d.hess[0][0];
            out.hess[1][k] = d.hess[0][1];
            out.hess[2][k] = d.hess[1][1];
        }
        if let Some(Some(d)) = dft.as_ref().map(|d| d.points[k]) {
            out.grad_t[0][k] = d.grad[0];
            out.grad_t[1][k] = d.grad[1];
        }
    }
    out
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn quadratic_term(hess: [f64; 3], g: [f64; 2], dim: usize) -> Option<f64> {
    let m = [[hess[0], hess[1]], [hess[1], hess[2]]];
    let ok = m.iter().flatten().take(if dim == 1 { 1 } else { 4 }).all(|v| v.is_finite())
        && g[..dim].iter().all(|v| v.is_finite())
        && sym_eigenvalues(&m, dim).0 >= HESSIAN_FLOOR;
    ok.then(|| inverse_quadratic_form(&m, &g, dim))
}

/// The duality identity `∂²ₜₜF(x) + ∂²ₜₜG(y) = (Hess F)⁻¹∇∂ₜF·∇∂ₜF` at
/// `y = ∇F(x)`, `G = 𝓛F`, together with the dual form of the right-hand
/// side, `(Hess G)⁻¹∇∂ₜG·∇∂ₜG` at `y`. Sampled over interior layers and the
/// central half-window; `G` terms are linearly interpolated on the dual
/// lattice, which should be coarser than the primal slope spacing `F″h`.
/// Passes within `10 (h + Δt²) (1 + sup|RHS|)`, `h` the primal spacing.
pub fn check_duality_identity(field: &SpaceTimeField, refine: f64) -> Result<CheckReport> {
    let dual = dual_family_with(field, refine)?;
    let lat = field.lattice();
    let dlat = dual.lattice();
    let dim = lat.dim();
    let m = field.layer_count();
    if m < 3 {
        return Err(Error::InvalidParameter("the identity needs at least three layers".into()));
    }
    let per_layer = (1..m - 1)
        .into_par_iter()
        .map(|i| {
            let tf = layer_terms(field, i);
            let tg = layer_terms(&dual, i);
            let gf = |v: &[f64]| GridFunction::new(dlat.clone(), v.to_vec());
            let g_tt = gf(&tg.ftt)?;
            let g_t = [gf(&tg.grad_t[0])?, gf(&tg.grad_t[1])?];
            let g_h = [gf(&tg.hess[0])?, gf(&tg.hess[1])?, gf(&tg.hess[2])?];
            let mut worst: (f64, f64, usize) = (0.0, 0.0, 0);
            let mut rhs_max = 0.0f64;
            let mut used = 0usize;
            for k in (0..lat.len()).filter(|&k| lat.in_window(k, 0.5)) {
                let g = [tf.grad[0][k], tf.grad[1][k]];
                let hess = [tf.hess[0][k], tf.hess[1][k], tf.hess[2][k]];
                let Some(q_f) = quadratic_term(hess, [tf.grad_t[0][k], tf.grad_t[1][k]], dim) else { continue };
                if !tf.ftt[k].is_finite() {
                    continue;
                }
                // Two cells inside the dual window so the interpolation
                // stencil has derivatives.
                let inside = (0..dim).all(|a| {
                    let ax = dlat.axis(a);
                    let s = 2.0 * ax.spacing();
                    g[a] >= ax.lo + s && g[a] <= ax.hi - s
                });
                if !inside {
                    continue;
                }
                let y = &g[..dim];
                let gtt = g_tt.interpolate(y);
                let q_g = quadratic_term(
                    [g_h[0].interpolate(y), g_h[1].interpolate(y), g_h[2].interpolate(y)],
                    [g_t[0].interpolate(y), if dim == 2 { g_t[1].interpolate(y) } else { 0.0 }],
                    dim,
                );
                let (Some(q_g), true) = (q_g, gtt.is_finite()) else { continue };
                used += 1;
                rhs_max = rhs_max.max(q_f.abs());
                let first = (tf.ftt[k] + gtt - q_f).abs();
                let second = (q_f - q_g).abs();
                if first.max(second) > worst.0.max(worst.1) {
                    worst = (first, second, k);
                }
            }
            Ok((i, worst, rhs_max, used))
        })
        .collect::<Result<Vec<_>>>()?;
    let used: usize = per_layer.iter().map(|r| r.3).sum();
    if used == 0 {
        return Err(Error::OutsideDualWindow(lat.point(0)));
    }
    let rhs_max = per_layer.iter().map(|r| r.2).fold(0.0, f64::max);
    let (i, (first, second, k)) = per_layer
        .iter()
        .map(|r| (r.0, r.1))
        .fold((0usize, (0.0f64, 0.0f64, 0usize)), |a, b| if b.1 .0.max(b.1 .1) > a.1 .0.max(a.1 .1) { b } else { a });
    let dt = field.dt();
    let tol = 10.0 * (lat.h() + dt * dt) * (1.0 + rhs_max);
    Ok(CheckReport::new("duality-identity", -first.max(second), tol, "dual family identity")
        .with_location(Location::at(field.time(i), &x_of(lat, k)))
        .note(format!("identity residual = {first:.6e}, dual-form residual = {second:.6e}, points = {used}")))
}

/// `½∫|∇u|² dγ − Var_γ(u)` for even `u` under the standard Gaussian `γ`.
pub fn check_gaussian_even_gap(u: &GridFunction) -> Result<CheckReport> {
    let scale = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    u.require_even(1e-9 * (1.0 + scale))?;
    let gauss = sample(&FamilySpec::quadratic(1.0), u.lattice())?;
    let mu = weights_from_potential(&gauss, None)?;
    let var = variance(&mu, u.values())?;
    let du = finite_diff(u);
    let w = mu.weights();
    let mut excluded = 0.0;
    let mut terms = Vec::with_capacity(w.len());
    for k in (0..w.len()).filter(|&k| w[k] > 0.0) {
        match du.points[k] {
            Some(d) => terms.push(0.5 * w[k] * (d.grad[0] * d.grad[0] + d.grad[1] * d.grad[1])),
            None => excluded += w[k],
        }
    }
    let energy = compensated_sum(terms);
    let mut r = CheckReport::new("gaussian-even-gap", energy - var, 1e-6 * (1.0 + var), "even Gaussian spectral gap")
        .note(format!("variance = {var:.12e}, half energy = {energy:.12e}"));
    if excluded > TAIL_MASS_THRESHOLD {
        r = r.note(format!("boundary points carry {excluded:.3e} of the mass"));
    }
    Ok(r)
}

/// The family `e^t|x|²/2` on `t ∈ [−1, 1]`.
pub fn b_family(lattice: &Lattice, layers: usize) -> Result<SpaceTimeField> {
    SpaceTimeField::from_fn(lattice, -1.0, 1.0, layers, |t, x| 0.5 * t.exp() * (x[0] * x[0] + x[1] * x[1]))
}

/// Convexity of `α_ν(t) = −log ∫ e^{−e^t|x|²/2} dν` for `ν = e^{−W}dx`, plus
/// a certificate that the family solves the `p = 2` equation.
pub fn check_b_family(w: &GridFunction, layers: usize) -> Result<Vec<CheckReport>> {
    let field = b_family(w.lattice(), layers)?;
    let prof = alpha_profile(&field, Some(w))?;
    let mut out = alpha_reports("b-family", &prof, "dilation family against an even log-concave measure");
    let res = residual_p(&field, 2.0)?;
    let worst = res.sup_abs_residual().ok_or(Error::EmptySupport)?;
    let tol = stencil_tolerance(&field, 2.0, |p| p.residual)?;
    out.push(
        CheckReport::new("b-family-residual", -worst.residual.abs(), tol, "dilation family at p = 2")
            .with_location(Location::at(worst.t, &worst.x[..w.dim()])),
    );
    Ok(out)
}

/// Solves the `p = 2` family between `λᵢ‖x‖²_{Kᵢ}/2 + ε|x|²/2` and reports
/// the smallest `α″`. Exploratory: the report never counts towards a
/// verdict. `ε > 0` keeps the data strongly convex for the solver.
pub fn explore_conjecture(
    k0: &Body,
    k1: &Body,
    lambdas: (f64, f64),
    epsilon: f64,
    lattice: &Lattice,
    params: &SolverParams,
) -> Result<CheckReport> {
    for k in [k0, k1] {
        if !k.is_symmetric() {
            return Err(Error::InvalidBody("the exploration needs centrally symmetric bodies".into()));
        }
    }
    let datum = |k: &Body, l: f64| {
        GridFunction::from_fn(lattice, |p| {
            let x = &p[..lattice.dim()];
            let r2: f64 = x.iter().map(|v| v * v).sum();
            0.5 * l * k.gauge(x).powi(2) + 0.5 * epsilon * r2
        })
    };
    let (f0, f1) = (datum(k0, lambdas.0)?, datum(k1, lambdas.1)?);
    let (field, report) = solve_p_interpolation(&f0, &f1, 2.0, params)?;
    let prof = alpha_profile(&field, None)?;
    let (i, worst) = prof.min_dd(false);
    let mut r = CheckReport::new("explore-conjecture", worst, ALPHA_TOL, "solved 2-family of gauge data")
        .with_location(Location::at_t(prof.times[i]))
        .note(format!("solver converged = {}, sweeps = {}, final residual = {:.6e}", report.converged, report.sweeps, report.final_residual))
        .exploratory();
    if !report.converged {
        r = r.note("field not certified: solver did not converge");
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FamilySpec;
    use std::f64::consts::PI;

    fn line(l: f64, n: usize) -> Lattice {
        Lattice::line(-l, l, n).unwrap()
    }

    fn quad(lat: &Lattice, lambda: f64) -> GridFunction {
        sample(&FamilySpec::quadratic(lambda), lat).unwrap()
    }

    #[test]
    fn prekopa_on_quadratics_matches_harmonic_mean() {
        let lat = line(10.0, 801);
        let field = interp_one_field(&quad(&lat, 1.0), &quad(&lat, 4.0), 17).unwrap();
        let prof = alpha_profile(&field, None).unwrap();
        for (i, &t) in prof.times.iter().enumerate() {
            let lambda = 1.0 / ((1.0 - t) + t / 4.0);
            let alpha = 0.5 * lambda.ln() - 0.5 * (2.0 * PI).ln();
            // Discrete inf-convolution error is O(h²) per layer.
            assert!((prof.alpha[i] - alpha).abs() < 5e-4, "t = {t}: {} vs {alpha}", prof.alpha[i]);
        }
        let r = check_prekopa(&quad(&lat, 1.0), &quad(&lat, 4.0), 17).unwrap();
        assert!(r.iter().all(|r| r.pass), "{r:?}");
        assert!(r[0].margin > 0.01);
    }

    #[test]
    fn prekopa_equal_data_is_flat() {
        let lat = line(8.0, 321);
        let f = sample(&FamilySpec::EvenPoly { coeffs: vec![0.0, 0.5, 0.1] }, &lat).unwrap();
        let r = check_prekopa(&f, &f, 9).unwrap();
        assert!(r[0].pass && r[0].margin.abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn prekopa_is_translation_invariant() {
        let lat = line(10.0, 401);
        let shift = |c: f64, l: f64| {
            let spec = FamilySpec::Translated { base: Box::new(FamilySpec::quadratic(l)), offset: [c, 0.0] };
            sample(&spec, &lat).unwrap()
        };
        let a = check_prekopa(&shift(0.0, 1.0), &shift(0.0, 3.0), 9).unwrap();
        let b = check_prekopa(&shift(0.5, 1.0), &shift(0.5, 3.0), 9).unwrap();
        assert!((a[0].margin - b[0].margin).abs() < 1e-3 * a[0].margin.abs());
    }

    #[test]
    fn brunn_minkowski_examples() {
        let k0 = Body::Interval { lo: -1.0, hi: 1.0 };
        let k1 = Body::Interval { lo: -3.0, hi: 3.0 };
        let (v, _, _) = combination_volume(&k0, &k1, 0.5).unwrap();
        assert_eq!(v, 4.0);
        let r = check_brunn_minkowski(&k0, &k1, 0.5).unwrap();
        assert_eq!(r.margin, (4.0 - 12f64.sqrt()) / 12f64.sqrt());
        let same = check_brunn_minkowski(&Body::disc(1.0), &Body::disc(1.0), 0.3).unwrap();
        assert!(same.pass && same.margin.abs() < 1e-12);
        let sd = check_brunn_minkowski(&Body::square(1.0), &Body::disc(1.0), 0.5).unwrap();
        assert!(sd.pass && sd.margin > 1e-3, "{sd:?}");
        let boxes = check_brunn_minkowski(&Body::square(1.0), &Body::Box { lo: [0.0, 0.0], hi: [4.0, 1.0] }, 0.25).unwrap();
        assert!(boxes.pass);
        assert!(check_brunn_minkowski(&k0, &Body::disc(1.0), 0.5).is_err());
        assert!(check_brunn_minkowski(&k0, &k1, 1.5).is_err());
    }

    #[test]
    fn brunn_minkowski_translation_invariant() {
        let p = Body::regular_polygon(5, 1.0, 0.1);
        let q = Body::L1Ball { scale: 2.0 };
        let moved = match &p {
            Body::Polygon { vertices } => Body::Polygon { vertices: vertices.iter().map(|v| [v[0] + 3.0, v[1] - 1.0]).collect() },
            _ => unreachable!(),
        };
        let a = check_brunn_minkowski(&p, &q, 0.4).unwrap();
        let b = check_brunn_minkowski(&moved, &q, 0.4).unwrap();
        assert!((a.margin - b.margin).abs() < 1e-12);
    }

    #[test]
    fn gauge_constant_matches_radial_integral() {
        for n in [1usize, 2] {
            for p in [0.5f64, 1.0, 2.0, 4.0] {
                // r = s², smooth at the origin for every p here.
                let reach = (40.0 * p).powf(0.5 / p);
                let radial = CompositeRule::new(0.0, reach, 2000, 8)
                    .integrate(|s| 2.0 * s.powi(2 * n as i32 - 1) * (-s.powf(2.0 * p) / p).exp());
                let c = gauge_constant(n, p);
                assert!((c - n as f64 * radial).abs() < 1e-9 * c, "n {n} p {p}");
            }
        }
        assert!((gauge_constant(1, 2.0) - (PI / 2.0).sqrt()).abs() < 1e-14);
        assert!((gauge_constant(2, 2.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn volume_via_gauge_examples() {
        let iv = Body::Interval { lo: -1.0, hi: 1.0 };
        assert!((volume_via_gauge(&iv, 2.0).unwrap() - 2.0).abs() < 1e-9);
        assert!((volume_via_gauge(&Body::disc(1.0), 2.0).unwrap() - PI).abs() < 1e-3);
        let sq = Body::square(1.0);
        let v1 = volume_via_gauge(&sq, 1.0).unwrap();
        assert!((v1 - 4.0).abs() < 4e-3, "{v1}");
        let v2 = volume_via_gauge(&sq.scaled(1.5), 1.0).unwrap();
        assert!((v2 / v1 - 2.25).abs() < 1e-3);
        let off = Body::Interval { lo: 0.5, hi: 1.0 };
        assert_eq!(volume_via_gauge(&off, 2.0), Err(Error::OriginOutside));
        assert!(volume_via_gauge(&iv, 0.0).is_err());
    }

    #[test]
    fn brascamp_lieb_hermite_modes() {
        let lat = line(12.0, 2401);
        let f = quad(&lat, 1.0);
        let hermite = [|x: f64| x, |x: f64| x * x - 1.0, |x: f64| x.powi(3) - 3.0 * x, |x: f64| x.powi(4) - 6.0 * x * x + 3.0];
        // Var He_k = k!, E (He_k')² = k·k!, so the margin is (k − 1)·k!.
        let fact = [1.0, 2.0, 6.0, 24.0];
        for (k, he) in hermite.iter().enumerate() {
            let u = GridFunction::from_fn(&lat, |p| he(p[0])).unwrap();
            let r = check_brascamp_lieb(&f, &u).unwrap();
            let expected = k as f64 * fact[k];
            assert!(r.pass);
            assert!((r.margin - expected).abs() < 1e-3 * (1.0 + expected), "mode {}: {}", k + 1, r.margin);
        }
        let c = GridFunction::from_fn(&lat, |_| 3.0).unwrap();
        let r = check_brascamp_lieb(&f, &c).unwrap();
        assert!(r.margin.abs() < 1e-14);
    }

    #[test]
    fn brascamp_lieb_linear_equality_is_sharp() {
        let lat = line(12.0, 1201);
        let u = GridFunction::from_fn(&lat, |p| p[0]).unwrap();
        let r = check_brascamp_lieb(&quad(&lat, 1.0), &u).unwrap();
        assert!(r.margin.abs() < 1e-8, "{}", r.margin);
    }

    #[test]
    fn gaussian_even_gap_examples() {
        let lat = line(12.0, 4801);
        let u2 = GridFunction::from_fn(&lat, |p| p[0] * p[0]).unwrap();
        let r = check_gaussian_even_gap(&u2).unwrap();
        assert!(r.pass && r.margin.abs() < 1e-8, "{}", r.margin);
        let u4 = GridFunction::from_fn(&lat, |p| p[0].powi(4)).unwrap();
        let r = check_gaussian_even_gap(&u4).unwrap();
        assert!((r.margin - 24.0).abs() < 0.01, "{}", r.margin);
        let c = GridFunction::from_fn(&lat, |_| 1.0).unwrap();
        assert_eq!(check_gaussian_even_gap(&c).unwrap().margin, 0.0);
        let odd = GridFunction::from_fn(&lat, |p| p[0]).unwrap();
        assert!(matches!(check_gaussian_even_gap(&odd), Err(Error::EvennessViolation { .. })));
    }

    #[test]
    fn santalo_examples() {
        let lat = line(12.0, 1201);
        let g = check_santalo(&quad(&lat, 1.0)).unwrap();
        assert!(g.pass && g.margin.abs() < 1e-3 * 2.0 * PI, "{g:?}");
        let abs = GridFunction::from_fn(&line(40.0, 4001), |p| p[0].abs()).unwrap();
        let product = santalo_product(&abs).unwrap();
        assert!((product - 4.0).abs() < 1e-3, "{product}");
        let shifted = sample(&FamilySpec::Translated { base: Box::new(FamilySpec::quadratic(1.0)), offset: [1.0, 0.0] }, &lat).unwrap();
        assert!(matches!(check_santalo(&shifted), Err(Error::EvennessViolation { .. })));
    }

    #[test]
    fn santalo_of_dual_matches() {
        let lat = line(6.0, 1201);
        let f = sample(&FamilySpec::EvenPoly { coeffs: vec![0.0, 0.5, 0.05] }, &lat).unwrap();
        let dual = DualLattice::auto(&f).unwrap();
        let lf = legendre_nd(&f, &dual).unwrap();
        let (a, b) = (santalo_product(&f).unwrap(), santalo_product(&lf).unwrap());
        assert!(a < 2.0 * PI);
        assert!((a - b).abs() < 2e-3 * a, "{a} vs {b}");
    }

    #[test]
    fn santalo_in_the_plane() {
        let lat = Lattice::square(-7.0, 7.0, 281).unwrap();
        let g = check_santalo(&quad(&lat, 2.0)).unwrap();
        assert!(g.pass && g.margin.abs() < 4e-3 * 4.0 * PI * PI, "{g:?}");
    }

    #[test]
    fn duality_identity_quadratic_and_quartic() {
        let lat = line(3.0, 601);
        let q = SpaceTimeField::from_fn(&lat, 0.0, 1.0, 21, |t, x| 0.5 * (1.0 + t) * x[0] * x[0]).unwrap();
        let r = check_duality_identity(&q, 0.25).unwrap();
        assert!(r.pass, "{r:?}");
        let quartic = SpaceTimeField::from_fn(&lat, 0.0, 1.0, 21, |t, x| 0.25 * (1.0 + t) * x[0].powi(4)).unwrap();
        let r = check_duality_identity(&quartic, 0.25).unwrap();
        assert!(r.pass, "{r:?}");
        let flat = SpaceTimeField::from_fn(&lat, 0.0, 1.0, 9, |_, x| 0.5 * x[0] * x[0]).unwrap();
        let r = check_duality_identity(&flat, 0.25).unwrap();
        assert!(r.margin.abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn duality_identity_residual_shrinks_under_refinement() {
        let run = |n: usize, m: usize| {
            let lat = line(3.0, n);
            let f = SpaceTimeField::from_fn(&lat, 0.0, 1.0, m, |t, x| 0.25 * (1.0 + t) * x[0].powi(4)).unwrap();
            check_duality_identity(&f, 0.25).unwrap().margin.abs()
        };
        let (coarse, fine) = (run(151, 11), run(601, 21));
        assert!(fine < 0.5 * coarse, "{coarse} -> {fine}");
    }

    #[test]
    fn b_family_gaussian_closed_form() {
        let lat = line(10.0, 801);
        let w = quad(&lat, 1.0);
        let field = b_family(&lat, 41).unwrap();
        let prof = alpha_profile(&field, Some(&w)).unwrap();
        for i in 1..40 {
            let t = prof.times[i];
            let exact = t.exp() / (2.0 * (1.0 + t.exp()).powi(2));
            assert!((prof.alpha_dd_fd[i].unwrap() - exact).abs() < 1e-3, "t = {t}");
        }
        let r = check_b_family(&w, 41).unwrap();
        assert!(r.iter().all(|r| r.pass), "{r:?}");
        let abs = GridFunction::from_fn(&lat, |p| p[0].abs()).unwrap();
        let r = check_b_family(&abs, 41).unwrap();
        assert!(r.iter().all(|r| r.pass), "{r:?}");
    }

    #[test]
    fn explore_conjecture_equal_discs_is_flat() {
        let lat = Lattice::square(-4.0, 4.0, 33).unwrap();
        let params = SolverParams { layers: 9, ..Default::default() };
        let r = explore_conjecture(&Body::disc(1.0), &Body::disc(1.0), (1.0, 1.0), 0.0, &lat, &params).unwrap();
        assert!(r.exploratory && r.margin.abs() < 1e-9, "{r:?}");
        assert!(explore_conjecture(&Body::Interval { lo: -1.0, hi: 2.0 }, &Body::disc(1.0), (1.0, 1.0), 0.1, &lat, &params).is_err());
    }

    #[test]
    fn reports_serialize_with_schema_fields() {
        let r = CheckReport::new("x", -1.0, 0.5, "p").with_location(Location::at_t(0.5));
        assert!(!r.pass);
        let v = serde_json::to_value(&r).unwrap();
        for key in ["name", "pass", "margin", "tol", "location", "provenance"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
