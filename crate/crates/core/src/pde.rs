//! Dirichlet solver for p-interpolation families on `[0, 1] × lattice`.
//!
//! Boundary layers are the data. Interior layers start from the
//! inf-convolution family (or, when one of its layers is not strongly convex,
//! which happens where the box truncation bites, from the affine combination)
//! and are relaxed by damped Jacobi sweeps
//!
//! ```text
//! Fᵢ ← (1−ω) Fᵢ + ω [ (Fᵢ₋₁ + Fᵢ₊₁)/2 − Δt² Q(Fᵢ) / (2p) ]
//! ```
//!
//! with `Q = (Hess F)⁻¹ ∇∂ₜF · ∇∂ₜF` evaluated on the current iterate. The
//! bracket is the point where the residual vanishes when `Q` is frozen; the
//! step towards it is scaled by `(2/Δt²) / D` with `D` the diagonal of the
//! linearized operator, which adds `(2/p) Σₐ (H⁻¹∇∂ₜF)ₐ² / hₐ²` to `2/Δt²`.
//! Without that term the sweep is unstable once `|H⁻¹∇∂ₜF| Δt / h` exceeds
//! about one.
//!
//! For `p > 1` the linearized operator is elliptic in `(t, x)`, so the box
//! needs a condition on its space boundary as well. The outermost values are
//! extrapolated with vanishing third difference, which is exact for
//! quadratic growth. Every `K` sweeps the interior
//! layers are replaced by their convex envelopes (in two dimensions only
//! layers that have lost discrete convexity). A sweep that would leave a
//! layer below the Hessian floor is retried with half the step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::{CheckReport, Location};
use crate::grid::{central_at, inverse_quadratic_form, sym_eigenvalues, GridFunction, Lattice};
use crate::interp::{interp_linear, interp_linear_field, interp_one_field, residual_p, stencil_tolerance, SpaceTimeField, HESSIAN_FLOOR};
use crate::legendre::convex_envelope;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Number of time layers including both boundary layers.
    pub layers: usize,
    pub max_sweeps: usize,
    /// Stop once the sup of the discrete residual falls below this.
    pub tol: f64,
    /// Convex-envelope projection period `K`.
    pub project_every: usize,
    /// Damping `ω ∈ (0, 1]`.
    pub damping: f64,
    pub hessian_floor: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { layers: 33, max_sweeps: 100_000, tol: 1e-7, project_every: 50, damping: 0.8, hessian_floor: HESSIAN_FLOOR }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Err(Error::Config { field: field.into(), message });
        if self.layers < 3 {
            return bad("layers", format!("need at least 3 layers, got {}", self.layers));
        }
        if !(self.tol > 0.0) {
            return bad("tol", format!("must be positive, got {}", self.tol));
        }
        if self.project_every == 0 {
            return bad("project_every", "must be at least 1".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping", format!("must lie in (0, 1], got {}", self.damping));
        }
        if !(self.hessian_floor > 0.0) {
            return bad("hessian_floor", format!("must be positive, got {}", self.hessian_floor));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub p: f64,
    pub final_residual: f64,
    pub sweeps: usize,
    /// Sup of the discrete residual at each sweep.
    pub residual_history: Vec<f64>,
    /// Sup correction of the envelope projection at each sweep (zero when
    /// no projection happened).
    pub projection_history: Vec<f64>,
    pub converged: bool,
    /// False when the residual increased after the first projection.
    pub monotone: bool,
    /// How the family was produced.
    pub method: String,
}

impl SolveReport {
    /// Residual history as CSV with columns `sweep, residual, projection`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("sweep,residual,projection\n");
        for (k, (r, c)) in self.residual_history.iter().zip(&self.projection_history).enumerate() {
            out.push_str(&format!("{k},{},{}\n", crate::report::round_sig(*r), crate::report::round_sig(*c)));
        }
        out
    }
}

fn closed_form_report(p: f64, method: &str) -> SolveReport {
    SolveReport {
        p,
        final_residual: 0.0,
        sweeps: 0,
        residual_history: Vec::new(),
        projection_history: Vec::new(),
        converged: true,
        monotone: true,
        method: method.into(),
    }
}

fn even_pair(f0: &GridFunction, f1: &GridFunction) -> bool {
    let lat = f0.lattice();
    if !lat.is_symmetric() {
        return false;
    }
    [f0, f1].iter().all(|f| {
        let scale = f.values().iter().filter(|v| v.is_finite()).fold(1.0f64, |m, v| m.max(v.abs()));
        matches!(f.evenness_defect(), Ok((_, gap)) if gap <= 1e-10 * scale)
    })
}

fn symmetrize(values: &mut [f64], lat: &Lattice) {
    for idx in 0..values.len() {
        let m = lat.mirror(idx);
        if m > idx {
            let avg = 0.5 * (values[idx] + values[m]);
            values[idx] = avg;
            values[m] = avg;
        }
    }
}

/// The p-interpolation family with boundary layers `f0`, `f1`. `p = 1` and
/// `p = ∞` are closed forms; other `p ≥ 1` are solved.
pub fn solve_p_interpolation(f0: &GridFunction, f1: &GridFunction, p: f64, params: &SolverParams) -> Result<(SpaceTimeField, SolveReport)> {
    params.validate()?;
    if f0.lattice() != f1.lattice() {
        return Err(Error::LatticeMismatch);
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("the solver needs p >= 1, got {p}")));
    }
    if p == f64::INFINITY {
        return Ok((interp_linear_field(f0, f1, params.layers)?, closed_form_report(p, "affine")));
    }
    let start = interp_one_field(f0, f1, params.layers)?;
    if p == 1.0 {
        return Ok((start, closed_form_report(p, "inf-convolution")));
    }
    let lat = f0.lattice().clone();
    let m = params.layers;
    let dt = start.dt();
    let even = even_pair(f0, f1);
    if lat.axes().iter().any(|a| a.n < 5) {
        return Err(Error::InvalidParameter("the solver needs at least 5 points per axis".into()));
    }
    let mut layers: Vec<Vec<f64>> = start.layers().iter().map(|l| l.values().to_vec()).collect();
    let mut affine_start = false;
    for layer in &mut layers[1..m - 1] {
        extrapolate_edges(&lat, layer);
        affine_start |= !strongly_convex(&GridFunction::new(lat.clone(), layer.clone())?, params.hessian_floor);
    }
    // Mixing the two starts leaves a kink in t, so one failing layer switches all.
    if affine_start {
        for i in 1..m - 1 {
            let mut a = interp_linear(f0, f1, start.time(i))?.into_values();
            extrapolate_edges(&lat, &mut a);
            layers[i] = a;
        }
    }
    if layers.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("the solver needs finite boundary data".into()));
    }
    let mut residual_history = Vec::new();
    let mut projection_history = Vec::new();
    let mut converged = false;
    let omega = params.damping;
    let ctx = SweepContext { lat: &lat, dt, p, floor: params.hessian_floor };
    let apply = |base: &[Vec<f64>], steps: &[Vec<f64>], scale: f64| -> Vec<Vec<f64>> {
        let mut next = base.to_vec();
        for (i, step) in steps.iter().enumerate() {
            let l = &mut next[i + 1];
            for (v, d) in l.iter_mut().zip(step) {
                *v += scale * d;
            }
            extrapolate_edges(&lat, l);
            if even {
                symmetrize(l, &lat);
            }
        }
        next
    };
    // Last accepted iterate, its step and the step scale used.
    let mut last: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> = None;
    let mut sweep = 0;
    while sweep < params.max_sweeps {
        let (mut steps, mut residual) = match sweep_steps(&ctx, &layers) {
            Ok(v) => v,
            Err(e @ Error::LostConvexity { .. }) => match last.as_mut() {
                // Back off along the previous step.
                Some((base, steps, scale)) if *scale > MIN_STEP_SCALE => {
                    *scale *= 0.5;
                    layers = apply(base, steps, *scale);
                    continue;
                }
                _ => return Err(e),
            },
            Err(e) => return Err(e),
        };
        sweep += 1;
        // The layers were just certified strongly convex, so the projection
        // only removes rounding-level defects.
        let mut correction = 0.0f64;
        if sweep % params.project_every == 0 {
            correction = project(&lat, &mut layers)?;
            if correction > 0.0 {
                (steps, residual) = sweep_steps(&ctx, &layers)?;
            }
        }
        residual_history.push(residual);
        projection_history.push(correction);
        if residual <= params.tol {
            converged = true;
            break;
        }
        let base = std::mem::take(&mut layers);
        layers = apply(&base, &steps, omega);
        last = Some((base, steps, omega));
    }

    let first_projection = params.project_every.min(residual_history.len());
    let monotone = residual_history[first_projection.saturating_sub(1)..]
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + f64::MIN_POSITIVE);
    let final_residual = *residual_history.last().unwrap_or(&0.0);
    let sweeps = residual_history.len();
    let mut out = Vec::with_capacity(m);
    out.push(f0.clone());
    for v in &layers[1..m - 1] {
        out.push(GridFunction::new(lat.clone(), v.clone())?);
    }
    out.push(f1.clone());
    let field = SpaceTimeField::new(0.0, 1.0, out)?;
    let report = SolveReport {
        p,
        final_residual,
        sweeps,
        residual_history,
        projection_history,
        converged,
        monotone,
        method: if affine_start { "jacobi (affine start)".into() } else { "jacobi".into() },
    };
    Ok((field, report))
}

/// Replaces interior layers by their convex envelopes (in two dimensions only
/// layers that are not discretely convex); returns the sup correction.
fn project(lat: &Lattice, layers: &mut [Vec<f64>]) -> Result<f64> {
    let m = layers.len();
    let projected = (1..m - 1)
        .into_par_iter()
        .map(|i| {
            let g = GridFunction::new(lat.clone(), layers[i].clone())?;
            if lat.dim() == 2 && discretely_convex(&g) {
                return Ok(None);
            }
            Ok(Some(convex_envelope(&g)?.into_values()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut correction = 0.0f64;
    for (i, env) in projected.into_iter().enumerate() {
        if let Some(mut env) = env {
            extrapolate_edges(lat, &mut env);
            let c = env.iter().zip(&layers[i + 1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            correction = correction.max(c);
            layers[i + 1] = env;
        }
    }
    Ok(correction)
}

/// Smallest fraction of a step tried before giving up on convexity.
const MIN_STEP_SCALE: f64 = 1e-6;

struct SweepContext<'a> {
    lat: &'a Lattice,
    dt: f64,
    p: f64,
    floor: f64,
}

/// Newton–Jacobi steps `r / D` for every interior layer, and the sup of the
/// residual.
fn sweep_steps(ctx: &SweepContext, layers: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64)> {
    let m = layers.len();
    let per_layer = |i: usize| layer_step(ctx, i, &layers[i - 1], &layers[i], &layers[i + 1]);
    let out: Vec<(Vec<f64>, f64)> = if ctx.lat.len() >= 2048 {
        (1..m - 1).into_par_iter().map(per_layer).collect::<Result<_>>()?
    } else {
        (1..m - 1).map(per_layer).collect::<Result<_>>()?
    };
    let residual = out.iter().map(|o| o.1).fold(0.0, f64::max);
    Ok((out.into_iter().map(|o| o.0).collect(), residual))
}

fn layer_step(ctx: &SweepContext, i: usize, prev: &[f64], cur: &[f64], next: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (lat, dt, p) = (ctx.lat, ctx.dt, ctx.p);
    let dim = lat.dim();
    let h = lat.spacing();
    let inv_dt2 = 1.0 / (dt * dt);
    let mut step = vec![0.0; cur.len()];
    let mut worst = 0.0f64;
    let lost = |k: usize, min_eig: f64| Error::LostConvexity { layer: i, x: lat.point(k), min_eig };
    if dim == 1 {
        let (ih2, i2h) = (1.0 / (h[0] * h[0]), 0.5 / h[0]);
        let ft = |k: usize| (next[k] - prev[k]) * 0.5 / dt;
        for k in 1..cur.len() - 1 {
            let hess = (cur[k + 1] - 2.0 * cur[k] + cur[k - 1]) * ih2;
            if !(hess >= ctx.floor) {
                return Err(lost(k, hess));
            }
            let g = (ft(k + 1) - ft(k - 1)) * i2h;
            let v = g / hess;
            let r = (next[k] - 2.0 * cur[k] + prev[k]) * inv_dt2 - g * v / p;
            worst = worst.max(r.abs());
            step[k] = r / (2.0 * inv_dt2 + 2.0 / p * v * v * ih2);
        }
        return Ok((step, worst));
    }
    let ft: Vec<f64> = next.iter().zip(prev).map(|(a, b)| (a - b) * 0.5 / dt).collect();
    for k in (0..cur.len()).filter(|&k| lat.is_interior(k)) {
        let hess = central_at(lat, cur, k).hess;
        let min_eig = sym_eigenvalues(&hess, dim).0;
        if !(min_eig >= ctx.floor) {
            return Err(lost(k, min_eig));
        }
        let g = central_at(lat, &ft, k).grad;
        let q = inverse_quadratic_form(&hess, &g, dim);
        let r = (next[k] - 2.0 * cur[k] + prev[k]) * inv_dt2 - q / p;
        worst = worst.max(r.abs());
        let v = solve2(&hess, &g, dim);
        let diag = 2.0 * inv_dt2 + (2.0 / p) * (v[0] * v[0] / (h[0] * h[0]) + v[1] * v[1] / (h[1] * h[1]));
        step[k] = r / diag;
    }
    Ok((step, worst))
}

/// Sets the outermost values on every axis so that the third difference
/// into the interior vanishes.
fn extrapolate_edges(lat: &Lattice, v: &mut [f64]) {
    let [n0, n1] = lat.shape();
    let rows = if lat.dim() == 2 { 1..n1 - 1 } else { 0..1 };
    for j in rows {
        let at = |i: usize| lat.index(i, j);
        v[at(0)] = 3.0 * v[at(1)] - 3.0 * v[at(2)] + v[at(3)];
        v[at(n0 - 1)] = 3.0 * v[at(n0 - 2)] - 3.0 * v[at(n0 - 3)] + v[at(n0 - 4)];
    }
    if lat.dim() == 2 {
        for i in 0..n0 {
            let at = |j: usize| lat.index(i, j);
            v[at(0)] = 3.0 * v[at(1)] - 3.0 * v[at(2)] + v[at(3)];
            v[at(n1 - 1)] = 3.0 * v[at(n1 - 2)] - 3.0 * v[at(n1 - 3)] + v[at(n1 - 4)];
        }
    }
}

/// `H⁻¹g` for the leading `dim × dim` block.
fn solve2(hess: &[[f64; 2]; 2], g: &[f64; 2], dim: usize) -> [f64; 2] {
    if dim == 1 {
        return [g[0] / hess[0][0], 0.0];
    }
    let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
    [(hess[1][1] * g[0] - hess[0][1] * g[1]) / det, (hess[0][0] * g[1] - hess[1][0] * g[0]) / det]
}

/// Every interior central Hessian is positive semidefinite.
pub fn discretely_convex(f: &GridFunction) -> bool {
    strongly_convex(f, 0.0)
}

/// Every interior central Hessian has smallest eigenvalue at least `floor`.
pub fn strongly_convex(f: &GridFunction, floor: f64) -> bool {
    let lat = f.lattice();
    (0..lat.len())
        .filter(|&i| lat.is_interior(i))
        .all(|i| sym_eigenvalues(&central_at(lat, f.values(), i).hess, lat.dim()).0 >= floor)
}

/// Certifies that `field` solves the p-interpolation equation: the sup of
/// `|det H_p| / det(p Hess F)` and the sup of `|residual|` over interior
/// points must both be within tolerance. The default tolerance is the
/// Richardson estimate of the residual's stencil error.
pub fn certify_family(field: &SpaceTimeField, p: f64, tol: Option<f64>) -> Result<CheckReport> {
    let res = residual_p(field, p)?;
    let tol = match tol {
        Some(t) => t,
        None => stencil_tolerance(field, p, |r| r.residual)?,
    };
    let dim = field.lattice().dim();
    let mut worst_det = 0.0f64;
    let mut worst_res = 0.0f64;
    let mut signed = 0.0;
    let mut loc = None;
    for pt in &res.points {
        let norm = pt.det_hp / (p.powi(dim as i32) * pt.det_hess);
        worst_det = worst_det.max(norm.abs());
        if pt.residual.abs() > worst_res {
            worst_res = pt.residual.abs();
            signed = pt.residual;
            loc = Some(Location::at(pt.t, &pt.x[..dim]));
        }
    }
    let margin = -worst_det.max(worst_res);
    let mut report = CheckReport::new(format!("certify_family_p{p}"), margin, tol, "space-time field")
        .note(format!("sup normalized det H_p = {worst_det:.6e}"))
        .note(format!("worst residual = {signed:.6e}"));
    if res.degenerate > 0 {
        report = report.note(format!("{} degenerate points excluded", res.degenerate));
    }
    if let Some(l) = loc {
        report = report.with_location(l);
    }
    Ok(report)
}

/// `λ(t)` of the quadratic p-interpolation family between `λ0 x²/2` and
/// `λ1 x²/2`: the power mean with exponent `1/m`, `m = p/(p−2)`.
pub fn power_mean_lambda(l0: f64, l1: f64, p: f64, t: f64) -> f64 {
    if p == 2.0 {
        return l0.powf(1.0 - t) * l1.powf(t);
    }
    if p == f64::INFINITY {
        return (1.0 - t) * l0 + t * l1;
    }
    let m = p / (p - 2.0);
    ((1.0 - t) * l0.powf(1.0 / m) + t * l1.powf(1.0 / m)).powf(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample, FamilySpec, Lattice};
    use crate::interp::{dual_family_with, residual_p};

    fn quad(l: &Lattice, lambda: f64) -> GridFunction {
        sample(&FamilySpec::quadratic(lambda), l).unwrap()
    }

    fn max_rel_error(field: &SpaceTimeField, l0: f64, l1: f64, p: f64) -> f64 {
        let lat = field.lattice();
        let mut worst = 0.0f64;
        for (i, layer) in field.layers().iter().enumerate() {
            let lam = power_mean_lambda(l0, l1, p, field.time(i));
            for k in 0..lat.len() {
                let x = lat.point(k)[0];
                if x.abs() > 0.5 * lat.h() {
                    worst = worst.max((layer.value(k) / (lam * x * x / 2.0) - 1.0).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn power_mean_limits() {
        assert!((power_mean_lambda(1.0, 4.0, 1.0, 0.5) - 1.6).abs() < 1e-14);
        assert!((power_mean_lambda(1.0, 4.0, 2.0, 0.5) - 2.0).abs() < 1e-14);
        assert!((power_mean_lambda(1.0, 4.0, 1e9, 0.5) - 2.5).abs() < 1e-6);
        assert_eq!(power_mean_lambda(1.0, 4.0, f64::INFINITY, 0.5), 2.5);
    }

    #[test]
    fn constant_data_needs_one_sweep() {
        let l = Lattice::line(-4.0, 4.0, 65).unwrap();
        let f = quad(&l, 1.0);
        let (field, rep) = solve_p_interpolation(&f, &f, 2.0, &SolverParams { layers: 9, ..Default::default() }).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.sweeps, 1);
        for layer in field.layers() {
            for (a, b) in layer.values().iter().zip(f.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn geometric_mean_at_p_two() {
        let l = Lattice::line(-4.0, 4.0, 129).unwrap();
        let (f0, f1) = (quad(&l, 1.0), quad(&l, 4.0));
        let (field, rep) = solve_p_interpolation(&f0, &f1, 2.0, &SolverParams::default()).unwrap();
        assert!(rep.converged, "{:?}", rep.final_residual);
        assert!(max_rel_error(&field, 1.0, 4.0, 2.0) < 1e-3);
        assert_eq!(field.layer(0).values(), f0.values());
        assert_eq!(field.layer(32).values(), f1.values());
        let cert = certify_family(&field, 2.0, None).unwrap();
        assert!(cert.pass, "{cert:?}");
    }

    #[test]
    fn closed_form_dispatch() {
        let l = Lattice::line(-4.0, 4.0, 65).unwrap();
        let (f0, f1) = (quad(&l, 1.0), quad(&l, 4.0));
        let params = SolverParams { layers: 9, ..Default::default() };
        let (lin, rep) = solve_p_interpolation(&f0, &f1, f64::INFINITY, &params).unwrap();
        assert_eq!(rep.method, "affine");
        let cert = certify_family(&lin, 2.0, None).unwrap();
        assert!(!cert.pass);
        assert!(cert.notes.iter().any(|n| n.contains("worst residual = -")));
        let (one, rep) = solve_p_interpolation(&f0, &f1, 1.0, &params).unwrap();
        assert_eq!(rep.method, "inf-convolution");
        assert!(certify_family(&one, 1.0, None).unwrap().pass);
        assert!(solve_p_interpolation(&f0, &f1, 0.5, &params).is_err());
    }

    #[test]
    fn exchange_symmetry_and_boundaries() {
        let l = Lattice::line(-4.0, 4.0, 65).unwrap();
        let f0 = sample(&FamilySpec::EvenPoly { coeffs: vec![0.0, 0.5, 0.05] }, &l).unwrap();
        let f1 = quad(&l, 3.0);
        let params = SolverParams { layers: 17, ..Default::default() };
        let (a, ra) = solve_p_interpolation(&f0, &f1, 3.0, &params).unwrap();
        let (b, rb) = solve_p_interpolation(&f1, &f0, 3.0, &params).unwrap();
        assert!(ra.converged && rb.converged);
        assert_eq!(a.layer(0).values(), f0.values());
        assert_eq!(a.layer(16).values(), f1.values());
        for i in 0..17 {
            for (x, y) in a.layer(i).values().iter().zip(b.layer(16 - i).values()) {
                assert!((x - y).abs() < 1e-7 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn second_order_in_time() {
        let errs: Vec<f64> = [(9usize, 33usize), (17, 65), (33, 129)]
            .iter()
            .map(|&(m, n)| {
                let l = Lattice::line(-4.0, 4.0, n).unwrap();
                let params = SolverParams { layers: m, ..Default::default() };
                let (field, _) = solve_p_interpolation(&quad(&l, 1.0), &quad(&l, 4.0), 3.0, &params).unwrap();
                max_rel_error(&field, 1.0, 4.0, 3.0)
            })
            .collect();
        assert!((errs[0] / errs[1]).log2() >= 1.5 && (errs[1] / errs[2]).log2() >= 1.5, "{errs:?}");
    }

    #[test]
    fn dual_family_certifies_at_conjugate_exponent() {
        let l = Lattice::line(-4.0, 4.0, 257).unwrap();
        let params = SolverParams { layers: 17, ..Default::default() };
        let (field, _) = solve_p_interpolation(&quad(&l, 1.0), &quad(&l, 2.0), 3.0, &params).unwrap();
        let dual = dual_family_with(&field, 0.125).unwrap();
        let r = residual_p(&dual, 1.5).unwrap();
        let worst = r.in_window(dual.lattice(), 0.25).map(|p| p.residual.abs()).fold(0.0, f64::max);
        // The discrete conjugate of λx²/2 is off by up to λh²/8; time and
        // dual-space second differences divide that by Δt² and h_y².
        let noise = 2.0 * l.h() * l.h() / 8.0;
        let (dt, hy) = (field.dt(), dual.lattice().h());
        assert!(worst < 4.0 * noise * (1.0 / (dt * dt) + 1.0 / (hy * hy)), "{worst}");
    }

    #[test]
    fn two_dimensional_geometric_mean() {
        let l = Lattice::square(-3.0, 3.0, 25).unwrap();
        let f0 = sample(&FamilySpec::diag(1.0, 2.0), &l).unwrap();
        let f1 = sample(&FamilySpec::diag(4.0, 2.0), &l).unwrap();
        let (field, rep) = solve_p_interpolation(&f0, &f1, 2.0, &SolverParams { layers: 9, ..Default::default() }).unwrap();
        assert!(rep.converged);
        let mid = field.layer(4);
        for k in 0..l.len() {
            let x = l.point(k);
            let exact = (2.0 * x[0] * x[0] + 2.0 * x[1] * x[1]) / 2.0;
            assert!((mid.value(k) - exact).abs() < 5e-3 * (1.0 + exact), "{x:?}");
        }
    }

    #[test]
    fn invalid_params() {
        let bad = SolverParams { damping: 1.5, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "damping"));
        let bad = SolverParams { project_every: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
