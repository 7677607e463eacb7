//! Log-concave probability weights `e^{−F} / Z` on a lattice, variances,
//! log-partition profiles `α(t) = −log ∫ e^{−F_t}` and the
//! integration-by-parts identity for `L = Δ − ∇F·∇`.
//!
//! All integrals use the trapezoid rule on the sampling lattice. A cell
//! contributes only when every corner is finite, so an isolated finite point
//! carries no mass and indicator functions integrate exactly.

use rayon::prelude::*;

use crate::grid::{GridFunction, Lattice};
use crate::interp::SpaceTimeField;
use crate::report::round_sig;
use crate::{Error, Result};

/// Boundary cells carrying more than this fraction of the mass trigger a
/// truncation warning.
pub const TAIL_MASS_THRESHOLD: f64 = 1e-6;

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Trapezoid weights restricted to cells whose corners are all finite.
fn support_cell_weights(lattice: &Lattice, finite: &[bool]) -> Vec<f64> {
    let mut w = vec![0.0; lattice.len()];
    let [n0, n1] = lattice.shape();
    let h = lattice.spacing();
    if lattice.dim() == 1 {
        for i in 0..n0 - 1 {
            if finite[i] && finite[i + 1] {
                w[i] += 0.5 * h[0];
                w[i + 1] += 0.5 * h[0];
            }
        }
    } else {
        let q = 0.25 * h[0] * h[1];
        for j in 0..n1 - 1 {
            for i in 0..n0 - 1 {
                let c = [lattice.index(i, j), lattice.index(i + 1, j), lattice.index(i, j + 1), lattice.index(i + 1, j + 1)];
                if c.iter().all(|&k| finite[k]) {
                    for k in c {
                        w[k] += q;
                    }
                }
            }
        }
    }
    w
}

/// Normalized weights of `e^{−F−W}` on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityWeights {
    lattice: Lattice,
    weights: Vec<f64>,
    log_z: f64,
    /// True when a background potential `W` was supplied.
    pub background: bool,
    /// Fraction of the mass on the outermost lattice points.
    pub boundary_mass: f64,
}

impl ProbabilityWeights {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `log ∫ e^{−F−W}` before normalization.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn tail_warning(&self) -> Option<String> {
        (self.boundary_mass > TAIL_MASS_THRESHOLD)
            .then(|| format!("boundary cells carry {:.3e} of the mass; the lattice box truncates the measure", self.boundary_mass))
    }

    /// `∫ u dμ`. Fails when `u` is infinite on a point of positive mass.
    pub fn mean(&self, u: &[f64]) -> Result<f64> {
        self.require_finite(u)?;
        Ok(compensated_sum(self.weights.iter().zip(u).filter(|(w, _)| **w > 0.0).map(|(w, x)| w * x)))
    }

    fn require_finite(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.weights.len() {
            return Err(Error::LatticeMismatch);
        }
        match self.weights.iter().zip(u).position(|(&w, x)| w > 0.0 && !x.is_finite()) {
            Some(i) => Err(Error::InfiniteOnSupport(i)),
            None => Ok(()),
        }
    }
}

/// Weights `∝ cell · e^{−F−W}`, with `W` an optional background potential.
pub fn weights_from_potential(f: &GridFunction, background: Option<&GridFunction>) -> Result<ProbabilityWeights> {
    let lat = f.lattice();
    let total: Vec<f64> = match background {
        Some(w) => {
            if w.lattice() != lat {
                return Err(Error::LatticeMismatch);
            }
            f.values().iter().zip(w.values()).map(|(a, b)| a + b).collect()
        }
        None => f.values().to_vec(),
    };
    if total.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
        return Err(Error::MassOverflow);
    }
    let finite: Vec<bool> = total.iter().map(|v| v.is_finite()).collect();
    let cells = support_cell_weights(lat, &finite);
    let shift = total
        .iter()
        .zip(&cells)
        .filter(|(_, &c)| c > 0.0)
        .map(|(v, _)| *v)
        .fold(f64::INFINITY, f64::min);
    if !shift.is_finite() {
        return Err(Error::ZeroMass);
    }
    let raw: Vec<f64> = total
        .iter()
        .zip(&cells)
        .map(|(v, &c)| if c > 0.0 { c * (shift - v).exp() } else { 0.0 })
        .collect();
    let mass = compensated_sum(raw.iter().copied());
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::ZeroMass);
    }
    let log_z = mass.ln() - shift;
    if !log_z.is_finite() || log_z.abs() > 700.0 {
        return Err(Error::MassOverflow);
    }
    let weights: Vec<f64> = raw.iter().map(|w| w / mass).collect();
    let boundary_mass = compensated_sum((0..lat.len()).filter(|&i| !lat.is_interior(i)).map(|i| weights[i]));
    Ok(ProbabilityWeights { lattice: lat.clone(), weights, log_z, background: background.is_some(), boundary_mass })
}

/// `Var_μ(u)`, two-pass with compensated sums; never negative.
pub fn variance(mu: &ProbabilityWeights, u: &[f64]) -> Result<f64> {
    let m = mu.mean(u)?;
    let v = compensated_sum(
        mu.weights
            .iter()
            .zip(u)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, x)| w * (x - m) * (x - m)),
    );
    Ok(v.max(0.0))
}

/// The integral route for `α″` at one layer, with the scale of the
/// discrepancy against the second difference of `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralRoute {
    /// `∫ ∂²ₜₜF dμ − Var_μ(∂ₜF)`.
    pub value: f64,
    /// `1 + Var(∂²ₜₜF) + E(∂ₜF − E∂ₜF)⁴ + E[(∂ₜF − E∂ₜF)² |∂²ₜₜF − E∂²ₜₜF|]`;
    /// the two routes differ by `O(Δt²)` times this.
    pub scale: f64,
}

fn integral_route(field: &SpaceTimeField, i: usize, mu: &ProbabilityWeights) -> Result<IntegralRoute> {
    let dt = field.dt();
    let (a, b, c) = (field.layer(i - 1).values(), field.layer(i).values(), field.layer(i + 1).values());
    let ft: Vec<f64> = (0..b.len()).map(|k| (c[k] - a[k]) / (2.0 * dt)).collect();
    let ftt: Vec<f64> = (0..b.len()).map(|k| (c[k] - 2.0 * b[k] + a[k]) / (dt * dt)).collect();
    let mean_tt = mu.mean(&ftt)?;
    let mean_t = mu.mean(&ft)?;
    let var_t = variance(mu, &ft)?;
    let var_tt = variance(mu, &ftt)?;
    let w = mu.weights();
    let m4 = compensated_sum((0..w.len()).filter(|&k| w[k] > 0.0).map(|k| w[k] * (ft[k] - mean_t).powi(4)));
    let mixed = compensated_sum(
        (0..w.len()).filter(|&k| w[k] > 0.0).map(|k| w[k] * (ft[k] - mean_t).powi(2) * (ftt[k] - mean_tt).abs()),
    );
    Ok(IntegralRoute { value: mean_tt - var_t, scale: 1.0 + var_tt + m4 + mixed })
}

/// `α″(tᵢ) = ∫ ∂²ₜₜF dμ − Var_μ(∂ₜF)` with centred layer differences.
pub fn alpha_dd_integral(field: &SpaceTimeField, i: usize, background: Option<&GridFunction>) -> Result<f64> {
    if i == 0 || i + 1 >= field.layer_count() {
        return Err(Error::BoundaryLayer(i));
    }
    let mu = weights_from_potential(field.layer(i), background)?;
    Ok(integral_route(field, i, &mu)?.value)
}

/// `α` on every layer and `α″` by both routes on interior layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaProfile {
    pub times: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Second difference of `α`; `None` on boundary layers.
    pub alpha_dd_fd: Vec<Option<f64>>,
    /// Integral route; `None` on boundary layers.
    pub alpha_dd_int: Vec<Option<f64>>,
    /// Discrepancy scale of the integral route; `None` on boundary layers.
    pub route_scale: Vec<Option<f64>>,
    pub dt: f64,
    pub h: f64,
    /// Largest boundary-cell mass fraction over the layers.
    pub boundary_mass: f64,
}

impl AlphaProfile {
    pub fn is_boundary(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.times.len()
    }

    /// Smallest `α″` over interior layers, by the given route, with its layer.
    pub fn min_dd(&self, integral: bool) -> (usize, f64) {
        let v = if integral { &self.alpha_dd_int } else { &self.alpha_dd_fd };
        v.iter()
            .enumerate()
            .filter_map(|(i, x)| x.map(|x| (i, x)))
            .fold((0, f64::INFINITY), |acc, (i, x)| if x < acc.1 { (i, x) } else { acc })
    }

    /// Largest `|α″_fd − α″_int| / (5 (Δt² + h²) scale)` over interior layers;
    /// the routes agree when this is at most one.
    pub fn route_disagreement(&self) -> f64 {
        let unit = 5.0 * (self.dt * self.dt + self.h * self.h);
        (0..self.times.len())
            .filter_map(|i| match (self.alpha_dd_fd[i], self.alpha_dd_int[i], self.route_scale[i]) {
                (Some(a), Some(b), Some(s)) => Some((a - b).abs() / (unit * s)),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, alpha, alpha_dd_fd, alpha_dd_int`; boundary
    /// layers leave the last two empty.
    pub fn to_csv(&self) -> String {
        let cell = |x: Option<f64>| x.map(|v| round_sig(v).to_string()).unwrap_or_default();
        let mut out = String::from("t,alpha,alpha_dd_fd,alpha_dd_int\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                round_sig(self.times[i]),
                round_sig(self.alpha[i]),
                cell(self.alpha_dd_fd[i]),
                cell(self.alpha_dd_int[i])
            ));
        }
        out
    }
}

pub fn alpha_profile(field: &SpaceTimeField, background: Option<&GridFunction>) -> Result<AlphaProfile> {
    let m = field.layer_count();
    let weights = field
        .layers()
        .par_iter()
        .map(|l| weights_from_potential(l, background))
        .collect::<Result<Vec<_>>>()?;
    let alpha: Vec<f64> = weights.iter().map(|w| -w.log_z()).collect();
    let dt = field.dt();
    let routes = (1..m - 1)
        .into_par_iter()
        .map(|i| integral_route(field, i, &weights[i]))
        .collect::<Result<Vec<_>>>()?;
    let mut alpha_dd_fd = vec![None; m];
    let mut alpha_dd_int = vec![None; m];
    let mut route_scale = vec![None; m];
    for i in 1..m - 1 {
        alpha_dd_fd[i] = Some((alpha[i + 1] - 2.0 * alpha[i] + alpha[i - 1]) / (dt * dt));
        alpha_dd_int[i] = Some(routes[i - 1].value);
        route_scale[i] = Some(routes[i - 1].scale);
    }
    Ok(AlphaProfile {
        times: field.times(),
        alpha,
        alpha_dd_fd,
        alpha_dd_int,
        route_scale,
        dt,
        h: field.lattice().h(),
        boundary_mass: weights.iter().map(|w| w.boundary_mass).fold(0.0, f64::max),
    })
}

/// `|∫(Lφ)² dμ − ∫F″(φ′)² dμ − ∫(φ″)² dμ|` for `L = d²/dx² − F′ d/dx` in one
/// dimension, with centred differences at interior points.
pub fn ipp_residual(f: &GridFunction, phi: &GridFunction) -> Result<f64> {
    if f.dim() != 1 {
        return Err(Error::UnsupportedDimension(f.dim()));
    }
    if f.lattice() != phi.lattice() {
        return Err(Error::LatticeMismatch);
    }
    let n = f.lattice().len();
    let h = f.lattice().h();
    let (fv, pv) = (f.values(), phi.values());
    if pv.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("test function must be finite".into()));
    }
    let d1 = |v: &[f64], i: usize| (v[i + 1] - v[i - 1]) / (2.0 * h);
    let d2 = |v: &[f64], i: usize| (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
    let slope_scale = (1..n - 1).map(|i| d1(pv, i).abs()).fold(0.0, f64::max);
    let edge = [1, 2, n - 3, n - 2];
    if n < 7 || edge.iter().any(|&i| d1(pv, i).abs() > 1e-12 * slope_scale.max(1.0)) {
        return Err(Error::SupportTouchesBoundary);
    }
    let mu = weights_from_potential(f, None)?;
    let w = mu.weights();
    let mut lhs = Vec::with_capacity(n);
    let mut hess = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);
    for i in 1..n - 1 {
        if w[i] == 0.0 {
            continue;
        }
        if !(fv[i - 1].is_finite() && fv[i + 1].is_finite()) {
            return Err(Error::InfiniteOnSupport(i));
        }
        let (p1, p2) = (d1(pv, i), d2(pv, i));
        let lphi = p2 - d1(fv, i) * p1;
        lhs.push(w[i] * lphi * lphi);
        hess.push(w[i] * d2(fv, i) * p1 * p1);
        second.push(w[i] * p2 * p2);
    }
    Ok((compensated_sum(lhs) - compensated_sum(hess) - compensated_sum(second)).abs())
}

/// Smooth bump equal to one on `|x| ≤ core` and vanishing for `|x| ≥ outer`.
pub fn smooth_bump(x: f64, core: f64, outer: f64) -> f64 {
    let s = |u: f64| if u <= 0.0 { 0.0 } else { (-1.0 / u).exp() };
    let r = x.abs();
    if r <= core {
        return 1.0;
    }
    if r >= outer {
        return 0.0;
    }
    let u = (outer - r) / (outer - core);
    s(u) / (s(u) + s(1.0 - u))
}
