//! Ray integrals `∫₀^∞ e^{−w(sx)} s^{p−1} ds`, the functional
//! `h(x) = (ray integral)^{−1/p}`, its convexity checks and the weighted
//! half-line variance inequality behind them.
//!
//! Potentials are closures on the plane; tabulated data can be passed through
//! [`GridFunction::interpolate`](crate::grid::GridFunction::interpolate).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checks::{CheckReport, Location};
use crate::measures::compensated_sum;
use crate::quadrature::CompositeRule;
use crate::{Error, Result};

/// Integrand below this fraction of its peak (on the `d log s` scale) is
/// dropped.
const CUTOFF_LOG: f64 = 36.841_361_487_904_734; // ln 1e16
const PANELS: usize = 400;
const ORDER: usize = 8;
/// Largest admissible mass on the first panel of a half-line measure.
pub const FIRST_CELL_MASS: f64 = 1e-4;
/// Midpoint and local convexity tolerance.
pub const CONVEXITY_TOL: f64 = 1e-6;
/// Sign tolerance of the variance inequality.
pub const VARIANCE_TOL: f64 = 1e-6;

/// The probability measure `∝ e^{−w₀(x)} x^{p−1} dx` on `(0, X]`, discretized
/// by composite Gauss–Legendre on the graded mesh `x = X u^γ`,
/// `γ = 2 / min(p, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfLineMeasure {
    pub p: f64,
    /// Truncation point `X`.
    pub reach: f64,
    pub grading: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Mass of the first panel.
    pub first_cell_mass: f64,
    log_z: f64,
}

impl HalfLineMeasure {
    pub fn new(w0: impl Fn(f64) -> f64, p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidParameter(format!("p must be positive, got {p}")));
        }
        let reach = cutoff(&w0, p)?;
        let grading = 2.0 / p.min(1.0);
        let rule = CompositeRule::new(0.0, 1.0, PANELS, ORDER);
        // log of X^p γ u^{γp−1} e^{−w₀(X u^γ)}, the integrand in u.
        let logs: Vec<f64> = rule
            .nodes
            .iter()
            .map(|&u| {
                let x = reach * u.powf(grading);
                p * reach.ln() + grading.ln() + (grading * p - 1.0) * u.ln() - w0(x)
            })
            .collect();
        if logs.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("potential is NaN along the ray".into()));
        }
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::EmptySupport);
        }
        let raw: Vec<f64> = logs.iter().zip(&rule.weights).map(|(l, w)| w * (l - peak).exp()).collect();
        let total = compensated_sum(raw.iter().copied());
        let weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let nodes = rule.nodes.iter().map(|&u| reach * u.powf(grading)).collect();
        let first_cell_mass = weights[..ORDER].iter().sum();
        Ok(HalfLineMeasure { p, reach, grading, nodes, weights, first_cell_mass, log_z: peak + total.ln() })
    }

    /// `log ∫₀^∞ e^{−w₀} x^{p−1} dx`.
    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn mean(&self, u: impl Fn(f64) -> f64) -> f64 {
        compensated_sum(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * u(x)))
    }

    pub fn variance(&self, u: impl Fn(f64) -> f64) -> f64 {
        let vals: Vec<f64> = self.nodes.iter().map(|&x| u(x)).collect();
        let m = compensated_sum(vals.iter().zip(&self.weights).map(|(v, w)| w * v));
        compensated_sum(vals.iter().zip(&self.weights).map(|(v, w)| w * (v - m) * (v - m))).max(0.0)
    }
}

/// Point beyond which `s^p e^{−w₀(s)}` stays below `e^{−37}` of its peak,
/// searched on `s = 2^{j/8}`, `|j| ≤ 320`.
fn cutoff(w0: &impl Fn(f64) -> f64, p: f64) -> Result<f64> {
    let grid: Vec<f64> = (-320..=320).map(|j| (j as f64 / 8.0).exp2()).collect();
    let logs: Vec<f64> = grid.iter().map(|&s| p * s.ln() - w0(s)).collect();
    if logs.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("potential is NaN along the ray".into()));
    }
    let (arg, peak) = logs.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    if !peak.is_finite() {
        return Err(Error::EmptySupport);
    }
    let below = |i: usize| logs[i] < peak - CUTOFF_LOG;
    match (arg..grid.len()).find(|&i| below(i)) {
        Some(i) if (i..grid.len()).all(below) => Ok(grid[i]),
        _ => Err(Error::DivergentRay([f64::NAN; 2])),
    }
}

/// `log ∫₀^∞ e^{−w(s x)} s^{p−1} ds`.
pub fn log_ray_integral(w: &impl Fn([f64; 2]) -> f64, x: [f64; 2], p: f64) -> Result<f64> {
    let m = HalfLineMeasure::new(|s| w([s * x[0], s * x[1]]), p).map_err(|e| match e {
        Error::DivergentRay(_) => Error::DivergentRay(x),
        e => e,
    })?;
    Ok(m.log_z())
}

/// `h(x) = (∫₀^∞ e^{−w(sx)} s^{p−1} ds)^{−1/p}`, `h(0) = 0`.
pub fn busemann_h(w: &impl Fn([f64; 2]) -> f64, x: [f64; 2], p: f64) -> Result<f64> {
    if x == [0.0, 0.0] {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::InvalidParameter(format!("p must be positive, got {p}")));
        }
        return Ok(0.0);
    }
    Ok((-log_ray_integral(w, x, p)? / p).exp())
}

/// `α_p(t) = ∫₀^∞ e^{−w(ts, s)} s^{p−1} ds`.
pub fn busemann_alpha_p(w: &impl Fn([f64; 2]) -> f64, t: f64, p: f64) -> Result<f64> {
    Ok(log_ray_integral(w, [t, 1.0], p)?.exp())
}

/// Step of the centred differences in `t` at the origin.
const LOCAL_STEP: f64 = 1e-3;

/// `(1 + 1/p)(α′)²/α − α″` at `t = 0` by centred differences, with `α(0)`.
pub fn local_margin(w: &impl Fn([f64; 2]) -> f64, p: f64) -> Result<(f64, f64)> {
    let d = LOCAL_STEP;
    let (am, a0, ap) = (busemann_alpha_p(w, -d, p)?, busemann_alpha_p(w, 0.0, p)?, busemann_alpha_p(w, d, p)?);
    let d1 = (ap - am) / (2.0 * d);
    let d2 = (ap - 2.0 * a0 + am) / (d * d);
    Ok(((1.0 + 1.0 / p) * d1 * d1 / a0 - d2, a0))
}

/// Midpoint convexity of `h` over `pairs` random pairs in `[−2, 2]²`, and the
/// local form at `t = 0`. Pairs touching a divergent ray are skipped and
/// counted.
pub fn check_h_convexity(w: &(impl Fn([f64; 2]) -> f64 + Sync), p: f64, pairs: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<([f64; 2], [f64; 2])> = (0..pairs)
        .map(|_| {
            let mut pt = || [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            (pt(), pt())
        })
        .collect();
    let results: Vec<Result<Option<(f64, [f64; 2])>>> = samples
        .par_iter()
        .map(|&(x, y)| {
            let mid = [0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])];
            let hs = [x, y, mid].map(|z| busemann_h(w, z, p));
            match hs {
                [Ok(a), Ok(b), Ok(c)] => Ok(Some((0.5 * (a + b) - c, mid))),
                [Err(Error::DivergentRay(_)), ..] | [_, Err(Error::DivergentRay(_)), _] | [.., Err(Error::DivergentRay(_))] => Ok(None),
                [a, b, c] => {
                    a?;
                    b?;
                    c?;
                    unreachable!()
                }
            }
        })
        .collect();
    let mut skipped = 0;
    let mut worst = (f64::INFINITY, [0.0; 2]);
    for r in results {
        match r? {
            Some((m, at)) if m < worst.0 => worst = (m, at),
            Some(_) => {}
            None => skipped += 1,
        }
    }
    if skipped == pairs {
        return Err(Error::DivergentRay([f64::NAN; 2]));
    }
    let mut mid = CheckReport::new("busemann-convexity", worst.0, CONVEXITY_TOL, format!("ray functional, p = {p}"))
        .with_location(Location::at_x(&worst.1));
    if skipped > 0 {
        mid = mid.note(format!("{skipped} pairs skipped on divergent rays"));
    }
    let (local, a0) = local_margin(w, p)?;
    let local = CheckReport::new("busemann-local", local, CONVEXITY_TOL * a0.max(1.0), format!("ray functional at t = 0, p = {p}"))
        .note(format!("alpha_p(0) = {a0:.12e}"));
    Ok(vec![mid, local])
}

/// Step for centred derivatives of closures at `x`.
fn step(x: f64, rel: f64) -> f64 {
    rel * (1.0 + x.abs())
}

fn derivative(f: &impl Fn(f64) -> f64, x: f64) -> f64 {
    let d = step(x, 1e-6);
    (f(x + d) - f(x - d)) / (2.0 * d)
}

fn second_derivative(f: &impl Fn(f64) -> f64, x: f64) -> f64 {
    let d = step(x, 1e-4);
    (f(x + d) - 2.0 * f(x) + f(x - d)) / (d * d)
}

/// `⟨(u′ − u/x)² / ∂²ₓₓw⟩ + ⟨u⟩²/p − Var_μ(u)` for `μ ∝ e^{−w(0,x)} x^{p−1}`.
pub fn variance_margin(w: &impl Fn([f64; 2]) -> f64, u: &impl Fn(f64) -> f64, p: f64) -> Result<f64> {
    margin_with(w, u, &|x| derivative(u, x) - u(x) / x, p)
}

/// As [`variance_margin`] with `g = u′ − u/x` supplied.
fn margin_with(w: &impl Fn([f64; 2]) -> f64, u: &impl Fn(f64) -> f64, g: &impl Fn(f64) -> f64, p: f64) -> Result<f64> {
    let w0 = |x: f64| w([0.0, x]);
    let mu = HalfLineMeasure::new(w0, p)?;
    if mu.first_cell_mass > FIRST_CELL_MASS {
        return Err(Error::InvalidParameter(format!("first cell carries {:.3e} of the mass", mu.first_cell_mass)));
    }
    // u/x must stay bounded near 0.
    let x1 = mu.nodes[0];
    let bulk = mu.nodes[mu.nodes.len() / 2];
    let (r1, rb) = ((u(x1) / x1).abs(), (u(bulk) / bulk).abs());
    if !(r1 <= 1e6 * (1.0 + rb)) {
        return Err(Error::UnboundedRatio(r1));
    }
    let mut terms = Vec::with_capacity(mu.nodes.len());
    for (&x, &wt) in mu.nodes.iter().zip(&mu.weights) {
        let wxx = second_derivative(&w0, x);
        if !(wxx > 0.0) {
            return Err(Error::LostConvexity { layer: 0, x: [0.0, x], min_eig: wxx });
        }
        let g = g(x);
        terms.push(wt * g * g / wxx);
    }
    let e = mu.mean(u);
    Ok(compensated_sum(terms) + e * e / p - mu.variance(u))
}

/// The variance inequality for a test function `u` with `u(0) = 0`.
pub fn check_busemann_variance(w: &impl Fn([f64; 2]) -> f64, u: &impl Fn(f64) -> f64, p: f64) -> Result<CheckReport> {
    let m = variance_margin(w, u, p)?;
    Ok(CheckReport::new("busemann-variance", m, VARIANCE_TOL, format!("weighted half-line variance, p = {p}")))
}

/// The three margins of the reduction for one `(w, p)`: the variance
/// inequality at `u = x ∂ₜw(0, x)`, its form with `⟨x² ∂²ₜₜw⟩`, and the
/// local convexity margin at `t = 0` divided by `α_p(0)`. Here `t` is the
/// first coordinate of `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionChain {
    pub general: f64,
    pub layered: f64,
    pub local: f64,
}

pub fn reduction_chain(w: &impl Fn([f64; 2]) -> f64, p: f64) -> Result<ReductionChain> {
    let wt = |x: f64| {
        let d = step(x, 1e-5);
        (w([d, x]) - w([-d, x])) / (2.0 * d)
    };
    // x ∂²ₜₓw, which equals u′ − u/x.
    let g = |x: f64| {
        let d = step(x, 1e-4);
        x * (w([d, x + d]) - w([d, x - d]) - w([-d, x + d]) + w([-d, x - d])) / (4.0 * d * d)
    };
    let wtt = |x: f64| {
        let d = step(x, 1e-4);
        (w([d, x]) - 2.0 * w([0.0, x]) + w([-d, x])) / (d * d)
    };
    let u = |x: f64| x * wt(x);
    let general = margin_with(w, &u, &g, p)?;
    let mu = HalfLineMeasure::new(|x| w([0.0, x]), p)?;
    let e = mu.mean(u);
    let layered = mu.mean(|x| x * x * wtt(x)) + e * e / p - mu.variance(u);
    let (local, a0) = local_margin(w, p)?;
    Ok(ReductionChain { general, layered, local: local / a0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;
    use std::f64::consts::PI;

    fn gauss(y: [f64; 2]) -> f64 {
        0.5 * (y[0] * y[0] + y[1] * y[1])
    }

    #[test]
    fn gaussian_h_is_scaled_norm() {
        // c_p = (∫₀^∞ e^{−u²/2} u^{p−1} du)^{−1/p} = (2^{p/2−1} Γ(p/2))^{−1/p}.
        for p in [0.5f64, 1.0, 2.0, 5.0] {
            let c = (2f64.powf(p / 2.0 - 1.0) * gamma(p / 2.0)).powf(-1.0 / p);
            for x in [[1.0f64, 0.0], [0.3, -0.4], [-2.0, 1.5]] {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let h = busemann_h(&gauss, x, p).unwrap();
                assert!((h - c * r).abs() < 1e-10 * r, "p {p} x {x:?}: {h} vs {}", c * r);
            }
        }
        assert!((busemann_h(&gauss, [0.6, 0.8], 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(busemann_h(&gauss, [0.0, 0.0], 2.0).unwrap(), 0.0);
    }

    #[test]
    fn homogeneity() {
        let w = |y: [f64; 2]| y[0] * y[0] + 0.5 * y[0] * y[1] + 0.5 * y[1] * y[1] + 0.1 * y[1].powi(4) + 0.3 * y[0];
        for p in [0.5, 1.0, 3.0] {
            for x in [[1.0, 0.2], [-0.3, 0.7]] {
                let a = busemann_h(&w, x, p).unwrap();
                let b = busemann_h(&w, [2.0 * x[0], 2.0 * x[1]], p).unwrap();
                assert!((b - 2.0 * a).abs() < 1e-8 * a, "p {p}");
            }
        }
    }

    #[test]
    fn gaussian_alpha_one() {
        for t in [-2.0f64, -0.5, 0.0, 0.3, 1.7] {
            let a = busemann_alpha_p(&gauss, t, 1.0).unwrap();
            let exact = (PI / 2.0).sqrt() / (1.0 + t * t).sqrt();
            assert!((a - exact).abs() < 1e-10, "t {t}");
        }
    }

    #[test]
    fn reflection_symmetry_and_full_line_identity() {
        let w = |y: [f64; 2]| 2.0 * y[0] * y[0] + 0.5 * y[1] * y[1] + 0.2 * y[0].powi(4);
        for t in [0.4, 1.3] {
            let a = busemann_alpha_p(&w, t, 1.5).unwrap();
            let b = busemann_alpha_p(&w, -t, 1.5).unwrap();
            assert!((a - b).abs() < 1e-10 * a);
        }
        // For even w the two half-rays agree, so 2α₁(t) is the integral over
        // the whole line s ↦ (ts, s).
        let even = |y: [f64; 2]| y[0] * y[0] + 0.8 * y[0] * y[1] + y[1] * y[1];
        for t in [-1.0f64, 0.5] {
            let full = CompositeRule::new(-12.0, 12.0, 600, 8).integrate(|s| (-even([t * s, s])).exp());
            let a = busemann_alpha_p(&even, t, 1.0).unwrap();
            assert!((2.0 * a - full).abs() < 1e-10, "t {t}");
        }
    }

    #[test]
    fn half_line_moments_match_gamma_oracle() {
        // Density ∝ x^{p−1} e^{−x²/2}: ⟨x^k⟩ = 2^{k/2} Γ((p+k)/2) / Γ(p/2).
        for p in [0.5f64, 1.0, 2.0, 5.0] {
            let mu = HalfLineMeasure::new(|x| 0.5 * x * x, p).unwrap();
            assert!(mu.first_cell_mass < FIRST_CELL_MASS, "p {p}: {}", mu.first_cell_mass);
            assert!((mu.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(mu.weights.iter().all(|w| *w >= 0.0));
            for k in 1..=4 {
                let exact = 2f64.powf(k as f64 / 2.0) * gamma((p + k as f64) / 2.0) / gamma(p / 2.0);
                let m = mu.mean(|x| x.powi(k));
                assert!((m - exact).abs() < 1e-10 * exact, "p {p} k {k}");
            }
        }
    }

    #[test]
    fn variance_margin_linear_u() {
        // u = x: margin = ⟨x⟩²/p − Var(x); Rayleigh moments at p = 2.
        let m = variance_margin(&gauss, &|x| x, 2.0).unwrap();
        assert!((m - (3.0 * PI / 4.0 - 2.0)).abs() < 1e-9, "{m}");
        for p in [0.5f64, 1.0, 5.0] {
            let mean = 2f64.sqrt() * gamma((p + 1.0) / 2.0) / gamma(p / 2.0);
            let second = p;
            let exact = mean * mean / p - (second - mean * mean);
            let m = variance_margin(&gauss, &|x| x, p).unwrap();
            assert!((m - exact).abs() < 1e-8, "p {p}: {m} vs {exact}");
            assert!(m >= 0.0);
        }
    }

    #[test]
    fn variance_degenerate_cases() {
        // w independent of t: u = x ∂ₜw = 0, margin 0.
        let flat = |y: [f64; 2]| 0.5 * y[1] * y[1];
        let chain = reduction_chain(&flat, 2.0).unwrap();
        assert!(chain.general.abs() < 1e-12 && chain.layered.abs() < 1e-12);
        // Constant u violates u(0) = 0.
        assert!(matches!(variance_margin(&gauss, &|_| 1.0, 1.0), Err(Error::UnboundedRatio(_))));
    }

    #[test]
    fn reduction_chain_is_ordered() {
        let ws: [Box<dyn Fn([f64; 2]) -> f64>; 3] = [
            Box::new(|y| y[0] * y[0] + 0.7 * y[0] * y[1] + 0.5 * y[1] * y[1]),
            Box::new(|y| 0.5 * (y[0] + 0.3 * y[1]).powi(2) + 0.5 * y[1] * y[1] + 0.1 * y[1].powi(4)),
            Box::new(|y| (y[0] - 0.2).powi(2) + y[0] * y[1] + y[1] * y[1] + 0.05 * (y[0] + y[1]).powi(4)),
        ];
        for w in &ws {
            for p in [0.5, 1.0, 2.0, 5.0] {
                let c = reduction_chain(w, p).unwrap();
                assert!(c.general <= c.layered + 1e-6, "{c:?}");
                assert!((c.layered - c.local).abs() < 1e-4 * (1.0 + c.layered.abs()), "p {p}: {c:?}");
                assert!(c.general >= -VARIANCE_TOL, "p {p}: {c:?}");
            }
        }
    }

    #[test]
    fn convexity_checks_pass_on_catalog() {
        let w = |y: [f64; 2]| y[0] * y[0] + 0.5 * y[0] * y[1] + 0.5 * y[1] * y[1] + 0.1 * (y[0] * y[0] + y[1] * y[1]).powi(2);
        for p in [0.5, 1.0, 2.0, 5.0] {
            let r = check_h_convexity(&w, p, 50, 3).unwrap();
            assert!(r.iter().all(|r| r.pass), "p {p}: {r:?}");
        }
        // Gaussian, p = 1: α₁ ∝ (1 + t²)^{−1/2}, so the local margin is
        // −α″(0) = √(π/2).
        let (m, _) = local_margin(&gauss, 1.0).unwrap();
        assert!((m - (PI / 2.0).sqrt()).abs() < 1e-5, "{m}");
    }

    #[test]
    fn collinear_pairs_are_equalities() {
        let w = |y: [f64; 2]| y[0] * y[0] + 0.5 * y[1] * y[1];
        let x = [0.4, -0.9];
        let (a, b, c) = (
            busemann_h(&w, x, 1.5).unwrap(),
            busemann_h(&w, [2.0 * x[0], 2.0 * x[1]], 1.5).unwrap(),
            busemann_h(&w, [1.5 * x[0], 1.5 * x[1]], 1.5).unwrap(),
        );
        assert!((0.5 * (a + b) - c).abs() < 1e-10);
    }

    #[test]
    fn divergent_and_invalid() {
        let linear = |y: [f64; 2]| y[0];
        assert!(matches!(busemann_h(&linear, [-1.0, 0.0], 1.0), Err(Error::DivergentRay(_))));
        assert!(busemann_h(&gauss, [1.0, 0.0], 0.0).is_err());
        assert!(busemann_h(&gauss, [1.0, 0.0], -1.0).is_err());
    }
}
