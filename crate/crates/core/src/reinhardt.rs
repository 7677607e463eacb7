//! Reinhardt bodies through their shadows in the positive orthant, their
//! coordinatewise geometric-mean interpolation and volume checks.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checks::CheckReport;
use crate::{Error, Result};

/// Default number of cells along the first axis.
pub const DEFAULT_CELLS: usize = 128;
/// Relative tolerance of the volume comparisons.
pub const VOLUME_TOL: f64 = 2e-3;
/// Slack when matching a paired point against the extent of a shadow.
const EDGE_SLACK: f64 = 1e-12;

/// Shadow `S ⊂ ℝ₊ⁿ` of a Reinhardt body, `n ∈ {1, 2}`.
///
/// In one dimension `S = [0, extent]`. In two dimensions
/// `S = {(r₁, r₂) : r₁ ≤ extent, r₂ ≤ B(r₁)}` where the boundary `B` is
/// non-increasing and piecewise linear between `heights`, sampled at
/// `r₁ = extent · i / N`, `i = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShadowGauge {
    n: usize,
    extent: f64,
    heights: Vec<f64>,
}

impl ShadowGauge {
    pub fn disc(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::EmptyShadow);
        }
        Ok(ShadowGauge { n: 1, extent: radius, heights: Vec::new() })
    }

    /// Shadow from boundary samples; enforces the monotone closure and
    /// rejects shadows without a neighbourhood of the origin.
    pub fn from_boundary(extent: f64, heights: Vec<f64>) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) || heights.len() < 2 || !(heights[0] > 0.0) {
            return Err(Error::EmptyShadow);
        }
        if heights.iter().any(|h| !h.is_finite() || *h < 0.0) {
            return Err(Error::InvalidBody("boundary heights must be finite and non-negative".into()));
        }
        let mut heights = heights;
        close_monotone(&mut heights);
        Ok(ShadowGauge { n: 2, extent, heights })
    }

    fn sampled(extent: f64, cells: usize, b: impl Fn(f64) -> f64) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::EmptyShadow);
        }
        if cells == 0 {
            return Err(Error::InvalidParameter("a shadow needs at least one cell".into()));
        }
        Self::from_boundary(extent, (0..=cells).map(|i| b(extent * i as f64 / cells as f64)).collect())
    }

    pub fn polydisc(r1: f64, r2: f64, cells: usize) -> Result<Self> {
        if !(r2.is_finite() && r2 > 0.0) {
            return Err(Error::EmptyShadow);
        }
        Self::sampled(r1, cells, |_| r2)
    }

    /// Euclidean ball of `ℂ²`: `r₁² + r₂² ≤ ρ²`.
    pub fn ball(radius: f64, cells: usize) -> Result<Self> {
        Self::sampled(radius, cells, |r| (radius * radius - r * r).max(0.0).sqrt())
    }

    /// `ℓ¹` ball of `ℂ²`: `r₁ + r₂ ≤ ρ`.
    pub fn l1(radius: f64, cells: usize) -> Result<Self> {
        Self::sampled(radius, cells, |r| (radius - r).max(0.0))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn cells(&self) -> usize {
        self.heights.len().saturating_sub(1)
    }

    /// Boundary `B(r₁)`, zero beyond the extent.
    pub fn boundary(&self, r: f64) -> f64 {
        if self.n == 1 {
            return 0.0;
        }
        if r > self.extent * (1.0 + EDGE_SLACK) {
            return 0.0;
        }
        let n = self.cells();
        let s = (r.max(0.0) / self.extent * n as f64).min(n as f64);
        let i = (s.floor() as usize).min(n - 1);
        let f = s - i as f64;
        self.heights[i] * (1.0 - f) + self.heights[i + 1] * f
    }

    pub fn contains(&self, r: &[f64]) -> Result<bool> {
        if r.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: r.len() });
        }
        let inside = |v: f64, bound: f64| v >= 0.0 && v <= bound * (1.0 + EDGE_SLACK);
        Ok(match self.n {
            1 => inside(r[0], self.extent),
            _ => inside(r[0], self.extent) && inside(r[1], self.boundary(r[0])),
        })
    }

    /// Largest midpoint-concavity defect of `s ↦ log B(eˢ)` over 64 points
    /// spanning the interior of the boundary; zero for log-convex shadows.
    pub fn log_convexity_defect(&self) -> f64 {
        if self.n == 1 {
            return 0.0;
        }
        let n = self.cells() as f64;
        let (lo, hi) = ((self.extent / n).ln(), (self.extent * (1.0 - 1.0 / n)).ln());
        let phi: Vec<f64> = (0..64).map(|k| self.boundary((lo + (hi - lo) * k as f64 / 63.0).exp()).ln()).collect();
        phi.windows(3)
            .filter(|w| w.iter().all(|v| v.is_finite()))
            .map(|w| 0.5 * (w[0] + w[2]) - w[1])
            .fold(0.0, f64::max)
    }
}

fn close_monotone(h: &mut [f64]) {
    for i in (0..h.len() - 1).rev() {
        h[i] = h[i].max(h[i + 1]);
    }
}

/// `(2π)ⁿ ∫_S ∏ rⱼ dr`. For `n = 2` the integrand `r B(r)²/2` is cubic on
/// each cell, so Simpson's rule is exact for the represented shadow.
pub fn reinhardt_volume(s: &ShadowGauge) -> Result<f64> {
    match s.n {
        1 => Ok(PI * s.extent * s.extent),
        _ => {
            let n = s.cells();
            let h = s.extent / n as f64;
            let g = |r: f64, b: f64| r * b * b / 2.0;
            let total: f64 = (0..n)
                .map(|i| {
                    let (r0, r1) = (h * i as f64, h * (i + 1) as f64);
                    let (b0, b1) = (s.heights[i], s.heights[i + 1]);
                    h / 6.0 * (g(r0, b0) + 4.0 * g(0.5 * (r0 + r1), 0.5 * (b0 + b1)) + g(r1, b1))
                })
                .sum();
            if total <= 0.0 {
                return Err(Error::EmptyShadow);
            }
            Ok(4.0 * PI * PI * total)
        }
    }
}

/// Best pairing at one boundary node of `S_t`: the height reached and the
/// first coordinates `(a₁, b₁)` that reach it.
#[derive(Debug, Clone, Copy)]
struct Pairing {
    height: f64,
    a: f64,
    b: f64,
}

fn compatible(s0: &ShadowGauge, s1: &ShadowGauge) -> Result<()> {
    if s0.n != s1.n || s0.heights.len() != s1.heights.len() {
        return Err(Error::IncompatibleGrids);
    }
    Ok(())
}

/// Nodes `c_k` of the interpolated boundary with their best pairings. Each
/// boundary sample of either shadow is matched against the other through
/// `a^{1−t} b^t = c_k`; the loop is symmetric in the two roles.
fn pairings(s0: &ShadowGauge, s1: &ShadowGauge, t: f64) -> (f64, Vec<Pairing>) {
    let (w0, w1) = (1.0 - t, t);
    let extent = (w0 * s0.extent.ln() + w1 * s1.extent.ln()).exp();
    let n = s0.cells();
    let mean = |ha: f64, hb: f64| (w0 * ha.ln() + w1 * hb.ln()).exp();
    let pairs = (0..=n)
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                return Pairing { height: mean(s0.heights[0], s1.heights[0]), a: 0.0, b: 0.0 };
            }
            let lc = (extent * k as f64 / n as f64).ln();
            let mut best = Pairing { height: 0.0, a: 0.0, b: 0.0 };
            let mut offer = |height: f64, a: f64, b: f64| {
                if height > best.height {
                    best = Pairing { height, a, b };
                }
            };
            for i in 1..=n {
                let a = s0.extent * i as f64 / n as f64;
                let b = ((lc - w0 * a.ln()) / w1).exp();
                if b <= s1.extent * (1.0 + EDGE_SLACK) {
                    let b = b.min(s1.extent);
                    offer(mean(s0.heights[i], s1.boundary(b)), a, b);
                }
                let b = s1.extent * i as f64 / n as f64;
                let a = ((lc - w1 * b.ln()) / w0).exp();
                if a <= s0.extent * (1.0 + EDGE_SLACK) {
                    let a = a.min(s0.extent);
                    offer(mean(s0.boundary(a), s1.heights[i]), a, b);
                }
            }
            best
        })
        .collect();
    (extent, pairs)
}

/// `S_t`, the lower closure of `{(a₁^{1−t}b₁^t, a₂^{1−t}b₂^t)}` over
/// `a ∈ S₀`, `b ∈ S₁`. Swapping the shadows and replacing `t` by `1 − t`
/// gives a bitwise-identical result whenever `1 − (1 − t) = t` in floating
/// point.
pub fn reinhardt_interpolate(s0: &ShadowGauge, s1: &ShadowGauge, t: f64) -> Result<ShadowGauge> {
    compatible(s0, s1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!("t must lie in [0, 1], got {t}")));
    }
    if t == 0.0 {
        return Ok(s0.clone());
    }
    if t == 1.0 {
        return Ok(s1.clone());
    }
    if s0.n == 1 {
        return ShadowGauge::disc((s0.extent.ln() * (1.0 - t) + s1.extent.ln() * t).exp());
    }
    let (extent, pairs) = pairings(s0, s1, t);
    ShadowGauge::from_boundary(extent, pairs.iter().map(|p| p.height).collect())
}

/// Smallest slack of the coordinatewise AM–GM bound on the pairing:
/// `(1−t)a + tb` dominates `a^{1−t}b^t` in both coordinates, which places
/// `S_t` inside the shadow of `(1−t)K₀ + tK₁`.
pub fn containment_margin(s0: &ShadowGauge, s1: &ShadowGauge, t: f64) -> Result<f64> {
    compatible(s0, s1)?;
    let (w0, w1) = (1.0 - t, t);
    if s0.n == 1 || t == 0.0 || t == 1.0 {
        let (a, b) = (s0.extent, s1.extent);
        return Ok(w0 * a + w1 * b - a.powf(w0) * b.powf(w1));
    }
    let (extent, pairs) = pairings(s0, s1, t);
    let n = s0.cells();
    Ok(pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.height > 0.0)
        .map(|(k, p)| {
            let c = extent * k as f64 / n as f64;
            let first = w0 * p.a + w1 * p.b - c;
            let second = w0 * s0.boundary(p.a) + w1 * s1.boundary(p.b) - p.height;
            first.min(second)
        })
        .fold(f64::INFINITY, f64::min))
}

/// `|K_t| ≥ |K₀|^{1−t}|K₁|^t` at every sample, discrete log-concavity of
/// `t ↦ |K_t|` across the sorted samples, and the AM–GM containment.
pub fn check_reinhardt_logconcavity(s0: &ShadowGauge, s1: &ShadowGauge, ts: &[f64]) -> Result<Vec<CheckReport>> {
    compatible(s0, s1)?;
    if ts.is_empty() {
        return Err(Error::InvalidParameter("no t samples".into()));
    }
    let (v0, v1) = (reinhardt_volume(s0)?, reinhardt_volume(s1)?);
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(ts.len());
    let mut ratio = (f64::INFINITY, 0.0);
    let mut containment = f64::INFINITY;
    for &t in ts {
        let st = reinhardt_interpolate(s0, s1, t)?;
        let vt = reinhardt_volume(&st)?;
        let r = vt / (v0.powf(1.0 - t) * v1.powf(t)) - 1.0;
        if r < ratio.0 {
            ratio = (r, t);
        }
        containment = containment.min(containment_margin(s0, s1, t)?);
        samples.push((t, vt.ln()));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    samples.dedup_by(|a, b| a.0 == b.0);
    // Second divided differences of log |K_t| must be non-positive.
    let concavity = samples
        .windows(3)
        .map(|w| {
            let (d1, d2) = ((w[1].1 - w[0].1) / (w[1].0 - w[0].0), (w[2].1 - w[1].1) / (w[2].0 - w[1].0));
            -(d2 - d1) / (w[2].0 - w[0].0)
        })
        .fold(f64::INFINITY, f64::min);
    let prov = "Reinhardt geometric-mean interpolation";
    let defect = s0.log_convexity_defect().max(s1.log_convexity_defect());
    let mut volume = CheckReport::new("reinhardt-volume", ratio.0, VOLUME_TOL, prov).note(format!("worst t = {}", ratio.1));
    if defect > 1e-9 {
        volume = volume.note(format!("log-shadow convexity defect {defect:.3e}"));
    }
    let mut reports = vec![volume];
    if samples.len() >= 3 {
        reports.push(CheckReport::new("reinhardt-logconcavity", concavity, VOLUME_TOL, prov));
    }
    reports.push(CheckReport::new("reinhardt-containment", containment, 1e-12 * (s0.extent + s1.extent), prov));
    Ok(reports)
}

/// Shadow catalog entries as they appear in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShadowSpec {
    Disc { radius: f64 },
    Polydisc { radii: [f64; 2] },
    Ball { radius: f64 },
    L1 { radius: f64 },
    /// Custom monotone staircase: boundary heights at equally spaced `r₁`.
    Staircase { extent: f64, heights: Vec<f64> },
}

impl ShadowSpec {
    pub fn build(&self, cells: usize) -> Result<ShadowGauge> {
        match self {
            ShadowSpec::Disc { radius } => ShadowGauge::disc(*radius),
            ShadowSpec::Polydisc { radii } => ShadowGauge::polydisc(radii[0], radii[1], cells),
            ShadowSpec::Ball { radius } => ShadowGauge::ball(*radius, cells),
            ShadowSpec::L1 { radius } => ShadowGauge::l1(*radius, cells),
            ShadowSpec::Staircase { extent, heights } => ShadowGauge::from_boundary(*extent, heights.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::CompositeRule;

    const N: usize = DEFAULT_CELLS;

    #[test]
    fn volumes() {
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(reinhardt_volume(&ShadowGauge::disc(1.7).unwrap()).unwrap(), PI * 1.7 * 1.7) < 1e-14);
        let poly = ShadowGauge::polydisc(1.0, 2.0, N).unwrap();
        assert!(rel(reinhardt_volume(&poly).unwrap(), PI * PI * 4.0) < 1e-12);
        // Ball of ℂ²: π²ρ⁴/2.
        let ball = ShadowGauge::ball(1.3, N).unwrap();
        assert!(rel(reinhardt_volume(&ball).unwrap(), PI * PI * 1.3f64.powi(4) / 2.0) < 1e-3);
        // ℓ¹: 4π² ρ⁴/24.
        let l1 = ShadowGauge::l1(2.0, N).unwrap();
        assert!(rel(reinhardt_volume(&l1).unwrap(), 4.0 * PI * PI * 16.0 / 24.0) < 1e-12);
        assert!(matches!(ShadowGauge::disc(0.0), Err(Error::EmptyShadow)));
        assert!(matches!(ShadowGauge::polydisc(1.0, 0.0, N), Err(Error::EmptyShadow)));
    }

    #[test]
    fn discs_interpolate_geometrically() {
        for t in [0.25, 0.5, 0.8] {
            let s = reinhardt_interpolate(&ShadowGauge::disc(0.5).unwrap(), &ShadowGauge::disc(3.0).unwrap(), t).unwrap();
            assert!((s.extent() - 0.5f64.powf(1.0 - t) * 3f64.powf(t)).abs() < 1e-14);
            let b = reinhardt_interpolate(&ShadowGauge::ball(0.5, N).unwrap(), &ShadowGauge::ball(3.0, N).unwrap(), t).unwrap();
            let r = 0.5f64.powf(1.0 - t) * 3f64.powf(t);
            let exact = ShadowGauge::ball(r, N).unwrap();
            let err = b.heights().iter().zip(exact.heights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-3 * r, "t {t}: {err}");
        }
    }

    #[test]
    fn midpoint_of_reciprocal_discs_is_unit() {
        let s = reinhardt_interpolate(&ShadowGauge::disc(2.5).unwrap(), &ShadowGauge::disc(0.4).unwrap(), 0.5).unwrap();
        assert!((s.extent() - 1.0).abs() < 1e-15);
        let b = reinhardt_interpolate(&ShadowGauge::ball(2.5, N).unwrap(), &ShadowGauge::ball(0.4, N).unwrap(), 0.5).unwrap();
        assert!((reinhardt_volume(&b).unwrap() / (PI * PI / 2.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn endpoints_and_identity() {
        let a = ShadowGauge::l1(2.0, N).unwrap();
        let b = ShadowGauge::polydisc(1.0, 1.5, N).unwrap();
        assert_eq!(reinhardt_interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(reinhardt_interpolate(&a, &b, 1.0).unwrap(), b);
        let same = reinhardt_interpolate(&a, &a, 0.3).unwrap();
        let err = same.heights().iter().zip(a.heights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12 && (same.extent() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn swap_symmetry_is_exact() {
        let a = ShadowGauge::l1(2.0, N).unwrap();
        let b = ShadowGauge::ball(1.2, N).unwrap();
        for t in [0.125, 0.25, 0.375, 0.5, 0.75] {
            assert_eq!(reinhardt_interpolate(&a, &b, t).unwrap(), reinhardt_interpolate(&b, &a, 1.0 - t).unwrap());
        }
    }

    #[test]
    fn crossed_polydiscs_reach_two_two() {
        let a = ShadowGauge::polydisc(1.0, 4.0, N).unwrap();
        let b = ShadowGauge::polydisc(4.0, 1.0, N).unwrap();
        let m = reinhardt_interpolate(&a, &b, 0.5).unwrap();
        assert!(m.contains(&[2.0, 2.0]).unwrap());
        assert!(!m.contains(&[2.0, 2.01]).unwrap());
    }

    /// Independent volume of `S_{1/2}` for the unit polydisc and the ℓ¹
    /// shadow of radius 2: maximize the height by a dense scan over `a₁`.
    fn crossed_oracle() -> f64 {
        let b0 = |a: f64| if a <= 1.0 { 1.0 } else { 0.0 };
        let b1 = |b: f64| (2.0 - b).max(0.0);
        let height = |c: f64| {
            (1..=20_000)
                .map(|i| {
                    let a = i as f64 / 20_000.0;
                    let b = c * c / a;
                    if b > 2.0 { 0.0 } else { (b0(a) * b1(b)).sqrt() }
                })
                .fold(0.0, f64::max)
        };
        let rule = CompositeRule::new(0.0, 2f64.sqrt(), 64, 6);
        4.0 * PI * PI * rule.integrate(|c| c * height(c).powi(2) / 2.0)
    }

    #[test]
    fn polydisc_versus_l1_is_strict() {
        let a = ShadowGauge::polydisc(1.0, 1.0, N).unwrap();
        let b = ShadowGauge::l1(2.0, N).unwrap();
        let mid = reinhardt_volume(&reinhardt_interpolate(&a, &b, 0.5).unwrap()).unwrap();
        let oracle = crossed_oracle();
        assert!((mid / oracle - 1.0).abs() < 1e-3, "{mid} vs {oracle}");
        let ts: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let r = check_reinhardt_logconcavity(&a, &b, &ts).unwrap();
        assert!(r.iter().all(|r| r.pass), "{r:?}");
        let gm = (PI * PI * 8.0 * PI * PI / 3.0).sqrt();
        assert!(mid > gm * 1.01);
    }

    #[test]
    fn disc_pairs_are_equalities() {
        let ts: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let r = check_reinhardt_logconcavity(&ShadowGauge::ball(0.7, N).unwrap(), &ShadowGauge::ball(1.9, N).unwrap(), &ts).unwrap();
        assert!(r.iter().all(|r| r.pass), "{r:?}");
        assert!(r[0].margin.abs() < 2e-3);
        let r = check_reinhardt_logconcavity(&ShadowGauge::disc(0.7).unwrap(), &ShadowGauge::disc(1.9).unwrap(), &ts).unwrap();
        assert!(r[0].margin.abs() < 1e-12);
    }

    #[test]
    fn log_convexity_of_catalog() {
        for s in [ShadowGauge::ball(1.0, N), ShadowGauge::l1(1.0, N), ShadowGauge::polydisc(1.0, 2.0, N)] {
            assert!(s.unwrap().log_convexity_defect() < 1e-9);
        }
        // An inward corner is not log-convex.
        let notch = ShadowGauge::from_boundary(2.0, vec![2.0, 2.0, 0.2, 0.2, 0.2]).unwrap();
        assert!(notch.log_convexity_defect() > 0.01);
    }

    #[test]
    fn errors() {
        let a = ShadowGauge::disc(1.0).unwrap();
        let b = ShadowGauge::ball(1.0, N).unwrap();
        assert!(matches!(reinhardt_interpolate(&a, &b, 0.5), Err(Error::IncompatibleGrids)));
        let c = ShadowGauge::ball(1.0, 64).unwrap();
        assert!(matches!(reinhardt_interpolate(&c, &b, 0.5), Err(Error::IncompatibleGrids)));
        assert!(reinhardt_interpolate(&b, &b, 1.5).is_err());
        // Monotone closure lifts dips.
        let s = ShadowGauge::from_boundary(1.0, vec![1.0, 0.2, 0.5, 0.0]).unwrap();
        assert_eq!(s.heights(), &[1.0, 0.5, 0.5, 0.0]);
    }
}
