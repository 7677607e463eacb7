//! Discrete Legendre–Fenchel transform and convex envelope.
//!
//! The one-dimensional transform evaluates `sup_i {x_i y − f_i}` at sorted
//! dual points by walking the lower convex hull of the samples, which makes
//! it linear in the number of primal plus dual points. The two-dimensional
//! transform is factorized into per-axis passes. Results agree bitwise with
//! the exhaustive maximum over the same samples: the hull keeps points that
//! are within rounding of a chord, and after the walk a short scan over
//! near-ties picks the floating-point maximum.

use crate::grid::{Axis, GridFunction, Lattice};
use crate::{Error, Result};

/// Relative width of the band in which a point counts as lying on a chord.
const HULL_BAND: f64 = 1e-12;
/// Relative width of the near-tie band scanned around the walk's maximizer.
const TIE_BAND: f64 = 1e-10;

/// How dual points outside the attained slope range are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `+∞` outside the slope range of the samples.
    Clamped,
    /// The lattice supremum everywhere, i.e. the conjugate of the
    /// box-truncated sample.
    LatticeSup,
}

/// Lattice of dual variables together with the slope bounds it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct DualLattice {
    pub lattice: Lattice,
    /// Per-axis `(min, max)` slope of the primal samples, when derived.
    pub slopes: Vec<(f64, f64)>,
}

impl DualLattice {
    /// Uses the given lattice as the dual lattice.
    pub fn explicit(lattice: Lattice) -> Self {
        let slopes = lattice.axes().iter().map(|a| (a.lo, a.hi)).collect();
        DualLattice { lattice, slopes }
    }

    /// Dual window cut at the extreme one-sided slopes of `f`, with the same
    /// point count as the primal lattice.
    pub fn auto(f: &GridFunction) -> Result<Self> {
        Self::auto_with(f, 1.0, 1.0)
    }

    /// As [`DualLattice::auto`], with `refine` times as many intervals per
    /// axis and the slope window widened by the factor `expand` about its
    /// centre.
    pub fn auto_with(f: &GridFunction, refine: f64, expand: f64) -> Result<Self> {
        if !(refine > 0.0 && expand >= 1.0) {
            return Err(Error::InvalidParameter(format!("refine {refine} and expand {expand}")));
        }
        let slopes = slope_window(f)?;
        let axes = slopes
            .iter()
            .zip(f.lattice().axes())
            .map(|(&(lo, hi), a)| {
                let c = 0.5 * (lo + hi);
                let r = 0.5 * (hi - lo) * expand;
                let n = (((a.n - 1) as f64 * refine).round() as usize).max(2) + 1;
                Axis { lo: c - r, hi: c + r, n }
            })
            .collect();
        Ok(DualLattice { lattice: Lattice::new(axes)?, slopes })
    }

    /// Smallest window covering the slope windows of both functions.
    pub fn union(f: &GridFunction, g: &GridFunction, refine: f64) -> Result<Self> {
        let a = Self::auto_with(f, refine, 1.0)?;
        let b = Self::auto_with(g, refine, 1.0)?;
        let axes = a
            .lattice
            .axes()
            .iter()
            .zip(b.lattice.axes())
            .map(|(x, y)| Axis { lo: x.lo.min(y.lo), hi: x.hi.max(y.hi), n: x.n.max(y.n) })
            .collect();
        let slopes = a.slopes.iter().zip(&b.slopes).map(|(x, y)| (x.0.min(y.0), x.1.max(y.1))).collect();
        Ok(DualLattice { lattice: Lattice::new(axes)?, slopes })
    }
}

/// Attained slope range `[first hull slope, last hull slope]` of the finite
/// samples. Infinite when only one sample is finite.
pub fn slope_range(xs: &[f64], fs: &[f64]) -> (f64, f64) {
    let finite: Vec<usize> = (0..fs.len()).filter(|&i| fs[i].is_finite()).collect();
    if finite.len() < 2 {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    let i0 = finite[0];
    let i1 = *finite.last().unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &j in &finite {
        if j != i0 {
            lo = lo.min((fs[j] - fs[i0]) / (xs[j] - xs[i0]));
        }
        if j != i1 {
            hi = hi.max((fs[i1] - fs[j]) / (xs[i1] - xs[j]));
        }
    }
    (lo, hi)
}

/// Slopes of the lower convex hull edges of the finite samples, ascending.
/// The lattice-supremum transform of the samples is affine between them.
pub fn hull_slopes(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    let mut hull: Vec<usize> = Vec::new();
    for c in (0..fs.len()).filter(|&i| fs[i].is_finite()) {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if (fs[b] - fs[a]) * (xs[c] - xs[a]) >= (fs[c] - fs[a]) * (xs[b] - xs[a]) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(c);
    }
    hull.windows(2).map(|w| (fs[w[1]] - fs[w[0]]) / (xs[w[1]] - xs[w[0]])).collect()
}

/// Slope range with a relative slack of `1e-12` on each bound, so dual points
/// placed exactly at a rounded slope stay inside.
pub(crate) fn widened((lo, hi): (f64, f64)) -> (f64, f64) {
    (lo - 1e-12 * (1.0 + lo.abs()), hi + 1e-12 * (1.0 + hi.abs()))
}

fn slope_window(f: &GridFunction) -> Result<Vec<(f64, f64)>> {
    let lat = f.lattice();
    let v = f.values();
    let [n0, n1] = lat.shape();
    let xs0 = lat.axis(0).points();
    let mut windows = Vec::new();
    let mut w0 = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..n1 {
        let row = &v[j * n0..(j + 1) * n0];
        if row.iter().any(|x| x.is_finite()) {
            let (lo, hi) = slope_range(&xs0, row);
            w0 = (w0.0.min(lo), w0.1.max(hi));
        }
    }
    windows.push(w0);
    if lat.dim() == 2 {
        let xs1 = lat.axis(1).points();
        let mut w1 = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n0 {
            let col: Vec<f64> = (0..n1).map(|j| v[lat.index(i, j)]).collect();
            if col.iter().any(|x| x.is_finite()) {
                let (lo, hi) = slope_range(&xs1, &col);
                w1 = (w1.0.min(lo), w1.1.max(hi));
            }
        }
        windows.push(w1);
    }
    for (k, w) in windows.iter().enumerate() {
        if !(w.0.is_finite() && w.1.is_finite() && w.0 < w.1) {
            return Err(Error::InvalidParameter(format!(
                "cannot derive a dual window on axis {k}: slope range [{}, {}]",
                w.0, w.1
            )));
        }
    }
    Ok(windows)
}

/// `sup_i {x_i y − f_i}` at every `y` of the ascending slice `ys`.
///
/// `+∞` samples are skipped; a `−∞` sample makes the result `+∞`; the
/// supremum over no finite samples is `−∞`.
pub fn conjugate_line(xs: &[f64], fs: &[f64], ys: &[f64], mode: Mode) -> Vec<f64> {
    if fs.iter().any(|&f| f == f64::NEG_INFINITY) {
        return vec![f64::INFINITY; ys.len()];
    }
    let finite: Vec<usize> = (0..fs.len()).filter(|&i| fs[i].is_finite()).collect();
    if finite.is_empty() {
        return vec![f64::NEG_INFINITY; ys.len()];
    }
    let (slo, shi) = match mode {
        Mode::Clamped => widened(slope_range(xs, fs)),
        Mode::LatticeSup => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let ymax = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let fmax = finite.iter().fold(0.0f64, |m, &i| m.max(fs[i].abs()));
    let xmax = finite.iter().fold(0.0f64, |m, &i| m.max(xs[i].abs()));
    let scale = fmax + xmax * ymax + f64::MIN_POSITIVE;
    let band_hull = HULL_BAND * scale;
    let band_tie = TIE_BAND * scale;

    // Lower hull with points within `band_hull` of a chord retained.
    let mut hull: Vec<usize> = Vec::with_capacity(finite.len());
    for &c in &finite {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let chord = fs[a] + (fs[c] - fs[a]) * (xs[b] - xs[a]) / (xs[c] - xs[a]);
            if fs[b] - chord > band_hull {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(c);
    }

    let value = |k: usize, y: f64| xs[hull[k]] * y - fs[hull[k]];
    let mut out = Vec::with_capacity(ys.len());
    let mut p = 0usize;
    for &y in ys {
        if y < slo || y > shi {
            out.push(f64::INFINITY);
            continue;
        }
        while p + 1 < hull.len() && value(p + 1, y) > value(p, y) {
            p += 1;
        }
        let mut best = p;
        let mut vbest = value(p, y);
        let mut q = p + 1;
        while q < hull.len() {
            let vq = value(q, y);
            if vq > vbest {
                best = q;
                vbest = vq;
            } else if vq < vbest - band_tie {
                break;
            }
            q += 1;
        }
        let mut q = p;
        while q > 0 {
            q -= 1;
            let vq = value(q, y);
            if vq >= vbest {
                best = q;
                vbest = vq;
            } else if vq < vbest - band_tie {
                break;
            }
        }
        p = best;
        out.push(vbest);
    }
    out
}

/// Discrete Legendre transform of a one-dimensional sample.
pub fn legendre_1d(f: &GridFunction, dual: &DualLattice) -> Result<GridFunction> {
    legendre_1d_with(f, dual, Mode::Clamped)
}

pub fn legendre_1d_with(f: &GridFunction, dual: &DualLattice, mode: Mode) -> Result<GridFunction> {
    if f.dim() != 1 || dual.lattice.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: f.dim().max(dual.lattice.dim()) });
    }
    legendre_nd_with(f, dual, mode)
}

/// Discrete Legendre transform in one or two dimensions, by successive
/// per-axis passes.
pub fn legendre_nd(f: &GridFunction, dual: &DualLattice) -> Result<GridFunction> {
    legendre_nd_with(f, dual, Mode::Clamped)
}

pub fn legendre_nd_with(f: &GridFunction, dual: &DualLattice, mode: Mode) -> Result<GridFunction> {
    let lat = f.lattice();
    let dl = &dual.lattice;
    if lat.dim() != dl.dim() {
        return Err(Error::DimensionMismatch { expected: lat.dim(), got: dl.dim() });
    }
    if !f.values().iter().any(|v| v.is_finite()) {
        return Err(Error::EmptySupport);
    }
    let xs0 = lat.axis(0).points();
    let ys0 = dl.axis(0).points();
    let [n0, n1] = lat.shape();
    if lat.dim() == 1 {
        let out = conjugate_line(&xs0, f.values(), &ys0, mode);
        return GridFunction::new(dl.clone(), out);
    }
    let xs1 = lat.axis(1).points();
    let ys1 = dl.axis(1).points();
    let [m0, m1] = dl.shape();
    // Both passes are exact lattice suprema; clamping acts on the result.
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n1).into_par_iter().map(|j| conjugate_line(&xs0, &f.values()[j * n0..(j + 1) * n0], &ys0, Mode::LatticeSup)).collect()
    };
    let cols: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..m0)
            .into_par_iter()
            .map(|k| {
                let c: Vec<f64> = (0..n1).map(|j| -rows[j][k]).collect();
                conjugate_line(&xs1, &c, &ys1, Mode::LatticeSup)
            })
            .collect()
    };
    let window = match mode {
        Mode::Clamped => slope_window(f).ok().map(|w| [widened(w[0]), widened(w[1])]),
        Mode::LatticeSup => None,
    };
    let inside = |y0: f64, y1: f64| window.map_or(true, |[a, b]| a.0 <= y0 && y0 <= a.1 && b.0 <= y1 && y1 <= b.1);
    let mut out = vec![0.0; m0 * m1];
    for (k, col) in cols.iter().enumerate() {
        for (l, &v) in col.iter().enumerate() {
            out[k + m0 * l] = if inside(ys0[k], ys1[l]) { v } else { f64::INFINITY };
        }
    }
    GridFunction::new(dl.clone(), out)
}

/// `𝓛𝓛f` evaluated back on the primal lattice through the given dual lattice.
///
/// The second transform is the plain supremum over the finite dual samples,
/// so the result never exceeds `f` at a lattice point.
pub fn biconjugate(f: &GridFunction, dual: &DualLattice) -> Result<GridFunction> {
    let g = legendre_nd(f, dual)?;
    legendre_nd_with(&g, &DualLattice::explicit(f.lattice().clone()), Mode::LatticeSup)
}

/// Convex envelope `𝓛𝓛f` on the primal lattice.
///
/// In one dimension this is the lower convex hull of the samples, which is
/// exactly the biconjugate of the sampled function: hull vertices keep their
/// values, other points are interpolated along hull edges, and points outside
/// the finite support stay `+∞`. In two dimensions it is the factorized
/// discrete biconjugate through a twice refined dual lattice, taken in
/// lattice-supremum mode so that it stays finite on the whole box.
pub fn convex_envelope(f: &GridFunction) -> Result<GridFunction> {
    if !f.values().iter().any(|v| v.is_finite()) {
        return Err(Error::EmptySupport);
    }
    if f.dim() == 2 {
        let dual = DualLattice::auto_with(f, 2.0, 1.0)?;
        let g = legendre_nd_with(f, &dual, Mode::LatticeSup)?;
        let ff = legendre_nd_with(&g, &DualLattice::explicit(f.lattice().clone()), Mode::LatticeSup)?;
        let vals = ff.values().iter().zip(f.values()).map(|(&a, &b)| a.min(b)).collect();
        return f.with_values(vals);
    }
    let xs = f.lattice().axis(0).points();
    let out = lower_hull_values(&xs, f.values());
    f.with_values(out)
}

fn lower_hull_values(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    let finite: Vec<usize> = (0..fs.len()).filter(|&i| fs[i].is_finite()).collect();
    let scale = finite.iter().fold(0.0f64, |m, &i| m.max(fs[i].abs())) + f64::MIN_POSITIVE;
    let band = HULL_BAND * scale;
    let mut hull: Vec<usize> = Vec::with_capacity(finite.len());
    for &c in &finite {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let chord = fs[a] + (fs[c] - fs[a]) * (xs[b] - xs[a]) / (xs[c] - xs[a]);
            // Points on or within rounding below the chord are dropped so that
            // the envelope of an envelope reproduces it bitwise.
            if fs[b] - chord > -band {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(c);
    }
    let mut out = vec![f64::INFINITY; fs.len()];
    for w in hull.windows(2) {
        let (a, c) = (w[0], w[1]);
        out[a] = fs[a];
        for b in a + 1..c {
            out[b] = fs[a] + (fs[c] - fs[a]) * (xs[b] - xs[a]) / (xs[c] - xs[a]);
        }
    }
    if let Some(&last) = hull.last() {
        out[last] = fs[last];
    }
    out
}
