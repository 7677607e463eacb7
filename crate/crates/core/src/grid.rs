//! Uniform lattices in one or two dimensions, extended-real functions sampled
//! on them, the analytic family catalog and central finite differences.
//!
//! `+∞` is represented by `f64::INFINITY`. It is absorbing under sup/inf and
//! carries zero mass under `e^{−F}`.

use serde::{Deserialize, Serialize};

use crate::geometry::Body;
use crate::{Error, Result};

/// One coordinate axis: `n` equally spaced points from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::checked(0, lo, hi, n)
    }

    fn checked(axis: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonFiniteBound { axis });
        }
        if lo >= hi {
            return Err(Error::InvertedBounds { axis, lo, hi });
        }
        if n < 3 {
            return Err(Error::TooFewPoints { axis, count: n });
        }
        Ok(Axis { lo, hi, n })
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    /// Coordinate of point `i`. Endpoints are exact, and on a lattice centred
    /// at zero `point(n−1−i) == −point(i)` bitwise.
    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i == 0 {
            return self.lo;
        }
        if i == self.n - 1 {
            return self.hi;
        }
        let c = 0.5 * (self.lo + self.hi);
        let half = 0.5 * (self.hi - self.lo);
        c + half * ((2 * i) as f64 - (self.n - 1) as f64) / (self.n - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.lo == -self.hi
    }

    /// Index of the cell containing `x` together with the fractional offset,
    /// clamped to the axis.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.lo) / self.spacing()).clamp(0.0, (self.n - 1) as f64);
        let i = (s.floor() as usize).min(self.n - 2);
        (i, s - i as f64)
    }

    /// Refinement with halved spacing.
    pub fn refined(&self) -> Axis {
        Axis { lo: self.lo, hi: self.hi, n: 2 * self.n - 1 }
    }
}

/// A tensor lattice of dimension one or two. Flat indices run along axis 0
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    axes: Vec<Axis>,
}

impl Lattice {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::UnsupportedDimension(axes.len()));
        }
        let axes = axes
            .into_iter()
            .enumerate()
            .map(|(k, a)| Axis::checked(k, a.lo, a.hi, a.n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Lattice { axes })
    }

    /// Builds a lattice from `(lower, upper, count)` triples, one per axis.
    pub fn build(spec: &[(f64, f64, usize)]) -> Result<Self> {
        Self::new(spec.iter().map(|&(lo, hi, n)| Axis { lo, hi, n }).collect())
    }

    pub fn line(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::build(&[(lo, hi, n)])
    }

    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::build(&[(lo, hi, n), (lo, hi, n)])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::spacing).collect()
    }

    /// Largest spacing over the axes.
    pub fn h(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(0.0, f64::max)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.axes[0].n, if self.dim() == 2 { self.axes[1].n } else { 1 }]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.axes[0].n * j
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        let n0 = self.axes[0].n;
        [idx % n0, idx / n0]
    }

    /// Coordinates of a flat index; the second entry is zero in 1D.
    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.multi_index(idx);
        let x0 = self.axes[0].point(i);
        let x1 = if self.dim() == 2 { self.axes[1].point(j) } else { 0.0 };
        [x0, x1]
    }

    pub fn is_symmetric(&self) -> bool {
        self.axes.iter().all(Axis::is_symmetric)
    }

    /// Flat index of the point `−x`.
    pub fn mirror(&self, idx: usize) -> usize {
        let [i, j] = self.multi_index(idx);
        let [n0, n1] = self.shape();
        self.index(n0 - 1 - i, n1 - 1 - j)
    }

    /// True when every axis index is strictly inside the axis.
    pub fn is_interior(&self, idx: usize) -> bool {
        let [i, j] = self.multi_index(idx);
        let [n0, n1] = self.shape();
        i > 0 && i + 1 < n0 && (self.dim() == 1 || (j > 0 && j + 1 < n1))
    }

    /// True when the point lies in the central box scaled by `fraction`
    /// (e.g. 0.5 for the central half-window).
    pub fn in_window(&self, idx: usize, fraction: f64) -> bool {
        let p = self.point(idx);
        self.axes.iter().enumerate().all(|(k, a)| {
            let c = 0.5 * (a.lo + a.hi);
            let half = 0.5 * (a.hi - a.lo) * fraction;
            (p[k] - c).abs() <= half * (1.0 + 1e-12)
        })
    }

    /// Trapezoid-rule weight of each point.
    pub fn cell_weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| {
                let h = a.spacing();
                (0..a.n).map(|i| if i == 0 || i == a.n - 1 { 0.5 * h } else { h }).collect()
            })
            .collect();
        (0..self.len())
            .map(|idx| {
                let [i, j] = self.multi_index(idx);
                let w0 = per_axis[0][i];
                if self.dim() == 2 {
                    w0 * per_axis[1][j]
                } else {
                    w0
                }
            })
            .collect()
    }

    pub fn refined(&self) -> Lattice {
        Lattice { axes: self.axes.iter().map(Axis::refined).collect() }
    }

    pub fn same_as(&self, other: &Lattice) -> bool {
        self == other
    }
}

/// An extended-real function sampled on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    lattice: Lattice,
    values: Vec<f64>,
    /// Set when the generator is even under `x ↦ −x`.
    pub even: bool,
    /// Certified range `[1/R, R]` of interior Hessian eigenvalues, if any.
    pub convexity_window: Option<(f64, f64)>,
    /// Raised by [`sample`] for custom tables that fail a discrete convexity test.
    pub nonconvex_warning: bool,
}

impl GridFunction {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::LatticeMismatch);
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(Error::InvalidFamily("values must be finite reals or +inf".into()));
        }
        if !values.iter().any(|v| v.is_finite()) {
            return Err(Error::EmptySupport);
        }
        Ok(GridFunction { lattice, values, even: false, convexity_window: None, nonconvex_warning: false })
    }

    /// Tabulates `g` at every lattice point.
    pub fn from_fn(lattice: &Lattice, g: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..lattice.len()).map(|i| g(lattice.point(i))).collect();
        Self::new(lattice.clone(), values)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    /// New function on the same lattice with metadata cleared.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.lattice.clone(), values)
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| g(v)).collect())
    }

    /// Largest `|f(x) − f(−x)| / (1 + |f(x)|)` over the lattice.
    pub fn evenness_defect(&self) -> Result<(usize, f64)> {
        if !self.lattice.is_symmetric() {
            return Err(Error::AsymmetricLattice);
        }
        let mut worst = (0, 0.0);
        for (i, &v) in self.values.iter().enumerate() {
            let w = self.values[self.lattice.mirror(i)];
            let gap = if v.is_infinite() || w.is_infinite() {
                if v == w {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (v - w).abs() / (1.0 + v.abs())
            };
            if gap > worst.1 {
                worst = (i, gap);
            }
        }
        Ok(worst)
    }

    /// Errors unless the function is even to relative tolerance `tol`.
    pub fn require_even(&self, tol: f64) -> Result<()> {
        let (index, gap) = self.evenness_defect()?;
        if gap > tol {
            return Err(Error::EvennessViolation { index, gap });
        }
        Ok(())
    }

    /// Replaces `f` by `(f(x) + f(−x))/2`.
    pub fn symmetrize(&mut self) {
        let sym: Vec<f64> = (0..self.values.len())
            .map(|i| 0.5 * (self.values[i] + self.values[self.lattice.mirror(i)]))
            .collect();
        self.values = sym;
    }

    /// Lipschitz constant of the samples over lattice neighbours.
    pub fn lipschitz(&self) -> f64 {
        let mut lip: f64 = 0.0;
        let [n0, n1] = self.lattice.shape();
        for axis in 0..self.dim() {
            let h = self.lattice.axis(axis).spacing();
            for j in 0..n1 {
                for i in 0..n0 {
                    let (a, b) = if axis == 0 {
                        if i + 1 >= n0 {
                            continue;
                        }
                        (self.lattice.index(i, j), self.lattice.index(i + 1, j))
                    } else {
                        if j + 1 >= n1 {
                            continue;
                        }
                        (self.lattice.index(i, j), self.lattice.index(i, j + 1))
                    };
                    let d = (self.values[b] - self.values[a]) / h;
                    if d.is_finite() {
                        lip = lip.max(d.abs());
                    }
                }
            }
        }
        lip
    }

    /// Bilinear (linear in 1D) interpolation; points outside are clamped.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let (i, s) = self.lattice.axis(0).locate(x[0]);
        if self.dim() == 1 {
            let (a, b) = (self.values[i], self.values[i + 1]);
            return if s == 0.0 { a } else { a + s * (b - a) };
        }
        let (j, r) = self.lattice.axis(1).locate(x[1]);
        let v = |ii, jj| self.values[self.lattice.index(ii, jj)];
        let lo = v(i, j) + s * (v(i + 1, j) - v(i, j));
        let hi = v(i, j + 1) + s * (v(i + 1, j + 1) - v(i, j + 1));
        lo + r * (hi - lo)
    }

    /// Computes the range of interior discrete Hessian eigenvalues and stores
    /// it when strictly positive.
    pub fn certify_convexity(&mut self) -> Option<(f64, f64)> {
        let d = finite_diff(self);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in d.points.iter().flatten() {
            let (a, b) = sym_eigenvalues(&p.hess, self.dim());
            lo = lo.min(a);
            hi = hi.max(b);
        }
        self.convexity_window = if lo.is_finite() && lo > 0.0 { Some((lo, hi)) } else { None };
        self.convexity_window
    }
}

/// Eigenvalues `(min, max)` of a symmetric 1×1 or 2×2 matrix.
pub fn sym_eigenvalues(m: &[[f64; 2]; 2], dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (m[0][0], m[0][0]);
    }
    let tr = 0.5 * (m[0][0] + m[1][1]);
    let d = 0.5 * (m[0][0] - m[1][1]);
    let r = (d * d + m[0][1] * m[1][0]).max(0.0).sqrt();
    (tr - r, tr + r)
}

/// `M⁻¹ v · v` for a symmetric positive-definite 1×1 or 2×2 matrix.
pub fn inverse_quadratic_form(m: &[[f64; 2]; 2], v: &[f64; 2], dim: usize) -> f64 {
    if dim == 1 {
        return v[0] * v[0] / m[0][0];
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    (m[1][1] * v[0] * v[0] - (m[0][1] + m[1][0]) * v[0] * v[1] + m[0][0] * v[1] * v[1]) / det
}

/// Generators of sampled functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilySpec {
    /// `λ |x|² / 2`.
    Quadratic { lambda: f64 },
    /// `xᵀ A x / 2` in the plane.
    QuadraticMatrix { a: [[f64; 2]; 2] },
    /// `‖x‖_K^q / q`.
    GaugePower { body: Body, q: f64 },
    /// `Σ_k c_k |x|^{2k}`.
    EvenPoly { coeffs: Vec<f64> },
    /// `base(x − offset)`.
    Translated { base: Box<FamilySpec>, offset: [f64; 2] },
    /// Tabulated values in lattice order.
    Custom { values: Vec<f64> },
}

impl FamilySpec {
    pub fn quadratic(lambda: f64) -> Self {
        FamilySpec::Quadratic { lambda }
    }

    pub fn diag(a0: f64, a1: f64) -> Self {
        FamilySpec::QuadraticMatrix { a: [[a0, 0.0], [0.0, a1]] }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            FamilySpec::Quadratic { lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(Error::InvalidFamily(format!("quadratic needs lambda > 0, got {lambda}")));
                }
            }
            FamilySpec::QuadraticMatrix { a } => {
                if dim != 2 {
                    return Err(Error::DimensionMismatch { expected: 2, got: dim });
                }
                let (lo, _) = sym_eigenvalues(a, 2);
                if (a[0][1] - a[1][0]).abs() > 1e-12 || !(lo > 0.0) {
                    return Err(Error::InvalidFamily("quadratic matrix must be positive-definite".into()));
                }
            }
            FamilySpec::GaugePower { body, q } => {
                body.validate()?;
                if body.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: body.dim() });
                }
                if !(q.is_finite() && *q >= 1.0) {
                    return Err(Error::InvalidFamily(format!("gauge exponent must be >= 1, got {q}")));
                }
                if !body.contains_origin_interior() {
                    return Err(Error::OriginOutside);
                }
            }
            FamilySpec::EvenPoly { coeffs } => {
                if coeffs.len() < 2 || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidFamily("even polynomial needs at least two finite coefficients".into()));
                }
                if coeffs[1..].iter().any(|&c| c < 0.0) || coeffs[1..].iter().all(|&c| c == 0.0) {
                    return Err(Error::InvalidFamily("even polynomial needs nonnegative, not all zero, coefficients of |x|^2k, k >= 1".into()));
                }
            }
            FamilySpec::Translated { base, offset } => {
                if offset.iter().any(|o| !o.is_finite()) {
                    return Err(Error::InvalidFamily("non-finite offset".into()));
                }
                base.validate(dim)?;
            }
            FamilySpec::Custom { values } => {
                if values.iter().any(|v| v.is_nan()) {
                    return Err(Error::InvalidFamily("custom table contains NaN".into()));
                }
            }
        }
        Ok(())
    }

    /// Closed-form value at `x` (`x.len()` is the dimension). Panics for
    /// custom tables, which have no off-lattice values.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2 = || x.iter().map(|v| v * v).sum::<f64>();
        match self {
            FamilySpec::Quadratic { lambda } => 0.5 * lambda * r2(),
            FamilySpec::QuadraticMatrix { a } => {
                0.5 * (a[0][0] * x[0] * x[0] + (a[0][1] + a[1][0]) * x[0] * x[1] + a[1][1] * x[1] * x[1])
            }
            FamilySpec::GaugePower { body, q } => body.gauge(x).powf(*q) / q,
            FamilySpec::EvenPoly { coeffs } => {
                let s = r2();
                coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
            }
            FamilySpec::Translated { base, offset } => {
                let y: Vec<f64> = x.iter().zip(offset).map(|(a, b)| a - b).collect();
                base.eval(&y)
            }
            FamilySpec::Custom { .. } => panic!("custom tables have no closed form"),
        }
    }

    pub fn is_even(&self) -> bool {
        match self {
            FamilySpec::Quadratic { .. } | FamilySpec::QuadraticMatrix { .. } | FamilySpec::EvenPoly { .. } => true,
            FamilySpec::GaugePower { body, .. } => body.is_symmetric(),
            FamilySpec::Translated { base, offset } => offset == &[0.0, 0.0] && base.is_even(),
            FamilySpec::Custom { .. } => false,
        }
    }

    /// Exact Hessian lower bound `1/R` where the catalog has one (used for the
    /// domain-truncation warning).
    pub fn curvature_floor(&self) -> Option<f64> {
        match self {
            FamilySpec::Quadratic { lambda } => Some(*lambda),
            FamilySpec::QuadraticMatrix { a } => Some(sym_eigenvalues(a, 2).0),
            FamilySpec::EvenPoly { coeffs } => Some(2.0 * coeffs[1]).filter(|c| *c > 0.0),
            FamilySpec::Translated { base, .. } => base.curvature_floor(),
            _ => None,
        }
    }
}

/// Samples a catalog family on a lattice.
pub fn sample(family: &FamilySpec, lattice: &Lattice) -> Result<GridFunction> {
    family.validate(lattice.dim())?;
    let mut f = match family {
        FamilySpec::Custom { values } => {
            let mut f = GridFunction::new(lattice.clone(), values.clone())?;
            f.even = lattice.is_symmetric() && f.evenness_defect().map(|(_, g)| g <= 1e-12).unwrap_or(false);
            let d = finite_diff(&f);
            f.nonconvex_warning = d.points.iter().flatten().any(|p| sym_eigenvalues(&p.hess, lattice.dim()).0 < -1e-9);
            return Ok(f);
        }
        _ => GridFunction::from_fn(lattice, |p| family.eval(&p[..lattice.dim()]))?,
    };
    f.even = family.is_even() && lattice.is_symmetric();
    if f.even {
        // The generator is even; make the samples even bitwise as well.
        f.symmetrize();
    }
    Ok(f)
}

/// Warns (returns a message) when the lattice box is too small for the tail
/// of `e^{−F}` to be negligible, using `F ≥ |x|²/(2R)`.
pub fn truncation_warning(family: &FamilySpec, lattice: &Lattice) -> Option<String> {
    let floor = family.curvature_floor()?;
    let half = lattice.axes().iter().map(|a| 0.5 * (a.hi - a.lo)).fold(f64::INFINITY, f64::min);
    let tail = (-half * half * floor / 4.0).exp();
    (tail > 1e-6).then(|| format!("box half-width {half} leaves tail mass up to {tail:.3e} for curvature {floor}"))
}

/// Gradient and Hessian at one lattice point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDerivatives {
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

/// Central-difference derivatives. Boundary points and points whose stencil
/// touches `+∞` are `None`.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub points: Vec<Option<PointDerivatives>>,
}

impl Derivatives {
    pub fn evaluable(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }
}

pub fn finite_diff(f: &GridFunction) -> Derivatives {
    let lat = f.lattice();
    let v = f.values();
    let points = (0..lat.len())
        .map(|idx| {
            if !lat.is_interior(idx) {
                return None;
            }
            let d = central_at(lat, v, idx);
            let finite = d.grad.iter().all(|g| g.is_finite()) && d.hess.iter().flatten().all(|h| h.is_finite());
            finite.then_some(d)
        })
        .collect();
    Derivatives { points }
}

/// Central differences at an interior index; NaN or infinite output when the
/// stencil contains `+∞`.
pub(crate) fn central_at(lat: &Lattice, v: &[f64], idx: usize) -> PointDerivatives {
    let [i, j] = lat.multi_index(idx);
    let h0 = lat.axis(0).spacing();
    let at = |a: usize, b: usize| v[lat.index(a, b)];
    let c = v[idx];
    let mut grad = [0.0; 2];
    let mut hess = [[0.0; 2]; 2];
    grad[0] = (at(i + 1, j) - at(i - 1, j)) / (2.0 * h0);
    hess[0][0] = (at(i + 1, j) - 2.0 * c + at(i - 1, j)) / (h0 * h0);
    if lat.dim() == 2 {
        let h1 = lat.axis(1).spacing();
        grad[1] = (at(i, j + 1) - at(i, j - 1)) / (2.0 * h1);
        hess[1][1] = (at(i, j + 1) - 2.0 * c + at(i, j - 1)) / (h1 * h1);
        let m = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1)) / (4.0 * h0 * h1);
        hess[0][1] = m;
        hess[1][0] = m;
    }
    PointDerivatives { grad, hess }
}
