//! Experiment configuration.
//!
//! Files are line oriented: `[section]` headers, `key = value` pairs, `#`
//! comments and blank lines. Keys are addressed as `section.key`; keys
//! before the first header live in the `run` section.
//!
//! ```text
//! # quadratic family at p = 3
//! command = solve
//! seed = 7
//!
//! [lattice]
//! dim = 1
//! lo = -4
//! hi = 4
//! points = 129
//!
//! [family]
//! f0 = quad:1
//! f1 = quad:4
//!
//! [solver]
//! p = 3
//! layers = 33
//! ```
//!
//! Function, body and shadow values use a short grammar:
//!
//! * families: `quad:λ`, `diag:a,b`, `matrix:a11,a12,a22`,
//!   `even-poly:c0,c1,…`, `gauge:q:<body>`, `abs`, and `<family>@dx,dy` for
//!   a translate;
//! * bodies: `interval:lo,hi`, `box:x0,y0,x1,y1`, `disc:r`, `square:s`,
//!   `ellipse:a11,a12,a22`, `l1:s`, `ngon:n,r`;
//! * shadows: `disc:r`, `polydisc:r1,r2`, `ball:r`, `l1:r`,
//!   `staircase:extent:h0,h1,…`;
//! * test functions: `poly:c0,c1,…` meaning `Σ c_k x₁^k`.
//!
//! | Section | Keys |
//! |---------|------|
//! | `run` | `command`, `seed` |
//! | `lattice` | `dim`, `lo`, `hi`, `points` |
//! | `family` | `f0`, `f1`, `f`, `u`, `kind` (`one`, `linear`, `solve`) |
//! | `solver` | `p`, `layers`, `max_sweeps`, `tol`, `project_every`, `damping`, `hessian_floor` |
//! | `busemann` | `w`, `p` (comma list), `pairs` |
//! | `reinhardt` | `s0`, `s1`, `cells`, `samples` |
//! | `bodies` | `k0`, `k1`, `t` |
//! | `explore` | `lambdas` (two values), `epsilon` |
//! | `output` | `dir` |

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::geometry::Body;
use crate::grid::{FamilySpec, Lattice};
use crate::pde::SolverParams;
use crate::reinhardt::{ShadowSpec, DEFAULT_CELLS};
use crate::{Error, Result};

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

/// Raw `section.key → value` pairs in file order of sections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::from("run");
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|s| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
                    .ok_or_else(|| config_err(&format!("line {}", no + 1), format!("bad section header `{line}`")))?;
                section = name.to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(&format!("line {}", no + 1), format!("expected `key = value`, got `{line}`")))?;
            let key = format!("{section}.{}", k.trim());
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(config_err(&key, "duplicate key"));
            }
        }
        Ok(RawConfig { entries })
    }
}

fn parse_floats(field: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| config_err(field, format!("`{t}` is not a number"))))
        .collect()
}

fn exactly<const N: usize>(field: &str, s: &str) -> Result<[f64; N]> {
    let v = parse_floats(field, s)?;
    v.try_into().map_err(|v: Vec<f64>| config_err(field, format!("expected {N} numbers, got {}", v.len())))
}

pub fn parse_body(field: &str, s: &str) -> Result<Body> {
    let (kind, args) = s.split_once(':').unwrap_or((s, ""));
    let body = match kind.trim() {
        "interval" => {
            let [lo, hi] = exactly(field, args)?;
            Body::Interval { lo, hi }
        }
        "box" => {
            let [x0, y0, x1, y1] = exactly(field, args)?;
            Body::Box { lo: [x0, y0], hi: [x1, y1] }
        }
        "disc" => Body::disc(exactly::<1>(field, args)?[0]),
        "square" => Body::square(exactly::<1>(field, args)?[0]),
        "ellipse" => {
            let [a, b, c] = exactly(field, args)?;
            Body::Ellipsoid { a: [[a, b], [b, c]] }
        }
        "l1" => Body::L1Ball { scale: exactly::<1>(field, args)?[0] },
        "ngon" => {
            let [n, r] = exactly(field, args)?;
            if n.fract() != 0.0 || n < 3.0 {
                return Err(config_err(field, format!("polygon needs an integer n >= 3, got {n}")));
            }
            Body::regular_polygon(n as usize, r, 0.0)
        }
        other => return Err(config_err(field, format!("unknown body `{other}`"))),
    };
    body.validate().map_err(|e| config_err(field, e.to_string()))?;
    Ok(body)
}

/// Parses a family and validates it for the given dimension.
pub fn parse_family(field: &str, s: &str, dim: usize) -> Result<FamilySpec> {
    let f = parse_family_unchecked(field, s)?;
    f.validate(dim).map_err(|e| config_err(field, e.to_string()))?;
    Ok(f)
}

fn parse_family_unchecked(field: &str, s: &str) -> Result<FamilySpec> {
    if let Some((base, off)) = s.rsplit_once('@') {
        let offset = match parse_floats(field, off)?.as_slice() {
            [a] => [*a, 0.0],
            [a, b] => [*a, *b],
            _ => return Err(config_err(field, "offset needs one or two numbers")),
        };
        return Ok(FamilySpec::Translated { base: Box::new(parse_family_unchecked(field, base)?), offset });
    }
    let (kind, args) = s.split_once(':').unwrap_or((s, ""));
    Ok(match kind.trim() {
        "quad" => FamilySpec::quadratic(exactly::<1>(field, args)?[0]),
        "diag" => {
            let [a, b] = exactly(field, args)?;
            FamilySpec::diag(a, b)
        }
        "matrix" => {
            let [a, b, c] = exactly(field, args)?;
            FamilySpec::QuadraticMatrix { a: [[a, b], [b, c]] }
        }
        "even-poly" => FamilySpec::EvenPoly { coeffs: parse_floats(field, args)? },
        "gauge" => {
            let (q, body) = args.split_once(':').ok_or_else(|| config_err(field, "expected gauge:q:<body>"))?;
            let q = exactly::<1>(field, q)?[0];
            FamilySpec::GaugePower { body: parse_body(field, body)?, q }
        }
        "abs" => FamilySpec::GaugePower { body: Body::Interval { lo: -1.0, hi: 1.0 }, q: 1.0 },
        other => return Err(config_err(field, format!("unknown family `{other}`"))),
    })
}

pub fn parse_shadow(field: &str, s: &str) -> Result<ShadowSpec> {
    let (kind, args) = s.split_once(':').unwrap_or((s, ""));
    Ok(match kind.trim() {
        "disc" => ShadowSpec::Disc { radius: exactly::<1>(field, args)?[0] },
        "polydisc" => ShadowSpec::Polydisc { radii: exactly(field, args)? },
        "ball" => ShadowSpec::Ball { radius: exactly::<1>(field, args)?[0] },
        "l1" => ShadowSpec::L1 { radius: exactly::<1>(field, args)?[0] },
        "staircase" => {
            let (extent, heights) = args.split_once(':').ok_or_else(|| config_err(field, "expected staircase:extent:h0,h1,…"))?;
            ShadowSpec::Staircase { extent: exactly::<1>(field, extent)?[0], heights: parse_floats(field, heights)? }
        }
        other => return Err(config_err(field, format!("unknown shadow `{other}`"))),
    })
}

/// Polynomial test function `Σ c_k x₁^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub coeffs: Vec<f64>,
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

pub fn parse_test_function(field: &str, s: &str) -> Result<TestFunction> {
    match s.split_once(':') {
        Some(("poly", args)) => Ok(TestFunction { coeffs: parse_floats(field, args)? }),
        _ => Err(config_err(field, format!("expected poly:c0,c1,…, got `{s}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl LatticeConfig {
    pub fn build(&self) -> Result<Lattice> {
        match self.dim {
            1 => Lattice::line(self.lo, self.hi, self.points),
            _ => Lattice::square(self.lo, self.hi, self.points),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Option<String>,
    pub seed: u64,
    pub lattice: LatticeConfig,
    pub f0: FamilySpec,
    pub f1: FamilySpec,
    /// Single function for checks that take one.
    pub family: FamilySpec,
    pub u: TestFunction,
    pub p: f64,
    pub solver: SolverParams,
    /// Plane potential for the ray functional.
    pub w: FamilySpec,
    pub busemann_p: Vec<f64>,
    pub pairs: usize,
    pub s0: ShadowSpec,
    pub s1: ShadowSpec,
    pub cells: usize,
    pub t_samples: usize,
    pub k0: Body,
    pub k1: Body,
    /// Combination parameter for body checks.
    pub t: f64,
    /// `λ0, λ1` of the exploration data.
    pub lambdas: (f64, f64),
    pub epsilon: f64,
    /// Which family `interp` and `alpha` build: `one`, `linear` or `solve`.
    pub kind: FamilyKind,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    One,
    Linear,
    Solve,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(FamilyKind::One),
            "linear" => Ok(FamilyKind::Linear),
            "solve" => Ok(FamilyKind::Solve),
            _ => Err(config_err("family.kind", format!("expected one, linear or solve, got `{s}`"))),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            seed: 7,
            lattice: LatticeConfig { dim: 1, lo: -4.0, hi: 4.0, points: 129 },
            f0: FamilySpec::quadratic(1.0),
            f1: FamilySpec::quadratic(4.0),
            family: FamilySpec::quadratic(1.0),
            u: TestFunction { coeffs: vec![0.0, 1.0, 0.5] },
            p: 2.0,
            solver: SolverParams::default(),
            w: FamilySpec::quadratic(1.0),
            busemann_p: vec![0.5, 1.0, 2.0, 5.0],
            pairs: 100,
            s0: ShadowSpec::Polydisc { radii: [1.0, 1.0] },
            s1: ShadowSpec::L1 { radius: 2.0 },
            cells: DEFAULT_CELLS,
            t_samples: 9,
            k0: Body::disc(1.0),
            k1: Body::Ellipsoid { a: [[1.0, 0.3], [0.3, 0.5]] },
            t: 0.5,
            lambdas: (1.0, 2.0),
            epsilon: 0.1,
            kind: FamilyKind::One,
            out: None,
        }
    }
}

const KEYS: &[&str] = &[
    "run.command",
    "run.seed",
    "lattice.dim",
    "lattice.lo",
    "lattice.hi",
    "lattice.points",
    "family.f0",
    "family.f1",
    "family.f",
    "family.u",
    "family.kind",
    "solver.p",
    "solver.layers",
    "solver.max_sweeps",
    "solver.tol",
    "solver.project_every",
    "solver.damping",
    "solver.hessian_floor",
    "busemann.w",
    "busemann.p",
    "busemann.pairs",
    "reinhardt.s0",
    "reinhardt.s1",
    "reinhardt.cells",
    "reinhardt.samples",
    "bodies.k0",
    "bodies.k1",
    "bodies.t",
    "explore.lambdas",
    "explore.epsilon",
    "output.dir",
];

fn num<T: std::str::FromStr>(field: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| config_err(field, format!("cannot parse `{s}`")))
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    /// Defaults overridden by the entries of `raw`, then validated.
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for k in raw.entries.keys() {
            if !KEYS.contains(&k.as_str()) {
                return Err(config_err(k, "unknown key"));
            }
        }
        let get = |k: &str| raw.entries.get(k).map(String::as_str);
        if let Some(v) = get("run.command") {
            cfg.command = Some(v.to_string());
        }
        if let Some(v) = get("run.seed") {
            cfg.seed = num("run.seed", v)?;
        }
        if let Some(v) = get("lattice.dim") {
            cfg.lattice.dim = num("lattice.dim", v)?;
        }
        if let Some(v) = get("lattice.lo") {
            cfg.lattice.lo = num("lattice.lo", v)?;
        }
        if let Some(v) = get("lattice.hi") {
            cfg.lattice.hi = num("lattice.hi", v)?;
        }
        if let Some(v) = get("lattice.points") {
            cfg.lattice.points = num("lattice.points", v)?;
        }
        let dim = cfg.lattice.dim;
        for (key, slot) in [("family.f0", &mut cfg.f0), ("family.f1", &mut cfg.f1), ("family.f", &mut cfg.family)] {
            if let Some(v) = get(key) {
                *slot = parse_family(key, v, dim)?;
            }
        }
        if let Some(v) = get("family.u") {
            cfg.u = parse_test_function("family.u", v)?;
        }
        if let Some(v) = get("solver.p") {
            cfg.p = num("solver.p", v)?;
        }
        let s = &mut cfg.solver;
        if let Some(v) = get("solver.layers") {
            s.layers = num("solver.layers", v)?;
        }
        if let Some(v) = get("solver.max_sweeps") {
            s.max_sweeps = num("solver.max_sweeps", v)?;
        }
        if let Some(v) = get("solver.tol") {
            s.tol = num("solver.tol", v)?;
        }
        if let Some(v) = get("solver.project_every") {
            s.project_every = num("solver.project_every", v)?;
        }
        if let Some(v) = get("solver.damping") {
            s.damping = num("solver.damping", v)?;
        }
        if let Some(v) = get("solver.hessian_floor") {
            s.hessian_floor = num("solver.hessian_floor", v)?;
        }
        if let Some(v) = get("busemann.w") {
            cfg.w = parse_family("busemann.w", v, 2)?;
        }
        if let Some(v) = get("busemann.p") {
            cfg.busemann_p = parse_floats("busemann.p", v)?;
        }
        if let Some(v) = get("busemann.pairs") {
            cfg.pairs = num("busemann.pairs", v)?;
        }
        if let Some(v) = get("reinhardt.s0") {
            cfg.s0 = parse_shadow("reinhardt.s0", v)?;
        }
        if let Some(v) = get("reinhardt.s1") {
            cfg.s1 = parse_shadow("reinhardt.s1", v)?;
        }
        if let Some(v) = get("reinhardt.cells") {
            cfg.cells = num("reinhardt.cells", v)?;
        }
        if let Some(v) = get("reinhardt.samples") {
            cfg.t_samples = num("reinhardt.samples", v)?;
        }
        if let Some(v) = get("family.kind") {
            cfg.kind = v.parse()?;
        }
        for (key, slot) in [("bodies.k0", &mut cfg.k0), ("bodies.k1", &mut cfg.k1)] {
            if let Some(v) = get(key) {
                *slot = parse_body(key, v)?;
            }
        }
        if let Some(v) = get("bodies.t") {
            cfg.t = num("bodies.t", v)?;
        }
        if let Some(v) = get("explore.lambdas") {
            let [a, b] = exactly::<2>("explore.lambdas", v)?;
            cfg.lambdas = (a, b);
        }
        if let Some(v) = get("explore.epsilon") {
            cfg.epsilon = num("explore.epsilon", v)?;
        }
        if let Some(v) = get("output.dir") {
            cfg.out = Some(PathBuf::from(v));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field against the preconditions of the module that
    /// consumes it; errors name the field.
    pub fn validate(&self) -> Result<()> {
        let l = &self.lattice;
        if !(l.dim == 1 || l.dim == 2) {
            return Err(config_err("lattice.dim", format!("must be 1 or 2, got {}", l.dim)));
        }
        if !(l.lo.is_finite() && l.hi.is_finite() && l.lo < l.hi) {
            return Err(config_err("lattice.lo", format!("need finite lo < hi, got [{}, {}]", l.lo, l.hi)));
        }
        if l.points < 5 {
            return Err(config_err("lattice.points", format!("need at least 5, got {}", l.points)));
        }
        for (key, f) in [("family.f0", &self.f0), ("family.f1", &self.f1), ("family.f", &self.family)] {
            f.validate(l.dim).map_err(|e| config_err(key, e.to_string()))?;
        }
        if !(self.p >= 1.0) {
            return Err(config_err("solver.p", format!("the solver needs p >= 1, got {}", self.p)));
        }
        self.solver.validate().map_err(|e| match e {
            Error::Config { field, message } => config_err(&format!("solver.{field}"), message),
            e => e,
        })?;
        self.w.validate(2).map_err(|e| config_err("busemann.w", e.to_string()))?;
        if self.busemann_p.is_empty() || self.busemann_p.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(config_err("busemann.p", "need positive exponents"));
        }
        if self.pairs == 0 {
            return Err(config_err("busemann.pairs", "must be at least 1"));
        }
        if self.cells < 2 {
            return Err(config_err("reinhardt.cells", "must be at least 2"));
        }
        if self.t_samples < 2 {
            return Err(config_err("reinhardt.samples", "must be at least 2"));
        }
        for (key, s) in [("reinhardt.s0", &self.s0), ("reinhardt.s1", &self.s1)] {
            s.build(self.cells).map_err(|e| config_err(key, e.to_string()))?;
        }
        for (key, k) in [("bodies.k0", &self.k0), ("bodies.k1", &self.k1)] {
            k.validate().map_err(|e| config_err(key, e.to_string()))?;
        }
        if !(0.0..=1.0).contains(&self.t) {
            return Err(config_err("bodies.t", format!("must lie in [0, 1], got {}", self.t)));
        }
        if !(self.lambdas.0 > 0.0 && self.lambdas.1 > 0.0) {
            return Err(config_err("explore.lambdas", "need positive values"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(config_err("explore.epsilon", format!("need a finite non-negative value, got {}", self.epsilon)));
        }
        Ok(())
    }
}
