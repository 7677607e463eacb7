//! The acceptance battery. Every criterion is a list of [`CheckReport`]s
//! computed from one seed; a criterion passes when all of its reports do.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::busemann::{busemann_alpha_p, check_busemann_variance, check_h_convexity};
use crate::checks::{
    b_family, check_b_family, check_brascamp_lieb, check_brunn_minkowski, check_duality_identity, check_gaussian_even_gap,
    check_prekopa, check_santalo, combination_volume, santalo_product, volume_via_gauge, CheckReport, Location,
};
use crate::geometry::Body;
use crate::grid::{sample, FamilySpec, GridFunction, Lattice};
use crate::interp::SpaceTimeField;
use crate::legendre::{biconjugate, legendre_nd, legendre_nd_with, DualLattice, Mode};
use crate::measures::{ipp_residual, smooth_bump};
use crate::pde::{power_mean_lambda, solve_p_interpolation, SolverParams};
use crate::reinhardt::{check_reinhardt_logconcavity, reinhardt_interpolate, reinhardt_volume, ShadowGauge, DEFAULT_CELLS, VOLUME_TOL};
use crate::report::to_json;
use crate::{Error, Result};

pub const CRITERIA: [&str; 15] = [
    "legendre involution",
    "transform oracle",
    "quadratic p-family",
    "midpoint self-duality",
    "prekopa",
    "brunn-minkowski",
    "gauge volume identity",
    "brascamp-lieb",
    "santalo",
    "duality identity",
    "integration by parts",
    "busemann",
    "reinhardt",
    "b-family",
    "determinism",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: usize,
    pub name: String,
    pub pass: bool,
    pub checks: Vec<CheckReport>,
}

impl Criterion {
    fn new(id: usize, seed: u64, checks: Vec<CheckReport>) -> Self {
        let checks: Vec<CheckReport> = checks.into_iter().map(|c| c.with_seed(seed)).collect();
        let pass = !checks.is_empty() && checks.iter().filter(|c| !c.exploratory).all(|c| c.pass);
        Criterion { id, name: CRITERIA[id - 1].into(), pass, checks }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub pass: bool,
    pub criteria: Vec<Criterion>,
}

impl SuiteReport {
    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

/// A failed report standing in for a check that returned an error.
fn errored(name: &str, e: Error) -> CheckReport {
    CheckReport::new(name, f64::NEG_INFINITY, 0.0, "error").note(e.to_string())
}

fn guard(name: &str, r: Result<Vec<CheckReport>>) -> Vec<CheckReport> {
    r.unwrap_or_else(|e| vec![errored(name, e)])
}

fn rng_for(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    rng
}

/// Criteria 1 to 14 (the determinism criterion compares two whole runs, see
/// [`determinism`]).
pub fn run_suite(seed: u64) -> SuiteReport {
    let criteria: Vec<Criterion> = (1..=14).into_par_iter().map(|id| run_criterion(id, seed)).collect();
    let pass = criteria.iter().all(|c| c.pass);
    SuiteReport { seed, pass, criteria }
}

pub fn run_criterion(id: usize, seed: u64) -> Criterion {
    let mut rng = rng_for(seed, id);
    let checks = match id {
        1 => legendre_involution(&mut rng),
        2 => transform_oracle(&mut rng),
        3 => quadratic_family(),
        4 => self_duality(),
        5 => prekopa(&mut rng),
        6 => brunn_minkowski(&mut rng),
        7 => gauge_volume(),
        8 => brascamp_lieb(&mut rng),
        9 => santalo(&mut rng),
        10 => duality_identity(),
        11 => integration_by_parts(),
        12 => busemann(&mut rng),
        13 => reinhardt(),
        14 => b_family_criterion(&mut rng),
        15 => return determinism(&run_suite(seed)),
        _ => vec![errored("criterion", Error::InvalidParameter(format!("no criterion {id}")))],
    };
    Criterion::new(id, seed, checks)
}

/// Reruns criteria 1 to 14 and compares the JSON byte for byte with `first`.
pub fn determinism(first: &SuiteReport) -> Criterion {
    let again = run_suite(first.seed);
    let check = match (first.to_json(), again.to_json()) {
        (Ok(a), Ok(b)) => {
            let differing = a.bytes().zip(b.bytes()).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
            CheckReport::new("suite-json-identical", -(differing as f64), 0.0, "two runs with one seed")
                .note(format!("{} bytes compared", a.len()))
        }
        (Err(e), _) | (_, Err(e)) => errored("suite-json-identical", e),
    };
    Criterion::new(15, first.seed, vec![check])
}

// Random catalog.

fn random_body(rng: &mut ChaCha8Rng, dim: usize, symmetric: bool) -> Body {
    if dim == 1 {
        let a = rng.gen_range(0.5..2.0);
        let b = if symmetric { a } else { rng.gen_range(0.5..2.0) };
        return Body::Interval { lo: -a, hi: b };
    }
    match rng.gen_range(0..5) {
        0 => Body::disc(rng.gen_range(0.5..2.0)),
        1 => {
            let (l0, l1, th) = (rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0), rng.gen_range(0.0..PI));
            let (c, s) = (th.cos(), th.sin());
            let a = [[l0 * c * c + l1 * s * s, (l0 - l1) * c * s], [(l0 - l1) * c * s, l0 * s * s + l1 * c * c]];
            Body::Ellipsoid { a }
        }
        2 => {
            let (a, b) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
            if symmetric {
                Body::Box { lo: [-a, -b], hi: [a, b] }
            } else {
                Body::Box { lo: [-a, -rng.gen_range(0.3..1.0)], hi: [rng.gen_range(0.3..1.0), b] }
            }
        }
        3 => Body::L1Ball { scale: rng.gen_range(0.5..2.0) },
        _ => {
            let n = if symmetric { 2 * rng.gen_range(2..5) } else { rng.gen_range(3..9) };
            Body::regular_polygon(n, rng.gen_range(0.6..2.0), rng.gen_range(0.0..PI))
        }
    }
}

fn spd(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [[f64; 2]; 2] {
    let (l0, l1, th) = (rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(0.0..PI));
    let (c, s) = (th.cos(), th.sin());
    let off = (l0 - l1) * c * s;
    [[l0 * c * c + l1 * s * s, off], [off, l0 * s * s + l1 * c * c]]
}

/// Strongly convex catalog members; translated unless `even`.
fn random_strong(rng: &mut ChaCha8Rng, dim: usize, even: bool) -> FamilySpec {
    let base = match (dim, rng.gen_range(0..3)) {
        (2, 0) => FamilySpec::QuadraticMatrix { a: spd(rng, 0.5, 2.0) },
        (_, 1) => FamilySpec::EvenPoly { coeffs: vec![rng.gen_range(-1.0..1.0), rng.gen_range(0.25..1.0), rng.gen_range(0.0..0.2)] },
        _ => FamilySpec::quadratic(rng.gen_range(0.5..2.0)),
    };
    if even || rng.gen_bool(0.5) {
        return base;
    }
    let offset = [rng.gen_range(-0.5..0.5), if dim == 2 { rng.gen_range(-0.5..0.5) } else { 0.0 }];
    FamilySpec::Translated { base: Box::new(base), offset }
}

/// Any convex catalog member, including gauge powers.
fn random_convex(rng: &mut ChaCha8Rng, dim: usize, even: bool) -> FamilySpec {
    if rng.gen_bool(0.4) {
        let body = random_body(rng, dim, even);
        return FamilySpec::GaugePower { body, q: rng.gen_range(1.5..3.0) };
    }
    random_strong(rng, dim, even)
}

fn line(l: f64, n: usize) -> Lattice {
    Lattice::line(-l, l, n).expect("static lattice")
}

fn square(l: f64, n: usize) -> Lattice {
    Lattice::square(-l, l, n).expect("static lattice")
}

// 1. Legendre involution.

fn legendre_involution(rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let specs: Vec<(usize, FamilySpec)> = (0..25)
        .map(|k| {
            let dim = if k < 15 { 1 } else { 2 };
            let f = if rng.gen_bool(0.2) {
                FamilySpec::GaugePower { body: random_body(rng, dim, false), q: 1.0 }
            } else {
                random_convex(rng, dim, false)
            };
            (dim, f)
        })
        .collect();
    let run = |dim: usize, f: &FamilySpec| -> Result<(f64, f64, f64)> {
        let levels: &[usize] = if dim == 1 { &[65, 129, 257, 513] } else { &[33, 65, 129, 257] };
        let mut errors = Vec::new();
        let mut bound = 0.0;
        for &n in levels {
            let lat = if dim == 1 { line(3.0, n) } else { square(3.0, n) };
            let g = sample(f, &lat)?;
            let ff = biconjugate(&g, &DualLattice::auto(&g)?)?;
            let err = (0..lat.len())
                .filter(|&k| lat.in_window(k, 0.5))
                .map(|k| (ff.value(k) - g.value(k)).abs())
                .fold(0.0, f64::max);
            if n == levels[0] {
                bound = 2.0 * lat.h() * g.lipschitz();
            }
            errors.push(err);
        }
        Ok((errors[0], bound, observed_order(&errors, 1e-12 * (1.0 + bound))))
    };
    let results: Vec<Result<(f64, f64, f64)>> = specs.par_iter().map(|(d, f)| run(*d, f)).collect();
    let mut out = Vec::new();
    let (mut worst, mut worst_order) = ((f64::INFINITY, 0), (f64::INFINITY, 0));
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok((err, bound, order)) => {
                if bound - err < worst.0 {
                    worst = (bound - err, k);
                }
                if order < worst_order.0 {
                    worst_order = (order, k);
                }
            }
            Err(e) => out.push(errored("legendre-involution", e)),
        }
    }
    out.push(
        CheckReport::new("legendre-involution", worst.0, 0.0, "biconjugate on the central half-window")
            .note(format!("25 functions; tightest at catalog entry {}", worst.1)),
    );
    let order = if worst_order.0.is_finite() { worst_order.0 } else { 99.0 };
    out.push(
        CheckReport::new("legendre-order", order - 0.9, 0.0, "dyadic refinement of the biconjugate")
            .note(format!("smallest observed order {order:.4} at catalog entry {}", worst_order.1)),
    );
    out
}

/// Least-squares slope of `-log2(error)` against the refinement level;
/// infinite when every error is below `floor`.
fn observed_order(errors: &[f64], floor: f64) -> f64 {
    if errors.iter().all(|&e| e <= floor) {
        return f64::INFINITY;
    }
    let ys: Vec<f64> = errors.iter().map(|&e| -e.max(floor).log2()).collect();
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (num, den) = ys.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, y)| {
        let dx = i as f64 - xm;
        (a + dx * (y - ym), b + dx * dx)
    });
    num / den
}

// 2. Transform oracle.

/// Exhaustive maximum of `x_j y_l + (x_i y_k − f_ij)`, the evaluation order
/// of the factorized passes.
fn brute_transform(f: &GridFunction, dual: &Lattice) -> Vec<f64> {
    let lat = f.lattice();
    if lat.dim() == 1 {
        let xs = lat.axis(0).points();
        return dual
            .axis(0)
            .points()
            .iter()
            .map(|&y| xs.iter().zip(f.values()).map(|(x, v)| x * y - v).fold(f64::NEG_INFINITY, f64::max))
            .collect();
    }
    let (xs0, xs1) = (lat.axis(0).points(), lat.axis(1).points());
    let (ys0, ys1) = (dual.axis(0).points(), dual.axis(1).points());
    let n0 = xs0.len();
    let mut out = vec![0.0; ys0.len() * ys1.len()];
    out.par_iter_mut().enumerate().for_each(|(idx, o)| {
        let (k, l) = (idx % ys0.len(), idx / ys0.len());
        let mut best = f64::NEG_INFINITY;
        for (j, &x1) in xs1.iter().enumerate() {
            let a = x1 * ys1[l];
            for (i, &x0) in xs0.iter().enumerate() {
                best = best.max(a + (x0 * ys0[k] - f.values()[i + n0 * j]));
            }
        }
        *o = best;
    });
    out
}

fn transform_oracle(rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    let mut out = Vec::new();
    for k in 0..10 {
        let dim = if k < 5 { 1 } else { 2 };
        let lat = if dim == 1 { line(2.0, 129) } else { square(2.0, 65) };
        let spec = random_convex(rng, dim, false);
        let noise: Vec<f64> = (0..lat.len()).map(|_| rng.gen_range(-0.05..0.05)).collect();
        let r = (|| -> Result<()> {
            let g = sample(&spec, &lat)?;
            let f = g.with_values(g.values().iter().zip(&noise).map(|(a, b)| a + b).collect())?;
            let dual = DualLattice::auto(&f)?;
            let brute = brute_transform(&f, &dual.lattice);
            let sup = legendre_nd_with(&f, &dual, Mode::LatticeSup)?;
            let clamped = legendre_nd(&f, &dual)?;
            for (j, b) in brute.iter().enumerate() {
                compared += 1;
                if sup.value(j).to_bits() != b.to_bits() {
                    mismatches += 1;
                }
                let c = clamped.value(j);
                if c.is_finite() && c.to_bits() != b.to_bits() {
                    mismatches += 1;
                }
            }
            Ok(())
        })();
        if let Err(e) = r {
            out.push(errored("transform-oracle", e));
        }
    }
    out.push(
        CheckReport::new("transform-oracle", -(mismatches as f64), 0.0, "exhaustive maximum over the samples")
            .note(format!("{compared} dual points compared, {mismatches} differing bit patterns")),
    );
    out
}

// 3. Quadratic p-family.

fn quadratic_family() -> Vec<CheckReport> {
    let lat = line(4.0, 129);
    let params = SolverParams { layers: 33, ..Default::default() };
    [1.5, 2.0, 3.0, 10.0]
        .par_iter()
        .map(|&p| {
            let name = format!("quadratic-family-p{p}");
            let r = (|| -> Result<CheckReport> {
                let (f0, f1) = (sample(&FamilySpec::quadratic(1.0), &lat)?, sample(&FamilySpec::quadratic(4.0), &lat)?);
                let (field, rep) = solve_p_interpolation(&f0, &f1, p, &params)?;
                let mut worst = (0.0f64, 0.0, 0.0);
                for (i, layer) in field.layers().iter().enumerate() {
                    let lam = power_mean_lambda(1.0, 4.0, p, field.time(i));
                    for k in 0..lat.len() {
                        let x = lat.point(k)[0];
                        if x.abs() > 0.5 * lat.h() {
                            let e = (layer.value(k) / (lam * x * x / 2.0) - 1.0).abs();
                            if e > worst.0 {
                                worst = (e, field.time(i), x);
                            }
                        }
                    }
                }
                Ok(CheckReport::new(&name, -worst.0, 1e-3, "power-mean closed form, 33 x 129")
                    .with_location(Location::at(worst.1, &[worst.2]))
                    .note(format!("converged = {}, sweeps = {}, residual = {:.3e}", rep.converged, rep.sweeps, rep.final_residual)))
            })();
            r.unwrap_or_else(|e| errored(&name, e))
        })
        .collect()
}

// 4. Midpoint self-duality.

fn self_duality() -> Vec<CheckReport> {
    // (dimension, F0, half-width, points per axis, layers)
    let cases: Vec<(usize, FamilySpec, f64, usize, usize)> = vec![
        (1, FamilySpec::quadratic(1.5), 4.0, 129, 33),
        (1, FamilySpec::EvenPoly { coeffs: vec![0.0, 0.5, 0.05] }, 3.0, 61, 33),
        (1, FamilySpec::EvenPoly { coeffs: vec![0.3, 0.6, 0.02] }, 3.0, 61, 33),
        (2, FamilySpec::diag(1.0, 2.0), 3.0, 33, 17),
        (2, FamilySpec::QuadraticMatrix { a: [[1.5, 0.4], [0.4, 1.0]] }, 3.0, 33, 17),
    ];
    cases
        .par_iter()
        .enumerate()
        .map(|(k, (dim, spec, l, n, layers))| {
            let name = format!("self-duality-{}", k + 1);
            let r = (|| -> Result<CheckReport> {
                let (lat, wide) = if *dim == 1 { (line(*l, *n), line(10.0, 4001)) } else { (square(*l, *n), square(8.0, 641)) };
                let layers = *layers;
                let f0 = sample(spec, &lat)?;
                // 𝓛F0 on the primal lattice, from a wide fine sample of F0.
                let lf = legendre_nd(&sample(spec, &wide)?, &DualLattice::explicit(lat.clone()))?;
                let (field, rep) = solve_p_interpolation(&f0, &lf, 2.0, &SolverParams { layers, ..Default::default() })?;
                let mid = field.layer(layers / 2);
                let mut worst = (0.0f64, [0.0; 2]);
                for i in (0..lat.len()).filter(|&i| lat.in_window(i, 0.5)) {
                    let x = lat.point(i);
                    let e = (mid.value(i) - 0.5 * (x[0] * x[0] + x[1] * x[1])).abs();
                    if e > worst.0 {
                        worst = (e, x);
                    }
                }
                Ok(CheckReport::new(&name, -worst.0, 5e-3, "middle layer between F and its transform at p = 2")
                    .with_location(Location::at(0.5, &worst.1[..*dim]))
                    .note(format!("converged = {}, sweeps = {}", rep.converged, rep.sweeps)))
            })();
            r.unwrap_or_else(|e| errored(&name, e))
        })
        .collect()
}

// 5. Prékopa.

fn prekopa(rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let pairs: Vec<(usize, FamilySpec, FamilySpec)> = (0..20)
        .map(|k| {
            let dim = if k < 12 { 1 } else { 2 };
            (dim, random_convex(rng, dim, false), random_convex(rng, dim, false))
        })
        .collect();
    pairs
        .par_iter()
        .flat_map(|(dim, a, b)| {
            let lat = if *dim == 1 { line(10.0, 401) } else { square(8.0, 65) };
            let r = (|| check_prekopa(&sample(a, &lat)?, &sample(b, &lat)?, 17))();
            guard("prekopa", r)
        })
        .collect()
}

// 6. Brunn–Minkowski.

fn brunn_minkowski(rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let (k0, k1) = (Body::Interval { lo: -1.0, hi: 1.0 }, Body::Interval { lo: -3.0, hi: 3.0 });
    match combination_volume(&k0, &k1, 0.5) {
        Ok((v, _, _)) => out.push(CheckReport::new("brunn-minkowski-exact", -(v - 4.0).abs(), 0.0, "intervals [-1,1] and [-3,3] at t = 1/2")),
        Err(e) => out.push(errored("brunn-minkowski-exact", e)),
    }
    match check_brunn_minkowski(&k0, &k1, 0.5) {
        Ok(r) => {
            let expected = (4.0 - 12f64.sqrt()) / 12f64.sqrt();
            out.push(CheckReport::new("brunn-minkowski-exact-margin", -(r.margin - expected).abs(), 0.0, "relative margin (4 - sqrt 12) / sqrt 12"));
        }
        Err(e) => out.push(errored("brunn-minkowski-exact-margin", e)),
    }
    for k in 0..20 {
        let dim = if k < 6 { 1 } else { 2 };
        let (a, b) = (random_body(rng, dim, false), random_body(rng, dim, false));
        for t in [0.25, 0.5, 0.75] {
            out.push(check_brunn_minkowski(&a, &b, t).unwrap_or_else(|e| errored("brunn-minkowski", e)));
        }
    }
    out
}

// 7. Gauge volume identity.

fn gauge_volume() -> Vec<CheckReport> {
    let bodies = [
        ("interval", Body::Interval { lo: -1.0, hi: 2.0 }, 3.0),
        ("disc", Body::disc(1.3), PI * 1.69),
        ("square", Body::square(0.8), 2.56),
    ];
    let mut out = Vec::new();
    for (label, body, exact) in &bodies {
        for p in [1.0, 2.0, 4.0] {
            let name = format!("gauge-volume-{label}-p{p}");
            out.push(match volume_via_gauge(body, p) {
                Ok(v) => CheckReport::new(&name, -(v / exact - 1.0).abs(), 1e-3, "integral of exp(-gauge^p/p) over c_{n,p}"),
                Err(e) => errored(&name, e),
            });
        }
    }
    out
}

// 8. Brascamp–Lieb.

fn random_test_function(rng: &mut ChaCha8Rng, dim: usize) -> impl Fn([f64; 2]) -> f64 {
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = rng.gen_range(0.5..2.0);
    let two = if dim == 2 { 1.0 } else { 0.0 };
    move |x: [f64; 2]| c[0] * x[0] + c[1] * x[0] * x[0] + c[2] * x[0].powi(3) / 3.0 + c[3] * (a * x[0]).sin() + two * (c[4] * x[1] + c[5] * x[0] * x[1])
}

fn brascamp_lieb(rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let cases: Vec<(usize, FamilySpec, Box<dyn Fn([f64; 2]) -> f64 + Send + Sync>)> = (0..50)
        .map(|k| {
            let dim = if k < 35 { 1 } else { 2 };
            let f = random_strong(rng, dim, false);
            let u = random_test_function(rng, dim);
            (dim, f, Box::new(u) as Box<dyn Fn([f64; 2]) -> f64 + Send + Sync>)
        })
        .collect();
    let mut out: Vec<CheckReport> = cases
        .par_iter()
        .map(|(dim, f, u)| {
            let lat = if *dim == 1 { line(10.0, 801) } else { square(7.0, 81) };
            let r = (|| check_brascamp_lieb(&sample(f, &lat)?, &GridFunction::from_fn(&lat, |x| u(x))?))();
            r.unwrap_or_else(|e| errored("brascamp-lieb", e))
        })
        .collect();
    let lat = line(12.0, 4801);
    let gauss = |lat: &Lattice| sample(&FamilySpec::quadratic(1.0), lat);
    let fixed = |name: &str, target: f64, tol: f64, r: Result<CheckReport>| match r {
        Ok(r) => CheckReport::new(name, -(r.margin - target).abs(), tol, "Gaussian measure").note(format!("margin = {:.12e}", r.margin)),
        Err(e) => errored(name, e),
    };
    let lin = line(12.0, 1201);
    out.push(fixed(
        "brascamp-lieb-linear-equality",
        0.0,
        1e-4,
        (|| check_brascamp_lieb(&gauss(&lin)?, &GridFunction::from_fn(&lin, |x| x[0])?))(),
    ));
    out.push(fixed("even-gap-x2", 0.0, 1e-4, (|| check_gaussian_even_gap(&GridFunction::from_fn(&lat, |x| x[0] * x[0])?))()));
    out.push(fixed("even-gap-x4", 24.0, 0.1, (|| check_gaussian_even_gap(&GridFunction::from_fn(&lat, |x| x[0].powi(4))?))()));
    out
}

// 9. Santaló.

fn santalo(rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let specs: Vec<(usize, FamilySpec)> = (0..20)
        .map(|k| {
            let dim = if k < 12 { 1 } else { 2 };
            let f = if rng.gen_bool(0.5) {
                FamilySpec::GaugePower { body: random_body(rng, dim, true), q: rng.gen_range(1.0..3.0) }
            } else {
                FamilySpec::EvenPoly { coeffs: vec![rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.1..1.0)] }
            };
            (dim, f)
        })
        .collect();
    let mut out: Vec<CheckReport> = specs
        .par_iter()
        .map(|(dim, f)| {
            let lat = if *dim == 1 { line(12.0, 2401) } else { square(8.0, 241) };
            let r = (|| check_santalo(&sample(f, &lat)?))();
            r.unwrap_or_else(|e| errored("santalo", e))
        })
        .collect();
    let tau = 2.0 * PI;
    match (|| check_santalo(&sample(&FamilySpec::quadratic(1.0), &line(12.0, 1201))?))() {
        Ok(r) => out.push(CheckReport::new("santalo-gaussian-equality", -r.margin.abs(), 1e-3 * tau, "standard Gaussian").note(format!("margin = {:.12e}", r.margin))),
        Err(e) => out.push(errored("santalo-gaussian-equality", e)),
    }
    match (|| santalo_product(&GridFunction::from_fn(&line(40.0, 4001), |x| x[0].abs())?))() {
        Ok(v) => out.push(CheckReport::new("santalo-abs", -(v - 4.0).abs(), 1e-3, "f = |x|, transform the indicator of [-1, 1]").note(format!("product = {v:.12e}"))),
        Err(e) => out.push(errored("santalo-abs", e)),
    }
    out
}

// 10. Duality identity.

fn duality_identity() -> Vec<CheckReport> {
    let lat = line(3.0, 601);
    let families: [(&str, fn(f64, [f64; 2]) -> f64); 2] =
        [("quadratic", |t, x| 0.5 * (1.0 + t) * x[0] * x[0]), ("quartic", |t, x| 0.25 * (1.0 + t) * x[0].powi(4))];
    families
        .iter()
        .map(|(label, g)| {
            let name = format!("duality-{label}");
            let r = (|| check_duality_identity(&SpaceTimeField::from_fn(&lat, 0.0, 1.0, 21, g)?, 0.25))();
            match r {
                Ok(mut r) => {
                    r.name = name;
                    r
                }
                Err(e) => errored(&name, e),
            }
        })
        .collect()
}

// 11. Integration by parts.

fn integration_by_parts() -> Vec<CheckReport> {
    let res: Result<Vec<f64>> = [161usize, 321, 641]
        .iter()
        .map(|&n| {
            let l = line(8.0, n);
            let f = sample(&FamilySpec::quadratic(1.0), &l)?;
            ipp_residual(&f, &GridFunction::from_fn(&l, |x| x[0] * smooth_bump(x[0], 2.0, 5.0))?)
        })
        .collect();
    match res {
        Ok(r) => {
            let order = (r[0] / r[1]).log2().min((r[1] / r[2]).log2());
            vec![CheckReport::new("ipp-order", order - 1.8, 0.0, "Gaussian weight, bump test function")
                .note(format!("residuals {:.6e}, {:.6e}, {:.6e}", r[0], r[1], r[2]))]
        }
        Err(e) => vec![errored("ipp-order", e)],
    }
}

// 12. Busemann.

fn busemann_catalog() -> Vec<(&'static str, FamilySpec)> {
    vec![
        ("gaussian", FamilySpec::quadratic(1.0)),
        ("matrix", FamilySpec::QuadraticMatrix { a: [[1.0, 0.5], [0.5, 0.5]] }),
        ("quartic", FamilySpec::EvenPoly { coeffs: vec![0.0, 0.5, 0.1] }),
        ("translated", FamilySpec::Translated { base: Box::new(FamilySpec::QuadraticMatrix { a: [[2.0, 0.3], [0.3, 1.0]] }), offset: [0.3, -0.2] }),
        ("hexagon-gauge", FamilySpec::GaugePower { body: Body::regular_polygon(6, 1.0, 0.2), q: 2.0 }),
    ]
}

fn busemann(rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let seeds: Vec<u64> = (0..20).map(|_| rng.gen()).collect();
    let jobs: Vec<(&'static str, FamilySpec, f64, u64)> = busemann_catalog()
        .into_iter()
        .flat_map(|(n, w)| [0.5, 1.0, 2.0, 5.0].map(|p| (n, w.clone(), p)))
        .zip(seeds)
        .map(|((n, w, p), s)| (n, w, p, s))
        .collect();
    let reports: Vec<Vec<CheckReport>> = jobs
        .par_iter()
        .map(|(label, w, p, s)| {
            let f = |y: [f64; 2]| w.eval(&y);
            let mut r = guard("busemann-convexity", check_h_convexity(&f, *p, 100, *s));
            for c in &mut r {
                c.name = format!("{}-{label}-p{p}", c.name);
            }
            r
        })
        .collect();
    out.extend(reports.into_iter().flatten());
    let gauss = |y: [f64; 2]| 0.5 * (y[0] * y[0] + y[1] * y[1]);
    let mut worst = (0.0f64, 0.0);
    let mut failure = None;
    for k in 0..=20 {
        let t = -3.0 + 0.3 * k as f64;
        match busemann_alpha_p(&gauss, t, 1.0) {
            Ok(a) => {
                let e = (a - (PI / 2.0).sqrt() / (1.0 + t * t).sqrt()).abs();
                if e > worst.0 {
                    worst = (e, t);
                }
            }
            Err(e) => failure = Some(e),
        }
    }
    out.push(match failure {
        Some(e) => errored("busemann-gaussian-alpha", e),
        None => CheckReport::new("busemann-gaussian-alpha", -worst.0, 1e-6, "closed form sqrt(pi/2) (1 + t^2)^(-1/2)").with_location(Location::at_t(worst.1)),
    });
    for _ in 0..50 {
        let (a, b, c) = (rng.gen_range(0.3..2.0), rng.gen_range(-0.5..0.5), rng.gen_range(0.0..0.3));
        let w = move |y: [f64; 2]| a * y[1] * y[1] / 2.0 + b * y[0] * y[1] + y[0] * y[0] + c * y[1].powi(4);
        let k: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let freq = rng.gen_range(0.5..3.0);
        let u = move |x: f64| k[0] * x + k[1] * x * x + k[2] * x.powi(3) / 4.0 + k[3] * (freq * x).sin();
        let p = [0.5, 1.0, 2.0, 5.0][rng.gen_range(0..4)];
        out.push(check_busemann_variance(&w, &u, p).unwrap_or_else(|e| errored("busemann-variance", e)));
    }
    out
}

// 13. Reinhardt.

fn reinhardt() -> Vec<CheckReport> {
    let ts: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
    let r = (|| -> Result<Vec<CheckReport>> {
        let mut out = Vec::new();
        let pairs = [
            ("discs", ShadowGauge::disc(0.7)?, ShadowGauge::disc(1.9)?),
            ("balls", ShadowGauge::ball(0.7, DEFAULT_CELLS)?, ShadowGauge::ball(1.9, DEFAULT_CELLS)?),
        ];
        for (label, a, b) in &pairs {
            let (v0, v1) = (reinhardt_volume(a)?, reinhardt_volume(b)?);
            let mut worst = (0.0f64, 0.0);
            for &t in &ts {
                let e = (reinhardt_volume(&reinhardt_interpolate(a, b, t)?)? / (v0.powf(1.0 - t) * v1.powf(t)) - 1.0).abs();
                if e > worst.0 {
                    worst = (e, t);
                }
            }
            out.push(CheckReport::new(format!("reinhardt-{label}-equality"), -worst.0, VOLUME_TOL, "geometric-mean radii").with_location(Location::at_t(worst.1)));
        }
        let (a, b) = (ShadowGauge::polydisc(1.0, 1.0, DEFAULT_CELLS)?, ShadowGauge::l1(2.0, DEFAULT_CELLS)?);
        out.extend(check_reinhardt_logconcavity(&a, &b, &ts)?);
        let (v0, v1) = (reinhardt_volume(&a)?, reinhardt_volume(&b)?);
        let mut gap = f64::INFINITY;
        for &t in &ts[1..ts.len() - 1] {
            gap = gap.min(reinhardt_volume(&reinhardt_interpolate(&a, &b, t)?)? / (v0.powf(1.0 - t) * v1.powf(t)) - 1.0);
        }
        // Strict: the relative gain must exceed 1e-6 at every interior sample.
        out.push(CheckReport::new("reinhardt-strict", gap - 1e-6, 0.0, "unit polydisc against the l1 shadow of radius 2").note(format!("smallest relative gain {gap:.6e}")));
        Ok(out)
    })();
    guard("reinhardt", r)
}

// 14. B-family.

fn b_family_criterion(rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let mut specs: Vec<(usize, FamilySpec)> = vec![
        (1, FamilySpec::quadratic(1.0)),
        (1, FamilySpec::GaugePower { body: Body::Interval { lo: -1.0, hi: 1.0 }, q: 1.0 }),
        (2, FamilySpec::quadratic(0.7)),
    ];
    while specs.len() < 10 {
        let dim = if specs.len() < 8 { 1 } else { 2 };
        specs.push((dim, random_convex(rng, dim, true)));
    }
    specs
        .par_iter()
        .flat_map(|(dim, spec)| {
            let (lat, layers) = if *dim == 1 { (line(10.0, 801), 41) } else { (square(6.0, 49), 21) };
            let r = (|| check_b_family(&sample(spec, &lat)?, layers))();
            guard("b-family", r)
        })
        .collect()
}

/// The field of the b-family on the default lattice (used by the CLI).
pub fn default_b_family() -> Result<SpaceTimeField> {
    b_family(&line(10.0, 801), 41)
}
