//! `convexinterp` command-line front end.
//!
//! Settings come from an optional `--config` file in the line-oriented
//! format of [`convexinterp::config`]; flags override single keys of it and
//! are validated under the same field names. Exit status: 0 on success, 1 on
//! a failed `suite` or a numerical error, 2 on usage or configuration errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use convexinterp::checks::{
    check_b_family, check_brascamp_lieb, check_brunn_minkowski, check_duality_identity, check_gaussian_even_gap, check_prekopa,
    check_santalo, explore_conjecture, volume_via_gauge, CheckReport,
};
use convexinterp::busemann::{check_busemann_variance, check_h_convexity};
use convexinterp::config::{ExperimentConfig, FamilyKind, RawConfig};
use convexinterp::grid::{sample, GridFunction, Lattice};
use convexinterp::interp::{interp_linear_field, interp_one_field};
use convexinterp::measures::alpha_profile;
use convexinterp::pde::{certify_family, solve_p_interpolation, SolveReport};
use convexinterp::reinhardt::check_reinhardt_logconcavity;
use convexinterp::report::{line_plot_svg, round_sig, to_json, Series};
use convexinterp::suite::run_suite;
use convexinterp::SpaceTimeField;
use serde_json::json;

#[derive(Parser)]
#[command(name = "convexinterp", version, about = "Interpolation families of convex functions and checks of the inequalities they encode")]
struct Cli {
    /// Configuration file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the main artifact here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(flatten)]
    set: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Layers of an interpolation family as CSV.
    Interp,
    /// Solve the p-interpolation equation and print the solver report.
    Solve {
        /// Also write the solved layers as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// The profile α(t) and both α″ routes as CSV.
    Alpha {
        /// Also write an SVG plot of α.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run one named check, or `all`, and print the reports as JSON.
    Check { name: String },
    /// Midpoint convexity of the ray functional and its variance inequality.
    Busemann,
    /// Log-concavity of Reinhardt volumes along the interpolation.
    Reinhardt,
    /// The acceptance battery; exits 1 unless every criterion passes.
    Suite,
    /// Exploratory α″ along a solved family of gauge data; never fails.
    ExploreConjecture,
}

/// Single-key overrides of the configuration.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Space dimension, 1 or 2.
    #[arg(long = "n", global = true)]
    dim: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    lo: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    hi: Option<String>,
    /// Lattice points per axis.
    #[arg(long, global = true)]
    points: Option<String>,
    #[arg(long, global = true)]
    f0: Option<String>,
    #[arg(long, global = true)]
    f1: Option<String>,
    /// Single function for one-function checks.
    #[arg(long, global = true)]
    family: Option<String>,
    /// Test function `poly:c0,c1,…`.
    #[arg(long, global = true)]
    u: Option<String>,
    /// Family built by `interp` and `alpha`: one, linear or solve.
    #[arg(long, global = true)]
    kind: Option<String>,
    #[arg(long, global = true)]
    p: Option<String>,
    #[arg(long, global = true)]
    layers: Option<String>,
    #[arg(long, global = true)]
    max_sweeps: Option<String>,
    #[arg(long, global = true)]
    tol: Option<String>,
    #[arg(long, global = true)]
    damping: Option<String>,
    #[arg(long, global = true)]
    w: Option<String>,
    /// Comma-separated exponents for `busemann`.
    #[arg(long, global = true)]
    busemann_p: Option<String>,
    #[arg(long, global = true)]
    pairs: Option<String>,
    #[arg(long, global = true)]
    s0: Option<String>,
    #[arg(long, global = true)]
    s1: Option<String>,
    #[arg(long, global = true)]
    cells: Option<String>,
    #[arg(long, global = true)]
    samples: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    k0: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    k1: Option<String>,
    #[arg(long, global = true)]
    t: Option<String>,
    #[arg(long, global = true)]
    lambdas: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<String>,
}

impl Overrides {
    fn entries(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("run.seed", &self.seed),
            ("lattice.dim", &self.dim),
            ("lattice.lo", &self.lo),
            ("lattice.hi", &self.hi),
            ("lattice.points", &self.points),
            ("family.f0", &self.f0),
            ("family.f1", &self.f1),
            ("family.f", &self.family),
            ("family.u", &self.u),
            ("family.kind", &self.kind),
            ("solver.p", &self.p),
            ("solver.layers", &self.layers),
            ("solver.max_sweeps", &self.max_sweeps),
            ("solver.tol", &self.tol),
            ("solver.damping", &self.damping),
            ("busemann.w", &self.w),
            ("busemann.p", &self.busemann_p),
            ("busemann.pairs", &self.pairs),
            ("reinhardt.s0", &self.s0),
            ("reinhardt.s1", &self.s1),
            ("reinhardt.cells", &self.cells),
            ("reinhardt.samples", &self.samples),
            ("bodies.k0", &self.k0),
            ("bodies.k1", &self.k1),
            ("bodies.t", &self.t),
            ("explore.lambdas", &self.lambdas),
            ("explore.epsilon", &self.epsilon),
        ]
    }
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<convexinterp::Error> for Failure {
    fn from(e: convexinterp::Error) -> Self {
        match e {
            convexinterp::Error::Config { .. } => Failure::Usage(e.to_string()),
            e => Failure::Numerical(e.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut raw = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for (key, value) in cli.set.entries() {
        if let Some(v) = value {
            raw.entries.insert(key.to_string(), v.clone());
        }
    }
    Ok(ExperimentConfig::from_raw(&raw)?)
}

/// Writes to `--out`, else into the configured output directory under
/// `default_name`, else to standard output.
fn emit(cli: &Cli, cfg: &ExperimentConfig, default_name: &str, text: &str) -> Result<(), Failure> {
    let path = cli.out.clone().or_else(|| cfg.out.as_ref().map(|d| d.join(default_name)));
    match path {
        Some(p) => write_file(&p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Numerical(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))
}

fn data(cfg: &ExperimentConfig) -> Result<(Lattice, GridFunction, GridFunction), Failure> {
    let lat = cfg.lattice.build()?;
    let f0 = sample(&cfg.f0, &lat)?;
    let f1 = sample(&cfg.f1, &lat)?;
    Ok((lat, f0, f1))
}

fn family(cfg: &ExperimentConfig) -> Result<SpaceTimeField, Failure> {
    let (_, f0, f1) = data(cfg)?;
    let layers = cfg.solver.layers;
    Ok(match cfg.kind {
        FamilyKind::One => interp_one_field(&f0, &f1, layers)?,
        FamilyKind::Linear => interp_linear_field(&f0, &f1, layers)?,
        FamilyKind::Solve => solve_p_interpolation(&f0, &f1, cfg.p, &cfg.solver)?.0,
    })
}

fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.is_finite() {
        format!("{}", round_sig(x))
    } else if x > 0.0 {
        "inf".into()
    } else if x < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

fn field_csv(field: &SpaceTimeField) -> String {
    let lat = field.lattice();
    let dim = lat.dim();
    let mut out = String::from(if dim == 1 { "t,x,value\n" } else { "t,x0,x1,value\n" });
    for (i, layer) in field.layers().iter().enumerate() {
        let t = num(field.time(i));
        for (k, v) in layer.values().iter().enumerate() {
            let x = lat.point(k);
            if dim == 1 {
                out.push_str(&format!("{t},{},{}\n", num(x[0]), num(*v)));
            } else {
                out.push_str(&format!("{t},{},{},{}\n", num(x[0]), num(x[1]), num(*v)));
            }
        }
    }
    out
}

const CHECKS: [&str; 9] =
    ["prekopa", "brunn-minkowski", "gauge-volume", "brascamp-lieb", "santalo", "gaussian-gap", "duality", "b-family", "certify"];

fn run_check(name: &str, cfg: &ExperimentConfig) -> Result<Vec<CheckReport>, Failure> {
    let lat = || -> Result<Lattice, Failure> { Ok(cfg.lattice.build()?) };
    let one = |spec| -> Result<GridFunction, Failure> { Ok(sample(spec, &lat()?)?) };
    let test_fn = || -> Result<GridFunction, Failure> { Ok(GridFunction::from_fn(&lat()?, |x| cfg.u.eval(x[0]))?) };
    let mut reports = match name {
        "prekopa" => {
            let (_, f0, f1) = data(cfg)?;
            check_prekopa(&f0, &f1, cfg.solver.layers)?
        }
        "brunn-minkowski" => vec![check_brunn_minkowski(&cfg.k0, &cfg.k1, cfg.t)?],
        "gauge-volume" => {
            let v = volume_via_gauge(&cfg.k0, cfg.p)?;
            let exact = cfg.k0.volume();
            vec![CheckReport::new("gauge-volume", -(v / exact - 1.0).abs(), 1e-3, "integral of exp(-gauge^p/p) over c_{n,p}")
                .note(format!("integral route {v}, exact volume {exact}"))]
        }
        "brascamp-lieb" => vec![check_brascamp_lieb(&one(&cfg.family)?, &test_fn()?)?],
        "santalo" => vec![check_santalo(&one(&cfg.family)?)?],
        "gaussian-gap" => vec![check_gaussian_even_gap(&test_fn()?)?],
        "duality" => vec![check_duality_identity(&family(cfg)?, 0.25)?],
        "b-family" => check_b_family(&one(&cfg.family)?, cfg.solver.layers)?,
        "certify" => {
            let (_, f0, f1) = data(cfg)?;
            let (field, _) = solve_p_interpolation(&f0, &f1, cfg.p, &cfg.solver)?;
            vec![certify_family(&field, cfg.p, None)?]
        }
        _ => return Err(Failure::Usage(format!("unknown check `{name}`; expected one of {} or all", CHECKS.join(", ")))),
    };
    for r in &mut reports {
        r.seed = Some(cfg.seed);
    }
    Ok(reports)
}

fn run(cli: &Cli) -> Outcome {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Interp => {
            emit(cli, &cfg, "family.csv", &field_csv(&family(&cfg)?))?;
            Ok(true)
        }
        Command::Solve { csv } => {
            let (lat, f0, f1) = data(&cfg)?;
            let (field, report) = solve_p_interpolation(&f0, &f1, cfg.p, &cfg.solver)?;
            let mut out = json!({ "report": report_value(&report)? });
            if let (convexinterp::FamilySpec::Quadratic { lambda: l0 }, convexinterp::FamilySpec::Quadratic { lambda: l1 }) = (&cfg.f0, &cfg.f1) {
                out["oracle_sup_rel_error"] = json!(quadratic_error(&field, &lat, *l0, *l1, cfg.p));
            }
            if let Some(path) = csv {
                write_file(path, &field_csv(&field))?;
            }
            emit(cli, &cfg, "solve.json", &to_json(&out)?)?;
            Ok(true)
        }
        Command::Alpha { svg } => {
            let field = family(&cfg)?;
            let prof = alpha_profile(&field, None)?;
            let svg_path = svg.clone().or_else(|| cfg.out.as_ref().map(|d| d.join("alpha.svg")));
            if let Some(path) = svg_path {
                let plot = line_plot_svg("alpha(t)", &[Series { label: "alpha", x: &prof.times, y: &prof.alpha }]);
                write_file(&path, &plot)?;
            }
            emit(cli, &cfg, "alpha.csv", &prof.to_csv())?;
            Ok(true)
        }
        Command::Check { name } => {
            let reports = if name == "all" {
                let mut all = Vec::new();
                for n in CHECKS {
                    match run_check(n, &cfg) {
                        Ok(r) => all.extend(r),
                        Err(Failure::Numerical(m)) => all.push(
                            CheckReport::new(n, f64::NEG_INFINITY, 0.0, "checker error").note(m).with_seed(cfg.seed),
                        ),
                        Err(e) => return Err(e),
                    }
                }
                all
            } else {
                run_check(name, &cfg)?
            };
            emit(cli, &cfg, "checks.json", &to_json(&reports)?)?;
            Ok(true)
        }
        Command::Busemann => {
            let w = |y: [f64; 2]| cfg.w.eval(&y);
            let u = |x: f64| cfg.u.eval(x);
            let mut reports = Vec::new();
            for &p in &cfg.busemann_p {
                reports.extend(check_h_convexity(&w, p, cfg.pairs, cfg.seed)?);
                reports.push(check_busemann_variance(&w, &u, p)?);
            }
            emit(cli, &cfg, "busemann.json", &to_json(&reports)?)?;
            Ok(true)
        }
        Command::Reinhardt => {
            let (s0, s1) = (cfg.s0.build(cfg.cells)?, cfg.s1.build(cfg.cells)?);
            let n = cfg.t_samples;
            let ts: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
            let reports = check_reinhardt_logconcavity(&s0, &s1, &ts)?;
            emit(cli, &cfg, "reinhardt.json", &to_json(&reports)?)?;
            Ok(true)
        }
        Command::Suite => {
            let report = run_suite(cfg.seed);
            emit(cli, &cfg, "suite.json", &report.to_json()?)?;
            for c in &report.criteria {
                eprintln!("{:>2} {} {}", c.id, if c.pass { "PASS" } else { "FAIL" }, c.name);
            }
            Ok(report.pass)
        }
        Command::ExploreConjecture => {
            let lat = cfg.lattice.build()?;
            let result = explore_conjecture(&cfg.k0, &cfg.k1, cfg.lambdas, cfg.epsilon, &lat, &cfg.solver);
            let body = match result {
                Ok(r) => json!({ "report": serde_json::to_value(&r).map_err(|e| Failure::Numerical(e.to_string()))? }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            let out = json!({
                "watermark": "EXPLORATORY: not a verified result and never counted in any verdict",
                "result": body,
            });
            emit(cli, &cfg, "explore.json", &to_json(&out)?)?;
            Ok(true)
        }
    }
}

fn report_value(report: &SolveReport) -> Result<serde_json::Value, Failure> {
    serde_json::to_value(report).map_err(|e| Failure::Numerical(e.to_string()))
}

/// Sup relative error against `λ(t) |x|²/2` with `λ(t)` the power mean of
/// order `1/m`, `m = p/(p−2)`, of the endpoint curvatures.
fn quadratic_error(field: &SpaceTimeField, lat: &Lattice, l0: f64, l1: f64, p: f64) -> f64 {
    let mut worst = 0.0f64;
    for (i, layer) in field.layers().iter().enumerate() {
        let lambda = convexinterp::pde::power_mean_lambda(l0, l1, p, field.time(i));
        for (k, v) in layer.values().iter().enumerate() {
            let x = lat.point(k);
            let r2 = x[0] * x[0] + x[1] * x[1];
            if r2 > 0.0 {
                let exact = 0.5 * lambda * r2;
                worst = worst.max((v - exact).abs() / exact);
            }
        }
    }
    worst
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
