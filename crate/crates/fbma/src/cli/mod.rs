//! Batch front end: one JSON config per run, a manifest plus CSV/SVG files
//! under the output directory.
//!
//! Exit codes: 0 when the run converged or verified, 1 on a numerical or
//! hypothesis failure, 2 when the config does not match the schema.

pub mod artifacts;

use crate::apps::{
    minkowski_solve, ot_cone_lift, reconstruct, spherical_recenter, BarycenterConvention, CurvatureCheck, LiftOptions, MinkowskiInstance,
};
use crate::convex_core::polytope::Polytope;
use crate::functionals::{ehat_landscape, LandscapeSpec};
use crate::radial::{dual_radial_probe, probe_trend_to_zero, radial_solve, write_probe_csv, RadialForm, RadialProblem};
use crate::solver::{minimize_energy, SolveConfig, SolveResult, SolveStatus};
use crate::structure::{
    classify_structure, doubling_check, vanishing_order_check, CurvatureSpec, Density, FSpec, GSpec, StructuralPair, VanishingOutcome,
    WeightedDomain,
};
use crate::{Error, Result};
use artifacts::{cols, OutputEntry, Outputs};
use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
const DEFAULT_OUT: &str = "fbma-out";

#[derive(Parser, Debug, Clone)]
#[command(name = "fbma", version, about = "Free boundary Monge-Ampère solver driven by a JSON run config")]
pub struct Args {
    /// Run config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long, env = "FBMA_OUT")]
    pub out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel parts.
    #[arg(long, env = "FBMA_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Solve,
    CheckStructure,
    Radial,
    LiftOt,
    Minkowski,
    Reconstruct,
    Landscape,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolytopeSpec {
    Interval { lo: f64, hi: f64 },
    Cube { n: usize, half_width: f64 },
    /// Regular polygon inscribed in the circle of `radius`.
    Polygon {
        sides: usize,
        radius: f64,
        #[serde(default)]
        phase: f64,
    },
    /// The ball of `radius`: an interval in 1-D, an inscribed 64-gon in 2-D.
    Ball { n: usize, radius: f64 },
    Cross { n: usize, radius: f64 },
    Vertices { points: Vec<Vec<f64>> },
}

impl PolytopeSpec {
    pub fn build(&self) -> Result<Polytope> {
        match self {
            PolytopeSpec::Interval { lo, hi } => Polytope::interval(*lo, *hi),
            PolytopeSpec::Cube { n, half_width } => Polytope::cube(*n, *half_width),
            PolytopeSpec::Polygon { sides, radius, phase } => Polytope::regular_polygon(*sides, *radius, *phase),
            PolytopeSpec::Ball { n: 1, radius } => Polytope::interval(-radius, *radius),
            PolytopeSpec::Ball { n: 2, radius } => Polytope::regular_polygon(64, *radius, 0.0),
            PolytopeSpec::Ball { n, .. } => Err(Error::UnsupportedDimension(*n)),
            PolytopeSpec::Cross { n, radius } => Polytope::cross_polytope(*n, *radius),
            PolytopeSpec::Vertices { points } => Polytope::new(points.clone()),
        }
    }
}

fn uniform() -> Density {
    Density::Uniform
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub polytope: PolytopeSpec,
    #[serde(default = "uniform")]
    pub density: Density,
}

/// Catalog pairs, or an explicit `(F, G)`. The dimension comes from the domain.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PairSpec {
    /// `F = s^{k+1}/(k+1)`, `G = s`.
    Eigenvalue { k: f64 },
    /// `F = (e^{as} − 1)/a`, `G = s`.
    Exponential { a: f64 },
    Transport { alpha: f64, beta: f64 },
    /// `F = s`, `G = −s^{−(n+1)}`.
    NonExample,
    /// `F = ½s²`, `G = −s^{−(n+5)} + s`.
    TwoComponent,
    Custom {
        f: FSpec,
        g: GSpec,
        #[serde(default)]
        g_offset: f64,
    },
}

impl PairSpec {
    pub fn build(&self, n: usize) -> Result<StructuralPair> {
        Ok(match self {
            PairSpec::Eigenvalue { k } => StructuralPair::eigenvalue(*k),
            PairSpec::Exponential { a } => StructuralPair::exponential(*a),
            PairSpec::Transport { alpha, beta } => StructuralPair::transport(n, *alpha, *beta),
            PairSpec::NonExample => StructuralPair::non_example(n),
            PairSpec::TwoComponent => StructuralPair::two_component(n),
            PairSpec::Custom { f, g, g_offset } => {
                let mut pair = StructuralPair::new(f.clone(), g.clone())?;
                pair.g_offset = *g_offset;
                pair
            }
        })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckBlock {
    /// Dimension used when no domain is given.
    pub n: Option<usize>,
    /// Vanishing order of `h` to certify on the domain.
    pub claimed_order: Option<f64>,
    pub doubling_trials: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialBlock {
    pub problem: RadialProblem,
    /// `v(0)` values for the dual probe; required for the dual-legendre form.
    #[serde(default)]
    pub probe_grid: Vec<f64>,
    #[serde(default = "one")]
    pub probe_lambda: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftBlock {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub options: LiftOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinkowskiBlock {
    pub curvature: CurvatureSpec,
    /// Rotate the cap first so this barycenter sits at the north pole.
    #[serde(default)]
    pub recenter: Option<BarycenterConvention>,
    #[serde(default = "recenter_tol")]
    pub recenter_tol: f64,
    #[serde(default)]
    pub check: CurvatureCheck,
}

fn recenter_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructBlock {
    pub k: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub subcommand: Subcommand,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub pair: Option<PairSpec>,
    /// Λ, continuation schedule, mesh and tolerances.
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub check: Option<CheckBlock>,
    #[serde(default)]
    pub radial: Option<RadialBlock>,
    #[serde(default)]
    pub lift: Option<LiftBlock>,
    #[serde(default)]
    pub minkowski: Option<MinkowskiBlock>,
    #[serde(default)]
    pub reconstruct: Option<ReconstructBlock>,
    #[serde(default)]
    pub landscape: Option<LandscapeSpec>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    Verified,
    DivergedDiam,
    NormalizationFailure,
    MaxIter,
    NoRadialSolution,
    Refused,
    Failed,
    InvalidConfig,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Converged | RunStatus::Verified => 0,
            RunStatus::InvalidConfig => 2,
            _ => 1,
        }
    }

    fn of_solve(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Converged => RunStatus::Converged,
            SolveStatus::DivergedDiam => RunStatus::DivergedDiam,
            SolveStatus::NormalizationFailure => RunStatus::NormalizationFailure,
            SolveStatus::MaxIter => RunStatus::MaxIter,
        }
    }

    fn of_error(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::InvalidPair(_) | Error::UnsupportedDimension(_) => RunStatus::InvalidConfig,
            Error::Refused(_) | Error::HypothesisViolation(_) => RunStatus::Refused,
            Error::NormalizationFailure(_) => RunStatus::NormalizationFailure,
            Error::NoRadialSolution(_) => RunStatus::NoRadialSolution,
            _ => RunStatus::Failed,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub schema: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: Option<Subcommand>,
    pub seed: u64,
    pub status: RunStatus,
    pub exit_code: i32,
    pub message: String,
    /// The config as read, before flag and environment overrides.
    pub config: Value,
    pub outputs: Vec<OutputEntry>,
    pub summary: Value,
}

/// A schema violation located in the config text.
#[derive(Clone, Debug)]
pub struct SchemaError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// 1-based line of the first occurrence of `"key"`, or 1.
fn key_line(text: &str, key: &str) -> usize {
    let pat = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&pat)).map_or(1, |i| i + 1)
}

pub fn parse_config(text: &str) -> std::result::Result<(RunConfig, Value), SchemaError> {
    let raw: Value =
        serde_json::from_str(text).map_err(|e| SchemaError { line: e.line(), column: e.column(), message: e.to_string() })?;
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| SchemaError { line: e.line(), column: e.column(), message: e.to_string() })?;
    let at = |key: &str, message: String| SchemaError { line: key_line(text, key), column: 1, message };
    if cfg.schema != SCHEMA_VERSION {
        return Err(at("schema", format!("unsupported schema version {} (expected {SCHEMA_VERSION})", cfg.schema)));
    }
    let need = |present: bool, what: &str| if present { Ok(()) } else { Err(at("subcommand", format!("subcommand {:?} needs a `{what}` block", cfg.subcommand))) };
    match cfg.subcommand {
        Subcommand::Solve => {
            need(cfg.domain.is_some(), "domain")?;
            need(cfg.pair.is_some(), "pair")?;
        }
        Subcommand::CheckStructure => {
            need(cfg.pair.is_some(), "pair")?;
            need(cfg.domain.is_some() || cfg.check.as_ref().is_some_and(|c| c.n.is_some()), "domain")?;
        }
        Subcommand::Radial => need(cfg.radial.is_some(), "radial")?,
        Subcommand::LiftOt => {
            need(cfg.domain.is_some(), "domain")?;
            need(cfg.lift.is_some(), "lift")?;
        }
        Subcommand::Minkowski => {
            need(cfg.domain.is_some(), "domain")?;
            need(cfg.minkowski.is_some(), "minkowski")?;
        }
        Subcommand::Reconstruct => {
            need(cfg.domain.is_some(), "domain")?;
            need(cfg.reconstruct.is_some(), "reconstruct")?;
        }
        Subcommand::Landscape => need(cfg.landscape.is_some(), "landscape")?,
    }
    Ok((cfg, raw))
}

/// What a subcommand hands back besides its files.
struct Finished {
    status: RunStatus,
    message: String,
    summary: Value,
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).unwrap_or(Value::Null)
}

fn solve_summary(r: &SolveResult) -> Value {
    let rep = &r.report;
    json!({
        "status": r.status,
        "message": r.message,
        "property": r.property.to_string(),
        "energy": rep.energy,
        "i": rep.i,
        "j": rep.j,
        "big_lambda": rep.big_lambda,
        "lambda": rep.lambda,
        "el_residual_total": rep.el_total(),
        "mu_sum": rep.mu_sum,
        "nu_sum": rep.nu_sum,
        "omega_volume": rep.omega_volume,
        "omega_vertices": r.omega.vertices,
        "grad_rel": r.grad_rel,
        "min_inf_ratio": r.min_inf_ratio,
        "normalization": r.normalization,
        "starts": r.starts,
        "continuation": r.continuation,
        "last_converged_lambda": r.last_converged_lambda,
    })
}

fn domain(cfg: &RunConfig) -> Result<WeightedDomain> {
    let d = cfg.domain.as_ref().ok_or_else(|| Error::InvalidInput("missing domain".into()))?;
    WeightedDomain::new(d.polytope.build()?, d.density.clone())
}

fn run_solve(cfg: &RunConfig, out: &mut Outputs) -> Result<Finished> {
    let w = domain(cfg)?;
    let pair = cfg.pair.as_ref().expect("checked at parse").build(w.dim())?;
    let result = minimize_energy(&cfg.solve, &pair, &w)?;
    out.solve_result(&result, &result.v, &result.omega)?;
    Ok(Finished { status: RunStatus::of_solve(result.status), message: result.message.clone(), summary: solve_summary(&result) })
}

fn run_reconstruct(cfg: &RunConfig, out: &mut Outputs) -> Result<Finished> {
    let p = cfg.domain.as_ref().expect("checked at parse").polytope.build()?;
    let k = cfg.reconstruct.as_ref().expect("checked at parse").k;
    let rec = reconstruct(&p, k, &cfg.solve)?;
    out.solve_result(&rec.result, &rec.v, &rec.omega)?;
    out.u_samples(&rec.v, &rec.omega)?;
    let mut summary = solve_summary(&rec.result);
    summary["lambda_raw"] = json!(rec.lambda_raw);
    summary["scale"] = json!(rec.scale);
    summary["lambda"] = json!(rec.lambda);
    summary["omega_vertices"] = json!(rec.omega.vertices);
    Ok(Finished { status: RunStatus::of_solve(rec.result.status), message: rec.result.message.clone(), summary })
}

fn run_check(cfg: &RunConfig, out: &mut Outputs) -> Result<Finished> {
    let block = cfg.check.clone().unwrap_or_default();
    let w = cfg.domain.as_ref().map(|_| domain(cfg)).transpose()?;
    let n = w.as_ref().map(|w| w.dim()).or(block.n).expect("checked at parse");
    let pair = cfg.pair.as_ref().expect("checked at parse").build(n)?;
    let class = classify_structure(&pair, n)?;
    out.csv(
        "clauses",
        "clauses.csv",
        &cols(&["property", "clause", "passed", "detail"]),
        class.clauses.iter().map(|c| vec![c.property.clone(), c.clause.clone(), c.passed.to_string(), c.detail.clone()]),
    )?;
    out.csv(
        "traces",
        "traces.csv",
        &cols(&["clause", "s", "ratio"]),
        class.traces.iter().flat_map(|(name, pts)| pts.iter().map(move |(s, r)| vec![name.clone(), s.to_string(), r.to_string()])),
    )?;
    let mut summary = json!({
        "property": class.property.to_string(),
        "exponents": class.exponents,
        "witness": class.witness,
    });
    let mut status = RunStatus::Verified;
    let mut message = format!("classified as {}", class.property);
    if let (Some(w), Some(order)) = (&w, block.claimed_order) {
        let outcome = vanishing_order_check(w, order)?;
        if matches!(outcome, VanishingOutcome::Counterexample { .. }) {
            status = RunStatus::Failed;
            message = format!("{message}; claimed vanishing order {order} has a counterexample");
        }
        summary["vanishing"] = to_value(&outcome);
    }
    if let (Some(w), true) = (&w, block.doubling_trials > 0) {
        summary["doubling"] = to_value(&doubling_check(w, block.doubling_trials, cfg.seed)?);
    }
    Ok(Finished { status, message, summary })
}

fn run_radial(cfg: &RunConfig, out: &mut Outputs) -> Result<Finished> {
    let block = cfg.radial.as_ref().expect("checked at parse");
    let prob = &block.problem;
    let mut summary = json!({});
    if !block.probe_grid.is_empty() {
        let rows = dual_radial_probe(prob.n, block.probe_lambda, &block.probe_grid)?;
        write_probe_csv(&rows, &out.dir.join("probe.csv"))?;
        out.external("probe", "probe.csv", "csv");
        summary["probe_trend_to_zero"] = json!(probe_trend_to_zero(&rows));
        summary["probe"] = to_value(&rows);
    }
    if matches!(prob.form, RadialForm::DualLegendre) && block.probe_grid.is_empty() {
        return Err(Error::InvalidInput("the dual-legendre form needs `probe_grid`".into()));
    }
    match radial_solve(prob) {
        Ok(sol) => {
            sol.write_csv(&out.dir.join("profile.csv"))?;
            out.external("profile", "profile.csv", "csv");
            summary["lambda"] = json!(sol.lambda);
            summary["m"] = json!(sol.m);
            summary["radius"] = json!(sol.radius);
            summary["ode_residual"] = json!(sol.ode_residual);
            summary["shooting_iterations"] = json!(sol.shooting_iterations);
            let message = format!("R = {}, λ = {}, m = {}", sol.radius, sol.lambda, sol.m);
            Ok(Finished { status: RunStatus::Converged, message, summary })
        }
        Err(Error::NoRadialSolution(m)) => Ok(Finished { status: RunStatus::NoRadialSolution, message: m, summary }),
        Err(e) => Err(e),
    }
}

fn run_lift(cfg: &RunConfig, out: &mut Outputs) -> Result<Finished> {
    let p = cfg.domain.as_ref().expect("checked at parse").polytope.build()?;
    let block = cfg.lift.as_ref().expect("checked at parse");
    let opts = LiftOptions { seed: cfg.seed, ..block.options };
    let (lift, result, report) = ot_cone_lift(&p, block.alpha, block.beta, &cfg.solve, &opts)?;
    out.solve_result(&result, &result.v, &result.omega)?;
    let n = p.dim;
    let mut header: Vec<String> = (1..=n + 1).map(|d| format!("z{d}")).collect();
    header.push("deviation".into());
    out.csv(
        "lift_samples",
        "lift_samples.csv",
        &header,
        report.samples.iter().zip(&report.deviations).map(|(z, d)| {
            let mut row: Vec<String> = z.iter().map(f64::to_string).collect();
            row.push(d.to_string());
            row
        }),
    )?;
    let ok = result.status == SolveStatus::Converged
        && report.homogeneity_error <= 1e-12
        && report.fraction_within_tol >= 0.9
        && report.half_space_fraction == 1.0;
    let status = if result.status != SolveStatus::Converged {
        RunStatus::of_solve(result.status)
    } else if ok {
        RunStatus::Verified
    } else {
        RunStatus::Failed
    };
    let message = format!(
        "γ = {}, homogeneity error {:.2e}, {:.1}% of samples within {}",
        lift.gamma,
        report.homogeneity_error,
        100.0 * report.fraction_within_tol,
        opts.tol
    );
    let summary = json!({
        "solve": solve_summary(&result),
        "gamma": report.gamma,
        "degree": report.degree,
        "homogeneity_error": report.homogeneity_error,
        "constant": report.constant,
        "fraction_within_tol": report.fraction_within_tol,
        "half_space_fraction": report.half_space_fraction,
    });
    Ok(Finished { status, message, summary })
}

fn run_minkowski(cfg: &RunConfig, out: &mut Outputs) -> Result<Finished> {
    let p = cfg.domain.as_ref().expect("checked at parse").polytope.build()?;
    let block = cfg.minkowski.as_ref().expect("checked at parse");
    let mut summary = json!({});
    let inst = match block.recenter {
        Some(conv) => {
            let rc = spherical_recenter(&p, &block.curvature, conv, block.recenter_tol)?;
            summary["recentering"] = json!({
                "convention": conv,
                "eta": rc.eta,
                "eta_slope": rc.eta_slope,
                "rotation": rc.rotation,
                "residual": rc.residual,
                "iterations": rc.iterations,
            });
            rc.instance
        }
        None => MinkowskiInstance { polytope: p, curvature: block.curvature.clone(), rotation: None },
    };
    let (result, v, report) = minkowski_solve(&inst, &cfg.solve, &block.check)?;
    let omega = crate::convex_core::piecewise::negative_set(&v)?;
    out.solve_result(&result, &v, &omega)?;
    let n = inst.polytope.dim;
    let mut header: Vec<String> = (1..=n).map(|d| format!("x{d}")).collect();
    header.push("height".into());
    out.csv("surface", "surface.csv", &header, report.surface.iter().map(|q| q.iter().map(f64::to_string).collect()))?;
    let mut header: Vec<String> = (1..=n).map(|d| format!("x{d}")).collect();
    header.extend((1..=n).map(|d| format!("y{d}")));
    header.extend(cols(&["k_sigma", "k_target"]));
    out.csv(
        "curvature",
        "curvature.csv",
        &header,
        report.samples.iter().map(|s| {
            let mut row: Vec<String> = s.x.iter().chain(&s.slope).map(f64::to_string).collect();
            row.push(s.k_sigma.to_string());
            row.push(s.k_target.to_string());
            row
        }),
    )?;
    let ok = report.max_relative_error <= block.check.tol && report.gauss_image_margin >= -1e-6;
    let status = match result.status {
        SolveStatus::Converged if ok => RunStatus::Verified,
        SolveStatus::Converged => RunStatus::Failed,
        s => RunStatus::of_solve(s),
    };
    let message = format!(
        "max relative curvature error {:.3e} over {} samples, Gauss image margin {:.3e}",
        report.max_relative_error,
        report.samples.len(),
        report.gauss_image_margin
    );
    summary["solve"] = solve_summary(&result);
    summary["curvature_barycenter"] = json!(report.curvature_barycenter);
    summary["density_barycenter"] = json!(report.density_barycenter);
    summary["lambda_raw"] = json!(report.lambda_raw);
    summary["scale"] = json!(report.scale);
    summary["max_relative_error"] = json!(report.max_relative_error);
    summary["fraction_within_tol"] = json!(report.fraction_within_tol);
    summary["gauss_image_margin"] = json!(report.gauss_image_margin);
    Ok(Finished { status, message, summary })
}

fn run_landscape(cfg: &RunConfig, out: &mut Outputs) -> Result<Finished> {
    let spec = cfg.landscape.as_ref().expect("checked at parse");
    let pair = match &cfg.pair {
        Some(p) => p.build(spec.n)?,
        None => StructuralPair::two_component(spec.n),
    };
    let land = ehat_landscape(spec, &pair)?;
    let io = |e: std::io::Error| Error::Numerical(format!("writing output: {e}"));
    land.write_csv(std::fs::File::create(out.dir.join("landscape.csv")).map_err(io)?)?;
    out.external("landscape", "landscape.csv", "csv");
    let two = land.two_component_level();
    land.write_svg(std::fs::File::create(out.dir.join("landscape.svg")).map_err(io)?, two.map(|c| c.level))?;
    out.external("plot", "landscape.svg", "svg");
    let levels = land.scan_levels();
    out.csv(
        "levels",
        "levels.csv",
        &cols(&["level", "bounded", "touching"]),
        levels.iter().map(|c| vec![c.level.to_string(), c.bounded.to_string(), c.touching.to_string()]),
    )?;
    let Some(range) = land.finite_range() else {
        return Ok(Finished { status: RunStatus::Failed, message: "no finite value on the grid".into(), summary: json!({}) });
    };
    let message = match two {
        Some(c) => format!("level {} has one bounded and one boundary-touching component", c.level),
        None => "no scanned level separates into one bounded and one boundary-touching component".into(),
    };
    let summary = json!({ "family": land.family, "nu": land.nu, "range": range, "two_component_level": two });
    Ok(Finished { status: RunStatus::Verified, message, summary })
}

/// Runs a parsed config into `dir`, which must exist.
fn dispatch(cfg: &RunConfig, dir: &Path) -> (Finished, Vec<OutputEntry>) {
    let mut out = Outputs::new(dir);
    let r = match cfg.subcommand {
        Subcommand::Solve => run_solve(cfg, &mut out),
        Subcommand::Reconstruct => run_reconstruct(cfg, &mut out),
        Subcommand::CheckStructure => run_check(cfg, &mut out),
        Subcommand::Radial => run_radial(cfg, &mut out),
        Subcommand::LiftOt => run_lift(cfg, &mut out),
        Subcommand::Minkowski => run_minkowski(cfg, &mut out),
        Subcommand::Landscape => run_landscape(cfg, &mut out),
    };
    let mut fin = r.unwrap_or_else(|e| Finished { status: RunStatus::of_error(&e), message: e.to_string(), summary: json!({ "error": e.to_string() }) });
    if fin.message.is_empty() {
        fin.message = to_value(&fin.status).as_str().unwrap_or_default().to_string();
    }
    (fin, out.entries)
}

fn write_manifest(dir: &Path, m: &Manifest) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(m).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("manifest.json"), text + "\n")
}

/// Result of one invocation.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub message: String,
}

/// Reads, validates and runs a config; always leaves a manifest behind.
pub fn run(args: &Args) -> RunOutcome {
    if let Some(k) = args.threads {
        // Only the first global pool build succeeds; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
    let text = std::fs::read_to_string(&args.config);
    let parsed = match &text {
        Ok(t) => parse_config(t),
        Err(e) => Err(SchemaError { line: 0, column: 0, message: format!("cannot read config: {e}") }),
    };
    let (cfg, raw) = match parsed {
        Ok(p) => p,
        Err(se) => {
            let raw: Value = text.as_deref().ok().and_then(|t| serde_json::from_str(t).ok()).unwrap_or(Value::Null);
            let fallback = raw.get("out").and_then(Value::as_str).map(PathBuf::from);
            let dir = args.out.clone().or(fallback).unwrap_or_else(|| DEFAULT_OUT.into());
            let message = format!("{}:{}:{}: {}", args.config.display(), se.line, se.column, se.message);
            let status = RunStatus::InvalidConfig;
            let manifest = Manifest {
                schema: SCHEMA_VERSION,
                tool: "fbma",
                version: env!("CARGO_PKG_VERSION"),
                subcommand: None,
                seed: args.seed.unwrap_or(0),
                status,
                exit_code: status.exit_code(),
                message: message.clone(),
                config: raw,
                outputs: vec![],
                summary: json!({ "line": se.line, "column": se.column }),
            };
            if let Err(e) = write_manifest(&dir, &manifest) {
                eprintln!("fbma: could not write manifest to {}: {e}", dir.display());
            }
            return RunOutcome { status, exit_code: status.exit_code(), out_dir: dir, message };
        }
    };
    let mut cfg = cfg;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.solve.seed = cfg.seed;
    let dir = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
    if args.verbose {
        eprintln!("fbma: {:?} with seed {} into {}", cfg.subcommand, cfg.seed, dir.display());
    }
    let (fin, outputs) = match std::fs::create_dir_all(&dir) {
        Ok(()) => dispatch(&cfg, &dir),
        Err(e) => (Finished { status: RunStatus::Failed, message: format!("cannot create {}: {e}", dir.display()), summary: json!({}) }, vec![]),
    };
    if args.verbose {
        eprintln!("fbma: {:?}: {}", fin.status, fin.message);
    }
    let manifest = Manifest {
        schema: SCHEMA_VERSION,
        tool: "fbma",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: Some(cfg.subcommand),
        seed: cfg.seed,
        status: fin.status,
        exit_code: fin.status.exit_code(),
        message: fin.message.clone(),
        config: raw,
        outputs,
        summary: fin.summary,
    };
    if let Err(e) = write_manifest(&dir, &manifest) {
        eprintln!("fbma: could not write manifest to {}: {e}", dir.display());
    }
    RunOutcome { status: fin.status, exit_code: fin.status.exit_code(), out_dir: dir, message: fin.message }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_located() {
        let text = "{\n  \"schema\": 1,\n  \"subcommand\": \"radial\",\n  \"bogus\": 3\n}";
        let e = parse_config(text).unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.message.contains("bogus"));
    }

    #[test]
    fn missing_block_points_at_subcommand() {
        let text = "{\n  \"schema\": 1,\n  \"subcommand\": \"reconstruct\",\n  \"domain\": {\"polytope\": {\"kind\": \"interval\", \"lo\": -1, \"hi\": 1}}\n}";
        let e = parse_config(text).unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("reconstruct"));
    }

    #[test]
    fn wrong_schema_version() {
        let e = parse_config(r#"{"schema": 7, "subcommand": "landscape", "landscape": {}}"#).unwrap_err();
        assert!(e.message.contains("schema version"));
    }

    #[test]
    fn nested_unknown_key_rejected() {
        let text = r#"{"schema": 1, "subcommand": "solve", "domain": {"polytope": {"kind": "interval", "lo": -1, "hi": 1}},
            "pair": {"kind": "eigenvalue", "k": 0}, "solve": {"nodez": 3}}"#;
        assert!(parse_config(text).unwrap_err().message.contains("nodez"));
    }

    #[test]
    fn catalog_pairs_build() {
        assert_eq!(PairSpec::NonExample.build(2).unwrap(), StructuralPair::non_example(2));
        let custom = PairSpec::Custom { f: FSpec::Power { beta: 0.0 }, g: GSpec::Linear, g_offset: 2.0 };
        assert_eq!(custom.build(1).unwrap().g_offset, 2.0);
    }
}
