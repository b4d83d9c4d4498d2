//! Scenario-driven command-line front end.
//!
//! A scenario is one JSON file naming the model, k, the event p and an anchor on the
//! observer worldline, plus optional per-command blocks. Results go to `--out-dir`;
//! standard output carries a single summary line.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bvp::{
    multistart_survey, shoot_with_diagnostics, solution_indices, solution_residuals, ObserverWorldline,
    ShootingConfig, ShootingProblem, SolutionResiduals, SurveyOptions,
};
use crate::curves::{resample_curve, Curve};
use crate::dynamics::{
    conservation_report, initial_velocity, integrate_from_velocity, solution_from_curve, BrachistochroneSolution,
    IntegrationConfig,
};
use crate::error::{Error, Result};
use crate::geometry::{conformal_geometry, Event, SpacetimeModel, Vector};
use crate::jacobi::{bfocal_points, focal_points};
use crate::models::{make_model, ModelSpec};
use crate::oracle::{discrete_minimize, straight_initial_curve, OracleOptions, PenaltyConfig};
use crate::tolerances::{DEDUP_DISTANCE, GRID_N, ODE_ATOL, ODE_RTOL, TOL_BVP};
use crate::transform::{correspondence_report, curve_distance, deform_d};
use crate::variation::{assemble_hessian, restricted_index_report, BoundaryConditions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "brachisto", version, about = "Travel-time brachistochrones in stationary spacetimes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for result files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for `survey`.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the survey seed of the scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Integrate from explicit initial data.
    Solve,
    /// Solve the boundary value problem from p to the observer.
    Shoot,
    /// Multi-start survey of all brachistochrones in a T bracket.
    Survey,
    /// Focal points of a stored solution.
    Jacobi,
    /// Hessian assembly and restricted index report.
    Index,
    /// Invariant battery on a stored solution.
    Verify,
    /// Discrete minimisation, cross-checked against shooting.
    Oracle,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Shoot => "shoot",
            Command::Survey => "survey",
            Command::Jacobi => "jacobi",
            Command::Index => "index",
            Command::Verify => "verify",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationBlock {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_grid")]
    pub n_grid: usize,
}

fn default_rtol() -> f64 {
    ODE_RTOL
}
fn default_atol() -> f64 {
    ODE_ATOL
}
fn default_grid() -> usize {
    GRID_N
}

impl Default for IntegrationBlock {
    fn default() -> Self {
        IntegrationBlock { rtol: ODE_RTOL, atol: ODE_ATOL, n_grid: GRID_N }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBlock {
    /// Launch direction; only its horizontal part matters.
    pub u: Vec<f64>,
    #[serde(rename = "T")]
    pub travel_time: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootBlock {
    pub u_guess: Vec<f64>,
    #[serde(rename = "T_guess")]
    pub t_guess: f64,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyBlock {
    pub n_starts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "T_bracket")]
    pub t_bracket: [f64; 2],
    #[serde(default)]
    pub dedup_threshold: Option<f64>,
    #[serde(default)]
    pub n_basis: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionBlock {
    /// Solution JSON written by `solve` or `shoot`, relative to the scenario file.
    pub solution: PathBuf,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexBlock {
    #[serde(default)]
    pub solution: Option<PathBuf>,
    #[serde(default = "default_basis")]
    pub n_basis: usize,
}

fn default_basis() -> usize {
    50
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    pub solution: PathBuf,
    #[serde(default)]
    pub tolerances: VerifyTolerances,
}

/// Thresholds of the invariant battery.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyTolerances {
    pub conservation: f64,
    pub ode: f64,
    pub geodesic: f64,
    pub energy: f64,
    pub roundtrip: f64,
    pub endpoint: f64,
}

impl Default for VerifyTolerances {
    fn default() -> Self {
        VerifyTolerances {
            conservation: 1e-8,
            ode: 1e-3,
            geodesic: 1e-3,
            energy: 1e-6,
            roundtrip: 1e-7,
            endpoint: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
}

fn default_epsilon() -> f64 {
    1e-2
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    pub k: f64,
    pub p: Vec<f64>,
    pub gamma_anchor: Vec<f64>,
    #[serde(default)]
    pub integration: IntegrationBlock,
    #[serde(default)]
    pub solve: Option<SolveBlock>,
    #[serde(default)]
    pub shoot: Option<ShootBlock>,
    #[serde(default)]
    pub survey: Option<SurveyBlock>,
    #[serde(default)]
    pub jacobi: Option<SolutionBlock>,
    #[serde(default)]
    pub index: Option<IndexBlock>,
    #[serde(default)]
    pub verify: Option<VerifyBlock>,
    #[serde(default)]
    pub oracle: Option<OracleBlock>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Everything a command needs, resolved from the scenario file.
struct Scenario {
    cfg: ScenarioConfig,
    model: SpacetimeModel,
    base_dir: PathBuf,
}

impl Scenario {
    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = ScenarioConfig::parse(&text)?;
        let model = make_model(&cfg.model)?;
        for (name, v) in [("p", &cfg.p), ("gamma_anchor", &cfg.gamma_anchor)] {
            if v.len() != model.m {
                return Err(Error::Config(format!(
                    "'{name}' has {} coordinates, model '{}' needs {}",
                    v.len(),
                    model.name,
                    model.m
                )));
            }
        }
        if !(cfg.k > 0.0) {
            return Err(Error::Config(format!("k must be positive, got {}", cfg.k)));
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Scenario { cfg, model, base_dir })
    }

    fn integration(&self) -> IntegrationConfig {
        let b = &self.cfg.integration;
        IntegrationConfig { rtol: b.rtol, atol: b.atol, n_grid: b.n_grid }
    }

    fn vector(&self, name: &str, v: &[f64]) -> Result<Vector> {
        if v.len() != self.model.m {
            return Err(Error::Config(format!("'{name}' needs {} components", self.model.m)));
        }
        Ok(Vector::from_column_slice(v))
    }

    fn problem(&self, shoot: Option<&ShootBlock>) -> Result<ShootingProblem> {
        let mut config = ShootingConfig { integration: self.integration(), ..ShootingConfig::default() };
        if let Some(b) = shoot {
            config.tol = b.tol.unwrap_or(TOL_BVP);
            if let Some(n) = b.max_iter {
                config.max_iter = n;
            }
        }
        let gamma = ObserverWorldline::new(&self.model, &Event::new(&self.cfg.gamma_anchor))?;
        ShootingProblem::new(self.model.clone(), &Event::new(&self.cfg.p), gamma, self.cfg.k, config)
    }

    fn shoot(&self) -> Result<(ShootingProblem, BrachistochroneSolution, usize)> {
        let b = self.cfg.shoot.as_ref().ok_or_else(|| missing("shoot"))?;
        let problem = self.problem(Some(b))?;
        let u = self.vector("shoot.u_guess", &b.u_guess)?;
        let (sol, diag) = shoot_with_diagnostics(&problem, &u, b.t_guess)?;
        Ok((problem, sol, diag.iterations))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

fn missing(block: &str) -> Error {
    Error::Config(format!("scenario has no '{block}' block"))
}

/// Pretty JSON with every float written as `{:.16e}` (17 significant digits).
struct RoundTripFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{:.16e}", value)
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serialises to pretty JSON with round-trip exact floats; NaN and infinities become null.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = RoundTripFormatter { inner: serde_json::ser::PrettyFormatter::new() };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser).map_err(|e| Error::Io(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

/// Header of a stored solution; the samples live in the CSV named by `curve`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionHeader {
    pub model: ModelSpec,
    pub k: f64,
    #[serde(rename = "T")]
    pub travel_time: f64,
    pub residuals: SolutionResiduals,
    pub curve: String,
}

fn write_solution(
    out_dir: &Path,
    spec: &ModelSpec,
    sol: &BrachistochroneSolution,
    residuals: SolutionResiduals,
) -> Result<SolutionHeader> {
    let header = SolutionHeader {
        model: spec.clone(),
        k: sol.k,
        travel_time: sol.travel_time,
        residuals,
        curve: "solution.csv".into(),
    };
    write_file(out_dir, "solution.csv", &sol.sigma.to_csv())?;
    write_file(out_dir, "solution.json", &to_json(&header)?)?;
    Ok(header)
}

/// Reads a stored solution back. The model must match the scenario's.
fn read_solution(sc: &Scenario, path: &Path) -> Result<BrachistochroneSolution> {
    let path = sc.resolve(path);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let header: SolutionHeader = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    if header.model != sc.cfg.model {
        return Err(Error::Config("solution file was computed for a different model".into()));
    }
    let csv_path = path.parent().map(|d| d.join(&header.curve)).unwrap_or_else(|| PathBuf::from(&header.curve));
    let csv = fs::read_to_string(&csv_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", csv_path.display())))?;
    let curve = Curve::from_csv(&csv)?;
    solution_from_curve(&sc.model, header.k, header.travel_time, curve)
}

/// Failure record written to `error.json`.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorRecord {
    pub command: String,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
    /// Names of failed checks, when the failure is a residual battery.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<String>,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
    pub failed: Vec<String>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Config(_) | Error::UnknownModel(_) | Error::InvalidParams(_) | Error::Dimension { .. } => {
                EXIT_CONFIG
            }
            _ => EXIT_NUMERICAL,
        };
        Failure { code, error, failed: Vec::new() }
    }
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    command: &'static str,
    solution: &'a SolutionHeader,
    conservation: crate::dynamics::ConservationReport,
}

#[derive(Serialize)]
struct ShootOutput<'a> {
    command: &'static str,
    solution: &'a SolutionHeader,
    iterations: usize,
    correspondence: crate::transform::CorrespondenceReport,
}

#[derive(Serialize)]
struct JacobiOutput {
    model: String,
    k: f64,
    #[serde(rename = "T")]
    travel_time: f64,
    /// σ orientation, with the b-side confirmation.
    brachistochrone: crate::jacobi::BFocalReport,
    /// Focal points of O(D(σ)), γ → p orientation.
    riemannian: crate::jacobi::FocalReport,
    trace: &'static str,
}

#[derive(Serialize)]
struct IndexOutput {
    model: String,
    k: f64,
    #[serde(rename = "T")]
    travel_time: f64,
    hessian: crate::variation::HessianMatrix,
    restricted: Option<crate::variation::IndexTriple>,
    geometric_index: Option<usize>,
    entries: &'static str,
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyOutput {
    model: String,
    k: f64,
    #[serde(rename = "T")]
    travel_time: f64,
    checks: Vec<Check>,
    pass: bool,
}

#[derive(Serialize)]
struct OracleOutput {
    model: String,
    k: f64,
    #[serde(rename = "N")]
    n: usize,
    epsilon: f64,
    candidate: crate::oracle::DiscreteCandidate,
    shoot_t: Option<f64>,
    t_difference: Option<f64>,
    curve_distance: Option<f64>,
    curve: &'static str,
}

fn run_solve(sc: &Scenario, out: &Path) -> Result<String> {
    let b = sc.cfg.solve.as_ref().ok_or_else(|| missing("solve"))?;
    if !(b.travel_time > 0.0) {
        return Err(Error::Config("solve.T must be positive".into()));
    }
    let p = sc.vector("p", &sc.cfg.p)?;
    let u = sc.vector("solve.u", &b.u)?;
    let v0 = initial_velocity(&sc.model, sc.cfg.k, &p, &u, b.travel_time)?;
    let sol = integrate_from_velocity(&sc.model, sc.cfg.k, b.travel_time, &p, &v0, &sc.integration())?;
    let problem = sc.problem(None)?;
    let residuals = solution_residuals(&problem, &sol)?;
    let header = write_solution(out, &sc.cfg.model, &sol, residuals)?;
    let conservation = conservation_report(&sc.model, &sol)?;
    let summary = format!(
        "solve: T={:.16e} conservation_y={:.3e} conservation_speed={:.3e}",
        sol.travel_time, conservation.max_y, conservation.max_speed
    );
    write_file(out, "solve.json", &to_json(&SolveOutput { command: "solve", solution: &header, conservation })?)?;
    Ok(summary)
}

fn run_shoot(sc: &Scenario, out: &Path) -> Result<String> {
    let (problem, sol, iterations) = sc.shoot()?;
    let residuals = solution_residuals(&problem, &sol)?;
    let header = write_solution(out, &sc.cfg.model, &sol, residuals)?;
    let correspondence = correspondence_report(&sc.model, &sol)?;
    write_file(
        out,
        "shoot.json",
        &to_json(&ShootOutput { command: "shoot", solution: &header, iterations, correspondence })?,
    )?;
    Ok(format!("shoot: T={:.16e} iterations={iterations}", sol.travel_time))
}

fn run_survey(sc: &Scenario, out: &Path, seed: Option<u64>) -> Result<String> {
    let b = sc.cfg.survey.as_ref().ok_or_else(|| missing("survey"))?;
    let problem = sc.problem(sc.cfg.shoot.as_ref())?;
    let mut opts = SurveyOptions::new(b.n_starts, (b.t_bracket[0], b.t_bracket[1]), seed.unwrap_or(b.seed));
    opts.dedup_threshold = b.dedup_threshold.unwrap_or(DEDUP_DISTANCE);
    if let Some(n) = b.n_basis {
        opts.n_basis = n;
    }
    let result = multistart_survey(&problem, &opts)?;
    for e in &result.solutions {
        write_file(out, &e.curve_ref, &e.solution.sigma.to_csv())?;
    }
    write_file(out, "survey.json", &to_json(&result)?)?;
    Ok(format!(
        "survey: seed={} count={} parity={:?}",
        result.seed, result.count, result.parity_status
    ))
}

fn run_jacobi(sc: &Scenario, out: &Path) -> Result<String> {
    let b = sc.cfg.jacobi.as_ref().ok_or_else(|| missing("jacobi"))?;
    let sol = read_solution(sc, &b.solution)?;
    let cg = conformal_geometry(&sc.model, sol.k)?;
    let w = deform_d(&sc.model, &sol)?.reversed();
    let riemannian = focal_points(&cg, &w)?;
    let brachistochrone = bfocal_points(&sc.model, &sol)?;
    write_file(out, "focal_trace.csv", &brachistochrone.report.trace_csv())?;
    let summary = format!(
        "jacobi: focal_points={} geometric_index={} confirmed={}",
        brachistochrone.report.focal_list.len(),
        brachistochrone.report.geometric_index,
        brachistochrone.confirmed
    );
    let o = JacobiOutput {
        model: sc.model.name.clone(),
        k: sol.k,
        travel_time: sol.travel_time,
        brachistochrone,
        riemannian,
        trace: "focal_trace.csv",
    };
    write_file(out, "focal.json", &to_json(&o)?)?;
    Ok(summary)
}

fn run_index(sc: &Scenario, out: &Path) -> Result<String> {
    let b = sc.cfg.index.as_ref().ok_or_else(|| missing("index"))?;
    let sol = match &b.solution {
        Some(path) => read_solution(sc, path)?,
        None => sc.shoot()?.1,
    };
    let cg = conformal_geometry(&sc.model, sol.k)?;
    let w = deform_d(&sc.model, &sol)?.reversed();
    let hessian = assemble_hessian(&cg, &w, BoundaryConditions::Full, b.n_basis)?;
    let restricted = if hessian.n_zero == 0 { Some(restricted_index_report(&cg, &w, b.n_basis)?) } else { None };
    let (_, geometric) = solution_indices(&sc.model, &sol, b.n_basis);
    write_file(out, "hessian.csv", &hessian.to_csv())?;
    let summary = format!(
        "index: morse={} null={} restricted={:?} geometric={:?}",
        hessian.n_negative,
        hessian.n_zero,
        restricted.map(|r| (r.full, r.horizontal, r.perpendicular)),
        geometric
    );
    let o = IndexOutput {
        model: sc.model.name.clone(),
        k: sol.k,
        travel_time: sol.travel_time,
        hessian,
        restricted,
        geometric_index: geometric,
        entries: "hessian.csv",
    };
    write_file(out, "index.json", &to_json(&o)?)?;
    Ok(summary)
}

fn run_verify(sc: &Scenario, out: &Path) -> std::result::Result<String, Failure> {
    let b = sc.cfg.verify.as_ref().ok_or_else(|| missing("verify"))?;
    let sol = read_solution(sc, &b.solution)?;
    let problem = sc.problem(None)?;
    let tol = &b.tolerances;
    let tt = sol.travel_time;
    let corr = correspondence_report(&sc.model, &sol);
    let (_, r) = problem.gamma.quotient_residual(&sc.model, sol.sigma.points.last().unwrap())?;
    let nan = f64::NAN;
    let (geo, energy, rt) = match &corr {
        Ok(c) => (c.geodesic_residual, c.energy_vs_half_t2, c.roundtrip_error),
        Err(e) => {
            log::warn!("correspondence checks failed: {e}");
            (nan, nan, nan)
        }
    };
    let raw = [
        ("conservation_y", sol.residual_conservation_y, tol.conservation * (1.0 + sol.k * tt)),
        ("conservation_speed", sol.residual_conservation_speed, tol.conservation * (1.0 + tt * tt)),
        ("ode", sol.residual_ode, tol.ode * (1.0 + tt * tt)),
        ("geodesic", geo, tol.geodesic),
        ("energy_vs_half_t2", energy, tol.energy * (1.0 + tt * tt)),
        ("roundtrip", rt, tol.roundtrip),
        ("endpoint", r.norm(), tol.endpoint * (1.0 + tt)),
    ];
    let checks: Vec<Check> = raw
        .iter()
        .map(|&(name, value, tolerance)| Check { name, value, tolerance, pass: value <= tolerance })
        .collect();
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.to_string()).collect();
    let o = VerifyOutput {
        model: sc.model.name.clone(),
        k: sol.k,
        travel_time: tt,
        pass: failed.is_empty(),
        checks,
    };
    write_file(out, "verify.json", &to_json(&o)?)?;
    if failed.is_empty() {
        Ok(format!("verify: pass ({} checks)", o.checks.len()))
    } else {
        Err(Failure {
            code: EXIT_NUMERICAL,
            error: Error::ConstraintViolated(format!("residual checks failed: {}", failed.join(", "))),
            failed,
        })
    }
}

fn run_oracle(sc: &Scenario, out: &Path) -> Result<String> {
    let b = sc.cfg.oracle.as_ref().ok_or_else(|| missing("oracle"))?;
    let pc = PenaltyConfig::new(b.epsilon)?;
    let mut opts = OracleOptions::default();
    if let Some(n) = b.max_iter {
        opts.max_iter = n;
    }
    if let Some(t) = b.tol {
        opts.tol = t;
    }
    let cg = conformal_geometry(&sc.model, sc.cfg.k)?;
    let p = sc.vector("p", &sc.cfg.p)?;
    let anchor = sc.vector("gamma_anchor", &sc.cfg.gamma_anchor)?;
    let gamma = ObserverWorldline::new(&sc.model, &Event::new(&sc.cfg.gamma_anchor))?;
    let init = straight_initial_curve(&sc.model, &p, &anchor, b.n)?;
    let candidate = discrete_minimize(&cg, &p, &gamma, b.n, &init, &pc, &opts)?;
    write_file(out, "oracle.csv", &candidate.to_csv())?;

    let (mut shoot_t, mut t_diff, mut dist) = (None, None, None);
    if sc.cfg.shoot.is_some() {
        let (_, sol, _) = sc.shoot()?;
        let w = resample_curve(&deform_d(&sc.model, &sol)?, b.n)?;
        shoot_t = Some(sol.travel_time);
        t_diff = Some((sol.travel_time - candidate.t_estimate).abs());
        dist = Some(curve_distance(&sc.model, &w, &candidate.polyline)?);
    }
    let summary = format!(
        "oracle: T_estimate={:.16e} converged={} t_difference={}",
        candidate.t_estimate,
        candidate.converged,
        t_diff.map_or("n/a".to_string(), |d| format!("{d:.3e}"))
    );
    let o = OracleOutput {
        model: sc.model.name.clone(),
        k: sc.cfg.k,
        n: b.n,
        epsilon: b.epsilon,
        candidate,
        shoot_t,
        t_difference: t_diff,
        curve_distance: dist,
        curve: "oracle.csv",
    };
    write_file(out, "oracle.json", &to_json(&o)?)?;
    Ok(summary)
}

/// Runs one command on a scenario file; returns the summary line or a failure.
pub fn run_scenario(cli: &Cli) -> std::result::Result<String, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let sc = Scenario::load(path)?;
    let out = cli.out_dir.as_path();
    match cli.command {
        Command::Solve => Ok(run_solve(&sc, out)?),
        Command::Shoot => Ok(run_shoot(&sc, out)?),
        Command::Survey => Ok(run_survey(&sc, out, cli.seed)?),
        Command::Jacobi => Ok(run_jacobi(&sc, out)?),
        Command::Index => Ok(run_index(&sc, out)?),
        Command::Verify => run_verify(&sc, out),
        Command::Oracle => Ok(run_oracle(&sc, out)?),
    }
}

/// Full entry point: thread pool, dispatch, error record, exit code.
pub fn main_with(cli: Cli) -> i32 {
    let threads = match cli.command {
        Command::Survey => cli.threads.unwrap_or(0),
        _ => 1,
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::debug!("thread pool already initialised: {e}");
    }
    match run_scenario(&cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(f) => {
            let kind = if f.code == EXIT_CONFIG { "config" } else { "numerical" };
            log::error!("{}: {}", cli.command.name(), f.error);
            let record = ErrorRecord {
                command: cli.command.name().into(),
                kind,
                exit_code: f.code,
                message: f.error.to_string(),
                failed: f.failed,
            };
            match to_json(&record).and_then(|s| write_file(&cli.out_dir, "error.json", &s)) {
                Ok(()) => {}
                Err(e) => log::error!("could not write error.json: {e}"),
            }
            println!("{}: error ({kind}): {}", cli.command.name(), f.error);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let ok = r#"{"model":{"name":"minkowski3"},"k":1.5,"p":[0,0,0],"gamma_anchor":[1,0,0]}"#;
        assert!(ScenarioConfig::parse(ok).is_ok());
        let bad = r#"{"model":{"name":"minkowski3"},"k":1.5,"p":[0,0,0],"gamma_anchor":[1,0,0],"extra":1}"#;
        assert!(matches!(ScenarioConfig::parse(bad), Err(Error::Config(_))));
    }

    #[test]
    fn floats_round_trip() {
        let x = [0.1f64, 1.0 / 3.0, 2f64.sqrt() * 1e-300, f64::NAN];
        let s = to_json(&x).unwrap();
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        for (a, b) in x.iter().zip(&back) {
            match b {
                Some(b) => assert_eq!(a.to_bits(), b.to_bits()),
                None => assert!(a.is_nan()),
            }
        }
    }
}
