//! JSON job runner behind the `globinv` binary.
//!
//! A job names a registered map, a command and a `parameters` object for
//! that command. Running it writes `report.json` plus CSV plot data into the
//! output directory. Every report carries the resolved parameters with all
//! defaults filled in.

mod plot;

pub use plot::{emit_plot_data, PlotData};

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certificates::{diagnose, graves_certificate, DiagnoseOptions, VerifyOptions};
use crate::error::Error;
use crate::global_solver::{
    fibre_enumerate, solve, star_probe, FibreMode, FibreOptions, SolveOptions, SolveOutcome,
    Strategy,
};
use crate::indicators::{
    fredholm_data, inj_indicator, mu_profile, rho_of_r, sur_indicator, ProfileMode,
    DEFAULT_RANK_TOL,
};
use crate::lifting::LiftOptions;
use crate::map_model::{linear, registry_entry, RegistryEntry};
use crate::sampling::sphere_directions;

pub const SCHEMA_VERSION: &str = "1";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Indicators,
    Certify,
    Solve,
    Star,
    Fibre,
    Diagnose,
}

fn default_schema() -> String {
    SCHEMA_VERSION.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    #[serde(default = "default_schema")]
    pub schema_version: String,
    pub map: String,
    pub command: Command,
    #[serde(default)]
    pub parameters: Value,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Row-major matrix for the `linear` map.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum JobError {
    Validation(String),
    Numerical(String),
    UnknownMap(String),
    Io(String),
}

impl JobError {
    pub fn exit_code(&self) -> i32 {
        match self {
            JobError::Validation(_) => 2,
            JobError::Numerical(_) | JobError::Io(_) => 3,
            JobError::UnknownMap(_) => 4,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, message) = match self {
            JobError::Validation(m) => ("validation", m),
            JobError::Numerical(m) => ("numerical", m),
            JobError::UnknownMap(m) => ("unknown_map", m),
            JobError::Io(m) => ("io", m),
        };
        json!({ "error": { "code": self.exit_code(), "kind": kind, "message": message } })
    }
}

impl From<Error> for JobError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::UnknownMap(_) => JobError::UnknownMap(msg),
            Error::NonFinite { .. }
            | Error::ZeroRadius
            | Error::EmptySublevel { .. }
            | Error::LoopNotInImage => JobError::Numerical(msg),
            _ => JobError::Validation(msg),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> JobError {
    JobError::Io(format!("{}: {e}", path.display()))
}

pub fn parse_job(text: &str) -> Result<JobSpec, JobError> {
    let spec: JobSpec =
        serde_json::from_str(text).map_err(|e| JobError::Validation(format!("job spec: {e}")))?;
    if spec.schema_version != SCHEMA_VERSION {
        return Err(JobError::Validation(format!(
            "unsupported schema_version `{}`",
            spec.schema_version
        )));
    }
    if !(spec.parameters.is_null() || spec.parameters.is_object()) {
        return Err(JobError::Validation("parameters must be an object".into()));
    }
    Ok(spec)
}

pub fn load_job(path: &Path) -> Result<JobSpec, JobError> {
    let text = fs::read_to_string(path)
        .map_err(|e| JobError::Validation(format!("{}: {e}", path.display())))?;
    parse_job(&text)
}

fn params<T: DeserializeOwned>(value: &Value) -> Result<T, JobError> {
    let value = if value.is_null() { json!({}) } else { value.clone() };
    serde_json::from_value(value).map_err(|e| JobError::Validation(format!("parameters: {e}")))
}

fn resolve_map(spec: &JobSpec) -> Result<RegistryEntry, JobError> {
    if spec.map == "linear" {
        let rows = spec
            .matrix
            .as_ref()
            .ok_or_else(|| JobError::Validation("map `linear` needs `matrix`".into()))?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(JobError::Validation("matrix rows differ in length".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        return Ok(linear(DMatrix::from_row_slice(rows.len(), ncols, &flat))?);
    }
    if spec.matrix.is_some() {
        return Err(JobError::Validation("`matrix` only applies to map `linear`".into()));
    }
    Ok(registry_entry(&spec.map)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    /// Certified when the map has an analytic bound, sampled otherwise.
    #[default]
    Auto,
    Certified,
    Sampled,
}

fn profile_mode(choice: ModeChoice, has_bound: bool, samples: usize, seed: u64) -> ProfileMode {
    match choice {
        ModeChoice::Certified => ProfileMode::Certified,
        ModeChoice::Auto if has_bound => ProfileMode::Certified,
        _ => ProfileMode::Sampled { samples, seed },
    }
}

fn point_or_origin(p: &Option<Vec<f64>>, n: usize) -> DVector<f64> {
    p.as_ref()
        .map_or_else(|| DVector::zeros(n), |v| DVector::from_column_slice(v))
}

fn required(v: &Option<Vec<f64>>, name: &str) -> Result<DVector<f64>, JobError> {
    v.as_ref()
        .map(|v| DVector::from_column_slice(v))
        .ok_or_else(|| JobError::Validation(format!("parameters.{name} is required")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorsParams {
    pub x0: Option<Vec<f64>>,
    pub r_max: f64,
    pub grid_size: usize,
    pub mode: ModeChoice,
    pub samples: usize,
    pub rank_tol: f64,
}

impl Default for IndicatorsParams {
    fn default() -> Self {
        Self {
            x0: None,
            r_max: 1.0,
            grid_size: 100,
            mode: ModeChoice::Auto,
            samples: 128,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyParams {
    pub x0: Option<Vec<f64>>,
    pub r: f64,
    /// Profile range; defaults to `r`.
    pub r_max: Option<f64>,
    pub grid_size: usize,
    pub mode: ModeChoice,
    pub samples: usize,
    pub verify: bool,
    pub verification: VerifyOptions,
}

impl Default for CertifyParams {
    fn default() -> Self {
        Self {
            x0: None,
            r: 1.0,
            r_max: None,
            grid_size: 4096,
            mode: ModeChoice::Auto,
            samples: 128,
            verify: true,
            verification: VerifyOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub y: Option<Vec<f64>>,
    /// Start of the lift; the origin when absent.
    pub seed_point: Option<Vec<f64>>,
    /// Defaults to Wazewski for square maps and horizontal lifting otherwise.
    pub strategy: Option<Strategy>,
    pub options: SolveOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StarParams {
    pub seed_point: Option<Vec<f64>>,
    /// Number of ray directions.
    pub directions: usize,
    pub t_budget: f64,
    pub options: LiftOptions,
}

impl Default for StarParams {
    fn default() -> Self {
        Self {
            seed_point: None,
            directions: 16,
            t_budget: 10.0,
            options: LiftOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FibreParams {
    pub y: Option<Vec<f64>>,
    pub mode: Option<FibreMode>,
    pub options: FibreOptions,
}

/// Outcome of a job that produced a report.
#[derive(Clone, Debug)]
pub struct JobOutput {
    pub exit_code: i32,
    pub output_dir: PathBuf,
    pub report: Value,
    pub artifacts: Vec<String>,
    /// Human-readable summary for standard output.
    pub summary: String,
}

struct Executed {
    resolved: Value,
    result: Value,
    plot: PlotData,
    failure: Option<String>,
    summary: String,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn execute(spec: &JobSpec, entry: &RegistryEntry) -> Result<Executed, JobError> {
    let model = &entry.model;
    let seed = spec.seed;
    match spec.command {
        Command::Indicators => {
            let p: IndicatorsParams = params(&spec.parameters)?;
            let x0 = point_or_origin(&p.x0, model.n());
            let jac = model.jacobian(&x0)?;
            let mode = profile_mode(p.mode, model.has_mu_bound(), p.samples, seed);
            let profile = mu_profile(model, &x0, p.r_max, p.grid_size, mode)?;
            let rho = rho_of_r(&profile, p.r_max)?;
            let resolved = IndicatorsParams {
                x0: Some(x0.iter().copied().collect()),
                ..p.clone()
            };
            let row_major: Vec<Vec<f64>> = jac
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect();
            let result = json!({
                "jacobian": row_major,
                "inj": inj_indicator(&jac)?,
                "sur": sur_indicator(&jac)?,
                "fredholm": to_value(&fredholm_data(&jac, p.rank_tol)?),
                "rho_r_max": rho,
                "profile": to_value(&profile),
            });
            Ok(Executed {
                resolved: to_value(&resolved),
                result,
                summary: format!("rho({}) = {rho}", p.r_max),
                plot: PlotData {
                    profile: Some(profile),
                    ..PlotData::default()
                },
                failure: None,
            })
        }
        Command::Certify => {
            let mut p: CertifyParams = params(&spec.parameters)?;
            let x0 = point_or_origin(&p.x0, model.n());
            p.x0 = Some(x0.iter().copied().collect());
            p.r_max = Some(p.r_max.unwrap_or(p.r));
            p.verification.seed = seed;
            let mode = profile_mode(p.mode, model.has_mu_bound(), p.samples, seed);
            let profile = mu_profile(model, &x0, p.r_max.unwrap_or(p.r), p.grid_size, mode)?;
            let cert = graves_certificate(
                model,
                &x0,
                p.r,
                &profile,
                p.verify.then_some(&p.verification),
            )?;
            let failure = cert.verification.as_ref().and_then(|v| {
                (v.inside < v.targets.len()).then(|| {
                    format!("{} of {} verification targets failed", v.targets.len() - v.inside, v.targets.len())
                })
            });
            Ok(Executed {
                resolved: to_value(&p),
                result: to_value(&cert),
                summary: format!("rho = {} (certified: {})", cert.rho, cert.certified),
                plot: PlotData {
                    profile: Some(profile),
                    ..PlotData::default()
                },
                failure,
            })
        }
        Command::Solve => {
            let mut p: SolveParams = params(&spec.parameters)?;
            let y = required(&p.y, "y")?;
            let x_seed = point_or_origin(&p.seed_point, model.n());
            let strategy = p.strategy.unwrap_or_else(|| Strategy::default_for(model));
            p.seed_point = Some(x_seed.iter().copied().collect());
            p.strategy = Some(strategy);
            let report = solve(model, &y, &x_seed, strategy, &p.options)?;
            let trajectory = match &report.outcome {
                SolveOutcome::Lift(l) => l.trajectory.clone(),
                SolveOutcome::Flow(f) => f.trajectory.clone(),
            };
            let status = report.outcome.status();
            let failure = report
                .solution
                .is_none()
                .then(|| format!("no solution: lift ended {}", status.label()));
            Ok(Executed {
                resolved: to_value(&p),
                result: to_value(&report),
                summary: format!("{} residual {:e}", status.label(), report.residual),
                plot: PlotData {
                    trajectories: vec![trajectory],
                    ..PlotData::default()
                },
                failure,
            })
        }
        Command::Star => {
            let mut p: StarParams = params(&spec.parameters)?;
            let x_seed = point_or_origin(&p.seed_point, model.n());
            p.seed_point = Some(x_seed.iter().copied().collect());
            let dirs = sphere_directions(p.directions, model.m(), seed);
            let report = star_probe(model, &x_seed, &dirs, p.t_budget, &p.options)?;
            let min_reach = report.rays.iter().map(|r| r.reach).fold(f64::INFINITY, f64::min);
            Ok(Executed {
                resolved: to_value(&p),
                result: to_value(&report),
                summary: format!("{} rays, min reach {min_reach}", report.rays.len()),
                plot: PlotData {
                    star: Some(report),
                    ..PlotData::default()
                },
                failure: None,
            })
        }
        Command::Fibre => {
            let p: FibreParams = params(&spec.parameters)?;
            let y = required(&p.y, "y")?;
            let mode = p
                .mode
                .as_ref()
                .ok_or_else(|| JobError::Validation("parameters.mode is required".into()))?;
            let report = fibre_enumerate(model, &y, mode, &p.options)?;
            Ok(Executed {
                resolved: to_value(&p),
                summary: format!("{} fibre points", report.points.len()),
                result: to_value(&report),
                plot: PlotData::default(),
                failure: None,
            })
        }
        Command::Diagnose => {
            let mut p: DiagnoseOptions = params(&spec.parameters)?;
            p.seed = seed;
            p.katriel.seed = seed;
            p.pairs.seed = seed;
            let report = diagnose(entry, &p)?;
            Ok(Executed {
                resolved: to_value(&p),
                summary: report.table(),
                result: to_value(&report),
                plot: PlotData::default(),
                failure: None,
            })
        }
    }
}

/// Runs a job and writes its artifacts. `out` overrides `spec.output_dir`.
pub fn run_job(spec: &JobSpec, out: Option<&Path>) -> Result<JobOutput, JobError> {
    let entry = resolve_map(spec)?;
    let executed = execute(spec, &entry)?;
    let output_dir = out
        .map(Path::to_path_buf)
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("globinv-out"));
    fs::create_dir_all(&output_dir).map_err(|e| io_err(&output_dir, e))?;
    let artifacts = emit_plot_data(&executed.plot, &output_dir).map_err(|e| io_err(&output_dir, e))?;
    let exit_code = if executed.failure.is_some() { 3 } else { 0 };

    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "timestamp": timestamp(),
        "map": spec.map,
        "command": spec.command,
        "seed": spec.seed,
        "matrix": spec.matrix,
        "parameters": executed.resolved,
        "status": if exit_code == 0 { "ok" } else { "numerical_failure" },
        "failure": executed.failure,
        "exit_code": exit_code,
        "artifacts": artifacts,
        "result": executed.result,
    });
    let path = output_dir.join(REPORT_FILE);
    let text = serde_json::to_string_pretty(&report).map_err(|e| JobError::Io(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    Ok(JobOutput {
        exit_code,
        output_dir,
        report,
        artifacts,
        summary: executed.summary,
    })
}

/// Loads and runs a job file, reporting errors as JSON on standard error.
/// Returns the process exit code.
pub fn run_job_file(path: &Path, out: Option<&Path>) -> i32 {
    let result = load_job(path).and_then(|spec| run_job(&spec, out));
    match result {
        Ok(output) => {
            print!("{}", output.summary);
            if !output.summary.ends_with('\n') {
                println!();
            }
            if let Some(failure) = output.report.get("failure").and_then(Value::as_str) {
                let err = JobError::Numerical(failure.to_string());
                eprintln!("{}", err.to_json());
            }
            println!("report: {}", output.output_dir.join(REPORT_FILE).display());
            output.exit_code
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
