//! Global solving of `f(x) = y` by ray lifting from a seed point, probing of
//! the star-shaped domain of the continued inverse, fibre enumeration by loop
//! lifting, and local trivialization of submersions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certificates::RadiusCertificate;
use crate::error::{Error, Result};
use crate::lifting::{
    gradient_flow, lift_line_horizontal, lift_line_square, FlowOutcome, LiftOptions, LiftOutcome,
    LiftStatus,
};
use crate::map_model::MapModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Wazewski,
    Horizontal,
    GradientFlow,
}

impl Strategy {
    /// Wazewski for square maps, horizontal lifting for submersions.
    pub fn default_for(model: &MapModel) -> Self {
        if model.n() == model.m() {
            Strategy::Wazewski
        } else {
            Strategy::Horizontal
        }
    }

    fn name(self) -> &'static str {
        match self {
            Strategy::Wazewski => "Wazewski",
            Strategy::Horizontal => "Horizontal",
            Strategy::GradientFlow => "GradientFlow",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub lift: LiftOptions,
    /// Absolute residual tolerance in the codomain.
    pub tol: f64,
    /// Newton corrector iterations applied to a completed lift.
    pub polish_iters: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            lift: LiftOptions::default(),
            tol: 1e-8,
            polish_iters: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolveOutcome {
    Lift(LiftOutcome),
    Flow(FlowOutcome),
}

impl SolveOutcome {
    pub fn status(&self) -> LiftStatus {
        match self {
            SolveOutcome::Lift(o) => o.status,
            SolveOutcome::Flow(o) => o.status,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub target: Vec<f64>,
    pub seed: Vec<f64>,
    pub strategy: Strategy,
    pub solution: Option<Vec<f64>>,
    /// `|f(x*) - y|` re-evaluated at the returned point.
    pub residual: f64,
    /// Endpoint of the lift or flow before correction.
    pub end_point: Vec<f64>,
    pub outcome: SolveOutcome,
    pub within_radius: Option<bool>,
}

impl SolveReport {
    pub fn solution_vector(&self) -> Option<DVector<f64>> {
        self.solution.as_deref().map(DVector::from_column_slice)
    }

    /// Records whether the solution lies in the certified ball `B_r(x0)`.
    pub fn check_radius(&mut self, certificate: &RadiusCertificate) {
        self.within_radius = self.solution_vector().map(|x| {
            (x - DVector::from_column_slice(&certificate.x0)).norm() < certificate.r
        });
    }
}

fn pseudo_inverse_step(jac: &DMatrix<f64>, residual: &DVector<f64>) -> Option<DVector<f64>> {
    let svd = jac.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let step = svd.solve(residual, 1e-12 * sigma_max).ok()?;
    step.iter().all(|v| v.is_finite()).then_some(step)
}

/// Gauss-Newton correction with the minimum-norm step; keeps only
/// iterations that reduce the residual.
pub(crate) fn polish(
    model: &MapModel,
    x: &DVector<f64>,
    y: &DVector<f64>,
    tol: f64,
    iters: usize,
) -> Result<(DVector<f64>, f64)> {
    let mut x = x.clone();
    let mut r = model.evaluate(&x)? - y;
    let mut rnorm = r.norm();
    for _ in 0..iters {
        if rnorm <= 1e-3 * tol {
            break;
        }
        let Ok(jac) = model.jacobian(&x) else { break };
        let Some(step) = pseudo_inverse_step(&jac, &r) else { break };
        let candidate = &x - step;
        let Ok(value) = model.evaluate(&candidate) else { break };
        let r_new = value - y;
        if r_new.norm() >= rnorm {
            break;
        }
        x = candidate;
        r = r_new;
        rnorm = r.norm();
    }
    Ok((x, rnorm))
}

fn check_point(model: &MapModel, x: &DVector<f64>, what: &str) -> Result<()> {
    if x.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} must be finite")));
    }
    Ok(())
}

fn check_target(model: &MapModel, y: &DVector<f64>) -> Result<()> {
    if y.len() != model.m() {
        return Err(Error::DimensionMismatch {
            expected: model.m(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Solves `f(x) = y` starting from `x_seed`.
pub fn solve(
    model: &MapModel,
    y: &DVector<f64>,
    x_seed: &DVector<f64>,
    strategy: Strategy,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    check_point(model, x_seed, "seed")?;
    check_target(model, y)?;
    let mismatch = match strategy {
        Strategy::Wazewski => model.n() != model.m(),
        Strategy::Horizontal => model.m() > model.n(),
        Strategy::GradientFlow => false,
    };
    if mismatch {
        return Err(Error::StrategyMismatch {
            strategy: strategy.name(),
            n: model.n(),
            m: model.m(),
        });
    }

    let w = y - model.evaluate(x_seed)?;
    let lift_opts = LiftOptions {
        t_end: 1.0,
        ..opts.lift.clone()
    };
    let (outcome, end, usable) = match strategy {
        Strategy::Wazewski | Strategy::Horizontal => {
            let lift = if strategy == Strategy::Wazewski {
                lift_line_square(model, x_seed, &w, &lift_opts)?
            } else {
                lift_line_horizontal(model, x_seed, &w, &lift_opts)?
            };
            let end = lift.end_point();
            let complete = lift.status.is_complete();
            (SolveOutcome::Lift(lift), end, complete)
        }
        Strategy::GradientFlow => {
            let flow = gradient_flow(model, x_seed, y, &lift_opts)?;
            let end = flow.end_point();
            let converged = matches!(flow.verdict, crate::lifting::FlowVerdict::Converged { .. });
            (SolveOutcome::Flow(flow), end, converged)
        }
    };

    let (candidate, residual) = if usable {
        polish(model, &end, y, opts.tol, opts.polish_iters)?
    } else {
        let r = model.evaluate(&end).map(|v| (v - y).norm()).unwrap_or(f64::INFINITY);
        (end.clone(), r)
    };
    let solution = (usable && residual <= opts.tol).then(|| candidate.iter().copied().collect());
    Ok(SolveReport {
        target: y.iter().copied().collect(),
        seed: x_seed.iter().copied().collect(),
        strategy,
        solution,
        residual,
        end_point: end.iter().copied().collect(),
        outcome,
        within_radius: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StarReason {
    Singular,
    Escaped,
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarRay {
    pub direction: Vec<f64>,
    /// Largest `t` found with a complete lift of `y0 + t * direction`.
    pub reach: f64,
    pub reason: StarReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarReport {
    pub seed: Vec<f64>,
    pub y0: Vec<f64>,
    pub t_budget: f64,
    pub bisection_tol: f64,
    pub rays: Vec<StarRay>,
}

fn star_reason(status: &LiftStatus) -> StarReason {
    match status {
        LiftStatus::Escaped { .. } => StarReason::Escaped,
        // step-size breakdown only happens next to a degenerate jacobian
        _ => StarReason::Singular,
    }
}

/// Probes the star domain of the continued inverse around `f(x_seed)`.
pub fn star_probe(
    model: &MapModel,
    x_seed: &DVector<f64>,
    directions: &[DVector<f64>],
    t_budget: f64,
    opts: &LiftOptions,
) -> Result<StarReport> {
    check_point(model, x_seed, "seed")?;
    if model.n() != model.m() {
        return Err(Error::StrategyMismatch {
            strategy: "Wazewski",
            n: model.n(),
            m: model.m(),
        });
    }
    if !(t_budget > 0.0) || !t_budget.is_finite() {
        return Err(Error::InvalidInput("t_budget must be positive".into()));
    }
    let y0 = model.evaluate(x_seed)?;
    let tol = 1e-3 * t_budget;
    let lift_opts = LiftOptions {
        t_end: 1.0,
        ..opts.clone()
    };
    let mut rays = Vec::with_capacity(directions.len());
    for dir in directions {
        check_target(model, dir)?;
        let norm = dir.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("star directions must be unit vectors".into()));
        }
        let full = lift_line_square(model, x_seed, &(dir * t_budget), &lift_opts)?;
        if full.status.is_complete() {
            rays.push(StarRay {
                direction: dir.iter().copied().collect(),
                reach: t_budget,
                reason: StarReason::BudgetExhausted,
            });
            continue;
        }
        let mut reason = star_reason(&full.status);
        let (mut lo, mut hi) = (0.0, t_budget);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let lift = lift_line_square(model, x_seed, &(dir * mid), &lift_opts)?;
            if lift.status.is_complete() {
                lo = mid;
            } else {
                hi = mid;
                reason = star_reason(&lift.status);
            }
        }
        rays.push(StarRay {
            direction: dir.iter().copied().collect(),
            reach: lo,
            reason,
        });
    }
    Ok(StarReport {
        seed: x_seed.iter().copied().collect(),
        y0: y0.iter().copied().collect(),
        t_budget,
        bisection_tol: tol,
        rays,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FibreMode {
    /// Lift the closed polygon `y -> vertices[0] -> ... -> y` repeatedly from `start`.
    Loop {
        start: Vec<f64>,
        vertices: Vec<Vec<f64>>,
    },
    /// Deduplicate solutions from several seeds.
    Multistart { seeds: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FibreOptions {
    pub solve: SolveOptions,
    /// Upper bound on the number of fibre points collected.
    pub max_points: usize,
}

impl Default for FibreOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            max_points: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FibreReport {
    pub target: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub monodromy_shifts: Vec<Vec<f64>>,
    /// Minimum pairwise distance, `None` for fewer than two points.
    pub discreteness_gap: Option<f64>,
    /// A loop lift returned to an already known fibre point.
    pub closed: bool,
}

/// Separation below which two fibre points are identified.
pub fn dedup_threshold(points: &[DVector<f64>]) -> f64 {
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    1e-5 * scale + 1e-8
}

fn find_close(points: &[DVector<f64>], x: &DVector<f64>, threshold: f64) -> Option<usize> {
    points.iter().position(|p| (p - x).norm() <= threshold)
}

fn lift_polygon(
    model: &MapModel,
    start: &DVector<f64>,
    path: &[DVector<f64>],
    opts: &SolveOptions,
) -> Result<std::result::Result<DVector<f64>, usize>> {
    let lift_opts = LiftOptions {
        t_end: 1.0,
        ..opts.lift.clone()
    };
    let mut x = start.clone();
    for (k, pair) in path.windows(2).enumerate() {
        let w = &pair[1] - &pair[0];
        let lift = lift_line_square(model, &x, &w, &lift_opts)?;
        if !lift.status.is_complete() {
            return Ok(Err(k));
        }
        x = polish(model, &lift.end_point(), &pair[1], opts.tol, opts.polish_iters)?.0;
    }
    Ok(Ok(x))
}

/// Enumerates points of `f^{-1}(y)` by loop lifting or multistart solving.
pub fn fibre_enumerate(
    model: &MapModel,
    y: &DVector<f64>,
    mode: &FibreMode,
    opts: &FibreOptions,
) -> Result<FibreReport> {
    check_target(model, y)?;
    if opts.max_points == 0 {
        return Err(Error::InvalidInput("max_points must be at least 1".into()));
    }
    let mut points: Vec<DVector<f64>> = Vec::new();
    let mut shifts = Vec::new();
    let mut closed = false;

    match mode {
        FibreMode::Loop { start, vertices } => {
            if model.n() != model.m() {
                return Err(Error::StrategyMismatch {
                    strategy: "Wazewski",
                    n: model.n(),
                    m: model.m(),
                });
            }
            let start = DVector::from_column_slice(start);
            check_point(model, &start, "loop start")?;
            let (x_start, r0) = polish(model, &start, y, opts.solve.tol, opts.solve.polish_iters)?;
            if r0 > opts.solve.tol {
                return Err(Error::InvalidInput(format!(
                    "loop start is not a preimage of the base point (residual {r0:e})"
                )));
            }
            let mut path = vec![y.clone()];
            for v in vertices {
                let v = DVector::from_column_slice(v);
                check_target(model, &v)?;
                path.push(v);
            }
            path.push(y.clone());

            points.push(x_start.clone());
            let mut x = x_start;
            while points.len() < opts.max_points {
                let end = match lift_polygon(model, &x, &path, &opts.solve)? {
                    Ok(end) => end,
                    Err(0) if shifts.is_empty() => return Err(Error::LoopNotInImage),
                    Err(_) => break,
                };
                shifts.push((&end - &x).iter().copied().collect::<Vec<_>>());
                let threshold = dedup_threshold(&points);
                if find_close(&points, &end, threshold).is_some() {
                    closed = true;
                    break;
                }
                points.push(end.clone());
                x = end;
            }
        }
        FibreMode::Multistart { seeds } => {
            let strategy = Strategy::default_for(model);
            for seed in seeds {
                if points.len() >= opts.max_points {
                    break;
                }
                let seed = DVector::from_column_slice(seed);
                let report = solve(model, y, &seed, strategy, &opts.solve)?;
                if let Some(x) = report.solution_vector() {
                    let mut all = points.clone();
                    all.push(x.clone());
                    if find_close(&points, &x, dedup_threshold(&all)).is_none() {
                        points.push(x);
                    }
                }
            }
        }
    }

    let residuals = points
        .iter()
        .map(|p| model.evaluate(p).map(|v| (v - y).norm()))
        .collect::<Result<Vec<_>>>()?;
    let mut gap: Option<f64> = None;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = (&points[i] - &points[j]).norm();
            gap = Some(gap.map_or(d, |g| g.min(d)));
        }
    }
    Ok(FibreReport {
        target: y.iter().copied().collect(),
        points: points.iter().map(|p| p.iter().copied().collect()).collect(),
        residuals,
        monodromy_shifts: shifts,
        discreteness_gap: gap,
        closed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrivializedPoint {
    pub point: Vec<f64>,
    /// `f(p)`.
    pub base: Vec<f64>,
    /// Endpoint of the horizontal lift of the segment from `f(p)` to `y`.
    pub fibre_point: Vec<f64>,
    pub residual: f64,
}

/// Local trivialization `p -> (f(p), q_p(1))` of a submersion over `y`.
pub fn trivialize(
    model: &MapModel,
    y: &DVector<f64>,
    points: &[DVector<f64>],
    opts: &SolveOptions,
) -> Result<Vec<TrivializedPoint>> {
    if model.m() >= model.n() {
        return Err(Error::StrategyMismatch {
            strategy: "Horizontal",
            n: model.n(),
            m: model.m(),
        });
    }
    check_target(model, y)?;
    let lift_opts = LiftOptions {
        t_end: 1.0,
        ..opts.lift.clone()
    };
    points
        .iter()
        .map(|p| {
            check_point(model, p, "trivialization point")?;
            let base = model.evaluate(p)?;
            let lift = lift_line_horizontal(model, p, &(y - &base), &lift_opts)?;
            if !lift.status.is_complete() {
                return Err(Error::InvalidInput(format!(
                    "horizontal lift from {:?} stopped: {}",
                    p.as_slice(),
                    lift.status.label()
                )));
            }
            let (fibre_point, residual) =
                polish(model, &lift.end_point(), y, opts.tol, opts.polish_iters)?;
            Ok(TrivializedPoint {
                point: p.iter().copied().collect(),
                base: base.iter().copied().collect(),
                fibre_point: fibre_point.iter().copied().collect(),
                residual,
            })
        })
        .collect()
}
