//! Lifting of straight codomain segments `t -> f(x0) + t w` through `f`.
//!
//! Square maps use the flow `q' = J(q)^{-1} w`; submersions use the
//! horizontal flow `q' = J^T (J J^T)^{-1} w`, whose velocity is orthogonal
//! to `Ker J`. Both are integrated by an adaptive Dormand-Prince 5(4)
//! scheme that stops with [`LiftStatus::Singular`] when the relevant
//! indicator falls below `mu_floor` and with [`LiftStatus::Escaped`] when the
//! path leaves the ball of radius `r_escape` or the domain of `f`.

mod gradient;
mod ode;

pub use gradient::{gradient_flow, FlowOutcome, FlowVerdict};

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::IndicatorKind;
use crate::map_model::MapModel;
use ode::{dormand_prince_step, state_error, step_factor, FieldFailure, FieldPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub mu_floor: f64,
    pub r_escape: Option<f64>,
    pub max_steps: usize,
    pub record_stride: usize,
    /// Final lift time; the lifted segment is `f(x0) + t w` for `t <= t_end`.
    pub t_end: f64,
    /// Gradient flow: largest decrease of `F` over one doubling of flow time
    /// still counted as a plateau.
    pub plateau_tol: f64,
    /// Gradient flow: flow-time budget.
    pub flow_t_max: f64,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            mu_floor: 1e-8,
            r_escape: Some(1e6),
            max_steps: 100_000,
            record_stride: 1,
            t_end: 1.0,
            plateau_tol: 1e-5,
            flow_t_max: 1e15,
        }
    }
}

impl LiftOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.rel_tol) || !positive(self.abs_tol) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.mu_floor >= 0.0) {
            return Err(Error::InvalidInput("mu_floor must be nonnegative".into()));
        }
        if let Some(r) = self.r_escape {
            if !(r > 0.0) {
                return Err(Error::InvalidInput("r_escape must be positive".into()));
            }
        }
        if self.max_steps == 0 || self.record_stride == 0 {
            return Err(Error::InvalidInput(
                "max_steps and record_stride must be at least 1".into(),
            ));
        }
        if !positive(self.t_end) || !positive(self.plateau_tol) || !positive(self.flow_t_max) {
            return Err(Error::InvalidInput(
                "t_end, plateau_tol and flow_t_max must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub mu_values: Vec<f64>,
    /// Cumulative chord length at each recorded point.
    pub cumulative_length: Vec<f64>,
    /// Sum of chord lengths over every accepted step.
    pub length: f64,
    pub weighted_length: Option<f64>,
}

impl LiftTrajectory {
    fn new() -> Self {
        Self {
            times: Vec::new(),
            points: Vec::new(),
            mu_values: Vec::new(),
            cumulative_length: Vec::new(),
            length: 0.0,
            weighted_length: None,
        }
    }

    /// Builds a trajectory from bare points (times `k / (N-1)`, `mu` unknown).
    pub fn from_points(points: &[DVector<f64>]) -> Self {
        let mut traj = Self::new();
        let last = points.len().saturating_sub(1).max(1) as f64;
        for (k, p) in points.iter().enumerate() {
            if k > 0 {
                traj.length += (p - &points[k - 1]).norm();
            }
            traj.times.push(k as f64 / last);
            traj.points.push(p.iter().copied().collect());
            traj.mu_values.push(f64::NAN);
            traj.cumulative_length.push(traj.length);
        }
        traj
    }

    fn push(&mut self, t: f64, q: &DVector<f64>, mu: f64) {
        self.times.push(t);
        self.points.push(q.iter().copied().collect());
        self.mu_values.push(mu);
        self.cumulative_length.push(self.length);
    }

    pub fn point(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.points[k])
    }

    pub fn last_point(&self) -> DVector<f64> {
        self.point(self.points.len() - 1)
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn min_mu(&self) -> f64 {
        self.mu_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `t,x_1..x_n,mu,cumulative_length`.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, |p| p.len());
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x_{i}");
        }
        out.push_str(",mu,cumulative_length\n");
        for k in 0..self.times.len() {
            let _ = write!(out, "{}", self.times[k]);
            for v in &self.points[k] {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{}", self.mu_values[k], self.cumulative_length[k]);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LiftStatus {
    Complete,
    Singular { t: f64, mu: f64 },
    Escaped { t: f64, distance: f64 },
    StepFailure { t: f64 },
}

impl LiftStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, LiftStatus::Complete)
    }

    /// Time at which the lift stopped, `None` when complete.
    pub fn stop_time(&self) -> Option<f64> {
        match *self {
            LiftStatus::Complete => None,
            LiftStatus::Singular { t, .. }
            | LiftStatus::Escaped { t, .. }
            | LiftStatus::StepFailure { t } => Some(t),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LiftStatus::Complete => "Complete",
            LiftStatus::Singular { .. } => "Singular",
            LiftStatus::Escaped { .. } => "Escaped",
            LiftStatus::StepFailure { .. } => "StepFailure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftOutcome {
    pub trajectory: LiftTrajectory,
    pub status: LiftStatus,
    /// `|f(q(t_stop)) - (f(x0) + t_stop w)|`.
    pub target_residual: f64,
}

impl LiftOutcome {
    pub fn end_point(&self) -> DVector<f64> {
        self.trajectory.last_point()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LiftKind {
    Square,
    Horizontal,
}

impl LiftKind {
    fn indicator(self) -> IndicatorKind {
        match self {
            LiftKind::Square => IndicatorKind::Inj,
            LiftKind::Horizontal => IndicatorKind::Sur,
        }
    }
}

/// Velocity `J^+ w` through the SVD pseudo-inverse, plus the smallest
/// singular value.
fn horizontal_velocity(jac: &DMatrix<f64>, w: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
    let svd = jac.clone().svd(true, true);
    let sigma_min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(sigma_min > 0.0) {
        return None;
    }
    let u = svd.u.as_ref()?;
    let v_t = svd.v_t.as_ref()?;
    let coeffs = (u.transpose() * w).component_div(&svd.singular_values);
    Some((v_t.transpose() * coeffs, sigma_min))
}

fn square_velocity(jac: &DMatrix<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
    jac.clone().col_piv_qr().solve(w)
}

fn sample_field(
    model: &MapModel,
    kind: LiftKind,
    w: &DVector<f64>,
    q: &DVector<f64>,
) -> std::result::Result<FieldPoint, FieldFailure> {
    let value = model.evaluate(q).map_err(|_| FieldFailure)?;
    let jac = model.jacobian(q).map_err(|_| FieldFailure)?;
    let velocity = match kind {
        LiftKind::Square => square_velocity(&jac, w),
        LiftKind::Horizontal => horizontal_velocity(&jac, w).map(|(v, _)| v),
    }
    .ok_or(FieldFailure)?;
    if velocity.iter().any(|v| !v.is_finite()) {
        return Err(FieldFailure);
    }
    Ok(FieldPoint {
        value,
        jac,
        velocity,
    })
}

/// Lifts `f(x0) + t w`, `t in [0, 1]`, through a square map with `q' = J(q)^{-1} w`.
pub fn lift_line_square(
    model: &MapModel,
    x0: &DVector<f64>,
    w: &DVector<f64>,
    opts: &LiftOptions,
) -> Result<LiftOutcome> {
    if model.n() != model.m() {
        return Err(Error::StrategyMismatch {
            strategy: "Wazewski",
            n: model.n(),
            m: model.m(),
        });
    }
    run_lift(model, x0, w, opts, LiftKind::Square)
}

/// Horizontal lift of `f(x0) + t w` through a submersion (`m <= n`).
pub fn lift_line_horizontal(
    model: &MapModel,
    x0: &DVector<f64>,
    w: &DVector<f64>,
    opts: &LiftOptions,
) -> Result<LiftOutcome> {
    if model.m() > model.n() {
        return Err(Error::StrategyMismatch {
            strategy: "Horizontal",
            n: model.n(),
            m: model.m(),
        });
    }
    run_lift(model, x0, w, opts, LiftKind::Horizontal)
}

fn run_lift(
    model: &MapModel,
    x0: &DVector<f64>,
    w: &DVector<f64>,
    opts: &LiftOptions,
    kind: LiftKind,
) -> Result<LiftOutcome> {
    opts.validate()?;
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    if w.len() != model.m() {
        return Err(Error::DimensionMismatch {
            expected: model.m(),
            got: w.len(),
        });
    }
    let y0 = model.evaluate(x0)?;
    let indicator = kind.indicator();
    let w_norm = w.norm();
    let t_end = opts.t_end;
    let h_min = 1e-14 * t_end;

    let mut field = |q: &DVector<f64>| sample_field(model, kind, w, q);
    let mut traj = LiftTrajectory::new();

    let residual_at = |value: &DVector<f64>, t: f64| (value - (&y0 + w * t)).norm();

    let jac0 = model.jacobian(x0)?;
    let mu0 = indicator.apply(&jac0)?;
    traj.push(0.0, x0, mu0);
    if mu0 < opts.mu_floor {
        return Ok(LiftOutcome {
            trajectory: traj,
            status: LiftStatus::Singular { t: 0.0, mu: mu0 },
            target_residual: 0.0,
        });
    }
    if w_norm == 0.0 {
        traj.push(t_end, x0, mu0);
        return Ok(LiftOutcome {
            trajectory: traj,
            status: LiftStatus::Complete,
            target_residual: 0.0,
        });
    }
    let mut current = match field(x0) {
        Ok(p) => p,
        Err(_) => {
            return Ok(LiftOutcome {
                trajectory: traj,
                status: LiftStatus::StepFailure { t: 0.0 },
                target_residual: 0.0,
            })
        }
    };

    let mut q = x0.clone();
    let mut t = 0.0;
    let mut mu = mu0;
    let mut h = 0.01 * t_end;
    let mut jac_lipschitz: Option<f64> = None;
    let mut accepted = 0usize;
    let mut last_failure_non_finite = false;

    let status = loop {
        if accepted + 1 >= opts.max_steps {
            break LiftStatus::StepFailure { t };
        }
        // slow down where the jacobian degenerates
        if let Some(lip) = jac_lipschitz {
            let speed = current.velocity.norm();
            if lip > 0.0 && speed > 0.0 {
                h = h.min(0.1 * mu / (lip * speed));
            }
        }
        let remaining = t_end - t;
        let h_try = h.min(remaining);
        if h_try < h_min && remaining > h_min {
            let distance = (&q - x0).norm();
            break if last_failure_non_finite {
                LiftStatus::Escaped { t, distance }
            } else {
                LiftStatus::StepFailure { t }
            };
        }

        let trial = match dormand_prince_step(&q, &current, h_try, &mut field) {
            Ok(trial) => trial,
            Err(FieldFailure) => {
                last_failure_non_finite = true;
                h = h_try * 0.25;
                continue;
            }
        };
        last_failure_non_finite = false;

        let state_err = state_error(&trial.err, &q, &trial.y, opts.rel_tol, opts.abs_tol);
        // codomain drift of the lifted point, budgeted per unit time
        let drift = (&current.jac * &trial.err).norm();
        let drift_err = drift / (0.5 * opts.rel_tol * w_norm * h_try + f64::MIN_POSITIVE);
        let err = state_err.max(drift_err);
        if !(err <= 1.0) {
            h = h_try * if err.is_finite() { step_factor(err) } else { 0.2 };
            continue;
        }

        let step_len = (&trial.y - &q).norm();
        if let Some(r) = opts.r_escape {
            // locate the exit from the escape ball to within 1% of its radius
            if (&trial.y - x0).norm() > r && step_len > 0.01 * r {
                h = h_try * 0.5;
                continue;
            }
        }
        let jac_change = (&trial.end.jac - &current.jac).norm();
        if step_len > 0.0 {
            jac_lipschitz = Some(jac_change / step_len);
        }
        traj.length += step_len;
        t = if remaining <= h_try { t_end } else { t + h_try };
        q = trial.y;
        current = trial.end;
        mu = indicator.apply(&current.jac)?;
        accepted += 1;
        h = h_try * step_factor(err);

        let distance = (&q - x0).norm();
        let singular = mu < opts.mu_floor;
        let escaped = opts.r_escape.is_some_and(|r| distance > r);
        let done = t >= t_end;
        if singular || escaped || done || accepted.is_multiple_of(opts.record_stride) {
            traj.push(t, &q, mu);
        }
        if singular {
            break LiftStatus::Singular { t, mu };
        }
        if escaped {
            break LiftStatus::Escaped { t, distance };
        }
        if done {
            break LiftStatus::Complete;
        }
    };

    if traj.times.last() != Some(&t) {
        traj.push(t, &q, mu);
    }
    Ok(LiftOutcome {
        target_residual: residual_at(&current.value, t),
        trajectory: traj,
        status,
    })
}

/// Sum of chord lengths of the recorded points.
pub fn path_length(traj: &LiftTrajectory) -> Result<f64> {
    if traj.points.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    Ok(traj
        .points
        .windows(2)
        .map(|pair| {
            pair[0]
                .iter()
                .zip(&pair[1])
                .map(|(a, b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt()
        })
        .sum())
}

/// Chordal approximation of `int eta(|q - x_ref|) |q'| dt` with `eta = 1 / omega`,
/// each chord weighted at its midpoint.
pub fn weighted_path_length<W>(traj: &LiftTrajectory, omega: W, x_ref: &DVector<f64>) -> Result<f64>
where
    W: Fn(f64) -> f64,
{
    if traj.points.len() < 2 {
        return Err(Error::TooFewPoints);
    }
    let mut total = 0.0;
    for pair in traj.points.windows(2) {
        let a = DVector::from_column_slice(&pair[0]);
        let b = DVector::from_column_slice(&pair[1]);
        let mid = (&a + &b) * 0.5;
        let weight = omega((mid - x_ref).norm());
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidInput("weight must be positive and finite".into()));
        }
        total += (b - a).norm() / weight;
    }
    Ok(total)
}
