//! Gradient flow `x' = -grad F_y(x)` of `F_y(x) = |f(x) - y|^2 / 2`.
//!
//! The flow runs until the gradient vanishes (a root or a critical point),
//! the iterate leaves the escape ball, or `F_y` plateaus while the iterate
//! keeps moving. The last case is reported as a Palais-Smale candidate: a
//! sequence with `F_y -> c` and `grad F_y -> 0` and no convergent subsequence.
//!
//! Plateaus are tested at flow times `1, 2, 4, ...`. A plateau means the
//! decrease of `F_y` over the last doubling is at most `plateau_tol`; the
//! iterate counts as still moving when its displacement over that doubling is
//! at least 0.9 times the displacement over the previous one, which excludes
//! geometric or algebraic convergence to a critical point.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::ode::{dormand_prince_step, state_error, step_factor, FieldFailure, FieldPoint};
use super::{LiftOptions, LiftStatus, LiftTrajectory};
use crate::error::{Error, Result};
use crate::indicators::sur_indicator;
use crate::map_model::MapModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FlowVerdict {
    /// `|grad F_y| <= abs_tol` at a stationary point.
    Converged { value: f64 },
    /// `F_y` plateaus at `c` with the iterate drifting off.
    PSCandidate { c: f64 },
    /// Iterate left the ball of radius `r_escape`.
    Diverged { value: f64 },
    /// Step or time budget ran out first.
    Inconclusive { value: f64 },
}

impl FlowVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            FlowVerdict::Converged { .. } => "Converged",
            FlowVerdict::PSCandidate { .. } => "PSCandidate",
            FlowVerdict::Diverged { .. } => "Diverged",
            FlowVerdict::Inconclusive { .. } => "Inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOutcome {
    pub trajectory: LiftTrajectory,
    pub status: LiftStatus,
    pub verdict: FlowVerdict,
    /// `F_y` at each recorded point.
    pub f_values: Vec<f64>,
    /// `|grad F_y|` at each recorded point.
    pub grad_norms: Vec<f64>,
    /// `|f(x_end) - y|`.
    pub target_residual: f64,
}

impl FlowOutcome {
    pub fn end_point(&self) -> DVector<f64> {
        self.trajectory.last_point()
    }
}

fn sample(
    model: &MapModel,
    y: &DVector<f64>,
    x: &DVector<f64>,
) -> std::result::Result<FieldPoint, FieldFailure> {
    let value = model.evaluate(x).map_err(|_| FieldFailure)?;
    let jac = model.jacobian(x).map_err(|_| FieldFailure)?;
    let velocity = -(jac.transpose() * (&value - y));
    if velocity.iter().any(|v| !v.is_finite()) {
        return Err(FieldFailure);
    }
    Ok(FieldPoint {
        value,
        jac,
        velocity,
    })
}

fn energy(point: &FieldPoint, y: &DVector<f64>) -> f64 {
    0.5 * (&point.value - y).norm_squared()
}

/// Integrates the gradient flow of `F_y` from `x0`.
pub fn gradient_flow(
    model: &MapModel,
    x0: &DVector<f64>,
    y: &DVector<f64>,
    opts: &LiftOptions,
) -> Result<FlowOutcome> {
    opts.validate()?;
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    if y.len() != model.m() {
        return Err(Error::DimensionMismatch {
            expected: model.m(),
            got: y.len(),
        });
    }
    let mut field = |x: &DVector<f64>| sample(model, y, x);
    let mut current = field(x0).map_err(|_| Error::NonFinite {
        context: "gradient flow start".into(),
    })?;

    let mut traj = LiftTrajectory::new();
    let mut f_values = Vec::new();
    let mut grad_norms = Vec::new();
    let mut record = |traj: &mut LiftTrajectory, t: f64, x: &DVector<f64>, p: &FieldPoint| {
        let mu = sur_indicator(&p.jac).unwrap_or(f64::NAN);
        traj.push(t, x, mu);
        f_values.push(energy(p, y));
        grad_norms.push(p.velocity.norm());
    };

    let mut x = x0.clone();
    let mut t = 0.0;
    let mut f_now = energy(&current, y);
    record(&mut traj, t, &x, &current);

    let mut h: f64 = 1e-2;
    let mut accepted = 0usize;
    let mut next_checkpoint = 1.0;
    let mut last_checkpoint: Option<(DVector<f64>, f64)> = None;
    let mut last_displacement: Option<f64> = None;
    let mut recorded_last = true;

    let (status, verdict) = loop {
        if current.velocity.norm() <= opts.abs_tol {
            break (LiftStatus::Complete, FlowVerdict::Converged { value: f_now });
        }
        if accepted + 1 >= opts.max_steps || t >= opts.flow_t_max {
            break (
                LiftStatus::StepFailure { t },
                FlowVerdict::Inconclusive { value: f_now },
            );
        }
        let h_try = h.min(next_checkpoint - t);
        if h_try < 1e-14 * t.max(1.0) {
            // the discrete flow cannot decrease F any further
            break (
                LiftStatus::StepFailure { t },
                FlowVerdict::Inconclusive { value: f_now },
            );
        }
        let trial = match dormand_prince_step(&x, &current, h_try, &mut field) {
            Ok(trial) => trial,
            Err(FieldFailure) => {
                h = h_try * 0.25;
                continue;
            }
        };
        let err = state_error(&trial.err, &x, &trial.y, opts.rel_tol, opts.abs_tol);
        if !(err <= 1.0) {
            h = h_try * if err.is_finite() { step_factor(err) } else { 0.2 };
            continue;
        }
        let f_new = energy(&trial.end, y);
        if f_new > f_now {
            h = h_try * 0.5;
            continue;
        }

        let reached_checkpoint = h_try >= next_checkpoint - t;
        traj.length += (&trial.y - &x).norm();
        t = if reached_checkpoint { next_checkpoint } else { t + h_try };
        x = trial.y;
        current = trial.end;
        f_now = f_new;
        accepted += 1;
        h = h_try * step_factor(err);

        recorded_last = accepted.is_multiple_of(opts.record_stride);
        if recorded_last {
            record(&mut traj, t, &x, &current);
        }

        if opts.r_escape.is_some_and(|r| (&x - x0).norm() > r) {
            let distance = (&x - x0).norm();
            break (
                LiftStatus::Escaped { t, distance },
                FlowVerdict::Diverged { value: f_now },
            );
        }

        if reached_checkpoint {
            if let Some((x_prev, f_prev)) = &last_checkpoint {
                let displacement = (&x - x_prev).norm();
                let plateau = f_prev - f_now <= opts.plateau_tol;
                let moving = last_displacement.is_some_and(|d| displacement >= 0.9 * d)
                    && displacement > 1e-8 * (1.0 + x.norm());
                if plateau && moving {
                    break (LiftStatus::Complete, FlowVerdict::PSCandidate { c: f_now });
                }
                last_displacement = Some(displacement);
            }
            last_checkpoint = Some((x.clone(), f_now));
            next_checkpoint *= 2.0;
        }
    };

    if !recorded_last || traj.times.last() != Some(&t) {
        record(&mut traj, t, &x, &current);
    }
    Ok(FlowOutcome {
        target_residual: (&current.value - y).norm(),
        trajectory: traj,
        status,
        verdict,
        f_values,
        grad_norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::registry_get;
    use nalgebra::dvector;

    #[test]
    fn monotone_converges_to_root() {
        let f = registry_get("monotone1d").unwrap();
        let out = gradient_flow(&f, &dvector![3.0], &dvector![0.0], &LiftOptions::default()).unwrap();
        assert!(matches!(out.verdict, FlowVerdict::Converged { .. }), "{:?}", out.verdict);
        let x = out.end_point()[0];
        assert!(x.abs() <= 1e-6);
        assert!(out.target_residual <= 1e-8);
    }

    #[test]
    fn exp_flow_slides_to_minus_infinity() {
        let f = registry_get("exp1d").unwrap();
        let out = gradient_flow(&f, &dvector![0.0], &dvector![0.0], &LiftOptions::default()).unwrap();
        match out.verdict {
            FlowVerdict::PSCandidate { c } => assert!(c < 1e-3),
            FlowVerdict::Diverged { value } => assert!(value < 1e-3),
            other => panic!("unexpected verdict {other:?}"),
        }
        assert!(out.end_point()[0] < -2.0);
    }

    #[test]
    fn arctan_flow_plateaus_above_zero() {
        let f = registry_get("arctan1d").unwrap();
        let out = gradient_flow(&f, &dvector![0.0], &dvector![2.0], &LiftOptions::default()).unwrap();
        let expected = 0.5 * (2.0 - std::f64::consts::FRAC_PI_2).powi(2);
        match out.verdict {
            FlowVerdict::PSCandidate { c } => assert!((c - expected).abs() < 1e-3, "c = {c}"),
            other => panic!("unexpected verdict {other:?}"),
        }
    }

    #[test]
    fn energy_never_increases() {
        let f = registry_get("complex_exp").unwrap();
        let out = gradient_flow(&f, &dvector![1.0, 2.0], &dvector![-1.0, 0.5], &LiftOptions::default())
            .unwrap();
        assert!(out.f_values.windows(2).all(|w| w[1] <= w[0]));
        assert!(matches!(out.verdict, FlowVerdict::Converged { .. }));
        assert!(out.target_residual < 1e-8);
    }
}
