//! Dormand-Prince 5(4) step for autonomous vector fields.

use nalgebra::{DMatrix, DVector};

/// A vector field sample: map value, Jacobian and velocity at one point.
#[derive(Clone, Debug)]
pub(crate) struct FieldPoint {
    pub value: DVector<f64>,
    pub jac: DMatrix<f64>,
    pub velocity: DVector<f64>,
}

/// Raised when the field cannot be evaluated at a stage point.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FieldFailure;

pub(crate) struct StepTrial {
    pub y: DVector<f64>,
    /// Difference between the 5th and embedded 4th order solutions.
    pub err: DVector<f64>,
    /// Field at the new point (first stage of the next step).
    pub end: FieldPoint,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One trial step of size `h` from `y` whose field sample is `start`.
pub(crate) fn dormand_prince_step<F>(
    y: &DVector<f64>,
    start: &FieldPoint,
    h: f64,
    field: &mut F,
) -> Result<StepTrial, FieldFailure>
where
    F: FnMut(&DVector<f64>) -> Result<FieldPoint, FieldFailure>,
{
    let k1 = &start.velocity;
    let k2 = field(&(y + k1 * (h * A21)))?.velocity;
    let k3 = field(&(y + (k1 * A31 + &k2 * A32) * h))?.velocity;
    let k4 = field(&(y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h))?.velocity;
    let k5 = field(&(y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h))?.velocity;
    let k6 =
        field(&(y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h))?.velocity;
    let y_new = y + (k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h;
    if y_new.iter().any(|v| !v.is_finite()) {
        return Err(FieldFailure);
    }
    let end = field(&y_new)?;
    let err = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &end.velocity * E7) * h;
    Ok(StepTrial {
        y: y_new,
        err,
        end,
    })
}

/// Standard step-size update factor for a (normalised) error estimate.
pub(crate) fn step_factor(err: f64) -> f64 {
    if err <= 0.0 {
        return 5.0;
    }
    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
}

/// Mixed absolute/relative max-norm of the local error.
pub(crate) fn state_error(
    err: &DVector<f64>,
    y_old: &DVector<f64>,
    y_new: &DVector<f64>,
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    err.iter()
        .zip(y_old.iter().zip(y_new.iter()))
        .map(|(e, (a, b))| e.abs() / (abs_tol + rel_tol * a.abs().max(b.abs())))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn decay(y: &DVector<f64>) -> Result<FieldPoint, FieldFailure> {
        Ok(FieldPoint {
            value: y.clone(),
            jac: DMatrix::identity(1, 1),
            velocity: -y,
        })
    }

    #[test]
    fn single_step_is_fifth_order() {
        // y' = -y, exact e^{-h}
        let mut field = decay;
        let y = dvector![1.0];
        let start = decay(&y).unwrap();
        let mut errs = Vec::new();
        for h in [0.1, 0.05] {
            let trial = dormand_prince_step(&y, &start, h, &mut field).unwrap();
            errs.push((trial.y[0] - (-h).exp()).abs());
        }
        // local error O(h^6)
        let ratio = errs[0] / errs[1];
        assert!(ratio > 40.0 && ratio < 90.0, "ratio {ratio}");
    }

    #[test]
    fn error_estimate_vanishes_for_constant_field() {
        let mut field = |y: &DVector<f64>| {
            Ok(FieldPoint {
                value: y.clone(),
                jac: DMatrix::identity(2, 2),
                velocity: dvector![1.0, -2.0],
            })
        };
        let y = dvector![0.0, 0.0];
        let start = field(&y).unwrap();
        let trial = dormand_prince_step(&y, &start, 0.5, &mut field).unwrap();
        assert!((trial.y - dvector![0.5, -1.0]).norm() < 1e-15);
        assert!(trial.err.norm() < 1e-15);
    }
}
