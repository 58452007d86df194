//! Smooth maps between Euclidean spaces and their Jacobians.
//!
//! A [`MapModel`] bundles the evaluation closure for `f: R^n -> R^m`, an
//! optional analytic Jacobian, and an optional analytic lower bound for the
//! surjectivity indicator over closed balls. Maps defined only on an open
//! subset signal points outside their domain by returning non-finite values.

mod registry;

pub use registry::{
    linear, list_maps, registry_entry, registry_get, AnalyticFacts, RegistryEntry, MAP_NAMES,
};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{non_finite, Error, Result};

type EvalFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type MuBoundFn = dyn Fn(&DVector<f64>, f64) -> f64 + Send + Sync;

/// A smooth map `f: R^n -> R^m`.
#[derive(Clone)]
pub struct MapModel {
    name: String,
    n: usize,
    m: usize,
    eval: Arc<EvalFn>,
    jac: Option<Arc<JacFn>>,
    mu_bound: Option<Arc<MuBoundFn>>,
}

impl fmt::Debug for MapModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("analytic_jacobian", &self.jac.is_some())
            .field("mu_bound", &self.mu_bound.is_some())
            .finish()
    }
}

impl MapModel {
    pub fn new<F>(name: impl Into<String>, n: usize, m: usize, eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        assert!(n > 0 && m > 0, "map dimensions must be positive");
        Self {
            name: name.into(),
            n,
            m,
            eval: Arc::new(eval),
            jac: None,
            mu_bound: None,
        }
    }

    /// Attaches an analytic Jacobian returning an `m x n` matrix.
    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jac = Some(Arc::new(jac));
        self
    }

    /// Attaches a certified lower bound `(x0, rho) -> inf { mu(x) : |x - x0| <= rho }`,
    /// where `mu` is the surjectivity indicator of the Jacobian.
    pub fn with_mu_bound<B>(mut self, bound: B) -> Self
    where
        B: Fn(&DVector<f64>, f64) -> f64 + Send + Sync + 'static,
    {
        self.mu_bound = Some(Arc::new(bound));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    pub fn has_mu_bound(&self) -> bool {
        self.mu_bound.is_some()
    }

    /// Evaluates the certified ball bound, if the map carries one.
    pub fn mu_bound(&self, x0: &DVector<f64>, rho: f64) -> Option<f64> {
        self.mu_bound.as_ref().map(|b| b(x0, rho))
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Returns `f(x)`.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let y = (self.eval)(x);
        if y.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(&format!("{} evaluation", self.name)));
        }
        Ok(y)
    }

    /// Returns the `m x n` Jacobian at `x`: the analytic one when present,
    /// central finite differences otherwise.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let jac = match &self.jac {
            Some(j) => j(x),
            None => return self.fd_jacobian(x),
        };
        if jac.nrows() != self.m || jac.ncols() != self.n {
            return Err(Error::InvalidInput(format!(
                "analytic jacobian of {} has shape {}x{}, expected {}x{}",
                self.name,
                jac.nrows(),
                jac.ncols(),
                self.m,
                self.n
            )));
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(&format!("{} jacobian", self.name)));
        }
        Ok(jac)
    }

    /// Central-difference Jacobian with step `max(|x_i|, 1) * cbrt(eps)`.
    pub fn fd_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let step_scale = f64::EPSILON.cbrt();
        let mut jac = DMatrix::zeros(self.m, self.n);
        let mut probe = x.clone();
        for i in 0..self.n {
            let xi = x[i];
            let h = xi.abs().max(1.0) * step_scale;
            probe[i] = xi + h;
            let plus = self.evaluate(&probe)?;
            let h_plus = probe[i] - xi;
            probe[i] = xi - h;
            let minus = self.evaluate(&probe)?;
            let h_minus = xi - probe[i];
            probe[i] = xi;
            let col = (plus - minus) / (h_plus + h_minus);
            jac.set_column(i, &col);
        }
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(non_finite(&format!("{} finite-difference jacobian", self.name)));
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn identity_evaluates_to_input() {
        let f = registry_get("identity_2").unwrap();
        let y = f.evaluate(&dvector![1.0, 2.0]).unwrap();
        assert_eq!(y, dvector![1.0, 2.0]);
        assert_eq!(f.jacobian(&dvector![3.0, -4.0]).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn scalar_examples() {
        let arctan = registry_get("arctan1d").unwrap();
        assert_eq!(arctan.evaluate(&dvector![0.0]).unwrap()[0], 0.0);
        assert!((arctan.jacobian(&dvector![1.0]).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);

        let mono = registry_get("monotone1d").unwrap();
        let y = mono.evaluate(&dvector![std::f64::consts::PI]).unwrap()[0];
        assert!((y - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn parabola_jacobian_by_hand() {
        let f = registry_get("parabola_sub").unwrap();
        let j = f.jacobian(&dvector![1.0, 1.0]).unwrap();
        assert_eq!(j.shape(), (1, 2));
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(0, 1)], -2.0);
        let fd = f.fd_jacobian(&dvector![1.0, 1.0]).unwrap();
        assert!((fd - j).abs().max() < 1e-8);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = registry_get("identity_2").unwrap();
        assert_eq!(
            f.evaluate(&dvector![1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
        assert!(matches!(
            f.jacobian(&dvector![1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_output_is_rejected() {
        let f = MapModel::new("log1d", 1, 1, |x: &DVector<f64>| x.map(f64::ln));
        assert!(matches!(f.evaluate(&dvector![-1.0]), Err(Error::NonFinite { .. })));
        assert!(matches!(f.jacobian(&dvector![-1.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn fd_fallback_without_analytic_jacobian() {
        let f = MapModel::new("cube", 1, 1, |x: &DVector<f64>| x.map(|v| v * v * v));
        let j = f.jacobian(&dvector![2.0]).unwrap();
        assert!((j[(0, 0)] - 12.0).abs() < 1e-8);
    }

    #[test]
    fn evaluation_is_pure_under_interleaving() {
        let f = registry_get("complex_exp").unwrap();
        let x = dvector![0.3, -1.7];
        let y1 = f.evaluate(&x).unwrap();
        let j1 = f.jacobian(&x).unwrap();
        let _ = f.fd_jacobian(&dvector![2.0, 2.0]).unwrap();
        let y2 = f.evaluate(&x).unwrap();
        let j2 = f.jacobian(&x).unwrap();
        assert_eq!(y1, y2);
        assert_eq!(j1, j2);
    }
}
