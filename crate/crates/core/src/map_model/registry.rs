//! Built-in benchmark maps with closed-form facts used as test oracles.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{dvector, DMatrix, DVector};

use super::MapModel;
use crate::error::{Error, Result};
use crate::indicators::sur_indicator;

/// Names accepted by [`registry_get`]. `identity_<n>` stands for any
/// dimension `1..=64`; `linear` needs a matrix and is built with [`linear`].
pub const MAP_NAMES: &[&str] = &[
    "identity_<n>",
    "linear",
    "arctan1d",
    "monotone1d",
    "exp1d",
    "complex_exp",
    "projection2to1",
    "parabola_sub",
    "asinh1d",
];

type MuFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;

/// Closed-form knowledge about a registered map.
#[derive(Clone, Default)]
pub struct AnalyticFacts {
    /// Exact surjectivity indicator `mu(x)`.
    pub mu: Option<Arc<MuFn>>,
    /// Exact value of `inf_x mu(x)` over the whole domain.
    pub global_mu_inf: Option<f64>,
    /// A constant `c > 0` with `mu(x) >= c / (1 + |x0| + |x - x0|)` for every `x0, x`.
    pub radial_tail: Option<f64>,
    /// `|f(x)| -> infinity` as `|x| -> infinity`.
    pub coercive: Option<bool>,
    /// Coercive and `mu` bounded below on every ball.
    pub plastock: bool,
    /// Points `x_k` with `mu(x_k) -> 0` while `f(x_k)` stays bounded.
    pub katriel_witness: Option<Vec<DVector<f64>>>,
    /// Image `f(R)` of a scalar map, as an open interval.
    pub image_interval: Option<(f64, f64)>,
    pub fibres: &'static str,
}

impl fmt::Debug for AnalyticFacts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticFacts")
            .field("mu", &self.mu.is_some())
            .field("global_mu_inf", &self.global_mu_inf)
            .field("radial_tail", &self.radial_tail)
            .field("coercive", &self.coercive)
            .field("plastock", &self.plastock)
            .field(
                "katriel_witness",
                &self.katriel_witness.as_ref().map(|w| w.len()),
            )
            .field("image_interval", &self.image_interval)
            .field("fibres", &self.fibres)
            .finish()
    }
}

impl AnalyticFacts {
    pub fn mu_at(&self, x: &DVector<f64>) -> Option<f64> {
        self.mu.as_ref().map(|mu| mu(x))
    }
}

#[derive(Clone, Debug)]
pub struct RegistryEntry {
    pub model: MapModel,
    pub analytic_facts: Option<AnalyticFacts>,
}

/// Returns a fresh copy of the named map.
pub fn registry_get(name: &str) -> Result<MapModel> {
    registry_entry(name).map(|e| e.model)
}

pub fn list_maps() -> Vec<String> {
    MAP_NAMES.iter().map(|s| s.to_string()).collect()
}

pub fn registry_entry(name: &str) -> Result<RegistryEntry> {
    if let Some(dim) = name.strip_prefix("identity_") {
        let n: usize = dim
            .parse()
            .map_err(|_| Error::UnknownMap(name.to_string()))?;
        if n == 0 || n > 64 {
            return Err(Error::UnknownMap(name.to_string()));
        }
        return Ok(identity(n));
    }
    match name {
        "arctan1d" => Ok(arctan1d()),
        "monotone1d" => Ok(monotone1d()),
        "exp1d" => Ok(exp1d()),
        "complex_exp" => Ok(complex_exp()),
        "projection2to1" => Ok(projection2to1()),
        "parabola_sub" => Ok(parabola_sub()),
        "asinh1d" => Ok(asinh1d()),
        "linear" => Err(Error::InvalidInput(
            "map `linear` needs a matrix; build it with `linear(A)`".into(),
        )),
        _ => Err(Error::UnknownMap(name.to_string())),
    }
}

fn scalar<F, D>(name: &str, f: F, df: D) -> MapModel
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
    D: Fn(f64) -> f64 + Send + Sync + 'static,
{
    MapModel::new(name, 1, 1, move |x: &DVector<f64>| dvector![f(x[0])])
        .with_jacobian(move |x: &DVector<f64>| DMatrix::from_element(1, 1, df(x[0])))
}

fn identity(n: usize) -> RegistryEntry {
    let model = MapModel::new(format!("identity_{n}"), n, n, |x: &DVector<f64>| x.clone())
        .with_jacobian(move |_: &DVector<f64>| DMatrix::identity(n, n))
        .with_mu_bound(|_: &DVector<f64>, _| 1.0);
    RegistryEntry {
        model,
        analytic_facts: Some(AnalyticFacts {
            mu: Some(Arc::new(|_: &DVector<f64>| 1.0)),
            global_mu_inf: Some(1.0),
            radial_tail: Some(1.0),
            coercive: Some(true),
            plastock: true,
            fibres: "single point {y}",
            ..Default::default()
        }),
    }
}

/// The linear map `x -> A x`.
pub fn linear(a: DMatrix<f64>) -> Result<RegistryEntry> {
    if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "linear map needs a non-empty finite matrix".into(),
        ));
    }
    let (m, n) = a.shape();
    let mu = sur_indicator(&a)?;
    let a_eval = a.clone();
    let model = MapModel::new("linear", n, m, move |x: &DVector<f64>| &a_eval * x)
        .with_jacobian(move |_: &DVector<f64>| a.clone())
        .with_mu_bound(move |_: &DVector<f64>, _| mu);
    let square_invertible = m == n && mu > 0.0;
    Ok(RegistryEntry {
        model,
        analytic_facts: Some(AnalyticFacts {
            mu: Some(Arc::new(move |_: &DVector<f64>| mu)),
            global_mu_inf: Some(mu),
            radial_tail: (mu > 0.0).then_some(mu),
            coercive: Some(square_invertible),
            plastock: square_invertible,
            fibres: "affine subspace x* + Ker A",
            ..Default::default()
        }),
    })
}

fn arctan1d() -> RegistryEntry {
    let model = scalar("arctan1d", f64::atan, |x| 1.0 / (1.0 + x * x))
        .with_mu_bound(|x0: &DVector<f64>, rho| {
            let far = x0[0].abs() + rho;
            1.0 / (1.0 + far * far)
        });
    RegistryEntry {
        model,
        analytic_facts: Some(AnalyticFacts {
            mu: Some(Arc::new(|x: &DVector<f64>| 1.0 / (1.0 + x[0] * x[0]))),
            global_mu_inf: Some(0.0),
            coercive: Some(false),
            katriel_witness: Some((1..=40).map(|k| dvector![k as f64 * 10.0]).collect()),
            image_interval: Some((-PI / 2.0, PI / 2.0)),
            fibres: "single point tan(y) for |y| < pi/2, empty otherwise",
            ..Default::default()
        }),
    }
}

fn monotone_derivative(x: f64) -> f64 {
    1.0 + 0.5 * x.cos()
}

fn monotone1d() -> RegistryEntry {
    let model = scalar("monotone1d", |x| x + 0.5 * x.sin(), monotone_derivative).with_mu_bound(
        |x0: &DVector<f64>, rho| {
            let (lo, hi) = (x0[0] - rho, x0[0] + rho);
            // cos attains -1 at pi + 2 pi k
            let k = ((lo - PI) / (2.0 * PI)).ceil();
            if PI + 2.0 * PI * k <= hi {
                0.5
            } else {
                monotone_derivative(lo).min(monotone_derivative(hi))
            }
        },
    );
    RegistryEntry {
        model,
        analytic_facts: Some(AnalyticFacts {
            mu: Some(Arc::new(|x: &DVector<f64>| monotone_derivative(x[0]))),
            global_mu_inf: Some(0.5),
            radial_tail: Some(0.5),
            coercive: Some(true),
            plastock: true,
            image_interval: Some((f64::NEG_INFINITY, f64::INFINITY)),
            fibres: "single point",
            ..Default::default()
        }),
    }
}

fn exp1d() -> RegistryEntry {
    let model = scalar("exp1d", f64::exp, f64::exp)
        .with_mu_bound(|x0: &DVector<f64>, rho| (x0[0] - rho).exp());
    RegistryEntry {
        model,
        analytic_facts: Some(AnalyticFacts {
            mu: Some(Arc::new(|x: &DVector<f64>| x[0].exp())),
            global_mu_inf: Some(0.0),
            coercive: Some(false),
            katriel_witness: Some((1..=40).map(|k| dvector![-(k as f64)]).collect()),
            image_interval: Some((0.0, f64::INFINITY)),
            fibres: "single point ln(y) for y > 0, empty otherwise",
            ..Default::default()
        }),
    }
}

fn complex_exp() -> RegistryEntry {
    let model = MapModel::new("complex_exp", 2, 2, |v: &DVector<f64>| {
        let r = v[0].exp();
        dvector![r * v[1].cos(), r * v[1].sin()]
    })
    .with_jacobian(|v: &DVector<f64>| {
        let r = v[0].exp();
        let (s, c) = v[1].sin_cos();
        DMatrix::from_row_slice(2, 2, &[r * c, -r * s, r * s, r * c])
    })
    .with_mu_bound(|x0: &DVector<f64>, rho| (x0[0] - rho).exp());
    RegistryEntry {
        model,
        analytic_facts: Some(AnalyticFacts {
            mu: Some(Arc::new(|x: &DVector<f64>| x[0].exp())),
            global_mu_inf: Some(0.0),
            coercive: Some(false),
            katriel_witness: Some((1..=40).map(|k| dvector![-(k as f64), 0.0]).collect()),
            fibres: "(ln|y|, arg y + 2 pi k), k in Z, for y != 0",
            ..Default::default()
        }),
    }
}

fn projection2to1() -> RegistryEntry {
    let model = MapModel::new("projection2to1", 2, 1, |v: &DVector<f64>| dvector![v[0]])
        .with_jacobian(|_: &DVector<f64>| DMatrix::from_row_slice(1, 2, &[1.0, 0.0]))
        .with_mu_bound(|_: &DVector<f64>, _| 1.0);
    RegistryEntry {
        model,
        analytic_facts: Some(AnalyticFacts {
            mu: Some(Arc::new(|_: &DVector<f64>| 1.0)),
            global_mu_inf: Some(1.0),
            radial_tail: Some(1.0),
            coercive: Some(false),
            fibres: "vertical line {y} x R",
            ..Default::default()
        }),
    }
}

fn parabola_sub() -> RegistryEntry {
    let model = MapModel::new("parabola_sub", 2, 1, |v: &DVector<f64>| {
        dvector![v[0] - v[1] * v[1]]
    })
    .with_jacobian(|v: &DVector<f64>| DMatrix::from_row_slice(1, 2, &[1.0, -2.0 * v[1]]))
    .with_mu_bound(|x0: &DVector<f64>, rho| {
        let near = (x0[1].abs() - rho).max(0.0);
        (1.0 + 4.0 * near * near).sqrt()
    });
    RegistryEntry {
        model,
        analytic_facts: Some(AnalyticFacts {
            mu: Some(Arc::new(|v: &DVector<f64>| {
                (1.0 + 4.0 * v[1] * v[1]).sqrt()
            })),
            global_mu_inf: Some(1.0),
            radial_tail: Some(1.0),
            coercive: Some(false),
            fibres: "parabola {x = y^2 + c}",
            ..Default::default()
        }),
    }
}

fn asinh1d() -> RegistryEntry {
    let model = scalar("asinh1d", f64::asinh, |x| 1.0 / (1.0 + x * x).sqrt()).with_mu_bound(
        |x0: &DVector<f64>, rho| {
            let far = x0[0].abs() + rho;
            1.0 / (1.0 + far * far).sqrt()
        },
    );
    RegistryEntry {
        model,
        analytic_facts: Some(AnalyticFacts {
            mu: Some(Arc::new(|x: &DVector<f64>| 1.0 / (1.0 + x[0] * x[0]).sqrt())),
            global_mu_inf: Some(0.0),
            radial_tail: Some(1.0),
            coercive: Some(true),
            plastock: true,
            image_interval: Some((f64::NEG_INFINITY, f64::INFINITY)),
            fibres: "single point sinh(y)",
            ..Default::default()
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::{inj_indicator, sur_indicator};

    #[test]
    fn registered_dimensions() {
        let id = registry_get("identity_2").unwrap();
        assert_eq!((id.n(), id.m()), (2, 2));
        let ce = registry_get("complex_exp").unwrap();
        assert_eq!((ce.n(), ce.m()), (2, 2));
        let ps = registry_get("parabola_sub").unwrap();
        assert_eq!((ps.n(), ps.m()), (2, 1));
    }

    #[test]
    fn unknown_names_fail() {
        assert_eq!(
            registry_get("nope").unwrap_err(),
            Error::UnknownMap("nope".into())
        );
        assert!(matches!(registry_get("identity_0"), Err(Error::UnknownMap(_))));
        assert!(matches!(registry_get("identity_x"), Err(Error::UnknownMap(_))));
        assert!(matches!(registry_get("linear"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn complex_exp_is_local_diffeomorphism() {
        let f = registry_get("complex_exp").unwrap();
        for &(x, y) in &[(0.0, 0.0), (-3.0, 1.0), (2.0, -5.0)] {
            let j = f.jacobian(&dvector![x, y]).unwrap();
            let det = j.determinant();
            assert!((det - (2.0 * x).exp()).abs() < 1e-9 * (2.0 * x).exp());
        }
    }

    #[test]
    fn parabola_sub_full_rank() {
        let f = registry_get("parabola_sub").unwrap();
        for y in [-3.0, 0.0, 0.5, 10.0] {
            let j = f.jacobian(&dvector![0.0, y]).unwrap();
            assert!(sur_indicator(&j).unwrap() >= 1.0);
            assert_eq!(inj_indicator(&j).unwrap(), 0.0);
        }
    }

    #[test]
    fn linear_map_facts() {
        let e = linear(DMatrix::from_diagonal(&dvector![2.0, 0.5])).unwrap();
        let y = e.model.evaluate(&dvector![1.0, 2.0]).unwrap();
        assert_eq!(y, dvector![2.0, 1.0]);
        assert_eq!(e.model.mu_bound(&dvector![0.0, 0.0], 3.0), Some(0.5));
        assert!(e.analytic_facts.unwrap().plastock);
    }

    #[test]
    fn monotone_bound_covers_interior_minimum() {
        let f = registry_get("monotone1d").unwrap();
        let x0 = dvector![0.0];
        // no multiple of pi inside [-1, 1]
        assert!((f.mu_bound(&x0, 1.0).unwrap() - monotone_derivative(1.0)).abs() < 1e-15);
        assert_eq!(f.mu_bound(&x0, 3.5), Some(0.5));
        assert_eq!(f.mu_bound(&dvector![-10.0], 0.7), Some(0.5));
    }
}
