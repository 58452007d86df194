//! Injectivity and surjectivity indicators, Fredholm data, and the radial
//! lower-bound profile `eta(rho)` with its integral `rho(r)`.
//!
//! With Euclidean norms both indicators are singular values: `Inj J` is the
//! smallest singular value over the domain sphere (zero when `m < n`) and
//! `Sur J` the smallest singular value of `J^T` (zero when `m > n`).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{non_finite, Error, Result};
use crate::map_model::MapModel;
use crate::sampling::unit_ball_points;

/// Default rank tolerance, relative to the largest singular value.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

fn singular_values(j: &DMatrix<f64>) -> Result<DVector<f64>> {
    if j.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("indicator input matrix"));
    }
    if j.is_empty() {
        return Ok(DVector::zeros(0));
    }
    Ok(j.clone().svd(false, false).singular_values)
}

fn min_of(values: &DVector<f64>) -> f64 {
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `inf_{|v|=1} |J v|`.
pub fn inj_indicator(j: &DMatrix<f64>) -> Result<f64> {
    let sv = singular_values(j)?;
    if j.nrows() < j.ncols() {
        return Ok(0.0);
    }
    Ok(min_of(&sv))
}

/// `inf_{|v|=1} |J^T v|`.
pub fn sur_indicator(j: &DMatrix<f64>) -> Result<f64> {
    let sv = singular_values(j)?;
    if j.nrows() > j.ncols() {
        return Ok(0.0);
    }
    Ok(min_of(&sv))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndicatorKind {
    Inj,
    Sur,
}

impl IndicatorKind {
    pub fn apply(self, j: &DMatrix<f64>) -> Result<f64> {
        match self {
            IndicatorKind::Inj => inj_indicator(j),
            IndicatorKind::Sur => sur_indicator(j),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FredholmData {
    pub dim_ker: usize,
    pub dim_coker: usize,
    /// Always `n - m`.
    pub index: i64,
    pub rank_tolerance: f64,
}

/// Kernel and cokernel dimensions from the numerical rank
/// `#{sigma_i > tol * sigma_max}`.
pub fn fredholm_data(j: &DMatrix<f64>, tol: f64) -> Result<FredholmData> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("rank tolerance must be positive".into()));
    }
    let sv = singular_values(j)?;
    let (m, n) = j.shape();
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let rank = if sigma_max > 0.0 {
        sv.iter().filter(|&&s| s > tol * sigma_max).count()
    } else {
        0
    };
    Ok(FredholmData {
        dim_ker: n - rank,
        dim_coker: m - rank,
        index: n as i64 - m as i64,
        rank_tolerance: tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ProfileMode {
    /// Evaluate the map's analytic bound on the grid.
    Certified,
    /// Sample `samples` points of each closed ball.
    Sampled { samples: usize, seed: u64 },
}

/// Nonincreasing radial profile `eta(rho_k)` of the indicator infimum over
/// balls `B_{rho_k}(x0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuProfile {
    pub base_point: Vec<f64>,
    pub radii: Vec<f64>,
    pub eta_values: Vec<f64>,
    pub certified: bool,
    pub indicator_kind: IndicatorKind,
    pub seed: Option<u64>,
    pub sample_count: usize,
}

impl MuProfile {
    pub fn r_max(&self) -> f64 {
        *self.radii.last().expect("profile grid is never empty")
    }

    pub fn base_point_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.base_point)
    }

    /// Smallest profile value, i.e. `eta(r_max)`.
    pub fn inf_eta(&self) -> f64 {
        *self.eta_values.last().expect("profile grid is never empty")
    }

    /// Conservative `eta` at an arbitrary radius: the value at the first
    /// grid radius not below `rho`.
    pub fn eta_at(&self, rho: f64) -> f64 {
        let idx = self.radii.partition_point(|&r| r < rho);
        self.eta_values[idx.min(self.eta_values.len() - 1)]
    }

    /// `(r_k, rho(r_k))` on every grid radius.
    pub fn rho_curve(&self) -> Vec<(f64, f64)> {
        let mut acc = 0.0;
        let mut out = vec![(0.0, 0.0)];
        for k in 1..self.radii.len() {
            acc += self.eta_values[k] * (self.radii[k] - self.radii[k - 1]);
            out.push((self.radii[k], acc));
        }
        out
    }
}

/// Builds `eta(rho)` on the uniform grid of `grid_size` intervals over `[0, r_max]`.
pub fn mu_profile(
    model: &MapModel,
    x0: &DVector<f64>,
    r_max: f64,
    grid_size: usize,
    mode: ProfileMode,
) -> Result<MuProfile> {
    let kind = if model.m() <= model.n() {
        IndicatorKind::Sur
    } else {
        IndicatorKind::Inj
    };
    mu_profile_with_kind(model, x0, r_max, grid_size, mode, kind)
}

pub fn mu_profile_with_kind(
    model: &MapModel,
    x0: &DVector<f64>,
    r_max: f64,
    grid_size: usize,
    mode: ProfileMode,
    kind: IndicatorKind,
) -> Result<MuProfile> {
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::InvalidInput("r_max must be positive and finite".into()));
    }
    if grid_size == 0 {
        return Err(Error::InvalidInput("grid_size must be at least 1".into()));
    }
    let radii: Vec<f64> = (0..=grid_size)
        .map(|k| r_max * k as f64 / grid_size as f64)
        .collect();

    let (raw, certified, seed, sample_count) = match mode {
        ProfileMode::Certified => {
            if !model.has_mu_bound() {
                return Err(Error::MissingBound);
            }
            let values: Vec<f64> = radii
                .iter()
                .map(|&rho| model.mu_bound(x0, rho).unwrap_or(0.0))
                .collect();
            (values, true, None, 0)
        }
        ProfileMode::Sampled { samples, seed } => {
            let unit = unit_ball_points(samples, model.n(), seed);
            let mut values = Vec::with_capacity(radii.len());
            for &rho in &radii {
                let mut lowest = f64::INFINITY;
                for u in &unit {
                    let x = x0 + u * rho;
                    let mu = kind.apply(&model.jacobian(&x)?)?;
                    lowest = lowest.min(mu);
                    if rho == 0.0 {
                        break;
                    }
                }
                values.push(lowest);
            }
            (values, false, Some(seed), unit.len())
        }
    };

    if raw.iter().any(|v| !v.is_finite()) {
        return Err(non_finite("mu profile"));
    }
    let mut eta_values = Vec::with_capacity(raw.len());
    let mut running = f64::INFINITY;
    for v in raw {
        running = running.min(v.max(0.0));
        eta_values.push(running);
    }

    Ok(MuProfile {
        base_point: x0.iter().copied().collect(),
        radii,
        eta_values,
        certified,
        indicator_kind: kind,
        seed,
        sample_count,
    })
}

/// Right-endpoint quadrature of `eta` over `[0, r]`. Because `eta` is
/// nonincreasing this never exceeds the exact integral.
pub fn rho_of_r(profile: &MuProfile, r: f64) -> Result<f64> {
    let r_max = profile.r_max();
    if !(r > 0.0) || r > r_max * (1.0 + 1e-12) {
        return Err(Error::OutOfRange { r, r_max });
    }
    let r = r.min(r_max);
    let mut acc = 0.0;
    for k in 1..profile.radii.len() {
        let (lo, hi) = (profile.radii[k - 1], profile.radii[k]);
        if lo >= r {
            break;
        }
        acc += profile.eta_values[k] * (hi.min(r) - lo);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::{linear, registry_get};
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn indicator_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((inj_indicator(&id).unwrap() - 1.0).abs() < 1e-15);
        let d = dmatrix![2.0, 0.0; 0.0, 0.5];
        assert!((inj_indicator(&d).unwrap() - 0.5).abs() < 1e-15);
        assert!((sur_indicator(&d).unwrap() - 0.5).abs() < 1e-15);

        let row = dmatrix![1.0, -2.0];
        assert_eq!(inj_indicator(&row).unwrap(), 0.0);
        assert!((sur_indicator(&row).unwrap() - 5f64.sqrt()).abs() < 1e-14);

        let wide = dmatrix![1.0, 0.0, 0.0; 0.0, 2.0, 0.0];
        assert!((sur_indicator(&wide).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tall_matrix_is_never_onto() {
        let tall = dmatrix![1.0; 2.0];
        assert_eq!(sur_indicator(&tall).unwrap(), 0.0);
        assert!((inj_indicator(&tall).unwrap() - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn non_finite_matrix_rejected() {
        let bad = dmatrix![f64::NAN, 1.0];
        assert!(matches!(inj_indicator(&bad), Err(Error::NonFinite { .. })));
        assert!(matches!(sur_indicator(&bad), Err(Error::NonFinite { .. })));
        assert!(matches!(
            fredholm_data(&bad, DEFAULT_RANK_TOL),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn fredholm_examples() {
        let f = fredholm_data(&DMatrix::identity(3, 3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!((f.dim_ker, f.dim_coker, f.index), (0, 0, 0));
        let f = fredholm_data(&dmatrix![1.0, -2.0], DEFAULT_RANK_TOL).unwrap();
        assert_eq!((f.dim_ker, f.dim_coker, f.index), (1, 0, 1));
        let f = fredholm_data(&DMatrix::zeros(2, 2), DEFAULT_RANK_TOL).unwrap();
        assert_eq!((f.dim_ker, f.dim_coker, f.index), (2, 2, 0));
        assert!(fredholm_data(&DMatrix::zeros(2, 2), 0.0).is_err());
    }

    #[test]
    fn certified_arctan_profile() {
        let f = registry_get("arctan1d").unwrap();
        let p = mu_profile(&f, &dvector![0.0], 2.0, 200, ProfileMode::Certified).unwrap();
        assert!(p.certified);
        for (rho, eta) in p.radii.iter().zip(&p.eta_values) {
            assert!((eta - 1.0 / (1.0 + rho * rho)).abs() < 1e-15);
        }
    }

    #[test]
    fn sampled_constant_profiles() {
        let id = registry_get("identity_2").unwrap();
        let p = mu_profile(
            &id,
            &dvector![3.0, -1.0],
            2.0,
            20,
            ProfileMode::Sampled { samples: 64, seed: 9 },
        )
        .unwrap();
        assert!(!p.certified);
        assert_eq!(p.seed, Some(9));
        assert!(p.eta_values.iter().all(|&e| (e - 1.0).abs() < 1e-15));

        let lin = linear(dmatrix![2.0, 0.0; 0.0, 0.5]).unwrap().model;
        let p = mu_profile(
            &lin,
            &dvector![0.0, 0.0],
            1.0,
            10,
            ProfileMode::Sampled { samples: 16, seed: 1 },
        )
        .unwrap();
        assert!(p.eta_values.iter().all(|&e| (e - 0.5).abs() < 1e-15));
    }

    #[test]
    fn certified_mode_requires_bound() {
        let f = MapModel::new("nobound", 1, 1, |x: &DVector<f64>| x.clone());
        assert_eq!(
            mu_profile(&f, &dvector![0.0], 1.0, 4, ProfileMode::Certified),
            Err(Error::MissingBound)
        );
    }

    #[test]
    fn rho_examples() {
        let id = registry_get("identity_1").unwrap();
        let p = mu_profile(&id, &dvector![0.0], 3.0, 30, ProfileMode::Certified).unwrap();
        assert!((rho_of_r(&p, 3.0).unwrap() - 3.0).abs() < 1e-12);

        let lin = linear(dmatrix![0.5]).unwrap().model;
        let p = mu_profile(&lin, &dvector![0.0], 2.0, 7, ProfileMode::Certified).unwrap();
        assert!((rho_of_r(&p, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((rho_of_r(&p, 1.3).unwrap() - 0.65).abs() < 1e-12);

        assert!(matches!(rho_of_r(&p, 2.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(rho_of_r(&p, 0.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn arctan_radius_is_conservative() {
        let f = registry_get("arctan1d").unwrap();
        let exact = std::f64::consts::FRAC_PI_4;
        // right-endpoint error is about h/2 * (eta(0) - eta(1)) = h/4
        let p = mu_profile(&f, &dvector![0.0], 1.0, 1000, ProfileMode::Certified).unwrap();
        let rho = rho_of_r(&p, 1.0).unwrap();
        assert!(rho <= exact);
        assert!(exact - rho < 2.6e-4);
        let p = mu_profile(&f, &dvector![0.0], 1.0, 4000, ProfileMode::Certified).unwrap();
        let rho = rho_of_r(&p, 1.0).unwrap();
        assert!(rho <= exact && exact - rho < 1e-4);
    }
}
