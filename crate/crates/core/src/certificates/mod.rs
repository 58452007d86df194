//! Ball-inclusion certificates and the ladder of global inversion conditions.
//!
//! A [`RadiusCertificate`] asserts `B_rho(f(x0)) ⊂ f(B_r(x0))` with
//! `rho = int_0^r eta`. It is certified only when the profile came from an
//! analytic bound; sampled profiles give heuristic certificates, and every
//! verdict derived from them is a `Heuristic*` verdict.

mod conditions;

pub use conditions::{
    diagnose, expansive_estimate, hadamard_integral_check, hadamard_levy_check, katriel_check,
    plastock_check, ps_check, weighted_certificate, ConditionId, DiagnoseOptions,
    DiagnosticEntry, DiagnosticsReport, ExpansiveResult, HadamardIntegralResult,
    HadamardLevyResult, KatrielLevel, KatrielResult, KatrielSampler, PairSampler,
    PlastockResult, PsCase, PsResult, Verdict, Weight, WeightedLiftCheck, WeightedResult,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::global_solver::{solve, SolveOptions, Strategy};
use crate::indicators::{rho_of_r, MuProfile};
use crate::map_model::MapModel;
use crate::sampling::sphere_directions;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationTarget {
    pub y: Vec<f64>,
    pub status: String,
    pub solution: Option<Vec<f64>>,
    pub distance: Option<f64>,
    pub inside: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub target_radius: f64,
    pub targets: Vec<VerificationTarget>,
    pub solved: usize,
    pub inside: usize,
}

impl Verification {
    pub fn fraction_inside(&self) -> f64 {
        if self.targets.is_empty() {
            return 1.0;
        }
        self.inside as f64 / self.targets.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusCertificate {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub r: f64,
    pub rho: f64,
    pub profile_ref: MuProfile,
    pub certified: bool,
    pub verification: Option<Verification>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub targets: usize,
    /// Targets lie at `fraction * rho` from `y0`.
    pub fraction: f64,
    pub seed: u64,
    pub solve: SolveOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            targets: 64,
            fraction: 0.99,
            seed: 0,
            solve: SolveOptions::default(),
        }
    }
}

/// Target offsets around `y0`. In one dimension the sphere has two points,
/// so the targets are spread over the whole segment including both ends.
fn target_offsets(count: usize, m: usize, radius: f64, seed: u64) -> Vec<DVector<f64>> {
    if m == 1 {
        let half = count.div_ceil(2).max(1);
        return (0..count)
            .map(|i| {
                let k = (i / 2 + 1) as f64 / half as f64;
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                DVector::from_element(1, sign * k * radius)
            })
            .collect();
    }
    sphere_directions(count, m, seed)
        .into_iter()
        .map(|d| d * radius)
        .collect()
}

/// Builds the certificate `B_rho(f(x0)) ⊂ f(B_r(x0))`, optionally checking it
/// by solving for targets near the boundary of `B_rho(f(x0))`.
pub fn graves_certificate(
    model: &MapModel,
    x0: &DVector<f64>,
    r: f64,
    profile: &MuProfile,
    verify: Option<&VerifyOptions>,
) -> Result<RadiusCertificate> {
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    let base = profile.base_point_vector();
    if base.len() != x0.len() || (&base - x0).norm() > 1e-12 * (1.0 + x0.norm()) {
        return Err(Error::InvalidInput(
            "profile base point differs from x0".into(),
        ));
    }
    let rho = rho_of_r(profile, r)?;
    if !(rho > 0.0) {
        return Err(Error::ZeroRadius);
    }
    let y0 = model.evaluate(x0)?;
    let mut certificate = RadiusCertificate {
        x0: x0.iter().copied().collect(),
        y0: y0.iter().copied().collect(),
        r,
        rho,
        profile_ref: profile.clone(),
        certified: profile.certified,
        verification: None,
    };
    if let Some(opts) = verify {
        certificate.verification = Some(verify_certificate(model, &certificate, opts)?);
    }
    Ok(certificate)
}

fn verify_certificate(
    model: &MapModel,
    certificate: &RadiusCertificate,
    opts: &VerifyOptions,
) -> Result<Verification> {
    let x0 = DVector::from_column_slice(&certificate.x0);
    let y0 = DVector::from_column_slice(&certificate.y0);
    let radius = opts.fraction * certificate.rho;
    let strategy = Strategy::default_for(model);
    let mut solve_opts = opts.solve.clone();
    solve_opts.lift.r_escape = Some(certificate.r);

    let mut targets = Vec::with_capacity(opts.targets);
    let (mut solved, mut inside) = (0, 0);
    for offset in target_offsets(opts.targets, model.m(), radius, opts.seed) {
        let y = &y0 + offset;
        let mut report = solve(model, &y, &x0, strategy, &solve_opts)?;
        report.check_radius(certificate);
        let distance = report
            .solution_vector()
            .map(|x| (x - &x0).norm());
        let is_inside = report.within_radius == Some(true);
        solved += usize::from(report.solution.is_some());
        inside += usize::from(is_inside);
        targets.push(VerificationTarget {
            y: y.iter().copied().collect(),
            status: report.outcome.status().label().to_string(),
            solution: report.solution,
            distance,
            inside: is_inside,
        });
    }
    Ok(Verification {
        target_radius: radius,
        targets,
        solved,
        inside,
    })
}
