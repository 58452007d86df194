//! Checks for the global inversion conditions.
//!
//! `Holds` and `Fails` are only issued from analytic information: a
//! certified profile (which comes from an analytic bound) or the facts
//! registered with a map. Everything estimated from samples is reported as
//! `HeuristicPass` or `HeuristicFail`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::global_solver::Strategy;
use crate::indicators::{mu_profile, rho_of_r, IndicatorKind, MuProfile, ProfileMode};
use crate::lifting::{
    gradient_flow, lift_line_horizontal, lift_line_square, weighted_path_length, FlowVerdict,
    LiftOptions,
};
use crate::map_model::{AnalyticFacts, MapModel, RegistryEntry};
use crate::sampling::{box_points, sphere_directions, unit_ball_points};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConditionId {
    /// Expansive map.
    C8,
    /// Hadamard-Levy: `|df(x)^{-1}| <= beta`.
    C10,
    /// Plastock: coercive with `mu` bounded below on balls.
    C14,
    /// Hadamard integral condition.
    C15,
    /// Katriel: `mu` bounded below on every sublevel set of `|f - y0|`.
    C17,
    /// Weighted Earle-Eells condition.
    C22,
    /// Palais-Smale scan of `F_y`.
    PS,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Holds,
    Fails,
    HeuristicPass,
    HeuristicFail,
}

impl Verdict {
    pub fn is_certified(self) -> bool {
        matches!(self, Verdict::Holds | Verdict::Fails)
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Verdict::Holds | Verdict::HeuristicPass)
    }

    fn heuristic(pass: bool) -> Self {
        if pass {
            Verdict::HeuristicPass
        } else {
            Verdict::HeuristicFail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticEntry {
    pub condition_id: ConditionId,
    pub verdict: Verdict,
    pub evidence: Value,
}

fn make_entry<T: Serialize>(condition_id: ConditionId, verdict: Verdict, evidence: &T) -> DiagnosticEntry {
    DiagnosticEntry {
        condition_id,
        verdict,
        evidence: serde_json::to_value(evidence).unwrap_or(Value::Null),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub map: String,
    pub x0: Vec<f64>,
    /// Sorted by `condition_id`.
    pub entries: Vec<DiagnosticEntry>,
}

impl DiagnosticsReport {
    pub fn get(&self, id: ConditionId) -> Option<&DiagnosticEntry> {
        self.entries.iter().find(|e| e.condition_id == id)
    }

    /// Plain-text table, one condition per row.
    pub fn table(&self) -> String {
        let mut out = format!("{:<6} {:<14}\n", "id", "verdict");
        for e in &self.entries {
            out.push_str(&format!("{:<6} {:<14}\n", format!("{:?}", e.condition_id), format!("{:?}", e.verdict)));
        }
        out
    }
}

fn indicator_kind(model: &MapModel) -> IndicatorKind {
    if model.m() <= model.n() {
        IndicatorKind::Sur
    } else {
        IndicatorKind::Inj
    }
}

fn mu_of(model: &MapModel, x: &DVector<f64>) -> Option<f64> {
    let jac = model.jacobian(x).ok()?;
    indicator_kind(model).apply(&jac).ok().filter(|v| v.is_finite())
}

// ---------------------------------------------------------------- C10

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HadamardLevyResult {
    pub verdict: Verdict,
    /// Bound on `|df(x)^{-1}|`, `1 / inf mu`.
    pub beta: Option<f64>,
    pub inf_eta: f64,
    pub tested_radius: f64,
    pub analytic_inf: Option<f64>,
}

impl HadamardLevyResult {
    pub fn entry(&self) -> DiagnosticEntry {
        make_entry(ConditionId::C10, self.verdict, self)
    }
}

pub fn hadamard_levy_check(profile: &MuProfile, facts: Option<&AnalyticFacts>) -> HadamardLevyResult {
    let inf_eta = profile.inf_eta();
    let analytic_inf = facts.and_then(|f| f.global_mu_inf);
    let (verdict, beta) = match analytic_inf {
        Some(g) if g > 0.0 && profile.certified && inf_eta > 0.0 => (Verdict::Holds, Some(1.0 / g)),
        Some(g) if g <= 0.0 => (Verdict::Fails, None),
        _ => {
            // a profile that is flat over the outer half suggests a global
            // lower bound, a decaying one does not
            let eta_half = profile.eta_at(0.5 * profile.r_max());
            let pass = inf_eta > 0.0 && inf_eta >= 0.9 * eta_half;
            (Verdict::heuristic(pass), pass.then(|| 1.0 / inf_eta))
        }
    };
    HadamardLevyResult {
        verdict,
        beta,
        inf_eta,
        tested_radius: profile.r_max(),
        analytic_inf,
    }
}

// ---------------------------------------------------------------- C15

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HadamardIntegralResult {
    pub verdict: Verdict,
    /// `(r, rho(r))` over the schedule.
    pub rho_values: Vec<(f64, f64)>,
    /// Estimated `p` in `eta(rho) ~ rho^{-p}` over the last schedule intervals.
    pub tail_exponent: Option<f64>,
    /// Constant `c` of an analytic tail `mu >= c / (1 + |x0| + rho)`.
    pub analytic_tail: Option<f64>,
    pub conclusive: bool,
}

impl HadamardIntegralResult {
    pub fn entry(&self) -> DiagnosticEntry {
        make_entry(ConditionId::C15, self.verdict, self)
    }
}

/// Growth of `rho(r)` over `r_schedule`; divergence is only asserted from an
/// analytic `1/rho`-type tail.
pub fn hadamard_integral_check(
    profile: &MuProfile,
    r_schedule: &[f64],
    facts: Option<&AnalyticFacts>,
) -> Result<HadamardIntegralResult> {
    if r_schedule.is_empty() || r_schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("r_schedule must be nonempty and increasing".into()));
    }
    let rho_values = r_schedule
        .iter()
        .map(|&r| rho_of_r(profile, r).map(|rho| (r, rho)))
        .collect::<Result<Vec<_>>>()?;
    let analytic_tail = facts.and_then(|f| f.radial_tail).filter(|&c| c > 0.0);

    let mut tail_exponent = None;
    let mut growing = rho_values.last().is_some_and(|&(_, rho)| rho > 0.0);
    if rho_values.len() >= 3 {
        let k = rho_values.len() - 1;
        let slope = |i: usize| {
            (rho_values[i].1 - rho_values[i - 1].1) / (rho_values[i].0 - rho_values[i - 1].0)
        };
        let mid = |i: usize| 0.5 * (rho_values[i].0 + rho_values[i - 1].0);
        let (s_prev, s_last) = (slope(k - 1), slope(k));
        if s_last > 0.0 && s_prev > 0.0 {
            tail_exponent = Some((s_prev / s_last).ln() / (mid(k) / mid(k - 1)).ln());
        } else {
            growing = false;
        }
    }

    let verdict = if profile.certified && analytic_tail.is_some() {
        Verdict::Holds
    } else {
        Verdict::heuristic(growing && tail_exponent.is_none_or(|p| p <= 1.05))
    };
    Ok(HadamardIntegralResult {
        verdict,
        rho_values,
        tail_exponent,
        analytic_tail,
        conclusive: verdict.is_certified(),
    })
}

// ---------------------------------------------------------------- C17

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KatrielSampler {
    /// Box centre; the origin when absent.
    pub center: Option<Vec<f64>>,
    pub initial_half_width: f64,
    /// Number of boxes; the half width doubles each time.
    pub expansions: usize,
    pub samples_per_box: usize,
    pub seed: u64,
    pub local_iters: usize,
    /// Sampled infima below this count as zero.
    pub zero_floor: f64,
}

impl Default for KatrielSampler {
    fn default() -> Self {
        Self {
            center: None,
            initial_half_width: 1.0,
            expansions: 12,
            samples_per_box: 256,
            seed: 0,
            local_iters: 200,
            zero_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KatrielLevel {
    pub level: f64,
    pub verdict: Verdict,
    pub inf_mu: f64,
    pub argmin: Vec<f64>,
    pub first_box_inf: f64,
    pub hits: usize,
    /// The registered witness sequence lies in this sublevel set.
    pub witness_applies: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KatrielResult {
    pub verdict: Verdict,
    pub y0: Vec<f64>,
    pub levels: Vec<KatrielLevel>,
}

impl KatrielResult {
    pub fn entry(&self) -> DiagnosticEntry {
        make_entry(ConditionId::C17, self.verdict, self)
    }
}

fn witness_applies(
    model: &MapModel,
    witness: &[DVector<f64>],
    y0: &DVector<f64>,
    level: f64,
) -> bool {
    if witness.len() < 2 {
        return false;
    }
    let mut mus = Vec::with_capacity(witness.len());
    for x in witness {
        let inside = model
            .evaluate(x)
            .is_ok_and(|v| (v - y0).norm() < level);
        match (inside, mu_of(model, x)) {
            (true, Some(mu)) => mus.push(mu),
            _ => return false,
        }
    }
    mus.windows(2).all(|w| w[1] < w[0]) && mus[mus.len() - 1] <= 1e-3 * mus[0]
}

/// Compass search for a smaller `mu` inside the sublevel set.
fn local_minimize(
    model: &MapModel,
    y0: &DVector<f64>,
    level: f64,
    start: DVector<f64>,
    start_mu: f64,
    step: f64,
    iters: usize,
) -> (DVector<f64>, f64) {
    let (mut x, mut best, mut s) = (start, start_mu, step);
    for _ in 0..iters {
        if s < 1e-12 * (1.0 + x.norm()) {
            break;
        }
        let mut improved = None;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] += sign * s;
                let inside = model.evaluate(&cand).is_ok_and(|v| (v - y0).norm() < level);
                if !inside {
                    continue;
                }
                if let Some(mu) = mu_of(model, &cand) {
                    if mu < improved.as_ref().map_or(best, |(_, m)| *m) {
                        improved = Some((cand, mu));
                    }
                }
            }
        }
        match improved {
            Some((cand, mu)) => {
                x = cand;
                best = mu;
            }
            None => s *= 0.5,
        }
    }
    (x, best)
}

pub fn katriel_check(
    model: &MapModel,
    y0: &DVector<f64>,
    levels: &[f64],
    sampler: &KatrielSampler,
    facts: Option<&AnalyticFacts>,
) -> Result<KatrielResult> {
    if y0.len() != model.m() {
        return Err(Error::DimensionMismatch {
            expected: model.m(),
            got: y0.len(),
        });
    }
    if levels.is_empty() || levels.iter().any(|&l| !(l > 0.0)) || levels.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("levels must be positive and increasing".into()));
    }
    let center = match &sampler.center {
        Some(c) if c.len() == model.n() => DVector::from_column_slice(c),
        Some(c) => {
            return Err(Error::DimensionMismatch {
                expected: model.n(),
                got: c.len(),
            })
        }
        None => DVector::zeros(model.n()),
    };

    // one shared sample set, evaluated once
    let mut samples: Vec<(usize, DVector<f64>, f64, f64)> = Vec::new();
    for e in 0..sampler.expansions.max(1) {
        let half = sampler.initial_half_width * 2f64.powi(e as i32);
        for x in box_points(sampler.samples_per_box, &center, half, sampler.seed.wrapping_add(e as u64)) {
            let Ok(v) = model.evaluate(&x) else { continue };
            let Some(mu) = mu_of(model, &x) else { continue };
            let d = (v - y0).norm();
            samples.push((e, x, d, mu));
        }
    }

    let witness = facts.and_then(|f| f.katriel_witness.as_deref());
    let mut out = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut hits = 0;
        let mut best: Option<(usize, &DVector<f64>, f64)> = None;
        let mut first_box: Option<(usize, f64)> = None;
        for (e, x, d, mu) in &samples {
            if *d >= level {
                continue;
            }
            hits += 1;
            match first_box {
                None => first_box = Some((*e, *mu)),
                Some((fb, ref mut m)) if fb == *e => *m = m.min(*mu),
                _ => {}
            }
            if best.is_none_or(|(_, _, b)| *mu < b) {
                best = Some((*e, x, *mu));
            }
        }
        let Some((e, x, mu)) = best else {
            return Err(Error::EmptySublevel { level });
        };
        let half = sampler.initial_half_width * 2f64.powi(e as i32);
        let step = 2.0 * half / (sampler.samples_per_box as f64).powf(1.0 / model.n() as f64);
        let (argmin, inf_mu) = local_minimize(model, y0, level, x.clone(), mu, step, sampler.local_iters);
        let first_box_inf = first_box.map_or(inf_mu, |(_, m)| m);
        let pass = inf_mu >= sampler.zero_floor && inf_mu >= 1e-3 * first_box_inf;
        out.push(KatrielLevel {
            level,
            verdict: Verdict::heuristic(pass),
            inf_mu,
            argmin: argmin.iter().copied().collect(),
            first_box_inf,
            hits,
            witness_applies: witness.is_some_and(|w| witness_applies(model, w, y0, level)),
        });
    }

    let verdict = if out.iter().any(|l| l.witness_applies) {
        Verdict::Fails
    } else if facts.is_some_and(|f| f.plastock) {
        Verdict::Holds
    } else {
        Verdict::heuristic(out.iter().all(|l| l.verdict == Verdict::HeuristicPass))
    };
    Ok(KatrielResult {
        verdict,
        y0: y0.iter().copied().collect(),
        levels: out,
    })
}

// ---------------------------------------------------------------- C8

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairSampler {
    pub radii: Vec<f64>,
    /// Points per radius.
    pub pairs: usize,
    pub center: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for PairSampler {
    fn default() -> Self {
        Self {
            radii: vec![1.0, 10.0, 100.0],
            pairs: 128,
            center: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansiveResult {
    pub verdict: Verdict,
    /// `(R, alpha_hat(R))`.
    pub alpha_hat: Vec<(f64, f64)>,
    pub caveat: &'static str,
}

impl ExpansiveResult {
    pub fn entry(&self) -> DiagnosticEntry {
        make_entry(ConditionId::C8, self.verdict, self)
    }
}

/// Minimal stretch `|f(u) - f(x)| / |u - x|` over sampled pairs in balls of
/// each radius: neighbouring sample points, antipodal points of the sphere
/// and nearly coincident pairs.
pub fn expansive_estimate(model: &MapModel, sampler: &PairSampler) -> Result<ExpansiveResult> {
    if sampler.pairs < 2 {
        return Err(Error::InvalidInput("pair sampler needs at least 2 pairs".into()));
    }
    if sampler.radii.is_empty() || sampler.radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidInput("radii must be positive".into()));
    }
    let n = model.n();
    let center = sampler
        .center
        .as_ref()
        .map_or_else(|| DVector::zeros(n), |c| DVector::from_column_slice(c));
    if center.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: center.len(),
        });
    }
    let stretch = |u: &DVector<f64>, x: &DVector<f64>| -> Option<f64> {
        let d = (u - x).norm();
        let (fu, fx) = (model.evaluate(u).ok()?, model.evaluate(x).ok()?);
        (d > 0.0).then(|| (fu - fx).norm() / d)
    };

    let mut alpha_hat = Vec::with_capacity(sampler.radii.len());
    for (k, &radius) in sampler.radii.iter().enumerate() {
        let seed = sampler.seed.wrapping_add(k as u64);
        let points: Vec<DVector<f64>> = unit_ball_points(sampler.pairs, n, seed)
            .into_iter()
            .map(|p| &center + p * radius)
            .collect();
        let mut alpha = f64::INFINITY;
        for w in points.windows(2) {
            alpha = stretch(&w[0], &w[1]).map_or(alpha, |s| alpha.min(s));
        }
        for d in sphere_directions(sampler.pairs, n, seed) {
            let (u, x) = (&center + &d * radius, &center - &d * radius);
            alpha = stretch(&u, &x).map_or(alpha, |s| alpha.min(s));
        }
        let delta = 1e-4 * radius;
        let dirs = sphere_directions(points.len(), n, seed.wrapping_add(1));
        for (p, d) in points.iter().zip(dirs) {
            alpha = stretch(&(p + d * delta), p).map_or(alpha, |s| alpha.min(s));
        }
        alpha_hat.push((radius, alpha));
    }
    let first = alpha_hat[0].1;
    let last = alpha_hat[alpha_hat.len() - 1].1;
    let pass = last.is_finite() && last >= 1e-8 && last >= 0.1 * first;
    Ok(ExpansiveResult {
        verdict: Verdict::heuristic(pass),
        alpha_hat,
        caveat: "sampled pairs can refute expansiveness but never establish it",
    })
}

// ---------------------------------------------------------------- C22

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    Constant { value: f64 },
    /// `omega(rho) = a + b rho`.
    Affine { a: f64, b: f64 },
}

impl Weight {
    pub fn omega(&self, rho: f64) -> f64 {
        match *self {
            Weight::Constant { value } => value,
            Weight::Affine { a, b } => a + b * rho,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Weight::Constant { value } => value > 0.0 && value.is_finite(),
            Weight::Affine { a, b } => a > 0.0 && b >= 0.0 && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("weight must be positive and nondecreasing".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedLiftCheck {
    pub direction: Vec<f64>,
    pub w_norm: f64,
    pub status: String,
    /// Length of the lifted part of the segment, `|w| t_stop`.
    pub target_length: f64,
    pub weighted_length: f64,
    pub min_mu_omega: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedResult {
    pub verdict: Verdict,
    pub weight: Weight,
    /// `min_k eta(rho_k) omega(rho_{k-1})` over the profile grid.
    pub alpha: f64,
    /// Analytic lower bound for `mu omega` over the whole domain.
    pub alpha_tail: Option<f64>,
    /// Estimated decay exponent of `eta omega` over the outer half of the grid.
    pub tail_decay: f64,
    pub lift_checks: Vec<WeightedLiftCheck>,
}

impl WeightedResult {
    pub fn entry(&self) -> DiagnosticEntry {
        make_entry(ConditionId::C22, self.verdict, self)
    }
}

fn analytic_weighted_tail(facts: &AnalyticFacts, x0_norm: f64, weight: Weight) -> Option<f64> {
    let from_tail = facts.radial_tail.and_then(|c| match weight {
        // c (a + b rho) / (1 + |x0| + rho) is monotone in rho, so its
        // infimum is at one end
        Weight::Affine { a, b } if b > 0.0 => Some(c * (a / (1.0 + x0_norm)).min(b)),
        _ => None,
    });
    let from_global = facts
        .global_mu_inf
        .filter(|&g| g > 0.0)
        .map(|g| g * weight.omega(0.0));
    match (from_tail, from_global) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

pub fn weighted_certificate(
    model: &MapModel,
    x0: &DVector<f64>,
    weight: Weight,
    profile: &MuProfile,
    test_lifts: usize,
    facts: Option<&AnalyticFacts>,
    lift_opts: &LiftOptions,
) -> Result<WeightedResult> {
    weight.validate()?;
    let radii = &profile.radii;
    let eta = &profile.eta_values;
    // eta is nonincreasing and omega nondecreasing, so on [rho_{k-1}, rho_k]
    // the product is at least eta(rho_k) omega(rho_{k-1})
    let mut alpha = eta[0] * weight.omega(0.0);
    for k in 1..radii.len() {
        alpha = alpha.min(eta[k] * weight.omega(radii[k - 1]));
    }
    let half = radii.partition_point(|&r| r < 0.5 * profile.r_max()).min(radii.len() - 1);
    let outer = eta[eta.len() - 1] * weight.omega(profile.r_max());
    let inner = eta[half] * weight.omega(radii[half]);
    let ratio = radii[radii.len() - 1] / radii[half].max(f64::MIN_POSITIVE);
    let tail_decay = if outer > 0.0 && inner > 0.0 && ratio > 1.0 {
        (inner / outer).ln() / ratio.ln()
    } else {
        f64::INFINITY
    };
    let alpha_tail = facts.and_then(|f| analytic_weighted_tail(f, x0.norm(), weight));

    let verdict = if profile.certified && alpha > 0.0 && alpha_tail.is_some_and(|a| a > 0.0) {
        Verdict::Holds
    } else {
        Verdict::heuristic(alpha > 0.0 && tail_decay <= 0.25)
    };

    let mut lift_checks = Vec::new();
    let rho = rho_of_r(profile, profile.r_max())?;
    if test_lifts > 0 && rho > 0.0 {
        let w_norm = 0.5 * rho;
        for d in sphere_directions(test_lifts, model.m(), 0) {
            let w = &d * w_norm;
            let lift = match Strategy::default_for(model) {
                Strategy::Wazewski => lift_line_square(model, x0, &w, lift_opts)?,
                _ => lift_line_horizontal(model, x0, &w, lift_opts)?,
            };
            let traj = &lift.trajectory;
            if traj.points.len() < 2 {
                continue;
            }
            let omega = |r: f64| weight.omega(r);
            let weighted_length = weighted_path_length(traj, omega, x0)?;
            let min_mu_omega = traj
                .points
                .iter()
                .zip(&traj.mu_values)
                .map(|(p, mu)| mu * omega((DVector::from_column_slice(p) - x0).norm()))
                .fold(f64::INFINITY, f64::min);
            let target_length = w_norm * lift.status.stop_time().unwrap_or(traj.end_time());
            lift_checks.push(WeightedLiftCheck {
                direction: d.iter().copied().collect(),
                w_norm,
                status: lift.status.label().to_string(),
                target_length,
                weighted_length,
                min_mu_omega,
                satisfied: weighted_length * min_mu_omega <= target_length * (1.0 + 1e-6),
            });
        }
    }
    Ok(WeightedResult {
        verdict,
        weight,
        alpha,
        alpha_tail,
        tail_decay,
        lift_checks,
    })
}

// ---------------------------------------------------------------- C14

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlastockResult {
    pub verdict: Verdict,
    /// `(R, min |f(x) - f(x0)|)` over sampled points of the sphere of radius `R`.
    pub coercivity: Vec<(f64, f64)>,
    pub inf_eta: f64,
    pub analytic: bool,
}

impl PlastockResult {
    pub fn entry(&self) -> DiagnosticEntry {
        make_entry(ConditionId::C14, self.verdict, self)
    }
}

pub fn plastock_check(
    model: &MapModel,
    profile: &MuProfile,
    radii: &[f64],
    directions: usize,
    facts: Option<&AnalyticFacts>,
) -> Result<PlastockResult> {
    let x0 = profile.base_point_vector();
    let y0 = model.evaluate(&x0)?;
    let dirs = sphere_directions(directions.max(2), model.n(), 0);
    let mut coercivity = Vec::with_capacity(radii.len());
    for &r in radii {
        let d_min = dirs
            .iter()
            .filter_map(|d| model.evaluate(&(&x0 + d * r)).ok())
            .map(|v| (v - &y0).norm())
            .fold(f64::INFINITY, f64::min);
        coercivity.push((r, d_min));
    }
    let inf_eta = profile.inf_eta();
    let (verdict, analytic) = match facts {
        Some(f) if f.plastock => (Verdict::Holds, true),
        Some(f) if f.coercive == Some(false) => (Verdict::Fails, true),
        _ => {
            let growing = coercivity.windows(2).all(|w| w[1].1 >= 0.9 * w[0].1)
                && coercivity.len() >= 2
                && coercivity[coercivity.len() - 1].1 >= 2.0 * coercivity[0].1;
            (Verdict::heuristic(growing && inf_eta > 1e-8), false)
        }
    };
    Ok(PlastockResult {
        verdict,
        coercivity,
        inf_eta,
        analytic,
    })
}

// ---------------------------------------------------------------- PS

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsCase {
    pub seed: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsFlow {
    pub seed: Vec<f64>,
    pub y: Vec<f64>,
    pub verdict: FlowVerdict,
    pub residual: f64,
    pub end_point: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsResult {
    pub verdict: Verdict,
    pub flows: Vec<PsFlow>,
}

impl PsResult {
    pub fn entry(&self) -> DiagnosticEntry {
        make_entry(ConditionId::PS, self.verdict, self)
    }
}

/// Gradient flows of `F_y` for each case; any plateau while drifting, or
/// divergence, is a Palais-Smale witness candidate.
pub fn ps_check(model: &MapModel, cases: &[PsCase], opts: &LiftOptions) -> Result<PsResult> {
    let mut flows = Vec::with_capacity(cases.len());
    for case in cases {
        let seed = DVector::from_column_slice(&case.seed);
        let y = DVector::from_column_slice(&case.y);
        let flow = gradient_flow(model, &seed, &y, opts)?;
        flows.push(PsFlow {
            seed: case.seed.clone(),
            y: case.y.clone(),
            verdict: flow.verdict,
            residual: flow.target_residual,
            end_point: flow.end_point().iter().copied().collect(),
        });
    }
    let pass = !flows.is_empty()
        && flows
            .iter()
            .all(|f| matches!(f.verdict, FlowVerdict::Converged { .. }));
    Ok(PsResult {
        verdict: Verdict::heuristic(pass),
        flows,
    })
}

// ---------------------------------------------------------------- all

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseOptions {
    /// Base point; the origin when absent.
    pub x0: Option<Vec<f64>>,
    pub r_max: f64,
    pub grid_size: usize,
    /// Use the analytic bound when the map has one.
    pub prefer_certified: bool,
    pub samples: usize,
    pub seed: u64,
    /// Defaults to `r_max * {1/8, 1/4, 1/2, 1}`.
    pub r_schedule: Option<Vec<f64>>,
    pub katriel_levels: Vec<f64>,
    pub katriel: KatrielSampler,
    pub pairs: PairSampler,
    pub weight: Weight,
    pub weighted_lifts: usize,
    /// Target offsets `|y - f(x0)|` for the PS scan, one flow per direction.
    pub ps_offsets: Vec<f64>,
    pub ps_directions: usize,
    pub coercivity_radii: Vec<f64>,
    pub lift: LiftOptions,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            x0: None,
            r_max: 10.0,
            grid_size: 400,
            prefer_certified: true,
            samples: 128,
            seed: 0,
            r_schedule: None,
            katriel_levels: vec![0.5, 1.0, 2.0, 5.0],
            katriel: KatrielSampler::default(),
            pairs: PairSampler::default(),
            weight: Weight::Affine { a: 1.0, b: 1.0 },
            weighted_lifts: 8,
            ps_offsets: vec![1.0, 2.0],
            ps_directions: 2,
            coercivity_radii: vec![1.0, 10.0, 100.0, 1000.0],
            lift: LiftOptions::default(),
        }
    }
}

/// Runs every condition check on a registered map.
pub fn diagnose(entry: &RegistryEntry, opts: &DiagnoseOptions) -> Result<DiagnosticsReport> {
    let model = &entry.model;
    let facts = entry.analytic_facts.as_ref();
    let x0 = opts
        .x0
        .as_ref()
        .map_or_else(|| DVector::zeros(model.n()), |v| DVector::from_column_slice(v));
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: x0.len(),
        });
    }
    let mode = if opts.prefer_certified && model.has_mu_bound() {
        ProfileMode::Certified
    } else {
        ProfileMode::Sampled {
            samples: opts.samples,
            seed: opts.seed,
        }
    };
    let profile = mu_profile(model, &x0, opts.r_max, opts.grid_size, mode)?;
    let schedule = opts
        .r_schedule
        .clone()
        .unwrap_or_else(|| [0.125, 0.25, 0.5, 1.0].iter().map(|f| f * opts.r_max).collect());
    let y0 = model.evaluate(&x0)?;

    let mut entries = vec![
        expansive_estimate(model, &opts.pairs)?.entry(),
        hadamard_levy_check(&profile, facts).entry(),
        plastock_check(model, &profile, &opts.coercivity_radii, 64, facts)?.entry(),
        hadamard_integral_check(&profile, &schedule, facts)?.entry(),
    ];
    let katriel = KatrielSampler {
        center: opts.katriel.center.clone().or_else(|| opts.x0.clone()),
        ..opts.katriel.clone()
    };
    match katriel_check(model, &y0, &opts.katriel_levels, &katriel, facts) {
        Ok(k) => entries.push(k.entry()),
        Err(Error::EmptySublevel { level }) => entries.push(make_entry(
            ConditionId::C17,
            Verdict::HeuristicFail,
            &serde_json::json!({ "empty_sublevel": level }),
        )),
        Err(e) => return Err(e),
    }
    entries.push(
        weighted_certificate(model, &x0, opts.weight, &profile, opts.weighted_lifts, facts, &opts.lift)?
            .entry(),
    );
    let mut cases = Vec::new();
    for d in sphere_directions(opts.ps_directions.max(1), model.m(), opts.seed) {
        for &off in &opts.ps_offsets {
            cases.push(PsCase {
                seed: x0.iter().copied().collect(),
                y: (&y0 + &d * off).iter().copied().collect(),
            });
        }
    }
    entries.push(ps_check(model, &cases, &opts.lift)?.entry());
    entries.sort_by_key(|e| e.condition_id);
    Ok(DiagnosticsReport {
        map: model.name().to_string(),
        x0: x0.iter().copied().collect(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_model::{linear, registry_entry, registry_get};
    use nalgebra::{dvector, DMatrix};

    fn certified(name: &str, x0: DVector<f64>, r: f64, grid: usize) -> (RegistryEntry, MuProfile) {
        let e = registry_entry(name).unwrap();
        let p = mu_profile(&e.model, &x0, r, grid, ProfileMode::Certified).unwrap();
        (e, p)
    }

    fn sampled(name: &str, x0: DVector<f64>, r: f64, grid: usize) -> (RegistryEntry, MuProfile) {
        let e = registry_entry(name).unwrap();
        let mode = ProfileMode::Sampled { samples: 64, seed: 1 };
        let p = mu_profile(&e.model, &x0, r, grid, mode).unwrap();
        (e, p)
    }

    #[test]
    fn levy_examples() {
        let (e, p) = certified("monotone1d", dvector![0.0], 10.0, 200);
        let r = hadamard_levy_check(&p, e.analytic_facts.as_ref());
        assert_eq!(r.verdict, Verdict::Holds);
        assert!((r.beta.unwrap() - 2.0).abs() < 1e-12);

        let (e, p) = certified("identity_3", DVector::zeros(3), 10.0, 50);
        let r = hadamard_levy_check(&p, e.analytic_facts.as_ref());
        assert_eq!((r.verdict, r.beta), (Verdict::Holds, Some(1.0)));

        let (e, p) = certified("arctan1d", dvector![0.0], 10.0, 200);
        assert_eq!(hadamard_levy_check(&p, e.analytic_facts.as_ref()).verdict, Verdict::Fails);
        assert_eq!(hadamard_levy_check(&p, None).verdict, Verdict::HeuristicFail);

        let (_, p) = sampled("monotone1d", dvector![0.0], 10.0, 200);
        let r = hadamard_levy_check(&p, None);
        assert_eq!(r.verdict, Verdict::HeuristicPass);
        assert!(r.beta.unwrap() <= 2.0 && r.beta.unwrap() > 1.98);
        let (_, p) = sampled("asinh1d", dvector![0.0], 10.0, 200);
        assert_eq!(hadamard_levy_check(&p, None).verdict, Verdict::HeuristicFail);
    }

    #[test]
    fn integral_examples() {
        let schedule = [1.25, 2.5, 5.0, 10.0];
        let (e, p) = sampled("monotone1d", dvector![0.0], 10.0, 400);
        let r = hadamard_integral_check(&p, &schedule, e.analytic_facts.as_ref()).unwrap();
        assert_eq!(r.verdict, Verdict::HeuristicPass);
        assert!(!r.conclusive);
        assert!(r.rho_values.iter().all(|&(r, rho)| rho >= 0.5 * r - 1e-9));

        let (e, p) = certified("arctan1d", dvector![0.0], 10.0, 4000);
        let r = hadamard_integral_check(&p, &schedule, e.analytic_facts.as_ref()).unwrap();
        assert_eq!(r.verdict, Verdict::HeuristicFail);
        // right-endpoint rule: error at most h (eta(0) - eta(r)) with h = 10/4000
        for &(r, rho) in &r.rho_values {
            assert!(rho <= r.atan() + 1e-12 && rho > r.atan() - 2.5e-3);
        }

        let (e, p) = certified("identity_2", DVector::zeros(2), 10.0, 100);
        let r = hadamard_integral_check(&p, &schedule, e.analytic_facts.as_ref()).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!(r.rho_values.iter().all(|&(r, rho)| (rho - r).abs() < 1e-12));

        assert!(hadamard_integral_check(&p, &[2.0, 1.0], None).is_err());
    }

    #[test]
    fn katriel_examples() {
        let e = registry_entry("exp1d").unwrap();
        let r = katriel_check(&e.model, &dvector![1.0], &[0.5, 2.0], &KatrielSampler::default(), e.analytic_facts.as_ref())
            .unwrap();
        assert_eq!(r.levels[0].verdict, Verdict::HeuristicPass);
        assert!((r.levels[0].inf_mu - 0.5).abs() < 1e-6, "{}", r.levels[0].inf_mu);
        assert!(!r.levels[0].witness_applies);
        assert_eq!(r.levels[1].verdict, Verdict::HeuristicFail);
        assert!(r.levels[1].witness_applies);
        assert_eq!(r.verdict, Verdict::Fails);

        let e = registry_entry("monotone1d").unwrap();
        let r = katriel_check(&e.model, &dvector![0.0], &[1.0, 10.0], &KatrielSampler::default(), e.analytic_facts.as_ref())
            .unwrap();
        assert!(r.levels.iter().all(|l| l.verdict == Verdict::HeuristicPass));
        assert!((r.levels[1].inf_mu - 0.5).abs() < 1e-6);

        let f = registry_get("arctan1d").unwrap();
        assert_eq!(
            katriel_check(&f, &dvector![3.0], &[0.1], &KatrielSampler::default(), None).unwrap_err(),
            Error::EmptySublevel { level: 0.1 }
        );
    }

    #[test]
    fn expansive_examples() {
        let a = linear(DMatrix::from_diagonal(&dvector![2.0, 0.5])).unwrap();
        let r = expansive_estimate(&a.model, &PairSampler::default()).unwrap();
        assert_eq!(r.verdict, Verdict::HeuristicPass);
        for &(_, alpha) in &r.alpha_hat {
            assert!((0.5 - 1e-12..0.5 + 1e-9).contains(&alpha));
        }

        let f = registry_get("monotone1d").unwrap();
        let r = expansive_estimate(&f, &PairSampler::default()).unwrap();
        let alpha = r.alpha_hat.last().unwrap().1;
        assert!((0.5 - 1e-9..0.51).contains(&alpha), "{alpha}");

        let f = registry_get("arctan1d").unwrap();
        let r = expansive_estimate(&f, &PairSampler::default()).unwrap();
        assert!(r.alpha_hat.last().unwrap().1 <= std::f64::consts::PI / 200.0);
        assert_eq!(r.verdict, Verdict::HeuristicFail);
    }

    #[test]
    fn weighted_examples() {
        let opts = LiftOptions::default();
        let (e, p) = certified("identity_2", DVector::zeros(2), 10.0, 100);
        let w = Weight::Affine { a: 1.0, b: 1.0 };
        let r = weighted_certificate(&e.model, &DVector::zeros(2), w, &p, 4, e.analytic_facts.as_ref(), &opts)
            .unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!((r.alpha - 1.0).abs() < 1e-12);
        assert!(r.lift_checks.iter().all(|c| c.satisfied));

        // constant weight: the Earle-Eells check on the plain profile
        let (e, p) = certified("monotone1d", dvector![0.0], 10.0, 200);
        let r = weighted_certificate(&e.model, &dvector![0.0], Weight::Constant { value: 1.0 }, &p, 2, e.analytic_facts.as_ref(), &opts)
            .unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert!((r.alpha - p.inf_eta()).abs() < 1e-15);

        let (e, p) = sampled("asinh1d", dvector![0.0], 50.0, 500);
        let facts = e.analytic_facts.as_ref();
        let r = weighted_certificate(&e.model, &dvector![0.0], w, &p, 2, facts, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::HeuristicPass);
        // eta(rho_k) (1 + rho_{k-1}) >= 1 - h on a grid of step h = 0.1
        assert!(r.alpha >= 0.9 && r.alpha <= 1.0 + 1e-12);
        assert!(r.lift_checks.iter().all(|c| c.satisfied));
        assert_eq!(hadamard_levy_check(&p, facts).verdict, Verdict::Fails);

        let (e, p) = certified("arctan1d", dvector![0.0], 10.0, 200);
        let r = weighted_certificate(&e.model, &dvector![0.0], w, &p, 0, e.analytic_facts.as_ref(), &opts).unwrap();
        assert_eq!(r.verdict, Verdict::HeuristicFail);
    }

    #[test]
    fn plastock_and_ps() {
        let (e, p) = sampled("monotone1d", dvector![0.0], 10.0, 100);
        let r = plastock_check(&e.model, &p, &[1.0, 10.0, 100.0], 16, None).unwrap();
        assert_eq!(r.verdict, Verdict::HeuristicPass);
        assert_eq!(
            plastock_check(&e.model, &p, &[1.0, 10.0], 16, e.analytic_facts.as_ref()).unwrap().verdict,
            Verdict::Holds
        );

        let f = registry_get("arctan1d").unwrap();
        let cases = [
            PsCase { seed: vec![0.0], y: vec![1.0] },
            PsCase { seed: vec![0.0], y: vec![2.0] },
        ];
        let r = ps_check(&f, &cases, &LiftOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::HeuristicFail);
        assert!(matches!(r.flows[0].verdict, FlowVerdict::Converged { .. }));
        assert!(matches!(r.flows[1].verdict, FlowVerdict::PSCandidate { .. }));
    }

    #[test]
    fn diagnose_is_sorted_and_honest() {
        let e = registry_entry("exp1d").unwrap();
        let report = diagnose(&e, &DiagnoseOptions::default()).unwrap();
        let ids: Vec<_> = report.entries.iter().map(|e| e.condition_id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(ids.len(), 7);
        assert_eq!(report.get(ConditionId::C17).unwrap().verdict, Verdict::Fails);
        assert_eq!(report.get(ConditionId::C8).unwrap().verdict, Verdict::HeuristicFail);
        assert!(!report.get(ConditionId::PS).unwrap().verdict.is_certified());
        assert!(report.table().contains("C10"));
    }
}
