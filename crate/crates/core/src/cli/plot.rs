//! CSV plot data: profile curves, star reach and trajectories.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::global_solver::StarReport;
use crate::indicators::MuProfile;
use crate::lifting::LiftTrajectory;

#[derive(Clone, Debug, Default)]
pub struct PlotData {
    pub profile: Option<MuProfile>,
    pub star: Option<StarReport>,
    pub trajectories: Vec<LiftTrajectory>,
}

fn eta_csv(profile: &MuProfile) -> String {
    let mut s = String::from("rho,eta\n");
    for (r, e) in profile.radii.iter().zip(&profile.eta_values) {
        let _ = writeln!(s, "{r},{e}");
    }
    s
}

fn rho_csv(profile: &MuProfile) -> String {
    let mut s = String::from("r,rho\n");
    for (r, rho) in profile.rho_curve() {
        let _ = writeln!(s, "{r},{rho}");
    }
    s
}

fn star_csv(star: &StarReport) -> String {
    let m = star.y0.len();
    let mut s = String::new();
    for i in 1..=m {
        let _ = write!(s, "d_{i},");
    }
    s.push_str("reach,reason\n");
    for ray in &star.rays {
        for d in &ray.direction {
            let _ = write!(s, "{d},");
        }
        let _ = writeln!(s, "{},{:?}", ray.reach, ray.reason);
    }
    s
}

/// Writes the CSV files for `data` into `dir` and returns their names:
/// `eta_profile.csv`, `rho_curve.csv`, `star_reach.csv` and `traj_<k>.csv`.
pub fn emit_plot_data(data: &PlotData, dir: &Path) -> io::Result<Vec<String>> {
    let mut files: Vec<(String, String)> = Vec::new();
    if let Some(p) = &data.profile {
        files.push(("eta_profile.csv".into(), eta_csv(p)));
        files.push(("rho_curve.csv".into(), rho_csv(p)));
    }
    if let Some(star) = &data.star {
        files.push(("star_reach.csv".into(), star_csv(star)));
    }
    for (k, t) in data.trajectories.iter().enumerate() {
        files.push((format!("traj_{k}.csv"), t.to_csv()));
    }
    for (name, body) in &files {
        fs::write(dir.join(name), body)?;
    }
    Ok(files.into_iter().map(|(name, _)| name).collect())
}
