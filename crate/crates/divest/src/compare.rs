//! Micro/macro comparison metrics.

use divest_core::trajectory::{Sample, Trajectory};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Linearly interpolated time at which `values` enters `[threshold, inf)`
/// for the last time; the first time if it never leaves, `None` if it ends
/// below. A series that starts near the threshold and dips below it before
/// the actual transition is dated by the later, lasting crossing.
pub fn lasting_crossing(times: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    let n = values.len().min(times.len());
    if n == 0 || values[n - 1] < threshold {
        return None;
    }
    for k in (1..n).rev() {
        let (v0, v1) = (values[k - 1], values[k]);
        if v0 < threshold {
            return Some(times[k - 1] + (threshold - v0) / (v1 - v0) * (times[k] - times[k - 1]));
        }
    }
    Some(times[0])
}

/// Time at which the clean share `n_c` crosses `threshold` for good.
pub fn transition_time(traj: &Trajectory, threshold: f64) -> Option<f64> {
    let n_c: Vec<f64> = traj.samples.iter().map(|s| s.n_c).collect();
    lasting_crossing(&traj.times(), &n_c, threshold)
}

/// Smallest fraction of discordant links along a trajectory.
pub fn min_discordant_fraction(traj: &Trajectory) -> f64 {
    traj.samples
        .iter()
        .map(Sample::cd_fraction)
        .fold(f64::INFINITY, f64::min)
}

/// What to compare and how strictly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub variables: Vec<String>,
    pub windows: Vec<(f64, f64)>,
    /// Agreement band in ensemble standard errors.
    pub band: f64,
    pub threshold: f64,
}

impl Default for ComparisonSpec {
    fn default() -> Self {
        ComparisonSpec {
            variables: ["Kcc", "Kdd", "C", "G"].map(String::from).to_vec(),
            windows: vec![(50.0, 90.0), (400.0, 500.0)],
            band: 2.0,
            threshold: 0.5,
        }
    }
}

/// Window-averaged macro value against the ensemble. `abm_se` is the
/// standard error of the per-run window averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowCheck {
    pub variable: String,
    pub window: (f64, f64),
    pub macro_value: f64,
    pub abm_mean: f64,
    pub abm_se: f64,
    /// `|macro - abm| / se`.
    pub deviation: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseEntry {
    pub variable: String,
    pub window: (f64, f64),
    /// Root mean square difference between the ensemble mean and the macro
    /// trajectory.
    pub rmse: f64,
    /// `rmse` divided by the mean absolute ensemble value.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: usize,
    pub band: f64,
    pub rmse: Vec<RmseEntry>,
    pub windows: Vec<WindowCheck>,
    /// Transition time of the ensemble-mean clean share.
    pub abm_transition: Option<f64>,
    pub macro_transition: Option<f64>,
    /// `(abm - macro) / abm`; positive when the macro transition is earlier.
    pub macro_lead: Option<f64>,
    pub run_transitions: Vec<Option<f64>>,
    /// Every window check lies inside the band.
    pub within_band: bool,
}

fn window_indices(times: &[f64], w: (f64, f64)) -> Vec<usize> {
    let eps = 1e-9 * w.1.abs().max(1.0);
    (0..times.len())
        .filter(|&k| times[k] >= w.0 - eps && times[k] <= w.1 + eps)
        .collect()
}

fn column(traj: &Trajectory, name: &str) -> Result<Vec<f64>> {
    traj.column(name)
        .ok_or_else(|| HarnessError::Config(format!("unknown trajectory column `{name}`")))
}

/// Compares an ensemble of runs with a macro trajectory sampled on the
/// same grid.
pub fn compare(
    runs: &[Trajectory],
    macro_traj: &Trajectory,
    spec: &ComparisonSpec,
) -> Result<ComparisonReport> {
    if runs.len() < 2 {
        return Err(HarnessError::Config(
            "comparison needs at least two runs".into(),
        ));
    }
    let times = runs[0].times();
    if runs.iter().any(|r| r.times() != times) || macro_traj.times() != times {
        return Err(HarnessError::Config(
            "runs and macro trajectory use different sample grids".into(),
        ));
    }
    let k = runs.len() as f64;
    let mut rmse = Vec::new();
    let mut windows = Vec::new();
    for var in &spec.variables {
        let per_run: Vec<Vec<f64>> = runs.iter().map(|r| column(r, var)).collect::<Result<_>>()?;
        let macro_col = column(macro_traj, var)?;
        let mean: Vec<f64> = (0..times.len())
            .map(|t| per_run.iter().map(|c| c[t]).sum::<f64>() / k)
            .collect();
        for &w in &spec.windows {
            let idx = window_indices(&times, w);
            if idx.is_empty() {
                return Err(HarnessError::Config(format!(
                    "window {w:?} holds no samples"
                )));
            }
            let n = idx.len() as f64;
            let sq = idx
                .iter()
                .map(|&t| (mean[t] - macro_col[t]).powi(2))
                .sum::<f64>()
                / n;
            let scale = idx.iter().map(|&t| mean[t].abs()).sum::<f64>() / n;
            rmse.push(RmseEntry {
                variable: var.clone(),
                window: w,
                rmse: sq.sqrt(),
                relative: if scale > 0.0 {
                    sq.sqrt() / scale
                } else {
                    f64::NAN
                },
            });
            let averages: Vec<f64> = per_run
                .iter()
                .map(|c| idx.iter().map(|&t| c[t]).sum::<f64>() / n)
                .collect();
            let abm_mean = averages.iter().sum::<f64>() / k;
            let var_runs = averages.iter().map(|a| (a - abm_mean).powi(2)).sum::<f64>() / (k - 1.0);
            let abm_se = (var_runs / k).sqrt();
            let macro_value = idx.iter().map(|&t| macro_col[t]).sum::<f64>() / n;
            let diff = (macro_value - abm_mean).abs();
            let deviation = if abm_se > 0.0 {
                diff / abm_se
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            windows.push(WindowCheck {
                variable: var.clone(),
                window: w,
                macro_value,
                abm_mean,
                abm_se,
                deviation,
                within: deviation <= spec.band,
            });
        }
    }
    let n_c: Vec<f64> = (0..times.len())
        .map(|t| runs.iter().map(|r| r.samples[t].n_c).sum::<f64>() / k)
        .collect();
    let abm_transition = lasting_crossing(&times, &n_c, spec.threshold);
    let macro_transition = transition_time(macro_traj, spec.threshold);
    let macro_lead = match (abm_transition, macro_transition) {
        (Some(a), Some(m)) if a > 0.0 => Some((a - m) / a),
        _ => None,
    };
    Ok(ComparisonReport {
        runs: runs.len(),
        band: spec.band,
        within_band: windows.iter().all(|w| w.within),
        rmse,
        windows,
        abm_transition,
        macro_transition,
        macro_lead,
        run_transitions: runs
            .iter()
            .map(|r| transition_time(r, spec.threshold))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(n_c: &[f64]) -> Trajectory {
        let samples = n_c
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let mut vals = [0.0; 18];
                vals[0] = k as f64;
                vals[1] = v;
                Sample::from_values(&vals)
            })
            .collect();
        Trajectory { samples }
    }

    #[test]
    fn starting_above_the_threshold_crosses_at_zero() {
        assert_eq!(transition_time(&traj(&[0.9; 5]), 0.5), Some(0.0));
    }

    #[test]
    fn linear_ramp_crosses_at_its_midpoint() {
        let times: Vec<f64> = (0..=100).map(f64::from).collect();
        let ramp: Vec<f64> = times.iter().map(|t| t / 100.0).collect();
        assert!((lasting_crossing(&times, &ramp, 0.5).unwrap() - 50.0).abs() < 1e-12);
        let coarse = [0.0, 0.4, 0.8];
        assert!((lasting_crossing(&[0.0, 10.0, 20.0], &coarse, 0.5).unwrap() - 12.5).abs() < 1e-12);
    }

    #[test]
    fn never_crossing_gives_none() {
        assert_eq!(transition_time(&traj(&[0.1, 0.4, 0.49]), 0.5), None);
        assert_eq!(transition_time(&traj(&[0.2, 0.3, 0.2]), 0.25), None);
    }

    #[test]
    fn the_lasting_crossing_counts() {
        // starts just above, dips, then transitions
        let t = transition_time(&traj(&[0.52, 0.3, 0.2, 0.4, 0.6, 0.9]), 0.5).unwrap();
        assert!((t - 3.5).abs() < 1e-12);
    }

    #[test]
    fn identical_trajectories_agree_perfectly() {
        let a = traj(&[0.1, 0.3, 0.6, 0.8]);
        let b = traj(&[0.2, 0.4, 0.7, 0.9]);
        let spec = ComparisonSpec {
            variables: vec!["n_c".into()],
            windows: vec![(0.0, 3.0)],
            band: 2.0,
            threshold: 0.5,
        };
        let mean = traj(&[0.15, 0.35, 0.65, 0.85]);
        let r = compare(&[a, b], &mean, &spec).unwrap();
        assert!(r.rmse[0].rmse < 1e-15);
        assert!(r.within_band);
        // window averages 0.45 and 0.55: se = 0.05
        assert!((r.windows[0].abm_se - 0.05).abs() < 1e-12);
        assert!(r.macro_lead.unwrap().abs() < 1e-12);
        assert_eq!(r.run_transitions.len(), 2);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = traj(&[0.1, 0.2]);
        let b = traj(&[0.1, 0.2, 0.3]);
        assert!(compare(&[a.clone(), a.clone()], &b, &ComparisonSpec::default()).is_err());
    }
}
