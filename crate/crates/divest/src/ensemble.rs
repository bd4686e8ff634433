//! Seeded ensembles of agent-based runs.

use divest_core::abm::{InitSpec, SimState, Topology};
use divest_core::trajectory::{Sample, Trajectory};
use divest_core::Params;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::seed::run_seed;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "DIVEST_WORKERS";

/// Worker count from `DIVEST_WORKERS`, else the available parallelism.
pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f(i)` for `i in 0..count` on the worker pool, in index order.
pub fn parallel_map<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers())
        .build()
        .expect("thread pool");
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

/// What an ensemble runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    pub params: Params,
    pub init: InitSpec,
    pub topology: Topology,
    pub runs: usize,
    pub master_seed: u64,
    pub t_end: f64,
    pub sample_dt: f64,
}

impl EnsembleSpec {
    pub fn seed(&self, index: usize) -> u64 {
        run_seed(self.master_seed, index)
    }

    /// Runs every member; the first failing run (by index) aborts the
    /// ensemble and is reported with its seed.
    pub fn run(&self) -> Result<Vec<Trajectory>> {
        let results = parallel_map(self.runs, |i| self.run_one(i));
        results.into_iter().collect()
    }

    pub fn run_one(&self, index: usize) -> Result<Trajectory> {
        let seed = self.seed(index);
        SimState::new(&self.params, &self.init, self.topology, seed)
            .and_then(|mut sim| sim.run_until(self.t_end, self.sample_dt))
            .map_err(|source| HarnessError::Run {
                index,
                seed,
                source,
            })
    }
}

/// Time-aligned mean, standard deviation and standard error of every
/// trajectory column.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    /// Column names, `Sample::COLUMNS` without `t`.
    pub columns: Vec<String>,
    /// `mean[column][time]`.
    pub mean: Vec<Vec<f64>>,
    pub sd: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub runs: usize,
}

impl EnsembleStats {
    /// Statistics over at least two trajectories sampled on one grid. The
    /// standard deviation uses the `runs - 1` denominator.
    pub fn from_runs(runs: &[Trajectory]) -> Result<Self> {
        if runs.len() < 2 {
            return Err(HarnessError::Config(
                "an ensemble needs at least two runs".into(),
            ));
        }
        let times = runs[0].times();
        for (i, r) in runs.iter().enumerate() {
            if r.times() != times {
                return Err(HarnessError::Config(format!(
                    "run {i} is sampled on a different grid"
                )));
            }
        }
        let ncol = Sample::COLUMNS.len() - 1;
        let k = runs.len() as f64;
        let mut mean = vec![vec![0.0; times.len()]; ncol];
        let mut sd = mean.clone();
        for (ti, _) in times.iter().enumerate() {
            let rows: Vec<[f64; 18]> = runs.iter().map(|r| r.samples[ti].values()).collect();
            for c in 0..ncol {
                let m = rows.iter().map(|v| v[c + 1]).sum::<f64>() / k;
                let var = rows.iter().map(|v| (v[c + 1] - m).powi(2)).sum::<f64>() / (k - 1.0);
                mean[c][ti] = m;
                sd[c][ti] = var.sqrt();
            }
        }
        let root = k.sqrt();
        let se = sd
            .iter()
            .map(|col| col.iter().map(|s| s / root).collect())
            .collect();
        Ok(EnsembleStats {
            times,
            columns: Sample::COLUMNS[1..].iter().map(|c| c.to_string()).collect(),
            mean,
            sd,
            se,
            runs: runs.len(),
        })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn mean_of(&self, name: &str) -> Option<&[f64]> {
        self.index(name).map(|k| self.mean[k].as_slice())
    }

    pub fn sd_of(&self, name: &str) -> Option<&[f64]> {
        self.index(name).map(|k| self.sd[k].as_slice())
    }

    pub fn se_of(&self, name: &str) -> Option<&[f64]> {
        self.index(name).map(|k| self.se[k].as_slice())
    }

    /// The mean of every column as a trajectory.
    pub fn mean_trajectory(&self) -> Trajectory {
        let samples = self
            .times
            .iter()
            .enumerate()
            .map(|(ti, &t)| {
                let mut v = [0.0; 18];
                v[0] = t;
                for c in 0..self.columns.len() {
                    v[c + 1] = self.mean[c][ti];
                }
                Sample::from_values(&v)
            })
            .collect();
        Trajectory { samples }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(runs: usize) -> EnsembleSpec {
        EnsembleSpec {
            params: Params {
                n: 30,
                ..Params::default()
            },
            init: InitSpec::default(),
            topology: Topology::Adaptive,
            runs,
            master_seed: 1,
            t_end: 5.0,
            sample_dt: 1.0,
        }
    }

    #[test]
    fn identical_runs_have_zero_spread() {
        let s = spec(1);
        let a = s.run_one(0).unwrap();
        let stats = EnsembleStats::from_runs(&[a.clone(), a.clone()]).unwrap();
        assert!(stats.sd.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(stats.mean_trajectory(), a);
    }

    #[test]
    fn standard_error_is_sd_over_root_runs() {
        let runs = spec(5).run().unwrap();
        let stats = EnsembleStats::from_runs(&runs).unwrap();
        for (sd, se) in stats.sd.iter().flatten().zip(stats.se.iter().flatten()) {
            assert!((se * 5f64.sqrt() - sd).abs() <= 1e-12 * sd.abs());
        }
        assert_eq!(stats.columns.len(), 17);
        assert_eq!(stats.runs, 5);
    }

    #[test]
    fn results_do_not_depend_on_the_worker_count() {
        let s = spec(4);
        let parallel = s.run().unwrap();
        let serial: Vec<_> = (0..4).map(|i| s.run_one(i).unwrap()).collect();
        assert_eq!(parallel, serial);
    }

    #[test]
    fn a_single_run_is_not_an_ensemble() {
        let a = spec(1).run_one(0).unwrap();
        assert!(EnsembleStats::from_runs(&[a]).is_err());
    }
}
