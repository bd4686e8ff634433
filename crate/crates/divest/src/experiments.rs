//! Experiment drivers shared by the command line and the tests.

use divest_core::abm::{SimState, Topology};
use divest_core::continuation::{self, Branch, ContinuationOptions, CuspScan, FrozenSystem, Param};
use divest_core::macro_approx::{
    integrate_macro, micro_to_macro, simulate_pbp, MacroModel, MacroState,
};
use divest_core::trajectory::Trajectory;
use serde::{Deserialize, Serialize};

use crate::compare::{
    self, lasting_crossing, min_discordant_fraction, ComparisonReport, ComparisonSpec,
};
use crate::config::RunConfig;
use crate::ensemble::{parallel_map, EnsembleSpec, EnsembleStats};
use crate::error::{HarnessError, Result};
use crate::seed::{run_seed, splitmix64};

pub fn ensemble_spec(cfg: &RunConfig) -> EnsembleSpec {
    EnsembleSpec {
        params: cfg.params(),
        init: cfg.init,
        topology: cfg.run.topology,
        runs: cfg.run.runs,
        master_seed: cfg.run.seed,
        t_end: cfg.run.t_end,
        sample_dt: cfg.run.sample_dt,
    }
}

/// Macro initial condition drawn like the agent-based ones: the average
/// of the reduced initial states of the ensemble members (random graph and
/// strategy assignment per run seed). Also returns the mean realised links
/// per household.
pub fn macro_initial_state(cfg: &RunConfig) -> Result<(MacroState, f64)> {
    let p = cfg.params();
    let runs = cfg.run.runs;
    let mut acc = [0.0; 9];
    let mut m = 0.0;
    for i in 0..runs {
        let sim = SimState::new(&p, &cfg.init, Topology::Adaptive, run_seed(cfg.run.seed, i))?;
        m += sim.net.n_links() as f64 / p.n as f64;
        for (a, v) in acc.iter_mut().zip(micro_to_macro(&sim).to_array()) {
            *a += v;
        }
    }
    let k = runs as f64;
    let mean: Vec<f64> = acc.iter().map(|a| a / k).collect();
    Ok((MacroState::from_slice(&mean), m / k))
}

pub fn macro_model(cfg: &RunConfig, m: f64) -> Result<MacroModel> {
    Ok(MacroModel::new(&cfg.params())?
        .with_form(cfg.macro_.form)
        .with_income(cfg.macro_.income)
        .with_links_per_household(m))
}

/// Deterministic macro trajectory from the initial condition of
/// [`macro_initial_state`].
pub fn macro_trajectory(cfg: &RunConfig) -> Result<Trajectory> {
    let (init, m) = macro_initial_state(cfg)?;
    let model = macro_model(cfg, m)?;
    Ok(integrate_macro(
        &init,
        &model,
        cfg.run.t_end,
        cfg.run.sample_dt,
    )?)
}

/// Ensemble of the reduced jump process, each member from its own sampled
/// initial graph.
pub fn pbp_ensemble(cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    let results = parallel_map(cfg.run.runs, |i| -> Result<Trajectory> {
        let seed = run_seed(cfg.run.seed, i);
        let run = || -> divest_core::Result<Trajectory> {
            let p = cfg.params();
            let sim = SimState::new(&p, &cfg.init, Topology::Adaptive, seed)?;
            let m = sim.net.n_links() as f64 / p.n as f64;
            let model = MacroModel::new(&p)?
                .with_form(cfg.macro_.form)
                .with_income(cfg.macro_.income)
                .with_links_per_household(m);
            simulate_pbp(
                &micro_to_macro(&sim),
                &model,
                cfg.run.t_end,
                cfg.run.sample_dt,
                splitmix64(seed),
            )
        };
        run().map_err(|source| HarnessError::Run {
            index: i,
            seed,
            source,
        })
    });
    results.into_iter().collect()
}

/// Agent-based ensemble and macro trajectory compared.
pub struct Comparison {
    pub runs: Vec<Trajectory>,
    pub stats: EnsembleStats,
    pub macro_traj: Trajectory,
    pub report: ComparisonReport,
}

pub fn compare_micro_macro(cfg: &RunConfig, spec: &ComparisonSpec) -> Result<Comparison> {
    let runs = ensemble_spec(cfg).run()?;
    let stats = EnsembleStats::from_runs(&runs)?;
    let macro_traj = macro_trajectory(cfg)?;
    let report = compare::compare(&runs, &macro_traj, spec)?;
    Ok(Comparison {
        runs,
        stats,
        macro_traj,
        report,
    })
}

/// Summary of one ensemble for parameter sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub phi: f64,
    pub topology: Topology,
    pub runs: usize,
    /// Transition time of the ensemble-mean clean share.
    pub transition: Option<f64>,
    /// Mean of the per-run transition times over the runs that crossed.
    pub mean_run_transition: Option<f64>,
    pub crossed: usize,
    /// Mean over runs of the smallest discordant-link fraction.
    pub min_cd_fraction: f64,
    /// Clean share of the ensemble mean at the final sample.
    pub final_n_c: f64,
}

pub fn summarise(
    phi: f64,
    topology: Topology,
    runs: &[Trajectory],
    stats: &EnsembleStats,
) -> EnsembleSummary {
    let n_c = stats.mean_of("n_c").expect("n_c column");
    let crossings: Vec<f64> = runs
        .iter()
        .filter_map(|r| compare::transition_time(r, 0.5))
        .collect();
    EnsembleSummary {
        phi,
        topology,
        runs: runs.len(),
        transition: lasting_crossing(&stats.times, n_c, 0.5),
        mean_run_transition: (!crossings.is_empty())
            .then(|| crossings.iter().sum::<f64>() / crossings.len() as f64),
        crossed: crossings.len(),
        min_cd_fraction: runs.iter().map(min_discordant_fraction).sum::<f64>() / runs.len() as f64,
        final_n_c: *n_c.last().expect("samples"),
    }
}

pub struct SweepPoint {
    pub summary: EnsembleSummary,
    pub runs: Vec<Trajectory>,
    pub stats: EnsembleStats,
}

/// One ensemble per rewiring probability in `scan.phi_grid`, on the
/// configured topology.
pub fn sweep_phi(cfg: &RunConfig) -> Result<Vec<SweepPoint>> {
    cfg.scan
        .phi_grid
        .iter()
        .map(|&phi| phi_ensemble(cfg, phi, cfg.run.topology))
        .collect()
}

pub fn phi_ensemble(cfg: &RunConfig, phi: f64, topology: Topology) -> Result<SweepPoint> {
    let mut c = cfg.clone();
    c.social.phi = phi;
    c.run.topology = topology;
    c.validate()?;
    let runs = ensemble_spec(&c).run()?;
    let stats = EnsembleStats::from_runs(&runs)?;
    Ok(SweepPoint {
        summary: summarise(phi, topology, &runs, &stats),
        runs,
        stats,
    })
}

/// Adaptive against fully connected ensembles at one rewiring probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyComparison {
    pub phi: f64,
    pub adaptive: EnsembleSummary,
    pub well_mixed: EnsembleSummary,
    /// Largest `|mean_a - mean_w| / sqrt(se_a^2 + se_w^2)` of the clean
    /// share over the sample grid.
    pub max_n_c_deviation: f64,
    /// Time of that largest deviation.
    pub max_deviation_at: f64,
}

pub struct TopologyPoint {
    pub comparison: TopologyComparison,
    pub adaptive: SweepPoint,
    pub well_mixed: SweepPoint,
}

pub fn compare_topologies(cfg: &RunConfig, phi: f64) -> Result<TopologyPoint> {
    let adaptive = phi_ensemble(cfg, phi, Topology::Adaptive)?;
    let well_mixed = phi_ensemble(cfg, phi, Topology::WellMixed)?;
    let (a, w) = (&adaptive.stats, &well_mixed.stats);
    let (ma, mw) = (a.mean_of("n_c").unwrap(), w.mean_of("n_c").unwrap());
    let (sa, sw) = (a.se_of("n_c").unwrap(), w.se_of("n_c").unwrap());
    let mut worst = (0.0, 0.0);
    for t in 0..a.times.len() {
        let se = (sa[t] * sa[t] + sw[t] * sw[t]).sqrt();
        let d = (ma[t] - mw[t]).abs();
        let z = if se > 0.0 {
            d / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if z > worst.0 {
            worst = (z, a.times[t]);
        }
    }
    Ok(TopologyPoint {
        comparison: TopologyComparison {
            phi,
            adaptive: adaptive.summary.clone(),
            well_mixed: well_mixed.summary.clone(),
            max_n_c_deviation: worst.0,
            max_deviation_at: worst.1,
        },
        adaptive,
        well_mixed,
    })
}

pub fn continuation_options(cfg: &RunConfig) -> ContinuationOptions {
    ContinuationOptions {
        ds: cfg.scan.ds,
        ds_max: cfg.scan.ds_max,
        ..ContinuationOptions::default()
    }
}

pub fn frozen_system(cfg: &RunConfig) -> Result<FrozenSystem> {
    let model = macro_model(cfg, cfg.params().links_per_household())?;
    Ok(FrozenSystem::new(model, Param::Gamma))
}

/// Steady-state branch in `gamma` at the configured dirty productivity.
pub fn gamma_branch(cfg: &RunConfig) -> Result<Branch> {
    let sys = frozen_system(cfg)?;
    Ok(continuation::gamma_branch(
        &sys,
        cfg.econ.b_d,
        cfg.scan.gamma_min,
        cfg.scan.gamma_max,
        &continuation_options(cfg),
    )?)
}

pub fn cusp_scan(cfg: &RunConfig) -> Result<CuspScan> {
    let sys = frozen_system(cfg)?;
    Ok(continuation::cusp_scan(
        &sys,
        (cfg.scan.gamma_min, cfg.scan.gamma_max),
        &cfg.scan.b_d_grid,
        &continuation_options(cfg),
    )?)
}

/// Expected initial macro state of the configured initial condition: strategy
/// shares and link fractions of independent assignments, `m` links per
/// household.
pub fn expected_initial_state(cfg: &RunConfig) -> MacroState {
    let p = cfg.params();
    let q = cfg.init.clean_probability;
    let n = p.n as f64;
    MacroState {
        x: 2.0 * q - 1.0,
        y: q * q - (1.0 - q) * (1.0 - q),
        z: 2.0 * q * (1.0 - q),
        kcc: q * n * cfg.init.k_c,
        kcd: (1.0 - q) * n * cfg.init.k_c,
        kdc: q * n * cfg.init.k_d,
        kdd: (1.0 - q) * n * cfg.init.k_d,
        c: cfg.init.c,
        g: cfg.init.g_fraction * p.g0,
    }
}

/// One system size of the proxy-process convergence ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub n: usize,
    pub runs: usize,
    /// Root mean square distance between the ensemble-mean and the ODE
    /// clean share over the window.
    pub n_c_error: f64,
    /// Same for the discordant-link fraction.
    pub cd_error: f64,
}

/// Ensembles of the reduced jump process at each system size against the
/// ODE of the same size, both from [`expected_initial_state`], over
/// `[0, t_window]`. Size `n` uses `runs_per_household * n` runs, so that the
/// sampling error of the mean shrinks like the finite-size bias, `1/n`.
pub fn pbp_ladder(
    cfg: &RunConfig,
    sizes: &[usize],
    runs_per_household: f64,
    t_window: f64,
) -> Result<Vec<LadderRung>> {
    let mut out = Vec::new();
    for &n in sizes {
        let runs = ((runs_per_household * n as f64).round() as usize).max(2);
        let mut c = cfg.clone();
        c.social.n = n;
        c.validate()?;
        let init = expected_initial_state(&c);
        let model = macro_model(&c, c.params().links_per_household())?;
        let ode = integrate_macro(&init, &model, t_window, c.run.sample_dt)?;
        let trajs = parallel_map(runs, |i| {
            let seed = run_seed(c.run.seed ^ n as u64, i);
            simulate_pbp(&init, &model, t_window, c.run.sample_dt, seed).map_err(|source| {
                HarnessError::Run {
                    index: i,
                    seed,
                    source,
                }
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let k = runs as f64;
        let rms = |f: fn(&divest_core::trajectory::Sample) -> f64| {
            let sq: f64 = ode
                .samples
                .iter()
                .enumerate()
                .map(|(t, s)| {
                    let mean = trajs.iter().map(|r| f(&r.samples[t])).sum::<f64>() / k;
                    (mean - f(s)).powi(2)
                })
                .sum();
            (sq / ode.len() as f64).sqrt()
        };
        out.push(LadderRung {
            n,
            runs,
            n_c_error: rms(|s| s.n_c),
            cd_error: rms(|s| s.cd_fraction()),
        });
    }
    Ok(out)
}
