//! The experiments behind each subcommand, with their output files.

use std::path::{Path, PathBuf};

use divest_core::continuation::{Branch, CuspScan};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::compare::{self, ComparisonSpec};
use crate::config::RunConfig;
use crate::ensemble::EnsembleStats;
use crate::error::Result;
use crate::experiments::{self, EnsembleSummary, SweepPoint};
use crate::io::{self, Manifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// One agent-based run, member `index` of the configured ensemble.
    AbmRun {
        index: usize,
    },
    AbmEnsemble,
    /// Macro ODE trajectory; with `pbp`, also an ensemble of the reduced
    /// jump process.
    MacroRun {
        pbp: bool,
    },
    /// Ensemble against macro trajectory. With `from`, the comparison is
    /// recomputed from the trajectories stored in that directory.
    Compare {
        from: Option<PathBuf>,
    },
    Continue,
    Cusp,
    SweepPhi {
        keep_runs: bool,
    },
    WellMixed {
        keep_runs: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::AbmRun { .. } => "abm-run",
            Command::AbmEnsemble => "abm-ensemble",
            Command::MacroRun { .. } => "macro-run",
            Command::Compare { .. } => "compare",
            Command::Continue => "continue",
            Command::Cusp => "cusp",
            Command::SweepPhi { .. } => "sweep-phi",
            Command::WellMixed { .. } => "well-mixed",
        }
    }
}

/// Files written and a human-readable summary.
pub struct Outcome {
    pub manifest: Manifest,
    pub lines: Vec<String>,
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Out<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn runs(&mut self, sub: &str, runs: &[divest_core::trajectory::Trajectory]) -> Result<()> {
        io::write_runs(&self.dir.join(sub), runs)?;
        self.files.push(format!("{sub}/run_*.csv ({})", runs.len()));
        Ok(())
    }
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or("none".to_string(), |t| format!("{t:.2}"))
}

/// Runs `cmd` with `cfg`, writing into `cfg.run.output` and finishing with
/// `manifest.json`.
pub fn execute(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    let dir = cfg.run.output.clone();
    io::ensure_dir(&dir)?;
    let mut out = Out {
        dir: &dir,
        files: Vec::new(),
    };
    let mut lines = Vec::new();
    match cmd {
        Command::AbmRun { index } => {
            let spec = experiments::ensemble_spec(cfg);
            let traj = spec.run_one(*index)?;
            io::write_trajectory(&out.path("trajectory.csv"), &traj)?;
            let t = compare::transition_time(&traj, 0.5);
            lines.push(format!(
                "seed {}: transition at {}",
                spec.seed(*index),
                fmt_time(t)
            ));
        }
        Command::AbmEnsemble => {
            let runs = experiments::ensemble_spec(cfg).run()?;
            let stats = EnsembleStats::from_runs(&runs)?;
            out.runs("runs", &runs)?;
            io::write_stats(&out.path("stats.csv"), &stats)?;
            let summary = experiments::summarise(cfg.social.phi, cfg.run.topology, &runs, &stats);
            io::write_json(&out.path("summary.json"), &summary)?;
            lines.push(summary_line(&summary));
        }
        Command::MacroRun { pbp } => {
            let traj = experiments::macro_trajectory(cfg)?;
            io::write_trajectory(&out.path("macro.csv"), &traj)?;
            lines.push(format!(
                "macro transition at {}",
                fmt_time(compare::transition_time(&traj, 0.5))
            ));
            if *pbp {
                let runs = experiments::pbp_ensemble(cfg)?;
                out.runs("pbp", &runs)?;
                if runs.len() >= 2 {
                    let stats = EnsembleStats::from_runs(&runs)?;
                    io::write_stats(&out.path("pbp_stats.csv"), &stats)?;
                }
            }
        }
        Command::Compare { from } => {
            let spec = ComparisonSpec::default();
            let report = match from {
                Some(src) => {
                    let runs = io::read_runs(&src.join("runs"))?;
                    let macro_traj = io::read_trajectory(&src.join("macro.csv"))?;
                    compare::compare(&runs, &macro_traj, &spec)?
                }
                None => {
                    let c = experiments::compare_micro_macro(cfg, &spec)?;
                    out.runs("runs", &c.runs)?;
                    io::write_stats(&out.path("stats.csv"), &c.stats)?;
                    io::write_trajectory(&out.path("macro.csv"), &c.macro_traj)?;
                    c.report
                }
            };
            io::write_json(&out.path("comparison.json"), &report)?;
            for w in &report.windows {
                lines.push(format!(
                    "{:>4} t in [{}, {}]: macro {:.4e} abm {:.4e} +- {:.2e} se ({:.2} se) {}",
                    w.variable,
                    w.window.0,
                    w.window.1,
                    w.macro_value,
                    w.abm_mean,
                    w.abm_se,
                    w.deviation,
                    if w.within { "within" } else { "outside" }
                ));
            }
            lines.push(format!(
                "transition: abm {} macro {} lead {}",
                fmt_time(report.abm_transition),
                fmt_time(report.macro_transition),
                report
                    .macro_lead
                    .map_or("none".into(), |l| format!("{:.1}%", 100.0 * l))
            ));
            lines.push(format!(
                "quasi-equilibria {} the {}-SE band",
                if report.within_band {
                    "within"
                } else {
                    "outside"
                },
                report.band
            ));
        }
        Command::Continue => {
            let branch = experiments::gamma_branch(cfg)?;
            write_branch(&out.path("branch.csv"), &branch)?;
            let folds: Vec<_> = branch
                .folds
                .iter()
                .map(|f| json!({"gamma": f.param, "x": f.state[0], "critical_eig": f.critical_eig}))
                .collect();
            io::write_json(
                &out.path("folds.json"),
                &json!({"b_d": cfg.econ.b_d, "stop": format!("{:?}", branch.stop), "folds": folds}),
            )?;
            lines.push(format!(
                "{} points, {} folds",
                branch.points.len(),
                branch.folds.len()
            ));
            for f in &branch.folds {
                lines.push(format!(
                    "fold at gamma = {:.8}, x = {:.5}",
                    f.param, f.state[0]
                ));
            }
        }
        Command::Cusp => {
            let scan = experiments::cusp_scan(cfg)?;
            write_slices(&out.path("slices.csv"), &scan)?;
            let cusp = scan
                .cusp
                .map(|c| json!({"gamma": c.gamma, "b_d": c.b_d, "x": c.state[0]}));
            io::write_json(&out.path("cusp.json"), &json!({"cusp": cusp}))?;
            lines.push(match scan.cusp {
                Some(c) => format!("cusp at b_d = {:.4}, gamma = {:.5}", c.b_d, c.gamma),
                None => "no cusp in the scanned grid".into(),
            });
        }
        Command::SweepPhi { keep_runs } => {
            let points = experiments::sweep_phi(cfg)?;
            write_sweep(&mut out, &points, *keep_runs, "")?;
            let summaries: Vec<&EnsembleSummary> = points.iter().map(|p| &p.summary).collect();
            io::write_json(&out.path("sweep.json"), &summaries)?;
            lines.extend(summaries.iter().map(|s| summary_line(s)));
        }
        Command::WellMixed { keep_runs } => {
            let mut comparisons = Vec::new();
            for &phi in &cfg.scan.phi_grid {
                let point = experiments::compare_topologies(cfg, phi)?;
                write_sweep(
                    &mut out,
                    std::slice::from_ref(&point.adaptive),
                    *keep_runs,
                    "adaptive_",
                )?;
                write_sweep(
                    &mut out,
                    std::slice::from_ref(&point.well_mixed),
                    *keep_runs,
                    "well_mixed_",
                )?;
                let c = &point.comparison;
                lines.push(format!(
                    "phi {phi}: transition adaptive {} well-mixed {}; max n_c gap {:.2} se at t = {}",
                    fmt_time(c.adaptive.transition),
                    fmt_time(c.well_mixed.transition),
                    c.max_n_c_deviation,
                    c.max_deviation_at
                ));
                comparisons.push(point.comparison);
            }
            io::write_json(&out.path("well_mixed.json"), &comparisons)?;
        }
    }
    let mut manifest = Manifest::new(
        cmd.name(),
        serde_json::to_value(cmd).expect("serialisable"),
        cfg.to_toml(),
    );
    manifest.outputs = out.files;
    io::write_json(&dir.join(io::MANIFEST), &manifest)?;
    Ok(Outcome { manifest, lines })
}

/// Re-runs the command recorded in a manifest. With `output`, the results
/// go to that directory instead of the recorded one.
pub fn replay(manifest: &Path, output: Option<&Path>) -> Result<Outcome> {
    let m: Manifest = io::read_json(manifest)?;
    let mut cfg = RunConfig::from_toml(&m.config)?;
    if let Some(dir) = output {
        cfg.run.output = dir.to_path_buf();
    }
    let cmd: Command = serde_json::from_value(m.options.clone())
        .map_err(|e| crate::HarnessError::data(manifest, e))?;
    execute(&cmd, &cfg)
}

fn summary_line(s: &EnsembleSummary) -> String {
    format!(
        "phi {} ({:?}, {} runs): transition {} ({} runs crossed), min [cd]/M {:.4}, final n_c {:.3}",
        s.phi,
        s.topology,
        s.runs,
        fmt_time(s.transition),
        s.crossed,
        s.min_cd_fraction,
        s.final_n_c
    )
}

fn write_sweep(out: &mut Out, points: &[SweepPoint], keep_runs: bool, prefix: &str) -> Result<()> {
    for p in points {
        let sub = format!("{prefix}phi_{}", p.summary.phi);
        io::ensure_dir(&out.dir.join(&sub))?;
        io::write_stats(&out.path(&format!("{sub}/stats.csv")), &p.stats)?;
        if keep_runs {
            out.runs(&format!("{sub}/runs"), &p.runs)?;
        }
    }
    Ok(())
}

fn write_branch(path: &Path, branch: &Branch) -> Result<()> {
    let header = [
        "gamma",
        "x",
        "y",
        "z",
        "Kcc",
        "Kcd",
        "Kdc",
        "Kdd",
        "C",
        "max_re_eig",
        "stable",
        "arclength",
        "tangent_param",
    ]
    .map(String::from);
    let rows = branch.points.iter().map(|p| {
        let mut row = vec![p.param];
        row.extend(p.state);
        row.extend([
            p.max_re_eig,
            if p.stable { 1.0 } else { 0.0 },
            p.arclength,
            p.tangent_param,
        ]);
        row
    });
    io::write_table(path, &header, rows)
}

fn write_slices(path: &Path, scan: &CuspScan) -> Result<()> {
    let header = [
        "b_d",
        "folds",
        "fold_hi",
        "fold_lo",
        "min_tangent",
        "gamma_at_min",
    ]
    .map(String::from);
    let rows = scan.slices.iter().map(|s| {
        vec![
            s.b_d,
            s.folds.len() as f64,
            s.folds.first().copied().unwrap_or(f64::NAN),
            s.folds.get(1).copied().unwrap_or(f64::NAN),
            s.min_tangent,
            s.gamma_at_min,
        ]
    });
    io::write_table(path, &header, rows)
}
