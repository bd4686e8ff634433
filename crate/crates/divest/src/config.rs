//! Run configuration.
//!
//! A configuration is a TOML document whose keys are grouped under `run`,
//! `econ`, `social`, `init`, `macro` and `scan`. Keys may be written as
//! tables or flat (`econ.b_d = 4.0`). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use divest_core::abm::{InitSpec, Topology};
use divest_core::macro_approx::{IncomeDifference, RhsForm};
use divest_core::Params;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::presets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Preset the configuration was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub runs: usize,
    pub seed: u64,
    pub t_end: f64,
    pub sample_dt: f64,
    pub topology: Topology,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconSection {
    pub b_c: f64,
    pub b_d: f64,
    pub b_r: f64,
    pub e: f64,
    pub kappa: f64,
    pub chi: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta_c: f64,
    pub beta_d: f64,
    pub g0: f64,
    pub l_total: f64,
    pub s: f64,
    pub rho: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SocialSection {
    pub n: usize,
    pub mean_degree: f64,
    pub phi: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroSection {
    pub form: RhsForm,
    pub income: IncomeDifference,
}

/// Ranges for continuation and parameter sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub b_d_grid: Vec<f64>,
    pub phi_grid: Vec<f64>,
    pub ds: f64,
    pub ds_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub econ: EconSection,
    pub social: SocialSection,
    pub init: InitSpec,
    #[serde(rename = "macro")]
    pub macro_: MacroSection,
    pub scan: ScanSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_params(&Params::default())
    }
}

impl RunConfig {
    pub fn from_params(p: &Params) -> Self {
        RunConfig {
            run: RunSection {
                preset: None,
                runs: 10,
                seed: 42,
                t_end: 500.0,
                sample_dt: 1.0,
                topology: Topology::Adaptive,
                output: PathBuf::from("out"),
            },
            econ: EconSection {
                b_c: p.b_c,
                b_d: p.b_d,
                b_r: p.b_r,
                e: p.e,
                kappa: p.kappa,
                chi: p.chi,
                gamma: p.gamma,
                alpha: p.alpha,
                beta_c: p.beta_c,
                beta_d: p.beta_d,
                g0: p.g0,
                l_total: p.l_total,
                s: p.s,
                rho: p.rho,
                mu: p.mu,
            },
            social: SocialSection {
                n: p.n,
                mean_degree: p.mean_degree,
                phi: p.phi,
                tau: p.tau,
                epsilon: p.epsilon,
                a: p.a,
            },
            init: InitSpec::default(),
            macro_: MacroSection {
                form: RhsForm::default(),
                income: IncomeDifference::default(),
            },
            scan: ScanSection {
                gamma_min: 0.0,
                gamma_max: 0.2,
                b_d_grid: vec![1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 3.5, 4.0],
                phi_grid: vec![0.3, 0.5, 0.7, 0.9],
                ds: 0.01,
                ds_max: 0.05,
            },
        }
    }

    pub fn params(&self) -> Params {
        let (e, s) = (&self.econ, &self.social);
        Params {
            n: s.n,
            mean_degree: s.mean_degree,
            b_c: e.b_c,
            b_d: e.b_d,
            b_r: e.b_r,
            e: e.e,
            kappa: e.kappa,
            chi: e.chi,
            gamma: e.gamma,
            alpha: e.alpha,
            beta_c: e.beta_c,
            beta_d: e.beta_d,
            phi: s.phi,
            tau: s.tau,
            epsilon: s.epsilon,
            g0: e.g0,
            l_total: e.l_total,
            s: e.s,
            rho: e.rho,
            mu: e.mu,
            a: s.a,
        }
    }

    pub fn set_params(&mut self, p: &Params) {
        let run = self.run.clone();
        let rest = RunConfig::from_params(p);
        self.econ = rest.econ;
        self.social = rest.social;
        self.run = run;
    }

    /// Checks the model parameters, the initial condition and the run
    /// settings.
    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        self.init.validate()?;
        let r = &self.run;
        if !(r.t_end > 0.0 && r.sample_dt > 0.0 && r.sample_dt <= r.t_end) {
            return Err(config(
                "run.t_end and run.sample_dt must satisfy 0 < sample_dt <= t_end",
            ));
        }
        if r.runs == 0 {
            return Err(config("run.runs must be at least 1"));
        }
        if r.seed > i64::MAX as u64 {
            return Err(config("run.seed must fit in a signed 64-bit integer"));
        }
        let s = &self.scan;
        if !(s.gamma_min < s.gamma_max && s.ds > 0.0 && s.ds_max >= s.ds) {
            return Err(config("scan ranges are inconsistent"));
        }
        Ok(())
    }

    /// Parses a TOML document.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config(e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the configuration as flat dotted keys.
    pub fn to_toml(&self) -> String {
        let value = toml::Value::try_from(self).expect("configuration serialises");
        let mut out = String::new();
        flatten(&value, "", &mut out);
        out
    }

    /// Loads a preset by name or a configuration file by path, then applies
    /// `key=value` overrides. Override values are TOML literals; bare words
    /// that do not parse are taken as strings.
    pub fn resolve(source: &str, overrides: &[String]) -> Result<Self> {
        let base = match presets::preset(source) {
            Some(cfg) => cfg,
            None => {
                let text = std::fs::read_to_string(source)
                    .map_err(|e| config(format!("{source}: not a preset and unreadable ({e})")))?;
                RunConfig::from_toml(&text)?
            }
        };
        base.with_overrides(overrides)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut value = toml::Value::try_from(self).expect("configuration serialises");
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| config(format!("override `{item}` is not key=value")))?;
            set_dotted(&mut value, key.trim(), parse_literal(raw.trim()))?;
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| config(e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn config(msg: impl ToString) -> HarnessError {
    HarnessError::Config(msg.to_string())
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| config("empty override key"))?;
    let mut node = root;
    for part in parts {
        node = node
            .as_table_mut()
            .and_then(|t| t.get_mut(part))
            .ok_or_else(|| config(format!("unknown key `{key}`")))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| config(format!("unknown key `{key}`")))?;
    // optional keys (run.preset) may be absent; anything else must exist
    if !table.contains_key(last) && !(key == "run.preset") {
        return Err(config(format!("unknown key `{key}`")));
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn flatten(value: &toml::Value, prefix: &str, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(v, &key, out);
            }
            if !prefix.contains('.') && !prefix.is_empty() {
                out.push('\n');
            }
        }
        v => {
            out.push_str(prefix);
            out.push_str(" = ");
            out.push_str(&v.to_string());
            out.push('\n');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let mut cfg = RunConfig::default();
        cfg.econ.gamma = 0.1 + 1e-17;
        cfg.econ.b_d = 1.0 / 3.0;
        cfg.run.preset = Some("transition".into());
        let text = cfg.to_toml();
        assert!(text.contains("econ.b_d = "), "{text}");
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = RunConfig::default().to_toml() + "econ.bogus = 1.0\n";
        assert!(matches!(
            RunConfig::from_toml(&text),
            Err(HarnessError::Config(_))
        ));
        let err = RunConfig::default().with_overrides(&["social.nope=3".into()]);
        assert!(matches!(err, Err(HarnessError::Config(_))));
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::default()
            .with_overrides(&[
                "econ.b_d=2.5".into(),
                "social.phi = 0.9".into(),
                "run.topology=well-mixed".into(),
                "scan.phi_grid=[0.1, 0.2]".into(),
            ])
            .unwrap();
        assert_eq!(cfg.econ.b_d, 2.5);
        assert_eq!(cfg.social.phi, 0.9);
        assert_eq!(cfg.run.topology, Topology::WellMixed);
        assert_eq!(cfg.scan.phi_grid, [0.1, 0.2]);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = RunConfig::default()
            .with_overrides(&["social.phi=1.5".into()])
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::default()
            .with_overrides(&["econ.b_d=\"x\"".into()])
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn params_round_trip() {
        let p = Params {
            phi: 0.7,
            n: 77,
            ..Params::default()
        };
        assert_eq!(RunConfig::from_params(&p).params(), p);
    }
}
