//! Named experiment configurations.

use divest_core::abm::Topology;

use crate::config::RunConfig;

pub const NAMES: [&str; 6] = [
    "transition",
    "micro-macro",
    "well-mixed",
    "phi-sweep",
    "bifurcation",
    "cusp",
];

/// Configuration of a named experiment, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<RunConfig> {
    let mut cfg = RunConfig::default();
    cfg.run.preset = Some(name.to_string());
    cfg.run.output = format!("out/{name}").into();
    match name {
        // example trajectory: 100 runs from unit endowments
        "transition" => cfg.run.runs = 100,
        // micro/macro comparison: 50 runs, smaller resource and knowledge
        "micro-macro" => {
            cfg.run.runs = 50;
            cfg.econ.g0 = 5e5;
            cfg.init.c = 0.5;
        }
        // adaptive against fully connected network
        "well-mixed" => {
            cfg.run.runs = 50;
            cfg.scan.phi_grid = vec![0.5, 0.9];
        }
        // fragmentation under increasing rewiring
        "phi-sweep" => {
            cfg.run.runs = 200;
            cfg.scan.phi_grid = vec![0.3, 0.5, 0.7, 0.9];
        }
        "bifurcation" => {
            cfg.run.runs = 1;
            cfg.econ.b_d = 4.0;
        }
        "cusp" => {
            cfg.run.runs = 1;
            cfg.scan.b_d_grid = vec![1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 3.5, 4.0];
        }
        _ => return None,
    }
    cfg.run.topology = Topology::Adaptive;
    Some(cfg)
}
