//! The run configuration file: one JSON document with optional blocks.

use std::path::Path;

use serde::Deserialize;

use graph_eikonal::geometry::{DomainSpec, NodeFunctions};
use graph_eikonal::harness::ExperimentConfig;
use graph_eikonal::kernel::ProfileConfig;
use graph_eikonal::solver::{CflPolicy, ImplicitMode, Scheme};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Option<DomainSpec>,
    pub functions: Option<NodeFunctions>,
    pub kernel: Option<ProfileConfig>,
    #[serde(default)]
    pub sampling: SamplingBlock,
    #[serde(default)]
    pub scheme: SchemeBlock,
    pub experiment: Option<ExperimentConfig>,
}

/// Graph parameters; `eps` wins over `eps_factor`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingBlock {
    pub n: Option<usize>,
    pub nu: Option<f64>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    pub eps_factor: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeBlock {
    pub scheme: Option<Scheme>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub cfl_policy: Option<CflPolicy>,
    pub implicit_tol: Option<f64>,
    pub implicit_max_sweeps: Option<usize>,
    pub implicit_mode: Option<ImplicitMode>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, String> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
