use serde::{Deserialize, Serialize};

use crate::geometry::{DomainSpec, NodeFunctions};
use crate::graph::SamplingConfig;
use crate::kernel::ProfileConfig;
use crate::solver::{Scheme, SchemeConfig};

use super::HarnessError;

/// Test case of a convergence study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// `Ω = [0, 1]`, `Γ = {0, 1}`, `P ≡ 1`, `ψ ≡ 0`.
    #[serde(rename = "canonical-1d")]
    Canonical1D,
    /// Unit square with `Γ = ∂Ω`, `P ≡ 1`, `ψ ≡ 0`.
    #[serde(rename = "canonical-2d")]
    Canonical2D,
    /// Unit box with `Γ = ∂Ω`, `P(x) = 1 + |x - c| / 2` around the centre,
    /// `ψ ≡ 0`.
    #[serde(rename = "nonconstant-p")]
    NonconstantP,
}

impl Case {
    pub fn name(&self) -> &'static str {
        match self {
            Case::Canonical1D => "canonical-1d",
            Case::Canonical2D => "canonical-2d",
            Case::NonconstantP => "nonconstant-p",
        }
    }

    pub fn from_name(s: &str) -> Option<Case> {
        match s {
            "canonical-1d" => Some(Case::Canonical1D),
            "canonical-2d" => Some(Case::Canonical2D),
            "nonconstant-p" => Some(Case::NonconstantP),
            _ => None,
        }
    }

    pub fn domain(&self, m: usize) -> DomainSpec {
        DomainSpec::unit_box(m)
    }

    pub fn functions(&self, m: usize) -> NodeFunctions {
        match self {
            Case::Canonical1D | Case::Canonical2D => NodeFunctions::canonical(),
            Case::NonconstantP => NodeFunctions::cone(vec![0.5; m]),
        }
    }

    pub fn is_canonical(&self) -> bool {
        !matches!(self, Case::NonconstantP)
    }
}

/// Time step as a function of the graph scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DtRule {
    /// `Δt = η ε C_g / sup g`.
    CflFraction { eta: f64 },
    /// `Δt = c ε^p`.
    EpsPower { c: f64, p: f64 },
}

impl Default for DtRule {
    fn default() -> Self {
        DtRule::EpsPower { c: 0.25, p: 1.5 }
    }
}

impl DtRule {
    pub fn dt(&self, eps: f64, c_g: f64, sup_g: f64) -> f64 {
        match *self {
            DtRule::CflFraction { eta } => eta * eps * c_g / sup_g,
            DtRule::EpsPower { c, p } => c * eps.powf(p),
        }
    }
}

/// How `ε` is chosen for each `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EpsMode {
    /// The scaling law `ε_n`, multiplied by `factor`.
    TheoremLaw {
        #[serde(default = "one")]
        factor: f64,
    },
    /// One `ε` per entry of `n_list`.
    Manual { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl Default for EpsMode {
    fn default() -> Self {
        EpsMode::TheoremLaw { factor: 1.0 }
    }
}

fn default_nu() -> f64 {
    0.5
}

fn default_tau() -> f64 {
    1.0
}

fn default_scheme() -> Scheme {
    Scheme::Forward
}

fn default_implicit_tol() -> f64 {
    1e-12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: Case,
    /// Dimension for `nonconstant-p`; the canonical cases fix it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub n_list: Vec<usize>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub dt_rule: DtRule,
    #[serde(rename = "T", default = "one")]
    pub horizon: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub eps_mode: EpsMode,
    #[serde(default)]
    pub kernel: ProfileConfig,
    /// Times at which the error is measured; every step when absent for the
    /// canonical cases, quarters of `T` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<f64>>,
    /// Uniform noise of this amplitude added to `P̃` (clamped at 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential_noise: Option<f64>,
    /// Grid spacing of the upwind reference for `nonconstant-p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_spacing: Option<f64>,
    #[serde(default = "default_implicit_tol")]
    pub implicit_tol: f64,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the case and sizes.
    pub fn new(case: Case, n_list: Vec<usize>, seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            case,
            m: None,
            n_list,
            seeds,
            nu: default_nu(),
            tau: default_tau(),
            dt_rule: DtRule::default(),
            horizon: 1.0,
            scheme: default_scheme(),
            eps_mode: EpsMode::default(),
            kernel: ProfileConfig::default(),
            snapshots: None,
            potential_noise: None,
            reference_spacing: None,
            implicit_tol: default_implicit_tol(),
        }
    }

    pub fn dim(&self) -> usize {
        match self.case {
            Case::Canonical1D => 1,
            Case::Canonical2D => 2,
            Case::NonconstantP => self.m.unwrap_or(1),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.n_list.is_empty() || self.seeds.is_empty() {
            return bad("n_list and seeds must be non-empty".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_list must be strictly increasing".into());
        }
        if self.n_list[0] < 2 {
            return bad("every n must be at least 2".into());
        }
        if let Some(m) = self.m {
            if self.case.is_canonical() && m != self.dim() {
                return bad(format!("case {} has fixed dimension {}", self.case.name(), self.dim()));
            }
            if m == 0 {
                return bad("m must be positive".into());
            }
        }
        if !(self.nu > 0.0 && self.tau > 0.0) {
            return bad("nu and tau must be positive".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("T must be positive".into());
        }
        match self.dt_rule {
            DtRule::CflFraction { eta } if !(eta > 0.0 && eta <= 1.0) => {
                return bad(format!("eta must lie in (0, 1], got {eta}"))
            }
            DtRule::EpsPower { c, p } if !(c > 0.0 && p >= 1.0) => {
                return bad(format!("EpsPower needs c > 0 and p >= 1, got c = {c}, p = {p}"))
            }
            _ => {}
        }
        match &self.eps_mode {
            EpsMode::TheoremLaw { factor } if !(*factor > 0.0) => return bad("eps factor must be positive".into()),
            EpsMode::Manual { values } if values.len() != self.n_list.len() => {
                return bad("manual eps list must match n_list".into())
            }
            EpsMode::Manual { values } if values.iter().any(|e| !(*e > 0.0)) => {
                return bad("manual eps values must be positive".into())
            }
            _ => {}
        }
        if let Some(ts) = &self.snapshots {
            if ts.is_empty() || ts.iter().any(|t| !(*t >= 0.0)) {
                return bad("snapshot times must be non-negative and non-empty".into());
            }
        }
        if let Some(d) = self.potential_noise {
            if !(d >= 0.0) {
                return bad("potential_noise must be non-negative".into());
            }
        }
        if !(self.implicit_tol > 0.0) {
            return bad("implicit_tol must be positive".into());
        }
        Ok(())
    }

    pub fn sampling(&self, n: usize, seed: u64) -> SamplingConfig {
        SamplingConfig {
            n,
            m: self.dim(),
            nu: self.nu,
            tau: self.tau,
            seed,
            density: Default::default(),
        }
    }

    pub fn scheme_config(&self, dt: f64) -> SchemeConfig {
        let mut s = SchemeConfig::new(self.scheme, self.horizon, dt);
        s.implicit_tol = self.implicit_tol;
        s
    }
}
