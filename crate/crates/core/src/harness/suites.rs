use log::debug;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundaryData, DomainSpec, GammaSpec, NodeFunctions, PointCloud, Potential};
use crate::graph::{build_adjacency, build_adjacency_brute, build_boundary, sample_vertices, GraphProblem, SamplingConfig};
use crate::kernel::KernelProfile;
use crate::rng::{self, Stream};
use crate::solver::{
    forward_map, max_stable_dt, step_forward, CflPolicy, RegularityConstants, RegularityMonitor, Scheme, SchemeConfig,
    Snapshots, Solver, SolverError, SolverState, CHECK_TOL,
};

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Monotonicity,
    Comparison,
    TimeLipschitz,
    SpaceLipschitz,
    Barriers,
    CflGuard,
    AdjacencyOracle,
    FwBwAgreement,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Monotonicity,
        Suite::Comparison,
        Suite::TimeLipschitz,
        Suite::SpaceLipschitz,
        Suite::Barriers,
        Suite::CflGuard,
        Suite::AdjacencyOracle,
        Suite::FwBwAgreement,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Monotonicity => "monotonicity",
            Suite::Comparison => "comparison",
            Suite::TimeLipschitz => "time-lipschitz",
            Suite::SpaceLipschitz => "space-lipschitz",
            Suite::Barriers => "barriers",
            Suite::CflGuard => "cfl-guard",
            Suite::AdjacencyOracle => "adjacency-oracle",
            Suite::FwBwAgreement => "fw-bw-agreement",
        }
    }

    pub fn from_name(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Outcome of a property suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: usize,
    /// Individual inequalities evaluated.
    pub checks: usize,
    pub violations: usize,
    /// Largest `measured - bound` seen; negative when every check holds.
    pub worst_slack: f64,
    pub pass: bool,
    pub detail: String,
}

impl SuiteReport {
    fn new(suite: Suite, trials: usize) -> Self {
        SuiteReport {
            suite,
            trials,
            checks: 0,
            violations: 0,
            worst_slack: f64::NEG_INFINITY,
            pass: true,
            detail: String::new(),
        }
    }

    /// Records `excess = measured - bound`; a violation when above `CHECK_TOL`.
    fn record(&mut self, excess: f64) {
        self.checks += 1;
        self.worst_slack = self.worst_slack.max(excess);
        if !(excess <= CHECK_TOL) {
            self.violations += 1;
        }
    }

    fn close(mut self) -> Self {
        self.pass = self.pass && self.violations == 0;
        self
    }
}

/// A random graph problem on the unit box with `Γ = ∂Ω`: `m ∈ {1, 2}`,
/// 150 to 300 vertices, a cone potential and linear `ψ` (or `ψ ≡ 0` when
/// `zero_psi`). Draws that fail to build are redrawn.
pub fn random_problem(rng: &mut ChaCha8Rng, zero_psi: bool) -> (GraphProblem, NodeFunctions) {
    let kernel = KernelProfile::triangle();
    loop {
        let m = rng.gen_range(1..=2usize);
        let n = rng.gen_range(150..=300usize);
        let eps = if m == 1 {
            rng.gen_range(0.06..0.2)
        } else {
            rng.gen_range(0.2..0.35)
        };
        let center: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
        let potential = Potential::Cone {
            center,
            base: rng.gen_range(0.2..1.5),
            slope: rng.gen_range(0.0..1.0),
        };
        let boundary_data = if zero_psi {
            BoundaryData::Constant { value: 0.0 }
        } else {
            BoundaryData::Linear {
                offset: rng.gen_range(0.0..1.0),
                gradient: (0..m).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            }
        };
        let fns = NodeFunctions::new(potential, boundary_data).expect("valid by construction");
        let cfg = SamplingConfig {
            n,
            m,
            nu: 0.5,
            tau: 1.0,
            seed: rng.gen(),
            density: Default::default(),
        };
        let domain = DomainSpec::unit_box(m);
        let built = sample_vertices(&domain, &cfg).and_then(|v| {
            let b = build_boundary(&v, &domain, eps, cfg.nu, &kernel)?;
            GraphProblem::from_functions(v, b, eps, kernel.clone(), &fns)
        });
        match built {
            Ok(g) => return (g, fns),
            Err(e) => debug!("redrawing random problem: {e}"),
        }
    }
}

fn state(values: Vec<f64>, dt: f64) -> SolverState {
    SolverState {
        values,
        t: 0.0,
        dt,
        step_index: 0,
        scheme: Scheme::Forward,
    }
}

fn with_boundary(graph: &GraphProblem, mut values: Vec<f64>) -> Vec<f64> {
    for &u in graph.boundary_idx() {
        values[u] = graph.psi()[u];
    }
    values
}

/// One explicit step at `dt_factor × max_stable_dt` applied to ordered
/// pairs `f ≤ g`, checking `S f ≤ S g`. Half of the pairs differ by noise
/// everywhere, half by a bump at one vertex, which is where monotonicity
/// fails first once the step is too large.
pub fn monotonicity(trials: usize, seed: u64, dt_factor: f64) -> SuiteReport {
    const PAIRS: usize = 20;
    let mut rng = rng::stream(seed, Stream::PropertySuite);
    let mut rep = SuiteReport::new(Suite::Monotonicity, trials);
    for _ in 0..trials {
        let (g, _) = random_problem(&mut rng, false);
        let dt = dt_factor * max_stable_dt(&g);
        let n = g.len();
        let interior: Vec<usize> = g.interior().collect();
        for k in 0..PAIRS {
            let f = with_boundary(&g, (0..n).map(|_| rng.gen_range(0.0..2.0)).collect());
            let mut h = f.clone();
            if k % 2 == 0 {
                for &u in &interior {
                    h[u] += rng.gen_range(0.0..0.5);
                }
            } else {
                let u = interior[rng.gen_range(0..interior.len())];
                h[u] += rng.gen_range(0.0..0.5);
            }
            let sf = forward_map(&f, &g, dt);
            let sh = forward_map(&h, &g, dt);
            let excess = sf.iter().zip(&sh).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
            rep.record(excess);
        }
    }
    rep.detail = format!("dt = {dt_factor} x max_stable_dt, {PAIRS} pairs per trial");
    rep.close()
}

/// Sub- and super-solutions: potentials `P̃ ∓ δ` and independent random
/// initial data, run for 40 steps with the forward scheme under CFL or the
/// backward scheme at up to 5× the explicit bound. Checks
/// `sup (f_k - g_k) ≤ max(0, sup (f_0 - g_0))` at every level.
pub fn comparison(trials: usize, seed: u64) -> Result<SuiteReport, HarnessError> {
    const STEPS: usize = 40;
    let mut rng = rng::stream(seed, Stream::PropertySuite);
    let mut rep = SuiteReport::new(Suite::Comparison, trials);
    for trial in 0..trials {
        let (g, _) = random_problem(&mut rng, false);
        let delta = rng.gen_range(0.0..0.3);
        let lo = g.with_potential(g.potential().iter().map(|p| (p - delta).max(0.0)).collect())?;
        let hi = g.with_potential(g.potential().iter().map(|p| p + delta).collect())?;
        let backward = trial % 2 == 1;
        let dt = if backward {
            rng.gen_range(0.2..5.0) * max_stable_dt(&g)
        } else {
            rng.gen_range(0.2..1.0) * max_stable_dt(&g)
        };
        let cfg = if backward {
            SchemeConfig::backward(STEPS as f64 * dt, dt)
        } else {
            SchemeConfig::forward(STEPS as f64 * dt, dt)
        };
        let n = g.len();
        let f0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
        let g0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let sub = Solver::new(&lo, cfg.clone())?;
        let sup = Solver::new(&hi, cfg)?;
        let mut f = sub.initial_state_from(f0)?;
        let mut h = sup.initial_state_from(g0)?;
        let start = f.values.iter().zip(&h.values).map(|(a, b)| a - b).fold(0.0, f64::max);
        for _ in 0..STEPS {
            f = sub.step(&f)?;
            h = sup.step(&h)?;
            let diff = f.values.iter().zip(&h.values).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
            rep.record(diff - start);
        }
    }
    rep.detail = format!("{STEPS} steps per trial, forward and backward alternating");
    Ok(rep.close())
}

/// Time, space or barrier bounds along forward solves to `T = 0.5` on
/// random problems. Barrier trials alternate `ψ ≡ 0` so the lower barrier
/// is exercised too.
pub fn regularity_suite(suite: Suite, trials: usize, seed: u64) -> Result<SuiteReport, HarnessError> {
    const HORIZON: f64 = 0.5;
    let mut rng = rng::stream(seed, Stream::PropertySuite);
    let mut rep = SuiteReport::new(suite, trials);
    let mut worst_ratio = 0.0f64;
    for trial in 0..trials {
        let zero_psi = suite == Suite::Barriers && trial % 2 == 0;
        let (g, fns) = random_problem(&mut rng, zero_psi);
        let dt = rng.gen_range(0.3..1.0) * max_stable_dt(&g);
        let consts = RegularityConstants::new(&g, fns.psi_lipschitz(), HORIZON);
        let mut mon = RegularityMonitor::new(&g, consts);
        let solver = Solver::new(&g, SchemeConfig::forward(HORIZON, dt))?;
        let init = solver.initial_state();
        mon.observe_initial(&init);
        if suite == Suite::SpaceLipschitz {
            mon.observe_spatial(&init);
        }
        let last = solver.run(init, &Snapshots::Final, |prev, next| {
            mon.observe_step(prev, next);
        })?;
        if suite == Suite::SpaceLipschitz {
            mon.observe_spatial(last.last());
        }
        let r = mon.finish();
        match suite {
            Suite::TimeLipschitz => {
                rep.record(r.time_increment.worst_excess);
                worst_ratio = worst_ratio.max(r.max_time_rate / r.constants.time_lipschitz);
            }
            Suite::SpaceLipschitz => {
                rep.record(r.spatial.worst_excess);
                worst_ratio = worst_ratio.max(r.max_spatial_ratio);
            }
            _ => {
                rep.record(r.barrier_upper.worst_excess);
                if let Some(lower) = r.barrier_lower {
                    rep.record(lower.worst_excess);
                }
            }
        }
    }
    rep.detail = match suite {
        Suite::TimeLipschitz => format!("largest rate / L = {worst_ratio:.4}"),
        Suite::SpaceLipschitz => format!("largest |f(u)-f(v)| / (K(|u-v|+eps)) = {worst_ratio:.4}"),
        _ => "upper barrier min(psi + K1 t, psi + K2 d); lower barrier 0 when psi = 0".into(),
    };
    Ok(rep.close())
}

/// `Enforce` must reject `dt = 1.01 × max_stable_dt` in every trial, and
/// the monotonicity search at `2×` must find a counterexample.
pub fn cfl_guard(trials: usize, seed: u64) -> SuiteReport {
    let mut rng = rng::stream(seed, Stream::PropertySuite);
    let mut rep = SuiteReport::new(Suite::CflGuard, trials);
    for _ in 0..trials {
        let (g, _) = random_problem(&mut rng, false);
        let dt = 1.01 * max_stable_dt(&g);
        let by_solver = matches!(
            Solver::new(&g, SchemeConfig::forward(1.0, dt)),
            Err(SolverError::CflViolation { .. })
        );
        let by_step = matches!(
            step_forward(&state(g.psi().to_vec(), dt), &g, CflPolicy::Enforce),
            Err(SolverError::CflViolation { .. })
        );
        rep.checks += 1;
        if !(by_solver && by_step) {
            rep.violations += 1;
        }
    }
    rep.worst_slack = if rep.violations == 0 { 0.0 } else { f64::INFINITY };
    let search = monotonicity(trials, seed, 2.0);
    let found = search.violations > 0;
    rep.pass = found;
    rep.detail = format!(
        "rejected {}/{} at 1.01x; monotonicity search at 2x found {} counterexamples (worst {:.3e})",
        trials - rep.violations,
        trials,
        search.violations,
        search.worst_slack
    );
    rep.close()
}

/// Cell-grid adjacency against the brute-force build on 200 points, with
/// `m` cycling through 1, 2, 3.
pub fn adjacency_oracle(trials: usize, seed: u64) -> Result<SuiteReport, HarnessError> {
    let mut rng = rng::stream(seed, Stream::PropertySuite);
    let mut rep = SuiteReport::new(Suite::AdjacencyOracle, trials);
    let kernel = KernelProfile::triangle();
    for trial in 0..trials {
        let m = 1 + trial % 3;
        let eps = match m {
            1 => rng.gen_range(0.01..0.2),
            2 => rng.gen_range(0.05..0.3),
            _ => rng.gen_range(0.1..0.5),
        };
        let cfg = SamplingConfig {
            n: 200,
            m,
            nu: 0.5,
            tau: 1.0,
            seed: rng.gen(),
            density: Default::default(),
        };
        let v = sample_vertices(&DomainSpec::unit_box(m), &cfg)?;
        let fast = build_adjacency(&v, eps, &kernel)?;
        let slow = build_adjacency_brute(&v, eps, &kernel)?;
        for u in 0..v.len() {
            let (a, wa) = fast.row(u);
            let (b, wb) = slow.row(u);
            rep.checks += 1;
            if a != b {
                rep.violations += 1;
                rep.worst_slack = f64::INFINITY;
                continue;
            }
            let w = wa.iter().zip(wb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            rep.worst_slack = rep.worst_slack.max(w - 1e-14);
            if w > 1e-14 {
                rep.violations += 1;
            }
        }
    }
    rep.detail = "rows compared as neighbour lists and weights (tolerance 1e-14)".into();
    Ok(rep.close())
}

/// Forward and backward final states on one graph for `dt0 / 2^k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FwBwStudy {
    pub dts: Vec<f64>,
    /// `max_u |f_fw(u, T) - f_bw(u, T)|` per step size.
    pub diffs: Vec<f64>,
    /// `diffs[k + 1] / diffs[k]`.
    pub ratios: Vec<f64>,
}

impl FwBwStudy {
    pub fn ratios_within(&self, lo: f64, hi: f64) -> bool {
        !self.ratios.is_empty() && self.ratios.iter().all(|r| (lo..=hi).contains(r))
    }
}

/// Runs both schemes to `horizon` with `dt0` and `halvings` successive
/// halvings.
pub fn fw_bw_agreement(graph: &GraphProblem, horizon: f64, dt0: f64, halvings: usize) -> Result<FwBwStudy, HarnessError> {
    let mut dts = Vec::new();
    let mut diffs = Vec::new();
    for k in 0..=halvings {
        let dt = dt0 / (1u64 << k) as f64;
        let fw = Solver::new(graph, SchemeConfig::forward(horizon, dt))?;
        let bw = Solver::new(graph, SchemeConfig::backward(horizon, dt))?;
        let a = fw.run(fw.initial_state(), &Snapshots::Final, |_, _| {})?;
        let b = bw.run(bw.initial_state(), &Snapshots::Final, |_, _| {})?;
        let d = a
            .last()
            .values
            .iter()
            .zip(&b.last().values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        dts.push(dt);
        diffs.push(d);
    }
    let ratios = diffs.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(FwBwStudy { dts, diffs, ratios })
}

/// The fixed 1-D graph of the agreement study: `n` uniform points on
/// `[0, 1]` with `Γ = {0}`, `P ≡ 1`, `ψ ≡ 0`. With a single boundary point
/// the front is still moving at `T = 1`, so the two schemes do not meet at
/// a common steady state.
pub fn fw_bw_graph(n: usize, eps: f64, seed: u64) -> Result<GraphProblem, HarnessError> {
    let domain = DomainSpec::new(1, GammaSpec::PointSet { points: vec![vec![0.0]] }).map_err(crate::graph::GraphError::from)?;
    let cfg = SamplingConfig {
        n,
        m: 1,
        nu: 0.5,
        tau: 1.0,
        seed,
        density: Default::default(),
    };
    let mut xs = sample_vertices(&domain, &cfg)?.coords().to_vec();
    // Sorted so that ascending Gauss–Seidel sweeps follow the front; the
    // boundary vertex sits on Γ itself.
    xs.push(0.0);
    xs.sort_by(f64::total_cmp);
    let v = PointCloud::new(1, xs).map_err(crate::graph::GraphError::from)?;
    let b = vec![0];
    Ok(GraphProblem::from_functions(v, b, eps, KernelProfile::triangle(), &NodeFunctions::canonical())?)
}

pub const FW_BW_N: usize = 2000;
pub const FW_BW_EPS: f64 = 0.05;

/// Runs a suite with its default parameters.
pub fn run_property_suite(suite: Suite, trials: usize, seed: u64) -> Result<SuiteReport, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    match suite {
        Suite::Monotonicity => Ok(monotonicity(trials, seed, 1.0)),
        Suite::Comparison => comparison(trials, seed),
        Suite::TimeLipschitz | Suite::SpaceLipschitz | Suite::Barriers => regularity_suite(suite, trials, seed),
        Suite::CflGuard => Ok(cfl_guard(trials, seed)),
        Suite::AdjacencyOracle => adjacency_oracle(trials, seed),
        Suite::FwBwAgreement => {
            let mut rep = SuiteReport::new(suite, trials);
            let mut lines = Vec::new();
            for k in 0..trials as u64 {
                let g = fw_bw_graph(FW_BW_N, FW_BW_EPS, seed.wrapping_add(k))?;
                let study = fw_bw_agreement(&g, 1.0, max_stable_dt(&g), 3)?;
                for r in &study.ratios {
                    rep.checks += 1;
                    let excess = (0.4 - r).max(r - 0.6);
                    rep.worst_slack = rep.worst_slack.max(excess);
                    if excess > 0.0 {
                        rep.violations += 1;
                    }
                }
                lines.push(format!("{:?}", study.ratios));
            }
            rep.detail = format!("ratios per halving in [0.4, 0.6]: {}", lines.join("; "));
            Ok(rep.close())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::from_name(s.name()), Some(s));
        }
        assert_eq!(Suite::from_name("nope"), None);
    }

    #[test]
    fn monotone_under_cfl() {
        let r = monotonicity(10, 1, 1.0);
        assert!(r.pass, "{r:?}");
        assert_eq!(r.checks, 200);
    }

    #[test]
    fn counterexample_beyond_cfl() {
        assert!(monotonicity(10, 1, 2.0).violations > 0);
    }

    #[test]
    fn small_suites_pass() {
        for s in [Suite::Comparison, Suite::TimeLipschitz, Suite::SpaceLipschitz, Suite::Barriers, Suite::CflGuard, Suite::AdjacencyOracle] {
            let r = run_property_suite(s, 6, 11).unwrap();
            assert!(r.pass, "{r:?}");
            assert!(r.checks > 0);
        }
    }

    #[test]
    fn zero_trials_is_a_config_error() {
        assert!(matches!(run_property_suite(Suite::Barriers, 0, 0), Err(HarnessError::Config(_))));
    }

    #[test]
    fn random_problems_are_seeded() {
        let (a, _) = random_problem(&mut rng::stream(4, Stream::PropertySuite), false);
        let (b, _) = random_problem(&mut rng::stream(4, Stream::PropertySuite), false);
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.potential(), b.potential());
    }
}
