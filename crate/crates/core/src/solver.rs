//! Forward and backward Euler schemes for the graph Eikonal equation
//! `∂_t f = -|∇⁻f|_∞ + P̃` with Dirichlet data `ψ̃` on the boundary vertices.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::dist;
use crate::graph::GraphProblem;

/// Absolute slack used by every bound check.
pub const CHECK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dt = {dt} exceeds the stability bound {max_dt}")]
    CflViolation { dt: f64, max_dt: f64 },
    #[error("implicit solve did not converge in {sweeps} sweeps (residual {residual})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("invalid scheme config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value at vertex {vertex} after step {step}")]
    NonFinite { vertex: usize, step: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[serde(alias = "fd")]
    Forward,
    #[serde(alias = "bd")]
    Backward,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CflPolicy {
    #[default]
    Enforce,
    WarnOnly,
}

/// Iteration used for the implicit step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImplicitMode {
    /// In-place sweeps in ascending vertex order.
    #[default]
    GaussSeidel,
    /// Parallel sweeps reading only the previous iterate.
    Jacobi,
}

fn default_tol() -> f64 {
    1e-12
}

fn default_sweeps() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    #[serde(default)]
    pub cfl_policy: CflPolicy,
    #[serde(default = "default_tol")]
    pub implicit_tol: f64,
    #[serde(default = "default_sweeps")]
    pub implicit_max_sweeps: usize,
    #[serde(default)]
    pub implicit_mode: ImplicitMode,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, horizon: f64, dt: f64) -> Self {
        SchemeConfig {
            scheme,
            horizon,
            dt,
            cfl_policy: CflPolicy::Enforce,
            implicit_tol: default_tol(),
            implicit_max_sweeps: default_sweeps(),
            implicit_mode: ImplicitMode::GaussSeidel,
        }
    }

    pub fn forward(horizon: f64, dt: f64) -> Self {
        SchemeConfig::new(Scheme::Forward, horizon, dt)
    }

    pub fn backward(horizon: f64, dt: f64) -> Self {
        SchemeConfig::new(Scheme::Backward, horizon, dt)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("T must be non-negative, got {}", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SolverError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.scheme == Scheme::Backward && !(self.implicit_tol > 0.0) {
            return Err(SolverError::InvalidConfig("implicit_tol must be positive".into()));
        }
        Ok(())
    }

    /// `N_T = ⌈T / Δt⌉`.
    pub fn num_steps(&self) -> usize {
        steps_until(self.horizon, self.dt)
    }
}

fn steps_until(t: f64, dt: f64) -> usize {
    let k = (t / dt - 1e-9).ceil();
    if k <= 0.0 {
        0
    } else {
        k as usize
    }
}

/// Values at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub values: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub step_index: usize,
    pub scheme: Scheme,
}

/// `max(0, max_v J_ε(u,v) (f(u) - f(v)))`.
#[inline]
pub fn internal_gradient_norm(values: &[f64], u: usize, graph: &GraphProblem) -> f64 {
    let (nb, w) = graph.adjacency().row(u);
    let fu = values[u];
    nb.iter()
        .zip(w)
        .map(|(&v, &wt)| wt * (fu - values[v as usize]))
        .fold(0.0, f64::max)
}

/// `ε C_g / sup g`.
pub fn max_stable_dt(graph: &GraphProblem) -> f64 {
    let k = graph.kernel();
    graph.eps() * k.normalization() / k.sup()
}

fn check_cfl(graph: &GraphProblem, dt: f64, policy: CflPolicy) -> Result<(), SolverError> {
    let max_dt = max_stable_dt(graph);
    if dt > max_dt {
        match policy {
            CflPolicy::Enforce => return Err(SolverError::CflViolation { dt, max_dt }),
            CflPolicy::WarnOnly => warn!("dt = {dt} exceeds the stability bound {max_dt}; the scheme may not be monotone"),
        }
    }
    Ok(())
}

fn check_finite(values: &[f64], step: usize) -> Result<(), SolverError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(vertex) => Err(SolverError::NonFinite { vertex, step }),
        None => Ok(()),
    }
}

/// The explicit map applied to `values`, without CFL checks.
pub(crate) fn forward_map(values: &[f64], graph: &GraphProblem, dt: f64) -> Vec<f64> {
    let p = graph.potential();
    let psi = graph.psi();
    (0..values.len())
        .into_par_iter()
        .map(|u| {
            if graph.is_boundary(u) {
                psi[u]
            } else {
                values[u] + dt * (p[u] - internal_gradient_norm(values, u, graph))
            }
        })
        .collect()
}

/// One explicit Euler step.
pub fn step_forward(state: &SolverState, graph: &GraphProblem, policy: CflPolicy) -> Result<SolverState, SolverError> {
    check_cfl(graph, state.dt, policy)?;
    let values = forward_map(&state.values, graph, state.dt);
    let step_index = state.step_index + 1;
    check_finite(&values, step_index)?;
    Ok(SolverState {
        values,
        t: step_index as f64 * state.dt,
        dt: state.dt,
        step_index,
        scheme: Scheme::Forward,
    })
}

/// Root of `w + Δt max(0, max_v J_v (w - f_v)) = b`.
///
/// The left side is the maximum of the increasing lines `w` and
/// `w + ΔtJ_v(w - f_v)`, so its root is the smallest of their roots.
#[inline]
fn node_root(values: &[f64], nb: &[u32], w: &[f64], dt: f64, b: f64) -> f64 {
    // A neighbour with f_v ≥ acc cannot lower acc ≤ b, so its division is
    // skipped.
    nb.iter().zip(w).fold(b, |acc, (&v, &wt)| {
        let fv = values[v as usize];
        if fv >= acc {
            return acc;
        }
        let k = dt * wt;
        acc.min((b + k * fv) / (1.0 + k))
    })
}

/// `|w + Δt |∇⁻f(u)| - b|` at every interior node.
fn implicit_residual(values: &[f64], rhs: &[f64], graph: &GraphProblem, dt: f64) -> f64 {
    (0..values.len())
        .into_par_iter()
        .filter(|&u| !graph.is_boundary(u))
        .map(|u| (values[u] + dt * internal_gradient_norm(values, u, graph) - rhs[u]).abs())
        .reduce(|| 0.0, f64::max)
}

/// One implicit Euler step, solved by nonlinear Gauss–Seidel (or Jacobi)
/// sweeps with exact scalar node solves until the residual is at most
/// `cfg.implicit_tol`.
pub fn step_backward(state: &SolverState, graph: &GraphProblem, cfg: &SchemeConfig) -> Result<SolverState, SolverError> {
    let dt = state.dt;
    let p = graph.potential();
    let psi = graph.psi();
    let n = state.values.len();
    let rhs: Vec<f64> = (0..n).map(|u| state.values[u] + dt * p[u]).collect();
    let mut values = state.values.clone();
    for u in graph.boundary_idx() {
        values[*u] = psi[*u];
    }
    let adj = graph.adjacency();
    // Each node is solved exactly against its neighbours' values at the
    // time, so afterwards its residual is at most Δt J_max times the largest
    // later change. The full residual is only evaluated once that bound is
    // below the tolerance.
    let lip = dt / max_stable_dt(graph);
    let mut residual = implicit_residual(&values, &rhs, graph, dt);
    let mut sweeps = 0;
    while residual > cfg.implicit_tol {
        if sweeps == cfg.implicit_max_sweeps {
            return Err(SolverError::NoConvergence { sweeps, residual });
        }
        let change = match cfg.implicit_mode {
            ImplicitMode::GaussSeidel => {
                let mut change = 0.0f64;
                for u in 0..n {
                    if !graph.is_boundary(u) {
                        let (nb, w) = adj.row(u);
                        let new = node_root(&values, nb, w, dt, rhs[u]);
                        change = change.max((new - values[u]).abs());
                        values[u] = new;
                    }
                }
                change
            }
            ImplicitMode::Jacobi => {
                let prev = values;
                values = (0..n)
                    .into_par_iter()
                    .map(|u| {
                        if graph.is_boundary(u) {
                            prev[u]
                        } else {
                            let (nb, w) = adj.row(u);
                            node_root(&prev, nb, w, dt, rhs[u])
                        }
                    })
                    .collect();
                prev.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            }
        };
        sweeps += 1;
        let bound = lip * change;
        residual = if bound > cfg.implicit_tol && sweeps < cfg.implicit_max_sweeps {
            bound
        } else {
            implicit_residual(&values, &rhs, graph, dt)
        };
    }
    let step_index = state.step_index + 1;
    check_finite(&values, step_index)?;
    Ok(SolverState {
        values,
        t: step_index as f64 * dt,
        dt,
        step_index,
        scheme: Scheme::Backward,
    })
}

/// Which time levels a solve keeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Snapshots {
    Final,
    All,
    /// The first level at or after each requested time.
    Times(Vec<f64>),
}

impl Snapshots {
    /// Step indices kept for a run of `n_steps` steps of size `dt`.
    pub fn step_set(&self, dt: f64, n_steps: usize) -> Vec<usize> {
        let mut ks: Vec<usize> = match self {
            Snapshots::Final => vec![n_steps],
            Snapshots::All => (0..=n_steps).collect(),
            Snapshots::Times(ts) => ts.iter().map(|&t| steps_until(t, dt).min(n_steps)).collect(),
        };
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

/// States kept by a solve, in time order.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<SolverState>,
}

impl Trajectory {
    pub fn last(&self) -> &SolverState {
        self.states.last().expect("trajectory is never empty")
    }
}

/// A graph and scheme with the configuration checked once.
pub struct Solver<'g> {
    graph: &'g GraphProblem,
    cfg: SchemeConfig,
}

impl<'g> Solver<'g> {
    pub fn new(graph: &'g GraphProblem, cfg: SchemeConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        if cfg.scheme == Scheme::Forward {
            check_cfl(graph, cfg.dt, cfg.cfl_policy)?;
        }
        Ok(Solver { graph, cfg })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    /// `f(·, 0) = ψ̃`.
    pub fn initial_state(&self) -> SolverState {
        self.state_at_zero(self.graph.psi().to_vec())
    }

    /// Custom initial values; boundary rows are overwritten with `ψ̃`.
    pub fn initial_state_from(&self, mut values: Vec<f64>) -> Result<SolverState, SolverError> {
        if values.len() != self.graph.len() {
            return Err(SolverError::InvalidConfig(format!(
                "expected {} initial values, got {}",
                self.graph.len(),
                values.len()
            )));
        }
        for &u in self.graph.boundary_idx() {
            values[u] = self.graph.psi()[u];
        }
        check_finite(&values, 0)?;
        Ok(self.state_at_zero(values))
    }

    fn state_at_zero(&self, values: Vec<f64>) -> SolverState {
        SolverState {
            values,
            t: 0.0,
            dt: self.cfg.dt,
            step_index: 0,
            scheme: self.cfg.scheme,
        }
    }

    pub fn step(&self, state: &SolverState) -> Result<SolverState, SolverError> {
        match self.cfg.scheme {
            // The CFL condition was checked on construction.
            Scheme::Forward => step_forward(state, self.graph, CflPolicy::WarnOnly),
            Scheme::Backward => step_backward(state, self.graph, &self.cfg),
        }
    }

    /// Steps from `initial` to `N_T`, keeping the requested levels and
    /// calling `observer(previous, next)` after every step.
    pub fn run(
        &self,
        initial: SolverState,
        snapshots: &Snapshots,
        mut observer: impl FnMut(&SolverState, &SolverState),
    ) -> Result<Trajectory, SolverError> {
        let n_steps = self.cfg.num_steps();
        let keep = snapshots.step_set(self.cfg.dt, n_steps);
        let mut next_keep = keep.iter().peekable();
        let mut states = Vec::with_capacity(keep.len());
        let mut cur = initial;
        if next_keep.peek() == Some(&&0) {
            states.push(cur.clone());
            next_keep.next();
        }
        for _ in 0..n_steps {
            let next = self.step(&cur)?;
            observer(&cur, &next);
            if next_keep.peek() == Some(&&next.step_index) {
                states.push(next.clone());
                next_keep.next();
            }
            cur = next;
        }
        if states.is_empty() {
            states.push(cur);
        }
        Ok(Trajectory { states })
    }
}

/// Solves from `ψ̃` and keeps the requested levels.
pub fn solve(graph: &GraphProblem, cfg: &SchemeConfig, snapshots: &Snapshots) -> Result<Trajectory, SolverError> {
    let solver = Solver::new(graph, cfg.clone())?;
    solver.run(solver.initial_state(), snapshots, |_, _| {})
}

/// One bound check with its measured worst case.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub pass: bool,
    /// Largest amount by which the bound is exceeded; negative when it holds
    /// with room to spare.
    pub worst_excess: f64,
    pub violations: usize,
}

impl BoundCheck {
    fn new() -> Self {
        BoundCheck {
            pass: true,
            worst_excess: f64::NEG_INFINITY,
            violations: 0,
        }
    }

    fn record(&mut self, excess: f64) {
        self.worst_excess = self.worst_excess.max(excess);
        if excess > CHECK_TOL {
            self.violations += 1;
            self.pass = false;
        }
    }
}

/// Constants that enter the regularity bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityConstants {
    /// `Lip(ψ̃)`.
    pub psi_lipschitz: f64,
    /// `‖P̃‖_∞` over interior vertices.
    pub potential_sup: f64,
    /// Time Lipschitz constant `L = Lip(ψ̃) + ‖P̃‖_∞`.
    pub time_lipschitz: f64,
    /// Spatial constant `K = 2 c_g⁻¹ C_g (L + ‖P̃‖_∞) m^{3/2}`.
    pub space_constant: f64,
    /// Barrier slopes `K₁ = ‖P̃‖_∞` and `K₂`.
    pub k1: f64,
    pub k2: f64,
    pub min_vertex_distance: f64,
}

impl RegularityConstants {
    /// `K₂ = max(C_g c_g⁻¹ ε d̃₀⁻¹ ‖P̃‖_∞ + Lip(ψ̃), K₁ T / (a ε))`, with `d̃₀`
    /// the smallest distance between two vertices.
    pub fn new(graph: &GraphProblem, psi_lipschitz: f64, horizon: f64) -> Self {
        let k = graph.kernel();
        let eps = graph.eps();
        let p_sup = graph.potential_sup();
        let l = psi_lipschitz + p_sup;
        let m = graph.dim() as f64;
        let d0 = graph.min_vertex_distance();
        let k1 = p_sup;
        let k2 = f64::max(
            k.normalization() / k.c_g() * eps / d0 * p_sup + psi_lipschitz,
            k1 * horizon / (k.a() * eps),
        );
        RegularityConstants {
            psi_lipschitz,
            potential_sup: p_sup,
            time_lipschitz: l,
            space_constant: 2.0 / k.c_g() * k.normalization() * (l + p_sup) * m.powf(1.5),
            k1,
            k2,
            min_vertex_distance: d0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub constants: RegularityConstants,
    /// `|f(u,t) - f(u,t-Δt)| ≤ L Δt`.
    pub time_increment: BoundCheck,
    /// Largest `|f(u,t) - f(u,t-Δt)| / Δt` seen.
    pub max_time_rate: f64,
    /// `|f(u) - f(v)| ≤ K (|u - v| + ε)` on checked pairs.
    pub spatial: BoundCheck,
    /// Largest `|f(u) - f(v)| / (K (|u - v| + ε))` seen.
    pub max_spatial_ratio: f64,
    /// `f ≤ min(ψ̃ + K₁ t, ψ̃ + K₂ d(u, Γ̃))`.
    pub barrier_upper: BoundCheck,
    /// `f ≥ 0`; checked only when `ψ̃ ≡ 0`.
    pub barrier_lower: Option<BoundCheck>,
}

impl RegularityReport {
    pub fn pass(&self) -> bool {
        self.time_increment.pass
            && self.spatial.pass
            && self.barrier_upper.pass
            && self.barrier_lower.as_ref().map_or(true, |b| b.pass)
    }
}

/// Accumulates the regularity checks step by step, so full trajectories
/// need not be stored.
pub struct RegularityMonitor<'g> {
    graph: &'g GraphProblem,
    constants: RegularityConstants,
    dist_gamma: Vec<f64>,
    zero_psi: bool,
    time_increment: BoundCheck,
    max_time_rate: f64,
    spatial: BoundCheck,
    max_spatial_ratio: f64,
    barrier_upper: BoundCheck,
    barrier_lower: BoundCheck,
}

/// Pairs beyond the adjacency checked for the spatial bound: all pairs in
/// an evenly strided subset of this many vertices.
const SPATIAL_SAMPLE: usize = 1500;

impl<'g> RegularityMonitor<'g> {
    pub fn new(graph: &'g GraphProblem, constants: RegularityConstants) -> Self {
        RegularityMonitor {
            graph,
            constants,
            dist_gamma: graph.distance_to_boundary(),
            zero_psi: graph.psi().iter().all(|&p| p == 0.0),
            time_increment: BoundCheck::new(),
            max_time_rate: 0.0,
            spatial: BoundCheck::new(),
            max_spatial_ratio: 0.0,
            barrier_upper: BoundCheck::new(),
            barrier_lower: BoundCheck::new(),
        }
    }

    pub fn observe_initial(&mut self, state: &SolverState) {
        self.check_barriers(state);
    }

    pub fn observe_step(&mut self, prev: &SolverState, next: &SolverState) {
        let dt = next.t - prev.t;
        let bound = self.constants.time_lipschitz * dt;
        let max_inc = prev
            .values
            .par_iter()
            .zip(&next.values)
            .map(|(a, b)| (b - a).abs())
            .reduce(|| 0.0, f64::max);
        self.time_increment.record(max_inc - bound);
        if dt > 0.0 {
            self.max_time_rate = self.max_time_rate.max(max_inc / dt);
        }
        self.check_barriers(next);
    }

    fn check_barriers(&mut self, state: &SolverState) {
        let c = &self.constants;
        let psi = self.graph.psi();
        let (upper, lower) = state
            .values
            .par_iter()
            .enumerate()
            .map(|(u, &f)| {
                let bar = f64::min(psi[u] + c.k1 * state.t, psi[u] + c.k2 * self.dist_gamma[u]);
                (f - bar, -f)
            })
            .reduce(|| (f64::NEG_INFINITY, f64::NEG_INFINITY), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        self.barrier_upper.record(upper);
        if self.zero_psi {
            self.barrier_lower.record(lower);
        }
    }

    /// Spatial Lipschitz check on adjacency pairs and a strided vertex subset.
    pub fn observe_spatial(&mut self, state: &SolverState) {
        let g = self.graph;
        let k = self.constants.space_constant;
        let eps = g.eps();
        let pts = g.vertices();
        let f = &state.values;
        let ratio = |u: usize, v: usize| (f[u] - f[v]).abs() / (k * (dist(pts.point(u), pts.point(v)) + eps));
        let adj = g.adjacency();
        let adj_max = (0..g.len())
            .into_par_iter()
            .map(|u| adj.row(u).0.iter().map(|&v| ratio(u, v as usize)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
        let stride = g.len().div_ceil(SPATIAL_SAMPLE).max(1);
        let sample: Vec<usize> = (0..g.len()).step_by(stride).collect();
        let sample_max = sample
            .par_iter()
            .map(|&u| sample.iter().map(|&v| ratio(u, v)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
        let worst = adj_max.max(sample_max);
        self.max_spatial_ratio = self.max_spatial_ratio.max(worst);
        // The ratio bound is 1; excess is measured in value units at unit
        // scale.
        self.spatial.record(worst - 1.0);
    }

    pub fn finish(self) -> RegularityReport {
        RegularityReport {
            constants: self.constants,
            time_increment: self.time_increment,
            max_time_rate: self.max_time_rate,
            spatial: self.spatial,
            max_spatial_ratio: self.max_spatial_ratio,
            barrier_upper: self.barrier_upper,
            barrier_lower: self.zero_psi.then_some(self.barrier_lower),
        }
    }
}

/// Runs all regularity checks over a trajectory of consecutive levels.
pub fn check_regularity(
    trajectory: &Trajectory,
    graph: &GraphProblem,
    constants: RegularityConstants,
) -> RegularityReport {
    let mut mon = RegularityMonitor::new(graph, constants);
    let states = &trajectory.states;
    mon.observe_initial(&states[0]);
    for w in states.windows(2) {
        mon.observe_step(&w[0], &w[1]);
    }
    for s in states {
        mon.observe_spatial(s);
    }
    mon.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainSpec, NodeFunctions, PointCloud};
    use crate::graph::{EpsChoice, SamplingConfig};
    use crate::kernel::KernelProfile;
    use proptest::prelude::*;
    use rand::Rng;

    fn three_node(potential: f64) -> GraphProblem {
        let v = PointCloud::new(1, vec![0.0, 0.5, 1.0]).unwrap();
        GraphProblem::new(
            v,
            vec![0, 2],
            1.0,
            KernelProfile::triangle(),
            vec![potential; 3],
            vec![0.0; 3],
        )
        .unwrap()
    }

    fn random_graph(n: usize, m: usize, eps: f64, seed: u64) -> GraphProblem {
        let cfg = SamplingConfig {
            n,
            m,
            nu: 0.5,
            tau: 1.0,
            seed,
            density: Default::default(),
        };
        GraphProblem::sample(
            &DomainSpec::unit_box(m),
            &cfg,
            &KernelProfile::triangle(),
            &NodeFunctions::canonical(),
            EpsChoice::Manual(eps),
        )
        .unwrap()
    }

    #[test]
    fn gradient_examples() {
        let g = three_node(1.0);
        assert_eq!(internal_gradient_norm(&[0.0, 0.3, 0.0], 1, &g), 0.6);
        assert_eq!(internal_gradient_norm(&[0.7; 3], 1, &g), 0.0);
        let shifted = internal_gradient_norm(&[5.0, 5.3, 5.0], 1, &g);
        assert!((shifted - 0.6).abs() < 1e-14);
    }

    #[test]
    fn stable_dt_formula() {
        let g = three_node(1.0);
        assert_eq!(max_stable_dt(&g), 0.25);
    }

    #[test]
    fn forward_recurrence() {
        let g = three_node(1.0);
        let traj = solve(&g, &SchemeConfig::forward(0.5, 0.25), &Snapshots::All).unwrap();
        let mid: Vec<f64> = traj.states.iter().map(|s| s.values[1]).collect();
        assert_eq!(mid, vec![0.0, 0.25, 0.375]);
        let long = solve(&g, &SchemeConfig::forward(5.0, 0.25), &Snapshots::Final).unwrap();
        assert!((long.last().values[1] - 0.5).abs() < 1e-3);
        assert_eq!(long.last().step_index, 20);
    }

    #[test]
    fn backward_first_step() {
        let g = three_node(1.0);
        let traj = solve(&g, &SchemeConfig::backward(0.25, 0.25), &Snapshots::Final).unwrap();
        assert!((traj.last().values[1] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_potential_is_stationary() {
        let v = PointCloud::new(1, vec![0.0, 0.5, 1.0]).unwrap();
        let g = GraphProblem::new(v, vec![0, 2], 1.0, KernelProfile::triangle(), vec![0.0; 3], vec![0.7; 3]).unwrap();
        for cfg in [SchemeConfig::forward(3.0, 0.25), SchemeConfig::backward(3.0, 0.25)] {
            let traj = solve(&g, &cfg, &Snapshots::All).unwrap();
            for s in &traj.states {
                assert_eq!(s.values, vec![0.7; 3]);
            }
        }
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let g = three_node(1.0);
        let traj = solve(&g, &SchemeConfig::forward(0.0, 0.25), &Snapshots::All).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.states[0].step_index, 0);
        assert_eq!(traj.states[0].values, g.psi());
    }

    #[test]
    fn cfl_guard() {
        let g = three_node(1.0);
        let err = Solver::new(&g, SchemeConfig::forward(1.0, 0.2525)).err().unwrap();
        assert!(matches!(err, SolverError::CflViolation { .. }));
        let mut warn_only = SchemeConfig::forward(1.0, 0.5);
        warn_only.cfl_policy = CflPolicy::WarnOnly;
        assert!(Solver::new(&g, warn_only).is_ok());
        // The backward scheme is unconditionally monotone.
        assert!(Solver::new(&g, SchemeConfig::backward(1.0, 10.0)).is_ok());
    }

    #[test]
    fn snapshot_selection() {
        let g = three_node(1.0);
        let traj = solve(&g, &SchemeConfig::forward(1.0, 0.25), &Snapshots::Times(vec![0.3, 0.5, 2.0])).unwrap();
        let ks: Vec<usize> = traj.states.iter().map(|s| s.step_index).collect();
        assert_eq!(ks, vec![2, 4]);
    }

    #[test]
    fn implicit_sweep_limit() {
        let g = random_graph(300, 1, 0.2, 1);
        let mut cfg = SchemeConfig::backward(0.1, 0.1);
        cfg.implicit_max_sweeps = 1;
        assert!(matches!(solve(&g, &cfg, &Snapshots::Final), Err(SolverError::NoConvergence { .. })));
    }

    #[test]
    fn jacobi_matches_gauss_seidel() {
        let g = random_graph(400, 2, 0.3, 2);
        let gs = SchemeConfig::backward(0.5, 0.05);
        let mut jac = gs.clone();
        jac.implicit_mode = ImplicitMode::Jacobi;
        let a = solve(&g, &gs, &Snapshots::Final).unwrap();
        let b = solve(&g, &jac, &Snapshots::Final).unwrap();
        let diff = a.last().values.iter().zip(&b.last().values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn forward_step_is_deterministic_across_thread_counts() {
        let g = random_graph(1000, 2, 0.2, 3);
        let cfg = SchemeConfig::forward(0.3, 0.9 * max_stable_dt(&g));
        let a = solve(&g, &cfg, &Snapshots::Final).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| solve(&g, &cfg, &Snapshots::Final).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn canonical_regularity() {
        let g = random_graph(600, 1, 0.2, 4);
        let dt = 0.9 * max_stable_dt(&g);
        let traj = solve(&g, &SchemeConfig::forward(1.0, dt), &Snapshots::All).unwrap();
        let report = check_regularity(&traj, &g, RegularityConstants::new(&g, 0.0, 1.0));
        assert!(report.time_increment.pass);
        assert!(report.barrier_upper.pass);
        assert!(report.barrier_lower.as_ref().unwrap().pass);
        assert!(report.max_time_rate <= 1.0 + 1e-12);
        // f ≤ t, checked directly.
        for s in &traj.states {
            assert!(s.values.iter().all(|&f| f <= s.t + CHECK_TOL));
        }
    }

    #[test]
    fn stationary_regularity_has_zero_increments() {
        let v = PointCloud::new(1, vec![0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let g = GraphProblem::new(v, vec![0, 4], 0.6, KernelProfile::triangle(), vec![0.0; 5], vec![0.3; 5]).unwrap();
        let traj = solve(&g, &SchemeConfig::forward(1.0, 0.1), &Snapshots::All).unwrap();
        let report = check_regularity(&traj, &g, RegularityConstants::new(&g, 0.0, 1.0));
        assert!(report.pass());
        assert_eq!(report.max_time_rate, 0.0);
    }

    #[test]
    fn steady_state_is_independent_of_dt() {
        let g = random_graph(300, 1, 0.25, 5);
        let run = |dt: f64| {
            let traj = solve(&g, &SchemeConfig::backward(20.0, dt), &Snapshots::All).unwrap();
            for w in traj.states.windows(2) {
                for (a, b) in w[0].values.iter().zip(&w[1].values) {
                    assert!(b >= a, "values must be nondecreasing in t");
                }
            }
            traj.last().values.clone()
        };
        let a = run(0.05);
        let b = run(0.1);
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 10.0 * 1e-12, "{diff}");
    }

    #[test]
    fn one_step_difference_is_second_order() {
        // |bw - fw| after one step from a common state, as dt halves.
        let g = three_node(1.0);
        let start = vec![0.0, 0.1, 0.0];
        let diffs: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| {
                let s = SolverState {
                    values: start.clone(),
                    t: 0.0,
                    dt,
                    step_index: 0,
                    scheme: Scheme::Forward,
                };
                let f = step_forward(&s, &g, CflPolicy::Enforce).unwrap();
                let b = step_backward(&s, &g, &SchemeConfig::backward(dt, dt)).unwrap();
                (f.values[1] - b.values[1]).abs()
            })
            .collect();
        for w in diffs.windows(2) {
            let r = w[1] / w[0];
            assert!((0.2..0.3).contains(&r), "ratio {r} from {diffs:?}");
        }
    }

    fn random_pair(g: &GraphProblem, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let f: Vec<f64> = (0..g.len())
            .map(|u| if g.is_boundary(u) { g.psi()[u] } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let h = f
            .iter()
            .enumerate()
            .map(|(u, &x)| if g.is_boundary(u) { x } else { x + rng.gen_range(0.0..0.5) })
            .collect();
        (f, h)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn forward_step_is_monotone_under_cfl(seed in any::<u64>()) {
            let g = random_graph(120, 2, 0.35, seed);
            let mut rng = crate::rng::stream(seed, crate::rng::Stream::PropertySuite);
            let (f, h) = random_pair(&g, &mut rng);
            let dt = max_stable_dt(&g);
            let s = |v: Vec<f64>| SolverState { values: v, t: 0.0, dt, step_index: 0, scheme: Scheme::Forward };
            let f1 = step_forward(&s(f), &g, CflPolicy::Enforce).unwrap();
            let h1 = step_forward(&s(h), &g, CflPolicy::Enforce).unwrap();
            for (a, b) in f1.values.iter().zip(&h1.values) {
                prop_assert!(a <= &(b + CHECK_TOL));
            }
        }

        #[test]
        fn shift_equivariance(seed in any::<u64>(), c in -5.0f64..5.0) {
            let g = random_graph(150, 1, 0.2, seed);
            let shifted = g.with_psi(g.psi().iter().map(|p| p + c).collect()).unwrap();
            for cfg in [SchemeConfig::forward(0.3, 0.9 * max_stable_dt(&g)), SchemeConfig::backward(0.3, 0.05)] {
                let a = solve(&g, &cfg, &Snapshots::Final).unwrap();
                let b = solve(&shifted, &cfg, &Snapshots::Final).unwrap();
                for (x, y) in a.last().values.iter().zip(&b.last().values) {
                    prop_assert!((x + c - y).abs() <= 1e-12 * (1.0 + c.abs()) * 10.0);
                }
            }
        }

        #[test]
        fn boundary_rows_stay_dirichlet(seed in any::<u64>()) {
            let g = random_graph(200, 2, 0.3, seed);
            for cfg in [SchemeConfig::forward(0.5, 0.9 * max_stable_dt(&g)), SchemeConfig::backward(0.5, 0.1)] {
                let traj = solve(&g, &cfg, &Snapshots::All).unwrap();
                for s in &traj.states {
                    for &u in g.boundary_idx() {
                        prop_assert_eq!(s.values[u].to_bits(), g.psi()[u].to_bits());
                    }
                    prop_assert!(s.values.iter().all(|v| v.is_finite()));
                }
            }
        }

        #[test]
        fn comparison_principle(seed in any::<u64>(), delta in 0.01f64..0.5) {
            let g = random_graph(150, 1, 0.2, seed);
            let sub = g.with_potential(g.potential().iter().map(|p| (p - delta).max(0.0)).collect()).unwrap();
            let sup = g.with_potential(g.potential().iter().map(|p| p + delta).collect()).unwrap();
            let cfg = SchemeConfig::forward(0.5, max_stable_dt(&g));
            let a = solve(&sub, &cfg, &Snapshots::All).unwrap();
            let b = solve(&sup, &cfg, &Snapshots::All).unwrap();
            for (sa, sb) in a.states.iter().zip(&b.states) {
                for (x, y) in sa.values.iter().zip(&sb.values) {
                    prop_assert!(x - y <= CHECK_TOL);
                }
            }
        }
    }
}
