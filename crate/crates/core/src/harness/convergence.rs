use std::time::Instant;

use log::{debug, info};
use rand::Rng;
use rayon::prelude::*;

use crate::graph::{scale_law, EpsChoice, GraphProblem};
use crate::kernel::KernelProfile;
use crate::reference::{grid_max_stable_dt, grid_upwind_solve, ReferenceSolution};
use crate::rng::{self, Stream};
use crate::solver::{Snapshots, Solver, SolverState};

use super::config::{EpsMode, ExperimentConfig};
use super::report::{ConvergenceReport, ConvergenceRow};
use super::HarnessError;

/// `ε` for the `i`-th entry of `n_list`.
pub fn row_eps(cfg: &ExperimentConfig, kernel: &KernelProfile, i: usize) -> f64 {
    match &cfg.eps_mode {
        EpsMode::TheoremLaw { factor } => {
            factor * scale_law(cfg.n_list[i], cfg.dim(), cfg.nu, cfg.tau, kernel.a(), 1.0)
        }
        EpsMode::Manual { values } => values[i],
    }
}

/// Levels at which the error is measured.
pub fn snapshot_times(cfg: &ExperimentConfig) -> Snapshots {
    match &cfg.snapshots {
        Some(ts) => Snapshots::Times(ts.clone()),
        None if cfg.case.is_canonical() => Snapshots::All,
        None => Snapshots::Times((1..=4).map(|k| cfg.horizon * k as f64 / 4.0).collect()),
    }
}

fn default_reference_spacing(m: usize) -> f64 {
    if m == 1 {
        1.0 / 2048.0
    } else {
        1.0 / 256.0
    }
}

/// The closed form for the canonical cases, otherwise one upwind grid
/// solve with frames around every time any row will ask for.
pub fn build_reference(cfg: &ExperimentConfig, kernel: &KernelProfile) -> Result<ReferenceSolution, HarnessError> {
    let m = cfg.dim();
    let domain = cfg.case.domain(m);
    let fns = cfg.case.functions(m);
    if cfg.case.is_canonical() {
        return Ok(ReferenceSolution::analytic(&domain, &fns)?);
    }
    let snaps = snapshot_times(cfg);
    let mut times = Vec::new();
    for i in 0..cfg.n_list.len() {
        let dt = cfg.dt_rule.dt(row_eps(cfg, kernel, i), kernel.normalization(), kernel.sup());
        let n_steps = cfg.scheme_config(dt).num_steps();
        times.extend(snaps.step_set(dt, n_steps).into_iter().map(|k| k as f64 * dt));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let horizon = times.last().copied().unwrap_or(cfg.horizon).max(cfg.horizon);
    let h = cfg.reference_spacing.unwrap_or_else(|| default_reference_spacing(m));
    let grid_dt = 0.5 * grid_max_stable_dt(h, m);
    info!("grid reference: spacing {h}, dt {grid_dt}, {} frame times", times.len());
    let grid = grid_upwind_solve(&domain, &fns, h, horizon, grid_dt, &times)?;
    Ok(ReferenceSolution::Grid(grid))
}

/// `P̃(u) + δ ξ_u` with `ξ_u` uniform on `[-1, 1]`, clamped at 0.
pub fn perturb_potential(graph: &GraphProblem, delta: f64, seed: u64) -> Result<GraphProblem, HarnessError> {
    let mut rng = rng::stream(seed, Stream::NodeDataNoise);
    let p: Vec<f64> = graph
        .potential()
        .iter()
        .map(|&p| (p + delta * rng.gen_range(-1.0..=1.0)).max(0.0))
        .collect();
    Ok(graph.with_potential(p)?)
}

fn sup_error(state: &SolverState, graph: &GraphProblem, reference: &ReferenceSolution) -> Result<f64, HarnessError> {
    let pts = graph.vertices();
    let errs: Result<Vec<f64>, _> = (0..graph.len())
        .into_par_iter()
        .map(|u| reference.eval(pts.point(u), state.t).map(|r| (state.values[u] - r).abs()))
        .collect();
    Ok(errs?.into_iter().fold(0.0, f64::max))
}

struct RowOutcome {
    eps: f64,
    dt: f64,
    result: Result<f64, HarnessError>,
}

fn run_row(
    cfg: &ExperimentConfig,
    kernel: &KernelProfile,
    reference: &ReferenceSolution,
    i: usize,
    seed: u64,
) -> RowOutcome {
    let eps = row_eps(cfg, kernel, i);
    let dt = cfg.dt_rule.dt(eps, kernel.normalization(), kernel.sup());
    let result = (|| {
        let m = cfg.dim();
        let mut graph = GraphProblem::sample(
            &cfg.case.domain(m),
            &cfg.sampling(cfg.n_list[i], seed),
            kernel,
            &cfg.case.functions(m),
            EpsChoice::Manual(eps),
        )?;
        if let Some(delta) = cfg.potential_noise {
            graph = perturb_potential(&graph, delta, seed)?;
        }
        let solver = Solver::new(&graph, cfg.scheme_config(dt))?;
        let n_steps = solver.config().num_steps();
        let keep = snapshot_times(cfg).step_set(dt, n_steps);
        let init = solver.initial_state();
        let mut worst = if keep.first() == Some(&0) {
            sup_error(&init, &graph, reference)?
        } else {
            0.0
        };
        let mut eval_err = None;
        solver.run(init, &Snapshots::Final, |_, next| {
            if eval_err.is_none() && keep.binary_search(&next.step_index).is_ok() {
                match sup_error(next, &graph, reference) {
                    Ok(e) => worst = worst.max(e),
                    Err(e) => eval_err = Some(e),
                }
            }
        })?;
        if let Some(e) = eval_err {
            return Err(e);
        }
        Ok(worst)
    })();
    RowOutcome { eps, dt, result }
}

/// Runs every `(n, seed)` row; rows run in parallel and are merged in
/// `(n, seed)` order. A failed row is recorded and the others continue.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    cfg.validate()?;
    let kernel = cfg.kernel.build()?;
    let reference = build_reference(cfg, &kernel)?;
    let jobs: Vec<(usize, u64)> = (0..cfg.n_list.len())
        .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let outcomes: Vec<(ConvergenceRow, f64)> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let start = Instant::now();
            let out = run_row(cfg, &kernel, &reference, i, seed);
            let wall = start.elapsed().as_secs_f64();
            let n = cfg.n_list[i];
            let (sup_error, error) = match out.result {
                Ok(e) => {
                    debug!("n = {n}, seed = {seed}: sup error {e}");
                    (Some(e), None)
                }
                Err(e) => {
                    info!("n = {n}, seed = {seed}: {e}");
                    (None, Some(e.to_string()))
                }
            };
            let row = ConvergenceRow {
                case: cfg.case,
                m: cfg.dim(),
                nu: cfg.nu,
                n,
                seed,
                eps: Some(out.eps),
                dt: Some(out.dt),
                sup_error,
                error,
            };
            (row, wall)
        })
        .collect();
    let (rows, wall_times): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let mut report = ConvergenceReport::from_rows(rows);
    report.wall_times = wall_times;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Case, DtRule};

    fn small(case: Case) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(case, vec![300, 600], vec![0, 1]);
        cfg.eps_mode = EpsMode::TheoremLaw { factor: 0.4 };
        cfg.horizon = 0.5;
        cfg
    }

    #[test]
    fn rows_are_ordered_and_deterministic() {
        let cfg = small(Case::Canonical1D);
        let a = run_convergence(&cfg).unwrap();
        let b = run_convergence(&cfg).unwrap();
        assert_eq!(a, b);
        let keys: Vec<(usize, u64)> = a.rows.iter().map(|r| (r.n, r.seed)).collect();
        assert_eq!(keys, vec![(300, 0), (300, 1), (600, 0), (600, 1)]);
        assert!(a.rows.iter().all(|r| r.error.is_none() && r.sup_error.unwrap() > 0.0));
        assert_eq!(a.wall_times.len(), 4);
    }

    #[test]
    fn fewer_snapshots_never_increase_the_error() {
        let mut cfg = small(Case::Canonical1D);
        let all = run_convergence(&cfg).unwrap();
        cfg.snapshots = Some(vec![0.1, 0.5]);
        let some = run_convergence(&cfg).unwrap();
        for (a, s) in all.rows.iter().zip(&some.rows) {
            assert!(s.sup_error.unwrap() <= a.sup_error.unwrap());
        }
    }

    #[test]
    fn row_errors_are_recorded() {
        let mut cfg = small(Case::Canonical1D);
        // The second eps reaches beyond the unit interval.
        cfg.eps_mode = EpsMode::Manual { values: vec![0.2, 1.5] };
        let r = run_convergence(&cfg).unwrap();
        assert!(r.rows[0].error.is_none());
        assert!(r.rows[2].error.as_deref().unwrap().contains("beyond the domain"));
        assert_eq!(r.summary.per_n[1].failed_rows, 2);
    }

    #[test]
    fn forward_cfl_violation_is_a_row_error() {
        let mut cfg = small(Case::Canonical1D);
        cfg.dt_rule = DtRule::EpsPower { c: 10.0, p: 1.0 };
        let r = run_convergence(&cfg).unwrap();
        assert!(r.rows.iter().all(|row| row.error.as_deref().unwrap().contains("stability bound")));
    }

    #[test]
    fn nonconstant_case_uses_the_grid() {
        let mut cfg = small(Case::NonconstantP);
        cfg.reference_spacing = Some(1.0 / 512.0);
        let kernel = cfg.kernel.build().unwrap();
        assert!(build_reference(&cfg, &kernel).unwrap().grid_spacing().is_some());
        let r = run_convergence(&cfg).unwrap();
        for row in &r.rows {
            let e = row.sup_error.unwrap();
            assert!(e > 0.0 && e < 0.5, "{e}");
        }
    }

    #[test]
    fn noise_is_seeded_and_clamped() {
        let cfg = small(Case::Canonical1D);
        let kernel = cfg.kernel.build().unwrap();
        let g = GraphProblem::sample(
            &cfg.case.domain(1),
            &cfg.sampling(300, 0),
            &kernel,
            &cfg.case.functions(1),
            EpsChoice::Manual(0.2),
        )
        .unwrap();
        let a = perturb_potential(&g, 2.0, 7).unwrap();
        let b = perturb_potential(&g, 2.0, 7).unwrap();
        assert_eq!(a.potential(), b.potential());
        assert!(a.potential().iter().all(|&p| (0.0..=3.0).contains(&p)));
        assert!(a.potential().iter().any(|&p| p == 0.0));
    }
}
