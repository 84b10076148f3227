//! The ten acceptance criteria, run in order. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use graph_eikonal::geometry::DomainSpec;
use graph_eikonal::graph::{build_boundary, coverage_check, sample_vertices, scale_parameter, EpsChoice, GraphProblem, SamplingConfig};
use graph_eikonal::harness::{
    adjacency_oracle, cfl_guard, comparison, emit_report, fw_bw_agreement, fw_bw_graph, row_eps, run_convergence, Case,
    DtRule, EpsMode, ExperimentConfig, ReportFormat, FW_BW_EPS, FW_BW_N,
};
use graph_eikonal::kernel::KernelProfile;
use graph_eikonal::solver::{
    max_stable_dt, RegularityConstants, RegularityMonitor, RegularityReport, Scheme, Snapshots, Solver,
};

/// Multipliers on the scaling law that bring `ε r_g` inside the unit box at
/// these sizes.
const FACTOR_1D: f64 = 0.5;
const FACTOR_2D: f64 = 0.12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn canonical_1d() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Case::Canonical1D, vec![500, 1000, 2000, 4000, 8000], (0..5).collect());
    cfg.nu = 0.5;
    cfg.tau = 1.0;
    cfg.dt_rule = DtRule::EpsPower { c: 0.25, p: 1.5 };
    cfg.horizon = 1.0;
    cfg.eps_mode = EpsMode::TheoremLaw { factor: FACTOR_1D };
    cfg
}

fn canonical_2d() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Case::Canonical2D, vec![1000, 2000, 4000, 8000], (0..3).collect());
    cfg.eps_mode = EpsMode::TheoremLaw { factor: FACTOR_2D };
    cfg
}

fn means(report: &graph_eikonal::harness::ConvergenceReport) -> String {
    report
        .summary
        .per_n
        .iter()
        .map(|p| format!("{}:{:.4}", p.n, p.mean_error))
        .collect::<Vec<_>>()
        .join(" ")
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let r = match run_convergence(&canonical_1d()) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let elapsed = start.elapsed();
    let s = &r.summary;
    let ratio = s.per_n.last().unwrap().mean_error / s.per_n[0].mean_error;
    let slope = s.slope.unwrap_or(f64::NAN);
    let pass = s.decreasing_with_inversions(0)
        && ratio <= 0.5
        && slope > 0.0
        && slope <= 1.0
        && elapsed < Duration::from_secs(180);
    Outcome {
        pass,
        detail: format!(
            "mean errors {}; err(8000)/err(500) = {ratio:.3}; slope {slope:.3} (theory {:.3}); {:.1}s",
            means(&r),
            s.theoretical_exponent.unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let r = match run_convergence(&canonical_2d()) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let elapsed = start.elapsed();
    let slope = r.summary.slope.unwrap_or(f64::NAN);
    let pass = r.summary.decreasing_with_inversions(1) && slope > 0.0 && elapsed < Duration::from_secs(600);
    Outcome {
        pass,
        detail: format!(
            "mean errors {}; slope {slope:.3} (theory {:.3}); {:.1}s",
            means(&r),
            r.summary.theoretical_exponent.unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_3() -> Outcome {
    match comparison(100, 3) {
        Ok(r) => Outcome {
            pass: r.pass && r.violations == 0,
            detail: format!("{} checks, {} violations, worst slack {:.3e}", r.checks, r.violations, r.worst_slack),
        },
        Err(e) => fail(e),
    }
}

/// Forward and backward solves of the experiment configurations with the
/// regularity monitor attached (first seed of each `n`).
fn monitored_runs(cfg: &ExperimentConfig, schemes: &[Scheme]) -> Result<Vec<(String, RegularityReport)>, String> {
    let kernel = cfg.kernel.build().map_err(|e| e.to_string())?;
    let m = cfg.dim();
    let fns = cfg.case.functions(m);
    let mut out = Vec::new();
    for (i, &n) in cfg.n_list.iter().enumerate() {
        let eps = row_eps(cfg, &kernel, i);
        let dt = cfg.dt_rule.dt(eps, kernel.normalization(), kernel.sup());
        let g = GraphProblem::sample(
            &cfg.case.domain(m),
            &cfg.sampling(n, cfg.seeds[0]),
            &kernel,
            &fns,
            EpsChoice::Manual(eps),
        )
        .map_err(|e| e.to_string())?;
        for &scheme in schemes {
            let mut sc = cfg.scheme_config(dt);
            sc.scheme = scheme;
            let solver = Solver::new(&g, sc).map_err(|e| e.to_string())?;
            let mut mon = RegularityMonitor::new(&g, RegularityConstants::new(&g, fns.psi_lipschitz(), cfg.horizon));
            let init = solver.initial_state();
            mon.observe_initial(&init);
            solver
                .run(init, &Snapshots::Final, |prev, next| mon.observe_step(prev, next))
                .map_err(|e| e.to_string())?;
            out.push((format!("{} n={n} {:?}", cfg.case.name(), scheme), mon.finish()));
        }
    }
    Ok(out)
}

fn shipped_trajectories() -> Result<Vec<(String, RegularityReport)>, String> {
    let both = [Scheme::Forward, Scheme::Backward];
    let mut runs = monitored_runs(&canonical_1d(), &both)?;
    runs.extend(monitored_runs(&canonical_2d(), &[Scheme::Forward])?);
    for m in [1, 2] {
        let mut cfg = ExperimentConfig::new(Case::NonconstantP, vec![1000, 4000], vec![0]);
        cfg.m = Some(m);
        cfg.eps_mode = EpsMode::TheoremLaw {
            factor: if m == 1 { FACTOR_1D } else { FACTOR_2D },
        };
        runs.extend(monitored_runs(&cfg, &both)?);
    }
    Ok(runs)
}

fn criterion_4(runs: &[(String, RegularityReport)]) -> Outcome {
    let worst = runs
        .iter()
        .max_by(|a, b| a.1.time_increment.worst_excess.total_cmp(&b.1.time_increment.worst_excess))
        .unwrap();
    let max_rate = runs
        .iter()
        .map(|(_, r)| r.max_time_rate / r.constants.time_lipschitz)
        .fold(0.0, f64::max);
    Outcome {
        pass: runs.iter().all(|(_, r)| r.time_increment.pass),
        detail: format!(
            "{} trajectories; largest rate / L = {max_rate:.4}; worst excess {:.3e} ({})",
            runs.len(),
            worst.1.time_increment.worst_excess,
            worst.0
        ),
    }
}

fn criterion_5(runs: &[(String, RegularityReport)]) -> Outcome {
    let canonical: Vec<_> = runs.iter().filter(|(l, _)| l.starts_with("canonical")).collect();
    let pass = canonical
        .iter()
        .all(|(_, r)| r.barrier_upper.pass && r.barrier_lower.as_ref().is_some_and(|b| b.pass));
    let upper = canonical.iter().map(|(_, r)| r.barrier_upper.worst_excess).fold(f64::NEG_INFINITY, f64::max);
    let lower = canonical
        .iter()
        .filter_map(|(_, r)| r.barrier_lower.as_ref().map(|b| b.worst_excess))
        .fold(f64::NEG_INFINITY, f64::max);
    let k2 = canonical.iter().map(|(_, r)| r.constants.k2).fold(0.0, f64::max);
    Outcome {
        pass,
        detail: format!(
            "{} canonical trajectories; worst upper excess {upper:.3e}, worst lower excess {lower:.3e}; largest K2 {k2:.3e}",
            canonical.len()
        ),
    }
}

fn criterion_6() -> Outcome {
    let r = cfl_guard(100, 6);
    Outcome {
        pass: r.pass,
        detail: r.detail,
    }
}

fn criterion_7() -> Outcome {
    let study = fw_bw_graph(FW_BW_N, FW_BW_EPS, 7).and_then(|g| {
        let dt0 = max_stable_dt(&g);
        fw_bw_agreement(&g, 1.0, dt0, 3)
    });
    match study {
        Ok(s) => Outcome {
            pass: s.ratios_within(0.4, 0.6) && s.ratios.len() == 3,
            detail: format!("n = {FW_BW_N}, eps = {FW_BW_EPS}; diffs {:?}; ratios {:?}", s.diffs, s.ratios),
        },
        Err(e) => fail(e),
    }
}

fn criterion_8() -> Outcome {
    match adjacency_oracle(10, 8) {
        Ok(r) => Outcome {
            pass: r.pass,
            detail: format!("{} rows compared, {} mismatches, worst weight slack {:.3e}", r.checks, r.violations, r.worst_slack),
        },
        Err(e) => fail(e),
    }
}

fn criterion_9() -> Outcome {
    let kernel = KernelProfile::triangle();
    let domain = DomainSpec::unit_box(1);
    let mut hits = 0;
    let mut worst_cov: f64 = 0.0;
    let mut worst_haus: f64 = 0.0;
    let mut eps = f64::NAN;
    for seed in 0..100u64 {
        let cfg = SamplingConfig {
            n: 10_000,
            m: 1,
            nu: 0.5,
            tau: 1.0,
            seed,
            density: Default::default(),
        };
        let mut run = || -> Result<bool, String> {
            eps = scale_parameter(&cfg, &kernel).map_err(|e| e.to_string())?;
            let v = sample_vertices(&domain, &cfg).map_err(|e| e.to_string())?;
            let b = build_boundary(&v, &domain, eps, cfg.nu, &kernel).map_err(|e| e.to_string())?;
            let c = coverage_check(&domain, &v, &b, eps, cfg.nu, kernel.a(), 1e-5).map_err(|e| e.to_string())?;
            worst_cov = worst_cov.max(c.coverage / c.coverage_bound);
            worst_haus = worst_haus.max(c.hausdorff / c.hausdorff_bound);
            Ok(c.holds())
        };
        // A draw with no boundary vertex counts as a miss.
        if run().unwrap_or(false) {
            hits += 1;
        }
    }
    Outcome {
        pass: hits >= 95,
        detail: format!(
            "eps = {eps:.5}; event held in {hits}/100 draws; worst coverage/bound {worst_cov:.3}, worst d_H/bound {worst_haus:.3}"
        ),
    }
}

fn criterion_10() -> Outcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let mut cfg = ExperimentConfig::new(Case::Canonical1D, vec![500, 1000], vec![0, 1, 2]);
    cfg.eps_mode = EpsMode::TheoremLaw { factor: FACTOR_1D };
    let mut same = true;
    let mut sizes = Vec::new();
    for format in [ReportFormat::Csv, ReportFormat::JsonLines] {
        let mut files = Vec::new();
        for k in 0..2 {
            let path = dir.path().join(format!("r{k}"));
            let written = run_convergence(&cfg)
                .map_err(|e| e.to_string())
                .and_then(|r| emit_report(&r, format, &path).map_err(|e| e.to_string()));
            if let Err(e) = written {
                return fail(e);
            }
            files.push(std::fs::read(&path).unwrap_or_default());
        }
        same &= !files[0].is_empty() && files[0] == files[1];
        sizes.push(files[0].len());
    }
    Outcome {
        pass: same,
        detail: format!("two runs per format compared byte for byte (csv {} bytes, json-lines {} bytes)", sizes[0], sizes[1]),
    }
}

fn fail(e: impl std::fmt::Display) -> Outcome {
    Outcome {
        pass: false,
        detail: format!("error: {e}"),
    }
}

fn main() -> ExitCode {
    let names = [
        "canonical 1-D convergence",
        "canonical 2-D convergence",
        "discrete comparison principle",
        "time-Lipschitz bound",
        "barrier sandwich",
        "CFL guard",
        "forward/backward consistency",
        "adjacency oracle",
        "coverage event frequency",
        "determinism",
    ];
    let runs = shipped_trajectories();
    let from_runs = |f: fn(&[(String, RegularityReport)]) -> Outcome| match &runs {
        Ok(r) => f(r),
        Err(e) => fail(e),
    };
    let mut all = true;
    for (i, name) in names.iter().enumerate() {
        let start = Instant::now();
        let o = match i + 1 {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => from_runs(criterion_4),
            5 => from_runs(criterion_5),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            9 => criterion_9(),
            _ => criterion_10(),
        };
        all &= o.pass;
        println!(
            "{} criterion {:>2} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
