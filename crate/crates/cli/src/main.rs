//! `graph-eikonal`: build graphs, solve, compute references, run
//! convergence studies and property suites.

mod run_config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use graph_eikonal::geometry::{DomainSpec, NodeFunctions};
use graph_eikonal::graph::{scale_law, EpsChoice, GraphError, GraphProblem, SamplingConfig};
use graph_eikonal::harness::{
    emit_report, parse_report, run_convergence, run_property_suite, write_report, Case, EpsMode, ExperimentConfig,
    HarnessError, ReportFormat, Suite,
};
use graph_eikonal::io::{read_indices, read_points, write_edges, write_indices, write_points, write_solution, IoError};
use graph_eikonal::kernel::{KernelError, KernelProfile};
use graph_eikonal::numfmt::g17;
use graph_eikonal::reference::{
    grid_max_stable_dt, grid_upwind_solve, write_grid_dump, ReferenceError, ReferenceSolution,
};
use graph_eikonal::solver::{CflPolicy, Scheme, SchemeConfig, Snapshots, Solver, SolverError};

use run_config::RunConfig;

#[derive(Parser)]
#[command(name = "graph-eikonal", version, about = "Time-dependent Eikonal equation on random geometric graphs")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph and write its vertices, boundary set and edges.
    Gen(GenArgs),
    /// Solve on a sampled (or given) graph and write the solution.
    Solve(SolveArgs),
    /// Solve the local problem with the upwind grid scheme.
    Reference(ReferenceArgs),
    /// Run a convergence study and write the report.
    Converge(ConvergeArgs),
    /// Run property suites; exits with 1 if any fails.
    Verify(VerifyArgs),
    /// Summarize a report file.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct GraphArgs {
    /// Dimension of the unit box when no domain block is given.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Fixed graph scale; overrides the scaling law.
    #[arg(long)]
    eps: Option<f64>,
    /// Multiplier on the scaling law.
    #[arg(long)]
    eps_factor: Option<f64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write edges.csv.
    #[arg(long)]
    edges: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Vertex CSV from `gen`; needs --boundary and --eps.
    #[arg(long, requires = "boundary")]
    vertices: Option<PathBuf>,
    #[arg(long, requires = "vertices")]
    boundary: Option<PathBuf>,
    /// `forward` or `backward`.
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Warn instead of failing when dt breaks the CFL bound.
    #[arg(long)]
    warn_cfl: bool,
    /// `final`, `all` or comma-separated times.
    #[arg(long, default_value = "final")]
    snapshots: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReferenceArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    spacing: f64,
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Defaults to half the grid stability bound.
    #[arg(long)]
    dt: Option<f64>,
    /// Binary dump of the final frame.
    #[arg(long)]
    out: PathBuf,
    /// Point CSV at which to evaluate the reference at time T.
    #[arg(long, requires = "values_out")]
    points: Option<PathBuf>,
    #[arg(long, requires = "points")]
    values_out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    eps_factor: Option<f64>,
    /// `forward` or `backward`.
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// `csv` or `json-lines`; guessed from the extension otherwise.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name, or `all`.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    format: Option<String>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "forward" | "fd" => Ok(Scheme::Forward),
        "backward" | "bd" => Ok(Scheme::Backward),
        _ => Err(format!("expected forward or backward, got {s:?}")),
    }
}

/// Exit code classes.
#[derive(Debug)]
enum Failure {
    SuiteFailed,
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::SuiteFailed => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidConfig(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<ReferenceError> for Failure {
    fn from(e: ReferenceError) -> Self {
        match e {
            ReferenceError::GridCflViolation { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Solver(s) => s.into(),
            HarnessError::Reference(r) => r.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

macro_rules! config_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Config(e.to_string())
            }
        }
    )*};
}

config_failure!(GraphError, KernelError, IoError, io::Error, graph_eikonal::geometry::GeometryError);

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("GRAPH_EIKONAL_THREADS") {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: GRAPH_EIKONAL_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let result = RunConfig::load(cli.config.as_deref())
        .map_err(Failure::Config)
        .and_then(|cfg| match cli.command {
            Command::Gen(a) => gen(&cfg, a),
            Command::Solve(a) => solve(&cfg, a),
            Command::Reference(a) => reference(&cfg, a),
            Command::Converge(a) => converge(&cfg, a),
            Command::Verify(a) => verify(a),
            Command::Report(a) => report(a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::SuiteFailed => eprintln!("error: property suite failed"),
                Failure::Config(m) => eprintln!("configuration error: {m}"),
                Failure::Numerical(m) => eprintln!("numerical error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn domain_of(cfg: &RunConfig, m: Option<usize>) -> Result<DomainSpec, Failure> {
    match (&cfg.domain, m) {
        (Some(d), Some(m)) if d.dim() != m => Err(Failure::Config(format!(
            "--m {m} disagrees with the domain block (m = {})",
            d.dim()
        ))),
        (Some(d), _) => Ok(d.clone()),
        (None, m) => Ok(DomainSpec::unit_box(m.unwrap_or(1))),
    }
}

fn functions_of(cfg: &RunConfig) -> NodeFunctions {
    cfg.functions.clone().unwrap_or_else(NodeFunctions::canonical)
}

fn kernel_of(cfg: &RunConfig) -> Result<KernelProfile, Failure> {
    Ok(cfg.kernel.clone().unwrap_or_default().build()?)
}

struct GraphSetup {
    domain: DomainSpec,
    fns: NodeFunctions,
    kernel: KernelProfile,
    sampling: SamplingConfig,
    eps: f64,
}

fn graph_setup(cfg: &RunConfig, a: &GraphArgs) -> Result<GraphSetup, Failure> {
    let domain = domain_of(cfg, a.m)?;
    let fns = functions_of(cfg);
    fns.check_dim(domain.dim())?;
    let kernel = kernel_of(cfg)?;
    let s = &cfg.sampling;
    let sampling = SamplingConfig {
        n: a.n.or(s.n).unwrap_or(1000),
        m: domain.dim(),
        nu: a.nu.or(s.nu).unwrap_or(0.5),
        tau: a.tau.or(s.tau).unwrap_or(1.0),
        seed: a.seed.or(s.seed).unwrap_or(0),
        density: Default::default(),
    };
    sampling.validate()?;
    let eps = match (a.eps, a.eps_factor) {
        (Some(e), _) => e,
        (None, Some(f)) => f * law(&sampling, &kernel),
        (None, None) => match (s.eps, s.eps_factor) {
            (Some(e), _) => e,
            (None, f) => f.unwrap_or(1.0) * law(&sampling, &kernel),
        },
    };
    Ok(GraphSetup {
        domain,
        fns,
        kernel,
        sampling,
        eps,
    })
}

fn law(s: &SamplingConfig, kernel: &KernelProfile) -> f64 {
    scale_law(s.n, s.m, s.nu, s.tau, kernel.a(), s.density.lower_bound())
}

fn sample(setup: &GraphSetup) -> Result<GraphProblem, Failure> {
    info!("sampling n = {} in {} dimensions with eps = {}", setup.sampling.n, setup.sampling.m, setup.eps);
    Ok(GraphProblem::sample(
        &setup.domain,
        &setup.sampling,
        &setup.kernel,
        &setup.fns,
        EpsChoice::Manual(setup.eps),
    )?)
}

fn gen(cfg: &RunConfig, a: GenArgs) -> CliResult {
    let setup = graph_setup(cfg, &a.graph)?;
    let g = sample(&setup)?;
    fs::create_dir_all(&a.out_dir)?;
    write_points(&a.out_dir.join("vertices.csv"), g.vertices())?;
    write_indices(&a.out_dir.join("boundary.csv"), g.boundary_idx())?;
    if a.edges {
        write_edges(&a.out_dir.join("edges.csv"), g.adjacency())?;
    }
    println!(
        "n = {}, boundary = {}, eps = {}, edges = {}",
        g.len(),
        g.boundary_idx().len(),
        g17(g.eps()),
        g.adjacency().num_entries()
    );
    Ok(())
}

fn parse_snapshots(s: &str) -> Result<Snapshots, Failure> {
    match s {
        "final" => Ok(Snapshots::Final),
        "all" => Ok(Snapshots::All),
        list => list
            .split(',')
            .map(|t| t.trim().parse::<f64>().ok().filter(|t| *t >= 0.0))
            .collect::<Option<Vec<f64>>>()
            .map(Snapshots::Times)
            .ok_or_else(|| Failure::Config(format!("bad snapshot list {list:?}"))),
    }
}

fn solve(cfg: &RunConfig, a: SolveArgs) -> CliResult {
    let setup = graph_setup(cfg, &a.graph)?;
    let graph = match (&a.vertices, &a.boundary) {
        (Some(v), Some(b)) => {
            let eps = a
                .graph
                .eps
                .or(cfg.sampling.eps)
                .ok_or_else(|| Failure::Config("a given graph needs --eps".into()))?;
            let vertices = read_points(v)?;
            GraphProblem::from_functions(vertices, read_indices(b)?, eps, setup.kernel.clone(), &setup.fns)?
        }
        _ => sample(&setup)?,
    };
    let sb = &cfg.scheme;
    let eps = graph.eps();
    let mut sc = SchemeConfig::new(
        a.scheme.or(sb.scheme).unwrap_or(Scheme::Forward),
        a.horizon.or(sb.horizon).unwrap_or(1.0),
        a.dt.or(sb.dt).unwrap_or(0.25 * eps.powf(1.5)),
    );
    if let Some(p) = sb.cfl_policy {
        sc.cfl_policy = p;
    }
    if a.warn_cfl {
        sc.cfl_policy = CflPolicy::WarnOnly;
    }
    if let Some(t) = sb.implicit_tol {
        sc.implicit_tol = t;
    }
    if let Some(k) = sb.implicit_max_sweeps {
        sc.implicit_max_sweeps = k;
    }
    if let Some(mode) = sb.implicit_mode {
        sc.implicit_mode = mode;
    }
    let snaps = parse_snapshots(&a.snapshots)?;
    let solver = Solver::new(&graph, sc)?;
    let traj = solver.run(solver.initial_state(), &snaps, |_, _| {})?;
    write_solution(&a.out, graph.vertices(), &traj.states)?;
    println!(
        "solved {} steps of dt = {}; {} snapshots written to {}",
        solver.config().num_steps(),
        g17(solver.config().dt),
        traj.states.len(),
        a.out.display()
    );
    Ok(())
}

fn reference(cfg: &RunConfig, a: ReferenceArgs) -> CliResult {
    let domain = domain_of(cfg, a.m)?;
    let fns = functions_of(cfg);
    let horizon = a.horizon.or(cfg.scheme.horizon).unwrap_or(1.0);
    let dt = a.dt.unwrap_or(0.5 * grid_max_stable_dt(a.spacing, domain.dim()));
    let grid = grid_upwind_solve(&domain, &fns, a.spacing, horizon, dt, &[])?;
    let file = fs::File::create(&a.out).map_err(|e| Failure::Config(format!("{}: {e}", a.out.display())))?;
    let mut out = io::BufWriter::new(file);
    write_grid_dump(&grid, &mut out)?;
    out.flush()?;
    if let (Some(p), Some(v)) = (&a.points, &a.values_out) {
        let pts = read_points(p)?;
        let reference = ReferenceSolution::Grid(grid.clone());
        let mut text = String::from("index,value\n");
        for (i, x) in pts.iter().enumerate() {
            text.push_str(&format!("{i},{}\n", g17(reference.eval(x, horizon)?)));
        }
        fs::write(v, text)?;
    }
    println!(
        "grid {} nodes per dimension, spacing {}, dt {}, T {}",
        grid.nodes_per_dim(),
        g17(a.spacing),
        g17(dt),
        g17(horizon)
    );
    Ok(())
}

fn report_format(format: Option<&str>, path: &Path) -> Result<ReportFormat, Failure> {
    match format {
        Some(f) => ReportFormat::from_name(f).ok_or_else(|| Failure::Config(format!("unknown report format {f:?}"))),
        None => Ok(ReportFormat::from_path(path)),
    }
}

fn converge(cfg: &RunConfig, a: ConvergeArgs) -> CliResult {
    let mut exp = match &cfg.experiment {
        Some(e) => e.clone(),
        None => ExperimentConfig::new(Case::Canonical1D, vec![500, 1000, 2000], vec![0, 1, 2]),
    };
    if let Some(c) = &a.case {
        exp.case = Case::from_name(c).ok_or_else(|| Failure::Config(format!("unknown case {c:?}")))?;
    }
    if a.m.is_some() {
        exp.m = a.m;
    }
    if let Some(n) = a.n_list {
        exp.n_list = n;
    }
    if let Some(s) = a.seeds {
        exp.seeds = s;
    }
    if let Some(f) = a.eps_factor {
        exp.eps_mode = EpsMode::TheoremLaw { factor: f };
    }
    if let Some(s) = a.scheme {
        exp.scheme = s;
    }
    if let Some(t) = a.horizon {
        exp.horizon = t;
    }
    if cfg.experiment.is_none() {
        if let Some(k) = &cfg.kernel {
            exp.kernel = k.clone();
        }
    }
    let format = report_format(a.format.as_deref(), &a.out)?;
    let rep = run_convergence(&exp)?;
    emit_report(&rep, format, &a.out)?;
    print!("{}", rep.summary.to_text());
    let failed: usize = rep.summary.per_n.iter().map(|p| p.failed_rows).sum();
    if failed > 0 {
        eprintln!("{failed} rows failed; see the status column");
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> CliResult {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        a.suite
            .split(',')
            .map(|s| Suite::from_name(s.trim()).ok_or_else(|| Failure::Config(format!("unknown suite {s:?}"))))
            .collect::<Result<_, _>>()?
    };
    let mut all_pass = true;
    for s in suites {
        let r = run_property_suite(s, a.trials, a.seed)?;
        all_pass &= r.pass;
        println!(
            "{} {} trials={} checks={} violations={} worst_slack={} {}",
            if r.pass { "PASS" } else { "FAIL" },
            s.name(),
            r.trials,
            r.checks,
            r.violations,
            g17(r.worst_slack),
            r.detail
        );
    }
    if all_pass {
        Ok(())
    } else {
        Err(Failure::SuiteFailed)
    }
}

fn report(a: ReportArgs) -> CliResult {
    let format = report_format(a.format.as_deref(), &a.input)?;
    let rep = parse_report(&a.input, format)?;
    print!("{}", rep.summary.to_text());
    if log::log_enabled!(log::Level::Debug) {
        write_report(&mut io::stderr(), &rep, ReportFormat::Csv)?;
    }
    Ok(())
}
