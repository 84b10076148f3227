//! Random vertex clouds, the ε scaling law, the discrete boundary, and the
//! ε-neighbourhood weighted adjacency.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, dist, CellGrid, DomainSpec, GeometryError, NodeFunctions, PointCloud};
use crate::kernel::{KernelError, KernelProfile};
use crate::rng::{self, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("eps = {eps} gives interaction range {range} beyond the domain diameter {diameter}")]
    ScaleExceedsDomain { eps: f64, range: f64, diameter: f64 },
    #[error("no vertex within {threshold} of the boundary set")]
    EmptyBoundary { threshold: f64 },
    #[error("interior vertex {vertex} has no neighbour with positive weight")]
    IsolatedInteriorVertex { vertex: usize },
    #[error("eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("invalid graph data: {0}")]
    InvalidData(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Density {
    /// Uniform on the unit box, so `inf ρ = 1`.
    #[default]
    Uniform,
}

impl Density {
    pub fn lower_bound(&self) -> f64 {
        match self {
            Density::Uniform => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n: usize,
    pub m: usize,
    pub nu: f64,
    pub tau: f64,
    pub seed: u64,
    #[serde(default)]
    pub density: Density,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.n < 2 {
            return Err(GraphError::InvalidConfig(format!("n must be at least 2, got {}", self.n)));
        }
        if self.m == 0 {
            return Err(GraphError::InvalidConfig("m must be positive".into()));
        }
        if !(self.nu > 0.0) || !(self.tau > 0.0) {
            return Err(GraphError::InvalidConfig(format!(
                "nu and tau must be positive, got nu = {}, tau = {}",
                self.nu, self.tau
            )));
        }
        Ok(())
    }
}

/// `ε^{1+ν} = 8a⁻¹ √(2π e^{4/3}) ((1+τ)/(√(πm) c))^{1/m} (log n / n)^{1/m}`,
/// returned as `ε`.
pub fn scale_law(n: usize, m: usize, nu: f64, tau: f64, a: f64, density_lower: f64) -> f64 {
    let mf = m as f64;
    let nf = n as f64;
    let prefactor = 8.0 / a * (2.0 * std::f64::consts::PI * (4.0f64 / 3.0).exp()).sqrt();
    let mass = ((1.0 + tau) / ((std::f64::consts::PI * mf).sqrt() * density_lower)).powf(1.0 / mf);
    let rate = (nf.ln() / nf).powf(1.0 / mf);
    (prefactor * mass * rate).powf(1.0 / (1.0 + nu))
}

/// The scale `ε_n` of the random graph model.
///
/// Fails with [`GraphError::ScaleExceedsDomain`] when `ε_n r_g` exceeds the
/// diameter of the unit box, which means `n` is too small for the asymptotic
/// regime.
pub fn scale_parameter(cfg: &SamplingConfig, profile: &KernelProfile) -> Result<f64, GraphError> {
    cfg.validate()?;
    let eps = scale_law(cfg.n, cfg.m, cfg.nu, cfg.tau, profile.a(), cfg.density.lower_bound());
    check_scale(eps, cfg.m, profile)?;
    Ok(eps)
}

fn check_scale(eps: f64, m: usize, profile: &KernelProfile) -> Result<(), GraphError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(GraphError::NonPositiveEps(eps));
    }
    let diameter = (m as f64).sqrt();
    let range = eps * profile.r_g();
    if range > diameter {
        return Err(GraphError::ScaleExceedsDomain { eps, range, diameter });
    }
    Ok(())
}

/// `n` i.i.d. uniform points in `[0, 1]^m`, a pure function of `(seed, n, m)`.
pub fn sample_vertices(domain: &DomainSpec, cfg: &SamplingConfig) -> Result<PointCloud, GraphError> {
    cfg.validate()?;
    if cfg.m != domain.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: domain.dim(),
            got: cfg.m,
        }
        .into());
    }
    let mut rng = rng::stream(cfg.seed, Stream::GraphVertices);
    let coords = (0..cfg.n * cfg.m).map(|_| rng.gen::<f64>()).collect();
    Ok(PointCloud::new(cfg.m, coords)?)
}

/// Width of the tube around `Γ` that defines the discrete boundary:
/// `a ε^{1+ν} / (2√m)`.
pub fn boundary_threshold(eps: f64, nu: f64, a: f64, m: usize) -> f64 {
    a * eps.powf(1.0 + nu) / (2.0 * (m as f64).sqrt())
}

/// Bound on the coverage radius of the vertex cloud assumed by the
/// consistency theory: `a ε^{1+ν} / (4√m)`.
pub fn coverage_threshold(eps: f64, nu: f64, a: f64, m: usize) -> f64 {
    a * eps.powf(1.0 + nu) / (4.0 * (m as f64).sqrt())
}

/// Indices of vertices within [`boundary_threshold`] of `Γ`, ascending.
pub fn build_boundary(
    vertices: &PointCloud,
    domain: &DomainSpec,
    eps: f64,
    nu: f64,
    profile: &KernelProfile,
) -> Result<Vec<usize>, GraphError> {
    if !(eps > 0.0) {
        return Err(GraphError::NonPositiveEps(eps));
    }
    let threshold = boundary_threshold(eps, nu, profile.a(), domain.dim());
    select_boundary(vertices, domain, threshold)
}

/// Indices of vertices with `d(u, Γ) ≤ threshold`, ascending.
pub fn select_boundary(vertices: &PointCloud, domain: &DomainSpec, threshold: f64) -> Result<Vec<usize>, GraphError> {
    let mut idx = Vec::new();
    for (i, p) in vertices.iter().enumerate() {
        if domain.distance_to_gamma(p)? <= threshold {
            idx.push(i);
        }
    }
    if idx.is_empty() {
        return Err(GraphError::EmptyBoundary { threshold });
    }
    Ok(idx)
}

/// Symmetric weighted adjacency in compressed-row form, neighbours sorted by
/// index within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl Adjacency {
    fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let total = rows.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for row in rows {
            for (j, w) in row {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Adjacency {
            offsets,
            neighbors,
            weights,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored ordered pairs.
    pub fn num_entries(&self) -> usize {
        self.neighbors.len()
    }

    #[inline]
    pub fn row(&self, u: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[u]..self.offsets[u + 1];
        (&self.neighbors[r.clone()], &self.weights[r])
    }

    /// All ordered pairs `(u, v, weight)` in row order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_vertices()).flat_map(move |u| {
            let (nb, w) = self.row(u);
            nb.iter().zip(w).map(move |(&v, &wt)| (u, v as usize, wt))
        })
    }

    pub fn max_degree(&self) -> usize {
        self.offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }
}

fn row_for(vertices: &PointCloud, grid: &CellGrid, u: usize, eps: f64, profile: &KernelProfile) -> Vec<(u32, f64)> {
    let x = vertices.point(u);
    let range = eps * profile.r_g();
    let mut row = Vec::new();
    grid.for_each_near(x, |v| {
        let v_us = v as usize;
        if v_us == u {
            return;
        }
        let d = dist(x, vertices.point(v_us));
        if d <= range {
            row.push((v, profile.weight(eps, d)));
        }
    });
    row.sort_unstable_by_key(|e| e.0);
    row
}

/// Stores `J_ε(u, v)` for every ordered pair `u ≠ v` with `|u - v| ≤ ε r_g`,
/// using a uniform cell grid with cells at least `ε r_g` wide.
pub fn build_adjacency(vertices: &PointCloud, eps: f64, profile: &KernelProfile) -> Result<Adjacency, GraphError> {
    if !(eps > 0.0) {
        return Err(GraphError::NonPositiveEps(eps));
    }
    let grid = CellGrid::with_min_width(vertices, eps * profile.r_g());
    let rows: Vec<Vec<(u32, f64)>> = (0..vertices.len())
        .into_par_iter()
        .map(|u| row_for(vertices, &grid, u, eps, profile))
        .collect();
    Ok(Adjacency::from_rows(rows))
}

/// Same result as [`build_adjacency`] by checking all pairs.
pub fn build_adjacency_brute(vertices: &PointCloud, eps: f64, profile: &KernelProfile) -> Result<Adjacency, GraphError> {
    if !(eps > 0.0) {
        return Err(GraphError::NonPositiveEps(eps));
    }
    let range = eps * profile.r_g();
    let rows = (0..vertices.len())
        .map(|u| {
            (0..vertices.len())
                .filter(|&v| v != u)
                .filter_map(|v| {
                    let d = dist(vertices.point(u), vertices.point(v));
                    (d <= range).then(|| (v as u32, profile.weight(eps, d)))
                })
                .collect()
        })
        .collect();
    Ok(Adjacency::from_rows(rows))
}

/// First interior vertex without a neighbour of positive weight, if any.
pub fn find_isolated_interior(adjacency: &Adjacency, is_boundary: &[bool]) -> Option<usize> {
    (0..adjacency.num_vertices())
        .find(|&u| !is_boundary[u] && !adjacency.row(u).1.iter().any(|&w| w > 0.0))
}

/// How `ε` is chosen when building a graph from a sampling config.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsChoice {
    /// The scaling law, multiplied by the given factor.
    Law { factor: f64 },
    Manual(f64),
}

/// A weighted graph with boundary set and node data, ready for the solver.
#[derive(Clone, Debug)]
pub struct GraphProblem {
    vertices: PointCloud,
    boundary_idx: Vec<usize>,
    is_boundary: Vec<bool>,
    eps: f64,
    adjacency: Adjacency,
    kernel: KernelProfile,
    potential: Vec<f64>,
    psi: Vec<f64>,
}

impl GraphProblem {
    /// Validates the data and builds the adjacency.
    ///
    /// `potential` is indexed like the vertices; entries on the boundary are
    /// ignored by the schemes.
    pub fn new(
        vertices: PointCloud,
        boundary_idx: Vec<usize>,
        eps: f64,
        kernel: KernelProfile,
        potential: Vec<f64>,
        psi: Vec<f64>,
    ) -> Result<Self, GraphError> {
        let n = vertices.len();
        if boundary_idx.is_empty() {
            return Err(GraphError::EmptyBoundary { threshold: f64::NAN });
        }
        if boundary_idx.windows(2).any(|w| w[0] >= w[1]) || boundary_idx.last().is_some_and(|&i| i >= n) {
            return Err(GraphError::InvalidData(
                "boundary indices must be strictly increasing and in range".into(),
            ));
        }
        if potential.len() != n || psi.len() != n {
            return Err(GraphError::InvalidData(format!(
                "expected {n} node values, got {} potential and {} boundary values",
                potential.len(),
                psi.len()
            )));
        }
        if let Some(i) = potential.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(GraphError::InvalidData(format!(
                "potential at vertex {i} is {} (must be finite and non-negative)",
                potential[i]
            )));
        }
        if let Some(i) = psi.iter().position(|p| !p.is_finite()) {
            return Err(GraphError::InvalidData(format!("boundary data at vertex {i} is not finite")));
        }
        let adjacency = build_adjacency(&vertices, eps, &kernel)?;
        let mut is_boundary = vec![false; n];
        for &i in &boundary_idx {
            is_boundary[i] = true;
        }
        if let Some(vertex) = find_isolated_interior(&adjacency, &is_boundary) {
            return Err(GraphError::IsolatedInteriorVertex { vertex });
        }
        Ok(GraphProblem {
            vertices,
            boundary_idx,
            is_boundary,
            eps,
            adjacency,
            kernel,
            potential,
            psi,
        })
    }

    /// Builds with `P̃ = P|_V` and `ψ̃ = ψ|_V`.
    pub fn from_functions(
        vertices: PointCloud,
        boundary_idx: Vec<usize>,
        eps: f64,
        kernel: KernelProfile,
        fns: &NodeFunctions,
    ) -> Result<Self, GraphError> {
        fns.check_dim(vertices.dim())?;
        let potential = vertices.iter().map(|x| fns.potential(x)).collect();
        let psi = vertices.iter().map(|x| fns.psi(x)).collect();
        GraphProblem::new(vertices, boundary_idx, eps, kernel, potential, psi)
    }

    /// Samples vertices, picks `ε`, extracts `Γ_n` and builds the graph.
    pub fn sample(
        domain: &DomainSpec,
        cfg: &SamplingConfig,
        kernel: &KernelProfile,
        fns: &NodeFunctions,
        eps: EpsChoice,
    ) -> Result<Self, GraphError> {
        let eps = match eps {
            EpsChoice::Law { factor } => {
                cfg.validate()?;
                let e = factor * scale_law(cfg.n, cfg.m, cfg.nu, cfg.tau, kernel.a(), cfg.density.lower_bound());
                check_scale(e, cfg.m, kernel)?;
                e
            }
            EpsChoice::Manual(e) => {
                check_scale(e, cfg.m, kernel)?;
                e
            }
        };
        let vertices = sample_vertices(domain, cfg)?;
        let boundary = build_boundary(&vertices, domain, eps, cfg.nu, kernel)?;
        GraphProblem::from_functions(vertices, boundary, eps, kernel.clone(), fns)
    }

    /// Same graph with replaced potential values.
    pub fn with_potential(&self, potential: Vec<f64>) -> Result<Self, GraphError> {
        if potential.len() != self.len() {
            return Err(GraphError::InvalidData("potential length".into()));
        }
        if let Some(i) = potential.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(GraphError::InvalidData(format!("potential at vertex {i} is {}", potential[i])));
        }
        Ok(GraphProblem {
            potential,
            ..self.clone()
        })
    }

    /// Same graph with replaced boundary data.
    pub fn with_psi(&self, psi: Vec<f64>) -> Result<Self, GraphError> {
        if psi.len() != self.len() || psi.iter().any(|p| !p.is_finite()) {
            return Err(GraphError::InvalidData("boundary data must be finite, one per vertex".into()));
        }
        Ok(GraphProblem { psi, ..self.clone() })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vertices.dim()
    }

    pub fn vertices(&self) -> &PointCloud {
        &self.vertices
    }

    pub fn boundary_idx(&self) -> &[usize] {
        &self.boundary_idx
    }

    pub fn is_boundary(&self, u: usize) -> bool {
        self.is_boundary[u]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.is_boundary
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn kernel(&self) -> &KernelProfile {
        &self.kernel
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// `‖P̃‖_∞` over interior vertices.
    pub fn potential_sup(&self) -> f64 {
        self.interior().map(|u| self.potential[u]).fold(0.0, f64::max)
    }

    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&u| !self.is_boundary[u])
    }

    /// `d(u, Γ̃)` for every vertex, with `Γ̃` the boundary vertices.
    pub fn distance_to_boundary(&self) -> Vec<f64> {
        let gamma = self.vertices.select(&self.boundary_idx);
        let grid = CellGrid::for_nearest(&gamma);
        (0..self.len())
            .into_par_iter()
            .map(|u| {
                if self.is_boundary[u] {
                    0.0
                } else {
                    grid.nearest(&gamma, self.vertices.point(u), None).map_or(f64::INFINITY, |(_, d)| d)
                }
            })
            .collect()
    }

    /// Smallest distance between two distinct vertices.
    pub fn min_vertex_distance(&self) -> f64 {
        geometry::min_pair_distance(&self.vertices).unwrap_or(f64::INFINITY)
    }
}

/// Outcome of the coverage check for one vertex cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageCheck {
    pub coverage: f64,
    pub coverage_bound: f64,
    pub hausdorff: f64,
    pub hausdorff_bound: f64,
}

impl CoverageCheck {
    pub fn holds(&self) -> bool {
        self.coverage <= self.coverage_bound && self.hausdorff <= self.hausdorff_bound
    }
}

/// Measures the coverage radius of the cloud and `d_H(Γ, Γ_n)` against the
/// bounds of the random graph model. `Γ` is discretized with spacing
/// `10⁻³ ε`.
pub fn coverage_check(
    domain: &DomainSpec,
    vertices: &PointCloud,
    boundary_idx: &[usize],
    eps: f64,
    nu: f64,
    a: f64,
    probe_resolution: f64,
) -> Result<CoverageCheck, GraphError> {
    let m = domain.dim();
    let coverage = geometry::coverage_radius(domain, vertices, probe_resolution)?;
    let gamma = domain.discretize_gamma(1e-3 * eps)?;
    let gamma_n = vertices.select(boundary_idx);
    let hausdorff = geometry::hausdorff_distance(&gamma, &gamma_n)?;
    Ok(CoverageCheck {
        coverage,
        coverage_bound: coverage_threshold(eps, nu, a, m),
        hausdorff,
        hausdorff_bound: boundary_threshold(eps, nu, a, m),
    })
}
