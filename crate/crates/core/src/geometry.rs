//! The continuum domain `Ω = [0, 1]^m`, the boundary set `Γ`, node data, and
//! set-distance utilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when testing that a point lies in the unit box.
const BOX_TOL: f64 = 1e-12;
/// Upper bound on the size of any generated point set.
const MAX_GENERATED_POINTS: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point {point:?} lies outside the unit box")]
    PointOutsideDomain { point: Vec<f64> },
    #[error("point set is empty")]
    EmptySet,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Euclidean distance.
#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `n` points in `ℝ^m`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    m: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(m: usize, coords: Vec<f64>) -> Result<Self, GeometryError> {
        if m == 0 {
            return Err(GeometryError::InvalidDomain("dimension must be positive".into()));
        }
        if coords.len() % m != 0 {
            return Err(GeometryError::DimensionMismatch {
                expected: m,
                got: coords.len() % m,
            });
        }
        Ok(PointCloud { m, coords })
    }

    pub fn empty(m: usize) -> Self {
        PointCloud { m, coords: Vec::new() }
    }

    pub fn from_rows(m: usize, rows: &[Vec<f64>]) -> Result<Self, GeometryError> {
        let mut coords = Vec::with_capacity(rows.len() * m);
        for row in rows {
            if row.len() != m {
                return Err(GeometryError::DimensionMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        PointCloud::new(m, coords)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.m..(i + 1) * self.m]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.m)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.m, "point dimension");
        self.coords.extend_from_slice(p);
    }

    /// The sub-cloud at the given indices, in order.
    pub fn select(&self, idx: &[usize]) -> PointCloud {
        let mut out = PointCloud::empty(self.m);
        for &i in idx {
            out.push(self.point(i));
        }
        out
    }
}

/// Boundary set `Γ ⊂ [0, 1]^m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaSpec {
    /// The boundary of the unit box.
    #[serde(rename = "box")]
    BoxBoundary,
    /// The sphere `{x : |x - center| = radius}`.
    SphereShell { center: Vec<f64>, radius: f64 },
    PointSet { points: Vec<Vec<f64>> },
    Union { parts: Vec<GammaSpec> },
}

impl GammaSpec {
    fn validate(&self, m: usize) -> Result<(), GeometryError> {
        match self {
            GammaSpec::BoxBoundary => Ok(()),
            GammaSpec::SphereShell { center, radius } => {
                if center.len() != m {
                    return Err(GeometryError::DimensionMismatch {
                        expected: m,
                        got: center.len(),
                    });
                }
                if !(*radius > 0.0) {
                    return Err(GeometryError::InvalidDomain(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
                if center.iter().any(|&c| c - radius < -BOX_TOL || c + radius > 1.0 + BOX_TOL) {
                    return Err(GeometryError::InvalidDomain(
                        "sphere shell leaves the unit box".into(),
                    ));
                }
                Ok(())
            }
            GammaSpec::PointSet { points } => {
                if points.is_empty() {
                    return Err(GeometryError::EmptySet);
                }
                for p in points {
                    if p.len() != m {
                        return Err(GeometryError::DimensionMismatch {
                            expected: m,
                            got: p.len(),
                        });
                    }
                    if !in_unit_box(p) {
                        return Err(GeometryError::PointOutsideDomain { point: p.clone() });
                    }
                }
                Ok(())
            }
            GammaSpec::Union { parts } => {
                if parts.is_empty() {
                    return Err(GeometryError::EmptySet);
                }
                parts.iter().try_for_each(|p| p.validate(m))
            }
        }
    }

    fn distance(&self, x: &[f64]) -> f64 {
        match self {
            GammaSpec::BoxBoundary => x
                .iter()
                .map(|&c| c.min(1.0 - c))
                .fold(f64::INFINITY, f64::min)
                .max(0.0),
            GammaSpec::SphereShell { center, radius } => (dist(x, center) - radius).abs(),
            GammaSpec::PointSet { points } => points
                .iter()
                .map(|p| dist(x, p))
                .fold(f64::INFINITY, f64::min),
            GammaSpec::Union { parts } => parts
                .iter()
                .map(|p| p.distance(x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn discretize_into(&self, m: usize, spacing: f64, out: &mut PointCloud) -> Result<(), GeometryError> {
        match self {
            GammaSpec::BoxBoundary => {
                if m == 1 {
                    out.push(&[0.0]);
                    out.push(&[1.0]);
                    return Ok(());
                }
                let k = (1.0 / spacing).ceil() as usize;
                let count = 2 * m * (k + 1).pow(m as u32 - 1);
                guard_size(count)?;
                let mut idx = vec![0usize; m];
                let total = (k + 1).pow(m as u32);
                for flat in 0..total {
                    let mut r = flat;
                    for c in idx.iter_mut() {
                        *c = r % (k + 1);
                        r /= k + 1;
                    }
                    if idx.iter().any(|&c| c == 0 || c == k) {
                        let p: Vec<f64> = idx.iter().map(|&c| c as f64 / k as f64).collect();
                        out.push(&p);
                    }
                }
                Ok(())
            }
            GammaSpec::SphereShell { center, radius } => match m {
                1 => {
                    out.push(&[center[0] - radius]);
                    out.push(&[center[0] + radius]);
                    Ok(())
                }
                2 => {
                    let n = ((std::f64::consts::TAU * radius / spacing).ceil() as usize).max(8);
                    guard_size(n)?;
                    for i in 0..n {
                        let th = std::f64::consts::TAU * i as f64 / n as f64;
                        out.push(&[center[0] + radius * th.cos(), center[1] + radius * th.sin()]);
                    }
                    Ok(())
                }
                3 => {
                    // Fibonacci lattice with roughly `spacing` between neighbours.
                    let area = 4.0 * std::f64::consts::PI * radius * radius;
                    let n = ((area / (spacing * spacing)).ceil() as usize).max(16);
                    guard_size(n)?;
                    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                    for i in 0..n {
                        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                        let rho = (1.0 - z * z).sqrt();
                        let th = golden * i as f64;
                        out.push(&[
                            center[0] + radius * rho * th.cos(),
                            center[1] + radius * rho * th.sin(),
                            center[2] + radius * z,
                        ]);
                    }
                    Ok(())
                }
                _ => Err(GeometryError::Unsupported(format!(
                    "sphere discretization in dimension {m}"
                ))),
            },
            GammaSpec::PointSet { points } => {
                for p in points {
                    out.push(p);
                }
                Ok(())
            }
            GammaSpec::Union { parts } => parts.iter().try_for_each(|p| p.discretize_into(m, spacing, out)),
        }
    }
}

fn guard_size(count: usize) -> Result<(), GeometryError> {
    if count > MAX_GENERATED_POINTS {
        return Err(GeometryError::Unsupported(format!(
            "discretization would generate {count} points"
        )));
    }
    Ok(())
}

fn in_unit_box(x: &[f64]) -> bool {
    x.iter().all(|&c| (-BOX_TOL..=1.0 + BOX_TOL).contains(&c))
}

/// `Ω = [0, 1]^m` together with a boundary set `Γ ⊂ Ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct DomainSpec {
    m: usize,
    gamma: GammaSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainRepr {
    m: usize,
    gamma: GammaSpec,
}

impl TryFrom<DomainRepr> for DomainSpec {
    type Error = GeometryError;
    fn try_from(r: DomainRepr) -> Result<Self, Self::Error> {
        DomainSpec::new(r.m, r.gamma)
    }
}

impl From<DomainSpec> for DomainRepr {
    fn from(d: DomainSpec) -> Self {
        DomainRepr { m: d.m, gamma: d.gamma }
    }
}

impl DomainSpec {
    pub fn new(m: usize, gamma: GammaSpec) -> Result<Self, GeometryError> {
        if m == 0 {
            return Err(GeometryError::InvalidDomain("dimension must be positive".into()));
        }
        gamma.validate(m)?;
        Ok(DomainSpec { m, gamma })
    }

    /// Unit box with `Γ = ∂Ω`.
    pub fn unit_box(m: usize) -> Self {
        DomainSpec::new(m, GammaSpec::BoxBoundary).expect("box boundary is valid")
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn gamma(&self) -> &GammaSpec {
        &self.gamma
    }

    /// `diam([0, 1]^m) = √m`.
    pub fn diameter(&self) -> f64 {
        (self.m as f64).sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.m && in_unit_box(x)
    }

    /// Exact Euclidean distance `d(x, Γ)`.
    pub fn distance_to_gamma(&self, x: &[f64]) -> Result<f64, GeometryError> {
        if x.len() != self.m {
            return Err(GeometryError::DimensionMismatch {
                expected: self.m,
                got: x.len(),
            });
        }
        if !in_unit_box(x) {
            return Err(GeometryError::PointOutsideDomain { point: x.to_vec() });
        }
        Ok(self.gamma.distance(x))
    }

    /// Samples `Γ` with points roughly `spacing` apart, for set-distance
    /// computations against the continuum boundary.
    pub fn discretize_gamma(&self, spacing: f64) -> Result<PointCloud, GeometryError> {
        if !(spacing > 0.0) {
            return Err(GeometryError::InvalidDomain(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        let mut out = PointCloud::empty(self.m);
        self.gamma.discretize_into(self.m, spacing, &mut out)?;
        Ok(out)
    }
}

/// Potential `P ≥ 0` on `Ω \ Γ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Potential {
    Constant { value: f64 },
    /// `P(x) = base + slope·|x - center|`.
    Cone { center: Vec<f64>, base: f64, slope: f64 },
}

/// Boundary and initial data `ψ` on `Ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryData {
    Constant { value: f64 },
    /// `ψ(x) = offset + gradient·x`.
    Linear { offset: f64, gradient: Vec<f64> },
}

/// The pair `(P, ψ)` with their recorded Lipschitz constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFunctions {
    pub potential: Potential,
    pub boundary_data: BoundaryData,
}

impl NodeFunctions {
    pub fn new(potential: Potential, boundary_data: BoundaryData) -> Result<Self, GeometryError> {
        match &potential {
            Potential::Constant { value } if !(*value >= 0.0) => {
                return Err(GeometryError::InvalidDomain(format!(
                    "potential must be non-negative, got {value}"
                )))
            }
            Potential::Cone { base, slope, .. } if !(*base >= 0.0 && *slope >= 0.0) => {
                return Err(GeometryError::InvalidDomain(
                    "cone potential needs base >= 0 and slope >= 0".into(),
                ))
            }
            _ => {}
        }
        Ok(NodeFunctions {
            potential,
            boundary_data,
        })
    }

    /// `P ≡ 1`, `ψ ≡ 0`.
    pub fn canonical() -> Self {
        NodeFunctions {
            potential: Potential::Constant { value: 1.0 },
            boundary_data: BoundaryData::Constant { value: 0.0 },
        }
    }

    /// `P(x) = 1 + |x - x₀| / 2` with `ψ ≡ 0`.
    pub fn cone(center: Vec<f64>) -> Self {
        NodeFunctions {
            potential: Potential::Cone {
                center,
                base: 1.0,
                slope: 0.5,
            },
            boundary_data: BoundaryData::Constant { value: 0.0 },
        }
    }

    pub fn is_canonical(&self) -> bool {
        *self == NodeFunctions::canonical()
    }

    pub fn check_dim(&self, m: usize) -> Result<(), GeometryError> {
        let check = |v: &Vec<f64>| {
            if v.len() == m {
                Ok(())
            } else {
                Err(GeometryError::DimensionMismatch {
                    expected: m,
                    got: v.len(),
                })
            }
        };
        if let Potential::Cone { center, .. } = &self.potential {
            check(center)?;
        }
        if let BoundaryData::Linear { gradient, .. } = &self.boundary_data {
            check(gradient)?;
        }
        Ok(())
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        match &self.potential {
            Potential::Constant { value } => *value,
            Potential::Cone { center, base, slope } => base + slope * dist(x, center),
        }
    }

    pub fn psi(&self, x: &[f64]) -> f64 {
        match &self.boundary_data {
            BoundaryData::Constant { value } => *value,
            BoundaryData::Linear { offset, gradient } => {
                offset + gradient.iter().zip(x).map(|(g, c)| g * c).sum::<f64>()
            }
        }
    }

    pub fn potential_lipschitz(&self) -> f64 {
        match &self.potential {
            Potential::Constant { .. } => 0.0,
            Potential::Cone { slope, .. } => *slope,
        }
    }

    /// `sup_Ω P`, attained at a corner of the box for the cone.
    pub fn potential_sup(&self, m: usize) -> f64 {
        match &self.potential {
            Potential::Constant { value } => *value,
            Potential::Cone { center, base, slope } => {
                let far: f64 = center.iter().take(m).map(|&c| c.max(1.0 - c).powi(2)).sum::<f64>().sqrt();
                base + slope * far
            }
        }
    }

    pub fn psi_lipschitz(&self) -> f64 {
        match &self.boundary_data {
            BoundaryData::Constant { .. } => 0.0,
            BoundaryData::Linear { gradient, .. } => gradient.iter().map(|g| g * g).sum::<f64>().sqrt(),
        }
    }
}

/// Uniform cell grid over the unit box for range and nearest-point queries.
#[derive(Clone, Debug)]
pub struct CellGrid {
    m: usize,
    per_dim: usize,
    width: f64,
    start: Vec<usize>,
    items: Vec<u32>,
}

impl CellGrid {
    /// Grid whose cells are at least `min_width` wide, with at most about
    /// `4n + 1` cells.
    pub fn with_min_width(points: &PointCloud, min_width: f64) -> Self {
        let m = points.dim();
        let mut per_dim = if min_width >= 1.0 {
            1
        } else {
            ((1.0 / min_width).floor() as usize).max(1)
        };
        let budget = 4 * points.len().max(1) + 1;
        while per_dim > 1 && (per_dim as f64).powi(m as i32) > budget as f64 {
            per_dim = ((per_dim as f64) / 2f64.powf(1.0 / m as f64)).floor().max(1.0) as usize;
        }
        Self::build(points, per_dim)
    }

    /// Grid sized for nearest-point queries (about two points per cell).
    pub fn for_nearest(points: &PointCloud) -> Self {
        let m = points.dim();
        let per_dim = ((points.len() as f64 / 2.0).powf(1.0 / m as f64).floor() as usize).max(1);
        Self::build(points, per_dim)
    }

    fn build(points: &PointCloud, per_dim: usize) -> Self {
        let m = points.dim();
        let width = 1.0 / per_dim as f64;
        let ncells = per_dim.pow(m as u32);
        let mut counts = vec![0usize; ncells + 1];
        let cells: Vec<usize> = points.iter().map(|p| cell_index(p, per_dim)).collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let start = counts.clone();
        let mut fill = counts;
        let mut items = vec![0u32; points.len()];
        for (i, &c) in cells.iter().enumerate() {
            items[fill[c]] = i as u32;
            fill[c] += 1;
        }
        CellGrid {
            m,
            per_dim,
            width,
            start,
            items,
        }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    fn coords_of(&self, x: &[f64]) -> Vec<isize> {
        x.iter().map(|&c| cell_coord(c, self.per_dim) as isize).collect()
    }

    fn flat(&self, c: &[isize]) -> Option<usize> {
        let mut idx = 0usize;
        for &k in c.iter().rev() {
            if k < 0 || k >= self.per_dim as isize {
                return None;
            }
            idx = idx * self.per_dim + k as usize;
        }
        Some(idx)
    }

    fn cell_items(&self, cell: usize) -> &[u32] {
        &self.items[self.start[cell]..self.start[cell + 1]]
    }

    /// Calls `visit` for every point index in cells within Chebyshev cell
    /// distance exactly `ring` of `center`.
    fn visit_ring(&self, center: &[isize], ring: isize, visit: &mut impl FnMut(u32)) {
        let span = (2 * ring + 1) as usize;
        let total = span.pow(self.m as u32);
        let mut offset = vec![0isize; self.m];
        let mut cell = vec![0isize; self.m];
        for flat in 0..total {
            let mut r = flat;
            let mut on_ring = false;
            for d in 0..self.m {
                offset[d] = (r % span) as isize - ring;
                r /= span;
                on_ring |= offset[d].abs() == ring;
                cell[d] = center[d] + offset[d];
            }
            if !on_ring {
                continue;
            }
            if let Some(c) = self.flat(&cell) {
                for &i in self.cell_items(c) {
                    visit(i);
                }
            }
        }
    }

    /// Point indices in the cells adjacent to (and including) the cell of `x`.
    pub fn for_each_near(&self, x: &[f64], mut visit: impl FnMut(u32)) {
        let center = self.coords_of(x);
        for ring in 0..=1 {
            self.visit_ring(&center, ring, &mut visit);
        }
    }

    /// Nearest indexed point to `x`, skipping index `skip`.
    pub fn nearest(&self, points: &PointCloud, x: &[f64], skip: Option<usize>) -> Option<(usize, f64)> {
        let center = self.coords_of(x);
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=self.per_dim as isize {
            self.visit_ring(&center, ring, &mut |i| {
                let i = i as usize;
                if Some(i) == skip {
                    return;
                }
                let d = dist(x, points.point(i));
                if best.map_or(true, |(bi, bd)| d < bd || (d == bd && i < bi)) {
                    best = Some((i, d));
                }
            });
            if let Some((_, d)) = best {
                if d <= ring as f64 * self.width {
                    break;
                }
            }
        }
        best
    }
}

fn cell_coord(c: f64, per_dim: usize) -> usize {
    let k = (c * per_dim as f64).floor();
    if k < 0.0 {
        0
    } else {
        (k as usize).min(per_dim - 1)
    }
}

fn cell_index(p: &[f64], per_dim: usize) -> usize {
    p.iter()
        .rev()
        .fold(0usize, |acc, &c| acc * per_dim + cell_coord(c, per_dim))
}

/// Smallest distance between two distinct points of the cloud.
pub fn min_pair_distance(points: &PointCloud) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let grid = CellGrid::for_nearest(points);
    (0..points.len())
        .into_par_iter()
        .filter_map(|i| grid.nearest(points, points.point(i), Some(i)).map(|(_, d)| d))
        .reduce_with(f64::min)
}

fn directed_hausdorff(a: &PointCloud, b: &PointCloud) -> f64 {
    (0..a.len())
        .into_par_iter()
        .map(|i| {
            let p = a.point(i);
            b.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Two-sided Hausdorff distance between finite sets, by pairwise distances.
pub fn hausdorff_distance(a: &PointCloud, b: &PointCloud) -> Result<f64, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptySet);
    }
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// `max_x d(x, V)` over a regular probe grid of `Ω` with spacing at most
/// `probe_resolution`.
///
/// This is a lower bound on the sup over the continuum box, within
/// `probe_resolution·√m / 2` of it.
pub fn coverage_radius(
    domain: &DomainSpec,
    points: &PointCloud,
    probe_resolution: f64,
) -> Result<f64, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptySet);
    }
    if points.dim() != domain.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: domain.dim(),
            got: points.dim(),
        });
    }
    if !(probe_resolution > 0.0) {
        return Err(GeometryError::InvalidDomain(format!(
            "probe resolution must be positive, got {probe_resolution}"
        )));
    }
    let m = domain.dim();
    let k = (1.0 / probe_resolution).ceil() as usize;
    let total = (k + 1)
        .checked_pow(m as u32)
        .filter(|&t| t <= 50 * MAX_GENERATED_POINTS)
        .ok_or_else(|| GeometryError::Unsupported("probe grid too large".into()))?;
    let grid = CellGrid::for_nearest(points);
    let radius = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut r = flat;
            let mut x = [0.0f64; 8];
            let mut xv;
            let probe: &[f64] = if m <= 8 {
                for c in x.iter_mut().take(m) {
                    *c = (r % (k + 1)) as f64 / k as f64;
                    r /= k + 1;
                }
                &x[..m]
            } else {
                xv = Vec::with_capacity(m);
                for _ in 0..m {
                    xv.push((r % (k + 1)) as f64 / k as f64);
                    r /= k + 1;
                }
                &xv
            };
            grid.nearest(points, probe, None).map_or(f64::INFINITY, |(_, d)| d)
        })
        .reduce(|| 0.0, f64::max);
    Ok(radius)
}
