//! Reference solutions of the local problem `∂_t f + |∇f| = P` on `Ω \ Γ`,
//! `f = ψ` on `Γ` and at `t = 0`.
//!
//! For `P ≡ 1`, `ψ ≡ 0` the viscosity solution is `min(t, d(x, Γ))`: where
//! `d < t` the equation reads `0 + 1 = 1`, where `t < d` it reads `1 + 0 = 1`,
//! and the two pieces agree on `t = d`. Other cases use a first-order upwind
//! scheme on a regular grid.

use std::io::{self, Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{DomainSpec, GeometryError, NodeFunctions};

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("the closed form needs P = 1 and psi = 0: {0}")]
    WrongCase(String),
    #[error("grid dt = {dt} exceeds the stability bound {max_dt}")]
    GridCflViolation { dt: f64, max_dt: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("grid dump I/O: {0}")]
    Io(#[from] io::Error),
}

/// `min(t, d(x, Γ))`, defined for `P ≡ 1`, `ψ ≡ 0`.
pub fn analytic_min_dist(domain: &DomainSpec, fns: &NodeFunctions, x: &[f64], t: f64) -> Result<f64, ReferenceError> {
    if !fns.is_canonical() {
        return Err(ReferenceError::WrongCase(format!("{fns:?}")));
    }
    Ok(t.min(domain.distance_to_gamma(x)?))
}

/// Grid function from the upwind scheme, stored at selected time levels.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSolution {
    m: usize,
    /// Cells per dimension; nodes per dimension is `cells + 1`.
    cells: usize,
    spacing: f64,
    horizon: f64,
    dt: f64,
    frame_times: Vec<f64>,
    /// Node values per frame, first coordinate fastest.
    frames: Vec<Vec<f64>>,
}

impl GridSolution {
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.cells + 1
    }

    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    /// The last stored frame, at `t = N_T Δt`.
    pub fn final_frame(&self) -> &[f64] {
        self.frames.last().expect("at least one frame")
    }

    fn interpolate(&self, frame: &[f64], x: &[f64]) -> f64 {
        let nodes = self.cells + 1;
        let mut base = 0usize;
        let mut stride = 1usize;
        let m = self.m;
        let mut frac_buf = [0.0f64; 8];
        let mut frac_vec = Vec::new();
        let frac: &mut [f64] = if m <= 8 {
            &mut frac_buf[..m]
        } else {
            frac_vec.resize(m, 0.0);
            &mut frac_vec[..]
        };
        for d in 0..m {
            let s = (x[d].clamp(0.0, 1.0) / self.spacing).min(self.cells as f64);
            let i = (s.floor() as usize).min(self.cells.saturating_sub(1));
            frac[d] = s - i as f64;
            base += i * stride;
            stride *= nodes;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << m) {
            let mut w = 1.0;
            let mut idx = base;
            let mut stride = 1usize;
            for d in 0..m {
                if corner >> d & 1 == 1 {
                    w *= frac[d];
                    idx += stride;
                } else {
                    w *= 1.0 - frac[d];
                }
                stride *= nodes;
            }
            if w != 0.0 {
                acc += w * frame[idx];
            }
        }
        acc
    }

    /// Multilinear in space, linear in time between stored frames.
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let k = self.frame_times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.interpolate(&self.frames[0], x);
        }
        if k == self.frames.len() {
            return self.interpolate(self.final_frame(), x);
        }
        let (t0, t1) = (self.frame_times[k - 1], self.frame_times[k]);
        let a = self.interpolate(&self.frames[k - 1], x);
        if t == t0 {
            return a;
        }
        let b = self.interpolate(&self.frames[k], x);
        let w = (t - t0) / (t1 - t0);
        a + w * (b - a)
    }

    /// Final frame reordered so the last coordinate varies fastest.
    pub fn final_frame_row_major(&self) -> Vec<f64> {
        let nodes = self.cells + 1;
        let frame = self.final_frame();
        let total = frame.len();
        let mut out = Vec::with_capacity(total);
        for r in 0..total {
            // r enumerates (i_0, ..., i_{m-1}) with i_{m-1} fastest.
            let mut rest = r;
            let mut idx = 0usize;
            let mut stride = 1usize;
            let mut digits = vec![0usize; self.m];
            for d in (0..self.m).rev() {
                digits[d] = rest % nodes;
                rest /= nodes;
            }
            for &dgt in &digits {
                idx += dgt * stride;
                stride *= nodes;
            }
            out.push(frame[idx]);
        }
        out
    }
}

/// Largest stable time step of the upwind scheme, `h / m`.
pub fn grid_max_stable_dt(spacing: f64, m: usize) -> f64 {
    spacing / m as f64
}

/// Godunov upwind scheme for `∂_t f + |∇f| = P` with forward Euler in time.
///
/// Nodes within `spacing / 2` of `Γ` hold `ψ`. Per dimension the upwind
/// slope is `max(D⁻f, -D⁺f, 0)`, one-sided at the faces of the box. Frames
/// are kept at `t = 0`, at the final level, and at the two levels bracketing
/// each time in `frame_times`.
pub fn grid_upwind_solve(
    domain: &DomainSpec,
    fns: &NodeFunctions,
    spacing: f64,
    horizon: f64,
    dt: f64,
    frame_times: &[f64],
) -> Result<GridSolution, ReferenceError> {
    let m = domain.dim();
    fns.check_dim(m)?;
    if !(spacing > 0.0 && spacing <= 1.0) {
        return Err(ReferenceError::InvalidGrid(format!("spacing {spacing} must be in (0, 1]")));
    }
    let cells = (1.0 / spacing).round() as usize;
    if ((cells as f64) * spacing - 1.0).abs() > 1e-9 {
        return Err(ReferenceError::InvalidGrid(format!("spacing {spacing} does not divide the unit box")));
    }
    if !(horizon >= 0.0) || !(dt > 0.0) {
        return Err(ReferenceError::InvalidGrid("T must be non-negative and dt positive".into()));
    }
    let max_dt = grid_max_stable_dt(spacing, m);
    if dt > max_dt {
        return Err(ReferenceError::GridCflViolation { dt, max_dt });
    }
    let nodes = cells + 1;
    let total = nodes
        .checked_pow(m as u32)
        .filter(|&t| t <= 50_000_000)
        .ok_or_else(|| ReferenceError::InvalidGrid("grid too large".into()))?;

    let coords = |flat: usize| -> Vec<f64> {
        let mut r = flat;
        (0..m)
            .map(|_| {
                let i = r % nodes;
                r /= nodes;
                i as f64 * spacing
            })
            .collect()
    };
    let mut dirichlet = vec![false; total];
    let mut potential = vec![0.0; total];
    let mut values = vec![0.0; total];
    for flat in 0..total {
        let x = coords(flat);
        dirichlet[flat] = domain.distance_to_gamma(&x)? <= spacing / 2.0;
        potential[flat] = fns.potential(&x);
        values[flat] = fns.psi(&x);
    }

    let n_steps = {
        let k = (horizon / dt - 1e-9).ceil();
        if k <= 0.0 {
            0
        } else {
            k as usize
        }
    };
    let mut keep: Vec<usize> = vec![0, n_steps];
    for &t in frame_times {
        let s = (t / dt).clamp(0.0, n_steps as f64);
        keep.push(s.floor() as usize);
        keep.push((s.ceil() as usize).min(n_steps));
    }
    keep.sort_unstable();
    keep.dedup();

    let strides: Vec<usize> = (0..m).map(|d| nodes.pow(d as u32)).collect();
    let inv_h = 1.0 / spacing;
    let mut frames = Vec::new();
    let mut times = Vec::new();
    let mut next_keep = keep.iter().peekable();
    if next_keep.peek() == Some(&&0) {
        frames.push(values.clone());
        times.push(0.0);
        next_keep.next();
    }
    for step in 1..=n_steps {
        let prev = &values;
        let next: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|flat| {
                if dirichlet[flat] {
                    return prev[flat];
                }
                let f = prev[flat];
                let mut sq = 0.0;
                let mut r = flat;
                for &stride in &strides {
                    let i = r % nodes;
                    r /= nodes;
                    let back = if i > 0 { (f - prev[flat - stride]) * inv_h } else { 0.0 };
                    let fwd = if i < cells { (prev[flat + stride] - f) * inv_h } else { 0.0 };
                    let p = back.max(-fwd).max(0.0);
                    sq += p * p;
                }
                f + dt * (potential[flat] - sq.sqrt())
            })
            .collect();
        values = next;
        if next_keep.peek() == Some(&&step) {
            frames.push(values.clone());
            times.push(step as f64 * dt);
            next_keep.next();
        }
    }
    Ok(GridSolution {
        m,
        cells,
        spacing,
        horizon,
        dt,
        frame_times: times,
        frames,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceKind {
    AnalyticMinDist,
    GridUpwind,
}

/// A trusted approximation of the local solution, evaluable anywhere in
/// `Ω × [0, T]`.
#[derive(Clone, Debug)]
pub enum ReferenceSolution {
    Analytic(DomainSpec),
    Grid(GridSolution),
}

impl ReferenceSolution {
    pub fn analytic(domain: &DomainSpec, fns: &NodeFunctions) -> Result<Self, ReferenceError> {
        if !fns.is_canonical() {
            return Err(ReferenceError::WrongCase(format!("{fns:?}")));
        }
        Ok(ReferenceSolution::Analytic(domain.clone()))
    }

    pub fn kind(&self) -> ReferenceKind {
        match self {
            ReferenceSolution::Analytic(_) => ReferenceKind::AnalyticMinDist,
            ReferenceSolution::Grid(_) => ReferenceKind::GridUpwind,
        }
    }

    pub fn grid_spacing(&self) -> Option<f64> {
        match self {
            ReferenceSolution::Analytic(_) => None,
            ReferenceSolution::Grid(g) => Some(g.spacing()),
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64, ReferenceError> {
        match self {
            ReferenceSolution::Analytic(d) => Ok(t.min(d.distance_to_gamma(x)?)),
            ReferenceSolution::Grid(g) => Ok(g.eval(x, t)),
        }
    }
}

/// Header of a binary grid dump.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDump {
    pub m: usize,
    pub dims: Vec<usize>,
    pub spacing: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Final-time values, row-major (last coordinate fastest).
    pub values: Vec<f64>,
}

/// Writes `m`, the node counts, spacing, `T`, `dt` and the final frame,
/// all little-endian (`u64` for integers, `f64` otherwise).
pub fn write_grid_dump(sol: &GridSolution, mut out: impl Write) -> io::Result<()> {
    out.write_all(&(sol.m as u64).to_le_bytes())?;
    for _ in 0..sol.m {
        out.write_all(&(sol.nodes_per_dim() as u64).to_le_bytes())?;
    }
    for v in [sol.spacing, sol.horizon, sol.dt] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in sol.final_frame_row_major() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

pub fn read_grid_dump(mut input: impl Read) -> Result<GridDump, ReferenceError> {
    let mut buf = [0u8; 8];
    let mut u64_next = |input: &mut dyn Read| -> io::Result<u64> {
        input.read_exact(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    };
    let m = u64_next(&mut input)? as usize;
    if m == 0 || m > 16 {
        return Err(ReferenceError::InvalidGrid(format!("bad dimension {m} in dump")));
    }
    let mut dims = Vec::with_capacity(m);
    for _ in 0..m {
        dims.push(u64_next(&mut input)? as usize);
    }
    let spacing = f64::from_bits(u64_next(&mut input)?);
    let horizon = f64::from_bits(u64_next(&mut input)?);
    let dt = f64::from_bits(u64_next(&mut input)?);
    let total: usize = dims.iter().product();
    let mut values = Vec::with_capacity(total);
    for _ in 0..total {
        values.push(f64::from_bits(u64_next(&mut input)?));
    }
    Ok(GridDump {
        m,
        dims,
        spacing,
        horizon,
        dt,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryData, Potential};
    use proptest::prelude::*;

    /// Sup error at `t = T = 1` over a probe grid (on and off grid nodes).
    fn canonical_final_error(spacing: f64, m: usize) -> f64 {
        let d = DomainSpec::unit_box(m);
        let f = NodeFunctions::canonical();
        let dt = 0.5 * grid_max_stable_dt(spacing, m);
        let sol = grid_upwind_solve(&d, &f, spacing, 1.0, dt, &[]).unwrap();
        let probes = 400;
        let mut err: f64 = 0.0;
        for i in 0..=probes {
            for j in 0..=(if m == 2 { probes } else { 0 }) {
                let mut x = vec![i as f64 / probes as f64];
                if m == 2 {
                    x.push(j as f64 / probes as f64);
                }
                let exact = analytic_min_dist(&d, &f, &x, 1.0).unwrap();
                err = err.max((sol.eval(&x, 1.0) - exact).abs());
            }
        }
        err
    }

    #[test]
    fn analytic_examples() {
        let d = DomainSpec::unit_box(1);
        let f = NodeFunctions::canonical();
        assert!((analytic_min_dist(&d, &f, &[0.3], 10.0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(analytic_min_dist(&d, &f, &[0.3], 0.0).unwrap(), 0.0);
        assert_eq!(analytic_min_dist(&d, &f, &[1.0], 3.0).unwrap(), 0.0);
        assert!(matches!(
            analytic_min_dist(&d, &NodeFunctions::cone(vec![0.5]), &[0.3], 1.0),
            Err(ReferenceError::WrongCase(_))
        ));
    }

    #[test]
    fn analytic_agrees_with_fine_grid() {
        let d = DomainSpec::unit_box(1);
        let f = NodeFunctions::canonical();
        let h = 1e-4;
        let sol = grid_upwind_solve(&d, &f, h, 0.5, 0.5 * h, &[]).unwrap();
        let exact = analytic_min_dist(&d, &f, &[0.3], 10.0).unwrap();
        assert!((sol.eval(&[0.3], 0.5) - exact).abs() <= 2.0 * h);
    }

    #[test]
    fn grid_error_is_first_order() {
        let e1 = canonical_final_error(1.0 / 512.0, 1);
        assert!(e1 <= 2.0 / 512.0, "{e1}");
        let coarse = canonical_final_error(1.0 / 64.0, 2);
        let fine = canonical_final_error(1.0 / 128.0, 2);
        assert!(coarse <= 2.0 / 64.0, "{coarse}");
        assert!(fine <= 0.7 * coarse, "{coarse} -> {fine}");
    }

    #[test]
    fn grid_refinement_is_monotone_at_a_node() {
        // The grid value at the centre increases towards d = 0.5 as h shrinks.
        let d = DomainSpec::unit_box(2);
        let f = NodeFunctions::canonical();
        let centre: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&k| {
                let h = 1.0 / k as f64;
                grid_upwind_solve(&d, &f, h, 1.0, 0.5 * grid_max_stable_dt(h, 2), &[]).unwrap().eval(&[0.5, 0.5], 1.0)
            })
            .collect();
        assert!(centre.windows(2).all(|w| (w[1] - 0.5).abs() <= (w[0] - 0.5).abs()), "{centre:?}");
    }

    #[test]
    fn zero_potential_keeps_psi() {
        let d = DomainSpec::unit_box(2);
        let f = NodeFunctions::new(Potential::Constant { value: 0.0 }, BoundaryData::Constant { value: 0.0 }).unwrap();
        let sol = grid_upwind_solve(&d, &f, 1.0 / 32.0, 1.0, 0.01, &[]).unwrap();
        assert!(sol.final_frame().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_cfl_and_spacing_checks() {
        let d = DomainSpec::unit_box(2);
        let f = NodeFunctions::canonical();
        assert!(matches!(
            grid_upwind_solve(&d, &f, 0.125, 1.0, 0.07, &[]),
            Err(ReferenceError::GridCflViolation { .. })
        ));
        assert!(matches!(grid_upwind_solve(&d, &f, 0.3, 1.0, 0.01, &[]), Err(ReferenceError::InvalidGrid(_))));
    }

    #[test]
    fn dump_round_trip() {
        let d = DomainSpec::unit_box(2);
        let f = NodeFunctions::cone(vec![0.5, 0.5]);
        let sol = grid_upwind_solve(&d, &f, 0.25, 0.5, 0.1, &[]).unwrap();
        let mut buf = Vec::new();
        write_grid_dump(&sol, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (1 + 2 + 3 + 25));
        let dump = read_grid_dump(&buf[..]).unwrap();
        assert_eq!(dump.dims, vec![5, 5]);
        assert_eq!(dump.dt, 0.1);
        // Row-major: entry (i0, i1) sits at i0 * 5 + i1.
        for i0 in 0..5 {
            for i1 in 0..5 {
                let x = [i0 as f64 * 0.25, i1 as f64 * 0.25];
                assert_eq!(dump.values[i0 * 5 + i1], sol.eval(&x, 1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn analytic_is_lipschitz_and_monotone(x in 0.0f64..1.0, y in 0.0f64..1.0, s in 0.0f64..3.0, t in 0.0f64..3.0) {
            let d = DomainSpec::unit_box(1);
            let f = NodeFunctions::canonical();
            let v = |x: f64, t: f64| analytic_min_dist(&d, &f, &[x], t).unwrap();
            prop_assert!((v(x, t) - v(y, t)).abs() <= (x - y).abs() + 1e-15);
            prop_assert!((v(x, s) - v(x, t)).abs() <= (s - t).abs() + 1e-15);
            if s <= t {
                prop_assert!(v(x, s) <= v(x, t));
            }
            prop_assert_eq!(v(x, 1.0 + t), x.min(1.0 - x));
        }
    }
}
