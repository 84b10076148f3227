//! Radial kernel profiles `g` and the ε-scaled kernel `J_ε`.
//!
//! A profile is admissible when it is non-negative, compactly supported in
//! `[0, r_g]`, non-increasing on some `[0, a]` with `g(a) > 0`, and Lipschitz.
//! Validation checks these properties on sample grids and records the derived
//! constants:
//!
//! * `c_g = g(a)`,
//! * `L_g`, an empirical Lipschitz constant,
//! * `C_g = sup_t t·g(t)`, the normalization of `J(u, v) = g(|u - v|) / C_g`,
//! * `sup g`, which enters the explicit-scheme step bound.
//!
//! The scaled kernel is `J_ε(d) = g(d / ε) / (ε C_g)`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for checks on closed-form profiles.
pub const CLOSED_FORM_TOL: f64 = 1e-12;
/// Absolute tolerance for checks on tabulated profiles.
pub const TABLE_TOL: f64 = 1e-8;
/// Minimum number of samples a tabulated profile must carry.
pub const MIN_TABLE_SAMPLES: usize = 1000;

const MONOTONE_GRID: usize = 1000;
const A_CANDIDATES: usize = 100;
const TRUNC_EXP_RAMP: f64 = 1e-3;
const LIP_COARSE_INTERVALS: usize = 20_000;
const LIP_ZOOM_LEVELS: usize = 5;
/// Zoom levels narrower than this (relative to `r_g`) only detect jumps; their
/// quotients carry too much rounding error to be recorded.
const LIP_MIN_RECORDED_WIDTH: f64 = 1e-7;
const LIP_ZOOM_SPLIT: usize = 16;
const LIP_ZOOM_SEEDS: usize = 8;
const SUP_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("profile is negative at t = {t} (g = {value})")]
    RejectNonNegative { t: f64, value: f64 },
    #[error("profile is nonzero beyond r_g = {r_g}: g({t}) = {value}")]
    RejectSupport { r_g: f64, t: f64, value: f64 },
    #[error("no admissible monotone radius a: {0}")]
    RejectMonotone(String),
    #[error("difference quotient near t = {t} keeps growing under refinement (last ratio {ratio:e})")]
    RejectLipschitz { t: f64, ratio: f64 },
    #[error("kernel scale must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("invalid profile description: {0}")]
    InvalidDescription(String),
    #[error("failed to read kernel table {path}: {message}")]
    TableIo { path: PathBuf, message: String },
}

/// Which family a validated profile came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileShape {
    Triangle,
    TruncatedExponential,
    TableLookup,
    ClosedForm,
}

type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// An unvalidated profile description.
#[derive(Clone)]
pub enum RawProfile {
    /// `g(t) = (1 - t / r_g)_+`.
    Triangle { r_g: f64 },
    /// `g(t) = e^{-t}` on `[0, r_g]`, closed to zero by a linear ramp of width `1e-3 r_g`.
    TruncatedExponential { r_g: f64 },
    /// Samples `(t_i, g_i)`, ascending in `t`, starting at `t = 0`; linear
    /// interpolation in between and zero past the last sample.
    Table { r_g: f64, t: Vec<f64>, g: Vec<f64> },
    /// An arbitrary closed form with a declared support radius.
    ClosedForm { r_g: f64, g: ProfileFn },
}

impl RawProfile {
    pub fn closed_form<F>(r_g: f64, g: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        RawProfile::ClosedForm { r_g, g: Arc::new(g) }
    }

    /// Tabulates `g` at `samples` equispaced points of `[0, 2 r_g]`.
    pub fn tabulate<F: Fn(f64) -> f64>(r_g: f64, samples: usize, g: F) -> Self {
        let h = 2.0 * r_g / (samples - 1) as f64;
        let t: Vec<f64> = (0..samples).map(|i| i as f64 * h).collect();
        let g = t.iter().map(|&s| g(s)).collect();
        RawProfile::Table { r_g, t, g }
    }

    fn r_g(&self) -> f64 {
        match self {
            RawProfile::Triangle { r_g }
            | RawProfile::TruncatedExponential { r_g }
            | RawProfile::Table { r_g, .. }
            | RawProfile::ClosedForm { r_g, .. } => *r_g,
        }
    }
}

impl fmt::Debug for RawProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawProfile::Triangle { r_g } => write!(f, "Triangle {{ r_g: {r_g} }}"),
            RawProfile::TruncatedExponential { r_g } => {
                write!(f, "TruncatedExponential {{ r_g: {r_g} }}")
            }
            RawProfile::Table { r_g, t, .. } => {
                write!(f, "Table {{ r_g: {r_g}, samples: {} }}", t.len())
            }
            RawProfile::ClosedForm { r_g, .. } => write!(f, "ClosedForm {{ r_g: {r_g} }}"),
        }
    }
}

#[derive(Clone)]
enum Evaluator {
    Triangle { r_g: f64 },
    TruncExp { r_g: f64, ramp_start: f64, ramp_height: f64 },
    Table { t: Arc<[f64]>, g: Arc<[f64]> },
    Closed(ProfileFn),
}

impl Evaluator {
    fn eval(&self, s: f64) -> f64 {
        match self {
            Evaluator::Triangle { r_g } => (1.0 - s / r_g).max(0.0),
            Evaluator::TruncExp {
                r_g,
                ramp_start,
                ramp_height,
            } => {
                if s <= *ramp_start {
                    (-s).exp()
                } else if s < *r_g {
                    ramp_height * (r_g - s) / (r_g - ramp_start)
                } else {
                    0.0
                }
            }
            Evaluator::Table { t, g } => interpolate(t, g, s),
            Evaluator::Closed(f) => f(s),
        }
    }
}

fn interpolate(t: &[f64], g: &[f64], s: f64) -> f64 {
    let last = t.len() - 1;
    if s < t[0] || s > t[last] {
        return 0.0;
    }
    // First index with t[i] > s.
    let hi = t.partition_point(|&x| x <= s);
    if hi == 0 {
        return g[0];
    }
    if hi > last {
        return g[last];
    }
    let lo = hi - 1;
    let w = (s - t[lo]) / (t[hi] - t[lo]);
    g[lo] + w * (g[hi] - g[lo])
}

/// A validated radial profile together with its admissibility constants.
///
/// Immutable after construction; cheap to clone.
#[derive(Clone)]
pub struct KernelProfile {
    shape: ProfileShape,
    eval: Evaluator,
    r_g: f64,
    a: f64,
    c_g: f64,
    lipschitz: f64,
    normalization: f64,
    sup: f64,
}

impl fmt::Debug for KernelProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelProfile")
            .field("shape", &self.shape)
            .field("r_g", &self.r_g)
            .field("a", &self.a)
            .field("c_g", &self.c_g)
            .field("L_g", &self.lipschitz)
            .field("C_g", &self.normalization)
            .field("sup_g", &self.sup)
            .finish()
    }
}

impl KernelProfile {
    /// The default triangle profile `g(t) = (1 - t)_+` with `a = 1/2`.
    pub fn triangle() -> Self {
        validate_profile(RawProfile::Triangle { r_g: 1.0 }, None)
            .expect("unit triangle profile is admissible")
    }

    pub fn shape(&self) -> ProfileShape {
        self.shape
    }

    /// Evaluates the radial profile `g(t)`.
    #[inline]
    pub fn g(&self, t: f64) -> f64 {
        self.eval.eval(t)
    }

    pub fn r_g(&self) -> f64 {
        self.r_g
    }

    /// Monotone-decrease radius `a`.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// `c_g = g(a)`.
    pub fn c_g(&self) -> f64 {
        self.c_g
    }

    /// Empirical Lipschitz constant `L_g`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `C_g = sup_t t·g(t)`.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// `sup_t g(t)`.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// `J_ε` at distance `dist` without the `eps > 0` check.
    #[inline]
    pub fn weight(&self, eps: f64, dist: f64) -> f64 {
        let s = dist / eps;
        if s > self.r_g {
            return 0.0;
        }
        self.g(s) / (eps * self.normalization)
    }
}

/// Validates a raw profile and computes its constants.
///
/// When `a` is `None`, the monotone radius is chosen among the candidates
/// `k r_g / 100` as the one maximizing `a·g(a)` while `g` is non-increasing
/// on `[0, a]`; for the triangle this is `r_g / 2`.
pub fn validate_profile(raw: RawProfile, a: Option<f64>) -> Result<KernelProfile, KernelError> {
    let r_g = raw.r_g();
    if !(r_g.is_finite() && r_g > 0.0) {
        return Err(KernelError::InvalidDescription(format!(
            "support radius must be positive and finite, got {r_g}"
        )));
    }
    let (shape, eval, tol) = match raw {
        RawProfile::Triangle { r_g } => (ProfileShape::Triangle, Evaluator::Triangle { r_g }, CLOSED_FORM_TOL),
        RawProfile::TruncatedExponential { r_g } => {
            let ramp_start = r_g * (1.0 - TRUNC_EXP_RAMP);
            (
                ProfileShape::TruncatedExponential,
                Evaluator::TruncExp {
                    r_g,
                    ramp_start,
                    ramp_height: (-ramp_start).exp(),
                },
                CLOSED_FORM_TOL,
            )
        }
        RawProfile::Table { r_g: _, t, g } => {
            check_table(&t, &g)?;
            (
                ProfileShape::TableLookup,
                Evaluator::Table {
                    t: t.into(),
                    g: g.into(),
                },
                TABLE_TOL,
            )
        }
        RawProfile::ClosedForm { g, .. } => (ProfileShape::ClosedForm, Evaluator::Closed(g), CLOSED_FORM_TOL),
    };

    let g = |s: f64| eval.eval(s);
    check_sign_and_support(&g, r_g, tol, &eval)?;
    let (a, c_g) = choose_monotone_radius(&g, r_g, a, tol)?;
    let lipschitz = match &eval {
        Evaluator::Triangle { r_g } => 1.0 / r_g,
        Evaluator::TruncExp {
            r_g,
            ramp_start,
            ramp_height,
        } => f64::max(1.0, ramp_height / (r_g - ramp_start)),
        Evaluator::Table { t, g: gs } => table_lipschitz(t, gs),
        Evaluator::Closed(_) => closed_form_lipschitz(&g, r_g)?,
    };
    let normalization = sup_on(|s| s * g(s), 0.0, r_g);
    let sup = sup_on(&g, 0.0, r_g);

    Ok(KernelProfile {
        shape,
        eval,
        r_g,
        a,
        c_g,
        lipschitz,
        normalization,
        sup,
    })
}

/// `C_g = sup_{t ∈ [0, r_g]} t·g(t)`, recomputed by grid refinement plus
/// golden-section search.
pub fn normalization_constant(profile: &KernelProfile) -> f64 {
    sup_on(|s| s * profile.g(s), 0.0, profile.r_g)
}

/// `J_ε(u, v) = g(|u - v| / ε) / (ε C_g)`; exactly zero past `ε r_g`.
pub fn eval_scaled_kernel(profile: &KernelProfile, eps: f64, dist: f64) -> Result<f64, KernelError> {
    if !(eps > 0.0) {
        return Err(KernelError::NonPositiveEps(eps));
    }
    Ok(profile.weight(eps, dist))
}

fn check_table(t: &[f64], g: &[f64]) -> Result<(), KernelError> {
    if t.len() != g.len() {
        return Err(KernelError::InvalidDescription(format!(
            "table has {} abscissae but {} values",
            t.len(),
            g.len()
        )));
    }
    if t.len() < MIN_TABLE_SAMPLES {
        return Err(KernelError::InvalidDescription(format!(
            "table needs at least {MIN_TABLE_SAMPLES} samples, got {}",
            t.len()
        )));
    }
    if t[0].abs() > TABLE_TOL {
        return Err(KernelError::InvalidDescription(format!(
            "table must start at t = 0, starts at {}",
            t[0]
        )));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(KernelError::InvalidDescription(
            "table abscissae must be strictly ascending".into(),
        ));
    }
    if t.iter().chain(g).any(|v| !v.is_finite()) {
        return Err(KernelError::InvalidDescription("table contains non-finite values".into()));
    }
    Ok(())
}

fn check_sign_and_support(
    g: &impl Fn(f64) -> f64,
    r_g: f64,
    tol: f64,
    eval: &Evaluator,
) -> Result<(), KernelError> {
    let probe = |s: f64| -> Result<(), KernelError> {
        let value = g(s);
        if !(value >= -tol) {
            return Err(KernelError::RejectNonNegative { t: s, value });
        }
        if s > r_g && value.abs() > tol {
            return Err(KernelError::RejectSupport { r_g, t: s, value });
        }
        Ok(())
    };
    let n = 4 * LIP_COARSE_INTERVALS;
    for i in 0..=n {
        probe(2.0 * r_g * i as f64 / n as f64)?;
    }
    if let Evaluator::Table { t, .. } = eval {
        for &s in t.iter() {
            probe(s)?;
        }
    }
    Ok(())
}

fn non_increasing_on(g: &impl Fn(f64) -> f64, a: f64, tol: f64) -> bool {
    let mut prev = g(0.0);
    for i in 1..=MONOTONE_GRID {
        let cur = g(a * i as f64 / MONOTONE_GRID as f64);
        if cur > prev + tol {
            return false;
        }
        prev = cur;
    }
    true
}

fn choose_monotone_radius(
    g: &impl Fn(f64) -> f64,
    r_g: f64,
    requested: Option<f64>,
    tol: f64,
) -> Result<(f64, f64), KernelError> {
    if let Some(a) = requested {
        if !(a > 0.0 && a < r_g) {
            return Err(KernelError::RejectMonotone(format!("a = {a} is not in (0, r_g = {r_g})")));
        }
        let c_g = g(a);
        if !(c_g > tol) {
            return Err(KernelError::RejectMonotone(format!("g(a) = {c_g} is not positive")));
        }
        if !non_increasing_on(g, a, tol) {
            return Err(KernelError::RejectMonotone(format!("g increases somewhere on [0, {a}]")));
        }
        return Ok((a, c_g));
    }

    let mut best: Option<(f64, f64)> = None;
    for k in 1..A_CANDIDATES {
        let a = r_g * k as f64 / A_CANDIDATES as f64;
        let c_g = g(a);
        if !(c_g > tol) || !non_increasing_on(g, a, tol) {
            continue;
        }
        if best.map_or(true, |(ba, bc)| a * c_g > ba * bc) {
            best = Some((a, c_g));
        }
    }
    best.ok_or_else(|| {
        KernelError::RejectMonotone("g is not positive and non-increasing on any [0, a]".into())
    })
}

fn table_lipschitz(t: &[f64], g: &[f64]) -> f64 {
    t.windows(2)
        .zip(g.windows(2))
        .map(|(tw, gw)| (gw[1] - gw[0]).abs() / (tw[1] - tw[0]))
        .fold(0.0, f64::max)
}

/// Estimates the Lipschitz constant of a closed form on `[0, 2 r_g]`.
///
/// The steepest coarse intervals are zoomed into repeatedly; a quotient that still
/// grows by more than 4x per level at the finest level means a jump, which is
/// rejected.
fn closed_form_lipschitz(g: &impl Fn(f64) -> f64, r_g: f64) -> Result<f64, KernelError> {
    let n = LIP_COARSE_INTERVALS;
    let h = 2.0 * r_g / n as f64;
    let values: Vec<f64> = (0..=n).map(|i| g(i as f64 * h)).collect();
    let mut ratios: Vec<(f64, usize)> = values
        .windows(2)
        .enumerate()
        .map(|(i, w)| ((w[1] - w[0]).abs() / h, i))
        .collect();
    let mut lip = ratios.iter().map(|r| r.0).fold(0.0, f64::max);
    ratios.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    for &(coarse, i) in ratios.iter().take(LIP_ZOOM_SEEDS) {
        if coarse == 0.0 {
            break;
        }
        let (mut lo, mut hi) = (i as f64 * h, (i + 1) as f64 * h);
        let mut history = vec![coarse];
        for _ in 0..LIP_ZOOM_LEVELS {
            let w = (hi - lo) / LIP_ZOOM_SPLIT as f64;
            let mut best = (0.0, lo);
            let mut prev = g(lo);
            for k in 1..=LIP_ZOOM_SPLIT {
                let s = lo + k as f64 * w;
                let cur = g(s);
                let r = (cur - prev).abs() / w;
                if r > best.0 {
                    best = (r, s - w);
                }
                prev = cur;
            }
            history.push(best.0);
            if w >= LIP_MIN_RECORDED_WIDTH * r_g {
                lip = lip.max(best.0);
            }
            lo = best.1;
            hi = lo + w;
        }
        let last = history[history.len() - 1];
        let before = history[history.len() - 2];
        if last > 4.0 * before {
            return Err(KernelError::RejectLipschitz { t: lo, ratio: last });
        }
    }
    Ok(lip)
}

/// `sup_{[lo, hi]} f` by grid search refined with golden-section search,
/// doubling the grid until successive estimates agree to `1e-10` relative.
fn sup_on(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mut n = 1000usize;
    let mut prev: Option<f64> = None;
    loop {
        let h = (hi - lo) / n as f64;
        let (mut k_best, mut v_best) = (0usize, f(lo));
        for k in 1..=n {
            let v = f(lo + k as f64 * h);
            if v > v_best {
                k_best = k;
                v_best = v;
            }
        }
        let a = lo + k_best.saturating_sub(1) as f64 * h;
        let b = (lo + (k_best + 1) as f64 * h).min(hi);
        let est = v_best.max(golden_max(&f, a, b));
        if let Some(p) = prev {
            if (est - p).abs() <= SUP_REL_TOL * est.abs().max(f64::MIN_POSITIVE) || n >= 1 << 20 {
                return est.max(p);
            }
        }
        prev = Some(est);
        n *= 2;
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(0.5 * (a + b)))
}

/// Profile block of a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub shape: ShapeName,
    #[serde(default = "default_r_g")]
    pub r_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_path: Option<PathBuf>,
}

fn default_r_g() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeName {
    #[serde(rename = "triangle")]
    Triangle,
    #[serde(rename = "trunc-exp")]
    TruncExp,
    #[serde(rename = "table")]
    Table,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            shape: ShapeName::Triangle,
            r_g: 1.0,
            a: None,
            table_path: None,
        }
    }
}

impl ProfileConfig {
    pub fn build(&self) -> Result<KernelProfile, KernelError> {
        let raw = match self.shape {
            ShapeName::Triangle => RawProfile::Triangle { r_g: self.r_g },
            ShapeName::TruncExp => RawProfile::TruncatedExponential { r_g: self.r_g },
            ShapeName::Table => {
                let path = self.table_path.as_ref().ok_or_else(|| {
                    KernelError::InvalidDescription("table profile needs table_path".into())
                })?;
                let (t, g) = read_table(path)?;
                RawProfile::Table { r_g: self.r_g, t, g }
            }
        };
        validate_profile(raw, self.a)
    }
}

/// Reads a two-column `t,g` CSV with a header row.
pub fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    let io_err = |message: String| KernelError::TableIo {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(e.to_string()))?;
    let (mut t, mut g) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| io_err(e.to_string()))?;
        if record.len() != 2 {
            return Err(io_err(format!("expected 2 columns, found {}", record.len())));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| io_err(format!("{s:?}: {e}")));
        t.push(parse(&record[0])?);
        g.push(parse(&record[1])?);
    }
    Ok((t, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: dense 1-D grid maximization.
    fn grid_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        (0..=n)
            .map(|i| f(lo + (hi - lo) * i as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn triangle_constants() {
        let p = KernelProfile::triangle();
        assert_eq!(p.a(), 0.5);
        assert_eq!(p.c_g(), 0.5);
        assert!((p.lipschitz() - 1.0).abs() < 1e-9, "{}", p.lipschitz());
        assert_eq!(p.sup(), 1.0);
        let oracle = grid_max(|t| t * (1.0 - t).max(0.0), 0.0, 1.0, 1_000_000);
        assert!((oracle - 0.25).abs() < 1e-12);
        assert!((p.normalization() - oracle).abs() < 1e-12);
        assert!((normalization_constant(&p) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn explicit_a_is_respected() {
        let p = validate_profile(RawProfile::Triangle { r_g: 1.0 }, Some(0.25)).unwrap();
        assert_eq!(p.a(), 0.25);
        assert_eq!(p.c_g(), 0.75);
        assert!(matches!(
            validate_profile(RawProfile::Triangle { r_g: 1.0 }, Some(1.0)),
            Err(KernelError::RejectMonotone(_))
        ));
    }

    #[test]
    fn zero_profile_has_no_monotone_radius() {
        let err = validate_profile(RawProfile::closed_form(1.0, |_| 0.0), None).unwrap_err();
        assert!(matches!(err, KernelError::RejectMonotone(_)), "{err}");
    }

    #[test]
    fn indicator_is_not_lipschitz() {
        let raw = RawProfile::closed_form(1.0, |t| if t <= 1.0 { 1.0 } else { 0.0 });
        let err = validate_profile(raw, None).unwrap_err();
        assert!(matches!(err, KernelError::RejectLipschitz { .. }), "{err}");
    }

    #[test]
    fn negative_profile_rejected() {
        let raw = RawProfile::closed_form(1.0, |t| if t <= 1.0 { 0.5 - t } else { 0.0 });
        assert!(matches!(
            validate_profile(raw, None),
            Err(KernelError::RejectNonNegative { .. })
        ));
    }

    #[test]
    fn support_violation_rejected() {
        let raw = RawProfile::closed_form(1.0, |t| (1.5 - t).max(0.0));
        assert!(matches!(
            validate_profile(raw, None),
            Err(KernelError::RejectSupport { .. })
        ));
    }

    #[test]
    fn plateau_with_steep_ramp_normalizes_to_its_height() {
        let c = 3.0;
        let w = 1e-6;
        let raw = RawProfile::closed_form(1.0 + w, move |t| {
            if t <= 1.0 {
                c
            } else if t < 1.0 + w {
                c * (1.0 + w - t) / w
            } else {
                0.0
            }
        });
        let p = validate_profile(raw, None).unwrap();
        let oracle = grid_max(|t| t * p.g(t), 0.0, 1.0 + w, 1_000_000);
        assert!((oracle - c).abs() < 1e-5);
        assert!((p.normalization() - c).abs() < 1e-5, "{}", p.normalization());
        assert!(p.lipschitz() > 0.5 * c / w);
    }

    #[test]
    fn normalization_is_positively_homogeneous() {
        let p = KernelProfile::triangle();
        let q = validate_profile(RawProfile::closed_form(1.0, |t| 2.0 * (1.0 - t).max(0.0)), None).unwrap();
        assert!((q.normalization() - 2.0 * p.normalization()).abs() < 1e-12);
        assert!((q.sup() - 2.0 * p.sup()).abs() < 1e-12);
    }

    #[test]
    fn tabulated_triangle_matches_closed_form() {
        let raw = RawProfile::tabulate(1.0, 100_000, |t| (1.0 - t).max(0.0));
        let p = validate_profile(raw, None).unwrap();
        assert_eq!(p.shape(), ProfileShape::TableLookup);
        assert!((p.normalization() - 0.25).abs() < 1e-4);
        assert!((p.a() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn short_table_rejected() {
        let raw = RawProfile::tabulate(1.0, 10, |t| (1.0 - t).max(0.0));
        assert!(matches!(
            validate_profile(raw, None),
            Err(KernelError::InvalidDescription(_))
        ));
    }

    #[test]
    fn truncated_exponential_is_admissible() {
        let p = validate_profile(RawProfile::TruncatedExponential { r_g: 2.0 }, None).unwrap();
        // a·e^{-a} peaks at a = 1.
        assert!((p.a() - 1.0).abs() < 1e-12);
        assert!((p.normalization() - (-1.0f64).exp()).abs() < 1e-9);
        assert_eq!(p.g(2.5), 0.0);
        assert!(p.g(1.999) > 0.0);
    }

    #[test]
    fn scaled_kernel_values() {
        let p = KernelProfile::triangle();
        assert!((eval_scaled_kernel(&p, 0.1, 0.05).unwrap() - 20.0).abs() < 1e-12);
        assert!((eval_scaled_kernel(&p, 1.0, 0.0).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(eval_scaled_kernel(&p, 0.1, 0.1000001).unwrap(), 0.0);
        assert_eq!(
            eval_scaled_kernel(&p, 0.0, 0.1),
            Err(KernelError::NonPositiveEps(0.0))
        );
        assert!(eval_scaled_kernel(&p, -1.0, 0.1).is_err());
    }

    #[test]
    fn profile_config_defaults_to_triangle() {
        let cfg: ProfileConfig = serde_json::from_str(r#"{"shape":"triangle"}"#).unwrap();
        let p = cfg.build().unwrap();
        assert_eq!(p.shape(), ProfileShape::Triangle);
        assert_eq!(p.r_g(), 1.0);
    }

    #[test]
    fn table_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let mut text = String::from("t,g\n");
        for i in 0..2001 {
            let t = i as f64 / 1000.0;
            text.push_str(&format!("{t},{}\n", (1.0 - t).max(0.0)));
        }
        std::fs::write(&path, text).unwrap();
        let cfg = ProfileConfig {
            shape: ShapeName::Table,
            r_g: 1.0,
            a: None,
            table_path: Some(path),
        };
        let p = cfg.build().unwrap();
        assert!((p.normalization() - 0.25).abs() < 1e-6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scaled_kernel_is_nonnegative_and_compact(eps in 1e-3f64..10.0, dist in 0.0f64..20.0) {
                let p = KernelProfile::triangle();
                let w = eval_scaled_kernel(&p, eps, dist).unwrap();
                prop_assert!(w >= 0.0);
                if dist > eps * p.r_g() {
                    prop_assert_eq!(w, 0.0);
                }
            }

            #[test]
            fn scale_consistency(eps in 1e-2f64..2.0, dist in 0.0f64..2.0, lambda in 0.1f64..10.0) {
                let p = KernelProfile::triangle();
                let lhs = eval_scaled_kernel(&p, lambda * eps, lambda * dist).unwrap();
                let rhs = eval_scaled_kernel(&p, eps, dist).unwrap() / lambda;
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }
    }
}
