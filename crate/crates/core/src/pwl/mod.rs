//! The concave function `v(τ) = sqrt((1−ε−τ^{−α})/ε)` on `[τ0, ∞)` and its
//! piecewise-linear outer approximations.

mod cache;
mod ops;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{OpsCache, ops_table_csv};
pub use ops::{OpsConfig, OpsResult, ops_search};

#[derive(Debug, Error)]
pub enum PwlError {
    #[error("tau = {tau} is below tau0 = {tau0}")]
    Domain { tau: f64, tau0: f64 },
    #[error("tangent point must exceed tau0 = {tau0}, got {t}")]
    TangentAtBoundary { t: f64, tau0: f64 },
    #[error("epsilon must lie in (0, 0.5), got {0}")]
    InvalidEpsilon(f64),
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed piecewise-linear function: {0}")]
    Malformed(String),
    #[error("not an outer approximation: h(τ) − v(τ) = {gap:e} at τ = {tau}")]
    NotOuter { tau: f64, gap: f64 },
    #[error("no convergence under current initialization after {iterations} iterations")]
    NoConvergence {
        iterations: usize,
        last: Box<OpsResult>,
    },
    #[error("ops cache: {0}")]
    Cache(String),
}

/// Slack used when comparing `h ≥ v` on the audit grid.
const OUTER_SLACK: f64 = 1e-12;

/// `v(τ)` for a fixed risk level and unimodality order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VFunction {
    pub epsilon: f64,
    pub alpha: f64,
    pub tau0: f64,
}

impl VFunction {
    pub fn new(epsilon: f64, alpha: f64) -> Result<Self, PwlError> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(PwlError::InvalidEpsilon(epsilon));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PwlError::InvalidAlpha(alpha));
        }
        Ok(Self {
            epsilon,
            alpha,
            tau0: (1.0 / (1.0 - epsilon)).powf(1.0 / alpha),
        })
    }

    /// `sqrt((1−ε)/ε)`, the limit of `v` as `τ → ∞`.
    pub fn sup(&self) -> f64 {
        ((1.0 - self.epsilon) / self.epsilon).sqrt()
    }

    /// `v(τ)`; `f64::INFINITY` is accepted and maps to [`Self::sup`].
    pub fn value(&self, tau: f64) -> Result<f64, PwlError> {
        if tau.is_nan() || tau < self.tau0 {
            return Err(PwlError::Domain {
                tau,
                tau0: self.tau0,
            });
        }
        Ok(self.eval(tau))
    }

    /// `v(τ)` without the domain check; rounding below zero is clipped.
    pub(crate) fn eval(&self, tau: f64) -> f64 {
        if tau == f64::INFINITY {
            return self.sup();
        }
        if tau <= self.tau0 {
            return 0.0;
        }
        ((1.0 - self.epsilon - tau.powf(-self.alpha)).max(0.0) / self.epsilon).sqrt()
    }

    /// `v′(t) = α t^{−α−1} / (2 ε v(t))` for `t > τ0`; zero at infinity.
    pub fn derivative(&self, t: f64) -> f64 {
        if t == f64::INFINITY {
            return 0.0;
        }
        self.alpha * t.powf(-self.alpha - 1.0) / (2.0 * self.epsilon * self.eval(t))
    }

    /// Tangent line of `v` at `t`; `t = ∞` gives the constant asymptote.
    pub fn tangent_line(&self, t: f64) -> Result<Line, PwlError> {
        if t.is_nan() || t <= self.tau0 {
            return Err(PwlError::TangentAtBoundary { t, tau0: self.tau0 });
        }
        if t == f64::INFINITY {
            return Ok(Line::constant(self.sup()));
        }
        let slope = self.derivative(t);
        Ok(Line {
            slope,
            intercept: self.eval(t) - slope * t,
        })
    }

    /// The unique `τ > τ0` with `v′(τ) = target`, by bisection to relative
    /// width `1e−12`. `target` must be positive and finite.
    pub fn derivative_inverse(&self, target: f64) -> f64 {
        debug_assert!(target > 0.0 && target.is_finite());
        let mut lo = self.tau0;
        let mut hi = 2.0 * self.tau0;
        while self.derivative(hi) > target && hi < 1e300 {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if self.derivative(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `τ ↦ slope·τ + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn constant(value: f64) -> Self {
        Self {
            slope: 0.0,
            intercept: value,
        }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        if tau == f64::INFINITY && self.slope == 0.0 {
            return self.intercept;
        }
        self.slope * tau + self.intercept
    }

    /// Abscissa where two non-parallel lines meet.
    pub fn intersect(&self, other: &Line) -> f64 {
        (other.intercept - self.intercept) / (self.slope - other.slope)
    }
}

/// Concave `h(τ) = min_s {d_s τ + f_s}` on `[B₁, ∞)`.
///
/// `breakpoints[0]` is the left end `B₁`; `breakpoints[s]` for `s ≥ 1` is
/// where piece `s−1` hands over to piece `s`. Piece `s` is active on
/// `[breakpoints[s], breakpoints[s+1]]`, the last one up to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlFunction {
    pub pieces: Vec<Line>,
    pub breakpoints: Vec<f64>,
    /// Tangency abscissae of the non-constant pieces, when known.
    pub tangent_points: Vec<f64>,
}

impl PwlFunction {
    pub fn constant(left: f64, value: f64) -> Self {
        Self {
            pieces: vec![Line::constant(value)],
            breakpoints: vec![left],
            tangent_points: Vec::new(),
        }
    }

    /// Builds the envelope of `lines`, given in order of strictly decreasing
    /// slope, with break points from consecutive intersections.
    pub fn from_lines(
        left: f64,
        lines: Vec<Line>,
        tangent_points: Vec<f64>,
    ) -> Result<Self, PwlError> {
        if lines.is_empty() {
            return Err(PwlError::Malformed("no pieces".into()));
        }
        let mut breakpoints = vec![left];
        for w in lines.windows(2) {
            if !(w[1].slope < w[0].slope) {
                return Err(PwlError::Malformed("slopes must strictly decrease".into()));
            }
            breakpoints.push(w[0].intersect(&w[1]));
        }
        let pwl = Self {
            pieces: lines,
            breakpoints,
            tangent_points,
        };
        pwl.validate()?;
        Ok(pwl)
    }

    pub fn validate(&self) -> Result<(), PwlError> {
        if self.pieces.is_empty() || self.breakpoints.len() != self.pieces.len() {
            return Err(PwlError::Malformed(format!(
                "{} pieces with {} break points",
                self.pieces.len(),
                self.breakpoints.len()
            )));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(PwlError::Malformed(
                "break points must strictly increase".into(),
            ));
        }
        for s in 1..self.pieces.len() {
            let b = self.breakpoints[s];
            let (l, r) = (self.pieces[s - 1].eval(b), self.pieces[s].eval(b));
            if (l - r).abs() > 1e-9 * l.abs().max(1.0) {
                return Err(PwlError::Malformed(format!(
                    "pieces disagree at break point {b}"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval(tau))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn left(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn last(&self) -> &Line {
        self.pieces.last().expect("validated non-empty")
    }

    /// `h(B_s) − v(B_s)` at every break point, left end included.
    pub fn breakpoint_errors(&self, vf: &VFunction) -> Vec<f64> {
        self.breakpoints
            .iter()
            .map(|&b| self.eval(b) - vf.eval(b))
            .collect()
    }
}

/// Number of finite points in [`audit_grid`].
pub const AUDIT_POINTS: usize = 10_000;

/// `AUDIT_POINTS` log-spaced points on `[τ0, τ0 + 1000]` followed by `+∞`.
pub fn audit_grid(tau0: f64) -> Vec<f64> {
    let ratio = ((tau0 + 1000.0) / tau0).ln();
    let mut grid: Vec<f64> = (0..AUDIT_POINTS)
        .map(|k| tau0 * (ratio * k as f64 / (AUDIT_POINTS - 1) as f64).exp())
        .collect();
    grid[0] = tau0;
    grid.push(f64::INFINITY);
    grid
}

/// Fails with the worst offending point when `h < v` somewhere on the grid.
pub fn check_outer(vf: &VFunction, pwl: &PwlFunction) -> Result<(), PwlError> {
    let mut worst: Option<(f64, f64)> = None;
    for tau in audit_grid(vf.tau0) {
        let gap = pwl.eval(tau) - vf.eval(tau);
        if gap < -OUTER_SLACK * vf.sup() && worst.is_none_or(|(_, g)| gap < g) {
            worst = Some((tau, gap));
        }
    }
    match worst {
        Some((tau, gap)) => Err(PwlError::NotOuter { tau, gap }),
        None => Ok(()),
    }
}

/// Largest `h − v` over `[τ0, ∞)`.
///
/// `h_s − v` is convex on each piece's domain, so the maximum sits at a
/// break point or at infinity.
pub fn pwl_error(vf: &VFunction, pwl: &PwlFunction) -> Result<f64, PwlError> {
    pwl.validate()?;
    check_outer(vf, pwl)?;
    if pwl.last().slope != 0.0 {
        return Ok(f64::INFINITY);
    }
    let tail = pwl.last().intercept - vf.sup();
    Ok(pwl.breakpoint_errors(vf).into_iter().fold(tail, f64::max))
}

/// Per-condition verdicts of the optimality test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OptimalityReport {
    /// Last piece is the constant `sqrt((1−ε)/ε)`.
    pub constant_tail: bool,
    /// Every non-constant piece touches `v` tangentially.
    pub tangent: bool,
    /// Break-point errors agree within the relative tolerance.
    pub equal_errors: bool,
}

impl OptimalityReport {
    pub fn all(&self) -> bool {
        self.constant_tail && self.tangent && self.equal_errors
    }
}

/// Zero threshold for the tangency test.
const TANGENCY_ZERO: f64 = 1e-8;

pub fn check_optimality_conditions(
    vf: &VFunction,
    pwl: &PwlFunction,
    tol: f64,
) -> OptimalityReport {
    let last = pwl.last();
    let constant_tail = last.slope.abs() <= tol && (last.intercept - vf.sup()).abs() <= tol;
    let tangent = pwl.pieces[..pwl.pieces.len() - 1]
        .iter()
        .all(|line| line.slope > 0.0 && min_gap(vf, line).abs() <= TANGENCY_ZERO);
    let errors = pwl.breakpoint_errors(vf);
    let lo = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let equal_errors = lo >= 0.0 && hi <= (1.0 + tol) * lo;
    OptimalityReport {
        constant_tail,
        tangent,
        equal_errors,
    }
}

/// `min_τ (line(τ) − v(τ))` by golden-section search; the gap is convex.
fn min_gap(vf: &VFunction, line: &Line) -> f64 {
    let gap = |t: f64| line.eval(t) - vf.eval(t);
    let mut hi = 2.0 * vf.tau0;
    while gap(2.0 * hi) < gap(hi) && hi < 1e12 {
        hi *= 2.0;
    }
    let (mut a, mut b) = (vf.tau0, 2.0 * hi);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (gap(c), gap(d));
    while b - a > 1e-10 * b.max(1.0) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = gap(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = gap(d);
        }
    }
    gap(0.5 * (a + b))
}
