//! Chance constraint `P(a(x)ᵀξ ≤ b(x)) ≥ 1 − ε` to second-order cone cuts.
//!
//! Unimodal cuts are stored divided through by their `τ` (or break point)
//! so that coefficients stay bounded as `τ` grows.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, normal_quantile};
use crate::pwl::{Line, PwlError, PwlFunction, VFunction};
use crate::stats::{SampleSet, StatsError, UncertaintyModel, validate_unimodal_model};

#[derive(Debug, Error)]
pub enum DrccError {
    #[error("covariance factorization failed (minimum eigenvalue {min_eigenvalue:e})")]
    Factorization { min_eigenvalue: f64 },
    #[error(transparent)]
    Model(#[from] StatsError),
    #[error(transparent)]
    Pwl(#[from] PwlError),
    #[error("tau = {tau} is below tau0 = {tau0}")]
    TauBelowTau0 { tau: f64, tau0: f64 },
    #[error(
        "b(x) − mᵀa(x) = {slack:e} < 0 for `{label}`; the asymptotic cut is missing or violated"
    )]
    MissingAsymptoticCut { label: String, slack: f64 },
    #[error("invalid approximation nodes: {0}")]
    BadNodes(String),
    #[error("scenario count must be at least 1 and at most {available}, got {requested}")]
    ScenarioCount { requested: usize, available: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Separation violation tolerance.
pub const SEPARATION_TOL: f64 = 1e-6;
/// Reported `τ*` when the supremum is only approached as `τ → ∞`.
pub const TAU_CAP: f64 = 1e6;

/// `coef·x + offset`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearForm {
    pub coef: DVector<f64>,
    pub offset: f64,
}

impl LinearForm {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.coef.dot(x) + self.offset
    }
}

/// `a(x) = A x + a₀ ∈ ℝˡ`, `b(x) = bᵀx + b₀`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffineChanceConstraint {
    pub a_matrix: DMatrix<f64>,
    pub a_offset: DVector<f64>,
    pub b: LinearForm,
    pub label: String,
}

impl AffineChanceConstraint {
    pub fn new(
        a_matrix: DMatrix<f64>,
        a_offset: DVector<f64>,
        b: LinearForm,
        label: impl Into<String>,
    ) -> Result<Self, DrccError> {
        if a_matrix.nrows() != a_offset.len() || a_matrix.ncols() != b.coef.len() {
            return Err(DrccError::Dimension(format!(
                "a is {}x{} with offset {}, b has {} coefficients",
                a_matrix.nrows(),
                a_matrix.ncols(),
                a_offset.len(),
                b.coef.len()
            )));
        }
        Ok(Self {
            a_matrix,
            a_offset,
            b,
            label: label.into(),
        })
    }

    /// Uncertainty dimension `l`.
    pub fn dim(&self) -> usize {
        self.a_offset.len()
    }

    /// Decision dimension `n`.
    pub fn nvars(&self) -> usize {
        self.b.coef.len()
    }

    pub fn a(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_matrix * x + &self.a_offset
    }

    pub fn b(&self, x: &DVector<f64>) -> f64 {
        self.b.eval(x)
    }

    /// `wᵀa(x)` as a linear form in `x`.
    fn a_dot(&self, w: &DVector<f64>) -> LinearForm {
        LinearForm {
            coef: self.a_matrix.tr_mul(w),
            offset: w.dot(&self.a_offset),
        }
    }

    /// `b(x) − wᵀa(x)`.
    fn b_minus(&self, w: &DVector<f64>) -> LinearForm {
        let wa = self.a_dot(w);
        LinearForm {
            coef: &self.b.coef - wa.coef,
            offset: self.b.offset - wa.offset,
        }
    }
}

/// Which construction produced a cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CutTag {
    Moment,
    Gaussian,
    Unimodal { tau: f64 },
    Asymptotic,
    Conservative { q: f64, g: f64 },
}

/// `‖N x + n₀‖ ≤ rhs(x)`; with zero norm rows it is the linear `rhs(x) ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SocCut {
    pub norm_matrix: DMatrix<f64>,
    pub norm_offset: DVector<f64>,
    pub rhs: LinearForm,
    pub tag: CutTag,
    pub label: String,
}

impl SocCut {
    pub fn is_linear(&self) -> bool {
        self.norm_matrix.nrows() == 0
            || (self.norm_matrix.iter().all(|v| *v == 0.0)
                && self.norm_offset.iter().all(|v| *v == 0.0))
    }

    /// `‖N x + n₀‖ − rhs(x)`; positive means violated.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let norm = if self.norm_matrix.nrows() == 0 {
            0.0
        } else {
            (&self.norm_matrix * x + &self.norm_offset).norm()
        };
        norm - self.rhs.eval(x)
    }
}

/// Multiplier of the moment-only reformulation, `sqrt((1−ε)/ε)`.
pub fn moment_multiplier(epsilon: f64) -> f64 {
    ((1.0 - epsilon) / epsilon).sqrt()
}

/// Multiplier of the Gaussian reformulation, `Φ⁻¹(1−ε)`.
pub fn gaussian_multiplier(epsilon: f64) -> f64 {
    normal_quantile(1.0 - epsilon)
}

/// Lower-triangular `C` with `CCᵀ = Σ − μμᵀ`.
pub fn covariance_factor(model: &UncertaintyModel) -> Result<DMatrix<f64>, DrccError> {
    linalg::psd_lower_factor(&model.covariance()).map_err(|c| DrccError::Factorization {
        min_eigenvalue: c.min_eigenvalue,
    })
}

/// Lower-triangular `L` with `LLᵀ` equal to the matrix under Λ's root.
pub fn lambda_factor(model: &UncertaintyModel) -> Result<DMatrix<f64>, DrccError> {
    validate_unimodal_model(model)?;
    linalg::psd_lower_factor(&model.lambda_inner()).map_err(|c| {
        DrccError::Model(StatsError::IndefiniteUnimodal {
            min_eigenvalue: c.min_eigenvalue,
        })
    })
}

/// `multiplier·‖Fᵀa(x)‖ ≤ b(x) − μᵀa(x)`.
fn mean_cut(
    cc: &AffineChanceConstraint,
    mu: &DVector<f64>,
    factor: &DMatrix<f64>,
    multiplier: f64,
    tag: CutTag,
) -> SocCut {
    SocCut {
        norm_matrix: factor.transpose() * &cc.a_matrix * multiplier,
        norm_offset: factor.tr_mul(&cc.a_offset) * multiplier,
        rhs: cc.b_minus(mu),
        tag,
        label: cc.label.clone(),
    }
}

/// Exact cut under the moment-only ambiguity set.
pub fn reformulate_moment(
    cc: &AffineChanceConstraint,
    model: &UncertaintyModel,
) -> Result<SocCut, DrccError> {
    let c = covariance_factor(model)?;
    Ok(mean_cut(
        cc,
        &model.mu,
        &c,
        moment_multiplier(model.epsilon),
        CutTag::Moment,
    ))
}

/// Exact cut when ξ is Gaussian with the model's moments.
pub fn gaussian_cut(
    cc: &AffineChanceConstraint,
    model: &UncertaintyModel,
) -> Result<SocCut, DrccError> {
    let c = covariance_factor(model)?;
    Ok(mean_cut(
        cc,
        &model.mu,
        &c,
        gaussian_multiplier(model.epsilon),
        CutTag::Gaussian,
    ))
}

/// Outcome of one separation call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Separation {
    pub tau: f64,
    /// `v(τ)c₁ − τc₂ + c₃` at `τ`.
    pub violation: f64,
}

/// Maximizes `φ(τ) = v(τ)c₁ − τc₂ + c₃` over `τ ≥ τ0`.
///
/// Returns the maximizer and `φ` there, whether or not it is positive.
pub fn maximize_violation(vf: &VFunction, c1: f64, c2: f64, c3: f64) -> Separation {
    let phi = |tau: f64| vf.eval(tau) * c1 - tau * c2 + c3;
    if c1 <= 0.0 {
        return Separation {
            tau: vf.tau0,
            violation: phi(vf.tau0),
        };
    }
    if c2 <= 0.0 {
        return Separation {
            tau: TAU_CAP,
            violation: vf.sup() * c1 + c3,
        };
    }
    let tau = vf.derivative_inverse(c2 / c1);
    Separation {
        tau,
        violation: phi(tau),
    }
}

/// Everything needed to cut a chance constraint under the unimodal set.
#[derive(Debug, Clone)]
pub struct UnimodalContext {
    pub model: UncertaintyModel,
    pub vf: VFunction,
    /// Factor of the matrix under Λ's root.
    pub lambda: DMatrix<f64>,
    /// `((α+1)/α)(μ − m)`.
    shift: DVector<f64>,
}

impl UnimodalContext {
    pub fn new(model: &UncertaintyModel) -> Result<Self, DrccError> {
        let lambda = lambda_factor(model)?;
        let vf = VFunction::new(model.epsilon, model.alpha)?;
        let shift = (&model.mu - &model.mode) * ((model.alpha + 1.0) / model.alpha);
        Ok(Self {
            model: model.clone(),
            vf,
            lambda,
            shift,
        })
    }

    pub fn tau0(&self) -> f64 {
        self.vf.tau0
    }

    /// `(c₁, c₂, c₃) = (‖Lᵀa‖, b − mᵀa, ((α+1)/α)(μ−m)ᵀa)` at `x`.
    pub fn scalars(&self, cc: &AffineChanceConstraint, x: &DVector<f64>) -> (f64, f64, f64) {
        let a = cc.a(x);
        (
            self.lambda.tr_mul(&a).norm(),
            cc.b(x) - self.model.mode.dot(&a),
            self.shift.dot(&a),
        )
    }

    /// `coef·‖Lᵀa‖ ≤ scale·(b − mᵀa) − ((α+1)/α)(μ−m)ᵀa`, divided by `scale`.
    fn scaled_cut(
        &self,
        cc: &AffineChanceConstraint,
        coef: f64,
        scale: f64,
        tag: CutTag,
    ) -> SocCut {
        let k = coef / scale;
        let slack = cc.b_minus(&self.model.mode);
        let corr = cc.a_dot(&self.shift);
        SocCut {
            norm_matrix: self.lambda.transpose() * &cc.a_matrix * k,
            norm_offset: self.lambda.tr_mul(&cc.a_offset) * k,
            rhs: LinearForm {
                coef: slack.coef - corr.coef / scale,
                offset: slack.offset - corr.offset / scale,
            },
            tag,
            label: cc.label.clone(),
        }
    }

    /// Member of the exact family at `τ`; `τ = ∞` gives the asymptotic cut.
    pub fn cut_at(&self, cc: &AffineChanceConstraint, tau: f64) -> Result<SocCut, DrccError> {
        if tau.is_nan() || tau < self.tau0() {
            return Err(DrccError::TauBelowTau0 {
                tau,
                tau0: self.tau0(),
            });
        }
        if tau == f64::INFINITY {
            return Ok(self.asymptotic_cut(cc));
        }
        Ok(self.scaled_cut(cc, self.vf.eval(tau), tau, CutTag::Unimodal { tau }))
    }

    /// `b(x) − mᵀa(x) ≥ 0`, the `τ → ∞` limit of the family.
    pub fn asymptotic_cut(&self, cc: &AffineChanceConstraint) -> SocCut {
        SocCut {
            norm_matrix: DMatrix::zeros(0, cc.nvars()),
            norm_offset: DVector::zeros(0),
            rhs: cc.b_minus(&self.model.mode),
            tag: CutTag::Asymptotic,
            label: cc.label.clone(),
        }
    }

    /// Most violated member of the family at `x`, if its violation exceeds
    /// `tol`. Small negative `b − mᵀa` within `tol` is treated as zero.
    pub fn separate(
        &self,
        cc: &AffineChanceConstraint,
        x: &DVector<f64>,
        tol: f64,
    ) -> Result<Option<Separation>, DrccError> {
        let (c1, mut c2, c3) = self.scalars(cc, x);
        if c2 < 0.0 {
            if c2 < -tol {
                return Err(DrccError::MissingAsymptoticCut {
                    label: cc.label.clone(),
                    slack: c2,
                });
            }
            c2 = 0.0;
        }
        let sep = maximize_violation(&self.vf, c1, c2, c3);
        Ok((sep.violation > tol).then_some(sep))
    }

    /// Largest per-`τ` violation `φ(τ)/τ` over `grid`.
    pub fn audit(&self, cc: &AffineChanceConstraint, x: &DVector<f64>, grid: &[f64]) -> f64 {
        let (c1, c2, c3) = self.scalars(cc, x);
        grid.iter()
            .map(|&tau| {
                if tau == f64::INFINITY {
                    -c2
                } else {
                    (self.vf.eval(tau) * c1 + c3) / tau - c2
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One exact-family cut per node.
    pub fn relaxed_cuts(
        &self,
        cc: &AffineChanceConstraint,
        nodes: &[f64],
    ) -> Result<Vec<SocCut>, DrccError> {
        if nodes
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less))
        {
            return Err(DrccError::BadNodes("nodes must strictly increase".into()));
        }
        nodes.iter().map(|&n| self.cut_at(cc, n)).collect()
    }

    /// `g(q)‖Λa‖ ≤ q(b − mᵀa) − ((α+1)/α)(μ−m)ᵀa` at every break point `q`
    /// of `g`, plus the asymptotic cut that keeps the set bounded.
    pub fn conservative_cuts(
        &self,
        cc: &AffineChanceConstraint,
        g: &PwlFunction,
    ) -> Result<Vec<SocCut>, DrccError> {
        if (g.left() - self.tau0()).abs() > 1e-12 * self.tau0() {
            return Err(DrccError::BadNodes(format!(
                "first break point {} must equal tau0 {}",
                g.left(),
                self.tau0()
            )));
        }
        crate::pwl::check_outer(&self.vf, g)?;
        let mut cuts: Vec<SocCut> = g
            .breakpoints
            .iter()
            .map(|&q| {
                let gq = g.eval(q);
                self.scaled_cut(cc, gq, q, CutTag::Conservative { q, g: gq })
            })
            .collect();
        cuts.push(self.asymptotic_cut(cc));
        Ok(cuts)
    }
}

/// Coefficients of the conservative-approximation piece at node `n`,
/// `sqrt(1/(ε(1−ε−n^{−α})))·[(α n^{−α−1}/2)τ + 1 − ε − (1 + α/2)n^{−α}]`.
pub fn node_piece(vf: &VFunction, n: f64) -> Line {
    if n == f64::INFINITY {
        return Line::constant(vf.sup());
    }
    let (e, a) = (vf.epsilon, vf.alpha);
    let na = n.powf(-a);
    let k = (1.0 / (e * (1.0 - e - na))).sqrt();
    Line {
        slope: k * a * n.powf(-a - 1.0) / 2.0,
        intercept: k * (1.0 - e - (1.0 + a / 2.0) * na),
    }
}

/// The envelope `g(τ) = min_{k ≥ 2} piece(n_k)` for nodes
/// `τ0 = n₁ < n₂ < … < n_K = ∞`; its break points are `q₁ = τ0, q₂, …`.
pub fn tangent_envelope(vf: &VFunction, nodes: &[f64]) -> Result<PwlFunction, DrccError> {
    if nodes.len() < 2 {
        return Err(DrccError::BadNodes(
            "at least two nodes are required".into(),
        ));
    }
    if (nodes[0] - vf.tau0).abs() > 1e-12 * vf.tau0 {
        return Err(DrccError::BadNodes(format!(
            "first node {} must equal tau0 {}",
            nodes[0], vf.tau0
        )));
    }
    if *nodes.last().unwrap() != f64::INFINITY {
        return Err(DrccError::BadNodes("last node must be +inf".into()));
    }
    if nodes
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less))
    {
        return Err(DrccError::BadNodes("nodes must strictly increase".into()));
    }
    let lines = nodes[1..].iter().map(|&n| node_piece(vf, n)).collect();
    let tangents = nodes[1..nodes.len() - 1].to_vec();
    Ok(PwlFunction::from_lines(vf.tau0, lines, tangents)?)
}

/// Sorted, de-duplicated `{τ0} ∪ points ∪ {∞}` for [`tangent_envelope`].
pub fn envelope_nodes(tau0: f64, points: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut inner: Vec<f64> = points
        .into_iter()
        .filter(|&t| t > tau0 * (1.0 + 1e-12) && t.is_finite())
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
    let mut nodes = Vec::with_capacity(inner.len() + 2);
    nodes.push(tau0);
    nodes.extend(inner);
    nodes.push(f64::INFINITY);
    nodes
}

/// `a(x)ᵀξ ≤ b(x)` robustified over a coordinate box, written as
/// `a(x)ᵀc + Σ rᵢ|aᵢ(x)| ≤ b(x)` with center `c` and radii `r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxRobustConstraint {
    pub cc: AffineChanceConstraint,
    pub center: DVector<f64>,
    pub radius: DVector<f64>,
}

impl BoxRobustConstraint {
    /// `b(x) − a(x)ᵀc − Σ rᵢ|aᵢ(x)|`; negative means violated.
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        let a = self.cc.a(x);
        self.cc.b(x) - a.dot(&self.center) - a.abs().dot(&self.radius)
    }
}

/// Coordinate-wise `[lo, hi]` of the first `count` scenarios.
pub fn scenario_box(
    samples: &SampleSet,
    count: usize,
) -> Result<(DVector<f64>, DVector<f64>), DrccError> {
    if count < 1 || count > samples.len() {
        return Err(DrccError::ScenarioCount {
            requested: count,
            available: samples.len(),
        });
    }
    let head = samples.data().rows(0, count);
    let lo = DVector::from_iterator(head.ncols(), head.column_iter().map(|c| c.min()));
    let hi = DVector::from_iterator(head.ncols(), head.column_iter().map(|c| c.max()));
    Ok((lo, hi))
}

pub fn scenario_box_cuts(
    ccs: &[AffineChanceConstraint],
    samples: &SampleSet,
    count: usize,
) -> Result<Vec<BoxRobustConstraint>, DrccError> {
    let (lo, hi) = scenario_box(samples, count)?;
    let center = (&lo + &hi) * 0.5;
    let radius = (&hi - &lo) * 0.5;
    ccs.iter()
        .map(|cc| {
            if cc.dim() != lo.len() {
                return Err(DrccError::Dimension(format!(
                    "`{}` has l = {}, samples have {}",
                    cc.label,
                    cc.dim(),
                    lo.len()
                )));
            }
            Ok(BoxRobustConstraint {
                cc: cc.clone(),
                center: center.clone(),
                radius: radius.clone(),
            })
        })
        .collect()
}

/// `⌈(2/ε)(ln(1/β) + n)⌉` scenarios for confidence `1 − β` with `n` decisions.
pub fn scenario_count(epsilon: f64, beta: f64, n_decisions: usize) -> usize {
    ((2.0 / epsilon) * ((1.0 / beta).ln() + n_decisions as f64)).ceil() as usize
}

/// Finite approximation families of the unimodal constraint set that
/// over-restrict it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ApproxVariant {
    /// Tangent envelope at the worst-case `τ`s of early cutting-plane iterates.
    Ub,
    /// Optimal `K−1`-piece approximation on constraints found violated.
    Ops0,
    /// Optimal `K−1`-piece approximation on every constraint.
    Ops1,
    /// Union of the optimal `1..K−1`-piece approximations, violated constraints only.
    Ops2,
    /// Union of the optimal `1..K−1`-piece approximations on every constraint.
    Ops3,
}

impl ApproxVariant {
    pub const ALL: [ApproxVariant; 5] = [Self::Ub, Self::Ops0, Self::Ops1, Self::Ops2, Self::Ops3];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ub => "ub",
            Self::Ops0 => "ops0",
            Self::Ops1 => "ops1",
            Self::Ops2 => "ops2",
            Self::Ops3 => "ops3",
        }
    }

    /// Whether the pieces come from the optimal search rather than from
    /// cutting-plane iterates.
    pub fn uses_ops(&self) -> bool {
        !matches!(self, Self::Ub)
    }

    /// Whether the union of all smaller piece counts is used.
    pub fn aggregated(&self) -> bool {
        matches!(self, Self::Ops2 | Self::Ops3)
    }

    /// Whether only constraints found violated get the approximation.
    pub fn violated_only(&self) -> bool {
        matches!(self, Self::Ops0 | Self::Ops2)
    }
}

impl std::fmt::Display for ApproxVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ApproxVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown approximation variant `{s}`"))
    }
}
