//! Conic program assembly, the backend contract and every solution method.
//!
//! All methods share one base program: the generation and reserve cost
//! (quadratic part through an epigraph cone), the participation and nominal
//! balance equalities and non-negativity. Methods differ only in how the
//! chance constraints are turned into cones.

mod clarabel_backend;
mod conic;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::drcc::{
    self, ApproxVariant, DrccError, SEPARATION_TOL, TAU_CAP, UnimodalContext, envelope_nodes,
    tangent_envelope,
};
use crate::opf::{
    self, ExtractedConstraint, Layout, NetworkCase, OpfDecision, OpfError, PtdfMatrix,
    QuadraticObjective,
};
use crate::pwl::{OpsConfig, PwlError, PwlFunction, VFunction, ops_search};
use crate::stats::{SampleSet, UncertaintyModel};

pub use clarabel_backend::ClarabelBackend;
pub use conic::{Cone, ConicProgram, Row, quadratic_epigraph};

/// Environment variable naming the conic backend.
pub const BACKEND_ENV: &str = "DROPF_BACKEND";
/// Default iteration cap of the cutting-plane loop.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Confidence parameter for the default scenario count.
pub const DEFAULT_SCENARIO_BETA: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("conic backend failure: {0}")]
    Backend(String),
    #[error("unknown conic backend `{0}` (available: clarabel)")]
    UnknownBackend(String),
    #[error("conic backend hit its iteration limit")]
    BackendIterationLimit,
    #[error("program is unbounded")]
    Unbounded,
    #[error("numerical failure in the conic backend: {0}")]
    Numerical(String),
    #[error("invalid solve configuration: {0}")]
    Config(String),
    #[error("uncertainty dimension {found} does not match the case's {expected} wind plants")]
    Dimension { found: usize, expected: usize },
    #[error(transparent)]
    Drcc(#[from] DrccError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Pwl(#[from] PwlError),
}

/// Outcome reported by a backend.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendStatus {
    Optimal,
    /// Converged to reduced accuracy.
    AlmostOptimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    Numerical(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: BackendStatus,
    pub iterations: u32,
}

/// A solver for [`ConicProgram`]s. Implementations must be deterministic for
/// a fixed program.
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, prog: &ConicProgram) -> Result<ConicSolution, SolveError>;
}

pub fn backend_by_name(name: &str) -> Result<Box<dyn ConicBackend>, SolveError> {
    match name.to_ascii_lowercase().as_str() {
        "clarabel" => Ok(Box::new(ClarabelBackend::default())),
        _ => Err(SolveError::UnknownBackend(name.to_string())),
    }
}

/// Backend named by `DROPF_BACKEND`, Clarabel when unset.
pub fn backend_from_env() -> Result<Box<dyn ConicBackend>, SolveError> {
    match std::env::var(BACKEND_ENV) {
        Ok(name) if !name.trim().is_empty() => backend_by_name(name.trim()),
        _ => backend_by_name("clarabel"),
    }
}

/// Bounded variables at most this far from zero are candidates for
/// [`polish_bounds`].
pub const POLISH_THRESHOLD: f64 = 1e-6;

/// Runs the backend and returns a solution whose status is `Optimal` or
/// `Infeasible`; every other outcome is an error. Optimal points are passed
/// through [`polish_bounds`].
pub fn solve_conic(
    backend: &dyn ConicBackend,
    prog: &ConicProgram,
) -> Result<ConicSolution, SolveError> {
    let sol = solve_raw(backend, prog)?;
    if sol.status != BackendStatus::Optimal {
        return Ok(sol);
    }
    Ok(polish_bounds(backend, prog, sol))
}

/// Interior-point iterates leave variables that belong at a bound slightly
/// off it, which matters when they multiply large uncertain quantities.
/// Fixes every non-negative variable within [`POLISH_THRESHOLD`] of zero at
/// zero and re-solves; the polished point is kept only if it is optimal and
/// its objective is no worse than `1e-7` relative.
pub fn polish_bounds(
    backend: &dyn ConicBackend,
    prog: &ConicProgram,
    sol: ConicSolution,
) -> ConicSolution {
    let near_zero: Vec<usize> = prog
        .inequalities
        .iter()
        .filter(|r| r.offset == 0.0 && r.coef.len() == 1 && r.coef[0].1 > 0.0)
        .map(|r| r.coef[0].0)
        .filter(|&j| sol.x[j] != 0.0 && sol.x[j].abs() <= POLISH_THRESHOLD)
        .collect();
    if near_zero.is_empty() {
        return sol;
    }
    let mut fixed = prog.clone();
    for &j in &near_zero {
        fixed.equalities.push(Row {
            coef: vec![(j, 1.0)],
            offset: 0.0,
        });
    }
    match solve_raw(backend, &fixed) {
        Ok(mut p)
            if p.status == BackendStatus::Optimal
                && p.objective <= sol.objective + 1e-7 * (1.0 + sol.objective.abs()) =>
        {
            for &j in &near_zero {
                p.x[j] = 0.0;
            }
            p
        }
        _ => sol,
    }
}

fn solve_raw(backend: &dyn ConicBackend, prog: &ConicProgram) -> Result<ConicSolution, SolveError> {
    let mut sol = backend.solve(prog)?;
    match &sol.status {
        BackendStatus::Optimal | BackendStatus::Infeasible => Ok(sol),
        BackendStatus::AlmostOptimal => {
            let scale = sol.x.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            let viol = prog.max_violation(&sol.x);
            if viol <= 1e-7 * scale {
                sol.status = BackendStatus::Optimal;
                Ok(sol)
            } else {
                Err(SolveError::Numerical(format!(
                    "reduced-accuracy solution violates constraints by {viol:e}"
                )))
            }
        }
        BackendStatus::Unbounded => Err(SolveError::Unbounded),
        BackendStatus::IterationLimit => Err(SolveError::BackendIterationLimit),
        BackendStatus::Numerical(m) => Err(SolveError::Numerical(m.clone())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::IterationLimit => "iteration-limit",
        })
    }
}

/// How the chance constraints are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Gaussian reformulation with the sample moments.
    Ar,
    /// Robust against the bounding box of a scenario subset.
    Sc,
    /// Moment-only ambiguity set.
    DrM,
    /// Moment plus unimodality, solved exactly by cutting planes.
    DrU,
    /// Finite subfamily of the unimodal cuts; a lower bound.
    Relaxed,
    /// Conservative finite family; an upper bound.
    Conservative(ApproxVariant),
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Ar,
        Method::Sc,
        Method::DrM,
        Method::DrU,
        Method::Relaxed,
        Method::Conservative(ApproxVariant::Ub),
        Method::Conservative(ApproxVariant::Ops0),
        Method::Conservative(ApproxVariant::Ops1),
        Method::Conservative(ApproxVariant::Ops2),
        Method::Conservative(ApproxVariant::Ops3),
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ar => "ar",
            Self::Sc => "sc",
            Self::DrM => "dr-m",
            Self::DrU => "dr-u",
            Self::Relaxed => "relaxed",
            Self::Conservative(v) => v.as_str(),
        }
    }

    /// Whether `K` changes the result.
    pub fn uses_k(&self) -> bool {
        matches!(self, Self::Relaxed | Self::Conservative(_))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = SolveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| SolveError::Config(format!("unknown method `{s}`")))
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveConfig {
    /// Separation tolerance on the per-`τ` (normalized) violation.
    pub tol: f64,
    /// Conic solves allowed in a cutting-plane loop.
    pub max_iter: usize,
    /// Approximation size: number of solves for the relaxed method, number
    /// of nodes (pieces plus one) for the conservative variants.
    pub k: usize,
    /// Explicit relaxed-method nodes; overrides `k`.
    pub nodes: Option<Vec<f64>>,
    pub ops: OpsConfig,
    /// Scenarios in the robust box; defaults to the scenario-theory count
    /// with confidence `1 − scenario_beta`, capped at the samples available.
    pub scenario_count: Option<usize>,
    pub scenario_beta: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol: SEPARATION_TOL,
            max_iter: DEFAULT_MAX_ITER,
            k: 3,
            nodes: None,
            ops: OpsConfig::default(),
            scenario_count: None,
            scenario_beta: DEFAULT_SCENARIO_BETA,
        }
    }
}

/// One cut added during a cutting-plane loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutRecord {
    /// Solve after which the cut was added, from 1.
    pub iteration: usize,
    pub constraint: String,
    /// Family member added; absent when the constraint switched to a
    /// conservative approximation.
    pub tau: Option<f64>,
    /// Normalized violation `φ(τ)/τ` that triggered the cut.
    pub violation: f64,
}

/// Result of one method run. Times are seconds of monotonic wall clock.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub method: Method,
    pub k: Option<usize>,
    pub status: SolveStatus,
    /// Generation plus reserve cost, evaluated at `decision`.
    pub objective: Option<f64>,
    pub decision: Option<OpfDecision>,
    /// Conic solves performed.
    pub iterations: usize,
    pub cuts_added: Vec<CutRecord>,
    /// Objective after every conic solve.
    pub objective_trace: Vec<f64>,
    /// Constraints given a conservative approximation (violated-only variants).
    pub approximated: Vec<String>,
    pub notes: Vec<String>,
    pub backend: String,
    pub time_total: f64,
    pub time_separation: f64,
}

impl SolveReport {
    fn new(method: Method, k: Option<usize>, backend: &dyn ConicBackend) -> Self {
        Self {
            method,
            k,
            status: SolveStatus::Optimal,
            objective: None,
            decision: None,
            iterations: 0,
            cuts_added: Vec::new(),
            objective_trace: Vec::new(),
            approximated: Vec::new(),
            notes: Vec::new(),
            backend: backend.name().to_string(),
            time_total: 0.0,
            time_separation: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Multi-line human-readable digest.
    pub fn summary(&self) -> String {
        let mut out = format!("method      {}", self.method);
        if let Some(k) = self.k {
            out += &format!(" (K = {k})");
        }
        out += &format!("\nstatus      {}", self.status);
        match self.objective {
            Some(v) => out += &format!("\nobjective   {v:.6}"),
            None => out += "\nobjective   -",
        }
        out += &format!(
            "\niterations  {}\ncuts added  {}",
            self.iterations,
            self.cuts_added.len()
        );
        if let Some(d) = &self.decision {
            let fmt = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x:.4}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            out += &format!(
                "\np_g         {}\nr_up        {}\nr_dn        {}\nd_g         {}",
                fmt(&d.p_g),
                fmt(&d.r_up),
                fmt(&d.r_dn),
                fmt(&d.d_g)
            );
        }
        for n in &self.notes {
            out += &format!("\nnote        {n}");
        }
        out.push('\n');
        out
    }
}

/// A network case with everything the methods need precomputed.
#[derive(Debug, Clone)]
pub struct Problem {
    pub case: NetworkCase,
    pub ptdf: PtdfMatrix,
    pub constraints: Vec<ExtractedConstraint>,
    pub objective: QuadraticObjective,
    pub layout: Layout,
}

impl Problem {
    pub fn new(case: NetworkCase) -> Result<Self, SolveError> {
        case.validate()?;
        let ptdf = opf::build_ptdf(&case)?;
        let constraints = opf::extract_chance_constraints(&case, &ptdf);
        let objective = opf::objective(&case)?;
        let layout = Layout::of(&case);
        Ok(Self {
            case,
            ptdf,
            constraints,
            objective,
            layout,
        })
    }

    /// Number of uncertain wind injections.
    pub fn uncertainty_dim(&self) -> usize {
        self.case.wind.len()
    }

    pub fn nvars(&self) -> usize {
        self.layout.nvars()
    }

    /// Cost and deterministic constraints, no chance constraints.
    pub fn base_program(&self) -> ConicProgram {
        let lay = self.layout;
        let mut prog = ConicProgram::default();
        for (prefix, idx) in [("p_g", 0usize), ("r_up", 1), ("r_dn", 2), ("d_g", 3)] {
            for g in 0..lay.ng {
                let j = prog.add_var(format!("{prefix}[{g}]"));
                debug_assert_eq!(j, idx * lay.ng + g);
            }
        }
        prog.objective = self
            .objective
            .linear
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| (j, *c))
            .collect();
        let quad: Vec<(usize, f64)> = self
            .objective
            .quadratic
            .iter()
            .copied()
            .enumerate()
            .collect();
        quadratic_epigraph(&mut prog, &quad);
        for c in opf::deterministic_constraints(&self.case) {
            let row = Row::from_form(&c.form);
            if c.equality {
                prog.equalities.push(row);
            } else {
                prog.inequalities.push(row);
            }
        }
        prog
    }

    fn check_dim(&self, found: usize) -> Result<(), SolveError> {
        if found != self.uncertainty_dim() {
            return Err(SolveError::Dimension {
                found,
                expected: self.uncertainty_dim(),
            });
        }
        Ok(())
    }

    fn decision_vector(&self, sol: &ConicSolution) -> DVector<f64> {
        DVector::from_column_slice(&sol.x[..self.nvars()])
    }

    /// Fills objective and decision from an optimal solution.
    fn finish(&self, report: &mut SolveReport, x: &DVector<f64>) -> Result<(), SolveError> {
        report.objective = Some(self.objective.eval(x));
        report.decision = Some(OpfDecision::from_vector(x, self.layout.ng)?);
        Ok(())
    }

    /// Single solve of `prog`; infeasibility becomes a status.
    fn solve_once(
        &self,
        prog: &ConicProgram,
        backend: &dyn ConicBackend,
        report: &mut SolveReport,
    ) -> Result<(), SolveError> {
        let sol = solve_conic(backend, prog)?;
        report.iterations += 1;
        if sol.status == BackendStatus::Infeasible {
            report.status = SolveStatus::Infeasible;
            return Ok(());
        }
        let x = self.decision_vector(&sol);
        report.objective_trace.push(self.objective.eval(&x));
        self.finish(report, &x)
    }

    /// With no wind every chance constraint is the deterministic `b(x) ≥ 0`.
    fn solve_deterministic(
        &self,
        method: Method,
        k: Option<usize>,
        backend: &dyn ConicBackend,
    ) -> Result<SolveReport, SolveError> {
        let start = Instant::now();
        let mut report = SolveReport::new(method, k, backend);
        let mut prog = self.base_program();
        for ec in &self.constraints {
            prog.inequalities.push(Row::from_form(&ec.cc.b));
        }
        report
            .notes
            .push("no uncertain injections; deterministic dispatch".into());
        self.solve_once(&prog, backend, &mut report)?;
        report.time_total = start.elapsed().as_secs_f64();
        Ok(report)
    }
}

/// Gaussian reformulation with the model's moments.
pub fn solve_ar(
    problem: &Problem,
    model: &UncertaintyModel,
    backend: &dyn ConicBackend,
) -> Result<SolveReport, SolveError> {
    single_cut_method(problem, model, Method::Ar, backend, drcc::gaussian_cut)
}

/// Exact reformulation under the moment-only set.
pub fn solve_moment(
    problem: &Problem,
    model: &UncertaintyModel,
    backend: &dyn ConicBackend,
) -> Result<SolveReport, SolveError> {
    single_cut_method(
        problem,
        model,
        Method::DrM,
        backend,
        drcc::reformulate_moment,
    )
}

fn single_cut_method(
    problem: &Problem,
    model: &UncertaintyModel,
    method: Method,
    backend: &dyn ConicBackend,
    cut: fn(&drcc::AffineChanceConstraint, &UncertaintyModel) -> Result<drcc::SocCut, DrccError>,
) -> Result<SolveReport, SolveError> {
    problem.check_dim(model.dim())?;
    if problem.uncertainty_dim() == 0 {
        return problem.solve_deterministic(method, None, backend);
    }
    let start = Instant::now();
    let mut report = SolveReport::new(method, None, backend);
    let mut prog = problem.base_program();
    for ec in &problem.constraints {
        prog.add_cut(&cut(&ec.cc, model)?);
    }
    problem.solve_once(&prog, backend, &mut report)?;
    report.time_total = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Robust against the coordinate box spanned by the first `count` samples.
pub fn solve_sc(
    problem: &Problem,
    samples: &SampleSet,
    count: usize,
    backend: &dyn ConicBackend,
) -> Result<SolveReport, SolveError> {
    problem.check_dim(samples.dim())?;
    let start = Instant::now();
    let mut report = SolveReport::new(Method::Sc, None, backend);
    let ccs: Vec<_> = problem.constraints.iter().map(|e| e.cc.clone()).collect();
    let boxes = drcc::scenario_box_cuts(&ccs, samples, count)?;
    let mut prog = problem.base_program();
    for (c, bx) in boxes.iter().enumerate() {
        // b(x) − a(x)ᵀc − Σ rᵢuᵢ ≥ 0 with uᵢ ≥ |aᵢ(x)|.
        let center = bx.cc.a_matrix.tr_mul(&bx.center);
        let mut main = Row::from_dense(
            &(&bx.cc.b.coef - center),
            bx.cc.b.offset - bx.cc.a_offset.dot(&bx.center),
        );
        for i in 0..bx.cc.dim() {
            let r = bx.radius[i];
            if r == 0.0 {
                continue;
            }
            let u = prog.add_var(format!("box[{c}][{i}]"));
            let ai = Row::from_dense(&bx.cc.a_matrix.row(i).transpose(), bx.cc.a_offset[i]);
            for sign in [1.0, -1.0] {
                let mut row = Row {
                    coef: ai.coef.iter().map(|&(j, v)| (j, -sign * v)).collect(),
                    offset: -sign * ai.offset,
                };
                row.coef.push((u, 1.0));
                prog.inequalities.push(row);
            }
            main.coef.push((u, -r));
        }
        prog.inequalities.push(main);
    }
    report
        .notes
        .push(format!("robust box from {count} scenarios"));
    problem.solve_once(&prog, backend, &mut report)?;
    report.time_total = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Default SC scenario count for `problem`, capped at `available`.
pub fn default_scenario_count(
    problem: &Problem,
    epsilon: f64,
    beta: f64,
    available: usize,
) -> usize {
    drcc::scenario_count(epsilon, beta, problem.nvars()).clamp(1, available.max(1))
}

/// What a violated constraint receives inside the cutting-plane loop.
enum OnViolation<'a> {
    /// The most violated member of the exact family.
    ExactCut,
    /// Switch the constraint to this conservative approximation.
    Approximate(&'a PwlFunction),
}

struct LoopOutcome {
    converged: bool,
    /// Finite worst-case `τ`s seen per constraint.
    worst_taus: Vec<Vec<f64>>,
}

/// Cutting-plane loop over the unimodal family, starting from the `τ0` and
/// asymptotic cuts on every constraint. Stops after `max_solves` solves,
/// when nothing is violated beyond `tol`, or on infeasibility. On return the
/// report holds the last iterate.
fn cutting_plane(
    problem: &Problem,
    ctx: &UnimodalContext,
    cfg: &SolveConfig,
    max_solves: usize,
    on_violation: OnViolation<'_>,
    backend: &dyn ConicBackend,
    report: &mut SolveReport,
) -> Result<LoopOutcome, SolveError> {
    let tau0 = ctx.tau0();
    let m = problem.constraints.len();
    let mut prog = problem.base_program();
    for ec in &problem.constraints {
        prog.add_cut(&ctx.cut_at(&ec.cc, tau0)?);
        prog.add_cut(&ctx.asymptotic_cut(&ec.cc));
    }
    let mut taus: Vec<Vec<f64>> = vec![vec![tau0]; m];
    let mut approximated = vec![false; m];
    let mut outcome = LoopOutcome {
        converged: false,
        worst_taus: vec![Vec::new(); m],
    };

    for iteration in 1..=max_solves {
        let sol = solve_conic(backend, &prog)?;
        report.iterations = iteration;
        if sol.status == BackendStatus::Infeasible {
            report.status = SolveStatus::Infeasible;
            report.objective = None;
            report.decision = None;
            return Ok(outcome);
        }
        let x = problem.decision_vector(&sol);
        report.objective_trace.push(problem.objective.eval(&x));
        problem.finish(report, &x)?;

        let sep_start = Instant::now();
        let mut violated = Vec::new();
        for (i, ec) in problem.constraints.iter().enumerate() {
            if approximated[i] {
                continue;
            }
            let (c1, c2, c3) = ctx.scalars(&ec.cc, &x);
            if c2 < -cfg.tol {
                return Err(DrccError::MissingAsymptoticCut {
                    label: ec.cc.label.clone(),
                    slack: c2,
                }
                .into());
            }
            let sep = drcc::maximize_violation(&ctx.vf, c1, c2.max(0.0), c3);
            if sep.tau > tau0 && sep.tau < TAU_CAP {
                outcome.worst_taus[i].push(sep.tau);
            }
            let normalized = sep.violation / sep.tau;
            if normalized > cfg.tol {
                violated.push((i, sep.tau, normalized));
            }
        }
        report.time_separation += sep_start.elapsed().as_secs_f64();

        if violated.is_empty() {
            outcome.converged = true;
            return Ok(outcome);
        }
        if iteration == max_solves {
            break;
        }
        let mut added = 0;
        for (i, tau, violation) in violated {
            let cc = &problem.constraints[i].cc;
            match on_violation {
                OnViolation::ExactCut => {
                    if taus[i].iter().any(|t| (t - tau).abs() <= 1e-9 * t) {
                        continue;
                    }
                    prog.add_cut(&ctx.cut_at(cc, tau)?);
                    taus[i].push(tau);
                    report.cuts_added.push(CutRecord {
                        iteration,
                        constraint: cc.label.clone(),
                        tau: Some(tau),
                        violation,
                    });
                }
                OnViolation::Approximate(g) => {
                    for cut in ctx.conservative_cuts(cc, g)? {
                        prog.add_cut(&cut);
                    }
                    approximated[i] = true;
                    report.approximated.push(cc.label.clone());
                    report.cuts_added.push(CutRecord {
                        iteration,
                        constraint: cc.label.clone(),
                        tau: None,
                        violation,
                    });
                }
            }
            added += 1;
        }
        if added == 0 {
            // Every violated maximizer already carries a cut: what remains is
            // backend accuracy, not a missing cut.
            report
                .notes
                .push("stopped: remaining violations sit on existing cuts".into());
            outcome.converged = true;
            return Ok(outcome);
        }
    }
    Ok(outcome)
}

fn unimodal_context(
    problem: &Problem,
    model: &UncertaintyModel,
) -> Result<UnimodalContext, SolveError> {
    problem.check_dim(model.dim())?;
    Ok(UnimodalContext::new(model)?)
}

/// Exact solution under the unimodal set by cutting planes.
pub fn solve_exact_unimodal(
    problem: &Problem,
    model: &UncertaintyModel,
    cfg: &SolveConfig,
    backend: &dyn ConicBackend,
) -> Result<SolveReport, SolveError> {
    if problem.uncertainty_dim() == 0 {
        problem.check_dim(model.dim())?;
        return problem.solve_deterministic(Method::DrU, None, backend);
    }
    let ctx = unimodal_context(problem, model)?;
    let start = Instant::now();
    let mut report = SolveReport::new(Method::DrU, None, backend);
    let out = cutting_plane(
        problem,
        &ctx,
        cfg,
        cfg.max_iter,
        OnViolation::ExactCut,
        backend,
        &mut report,
    )?;
    if report.status == SolveStatus::Optimal && !out.converged {
        report.status = SolveStatus::IterationLimit;
    }
    report.time_total = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Lower bound from a finite subfamily: the iterate after `cfg.k` solves of
/// the cutting-plane loop, or one cut per node of `cfg.nodes` on every
/// constraint.
pub fn solve_relaxed(
    problem: &Problem,
    model: &UncertaintyModel,
    cfg: &SolveConfig,
    backend: &dyn ConicBackend,
) -> Result<SolveReport, SolveError> {
    if cfg.k == 0 && cfg.nodes.is_none() {
        return Err(SolveError::Config("relaxed method needs K >= 1".into()));
    }
    let k = cfg.nodes.as_ref().map_or(cfg.k, Vec::len);
    if problem.uncertainty_dim() == 0 {
        problem.check_dim(model.dim())?;
        return problem.solve_deterministic(Method::Relaxed, Some(k), backend);
    }
    let ctx = unimodal_context(problem, model)?;
    let start = Instant::now();
    let mut report = SolveReport::new(Method::Relaxed, Some(k), backend);
    match &cfg.nodes {
        Some(nodes) => {
            let mut prog = problem.base_program();
            for ec in &problem.constraints {
                for cut in ctx.relaxed_cuts(&ec.cc, nodes)? {
                    prog.add_cut(&cut);
                }
                prog.add_cut(&ctx.asymptotic_cut(&ec.cc));
            }
            problem.solve_once(&prog, backend, &mut report)?;
        }
        None => {
            let out = cutting_plane(
                problem,
                &ctx,
                cfg,
                cfg.k,
                OnViolation::ExactCut,
                backend,
                &mut report,
            )?;
            if out.converged && report.iterations < cfg.k {
                report.notes.push(format!(
                    "cutting planes converged after {} solves",
                    report.iterations
                ));
            }
        }
    }
    report.time_total = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Optimal `pieces`-piece approximation, or the envelope of the union of
/// tangent points of the optimal `1..=pieces` approximations.
pub fn ops_approximation(
    vf: &VFunction,
    pieces: usize,
    aggregated: bool,
    cfg: &OpsConfig,
) -> Result<PwlFunction, SolveError> {
    if !aggregated {
        return Ok(ops_search(vf, pieces, cfg)?.pwl);
    }
    let mut points = Vec::new();
    for s in 1..=pieces {
        points.extend(ops_search(vf, s, cfg)?.pwl.tangent_points);
    }
    Ok(tangent_envelope(vf, &envelope_nodes(vf.tau0, points))?)
}

/// Upper bound from a conservative finite family.
pub fn solve_conservative(
    problem: &Problem,
    model: &UncertaintyModel,
    variant: ApproxVariant,
    cfg: &SolveConfig,
    backend: &dyn ConicBackend,
) -> Result<SolveReport, SolveError> {
    let method = Method::Conservative(variant);
    if cfg.k < 2 {
        return Err(SolveError::Config(format!(
            "{variant} needs K >= 2, got {}",
            cfg.k
        )));
    }
    if problem.uncertainty_dim() == 0 {
        problem.check_dim(model.dim())?;
        return problem.solve_deterministic(method, Some(cfg.k), backend);
    }
    let ctx = unimodal_context(problem, model)?;
    let start = Instant::now();
    let mut report = SolveReport::new(method, Some(cfg.k), backend);

    match variant {
        ApproxVariant::Ub => {
            let mut worst = vec![Vec::new(); problem.constraints.len()];
            if cfg.k > 2 {
                let mut probe = SolveReport::new(Method::DrU, None, backend);
                let out = cutting_plane(
                    problem,
                    &ctx,
                    cfg,
                    cfg.k - 2,
                    OnViolation::ExactCut,
                    backend,
                    &mut probe,
                )?;
                report.time_separation += probe.time_separation;
                if probe.status == SolveStatus::Infeasible {
                    report.status = SolveStatus::Infeasible;
                    report.iterations = probe.iterations;
                    report.time_total = start.elapsed().as_secs_f64();
                    return Ok(report);
                }
                report.iterations = probe.iterations;
                worst = out.worst_taus;
            }
            let mut prog = problem.base_program();
            for (ec, taus) in problem.constraints.iter().zip(&worst) {
                let g =
                    tangent_envelope(&ctx.vf, &envelope_nodes(ctx.tau0(), taus.iter().copied()))?;
                for cut in ctx.conservative_cuts(&ec.cc, &g)? {
                    prog.add_cut(&cut);
                }
            }
            problem.solve_once(&prog, backend, &mut report)?;
        }
        _ => {
            let g = ops_approximation(&ctx.vf, cfg.k - 1, variant.aggregated(), &cfg.ops)?;
            if variant.violated_only() {
                let out = cutting_plane(
                    problem,
                    &ctx,
                    cfg,
                    cfg.max_iter,
                    OnViolation::Approximate(&g),
                    backend,
                    &mut report,
                )?;
                if report.status == SolveStatus::Optimal && !out.converged {
                    report.status = SolveStatus::IterationLimit;
                }
            } else {
                let mut prog = problem.base_program();
                for ec in &problem.constraints {
                    for cut in ctx.conservative_cuts(&ec.cc, &g)? {
                        prog.add_cut(&cut);
                    }
                }
                problem.solve_once(&prog, backend, &mut report)?;
            }
        }
    }
    report.time_total = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Runs `method`. `samples` is required for SC only.
pub fn solve(
    problem: &Problem,
    method: Method,
    model: &UncertaintyModel,
    samples: Option<&SampleSet>,
    cfg: &SolveConfig,
    backend: &dyn ConicBackend,
) -> Result<SolveReport, SolveError> {
    match method {
        Method::Ar => solve_ar(problem, model, backend),
        Method::DrM => solve_moment(problem, model, backend),
        Method::DrU => solve_exact_unimodal(problem, model, cfg, backend),
        Method::Relaxed => solve_relaxed(problem, model, cfg, backend),
        Method::Conservative(v) => solve_conservative(problem, model, v, cfg, backend),
        Method::Sc if problem.uncertainty_dim() == 0 => {
            problem.solve_deterministic(method, None, backend)
        }
        Method::Sc => {
            let samples =
                samples.ok_or_else(|| SolveError::Config("SC needs training samples".into()))?;
            let count = cfg.scenario_count.unwrap_or_else(|| {
                default_scenario_count(problem, model.epsilon, cfg.scenario_beta, samples.len())
            });
            solve_sc(problem, samples, count, backend)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backend() -> ClarabelBackend {
        ClarabelBackend::default()
    }

    #[test]
    fn lower_bounded_scalar() {
        // min x s.t. x ≥ 3.
        let mut prog = ConicProgram::default();
        let x = prog.add_var("x");
        prog.objective.push((x, 1.0));
        prog.inequalities.push(Row {
            coef: vec![(x, 1.0)],
            offset: -3.0,
        });
        let sol = solve_conic(&backend(), &prog).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn norm_on_a_line() {
        // min t s.t. ‖(x, y)‖ ≤ t, x + y = 2.
        let mut prog = ConicProgram::default();
        let x = prog.add_var("x");
        let y = prog.add_var("y");
        let t = prog.add_var("t");
        prog.objective.push((t, 1.0));
        prog.equalities.push(Row {
            coef: vec![(x, 1.0), (y, 1.0)],
            offset: -2.0,
        });
        prog.cones.push(Cone {
            head: Row {
                coef: vec![(t, 1.0)],
                offset: 0.0,
            },
            tail: vec![
                Row {
                    coef: vec![(x, 1.0)],
                    offset: 0.0,
                },
                Row {
                    coef: vec![(y, 1.0)],
                    offset: 0.0,
                },
            ],
        });
        let sol = solve_conic(&backend(), &prog).unwrap();
        assert!((sol.x[x] - 1.0).abs() < 1e-6 && (sol.x[y] - 1.0).abs() < 1e-6);
        assert!((sol.objective - 2f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn epigraph_of_scalar_square() {
        // min 4p² with p = 3 gives t = 36.
        let mut prog = ConicProgram::default();
        let p = prog.add_var("p");
        prog.equalities.push(Row {
            coef: vec![(p, 1.0)],
            offset: -3.0,
        });
        assert!(quadratic_epigraph(&mut prog, &[(p, 0.0)]).is_none());
        let t = quadratic_epigraph(&mut prog, &[(p, 4.0)]).unwrap();
        assert_eq!(prog.cones.len(), 1);
        let sol = solve_conic(&backend(), &prog).unwrap();
        assert!((sol.x[t] - 36.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_is_a_status() {
        let mut prog = ConicProgram::default();
        let x = prog.add_var("x");
        prog.objective.push((x, 1.0));
        prog.inequalities.push(Row {
            coef: vec![(x, 1.0)],
            offset: -3.0,
        });
        prog.inequalities.push(Row {
            coef: vec![(x, -1.0)],
            offset: 1.0,
        });
        let sol = solve_conic(&backend(), &prog).unwrap();
        assert_eq!(sol.status, BackendStatus::Infeasible);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
        assert!(backend_by_name("mosek").is_err());
    }
}
