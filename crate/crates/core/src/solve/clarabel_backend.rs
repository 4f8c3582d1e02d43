use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};

use super::conic::{ConicProgram, Row};
use super::{BackendStatus, ConicBackend, ConicSolution, SolveError};

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub tolerance: f64,
    pub max_iter: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iter: 200,
        }
    }
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Triplets {
    /// Appends `sign·coef` as the next row with right-hand side `rhs`.
    fn push(&mut self, row: &Row, sign: f64, rhs: f64) {
        let r = self.b.len();
        for &(j, c) in &row.coef {
            self.rows.push(r);
            self.cols.push(j);
            self.vals.push(sign * c);
        }
        self.b.push(rhs);
    }
}

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, prog: &ConicProgram) -> Result<ConicSolution, SolveError> {
        let n = prog.nvars();
        let mut t = Triplets {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            b: Vec::new(),
        };
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        // A x + s = b: s = 0 gives coef·x = −offset; s ≥ 0 or s ∈ SOC with
        // A = −coef, b = offset gives s = row(x).
        for row in &prog.equalities {
            t.push(row, 1.0, -row.offset);
        }
        if !prog.equalities.is_empty() {
            cones.push(ZeroConeT(prog.equalities.len()));
        }
        for row in &prog.inequalities {
            t.push(row, -1.0, row.offset);
        }
        if !prog.inequalities.is_empty() {
            cones.push(NonnegativeConeT(prog.inequalities.len()));
        }
        for cone in &prog.cones {
            t.push(&cone.head, -1.0, cone.head.offset);
            for row in &cone.tail {
                t.push(row, -1.0, row.offset);
            }
            cones.push(SecondOrderConeT(1 + cone.tail.len()));
        }

        let m = t.b.len();
        let a = CscMatrix::new_from_triplets(m, n, t.rows, t.cols, t.vals);
        let p = CscMatrix::<f64>::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(j, c) in &prog.objective {
            q[j] += c;
        }
        // A numerical stall at the requested accuracy is retried once at a
        // looser one; the caller still checks the returned point.
        let mut result = None;
        for tolerance in [self.tolerance, self.tolerance * 100.0] {
            let settings = DefaultSettings {
                max_iter: self.max_iter,
                verbose: false,
                tol_gap_abs: tolerance,
                tol_gap_rel: tolerance,
                tol_feas: tolerance,
                ..DefaultSettings::default()
            };
            let mut solver =
                DefaultSolver::new(&p, &q, &a, &t.b, &cones, settings).map_err(|e| {
                    SolveError::Backend(format!("clarabel rejected the program: {e:?}"))
                })?;
            solver.solve();
            let sol = &solver.solution;
            let status = match sol.status {
                SolverStatus::Solved => BackendStatus::Optimal,
                SolverStatus::AlmostSolved => BackendStatus::AlmostOptimal,
                SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                    BackendStatus::Infeasible
                }
                SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                    BackendStatus::Unbounded
                }
                SolverStatus::MaxIterations | SolverStatus::MaxTime => {
                    BackendStatus::IterationLimit
                }
                other => BackendStatus::Numerical(format!("{other:?}")),
            };
            let retry = matches!(status, BackendStatus::Numerical(_));
            result = Some(ConicSolution {
                x: sol.x.clone(),
                objective: sol.obj_val + prog.objective_offset,
                status,
                iterations: sol.iterations,
            });
            if !retry {
                break;
            }
        }
        Ok(result.expect("at least one attempt"))
    }
}
