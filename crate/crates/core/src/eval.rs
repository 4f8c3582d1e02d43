//! Out-of-sample reliability, cross-method metrics and optimality gaps.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::opf::{self, NetworkCase, OpfDecision, PtdfMatrix};
use crate::solve::SolveReport;
use crate::stats::SampleSet;

/// Absolute slack, MW, allowed when checking a constraint on a scenario.
pub const RELIABILITY_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("test samples have {found} columns, the case has {expected} wind plants")]
    Dimension { found: usize, expected: usize },
    #[error("decision has {found} generators, the case has {expected}")]
    DecisionShape { found: usize, expected: usize },
    #[error("metrics need a `{0}` row")]
    MissingReference(&'static str),
    #[error("report for `{0}` has no objective")]
    NoObjective(String),
    #[error("reference objective is zero; relative gap undefined")]
    ZeroReference,
}

/// Percentage of test scenarios in which every chance-constrained
/// inequality holds at `decision`.
pub fn reliability(
    case: &NetworkCase,
    ptdf: &PtdfMatrix,
    decision: &OpfDecision,
    test: &SampleSet,
) -> Result<f64, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if test.dim() != case.wind.len() {
        return Err(EvalError::Dimension {
            found: test.dim(),
            expected: case.wind.len(),
        });
    }
    let ng = case.generators.len();
    if [&decision.p_g, &decision.r_up, &decision.r_dn, &decision.d_g]
        .iter()
        .any(|v| v.len() != ng)
    {
        return Err(EvalError::DecisionShape {
            found: decision.p_g.len(),
            expected: ng,
        });
    }
    let x = decision.to_vector();
    let ccs = opf::extract_chance_constraints(case, ptdf);
    // Row i holds a_i(x)ᵀ; the scenario passes when A ξ ≤ b componentwise.
    let l = test.dim();
    let mut a = DMatrix::<f64>::zeros(ccs.len(), l);
    let mut b = DVector::<f64>::zeros(ccs.len());
    for (i, ec) in ccs.iter().enumerate() {
        a.set_row(i, &ec.cc.a(&x).transpose());
        b[i] = ec.cc.b(&x) + RELIABILITY_TOL;
    }
    let lhs = test.data() * a.transpose();
    let satisfied = lhs
        .row_iter()
        .filter(|row| row.iter().zip(b.iter()).all(|(v, bound)| v <= bound))
        .count();
    Ok(100.0 * satisfied as f64 / test.len() as f64)
}

/// Cost and reliability of one method, the input to [`metrics_table`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: String,
    pub cost: f64,
    pub reliability: f64,
    pub time: f64,
}

/// One line of the cross-method comparison. `cdiff` and `rdiff` place the
/// method between AR (0%) and SC (100%); `improv = rdiff / cdiff`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub method: String,
    pub cost: f64,
    pub reliability: f64,
    pub cdiff: Option<f64>,
    pub rdiff: Option<f64>,
    pub improv: Option<f64>,
    pub time: f64,
}

/// Metrics relative to the rows named `ar` and `sc`. A metric whose
/// denominator vanishes is reported as `None`.
pub fn metrics_table(outcomes: &[MethodOutcome]) -> Result<Vec<MetricsRow>, EvalError> {
    let find = |name: &'static str| {
        outcomes
            .iter()
            .find(|o| o.method.eq_ignore_ascii_case(name))
            .ok_or(EvalError::MissingReference(name))
    };
    let ar = find("ar")?;
    let sc = find("sc")?;
    let ratio = |v: f64, lo: f64, hi: f64| (hi != lo).then(|| 100.0 * (v - lo) / (hi - lo));
    Ok(outcomes
        .iter()
        .map(|o| {
            let cdiff = ratio(o.cost, ar.cost, sc.cost);
            let rdiff = ratio(o.reliability, ar.reliability, sc.reliability);
            let improv = match (cdiff, rdiff) {
                (Some(c), Some(r)) if c > 0.0 => Some(r / c),
                _ => None,
            };
            MetricsRow {
                method: o.method.clone(),
                cost: o.cost,
                reliability: o.reliability,
                cdiff,
                rdiff,
                improv,
                time: o.time,
            }
        })
        .collect())
}

/// `100·(cost − cost_exact)/cost_exact`; negative for lower bounds.
pub fn optimality_gap(report: &SolveReport, exact: &SolveReport) -> Result<f64, EvalError> {
    let cost = report
        .objective
        .ok_or_else(|| EvalError::NoObjective(report.method.to_string()))?;
    let reference = exact
        .objective
        .ok_or_else(|| EvalError::NoObjective(exact.method.to_string()))?;
    relative_gap(cost, reference)
}

pub fn relative_gap(cost: f64, reference: f64) -> Result<f64, EvalError> {
    if reference == 0.0 {
        return Err(EvalError::ZeroReference);
    }
    Ok(100.0 * (cost - reference) / reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

/// Min, mean and max; `None` for an empty slice.
pub fn spread(values: &[f64]) -> Option<Spread> {
    if values.is_empty() {
        return None;
    }
    Some(Spread {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        avg: values.iter().sum::<f64>() / values.len() as f64,
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(method: &str, cost: f64, reliability: f64) -> MethodOutcome {
        MethodOutcome {
            method: method.into(),
            cost,
            reliability,
            time: 0.0,
        }
    }

    #[test]
    fn reference_rows_are_zero_and_hundred() {
        let rows = metrics_table(&[outcome("ar", 10.0, 80.0), outcome("sc", 20.0, 100.0)]).unwrap();
        assert_eq!(rows[0].cdiff, Some(0.0));
        assert_eq!(rows[0].rdiff, Some(0.0));
        assert_eq!(rows[0].improv, None);
        assert_eq!(rows[1].cdiff, Some(100.0));
        assert_eq!(rows[1].improv, Some(1.0));
    }

    #[test]
    fn degenerate_references_flag_undefined() {
        let rows =
            metrics_table(&[outcome("ar", 10.0, 100.0), outcome("sc", 10.0, 100.0)]).unwrap();
        assert!(rows.iter().all(|r| r.cdiff.is_none() && r.rdiff.is_none()));
        assert!(matches!(
            metrics_table(&[outcome("ar", 1.0, 1.0)]),
            Err(EvalError::MissingReference("sc"))
        ));
    }

    #[test]
    fn spread_of_values() {
        let s = spread(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((s.min, s.avg, s.max), (1.0, 2.0, 3.0));
        assert!(spread(&[]).is_none());
    }
}
