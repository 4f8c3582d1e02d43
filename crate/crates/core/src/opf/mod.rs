//! DC optimal power flow with affine reserve recourse.
//!
//! Decision vector layout, for `G` generators:
//! `x = [P_G (G), R_up (G), R_dn (G), d_G (G)]`. The real-time response of
//! generator `g` to the total forecast error `Σξ` is `−d_g Σξ`.

mod case;
mod matpower;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drcc::{AffineChanceConstraint, LinearForm};

pub use case::{Branch, Bus, Generator, NetworkCase, WindPlant};
pub use matpower::parse_matpower;

#[derive(Debug, Error)]
pub enum OpfError {
    #[error("case parse error: {0}")]
    Parse(String),
    #[error("invalid case: {0}")]
    Invalid(String),
    #[error("generator {generator} has a negative quadratic cost")]
    NegativeQuadraticCost { generator: usize },
    #[error("network is disconnected: bus {bus} is unreachable from the slack")]
    Disconnected { bus: usize },
    #[error("decision vector has length {found}, expected {expected}")]
    DecisionLength { found: usize, expected: usize },
}

/// Line-by-bus injection shift factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PtdfMatrix {
    pub matrix: DMatrix<f64>,
}

/// `diag(1/x)·Incidence·θ(P)`, where `θ` solves the reduced susceptance
/// system with the slack angle fixed at zero.
pub fn build_ptdf(case: &NetworkCase) -> Result<PtdfMatrix, OpfError> {
    let index = case.bus_index();
    let nb = case.buses.len();
    let nl = case.lines.len();
    let slack = index[&case.slack];
    let mut bbus = DMatrix::<f64>::zeros(nb, nb);
    let mut inc = DMatrix::<f64>::zeros(nl, nb);
    for (k, l) in case.lines.iter().enumerate() {
        let (f, t) = (index[&l.from], index[&l.to]);
        let y = 1.0 / l.reactance;
        bbus[(f, f)] += y;
        bbus[(t, t)] += y;
        bbus[(f, t)] -= y;
        bbus[(t, f)] -= y;
        inc[(k, f)] = y;
        inc[(k, t)] = -y;
    }
    let keep: Vec<usize> = (0..nb).filter(|&i| i != slack).collect();
    let reduced = bbus.select_rows(&keep).select_columns(&keep);
    let inv = reduced
        .lu()
        .try_inverse()
        .ok_or(OpfError::Disconnected { bus: case.slack })?;
    let mut theta = DMatrix::<f64>::zeros(nb, nb);
    for (ri, &r) in keep.iter().enumerate() {
        for (ci, &c) in keep.iter().enumerate() {
            theta[(r, c)] = inv[(ri, ci)];
        }
    }
    Ok(PtdfMatrix {
        matrix: inc * theta,
    })
}

/// Dispatch, reserve capacities and participation factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfDecision {
    pub p_g: Vec<f64>,
    pub r_up: Vec<f64>,
    pub r_dn: Vec<f64>,
    pub d_g: Vec<f64>,
}

impl OpfDecision {
    pub fn from_vector(x: &DVector<f64>, ng: usize) -> Result<Self, OpfError> {
        if x.len() < 4 * ng {
            return Err(OpfError::DecisionLength {
                found: x.len(),
                expected: 4 * ng,
            });
        }
        let part = |k: usize| x.rows(k * ng, ng).iter().copied().collect();
        Ok(Self {
            p_g: part(0),
            r_up: part(1),
            r_dn: part(2),
            d_g: part(3),
        })
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            4 * self.p_g.len(),
            self.p_g
                .iter()
                .chain(&self.r_up)
                .chain(&self.r_dn)
                .chain(&self.d_g)
                .copied(),
        )
    }
}

/// Positions of each block inside the decision vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub ng: usize,
}

impl Layout {
    pub fn of(case: &NetworkCase) -> Self {
        Self {
            ng: case.generators.len(),
        }
    }
    pub fn nvars(&self) -> usize {
        4 * self.ng
    }
    pub fn p(&self, g: usize) -> usize {
        g
    }
    pub fn r_up(&self, g: usize) -> usize {
        self.ng + g
    }
    pub fn r_dn(&self, g: usize) -> usize {
        2 * self.ng + g
    }
    pub fn d(&self, g: usize) -> usize {
        3 * self.ng + g
    }
}

/// Which inequality of the model a chance constraint came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintSource {
    LineUpper { line: usize },
    LineLower { line: usize },
    GenMax { generator: usize },
    GenMin { generator: usize },
    ReserveUp { generator: usize },
    ReserveDown { generator: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedConstraint {
    pub cc: AffineChanceConstraint,
    pub source: ConstraintSource,
}

/// Every uncertainty-affected inequality as `a(x)ᵀξ ≤ b(x)`, with one
/// uncertainty dimension per wind plant. Lines without a limit are skipped.
pub fn extract_chance_constraints(
    case: &NetworkCase,
    ptdf: &PtdfMatrix,
) -> Vec<ExtractedConstraint> {
    let lay = Layout::of(case);
    let n = lay.nvars();
    let l = case.wind.len();
    let index = case.bus_index();
    let a_mat = &ptdf.matrix;
    let gen_col: Vec<usize> = case.generators.iter().map(|g| index[&g.bus]).collect();
    let wind_col: Vec<usize> = case.wind.iter().map(|w| index[&w.bus]).collect();

    // Nominal injection excluding dispatch: C_W P_W^f − C_L P_L.
    let mut fixed = DVector::<f64>::zeros(case.buses.len());
    for (w, plant) in case.wind.iter().enumerate() {
        fixed[wind_col[w]] += plant.forecast;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        fixed[i] -= bus.load;
    }

    let mut out = Vec::new();
    for (k, line) in case.lines.iter().enumerate() {
        let Some(limit) = line.limit else { continue };
        let row = a_mat.row(k);
        // flow(x, ξ) = row·(C_G P_G + fixed) + Σᵢ ξᵢ (row[wᵢ] − Σ_g row[g] d_g).
        let mut a_matrix = DMatrix::zeros(l, n);
        let a_offset = DVector::from_iterator(l, wind_col.iter().map(|&c| row[c]));
        let mut flow_coef = DVector::zeros(n);
        for (g, &c) in gen_col.iter().enumerate() {
            flow_coef[lay.p(g)] = row[c];
            for i in 0..l {
                a_matrix[(i, lay.d(g))] = -row[c];
            }
        }
        let flow_offset = (row * &fixed)[(0, 0)];
        for upper in [true, false] {
            let sign = if upper { 1.0 } else { -1.0 };
            let b = LinearForm {
                coef: &flow_coef * -sign,
                offset: limit - sign * flow_offset,
            };
            let (label, source) = if upper {
                (
                    format!("line {k} ({}-{}) upper", line.from, line.to),
                    ConstraintSource::LineUpper { line: k },
                )
            } else {
                (
                    format!("line {k} ({}-{}) lower", line.from, line.to),
                    ConstraintSource::LineLower { line: k },
                )
            };
            let cc = AffineChanceConstraint::new(&a_matrix * sign, &a_offset * sign, b, label)
                .expect("consistent dimensions");
            out.push(ExtractedConstraint { cc, source });
        }
    }

    for (g, gen_) in case.generators.iter().enumerate() {
        // a = ±d_g·𝟙.
        let a_pos = {
            let mut m = DMatrix::zeros(l, n);
            for i in 0..l {
                m[(i, lay.d(g))] = 1.0;
            }
            m
        };
        let unit = |idx: usize, s: f64| {
            let mut c = DVector::zeros(n);
            c[idx] = s;
            c
        };
        let rows = [
            (
                -1.0,
                LinearForm {
                    coef: unit(lay.p(g), -1.0),
                    offset: gen_.p_max,
                },
                "max output",
                ConstraintSource::GenMax { generator: g },
            ),
            (
                1.0,
                LinearForm {
                    coef: unit(lay.p(g), 1.0),
                    offset: -gen_.p_min,
                },
                "min output",
                ConstraintSource::GenMin { generator: g },
            ),
            (
                -1.0,
                LinearForm {
                    coef: unit(lay.r_up(g), 1.0),
                    offset: 0.0,
                },
                "reserve up",
                ConstraintSource::ReserveUp { generator: g },
            ),
            (
                1.0,
                LinearForm {
                    coef: unit(lay.r_dn(g), 1.0),
                    offset: 0.0,
                },
                "reserve down",
                ConstraintSource::ReserveDown { generator: g },
            ),
        ];
        for (sign, b, what, source) in rows {
            let cc = AffineChanceConstraint::new(
                &a_pos * sign,
                DVector::zeros(l),
                b,
                format!("gen {g} {what}"),
            )
            .expect("consistent dimensions");
            out.push(ExtractedConstraint { cc, source });
        }
    }
    out
}

/// `form(x) = 0` when `equality`, otherwise `form(x) ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub form: LinearForm,
    pub equality: bool,
    pub label: String,
}

/// Participation factors sum to one, nominal balance, non-negativity.
pub fn deterministic_constraints(case: &NetworkCase) -> Vec<LinearConstraint> {
    let lay = Layout::of(case);
    let n = lay.nvars();
    let mut out = Vec::new();
    let mut sum_d = DVector::zeros(n);
    let mut sum_p = DVector::zeros(n);
    for g in 0..lay.ng {
        sum_d[lay.d(g)] = 1.0;
        sum_p[lay.p(g)] = 1.0;
    }
    out.push(LinearConstraint {
        form: LinearForm {
            coef: sum_d,
            offset: -1.0,
        },
        equality: true,
        label: "participation sum".into(),
    });
    out.push(LinearConstraint {
        form: LinearForm {
            coef: sum_p,
            offset: case.total_forecast() - case.total_load(),
        },
        equality: true,
        label: "nominal balance".into(),
    });
    for j in 0..n {
        let mut c = DVector::zeros(n);
        c[j] = 1.0;
        out.push(LinearConstraint {
            form: LinearForm {
                coef: c,
                offset: 0.0,
            },
            equality: false,
            label: format!("x[{j}] >= 0"),
        });
    }
    out
}

/// `xᵀ diag(quadratic) x + linearᵀx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub quadratic: DVector<f64>,
    pub linear: DVector<f64>,
}

impl QuadraticObjective {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        x.component_mul(x).dot(&self.quadratic) + self.linear.dot(x)
    }
}

/// Generation cost plus reserve-capacity cost.
pub fn objective(case: &NetworkCase) -> Result<QuadraticObjective, OpfError> {
    let lay = Layout::of(case);
    let mut quadratic = DVector::zeros(lay.nvars());
    let mut linear = DVector::zeros(lay.nvars());
    for (g, gen_) in case.generators.iter().enumerate() {
        if gen_.cost_quadratic < 0.0 {
            return Err(OpfError::NegativeQuadraticCost { generator: g });
        }
        quadratic[lay.p(g)] = gen_.cost_quadratic;
        linear[lay.p(g)] = gen_.cost_linear;
        linear[lay.r_up(g)] = gen_.reserve_price();
        linear[lay.r_dn(g)] = gen_.reserve_price();
    }
    Ok(QuadraticObjective { quadratic, linear })
}

/// Bus injections for a decision and a realized forecast error.
pub fn injections(case: &NetworkCase, decision: &OpfDecision, xi: &[f64]) -> DVector<f64> {
    let index = case.bus_index();
    let total: f64 = xi.iter().sum();
    let mut p = DVector::zeros(case.buses.len());
    for (i, bus) in case.buses.iter().enumerate() {
        p[i] -= bus.load;
    }
    for (g, gen_) in case.generators.iter().enumerate() {
        p[index[&gen_.bus]] += decision.p_g[g] - decision.d_g[g] * total;
    }
    for (w, plant) in case.wind.iter().enumerate() {
        p[index[&plant.bus]] += plant.forecast + xi[w];
    }
    p
}
