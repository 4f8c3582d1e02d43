//! Solver-agnostic second-order cone program.

use nalgebra::DVector;

use crate::drcc::{LinearForm, SocCut};

/// Sparse affine row `Σ cᵢ x_i + offset`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Row {
    pub coef: Vec<(usize, f64)>,
    pub offset: f64,
}

impl Row {
    pub fn from_dense(coef: &DVector<f64>, offset: f64) -> Self {
        Self {
            coef: coef
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
            offset,
        }
    }

    pub fn from_form(form: &LinearForm) -> Self {
        Self::from_dense(&form.coef, form.offset)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coef.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.offset
    }
}

/// `‖tail‖ ≤ head`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cone {
    pub head: Row,
    pub tail: Vec<Row>,
}

impl Cone {
    /// `‖tail(x)‖ − head(x)`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.tail
            .iter()
            .map(|r| r.eval(x).powi(2))
            .sum::<f64>()
            .sqrt()
            - self.head.eval(x)
    }
}

/// `min cᵀx` subject to equalities `row = 0`, inequalities `row ≥ 0` and
/// second-order cones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    pub names: Vec<String>,
    pub objective: Vec<(usize, f64)>,
    pub objective_offset: f64,
    pub equalities: Vec<Row>,
    pub inequalities: Vec<Row>,
    pub cones: Vec<Cone>,
}

impl ConicProgram {
    pub fn nvars(&self) -> usize {
        self.names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.names.len() - 1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Adds a cut over the leading decision variables; linear cuts become
    /// inequalities.
    pub fn add_cut(&mut self, cut: &SocCut) {
        let head = Row::from_form(&cut.rhs);
        if cut.is_linear() {
            self.inequalities.push(head);
            return;
        }
        let tail = (0..cut.norm_matrix.nrows())
            .map(|r| Row::from_dense(&cut.norm_matrix.row(r).transpose(), cut.norm_offset[r]))
            .collect();
        self.cones.push(Cone { head, tail });
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.objective_offset
    }

    /// Largest violation over every constraint; `≤ 0` means feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self.equalities.iter().map(|r| r.eval(x).abs());
        let ineq = self.inequalities.iter().map(|r| -r.eval(x));
        let cones = self.cones.iter().map(|c| c.violation(x));
        eq.chain(ineq)
            .chain(cones)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Moves `Σ qᵢ xᵢ²` into the objective through a new variable `t` and the
/// cone `‖(2·sqrt(q)∘x, t − 1)‖ ≤ t + 1`, which is equivalent to
/// `t ≥ Σ qᵢ xᵢ²`. Returns `None` (and adds nothing) when every `qᵢ` is 0.
pub fn quadratic_epigraph(prog: &mut ConicProgram, quadratic: &[(usize, f64)]) -> Option<usize> {
    let terms: Vec<(usize, f64)> = quadratic
        .iter()
        .copied()
        .filter(|(_, q)| *q != 0.0)
        .collect();
    if terms.is_empty() {
        return None;
    }
    let t = prog.add_var("quadratic_cost");
    let mut tail: Vec<Row> = terms
        .iter()
        .map(|&(i, q)| Row {
            coef: vec![(i, 2.0 * q.sqrt())],
            offset: 0.0,
        })
        .collect();
    tail.push(Row {
        coef: vec![(t, 1.0)],
        offset: -1.0,
    });
    prog.cones.push(Cone {
        head: Row {
            coef: vec![(t, 1.0)],
            offset: 1.0,
        },
        tail,
    });
    prog.objective.push((t, 1.0));
    Some(t)
}
