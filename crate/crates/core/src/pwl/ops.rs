//! Search for the minimax piecewise-linear outer approximation of `v`.
//!
//! The last piece is the constant asymptote; every other piece is tangent to
//! `v`. Tangent points are moved until the errors at the left end, at every
//! break point and against the asymptote all agree within `δ`.

use serde::{Deserialize, Serialize};

use super::{Line, PwlError, PwlFunction, VFunction};

/// Consecutive step halvings tolerated before giving up.
const MAX_RETRIES: usize = 30;
/// Relative balance target for the end-point adjustment.
const END_TOL: f64 = 1e-10;
const MAX_END_HALVINGS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpsConfig {
    /// Relative termination tolerance on the error spread.
    pub delta: f64,
    pub max_iter: usize,
    /// Initial step size for tangent-point updates.
    pub step: f64,
    /// Initial right end of the tangent pieces.
    pub init_end: f64,
}

impl Default for OpsConfig {
    fn default() -> Self {
        Self {
            delta: 0.01,
            max_iter: 50,
            step: 1.0,
            init_end: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsResult {
    pub pwl: PwlFunction,
    pub emax: f64,
    pub iterations: usize,
    /// `h − v` at the left end and at every break point.
    pub errors: Vec<f64>,
    /// Gap between the asymptote and `v` at the last break point.
    pub e_t: f64,
}

struct Iterate {
    tangents: Vec<f64>,
    breaks: Vec<f64>,
    errors: Vec<f64>,
}

pub fn ops_search(vf: &VFunction, pieces: usize, cfg: &OpsConfig) -> Result<OpsResult, PwlError> {
    if pieces == 0 {
        return Err(PwlError::InvalidConfig(
            "at least one piece is required".into(),
        ));
    }
    if !(cfg.delta > 0.0 && cfg.step > 0.0 && cfg.init_end > vf.tau0) {
        return Err(PwlError::InvalidConfig(format!(
            "need delta > 0, step > 0 and init_end > tau0 = {}",
            vf.tau0
        )));
    }
    let sup = vf.sup();
    if pieces == 1 {
        let e = sup - vf.eval(vf.tau0);
        return Ok(OpsResult {
            pwl: PwlFunction::constant(vf.tau0, sup),
            emax: e,
            iterations: 0,
            errors: vec![e],
            e_t: e,
        });
    }

    let n = pieces - 1;
    let mut tangents: Vec<f64> = (1..pieces)
        .map(|s| vf.tau0 + s as f64 * (cfg.init_end - vf.tau0) / pieces as f64)
        .collect();
    let mut end = cfg.init_end;
    let mut step = cfg.step;
    let mut prev: Option<Iterate> = None;
    let mut retries = 0;
    let mut i = 1;

    loop {
        let lines = tangent_lines(vf, &tangents)?;
        let mut breaks = interior_breaks(vf.tau0, &lines, end);
        let (errors, e_t) = balance_end(vf, &lines, &mut breaks);
        end = breaks[n];

        if i > cfg.max_iter {
            let last = finish(vf, &tangents, &lines, breaks, i - 1)?;
            return Err(PwlError::NoConvergence {
                iterations: i - 1,
                last: Box::new(last),
            });
        }

        let (lo, hi) = spread(&errors, e_t);
        if hi <= (1.0 + cfg.delta) * lo {
            return finish(vf, &tangents, &lines, breaks, i);
        }

        let mut current = Iterate {
            tangents: tangents.clone(),
            breaks,
            errors,
        };
        if let Some(p) = prev
            .as_ref()
            .filter(|p| i > 1 && max(&current.errors) > max(&p.errors))
        {
            retries += 1;
            if retries > MAX_RETRIES {
                let lines = tangent_lines(vf, &p.tangents)?;
                let last = finish(vf, &p.tangents, &lines, p.breaks.clone(), i - 1)?;
                return Err(PwlError::NoConvergence {
                    iterations: i - 1,
                    last: Box::new(last),
                });
            }
            current = Iterate {
                tangents: p.tangents.clone(),
                breaks: p.breaks.clone(),
                errors: p.errors.clone(),
            };
            end = current.breaks[n];
            i -= 1;
            step /= 2.0;
        } else {
            retries = 0;
        }

        tangents = loop {
            let proposal = update_tangents(&current, step);
            if valid_tangents(vf.tau0, &proposal) {
                break proposal;
            }
            step /= 2.0;
            if step < 1e-300 {
                return Err(PwlError::InvalidConfig("tangent update collapsed".into()));
            }
        };
        prev = Some(current);
        i += 1;
    }
}

fn tangent_lines(vf: &VFunction, tangents: &[f64]) -> Result<Vec<Line>, PwlError> {
    tangents.iter().map(|&t| vf.tangent_line(t)).collect()
}

/// `[τ0, intersections of consecutive lines..., end]`.
fn interior_breaks(tau0: f64, lines: &[Line], end: f64) -> Vec<f64> {
    let mut b = Vec::with_capacity(lines.len() + 1);
    b.push(tau0);
    b.extend(lines.windows(2).map(|w| w[0].intersect(&w[1])));
    b.push(end);
    b
}

fn errors_at(vf: &VFunction, lines: &[Line], breaks: &[f64]) -> (Vec<f64>, f64) {
    let n = lines.len();
    let errors = breaks
        .iter()
        .enumerate()
        .map(|(k, &b)| lines[k.min(n - 1)].eval(b) - vf.eval(b))
        .collect();
    (errors, vf.sup() - vf.eval(breaks[n]))
}

/// Moves the right end halfway toward where the last tangent meets the
/// asymptote until its error matches the asymptote gap.
fn balance_end(vf: &VFunction, lines: &[Line], breaks: &mut [f64]) -> (Vec<f64>, f64) {
    let n = lines.len();
    let last = lines[n - 1];
    let hat = (vf.sup() - last.intercept) / last.slope;
    let mut out = errors_at(vf, lines, breaks);
    for _ in 0..MAX_END_HALVINGS {
        let (e_end, e_t) = (out.0[n], out.1);
        if (e_end - e_t).abs() <= END_TOL * e_end.max(e_t) {
            break;
        }
        breaks[n] = 0.5 * (hat + breaks[n]);
        out = errors_at(vf, lines, breaks);
    }
    out
}

fn update_tangents(it: &Iterate, step: f64) -> Vec<f64> {
    let (t, b, e) = (&it.tangents, &it.breaks, &it.errors);
    (0..t.len())
        .map(|s| {
            let denom = e[s + 1] / (b[s + 1] - t[s]) + e[s] / (t[s] - b[s]);
            t[s] + step * (e[s + 1] - e[s]) / denom
        })
        .collect()
}

fn valid_tangents(tau0: f64, t: &[f64]) -> bool {
    t.iter().all(|x| x.is_finite()) && t[0] > tau0 && t.windows(2).all(|w| w[0] < w[1])
}

/// Snaps the right end onto the asymptote crossing and packages the result.
fn finish(
    vf: &VFunction,
    tangents: &[f64],
    lines: &[Line],
    mut breaks: Vec<f64>,
    iterations: usize,
) -> Result<OpsResult, PwlError> {
    let n = lines.len();
    let last = lines[n - 1];
    breaks[n] = (vf.sup() - last.intercept) / last.slope;
    let (errors, e_t) = errors_at(vf, lines, &breaks);
    let mut pieces = lines.to_vec();
    pieces.push(Line::constant(vf.sup()));
    let pwl = PwlFunction {
        pieces,
        breakpoints: breaks,
        tangent_points: tangents.to_vec(),
    };
    pwl.validate()?;
    let (_, emax) = spread(&errors, e_t);
    Ok(OpsResult {
        pwl,
        emax,
        iterations,
        errors,
        e_t,
    })
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn spread(errors: &[f64], e_t: f64) -> (f64, f64) {
    errors
        .iter()
        .copied()
        .chain(std::iter::once(e_t))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e), hi.max(e))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::{check_optimality_conditions, pwl_error};

    fn vf() -> VFunction {
        VFunction::new(0.05, 1.0).unwrap()
    }

    #[test]
    fn one_piece_is_the_asymptote() {
        let r = ops_search(&vf(), 1, &OpsConfig::default()).unwrap();
        assert_eq!(r.pwl.pieces.len(), 1);
        assert_eq!(r.pwl.pieces[0].slope, 0.0);
        assert!((r.pwl.pieces[0].intercept - 19f64.sqrt()).abs() < 1e-12);
        assert!((r.emax - 19f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn converges_for_default_pieces() {
        let v = vf();
        let cfg = OpsConfig::default();
        let mut last = f64::INFINITY;
        for pieces in 1..=5 {
            let r = ops_search(&v, pieces, &cfg).unwrap();
            assert!(r.iterations <= cfg.max_iter);
            assert!(r.emax < last, "pieces {pieces}: {} !< {last}", r.emax);
            last = r.emax;
            assert!(check_optimality_conditions(&v, &r.pwl, 2.0 * cfg.delta).all());
            let e = pwl_error(&v, &r.pwl).unwrap();
            assert!((e - r.emax).abs() < 1e-9, "{e} vs {}", r.emax);
        }
    }

    #[test]
    fn output_slopes_decrease_to_zero() {
        let r = ops_search(&vf(), 4, &OpsConfig::default()).unwrap();
        let slopes: Vec<f64> = r.pwl.pieces.iter().map(|p| p.slope).collect();
        assert!(slopes.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(*slopes.last().unwrap(), 0.0);
        assert_eq!(r.pwl.breakpoints[0], vf().tau0);
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        let cfg = OpsConfig {
            max_iter: 2,
            ..OpsConfig::default()
        };
        match ops_search(&vf(), 5, &cfg) {
            Err(PwlError::NoConvergence { iterations, last }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last.pwl.pieces.len(), 5);
            }
            other => panic!("expected no convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = OpsConfig {
            init_end: 1.0,
            ..OpsConfig::default()
        };
        assert!(matches!(
            ops_search(&vf(), 3, &cfg),
            Err(PwlError::InvalidConfig(_))
        ));
        assert!(matches!(
            ops_search(&vf(), 0, &OpsConfig::default()),
            Err(PwlError::InvalidConfig(_))
        ));
    }
}
