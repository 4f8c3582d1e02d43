//! Subset of the MATPOWER `.m` text-matrix case format.
//!
//! Recognized blocks: `mpc.baseMVA`, `mpc.bus`, `mpc.gen`, `mpc.branch`,
//! `mpc.gencost` (polynomial model 2 only) and the non-standard
//! `mpc.wind = [bus forecast; ...]` used to place wind plants. Out-of-service
//! generators and branches are dropped; `rateA = 0` means unlimited. The
//! slack is the bus of type 3.

use std::collections::BTreeMap;

use super::OpfError;
use super::case::{Branch, Bus, Generator, NetworkCase, WindPlant};

fn perr(msg: impl Into<String>) -> OpfError {
    OpfError::Parse(msg.into())
}

/// Numeric rows of every `mpc.<name> = [ ... ];` block, plus scalar
/// assignments as one-element rows.
fn blocks(text: &str) -> Result<BTreeMap<String, Vec<Vec<f64>>>, OpfError> {
    let mut out = BTreeMap::new();
    let mut current: Option<(String, Vec<Vec<f64>>)> = None;
    for raw in text.lines() {
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((name, rows)) = current.as_mut() {
            let (body, closed) = match line.find(']') {
                Some(p) => (&line[..p], true),
                None => (line, false),
            };
            for row in body.split(';') {
                let values = parse_row(row)?;
                if !values.is_empty() {
                    rows.push(values);
                }
            }
            if closed {
                let (name, rows) = (name.clone(), std::mem::take(rows));
                out.insert(name, rows);
                current = None;
            }
            continue;
        }
        let Some(rest) = line.strip_prefix("mpc.") else {
            continue;
        };
        let Some((name, value)) = rest.split_once('=') else {
            continue;
        };
        let name = name.trim().to_string();
        let value = value.trim();
        if let Some(body) = value.strip_prefix('[') {
            let mut rows = Vec::new();
            let (body, closed) = match body.find(']') {
                Some(p) => (&body[..p], true),
                None => (body, false),
            };
            for row in body.split(';') {
                let values = parse_row(row)?;
                if !values.is_empty() {
                    rows.push(values);
                }
            }
            if closed {
                out.insert(name, rows);
            } else {
                current = Some((name, rows));
            }
        } else if let Ok(v) = value.trim_end_matches(';').trim().parse::<f64>() {
            out.insert(name, vec![vec![v]]);
        }
    }
    if current.is_some() {
        return Err(perr("unterminated matrix block"));
    }
    Ok(out)
}

fn parse_row(row: &str) -> Result<Vec<f64>, OpfError> {
    row.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| perr(format!("bad number `{t}`")))
        })
        .collect()
}

fn need<'a>(
    b: &'a BTreeMap<String, Vec<Vec<f64>>>,
    name: &str,
) -> Result<&'a Vec<Vec<f64>>, OpfError> {
    b.get(name)
        .ok_or_else(|| perr(format!("missing mpc.{name}")))
}

fn cols(row: &[f64], n: usize, what: &str) -> Result<(), OpfError> {
    if row.len() < n {
        return Err(perr(format!(
            "{what} row has {} columns, need {n}",
            row.len()
        )));
    }
    Ok(())
}

pub fn parse_matpower(text: &str) -> Result<NetworkCase, OpfError> {
    let b = blocks(text)?;
    let base_mva = b.get("baseMVA").map_or(100.0, |r| r[0][0]);

    let mut buses = Vec::new();
    let mut slack = None;
    for row in need(&b, "bus")? {
        cols(row, 3, "bus")?;
        let id = row[0] as usize;
        if row[1] as i64 == 3 {
            slack = Some(id);
        }
        buses.push(Bus { id, load: row[2] });
    }
    let slack = slack.ok_or_else(|| perr("no reference bus (type 3)"))?;

    let gen_rows = need(&b, "gen")?;
    let costs = b.get("gencost");
    let mut generators = Vec::new();
    for (g, row) in gen_rows.iter().enumerate() {
        cols(row, 10, "gen")?;
        if row[7] <= 0.0 {
            continue;
        }
        let (mut quad, mut lin) = (0.0, 0.0);
        if let Some(c) = costs.and_then(|c| c.get(g)) {
            cols(c, 4, "gencost")?;
            if c[0] as i64 != 2 {
                return Err(perr(format!(
                    "gencost row {g}: only polynomial model 2 is supported"
                )));
            }
            let n = c[3] as usize;
            cols(c, 4 + n, "gencost")?;
            let coeffs = &c[4..4 + n];
            // Highest order first; keep the linear and quadratic terms.
            if n >= 2 {
                lin = coeffs[n - 2];
            }
            if n >= 3 {
                quad = coeffs[n - 3];
            }
            if n > 3 && coeffs[..n - 3].iter().any(|v| *v != 0.0) {
                return Err(perr(format!(
                    "gencost row {g}: cubic and higher terms are not supported"
                )));
            }
        }
        generators.push(Generator {
            bus: row[0] as usize,
            p_min: row[9],
            p_max: row[8],
            cost_quadratic: quad,
            cost_linear: lin,
            cost_reserve: None,
        });
    }

    let mut lines = Vec::new();
    for row in need(&b, "branch")? {
        cols(row, 11, "branch")?;
        if row[10] <= 0.0 {
            continue;
        }
        lines.push(Branch {
            from: row[0] as usize,
            to: row[1] as usize,
            reactance: row[3],
            limit: (row[5] > 0.0).then_some(row[5]),
        });
    }

    let mut wind = Vec::new();
    if let Some(rows) = b.get("wind") {
        for row in rows {
            cols(row, 2, "wind")?;
            wind.push(WindPlant {
                bus: row[0] as usize,
                forecast: row[1],
            });
        }
    }

    let case = NetworkCase {
        name: None,
        buses,
        lines,
        generators,
        wind,
        slack,
        base_mva,
    };
    case.validate()?;
    Ok(case)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CASE3: &str = "
function mpc = case3
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	2	0	0	0	0	1	1	0	230	1	1.1	0.9;
	3	1	90	0	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	150	0	0	0	0	0	0	0	0	0	0	0	0;
	2	0	0	300	-300	1	100	1	120	10	0	0	0	0	0	0	0	0	0	0	0;
	3	0	0	300	-300	1	100	0	50	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0	0.1	0	0	0	0	0	0	1	-360	360;
	2	3	0	0.1	0	80	0	0	0	0	1	-360	360;
	1	3	0	0.1	0	80	0	0	0	0	1	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.01	20	0;
	2	0	0	3	0.02	30	0;
	2	0	0	2	15	0;
];
mpc.wind = [ 3 25 ];
";

    #[test]
    fn parses_subset() {
        let c = parse_matpower(CASE3).unwrap();
        assert_eq!(c.slack, 1);
        assert_eq!(c.buses.len(), 3);
        assert_eq!(c.buses[2].load, 90.0);
        assert_eq!(c.generators.len(), 2, "out-of-service unit dropped");
        assert_eq!(c.generators[1].p_min, 10.0);
        assert_eq!(c.generators[0].cost_quadratic, 0.01);
        assert_eq!(c.generators[0].cost_linear, 20.0);
        assert_eq!(c.lines[0].limit, None);
        assert_eq!(c.lines[1].limit, Some(80.0));
        assert_eq!(
            c.wind,
            vec![WindPlant {
                bus: 3,
                forecast: 25.0
            }]
        );
    }

    #[test]
    fn missing_blocks_are_reported() {
        assert!(matches!(
            parse_matpower("mpc.baseMVA = 100;"),
            Err(OpfError::Parse(_))
        ));
        assert!(matches!(
            parse_matpower("mpc.bus = [ 1 3 0;\n"),
            Err(OpfError::Parse(_))
        ));
    }
}
