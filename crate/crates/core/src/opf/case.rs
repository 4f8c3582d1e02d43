//! Network case data, JSON loading and validation.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::OpfError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Known demand, MW.
    #[serde(default)]
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Series reactance, p.u. on `base_mva`.
    pub reactance: f64,
    /// Thermal limit, MW; absent means unlimited.
    #[serde(default)]
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// $/MW².
    #[serde(default)]
    pub cost_quadratic: f64,
    /// $/MW.
    pub cost_linear: f64,
    /// $/MW of reserve capacity; defaults to ten times `cost_linear`.
    #[serde(default)]
    pub cost_reserve: Option<f64>,
}

impl Generator {
    pub fn reserve_price(&self) -> f64 {
        self.cost_reserve.unwrap_or(10.0 * self.cost_linear)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindPlant {
    pub bus: usize,
    /// Forecast output, MW.
    pub forecast: f64,
}

fn default_base() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: Option<String>,
    pub buses: Vec<Bus>,
    pub lines: Vec<Branch>,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub wind: Vec<WindPlant>,
    pub slack: usize,
    #[serde(default = "default_base")]
    pub base_mva: f64,
}

impl NetworkCase {
    pub fn from_json(text: &str) -> Result<Self, OpfError> {
        let case: Self = serde_json::from_str(text).map_err(|e| OpfError::Parse(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    /// Reads a `.json` case or a `.m` text-matrix case.
    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| crate::Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let case = if path.extension().is_some_and(|e| e == "m") {
            super::matpower::parse_matpower(&text)?
        } else {
            Self::from_json(&text)?
        };
        Ok(case)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    /// Bus id to position in `buses`.
    pub fn bus_index(&self) -> BTreeMap<usize, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }

    pub fn total_forecast(&self) -> f64 {
        self.wind.iter().map(|w| w.forecast).sum()
    }

    pub fn validate(&self) -> Result<(), OpfError> {
        let invalid = |m: String| Err(OpfError::Invalid(m));
        if self.buses.is_empty() {
            return invalid("case has no buses".into());
        }
        let index = self.bus_index();
        if index.len() != self.buses.len() {
            return invalid("bus ids must be unique".into());
        }
        if !index.contains_key(&self.slack) {
            return invalid(format!("slack bus {} does not exist", self.slack));
        }
        if !(self.base_mva > 0.0) {
            return invalid(format!("base_mva must be positive, got {}", self.base_mva));
        }
        for b in &self.buses {
            if !b.load.is_finite() {
                return invalid(format!("bus {} has a non-finite load", b.id));
            }
        }
        for (k, l) in self.lines.iter().enumerate() {
            for end in [l.from, l.to] {
                if !index.contains_key(&end) {
                    return invalid(format!("line {k} references unknown bus {end}"));
                }
            }
            if l.from == l.to {
                return invalid(format!("line {k} is a self-loop"));
            }
            if !(l.reactance > 0.0 && l.reactance.is_finite()) {
                return invalid(format!("line {k} needs a positive reactance"));
            }
            if let Some(limit) = l.limit
                && !(limit > 0.0)
            {
                return invalid(format!("line {k} limit must be positive"));
            }
        }
        if self.generators.is_empty() {
            return invalid("case has no generators".into());
        }
        for (g, gen_) in self.generators.iter().enumerate() {
            if !index.contains_key(&gen_.bus) {
                return invalid(format!("generator {g} references unknown bus {}", gen_.bus));
            }
            if !(gen_.p_min.is_finite() && gen_.p_max.is_finite() && gen_.p_min <= gen_.p_max) {
                return invalid(format!("generator {g} needs finite p_min <= p_max"));
            }
            if gen_.cost_quadratic < 0.0 {
                return Err(OpfError::NegativeQuadraticCost { generator: g });
            }
            if !(gen_.cost_linear.is_finite() && gen_.reserve_price().is_finite()) {
                return invalid(format!("generator {g} has non-finite costs"));
            }
        }
        for (w, plant) in self.wind.iter().enumerate() {
            if !index.contains_key(&plant.bus) {
                return invalid(format!(
                    "wind plant {w} references unknown bus {}",
                    plant.bus
                ));
            }
            if !plant.forecast.is_finite() {
                return invalid(format!("wind plant {w} has a non-finite forecast"));
            }
        }
        self.check_connected(&index)
    }

    fn check_connected(&self, index: &BTreeMap<usize, usize>) -> Result<(), OpfError> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            let (f, t) = (index[&l.from], index[&l.to]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([index[&self.slack]]);
        seen[index[&self.slack]] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(OpfError::Disconnected {
                bus: self.buses[i].id,
            }),
            None => Ok(()),
        }
    }

    /// Spreads `total` MW of forecast over `buses` in proportion to the
    /// generation capacity installed at each of them.
    pub fn allocate_wind_by_capacity(
        &self,
        buses: &[usize],
        total: f64,
    ) -> Result<Vec<WindPlant>, OpfError> {
        let caps: Vec<f64> = buses
            .iter()
            .map(|b| {
                self.generators
                    .iter()
                    .filter(|g| g.bus == *b)
                    .map(|g| g.p_max)
                    .sum()
            })
            .collect();
        let sum: f64 = caps.iter().sum();
        if !(sum > 0.0) {
            return Err(OpfError::Invalid(
                "wind buses carry no generation capacity to allocate by".into(),
            ));
        }
        Ok(buses
            .iter()
            .zip(caps)
            .map(|(&bus, cap)| WindPlant {
                bus,
                forecast: total * cap / sum,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = r#"{
        "buses": [{"id": 1, "load": 0}, {"id": 2, "load": 50}],
        "lines": [{"from": 1, "to": 2, "reactance": 0.1, "limit": 100}],
        "generators": [{"bus": 1, "p_min": 0, "p_max": 100, "cost_linear": 10}],
        "slack": 2
    }"#;

    #[test]
    fn parses_with_defaults() {
        let c = NetworkCase::from_json(TWO_BUS).unwrap();
        assert_eq!(c.base_mva, 100.0);
        assert_eq!(c.generators[0].reserve_price(), 100.0);
        assert!(c.wind.is_empty());
    }

    #[test]
    fn rejects_invalid_cases() {
        let bad_slack = TWO_BUS.replace("\"slack\": 2", "\"slack\": 9");
        assert!(matches!(
            NetworkCase::from_json(&bad_slack),
            Err(OpfError::Invalid(_))
        ));
        let neg = TWO_BUS.replace(
            "\"cost_linear\": 10",
            "\"cost_linear\": 10, \"cost_quadratic\": -1",
        );
        assert!(matches!(
            NetworkCase::from_json(&neg),
            Err(OpfError::NegativeQuadraticCost { generator: 0 })
        ));
        let island = TWO_BUS.replace(
            r#"{"id": 2, "load": 50}"#,
            r#"{"id": 2, "load": 50}, {"id": 3, "load": 0}"#,
        );
        assert!(matches!(
            NetworkCase::from_json(&island),
            Err(OpfError::Disconnected { bus: 3 })
        ));
        assert!(matches!(
            NetworkCase::from_json("{"),
            Err(OpfError::Parse(_))
        ));
    }

    #[test]
    fn wind_allocation_follows_capacity() {
        let mut c = NetworkCase::from_json(TWO_BUS).unwrap();
        c.generators.push(Generator {
            bus: 2,
            p_min: 0.0,
            p_max: 300.0,
            cost_quadratic: 0.0,
            cost_linear: 1.0,
            cost_reserve: None,
        });
        let w = c.allocate_wind_by_capacity(&[1, 2], 40.0).unwrap();
        assert!((w[0].forecast - 10.0).abs() < 1e-12);
        assert!((w[1].forecast - 30.0).abs() < 1e-12);
    }
}
