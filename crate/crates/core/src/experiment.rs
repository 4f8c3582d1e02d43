//! Multi-seed benchmark: every method on one case, out-of-sample
//! reliability, cross-method metrics and approximation-size sweeps.
//!
//! A run is split into independent [`Task`]s so callers can execute them
//! in any order or in parallel; [`Benchmark::assemble`] only depends on the
//! task list order, so outputs are byte-identical across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::drcc::ApproxVariant;
use crate::eval::{self, EvalError, MethodOutcome, MetricsRow};
use crate::opf::OpfDecision;
use crate::solve::{self, ConicBackend, Method, Problem, SolveConfig, SolveReport, SolveStatus};
use crate::stats::{
    GeneratorConfig, Marginal, SampleSet, StatsError, UncertaintyModel, synth_unimodal_samples,
};

/// Mixed into the seed of the test-set generator so it never replays the
/// training stream.
const TEST_STREAM: u64 = 0x7E57_5EED_0000_0001;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    /// Marginal of the synthetic forecast errors, one column per wind plant.
    pub marginal: Marginal,
    pub correlation: f64,
    /// When set, training and test rows are drawn from this pool instead.
    pub pool: Option<SampleSet>,
    pub train: usize,
    pub test: usize,
    /// One independent repetition per seed.
    pub seeds: Vec<u64>,
    pub epsilon: f64,
    pub alpha: f64,
    pub bins: usize,
    /// `k` sets the approximation size of the table rows.
    pub solve: SolveConfig,
    /// Methods in the metrics table.
    pub table_methods: Vec<Method>,
    /// Methods swept over `sweep_k`.
    pub sweep_methods: Vec<Method>,
    pub sweep_k: Vec<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let conservative = ApproxVariant::ALL.map(Method::Conservative);
        let mut table = vec![Method::Ar, Method::Sc, Method::DrM, Method::DrU];
        table.extend(conservative);
        let mut sweep = vec![Method::Relaxed];
        sweep.extend(conservative);
        Self {
            marginal: Marginal::Triangular {
                lo: -6.0,
                mode: -1.0,
                hi: 7.0,
            },
            correlation: 0.0,
            pool: None,
            train: 5000,
            test: 10_000,
            seeds: vec![1, 2, 3],
            epsilon: 0.05,
            alpha: 1.0,
            bins: 15,
            solve: SolveConfig::default(),
            table_methods: table,
            sweep_methods: sweep,
            sweep_k: vec![2, 3, 4, 5],
        }
    }
}

/// Training data, test data and fitted model of one repetition. All three
/// are absent or zero-dimensional when the case has no wind.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub seed: u64,
    pub train: Option<SampleSet>,
    pub test: Option<SampleSet>,
    pub model: UncertaintyModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Task {
    pub seed_index: usize,
    #[serde(serialize_with = "method_str")]
    pub method: MethodKey,
    pub k: Option<usize>,
}

/// [`Method`] with a total order, so tasks can key maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodKey(usize);

impl MethodKey {
    pub fn of(m: Method) -> Self {
        Self(
            Method::ALL
                .iter()
                .position(|x| *x == m)
                .expect("listed method"),
        )
    }
    pub fn method(&self) -> Method {
        Method::ALL[self.0]
    }
}

fn method_str<S: serde::Serializer>(m: &MethodKey, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(m.method().as_str())
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskResult {
    pub task: Task,
    pub seed: u64,
    pub report: SolveReport,
    /// Percentage of test scenarios with every constraint satisfied.
    pub reliability: Option<f64>,
}

/// Rendered benchmark artifacts.
#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    /// Min/avg/max over seeds of cost, reliability and relative metrics.
    pub metrics_csv: String,
    /// Tidy `seed,method,K,variable,value` rows for the sweep.
    pub sweep_csv: String,
    /// Wall-clock timings; not reproducible, kept apart from the rest.
    pub timings_csv: String,
    pub results: Vec<TaskResult>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Solve(#[from] solve::SolveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("sample pool has {available} rows, {needed} needed for training plus test")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
}

impl From<BenchmarkError> for crate::Error {
    fn from(e: BenchmarkError) -> Self {
        match e {
            BenchmarkError::Stats(e) => e.into(),
            BenchmarkError::Solve(e) => e.into(),
            BenchmarkError::Eval(e) => e.into(),
            other => crate::Error::Solve(solve::SolveError::Config(other.to_string())),
        }
    }
}

pub struct Benchmark {
    pub config: BenchmarkConfig,
    pub problem: Problem,
    pub seeds: Vec<SeedData>,
}

impl Benchmark {
    /// Draws the data of every seed and fits the models.
    pub fn prepare(problem: Problem, config: BenchmarkConfig) -> Result<Self, BenchmarkError> {
        if config.seeds.is_empty() {
            return Err(BenchmarkError::Config(
                "at least one seed is required".into(),
            ));
        }
        if config.train == 0 || config.test == 0 {
            return Err(BenchmarkError::Config(
                "training and test sizes must be positive".into(),
            ));
        }
        let l = problem.uncertainty_dim();
        let seeds = config
            .seeds
            .iter()
            .map(|&seed| seed_data(&config, l, seed))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            config,
            problem,
            seeds,
        })
    }

    /// Table methods at the configured `k`, then the sweep, per seed,
    /// without duplicates.
    pub fn tasks(&self) -> Vec<Task> {
        let mut out = Vec::new();
        for s in 0..self.seeds.len() {
            let mut push = |method: Method, k: Option<usize>| {
                let t = Task {
                    seed_index: s,
                    method: MethodKey::of(method),
                    k: if method.uses_k() { k } else { None },
                };
                if !out.contains(&t) {
                    out.push(t);
                }
            };
            push(Method::DrU, None);
            for &m in &self.config.table_methods {
                push(m, Some(self.config.solve.k));
            }
            for &m in &self.config.sweep_methods {
                for &k in &self.config.sweep_k {
                    push(m, Some(k));
                }
            }
        }
        out
    }

    pub fn run(
        &self,
        task: Task,
        backend: &dyn ConicBackend,
    ) -> Result<TaskResult, BenchmarkError> {
        let data = &self.seeds[task.seed_index];
        let mut cfg = self.config.solve.clone();
        if let Some(k) = task.k {
            cfg.k = k;
        }
        let report = solve::solve(
            &self.problem,
            task.method.method(),
            &data.model,
            data.train.as_ref(),
            &cfg,
            backend,
        )?;
        let reliability = match &report.decision {
            Some(d) => Some(self.reliability(d, data.test.as_ref())?),
            None => None,
        };
        Ok(TaskResult {
            task,
            seed: data.seed,
            report,
            reliability,
        })
    }

    /// Runs every task sequentially.
    pub fn run_all(&self, backend: &dyn ConicBackend) -> Result<Vec<TaskResult>, BenchmarkError> {
        self.tasks()
            .into_iter()
            .map(|t| self.run(t, backend))
            .collect()
    }

    fn reliability(
        &self,
        decision: &OpfDecision,
        test: Option<&SampleSet>,
    ) -> Result<f64, EvalError> {
        match test {
            Some(test) => eval::reliability(&self.problem.case, &self.problem.ptdf, decision, test),
            None => {
                // No uncertainty: every scenario equals the nominal one.
                let x = decision.to_vector();
                let ok = self
                    .problem
                    .constraints
                    .iter()
                    .all(|ec| ec.cc.b(&x) >= -eval::RELIABILITY_TOL);
                Ok(if ok { 100.0 } else { 0.0 })
            }
        }
    }

    /// Renders the artifacts from results in [`Benchmark::tasks`] order.
    pub fn assemble(&self, results: Vec<TaskResult>) -> Result<BenchmarkOutput, BenchmarkError> {
        let by_task: BTreeMap<Task, &TaskResult> = results.iter().map(|r| (r.task, r)).collect();
        let metrics_csv = self.metrics_csv(&by_task)?;
        let sweep_csv = self.sweep_csv(&by_task);
        let mut timings_csv = String::from("seed,method,K,time_total,time_separation\n");
        for r in &results {
            let _ = writeln!(
                timings_csv,
                "{},{},{},{:.6},{:.6}",
                r.seed,
                r.task.method.method(),
                opt_usize(r.task.k),
                r.report.time_total,
                r.report.time_separation
            );
        }
        Ok(BenchmarkOutput {
            metrics_csv,
            sweep_csv,
            timings_csv,
            results,
        })
    }

    fn lookup<'a>(
        &self,
        by_task: &BTreeMap<Task, &'a TaskResult>,
        seed_index: usize,
        method: Method,
        k: Option<usize>,
    ) -> Option<&'a TaskResult> {
        by_task
            .get(&Task {
                seed_index,
                method: MethodKey::of(method),
                k: if method.uses_k() { k } else { None },
            })
            .copied()
    }

    fn metrics_csv(&self, by_task: &BTreeMap<Task, &TaskResult>) -> Result<String, BenchmarkError> {
        let k = self.config.solve.k;
        let methods = &self.config.table_methods;
        // rows[method] = per-seed metrics rows.
        let mut per_method: Vec<Vec<MetricsRow>> = vec![Vec::new(); methods.len()];
        for s in 0..self.seeds.len() {
            let mut outcomes = Vec::new();
            for &m in methods {
                let Some(r) = self.lookup(by_task, s, m, Some(k)) else {
                    continue;
                };
                if let (Some(cost), Some(rel)) = (r.report.objective, r.reliability) {
                    outcomes.push(MethodOutcome {
                        method: m.to_string(),
                        cost,
                        reliability: rel,
                        time: r.report.time_total,
                    });
                }
            }
            let rows = if outcomes.iter().any(|o| o.method == "ar")
                && outcomes.iter().any(|o| o.method == "sc")
            {
                eval::metrics_table(&outcomes)?
            } else {
                outcomes
                    .iter()
                    .map(|o| MetricsRow {
                        method: o.method.clone(),
                        cost: o.cost,
                        reliability: o.reliability,
                        cdiff: None,
                        rdiff: None,
                        improv: None,
                        time: o.time,
                    })
                    .collect()
            };
            for row in rows {
                if let Some(i) = methods.iter().position(|m| m.as_str() == row.method) {
                    per_method[i].push(row);
                }
            }
        }

        let mut out = String::from("method,K,stat,runs,cost,reliability,cdiff,rdiff,improv\n");
        for (m, rows) in methods.iter().zip(&per_method) {
            let kcol = if m.uses_k() {
                k.to_string()
            } else {
                String::new()
            };
            let column = |f: &dyn Fn(&MetricsRow) -> Option<f64>| -> Option<Vec<f64>> {
                rows.iter().map(f).collect::<Option<Vec<f64>>>()
            };
            let cols = [
                column(&|r| Some(r.cost)),
                column(&|r| Some(r.reliability)),
                column(&|r| r.cdiff),
                column(&|r| r.rdiff),
                column(&|r| r.improv),
            ];
            let spreads: Vec<Option<eval::Spread>> = cols
                .iter()
                .map(|c| c.as_deref().and_then(eval::spread))
                .collect();
            for (stat, pick) in [
                (
                    "min",
                    (|s: &eval::Spread| s.min) as fn(&eval::Spread) -> f64,
                ),
                ("avg", |s| s.avg),
                ("max", |s| s.max),
            ] {
                let _ = write!(out, "{m},{kcol},{stat},{}", rows.len());
                for s in &spreads {
                    let _ = write!(out, ",{}", opt_f64(s.as_ref().map(pick)));
                }
                out.push('\n');
            }
        }
        Ok(out)
    }

    fn sweep_csv(&self, by_task: &BTreeMap<Task, &TaskResult>) -> String {
        let mut out = String::from("seed,method,K,variable,value\n");
        for (s, data) in self.seeds.iter().enumerate() {
            let exact = self
                .lookup(by_task, s, Method::DrU, None)
                .and_then(|r| r.report.objective);
            for &m in &self.config.sweep_methods {
                for &k in &self.config.sweep_k {
                    let Some(r) = self.lookup(by_task, s, m, Some(k)) else {
                        continue;
                    };
                    let gap = match (r.report.objective, exact) {
                        (Some(c), Some(e)) => eval::relative_gap(c, e).ok(),
                        _ => None,
                    };
                    let rows = [
                        ("objective", r.report.objective),
                        ("gap_percent", gap),
                        ("reliability", r.reliability),
                        ("iterations", Some(r.report.iterations as f64)),
                    ];
                    for (var, value) in rows {
                        let _ = writeln!(out, "{},{m},{k},{var},{}", data.seed, opt_f64(value));
                    }
                }
            }
        }
        out
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

fn opt_usize(v: Option<usize>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn seed_data(config: &BenchmarkConfig, l: usize, seed: u64) -> Result<SeedData, BenchmarkError> {
    if l == 0 {
        let model = UncertaintyModel::empty(config.alpha, config.epsilon)?;
        return Ok(SeedData {
            seed,
            train: None,
            test: None,
            model,
        });
    }
    let (train, test) = match &config.pool {
        Some(pool) => {
            if pool.dim() != l {
                return Err(solve::SolveError::Dimension {
                    found: pool.dim(),
                    expected: l,
                }
                .into());
            }
            let needed = config.train + config.test;
            if pool.len() < needed {
                return Err(BenchmarkError::PoolTooSmall {
                    needed,
                    available: pool.len(),
                });
            }
            let mut rows: Vec<usize> = (0..pool.len()).collect();
            rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            (
                pool.select(&rows[..config.train])?,
                pool.select(&rows[config.train..needed])?,
            )
        }
        None => {
            let gen_cfg = |count| GeneratorConfig {
                marginal: config.marginal,
                dim: l,
                count,
                correlation: config.correlation,
            };
            (
                synth_unimodal_samples(&gen_cfg(config.train), seed)?,
                synth_unimodal_samples(&gen_cfg(config.test), seed ^ TEST_STREAM)?,
            )
        }
    };
    let model = UncertaintyModel::from_samples(&train, config.bins, config.alpha, config.epsilon)?;
    Ok(SeedData {
        seed,
        train: Some(train),
        test: Some(test),
        model,
    })
}

/// Whether every report in `results` finished optimally.
pub fn all_optimal(results: &[TaskResult]) -> bool {
    results
        .iter()
        .all(|r| r.report.status == SolveStatus::Optimal)
}
