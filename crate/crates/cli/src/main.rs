//! `dropf` command-line interface.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success (solve: optimal) |
//! | 1 | invalid input: arguments, files, case or sample data |
//! | 2 | the problem is infeasible |
//! | 3 | the cutting-plane loop hit its iteration limit |
//! | 4 | the moment/mode model is unusable for the unimodal method |
//! | 5 | conic solver or numerical failure |

mod exit;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Deserialize;

use dropf_core::experiment::{Benchmark, BenchmarkConfig, TaskResult, all_optimal};
use dropf_core::pwl::{OpsCache, OpsConfig, VFunction, ops_table_csv};
use dropf_core::solve::{self, Method, Problem, SolveConfig, SolveStatus};
use dropf_core::stats::{self, GeneratorConfig, Marginal, SampleSet, UncertaintyModel};
use dropf_core::{NetworkCase, SolveReport};

use exit::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "dropf",
    version,
    about = "Distributionally robust chance-constrained DC OPF"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one case with one method.
    Solve(SolveArgs),
    /// Run every method over several seeds and write metrics and sweep CSVs.
    Benchmark(BenchmarkArgs),
    /// Tabulate optimal piecewise-linear parameters for 1..=N pieces.
    OpsTable(OpsTableArgs),
    /// Write synthetic forecast-error samples as CSV.
    GenSamples(GenArgs),
    /// Check a case file, and optionally a sample file against it.
    ValidateCase(ValidateArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Risk level ε, in (0, 0.5).
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Unimodality order α.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Histogram bins for the mode estimate.
    #[arg(long, default_value_t = 15)]
    bins: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Marginal of synthetic samples, `family:p1,p2,...`.
    #[arg(long, default_value = "triangular:-6,-1,7")]
    marginal: Marginal,
    /// Pairwise correlation of synthetic samples.
    #[arg(long, default_value_t = 0.0)]
    correlation: f64,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Case file (`.json` or `.m`).
    #[arg(long)]
    case: PathBuf,
    /// Training samples CSV with header `w1,...,wl`; synthetic when absent.
    #[arg(long, conflicts_with = "model")]
    samples: Option<PathBuf>,
    /// Moment/mode model JSON (`mu`, `sigma`, `mode`) used instead of samples.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "dr-u")]
    method: Method,
    #[command(flatten)]
    params: ModelArgs,
    /// Approximation size for relaxed and conservative methods.
    #[arg(short = 'k', long = "k", default_value_t = 3)]
    k: usize,
    /// Explicit relaxed-method nodes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    nodes: Option<Vec<f64>>,
    #[arg(long, default_value_t = solve::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Scenarios used by SC; defaults to the scenario-theory count.
    #[arg(long)]
    scenarios: Option<usize>,
    /// Seed of synthetic samples.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of synthetic samples.
    #[arg(long, default_value_t = 5000)]
    train: usize,
    #[command(flatten)]
    synth: SynthArgs,
    /// Output directory for `report.json` and `summary.txt`.
    #[arg(long, short = 'o')]
    output: PathBuf,
    /// Also write `timings.json`.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long)]
    case: PathBuf,
    /// Sample pool CSV; training and test rows are drawn from it per seed.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[command(flatten)]
    params: ModelArgs,
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long, default_value_t = 5000)]
    train: usize,
    #[arg(long, default_value_t = 10_000)]
    test: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Approximation size of the metrics-table rows.
    #[arg(short = 'k', long = "k", default_value_t = 3)]
    k: usize,
    /// Approximation sizes of the sweep.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    sweep: Vec<usize>,
    /// Methods in the metrics table.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "ar,sc,dr-m,dr-u,ub,ops0,ops1,ops2,ops3"
    )]
    methods: Vec<Method>,
    /// Methods in the sweep.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "relaxed,ub,ops0,ops1,ops2,ops3"
    )]
    sweep_methods: Vec<Method>,
    #[arg(long, default_value_t = solve::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Concurrent method runs; 0 uses every core.
    #[arg(long, short = 'j', default_value_t = 1)]
    jobs: usize,
    #[arg(long, short = 'o')]
    output: PathBuf,
    /// Also write `timings.csv`.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct OpsTableArgs {
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Largest piece count; rows cover 1..=pieces.
    #[arg(long, default_value_t = 5)]
    pieces: usize,
    #[arg(long, default_value_t = OpsConfig::default().delta)]
    delta: f64,
    #[arg(long, default_value_t = OpsConfig::default().max_iter)]
    max_iter: usize,
    /// Directory caching search results between calls.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Columns (wind plants).
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 5000)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    synth: SynthArgs,
    /// CSV destination; stdout when absent.
    #[arg(long, short = 'o')]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    case: PathBuf,
    /// Samples whose fitted model is checked for the unimodal method.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[command(flatten)]
    params: ModelArgs,
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is taken by infeasibility.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::INPUT } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::OpsTable(a) => cmd_ops_table(a),
        Command::GenSamples(a) => cmd_gen_samples(a),
        Command::ValidateCase(a) => cmd_validate_case(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), Failure> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(Failure::input(format!(
            "epsilon must lie in (0, 0.5), got {epsilon}"
        )))
    }
}

fn load_problem(path: &Path) -> Result<Problem, Failure> {
    let case = NetworkCase::load(path)?;
    Ok(Problem::new(case).map_err(dropf_core::Error::from)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path)
        .map_err(|e| Failure::input(format!("cannot create {}: {e}", path.display())))
}

/// Report JSON without wall-clock fields, so reruns write identical bytes.
fn report_json(report: &SolveReport) -> String {
    let mut value = serde_json::to_value(report).expect("report serializes");
    if let Some(obj) = value.as_object_mut() {
        obj.remove("time_total");
        obj.remove("time_separation");
    }
    let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
    text.push('\n');
    text
}

/// Moment/mode model file. `sigma` is the raw second moment `E[ξξᵀ]`,
/// given as a list of rows.
#[derive(Debug, Deserialize)]
struct ModelFile {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    mode: Vec<f64>,
}

impl ModelFile {
    fn into_model(self, alpha: f64, epsilon: f64) -> Result<UncertaintyModel, Failure> {
        let l = self.mu.len();
        if self.sigma.len() != l || self.sigma.iter().any(|r| r.len() != l) {
            return Err(Failure::input(format!("model sigma must be {l}x{l}")));
        }
        let sigma = DMatrix::from_fn(l, l, |i, j| self.sigma[i][j]);
        Ok(UncertaintyModel::new(
            DVector::from_vec(self.mu),
            sigma,
            DVector::from_vec(self.mode),
            alpha,
            epsilon,
        )?)
    }
}

fn cmd_solve(a: SolveArgs) -> Result<u8, Failure> {
    check_epsilon(a.params.epsilon)?;
    let problem = load_problem(&a.case)?;
    let l = problem.uncertainty_dim();
    let (model, samples) = if let Some(path) = &a.model {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        let model = file.into_model(a.params.alpha, a.params.epsilon)?;
        if model.dim() != l {
            return Err(Failure::input(format!(
                "model has dimension {}, the case has {l} wind plants",
                model.dim()
            )));
        }
        (model, None)
    } else if l == 0 {
        (
            UncertaintyModel::empty(a.params.alpha, a.params.epsilon)?,
            None,
        )
    } else {
        let samples = match &a.samples {
            Some(path) => SampleSet::load_csv(path)?,
            None => stats::synth_unimodal_samples(
                &GeneratorConfig {
                    marginal: a.synth.marginal,
                    dim: l,
                    count: a.train,
                    correlation: a.synth.correlation,
                },
                a.seed,
            )?,
        };
        if samples.dim() != l {
            return Err(Failure::input(format!(
                "samples have {} columns, the case has {l} wind plants",
                samples.dim()
            )));
        }
        let model = UncertaintyModel::from_samples(
            &samples,
            a.params.bins,
            a.params.alpha,
            a.params.epsilon,
        )?;
        (model, Some(samples))
    };

    let cfg = SolveConfig {
        k: a.k,
        nodes: a.nodes.clone(),
        max_iter: a.max_iter,
        scenario_count: a.scenarios,
        ..SolveConfig::default()
    };
    let backend = solve::backend_from_env().map_err(dropf_core::Error::from)?;
    let report = solve::solve(
        &problem,
        a.method,
        &model,
        samples.as_ref(),
        &cfg,
        backend.as_ref(),
    )
    .map_err(dropf_core::Error::from)?;

    create_dir(&a.output)?;
    write_file(&a.output.join("report.json"), &report_json(&report))?;
    let summary = report.summary();
    write_file(&a.output.join("summary.txt"), &summary)?;
    if a.timings {
        let t = serde_json::json!({
            "time_total": report.time_total,
            "time_separation": report.time_separation,
        });
        write_file(&a.output.join("timings.json"), &format!("{t:#}\n"))?;
    }
    print!("{summary}");
    Ok(match report.status {
        SolveStatus::Optimal => 0,
        SolveStatus::Infeasible => 2,
        SolveStatus::IterationLimit => 3,
    })
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<u8, Failure> {
    check_epsilon(a.params.epsilon)?;
    if a.k < 2 || a.sweep.iter().any(|&k| k < 2) {
        return Err(Failure::input("approximation sizes must be at least 2"));
    }
    let problem = load_problem(&a.case)?;
    let pool = a.samples.as_deref().map(SampleSet::load_csv).transpose()?;
    let config = BenchmarkConfig {
        marginal: a.synth.marginal,
        correlation: a.synth.correlation,
        pool,
        train: a.train,
        test: a.test,
        seeds: a.seeds,
        epsilon: a.params.epsilon,
        alpha: a.params.alpha,
        bins: a.params.bins,
        solve: SolveConfig {
            k: a.k,
            max_iter: a.max_iter,
            ..SolveConfig::default()
        },
        table_methods: a.methods,
        sweep_methods: a.sweep_methods,
        sweep_k: a.sweep,
    };
    let bench = Benchmark::prepare(problem, config).map_err(dropf_core::Error::from)?;
    let backend = solve::backend_from_env().map_err(dropf_core::Error::from)?;
    let tasks = bench.tasks();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(|e| Failure::input(format!("thread pool: {e}")))?;
    // Collecting an indexed parallel iterator keeps task order.
    let results: Vec<TaskResult> = pool
        .install(|| {
            tasks
                .par_iter()
                .map(|&t| bench.run(t, backend.as_ref()))
                .collect::<Result<_, _>>()
        })
        .map_err(dropf_core::Error::from)?;
    let optimal = all_optimal(&results);
    let out = bench.assemble(results).map_err(dropf_core::Error::from)?;

    create_dir(&a.output)?;
    write_file(&a.output.join("metrics.csv"), &out.metrics_csv)?;
    write_file(&a.output.join("sweep.csv"), &out.sweep_csv)?;
    if a.timings {
        write_file(&a.output.join("timings.csv"), &out.timings_csv)?;
    }
    print!("{}", out.metrics_csv);
    if !optimal {
        for r in out
            .results
            .iter()
            .filter(|r| r.report.status != SolveStatus::Optimal)
        {
            eprintln!(
                "warning: seed {} {} K={:?} ended {}",
                r.seed, r.report.method, r.task.k, r.report.status
            );
        }
    }
    Ok(0)
}

fn cmd_ops_table(a: OpsTableArgs) -> Result<u8, Failure> {
    check_epsilon(a.epsilon)?;
    if a.pieces == 0 {
        return Err(Failure::input("--pieces must be at least 1"));
    }
    let vf = VFunction::new(a.epsilon, a.alpha)?;
    let cfg = OpsConfig {
        delta: a.delta,
        max_iter: a.max_iter,
        ..OpsConfig::default()
    };
    let mut rows = Vec::with_capacity(a.pieces);
    for pieces in 1..=a.pieces {
        let result = match &a.cache {
            Some(dir) => OpsCache::new(dir).get_or_compute(&vf, pieces, &cfg)?.0,
            None => dropf_core::pwl::ops_search(&vf, pieces, &cfg)?,
        };
        rows.push((pieces, result));
    }
    let csv = ops_table_csv(&rows);
    match &a.output {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_gen_samples(a: GenArgs) -> Result<u8, Failure> {
    let samples = stats::synth_unimodal_samples(
        &GeneratorConfig {
            marginal: a.synth.marginal,
            dim: a.dim,
            count: a.count,
            correlation: a.synth.correlation,
        },
        a.seed,
    )?;
    let mut buf = Vec::new();
    samples.write_csv(&mut buf)?;
    let text = String::from_utf8(buf).expect("csv is utf-8");
    match &a.output {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_validate_case(a: ValidateArgs) -> Result<u8, Failure> {
    let problem = load_problem(&a.case)?;
    let case = &problem.case;
    println!(
        "buses {}  lines {}  generators {}  wind plants {}",
        case.buses.len(),
        case.lines.len(),
        case.generators.len(),
        case.wind.len()
    );
    println!(
        "load {:.3} MW  forecast {:.3} MW  chance constraints {}",
        case.total_load(),
        case.total_forecast(),
        problem.constraints.len()
    );
    if let Some(path) = &a.samples {
        check_epsilon(a.params.epsilon)?;
        let samples = SampleSet::load_csv(path)?;
        if samples.dim() != case.wind.len() {
            return Err(Failure::input(format!(
                "samples have {} columns, the case has {} wind plants",
                samples.dim(),
                case.wind.len()
            )));
        }
        let model = UncertaintyModel::from_samples(
            &samples,
            a.params.bins,
            a.params.alpha,
            a.params.epsilon,
        )?;
        let diag = stats::validate_unimodal_model(&model)?;
        println!(
            "samples {}  tau0 {:.6}  unimodal matrix min eigenvalue {:.6e}",
            samples.len(),
            model.tau0(),
            diag.min_eigenvalue
        );
    }
    Ok(0)
}
