//! `pcr`: conditional independence testing from the command line.
//!
//! Subcommands: `test` (PCR), `crt`, `pf` (parameter-free PCR), `robust`,
//! `oracle` (power theory evaluation), `simulate` (replicated experiments
//! from a TOML config) and `pipeline` (trip-record workflow).
//!
//! All randomness flows from `--seed` (a fixed default keeps runs
//! reproducible); `--threads` caps worker parallelism without changing any
//! output byte.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pcr::crt::{run_crt, Sided};
use pcr::data::{Dataset, GaussianLinearSampler, ScoreFunction, SumScore};
use pcr::oracle::{self, models};
use pcr::parameter_free::{run_parameter_free, CounterfeitSharing, PKind};
use pcr::pearson::{run_pcr, PcrConfig, ThresholdKind, TieRule};
use pcr::pipeline::{
    gen_fixture, grouped_pcr, run_pipeline, write_trips, FixtureSpec, GroupedPcrConfig,
    KernelModel, KernelSampler, PipelineConfig, Response,
};
use pcr::robust::{pinsker_delta_gaussian, run_robust_pcr, RobustConfig};
use pcr::simlab::{
    run_experiment, score_builtin, write_reports_csv, ExperimentFile, ModelId, ModelSpec,
};
use pcr::{ConditionalSampler, PcrError, RngStream};

const DEFAULT_SEED: u64 = 1729;

#[derive(Parser)]
#[command(
    name = "pcr",
    version,
    about = "Model-X conditional independence testing with the PCR test"
)]
struct Cli {
    /// Global seed; every stream in a run derives from it.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Worker threads (default: all cores; env PCR_THREADS as fallback).
    /// Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset CSV with header x,y,z1,...,zq.
    #[arg(long)]
    input: PathBuf,

    /// Score function: residual_linear_z1 | sq_loss_xy | ols_residual(b0,b1).
    #[arg(long)]
    score: String,

    /// Conditional sampler: std-normal | gaussian-linear:coeffs.csv |
    /// kernel:model.json.
    #[arg(long, default_value = "std-normal")]
    sampler: String,

    /// Standard deviation override for the gaussian samplers.
    #[arg(long, default_value_t = 1.0)]
    sampler_sd: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run the PCR test on a dataset.
    Test {
        #[command(flatten)]
        data: DataArgs,
        /// Number of labels L.
        #[arg(long)]
        l: usize,
        /// Counterfeit ratio K (M = K*L - 1 counterfeits per sample).
        #[arg(long)]
        k: usize,
        #[arg(long)]
        alpha: f64,
        /// Rejection threshold: finite | asym.
        #[arg(long, value_parser = parse_threshold)]
        threshold: ThresholdKind,
        /// Tie handling: literal | random.
        #[arg(long, default_value = "literal", value_parser = parse_tie)]
        tie_rule: TieRule,
    },
    /// Run the baseline conditional randomization test.
    Crt {
        #[command(flatten)]
        data: DataArgs,
        /// Number of counterfeit datasets.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        alpha: f64,
    },
    /// Parameter-free PCR over a grid of label counts.
    Pf {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        k: usize,
        /// Comma-separated label counts, e.g. 2,4,8,16,32.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
        grid: Vec<usize>,
        #[arg(long)]
        alpha: f64,
        /// Which p-value feeds Bonferroni: finite | asym.
        #[arg(long, default_value = "finite", value_parser = parse_pkind)]
        p_kind: PKind,
        /// Counterfeit reuse: fresh | shared.
        #[arg(long, default_value = "fresh", value_parser = parse_sharing)]
        sharing: CounterfeitSharing,
    },
    /// Robust PCR with a total-variation drift radius.
    Robust {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_parser = parse_threshold, default_value = "asym")]
        threshold: ThresholdKind,
        /// Drift radius delta; exclusive with --eta.
        #[arg(long, conflicts_with = "eta")]
        delta: Option<f64>,
        /// Gaussian scale mismatch; delta is then the Pinsker bound.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Evaluate the power theory for a built-in model.
    Oracle {
        /// Model: quadratic_null | quadratic_shift | quadratic_a |
        /// robust_mismatch | crt_failure_example | theta_family.
        #[arg(long)]
        model: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        alpha: f64,
        /// Target type II error for the bound predicates.
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long, default_value_t = 1e-3)]
        theta: f64,
        #[arg(long, default_value_t = 20)]
        p_dim: usize,
        /// Monte Carlo draws of (Z, Y) behind the curve estimate.
        #[arg(long, default_value_t = 16384)]
        zy_samples: usize,
        /// Grid resolution of the curve estimate.
        #[arg(long, default_value_t = 1024)]
        grid_intervals: usize,
    },
    /// Run replicated experiments from a TOML config; emits CSV rows.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Fill the `seconds` column (off by default so equal seeds give
        /// byte-identical files).
        #[arg(long)]
        timing: bool,
    },
    /// Trip-record workflow: route filter, kernel fit, grouped PCR.
    Pipeline {
        #[arg(long)]
        test_csv: PathBuf,
        #[arg(long)]
        train_csv: PathBuf,
        /// Responses to test: any of user_type,date,weekday.
        #[arg(long, value_delimiter = ',', default_value = "user_type")]
        response: Vec<String>,
        #[arg(long, default_value_t = 4)]
        group_size: usize,
        #[arg(long, default_value_t = 10)]
        l: usize,
        #[arg(long, default_value_t = 200)]
        k: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 20.0)]
        bandwidth_min: f64,
        #[arg(long, default_value_t = 20)]
        min_route_count: usize,
        /// Instead of testing, write a synthetic fixture pair to
        /// --train-csv/--test-csv.
        #[arg(long)]
        gen_fixture: bool,
        /// Routes in the generated fixture.
        #[arg(long, default_value_t = 60)]
        routes: usize,
        #[arg(long, default_value_t = 30)]
        train_per_route: usize,
        #[arg(long, default_value_t = 30)]
        test_per_route: usize,
        /// Planted user-type dependence strength (0 = null fixture).
        #[arg(long, default_value_t = 0.0)]
        effect: f64,
        /// Write the fitted kernel model JSON here.
        #[arg(long)]
        emit_model: Option<PathBuf>,
    },
}

fn parse_threshold(s: &str) -> Result<ThresholdKind, String> {
    match s {
        "finite" => Ok(ThresholdKind::Finite),
        "asym" => Ok(ThresholdKind::Asym),
        _ => Err(format!("unknown threshold {s:?} (finite | asym)")),
    }
}

fn parse_tie(s: &str) -> Result<TieRule, String> {
    match s {
        "literal" => Ok(TieRule::Literal),
        "random" => Ok(TieRule::Random),
        _ => Err(format!("unknown tie rule {s:?} (literal | random)")),
    }
}

fn parse_pkind(s: &str) -> Result<PKind, String> {
    match s {
        "finite" => Ok(PKind::Finite),
        "asym" => Ok(PKind::Asym),
        _ => Err(format!("unknown p-value kind {s:?} (finite | asym)")),
    }
}

fn parse_sharing(s: &str) -> Result<CounterfeitSharing, String> {
    match s {
        "fresh" => Ok(CounterfeitSharing::Fresh),
        "shared" => Ok(CounterfeitSharing::Shared),
        _ => Err(format!("unknown sharing mode {s:?} (fresh | shared)")),
    }
}

fn build_sampler(spec: &str, sd: f64) -> Result<Box<dyn ConditionalSampler>, PcrError> {
    if spec == "std-normal" {
        let mut s = GaussianLinearSampler::std_normal();
        s.sd = sd;
        return Ok(Box::new(s));
    }
    if let Some(path) = spec.strip_prefix("gaussian-linear:") {
        let mut reader = csv::Reader::from_path(path)?;
        let mut coeffs = Vec::new();
        for row in reader.records() {
            let row = row?;
            coeffs.push(row[0].trim().parse::<f64>().map_err(|_| {
                PcrError::Config(format!("bad coefficient {:?} in {path}", &row[0]))
            })?);
        }
        return Ok(Box::new(GaussianLinearSampler::new(coeffs, 0.0, sd)?));
    }
    if let Some(path) = spec.strip_prefix("kernel:") {
        let text = std::fs::read_to_string(path)?;
        let model = KernelModel::from_json(&text)?;
        return Ok(Box::new(KernelSampler { model }));
    }
    Err(PcrError::Config(format!(
        "unknown sampler {spec:?} (std-normal | gaussian-linear:FILE | kernel:FILE)"
    )))
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<(), PcrError> {
    match output {
        Some(path) => {
            std::fs::write(path, text)?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, PcrError> {
    serde_json::to_string_pretty(value).map_err(|e| PcrError::Config(format!("json: {e}")))
}

fn run(cli: Cli) -> Result<(), PcrError> {
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("PCR_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .filter(|&t| t > 0);
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| PcrError::Config(format!("thread pool: {e}")))?;
    }
    let seed = cli.seed;

    match cli.command {
        Command::Test {
            data,
            l,
            k,
            alpha,
            threshold,
            tie_rule,
        } => {
            let dataset = Dataset::from_csv(&data.input)?;
            let sampler = build_sampler(&data.sampler, data.sampler_sd)?;
            let score = score_builtin(&data.score)?;
            let cfg = PcrConfig::new(l, k, alpha)?
                .with_threshold(threshold)
                .with_tie_rule(tie_rule);
            let res = run_pcr(&dataset, sampler.as_ref(), score.as_ref(), &cfg, seed)?;
            emit(&cli.output, &to_json(&res.report(&cfg, seed))?)
        }
        Command::Crt { data, m, alpha } => {
            let dataset = Dataset::from_csv(&data.input)?;
            let sampler = build_sampler(&data.sampler, data.sampler_sd)?;
            let score = score_builtin(&data.score)?;
            let res = run_crt(
                &dataset,
                sampler.as_ref(),
                &SumScore(ScoreBox(score)),
                m,
                alpha,
                seed,
            )?;
            emit(&cli.output, &to_json(&res)?)
        }
        Command::Pf {
            data,
            k,
            grid,
            alpha,
            p_kind,
            sharing,
        } => {
            let dataset = Dataset::from_csv(&data.input)?;
            let sampler = build_sampler(&data.sampler, data.sampler_sd)?;
            let score = score_builtin(&data.score)?;
            let res = run_parameter_free(
                &dataset,
                sampler.as_ref(),
                score.as_ref(),
                k,
                &grid,
                alpha,
                p_kind,
                sharing,
                seed,
            )?;
            emit(&cli.output, &to_json(&res)?)
        }
        Command::Robust {
            data,
            l,
            k,
            alpha,
            threshold,
            delta,
            eta,
        } => {
            let dataset = Dataset::from_csv(&data.input)?;
            let sampler = build_sampler(&data.sampler, data.sampler_sd)?;
            let score = score_builtin(&data.score)?;
            let delta = match (delta, eta) {
                (Some(d), _) => d,
                (None, Some(e)) => pinsker_delta_gaussian(e)?,
                (None, None) => {
                    return Err(PcrError::Config(
                        "robust: give either --delta or --eta".into(),
                    ))
                }
            };
            let cfg = RobustConfig::new(delta, PcrConfig::new(l, k, alpha)?.with_threshold(threshold))?;
            let res = run_robust_pcr(&dataset, sampler.as_ref(), score.as_ref(), &cfg, seed)?;
            emit(&cli.output, &to_json(&res)?)
        }
        Command::Oracle {
            model,
            n,
            l,
            k,
            alpha,
            beta,
            a,
            eta,
            theta,
            p_dim,
            zy_samples,
            grid_intervals,
        } => {
            let report = oracle_command(
                &model, n, l, k, alpha, beta, a, eta, theta, p_dim, zy_samples, grid_intervals,
                seed,
            )?;
            emit(&cli.output, &report)
        }
        Command::Simulate { config, timing } => {
            let text = std::fs::read_to_string(&config)?;
            let file = ExperimentFile::from_toml(&text)?;
            let mut reports = Vec::new();
            for spec in &file.experiment {
                reports.push(run_experiment(spec)?);
            }
            let mut buf = Vec::new();
            write_reports_csv(&mut buf, &reports, timing)?;
            emit(
                &cli.output,
                std::str::from_utf8(&buf).expect("csv output is utf-8"),
            )
        }
        Command::Pipeline {
            test_csv,
            train_csv,
            response,
            group_size,
            l,
            k,
            alpha,
            bandwidth_min,
            min_route_count,
            gen_fixture: fixture,
            routes,
            train_per_route,
            test_per_route,
            effect,
            emit_model,
        } => {
            if fixture {
                let spec = FixtureSpec {
                    num_routes: routes,
                    train_per_route,
                    test_per_route,
                    effect,
                    seed,
                };
                let (train, test) = gen_fixture(&spec);
                write_trips(&train_csv, &train)?;
                write_trips(&test_csv, &test)?;
                return emit(
                    &cli.output,
                    &format!(
                        "{{\"train_records\": {}, \"test_records\": {}}}",
                        train.len(),
                        test.len()
                    ),
                );
            }
            let responses: Vec<Response> = response
                .iter()
                .map(|r| match r.as_str() {
                    "user_type" => Ok(Response::UserType),
                    "date" => Ok(Response::Date),
                    "weekday" => Ok(Response::Weekday),
                    other => Err(PcrError::Config(format!(
                        "unknown response {other:?} (user_type | date | weekday)"
                    ))),
                })
                .collect::<Result<_, _>>()?;
            let cfg = PipelineConfig {
                grouped: GroupedPcrConfig {
                    group_size,
                    num_labels: l,
                    counterfeit_ratio: k,
                    alpha,
                    threshold_kind: ThresholdKind::Finite,
                },
                bandwidth_minutes: bandwidth_min,
                min_route_count,
            };
            if let Some(model_path) = emit_model {
                let train = pcr::pipeline::load_trips(&train_csv)?;
                let model = pcr::pipeline::kernel_fit(&train.records, bandwidth_min)?;
                std::fs::write(model_path, model.to_json()?)?;
            }
            let report = run_pipeline(&test_csv, &train_csv, &responses, &cfg, seed)?;
            emit(&cli.output, &to_json(&report)?)
        }
    }
}

/// Box adapter so a boxed score can feed `SumScore`.
struct ScoreBox(Box<dyn ScoreFunction>);

impl ScoreFunction for ScoreBox {
    fn score(&self, x: f64, y: f64, z: &[f64]) -> f64 {
        self.0.score(x, y, z)
    }

    fn descriptor(&self) -> String {
        self.0.descriptor()
    }
}

#[allow(clippy::too_many_arguments)]
fn oracle_command(
    model: &str,
    n: usize,
    l: usize,
    k: usize,
    alpha: f64,
    beta: f64,
    a: f64,
    eta: f64,
    theta: f64,
    p_dim: usize,
    zy_samples: usize,
    grid_intervals: usize,
    seed: u64,
) -> Result<String, PcrError> {
    let is_quadratic = matches!(
        model,
        "quadratic_null" | "quadratic_shift" | "quadratic_a" | "robust_mismatch"
    );
    if is_quadratic {
        let id = match model {
            "quadratic_null" => ModelId::QuadraticNull,
            "quadratic_shift" => ModelId::QuadraticShift,
            "quadratic_a" => ModelId::QuadraticA,
            _ => ModelId::RobustMismatch,
        };
        let spec = ModelSpec {
            id,
            n,
            theta,
            a,
            eta,
            p_dim,
        };
        let mut coeff_rng = RngStream::new(pcr::rng::derive_seed(seed, 3), 0);
        let inst = spec.instantiate(&mut coeff_rng)?;
        let odc = inst.odc_quadratic()?;
        let curve = oracle::conditional_odc(&odc, grid_intervals, zy_samples, seed)?;
        let report = oracle::power_report(&curve, n, l, k, alpha, beta, None)?;
        to_json(&report)
    } else if model == "crt_failure_example" || model == "theta_family" {
        let theta = if model == "crt_failure_example" {
            1e-3
        } else {
            theta
        };
        let odc = models::CrtFailureOdcModel::new(theta)?;
        let curve = oracle::conditional_odc(&odc, grid_intervals, zy_samples, seed)?;
        let eta_rep = oracle::crt_eta(
            |x| 1.0 / (theta * theta + x * x).sqrt(),
            1e-10,
            4_000_000,
        )?;
        let report = oracle::power_report(&curve, n, l, k, alpha, beta, Some(eta_rep.eta))?;
        to_json(&report)
    } else {
        Err(PcrError::Config(format!(
            "unknown oracle model {model:?}"
        )))
    }
}

fn main() -> ExitCode {
    // clap handles usage errors with exit code 2
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
