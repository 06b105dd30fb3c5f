//! Command-line interface. Exit codes: 0 success, 1 failed self-test,
//! 2 configuration error, 3 runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::behaviors::BehaviorSpec;
use crate::config::{
    run_config, BehaviorConfig, Context, DataConfig, RemovalConfig, RunConfig, SummaryConfig, CONFIG_VERSION,
};
use crate::data::MlpConfig;
use crate::error::Error;
use crate::estimation::EstimatorConfig;
use crate::eval::{
    aligned_metric_construction, curve_from_game, explanation_distance, ranking_from_attributions, run_grid,
    validate_ranking, CurveDirection, CurveOptions, DistanceMetric, GridSpec,
};
use crate::game::TabulatedGame;
use crate::selftest::{run_selftest, SelftestOptions};
use crate::summaries::{ExcessProblem, Regularizer, WeightingKernel};

pub const EXIT_SELFTEST_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "removal-explain", version, about = "Removal-based model explanations")]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an explanation described by a JSON config.
    Explain {
        config: PathBuf,
        /// Output file; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a tabulated game file `{"d": .., "values": [..]}`.
    Game(GameArgs),
    /// Run every combination of a method grid.
    Grid {
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluation metrics: curves, distances and the aligned-metric demo.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Run the built-in oracle suites.
    Selftest {
        /// Comma-separated suite names; defaults to all.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<String>>,
        #[arg(long, hide = true)]
        inject_tolerance_failure: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GameMethod {
    Shapley,
    Banzhaf,
    MeanWhenIncluded,
    IncludeIndividual,
    RemoveIndividual,
    Wls,
    ShapleySampled,
    BanzhafSampled,
    MeanWhenIncludedSampled,
    WlsSampled,
    SelectLowValue,
    SelectMinSize,
    SelectMinSizeGreedy,
    SelectFixedSize,
    SelectRegularized,
    SelectPartition,
    ExcessLowValue,
    ExcessMinSize,
    ExcessFixedSize,
    ExcessRegularized,
    ExcessPartition,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Shapley,
    Banzhaf,
    IncludeIndividual,
    RemoveIndividual,
}

#[derive(Debug, Args)]
struct GameArgs {
    method: GameMethod,
    file: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Value threshold for the minimum-size problems.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// Inclusion probability.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, value_enum, default_value_t = KernelArg::Shapley)]
    kernel: KernelArg,
    /// Ridge penalty for `wls`.
    #[arg(long)]
    l2: Option<f64>,
    /// Lasso penalty for `wls`.
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Convergence threshold for the sampled estimators.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_evaluations: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum EvaluateCommand {
    /// Insertion or deletion curve described by a JSON config.
    Curve {
        config: PathBuf,
        /// Also write the curve as `n_removed,value` CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Distance between two explanation files.
    Distance {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = MetricArg::Euclidean)]
        metric: MetricArg,
    },
    /// Zero-masking versus surrogate-masking evaluation on a constructed example.
    Aligned {
        #[arg(long)]
        epochs: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Pearson,
    Spearman,
}

/// Configuration for `evaluate curve`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveConfig {
    version: u32,
    #[serde(default)]
    data: DataConfig,
    removal: RemovalConfig,
    behavior: BehaviorConfig,
    direction: CurveDirection,
    /// Attribution scores used to order the features.
    #[serde(default)]
    attributions: Option<Vec<f64>>,
    /// Feature order, most important first, 1-based.
    #[serde(default)]
    ranking: Option<Vec<usize>>,
    #[serde(default)]
    options: CurveOptions,
    #[serde(default)]
    seed: u64,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::Csv(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write_output(path: Option<&Path>, text: &str) -> std::result::Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(|e| Failure {
            code: EXIT_RUNTIME,
            message: format!("cannot write {}: {e}", p.display()),
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_pretty<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes")
}

fn cmd_explain(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> std::result::Result<i32, Failure> {
    let run = RunConfig::from_path(config)?;
    let seed = run.resolve_seed(seed)?;
    let base = base_dir(config);
    let report = run_config(&run, &base, seed)?;
    let out = out.or_else(|| run.output.as_ref().map(|p| base.join(p)));
    write_output(out.as_deref(), &report.to_json())?;
    Ok(0)
}

fn require<T>(value: Option<T>, flag: &str, method: GameMethod) -> std::result::Result<T, Failure> {
    value.ok_or_else(|| config_error(format!("{method:?} requires --{flag}")))
}

fn game_summary(args: &GameArgs) -> std::result::Result<SummaryConfig, Failure> {
    let m = args.method;
    let mut estimator = EstimatorConfig::with_seed(args.seed);
    if let Some(t) = args.threshold {
        estimator.threshold = t;
    }
    if let Some(b) = args.batch_size {
        estimator.batch_size = b;
    }
    if let Some(n) = args.max_evaluations {
        estimator.max_evaluations = n;
    }
    if let Some(p) = args.p {
        estimator.inclusion_prob = p;
    }
    let kernel = match args.kernel {
        KernelArg::Shapley => WeightingKernel::Shapley,
        KernelArg::Banzhaf => WeightingKernel::Banzhaf,
        KernelArg::IncludeIndividual => WeightingKernel::IncludeIndividual,
        KernelArg::RemoveIndividual => WeightingKernel::RemoveIndividual,
    };
    let regularizer = match (args.l1, args.l2) {
        (Some(_), Some(_)) => return Err(config_error("--l1 and --l2 are mutually exclusive")),
        (Some(lambda), None) => Regularizer::L1 { lambda },
        (None, Some(lambda)) => Regularizer::L2 { lambda },
        (None, None) => Regularizer::None,
    };
    Ok(match m {
        GameMethod::Shapley => SummaryConfig::Shapley {},
        GameMethod::Banzhaf => SummaryConfig::Banzhaf {},
        GameMethod::MeanWhenIncluded => SummaryConfig::MeanWhenIncluded {
            p: args.p.unwrap_or(0.5),
        },
        GameMethod::IncludeIndividual => SummaryConfig::IncludeIndividual {},
        GameMethod::RemoveIndividual => SummaryConfig::RemoveIndividual {},
        GameMethod::Wls => SummaryConfig::Wls { kernel, regularizer },
        GameMethod::ShapleySampled => SummaryConfig::ShapleySampled { estimator },
        GameMethod::BanzhafSampled => SummaryConfig::BanzhafSampled { estimator },
        GameMethod::MeanWhenIncludedSampled => SummaryConfig::MeanWhenIncludedSampled { estimator },
        GameMethod::WlsSampled => SummaryConfig::WlsSampled { kernel, estimator },
        GameMethod::SelectLowValue => SummaryConfig::SelectLowValue {
            lambda: require(args.lambda, "lambda", m)?,
        },
        GameMethod::SelectMinSize => SummaryConfig::SelectMinSize {
            t: require(args.t, "t", m)?,
        },
        GameMethod::SelectMinSizeGreedy => SummaryConfig::SelectMinSizeGreedy {
            t: require(args.t, "t", m)?,
        },
        GameMethod::SelectFixedSize => SummaryConfig::SelectFixedSize {
            k: require(args.k, "k", m)?,
        },
        GameMethod::SelectRegularized => SummaryConfig::SelectRegularized {
            lambda: require(args.lambda, "lambda", m)?,
        },
        GameMethod::SelectPartition => SummaryConfig::SelectPartition {
            gamma: require(args.gamma, "gamma", m)?,
            lambda: require(args.lambda, "lambda", m)?,
        },
        GameMethod::ExcessLowValue => SummaryConfig::SelectViaExcess {
            problem: ExcessProblem::LowValue {
                lambda: require(args.lambda, "lambda", m)?,
            },
        },
        GameMethod::ExcessMinSize => SummaryConfig::SelectViaExcess {
            problem: ExcessProblem::MinSize {
                t: require(args.t, "t", m)?,
            },
        },
        GameMethod::ExcessFixedSize => SummaryConfig::SelectViaExcess {
            problem: ExcessProblem::FixedSize {
                k: require(args.k, "k", m)?,
            },
        },
        GameMethod::ExcessRegularized => SummaryConfig::SelectViaExcess {
            problem: ExcessProblem::Regularized {
                lambda: require(args.lambda, "lambda", m)?,
            },
        },
        GameMethod::ExcessPartition => SummaryConfig::SelectViaExcess {
            problem: ExcessProblem::Partition {
                gamma: require(args.gamma, "gamma", m)?,
                lambda: require(args.lambda, "lambda", m)?,
            },
        },
    })
}

fn cmd_game(args: &GameArgs) -> std::result::Result<i32, Failure> {
    let game = TabulatedGame::from_json(&read_text(&args.file)?)
        .map_err(|e| config_error(format!("{}: {e}", args.file.display())))?;
    let summary = game_summary(args)?;
    let explanation = summary.run(&game, 0)?;
    write_output(None, &to_pretty(&explanation))?;
    Ok(0)
}

fn cmd_grid(spec_path: &Path, out_dir: &Path) -> std::result::Result<i32, Failure> {
    let spec: GridSpec = parse_json(spec_path)?;
    spec.validate()?;
    let ctx = Context::load(&spec.data, &base_dir(spec_path))?;
    let report = run_grid(&spec, &ctx)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: format!("cannot create {}: {e}", out_dir.display()),
    })?;
    write_output(Some(&out_dir.join("grid_report.json")), &report.to_json())?;
    let file = std::fs::File::create(out_dir.join("grid_cells.csv")).map_err(Error::from)?;
    report.write_csv(file)?;
    let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
    eprintln!(
        "{} cells ({} failed) written to {}",
        report.cells.len(),
        failed,
        out_dir.display()
    );
    Ok(0)
}

/// Extracts per-feature scores from an explanation or report JSON file.
fn explanation_values(path: &Path) -> std::result::Result<Vec<f64>, Failure> {
    let value: serde_json::Value = parse_json(path)?;
    let inner = value.get("explanation").unwrap_or(&value);
    if let Some(values) = inner.get("values") {
        return serde_json::from_value(values.clone())
            .map_err(|e| config_error(format!("{}: values: {e}", path.display())));
    }
    if let (Some(subset), Some(d)) = (inner.get("subset"), inner.get("d")) {
        let subset: Vec<usize> = serde_json::from_value(subset.clone())
            .map_err(|e| config_error(format!("{}: subset: {e}", path.display())))?;
        let d = d
            .as_u64()
            .ok_or_else(|| config_error(format!("{}: d must be an integer", path.display())))? as usize;
        let mut v = vec![0.0; d];
        for i in subset {
            if i == 0 || i > d {
                return Err(config_error(format!("{}: feature {i} out of range", path.display())));
            }
            v[i - 1] = 1.0;
        }
        return Ok(v);
    }
    Err(config_error(format!("{}: no `values` or `subset` field", path.display())))
}

fn cmd_evaluate(command: &EvaluateCommand) -> std::result::Result<i32, Failure> {
    match command {
        EvaluateCommand::Curve { config, csv } => {
            let c: CurveConfig = parse_json(config)?;
            if c.version != CONFIG_VERSION {
                return Err(config_error(format!("unsupported version {}", c.version)));
            }
            let ctx = Context::load(&c.data, &base_dir(config))?;
            let f = c.removal.build(&ctx, c.seed)?;
            let spec: BehaviorSpec = c.behavior.to_spec(&ctx)?;
            let game = crate::behaviors::make_game(f, &spec)?;
            let ranking = match (&c.attributions, &c.ranking) {
                (Some(a), None) => ranking_from_attributions(a)?,
                (None, Some(r)) => {
                    let zero_based: Vec<usize> = r
                        .iter()
                        .map(|&i| i.checked_sub(1).ok_or_else(|| config_error("ranking indices are 1-based")))
                        .collect::<std::result::Result<_, _>>()?;
                    validate_ranking(&zero_based, r.len())?;
                    zero_based
                }
                _ => return Err(config_error("give exactly one of `attributions` or `ranking`")),
            };
            let curve = curve_from_game(&game, &ranking, c.direction, c.options)?;
            if let Some(path) = csv {
                let file = std::fs::File::create(path).map_err(Error::from)?;
                curve.write_csv(file)?;
            }
            write_output(None, &to_pretty(&curve))?;
        }
        EvaluateCommand::Distance { a, b, metric } => {
            let metric = match metric {
                MetricArg::Euclidean => DistanceMetric::Euclidean,
                MetricArg::Pearson => DistanceMetric::Pearson,
                MetricArg::Spearman => DistanceMetric::Spearman,
            };
            let value = explanation_distance(&explanation_values(a)?, &explanation_values(b)?, metric)?;
            write_output(None, &to_pretty(&serde_json::json!({ "metric": metric, "value": value })))?;
        }
        EvaluateCommand::Aligned { epochs } => {
            let mut mlp = MlpConfig::default();
            if let Some(e) = epochs {
                mlp.epochs = *e;
            }
            let report = aligned_metric_construction(&mlp)?;
            write_output(None, &to_pretty(&report))?;
        }
    }
    Ok(0)
}

fn cmd_selftest(suites: Option<Vec<String>>, inject: bool) -> std::result::Result<i32, Failure> {
    let names = suites.map(|s| s.into_iter().filter(|n| !n.trim().is_empty()).collect::<Vec<_>>());
    let outcomes = run_selftest(
        names.as_deref(),
        SelftestOptions {
            inject_tolerance_failure: inject,
        },
    )?;
    println!(
        "{:<22} {:>8} {:>12} {:>10} {:>6} {:>10}",
        "suite", "checks", "max_error", "tolerance", "result", "ms"
    );
    for o in &outcomes {
        println!(
            "{:<22} {:>8} {:>12.3e} {:>10.0e} {:>6} {:>10.1}",
            o.name,
            o.checks,
            o.max_error,
            o.tolerance,
            if o.passed { "PASS" } else { "FAIL" },
            o.runtime_ms
        );
    }
    Ok(if outcomes.iter().all(|o| o.passed) {
        0
    } else {
        EXIT_SELFTEST_FAILED
    })
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build_global()
    {
        eprintln!("warning: {e}");
    }
    let outcome = match cli.command {
        Command::Explain { config, out, seed } => cmd_explain(&config, out, seed),
        Command::Game(args) => cmd_game(&args),
        Command::Grid { spec, out_dir } => cmd_grid(&spec, &out_dir),
        Command::Evaluate(command) => cmd_evaluate(&command),
        Command::Selftest {
            suites,
            inject_tolerance_failure,
        } => cmd_selftest(suites, inject_tolerance_failure),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
