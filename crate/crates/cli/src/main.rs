use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nnim::baselines::read_named_matrix;
use nnim::dynamics::{homophilic_index, run_nnim, HomophilyK, SimulationConfig};
use nnim::inference::initialize_beliefs;
use nnim::metrics::EvalReport;
use nnim::theory;
use nnim_cli::config::{Method, RunConfig};
use nnim_cli::error::{CliError, Stage};
use nnim_cli::pipeline::{self, write_json, PartitionSummary, TrajectorySummary};
use nnim_cli::tables::{export_tables, Format};
use serde_json::json;

#[derive(Parser)]
#[command(name = "nnim", version, about = "Nearest-neighbor influence inference on core-periphery networks")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 4 when an iterative method does not converge.
    #[arg(long, global = true)]
    strict: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. --set k=8 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        for pair in &self.overrides {
            cfg.apply_override(pair)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    CfBipartite,
    CfDynamic,
    LabelProp,
    RandomHk,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Worked,
    Convergence,
    Bound,
    Ordering,
    Concentration,
    Overlap,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Tsv,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Pick the core with bucketed greedy coverage and write the partition.
    ExtractCore {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the stochastic process from the core-follow initialization.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean-field inference (`nnim`, or `nnim-reg` with --regularized).
    Infer {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        regularized: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// One of the comparison predictors.
    Baseline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        method: BaselineKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction file against a truth file (rows matched by name).
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// Treat scores as 0/1 predictions and report F1 as well.
        #[arg(long)]
        binary: bool,
    },
    /// Homophilic index of the configured graph.
    Hi {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// outdegree, log, or a fixed k.
        #[arg(long, default_value = "outdegree")]
        policy: String,
    },
    /// Empirical checks of the convergence theory.
    Check {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        /// Directory for counterexample dumps.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full run into a run directory.
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Exact run directory (default: a timestamped one under `out`).
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Aggregate run directories into a results table.
    ExportTables {
        #[arg(long, value_enum, default_value = "md")]
        format: TableFormat,
        runs: Vec<PathBuf>,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io {
        stage: "output",
        message: e.to_string(),
    })?;
    println!("{text}");
    Ok(())
}

fn mkdir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        stage: "write",
        message: format!("{}: {e}", dir.display()),
    })
}

fn strict_check(strict: bool, converged: bool, what: &str) -> Result<(), CliError> {
    if strict && !converged {
        return Err(CliError::NotConverged(what.to_string()));
    }
    Ok(())
}

fn run_to(cfg: RunConfig, dir: &Path, strict: bool) -> Result<(), CliError> {
    let out = pipeline::run_pipeline(&cfg, dir)?;
    print_json(&json!({
        "run_dir": out.dir,
        "eval": out.report.eval,
        "partition": out.report.partition,
        "trajectory": out.report.trajectory,
        "timing": out.timing,
    }))?;
    strict_check(strict, out.report.converged, cfg.method.as_str())
}

fn parse_hi_policy(s: &str) -> Result<HomophilyK, CliError> {
    match s {
        "outdegree" => Ok(HomophilyK::OutDegreePlusOne),
        "log" => Ok(HomophilyK::CeilLogN),
        n => n
            .parse::<usize>()
            .ok()
            .filter(|&k| k >= 1)
            .map(HomophilyK::Fixed)
            .ok_or_else(|| CliError::Config(format!("--policy {n:?}: expected outdegree, log or a positive integer"))),
    }
}

/// Reorders `scores` rows to the order of `truth` names.
fn align(truth_names: &[String], names: &[String], scores: ndarray::Array2<f64>) -> Result<ndarray::Array2<f64>, CliError> {
    let index: std::collections::HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let rows = truth_names
        .iter()
        .map(|n| {
            index.get(n.as_str()).copied().ok_or_else(|| CliError::Data {
                stage: "evaluate",
                source: nnim::Error::Shape(format!("no score row for {n:?}")),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(scores.select(ndarray::Axis(0), &rows))
}

fn run_check(suite: Suite, trials: usize, seed: u64, out: Option<&Path>, strict: bool) -> Result<(), CliError> {
    let wants = |s: Suite| suite == s || suite == Suite::All;
    let mut report = serde_json::Map::new();
    let mut counterexamples = Vec::new();
    let mut all_pass = true;
    if wants(Suite::Worked) {
        let r = theory::worked_example().stage("worked example")?;
        all_pass &= r.matches;
        report.insert("worked".into(), json!(r));
    }
    if wants(Suite::Convergence) {
        let mut rows = Vec::new();
        for (n, k) in [(10, 2), (16, 4), (32, 8)] {
            let r = theory::check_finite_convergence(n, k, trials, seed, 40);
            all_pass &= r.pass_rate == 1.0;
            counterexamples.extend(r.counterexamples.iter().take(5).cloned());
            let mut v = json!(r);
            v["counterexamples"] = json!(r.counterexamples.len());
            rows.push(v);
        }
        report.insert("convergence".into(), json!(rows));
    }
    if wants(Suite::Bound) {
        let mut rows = Vec::new();
        for k in [2, 4, 8] {
            let r = theory::check_iteration_bound(64, k, 1e-3, trials, seed, 10.0).stage("bound")?;
            all_pass &= r.holds;
            let mut v = json!(r);
            v.as_object_mut().map(|o| o.remove("steps"));
            rows.push(v);
        }
        report.insert("bound".into(), json!(rows));
    }
    if wants(Suite::Ordering) {
        let mut rows = Vec::new();
        for k in [2, 4, 8] {
            let r = theory::check_ordering_and_splits(16, k, trials, seed, 40);
            all_pass &= r.ordering_violations == 0 && r.split_violations == 0;
            counterexamples.extend(r.counterexamples.iter().cloned());
            let mut v = json!(r);
            v["counterexamples"] = json!(r.counterexamples.len());
            rows.push(v);
        }
        report.insert("ordering".into(), json!(rows));
    }
    if wants(Suite::Concentration) {
        let rows: Vec<_> = [0.1, 0.05]
            .into_iter()
            .map(|delta| theory::check_hamming_concentration(64, delta, 20 * trials.max(50), seed))
            .inspect(|r| all_pass &= r.holds)
            .collect();
        report.insert("concentration".into(), json!(rows));
    }
    if wants(Suite::Overlap) {
        let xi0 = nnim::synth::uniform_points(200, 8, seed);
        let r = theory::knn_overlap_diagnostic(xi0.view(), 8, 20, seed).stage("overlap")?;
        report.insert("overlap".into(), json!(r));
    }
    if let Some(dir) = out {
        mkdir(dir)?;
        theory::dump_counterexamples(dir, &counterexamples).stage("counterexamples")?;
    }
    report.insert("all_pass".into(), json!(all_pass));
    print_json(&report)?;
    strict_check(strict, all_pass, "theory suite")
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ExtractCore { cfg, out } => {
            let cfg = cfg.load()?;
            let data = pipeline::load_dataset(&cfg)?;
            let part = pipeline::extract(&cfg, &data.graph)?;
            mkdir(&out)?;
            pipeline::write_core(&out, &data.graph, &part)?;
            let summary = PartitionSummary::new(&part);
            write_json(&out.join("partition.json"), &summary)?;
            print_json(&summary)
        }
        Command::Simulate { cfg, out } => {
            let cfg = cfg.load()?;
            let data = pipeline::load_dataset(&cfg)?;
            let part = pipeline::extract(&cfg, &data.graph)?;
            let xi0 = initialize_beliefs(&part, &data.graph).stage("initialization")?.phi;
            let k = cfg.k.resolve(part.periphery.len());
            let sim = SimulationConfig {
                k,
                epsilon: cfg.epsilon,
                max_steps: cfg.max_steps,
                seed: cfg.seed,
                snapshot_every: 0,
            };
            let (state, traj) = run_nnim(xi0.view(), sim).stage("simulation")?;
            mkdir(&out)?;
            let params = nnim::baselines::ScoreMatrix::new(state.xi, "nnim-stochastic");
            pipeline::write_scores(&out.join("xi.tsv"), &data.graph, &part, &params)?;
            pipeline::write_trajectory(&out.join("trajectory.tsv"), &traj)?;
            let summary = json!({ "k": k, "trajectory": TrajectorySummary::new(&traj) });
            write_json(&out.join("summary.json"), &summary)?;
            print_json(&summary)?;
            strict_check(cli.strict, traj.converged(), "simulation")
        }
        Command::Infer { cfg, regularized, out } => {
            let mut cfg = cfg.load()?;
            cfg.method = if regularized { Method::NnimReg } else { Method::Nnim };
            run_to(cfg, &out, cli.strict)
        }
        Command::Baseline { cfg, method, out } => {
            let mut cfg = cfg.load()?;
            cfg.method = match method {
                BaselineKind::CfBipartite => Method::CfBipartite,
                BaselineKind::CfDynamic => Method::CfDynamic,
                BaselineKind::LabelProp => Method::LabelProp,
                BaselineKind::RandomHk => Method::RandomHk,
            };
            run_to(cfg, &out, cli.strict)
        }
        Command::Evaluate { truth, scores, binary } => {
            let (truth_names, truth_m) = read_named_matrix(&truth).stage("evaluate")?;
            let (names, score_m) = read_named_matrix(&scores).stage("evaluate")?;
            let score_m = align(&truth_names, &names, score_m)?;
            let truth_bits = truth_m.mapv(|v| u8::from(v >= 0.5));
            let report = EvalReport::evaluate(truth_bits.view(), score_m.view(), binary).stage("evaluate")?;
            print_json(&report)
        }
        Command::Hi { cfg, policy } => {
            let cfg = cfg.load()?;
            let policy = parse_hi_policy(&policy)?;
            let data = pipeline::load_dataset(&cfg)?;
            let hi = homophilic_index(&data.graph, policy);
            print_json(&json!({ "dataset": cfg.dataset_name(), "policy": policy, "hi": hi }))
        }
        Command::Check { suite, trials, seed, out } => run_check(suite, trials, seed, out.as_deref(), cli.strict),
        Command::Pipeline { cfg, run_dir } => {
            let cfg = cfg.load()?;
            let dir = run_dir.unwrap_or_else(|| pipeline::new_run_dir(&cfg.out, cfg.method));
            run_to(cfg, &dir, cli.strict)
        }
        Command::ExportTables { format, runs } => {
            let format = match format {
                TableFormat::Tsv => Format::Tsv,
                TableFormat::Md => Format::Markdown,
            };
            print!("{}", export_tables(&runs, format)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
