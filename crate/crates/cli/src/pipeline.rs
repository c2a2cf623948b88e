//! load -> core extraction -> method -> evaluation, with every artifact
//! written to a run directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nnim::baselines::{self, ScoreMatrix};
use nnim::core_extract::{bgmc, budget_for_exponent, CorePartition};
use nnim::graph::{load_dump, load_graph, load_snap_ego, LabeledGraph, LoadOptions, LoadReport};
use nnim::inference::{run_inference, InferenceConfig, PcaSummary};
use nnim::metrics::{truth_matrix, EvalReport};
use nnim::synth::{two_block_graph, TwoBlockConfig};
use nnim::trajectory::Trajectory;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Method, RunConfig, Source};
use crate::error::{CliError, Stage};

pub struct Dataset {
    pub graph: LabeledGraph,
    pub load: LoadReport,
    /// Input file -> SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = File::open(path).map_err(|e| CliError::Io {
        stage: "hash",
        message: format!("{}: {e}", path.display()),
    })?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).stage("hash")?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn required<'a>(v: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf, CliError> {
    v.as_ref()
        .ok_or_else(|| CliError::Config(format!("{key} is required for this source")))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let mut files: Vec<PathBuf> = Vec::new();
    let (graph, load) = match cfg.resolved_source()? {
        Source::EdgeList => {
            let edges = required(&cfg.edges, "edges")?;
            let labels = required(&cfg.labels, "labels")?;
            files.extend([edges.clone(), labels.clone()]);
            let opts = LoadOptions {
                directed: cfg.directed,
                dim: cfg.dim,
            };
            load_graph(edges, labels, opts).stage("load")?
        }
        Source::Dump => {
            let dir = required(&cfg.dump, "dump")?;
            files.extend(["graph.json", "labels.tsv", "edges.tsv"].map(|f| dir.join(f)));
            (load_dump(dir).stage("load")?, LoadReport::default())
        }
        Source::Snap => {
            let dir = required(&cfg.snap_dir, "snap_dir")?;
            files.extend(["edges", "feat", "egofeat"].map(|ext| dir.join(format!("{}.{ext}", cfg.ego))));
            load_snap_ego(dir, &cfg.ego).stage("load")?
        }
        Source::TwoBlock => {
            let synth = TwoBlockConfig {
                nodes: cfg.synth_nodes,
                dim: cfg.synth_dim,
                seed: cfg.seed,
                ..TwoBlockConfig::default()
            };
            two_block_graph(&synth).stage("load")?
        }
    };
    let mut inputs = BTreeMap::new();
    for f in files {
        inputs.insert(f.display().to_string(), sha256_file(&f)?);
    }
    Ok(Dataset { graph, load, inputs })
}

pub fn core_budget(cfg: &RunConfig, n: usize) -> usize {
    cfg.budget.unwrap_or_else(|| budget_for_exponent(n, cfg.p))
}

pub fn extract(cfg: &RunConfig, g: &LabeledGraph) -> Result<CorePartition, CliError> {
    let budget = core_budget(cfg, g.node_count());
    bgmc(g, budget, cfg.gamma, cfg.tau).stage("core extraction")
}

pub struct MethodRun {
    pub scores: ScoreMatrix,
    pub trajectory: Option<Trajectory>,
    pub k: Option<usize>,
    pub pca: Option<PcaSummary>,
    pub converged: bool,
    /// Seconds spent in k-NN indexing, when the method reports it.
    pub index_seconds: f64,
}

pub fn run_method(cfg: &RunConfig, g: &LabeledGraph, part: &CorePartition) -> Result<MethodRun, CliError> {
    let n = part.periphery.len();
    let run = match cfg.method {
        Method::Nnim | Method::NnimReg => {
            let alpha = if cfg.method == Method::NnimReg { cfg.reg_alpha } else { cfg.alpha };
            let icfg = InferenceConfig {
                k: cfg.k,
                threshold: cfg.threshold,
                max_steps: cfg.max_steps,
                alpha,
                pca_variance: cfg.pca,
                index: cfg.index(),
                seed: cfg.seed,
            };
            let out = run_inference(part, g, &icfg).stage("inference")?;
            let scores = ScoreMatrix::new(out.beliefs.phi, cfg.method.as_str())
                .with("k", out.k)
                .with("alpha", alpha);
            MethodRun {
                scores,
                converged: out.trajectory.converged() || cfg.max_steps == 0,
                trajectory: Some(out.trajectory),
                k: Some(out.k),
                pca: out.pca,
                index_seconds: out.knn.index_seconds,
            }
        }
        Method::CfBipartite => MethodRun {
            scores: baselines::cf_bipartite(part, g).stage("cf-bipartite")?,
            trajectory: None,
            k: None,
            pca: None,
            converged: true,
            index_seconds: 0.0,
        },
        Method::CfDynamic => {
            let (scores, traj) = baselines::cf_dynamic(g, part, cfg.max_steps, cfg.threshold);
            MethodRun {
                scores,
                converged: traj.converged(),
                trajectory: Some(traj),
                k: None,
                pca: None,
                index_seconds: 0.0,
            }
        }
        Method::LabelProp => {
            let (scores, stats) = baselines::label_propagation(g, part, cfg.seed, cfg.lp_rounds);
            let scores = scores
                .with("rounds", stats.rounds)
                .with("isolated", stats.isolated)
                .with("unreached", stats.unreached);
            MethodRun {
                scores,
                trajectory: None,
                k: None,
                pca: None,
                converged: stats.stable,
                index_seconds: 0.0,
            }
        }
        Method::RandomHk => {
            let k = cfg.k.resolve(n);
            let radius = cfg.hk_radius.unwrap_or_else(|| baselines::default_radius(g.dim()));
            let (scores, traj) =
                baselines::random_hk(part, g, k, radius, cfg.threshold, cfg.max_steps, cfg.seed).stage("random-hk")?;
            MethodRun {
                scores,
                converged: traj.converged(),
                trajectory: Some(traj),
                k: Some(k),
                pca: None,
                index_seconds: 0.0,
            }
        }
    };
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub dim: usize,
    pub directed: bool,
    pub load: LoadReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub budget: usize,
    pub core: usize,
    pub periphery: usize,
    pub engaged: usize,
    pub uncovered: usize,
    pub coverage_pct: f64,
    pub core_pct: f64,
    pub bipartite_edge_pct: f64,
}

impl PartitionSummary {
    pub fn new(part: &CorePartition) -> Self {
        PartitionSummary {
            budget: part.budget,
            core: part.core.len(),
            periphery: part.periphery.len(),
            engaged: part.engaged_count,
            uncovered: part.uncovered.len(),
            coverage_pct: 100.0 * part.coverage_fraction,
            core_pct: 100.0 * part.core_fraction,
            bipartite_edge_pct: 100.0 * part.bipartite_edge_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub steps: usize,
    pub stopping_step: Option<usize>,
    pub converged: bool,
    pub final_displacement: Option<f64>,
}

impl TrajectorySummary {
    pub fn new(t: &Trajectory) -> Self {
        TrajectorySummary {
            steps: t.steps_executed(),
            stopping_step: t.stopping_step,
            converged: t.converged(),
            final_displacement: t.final_displacement(),
        }
    }
}

/// Everything about a run that is determined by its configuration and
/// inputs. Wall-clock times live in [`Timing`], in a separate file, so this
/// report is byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub method: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, String>,
    pub graph: GraphSummary,
    pub partition: PartitionSummary,
    pub method_config: BTreeMap<String, String>,
    pub k: Option<usize>,
    pub pca: Option<PcaSummary>,
    pub eval: EvalReport,
    pub trajectory: Option<TrajectorySummary>,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds per phase: load, core_extraction, index, dynamics, eval.
    pub phases: BTreeMap<String, f64>,
    pub total_s: f64,
}

impl Timing {
    fn record(&mut self, phase: &str, seconds: f64) {
        *self.phases.entry(phase.to_string()).or_default() += seconds;
        self.total_s += seconds;
    }
}

/// A fresh directory under `out`, named after the current time and method.
pub fn new_run_dir(out: &Path, method: Method) -> PathBuf {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let base = format!("run-{secs}-{}", method.as_str());
    let mut dir = out.join(&base);
    let mut i = 1;
    while dir.exists() {
        dir = out.join(format!("{base}-{i}"));
        i += 1;
    }
    dir
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io {
        stage: "write",
        message: format!("{}: {e}", path.display()),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io {
        stage: "write",
        message: e.to_string(),
    })?;
    writeln!(w).stage("write")?;
    w.flush().stage("write")
}

pub fn write_core(dir: &Path, g: &LabeledGraph, part: &CorePartition) -> Result<(), CliError> {
    let mut w = create(&dir.join("core.txt"))?;
    for &c in &part.core {
        writeln!(w, "{}", g.name(c)).stage("write")?;
    }
    w.flush().stage("write")?;
    let mut w = create(&dir.join("bipartite.tsv"))?;
    part.write_bipartite_tsv(g, &mut w).stage("write")?;
    w.flush().stage("write")
}

pub fn write_scores(path: &Path, g: &LabeledGraph, part: &CorePartition, scores: &ScoreMatrix) -> Result<(), CliError> {
    let names: Vec<&str> = part.periphery.iter().map(|&u| g.name(u)).collect();
    let mut w = create(path)?;
    scores.write_tsv(&names, &mut w).stage("write")?;
    w.flush().stage("write")
}

pub fn write_trajectory(path: &Path, t: &Trajectory) -> Result<(), CliError> {
    let mut w = create(path)?;
    t.write_tsv(&mut w).stage("write")?;
    w.flush().stage("write")
}

pub struct PipelineOutcome {
    pub report: RunReport,
    pub timing: Timing,
    pub dir: PathBuf,
}

/// Runs the configured method end to end and writes `config.txt`,
/// `core.txt`, `bipartite.tsv`, `scores.tsv`, `trajectory.tsv` (iterative
/// methods), `report.json` and `timing.json` into `dir`. Artifacts written
/// before a failing stage are kept.
pub fn run_pipeline(cfg: &RunConfig, dir: &Path) -> Result<PipelineOutcome, CliError> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        stage: "write",
        message: format!("{}: {e}", dir.display()),
    })?;
    fs::write(dir.join("config.txt"), cfg.to_text()).stage("write")?;
    let mut timing = Timing::default();

    let t0 = Instant::now();
    let data = load_dataset(cfg)?;
    timing.record("load", t0.elapsed().as_secs_f64());
    let g = &data.graph;
    log::info!("loaded {} nodes, {} edges, {} labels", g.node_count(), g.edge_count(), g.dim());

    let t0 = Instant::now();
    let part = extract(cfg, g)?;
    timing.record("core_extraction", t0.elapsed().as_secs_f64());
    log::info!(
        "core of {} covers {:.2}% of {} engaged nodes",
        part.core.len(),
        100.0 * part.coverage_fraction,
        part.engaged_count
    );
    write_core(dir, g, &part)?;

    let t0 = Instant::now();
    let run = run_method(cfg, g, &part)?;
    let method_s = t0.elapsed().as_secs_f64();
    if !run.converged {
        log::warn!("{} stopped without converging", cfg.method.as_str());
    }
    timing.record("index", run.index_seconds);
    timing.record("dynamics", (method_s - run.index_seconds).max(0.0));
    write_scores(&dir.join("scores.tsv"), g, &part, &run.scores)?;
    if let Some(t) = &run.trajectory {
        write_trajectory(&dir.join("trajectory.tsv"), t)?;
    }

    let t0 = Instant::now();
    let truth = truth_matrix(&part, g);
    let binary = cfg.method == Method::LabelProp;
    let eval = EvalReport::evaluate(truth.view(), run.scores.scores.view(), binary)
        .stage("evaluation")?
        .with_partition(&part);
    timing.record("eval", t0.elapsed().as_secs_f64());

    let report = RunReport {
        dataset: cfg.dataset_name(),
        method: cfg.method.as_str().to_string(),
        config: cfg.clone(),
        inputs: data.inputs.clone(),
        graph: GraphSummary {
            nodes: g.node_count(),
            edges: g.edge_count(),
            dim: g.dim(),
            directed: g.is_directed(),
            load: data.load.clone(),
        },
        partition: PartitionSummary::new(&part),
        method_config: run.scores.config.clone(),
        k: run.k,
        pca: run.pca.clone(),
        eval,
        trajectory: run.trajectory.as_ref().map(TrajectorySummary::new),
        converged: run.converged,
    };
    write_json(&dir.join("report.json"), &report)?;
    write_json(&dir.join("timing.json"), &timing)?;
    Ok(PipelineOutcome {
        report,
        timing,
        dir: dir.to_path_buf(),
    })
}

pub fn read_report(dir: &Path) -> Result<RunReport, CliError> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io {
        stage: "read report",
        message: format!("{}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Io {
        stage: "read report",
        message: format!("{}: {e}", path.display()),
    })
}

/// Missing or unreadable timing files are not an error: the cell is blank.
pub fn read_timing(dir: &Path) -> Option<Timing> {
    let text = fs::read_to_string(dir.join("timing.json")).ok()?;
    serde_json::from_str(&text).ok()
}
