//! Run configuration: a flat `key = value` file, overridden by `--set`
//! pairs and explicit flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nnim::knn::{IndexMode, KPolicy, LshConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Where the graph comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// `edges` (src TAB dst) plus `labels` (node TAB i1,i2,...).
    EdgeList,
    /// A directory written by `LabeledGraph::write_dump`.
    Dump,
    /// One SNAP facebook ego network: `snap_dir` and `ego`.
    Snap,
    /// Synthetic homophilic two-block graph.
    TwoBlock,
}

impl FromStr for Source {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "edges" | "edge-list" => Ok(Source::EdgeList),
            "dump" => Ok(Source::Dump),
            "snap" => Ok(Source::Snap),
            "two-block" => Ok(Source::TwoBlock),
            _ => Err(CliError::Config(format!("unknown source {s:?} (edges, dump, snap, two-block)"))),
        }
    }
}

impl Source {
    fn as_str(self) -> &'static str {
        match self {
            Source::EdgeList => "edges",
            Source::Dump => "dump",
            Source::Snap => "snap",
            Source::TwoBlock => "two-block",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Mean-field inference, unregularized.
    Nnim,
    /// Mean-field inference anchored to the initialization with `reg_alpha`.
    NnimReg,
    CfBipartite,
    CfDynamic,
    LabelProp,
    RandomHk,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Nnim,
        Method::NnimReg,
        Method::CfBipartite,
        Method::CfDynamic,
        Method::LabelProp,
        Method::RandomHk,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nnim => "nnim",
            Method::NnimReg => "nnim-reg",
            Method::CfBipartite => "cf-bipartite",
            Method::CfDynamic => "cf-dynamic",
            Method::LabelProp => "label-prop",
            Method::RandomHk => "random-hk",
        }
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CliError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: Option<String>,
    pub source: Option<Source>,
    pub edges: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub dump: Option<PathBuf>,
    pub snap_dir: Option<PathBuf>,
    pub ego: String,
    pub directed: bool,
    pub dim: Option<usize>,
    pub synth_nodes: usize,
    pub synth_dim: usize,

    /// Core budget exponent: `K = ceil(N^p)`.
    pub p: f64,
    /// Explicit core budget; overrides `p`.
    pub budget: Option<usize>,
    pub gamma: f64,
    pub tau: usize,

    pub method: Method,
    pub k: KPolicy,
    /// Stopping threshold `D` on the displacement.
    pub threshold: f64,
    pub alpha: f64,
    pub reg_alpha: f64,
    pub pca: Option<f64>,
    pub exact_index: bool,
    pub trees: usize,
    pub leaf: usize,
    /// Stopping threshold of the stochastic simulator.
    pub epsilon: f64,
    pub seed: u64,
    pub max_steps: usize,
    pub hk_radius: Option<f64>,
    pub lp_rounds: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: None,
            source: None,
            edges: None,
            labels: None,
            dump: None,
            snap_dir: None,
            ego: "107".into(),
            directed: true,
            dim: None,
            synth_nodes: 1230,
            synth_dim: 43,
            p: 0.7,
            budget: None,
            gamma: 2.0,
            tau: 4,
            method: Method::Nnim,
            k: KPolicy::Log,
            threshold: 1e-3,
            alpha: 0.0,
            reg_alpha: 1.0,
            pca: Some(0.95),
            exact_index: false,
            trees: 10,
            leaf: 64,
            epsilon: 1e-3,
            seed: 17,
            max_steps: 100,
            hk_radius: None,
            lp_rounds: 100,
            out: PathBuf::from("runs"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key} = {value:?}: {e}")))
}

/// `none` (or an empty value) clears an optional setting.
fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "name" => self.name = optional(key, v)?,
            "source" => self.source = optional(key, v)?,
            "edges" => self.edges = optional(key, v)?,
            "labels" => self.labels = optional(key, v)?,
            "dump" => self.dump = optional(key, v)?,
            "snap_dir" => self.snap_dir = optional(key, v)?,
            "ego" => self.ego = v.to_string(),
            "directed" => self.directed = parse(key, v)?,
            "dim" => self.dim = optional(key, v)?,
            "synth_nodes" => self.synth_nodes = parse(key, v)?,
            "synth_dim" => self.synth_dim = parse(key, v)?,
            "p" => self.p = parse(key, v)?,
            "budget" => self.budget = optional(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "method" => self.method = v.parse()?,
            "k" => self.k = v.parse().map_err(|e| CliError::Config(format!("k = {v:?}: {e}")))?,
            "threshold" | "D" => self.threshold = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "reg_alpha" => self.reg_alpha = parse(key, v)?,
            "pca" => self.pca = optional(key, v)?,
            "index" => {
                self.exact_index = match v {
                    "exact" => true,
                    "lsh" => false,
                    _ => return Err(CliError::Config(format!("index = {v:?}: expected exact or lsh"))),
                }
            }
            "trees" => self.trees = parse(key, v)?,
            "leaf" => self.leaf = parse(key, v)?,
            "epsilon" => self.epsilon = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "max_steps" => self.max_steps = parse(key, v)?,
            "hk_radius" => self.hk_radius = optional(key, v)?,
            "lp_rounds" => self.lp_rounds = parse(key, v)?,
            "out" => self.out = parse(key, v)?,
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, pair: &str) -> Result<(), CliError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {pair:?}")))?;
        self.set(key, value)
    }

    /// Every key, in the file format. Parsing the result gives back `self`.
    pub fn to_text(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
        }
        fn path(v: &Option<PathBuf>) -> String {
            v.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
        }
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("name", opt(&self.name));
        kv("source", self.source.map_or_else(|| "none".into(), |s| s.as_str().into()));
        kv("edges", path(&self.edges));
        kv("labels", path(&self.labels));
        kv("dump", path(&self.dump));
        kv("snap_dir", path(&self.snap_dir));
        kv("ego", self.ego.clone());
        kv("directed", self.directed.to_string());
        kv("dim", opt(&self.dim));
        kv("synth_nodes", self.synth_nodes.to_string());
        kv("synth_dim", self.synth_dim.to_string());
        kv("p", self.p.to_string());
        kv("budget", opt(&self.budget));
        kv("gamma", self.gamma.to_string());
        kv("tau", self.tau.to_string());
        kv("method", self.method.as_str().into());
        kv("k", self.k.to_string());
        kv("threshold", self.threshold.to_string());
        kv("alpha", self.alpha.to_string());
        kv("reg_alpha", self.reg_alpha.to_string());
        kv("pca", opt(&self.pca));
        kv("index", if self.exact_index { "exact" } else { "lsh" }.into());
        kv("trees", self.trees.to_string());
        kv("leaf", self.leaf.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("seed", self.seed.to_string());
        kv("max_steps", self.max_steps.to_string());
        kv("hk_radius", opt(&self.hk_radius));
        kv("lp_rounds", self.lp_rounds.to_string());
        kv("out", self.out.display().to_string());
        s
    }

    /// The source in effect: explicit, or inferred from which paths are set.
    pub fn resolved_source(&self) -> Result<Source, CliError> {
        if let Some(s) = self.source {
            return Ok(s);
        }
        if self.edges.is_some() || self.labels.is_some() {
            Ok(Source::EdgeList)
        } else if self.dump.is_some() {
            Ok(Source::Dump)
        } else if self.snap_dir.is_some() {
            Ok(Source::Snap)
        } else {
            Err(CliError::Config(
                "no dataset: set edges+labels, dump, snap_dir, or source = two-block".into(),
            ))
        }
    }

    /// Name used for the dataset column of result tables.
    pub fn dataset_name(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        let stem = |p: &Option<PathBuf>| {
            p.as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
        };
        match self.resolved_source() {
            Ok(Source::Snap) => format!("facebook-{}", self.ego),
            Ok(Source::TwoBlock) => format!("two-block-{}", self.synth_nodes),
            Ok(Source::Dump) => stem(&self.dump).unwrap_or_else(|| "dump".into()),
            Ok(Source::EdgeList) => stem(&self.edges).unwrap_or_else(|| "edges".into()),
            Err(_) => "unknown".into(),
        }
    }

    pub fn index(&self) -> IndexMode {
        if self.exact_index {
            IndexMode::Exact
        } else {
            IndexMode::Lsh(LshConfig {
                trees: self.trees,
                leaf_capacity: self.leaf,
            })
        }
    }

    /// Range checks that do not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p must lie in (0, 1], got {}", self.p));
        }
        if !(self.gamma > 1.0) {
            return bad(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(self.threshold >= 0.0) || !(self.epsilon >= 0.0) {
            return bad("thresholds must be non-negative".into());
        }
        if !(self.alpha >= 0.0) || !(self.reg_alpha >= 0.0) {
            return bad("alpha must be non-negative".into());
        }
        if let Some(v) = self.pca {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("pca must lie in (0, 1], got {v}"));
            }
        }
        if self.budget == Some(0) {
            return bad("budget must be at least 1".into());
        }
        if self.trees == 0 || self.leaf == 0 {
            return bad("trees and leaf must be positive".into());
        }
        Ok(())
    }
}
