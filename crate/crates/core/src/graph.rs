//! Directed labeled graph: ingestion, canonical dumps and degree queries.
//!
//! Node names from input files are remapped to dense ids `0..N` in order of
//! first appearance; the original names are kept for reporting.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    labels: Array2<u8>,
    names: Vec<String>,
    directed: bool,
    edge_count: usize,
}

/// What ingestion silently dropped or added.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub self_loops: usize,
    pub duplicate_edges: usize,
    /// Nodes that only appear in the label file.
    pub isolated_labeled: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub directed: bool,
    /// Label dimension. Inferred as `max index + 1` when absent.
    pub dim: Option<usize>,
}

/// JSON header written next to a canonical dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub nodes: usize,
    pub edges: usize,
    pub dim: usize,
    pub directed: bool,
}

impl LabeledGraph {
    /// Builds a graph from dense-id edges. Self-loops and duplicates are
    /// dropped and counted; undirected input is symmetrized.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize)],
        labels: Array2<u8>,
        directed: bool,
    ) -> Result<(Self, LoadReport)> {
        let names = (0..n).map(|i| i.to_string()).collect();
        Self::assemble(names, edges, labels, directed)
    }

    fn assemble(
        names: Vec<String>,
        edges: &[(usize, usize)],
        labels: Array2<u8>,
        directed: bool,
    ) -> Result<(Self, LoadReport)> {
        let n = names.len();
        if labels.nrows() != n {
            return Err(Error::Shape(format!(
                "label matrix has {} rows for {} nodes",
                labels.nrows(),
                n
            )));
        }
        if labels.ncols() == 0 {
            return Err(Error::Shape("label dimension must be at least 1".into()));
        }
        if labels.iter().any(|&b| b > 1) {
            return Err(Error::Shape("label entries must be 0 or 1".into()));
        }
        let mut report = LoadReport::default();
        let mut arcs = Vec::with_capacity(if directed { edges.len() } else { 2 * edges.len() });
        for &(s, t) in edges {
            if s >= n || t >= n {
                return Err(Error::Shape(format!("edge ({s}, {t}) outside 0..{n}")));
            }
            if s == t {
                report.self_loops += 1;
                continue;
            }
            arcs.push((s, t));
            if !directed {
                arcs.push((t, s));
            }
        }
        let before = arcs.len();
        arcs.sort_unstable();
        arcs.dedup();
        report.duplicate_edges = before - arcs.len();
        if !directed {
            // each undirected duplicate was counted twice
            report.duplicate_edges /= 2;
        }

        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for &(s, t) in &arcs {
            out_adj[s].push(t);
            in_adj[t].push(s);
        }
        for list in &mut in_adj {
            list.sort_unstable();
        }
        let graph = LabeledGraph {
            out_adj,
            in_adj,
            labels,
            names,
            directed,
            edge_count: arcs.len(),
        };
        Ok((graph, report))
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    /// Number of stored directed arcs.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn dim(&self) -> usize {
        self.labels.ncols()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Nodes `v` follows.
    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    /// Followers of `v`.
    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.in_adj[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_adj[v].len()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_adj[v].len()
    }

    pub fn labels(&self) -> &Array2<u8> {
        &self.labels
    }

    pub fn label_row(&self, v: usize) -> ArrayView1<'_, u8> {
        self.labels.row(v)
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Sorted union of in- and out-neighbors of every node.
    pub fn undirected_adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.node_count())
            .map(|v| {
                let mut all: Vec<usize> = self.out_adj[v]
                    .iter()
                    .chain(self.in_adj[v].iter())
                    .copied()
                    .collect();
                all.sort_unstable();
                all.dedup();
                all
            })
            .collect()
    }

    /// Nodes with out-degree at least `tau`, ascending.
    pub fn engaged_nodes(&self, tau: usize) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&v| self.out_degree(v) >= tau)
            .collect()
    }

    /// Writes `graph.json`, `labels.tsv` and `edges.tsv` into `dir`.
    pub fn write_dump(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = DumpHeader {
            nodes: self.node_count(),
            edges: self.edge_count,
            dim: self.dim(),
            directed: self.directed,
        };
        let header_path = dir.join("graph.json");
        let json = serde_json::to_string_pretty(&header).expect("header serializes");
        fs::write(&header_path, json + "\n").map_err(|e| Error::io(&header_path, e))?;

        let labels_path = dir.join("labels.tsv");
        write_lines(&labels_path, |w| {
            for v in 0..self.node_count() {
                writeln!(w, "{}\t{}", self.names[v], format_label_row(self.label_row(v)))?;
            }
            Ok(())
        })?;

        let edges_path = dir.join("edges.tsv");
        write_lines(&edges_path, |w| {
            for (s, outs) in self.out_adj.iter().enumerate() {
                for &t in outs {
                    writeln!(w, "{}\t{}", self.names[s], self.names[t])?;
                }
            }
            Ok(())
        })
    }
}

fn format_label_row(row: ArrayView1<'_, u8>) -> String {
    let ones: Vec<String> = row
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .map(|(i, _)| i.to_string())
        .collect();
    if ones.is_empty() {
        "-".to_string()
    } else {
        ones.join(",")
    }
}

fn write_lines(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Default)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn id(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn parse_edges(path: &Path, interner: &mut Interner) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let mut fields = line.split('\t');
        let (Some(src), Some(dst), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected \"src<TAB>dst\", got {line:?}"),
            });
        };
        let (src, dst) = (src.trim(), dst.trim());
        if src.is_empty() || dst.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: "empty node id".into(),
            });
        }
        edges.push((interner.id(src), interner.id(dst)));
    }
    Ok(edges)
}

struct LabelLine {
    line: usize,
    node: usize,
    ones: Vec<usize>,
}

fn parse_labels(path: &Path, interner: &mut Interner) -> Result<Vec<LabelLine>> {
    let mut rows = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let (node, rest) = match line.split_once('\t') {
            Some((node, rest)) => (node.trim(), rest.trim()),
            None => (line.as_str(), ""),
        };
        if node.is_empty() {
            return Err(parse_err("empty node id".into()));
        }
        let ones = if rest.is_empty() || rest == "-" {
            Vec::new()
        } else {
            rest.split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<usize>()
                        .map_err(|_| parse_err(format!("bad label index {tok:?}")))
                })
                .collect::<Result<Vec<_>>>()?
        };
        rows.push(LabelLine {
            line: line_no,
            node: interner.id(node),
            ones,
        });
    }
    Ok(rows)
}

fn label_matrix(path: &Path, n: usize, dim: Option<usize>, rows: &[LabelLine]) -> Result<Array2<u8>> {
    let dim = match dim {
        Some(d) => d,
        None => rows
            .iter()
            .flat_map(|r| r.ones.iter().copied())
            .max()
            .map_or(1, |m| m + 1),
    };
    let mut labels = Array2::<u8>::zeros((n, dim));
    for row in rows {
        for &i in &row.ones {
            if i >= dim {
                return Err(Error::LabelBounds {
                    path: path.to_path_buf(),
                    line: row.line,
                    index: i,
                    dim,
                });
            }
            labels[[row.node, i]] = 1;
        }
    }
    Ok(labels)
}

/// Loads an edge list (`src<TAB>dst`) and a label file (`node<TAB>i1,i2,...`
/// or `node<TAB>-`). Nodes present only in the label file become isolated.
pub fn load_graph(
    edges_path: &Path,
    labels_path: &Path,
    opts: LoadOptions,
) -> Result<(LabeledGraph, LoadReport)> {
    let mut interner = Interner::default();
    let edges = parse_edges(edges_path, &mut interner)?;
    let seen_in_edges = interner.names.len();
    let label_rows = parse_labels(labels_path, &mut interner)?;
    let n = interner.names.len();
    let labels = label_matrix(labels_path, n, opts.dim, &label_rows)?;
    let (graph, mut report) = LabeledGraph::assemble(interner.names, &edges, labels, opts.directed)?;
    report.isolated_labeled = n - seen_in_edges;
    Ok((graph, report))
}

/// Reloads a directory produced by [`LabeledGraph::write_dump`].
pub fn load_dump(dir: &Path) -> Result<LabeledGraph> {
    let header_path = dir.join("graph.json");
    let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: DumpHeader = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: header_path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let labels_path = dir.join("labels.tsv");
    let edges_path = dir.join("edges.tsv");
    // labels first: the dump lists every node in dense-id order there
    let mut interner = Interner::default();
    let label_rows = parse_labels(&labels_path, &mut interner)?;
    let edges = parse_edges(&edges_path, &mut interner)?;
    let n = interner.names.len();
    if n != header.nodes {
        return Err(Error::Shape(format!(
            "header declares {} nodes, files hold {n}",
            header.nodes
        )));
    }
    let labels = label_matrix(&labels_path, n, Some(header.dim), &label_rows)?;
    // arcs are stored explicitly; never re-symmetrize
    let (mut graph, _) = LabeledGraph::assemble(interner.names, &edges, labels, true)?;
    graph.directed = header.directed;
    if graph.edge_count != header.edges {
        return Err(Error::Shape(format!(
            "header declares {} edges, files hold {}",
            header.edges, graph.edge_count
        )));
    }
    Ok(graph)
}

/// Loads one SNAP facebook ego network (`<ego>.edges`, `<ego>.feat`,
/// `<ego>.egofeat`). Alter friendships are symmetrized; the ego keeps its
/// incoming links from every alter and loses its outgoing ones.
pub fn load_snap_ego(dir: &Path, ego: &str) -> Result<(LabeledGraph, LoadReport)> {
    let feat_path: PathBuf = dir.join(format!("{ego}.feat"));
    let egofeat_path: PathBuf = dir.join(format!("{ego}.egofeat"));
    let edges_path: PathBuf = dir.join(format!("{ego}.edges"));

    let mut interner = Interner::default();
    let ego_id = interner.id(ego);
    let mut feature_rows: Vec<(usize, Vec<u8>)> = Vec::new();

    let egofeat = read_lines(&egofeat_path)?;
    let Some((line_no, ego_line)) = egofeat.first() else {
        return Err(Error::Parse {
            path: egofeat_path,
            line: 1,
            message: "missing ego feature row".into(),
        });
    };
    feature_rows.push((ego_id, parse_bits(&egofeat_path, *line_no, ego_line.split_whitespace())?));

    for (line_no, line) in read_lines(&feat_path)? {
        let mut fields = line.split_whitespace();
        let Some(node) = fields.next() else { continue };
        let id = interner.id(node);
        feature_rows.push((id, parse_bits(&feat_path, line_no, fields)?));
    }
    let dim = feature_rows[0].1.len();
    if let Some((id, bad)) = feature_rows.iter().find(|(_, r)| r.len() != dim) {
        return Err(Error::Shape(format!(
            "node {} has {} features, expected {dim}",
            interner.names[*id],
            bad.len()
        )));
    }

    let mut arcs = Vec::new();
    for (line_no, line) in read_lines(&edges_path)? {
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b)) = (fields.next(), fields.next()) else {
            return Err(Error::Parse {
                path: edges_path.clone(),
                line: line_no,
                message: format!("expected two node ids, got {line:?}"),
            });
        };
        let (a, b) = (interner.id(a), interner.id(b));
        arcs.push((a, b));
        arcs.push((b, a));
    }
    let n = interner.names.len();
    for v in 0..n {
        if v != ego_id {
            arcs.push((v, ego_id));
        }
    }
    let mut labels = Array2::<u8>::zeros((n, dim));
    for (id, row) in feature_rows {
        for (i, b) in row.into_iter().enumerate() {
            labels[[id, i]] = b;
        }
    }
    LabeledGraph::assemble(interner.names, &arcs, labels, true)
}

fn parse_bits<'a>(path: &Path, line: usize, fields: impl Iterator<Item = &'a str>) -> Result<Vec<u8>> {
    fields
        .map(|tok| match tok {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected 0/1 feature, got {other:?}"),
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_edge_example() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "a\tb\nb\tc\na\tc\n");
        let l = write(dir.path(), "l.tsv", "a\t0\nb\t1\nc\t-\n");
        let (g, report) = load_graph(&e, &l, LoadOptions { directed: true, dim: Some(2) }).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.labels(), &array![[1u8, 0], [0, 1], [0, 0]]);
        assert_eq!(report, LoadReport::default());
        assert_eq!(g.out_neighbors(0), &[1, 2]);
        assert_eq!(g.in_neighbors(2), &[0, 1]);
    }

    #[test]
    fn empty_edge_file_gives_isolated_nodes() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "# nothing here\n");
        let l = write(dir.path(), "l.tsv", "x\t0,2\ny\t-\n");
        let (g, report) = load_graph(&e, &l, LoadOptions::default()).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.dim(), 3);
        assert_eq!(report.isolated_labeled, 2);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "a\tb\n# c\nbroken line\n");
        let l = write(dir.path(), "l.tsv", "a\t-\n");
        match load_graph(&e, &l, LoadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_index_out_of_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "a\tb\n");
        let l = write(dir.path(), "l.tsv", "a\t0\nb\t2\n");
        let err = load_graph(&e, &l, LoadOptions { directed: true, dim: Some(2) }).unwrap_err();
        assert!(matches!(err, Error::LabelBounds { line: 2, index: 2, dim: 2, .. }));
    }

    #[test]
    fn undirected_symmetrized_loops_and_duplicates_dropped() {
        let labels = Array2::zeros((3, 1));
        let (g, report) =
            LabeledGraph::from_edges(3, &[(0, 1), (1, 0), (2, 2), (1, 2)], labels, false).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert_eq!(report.self_loops, 1);
        assert_eq!(report.duplicate_edges, 1);
        assert_eq!(g.out_neighbors(1), &[0, 2]);
    }

    #[test]
    fn engaged_on_star() {
        // leaves 1..=4 follow hub 0
        let edges: Vec<_> = (1..5).map(|l| (l, 0)).collect();
        let (g, _) = LabeledGraph::from_edges(5, &edges, Array2::zeros((5, 1)), true).unwrap();
        assert_eq!(g.engaged_nodes(1), vec![1, 2, 3, 4]);
        assert_eq!(g.engaged_nodes(0), vec![0, 1, 2, 3, 4]);
        assert!(g.engaged_nodes(2).is_empty());
    }

    #[test]
    fn dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "q\tz\nz\tp\np\tq\nz\tq\n");
        let l = write(dir.path(), "l.tsv", "p\t1\nlonely\t0,1\n");
        let (g, _) = load_graph(&e, &l, LoadOptions { directed: false, dim: None }).unwrap();
        let dump = dir.path().join("dump");
        g.write_dump(&dump).unwrap();
        let again = load_dump(&dump).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn snap_ego_layout() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "7.egofeat", "1 0 1\n");
        write(dir.path(), "7.feat", "10 0 1 0\n11 1 1 0\n12 0 0 1\n");
        write(dir.path(), "7.edges", "10 11\n11 12\n");
        let (g, _) = load_snap_ego(dir.path(), "7").unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.dim(), 3);
        // 2 undirected friendships + 3 alters following the ego
        assert_eq!(g.edge_count(), 7);
        assert_eq!(g.out_degree(0), 0);
        assert_eq!(g.in_degree(0), 3);
        assert_eq!(g.label_row(0).to_vec(), vec![1, 0, 1]);
    }
}
