//! Evaluation of score matrices against binary ground truth.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::core_extract::CorePartition;
use crate::error::{Error, Result};
use crate::graph::LabeledGraph;

/// Ground-truth label rows of the periphery, in partition order.
pub fn truth_matrix(part: &CorePartition, g: &LabeledGraph) -> Array2<u8> {
    let mut m = Array2::zeros((part.periphery.len(), g.dim()));
    for (r, &u) in part.periphery.iter().enumerate() {
        m.row_mut(r).assign(&g.label_row(u));
    }
    m
}

fn check_shapes<A, B>(truth: &ArrayView2<'_, A>, scores: &ArrayView2<'_, B>) -> Result<()> {
    if truth.dim() != scores.dim() {
        return Err(Error::Shape(format!(
            "truth is {:?} but scores are {:?}",
            truth.dim(),
            scores.dim()
        )));
    }
    Ok(())
}

/// Micro-averaged AUC-ROC in percent over the cells of the selected label
/// columns (all columns when `labels` is `None`). Ties earn half credit.
pub fn auc_micro(
    truth: ArrayView2<'_, u8>,
    scores: ArrayView2<'_, f64>,
    labels: Option<&[usize]>,
) -> Result<f64> {
    check_shapes(&truth, &scores)?;
    let all: Vec<usize>;
    let cols = match labels {
        Some(l) => l,
        None => {
            all = (0..truth.ncols()).collect();
            &all
        }
    };
    let mut cells: Vec<(f64, bool)> = Vec::with_capacity(truth.nrows() * cols.len());
    for u in 0..truth.nrows() {
        for &i in cols {
            cells.push((scores[[u, i]], truth[[u, i]] != 0));
        }
    }
    let positives = cells.iter().filter(|c| c.1).count();
    let negatives = cells.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Degenerate(format!(
            "AUC needs both classes; got {positives} positive and {negatives} negative cells"
        )));
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sum of (1-based, tie-averaged) ranks of the positive cells
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < cells.len() {
        let mut end = start + 1;
        while end < cells.len() && cells[end].0 == cells[start].0 {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = cells[start..end].iter().filter(|c| c.1).count();
        rank_sum += avg_rank * pos_in_group as f64;
        start = end;
    }
    let p = positives as f64;
    let auc = (rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64);
    Ok(100.0 * auc)
}

/// `d^{-1/2} ||mean_u truth - mean_u scores||_2`.
pub fn rmse_macro(truth: ArrayView2<'_, u8>, scores: ArrayView2<'_, f64>) -> Result<f64> {
    check_shapes(&truth, &scores)?;
    let d = truth.ncols();
    if truth.nrows() == 0 || d == 0 {
        return Err(Error::Degenerate("empty matrices".into()));
    }
    let t = truth.mapv(f64::from).mean_axis(Axis(0)).expect("rows");
    let s = scores.mean_axis(Axis(0)).expect("rows");
    let sq: f64 = t.iter().zip(s.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / d as f64).sqrt())
}

/// Micro F1 in percent over all cells.
pub fn f1_micro(truth: ArrayView2<'_, u8>, pred: ArrayView2<'_, u8>) -> Result<f64> {
    check_shapes(&truth, &pred)?;
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&t, &p) in truth.iter().zip(pred.iter()) {
        match (t != 0, p != 0) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fne += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fne == 0 {
        log::warn!("F1 undefined: no predicted and no true positives; reporting 0");
        return Ok(0.0);
    }
    Ok(100.0 * 2.0 * tp as f64 / (2 * tp + fp + fne) as f64)
}

/// The `ceil(d/2)` most prevalent labels (ties to the lower index), ascending.
pub fn top50_label_set(truth: ArrayView2<'_, u8>) -> Vec<usize> {
    let d = truth.ncols();
    let counts: Vec<usize> = (0..d)
        .map(|i| truth.column(i).iter().filter(|&&b| b != 0).count())
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(d.div_ceil(2)).collect();
    keep.sort_unstable();
    keep
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_all: Option<f64>,
    pub auc_top50: Option<f64>,
    pub rmse_macro: Option<f64>,
    pub f1_micro: Option<f64>,
    pub coverage: Option<f64>,
    pub core_fraction: Option<f64>,
    pub bipartite_edge_fraction: Option<f64>,
    pub runtime_s: Option<f64>,
}

impl EvalReport {
    /// Scores every metric that applies. Binary predictions get F1 as well.
    pub fn evaluate(truth: ArrayView2<'_, u8>, scores: ArrayView2<'_, f64>, binary: bool) -> Result<Self> {
        let top = top50_label_set(truth);
        let auc_all = optional(auc_micro(truth, scores, None))?;
        let auc_top50 = optional(auc_micro(truth, scores, Some(&top)))?;
        let rmse = rmse_macro(truth, scores)?;
        let f1 = if binary {
            let pred = scores.mapv(|v| u8::from(v >= 0.5));
            Some(f1_micro(truth, pred.view())?)
        } else {
            None
        };
        Ok(EvalReport {
            auc_all,
            auc_top50,
            rmse_macro: Some(rmse),
            f1_micro: f1,
            ..EvalReport::default()
        })
    }

    pub fn with_partition(mut self, part: &CorePartition) -> Self {
        self.coverage = Some(100.0 * part.coverage_fraction);
        self.core_fraction = Some(100.0 * part.core_fraction);
        self.bipartite_edge_fraction = Some(100.0 * part.bipartite_edge_fraction);
        self
    }
}

/// Degenerate AUC becomes a missing cell; other errors propagate.
fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Degenerate(msg)) => {
            log::warn!("{msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}
