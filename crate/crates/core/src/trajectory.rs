//! Convergence traces shared by the stochastic simulator, the mean-field
//! inference and the iterative baselines.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Stopping test for a displacement against a threshold. Strict below a
/// positive threshold; an exact fixed point always stops.
pub fn within_tolerance(displacement: f64, threshold: f64) -> bool {
    displacement < threshold || displacement == 0.0
}

/// Entrywise L1 distance `||a - b||_{1,1}`.
pub fn l11_distance(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Euclidean norm of the column means of `m`.
pub fn macro_mean_norm(m: ArrayView2<'_, f64>) -> f64 {
    match m.mean_axis(Axis(0)) {
        Some(mu) => mu.iter().map(|x| x * x).sum::<f64>().sqrt(),
        None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// `t` of the transition `t -> t + 1`.
    pub step: usize,
    pub displacement: f64,
    pub macro_mean_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    /// First `t` whose displacement met the threshold.
    pub stopping_step: Option<usize>,
    #[serde(skip)]
    pub snapshots: Vec<(usize, Array2<f64>)>,
}

impl Trajectory {
    pub fn converged(&self) -> bool {
        self.stopping_step.is_some()
    }

    pub fn steps_executed(&self) -> usize {
        self.records.len()
    }

    pub fn final_displacement(&self) -> Option<f64> {
        self.records.last().map(|r| r.displacement)
    }

    pub fn displacements(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.displacement).collect()
    }

    pub fn write_tsv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "step\tdisplacement\tmacro_mean_norm")?;
        for r in &self.records {
            writeln!(w, "{}\t{:.12e}\t{:.12e}", r.step, r.displacement, r.macro_mean_norm)?;
        }
        Ok(())
    }
}
