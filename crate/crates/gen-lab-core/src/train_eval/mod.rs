//! Loss computation, training loops (weights-only and node positions),
//! evaluation reports and the mesh-optimization protocol.

mod evaluate;
mod optimize;
mod train;

pub use evaluate::{
    evaluate_gen, evaluate_np, generalization_probe, mse_on_scenarios, mse_on_scenarios_with, Split,
};
pub use optimize::{optimize_node_positions, MeshOptConfig, MeshOptRun};
pub use train::{gen_loss_and_grads, gen_scalar_loss, train_gen, train_np, TrainConfig, TrainRun};

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::autodiff::{write_atomic, AutodiffError, CheckpointError};
use crate::gen_model::ModelError;
use crate::geometry::GeometryError;
use crate::representation::RepresentationError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty train split")]
    EmptyTrainSplit,
    #[error("loss over an empty query set")]
    EmptyQuerySet,
    #[error("prediction/target counts differ: {preds} vs {targets}")]
    CountMismatch { preds: usize, targets: usize },
    #[error("non-finite loss at epoch {epoch}, step {step} (house {house}, scenario {scenario}, mesh k={mesh_k}): {source}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        house: usize,
        scenario: usize,
        mesh_k: usize,
        source: AutodiffError,
    },
    #[error("position optimization requires the soft-nearest representation on the unit square")]
    NeedsSoftNearest,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Representation(#[from] RepresentationError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed report: {0}")]
    MalformedReport(String),
}

/// Mean over query samples of the squared distance between prediction and
/// target (the metric every reported number uses).
pub fn sft_loss(predictions: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64, TrainError> {
    if predictions.len() != targets.len() {
        return Err(TrainError::CountMismatch {
            preds: predictions.len(),
            targets: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(TrainError::EmptyQuerySet);
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(total / predictions.len() as f64)
}

/// One evaluation line: a (model, mesh size, seed, split) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub mesh_k: usize,
    pub seed: u64,
    pub split: String,
    pub mse: f64,
    pub n_params: usize,
    pub wall_seconds: f64,
    pub extrapolation: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "model,mesh_k,seed,split,mse,n_params,wall_s,extrapolation";

    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.model,
                r.mesh_k,
                r.seed,
                r.split,
                r.mse,
                r.n_params,
                r.wall_seconds,
                r.extrapolation
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, TrainError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == Self::CSV_HEADER => {}
            other => {
                return Err(TrainError::MalformedReport(format!(
                    "unexpected header {other:?}"
                )))
            }
        }
        let mut rows = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 8 {
                return Err(TrainError::MalformedReport(format!(
                    "line {}: expected 8 fields, got {}",
                    ln + 2,
                    parts.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64, TrainError> {
                s.parse().map_err(|_| {
                    TrainError::MalformedReport(format!("line {}: bad {what} {s:?}", ln + 2))
                })
            };
            rows.push(EvalRow {
                model: parts[0].to_string(),
                mesh_k: parse(parts[1], "mesh_k")? as usize,
                seed: parse(parts[2], "seed")? as u64,
                split: parts[3].to_string(),
                mse: parse(parts[4], "mse")?,
                n_params: parse(parts[5], "n_params")? as usize,
                wall_seconds: parse(parts[6], "wall_s")?,
                extrapolation: parts[7].trim() == "true",
            });
        }
        Ok(EvalReport { rows })
    }

    pub fn write(&self, path: &Path) -> Result<(), TrainError> {
        write_atomic(path, self.to_csv().as_bytes()).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv(&text)
    }
}

/// Per-epoch training losses as CSV.
pub fn loss_history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    out
}
