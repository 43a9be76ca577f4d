//! CSV and JSON writers for experiment output.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::Landscape;
use crate::error::Result;
use crate::network::Activation;
use crate::trainers::{Algorithm, StopReason, TrainRecord};

/// Architecture labels attached to each CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLabel {
    pub depth: usize,
    pub activation: Activation,
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Per-batch rows: `step,train_loss,test_loss,energy,algorithm,lr,depth,activation,seed`.
/// `energy` is empty for algorithms without one.
pub fn write_records_csv<'a, W: Write>(out: W, records: impl IntoIterator<Item = (&'a TrainRecord, RunLabel)>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["step", "train_loss", "test_loss", "energy", "algorithm", "lr", "depth", "activation", "seed"])?;
    for (rec, label) in records {
        for step in 0..rec.batches() {
            let energy = rec.energy.get(step).copied().flatten().map(fmt).unwrap_or_default();
            wtr.write_record([
                step.to_string(),
                fmt(rec.train_loss[step]),
                fmt(rec.test_loss[step]),
                energy,
                rec.config.algorithm.to_string(),
                fmt(rec.config.learning_rate),
                label.depth.to_string(),
                label.activation.to_string(),
                rec.config.seed.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Per-epoch rows: `epoch,train_loss,test_loss,algorithm,lr,depth,seed`.
pub fn write_epochs_csv<'a, W: Write>(out: W, records: impl IntoIterator<Item = (&'a TrainRecord, RunLabel)>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["epoch", "train_loss", "test_loss", "algorithm", "lr", "depth", "seed"])?;
    for (rec, label) in records {
        for (i, l) in rec.epoch_loss.iter().enumerate() {
            let test = rec.epoch_test_loss.get(i).copied().map(fmt).unwrap_or_default();
            wtr.write_record([
                (i + 1).to_string(),
                fmt(*l),
                test,
                rec.config.algorithm.to_string(),
                fmt(rec.config.learning_rate),
                label.depth.to_string(),
                rec.config.seed.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Weight trajectory rows: `step,algorithm,seed,w1,w2,...`.
pub fn write_trajectory_csv<W: Write>(out: W, records: &[TrainRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let width = records.iter().flat_map(|r| r.weight_trace.first()).map(Vec::len).max().unwrap_or(0);
    let mut header = vec!["step".to_string(), "algorithm".into(), "seed".into()];
    header.extend((1..=width).map(|i| format!("w{i}")));
    wtr.write_record(&header)?;
    for rec in records {
        for (step, w) in rec.weight_trace.iter().enumerate() {
            let mut row = vec![step.to_string(), rec.config.algorithm.to_string(), rec.config.seed.to_string()];
            row.extend(w.iter().map(|v| fmt(*v)));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Grid rows: `w1,w2,value,descent_w1,descent_w2`.
pub fn write_landscape_csv<W: Write>(out: W, landscape: &Landscape) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["w1", "w2", "value", "descent_w1", "descent_w2"])?;
    for (i, a) in landscape.w1.iter().enumerate() {
        for (j, b) in landscape.w2.iter().enumerate() {
            let d = landscape.descent[i][j];
            wtr.write_record([fmt(*a), fmt(*b), fmt(landscape.values[i][j]), fmt(d[0]), fmt(d[1])])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Write any serializable rows with a header taken from the field names.
pub fn write_serialized_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Outcome of one training run, for JSON summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub seed: u64,
    pub depth: usize,
    pub activation: Activation,
    pub stop_reason: StopReason,
    pub batches: usize,
    pub batches_to_train_tol: Option<usize>,
    pub batches_to_test_tol: Option<usize>,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub epochs: usize,
    pub winner: bool,
}

impl RecordSummary {
    pub fn new(rec: &TrainRecord, label: RunLabel, winner: bool) -> Self {
        Self {
            algorithm: rec.config.algorithm,
            learning_rate: rec.config.learning_rate,
            seed: rec.config.seed,
            depth: label.depth,
            activation: label.activation,
            stop_reason: rec.stop_reason,
            batches: rec.batches(),
            batches_to_train_tol: rec.config.stop_train_loss.and_then(|t| rec.batches_to_train_loss(t)),
            batches_to_test_tol: rec.config.stop_test_loss.and_then(|t| rec.batches_to_test_loss(t)),
            final_train_loss: rec.final_train_loss(),
            final_test_loss: *rec.test_loss.last().unwrap_or(&f64::INFINITY),
            epochs: rec.epoch_loss.len(),
            winner,
        }
    }
}
