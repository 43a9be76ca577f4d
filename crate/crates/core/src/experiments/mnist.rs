//! Wide linear networks on an MNIST subset: epochs needed by PC to reach the
//! training loss BP has after a fixed number of epochs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::energy::InferenceSchedule;
use crate::error::{Error, Result};
use crate::network::{Activation, NetworkSpec};
use crate::trainers::{train_epochs, Algorithm, StopReason, TrainConfig, TrainRecord, WeightInit, LR_GRID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnistConfig {
    pub data_dir: PathBuf,
    pub train_limit: usize,
    pub test_limit: usize,
    pub width: usize,
    /// Number of hidden layers.
    pub depths: Vec<usize>,
    pub lr_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    /// Epoch whose BP training loss is the target for PC.
    pub target_epoch: usize,
    /// Epoch budget for both algorithms.
    pub max_epochs: usize,
    pub inference: InferenceSchedule,
    pub init: WeightInit,
    /// Learning rates are chosen by training `tune_epochs` epochs on the first
    /// `tune_train_limit` training samples with `tune_seed`.
    pub tune_epochs: usize,
    pub tune_train_limit: usize,
    pub tune_seed: u64,
}

impl Default for MnistConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data/mnist"),
            train_limit: 10_000,
            test_limit: 2_000,
            width: 64,
            depths: vec![5, 10],
            lr_grid: LR_GRID.to_vec(),
            seeds: vec![0, 1, 2],
            batch_size: 64,
            target_epoch: 5,
            max_epochs: 5,
            inference: InferenceSchedule::wide(),
            init: WeightInit::FanIn,
            tune_epochs: 1,
            tune_train_limit: 10_000,
            tune_seed: 0,
        }
    }
}

impl MnistConfig {
    pub fn spec(&self, depth: usize) -> Result<NetworkSpec> {
        NetworkSpec::mlp(784, &vec![self.width; depth], 10, Activation::Linear)
    }

    fn train_config(&self, algorithm: Algorithm, learning_rate: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            algorithm,
            learning_rate,
            batch_size: self.batch_size,
            inference: self.inference,
            init: self.init,
            seed,
            ..TrainConfig::default()
        }
    }
}

/// Final tuning loss of one (algorithm, lr) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub final_loss: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    /// BP's training loss at the target epoch (or its last epoch if it stopped earlier).
    pub target: f64,
    pub bp_epochs: Option<usize>,
    pub pc_epochs: Option<usize>,
}

impl SeedComparison {
    pub fn pc_faster(&self) -> bool {
        match (self.pc_epochs, self.bp_epochs) {
            (Some(pc), Some(bp)) => pc < bp,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MnistDepthResult {
    pub depth: usize,
    pub tuning: Vec<TuningRow>,
    pub bp_lr: f64,
    pub pc_lr: f64,
    pub runs: Vec<TrainRecord>,
    pub comparisons: Vec<SeedComparison>,
}

impl MnistDepthResult {
    pub fn pc_wins(&self) -> usize {
        self.comparisons.iter().filter(|c| c.pc_faster()).count()
    }
}

fn pick_lr(rows: &[TuningRow], algorithm: Algorithm) -> Result<f64> {
    rows.iter()
        .filter(|r| r.algorithm == algorithm && r.final_loss.is_finite() && r.stop_reason != StopReason::Diverged)
        .min_by(|a, b| a.final_loss.total_cmp(&b.final_loss))
        .map(|r| r.learning_rate)
        .ok_or_else(|| Error::NonFinite(format!("every {algorithm} learning rate diverged")))
}

pub fn run_mnist_depth(cfg: &MnistConfig, data: &Dataset, depth: usize) -> Result<MnistDepthResult> {
    let spec = cfg.spec(depth)?;
    let tune_data = Dataset {
        train: data.train.slice(0, cfg.tune_train_limit.min(data.train.len())),
        test: data.test.clone(),
        normalization: data.normalization.clone(),
    };
    let mut tuning = Vec::new();
    for alg in [Algorithm::Bp, Algorithm::Pc] {
        for &lr in &cfg.lr_grid {
            let tc = cfg.train_config(alg, lr, cfg.tune_seed);
            let w0 = tc.init.sample(&spec, cfg.tune_seed);
            let rec = train_epochs(&spec, &tc, &tune_data, w0, cfg.tune_epochs)?;
            let final_loss = rec.epoch_loss.last().copied().unwrap_or(f64::INFINITY);
            tuning.push(TuningRow { algorithm: alg, learning_rate: lr, final_loss, stop_reason: rec.stop_reason });
        }
    }
    let bp_lr = pick_lr(&tuning, Algorithm::Bp)?;
    let pc_lr = pick_lr(&tuning, Algorithm::Pc)?;

    let mut runs = Vec::new();
    let mut comparisons = Vec::new();
    for &seed in &cfg.seeds {
        let tc = cfg.train_config(Algorithm::Bp, bp_lr, seed);
        let bp = train_epochs(&spec, &tc, data, tc.init.sample(&spec, seed), cfg.max_epochs)?;
        let idx = cfg.target_epoch.min(bp.epoch_loss.len()).max(1) - 1;
        let target = bp.epoch_loss.get(idx).copied().unwrap_or(f64::INFINITY);
        let bp_epochs = bp.epochs_to_loss(target);

        let tc = TrainConfig { stop_train_loss: Some(target), ..cfg.train_config(Algorithm::Pc, pc_lr, seed) };
        let pc = train_epochs(&spec, &tc, data, tc.init.sample(&spec, seed), cfg.max_epochs)?;
        let pc_epochs = pc.epochs_to_loss(target);
        comparisons.push(SeedComparison { seed, target, bp_epochs, pc_epochs });
        runs.push(bp);
        runs.push(pc);
    }
    Ok(MnistDepthResult { depth, tuning, bp_lr, pc_lr, runs, comparisons })
}

pub fn run_mnist(cfg: &MnistConfig) -> Result<Vec<MnistDepthResult>> {
    let data = Dataset::mnist_dir(&cfg.data_dir, cfg.train_limit, cfg.test_limit)?;
    cfg.depths.iter().map(|&d| run_mnist_depth(cfg, &data, d)).collect()
}
