//! Depth × activation sweep over width-1 chains with a learning-rate grid
//! search per algorithm.

use serde::{Deserialize, Serialize};

use crate::data::RegressionTask;
use crate::energy::InferenceSchedule;
use crate::error::Result;
use crate::network::{Activation, NetworkSpec};
use crate::trainers::{grid_search, Algorithm, GridSearch, TrainConfig, WeightInit, LR_GRID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainsConfig {
    pub task: RegressionTask,
    /// Number of hidden units; depth 1 is the 1MLP.
    pub depths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub lr_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub batch_size: usize,
    pub max_batches: usize,
    pub stop_train_loss: f64,
    pub plateau_window: usize,
    pub inference: InferenceSchedule,
    pub init_bound: f64,
    pub test_size: usize,
}

impl Default for ChainsConfig {
    fn default() -> Self {
        Self {
            task: RegressionTask::default(),
            depths: vec![1, 5, 10],
            activations: vec![Activation::Linear, Activation::Tanh, Activation::Relu],
            lr_grid: LR_GRID.to_vec(),
            seeds: vec![0, 1, 2],
            batch_size: 64,
            max_batches: 10_000,
            stop_train_loss: 0.01,
            plateau_window: 500,
            inference: InferenceSchedule::chains(),
            init_bound: 1.0,
            test_size: 1000,
        }
    }
}

impl ChainsConfig {
    pub fn base_train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_batches: self.max_batches,
            inference: self.inference,
            stop_train_loss: Some(self.stop_train_loss),
            plateau_window: Some(self.plateau_window),
            test_size: self.test_size,
            init: WeightInit::Uniform { bound: self.init_bound },
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainSweep {
    pub depth: usize,
    pub activation: Activation,
    pub search: GridSearch,
    pub stop_train_loss: f64,
    pub max_batches: usize,
}

impl ChainSweep {
    /// Batches to `L_train < tol` for each seed at the winning lr.
    pub fn batches_to_threshold(&self, algorithm: Algorithm) -> Vec<Option<usize>> {
        self.search
            .winning_runs(algorithm)
            .iter()
            .map(|r| r.batches_to_train_loss(self.stop_train_loss))
            .collect()
    }

    /// Mean of [`batches_to_threshold`](Self::batches_to_threshold) with runs
    /// that never got there counted at the batch budget, a lower bound on
    /// their true value.
    pub fn censored_mean_batches(&self, algorithm: Algorithm) -> f64 {
        let v = self.batches_to_threshold(algorithm);
        v.iter().map(|b| b.unwrap_or(self.max_batches) as f64).sum::<f64>() / v.len() as f64
    }

    /// `PC / BP` ratio of [`censored_mean_batches`](Self::censored_mean_batches).
    pub fn speed_ratio(&self) -> f64 {
        self.censored_mean_batches(Algorithm::Pc) / self.censored_mean_batches(Algorithm::Bp)
    }
}

pub fn run_chain(cfg: &ChainsConfig, depth: usize, activation: Activation) -> Result<ChainSweep> {
    let spec = NetworkSpec::chain(depth, activation)?;
    let search = grid_search(
        &spec,
        &cfg.base_train_config(),
        &[Algorithm::Bp, Algorithm::Pc],
        &cfg.lr_grid,
        &cfg.task,
        &cfg.seeds,
    )?;
    Ok(ChainSweep { depth, activation, search, stop_train_loss: cfg.stop_train_loss, max_batches: cfg.max_batches })
}

pub fn run_chains(cfg: &ChainsConfig) -> Result<Vec<ChainSweep>> {
    let mut out = Vec::new();
    for &activation in &cfg.activations {
        for &depth in &cfg.depths {
            out.push(run_chain(cfg, depth, activation)?);
        }
    }
    Ok(out)
}
