//! Alignment of each algorithm's update with the direction to the closest
//! solution, over the first few batches of 1MLP training.

use serde::{Deserialize, Serialize};

use super::{mean_sem, MeanSem};
use crate::analysis::toy::{equilibrated_energy_grad_1mlp, loss_grad_1mlp};
use crate::analysis::{cosine_similarity, optimal_direction};
use crate::data::RegressionTask;
use crate::error::Result;
use crate::network::NetworkSpec;
use crate::trainers::{trn_step_1mlp, Algorithm, WeightInit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CosineConfig {
    pub task: RegressionTask,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_batches: usize,
    pub init_bound: f64,
    pub trn_damping: f64,
    pub seeds: Vec<u64>,
}

impl Default for CosineConfig {
    fn default() -> Self {
        Self {
            task: RegressionTask::default(),
            learning_rate: 0.2,
            batch_size: 64,
            n_batches: 5,
            init_bound: 1.0,
            trn_damping: 2.0,
            seeds: (0..10).collect(),
        }
    }
}

/// One algorithm's update at one batch of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionRow {
    pub seed: u64,
    /// 1-based.
    pub batch: usize,
    pub algorithm: Algorithm,
    pub weights: [f64; 2],
    /// From `weights` to the closest solution.
    pub optimal: [f64; 2],
    pub update: [f64; 2],
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineSummary {
    pub algorithm: Algorithm,
    pub batch: usize,
    pub cosine: MeanSem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub rows: Vec<DirectionRow>,
    pub summary: Vec<CosineSummary>,
}

impl DirectionReport {
    pub fn mean(&self, algorithm: Algorithm, batch: usize) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.algorithm == algorithm && s.batch == batch)
            .map(|s| s.cosine.mean)
    }
}

pub const ALGORITHMS: [Algorithm; 3] = [Algorithm::Pc, Algorithm::Bp, Algorithm::Trn];

/// Each algorithm follows its own trajectory from the shared initialisation
/// and sees the same batches. PC's update is `−α∇F*` with the closed-form
/// equilibrated energy, i.e. PC with exact inference.
pub fn run_cosine(cfg: &CosineConfig) -> Result<DirectionReport> {
    let spec = NetworkSpec::one_mlp();
    let lr = cfg.learning_rate;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let init = WeightInit::Uniform { bound: cfg.init_bound }.sample(&spec, seed).to_flat();
        let mut w = [[init[0], init[1]]; 3];
        for b in 0..cfg.n_batches {
            let batch = cfg.task.with_seed(seed).sample_draw(cfg.batch_size, b as u64)?;
            for (k, &alg) in ALGORITHMS.iter().enumerate() {
                let cur = w[k];
                let next = match alg {
                    Algorithm::Pc => {
                        let g = equilibrated_energy_grad_1mlp(cur, &batch);
                        [cur[0] - lr * g[0], cur[1] - lr * g[1]]
                    }
                    Algorithm::Bp => {
                        let g = loss_grad_1mlp(cur, &batch);
                        [cur[0] - lr * g[0], cur[1] - lr * g[1]]
                    }
                    Algorithm::Trn => trn_step_1mlp(cur, &batch, cfg.trn_damping, lr)?,
                };
                let update = [next[0] - cur[0], next[1] - cur[1]];
                let optimal = optimal_direction(cur[0], cur[1], cfg.task.slope)?.delta;
                let cosine = cosine_similarity(&optimal, &update)?;
                rows.push(DirectionRow { seed, batch: b + 1, algorithm: alg, weights: cur, optimal, update, cosine });
                w[k] = next;
            }
        }
    }
    let mut summary = Vec::new();
    for alg in ALGORITHMS {
        for batch in 1..=cfg.n_batches {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.algorithm == alg && r.batch == batch)
                .map(|r| r.cosine)
                .collect();
            summary.push(CosineSummary { algorithm: alg, batch, cosine: mean_sem(&xs) });
        }
    }
    Ok(DirectionReport { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_shape() {
        let cfg = CosineConfig { seeds: vec![0, 1], n_batches: 3, ..Default::default() };
        let r = run_cosine(&cfg).unwrap();
        assert_eq!(r.rows.len(), 2 * 3 * 3);
        assert_eq!(r.summary.len(), 3 * 3);
        assert!(r.rows.iter().all(|row| (-1.0..=1.0).contains(&row.cosine)));
    }
}
