//! Robustness of trained 1MLP minima to Gaussian weight noise.

use serde::{Deserialize, Serialize};

use crate::analysis::{perturbation_robustness, PerturbationReport};
use crate::data::RegressionTask;
use crate::energy::InferenceSchedule;
use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::trainers::{train, Algorithm, StopReason, TrainConfig, TrainRecord, WeightInit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub task: RegressionTask,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_batches: usize,
    pub stop_test_loss: f64,
    pub init_bound: f64,
    pub inference: InferenceSchedule,
    pub train_seed: u64,
    /// Variance of the i.i.d. Gaussian weight noise.
    pub noise_variance: f64,
    pub n_seeds: usize,
    pub noise_seed: u64,
    pub eval_size: usize,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            task: RegressionTask::default(),
            learning_rate: 0.2,
            batch_size: 64,
            max_batches: 10_000,
            stop_test_loss: 1e-3,
            init_bound: 1.0,
            inference: InferenceSchedule::toy(),
            train_seed: 0,
            noise_variance: 0.5,
            n_seeds: 10,
            noise_seed: 0,
            eval_size: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbOutput {
    pub bp_record: TrainRecord,
    pub pc_record: TrainRecord,
    pub report: PerturbationReport,
}

fn scalars(rec: &TrainRecord) -> [f64; 2] {
    let w = rec.final_weights.to_flat();
    [w[0], w[1]]
}

/// Train BP and PC from the same initialisation to the test tolerance, then
/// perturb both minima with the same noise draws.
pub fn run_perturb(cfg: &PerturbConfig) -> Result<PerturbOutput> {
    let spec = NetworkSpec::one_mlp();
    let mut recs = Vec::new();
    for alg in [Algorithm::Bp, Algorithm::Pc] {
        let tc = TrainConfig {
            algorithm: alg,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            max_batches: cfg.max_batches,
            inference: cfg.inference,
            stop_test_loss: Some(cfg.stop_test_loss),
            init: WeightInit::Uniform { bound: cfg.init_bound },
            seed: cfg.train_seed,
            ..TrainConfig::default()
        };
        let rec = train(&spec, &tc, &cfg.task)?;
        if rec.stop_reason == StopReason::Diverged {
            return Err(Error::NonFinite(format!("{alg} training diverged before reaching a minimum")));
        }
        recs.push(rec);
    }
    let pc_record = recs.pop().expect("two runs");
    let bp_record = recs.pop().expect("two runs");
    let eval = cfg.task.with_seed(cfg.train_seed).test_set(cfg.eval_size)?;
    let report = perturbation_robustness(
        scalars(&bp_record),
        scalars(&pc_record),
        &eval,
        cfg.noise_variance,
        cfg.n_seeds,
        cfg.noise_seed,
    )?;
    Ok(PerturbOutput { bp_record, pc_record, report })
}
