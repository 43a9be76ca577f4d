use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Batch;
use crate::trainers::Algorithm;

/// Mean squared error over perturbation draws, with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseStats {
    pub mean: f64,
    pub sem: f64,
    /// One MSE per draw.
    pub samples: Vec<f64>,
}

impl MseStats {
    fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let sem = if samples.len() > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, sem, samples }
    }
}

/// Prediction of a 1MLP: the feedforward output for BP, and `w₂ z*` with `z*`
/// the target-clamped equilibrium for PC.
fn predict_1mlp(algorithm: Algorithm, w: [f64; 2], x: f64, y: f64) -> f64 {
    match algorithm {
        Algorithm::Pc => w[1] * crate::energy::analytic_equilibrium_1mlp(w[0], w[1], x, y),
        Algorithm::Bp | Algorithm::Trn => w[1] * w[0] * x,
    }
}

/// Mean `(y − ŷ)²` over `batch` after adding `N(0, variance)` noise to each
/// weight, for `n_draws` independent draws.
pub fn perturbed_mse(algorithm: Algorithm, w: [f64; 2], batch: &Batch, variance: f64, n_draws: usize, seed: u64) -> Result<MseStats> {
    if !(variance >= 0.0) || n_draws == 0 {
        return Err(Error::Config("need a nonnegative variance and at least one draw".into()));
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let samples = (0..n_draws as u64)
        .map(|draw| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(draw);
            let wp = [w[0] + normal.sample(&mut rng), w[1] + normal.sample(&mut rng)];
            let sq: f64 = batch
                .inputs()
                .iter()
                .zip(batch.targets().iter())
                .map(|(&x, &y)| (y - predict_1mlp(algorithm, wp, x, y)).powi(2))
                .sum();
            sq / batch.len() as f64
        })
        .collect();
    Ok(MseStats::from_samples(samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub variance: f64,
    pub bp: MseStats,
    pub pc: MseStats,
}

/// BP and PC weights perturbed with the same noise draws.
pub fn perturbation_robustness(bp_w: [f64; 2], pc_w: [f64; 2], batch: &Batch, variance: f64, n_draws: usize, seed: u64) -> Result<PerturbationReport> {
    Ok(PerturbationReport {
        variance,
        bp: perturbed_mse(Algorithm::Bp, bp_w, batch, variance, n_draws, seed)?,
        pc: perturbed_mse(Algorithm::Pc, pc_w, batch, variance, n_draws, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_unperturbed() {
        let b = Batch::scalar_pairs(&[0.9, 1.1], &[-0.9, -1.1]).unwrap();
        let w = [0.8, -1.1];
        let r = perturbation_robustness(w, w, &b, 0.0, 3, 0).unwrap();
        let bp_mse = [0.9f64, 1.1].iter().map(|x| (-x - w[0] * w[1] * x).powi(2)).sum::<f64>() / 2.0;
        assert!((r.bp.mean - bp_mse).abs() < 1e-15);
        assert_eq!(r.bp.sem, 0.0);
        assert!(r.pc.mean < r.bp.mean);
    }

    #[test]
    fn pc_prediction_residual() {
        // y − w₂z* = e / (1 + w₂²)
        let (w1, w2, x, y) = (0.3, 0.7, 1.2, -1.2);
        let e = y - w1 * w2 * x;
        let r = y - predict_1mlp(Algorithm::Pc, [w1, w2], x, y);
        assert!((r - e / (1.0 + w2 * w2)).abs() < 1e-15);
    }
}
