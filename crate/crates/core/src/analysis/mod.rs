//! Trust-region view of PC inference and the 1MLP toolkit.

mod dynamics;
mod fisher;
mod landscape;
mod perturb;
pub mod toy;

pub use dynamics::{gradient_flow, near_saddle_iterate};
pub use fisher::{fisher_information, interpolated_weight_grad, taylor_residual, tr_solution, FisherMatrix, InterpolatedGrad, TrSolution};
pub use landscape::{landscape_grid, Landscape};
pub use perturb::{perturbation_robustness, perturbed_mse, MseStats, PerturbationReport};
pub use toy::{critical_point_report, minimum_eigs_1mlp, optimal_direction, optimal_direction_1mlp, saddle_eigs_1mlp, Classification, CriticalPointReport, MinimumEigs, Objective, OptimalDirection, SaddleEigs};

use crate::error::{Error, Result};

/// `⟨a, b⟩ / (‖a‖‖b‖)`, clamped to `[−1, 1]` against rounding.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::assert_close;

    #[test]
    fn cosine_basics() {
        assert_close(cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0, 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_close(cosine_similarity(&[1.0, 2.0], &[-1.0, -2.0]).unwrap(), -1.0, 1e-15);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
        assert!(cosine_similarity(&[1.0], &[1.0, 0.0]).is_err());
    }
}
