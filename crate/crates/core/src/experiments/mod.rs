//! Drivers that produce the data behind each figure. Every config
//! deserializes with defaults equal to the published settings, so a partial
//! config file only needs the keys it changes.

pub mod chains;
pub mod cosine;
pub mod mnist;
pub mod perturb;
pub mod toy;

use serde::{Deserialize, Serialize};

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: f64,
    pub n: usize,
}

pub fn mean_sem(xs: &[f64]) -> MeanSem {
    let n = xs.len();
    if n == 0 {
        return MeanSem { mean: f64::NAN, sem: f64::NAN, n };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sem = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    MeanSem { mean, sem, n }
}
