use serde::{Deserialize, Serialize};

use super::toy::Objective;
use crate::error::{Error, Result};
use crate::network::Batch;

/// Objective values and negative gradients on a regular `(w₁, w₂)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub objective: Objective,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    /// `values[i][j]` at `(w1[i], w2[j])`.
    pub values: Vec<Vec<f64>>,
    /// `−∇` at the same points.
    pub descent: Vec<Vec<[f64; 2]>>,
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn landscape_grid(objective: Objective, w1_range: (f64, f64), w2_range: (f64, f64), resolution: usize, batch: &Batch) -> Result<Landscape> {
    if resolution < 2 {
        return Err(Error::Config("grid resolution must be at least 2".into()));
    }
    for r in [w1_range, w2_range] {
        if !(r.0 < r.1) || !r.0.is_finite() || !r.1.is_finite() {
            return Err(Error::Config(format!("empty range {r:?}")));
        }
    }
    let w1 = linspace(w1_range, resolution);
    let w2 = linspace(w2_range, resolution);
    let mut values = Vec::with_capacity(resolution);
    let mut descent = Vec::with_capacity(resolution);
    for &a in &w1 {
        values.push(w2.iter().map(|&b| objective.value([a, b], batch)).collect());
        descent.push(
            w2.iter()
                .map(|&b| {
                    let g = objective.gradient([a, b], batch);
                    [-g[0], -g[1]]
                })
                .collect(),
        );
    }
    Ok(Landscape { objective, w1, w2, values, descent })
}
