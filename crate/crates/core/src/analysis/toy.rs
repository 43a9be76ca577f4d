//! Closed forms for the linear 1MLP `ŷ = w₂ w₁ x`: loss and equilibrated
//! energy with their gradients and Hessians, critical-point spectra, and the
//! closest point on the solution manifold.

use nalgebra::{Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Batch;

fn pairs(batch: &Batch) -> impl Iterator<Item = (f64, f64)> + '_ {
    batch.inputs().iter().copied().zip(batch.targets().iter().copied())
}

fn batch_mean(batch: &Batch, f: impl Fn(f64, f64) -> f64) -> f64 {
    pairs(batch).map(|(x, y)| f(x, y)).sum::<f64>() / batch.len() as f64
}

fn batch_mean2(batch: &Batch, f: impl Fn(f64, f64) -> [f64; 2]) -> [f64; 2] {
    let n = batch.len() as f64;
    let s = pairs(batch).fold([0.0, 0.0], |acc, (x, y)| {
        let v = f(x, y);
        [acc[0] + v[0], acc[1] + v[1]]
    });
    [s[0] / n, s[1] / n]
}

/// Mean `½(y − w₂w₁x)²`.
pub fn loss_1mlp(w: [f64; 2], batch: &Batch) -> f64 {
    batch_mean(batch, |x, y| {
        let e = y - w[0] * w[1] * x;
        0.5 * e * e
    })
}

pub fn loss_grad_1mlp(w: [f64; 2], batch: &Batch) -> [f64; 2] {
    batch_mean2(batch, |x, y| {
        let e = y - w[0] * w[1] * x;
        [-e * w[1] * x, -e * w[0] * x]
    })
}

/// `[[w₂²x², w₁w₂x² − ex], [w₁w₂x² − ex, w₁²x²]]`, batch mean.
pub fn loss_hessian_1mlp(w: [f64; 2], batch: &Batch) -> Matrix2<f64> {
    let n = batch.len() as f64;
    let mut h = Matrix2::zeros();
    for (x, y) in pairs(batch) {
        let e = y - w[0] * w[1] * x;
        let off = w[0] * w[1] * x * x - e * x;
        h += Matrix2::new(w[1] * w[1] * x * x, off, off, w[0] * w[0] * x * x);
    }
    h / n
}

/// `F* = L / (1 + w₂²)`, the energy after exact inference.
pub fn equilibrated_energy_batch_1mlp(w: [f64; 2], batch: &Batch) -> f64 {
    loss_1mlp(w, batch) / (1.0 + w[1] * w[1])
}

pub fn equilibrated_energy_grad_1mlp(w: [f64; 2], batch: &Batch) -> [f64; 2] {
    let s = 1.0 / (1.0 + w[1] * w[1]);
    let g = loss_grad_1mlp(w, batch);
    let l = loss_1mlp(w, batch);
    [g[0] * s, g[1] * s - 2.0 * w[1] * l * s * s]
}

pub fn equilibrated_energy_hessian_1mlp(w: [f64; 2], batch: &Batch) -> Matrix2<f64> {
    let q = 1.0 + w[1] * w[1];
    let s = 1.0 / q;
    let ds = -2.0 * w[1] / (q * q);
    let dds = (6.0 * w[1] * w[1] - 2.0) / (q * q * q);
    let l = loss_1mlp(w, batch);
    let g = loss_grad_1mlp(w, batch);
    let h = loss_hessian_1mlp(w, batch);
    let off = h[(0, 1)] * s + g[0] * ds;
    Matrix2::new(h[(0, 0)] * s, off, off, h[(1, 1)] * s + 2.0 * g[1] * ds + l * dds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Loss,
    EquilibratedEnergy,
}

impl Objective {
    pub fn value(self, w: [f64; 2], batch: &Batch) -> f64 {
        match self {
            Objective::Loss => loss_1mlp(w, batch),
            Objective::EquilibratedEnergy => equilibrated_energy_batch_1mlp(w, batch),
        }
    }

    pub fn gradient(self, w: [f64; 2], batch: &Batch) -> [f64; 2] {
        match self {
            Objective::Loss => loss_grad_1mlp(w, batch),
            Objective::EquilibratedEnergy => equilibrated_energy_grad_1mlp(w, batch),
        }
    }

    pub fn hessian(self, w: [f64; 2], batch: &Batch) -> Matrix2<f64> {
        match self {
            Objective::Loss => loss_hessian_1mlp(w, batch),
            Objective::EquilibratedEnergy => equilibrated_energy_hessian_1mlp(w, batch),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// At least one positive and one negative eigenvalue.
    StrictSaddle,
    /// No negative and at least one positive eigenvalue.
    Minimum,
    /// No positive eigenvalue.
    Degenerate,
}

impl Classification {
    /// Eigenvalues within `tol` of zero count as zero.
    pub fn from_eigenvalues(eigs: &[f64], tol: f64) -> Self {
        let neg = eigs.iter().any(|&l| l < -tol);
        let pos = eigs.iter().any(|&l| l > tol);
        match (neg, pos) {
            (true, true) => Classification::StrictSaddle,
            (false, true) => Classification::Minimum,
            (_, false) => Classification::Degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointReport {
    pub location: [f64; 2],
    pub objective: Objective,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub classification: Classification,
}

fn sorted_eigs(h: Matrix2<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Spectrum and type of the objective's Hessian at `w`.
pub fn critical_point_report(objective: Objective, w: [f64; 2], batch: &Batch) -> CriticalPointReport {
    let eigenvalues = sorted_eigs(objective.hessian(w, batch));
    let classification = Classification::from_eigenvalues(&eigenvalues, 1e-12);
    CriticalPointReport { location: w, objective, eigenvalues, classification }
}

/// Hessian eigenvalues at the origin for a single pair `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleEigs {
    /// `±xy`, ascending.
    pub loss: [f64; 2],
    /// `½(−y² ± |y|√(4x² + y²))`, ascending.
    pub energy: [f64; 2],
    /// `λ_max(H_F*) < λ_max(H_L)`
    pub max_smaller: bool,
    /// `λ_min(H_F*) < λ_min(H_L)`
    pub min_smaller: bool,
}

pub fn saddle_eigs_1mlp(x: f64, y: f64) -> Result<SaddleEigs> {
    if x == 0.0 || y == 0.0 || !x.is_finite() || !y.is_finite() {
        return Err(Error::Domain(format!("degenerate problem x = {x}, y = {y}")));
    }
    let l = (x * y).abs();
    let root = y.abs() * (4.0 * x * x + y * y).sqrt();
    let loss = [-l, l];
    let energy = [0.5 * (-y * y - root), 0.5 * (-y * y + root)];
    Ok(SaddleEigs {
        loss,
        energy,
        max_smaller: energy[1] < loss[1],
        min_smaller: energy[0] < loss[0],
    })
}

/// Hessian eigenvalues at the manifold point `(y/(w₂x), w₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimumEigs {
    pub point: [f64; 2],
    /// `{0, (w₂⁴x² + y²)/w₂²}`
    pub loss: [f64; 2],
    /// `{0, (w₂⁴x² + y²)/(w₂²(1 + w₂²))}`
    pub energy: [f64; 2],
    /// `λ_max(H_F*) < λ_max(H_L)`
    pub flatter: bool,
}

pub fn minimum_eigs_1mlp(w2: f64, x: f64, y: f64) -> Result<MinimumEigs> {
    if w2 == 0.0 || x == 0.0 || y == 0.0 || !(w2.is_finite() && x.is_finite() && y.is_finite()) {
        return Err(Error::Domain(format!("no manifold point for w2 = {w2}, x = {x}, y = {y}")));
    }
    let q = w2 * w2;
    let l_max = (q * q * x * x + y * y) / q;
    let f_max = l_max / (1.0 + q);
    Ok(MinimumEigs {
        point: [y / (w2 * x), w2],
        loss: [0.0, l_max],
        energy: [0.0, f_max],
        flatter: f_max < l_max,
    })
}

/// Closest point to `w` on the manifold `w₁w₂ = m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalDirection {
    pub point: [f64; 2],
    /// `point − w`
    pub delta: [f64; 2],
    pub distance: f64,
}

/// Real roots of the monic quartic `t⁴ + c₃t³ + c₂t² + c₁t + c₀`.
pub(crate) fn quartic_real_roots(c: [f64; 4]) -> Vec<f64> {
    let [c0, c1, c2, c3] = c;
    #[rustfmt::skip]
    let companion = Matrix4::new(
        0.0, 0.0, 0.0, -c0,
        1.0, 0.0, 0.0, -c1,
        0.0, 1.0, 0.0, -c2,
        0.0, 0.0, 1.0, -c3,
    );
    let p = |t: f64| (((t + c3) * t + c2) * t + c1) * t + c0;
    let dp = |t: f64| ((4.0 * t + 3.0 * c3) * t + 2.0 * c2) * t + c1;
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-9 * z.re.abs().max(1.0))
        .map(|z| {
            // a few Newton steps to polish the eigenvalue estimate
            let mut t = z.re;
            for _ in 0..3 {
                let d = dp(t);
                if d == 0.0 {
                    break;
                }
                let next = t - p(t) / d;
                if !next.is_finite() || p(next).abs() > p(t).abs() {
                    break;
                }
                t = next;
            }
            t
        })
        .collect()
}

/// Closest point on `w₁w₂ = slope`, the solutions of the task `y = slope·x`.
///
/// Stationary points of the squared distance to `(t, slope/t)` solve
/// `t⁴ − w₁t³ + slope·w₂·t − slope² = 0`; its real roots are compared and
/// exact ties go to the larger `t`.
pub fn optimal_direction(w1: f64, w2: f64, slope: f64) -> Result<OptimalDirection> {
    if slope == 0.0 || !slope.is_finite() {
        return Err(Error::Domain("the solution set must be a hyperbola (slope ≠ 0)".into()));
    }
    if !(w1.is_finite() && w2.is_finite()) {
        return Err(Error::Domain("weights must be finite".into()));
    }
    let roots = quartic_real_roots([-slope * slope, slope * w2, 0.0, -w1]);
    let mut best: Option<(f64, f64)> = None;
    for t in roots {
        if t == 0.0 {
            continue;
        }
        let d = ((t - w1).powi(2) + (slope / t - w2).powi(2)).sqrt();
        best = match best {
            None => Some((t, d)),
            Some((bt, bd)) => {
                let tie = (d - bd).abs() <= 1e-12 * bd.max(1.0);
                if (tie && t > bt) || (!tie && d < bd) {
                    Some((t, d))
                } else {
                    Some((bt, bd))
                }
            }
        };
    }
    let (t, distance) = best.ok_or_else(|| Error::Numeric("distance quartic has no real root".into()))?;
    let point = [t, slope / t];
    Ok(OptimalDirection { point, delta: [point[0] - w1, point[1] - w2], distance })
}

/// [`optimal_direction`] for the task `y = −x`.
pub fn optimal_direction_1mlp(w1: f64, w2: f64) -> Result<OptimalDirection> {
    optimal_direction(w1, w2, -1.0)
}
