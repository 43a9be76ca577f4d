use nalgebra::{DMatrix, DVector};

use crate::energy::{clamped_feedforward, energy, energy_activity_grads, energy_weight_grads, ActivityState, Precisions};
use crate::error::{Error, Result};
use crate::network::{bp_grad, check_weights, forward_pass, Batch, NetworkSpec, WeightSet};

/// Energy Hessian over the stacked hidden activities `z_1 … z_{L−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    /// Width of each hidden layer, bottom-up; the matrix is block-tridiagonal
    /// with these block sizes.
    pub block_sizes: Vec<usize>,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn offset(&self, block: usize) -> usize {
        self.block_sizes[..block].iter().sum()
    }

    /// Block `(i, j)`, 0-based over hidden layers.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.matrix
            .view((self.offset(i), self.offset(j)), (self.block_sizes[i], self.block_sizes[j]))
            .into_owned()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Solve `I v = rhs`, falling back to `I + δ·Id` with `δ = 1e-8`.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(ch) = self.matrix.clone().cholesky() {
            let v = ch.solve(rhs);
            if v.iter().all(|x| x.is_finite()) {
                return Ok(v);
            }
        }
        let damped = &self.matrix + DMatrix::identity(self.dim(), self.dim()) * 1e-8;
        damped
            .lu()
            .solve(rhs)
            .filter(|v| v.iter().all(|x| x.is_finite()))
            .ok_or_else(|| Error::Numeric("Fisher solve failed after damping".into()))
    }
}

fn check_input(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, x: &[f64]) -> Result<()> {
    check_weights(spec, w)?;
    if x.len() != spec.input_width() {
        return Err(Error::Shape(format!("input has width {}, expected {}", x.len(), spec.input_width())));
    }
    prec.check(spec)
}

/// Exact energy Hessian w.r.t. the hidden activities at the feedforward
/// state, where every prediction error is zero:
/// diagonal blocks `Π_l + W_{l+1}ᵀ D Π_{l+1} D W_{l+1}`, off-diagonal blocks
/// `−W_{l+1}ᵀ D Π_{l+1}`, with `D = diag f'_{l+1}(W_{l+1} z_l)`.
///
/// A network without hidden layers gives an empty matrix.
pub fn fisher_information(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, x: &[f64]) -> Result<FisherMatrix> {
    check_input(spec, w, prec, x)?;
    let l_max = spec.depth();
    let block_sizes: Vec<usize> = (1..l_max).map(|l| spec.width(l)).collect();
    let dim: usize = block_sizes.iter().sum();
    let mut m = DMatrix::zeros(dim, dim);
    let fp = forward_pass(spec, w, &DMatrix::from_column_slice(x.len(), 1, x));

    let mut off = 0;
    for l in 1..l_max {
        let n = spec.width(l);
        let f_next = spec.activation(l + 1);
        let d: DVector<f64> = fp.pre[l + 1].column(0).map(|a| f_next.derivative(a));
        let p_next = prec.layer(l + 1);
        let w_next = w.layer(l + 1);

        // W_{l+1}ᵀ diag(d² π) W_{l+1}
        let scaled = DMatrix::from_fn(w_next.nrows(), n, |i, j| d[i] * d[i] * p_next[i] * w_next[(i, j)]);
        let mut diag = w_next.transpose() * scaled;
        for (i, p) in prec.layer(l).iter().enumerate() {
            diag[(i, i)] += p;
        }
        m.view_mut((off, off), (n, n)).copy_from(&diag);

        if l + 1 < l_max {
            let n_next = spec.width(l + 1);
            let cross = DMatrix::from_fn(n, n_next, |i, j| -w_next[(j, i)] * d[j] * p_next[j]);
            m.view_mut((off, off + n), (n, n_next)).copy_from(&cross);
            m.view_mut((off + n, off), (n_next, n)).copy_from(&cross.transpose());
        }
        off += n;
    }
    Ok(FisherMatrix { matrix: m, block_sizes })
}

/// One Newton step on the energy from the target-clamped feedforward state.
#[derive(Debug, Clone)]
pub struct TrSolution {
    /// Feedforward activities with the output clamped to the target.
    pub feedforward: ActivityState,
    /// `∂F/∂z` at `feedforward`, stacked over hidden layers.
    pub gradient: DVector<f64>,
    /// `−I⁻¹ g`
    pub delta: DVector<f64>,
    /// `feedforward + delta`, still clamped at input and output.
    pub state: ActivityState,
}

/// Predicted equilibrium `z_t − I(z_t)⁻¹ g`, where `g` is the energy's
/// activity gradient at the target-clamped feedforward state.
pub fn tr_solution(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, x: &[f64], y: &[f64]) -> Result<TrSolution> {
    check_input(spec, w, prec, x)?;
    if spec.depth() < 2 {
        return Err(Error::Config("the network has no hidden layer".into()));
    }
    let batch = Batch::single(x, y);
    batch.check(spec)?;
    let feedforward = clamped_feedforward(spec, w, &batch)?;
    let grads = energy_activity_grads(spec, w, prec, &feedforward)?;
    let gradient = DVector::from_iterator(
        feedforward.free_layers().map(|l| spec.width(l)).sum(),
        feedforward.free_layers().flat_map(|l| grads[l].iter().copied().collect::<Vec<_>>()),
    );
    let fisher = fisher_information(spec, w, prec, x)?;
    let delta = -fisher.solve(&gradient)?;
    let mut state = feedforward.clone();
    state.set_free_vector(0, &(feedforward.free_vector(0) + &delta))?;
    Ok(TrSolution { feedforward, gradient, delta, state })
}

/// Energy weight gradient at the trust-region solution, split into the BP
/// gradient and the remainder contributed by the activity step.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedGrad {
    pub total: WeightSet,
    pub bp_component: WeightSet,
    /// `total − bp_component`
    pub tr_component: WeightSet,
}

pub fn interpolated_weight_grad(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, x: &[f64], y: &[f64]) -> Result<InterpolatedGrad> {
    let tr = tr_solution(spec, w, prec, x, y)?;
    let total = energy_weight_grads(spec, w, prec, &tr.state)?;
    let bp_component = bp_grad(spec, w, &Batch::single(x, y))?;
    let mut tr_component = total.clone();
    tr_component.axpy(-1.0, &bp_component);
    Ok(InterpolatedGrad { total, bp_component, tr_component })
}

/// `F(z_t + Δz) − [F(z_t) + gᵀΔz + ½ΔzᵀI Δz]` around the target-clamped
/// feedforward state, where `F(z_t)` is the (precision-weighted) loss.
pub fn taylor_residual(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, x: &[f64], y: &[f64], dz: &DVector<f64>) -> Result<f64> {
    let tr = tr_solution(spec, w, prec, x, y)?;
    let fisher = fisher_information(spec, w, prec, x)?;
    if dz.len() != fisher.dim() {
        return Err(Error::Shape(format!("step has length {}, expected {}", dz.len(), fisher.dim())));
    }
    let f0 = energy(spec, w, prec, &tr.feedforward)?;
    let mut moved = tr.feedforward.clone();
    moved.set_free_vector(0, &(tr.feedforward.free_vector(0) + dz))?;
    let f1 = energy(spec, w, prec, &moved)?;
    let model = f0 + tr.gradient.dot(dz) + 0.5 * dz.dot(&(&fisher.matrix * dz));
    Ok(f1 - model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::analytic_equilibrium_1mlp;
    use crate::network::Activation;
    use crate::testutil::assert_close;

    #[test]
    fn one_mlp_fisher() {
        let spec = NetworkSpec::one_mlp();
        let w = WeightSet::from_scalars(&spec, &[0.3, 1.0]).unwrap();
        let f = fisher_information(&spec, &w, &Precisions::ones(&spec), &[1.0]).unwrap();
        assert_eq!(f.matrix, DMatrix::from_element(1, 1, 2.0));
    }

    #[test]
    fn identity_chain_fisher() {
        let spec = NetworkSpec::chain(2, Activation::Linear).unwrap();
        let w = WeightSet::identity(&spec);
        let f = fisher_information(&spec, &w, &Precisions::ones(&spec), &[0.7]).unwrap();
        assert_eq!(f.matrix, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        assert_eq!(f.block(0, 1), DMatrix::from_element(1, 1, -1.0));
    }

    #[test]
    fn no_hidden_layer() {
        let spec = NetworkSpec::new(vec![2, 1], vec![Activation::Linear]).unwrap();
        let w = WeightSet::zeros(&spec);
        let f = fisher_information(&spec, &w, &Precisions::ones(&spec), &[1.0, 2.0]).unwrap();
        assert_eq!(f.dim(), 0);
        assert!(tr_solution(&spec, &w, &Precisions::ones(&spec), &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn tr_solution_exact_for_linear_1mlp() {
        let spec = NetworkSpec::one_mlp();
        let (w1, w2, x, y) = (0.5, 0.5, 1.0, -1.0);
        let w = WeightSet::from_scalars(&spec, &[w1, w2]).unwrap();
        let tr = tr_solution(&spec, &w, &Precisions::ones(&spec), &[x], &[y]).unwrap();
        assert_close(tr.state.scalar(1), analytic_equilibrium_1mlp(w1, w2, x, y), 1e-12);
    }

    #[test]
    fn zero_residual_means_no_step() {
        let spec = NetworkSpec::one_mlp();
        let w = WeightSet::from_scalars(&spec, &[2.0, -0.5]).unwrap();
        let prec = Precisions::ones(&spec);
        let tr = tr_solution(&spec, &w, &prec, &[1.0], &[-1.0]).unwrap();
        assert_eq!(tr.delta[0], 0.0);
        let g = interpolated_weight_grad(&spec, &w, &prec, &[1.0], &[-1.0]).unwrap();
        assert_eq!(g.total.max_abs(), 0.0);
        assert_eq!(g.bp_component.max_abs(), 0.0);
    }

    #[test]
    fn linear_taylor_residual_vanishes() {
        let spec = NetworkSpec::mlp(2, &[3, 2], 2, Activation::Linear).unwrap();
        let w = WeightSet::from_flat(&spec, &(0..spec.parameter_count()).map(|i| ((i * 7 % 11) as f64 - 5.0) / 6.0).collect::<Vec<_>>()).unwrap();
        let prec = Precisions::ones(&spec);
        let dz = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, -0.4]);
        let r = taylor_residual(&spec, &w, &prec, &[0.4, -1.2], &[0.3, 0.9], &dz).unwrap();
        assert!(r.abs() < 1e-12, "{r}");
        let r0 = taylor_residual(&spec, &w, &prec, &[0.4, -1.2], &[0.3, 0.9], &DVector::zeros(5)).unwrap();
        assert!(r0.abs() < 1e-15);
    }
}
