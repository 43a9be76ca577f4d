//! Bias-free feedforward networks: definition, evaluation, squared-error loss
//! and exact reverse-mode gradients (the backprop baseline).
//!
//! Samples are stored column-wise throughout the crate: a batch of `B` inputs
//! of width `n_0` is an `n_0 × B` matrix.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::energy::ActivityState;
use crate::error::{Error, Result};

/// Pointwise nonlinearity applied after each weight layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Linear => a,
            Activation::Tanh => a.tanh(),
            Activation::Relu => a.max(0.0),
        }
    }

    /// First derivative. The ReLU subgradient at 0 is taken to be 0.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `(f(a), f'(a))` with a single transcendental evaluation.
    #[inline]
    pub fn apply_with_derivative(self, a: f64) -> (f64, f64) {
        match self {
            Activation::Linear => (a, 1.0),
            Activation::Tanh => {
                let t = a.tanh();
                (t, 1.0 - t * t)
            }
            Activation::Relu => {
                if a > 0.0 {
                    (a, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    #[inline]
    pub fn second_derivative(self, a: f64) -> f64 {
        match self {
            Activation::Linear | Activation::Relu => 0.0,
            Activation::Tanh => {
                let t = a.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }

    /// True for activations satisfying `f(-a) = -f(a)`.
    pub fn is_odd(self) -> bool {
        matches!(self, Activation::Linear | Activation::Tanh)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Layer widths `n_0..n_L` and one activation per weight layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl NetworkSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least two layers, got {}",
                widths.len()
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::Config(format!(
                "expected {} activations (one per weight layer), got {}",
                widths.len() - 1,
                activations.len()
            )));
        }
        Ok(Self { widths, activations })
    }

    /// Width-1 chain `x -> w_{L} f(... f(w_1 x))` with `hidden` scalar units,
    /// each followed by `activation`, and a linear readout.
    pub fn chain(hidden: usize, activation: Activation) -> Result<Self> {
        let mut acts = vec![activation; hidden];
        acts.push(Activation::Linear);
        Self::new(vec![1; hidden + 2], acts)
    }

    /// Single linear hidden unit: `f(x) = w_2 w_1 x`.
    pub fn one_mlp() -> Self {
        Self::chain(1, Activation::Linear).expect("static spec")
    }

    /// Multilayer perceptron with a shared hidden activation and linear output.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, activation: Activation) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut acts = vec![activation; hidden.len()];
        acts.push(Activation::Linear);
        Self::new(widths, acts)
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.activations.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    /// Activation of weight layer `layer` (1-based, matching `W_layer`).
    pub fn activation(&self, layer: usize) -> Activation {
        self.activations[layer - 1]
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Total number of hidden units, i.e. the dimension of the free activities
    /// during supervised inference.
    pub fn hidden_units(&self) -> usize {
        self.widths[1..self.widths.len() - 1].iter().sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.widths.windows(2).map(|p| p[0] * p[1]).sum()
    }
}

/// Per-layer weight matrices; `layers[l - 1]` is `W_l` with shape `n_l × n_{l-1}`.
///
/// Also used to carry weight gradients, which share the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    layers: Vec<DMatrix<f64>>,
}

impl WeightSet {
    pub fn new(spec: &NetworkSpec, layers: Vec<DMatrix<f64>>) -> Result<Self> {
        if layers.len() != spec.depth() {
            return Err(Error::Shape(format!(
                "expected {} weight matrices, got {}",
                spec.depth(),
                layers.len()
            )));
        }
        for (l, m) in layers.iter().enumerate() {
            let want = (spec.width(l + 1), spec.width(l));
            if m.shape() != want {
                return Err(Error::Shape(format!(
                    "W_{} has shape {:?}, expected {:?}",
                    l + 1,
                    m.shape(),
                    want
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("W_{} has non-finite entries", l + 1)));
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = (1..=spec.depth())
            .map(|l| DMatrix::zeros(spec.width(l), spec.width(l - 1)))
            .collect();
        Self { layers }
    }

    /// Identity-like weights (ones on the main diagonal).
    pub fn identity(spec: &NetworkSpec) -> Self {
        let layers = (1..=spec.depth())
            .map(|l| DMatrix::identity(spec.width(l), spec.width(l - 1)))
            .collect();
        Self { layers }
    }

    /// Weights for a width-1 chain from a list of scalars.
    pub fn from_scalars(spec: &NetworkSpec, values: &[f64]) -> Result<Self> {
        if spec.widths().iter().any(|&n| n != 1) {
            return Err(Error::Shape("from_scalars requires a width-1 chain".into()));
        }
        Self::new(
            spec,
            values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
        )
    }

    /// Every entry drawn from `Uniform(-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(spec: &NetworkSpec, bound: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let layers = (1..=spec.depth())
            .map(|l| DMatrix::from_fn(spec.width(l), spec.width(l - 1), |_, _| dist.sample(rng)))
            .collect();
        Self { layers }
    }

    /// Fan-in scaled init: entries of `W_l` from `Uniform(±1/sqrt(n_{l-1}))`.
    pub fn fan_in_uniform<R: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let layers = (1..=spec.depth())
            .map(|l| {
                let bound = 1.0 / (spec.width(l - 1) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                DMatrix::from_fn(spec.width(l), spec.width(l - 1), |_, _| dist.sample(rng))
            })
            .collect();
        Self { layers }
    }

    /// `W_l`, 1-based.
    pub fn layer(&self, l: usize) -> &DMatrix<f64> {
        &self.layers[l - 1]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut DMatrix<f64> {
        &mut self.layers[l - 1]
    }

    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &WeightSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            *a += b * alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> WeightSet {
        WeightSet {
            layers: self.layers.iter().map(|m| m * alpha).collect(),
        }
    }

    pub fn dot(&self, other: &WeightSet) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }

    /// All entries, layer by layer, column-major within a layer.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|m| m.iter().copied()).collect()
    }

    pub fn from_flat(spec: &NetworkSpec, flat: &[f64]) -> Result<Self> {
        if flat.len() != spec.parameter_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                spec.parameter_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(spec.depth());
        for l in 1..=spec.depth() {
            let (r, c) = (spec.width(l), spec.width(l - 1));
            layers.push(DMatrix::from_column_slice(r, c, &flat[offset..offset + r * c]));
            offset += r * c;
        }
        WeightSet::new(spec, layers)
    }

    pub fn negated(&self) -> WeightSet {
        self.scaled(-1.0)
    }
}

/// Inputs and targets, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: DMatrix<f64>,
    targets: DMatrix<f64>,
}

impl Batch {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if inputs.ncols() != targets.ncols() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                inputs.ncols(),
                targets.ncols()
            )));
        }
        if inputs.ncols() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if inputs.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("batch contains non-finite values".into()));
        }
        Ok(Self { inputs, targets })
    }

    /// A batch of one sample.
    pub fn single(x: &[f64], y: &[f64]) -> Self {
        Self::new(
            DMatrix::from_column_slice(x.len(), 1, x),
            DMatrix::from_column_slice(y.len(), 1, y),
        )
        .expect("single finite sample")
    }

    /// Scalar regression pairs `(x_i, y_i)`.
    pub fn scalar_pairs(xs: &[f64], ys: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(1, xs.len(), xs),
            DMatrix::from_row_slice(1, ys.len(), ys),
        )
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Columns `start..end` as a new batch.
    pub fn slice(&self, start: usize, end: usize) -> Batch {
        Batch {
            inputs: self.inputs.columns(start, end - start).into_owned(),
            targets: self.targets.columns(start, end - start).into_owned(),
        }
    }

    /// Gather the given sample indices.
    pub fn select(&self, indices: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.select_columns(indices),
            targets: self.targets.select_columns(indices),
        }
    }

    pub(crate) fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.inputs.nrows() != spec.input_width() {
            return Err(Error::Shape(format!(
                "input width {} does not match n_0 = {}",
                self.inputs.nrows(),
                spec.input_width()
            )));
        }
        if self.targets.nrows() != spec.output_width() {
            return Err(Error::Shape(format!(
                "target width {} does not match n_L = {}",
                self.targets.nrows(),
                spec.output_width()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_weights(spec: &NetworkSpec, w: &WeightSet) -> Result<()> {
    if w.depth() != spec.depth() {
        return Err(Error::Shape(format!(
            "weights have {} layers, spec has {}",
            w.depth(),
            spec.depth()
        )));
    }
    for l in 1..=spec.depth() {
        let want = (spec.width(l), spec.width(l - 1));
        if w.layer(l).shape() != want {
            return Err(Error::Shape(format!(
                "W_{l} has shape {:?}, expected {want:?}",
                w.layer(l).shape()
            )));
        }
    }
    Ok(())
}

/// Pre-activations and activations of a batched forward pass.
/// `pre[l]` is empty for `l = 0`.
pub(crate) struct ForwardPass {
    pub pre: Vec<DMatrix<f64>>,
    pub act: Vec<DMatrix<f64>>,
}

pub(crate) fn forward_pass(spec: &NetworkSpec, w: &WeightSet, inputs: &DMatrix<f64>) -> ForwardPass {
    let l_max = spec.depth();
    let mut pre = Vec::with_capacity(l_max + 1);
    let mut act = Vec::with_capacity(l_max + 1);
    pre.push(DMatrix::zeros(0, 0));
    act.push(inputs.clone());
    for l in 1..=l_max {
        let a = w.layer(l) * &act[l - 1];
        let f = spec.activation(l);
        act.push(a.map(|v| f.apply(v)));
        pre.push(a);
    }
    ForwardPass { pre, act }
}

/// Feedforward activities for a single input; only `z_0` is marked clamped.
pub fn feedforward(spec: &NetworkSpec, w: &WeightSet, x: &DVector<f64>) -> Result<ActivityState> {
    check_weights(spec, w)?;
    if x.len() != spec.input_width() {
        return Err(Error::Shape(format!(
            "input has width {}, expected {}",
            x.len(),
            spec.input_width()
        )));
    }
    let inputs = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    feedforward_batch(spec, w, &inputs)
}

/// Feedforward activities for a column batch of inputs.
pub fn feedforward_batch(spec: &NetworkSpec, w: &WeightSet, inputs: &DMatrix<f64>) -> Result<ActivityState> {
    check_weights(spec, w)?;
    if inputs.nrows() != spec.input_width() {
        return Err(Error::Shape(format!(
            "input has width {}, expected {}",
            inputs.nrows(),
            spec.input_width()
        )));
    }
    let fp = forward_pass(spec, w, inputs);
    let mut clamped = vec![false; spec.depth() + 1];
    clamped[0] = true;
    Ok(ActivityState::from_parts(fp.act, clamped))
}

/// Network outputs `ŷ` for a column batch of inputs.
pub fn predict(spec: &NetworkSpec, w: &WeightSet, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut state = feedforward_batch(spec, w, inputs)?;
    Ok(state.take_layer(spec.depth()))
}

/// Per-sample `½‖y − ŷ‖²`.
pub fn sample_losses(spec: &NetworkSpec, w: &WeightSet, batch: &Batch) -> Result<Vec<f64>> {
    check_weights(spec, w)?;
    batch.check(spec)?;
    let out = predict(spec, w, batch.inputs())?;
    let diff = batch.targets() - out;
    Ok(diff
        .column_iter()
        .map(|c| 0.5 * c.norm_squared())
        .collect())
}

/// Mean over samples of `½‖y − ŷ‖²`.
pub fn loss(spec: &NetworkSpec, w: &WeightSet, batch: &Batch) -> Result<f64> {
    let per = sample_losses(spec, w, batch)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Exact gradient of [`loss`] w.r.t. every weight matrix, averaged over the batch.
pub fn bp_grad(spec: &NetworkSpec, w: &WeightSet, batch: &Batch) -> Result<WeightSet> {
    check_weights(spec, w)?;
    batch.check(spec)?;
    let l_max = spec.depth();
    let scale = 1.0 / batch.len() as f64;
    let fp = forward_pass(spec, w, batch.inputs());

    let f_out = spec.activation(l_max);
    let mut delta = (&fp.act[l_max] - batch.targets())
        .zip_map(&fp.pre[l_max], |d, a| d * f_out.derivative(a));
    let mut grads = vec![DMatrix::zeros(0, 0); l_max];
    for l in (1..=l_max).rev() {
        grads[l - 1] = &delta * fp.act[l - 1].transpose() * scale;
        if l > 1 {
            let f = spec.activation(l - 1);
            delta = (w.layer(l).transpose() * &delta)
                .zip_map(&fp.pre[l - 1], |d, a| d * f.derivative(a));
        }
    }
    Ok(WeightSet { layers: grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::assert_close;

    fn one_mlp(w1: f64, w2: f64) -> (NetworkSpec, WeightSet) {
        let spec = NetworkSpec::one_mlp();
        let w = WeightSet::from_scalars(&spec, &[w1, w2]).unwrap();
        (spec, w)
    }

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec::new(vec![3], vec![]).is_err());
        assert!(NetworkSpec::new(vec![3, 0], vec![Activation::Linear]).is_err());
        assert!(NetworkSpec::new(vec![3, 2], vec![]).is_err());
        let s = NetworkSpec::chain(5, Activation::Tanh).unwrap();
        assert_eq!(s.depth(), 6);
        assert_eq!(s.hidden_units(), 5);
        assert_eq!(s.activation(6), Activation::Linear);
    }

    #[test]
    fn zero_weights_give_zero_activities() {
        let spec = NetworkSpec::mlp(3, &[4, 2], 2, Activation::Tanh).unwrap();
        let w = WeightSet::zeros(&spec);
        let z = feedforward(&spec, &w, &DVector::from_vec(vec![1.0, -2.0, 0.5])).unwrap();
        for l in 1..=spec.depth() {
            assert!(z.layer(l).iter().all(|&v| v == 0.0));
        }
        assert!(z.is_clamped(0));
        assert!(!z.is_clamped(1));
    }

    #[test]
    fn one_mlp_forward_by_hand() {
        let (spec, w) = one_mlp(0.5, -2.0);
        let z = feedforward(&spec, &w, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(z.layer(1)[(0, 0)], 0.5);
        assert_eq!(z.layer(2)[(0, 0)], -1.0);
    }

    #[test]
    fn identity_chain_is_identity() {
        let spec = NetworkSpec::new(vec![3, 3, 3, 3], vec![Activation::Linear; 3]).unwrap();
        let w = WeightSet::identity(&spec);
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let z = feedforward(&spec, &w, &x).unwrap();
        assert_eq!(z.layer(3).column(0), x.column(0));
    }

    #[test]
    fn shape_errors() {
        let (spec, w) = one_mlp(1.0, 1.0);
        assert!(feedforward(&spec, &w, &DVector::zeros(2)).is_err());
        let bad = Batch::single(&[1.0, 2.0], &[1.0]);
        assert!(loss(&spec, &w, &bad).is_err());
    }

    #[test]
    fn loss_examples() {
        let (spec, w) = one_mlp(1.0, 1.0);
        assert_close(loss(&spec, &w, &Batch::single(&[1.0], &[-1.0])).unwrap(), 2.0, 0.0);
        assert_close(loss(&spec, &w, &Batch::single(&[1.0], &[1.0])).unwrap(), 0.0, 0.0);
    }

    #[test]
    fn bp_grad_one_mlp_by_hand() {
        let (spec, w) = one_mlp(1.0, 1.0);
        let g = bp_grad(&spec, &w, &Batch::single(&[1.0], &[-1.0])).unwrap();
        assert_close(g.layer(1)[(0, 0)], 2.0, 1e-15);
        assert_close(g.layer(2)[(0, 0)], 2.0, 1e-15);
    }

    #[test]
    fn bp_grad_vanishes_on_solution_manifold() {
        let (spec, w) = one_mlp(0.25, -4.0);
        let g = bp_grad(&spec, &w, &Batch::single(&[1.0], &[-1.0])).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn relu_derivative_at_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-300), 1.0);
    }

    #[test]
    fn flat_roundtrip() {
        let spec = NetworkSpec::mlp(3, &[4], 2, Activation::Relu).unwrap();
        let mut rng = rand::rng();
        let w = WeightSet::uniform(&spec, 1.0, &mut rng);
        let back = WeightSet::from_flat(&spec, &w.to_flat()).unwrap();
        assert_eq!(w, back);
    }
}
