//! Predictive-coding free energy, its activity and weight gradients, and the
//! inference phase that relaxes free activities towards an energy minimum.
//!
//! The energy of a state is
//!
//! ```text
//! F = Σ_l ½ ε_lᵀ Π_l ε_l,    ε_l = z_l − f_l(W_l z_{l−1})
//! ```
//!
//! All routines accept a column batch of activities; each column is relaxed
//! independently of the others.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{check_weights, forward_pass, Batch, NetworkSpec, WeightSet};

/// Diagonal precision vectors `Π_1..Π_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precisions {
    layers: Vec<DVector<f64>>,
}

impl Precisions {
    pub fn ones(spec: &NetworkSpec) -> Self {
        Self {
            layers: (1..=spec.depth())
                .map(|l| DVector::from_element(spec.width(l), 1.0))
                .collect(),
        }
    }

    pub fn new(spec: &NetworkSpec, layers: Vec<DVector<f64>>) -> Result<Self> {
        if layers.len() != spec.depth() {
            return Err(Error::Shape(format!(
                "expected {} precision vectors, got {}",
                spec.depth(),
                layers.len()
            )));
        }
        for (i, p) in layers.iter().enumerate() {
            if p.len() != spec.width(i + 1) {
                return Err(Error::Shape(format!(
                    "Π_{} has length {}, expected {}",
                    i + 1,
                    p.len(),
                    spec.width(i + 1)
                )));
            }
            if p.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("Π_{} must be positive", i + 1)));
            }
        }
        Ok(Self { layers })
    }

    /// `Π_l`, 1-based.
    pub fn layer(&self, l: usize) -> &DVector<f64> {
        &self.layers[l - 1]
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub(crate) fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let widths_match = self.layers.len() == spec.depth()
            && self.layers.iter().enumerate().all(|(i, p)| p.len() == spec.width(i + 1));
        if widths_match {
            Ok(())
        } else {
            Err(Error::Shape("precisions do not match the network widths".into()))
        }
    }
}

/// Activities `z_0..z_L`, one column per sample, plus per-layer clamp flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityState {
    layers: Vec<DMatrix<f64>>,
    clamped: Vec<bool>,
}

impl ActivityState {
    pub(crate) fn from_parts(layers: Vec<DMatrix<f64>>, clamped: Vec<bool>) -> Self {
        debug_assert_eq!(layers.len(), clamped.len());
        Self { layers, clamped }
    }

    /// Build a single-sample state from per-layer vectors. `z_0` is clamped,
    /// `z_L` is clamped when `clamp_output` is set.
    pub fn from_vectors(layers: Vec<DVector<f64>>, clamp_output: bool) -> Self {
        let n = layers.len();
        let mut clamped = vec![false; n];
        clamped[0] = true;
        if clamp_output {
            clamped[n - 1] = true;
        }
        let layers = layers
            .into_iter()
            .map(|v| DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
            .collect();
        Self { layers, clamped }
    }

    pub fn layer(&self, l: usize) -> &DMatrix<f64> {
        &self.layers[l]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut DMatrix<f64> {
        &mut self.layers[l]
    }

    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    pub(crate) fn take_layer(&mut self, l: usize) -> DMatrix<f64> {
        std::mem::replace(&mut self.layers[l], DMatrix::zeros(0, 0))
    }

    /// Scalar activity of a width-1 layer for sample 0.
    pub fn scalar(&self, l: usize) -> f64 {
        self.layers[l][(0, 0)]
    }

    pub fn is_clamped(&self, l: usize) -> bool {
        self.clamped[l]
    }

    pub fn set_clamped(&mut self, l: usize, clamped: bool) {
        self.clamped[l] = clamped;
    }

    /// Overwrite layer `l` with `values` and mark it clamped.
    pub fn clamp(&mut self, l: usize, values: &DMatrix<f64>) -> Result<()> {
        if values.shape() != self.layers[l].shape() {
            return Err(Error::Shape(format!(
                "clamp values for layer {l} have shape {:?}, expected {:?}",
                values.shape(),
                self.layers[l].shape()
            )));
        }
        self.layers[l].copy_from(values);
        self.clamped[l] = true;
        Ok(())
    }

    /// Index of the top layer `L`.
    pub fn top(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn batch_size(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn free_layers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.layers.len()).filter(|&l| !self.clamped[l])
    }

    /// Sample `j` as a single-column state.
    pub fn column(&self, j: usize) -> ActivityState {
        ActivityState {
            layers: self.layers.iter().map(|m| m.columns(j, 1).into_owned()).collect(),
            clamped: self.clamped.clone(),
        }
    }

    /// Free activities of sample `j` stacked bottom-up into one vector.
    pub fn free_vector(&self, j: usize) -> DVector<f64> {
        let parts: Vec<f64> = self
            .free_layers()
            .flat_map(|l| self.layers[l].column(j).iter().copied().collect::<Vec<_>>())
            .collect();
        DVector::from_vec(parts)
    }

    /// Inverse of [`free_vector`](Self::free_vector).
    pub fn set_free_vector(&mut self, j: usize, v: &DVector<f64>) -> Result<()> {
        let dim: usize = self.free_layers().map(|l| self.layers[l].nrows()).sum();
        if v.len() != dim {
            return Err(Error::Shape(format!(
                "free vector has length {}, expected {dim}",
                v.len()
            )));
        }
        let free: Vec<usize> = self.free_layers().collect();
        let mut offset = 0;
        for l in free {
            let n = self.layers[l].nrows();
            self.layers[l]
                .column_mut(j)
                .copy_from(&v.rows(offset, n));
            offset += n;
        }
        Ok(())
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.depth() + 1 {
            return Err(Error::Shape(format!(
                "state has {} layers, spec has {}",
                self.layers.len(),
                spec.depth() + 1
            )));
        }
        let b = self.batch_size();
        for (l, m) in self.layers.iter().enumerate() {
            if m.nrows() != spec.width(l) || m.ncols() != b {
                return Err(Error::Shape(format!(
                    "layer {l} has shape {:?}, expected ({}, {b})",
                    m.shape(),
                    spec.width(l)
                )));
            }
        }
        if !self.clamped[0] {
            return Err(Error::Config("z_0 must be clamped".into()));
        }
        Ok(())
    }
}

/// Euler step size, iteration budget and step-halving rule for inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSchedule {
    pub step_size: f64,
    pub max_iters: usize,
    /// How many times the step size may be halved.
    pub halving_count: u32,
    /// Halve when the energy decreases by no more than this between iterations.
    pub halving_trigger_tolerance: f64,
    /// Stop once the max-norm of the activity gradient falls below this.
    pub convergence_tolerance: f64,
}

impl Default for InferenceSchedule {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            max_iters: 20,
            halving_count: 0,
            halving_trigger_tolerance: 1e-10,
            convergence_tolerance: 1e-8,
        }
    }
}

impl InferenceSchedule {
    /// Plain Euler, `η = 0.1`, `T = 20`: the toy-model schedule.
    pub fn toy() -> Self {
        Self::default()
    }

    /// `dt = 0.1` halved up to twice, `T = 500`: the deep-chain schedule.
    pub fn chains() -> Self {
        Self {
            max_iters: 500,
            halving_count: 2,
            ..Self::default()
        }
    }

    /// Like [`chains`](Self::chains) with `T = 1000`.
    pub fn wide() -> Self {
        Self {
            max_iters: 1000,
            ..Self::chains()
        }
    }

    pub fn with_max_iters(mut self, t: usize) -> Self {
        self.max_iters = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config("inference step size must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("inference needs at least one iteration".into()));
        }
        if !(self.convergence_tolerance >= 0.0) {
            return Err(Error::Config("convergence tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Outcome of relaxing a batch of activity columns.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub state: ActivityState,
    /// Energy of each sample, starting with the initial state and then one
    /// entry per iteration it took part in.
    pub traces: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub final_step_sizes: Vec<f64>,
}

impl InferenceResult {
    pub fn final_energies(&self) -> Vec<f64> {
        self.traces.iter().map(|t| *t.last().unwrap()).collect()
    }

    pub fn mean_energy(&self) -> f64 {
        let e = self.final_energies();
        e.iter().sum::<f64>() / e.len() as f64
    }

    /// Batch-mean energy per iteration. Samples that stopped early contribute
    /// their final energy.
    pub fn energy_trace(&self) -> Vec<f64> {
        let len = self.traces.iter().map(Vec::len).max().unwrap_or(0);
        let b = self.traces.len() as f64;
        (0..len)
            .map(|i| {
                self.traces
                    .iter()
                    .map(|t| t[i.min(t.len() - 1)])
                    .sum::<f64>()
                    / b
            })
            .collect()
    }

    pub fn max_iterations(&self) -> usize {
        self.iterations.iter().copied().max().unwrap_or(0)
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Scratch buffers reused across inference iterations.
struct Workspace {
    /// `W_l z_{l−1}`
    pre: Vec<DMatrix<f64>>,
    /// `f_l'(W_l z_{l−1})`
    dact: Vec<DMatrix<f64>>,
    /// `ε_l`
    eps: Vec<DMatrix<f64>>,
    /// `Π_l ⊙ ε_l`
    perr: Vec<DMatrix<f64>>,
}

impl Workspace {
    fn new(spec: &NetworkSpec, b: usize) -> Self {
        let mk = |l: usize| DMatrix::zeros(if l == 0 { 0 } else { spec.width(l) }, b);
        let n = spec.depth() + 1;
        Self {
            pre: (0..n).map(mk).collect(),
            dact: (0..n).map(mk).collect(),
            eps: (0..n).map(mk).collect(),
            perr: (0..n).map(mk).collect(),
        }
    }

    /// Recompute errors for all layers. When `reuse_first` is set the bottom
    /// pre-activation `W_1 z_0` is assumed current (z_0 is always clamped).
    fn update(&mut self, spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, z: &[DMatrix<f64>], reuse_first: bool) {
        for l in 1..=spec.depth() {
            if l > 1 || !reuse_first {
                self.pre[l].gemm(1.0, w.layer(l), &z[l - 1], 0.0);
            }
            let f = spec.activation(l);
            let p = prec.layer(l);
            let n = spec.width(l);
            let p = p.as_slice();
            let cols = self.pre[l]
                .as_slice()
                .chunks_exact(n)
                .zip(z[l].as_slice().chunks_exact(n))
                .zip(self.eps[l].as_mut_slice().chunks_exact_mut(n))
                .zip(self.perr[l].as_mut_slice().chunks_exact_mut(n))
                .zip(self.dact[l].as_mut_slice().chunks_exact_mut(n));
            for ((((pre, zl), eps), perr), dact) in cols {
                for i in 0..n {
                    let (fa, da) = f.apply_with_derivative(pre[i]);
                    let e = zl[i] - fa;
                    eps[i] = e;
                    perr[i] = p[i] * e;
                    dact[i] = da;
                }
            }
        }
    }

    fn column_energies(&self, spec: &NetworkSpec, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for l in 1..=spec.depth() {
            let n = spec.width(l);
            let cols = self.eps[l].as_slice().chunks_exact(n).zip(self.perr[l].as_slice().chunks_exact(n));
            for (acc, (e, p)) in out.iter_mut().zip(cols) {
                *acc += 0.5 * e.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }

    /// `∂F/∂z_l` for every free layer; clamped layers are left untouched in `grads`.
    fn activity_grads(&self, spec: &NetworkSpec, w: &WeightSet, clamped: &[bool], grads: &mut [DMatrix<f64>], back: &mut [DMatrix<f64>]) {
        let l_max = spec.depth();
        for l in 1..=l_max {
            if clamped[l] {
                continue;
            }
            grads[l].copy_from(&self.perr[l]);
            if l < l_max {
                // back = f'(pre_{l+1}) ⊙ Π ε_{l+1}
                let b = &mut back[l + 1];
                for ((o, &d), &pe) in b
                    .as_mut_slice()
                    .iter_mut()
                    .zip(self.dact[l + 1].as_slice())
                    .zip(self.perr[l + 1].as_slice())
                {
                    *o = d * pe;
                }
                grads[l].gemm_tr(-1.0, w.layer(l + 1), &back[l + 1], 1.0);
            }
        }
    }

    fn weight_grads(&self, spec: &NetworkSpec, z: &[DMatrix<f64>]) -> WeightSet {
        let b = z[0].ncols() as f64;
        let mut layers = Vec::with_capacity(spec.depth());
        for l in 1..=spec.depth() {
            let delta = self.perr[l].component_mul(&self.dact[l]);
            layers.push(-(delta * z[l - 1].transpose()) / b);
        }
        WeightSet::new(spec, layers).expect("gradient shapes match the network")
    }
}

fn check_all(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, state: &ActivityState) -> Result<()> {
    check_weights(spec, w)?;
    state.check(spec)?;
    prec.check(spec)
}

fn workspace_for(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, state: &ActivityState) -> Workspace {
    let mut ws = Workspace::new(spec, state.batch_size());
    ws.update(spec, w, prec, &state.layers, false);
    ws
}

/// Per-sample energies of a state.
pub fn sample_energies(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, state: &ActivityState) -> Result<Vec<f64>> {
    check_all(spec, w, prec, state)?;
    let ws = workspace_for(spec, w, prec, state);
    let mut out = vec![0.0; state.batch_size()];
    ws.column_energies(spec, &mut out);
    Ok(out)
}

/// Free energy, averaged over the columns of `state`.
pub fn energy(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, state: &ActivityState) -> Result<f64> {
    let e = sample_energies(spec, w, prec, state)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// `∂F/∂z_l` per sample for each free layer. Entries for clamped layers are zero.
pub fn energy_activity_grads(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, state: &ActivityState) -> Result<Vec<DMatrix<f64>>> {
    check_all(spec, w, prec, state)?;
    if state.free_layers().next().is_none() {
        return Err(Error::Config("no free layers to differentiate".into()));
    }
    let ws = workspace_for(spec, w, prec, state);
    let mut grads: Vec<DMatrix<f64>> = state.layers.iter().map(|m| DMatrix::zeros(m.nrows(), m.ncols())).collect();
    let mut back = grads.clone();
    ws.activity_grads(spec, w, &state.clamped, &mut grads, &mut back);
    Ok(grads)
}

/// `∂F/∂W_l = −(Π_l ε_l ⊙ f_l'(W_l z_{l−1})) z_{l−1}ᵀ`, averaged over the batch.
pub fn energy_weight_grads(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, state: &ActivityState) -> Result<WeightSet> {
    check_all(spec, w, prec, state)?;
    let ws = workspace_for(spec, w, prec, state);
    Ok(ws.weight_grads(spec, &state.layers))
}

/// Feedforward activities with `z_0 = x` and `z_L` clamped to the targets.
pub fn clamped_feedforward(spec: &NetworkSpec, w: &WeightSet, batch: &Batch) -> Result<ActivityState> {
    check_weights(spec, w)?;
    batch.check(spec)?;
    let fp = forward_pass(spec, w, batch.inputs());
    let mut layers = fp.act;
    let top = spec.depth();
    layers[top].copy_from(batch.targets());
    let mut clamped = vec![false; top + 1];
    clamped[0] = true;
    clamped[top] = true;
    Ok(ActivityState::from_parts(layers, clamped))
}

/// Relax the free layers of `state` by Euler steps on the energy.
///
/// Each column keeps its own step size, halving count and stopping flag, so
/// the result for a sample does not depend on which other samples share the
/// batch.
pub fn relax(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, mut state: ActivityState, schedule: &InferenceSchedule) -> Result<InferenceResult> {
    check_all(spec, w, prec, &state)?;
    schedule.validate()?;
    let b = state.batch_size();
    let free: Vec<usize> = state.free_layers().collect();

    let mut ws = workspace_for(spec, w, prec, &state);
    let mut energies = vec![0.0; b];
    ws.column_energies(spec, &mut energies);
    let mut traces: Vec<Vec<f64>> = energies.iter().map(|&e| vec![e]).collect();
    let mut iterations = vec![0usize; b];
    let mut converged = vec![false; b];
    let mut step = vec![schedule.step_size; b];
    let mut halvings = vec![0u32; b];

    if free.is_empty() {
        return Ok(InferenceResult {
            state,
            traces,
            iterations,
            converged: vec![true; b],
            final_step_sizes: step,
        });
    }

    let mut grads: Vec<DMatrix<f64>> = state.layers.iter().map(|m| DMatrix::zeros(m.nrows(), b)).collect();
    let mut back = grads.clone();
    let mut saved: Vec<DMatrix<f64>> = free.iter().map(|&l| state.layers[l].clone()).collect();
    let mut candidate = vec![0.0; b];
    let mut active = vec![true; b];

    let mut gmax = vec![0.0; b];
    let mut eta = vec![0.0; b];
    // per-column max |∂F/∂z| over the free layers
    let grad_max = |grads: &[DMatrix<f64>], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &l in &free {
            let n = grads[l].nrows();
            for (m, col) in out.iter_mut().zip(grads[l].as_slice().chunks_exact(n)) {
                *m = col.iter().fold(*m, |acc, v| acc.max(v.abs()));
            }
        }
    };

    for it in 0..schedule.max_iters {
        ws.activity_grads(spec, w, &state.clamped, &mut grads, &mut back);
        grad_max(&grads, &mut gmax);
        for j in 0..b {
            if active[j] && gmax[j] < schedule.convergence_tolerance {
                active[j] = false;
                converged[j] = true;
            }
            eta[j] = if active[j] { step[j] } else { 0.0 };
        }
        if !active.iter().any(|&a| a) {
            break;
        }

        for (k, &l) in free.iter().enumerate() {
            saved[k].copy_from(&state.layers[l]);
            let n = state.layers[l].nrows();
            let cols = state.layers[l].as_mut_slice().chunks_exact_mut(n).zip(grads[l].as_slice().chunks_exact(n));
            for ((z, g), &e) in cols.zip(&eta) {
                for (zi, gi) in z.iter_mut().zip(g) {
                    *zi -= e * gi;
                }
            }
        }
        ws.update(spec, w, prec, &state.layers, true);
        ws.column_energies(spec, &mut candidate);

        let mut rejected = false;
        for j in 0..b {
            if !active[j] {
                continue;
            }
            if !candidate[j].is_finite() {
                return Err(Error::InferenceDivergence { iteration: it + 1 });
            }
            iterations[j] += 1;
            let decrease = energies[j] - candidate[j];
            if decrease <= schedule.halving_trigger_tolerance && halvings[j] < schedule.halving_count {
                step[j] *= 0.5;
                halvings[j] += 1;
                if candidate[j] > energies[j] {
                    for (k, &l) in free.iter().enumerate() {
                        state.layers[l].column_mut(j).copy_from(&saved[k].column(j));
                    }
                    candidate[j] = energies[j];
                    rejected = true;
                }
            }
            energies[j] = candidate[j];
            traces[j].push(energies[j]);
        }
        if rejected {
            ws.update(spec, w, prec, &state.layers, true);
        }
    }

    ws.activity_grads(spec, w, &state.clamped, &mut grads, &mut back);
    grad_max(&grads, &mut gmax);
    for j in 0..b {
        if active[j] && gmax[j] < schedule.convergence_tolerance {
            converged[j] = true;
        }
    }

    Ok(InferenceResult {
        state,
        traces,
        iterations,
        converged,
        final_step_sizes: step,
    })
}

/// Supervised inference: feedforward initialisation, `z_0 = x` and `z_L = y`
/// clamped, then [`relax`].
pub fn run_inference(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, batch: &Batch, schedule: &InferenceSchedule) -> Result<InferenceResult> {
    let state = clamped_feedforward(spec, w, batch)?;
    relax(spec, w, prec, state, schedule)
}

/// Single-sample convenience wrapper around [`run_inference`].
pub fn run_inference_sample(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, x: &[f64], y: &[f64], schedule: &InferenceSchedule) -> Result<InferenceResult> {
    run_inference(spec, w, prec, &Batch::single(x, y), schedule)
}

/// [`run_inference`] over chunks of `chunk` samples processed in parallel.
pub fn run_inference_parallel(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, batch: &Batch, schedule: &InferenceSchedule, chunk: usize) -> Result<InferenceResult> {
    let chunk = chunk.max(1);
    let b = batch.len();
    if chunk >= b {
        return run_inference(spec, w, prec, batch, schedule);
    }
    let starts: Vec<usize> = (0..b).step_by(chunk).collect();
    let parts: Vec<InferenceResult> = starts
        .par_iter()
        .map(|&s| run_inference(spec, w, prec, &batch.slice(s, (s + chunk).min(b)), schedule))
        .collect::<Result<_>>()?;

    let mut layers: Vec<DMatrix<f64>> = (0..=spec.depth()).map(|l| DMatrix::zeros(spec.width(l), b)).collect();
    let mut result = InferenceResult {
        state: ActivityState::from_parts(Vec::new(), parts[0].state.clamped.clone()),
        traces: Vec::with_capacity(b),
        iterations: Vec::with_capacity(b),
        converged: Vec::with_capacity(b),
        final_step_sizes: Vec::with_capacity(b),
    };
    for (s, part) in starts.iter().zip(parts) {
        let n = part.state.batch_size();
        for (l, m) in layers.iter_mut().enumerate() {
            m.columns_mut(*s, n).copy_from(part.state.layer(l));
        }
        result.traces.extend(part.traces);
        result.iterations.extend(part.iterations);
        result.converged.extend(part.converged);
        result.final_step_sizes.extend(part.final_step_sizes);
    }
    result.state.layers = layers;
    Ok(result)
}

/// Write `iteration,energy` rows.
pub fn write_energy_trace_csv<W: Write>(trace: &[f64], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["iteration", "energy"])?;
    for (i, e) in trace.iter().enumerate() {
        wtr.write_record([i.to_string(), format!("{e:.17e}")])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Equilibrium of the hidden unit of a linear 1MLP with target clamped:
/// `z* = (w_1 x + w_2 y) / (1 + w_2²)`.
pub fn analytic_equilibrium_1mlp(w1: f64, w2: f64, x: f64, y: f64) -> f64 {
    (w1 * x + w2 * y) / (1.0 + w2 * w2)
}

/// Energy at the analytic equilibrium, `F* = L / (1 + w_2²)`.
pub fn equilibrated_energy_1mlp(w1: f64, w2: f64, x: f64, y: f64) -> f64 {
    let e = y - w2 * w1 * x;
    0.5 * e * e / (1.0 + w2 * w2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{feedforward, loss, Activation};
    use crate::testutil::assert_close;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_mlp(w1: f64, w2: f64) -> (NetworkSpec, WeightSet, Precisions) {
        let spec = NetworkSpec::one_mlp();
        let w = WeightSet::from_scalars(&spec, &[w1, w2]).unwrap();
        let p = Precisions::ones(&spec);
        (spec, w, p)
    }

    fn state_1mlp(z: f64, y: f64) -> ActivityState {
        ActivityState::from_vectors(
            vec![DVector::from_element(1, 1.0), DVector::from_element(1, z), DVector::from_element(1, y)],
            true,
        )
    }

    #[test]
    fn energy_at_clamped_feedforward_equals_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = NetworkSpec::mlp(3, &[5, 4], 2, Activation::Tanh).unwrap();
        let w = WeightSet::uniform(&spec, 1.0, &mut rng);
        let batch = Batch::single(&[0.2, -0.7, 1.1], &[0.5, -0.3]);
        let state = clamped_feedforward(&spec, &w, &batch).unwrap();
        let f = energy(&spec, &w, &Precisions::ones(&spec), &state).unwrap();
        assert_close(f, loss(&spec, &w, &batch).unwrap(), 1e-15);
    }

    #[test]
    fn energy_hand_examples() {
        let (spec, w, p) = one_mlp(1.0, 1.0);
        assert_close(energy(&spec, &w, &p, &state_1mlp(0.0, -1.0)).unwrap(), 1.0, 0.0);
        assert_eq!(energy(&spec, &w, &p, &state_1mlp(1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn activity_grad_hand_example() {
        let (spec, w, p) = one_mlp(1.0, 1.0);
        let g = energy_activity_grads(&spec, &w, &p, &state_1mlp(1.0, -1.0)).unwrap();
        assert_close(g[1][(0, 0)], 2.0, 1e-15);
        assert_eq!(g[0][(0, 0)], 0.0);
        assert_eq!(g[2][(0, 0)], 0.0);
    }

    #[test]
    fn activity_grads_vanish_on_free_feedforward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = NetworkSpec::mlp(2, &[3, 3], 2, Activation::Tanh).unwrap();
        let w = WeightSet::uniform(&spec, 1.0, &mut rng);
        let state = feedforward(&spec, &w, &DVector::from_vec(vec![0.4, -0.1])).unwrap();
        let g = energy_activity_grads(&spec, &w, &Precisions::ones(&spec), &state).unwrap();
        assert!(g.iter().all(|m| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn no_free_layers_is_an_error() {
        let (spec, w, p) = one_mlp(1.0, 1.0);
        let mut s = state_1mlp(0.0, -1.0);
        s.set_clamped(1, true);
        assert!(energy_activity_grads(&spec, &w, &p, &s).is_err());
    }

    #[test]
    fn weight_grad_hand_example() {
        let (spec, w, p) = one_mlp(1.0, 1.0);
        let g = energy_weight_grads(&spec, &w, &p, &state_1mlp(0.0, -1.0)).unwrap();
        assert_close(g.layer(1)[(0, 0)], 1.0, 1e-15);
        assert_close(g.layer(2)[(0, 0)], 0.0, 1e-15);
    }

    #[test]
    fn analytic_closed_forms() {
        assert_eq!(analytic_equilibrium_1mlp(1.0, 1.0, 1.0, -1.0), 0.0);
        assert_eq!(analytic_equilibrium_1mlp(0.7, 0.0, 2.0, -3.0), 1.4);
        assert_eq!(analytic_equilibrium_1mlp(1.0, -1.0, 1.0, -1.0), 1.0);
        assert_eq!(equilibrated_energy_1mlp(1.0, 1.0, 1.0, -1.0), 1.0);
        assert_eq!(equilibrated_energy_1mlp(1.0, -1.0, 1.0, -1.0), 0.0);
        assert_eq!(equilibrated_energy_1mlp(0.3, 0.0, 1.0, -1.0), 0.5);
    }

    #[test]
    fn equilibrated_energy_matches_energy_at_equilibrium() {
        for &(w1, w2, x, y) in &[(0.3, -0.8, 1.0, -1.0), (1.5, 2.0, -0.4, 0.9), (-0.2, 0.1, 3.0, 1.0)] {
            let (spec, w, p) = one_mlp(w1, w2);
            let z = analytic_equilibrium_1mlp(w1, w2, x, y);
            let s = ActivityState::from_vectors(
                vec![DVector::from_element(1, x), DVector::from_element(1, z), DVector::from_element(1, y)],
                true,
            );
            assert_close(energy(&spec, &w, &p, &s).unwrap(), equilibrated_energy_1mlp(w1, w2, x, y), 1e-12);
        }
    }

    #[test]
    fn inference_converges_to_analytic_equilibrium() {
        let (spec, w, p) = one_mlp(0.5, 0.5);
        let sched = InferenceSchedule::default().with_max_iters(1000);
        let r = run_inference_sample(&spec, &w, &p, &[1.0], &[-1.0], &sched).unwrap();
        assert!(r.all_converged());
        assert_close(r.state.scalar(1), analytic_equilibrium_1mlp(0.5, 0.5, 1.0, -1.0), 1e-7);
    }

    #[test]
    fn starting_at_equilibrium_does_not_move() {
        let (spec, w, p) = one_mlp(1.0, 1.0);
        let r = relax(&spec, &w, &p, state_1mlp(0.0, -1.0), &InferenceSchedule::toy()).unwrap();
        assert_eq!(r.iterations, vec![0]);
        assert!(r.all_converged());
        assert_eq!(r.state.scalar(1), 0.0);
    }

    #[test]
    fn clamped_layers_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = NetworkSpec::mlp(2, &[4, 3], 2, Activation::Tanh).unwrap();
        let w = WeightSet::uniform(&spec, 1.0, &mut rng);
        let batch = Batch::new(
            DMatrix::from_fn(2, 5, |i, j| (i + j) as f64 * 0.1),
            DMatrix::from_fn(2, 5, |i, j| (i as f64 - j as f64) * 0.2),
        )
        .unwrap();
        let r = run_inference(&spec, &w, &Precisions::ones(&spec), &batch, &InferenceSchedule::chains()).unwrap();
        assert_eq!(r.state.layer(0), batch.inputs());
        assert_eq!(r.state.layer(3), batch.targets());
    }

    #[test]
    fn divergence_is_reported() {
        let (spec, w, p) = one_mlp(1.0, 30.0);
        let sched = InferenceSchedule { step_size: 5.0, max_iters: 500, ..Default::default() };
        let err = run_inference_sample(&spec, &w, &p, &[1.0], &[-1.0], &sched).unwrap_err();
        assert!(matches!(err, Error::InferenceDivergence { .. }));
    }

    #[test]
    fn halving_rescues_a_too_large_step() {
        // η(1 + w_2²) = 2.4 oscillates and grows; halving twice brings it to 0.6.
        let (spec, w, p) = one_mlp(0.3, 1.0);
        let sched = InferenceSchedule { step_size: 1.2, max_iters: 200, halving_count: 2, ..Default::default() };
        let r = run_inference_sample(&spec, &w, &p, &[1.0], &[-1.0], &sched).unwrap();
        assert!(r.all_converged());
        assert!(r.final_step_sizes[0] <= 0.6);
        let t = &r.traces[0];
        assert!(t.windows(2).all(|p| p[1] <= p[0] + 1e-9));
    }

    #[test]
    fn schedule_validation() {
        assert!(InferenceSchedule { step_size: 0.0, ..Default::default() }.validate().is_err());
        assert!(InferenceSchedule { max_iters: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_energy_trace_csv(&[2.0, 1.5], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "iteration,energy");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1,1.5"));
    }
}
