//! Training loops for backprop (BP), predictive coding (PC) and the damped
//! Newton baseline on 1MLPs, with the stopping rules and learning-rate grid
//! search used by the experiments.

use nalgebra::{Matrix2, Vector2};
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::toy;
use crate::data::{Dataset, RegressionTask};
use crate::energy::{run_inference, InferenceResult, InferenceSchedule, Precisions};
use crate::error::{Error, Result};
use crate::network::{bp_grad, loss, Batch, NetworkSpec, WeightSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bp,
    Pc,
    /// `−(H + λI)⁻¹ ∇L` on a 1MLP.
    Trn,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::Pc => "pc",
            Algorithm::Trn => "trn",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bp" => Ok(Algorithm::Bp),
            "pc" => Ok(Algorithm::Pc),
            "trn" => Ok(Algorithm::Trn),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Weight initialisation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightInit {
    /// Every entry `~ Uniform(−bound, bound)`.
    Uniform { bound: f64 },
    /// Entries of `W_l` `~ Uniform(±1/√n_{l−1})`.
    FanIn,
}

impl WeightInit {
    pub fn sample(&self, spec: &NetworkSpec, seed: u64) -> WeightSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // keep init draws apart from the data streams of the same seed
        rng.set_stream(1 << 32);
        match *self {
            WeightInit::Uniform { bound } => WeightSet::uniform(spec, bound, &mut rng),
            WeightInit::FanIn => WeightSet::fan_in_uniform(spec, &mut rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TrainTol,
    TestTol,
    Plateau,
    Diverged,
    MaxBatches,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_batches: usize,
    /// Used by PC only.
    pub inference: InferenceSchedule,
    /// Used by TRN only.
    pub trn_damping: f64,
    pub stop_train_loss: Option<f64>,
    pub stop_test_loss: Option<f64>,
    /// Compare mean train loss over consecutive windows of this many batches.
    pub plateau_window: Option<usize>,
    /// A loss above this (or non-finite) counts as divergence.
    pub divergence_threshold: f64,
    pub test_size: usize,
    pub init: WeightInit,
    pub seed: u64,
    /// Keep the flattened weights seen at every batch.
    pub record_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Bp,
            learning_rate: 0.2,
            batch_size: 64,
            max_batches: 10_000,
            inference: InferenceSchedule::toy(),
            trn_damping: 2.0,
            stop_train_loss: None,
            stop_test_loss: None,
            plateau_window: None,
            divergence_threshold: 1e10,
            test_size: 1000,
            init: WeightInit::Uniform { bound: 1.0 },
            seed: 0,
            record_weights: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.plateau_window == Some(0) {
            return Err(Error::Config("plateau window must be at least 1".into()));
        }
        match self.algorithm {
            Algorithm::Pc => self.inference.validate()?,
            Algorithm::Trn => {
                if spec != &NetworkSpec::one_mlp() {
                    return Err(Error::Config("the TRN baseline is defined for 1MLPs only".into()));
                }
                if !(self.trn_damping >= 0.0) {
                    return Err(Error::Config("TRN damping must be nonnegative".into()));
                }
            }
            Algorithm::Bp => {}
        }
        Ok(())
    }
}

/// Per-batch traces and outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub config: TrainConfig,
    /// Loss on the current batch, evaluated before that batch's update.
    pub train_loss: Vec<f64>,
    /// Held-out loss at the same weights.
    pub test_loss: Vec<f64>,
    /// Mean equilibrium energy of the batch (PC only).
    pub energy: Vec<Option<f64>>,
    /// Full-training-set loss after each epoch (epoch-based runs only).
    pub epoch_loss: Vec<f64>,
    /// Held-out loss after each epoch (epoch-based runs only).
    pub epoch_test_loss: Vec<f64>,
    /// Flattened weights at each recorded batch, if requested.
    pub weight_trace: Vec<Vec<f64>>,
    pub final_weights: WeightSet,
    pub stop_reason: StopReason,
}

impl TrainRecord {
    pub fn batches(&self) -> usize {
        self.train_loss.len()
    }

    pub fn final_train_loss(&self) -> f64 {
        *self.train_loss.last().unwrap_or(&f64::INFINITY)
    }

    /// Weight updates made before the train loss first fell below `threshold`.
    pub fn batches_to_train_loss(&self, threshold: f64) -> Option<usize> {
        first_below(&self.train_loss, threshold)
    }

    pub fn batches_to_test_loss(&self, threshold: f64) -> Option<usize> {
        first_below(&self.test_loss, threshold)
    }

    /// Epochs completed before the epoch loss first fell to `threshold` or below.
    pub fn epochs_to_loss(&self, threshold: f64) -> Option<usize> {
        self.epoch_loss.iter().position(|&l| l <= threshold).map(|i| i + 1)
    }
}

pub fn first_below(series: &[f64], threshold: f64) -> Option<usize> {
    series.iter().position(|&v| v < threshold)
}

fn ensure_finite(w: WeightSet) -> Result<WeightSet> {
    if w.is_finite() {
        Ok(w)
    } else {
        Err(Error::NonFinite("weights left the finite range".into()))
    }
}

/// `w − α ∇L`.
pub fn bp_step(spec: &NetworkSpec, w: &WeightSet, batch: &Batch, lr: f64) -> Result<WeightSet> {
    let g = bp_grad(spec, w, batch)?;
    let mut out = w.clone();
    out.axpy(-lr, &g);
    ensure_finite(out)
}

/// Batch-mean energy weight gradient at the inference equilibrium, together
/// with the inference result it was taken from.
pub fn pc_weight_grads(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, batch: &Batch, schedule: &InferenceSchedule) -> Result<(WeightSet, InferenceResult)> {
    let inf = run_inference(spec, w, prec, batch, schedule)?;
    let g = crate::energy::energy_weight_grads(spec, w, prec, &inf.state)?;
    Ok((g, inf))
}

/// Relax activities to equilibrium, then `w − α ∂F/∂W`.
pub fn pc_step(spec: &NetworkSpec, w: &WeightSet, prec: &Precisions, batch: &Batch, lr: f64, schedule: &InferenceSchedule) -> Result<WeightSet> {
    let (g, _) = pc_weight_grads(spec, w, prec, batch, schedule)?;
    let mut out = w.clone();
    out.axpy(-lr, &g);
    ensure_finite(out)
}

/// `w − α (H + λI)⁻¹ ∇L` with the exact 2×2 loss Hessian of a 1MLP.
pub fn trn_step_1mlp(w: [f64; 2], batch: &Batch, damping: f64, lr: f64) -> Result<[f64; 2]> {
    let g = toy::loss_grad_1mlp(w, batch);
    let h = toy::loss_hessian_1mlp(w, batch) + Matrix2::identity() * damping;
    let step = h
        .lu()
        .solve(&Vector2::new(g[0], g[1]))
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("damped Hessian is not invertible".into()))?;
    let out = [w[0] - lr * step[0], w[1] - lr * step[1]];
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFinite("TRN update".into()))
    }
}

/// Source of training batches and a held-out set.
pub trait Task: Sync {
    /// Batch number `index` of a run with the given seed.
    fn train_batch(&self, index: u64, batch_size: usize, seed: u64) -> Result<Batch>;
    fn test_set(&self, size: usize, seed: u64) -> Result<Batch>;
}

impl Task for RegressionTask {
    fn train_batch(&self, index: u64, batch_size: usize, seed: u64) -> Result<Batch> {
        self.with_seed(seed).sample_draw(batch_size, index)
    }

    fn test_set(&self, size: usize, seed: u64) -> Result<Batch> {
        self.with_seed(seed).test_set(size)
    }
}

fn take_step(spec: &NetworkSpec, config: &TrainConfig, prec: &Precisions, w: &WeightSet, batch: &Batch) -> Result<(WeightSet, Option<f64>)> {
    match config.algorithm {
        Algorithm::Bp => Ok((bp_step(spec, w, batch, config.learning_rate)?, None)),
        Algorithm::Pc => {
            let (g, inf) = pc_weight_grads(spec, w, prec, batch, &config.inference)?;
            let mut out = w.clone();
            out.axpy(-config.learning_rate, &g);
            Ok((ensure_finite(out)?, Some(inf.mean_energy())))
        }
        Algorithm::Trn => {
            let cur = [w.layer(1)[(0, 0)], w.layer(2)[(0, 0)]];
            let next = trn_step_1mlp(cur, batch, config.trn_damping, config.learning_rate)?;
            Ok((WeightSet::from_scalars(spec, &next)?, None))
        }
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_) | Error::InferenceDivergence { .. } | Error::Singular(_))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Train from weights drawn with `config.init` and `config.seed`.
pub fn train<T: Task + ?Sized>(spec: &NetworkSpec, config: &TrainConfig, task: &T) -> Result<TrainRecord> {
    let w0 = config.init.sample(spec, config.seed);
    train_from(spec, config, task, w0)
}

/// Sample, record, check stopping rules, step; repeated until a rule fires.
///
/// Losses are recorded before each update, so record `k` reflects the weights
/// after `k` updates. Divergence is a stop reason, not an error.
pub fn train_from<T: Task + ?Sized>(spec: &NetworkSpec, config: &TrainConfig, task: &T, w0: WeightSet) -> Result<TrainRecord> {
    config.validate(spec)?;
    let prec = Precisions::ones(spec);
    let test = task.test_set(config.test_size, config.seed)?;
    let mut rec = TrainRecord {
        config: config.clone(),
        train_loss: Vec::new(),
        test_loss: Vec::new(),
        energy: Vec::new(),
        epoch_loss: Vec::new(),
        epoch_test_loss: Vec::new(),
        weight_trace: Vec::new(),
        final_weights: w0.clone(),
        stop_reason: StopReason::MaxBatches,
    };
    let mut w = w0;
    let bad = |l: f64| !l.is_finite() || l > config.divergence_threshold;

    for b in 0..config.max_batches {
        let batch = task.train_batch(b as u64, config.batch_size, config.seed)?;
        let train_loss = loss(spec, &w, &batch)?;
        let test_loss = loss(spec, &w, &test)?;
        rec.train_loss.push(train_loss);
        rec.test_loss.push(test_loss);
        if config.record_weights {
            rec.weight_trace.push(w.to_flat());
        }
        if bad(train_loss) || bad(test_loss) {
            rec.energy.push(None);
            rec.stop_reason = StopReason::Diverged;
            break;
        }
        let stop = if config.stop_train_loss.is_some_and(|t| train_loss < t) {
            Some(StopReason::TrainTol)
        } else if config.stop_test_loss.is_some_and(|t| test_loss < t) {
            Some(StopReason::TestTol)
        } else if plateaued(&rec.train_loss, config.plateau_window) {
            Some(StopReason::Plateau)
        } else {
            None
        };
        if let Some(reason) = stop {
            rec.energy.push(None);
            rec.stop_reason = reason;
            break;
        }
        match take_step(spec, config, &prec, &w, &batch) {
            Ok((next, energy)) => {
                rec.energy.push(energy);
                w = next;
            }
            Err(e) if is_divergence(&e) => {
                rec.energy.push(None);
                rec.stop_reason = StopReason::Diverged;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    rec.final_weights = w;
    Ok(rec)
}

/// Mean of the latest `window` losses is no lower than the mean of the
/// window before it; checked whenever a window completes.
fn plateaued(losses: &[f64], window: Option<usize>) -> bool {
    let Some(k) = window else { return false };
    let n = losses.len();
    if n < 2 * k || !n.is_multiple_of(k) {
        return false;
    }
    mean(&losses[n - k..]) >= mean(&losses[n - 2 * k..n - k])
}

/// Epoch-based training on a fixed dataset: each epoch visits a fresh
/// permutation of the training samples in batches of `config.batch_size`.
/// Stops when the full training loss fails to decrease from the previous
/// epoch, diverges, falls to `stop_train_loss` or below, or `max_epochs` is
/// reached. `train_loss`/`test_loss` are recorded per batch as in
/// [`train_from`]; the test loss is only evaluated at epoch boundaries and
/// repeated in between.
pub fn train_epochs(spec: &NetworkSpec, config: &TrainConfig, data: &Dataset, w0: WeightSet, max_epochs: usize) -> Result<TrainRecord> {
    config.validate(spec)?;
    let prec = Precisions::ones(spec);
    let n = data.train.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rec = TrainRecord {
        config: config.clone(),
        train_loss: Vec::new(),
        test_loss: Vec::new(),
        energy: Vec::new(),
        epoch_loss: Vec::new(),
        epoch_test_loss: Vec::new(),
        weight_trace: Vec::new(),
        final_weights: w0.clone(),
        stop_reason: StopReason::MaxBatches,
    };
    let mut w = w0;
    let bad = |l: f64| !l.is_finite() || l > config.divergence_threshold;
    let mut test_loss = loss(spec, &w, &data.test)?;

    'epochs: for _ in 0..max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = data.train.select(chunk);
            let train_loss = loss(spec, &w, &batch)?;
            rec.train_loss.push(train_loss);
            rec.test_loss.push(test_loss);
            if bad(train_loss) {
                rec.energy.push(None);
                rec.stop_reason = StopReason::Diverged;
                break 'epochs;
            }
            match take_step(spec, config, &prec, &w, &batch) {
                Ok((next, energy)) => {
                    rec.energy.push(energy);
                    w = next;
                }
                Err(e) if is_divergence(&e) => {
                    rec.energy.push(None);
                    rec.stop_reason = StopReason::Diverged;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let epoch_loss = loss(spec, &w, &data.train)?;
        test_loss = loss(spec, &w, &data.test)?;
        let previous = rec.epoch_loss.last().copied();
        rec.epoch_loss.push(epoch_loss);
        rec.epoch_test_loss.push(test_loss);
        if bad(epoch_loss) {
            rec.stop_reason = StopReason::Diverged;
            break;
        }
        if config.stop_train_loss.is_some_and(|t| epoch_loss <= t) {
            rec.stop_reason = StopReason::TrainTol;
            break;
        }
        if previous.is_some_and(|p| epoch_loss >= p) {
            rec.stop_reason = StopReason::Plateau;
            break;
        }
    }
    rec.final_weights = w;
    Ok(rec)
}

/// Default learning-rate grid `{1e-4, 1e-3, 1e-2, 1e-1, 1}`.
pub const LR_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// Best learning rate found for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWinner {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    /// Mean over seeds of the final train loss, with losses below the
    /// stopping tolerance counted as equal to it.
    pub score: f64,
    pub mean_batches: f64,
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    /// Every run, ordered by (algorithm, learning rate, seed).
    pub runs: Vec<TrainRecord>,
    pub winners: Vec<GridWinner>,
}

impl GridSearch {
    pub fn winner(&self, algorithm: Algorithm) -> Option<&GridWinner> {
        self.winners.iter().find(|w| w.algorithm == algorithm)
    }

    /// Runs of `algorithm` at its winning learning rate.
    pub fn winning_runs(&self, algorithm: Algorithm) -> Vec<&TrainRecord> {
        let Some(win) = self.winner(algorithm) else { return Vec::new() };
        self.runs
            .iter()
            .filter(|r| r.config.algorithm == algorithm && r.config.learning_rate == win.learning_rate)
            .collect()
    }

    pub fn is_winner(&self, run: &TrainRecord) -> bool {
        self.winner(run.config.algorithm)
            .is_some_and(|w| w.learning_rate == run.config.learning_rate)
    }
}

/// Final train loss used for ranking: diverged runs rank last and losses
/// under the stopping tolerance are treated as ties.
fn ranking_loss(run: &TrainRecord) -> f64 {
    if run.stop_reason == StopReason::Diverged || !run.final_train_loss().is_finite() {
        return f64::INFINITY;
    }
    match run.config.stop_train_loss {
        Some(tol) => run.final_train_loss().max(tol),
        None => run.final_train_loss(),
    }
}

/// Train every (algorithm, lr, seed) combination and pick, per algorithm, the
/// lr with the lowest mean final train loss (ties go to fewer batches).
pub fn grid_search<T: Task + ?Sized>(spec: &NetworkSpec, base: &TrainConfig, algorithms: &[Algorithm], lr_grid: &[f64], task: &T, seeds: &[u64]) -> Result<GridSearch> {
    if lr_grid.is_empty() || seeds.is_empty() || algorithms.is_empty() {
        return Err(Error::Config("grid search needs algorithms, learning rates and seeds".into()));
    }
    let mut jobs = Vec::new();
    for &algorithm in algorithms {
        for &lr in lr_grid {
            for &seed in seeds {
                jobs.push(TrainConfig { algorithm, learning_rate: lr, seed, ..base.clone() });
            }
        }
    }
    let runs: Vec<TrainRecord> = jobs
        .par_iter()
        .map(|cfg| train(spec, cfg, task))
        .collect::<Result<_>>()?;

    let mut winners = Vec::new();
    for &algorithm in algorithms {
        let mut best: Option<GridWinner> = None;
        for &lr in lr_grid {
            let group: Vec<&TrainRecord> = runs
                .iter()
                .filter(|r| r.config.algorithm == algorithm && r.config.learning_rate == lr)
                .collect();
            let score = group.iter().map(|r| ranking_loss(r)).sum::<f64>() / group.len() as f64;
            let mean_batches = group.iter().map(|r| r.batches() as f64).sum::<f64>() / group.len() as f64;
            let cand = GridWinner { algorithm, learning_rate: lr, score, mean_batches };
            let better = match &best {
                None => true,
                Some(b) => cand.score < b.score || (cand.score == b.score && cand.mean_batches < b.mean_batches),
            };
            if better {
                best = Some(cand);
            }
        }
        winners.extend(best);
    }
    Ok(GridSearch { runs, winners })
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

    fn scalars(w: &WeightSet) -> (f64, f64) {
        (w.layer(1)[(0, 0)], w.layer(2)[(0, 0)])
    }

    #[test]
    fn bp_step_by_hand() {
        let (spec, w) = one_mlp(1.0, 1.0);
        let next = bp_step(&spec, &w, &Batch::single(&[1.0], &[-1.0]), 0.2).unwrap();
        let (a, b) = scalars(&next);
        assert_close(a, 0.6, 1e-15);
        assert_close(b, 0.6, 1e-15);
    }

    #[test]
    fn bp_step_is_noop_on_manifold() {
        let (spec, w) = one_mlp(2.0, -0.5);
        let next = bp_step(&spec, &w, &Batch::single(&[1.0], &[-1.0]), 0.2).unwrap();
        assert_eq!(next, w);
    }

    #[test]
    fn pc_step_by_hand() {
        let (spec, w) = one_mlp(1.0, 1.0);
        let sched = InferenceSchedule::default().with_max_iters(2000);
        let next = pc_step(&spec, &w, &Precisions::ones(&spec), &Batch::single(&[1.0], &[-1.0]), 0.2, &sched).unwrap();
        let (a, b) = scalars(&next);
        assert_close(a, 0.8, 1e-8);
        assert_close(b, 1.0, 1e-8);
    }

    #[test]
    fn pc_step_is_noop_at_zero_loss() {
        let (spec, w) = one_mlp(0.5, -2.0);
        let next = pc_step(&spec, &w, &Precisions::ones(&spec), &Batch::single(&[1.0], &[-1.0]), 0.2, &InferenceSchedule::toy()).unwrap();
        assert_eq!(next, w);
    }

    #[test]
    fn trn_at_saddle_does_not_move() {
        let b = Batch::single(&[1.0], &[-1.0]);
        let h = toy::loss_hessian_1mlp([0.0, 0.0], &b);
        assert_eq!(h, Matrix2::new(0.0, 1.0, 1.0, 0.0));
        assert_eq!(trn_step_1mlp([0.0, 0.0], &b, 2.0, 0.2).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn trn_singular_damped_hessian() {
        // H = [[0,1],[1,0]] has eigenvalues ±1; λ = 1 makes H + λI singular.
        let b = Batch::single(&[1.0], &[-1.0]);
        assert!(matches!(trn_step_1mlp([0.0, 0.0], &b, 1.0, 0.2), Err(Error::Singular(_))));
    }

    #[test]
    fn trn_matches_dense_solve() {
        let b = Batch::single(&[1.0], &[-1.0]);
        let (w1, w2, x, y) = (0.5, 0.5, 1.0, -1.0);
        let e = y - w1 * w2 * x;
        let g = [-e * w2 * x, -e * w1 * x];
        let h = [[w2 * w2 * x * x + 2.0, w1 * w2 * x * x - e * x], [w1 * w2 * x * x - e * x, w1 * w1 * x * x + 2.0]];
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let s0 = (h[1][1] * g[0] - h[0][1] * g[1]) / det;
        let s1 = (h[0][0] * g[1] - h[1][0] * g[0]) / det;
        let out = trn_step_1mlp([w1, w2], &b, 2.0, 0.2).unwrap();
        assert_close(out[0], w1 - 0.2 * s0, 1e-12);
        assert_close(out[1], w2 - 0.2 * s1, 1e-12);
    }

    #[test]
    fn trn_rejects_other_architectures() {
        let spec = NetworkSpec::chain(3, crate::Activation::Tanh).unwrap();
        let cfg = TrainConfig { algorithm: Algorithm::Trn, ..Default::default() };
        assert!(cfg.validate(&spec).is_err());
    }

    #[test]
    fn optimal_init_stops_at_first_batch() {
        let (spec, w) = one_mlp(1.0, -1.0);
        let cfg = TrainConfig { stop_train_loss: Some(0.01), ..Default::default() };
        let rec = train_from(&spec, &cfg, &RegressionTask::default(), w).unwrap();
        assert_eq!(rec.batches(), 1);
        assert_eq!(rec.stop_reason, StopReason::TrainTol);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let spec = NetworkSpec::one_mlp();
        for alg in [Algorithm::Bp, Algorithm::Pc] {
            let cfg = TrainConfig { algorithm: alg, learning_rate: 1e3, max_batches: 50, ..Default::default() };
            let rec = train(&spec, &cfg, &RegressionTask::default()).unwrap();
            assert_eq!(rec.stop_reason, StopReason::Diverged, "{alg}");
            assert!(rec.batches() <= 10, "{alg}: {} batches", rec.batches());
        }
    }

    #[test]
    fn plateau_rule() {
        assert!(!plateaued(&[3.0, 2.0, 1.0, 0.5], Some(2)));
        assert!(plateaued(&[1.0, 1.0, 1.0, 1.0], Some(2)));
        assert!(!plateaued(&[1.0, 1.0, 1.0], Some(2)));
        assert!(!plateaued(&[1.0; 4], None));
    }

    #[test]
    fn training_is_deterministic() {
        let spec = NetworkSpec::chain(3, crate::Activation::Tanh).unwrap();
        let cfg = TrainConfig {
            algorithm: Algorithm::Pc,
            learning_rate: 0.1,
            max_batches: 20,
            inference: InferenceSchedule::chains(),
            seed: 7,
            ..Default::default()
        };
        let a = train(&spec, &cfg, &RegressionTask::default()).unwrap();
        let b = train(&spec, &cfg, &RegressionTask::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ranking_ties_below_tolerance() {
        let (spec, w) = one_mlp(1.0, -1.0);
        let cfg = TrainConfig { stop_train_loss: Some(0.01), ..Default::default() };
        let rec = train_from(&spec, &cfg, &RegressionTask::default(), w).unwrap();
        assert_eq!(ranking_loss(&rec), 0.01);
    }

    #[test]
    fn single_point_grid() {
        let spec = NetworkSpec::one_mlp();
        let base = TrainConfig { max_batches: 30, ..Default::default() };
        let g = grid_search(&spec, &base, &[Algorithm::Bp], &[0.1], &RegressionTask::default(), &[1]).unwrap();
        assert_eq!(g.runs.len(), 1);
        assert_eq!(g.winner(Algorithm::Bp).unwrap().learning_rate, 0.1);
        assert!(g.is_winner(&g.runs[0]));
        assert!(grid_search(&spec, &base, &[Algorithm::Bp], &[], &RegressionTask::default(), &[1]).is_err());
    }
}
