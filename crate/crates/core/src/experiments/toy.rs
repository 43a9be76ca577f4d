//! 1MLP on `y = −x`: BP and PC trajectories, landscapes, inference traces,
//! flow fields near critical points, and the saddle-escape race.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::analysis::{landscape_grid, near_saddle_iterate, Landscape, Objective};
use crate::data::RegressionTask;
use crate::energy::{run_inference, InferenceSchedule, Precisions};
use crate::error::Result;
use crate::network::{loss, NetworkSpec, WeightSet};
use crate::trainers::{train, train_from, Algorithm, TrainConfig, TrainRecord, WeightInit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub task: RegressionTask,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_batches: usize,
    pub stop_test_loss: f64,
    pub init_bound: f64,
    pub inference: InferenceSchedule,
    pub test_size: usize,
    pub seeds: Vec<u64>,
    /// Landscapes cover `[−r, r]²`.
    pub landscape_range: f64,
    pub landscape_resolution: usize,
    pub landscape_batch: usize,
    /// Half-width of the flow-field windows around the saddle and a minimum.
    pub flow_radius: f64,
    pub flow_resolution: usize,
    /// Both weights start at this value in the saddle race.
    pub saddle_init: f64,
    /// Data for the saddle race; defaults to the single pair `x = 1, y = −1`.
    pub race_task: RegressionTask,
    pub race_seeds: Vec<u64>,
    pub race_max_batches: usize,
    /// Iterations of the linearized dynamics around the saddle.
    pub saddle_steps: u32,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            task: RegressionTask::default(),
            learning_rate: 0.2,
            batch_size: 64,
            max_batches: 10_000,
            stop_test_loss: 1e-3,
            init_bound: 1.0,
            inference: InferenceSchedule::toy(),
            test_size: 1000,
            seeds: vec![0],
            landscape_range: 2.0,
            landscape_resolution: 41,
            landscape_batch: 64,
            flow_radius: 0.25,
            flow_resolution: 21,
            saddle_init: 1e-3,
            race_task: RegressionTask::fixed(1.0, -1.0),
            race_seeds: (0..10).collect(),
            race_max_batches: 1000,
            saddle_steps: 50,
        }
    }
}

impl ToyConfig {
    pub fn train_config(&self, algorithm: Algorithm, seed: u64) -> TrainConfig {
        TrainConfig {
            algorithm,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_batches: self.max_batches,
            inference: self.inference,
            stop_test_loss: Some(self.stop_test_loss),
            test_size: self.test_size,
            init: WeightInit::Uniform { bound: self.init_bound },
            seed,
            record_weights: true,
            ..TrainConfig::default()
        }
    }
}

/// Updates needed to halve the held-out loss from `(δ, δ)`, per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceRow {
    pub seed: u64,
    pub initial_loss: f64,
    pub threshold: f64,
    pub bp_updates: Option<usize>,
    pub pc_updates: Option<usize>,
}

impl RaceRow {
    pub fn pc_faster(&self) -> bool {
        match (self.pc_updates, self.bp_updates) {
            (Some(pc), Some(bp)) => pc < bp,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleRace {
    pub init: [f64; 2],
    pub rows: Vec<RaceRow>,
}

impl SaddleRace {
    pub fn pc_wins(&self) -> usize {
        self.rows.iter().filter(|r| r.pc_faster()).count()
    }
}

pub fn saddle_race(cfg: &ToyConfig) -> Result<SaddleRace> {
    let spec = NetworkSpec::one_mlp();
    let init = [cfg.saddle_init, cfg.saddle_init];
    let w0 = WeightSet::from_scalars(&spec, &init)?;
    let mut rows = Vec::new();
    for &seed in &cfg.race_seeds {
        let test = cfg.race_task.with_seed(seed).test_set(cfg.test_size)?;
        let initial_loss = loss(&spec, &w0, &test)?;
        let threshold = 0.5 * initial_loss;
        let mut updates = [None, None];
        for (slot, alg) in [Algorithm::Bp, Algorithm::Pc].into_iter().enumerate() {
            let tc = TrainConfig {
                max_batches: cfg.race_max_batches,
                stop_test_loss: Some(threshold),
                record_weights: false,
                ..cfg.train_config(alg, seed)
            };
            let rec = train_from(&spec, &tc, &cfg.race_task, w0.clone())?;
            updates[slot] = rec.batches_to_test_loss(threshold);
        }
        rows.push(RaceRow { seed, initial_loss, threshold, bp_updates: updates[0], pc_updates: updates[1] });
    }
    Ok(SaddleRace { init, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLandscape {
    pub name: String,
    pub landscape: Landscape,
}

/// Linearized gradient-descent iterates around the saddle for one objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleDynamics {
    pub objective: Objective,
    pub iterates: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct ToyOutput {
    pub runs: Vec<TrainRecord>,
    /// Energy over inference iterations for the first batch at initialisation.
    pub inference_traces: Vec<(u64, Vec<f64>)>,
    pub landscapes: Vec<NamedLandscape>,
    pub saddle_dynamics: Vec<SaddleDynamics>,
    pub race: SaddleRace,
}

impl ToyOutput {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.stop_reason == crate::trainers::StopReason::Diverged)
    }
}

pub fn run_toy(cfg: &ToyConfig) -> Result<ToyOutput> {
    let spec = NetworkSpec::one_mlp();
    let prec = Precisions::ones(&spec);
    let mut runs = Vec::new();
    let mut inference_traces = Vec::new();
    for &seed in &cfg.seeds {
        for alg in [Algorithm::Bp, Algorithm::Pc] {
            runs.push(train(&spec, &cfg.train_config(alg, seed), &cfg.task)?);
        }
        let w0 = WeightInit::Uniform { bound: cfg.init_bound }.sample(&spec, seed);
        let batch = cfg.task.with_seed(seed).sample_draw(cfg.batch_size, 0)?;
        let inf = run_inference(&spec, &w0, &prec, &batch, &cfg.inference)?;
        inference_traces.push((seed, inf.energy_trace()));
    }

    let eval = cfg.task.test_set(cfg.landscape_batch)?;
    let r = cfg.landscape_range;
    let fr = cfg.flow_radius;
    let minimum = [1.0, cfg.task.slope];
    let mut landscapes = Vec::new();
    for (obj, tag) in [(Objective::Loss, "loss"), (Objective::EquilibratedEnergy, "energy")] {
        landscapes.push(NamedLandscape {
            name: format!("{tag}_landscape"),
            landscape: landscape_grid(obj, (-r, r), (-r, r), cfg.landscape_resolution, &eval)?,
        });
        landscapes.push(NamedLandscape {
            name: format!("{tag}_flow_saddle"),
            landscape: landscape_grid(obj, (-fr, fr), (-fr, fr), cfg.flow_resolution, &eval)?,
        });
        landscapes.push(NamedLandscape {
            name: format!("{tag}_flow_minimum"),
            landscape: landscape_grid(
                obj,
                (minimum[0] - fr, minimum[0] + fr),
                (minimum[1] - fr, minimum[1] + fr),
                cfg.flow_resolution,
                &eval,
            )?,
        });
    }

    let w0 = Vector2::new(cfg.saddle_init, cfg.saddle_init);
    let saddle_dynamics = [Objective::Loss, Objective::EquilibratedEnergy]
        .into_iter()
        .map(|obj| {
            let h = obj.hessian([0.0, 0.0], &eval);
            let iterates = (0..=cfg.saddle_steps)
                .map(|t| {
                    let w = near_saddle_iterate(&h, w0, cfg.learning_rate, t);
                    [w[0], w[1]]
                })
                .collect();
            SaddleDynamics { objective: obj, iterates }
        })
        .collect();

    Ok(ToyOutput {
        runs,
        inference_traces,
        landscapes,
        saddle_dynamics,
        race: saddle_race(cfg)?,
    })
}
