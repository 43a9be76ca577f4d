use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use trustpc_core::analysis::{landscape_grid, Objective};
use trustpc_core::experiments::chains::{run_chains, ChainsConfig};
use trustpc_core::experiments::cosine::{run_cosine, CosineConfig};
use trustpc_core::experiments::mnist::{run_mnist, MnistConfig};
use trustpc_core::experiments::perturb::{run_perturb, PerturbConfig};
use trustpc_core::experiments::toy::{run_toy, ToyConfig};
use trustpc_core::report::{write_epochs_csv, write_landscape_csv, write_records_csv, write_serialized_csv, write_trajectory_csv, RecordSummary, RunLabel};
use trustpc_core::trainers::{Algorithm, StopReason};
use trustpc_core::Activation;

use crate::manifest::{config_hash, Manifest, RunDir};
use crate::{Command, Outcome};

fn load<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C> {
    match path {
        None => Ok(C::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn offset(seeds: &mut [u64], by: u64) {
    seeds.iter_mut().for_each(|s| *s = s.wrapping_add(by));
}

const ONE_MLP: RunLabel = RunLabel { depth: 1, activation: Activation::Linear };

pub fn run(cmd: Command, config: Option<&Path>, out: &Path, seed: u64) -> Result<(PathBuf, Outcome)> {
    match cmd {
        Command::Toy => {
            let mut cfg: ToyConfig = load(config)?;
            offset(&mut cfg.seeds, seed);
            offset(&mut cfg.race_seeds, seed);
            cfg.task.seed = cfg.task.seed.wrapping_add(seed);
            toy(cmd, &cfg, out, seed)
        }
        Command::Landscape => {
            let mut cfg: ToyConfig = load(config)?;
            cfg.task.seed = cfg.task.seed.wrapping_add(seed);
            landscape(cmd, &cfg, out, seed)
        }
        Command::Cosine => {
            let mut cfg: CosineConfig = load(config)?;
            offset(&mut cfg.seeds, seed);
            cosine(cmd, &cfg, out, seed)
        }
        Command::Chains => {
            let mut cfg: ChainsConfig = load(config)?;
            offset(&mut cfg.seeds, seed);
            chains(cmd, &cfg, out, seed)
        }
        Command::Mnist => {
            let mut cfg: MnistConfig = load(config)?;
            offset(&mut cfg.seeds, seed);
            cfg.tune_seed = cfg.tune_seed.wrapping_add(seed);
            mnist(cmd, &cfg, out, seed)
        }
        Command::Perturb => {
            let mut cfg: PerturbConfig = load(config)?;
            cfg.train_seed = cfg.train_seed.wrapping_add(seed);
            cfg.noise_seed = cfg.noise_seed.wrapping_add(seed);
            perturb(cmd, &cfg, out, seed)
        }
    }
}

fn finish<C: Serialize, S: Serialize>(cmd: Command, dir: RunDir, hash: &str, cfg: &C, seed: u64, diverged: bool, summary: S) -> Result<(PathBuf, Outcome)> {
    let path = dir.finish(Manifest {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        config_hash: hash,
        seed_offset: seed,
        config: cfg,
        files: Vec::new(),
        diverged,
        summary,
    })?;
    Ok((path, if diverged { Outcome::Diverged } else { Outcome::Ok }))
}

fn toy(cmd: Command, cfg: &ToyConfig, out: &Path, seed: u64) -> Result<(PathBuf, Outcome)> {
    let hash = config_hash(cmd.name(), cfg, seed)?;
    let res = run_toy(cfg)?;
    let mut dir = RunDir::create(out, cmd.name(), &hash)?;

    write_records_csv(dir.file("records.csv")?, res.runs.iter().map(|r| (r, ONE_MLP)))?;
    write_trajectory_csv(dir.file("trajectory.csv")?, &res.runs)?;

    let mut wtr = csv_writer(dir.file("inference_trace.csv")?);
    wtr.write_record(["seed", "iteration", "energy"])?;
    for (s, trace) in &res.inference_traces {
        for (i, e) in trace.iter().enumerate() {
            wtr.write_record([s.to_string(), i.to_string(), format!("{e:e}")])?;
        }
    }
    wtr.flush()?;

    for l in &res.landscapes {
        write_landscape_csv(dir.file(&format!("{}.csv", l.name))?, &l.landscape)?;
    }

    let mut wtr = csv_writer(dir.file("saddle_dynamics.csv")?);
    wtr.write_record(["objective", "t", "w1", "w2"])?;
    for d in &res.saddle_dynamics {
        let tag = objective_tag(d.objective);
        for (t, w) in d.iterates.iter().enumerate() {
            wtr.write_record([tag.to_string(), t.to_string(), format!("{:e}", w[0]), format!("{:e}", w[1])])?;
        }
    }
    wtr.flush()?;
    write_serialized_csv(dir.file("saddle_race.csv")?, &res.race.rows)?;

    let summaries: Vec<RecordSummary> = res.runs.iter().map(|r| RecordSummary::new(r, ONE_MLP, false)).collect();
    let summary = json!({
        "runs": summaries,
        "saddle_race": res.race,
        "pc_faster_seeds": res.race.pc_wins(),
    });
    finish(cmd, dir, &hash, cfg, seed, res.any_diverged(), summary)
}

fn objective_tag(o: Objective) -> &'static str {
    match o {
        Objective::Loss => "loss",
        Objective::EquilibratedEnergy => "energy",
    }
}

fn csv_writer(f: fs::File) -> csv::Writer<fs::File> {
    csv::Writer::from_writer(f)
}

fn landscape(cmd: Command, cfg: &ToyConfig, out: &Path, seed: u64) -> Result<(PathBuf, Outcome)> {
    let hash = config_hash(cmd.name(), cfg, seed)?;
    let eval = cfg.task.test_set(cfg.landscape_batch)?;
    let r = cfg.landscape_range;
    let mut dir = RunDir::create(out, cmd.name(), &hash)?;
    for obj in [Objective::Loss, Objective::EquilibratedEnergy] {
        let l = landscape_grid(obj, (-r, r), (-r, r), cfg.landscape_resolution, &eval)?;
        write_landscape_csv(dir.file(&format!("{}_landscape.csv", objective_tag(obj)))?, &l)?;
    }
    finish(cmd, dir, &hash, cfg, seed, false, json!({}))
}

fn cosine(cmd: Command, cfg: &CosineConfig, out: &Path, seed: u64) -> Result<(PathBuf, Outcome)> {
    let hash = config_hash(cmd.name(), cfg, seed)?;
    let rep = run_cosine(cfg)?;
    let mut dir = RunDir::create(out, cmd.name(), &hash)?;
    let mut wtr = csv_writer(dir.file("directions.csv")?);
    wtr.write_record(["seed", "batch", "algorithm", "w1", "w2", "optimal_w1", "optimal_w2", "update_w1", "update_w2", "cosine"])?;
    for r in &rep.rows {
        let mut row = vec![r.seed.to_string(), r.batch.to_string(), r.algorithm.to_string()];
        row.extend([r.weights[0], r.weights[1], r.optimal[0], r.optimal[1], r.update[0], r.update[1], r.cosine].map(|v| format!("{v:e}")));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    let mut wtr = csv_writer(dir.file("cosine_summary.csv")?);
    wtr.write_record(["algorithm", "batch", "mean", "sem", "n"])?;
    for s in &rep.summary {
        wtr.write_record([s.algorithm.to_string(), s.batch.to_string(), format!("{:e}", s.cosine.mean), format!("{:e}", s.cosine.sem), s.cosine.n.to_string()])?;
    }
    wtr.flush()?;
    finish(cmd, dir, &hash, cfg, seed, false, json!({ "summary": rep.summary }))
}

fn chains(cmd: Command, cfg: &ChainsConfig, out: &Path, seed: u64) -> Result<(PathBuf, Outcome)> {
    let hash = config_hash(cmd.name(), cfg, seed)?;
    let sweeps = run_chains(cfg)?;
    let mut dir = RunDir::create(out, cmd.name(), &hash)?;
    let rows = sweeps.iter().flat_map(|s| {
        let label = RunLabel { depth: s.depth, activation: s.activation };
        s.search.runs.iter().map(move |r| (r, label))
    });
    write_records_csv(dir.file("records.csv")?, rows)?;

    let mut runs = Vec::new();
    let mut cells = Vec::new();
    let mut diverged = false;
    for s in &sweeps {
        let label = RunLabel { depth: s.depth, activation: s.activation };
        runs.extend(s.search.runs.iter().map(|r| RecordSummary::new(r, label, s.search.is_winner(r))));
        for alg in [Algorithm::Bp, Algorithm::Pc] {
            let win_runs = s.search.winning_runs(alg);
            diverged |= win_runs.iter().all(|r| r.stop_reason == StopReason::Diverged);
        }
        cells.push(json!({
            "depth": s.depth,
            "activation": s.activation,
            "winners": s.search.winners,
            "bp_batches_to_threshold": s.batches_to_threshold(Algorithm::Bp),
            "pc_batches_to_threshold": s.batches_to_threshold(Algorithm::Pc),
            "bp_mean_batches": s.censored_mean_batches(Algorithm::Bp),
            "pc_mean_batches": s.censored_mean_batches(Algorithm::Pc),
            "pc_over_bp": s.speed_ratio(),
        }));
    }
    finish(cmd, dir, &hash, cfg, seed, diverged, json!({ "cells": cells, "runs": runs }))
}

fn mnist(cmd: Command, cfg: &MnistConfig, out: &Path, seed: u64) -> Result<(PathBuf, Outcome)> {
    let hash = config_hash(cmd.name(), cfg, seed)?;
    let results = run_mnist(cfg).with_context(|| format!("MNIST run with data_dir {}", cfg.data_dir.display()))?;
    let mut dir = RunDir::create(out, cmd.name(), &hash)?;
    let label = |d: usize| RunLabel { depth: d, activation: Activation::Linear };
    write_epochs_csv(dir.file("epochs.csv")?, results.iter().flat_map(|r| r.runs.iter().map(move |run| (run, label(r.depth)))))?;
    write_records_csv(dir.file("records.csv")?, results.iter().flat_map(|r| r.runs.iter().map(move |run| (run, label(r.depth)))))?;
    let mut wtr = csv_writer(dir.file("tuning.csv")?);
    wtr.write_record(["depth", "algorithm", "lr", "final_loss", "stop_reason"])?;
    for r in &results {
        for t in &r.tuning {
            wtr.write_record([
                r.depth.to_string(),
                t.algorithm.to_string(),
                format!("{:e}", t.learning_rate),
                format!("{:e}", t.final_loss),
                serde_json::to_value(t.stop_reason)?.as_str().unwrap_or_default().to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    let summary: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "depth": r.depth,
                "bp_lr": r.bp_lr,
                "pc_lr": r.pc_lr,
                "comparisons": r.comparisons,
                "pc_faster_seeds": r.pc_wins(),
            })
        })
        .collect();
    finish(cmd, dir, &hash, cfg, seed, false, json!({ "depths": summary }))
}

fn perturb(cmd: Command, cfg: &PerturbConfig, out: &Path, seed: u64) -> Result<(PathBuf, Outcome)> {
    let hash = config_hash(cmd.name(), cfg, seed)?;
    let res = run_perturb(cfg)?;
    let mut dir = RunDir::create(out, cmd.name(), &hash)?;
    let mut wtr = csv_writer(dir.file("perturb.csv")?);
    wtr.write_record(["algorithm", "draw", "mse"])?;
    for (alg, stats) in [("bp", &res.report.bp), ("pc", &res.report.pc)] {
        for (i, m) in stats.samples.iter().enumerate() {
            wtr.write_record([alg.to_string(), i.to_string(), format!("{m:e}")])?;
        }
    }
    wtr.flush()?;
    write_records_csv(dir.file("records.csv")?, [(&res.bp_record, ONE_MLP), (&res.pc_record, ONE_MLP)])?;
    let summary = json!({
        "variance": res.report.variance,
        "bp": { "mean": res.report.bp.mean, "sem": res.report.bp.sem, "weights": res.bp_record.final_weights.to_flat() },
        "pc": { "mean": res.report.pc.mean, "sem": res.report.pc.sem, "weights": res.pc_record.final_weights.to_flat() },
    });
    finish(cmd, dir, &hash, cfg, seed, false, summary)
}
