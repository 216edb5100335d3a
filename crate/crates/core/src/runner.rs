//! Deterministic multi-seed experiment execution.
//!
//! Seeds run independently (in parallel) and join in seed order, so a report
//! is a pure function of its config. Paths are generated lazily: the sampler
//! feeds the estimator one value at a time up to the horizon.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{
    bound_violation_rate, error_curves, ks_distance, AnalysisError, BoundCheckRow, ErrorCurve,
    GrowthBoundSpec, PredictionRow,
};
use crate::config::{ConfigError, ExperimentConfig};
use crate::estimator::{Estimator, EstimatorError};
use crate::processes::ProcessError;
use crate::stopping::{ScanEvent, ScannerState, StoppingError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Stopping(#[from] StoppingError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("distribution check needs level k in 1..=k_max, got {0}")]
    BadLevel(u32),
}

/// Everything one seed produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub events: Vec<ScanEvent>,
    pub predictions: Vec<PredictionRow>,
    /// True when the horizon ran out before `k_max` stopping times.
    pub truncated: bool,
    pub samples_consumed: u64,
    pub degenerate_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub truncated_seeds: u32,
    pub degenerate_steps: u64,
    pub total_samples: u64,
    pub max_samples_per_seed: u64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub seed_runs: Vec<SeedRun>,
    pub curves: ErrorCurve,
    /// Present when the config carries an epsilon and a finite family.
    pub bound_rows: Option<Vec<BoundCheckRow>>,
    pub counters: Counters,
    pub wall_ms: u128,
}

impl RunReport {
    pub fn all_predictions(&self) -> Vec<PredictionRow> {
        self.seed_runs.iter().flat_map(|r| r.predictions.iter().copied()).collect()
    }
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun, HarnessError> {
    let mut sampler = config.model.sampler(seed)?;
    let mut estimator = Estimator::new(config.family.clone(), config.schedule.clone())?;
    let mut events = Vec::new();
    let mut predictions = Vec::new();
    let mut consumed = 0u64;
    while (events.len() as u32) < config.k_max && consumed < config.horizon {
        let x = sampler.next_sample();
        consumed += 1;
        if let Some(ev) = estimator.push(x)? {
            let oracle = config.model.cond_exp(&estimator.history()[..=ev.zeta as usize])?;
            events.push(ScanEvent { k: ev.k, eta: ev.eta, zeta: ev.zeta });
            predictions.push(PredictionRow {
                seed,
                k: ev.k,
                zeta: ev.zeta,
                g: ev.g,
                oracle: Some(oracle),
            });
        }
    }
    Ok(SeedRun {
        seed,
        truncated: (events.len() as u32) < config.k_max,
        events,
        predictions,
        samples_consumed: consumed,
        degenerate_steps: sampler.degeneracies(),
    })
}

/// Run every seed of the config and aggregate.
pub fn run(config: &ExperimentConfig) -> Result<RunReport, HarnessError> {
    let started = Instant::now();
    config.validate()?;
    let seeds = config.seeds.values();
    let seed_runs: Vec<SeedRun> = seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed))
        .collect::<Result<_, _>>()?;

    let all_rows: Vec<PredictionRow> =
        seed_runs.iter().flat_map(|r| r.predictions.iter().copied()).collect();
    let curves = error_curves(&all_rows);

    let bound_rows = match config.epsilon {
        Some(epsilon) if config.family.is_finite() => {
            let spec = GrowthBoundSpec {
                epsilon,
                family: config.family.clone(),
                schedule: config.schedule.clone(),
            };
            let per_seed: Vec<Vec<ScanEvent>> =
                seed_runs.iter().map(|r| r.events.clone()).collect();
            Some(bound_violation_rate(&per_seed, &spec)?)
        }
        _ => None,
    };

    let counters = Counters {
        truncated_seeds: seed_runs.iter().filter(|r| r.truncated).count() as u32,
        degenerate_steps: seed_runs.iter().map(|r| r.degenerate_steps).sum(),
        total_samples: seed_runs.iter().map(|r| r.samples_consumed).sum(),
        max_samples_per_seed: seed_runs.iter().map(|r| r.samples_consumed).max().unwrap_or(0),
    };

    Ok(RunReport {
        config: config.clone(),
        seed_runs,
        curves,
        bound_rows,
        counters,
        wall_ms: started.elapsed().as_millis(),
    })
}

/// Successor samples observed at requested stopping levels, pooled over the
/// config's seeds: for each `k` in `levels`, the collection of `x_{zeta_k+1}`.
pub fn successor_samples(
    config: &ExperimentConfig,
    levels: &[u32],
) -> Result<Vec<(u32, Vec<f64>)>, HarnessError> {
    config.validate()?;
    let Some(&deepest) = levels.iter().max() else {
        return Ok(Vec::new());
    };
    if levels.iter().any(|&k| k == 0 || k > config.k_max) {
        return Err(HarnessError::BadLevel(*levels.iter().find(|&&k| k == 0 || k > config.k_max).unwrap()));
    }
    let seeds = config.seeds.values();
    let per_seed: Vec<Vec<(u32, f64)>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<(u32, f64)>, HarnessError> {
            let mut sampler = config.model.sampler(seed)?;
            let mut scanner = ScannerState::<f64>::new();
            let mut consumed = 0u64;
            let mut zetas = Vec::new();
            while scanner.k() <= deepest && consumed < config.horizon {
                let budget = config.horizon - consumed;
                let mut pulled = 0u64;
                let mut more = || {
                    if pulled < budget {
                        pulled += 1;
                        Some(sampler.next_sample())
                    } else {
                        None
                    }
                };
                let outcome = scanner.scan_next(&config.family, &config.schedule, &mut more);
                consumed += pulled;
                match outcome {
                    Ok(ev) => zetas.push((ev.k, ev.zeta)),
                    Err(StoppingError::Truncated { .. }) => break,
                    Err(e) => return Err(e.into()),
                }
            }
            // The deepest requested successor may lie one past the scan.
            if let Some(&(_, last_zeta)) = zetas.last() {
                if (scanner.history().len() as u64) <= last_zeta + 1 {
                    scanner.push_sample(sampler.next_sample());
                }
            }
            let history = scanner.history();
            Ok(levels
                .iter()
                .filter_map(|&k| {
                    zetas
                        .iter()
                        .find(|&&(ek, _)| ek == k)
                        .map(|&(_, z)| (k, history[z as usize + 1]))
                })
                .collect())
        })
        .collect::<Result<_, _>>()?;

    Ok(levels
        .iter()
        .map(|&k| {
            let pooled = per_seed
                .iter()
                .flat_map(|rows| rows.iter().filter(move |(rk, _)| *rk == k).map(|&(_, v)| v))
                .collect();
            (k, pooled)
        })
        .collect())
}

/// One row of a distribution check: successor sample at level k against the
/// one-step marginal over an independent seed block.
#[derive(Debug, Clone, PartialEq)]
pub struct DistCheckRow {
    pub k: u32,
    pub n_successors: usize,
    pub n_marginal: usize,
    pub distance: f64,
}

/// Compare `{x_{zeta_k+1}}` over the config's seeds with `{x_1}` over the
/// independent counterpart seeds, per requested level.
pub fn distribution_check(
    config: &ExperimentConfig,
    levels: &[u32],
) -> Result<Vec<DistCheckRow>, HarnessError> {
    let successors = successor_samples(config, levels)?;
    let marginal: Vec<f64> = config
        .seeds
        .independent_counterpart()
        .values()
        .into_par_iter()
        .map(|seed| Ok(config.model.sample_path(seed, 2)?[1]))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    successors
        .into_iter()
        .map(|(k, succ)| {
            let distance = ks_distance(&succ, &marginal)?;
            Ok(DistCheckRow { k, n_successors: succ.len(), n_marginal: marginal.len(), distance })
        })
        .collect()
}
