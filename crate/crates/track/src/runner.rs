//! Monte Carlo orchestration.

use std::collections::BTreeMap;
use std::time::Instant;

use lmbtrack_core::metrics::{cardinality_stats, mean_std, ospa, ospa2, CardinalityStat, Ospa};
use lmbtrack_core::models::{generate_ground_truth, generate_scans, GroundTruth};
use lmbtrack_core::ste::{trajectories_from_estimates, SteOptions};
use lmbtrack_core::{LmbFilter, MultiObjectModel, Result, SmoothTrajectoryEstimator, TrajectorySet};
use nalgebra::DVector;
use rayon::prelude::*;

use crate::config::{RunConfig, TrackerKind};

/// Per-step results of one tracker on one trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub tracker: TrackerKind,
    pub trial: usize,
    pub seed: u64,
    /// Final trajectory set in full state coordinates.
    pub trajectories: TrajectorySet,
    pub cardinality: Vec<usize>,
    pub ospa: Vec<Ospa<f64>>,
    pub ospa2: Vec<f64>,
    pub filter_seconds: Vec<f64>,
    pub estimator_seconds: Vec<f64>,
}

impl TrialResult {
    pub fn steps(&self) -> usize {
        self.cardinality.len()
    }

    pub fn total_filter_seconds(&self) -> f64 {
        self.filter_seconds.iter().sum()
    }

    pub fn total_estimator_seconds(&self) -> f64 {
        self.estimator_seconds.iter().sum()
    }
}

/// Trial-averaged values at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepAggregate {
    pub step: u32,
    pub cardinality: CardinalityStat,
    pub ospa: Ospa<f64>,
    pub ospa2: f64,
    pub filter_ms: f64,
    pub estimator_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Aggregate {
    pub tracker: TrackerKind,
    pub steps: Vec<StepAggregate>,
    pub trials: Vec<TrialResult>,
}

impl Aggregate {
    pub fn total_filter_seconds(&self) -> f64 {
        self.trials.iter().map(TrialResult::total_filter_seconds).sum()
    }

    pub fn total_estimator_seconds(&self) -> f64 {
        self.trials.iter().map(TrialResult::total_estimator_seconds).sum()
    }

    /// Estimator share of total compute, in percent.
    pub fn estimator_percentage(&self) -> f64 {
        percentage(self.total_filter_seconds(), self.total_estimator_seconds())
    }

    pub fn mean_ospa2(&self) -> f64 {
        mean_std(&self.steps.iter().map(|s| s.ospa2).collect::<Vec<_>>()).0
    }
}

pub fn percentage(filter: f64, estimator: f64) -> f64 {
    let total = filter + estimator;
    if total > 0.0 {
        100.0 * estimator / total
    } else {
        0.0
    }
}

/// Results of every requested tracker over all trials, sharing truth.
#[derive(Debug, Clone)]
pub struct MonteCarloResults {
    pub truth: GroundTruth,
    pub aggregates: BTreeMap<TrackerKind, Aggregate>,
}

fn positions(set: &TrajectorySet, idx: &[usize]) -> TrajectorySet {
    set.iter().map(|(l, t)| (*l, t.project(idx))).collect()
}

fn points_at(set: &TrajectorySet, time: u32) -> Vec<DVector<f64>> {
    set.values().filter_map(|t| t.at(time).cloned()).collect()
}

fn evaluate(
    tracker: TrackerKind,
    trial: usize,
    seed: u64,
    trajectories: TrajectorySet,
    truth_xy: &TrajectorySet,
    cfg: &RunConfig,
    (filter_seconds, estimator_seconds): (Vec<f64>, Vec<f64>),
) -> TrialResult {
    let idx = cfg.scenario.position_indices();
    let est_xy = positions(&trajectories, &idx);
    let duration = cfg.scenario.duration;
    let mut cardinality = Vec::with_capacity(duration as usize);
    let mut ospas = Vec::with_capacity(duration as usize);
    let mut ospa2s = Vec::with_capacity(duration as usize);
    for k in 1..=duration {
        let est = points_at(&est_xy, k);
        let tru = points_at(truth_xy, k);
        cardinality.push(est.len());
        ospas.push(ospa(&est, &tru, &cfg.metrics));
        ospa2s.push(ospa2(&est_xy, truth_xy, k, &cfg.metrics));
    }
    TrialResult {
        tracker,
        trial,
        seed,
        trajectories,
        cardinality,
        ospa: ospas,
        ospa2: ospa2s,
        filter_seconds,
        estimator_seconds,
    }
}

fn model_for(cfg: &RunConfig) -> Result<MultiObjectModel> {
    let mut model = cfg.scenario.build_model()?;
    if !cfg.gating {
        model.gate = None;
    }
    Ok(model)
}

/// Runs one trial. The filter runs once and every requested tracker reads
/// its output, so all trackers see the same measurements and associations.
pub fn run_trial(cfg: &RunConfig, truth: &GroundTruth, trial: usize) -> Result<Vec<TrialResult>> {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let scans = generate_scans(truth, &cfg.scenario, seed)?;
    let truth_xy = positions(&truth.to_trajectories(), &cfg.scenario.position_indices());
    let mut filter = LmbFilter::new(model_for(cfg)?, cfg.truncation, seed);
    let with_ste = cfg.trackers.contains(&TrackerKind::SteLmb);
    let mut ste = SmoothTrajectoryEstimator::new(SteOptions::default());
    let mut estimates = Vec::with_capacity(scans.len());
    let mut filter_s = Vec::with_capacity(scans.len());
    let mut ste_s = Vec::with_capacity(scans.len());
    for scan in scans {
        let started = Instant::now();
        let out = filter.step(scan.measurements)?;
        filter_s.push(started.elapsed().as_secs_f64());
        if with_ste {
            let time = filter.time();
            ste_s.push(ste.update(&filter.histories, &out.estimate, time, &filter.scans, &filter.model)?);
        }
        estimates.push(out.estimate);
    }
    let mut results = Vec::with_capacity(cfg.trackers.len());
    for &tracker in &cfg.trackers {
        let (set, est_s) = match tracker {
            TrackerKind::Lmb => (
                trajectories_from_estimates(estimates.iter().enumerate().map(|(i, e)| (i as u32 + 1, e.as_slice()))),
                vec![0.0; filter_s.len()],
            ),
            TrackerKind::SteLmb => (ste.trajectories.clone(), ste_s.clone()),
        };
        results.push(evaluate(tracker, trial, seed, set, &truth_xy, cfg, (filter_s.clone(), est_s)));
    }
    Ok(results)
}

pub fn aggregate(tracker: TrackerKind, truth: &GroundTruth, trials: Vec<TrialResult>) -> Aggregate {
    let n = truth.duration as usize;
    let true_n: Vec<usize> = (1..=truth.duration).map(|k| truth.cardinality(k)).collect();
    let card: Vec<Vec<usize>> = trials.iter().map(|t| t.cardinality.clone()).collect();
    let stats = cardinality_stats(&card, &true_n);
    let mean_of = |f: &dyn Fn(&TrialResult) -> f64| trials.iter().map(f).sum::<f64>() / trials.len() as f64;
    let steps = (0..n)
        .map(|k| StepAggregate {
            step: k as u32 + 1,
            cardinality: stats[k],
            ospa: Ospa {
                total: mean_of(&|t| t.ospa[k].total),
                localisation: mean_of(&|t| t.ospa[k].localisation),
                cardinality: mean_of(&|t| t.ospa[k].cardinality),
            },
            ospa2: mean_of(&|t| t.ospa2[k]),
            filter_ms: 1e3 * mean_of(&|t| t.filter_seconds[k]),
            estimator_ms: 1e3 * mean_of(&|t| t.estimator_seconds[k]),
        })
        .collect();
    Aggregate { tracker, steps, trials }
}

/// Runs all trials on a pool of `cfg.threads` workers and aggregates them in
/// trial order.
pub fn run_monte_carlo(cfg: &RunConfig) -> Result<MonteCarloResults> {
    let truth = generate_ground_truth(&cfg.scenario, cfg.seed)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| lmbtrack_core::Error::InvalidParameter(format!("thread pool: {e}")))?;
    let per_trial: Vec<Vec<TrialResult>> =
        pool.install(|| (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, &truth, i)).collect::<Result<_>>())?;
    let mut by_tracker: BTreeMap<TrackerKind, Vec<TrialResult>> = BTreeMap::new();
    for results in per_trial {
        for r in results {
            by_tracker.entry(r.tracker).or_default().push(r);
        }
    }
    let aggregates = by_tracker
        .into_iter()
        .map(|(k, trials)| (k, aggregate(k, &truth, trials)))
        .collect();
    Ok(MonteCarloResults { truth, aggregates })
}

/// Paired comparison of the two trackers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Comparison {
    /// First step counted in the dominance and cardinality fractions.
    pub from_step: u32,
    /// Fraction of counted steps where the STE-LMB mean OSPA² is at most the
    /// LMB one.
    pub dominance_fraction: f64,
    pub mean_ospa2_lmb: f64,
    pub mean_ospa2_ste: f64,
    /// Fraction of counted steps with the STE-LMB mean cardinality within 1
    /// of the truth.
    pub cardinality_fraction_ste: f64,
    pub cardinality_fraction_lmb: f64,
    pub estimator_percentage: f64,
    pub filter_seconds: f64,
    pub estimator_seconds: f64,
}

fn cardinality_fraction(agg: &Aggregate, from_step: u32) -> f64 {
    let counted: Vec<_> = agg.steps.iter().filter(|s| s.step > from_step).collect();
    let ok = counted
        .iter()
        .filter(|s| (s.cardinality.mean - s.cardinality.true_n as f64).abs() <= 1.0)
        .count();
    ok as f64 / counted.len().max(1) as f64
}

/// Compares steps after `from_step`; `None` unless both trackers ran.
pub fn compare(results: &MonteCarloResults, from_step: u32) -> Option<Comparison> {
    let lmb = results.aggregates.get(&TrackerKind::Lmb)?;
    let ste = results.aggregates.get(&TrackerKind::SteLmb)?;
    let pairs: Vec<_> = lmb
        .steps
        .iter()
        .zip(&ste.steps)
        .filter(|(a, _)| a.step > from_step)
        .collect();
    let dominated = pairs.iter().filter(|(a, b)| b.ospa2 <= a.ospa2).count();
    Some(Comparison {
        from_step,
        dominance_fraction: dominated as f64 / pairs.len().max(1) as f64,
        mean_ospa2_lmb: lmb.mean_ospa2(),
        mean_ospa2_ste: ste.mean_ospa2(),
        cardinality_fraction_ste: cardinality_fraction(ste, from_step),
        cardinality_fraction_lmb: cardinality_fraction(lmb, from_step),
        estimator_percentage: ste.estimator_percentage(),
        filter_seconds: ste.total_filter_seconds(),
        estimator_seconds: ste.total_estimator_seconds(),
    })
}
