//! Smooth trajectory estimator: for every label ever estimated, filter
//! forward along its best association history from birth, then smooth
//! backward.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::{FilteredStep, GaussianState};
use crate::glmb::MultiObjectModel;
use crate::lmb::ScanLog;
use crate::rfs::{window_bounds_with, AssociationHistory, HistoryStore, Label, LabelledState};
use crate::scalar::Real;

/// Time-stamped states of one labelled object, in increasing time order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub points: Vec<(u32, DVector<T>)>,
    pub covariances: Option<Vec<DMatrix<T>>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(points: Vec<(u32, DVector<T>)>) -> Self {
        Self {
            points,
            covariances: None,
        }
    }

    pub fn start(&self) -> Option<u32> {
        self.points.first().map(|p| p.0)
    }

    pub fn end(&self) -> Option<u32> {
        self.points.last().map(|p| p.0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn at(&self, time: u32) -> Option<&DVector<T>> {
        self.points
            .binary_search_by_key(&time, |p| p.0)
            .ok()
            .map(|i| &self.points[i].1)
    }

    /// True when time stamps increase by exactly one.
    pub fn is_contiguous(&self) -> bool {
        self.points.windows(2).all(|w| w[1].0 == w[0].0 + 1)
    }

    /// Keeps only the given state components.
    pub fn project(&self, indices: &[usize]) -> Self {
        Self::new(
            self.points
                .iter()
                .map(|(t, x)| (*t, DVector::from_iterator(indices.len(), indices.iter().map(|&i| x[i]))))
                .collect(),
        )
    }
}

pub type TrajectorySet<T> = BTreeMap<Label, Trajectory<T>>;

/// Groups per-step labelled estimates by label.
pub fn trajectories_from_estimates<'a, T: Real>(
    steps: impl IntoIterator<Item = (u32, &'a [LabelledState<T>])>,
) -> TrajectorySet<T> {
    let mut out: TrajectorySet<T> = BTreeMap::new();
    for (time, estimate) in steps {
        for s in estimate {
            out.entry(s.label)
                .or_insert_with(|| Trajectory::new(Vec::new()))
                .points
                .push((time, s.state.clone()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SteOptions {
    /// Also keep the smoothed covariances.
    pub keep_covariances: bool,
}

fn measurement<T: Real>(scans: &ScanLog<T>, time: u32, index: usize) -> Result<&DVector<T>> {
    let scan = scans.at(time).unwrap_or(&[]);
    scan.get(index - 1).ok_or(Error::MeasurementIndex {
        time,
        index,
        available: scan.len(),
    })
}

/// Forward filtering of `label` over `start..=end`. The first step starts
/// from the birth density of the label's slot; later steps predict and then
/// update with the recorded measurement whenever the history has one.
pub fn forward_pass<T: Real>(
    label: Label,
    history: &AssociationHistory,
    start: u32,
    end: u32,
    scans: &ScanLog<T>,
    model: &MultiObjectModel<T>,
) -> Result<Vec<FilteredStep<T>>> {
    if history.is_empty() {
        return Err(Error::MissingHistory(label));
    }
    let birth = model
        .birth
        .initial_state(label.index as usize)
        .ok_or_else(|| Error::InvalidParameter(format!("no birth component for label {label}")))?;
    let mut out: Vec<FilteredStep<T>> = Vec::with_capacity((end - start + 1) as usize);
    for i in start..=end {
        let predicted: GaussianState<T> = match out.last() {
            None => birth.clone(),
            Some(prev) => model.single.predict(&prev.updated)?,
        };
        let j = history.at(i).ok_or(Error::MissingHistory(label))?;
        let updated = if j > 0 {
            model.single.update(&predicted, measurement(scans, i, j)?)?.posterior
        } else {
            predicted.clone()
        };
        out.push(FilteredStep { predicted, updated });
    }
    Ok(out)
}

/// Backward smoothing of a forward pass with the model's smoother.
pub fn backward_pass<T: Real>(forward: &[FilteredStep<T>], model: &MultiObjectModel<T>) -> Result<Vec<GaussianState<T>>> {
    model.single.smooth(forward)
}

/// Recomputes the smoothed trajectory of every label present in `previous`
/// or in the new estimate at `time`. The result replaces `previous`.
pub fn smooth_all_trajectories<T: Real>(
    previous: &TrajectorySet<T>,
    histories: &HistoryStore,
    new_estimate: &[LabelledState<T>],
    time: u32,
    scans: &ScanLog<T>,
    model: &MultiObjectModel<T>,
    opts: SteOptions,
) -> Result<TrajectorySet<T>> {
    let fresh: BTreeSet<Label> = new_estimate.iter().map(|s| s.label).collect();
    let labels: BTreeSet<Label> = previous.keys().chain(fresh.iter()).copied().collect();
    let mut out = BTreeMap::new();
    for label in labels {
        let prior_span = previous.get(&label).and_then(|t| Some((t.start()?, t.end()?)));
        let present = |i: u32| i == time && fresh.contains(&label) || prior_span.is_some_and(|(a, b)| a <= i && i <= b);
        let (start, end) = window_bounds_with(label, label.birth_time.min(time), time, present)?;
        let history = histories.get(&label).ok_or(Error::MissingHistory(label))?;
        let forward = forward_pass(label, history, start, end, scans, model)?;
        let smoothed = backward_pass(&forward, model)?;
        let covariances = opts
            .keep_covariances
            .then(|| smoothed.iter().map(|s| s.covariance().clone()).collect());
        let points = (start..=end).zip(smoothed.into_iter().map(|s| s.into_parts().0)).collect();
        out.insert(label, Trajectory { points, covariances });
    }
    Ok(out)
}

/// Forward pass of one label kept between steps, with the smoother gain of
/// every step.
#[derive(Debug, Clone)]
struct ForwardCache<T: Real> {
    start: u32,
    assoc: Vec<usize>,
    updated: Vec<GaussianState<T>>,
    /// Prediction of step `i + 1` from `updated[i]`.
    next_predicted: Vec<GaussianState<T>>,
    gains: Vec<DMatrix<T>>,
}

impl<T: Real> ForwardCache<T> {
    fn new(start: u32) -> Self {
        Self {
            start,
            assoc: Vec::new(),
            updated: Vec::new(),
            next_predicted: Vec::new(),
            gains: Vec::new(),
        }
    }

    /// Whether the cached steps still agree with `history`.
    fn matches(&self, start: u32, end: u32, history: &AssociationHistory) -> bool {
        self.start == start
            && self.assoc.len() <= (end - start + 1) as usize
            && self
                .assoc
                .iter()
                .enumerate()
                .all(|(k, &j)| history.at(start + k as u32) == Some(j))
    }

    fn extend(
        &mut self,
        label: Label,
        history: &AssociationHistory,
        end: u32,
        scans: &ScanLog<T>,
        model: &MultiObjectModel<T>,
    ) -> Result<()> {
        for i in self.start + self.assoc.len() as u32..=end {
            let prior = match self.next_predicted.last() {
                Some(p) => p.clone(),
                None => model
                    .birth
                    .initial_state(label.index as usize)
                    .ok_or_else(|| Error::InvalidParameter(format!("no birth component for label {label}")))?,
            };
            let j = history.at(i).ok_or(Error::MissingHistory(label))?;
            let updated = if j > 0 {
                model.single.update(&prior, measurement(scans, i, j)?)?.posterior
            } else {
                prior
            };
            let (next, gain) = model.single.predict_with_gain(&updated)?;
            self.assoc.push(j);
            self.updated.push(updated);
            self.next_predicted.push(next);
            self.gains.push(gain);
        }
        Ok(())
    }

    /// Backward sweep over the first `len` cached steps.
    fn smooth(&self, len: usize, keep_covariances: bool) -> (Vec<DVector<T>>, Option<Vec<DMatrix<T>>>) {
        let last = &self.updated[len - 1];
        let mut means = vec![last.mean().clone(); len];
        let mut covs = keep_covariances.then(|| vec![last.covariance().clone(); len]);
        for i in (0..len - 1).rev() {
            let (cur, pred, gain) = (&self.updated[i], &self.next_predicted[i], &self.gains[i]);
            means[i] = cur.mean() + gain * (&means[i + 1] - pred.mean());
            if let Some(c) = covs.as_mut() {
                c[i] = cur.covariance() + gain * (&c[i + 1] - pred.covariance()) * gain.transpose();
            }
        }
        (means, covs)
    }
}

/// Running estimator state: the latest trajectory set and the per-label
/// forward passes it was built from.
#[derive(Debug, Clone, Default)]
pub struct SmoothTrajectoryEstimator<T: Real> {
    pub trajectories: TrajectorySet<T>,
    pub opts: SteOptions,
    cache: BTreeMap<Label, ForwardCache<T>>,
}

impl<T: Real> SmoothTrajectoryEstimator<T> {
    pub fn new(opts: SteOptions) -> Self {
        Self {
            trajectories: BTreeMap::new(),
            opts,
            cache: BTreeMap::new(),
        }
    }

    /// Replaces the trajectory set after a filter step at `time`; returns the
    /// elapsed seconds. The result equals [`smooth_all_trajectories`]; forward
    /// passes are reused while a label's history is unchanged, so `scans`
    /// and `model` must be the same on every call.
    pub fn update(
        &mut self,
        histories: &HistoryStore,
        estimate: &[LabelledState<T>],
        time: u32,
        scans: &ScanLog<T>,
        model: &MultiObjectModel<T>,
    ) -> Result<f64> {
        let started = Instant::now();
        let fresh: BTreeSet<Label> = estimate.iter().map(|s| s.label).collect();
        let labels: BTreeSet<Label> = self.trajectories.keys().chain(fresh.iter()).copied().collect();
        let mut out = BTreeMap::new();
        for label in labels {
            let prior_span = self.trajectories.get(&label).and_then(|t| Some((t.start()?, t.end()?)));
            let present = |i: u32| i == time && fresh.contains(&label) || prior_span.is_some_and(|(a, b)| a <= i && i <= b);
            let (start, end) = window_bounds_with(label, label.birth_time.min(time), time, present)?;
            let history = histories.get(&label).ok_or(Error::MissingHistory(label))?;
            if history.is_empty() {
                return Err(Error::MissingHistory(label));
            }
            let cache = self.cache.entry(label).or_insert_with(|| ForwardCache::new(start));
            if !cache.matches(start, end, history) {
                *cache = ForwardCache::new(start);
            }
            cache.extend(label, history, end, scans, model)?;
            let len = (end - start + 1) as usize;
            let (means, covariances) = cache.smooth(len, self.opts.keep_covariances);
            let points = (start..=end).zip(means).collect();
            out.insert(label, Trajectory { points, covariances });
        }
        self.cache.retain(|l, _| out.contains_key(l));
        self.trajectories = out;
        Ok(started.elapsed().as_secs_f64())
    }
}
