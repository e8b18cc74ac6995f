//! Labelled random finite set data model: labels, LMB and δ-GLMB densities,
//! association maps and histories, cardinality and MAP state extraction.

mod mixture;

pub use mixture::{GaussianMixture, MixtureReduction};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Upper bound on existence probabilities.
pub const MAX_EXISTENCE: f64 = 1.0 - 1e-6;

/// Track identity: birth time step and index among that step's births.
/// Ordered by birth time, then index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label {
    pub birth_time: u32,
    pub index: u32,
}

impl Label {
    pub const fn new(birth_time: u32, index: u32) -> Self {
        Self { birth_time, index }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.birth_time, self.index)
    }
}

/// Start and end time of `label` inside the window `window_start..=window_end`.
///
/// The start is `max(window_start, birth_time)`; the end adds one for every
/// step after the start at which the label is present, gaps included.
pub fn label_window_bounds(
    label: Label,
    window_start: u32,
    window_end: u32,
    presence: &BTreeMap<u32, BTreeSet<Label>>,
) -> Result<(u32, u32)> {
    window_bounds_with(label, window_start, window_end, |i| {
        presence.get(&i).is_some_and(|s| s.contains(&label))
    })
}

pub(crate) fn window_bounds_with(
    label: Label,
    window_start: u32,
    window_end: u32,
    present: impl Fn(u32) -> bool,
) -> Result<(u32, u32)> {
    if window_start > window_end {
        return Err(Error::InvalidParameter(format!(
            "window start {window_start} after end {window_end}"
        )));
    }
    if !(window_start..=window_end).any(&present) {
        return Err(Error::EmptyTrajectory(label));
    }
    let start = window_start.max(label.birth_time);
    let count = (start + 1..=window_end).filter(|&i| present(i)).count() as u32;
    Ok((start, start + count))
}

/// One Bernoulli component of an LMB density.
#[derive(Debug, Clone, PartialEq)]
pub struct Bernoulli<T: Real> {
    pub existence: T,
    pub pdf: GaussianMixture<T>,
}

/// Labelled multi-Bernoulli density.
#[derive(Debug, Clone, PartialEq)]
pub struct LmbDensity<T: Real> {
    tracks: BTreeMap<Label, Bernoulli<T>>,
}

impl<T: Real> Default for LmbDensity<T> {
    fn default() -> Self {
        Self {
            tracks: BTreeMap::new(),
        }
    }
}

impl<T: Real> LmbDensity<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a track, clamping the existence probability into
    /// `[0, MAX_EXISTENCE]`.
    pub fn insert(&mut self, label: Label, existence: T, pdf: GaussianMixture<T>) {
        let r = existence.max(T::zero()).min(lit(MAX_EXISTENCE));
        self.tracks.insert(label, Bernoulli { existence: r, pdf });
    }

    pub fn get(&self, label: &Label) -> Option<&Bernoulli<T>> {
        self.tracks.get(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, &Bernoulli<T>)> {
        self.tracks.iter()
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.tracks.keys()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Expected number of objects, `sum r`.
    pub fn expected_cardinality(&self) -> T {
        self.tracks.values().fold(T::zero(), |a, b| a + b.existence)
    }

    pub fn retain(&mut self, f: impl FnMut(&Label, &mut Bernoulli<T>) -> bool) {
        self.tracks.retain(f);
    }
}

/// Cardinality distribution of an LMB density (Poisson-binomial of the
/// existence probabilities), indexed by object count.
pub fn lmb_cardinality_distribution<T: Real>(lmb: &LmbDensity<T>) -> Vec<T> {
    let mut pmf = vec![T::one()];
    for b in lmb.tracks.values() {
        let r = b.existence;
        let mut next = vec![T::zero(); pmf.len() + 1];
        for (n, &p) in pmf.iter().enumerate() {
            next[n] += p * (T::one() - r);
            next[n + 1] += p * r;
        }
        pmf = next;
    }
    pmf
}

/// Mode of a cardinality pmf; ties go to the smaller count.
pub fn map_cardinality<T: Real>(pmf: &[T]) -> usize {
    let mut best = 0;
    for (n, &p) in pmf.iter().enumerate() {
        if p > pmf[best] {
            best = n;
        }
    }
    best
}

/// Labelled point estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledState<T: Real> {
    pub label: Label,
    pub state: DVector<T>,
}

/// Picks the `n` most likely tracks (ties broken by label order) and reports
/// each with its mixture mean. Output is sorted by label.
pub fn extract_map_states<T: Real>(lmb: &LmbDensity<T>, n: usize) -> Result<Vec<LabelledState<T>>> {
    if n > lmb.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot extract {n} states from {} tracks",
            lmb.len()
        )));
    }
    let mut ranked: Vec<(&Label, &Bernoulli<T>)> = lmb.tracks.iter().collect();
    // stable sort keeps label order among equal existence probabilities
    ranked.sort_by(|a, b| b.1.existence.partial_cmp(&a.1.existence).unwrap());
    let mut out: Vec<_> = ranked
        .into_iter()
        .take(n)
        .map(|(l, b)| LabelledState {
            label: *l,
            state: b.pdf.mean(),
        })
        .collect();
    out.sort_by_key(|s| s.label);
    Ok(out)
}

/// Positive 1-1 map from labels to measurement indices. Index 0 means the
/// label is misdetected; `j > 0` refers to measurement `j` (1-based).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AssociationMap {
    assignment: BTreeMap<Label, usize>,
}

impl AssociationMap {
    pub fn new(pairs: impl IntoIterator<Item = (Label, usize)>) -> Result<Self> {
        let mut assignment = BTreeMap::new();
        let mut used = BTreeSet::new();
        for (label, j) in pairs {
            if j > 0 && !used.insert(j) {
                return Err(Error::InvalidParameter(format!(
                    "measurement {j} assigned to more than one label"
                )));
            }
            if assignment.insert(label, j).is_some() {
                return Err(Error::InvalidParameter(format!("label {label} assigned twice")));
            }
        }
        Ok(Self { assignment })
    }

    pub fn get(&self, label: &Label) -> Option<usize> {
        self.assignment.get(label).copied()
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.assignment.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, &usize)> {
        self.assignment.iter()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn is_one_to_one(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.assignment.values().filter(|&&j| j > 0).all(|j| seen.insert(*j))
    }
}

/// One δ-GLMB hypothesis. The label set is the domain of `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmbHypothesis<T: Real> {
    pub theta: AssociationMap,
    pub weight: T,
    pub pdfs: BTreeMap<Label, Arc<GaussianMixture<T>>>,
}

impl<T: Real> GlmbHypothesis<T> {
    pub fn labels(&self) -> BTreeSet<Label> {
        self.theta.labels().copied().collect()
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.theta.get(label).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GlmbDensity<T: Real> {
    pub hypotheses: Vec<GlmbHypothesis<T>>,
}

impl<T: Real> GlmbDensity<T> {
    pub fn total_weight(&self) -> T {
        self.hypotheses.iter().fold(T::zero(), |a, h| a + h.weight)
    }

    pub fn normalize(&mut self) {
        let total = self.total_weight();
        if total > T::zero() {
            for h in &mut self.hypotheses {
                h.weight /= total;
            }
        }
    }

    /// All labels appearing in any hypothesis.
    pub fn labels(&self) -> BTreeSet<Label> {
        self.hypotheses.iter().flat_map(|h| h.theta.labels().copied()).collect()
    }
}

/// Best measurement index recorded for a label at each step of its life.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AssociationHistory {
    entries: Vec<(u32, usize)>,
}

impl AssociationHistory {
    pub fn entries(&self) -> &[(u32, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first_time(&self) -> Option<u32> {
        self.entries.first().map(|e| e.0)
    }

    pub fn last_time(&self) -> Option<u32> {
        self.entries.last().map(|e| e.0)
    }

    /// Measurement index at `time`, if recorded.
    pub fn at(&self, time: u32) -> Option<usize> {
        let first = self.first_time()?;
        let idx = time.checked_sub(first)? as usize;
        self.entries.get(idx).map(|e| e.1)
    }

    /// Appends an entry; times must be contiguous.
    pub fn push(&mut self, label: Label, time: u32, index: usize) -> Result<()> {
        if let Some(last) = self.last_time() {
            if time != last + 1 {
                return Err(Error::TimeRegression { label, time });
            }
        }
        self.entries.push((time, index));
        Ok(())
    }
}

pub type HistoryStore = BTreeMap<Label, AssociationHistory>;
