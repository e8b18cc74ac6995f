//! LMB approximation of the δ-GLMB posterior, best association maps and the
//! per-step filter.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::glmb::{joint_predict_update, MultiObjectModel, TruncationParams};
use crate::rfs::{
    extract_map_states, lmb_cardinality_distribution, map_cardinality, GaussianMixture, GlmbDensity,
    HistoryStore, Label, LabelledState, LmbDensity, MixtureReduction,
};
use crate::scalar::{lit, Real};

/// Per-label measurement index of the best-weighted hypothesis at one step.
pub type BestAssociationSet = BTreeMap<Label, usize>;

/// Wall-clock split of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepTiming {
    pub filter_seconds: f64,
    pub estimator_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct LmbStepOutput<T: Real> {
    pub posterior: LmbDensity<T>,
    pub best_assoc: BestAssociationSet,
    pub estimate: Vec<LabelledState<T>>,
    pub timing: StepTiming,
}

/// Measurement sets indexed by time step, starting at 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScanLog<T: Real> {
    scans: Vec<Vec<DVector<T>>>,
}

impl<T: Real> ScanLog<T> {
    pub fn new() -> Self {
        Self { scans: Vec::new() }
    }

    /// Appends the scan of the next step and returns its time.
    pub fn push(&mut self, scan: Vec<DVector<T>>) -> u32 {
        self.scans.push(scan);
        self.scans.len() as u32
    }

    pub fn at(&self, time: u32) -> Option<&[DVector<T>]> {
        let i = (time as usize).checked_sub(1)?;
        self.scans.get(i).map(Vec::as_slice)
    }

    pub fn last_time(&self) -> u32 {
        self.scans.len() as u32
    }
}

impl<T: Real> FromIterator<Vec<DVector<T>>> for ScanLog<T> {
    fn from_iter<I: IntoIterator<Item = Vec<DVector<T>>>>(iter: I) -> Self {
        Self {
            scans: iter.into_iter().collect(),
        }
    }
}

/// Matches the first moment of a δ-GLMB density with an LMB density.
///
/// Existence is the total weight of the hypotheses holding a label; the
/// spatial density is their weight-proportional mixture, reduced with
/// `reduction`. Labels with existence below `prune_existence` are dropped.
pub fn glmb_to_lmb<T: Real>(glmb: &GlmbDensity<T>, reduction: &MixtureReduction, prune_existence: f64) -> LmbDensity<T> {
    // hypotheses making the same choice share the posterior Arc
    let mut parts: BTreeMap<Label, (T, Vec<(T, Arc<GaussianMixture<T>>)>)> = BTreeMap::new();
    for h in &glmb.hypotheses {
        for (label, pdf) in &h.pdfs {
            let entry = parts.entry(*label).or_insert_with(|| (T::zero(), Vec::new()));
            entry.0 += h.weight;
            match entry.1.iter_mut().find(|(_, p)| Arc::ptr_eq(p, pdf)) {
                Some(slot) => slot.0 += h.weight,
                None => entry.1.push((h.weight, Arc::clone(pdf))),
            }
        }
    }
    let prune: T = lit(prune_existence);
    let mut lmb = LmbDensity::new();
    for (label, (r, pieces)) in parts {
        if r < prune || r <= T::zero() {
            continue;
        }
        let pdf = if pieces.len() == 1 {
            pieces[0].1.as_ref().clone()
        } else {
            let comps = pieces
                .iter()
                .flat_map(|(w, p)| p.components().iter().map(move |(wc, c)| (*w * *wc, c.clone())))
                .collect();
            GaussianMixture::new(comps).expect("posterior mixtures are valid")
        };
        lmb.insert(label, r, pdf.reduce(reduction));
    }
    lmb
}

/// For each label, the measurement index it takes in the heaviest hypothesis
/// containing it. Equal weights go to the smaller association map.
pub fn best_association<T: Real>(glmb: &GlmbDensity<T>) -> BestAssociationSet {
    let mut best: BTreeMap<Label, (T, usize, usize)> = BTreeMap::new();
    for (hi, h) in glmb.hypotheses.iter().enumerate() {
        for (label, &j) in h.theta.iter() {
            match best.get_mut(label) {
                Some(b) => {
                    let prev = &glmb.hypotheses[b.2].theta;
                    if h.weight > b.0 || (h.weight == b.0 && h.theta < *prev) {
                        *b = (h.weight, j, hi);
                    }
                }
                None => {
                    best.insert(*label, (h.weight, j, hi));
                }
            }
        }
    }
    best.into_iter().map(|(l, (_, j, _))| (l, j)).collect()
}

/// Appends `(time, best(label))` to every label's history. Labels without a
/// history must be births of `time`.
pub fn extend_history(store: &mut HistoryStore, best: &BestAssociationSet, time: u32) -> Result<()> {
    for (label, &j) in best {
        match store.get_mut(label) {
            Some(h) => h.push(*label, time, j)?,
            None if label.birth_time == time => {
                let mut h = crate::rfs::AssociationHistory::default();
                h.push(*label, time, j)?;
                store.insert(*label, h);
            }
            None => return Err(Error::MissingHistory(*label)),
        }
    }
    Ok(())
}

/// One full LMB step: joint prediction-update, LMB approximation, best
/// association maps for the retained labels and the MAP estimate.
pub fn lmb_filter_step<T: Real>(
    lmb: &LmbDensity<T>,
    measurements: &[DVector<T>],
    time: u32,
    model: &MultiObjectModel<T>,
    trunc: &TruncationParams,
    seed: u64,
) -> Result<LmbStepOutput<T>> {
    let started = Instant::now();
    let glmb = joint_predict_update(lmb, measurements, time, model, trunc, seed)?;
    let posterior = glmb_to_lmb(&glmb, &model.reduction, model.prune_existence);
    let mut best_assoc = best_association(&glmb);
    best_assoc.retain(|l, _| posterior.get(l).is_some());
    let n = map_cardinality(&lmb_cardinality_distribution(&posterior));
    let estimate = extract_map_states(&posterior, n)?;
    Ok(LmbStepOutput {
        posterior,
        best_assoc,
        estimate,
        timing: StepTiming {
            filter_seconds: started.elapsed().as_secs_f64(),
            estimator_seconds: 0.0,
        },
    })
}

/// Seed of the association sampler at `time` for a run seeded with `seed`.
pub fn step_seed(seed: u64, time: u32) -> u64 {
    seed ^ (time as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Filter state carried between steps.
#[derive(Debug, Clone)]
pub struct LmbFilter<T: Real> {
    pub model: MultiObjectModel<T>,
    pub trunc: TruncationParams,
    pub seed: u64,
    pub posterior: LmbDensity<T>,
    pub histories: HistoryStore,
    pub scans: ScanLog<T>,
}

impl<T: Real> LmbFilter<T> {
    pub fn new(model: MultiObjectModel<T>, trunc: TruncationParams, seed: u64) -> Self {
        Self {
            model,
            trunc,
            seed,
            posterior: LmbDensity::new(),
            histories: HistoryStore::new(),
            scans: ScanLog::new(),
        }
    }

    /// Time of the last processed scan (0 before the first).
    pub fn time(&self) -> u32 {
        self.scans.last_time()
    }

    /// Processes the next scan and records the association histories.
    pub fn step(&mut self, scan: Vec<DVector<T>>) -> Result<LmbStepOutput<T>> {
        let time = self.time() + 1;
        let out = lmb_filter_step(
            &self.posterior,
            &scan,
            time,
            &self.model,
            &self.trunc,
            step_seed(self.seed, time),
        )?;
        extend_history(&mut self.histories, &out.best_assoc, time)?;
        self.scans.push(scan);
        self.posterior = out.posterior.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{GaussianState, LinearModel, SingleObjectModel};
    use crate::glmb::{enumerate_hypotheses_exact, build_cost_table, BirthComponent, BirthModel, Clutter};
    use crate::rfs::{AssociationMap, GlmbHypothesis};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn g1(m: f64) -> GaussianMixture<f64> {
        GaussianMixture::single(GaussianState::from_slices(&[m], &[1.0]).unwrap())
    }

    fn hyp(pairs: &[(Label, usize, f64)], w: f64) -> GlmbHypothesis<f64> {
        GlmbHypothesis {
            theta: AssociationMap::new(pairs.iter().map(|p| (p.0, p.1))).unwrap(),
            weight: w,
            pdfs: pairs.iter().map(|p| (p.0, Arc::new(g1(p.2)))).collect(),
        }
    }

    fn model(births: usize) -> MultiObjectModel<f64> {
        let lin = LinearModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let birth = BirthModel::new(
            (0..births)
                .map(|i| BirthComponent {
                    existence: 0.05,
                    pdf: g1(100.0 * i as f64),
                })
                .collect(),
        )
        .unwrap();
        let mut m = MultiObjectModel::new(
            0.99,
            0.95,
            Clutter::Uniform { intensity: 0.001 },
            SingleObjectModel::Linear(lin),
            birth,
        )
        .unwrap();
        m.gate = None;
        m
    }

    const L: Label = Label::new(1, 0);
    const M: Label = Label::new(1, 1);

    #[test]
    fn single_certain_hypothesis() {
        let glmb = GlmbDensity {
            hypotheses: vec![hyp(&[(L, 1, 3.0)], 1.0)],
        };
        let lmb = glmb_to_lmb(&glmb, &MixtureReduction::default(), 1e-3);
        let b = lmb.get(&L).unwrap();
        assert_eq!(b.existence, crate::rfs::MAX_EXISTENCE);
        assert_eq!(b.pdf, g1(3.0));
    }

    #[test]
    fn existence_sums_hypothesis_weights() {
        let glmb = GlmbDensity {
            hypotheses: vec![hyp(&[(L, 1, 3.0)], 0.6), hyp(&[(M, 0, -3.0)], 0.4)],
        };
        let lmb = glmb_to_lmb(&glmb, &MixtureReduction::default(), 1e-3);
        assert_relative_eq!(lmb.get(&L).unwrap().existence, 0.6);
        assert_eq!(lmb.get(&L).unwrap().pdf, g1(3.0));
        assert_relative_eq!(lmb.get(&M).unwrap().existence, 0.4);
    }

    #[test]
    fn pdf_is_weighted_mixture() {
        let glmb = GlmbDensity {
            hypotheses: vec![hyp(&[(L, 1, 0.0)], 0.75), hyp(&[(L, 0, 10.0)], 0.25)],
        };
        let lmb = glmb_to_lmb(&glmb, &MixtureReduction::default(), 1e-3);
        let pdf = &lmb.get(&L).unwrap().pdf;
        assert_eq!(pdf.len(), 2);
        assert_relative_eq!(pdf.mean()[0], 2.5, epsilon = 1e-12);
    }

    #[test]
    fn low_existence_labels_pruned() {
        let glmb = GlmbDensity {
            hypotheses: vec![hyp(&[(L, 1, 0.0)], 0.9995), hyp(&[(L, 1, 0.0), (M, 0, 5.0)], 0.0005)],
        };
        let lmb = glmb_to_lmb(&glmb, &MixtureReduction::default(), 1e-3);
        assert!(lmb.get(&M).is_none());
        assert_eq!(lmb.len(), 1);
    }

    #[test]
    fn best_association_examples() {
        let glmb = GlmbDensity {
            hypotheses: vec![hyp(&[(L, 2, 0.0)], 0.7), hyp(&[(L, 0, 0.0)], 0.3)],
        };
        assert_eq!(best_association(&glmb)[&L], 2);

        let single = GlmbDensity {
            hypotheses: vec![hyp(&[(L, 1, 0.0), (M, 0, 0.0)], 1.0)],
        };
        assert_eq!(best_association(&single), BTreeMap::from([(L, 1), (M, 0)]));

        let misses = GlmbDensity {
            hypotheses: vec![hyp(&[(L, 0, 0.0), (M, 1, 0.0)], 0.6), hyp(&[(L, 0, 0.0)], 0.4)],
        };
        assert_eq!(best_association(&misses)[&L], 0);

        // equal weights: the smaller map wins
        let tied = GlmbDensity {
            hypotheses: vec![hyp(&[(L, 2, 0.0)], 0.5), hyp(&[(L, 1, 0.0)], 0.5)],
        };
        assert_eq!(best_association(&tied)[&L], 1);
    }

    #[test]
    fn history_extension() {
        let mut store = HistoryStore::new();
        extend_history(&mut store, &BTreeMap::from([(L, 1)]), 1).unwrap();
        assert_eq!(store[&L].len(), 1);
        for t in 2..=5 {
            extend_history(&mut store, &BTreeMap::from([(L, 0)]), t).unwrap();
        }
        extend_history(&mut store, &BTreeMap::from([(L, 3)]), 6).unwrap();
        assert_eq!(store[&L].len(), 6);
        assert_eq!(store[&L].entries().last(), Some(&(6, 3)));
        // unknown label that is not a birth of this step
        assert!(extend_history(&mut store, &BTreeMap::from([(M, 0)]), 7).is_err());
        assert!(extend_history(&mut store, &BTreeMap::from([(L, 0)]), 6).is_err());
    }

    #[test]
    fn pruned_label_history_is_frozen() {
        let mut f = LmbFilter::new(model(1), TruncationParams::default(), 3);
        f.step(vec![DVector::from_element(1, 0.0)]).unwrap();
        let born = Label::new(1, 0);
        assert!(f.posterior.get(&born).is_some());
        assert_eq!(f.histories[&born].len(), 1);
        f.model.survival_probability = 1e-9;
        for _ in 0..2 {
            f.step(vec![DVector::from_element(1, 0.0)]).unwrap();
            assert!(f.posterior.get(&born).is_none());
            assert_eq!(f.histories[&born].len(), 1);
        }
    }

    #[test]
    fn empty_everything() {
        let out = lmb_filter_step(&LmbDensity::new(), &[], 1, &model(0), &TruncationParams::default(), 0).unwrap();
        assert!(out.posterior.is_empty());
        assert!(out.estimate.is_empty());
        assert!(out.best_assoc.is_empty());
    }

    #[test]
    fn detection_strengthens_existence() {
        let mut prior = LmbDensity::new();
        prior.insert(L, 0.6, g1(0.0));
        let m = model(0);
        let out = lmb_filter_step(&prior, &[DVector::from_element(1, 0.0)], 2, &m, &TruncationParams::default(), 0).unwrap();
        let r = out.posterior.get(&L).unwrap().existence;
        assert!(r >= 0.6);
        // oracle: total weight of the enumerated maps that contain L
        let table = build_cost_table(&prior, &[DVector::from_element(1, 0.0)], 2, &m).unwrap();
        let oracle: f64 = enumerate_hypotheses_exact(&table)
            .unwrap()
            .iter()
            .filter(|(map, _)| map.get(&L).is_some())
            .map(|h| h.1)
            .sum();
        assert_relative_eq!(r, oracle, epsilon = 1e-12);
        assert_eq!(out.best_assoc[&L], 1);
        assert_eq!(out.estimate.len(), 1);
    }

    #[test]
    fn scan_log_is_one_based() {
        let mut log = ScanLog::<f64>::new();
        assert_eq!(log.push(vec![]), 1);
        assert_eq!(log.push(vec![DVector::zeros(1)]), 2);
        assert!(log.at(0).is_none());
        assert_eq!(log.at(2).unwrap().len(), 1);
        assert!(log.at(3).is_none());
    }

    proptest! {
        #[test]
        fn phd_mass_is_preserved(
            ws in prop::collection::vec(0.01f64..1.0, 1..6),
            masks in prop::collection::vec(0u8..8, 6),
        ) {
            let labels = [Label::new(1, 0), Label::new(1, 1), Label::new(2, 0)];
            let total: f64 = ws.iter().sum();
            let hypotheses: Vec<_> = ws
                .iter()
                .zip(&masks)
                .map(|(w, mask)| {
                    let pairs: Vec<_> = labels
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(i, l)| (*l, 0, i as f64))
                        .collect();
                    hyp(&pairs, w / total)
                })
                .collect();
            let glmb = GlmbDensity { hypotheses };
            // sum of w |I|, with the existence cap applied per label
            let phd: f64 = labels
                .iter()
                .map(|l| {
                    let r: f64 = glmb.hypotheses.iter().filter(|h| h.contains(l)).map(|h| h.weight).sum();
                    r.min(crate::rfs::MAX_EXISTENCE)
                })
                .sum();
            let lmb = glmb_to_lmb(&glmb, &MixtureReduction::default(), 0.0);
            prop_assert!((lmb.expected_cardinality() - phd).abs() <= 1e-9);

            let best = best_association(&glmb);
            for (l, j) in &best {
                let top = glmb.hypotheses.iter().filter(|h| h.contains(l)).map(|h| h.weight).fold(0.0, f64::max);
                prop_assert!(glmb.hypotheses.iter().any(|h| h.weight == top && h.theta.get(l) == Some(*j)));
            }
        }

        #[test]
        fn step_is_deterministic(seed in 0u64..1000, zs in prop::collection::vec(-50.0f64..50.0, 0..5)) {
            let mut prior = LmbDensity::new();
            prior.insert(L, 0.7, g1(0.0));
            prior.insert(M, 0.4, g1(20.0));
            let scan: Vec<_> = zs.iter().map(|&z| DVector::from_element(1, z)).collect();
            let m = model(2);
            let t = TruncationParams::default();
            let a = lmb_filter_step(&prior, &scan, 2, &m, &t, seed).unwrap();
            let b = lmb_filter_step(&prior, &scan, 2, &m, &t, seed).unwrap();
            prop_assert_eq!(a.posterior, b.posterior);
            prop_assert_eq!(a.best_assoc, b.best_assoc);
            prop_assert_eq!(a.estimate, b.estimate);
        }
    }
}
