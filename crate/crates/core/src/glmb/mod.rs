//! Joint prediction and update of an LMB prior into a δ-GLMB posterior.
//!
//! Each prior track and each birth slot becomes one row of an
//! [`AssociationCostTable`]. Joint association hypotheses are either
//! enumerated exactly (small instances) or discovered with a Gibbs sampler;
//! every hypothesis weight is the exact product of its row factors.

mod sampling;
mod table;

pub use sampling::{
    enumerate_hypotheses_exact, gibbs_sample_hypotheses, RawHypothesis, MAX_EXACT_MEASUREMENTS,
    MAX_EXACT_ROWS,
};
pub use table::{build_cost_table, predict_track, psi_value, AssociationCostTable, CostRow, RowOrigin};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::filters::{GaussianState, SingleObjectModel};
use crate::rfs::{AssociationMap, GaussianMixture, GlmbDensity, GlmbHypothesis, LmbDensity, MixtureReduction};
use crate::scalar::{lit, Real};

/// Chi-square 0.999 quantile for two degrees of freedom.
pub const DEFAULT_GATE: f64 = 13.8155;

/// Clutter intensity `kappa(z)`.
#[derive(Clone)]
pub enum Clutter<T: Real> {
    /// Constant intensity over the measurement space.
    Uniform { intensity: T },
    Custom(Arc<dyn Fn(&DVector<T>) -> T + Send + Sync>),
}

impl<T: Real> Clutter<T> {
    /// Poisson rate spread uniformly over a measurement-space volume.
    pub fn uniform(rate: T, volume: T) -> Self {
        Self::Uniform {
            intensity: rate / volume,
        }
    }

    pub fn intensity(&self, z: &DVector<T>) -> T {
        match self {
            Self::Uniform { intensity } => *intensity,
            Self::Custom(f) => f(z),
        }
    }
}

impl<T: Real> fmt::Debug for Clutter<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform { intensity } => f.debug_struct("Uniform").field("intensity", intensity).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirthComponent<T: Real> {
    pub existence: T,
    pub pdf: GaussianMixture<T>,
}

/// LMB birth model; slot `i` produces label `(k, i)` at every step `k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BirthModel<T: Real> {
    pub components: Vec<BirthComponent<T>>,
}

impl<T: Real> BirthModel<T> {
    pub fn new(components: Vec<BirthComponent<T>>) -> Result<Self> {
        for c in &components {
            if !(c.existence > T::zero() && c.existence < T::one()) {
                return Err(Error::InvalidParameter("birth probability must lie in (0, 1)".into()));
            }
        }
        Ok(Self { components })
    }

    /// Moment-matched birth density of a slot.
    pub fn initial_state(&self, slot: usize) -> Option<GaussianState<T>> {
        self.components.get(slot).map(|c| c.pdf.moment_matched())
    }
}

#[derive(Debug, Clone)]
pub struct MultiObjectModel<T: Real> {
    pub survival_probability: T,
    pub detection_probability: T,
    pub clutter: Clutter<T>,
    pub single: SingleObjectModel<T>,
    pub birth: BirthModel<T>,
    /// Squared-Mahalanobis gate for detection entries; `None` disables gating.
    pub gate: Option<T>,
    pub reduction: MixtureReduction,
    /// Tracks whose existence falls below this are dropped after the update.
    pub prune_existence: f64,
}

impl<T: Real> MultiObjectModel<T> {
    pub fn new(
        survival_probability: T,
        detection_probability: T,
        clutter: Clutter<T>,
        single: SingleObjectModel<T>,
        birth: BirthModel<T>,
    ) -> Result<Self> {
        let unit = |p: T| p > T::zero() && p <= T::one();
        if !unit(survival_probability) || !unit(detection_probability) {
            return Err(Error::InvalidParameter("P_S and P_D must lie in (0, 1]".into()));
        }
        Ok(Self {
            survival_probability,
            detection_probability,
            clutter,
            single,
            birth,
            gate: Some(lit(DEFAULT_GATE)),
            reduction: MixtureReduction::default(),
            prune_existence: 1e-3,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssociationStrategy {
    /// Exact enumeration when the instance is small enough, Gibbs otherwise.
    #[default]
    Auto,
    Exact,
    Gibbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationParams {
    pub max_hypotheses: usize,
    pub gibbs_iterations: usize,
    pub strategy: AssociationStrategy,
}

impl Default for TruncationParams {
    fn default() -> Self {
        Self {
            max_hypotheses: 1000,
            gibbs_iterations: 1000,
            strategy: AssociationStrategy::Auto,
        }
    }
}

/// Hypotheses for a cost table under the chosen strategy, truncated and with
/// normalised log-weights.
pub fn solve_associations<T: Real>(
    table: &AssociationCostTable<T>,
    trunc: &TruncationParams,
    seed: u64,
) -> Result<Vec<RawHypothesis<T>>> {
    let exact = match trunc.strategy {
        AssociationStrategy::Exact => true,
        AssociationStrategy::Gibbs => false,
        AssociationStrategy::Auto => sampling::fits_exact(table),
    };
    let raw = if exact {
        sampling::enumerate_raw(table)?
    } else {
        if trunc.gibbs_iterations == 0 {
            return Err(Error::InvalidParameter("Gibbs sampler needs at least one iteration".into()));
        }
        sampling::gibbs_raw(table, trunc.gibbs_iterations, seed)
    };
    Ok(sampling::truncate_and_normalize(raw, trunc.max_hypotheses))
}

/// Converts solved assignments into a δ-GLMB density. Posterior mixtures are
/// shared between hypotheses that make the same choice for a label.
pub fn hypotheses_to_glmb<T: Real>(table: &AssociationCostTable<T>, hyps: &[RawHypothesis<T>]) -> GlmbDensity<T> {
    let hypotheses = hyps
        .iter()
        .map(|h| {
            let mut pairs = Vec::new();
            let mut pdfs = BTreeMap::new();
            for (row, &c) in table.rows.iter().zip(&h.choices) {
                if let Some(pdf) = row.posterior(c) {
                    pairs.push((row.label, c as usize));
                    pdfs.insert(row.label, Arc::clone(pdf));
                }
            }
            GlmbHypothesis {
                theta: AssociationMap::new(pairs).expect("assignments are 1-1"),
                weight: h.log_weight.exp(),
                pdfs,
            }
        })
        .collect();
    let mut glmb = GlmbDensity { hypotheses };
    glmb.normalize();
    glmb
}

/// One joint prediction-update step: LMB prior at `time - 1` and the scan at
/// `time` to a truncated, normalised δ-GLMB posterior.
pub fn joint_predict_update<T: Real>(
    lmb_prior: &LmbDensity<T>,
    measurements: &[DVector<T>],
    time: u32,
    model: &MultiObjectModel<T>,
    trunc: &TruncationParams,
    seed: u64,
) -> Result<GlmbDensity<T>> {
    let table = build_cost_table(lmb_prior, measurements, time, model)?;
    let hyps = solve_associations(&table, trunc, seed)?;
    Ok(hypotheses_to_glmb(&table, &hyps))
}
