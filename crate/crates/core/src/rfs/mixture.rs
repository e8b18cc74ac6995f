use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filters::{checked_cholesky, GaussianState};
use crate::scalar::{lit, Real};

/// Weighted Gaussian components whose weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture<T: Real> {
    components: Vec<(T, GaussianState<T>)>,
}

/// Pruning, merging and capping thresholds applied after each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureReduction {
    pub prune_weight: f64,
    pub merge_mahalanobis_sq: f64,
    pub max_components: usize,
}

impl Default for MixtureReduction {
    fn default() -> Self {
        Self {
            prune_weight: 1e-5,
            merge_mahalanobis_sq: 4.0,
            max_components: 10,
        }
    }
}

impl<T: Real> GaussianMixture<T> {
    /// Builds a mixture from unnormalised nonnegative weights.
    pub fn new(components: Vec<(T, GaussianState<T>)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        let dim = components[0].1.dim();
        if components.iter().any(|(_, c)| c.dim() != dim) {
            return Err(Error::Dimension("mixture components differ in dimension".into()));
        }
        if components.iter().any(|(w, _)| *w < T::zero() || !w.is_finite()) {
            return Err(Error::InvalidParameter("mixture weights must be finite and nonnegative".into()));
        }
        let total = components.iter().fold(T::zero(), |a, (w, _)| a + *w);
        if total <= T::zero() {
            return Err(Error::InvalidParameter("mixture weights sum to zero".into()));
        }
        Ok(Self {
            components: components.into_iter().map(|(w, c)| (w / total, c)).collect(),
        })
    }

    pub fn single(state: GaussianState<T>) -> Self {
        Self {
            components: vec![(T::one(), state)],
        }
    }

    /// Mixture from log-domain weights.
    pub(crate) fn from_log_weights(components: Vec<(T, GaussianState<T>)>) -> Result<Self> {
        let logs: Vec<T> = components.iter().map(|(w, _)| *w).collect();
        let norm = crate::scalar::log_sum_exp(&logs);
        if !norm.is_finite() {
            return Err(Error::InvalidParameter("mixture log weights are all -inf".into()));
        }
        Self::new(components.into_iter().map(|(w, c)| ((w - norm).exp(), c)).collect())
    }

    pub fn components(&self) -> &[(T, GaussianState<T>)] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    pub fn total_weight(&self) -> T {
        self.components.iter().fold(T::zero(), |a, (w, _)| a + *w)
    }

    /// `E[x]` under the mixture.
    pub fn mean(&self) -> DVector<T> {
        let mut m = DVector::zeros(self.dim());
        for (w, c) in &self.components {
            m.axpy(*w, c.mean(), T::one());
        }
        m
    }

    /// Single Gaussian with the mixture's first two moments.
    pub fn moment_matched(&self) -> GaussianState<T> {
        if self.components.len() == 1 {
            return self.components[0].1.clone();
        }
        moment_match(self.components.iter().map(|(w, c)| (*w, c)))
    }

    /// Applies `f` to every component, keeping the weights.
    pub fn try_map<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&GaussianState<T>) -> Result<GaussianState<T>>,
    {
        let components = self
            .components
            .iter()
            .map(|(w, c)| Ok((*w, f(c)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components })
    }

    /// Prunes light components, merges close ones and caps the count.
    pub fn reduce(&self, cfg: &MixtureReduction) -> Self {
        if self.components.len() == 1 {
            return self.clone();
        }
        let prune: T = lit(cfg.prune_weight);
        let mut remaining: Vec<(T, GaussianState<T>)> = self
            .components
            .iter()
            .filter(|(w, _)| *w >= prune)
            .cloned()
            .collect();
        if remaining.is_empty() {
            // keep the heaviest rather than returning nothing
            let best = self
                .components
                .iter()
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                .unwrap()
                .clone();
            remaining.push(best);
        }

        let threshold: T = lit(cfg.merge_mahalanobis_sq);
        let mut merged = Vec::new();
        while !remaining.is_empty() {
            let (heaviest, _) = remaining
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap())
                .unwrap();
            let anchor = remaining[heaviest].1.clone();
            let chol = checked_cholesky(anchor.covariance().clone(), "mixture component");
            let (close, far): (Vec<_>, Vec<_>) = remaining.into_iter().enumerate().partition(|(i, (_, c))| {
                if *i == heaviest {
                    return true;
                }
                match &chol {
                    Ok(ch) => {
                        let d = c.mean() - anchor.mean();
                        d.dot(&ch.solve(&d)) <= threshold
                    }
                    Err(_) => false,
                }
            });
            remaining = far.into_iter().map(|(_, c)| c).collect();
            let weight = close.iter().fold(T::zero(), |a, (_, (w, _))| a + *w);
            let state = if close.len() == 1 {
                close[0].1 .1.clone()
            } else {
                moment_match(close.iter().map(|(_, (w, c))| (*w / weight, c)))
            };
            merged.push((weight, state));
        }

        merged.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        merged.truncate(cfg.max_components.max(1));
        let total = merged.iter().fold(T::zero(), |a, (w, _)| a + *w);
        Self {
            components: merged.into_iter().map(|(w, c)| (w / total, c)).collect(),
        }
    }
}

fn moment_match<'a, T: Real>(parts: impl Iterator<Item = (T, &'a GaussianState<T>)> + Clone) -> GaussianState<T> {
    let first = parts.clone().next().unwrap().1;
    let n = first.dim();
    let mut mean = DVector::zeros(n);
    let mut total = T::zero();
    for (w, c) in parts.clone() {
        mean.axpy(w, c.mean(), T::one());
        total += w;
    }
    mean /= total;
    let mut cov = DMatrix::zeros(n, n);
    for (w, c) in parts {
        let d = c.mean() - &mean;
        cov += (c.covariance() + &d * d.transpose()) * (w / total);
    }
    GaussianState::from_parts_unchecked(mean, cov)
}
