use std::sync::Arc;

use nalgebra::DVector;

use super::MultiObjectModel;
use crate::error::{Error, Result};
use crate::rfs::{GaussianMixture, Label, LmbDensity};
use crate::scalar::{lit, neg_infinity, Real};

/// Where a row of the cost table comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrigin {
    Survivor,
    Birth,
}

/// Log-weights of every outcome for one label, with the matching posterior
/// densities.
#[derive(Debug, Clone)]
pub struct CostRow<T: Real> {
    pub label: Label,
    pub origin: RowOrigin,
    /// `ln(1 - r P_S)` for survivors, `ln(1 - r_B)` for births.
    pub log_absent: T,
    /// `ln(r P_S (1 - P_D))` (or with `r_B`).
    pub log_miss: T,
    /// `ln(r P_S psi_j)` per measurement; `-inf` when gated out.
    pub log_detect: Vec<T>,
    pub predicted: Arc<GaussianMixture<T>>,
    pub detected: Vec<Option<Arc<GaussianMixture<T>>>>,
}

impl<T: Real> CostRow<T> {
    /// Log-weight of a choice: `-1` absent, `0` misdetected, `j` measurement j.
    #[inline]
    pub fn log_weight(&self, choice: i32) -> T {
        match choice {
            -1 => self.log_absent,
            0 => self.log_miss,
            j => self.log_detect[(j - 1) as usize],
        }
    }

    pub fn posterior(&self, choice: i32) -> Option<&Arc<GaussianMixture<T>>> {
        match choice {
            -1 => None,
            0 => Some(&self.predicted),
            j => self.detected[(j - 1) as usize].as_ref(),
        }
    }
}

/// Per-label outcome weights for one joint prediction-update step.
#[derive(Debug, Clone)]
pub struct AssociationCostTable<T: Real> {
    pub rows: Vec<CostRow<T>>,
    pub num_measurements: usize,
}

impl<T: Real> AssociationCostTable<T> {
    /// Measurement columns with at least one admissible entry.
    pub fn active_measurements(&self) -> usize {
        (0..self.num_measurements)
            .filter(|&j| self.rows.iter().any(|r| r.log_detect[j].is_finite()))
            .count()
    }

    /// Sum of row log-weights for a full assignment.
    pub fn log_weight(&self, choices: &[i32]) -> T {
        self.rows
            .iter()
            .zip(choices)
            .fold(T::zero(), |acc, (row, &c)| acc + row.log_weight(c))
    }
}

/// Pushes every component through the single-object prediction and returns
/// the mean survival probability (constant survival here).
pub fn predict_track<T: Real>(
    pdf: &GaussianMixture<T>,
    model: &MultiObjectModel<T>,
) -> Result<(GaussianMixture<T>, T)> {
    let predicted = pdf.try_map(|c| model.single.predict(c))?;
    Ok((predicted, model.survival_probability))
}

/// Outcome of the measurement-update factor for one label and one column.
#[derive(Debug, Clone)]
pub struct PsiOutcome<T: Real> {
    pub log_psi: T,
    pub posterior: GaussianMixture<T>,
    /// Smallest squared Mahalanobis distance over the components.
    pub min_mahalanobis_sq: T,
}

pub(crate) fn psi_log<T: Real>(
    pdf_pred: &GaussianMixture<T>,
    j: usize,
    measurements: &[DVector<T>],
    model: &MultiObjectModel<T>,
) -> Result<PsiOutcome<T>> {
    if j > measurements.len() {
        return Err(Error::InvalidParameter(format!(
            "measurement index {j} beyond {} measurements",
            measurements.len()
        )));
    }
    if j == 0 {
        return Ok(PsiOutcome {
            log_psi: (T::one() - model.detection_probability).ln(),
            posterior: pdf_pred.clone(),
            min_mahalanobis_sq: T::zero(),
        });
    }
    let z = &measurements[j - 1];
    let kappa = model.clutter.intensity(z);
    if !(kappa > T::zero()) {
        return Err(Error::ZeroClutter(j));
    }
    let mut comps = Vec::with_capacity(pdf_pred.len());
    let mut min_maha = T::max_value().unwrap_or_else(|| lit(f64::MAX));
    for (w, c) in pdf_pred.components() {
        let out = model.single.update(c, z)?;
        if out.mahalanobis_sq < min_maha {
            min_maha = out.mahalanobis_sq;
        }
        comps.push((w.ln() + out.log_likelihood, out.posterior));
    }
    let logs: Vec<T> = comps.iter().map(|c| c.0).collect();
    let log_q = crate::scalar::log_sum_exp(&logs);
    let log_psi = model.detection_probability.ln() + log_q - kappa.ln();
    Ok(PsiOutcome {
        log_psi,
        posterior: GaussianMixture::from_log_weights(comps)?,
        min_mahalanobis_sq: min_maha,
    })
}

/// `psi_bar` and the posterior mixture for column `j` (0 = misdetection).
pub fn psi_value<T: Real>(
    pdf_pred: &GaussianMixture<T>,
    j: usize,
    measurements: &[DVector<T>],
    model: &MultiObjectModel<T>,
) -> Result<(T, GaussianMixture<T>)> {
    let out = psi_log(pdf_pred, j, measurements, model)?;
    Ok((out.log_psi.exp(), out.posterior))
}

fn build_row<T: Real>(
    label: Label,
    origin: RowOrigin,
    log_presence: T,
    log_not_presence: T,
    predicted: GaussianMixture<T>,
    measurements: &[DVector<T>],
    model: &MultiObjectModel<T>,
) -> Result<CostRow<T>> {
    let miss = psi_log(&predicted, 0, measurements, model)?;
    let mut log_detect = Vec::with_capacity(measurements.len());
    let mut detected = Vec::with_capacity(measurements.len());
    for j in 1..=measurements.len() {
        let out = psi_log(&predicted, j, measurements, model)?;
        let gated = model.gate.is_some_and(|g| out.min_mahalanobis_sq > g);
        if out.log_psi.is_finite() && !gated {
            log_detect.push(log_presence + out.log_psi);
            detected.push(Some(Arc::new(out.posterior)));
        } else {
            log_detect.push(neg_infinity());
            detected.push(None);
        }
    }
    Ok(CostRow {
        label,
        origin,
        log_absent: log_not_presence,
        log_miss: log_presence + miss.log_psi,
        log_detect,
        predicted: Arc::new(predicted),
        detected,
    })
}

/// Builds one row per prior track followed by one row per birth slot. Birth
/// labels are `(time, slot)`.
pub fn build_cost_table<T: Real>(
    lmb_prior: &LmbDensity<T>,
    measurements: &[DVector<T>],
    time: u32,
    model: &MultiObjectModel<T>,
) -> Result<AssociationCostTable<T>> {
    let mut rows = Vec::with_capacity(lmb_prior.len() + model.birth.components.len());
    for (label, track) in lmb_prior.iter() {
        let (predicted, ps_bar) = predict_track(&track.pdf, model)?;
        let r_pred = track.existence * ps_bar;
        rows.push(build_row(
            *label,
            RowOrigin::Survivor,
            r_pred.ln(),
            (T::one() - r_pred).ln(),
            predicted,
            measurements,
            model,
        )?);
    }
    for (slot, b) in model.birth.components.iter().enumerate() {
        rows.push(build_row(
            Label::new(time, slot as u32),
            RowOrigin::Birth,
            b.existence.ln(),
            (T::one() - b.existence).ln(),
            b.pdf.clone(),
            measurements,
            model,
        )?);
    }
    Ok(AssociationCostTable {
        rows,
        num_measurements: measurements.len(),
    })
}
