//! Single-object Gaussian filtering and smoothing.
//!
//! Two backends are provided: the linear Kalman filter with its
//! Rauch-Tung-Striebel smoother, and the unscented Kalman filter with the
//! unscented RTS smoother. Both operate on [`GaussianState`] values and are
//! pure functions of their inputs.

mod linear;
mod unscented;

pub use linear::{kf_predict, kf_predict_with_gain, kf_update, kf_update_full, rts_smooth, LinearModel};
pub use unscented::{
    ukf_predict, ukf_predict_with_gain, ukf_update, ukf_update_full, urts_smooth, MeasurementFunction, MotionFunction,
    NonlinearModel, UnscentedParams,
};

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Mean and covariance of a single object's kinematic state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState<T: Real> {
    mean: DVector<T>,
    covariance: DMatrix<T>,
}

impl<T: Real> GaussianState<T> {
    /// Builds a state, symmetrizing the covariance.
    pub fn new(mean: DVector<T>, covariance: DMatrix<T>) -> Result<Self> {
        let n = mean.len();
        if n == 0 || covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::Dimension(format!(
                "mean has length {n}, covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        Ok(Self {
            mean,
            covariance: symmetrize(covariance),
        })
    }

    pub(crate) fn from_parts_unchecked(mean: DVector<T>, covariance: DMatrix<T>) -> Self {
        Self {
            mean,
            covariance: symmetrize(covariance),
        }
    }

    pub fn from_slices(mean: &[T], covariance_row_major: &[T]) -> Result<Self> {
        let n = mean.len();
        if covariance_row_major.len() != n * n {
            return Err(Error::Dimension(format!(
                "covariance has {} entries, expected {}",
                covariance_row_major.len(),
                n * n
            )));
        }
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_row_slice(n, n, covariance_row_major),
        )
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<T> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn into_parts(self) -> (DVector<T>, DMatrix<T>) {
        (self.mean, self.covariance)
    }

    /// True when the covariance is symmetric and has no eigenvalue below
    /// `-1e-9 * trace`.
    pub fn is_valid_covariance(&self) -> bool {
        is_symmetric(&self.covariance, lit(1e-9)) && is_psd(&self.covariance)
    }
}

/// One time step of a forward filter: the prediction into this step and the
/// state after the (optional) measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredStep<T: Real> {
    pub predicted: GaussianState<T>,
    pub updated: GaussianState<T>,
}

/// Result of a measurement update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome<T: Real> {
    pub posterior: GaussianState<T>,
    /// `ln N(z; z_hat, S)`.
    pub log_likelihood: T,
    /// Squared Mahalanobis distance of the innovation.
    pub mahalanobis_sq: T,
}

/// Single-object backend used by the multi-object recursion and the
/// trajectory estimator.
#[derive(Debug, Clone)]
pub enum SingleObjectModel<T: Real> {
    Linear(LinearModel<T>),
    Nonlinear(NonlinearModel<T>),
}

impl<T: Real> SingleObjectModel<T> {
    pub fn state_dim(&self) -> usize {
        match self {
            Self::Linear(m) => m.state_dim(),
            Self::Nonlinear(m) => m.state_dim(),
        }
    }

    pub fn measurement_dim(&self) -> usize {
        match self {
            Self::Linear(m) => m.measurement_dim(),
            Self::Nonlinear(m) => m.measurement_dim(),
        }
    }

    pub fn predict(&self, state: &GaussianState<T>) -> Result<GaussianState<T>> {
        match self {
            Self::Linear(m) => kf_predict(state, m),
            Self::Nonlinear(m) => ukf_predict(state, m),
        }
    }

    /// Prediction and the RTS smoother gain from `state` to the next step.
    pub fn predict_with_gain(&self, state: &GaussianState<T>) -> Result<(GaussianState<T>, DMatrix<T>)> {
        match self {
            Self::Linear(m) => kf_predict_with_gain(state, m),
            Self::Nonlinear(m) => ukf_predict_with_gain(state, m),
        }
    }

    pub fn update(&self, state: &GaussianState<T>, z: &DVector<T>) -> Result<UpdateOutcome<T>> {
        match self {
            Self::Linear(m) => kf_update_full(state, z, m),
            Self::Nonlinear(m) => ukf_update_full(state, z, m),
        }
    }

    pub fn smooth(&self, filtered: &[FilteredStep<T>]) -> Result<Vec<GaussianState<T>>> {
        match self {
            Self::Linear(m) => rts_smooth(filtered, m),
            Self::Nonlinear(m) => urts_smooth(filtered, m),
        }
    }
}

pub(crate) fn symmetrize<T: Real>(m: DMatrix<T>) -> DMatrix<T> {
    let half: T = lit(0.5);
    let t = m.transpose();
    (m + t) * half
}

pub(crate) fn is_symmetric<T: Real>(m: &DMatrix<T>, tol: T) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub(crate) fn is_psd<T: Real>(m: &DMatrix<T>) -> bool {
    let trace = m.trace().abs();
    let eig = m.clone().symmetric_eigenvalues();
    let floor = -(lit::<T>(1e-9) * trace.max(T::one()));
    eig.iter().all(|&e| e >= floor)
}

/// Cholesky factorisation that rejects near-singular matrices (smallest pivot
/// squared below `1e-12 * trace`).
pub(crate) fn checked_cholesky<T: Real>(
    m: DMatrix<T>,
    what: &'static str,
) -> Result<Cholesky<T, Dyn>> {
    let trace = m.trace();
    if !trace.is_finite() || trace <= T::zero() {
        return Err(Error::Singular(what));
    }
    let chol = Cholesky::new(m).ok_or(Error::Singular(what))?;
    let floor = lit::<T>(1e-12) * trace;
    let l = chol.l_dirty();
    for i in 0..l.nrows() {
        let pivot = l[(i, i)];
        if !(pivot * pivot >= floor) {
            return Err(Error::Singular(what));
        }
    }
    Ok(chol)
}

/// Log density of a zero-mean Gaussian evaluated at `residual`, using an
/// existing Cholesky factor of the covariance. Also returns the squared
/// Mahalanobis distance.
pub(crate) fn log_gaussian<T: Real>(residual: &DVector<T>, chol: &Cholesky<T, Dyn>) -> (T, T) {
    let d = residual.len();
    let solved = chol.solve(residual);
    let maha = residual.dot(&solved);
    let l = chol.l_dirty();
    let mut log_det = T::zero();
    for i in 0..d {
        log_det += l[(i, i)].ln();
    }
    log_det *= lit(2.0);
    let ln_2pi: T = lit((2.0 * PI).ln());
    let ll = -(lit::<T>(0.5)) * (T::from_usize(d).unwrap() * ln_2pi + log_det + maha);
    (ll, maha)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let pi = T::pi();
    let two_pi = T::two_pi();
    let mut x = a % two_pi;
    if x > pi {
        x -= two_pi;
    } else if x <= -pi {
        x += two_pi;
    }
    x
}
