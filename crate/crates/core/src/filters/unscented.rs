use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{checked_cholesky, log_gaussian, symmetrize, FilteredStep, GaussianState, UpdateOutcome};
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Nonlinear state transition `x+ = m(x) + w`, `w ~ N(0, Q)`.
pub trait MotionFunction<T: Real>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn propagate(&self, x: &DVector<T>) -> DVector<T>;
    fn process_noise(&self) -> &DMatrix<T>;
}

/// Nonlinear observation `z = h(x) + v`, `v ~ N(0, R)`.
pub trait MeasurementFunction<T: Real>: Send + Sync {
    fn measurement_dim(&self) -> usize;
    fn observe(&self, x: &DVector<T>) -> Result<DVector<T>>;
    fn measurement_noise(&self) -> &DMatrix<T>;

    /// `a - b` in measurement space. Override to wrap angular components.
    fn residual(&self, a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
        a - b
    }
}

/// Sigma-point spread parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnscentedParams<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub kappa: T,
}

impl<T: Real> Default for UnscentedParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::one(),
            beta: lit(2.0),
            kappa: T::zero(),
        }
    }
}

struct SigmaWeights<T: Real> {
    scale: T,
    mean: Vec<T>,
    cov: Vec<T>,
}

impl<T: Real> UnscentedParams<T> {
    fn weights(&self, n: usize) -> SigmaWeights<T> {
        let nf = T::from_usize(n).unwrap();
        let lambda = self.alpha * self.alpha * (nf + self.kappa) - nf;
        let scale = nf + lambda;
        let wi = T::one() / (lit::<T>(2.0) * scale);
        let mut mean = vec![wi; 2 * n + 1];
        let mut cov = mean.clone();
        mean[0] = lambda / scale;
        cov[0] = lambda / scale + (T::one() - self.alpha * self.alpha + self.beta);
        SigmaWeights { scale, mean, cov }
    }
}

#[derive(Clone)]
pub struct NonlinearModel<T: Real> {
    pub motion: Arc<dyn MotionFunction<T>>,
    pub measurement: Arc<dyn MeasurementFunction<T>>,
    pub unscented: UnscentedParams<T>,
}

impl<T: Real> fmt::Debug for NonlinearModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("state_dim", &self.motion.state_dim())
            .field("measurement_dim", &self.measurement.measurement_dim())
            .field("unscented", &self.unscented)
            .finish()
    }
}

impl<T: Real> NonlinearModel<T> {
    pub fn new(motion: Arc<dyn MotionFunction<T>>, measurement: Arc<dyn MeasurementFunction<T>>) -> Self {
        Self {
            motion,
            measurement,
            unscented: UnscentedParams::default(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.motion.state_dim()
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement.measurement_dim()
    }
}

fn sigma_points<T: Real>(state: &GaussianState<T>, w: &SigmaWeights<T>) -> Result<Vec<DVector<T>>> {
    let n = state.dim();
    let chol = checked_cholesky(state.covariance() * w.scale, "sigma-point covariance")?;
    let l = chol.l();
    let mut pts = Vec::with_capacity(2 * n + 1);
    pts.push(state.mean().clone());
    for i in 0..n {
        pts.push(state.mean() + l.column(i));
    }
    for i in 0..n {
        pts.push(state.mean() - l.column(i));
    }
    Ok(pts)
}

fn check_dim<T: Real>(state: &GaussianState<T>, model: &NonlinearModel<T>) -> Result<()> {
    if state.dim() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "state has dimension {}, model expects {}",
            state.dim(),
            model.state_dim()
        )));
    }
    Ok(())
}

fn weighted_mean<T: Real>(pts: &[DVector<T>], w: &[T]) -> DVector<T> {
    let mut m = DVector::zeros(pts[0].len());
    for (p, &wi) in pts.iter().zip(w) {
        m.axpy(wi, p, T::one());
    }
    m
}

pub fn ukf_predict<T: Real>(state: &GaussianState<T>, model: &NonlinearModel<T>) -> Result<GaussianState<T>> {
    check_dim(state, model)?;
    let w = model.unscented.weights(state.dim());
    let pts: Vec<_> = sigma_points(state, &w)?
        .iter()
        .map(|x| model.motion.propagate(x))
        .collect();
    let mean = weighted_mean(&pts, &w.mean);
    let mut cov = model.motion.process_noise().clone();
    for (p, &wc) in pts.iter().zip(&w.cov) {
        let d = p - &mean;
        cov.ger(wc, &d, &d, T::one());
    }
    Ok(GaussianState::from_parts_unchecked(mean, cov))
}

/// Prediction together with the smoother gain `G = C Ppred^-1`, where `C`
/// is the sigma-point cross-covariance of the state and its prediction.
pub fn ukf_predict_with_gain<T: Real>(
    state: &GaussianState<T>,
    model: &NonlinearModel<T>,
) -> Result<(GaussianState<T>, DMatrix<T>)> {
    check_dim(state, model)?;
    let w = model.unscented.weights(state.dim());
    let xs = sigma_points(state, &w)?;
    let ys: Vec<_> = xs.iter().map(|x| model.motion.propagate(x)).collect();
    let mean = weighted_mean(&ys, &w.mean);
    let mut cov = model.motion.process_noise().clone();
    let mut cross = DMatrix::zeros(state.dim(), state.dim());
    for ((x, y), &wc) in xs.iter().zip(&ys).zip(&w.cov) {
        let d = y - &mean;
        cov.ger(wc, &d, &d, T::one());
        cross.ger(wc, &(x - state.mean()), &d, T::one());
    }
    let chol = checked_cholesky(cov.clone(), "predicted covariance")?;
    let gain = chol.solve(&cross.transpose()).transpose();
    Ok((GaussianState::from_parts_unchecked(mean, cov), gain))
}

pub fn ukf_update<T: Real>(
    state: &GaussianState<T>,
    z: &DVector<T>,
    model: &NonlinearModel<T>,
) -> Result<(GaussianState<T>, T)> {
    let out = ukf_update_full(state, z, model)?;
    Ok((out.posterior, out.log_likelihood.exp()))
}

/// Unscented measurement update. Residuals go through the measurement
/// model's `residual` hook so angular components stay wrapped.
pub fn ukf_update_full<T: Real>(
    state: &GaussianState<T>,
    z: &DVector<T>,
    model: &NonlinearModel<T>,
) -> Result<UpdateOutcome<T>> {
    check_dim(state, model)?;
    let h = &model.measurement;
    if z.len() != h.measurement_dim() {
        return Err(Error::Dimension(format!(
            "measurement has dimension {}, model expects {}",
            z.len(),
            h.measurement_dim()
        )));
    }
    let w = model.unscented.weights(state.dim());
    let xs = sigma_points(state, &w)?;
    let zs = xs.iter().map(|x| h.observe(x)).collect::<Result<Vec<_>>>()?;

    // Average residuals about the central point so wrapped components are
    // averaged on the circle.
    let anchor = &zs[0];
    let mut offset = DVector::zeros(anchor.len());
    for (zi, &wm) in zs.iter().zip(&w.mean) {
        offset.axpy(wm, &h.residual(zi, anchor), T::one());
    }
    let z_hat = anchor + offset;

    let mut s = h.measurement_noise().clone();
    let mut cross = DMatrix::zeros(state.dim(), z.len());
    for ((xi, zi), &wc) in xs.iter().zip(&zs).zip(&w.cov) {
        let dz = h.residual(zi, &z_hat);
        let dx = xi - state.mean();
        s.ger(wc, &dz, &dz, T::one());
        cross.ger(wc, &dx, &dz, T::one());
    }
    let chol = checked_cholesky(symmetrize(s.clone()), "innovation covariance")?;
    let innovation = h.residual(z, &z_hat);
    let (log_likelihood, mahalanobis_sq) = log_gaussian(&innovation, &chol);
    let gain = chol.solve(&cross.transpose()).transpose();
    let mean = state.mean() + &gain * innovation;
    let cov = state.covariance() - &gain * s * gain.transpose();
    Ok(UpdateOutcome {
        posterior: GaussianState::from_parts_unchecked(mean, cov),
        log_likelihood,
        mahalanobis_sq,
    })
}

/// Unscented RTS smoother. The cross-covariance between consecutive steps is
/// taken from sigma points of the filtered state.
pub fn urts_smooth<T: Real>(
    filtered: &[FilteredStep<T>],
    model: &NonlinearModel<T>,
) -> Result<Vec<GaussianState<T>>> {
    let Some(last) = filtered.last() else {
        return Err(Error::InvalidParameter("cannot smooth an empty sequence".into()));
    };
    let mut out = vec![last.updated.clone(); filtered.len()];
    for i in (0..filtered.len() - 1).rev() {
        let cur = &filtered[i].updated;
        check_dim(cur, model)?;
        let next_pred = &filtered[i + 1].predicted;
        let w = model.unscented.weights(cur.dim());
        let xs = sigma_points(cur, &w)?;
        let ys: Vec<_> = xs.iter().map(|x| model.motion.propagate(x)).collect();
        let y_mean = weighted_mean(&ys, &w.mean);
        let mut cross = DMatrix::zeros(cur.dim(), cur.dim());
        for ((x, y), &wc) in xs.iter().zip(&ys).zip(&w.cov) {
            cross.ger(wc, &(x - cur.mean()), &(y - &y_mean), T::one());
        }
        let chol = checked_cholesky(next_pred.covariance().clone(), "predicted covariance")?;
        let gain = chol.solve(&cross.transpose()).transpose();
        let next_smoothed = &out[i + 1];
        let mean = cur.mean() + &gain * (next_smoothed.mean() - next_pred.mean());
        let cov = cur.covariance()
            + &gain * (next_smoothed.covariance() - next_pred.covariance()) * gain.transpose();
        out[i] = GaussianState::from_parts_unchecked(mean, cov);
    }
    Ok(out)
}
