use nalgebra::{DMatrix, DVector};

use super::{checked_cholesky, log_gaussian, symmetrize, FilteredStep, GaussianState, UpdateOutcome};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Linear-Gaussian transition `x+ = F x + w`, `w ~ N(0, Q)` and observation
/// `z = H x + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel<T: Real> {
    pub transition: DMatrix<T>,
    pub process_noise: DMatrix<T>,
    pub observation: DMatrix<T>,
    pub measurement_noise: DMatrix<T>,
}

impl<T: Real> LinearModel<T> {
    pub fn new(
        transition: DMatrix<T>,
        process_noise: DMatrix<T>,
        observation: DMatrix<T>,
        measurement_noise: DMatrix<T>,
    ) -> Result<Self> {
        let n = transition.nrows();
        let m = observation.nrows();
        if transition.ncols() != n || process_noise.shape() != (n, n) {
            return Err(Error::Dimension("F and Q must be n x n".into()));
        }
        if observation.ncols() != n || measurement_noise.shape() != (m, m) {
            return Err(Error::Dimension("H must be m x n and R m x m".into()));
        }
        Ok(Self {
            transition,
            process_noise: symmetrize(process_noise),
            observation,
            measurement_noise: symmetrize(measurement_noise),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn measurement_dim(&self) -> usize {
        self.observation.nrows()
    }
}

pub fn kf_predict<T: Real>(state: &GaussianState<T>, model: &LinearModel<T>) -> Result<GaussianState<T>> {
    if state.dim() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "state has dimension {}, model expects {}",
            state.dim(),
            model.state_dim()
        )));
    }
    let f = &model.transition;
    let mean = f * state.mean();
    let cov = f * state.covariance() * f.transpose() + &model.process_noise;
    Ok(GaussianState::from_parts_unchecked(mean, cov))
}

/// Prediction together with the smoother gain `G = P F' Ppred^-1`.
pub fn kf_predict_with_gain<T: Real>(
    state: &GaussianState<T>,
    model: &LinearModel<T>,
) -> Result<(GaussianState<T>, DMatrix<T>)> {
    let predicted = kf_predict(state, model)?;
    let chol = checked_cholesky(predicted.covariance().clone(), "predicted covariance")?;
    let cross = state.covariance() * model.transition.transpose();
    let gain = chol.solve(&cross.transpose()).transpose();
    Ok((predicted, gain))
}

/// Kalman measurement update with a Joseph-form covariance. Returns the
/// posterior and the measurement likelihood `N(z; H m, H P H' + R)`.
pub fn kf_update<T: Real>(
    state: &GaussianState<T>,
    z: &DVector<T>,
    model: &LinearModel<T>,
) -> Result<(GaussianState<T>, T)> {
    let out = kf_update_full(state, z, model)?;
    Ok((out.posterior, out.log_likelihood.exp()))
}

pub fn kf_update_full<T: Real>(
    state: &GaussianState<T>,
    z: &DVector<T>,
    model: &LinearModel<T>,
) -> Result<UpdateOutcome<T>> {
    if state.dim() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "state has dimension {}, model expects {}",
            state.dim(),
            model.state_dim()
        )));
    }
    if z.len() != model.measurement_dim() {
        return Err(Error::Dimension(format!(
            "measurement has dimension {}, model expects {}",
            z.len(),
            model.measurement_dim()
        )));
    }
    let h = &model.observation;
    let p = state.covariance();
    let ph_t = p * h.transpose();
    let s = h * &ph_t + &model.measurement_noise;
    let chol = checked_cholesky(symmetrize(s), "innovation covariance")?;
    let innovation = z - h * state.mean();
    let (log_likelihood, mahalanobis_sq) = log_gaussian(&innovation, &chol);

    // K = P H' S^-1, computed as (S^-1 H P)'.
    let gain = chol.solve(&ph_t.transpose()).transpose();
    let mean = state.mean() + &gain * innovation;
    let n = state.dim();
    let i_kh = DMatrix::<T>::identity(n, n) - &gain * h;
    let cov = &i_kh * p * i_kh.transpose() + &gain * &model.measurement_noise * gain.transpose();
    Ok(UpdateOutcome {
        posterior: GaussianState::from_parts_unchecked(mean, cov),
        log_likelihood,
        mahalanobis_sq,
    })
}

/// Rauch-Tung-Striebel smoother over a forward-filtered sequence.
///
/// `filtered[i].predicted` must be the prediction of `filtered[i-1].updated`;
/// the first element's prediction is not used.
pub fn rts_smooth<T: Real>(
    filtered: &[FilteredStep<T>],
    model: &LinearModel<T>,
) -> Result<Vec<GaussianState<T>>> {
    let Some(last) = filtered.last() else {
        return Err(Error::InvalidParameter("cannot smooth an empty sequence".into()));
    };
    let mut out = vec![last.updated.clone(); filtered.len()];
    let f_t = model.transition.transpose();
    for i in (0..filtered.len() - 1).rev() {
        let cur = &filtered[i].updated;
        let next_pred = &filtered[i + 1].predicted;
        let chol = checked_cholesky(next_pred.covariance().clone(), "predicted covariance")?;
        // G = P F' Ppred^-1 = (Ppred^-1 F P)'
        let cross = cur.covariance() * &f_t;
        let gain = chol.solve(&cross.transpose()).transpose();
        let next_smoothed = &out[i + 1];
        let mean = cur.mean() + &gain * (next_smoothed.mean() - next_pred.mean());
        let cov = cur.covariance()
            + &gain * (next_smoothed.covariance() - next_pred.covariance()) * gain.transpose();
        out[i] = GaussianState::from_parts_unchecked(mean, cov);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cv(delta: f64, sigma: f64) -> LinearModel<f64> {
        let mut f = DMatrix::identity(4, 4);
        f[(0, 1)] = delta;
        f[(2, 3)] = delta;
        let mut q = DMatrix::zeros(4, 4);
        for b in [0, 2] {
            q[(b, b)] = delta.powi(3) / 3.0;
            q[(b, b + 1)] = delta.powi(2) / 2.0;
            q[(b + 1, b)] = delta.powi(2) / 2.0;
            q[(b + 1, b + 1)] = delta;
        }
        q *= sigma * sigma;
        let mut h = DMatrix::zeros(2, 4);
        h[(0, 0)] = 1.0;
        h[(1, 2)] = 1.0;
        LinearModel::new(f, q, h, DMatrix::identity(2, 2) * 100.0).unwrap()
    }

    fn scalar(q: f64, r: f64) -> LinearModel<f64> {
        LinearModel::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, r),
        )
        .unwrap()
    }

    fn g1(m: f64, p: f64) -> GaussianState<f64> {
        GaussianState::from_slices(&[m], &[p]).unwrap()
    }

    #[test]
    fn identity_predict_is_noop() {
        let model = LinearModel::new(
            DMatrix::identity(3, 3),
            DMatrix::zeros(3, 3),
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let s = GaussianState::from_slices(
            &[1.0, -2.0, 3.0],
            &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0],
        )
        .unwrap();
        assert_eq!(kf_predict(&s, &model).unwrap(), s);
    }

    #[test]
    fn cv_predict_moves_position() {
        let s = GaussianState::from_slices(&[0.0, 1.0, 0.0, 0.0], DMatrix::<f64>::identity(4, 4).as_slice())
            .unwrap();
        let p = kf_predict(&s, &cv(1.0, 5.0)).unwrap();
        assert_eq!(p.mean().as_slice(), &[1.0, 1.0, 0.0, 0.0]);
    }

    // Plain nested-loop matrix arithmetic, independent of nalgebra.
    fn mm(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut c = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }
    fn tr(a: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut c = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                c[i][j] = a[j][i];
            }
        }
        c
    }
    fn add(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
        let mut c = *a;
        for i in 0..4 {
            for j in 0..4 {
                c[i][j] += b[i][j];
            }
        }
        c
    }

    #[test]
    fn two_predicts_match_straight_line_oracle() {
        let f = [[1.0, 1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0], [0.0, 0.0, 0.0, 1.0]];
        let q = [
            [25.0 / 3.0, 12.5, 0.0, 0.0],
            [12.5, 25.0, 0.0, 0.0],
            [0.0, 0.0, 25.0 / 3.0, 12.5],
            [0.0, 0.0, 12.5, 25.0],
        ];
        // F^2 I (F^2)' + F Q F' + Q
        let f2 = mm(&f, &f);
        let expected = add(&add(&mm(&f2, &tr(&f2)), &mm(&mm(&f, &q), &tr(&f))), &q);

        let model = cv(1.0, 5.0);
        let s = GaussianState::from_slices(&[0.0; 4], DMatrix::<f64>::identity(4, 4).as_slice()).unwrap();
        let p = kf_predict(&kf_predict(&s, &model).unwrap(), &model).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(p.covariance()[(i, j)], expected[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn scalar_conjugate_update() {
        let (post, lik) = kf_update(&g1(0.0, 1.0), &DVector::from_element(1, 2.0), &scalar(0.0, 1.0)).unwrap();
        assert_relative_eq!(post.mean()[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(post.covariance()[(0, 0)], 0.5, epsilon = 1e-12);
        // N(2; 0, 2) = exp(-1) / sqrt(4 pi)
        let oracle = (-1.0f64).exp() / (4.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(lik, oracle, epsilon = 1e-14);
    }

    #[test]
    fn zero_innovation_shrinks_covariance() {
        let model = cv(1.0, 5.0);
        let s = GaussianState::from_slices(
            &[10.0, 1.0, -5.0, 2.0],
            (DMatrix::<f64>::identity(4, 4) * 50.0).as_slice(),
        )
        .unwrap();
        let z = &model.observation * s.mean();
        let (post, _) = kf_update(&s, &z, &model).unwrap();
        assert_relative_eq!(post.mean(), s.mean(), epsilon = 1e-12);
        let diff = s.covariance() - post.covariance();
        assert!(diff.symmetric_eigenvalues().iter().all(|&e| e >= -1e-9));
        assert!(diff.trace() > 0.0);
        assert!(post.is_valid_covariance());
    }

    #[test]
    fn uninformative_measurement_keeps_prior() {
        let mut model = cv(1.0, 5.0);
        model.measurement_noise = DMatrix::identity(2, 2) * 1e12;
        let s = GaussianState::from_slices(
            &[10.0, 1.0, -5.0, 2.0],
            (DMatrix::<f64>::identity(4, 4) * 50.0).as_slice(),
        )
        .unwrap();
        let z = DVector::from_vec(vec![500.0, -300.0]);
        let (post, _) = kf_update(&s, &z, &model).unwrap();
        for i in 0..4 {
            assert!((post.mean()[i] - s.mean()[i]).abs() <= 1e-3 * s.mean()[i].abs().max(1.0));
            assert_relative_eq!(post.covariance()[(i, i)], s.covariance()[(i, i)], max_relative = 1e-3);
        }
    }

    #[test]
    fn singular_innovation_is_reported() {
        let model = scalar(0.0, 0.0);
        let err = kf_update(&g1(0.0, 0.0), &DVector::from_element(1, 1.0), &model).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = kf_predict(&g1(0.0, 1.0), &cv(1.0, 5.0)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn likelihood_integrates_to_one() {
        // Trapezoid quadrature over z of N(z; m, P + R).
        let model = scalar(0.0, 0.7);
        let s = g1(0.3, 1.3);
        let (a, b, n) = (-20.0, 20.0, 40_000);
        let h = (b - a) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let z = a + i as f64 * h;
            let (_, lik) = kf_update(&s, &DVector::from_element(1, z), &model).unwrap();
            total += if i == 0 || i == n { 0.5 * lik } else { lik };
        }
        assert_relative_eq!(total * h, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn smoothing_single_step_is_identity() {
        let s = g1(1.0, 2.0);
        let seq = vec![FilteredStep { predicted: s.clone(), updated: s.clone() }];
        assert_eq!(rts_smooth(&seq, &scalar(1.0, 1.0)).unwrap(), vec![s]);
    }

    #[test]
    fn smoothing_exact_data_returns_filtered_means() {
        // Q = 0 and measurements that agree exactly with the initial mean.
        let mut model = cv(1.0, 0.0);
        model.measurement_noise = DMatrix::identity(2, 2) * 1e-6;
        let mut state = GaussianState::from_slices(
            &[0.0, 3.0, 10.0, -2.0],
            DMatrix::<f64>::identity(4, 4).as_slice(),
        )
        .unwrap();
        let mut truth = state.mean().clone();
        let mut seq = Vec::new();
        for i in 0..10 {
            let predicted = if i == 0 { state.clone() } else { kf_predict(&state, &model).unwrap() };
            if i > 0 {
                truth = &model.transition * truth;
            }
            let z = &model.observation * &truth;
            let (updated, _) = kf_update(&predicted, &z, &model).unwrap();
            seq.push(FilteredStep { predicted, updated: updated.clone() });
            state = updated;
        }
        let smoothed = rts_smooth(&seq, &model).unwrap();
        for (s, f) in smoothed.iter().zip(&seq) {
            assert_relative_eq!(s.mean(), f.updated.mean(), epsilon = 1e-9);
        }
    }

    #[test]
    fn smoother_beats_filter_on_random_walk() {
        let model = scalar(1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (mut mse_f, mut mse_s) = (0.0, 0.0);
        for _ in 0..1000 {
            let mut x: f64 = rng.random_range(-1.0..1.0);
            let mut state = g1(0.0, 1.0);
            let mut seq = Vec::new();
            let mut truth = Vec::new();
            for i in 0..20 {
                if i > 0 {
                    x += rng.sample::<f64, _>(StandardNormal);
                }
                let z = x + rng.sample::<f64, _>(StandardNormal);
                let predicted = if i == 0 { state.clone() } else { kf_predict(&state, &model).unwrap() };
                let (updated, _) = kf_update(&predicted, &DVector::from_element(1, z), &model).unwrap();
                seq.push(FilteredStep { predicted, updated: updated.clone() });
                truth.push(x);
                state = updated;
            }
            let smoothed = rts_smooth(&seq, &model).unwrap();
            for i in 0..20 {
                mse_f += (seq[i].updated.mean()[0] - truth[i]).powi(2);
                mse_s += (smoothed[i].mean()[0] - truth[i]).powi(2);
            }
        }
        assert!(mse_s <= mse_f, "smoothed {mse_s} vs filtered {mse_f}");
    }

    #[test]
    fn smoothed_last_equals_filtered_last() {
        let model = cv(1.0, 5.0);
        let mut state = GaussianState::from_slices(&[0.0; 4], (DMatrix::<f64>::identity(4, 4) * 100.0).as_slice())
            .unwrap();
        let mut seq = Vec::new();
        for i in 0..5 {
            let predicted = if i == 0 { state.clone() } else { kf_predict(&state, &model).unwrap() };
            let z = DVector::from_vec(vec![i as f64 * 3.0, -(i as f64)]);
            let (updated, _) = kf_update(&predicted, &z, &model).unwrap();
            seq.push(FilteredStep { predicted, updated: updated.clone() });
            state = updated;
        }
        let sm = rts_smooth(&seq, &model).unwrap();
        assert_eq!(sm.last().unwrap(), &seq.last().unwrap().updated);
        assert!(sm.iter().all(|s| s.is_valid_covariance()));
    }

    #[test]
    fn works_in_single_precision() {
        let model = LinearModel::<f32>::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let s = GaussianState::<f32>::from_slices(&[0.0], &[1.0]).unwrap();
        let (post, _) = kf_update(&s, &DVector::from_element(1, 2.0f32), &model).unwrap();
        assert!((post.mean()[0] - 1.0).abs() < 1e-6);
    }
}
