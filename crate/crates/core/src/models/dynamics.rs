use nalgebra::{DMatrix, DVector};

use crate::filters::{MeasurementFunction, MotionFunction};
use crate::error::{Error, Result};
use crate::filters::wrap_angle;

/// Constant-velocity transition and process noise for the state
/// `[px, vx, py, vy]`.
pub fn cv_transition(dt: f64, sigma_accel: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let f1 = [1.0, dt, 0.0, 1.0];
    let q1 = [dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt.powi(2) / 2.0, dt];
    let s2 = sigma_accel * sigma_accel;
    let mut f = DMatrix::zeros(4, 4);
    let mut q = DMatrix::zeros(4, 4);
    for b in 0..2 {
        for r in 0..2 {
            for c in 0..2 {
                f[(2 * b + r, 2 * b + c)] = f1[2 * r + c];
                q[(2 * b + r, 2 * b + c)] = s2 * q1[2 * r + c];
            }
        }
    }
    (f, q)
}

/// `H` selecting `[px, py]` from a state of dimension `n`.
pub fn position_observation(n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(2, n);
    h[(0, 0)] = 1.0;
    h[(1, 2)] = 1.0;
    h
}

/// `sin(w dt) / w` and `(1 - cos(w dt)) / w`, with their limits near zero.
fn turn_terms(omega: f64, dt: f64) -> (f64, f64) {
    let big = omega * dt;
    if big.abs() < 1e-4 {
        let b2 = big * big;
        (dt * (1.0 - b2 / 6.0), dt * big / 2.0 * (1.0 - b2 / 12.0))
    } else {
        (big.sin() / omega, (1.0 - big.cos()) / omega)
    }
}

/// Coordinated-turn mean `m(x)` for `x = [px, vx, py, vy, w]`.
pub fn ct_mean(x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let w = x[4];
    let (s, c1) = turn_terms(w, dt);
    let (sin, cos) = (w * dt).sin_cos();
    DVector::from_row_slice(&[
        x[0] + s * x[1] - c1 * x[3],
        cos * x[1] - sin * x[3],
        x[2] + c1 * x[1] + s * x[3],
        sin * x[1] + cos * x[3],
        w,
    ])
}

/// Coordinated-turn process noise `diag(sigma^2 G G', sigma_w^2)`.
///
/// `G` is used as printed, with `dt^2` in its last row.
pub fn ct_process_noise(dt: f64, sigma_accel: f64, sigma_turn: f64) -> DMatrix<f64> {
    #[rustfmt::skip]
    let g = DMatrix::from_row_slice(4, 2, &[
        dt * dt / 2.0, 0.0,
        dt,            0.0,
        0.0,           dt * dt / 2.0,
        0.0,           dt * dt,
    ]);
    let ggt = &g * g.transpose() * (sigma_accel * sigma_accel);
    let mut q = DMatrix::zeros(5, 5);
    q.view_mut((0, 0), (4, 4)).copy_from(&ggt);
    q[(4, 4)] = sigma_turn * sigma_turn;
    q
}

/// `(m(x), Q)` of the coordinated-turn model.
pub fn ct_transition(x: &DVector<f64>, dt: f64, sigma_accel: f64, sigma_turn: f64) -> (DVector<f64>, DMatrix<f64>) {
    (ct_mean(x, dt), ct_process_noise(dt, sigma_accel, sigma_turn))
}

#[derive(Debug, Clone)]
pub struct CoordinatedTurn {
    pub dt: f64,
    noise: DMatrix<f64>,
}

impl CoordinatedTurn {
    pub fn new(dt: f64, sigma_accel: f64, sigma_turn: f64) -> Self {
        Self {
            dt,
            noise: ct_process_noise(dt, sigma_accel, sigma_turn),
        }
    }
}

impl MotionFunction<f64> for CoordinatedTurn {
    fn state_dim(&self) -> usize {
        5
    }

    fn propagate(&self, x: &DVector<f64>) -> DVector<f64> {
        ct_mean(x, self.dt)
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.noise
    }
}

/// Linear transition used through the unscented backend.
#[derive(Debug, Clone)]
pub struct LinearMotion {
    pub transition: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

impl MotionFunction<f64> for LinearMotion {
    fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    fn propagate(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.transition * x
    }

    fn process_noise(&self) -> &DMatrix<f64> {
        &self.noise
    }
}

/// `[sqrt(px^2 + py^2), atan2(py, px)]` for a state with positions at
/// indices 0 and 2.
pub fn range_bearing_h(x: &DVector<f64>) -> Result<DVector<f64>> {
    let (px, py) = (x[0], x[2]);
    if px == 0.0 && py == 0.0 {
        return Err(Error::UndefinedBearing);
    }
    Ok(DVector::from_row_slice(&[px.hypot(py), wrap_angle(py.atan2(px))]))
}

/// Range-bearing sensor at the origin.
#[derive(Debug, Clone)]
pub struct RangeBearing {
    noise: DMatrix<f64>,
}

impl RangeBearing {
    pub fn new(sigma_range: f64, sigma_bearing: f64) -> Self {
        Self {
            noise: DMatrix::from_diagonal(&DVector::from_row_slice(&[
                sigma_range * sigma_range,
                sigma_bearing * sigma_bearing,
            ])),
        }
    }
}

impl MeasurementFunction<f64> for RangeBearing {
    fn measurement_dim(&self) -> usize {
        2
    }

    fn observe(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        range_bearing_h(x)
    }

    fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    fn residual(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_row_slice(&[a[0] - b[0], wrap_angle(a[1] - b[1])])
    }
}

/// Linear observation used through the unscented backend.
#[derive(Debug, Clone)]
pub struct LinearMeasurement {
    pub observation: DMatrix<f64>,
    pub noise: DMatrix<f64>,
}

impl MeasurementFunction<f64> for LinearMeasurement {
    fn measurement_dim(&self) -> usize {
        self.observation.nrows()
    }

    fn observe(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.observation * x)
    }

    fn measurement_noise(&self) -> &DMatrix<f64> {
        &self.noise
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn cv_noise_block() {
        let (f, q) = cv_transition(1.0, 5.0);
        assert_relative_eq!(q[(0, 0)], 25.0 / 3.0);
        assert_relative_eq!(q[(0, 1)], 12.5);
        assert_relative_eq!(q[(1, 1)], 25.0);
        assert_eq!(q[(0, 2)], 0.0);
        assert_eq!((&f * v(&[0.0, 10.0, 0.0, 0.0]))[0], 10.0);
        let (f0, q0) = cv_transition(1e-9, 5.0);
        assert!((f0 - DMatrix::identity(4, 4)).amax() < 1e-8);
        assert!(q0.amax() < 1e-6);
    }

    #[test]
    fn ct_small_turn_matches_cv() {
        let (f, _) = cv_transition(1.0, 5.0);
        for omega in [0.0, 1e-12, 1e-9, -1e-9] {
            for x in [[10.0, 3.0, -4.0, 7.0], [-500.0, -20.0, 300.0, 0.5], [0.0, 0.0, 0.0, 0.0]] {
                let m = ct_mean(&v(&[x[0], x[1], x[2], x[3], omega]), 1.0);
                let cv = &f * v(&x);
                for i in 0..4 {
                    assert!((m[i] - cv[i]).abs() < 1e-6);
                }
                assert_eq!(m[4], omega);
            }
        }
    }

    #[test]
    fn quarter_turn_displacement() {
        let m = ct_mean(&v(&[0.0, 1.0, 0.0, 0.0, PI / 2.0]), 1.0);
        assert_relative_eq!(m[0], 2.0 / PI, epsilon = 1e-12);
        assert_relative_eq!(m[2], 2.0 / PI, epsilon = 1e-12);
        // velocity rotated by 90 degrees
        assert_relative_eq!(m[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(m[3], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn turn_terms_continuous_at_threshold() {
        let dt = 1.0;
        for w in [0.99e-4, 1.01e-4] {
            let (s, c) = turn_terms(w, dt);
            assert_relative_eq!(s, (w * dt).sin() / w, max_relative = 1e-9);
            assert_relative_eq!(c, (1.0 - (w * dt).cos()) / w, max_relative = 1e-6);
        }
    }

    #[test]
    fn ct_noise_as_printed() {
        let q = ct_process_noise(1.0, 5.0, PI / 180.0);
        assert_relative_eq!(q[(0, 0)], 25.0 * 0.25);
        assert_relative_eq!(q[(2, 3)], 25.0 * 0.5);
        assert_relative_eq!(q[(3, 3)], 25.0);
        assert_relative_eq!(q[(4, 4)], (PI / 180.0).powi(2));
        assert_eq!(q[(0, 4)], 0.0);
    }

    #[test]
    fn range_bearing_examples() {
        let z = range_bearing_h(&v(&[0.0, 0.0, 1000.0, 0.0])).unwrap();
        assert_relative_eq!(z[0], 1000.0);
        assert_relative_eq!(z[1], PI / 2.0);
        let z = range_bearing_h(&v(&[-1000.0, 0.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(z[1], PI);
        let z = range_bearing_h(&v(&[300.0, 0.0, 400.0, 0.0])).unwrap();
        assert_relative_eq!(z[0], 500.0);
        assert_relative_eq!(z[1], 0.9273, epsilon = 1e-4);
        assert_eq!(range_bearing_h(&v(&[0.0, 1.0, 0.0, 1.0])), Err(Error::UndefinedBearing));
    }

    #[test]
    fn bearing_residual_wraps() {
        let s = RangeBearing::new(10.0, 0.1);
        let r = s.residual(&v(&[10.0, PI - 0.01]), &v(&[9.0, -PI + 0.01]));
        assert_relative_eq!(r[0], 1.0);
        assert_relative_eq!(r[1], -0.02, epsilon = 1e-12);
    }
}
