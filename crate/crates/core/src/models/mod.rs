//! Scenario descriptions, the two built-in benchmark presets and the
//! simulator that produces ground truth and measurement scans.

mod dynamics;
mod sim;

pub use dynamics::{
    ct_mean, ct_process_noise, ct_transition, cv_transition, position_observation, range_bearing_h,
    CoordinatedTurn, LinearMeasurement, LinearMotion, RangeBearing,
};
pub use sim::{generate_ground_truth, generate_scans, GroundTruth, Scan, TruthTrack};

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{GaussianState, LinearModel, NonlinearModel, SingleObjectModel};
use crate::glmb::{BirthComponent, BirthModel, Clutter, MultiObjectModel};
use crate::rfs::GaussianMixture;

pub const PRESET_NAMES: [&str; 2] = ["scenario1-linear", "scenario2-ct"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Region {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        self.x[0] <= px && px <= self.x[1] && self.y[0] <= py && py <= self.y[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MotionSpec {
    /// Constant velocity, state `[px, vx, py, vy]`.
    Cv { sigma_accel: f64 },
    /// Coordinated turn, state `[px, vx, py, vy, w]`.
    Ct { sigma_accel: f64, sigma_turn: f64 },
}

impl MotionSpec {
    pub fn state_dim(&self) -> usize {
        match self {
            Self::Cv { .. } => 4,
            Self::Ct { .. } => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasurementSpec {
    /// Noisy `[px, py]`.
    LinearXy { sigma: f64 },
    /// Range and bearing from a sensor at the origin. Clutter covers
    /// `[0, max_range] x (-pi, pi]`.
    RangeBearing {
        sigma_range: f64,
        sigma_bearing: f64,
        max_range: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthSpec {
    pub existence: f64,
    pub mean: Vec<f64>,
    /// Standard deviations; the covariance is `diag(std)^2`.
    pub std: Vec<f64>,
}

/// One scripted object: alive on `birth..=death`, starting from `initial`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    pub birth: u32,
    pub death: u32,
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub duration: u32,
    pub sampling_interval: f64,
    pub region: Region,
    pub motion: MotionSpec,
    pub measurement: MeasurementSpec,
    pub survival_probability: f64,
    pub detection_probability: f64,
    /// Mean number of clutter points per scan.
    pub clutter_rate: f64,
    pub births: Vec<BirthSpec>,
    pub truth: Vec<TruthSpec>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.duration < 1 {
            return bad("duration must be at least 1".into());
        }
        if !(self.sampling_interval > 0.0) {
            return bad("sampling_interval must be positive".into());
        }
        if !(self.clutter_rate >= 0.0) {
            return bad("clutter_rate must be nonnegative".into());
        }
        for (name, p) in [
            ("survival_probability", self.survival_probability),
            ("detection_probability", self.detection_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.region.x[0] >= self.region.x[1] || self.region.y[0] >= self.region.y[1] {
            return bad("region bounds must be increasing".into());
        }
        let n = self.motion.state_dim();
        for (i, b) in self.births.iter().enumerate() {
            if b.mean.len() != n || b.std.len() != n {
                return bad(format!("birth {i} must have {n} mean and std entries"));
            }
            if !(b.existence > 0.0 && b.existence < 1.0) {
                return bad(format!("birth {i} existence must lie in (0, 1)"));
            }
            if b.std.iter().any(|s| !(*s > 0.0)) {
                return bad(format!("birth {i} std entries must be positive"));
            }
            if !self.region.contains(b.mean[0], b.mean[2]) {
                return bad(format!("birth {i} lies outside the region"));
            }
        }
        for (i, t) in self.truth.iter().enumerate() {
            if t.initial.len() != n {
                return bad(format!("truth {i} must have {n} state entries"));
            }
            if t.birth < 1 || t.birth > t.death {
                return bad(format!("truth {i} needs 1 <= birth <= death"));
            }
        }
        match self.measurement {
            MeasurementSpec::LinearXy { sigma } if !(sigma > 0.0) => bad("sigma must be positive".into()),
            MeasurementSpec::RangeBearing {
                sigma_range,
                sigma_bearing,
                max_range,
            } if !(sigma_range > 0.0 && sigma_bearing > 0.0 && max_range > 0.0) => {
                bad("range-bearing parameters must be positive".into())
            }
            _ => Ok(()),
        }
    }

    /// Area (or range-bearing volume) of the measurement space.
    pub fn measurement_volume(&self) -> f64 {
        match self.measurement {
            MeasurementSpec::LinearXy { .. } => {
                (self.region.x[1] - self.region.x[0]) * (self.region.y[1] - self.region.y[0])
            }
            MeasurementSpec::RangeBearing { max_range, .. } => max_range * 2.0 * PI,
        }
    }

    /// Uniform clutter intensity `lambda_c / V`.
    pub fn clutter_intensity(&self) -> f64 {
        self.clutter_rate / self.measurement_volume()
    }

    pub fn single_object_model(&self) -> Result<SingleObjectModel<f64>> {
        let dt = self.sampling_interval;
        let n = self.motion.state_dim();
        match (&self.motion, &self.measurement) {
            (MotionSpec::Cv { sigma_accel }, MeasurementSpec::LinearXy { sigma }) => {
                let (f, q) = cv_transition(dt, *sigma_accel);
                let r = DMatrix::identity(2, 2) * (sigma * sigma);
                Ok(SingleObjectModel::Linear(LinearModel::new(f, q, position_observation(4), r)?))
            }
            (motion, measurement) => {
                let motion: Arc<dyn crate::filters::MotionFunction<f64>> = match motion {
                    MotionSpec::Cv { sigma_accel } => {
                        let (transition, noise) = cv_transition(dt, *sigma_accel);
                        Arc::new(LinearMotion { transition, noise })
                    }
                    MotionSpec::Ct { sigma_accel, sigma_turn } => {
                        Arc::new(CoordinatedTurn::new(dt, *sigma_accel, *sigma_turn))
                    }
                };
                let measurement: Arc<dyn crate::filters::MeasurementFunction<f64>> = match measurement {
                    MeasurementSpec::LinearXy { sigma } => Arc::new(LinearMeasurement {
                        observation: position_observation(n),
                        noise: DMatrix::identity(2, 2) * (sigma * sigma),
                    }),
                    MeasurementSpec::RangeBearing {
                        sigma_range,
                        sigma_bearing,
                        ..
                    } => Arc::new(RangeBearing::new(*sigma_range, *sigma_bearing)),
                };
                Ok(SingleObjectModel::Nonlinear(NonlinearModel::new(motion, measurement)))
            }
        }
    }

    pub fn birth_model(&self) -> Result<BirthModel<f64>> {
        let components = self
            .births
            .iter()
            .map(|b| {
                let cov = DMatrix::from_diagonal(&DVector::from_iterator(b.std.len(), b.std.iter().map(|s| s * s)));
                let state = GaussianState::new(DVector::from_column_slice(&b.mean), cov)?;
                Ok(BirthComponent {
                    existence: b.existence,
                    pdf: GaussianMixture::single(state),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BirthModel::new(components)
    }

    /// Multi-object model with the default gate and mixture reduction.
    pub fn build_model(&self) -> Result<MultiObjectModel<f64>> {
        self.validate()?;
        MultiObjectModel::new(
            self.survival_probability,
            self.detection_probability,
            Clutter::uniform(self.clutter_rate, self.measurement_volume()),
            self.single_object_model()?,
            self.birth_model()?,
        )
    }

    /// Indices of `[px, py]` in the state vector.
    pub fn position_indices(&self) -> [usize; 2] {
        [0, 2]
    }
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Option<ScenarioSpec> {
    match name {
        "scenario1-linear" => Some(scenario1_linear()),
        "scenario2-ct" => Some(scenario2_ct()),
        _ => None,
    }
}

fn truth(rows: &[(u32, u32, &[f64])]) -> Vec<TruthSpec> {
    rows.iter()
        .map(|(birth, death, x)| TruthSpec {
            birth: *birth,
            death: *death,
            initial: x.to_vec(),
        })
        .collect()
}

/// Linear constant-velocity scenario with up to 12 objects.
///
/// The printed clutter density 5.5e-7 does not match 66 points over the
/// region; the rate governs here.
pub fn scenario1_linear() -> ScenarioSpec {
    let k = 100;
    let birth = |m: [f64; 4]| BirthSpec {
        existence: 0.05,
        mean: m.to_vec(),
        std: vec![10.0; 4],
    };
    ScenarioSpec {
        name: "scenario1-linear".into(),
        duration: k,
        sampling_interval: 1.0,
        region: Region {
            x: [-1000.0, 1000.0],
            y: [-1000.0, 1000.0],
        },
        motion: MotionSpec::Cv { sigma_accel: 5.0 },
        measurement: MeasurementSpec::LinearXy { sigma: 10.0 },
        survival_probability: 0.99,
        detection_probability: 0.88,
        clutter_rate: 66.0,
        births: vec![
            birth([0.1, 0.0, 0.1, 0.0]),
            birth([400.0, 0.0, -600.0, 0.0]),
            birth([-800.0, 0.0, -200.0, 0.0]),
            birth([-200.0, 0.0, 800.0, 0.0]),
        ],
        truth: truth(&[
            (1, 70, &[0.0, 0.0, 0.0, -10.0]),
            (1, k, &[400.0, -10.0, -600.0, 5.0]),
            (1, 70, &[-800.0, 20.0, -200.0, -5.0]),
            (20, k, &[400.0, -7.0, -600.0, -4.0]),
            (20, k, &[400.0, -2.5, -600.0, 10.0]),
            (20, k, &[0.0, 7.5, 0.0, -5.0]),
            (40, k, &[-800.0, 12.0, -200.0, 7.0]),
            (40, k, &[-200.0, 15.0, 800.0, -10.0]),
            (60, k, &[-800.0, 3.0, -200.0, 15.0]),
            (60, k, &[-200.0, -3.0, 800.0, -15.0]),
            (80, k, &[0.0, -20.0, 0.0, -15.0]),
            (80, k, &[-200.0, 15.0, 800.0, -5.0]),
        ]),
    }
}

/// Coordinated-turn, range-bearing scenario with up to 10 objects.
///
/// The printed clutter density 1.59e-4 does not match 15 points over the
/// range-bearing space; the rate governs here.
pub fn scenario2_ct() -> ScenarioSpec {
    let k = 100;
    let w = 2.0 * PI / 180.0;
    let birth = |r: f64, m: [f64; 2]| BirthSpec {
        existence: r,
        mean: vec![250.0 * m[0], 0.0, 250.0 * m[1], 0.0, 0.0],
        std: vec![50.0, 50.0, 50.0, 50.0, PI / 30.0],
    };
    ScenarioSpec {
        name: "scenario2-ct".into(),
        duration: k,
        sampling_interval: 1.0,
        region: Region {
            x: [-2000.0, 2000.0],
            y: [0.0, 2000.0],
        },
        motion: MotionSpec::Ct {
            sigma_accel: 5.0,
            sigma_turn: PI / 180.0,
        },
        measurement: MeasurementSpec::RangeBearing {
            sigma_range: 10.0,
            sigma_bearing: 2.0 * PI / 180.0,
            max_range: 2828.0,
        },
        survival_probability: 0.99,
        detection_probability: 0.9,
        clutter_rate: 15.0,
        births: vec![
            birth(0.02, [-6.0, 1.0]),
            birth(0.02, [-1.0, 4.0]),
            birth(0.03, [1.0, 3.0]),
            birth(0.03, [4.0, 6.0]),
        ],
        truth: truth(&[
            (1, k, &[1000.0 + 3.8676, -10.0, 1500.0 - 11.7457, -10.0, w / 8.0]),
            (10, k, &[-250.0 - 5.8857, 20.0, 1000.0 + 11.4102, 3.0, -w / 3.0]),
            (10, k, &[-1500.0 - 7.3806, 11.0, 250.0 + 6.7993, 10.0, -w / 2.0]),
            (10, 66, &[-1500.0, 43.0, 250.0, 0.0, 0.0]),
            (20, 80, &[250.0 - 3.8676, 11.0, 750.0 - 11.0747, 5.0, w / 4.0]),
            (40, k, &[-250.0 + 7.3806, -12.0, 1000.0 - 6.7993, -12.0, w / 2.0]),
            (40, k, &[1000.0, 0.0, 1500.0, -10.0, w / 4.0]),
            (40, 80, &[250.0, -50.0, 750.0, 0.0, -w / 4.0]),
            (60, k, &[1000.0, -50.0, 1500.0, 0.0, -w / 4.0]),
            (60, k, &[250.0, -40.0, 750.0, 25.0, w / 4.0]),
        ]),
    }
}
