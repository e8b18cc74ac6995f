use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use std::f64::consts::PI;

use super::{ct_mean, cv_transition, range_bearing_h, MeasurementSpec, MotionSpec, ScenarioSpec};
use crate::error::Result;
use crate::filters::wrap_angle;
use crate::rfs::Label;
use crate::ste::{Trajectory, TrajectorySet};

#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrack {
    pub label: Label,
    pub birth: u32,
    pub states: Vec<DVector<f64>>,
}

impl TruthTrack {
    pub fn death(&self) -> u32 {
        self.birth + self.states.len() as u32 - 1
    }

    pub fn at(&self, time: u32) -> Option<&DVector<f64>> {
        let i = time.checked_sub(self.birth)? as usize;
        self.states.get(i)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub duration: u32,
    pub tracks: Vec<TruthTrack>,
}

impl GroundTruth {
    /// Live states at `time`, in script order.
    pub fn states_at(&self, time: u32) -> Vec<(Label, &DVector<f64>)> {
        self.tracks.iter().filter_map(|t| Some((t.label, t.at(time)?))).collect()
    }

    pub fn cardinality(&self, time: u32) -> usize {
        self.tracks.iter().filter(|t| t.at(time).is_some()).count()
    }

    pub fn to_trajectories(&self) -> TrajectorySet<f64> {
        self.tracks
            .iter()
            .map(|t| {
                let pts = t.states.iter().enumerate().map(|(i, x)| (t.birth + i as u32, x.clone())).collect();
                (t.label, Trajectory::new(pts))
            })
            .collect()
    }
}

/// Measurement set of one step: detections and clutter in random order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub time: u32,
    pub measurements: Vec<DVector<f64>>,
}

/// Noiseless propagation of the scripted objects. Truth does not depend on
/// the seed; it is accepted for interface symmetry with [`generate_scans`].
pub fn generate_ground_truth(spec: &ScenarioSpec, _seed: u64) -> Result<GroundTruth> {
    spec.validate()?;
    let dt = spec.sampling_interval;
    let (f, _) = cv_transition(dt, 0.0);
    let mut tracks = Vec::with_capacity(spec.truth.len());
    for (i, script) in spec.truth.iter().enumerate() {
        let death = script.death.min(spec.duration);
        let mut x = DVector::from_column_slice(&script.initial);
        let mut states = Vec::new();
        for k in script.birth..=death {
            if k > script.birth {
                x = match spec.motion {
                    MotionSpec::Cv { .. } => &f * &x,
                    MotionSpec::Ct { .. } => ct_mean(&x, dt),
                };
            }
            if !spec.region.contains(x[0], x[2]) {
                log::warn!("truth object {i} leaves the region at step {k}");
            }
            states.push(x.clone());
        }
        if !states.is_empty() {
            tracks.push(TruthTrack {
                label: Label::new(script.birth, i as u32),
                birth: script.birth,
                states,
            });
        }
    }
    Ok(GroundTruth {
        duration: spec.duration,
        tracks,
    })
}

/// Per step: each live object is detected with probability `P_D`, clutter
/// count is Poisson with the scenario rate and clutter is uniform over the
/// measurement space.
pub fn generate_scans(truth: &GroundTruth, spec: &ScenarioSpec, seed: u64) -> Result<Vec<Scan>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let clutter_count = (spec.clutter_rate > 0.0).then(|| Poisson::new(spec.clutter_rate).expect("positive rate"));
    let mut scans = Vec::with_capacity(truth.duration as usize);
    for k in 1..=truth.duration {
        let mut zs = Vec::new();
        for (_, x) in truth.states_at(k) {
            if rng.random::<f64>() >= spec.detection_probability {
                continue;
            }
            match spec.measurement {
                MeasurementSpec::LinearXy { sigma } => {
                    let z = DVector::from_row_slice(&[
                        x[0] + sigma * std_normal.sample(&mut rng),
                        x[2] + sigma * std_normal.sample(&mut rng),
                    ]);
                    zs.push(z);
                }
                MeasurementSpec::RangeBearing {
                    sigma_range,
                    sigma_bearing,
                    ..
                } => {
                    let h = match range_bearing_h(x) {
                        Ok(h) => h,
                        Err(_) => continue,
                    };
                    let r = h[0] + sigma_range * std_normal.sample(&mut rng);
                    let b = wrap_angle(h[1] + sigma_bearing * std_normal.sample(&mut rng));
                    zs.push(DVector::from_row_slice(&[r, b]));
                }
            }
        }
        let n_clutter = clutter_count.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_clutter {
            let z = match spec.measurement {
                MeasurementSpec::LinearXy { .. } => DVector::from_row_slice(&[
                    rng.random_range(spec.region.x[0]..spec.region.x[1]),
                    rng.random_range(spec.region.y[0]..spec.region.y[1]),
                ]),
                MeasurementSpec::RangeBearing { max_range, .. } => DVector::from_row_slice(&[
                    rng.random_range(0.0..max_range),
                    wrap_angle(rng.random_range(-PI..PI)),
                ]),
            };
            zs.push(z);
        }
        zs.shuffle(&mut rng);
        scans.push(Scan {
            time: k,
            measurements: zs,
        });
    }
    Ok(scans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{scenario1_linear, scenario2_ct};

    #[test]
    fn empty_script_gives_empty_truth() {
        let mut s = scenario1_linear();
        s.truth.clear();
        let t = generate_ground_truth(&s, 0).unwrap();
        assert!(t.tracks.is_empty());
        assert_eq!(t.cardinality(50), 0);
    }

    #[test]
    fn scenario_truths() {
        let s = scenario1_linear();
        let t = generate_ground_truth(&s, 0).unwrap();
        assert_eq!(t.tracks.len(), 12);
        for tr in &t.tracks {
            assert!(tr.birth >= 1 && tr.death() <= 100);
            for x in &tr.states {
                assert!(s.region.contains(x[0], x[2]));
            }
        }
        assert_eq!(t, generate_ground_truth(&s, 99).unwrap());
        assert_eq!(t.cardinality(1), 3);
        assert_eq!(t.cardinality(100), 10);

        let s = scenario2_ct();
        let t = generate_ground_truth(&s, 0).unwrap();
        assert_eq!(t.tracks.len(), 10);
        for tr in &t.tracks {
            for x in &tr.states {
                assert!(s.region.contains(x[0], x[2]), "{x}");
            }
        }
    }

    #[test]
    fn perfect_sensor_sees_every_object() {
        let mut s = scenario1_linear();
        s.detection_probability = 1.0;
        s.clutter_rate = 0.0;
        let t = generate_ground_truth(&s, 0).unwrap();
        let scans = generate_scans(&t, &s, 4).unwrap();
        assert_eq!(scans.len(), 100);
        for sc in &scans {
            assert_eq!(sc.measurements.len(), t.cardinality(sc.time));
        }
    }

    #[test]
    fn clutter_rate_matches_on_average() {
        for mut s in [scenario1_linear(), scenario2_ct()] {
            s.detection_probability = 0.0;
            s.duration = 10_000;
            let t = GroundTruth {
                duration: 10_000,
                tracks: vec![],
            };
            let scans = generate_scans(&t, &s, 11).unwrap();
            let total: usize = scans.iter().map(|s| s.measurements.len()).sum();
            let mean = total as f64 / 10_000.0;
            // 3 sigma of the mean of 10 000 Poisson counts
            let bound = 3.0 * (s.clutter_rate / 10_000.0).sqrt();
            assert!((mean - s.clutter_rate).abs() < bound.max(0.02 * s.clutter_rate));
        }
    }

    #[test]
    fn detection_rate_matches_on_average() {
        let mut s = scenario1_linear();
        s.clutter_rate = 0.0;
        let t = generate_ground_truth(&s, 0).unwrap();
        let live: usize = (1..=100).map(|k| t.cardinality(k)).sum();
        let mut seen = 0usize;
        let trials = 50;
        for seed in 0..trials {
            seen += generate_scans(&t, &s, seed).unwrap().iter().map(|s| s.measurements.len()).sum::<usize>();
        }
        let n = (live * trials as usize) as f64;
        let p = seen as f64 / n;
        let sd = (0.88 * 0.12 / n).sqrt();
        assert!((p - 0.88).abs() < 3.0 * sd);
    }

    #[test]
    fn scans_are_deterministic_per_seed() {
        let s = scenario2_ct();
        let t = generate_ground_truth(&s, 0).unwrap();
        assert_eq!(generate_scans(&t, &s, 5).unwrap(), generate_scans(&t, &s, 5).unwrap());
        assert_ne!(generate_scans(&t, &s, 5).unwrap(), generate_scans(&t, &s, 6).unwrap());
        for sc in generate_scans(&t, &s, 5).unwrap() {
            for z in sc.measurements {
                assert!(z[1] > -PI && z[1] <= PI);
            }
        }
    }

    #[test]
    fn mean_scan_size() {
        let s = scenario1_linear();
        let t = generate_ground_truth(&s, 0).unwrap();
        let live: f64 = (1..=100).map(|k| t.cardinality(k) as f64).sum::<f64>() / 100.0;
        let mut total = 0usize;
        for seed in 0..20 {
            total += generate_scans(&t, &s, seed).unwrap().iter().map(|s| s.measurements.len()).sum::<usize>();
        }
        let mean = total as f64 / 2000.0;
        assert!((mean - (66.0 + 0.88 * live)).abs() < 1.0);
    }
}
