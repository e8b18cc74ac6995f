//! Result files: metrics.csv, trajectories.json, timing.json and plots.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::HarnessError;
use crate::runner::{percentage, Aggregate, Comparison, MonteCarloResults};
use crate::svg;

pub const CSV_HEADER: &str = "step,true_N,mean_N,std_N,ospa,ospa_loc,ospa_card,ospa2,filter_ms,estimator_ms";
pub const CSV_UNITS: &str = "# units: ospa columns in metres, timing columns in milliseconds";

#[derive(Serialize)]
struct CsvRow {
    step: u32,
    #[serde(rename = "true_N")]
    true_n: usize,
    #[serde(rename = "mean_N")]
    mean_n: f64,
    #[serde(rename = "std_N")]
    std_n: f64,
    ospa: f64,
    ospa_loc: f64,
    ospa_card: f64,
    ospa2: f64,
    filter_ms: f64,
    estimator_ms: f64,
}

#[derive(Serialize)]
struct JsonTrajectory {
    times: Vec<u32>,
    states: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct JsonTrial {
    trial: usize,
    seed: u64,
    trajectories: BTreeMap<String, JsonTrajectory>,
}

#[derive(Serialize)]
struct JsonTrajectories<'a> {
    tracker: &'a str,
    trials: Vec<JsonTrial>,
}

#[derive(Serialize)]
struct TrialTiming {
    trial: usize,
    filter_seconds: f64,
    estimator_seconds: f64,
    percentage: f64,
}

#[derive(Serialize)]
struct Timing<'a> {
    tracker: &'a str,
    filter_seconds: f64,
    estimator_seconds: f64,
    percentage: f64,
    trials: Vec<TrialTiming>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_string(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

/// Writes metrics.csv. Timing columns are zero when `reproducible` is set.
pub fn write_metrics_csv(path: &Path, agg: &Aggregate, reproducible: bool) -> Result<(), HarnessError> {
    let mut file = create(path)?;
    writeln!(file, "{CSV_UNITS}").map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let to_io = |e: csv::Error| HarnessError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    for s in &agg.steps {
        let (filter_ms, estimator_ms) = if reproducible { (0.0, 0.0) } else { (s.filter_ms, s.estimator_ms) };
        w.serialize(CsvRow {
            step: s.step,
            true_n: s.cardinality.true_n,
            mean_n: s.cardinality.mean,
            std_n: s.cardinality.std,
            ospa: s.ospa.total,
            ospa_loc: s.ospa.localisation,
            ospa_card: s.ospa.cardinality,
            ospa2: s.ospa2,
            filter_ms,
            estimator_ms,
        })
        .map_err(to_io)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_trajectories_json(path: &Path, agg: &Aggregate) -> Result<(), HarnessError> {
    let trials = agg
        .trials
        .iter()
        .map(|t| JsonTrial {
            trial: t.trial,
            seed: t.seed,
            trajectories: t
                .trajectories
                .iter()
                .map(|(l, tr)| {
                    let json = JsonTrajectory {
                        times: tr.points.iter().map(|p| p.0).collect(),
                        states: tr.points.iter().map(|p| p.1.iter().copied().collect()).collect(),
                    };
                    (l.to_string(), json)
                })
                .collect(),
        })
        .collect();
    write_json(
        path,
        &JsonTrajectories {
            tracker: agg.tracker.name(),
            trials,
        },
    )
}

pub fn write_timing_json(path: &Path, agg: &Aggregate) -> Result<(), HarnessError> {
    let trials = agg
        .trials
        .iter()
        .map(|t| {
            let (f, e) = (t.total_filter_seconds(), t.total_estimator_seconds());
            TrialTiming {
                trial: t.trial,
                filter_seconds: f,
                estimator_seconds: e,
                percentage: percentage(f, e),
            }
        })
        .collect();
    write_json(
        path,
        &Timing {
            tracker: agg.tracker.name(),
            filter_seconds: agg.total_filter_seconds(),
            estimator_seconds: agg.total_estimator_seconds(),
            percentage: agg.estimator_percentage(),
            trials,
        },
    )
}

fn write_plots(dir: &Path, results: &MonteCarloResults, agg: &Aggregate, cfg: &RunConfig) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let steps: Vec<f64> = agg.steps.iter().map(|s| s.step as f64).collect();
    let line = |f: &dyn Fn(&crate::runner::StepAggregate) -> f64| -> Vec<(f64, f64)> {
        steps.iter().copied().zip(agg.steps.iter().map(f)).collect()
    };
    let tracker = agg.tracker.name();
    let card = svg::line_chart(
        "Cardinality",
        "step",
        "objects",
        &[
            svg::Series::new("true", line(&|s| s.cardinality.true_n as f64)),
            svg::Series::new(&format!("{tracker} mean"), line(&|s| s.cardinality.mean)),
            svg::Series::new(&format!("{tracker} mean + std"), line(&|s| s.cardinality.mean + s.cardinality.std)).dashed(),
            svg::Series::new(&format!("{tracker} mean - std"), line(&|s| s.cardinality.mean - s.cardinality.std)).dashed(),
        ],
    );
    write_string(&dir.join("cardinality.svg"), &card)?;
    let ospa = svg::line_chart(
        "OSPA",
        "step",
        "metres",
        &[
            svg::Series::new("total", line(&|s| s.ospa.total)),
            svg::Series::new("localisation", line(&|s| s.ospa.localisation)),
            svg::Series::new("cardinality", line(&|s| s.ospa.cardinality)),
        ],
    );
    write_string(&dir.join("ospa.svg"), &ospa)?;
    let ospa2 = svg::line_chart("OSPA2", "step", "metres", &[svg::Series::new(tracker, line(&|s| s.ospa2))]);
    write_string(&dir.join("ospa2.svg"), &ospa2)?;
    if let Some(t0) = agg.trials.first() {
        let [ix, iy] = cfg.scenario.position_indices();
        let xy = |set: &lmbtrack_core::TrajectorySet| -> Vec<Vec<(f64, f64)>> {
            set.values().map(|t| t.points.iter().map(|(_, x)| (x[ix], x[iy])).collect()).collect()
        };
        let plot = svg::xy_chart(
            &format!("Trial 0 ({tracker})"),
            &xy(&results.truth.to_trajectories()),
            &xy(&t0.trajectories),
        );
        write_string(&dir.join("xy_trial0.svg"), &plot)?;
    }
    Ok(())
}

/// Writes every output file of one tracker into `dir`.
pub fn emit_outputs(dir: &Path, results: &MonteCarloResults, agg: &Aggregate, cfg: &RunConfig) -> Result<(), HarnessError> {
    if agg.trials.is_empty() {
        return Err(HarnessError::Invalid("no trials to write".into()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_metrics_csv(&dir.join("metrics.csv"), agg, cfg.reproducible)?;
    write_trajectories_json(&dir.join("trajectories.json"), agg)?;
    write_timing_json(&dir.join("timing.json"), agg)?;
    write_plots(&dir.join("plots"), results, agg, cfg)
}

/// Writes comparison.json and a two-tracker OSPA² plot into `dir`.
pub fn emit_comparison(dir: &Path, results: &MonteCarloResults, cmp: &Comparison) -> Result<PathBuf, HarnessError> {
    let path = dir.join("comparison.json");
    write_json(&path, cmp)?;
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(io_err(&plots))?;
    let series: Vec<svg::Series> = results
        .aggregates
        .values()
        .map(|a| svg::Series::new(a.tracker.name(), a.steps.iter().map(|s| (s.step as f64, s.ospa2)).collect()))
        .collect();
    write_string(&plots.join("ospa2.svg"), &svg::line_chart("OSPA2", "step", "metres", &series))?;
    Ok(path)
}
