use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lmbtrack_cli::config::load_scenario_arg;
use lmbtrack_cli::output::{emit_comparison, emit_outputs};
use lmbtrack_cli::{compare, run_monte_carlo, HarnessError, RunConfig, TrackerKind};

/// Monte Carlo runs of the LMB and STE-LMB trackers.
#[derive(Parser)]
#[command(name = "track", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one tracker and write metrics, trajectories, timing and plots.
    Run {
        #[arg(long, value_enum)]
        tracker: Option<TrackerKind>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run both trackers on the same measurements and report the comparison.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Preset name (scenario1-linear, scenario2-ct) or config file path.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed; trial i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long = "ospa-c")]
    ospa_c: Option<f64>,
    #[arg(long = "ospa-p")]
    ospa_p: Option<f64>,
    #[arg(long = "ospa2-window")]
    ospa2_window: Option<u32>,
    #[arg(long)]
    max_hypotheses: Option<usize>,
    #[arg(long = "gibbs-iters")]
    gibbs_iters: Option<usize>,
    #[arg(long)]
    no_gating: bool,
    /// Write zeros in the timing columns of metrics.csv.
    #[arg(long)]
    reproducible: bool,
}

impl CommonArgs {
    fn config(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = load_scenario_arg(&self.scenario)?;
        cfg.trials = self.trials.unwrap_or(cfg.trials);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.out = self.out.clone().unwrap_or(cfg.out);
        cfg.threads = self.threads.or(cfg.threads);
        cfg.metrics.cutoff = self.ospa_c.unwrap_or(cfg.metrics.cutoff);
        cfg.metrics.order = self.ospa_p.unwrap_or(cfg.metrics.order);
        cfg.metrics.window = self.ospa2_window.unwrap_or(cfg.metrics.window);
        cfg.truncation.max_hypotheses = self.max_hypotheses.unwrap_or(cfg.truncation.max_hypotheses);
        cfg.truncation.gibbs_iterations = self.gibbs_iters.unwrap_or(cfg.truncation.gibbs_iterations);
        cfg.gating &= !self.no_gating;
        cfg.reproducible |= self.reproducible;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { tracker, common } => {
            let mut cfg = common.config()?;
            if let Some(t) = tracker {
                cfg.trackers = vec![t];
            }
            cfg.validate()?;
            let results = run_monte_carlo(&cfg)?;
            for agg in results.aggregates.values() {
                emit_outputs(&cfg.out, &results, agg, &cfg)?;
                println!(
                    "{}: {} trials, mean OSPA2 {:.3} m, estimator share {:.2}%",
                    agg.tracker,
                    agg.trials.len(),
                    agg.mean_ospa2(),
                    agg.estimator_percentage()
                );
            }
            println!("results written to {}", cfg.out.display());
        }
        Command::Compare { common } => {
            let mut cfg = common.config()?;
            cfg.trackers = vec![TrackerKind::Lmb, TrackerKind::SteLmb];
            cfg.validate()?;
            let results = run_monte_carlo(&cfg)?;
            for agg in results.aggregates.values() {
                emit_outputs(&cfg.out.join(agg.tracker.name()), &results, agg, &cfg)?;
            }
            let from_step = cfg.metrics.window;
            let cmp = compare(&results, from_step).expect("both trackers ran");
            emit_comparison(&cfg.out, &results, &cmp)?;
            println!("comparison over steps after {from_step} ({} trials)", cfg.trials);
            println!("  mean OSPA2 lmb:      {:.3} m", cmp.mean_ospa2_lmb);
            println!("  mean OSPA2 ste-lmb:  {:.3} m", cmp.mean_ospa2_ste);
            println!("  ste-lmb <= lmb at:   {:.1}% of steps", 100.0 * cmp.dominance_fraction);
            println!("  cardinality within 1: {:.1}% of steps (ste-lmb)", 100.0 * cmp.cardinality_fraction_ste);
            println!(
                "  estimator share:     {:.2}% ({:.2} s of {:.2} s)",
                cmp.estimator_percentage,
                cmp.estimator_seconds,
                cmp.filter_seconds + cmp.estimator_seconds
            );
            println!("results written to {}", cfg.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
