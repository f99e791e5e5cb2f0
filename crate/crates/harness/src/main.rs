use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use carma_levy::experiment::Setup;
use carma_levy::io::{self, GmmResultJson};
use carma_levy::{run_clt, run_consistency, ExperimentConfig, ExperimentReport, HarnessError};
use carma_levy_core::{recover_increments, two_stage_estimate, GmmOptions, RecoveryConfig, SampledSeries};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "carma-levy", version, about = "Simulate Lévy-driven CARMA processes, recover the driving increments and estimate their law")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the available parallelism)
    #[arg(long)]
    threads: Option<usize>,
    /// Replaces h_list by this single sampling interval
    #[arg(long)]
    h: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        ExperimentConfig::from_path(&self.config)?.with_overrides(self.seed, self.h, self.out.clone())
    }

    fn threads(&self) -> Result<usize, HarnessError> {
        match self.threads {
            Some(0) => Err(HarnessError::Config("--threads must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and sample the output; writes the series and the true unit increments
    Simulate(Common),
    /// Recover unit increments from a simulated or given series
    Recover {
        #[command(flatten)]
        common: Common,
        /// Series CSV (columns k, t, y_1..) to recover from instead of simulating
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Recover increments and fit the driver's parameters
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Increments CSV (columns n, dL_1..) to fit instead of simulating
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte Carlo experiments
    Experiment {
        #[command(subcommand)]
        kind: ExperimentCommand,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Estimates over a sweep of sampling intervals
    Consistency {
        #[command(flatten)]
        common: Common,
        /// Exit with status 4 if the acceptance gates fail
        #[arg(long)]
        check: bool,
    },
    /// Distribution of the estimator at one sampling interval
    Clt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        check: bool,
    },
}

fn tag(h: f64) -> String {
    format!("h{h}")
}

fn single_h(config: &ExperimentConfig) -> Result<f64, HarnessError> {
    match config.h_list.as_slice() {
        [h] => Ok(*h),
        _ => Err(HarnessError::Config(
            "reading an input file needs a single h; pass --h".into(),
        )),
    }
}

fn simulate_cmd(common: &Common) -> Result<(), HarnessError> {
    let config = common.load()?;
    let setup = Setup::new(&config)?;
    let dir = &config.output_dir;
    io::ensure_dir(dir)?;
    for &h in &config.h_list {
        let (series, truth) = setup.observe(h, 0)?;
        io::write_series_csv(&dir.join(format!("series_{}.csv", tag(h))), &series)?;
        io::write_increments_csv(&dir.join(format!("true_increments_{}.csv", tag(h))), &truth, None)?;
    }
    Ok(())
}

fn recover_cmd(common: &Common, input: Option<&Path>) -> Result<(), HarnessError> {
    let config = common.load()?;
    let setup = Setup::new(&config)?;
    let dir = &config.output_dir;
    io::ensure_dir(dir)?;
    if let Some(input) = input {
        let h = single_h(&config)?;
        let (dim, values) = io::read_series_csv(input)?;
        let lookahead = setup.ssr.lookahead();
        let per_unit = (1.0 / h).round() as usize;
        let len = values.len() / dim;
        let n_units = len.saturating_sub(lookahead + 1) / per_unit;
        let series = SampledSeries::new(h, n_units, lookahead, dim, values)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", input.display())))?;
        let rec = recover_increments(&setup.ssr, &series, &RecoveryConfig::default())
            .map_err(|source| HarnessError::Numerical { stage: "recover", source })?;
        return io::write_increments_csv(&dir.join(format!("increments_{}.csv", tag(h))), &rec.increments, None);
    }
    for &h in &config.h_list {
        let (series, truth) = setup.observe(h, 0)?;
        let rec = recover_increments(&setup.ssr, &series, &RecoveryConfig::default())
            .map_err(|source| HarnessError::Numerical { stage: "recover", source })?;
        io::write_increments_csv(&dir.join(format!("increments_{}.csv", tag(h))), &rec.increments, Some(&truth))?;
    }
    Ok(())
}

fn estimate_cmd(common: &Common, input: Option<&Path>) -> Result<(), HarnessError> {
    let config = common.load()?;
    let setup = Setup::new(&config)?;
    setup.check_estimator()?;
    let dir = &config.output_dir;
    io::ensure_dir(dir)?;
    if let Some(input) = input {
        let h = single_h(&config)?;
        let inc = io::read_increments_csv(input)?;
        let res = two_stage_estimate(&inc, setup.estimator.as_ref(), &GmmOptions::default())
            .map_err(|source| HarnessError::Numerical { stage: "estimate", source })?;
        let json = GmmResultJson::new(&res, inc.len(), h);
        return io::write_json(&dir.join(format!("result_{}.json", tag(h))), &json);
    }
    for &h in &config.h_list {
        let run = setup.run(h, 0)?;
        io::write_increments_csv(&dir.join(format!("increments_{}.csv", tag(h))), &run.increments, Some(&run.truth))?;
        log::info!("h = {h}: mean absolute recovery error {:.4e}", run.recovery_error);
        if let Some(ks) = run.ks_distance {
            log::info!("h = {h}: Kolmogorov distance to the true law {ks:.4}");
        }
        let res = run
            .estimate
            .map_err(|source| HarnessError::Numerical { stage: "estimate", source })?;
        let json = GmmResultJson::new(&res, run.increments.len(), h);
        io::write_json(&dir.join(format!("result_{}.json", tag(h))), &json)?;
    }
    Ok(())
}

fn write_report(report: &ExperimentReport) -> Result<(), HarnessError> {
    let dir = &report.config.output_dir;
    io::ensure_dir(dir)?;
    let name = report.kind.name();
    io::write_json(&dir.join(format!("{name}_report.json")), report)?;
    let r = report.per_h.first().map_or(0, |s| s.mean.len());
    io::write_replications_csv(&dir.join(format!("{name}_replications.csv")), &report.rows, r)
}

fn experiment_cmd(kind: &ExperimentCommand) -> Result<(), HarnessError> {
    let (common, check) = match kind {
        ExperimentCommand::Consistency { common, check } | ExperimentCommand::Clt { common, check } => {
            (common, *check)
        }
    };
    let config = common.load()?;
    let threads = common.threads()?;
    let report = match kind {
        ExperimentCommand::Consistency { .. } => run_consistency(&config, threads)?,
        ExperimentCommand::Clt { .. } => run_clt(&config, threads)?,
    };
    write_report(&report)?;
    for s in &report.per_h {
        log::info!(
            "h = {}: {} ok, {} failed, mean {:.4?}, std {:.4?}",
            s.h,
            s.n_ok,
            s.n_failed,
            s.mean,
            s.std
        );
    }
    let gates = report.gates();
    for c in &gates.checks {
        log::info!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if check {
        gates.into_result()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match &cli.command {
        Command::Simulate(common) => simulate_cmd(common),
        Command::Recover { common, input } => recover_cmd(common, input.as_deref()),
        Command::Estimate { common, input } => estimate_cmd(common, input.as_deref()),
        Command::Experiment { kind } => experiment_cmd(kind),
    };
    log::info!("finished in {:.2?}", started.elapsed());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
