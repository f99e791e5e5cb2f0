//! Simulation study: single pipeline runs and parallel Monte Carlo experiments.
//!
//! Every replication draws from its own ChaCha stream, selected by the sampling
//! interval and the replication index, so results do not depend on the thread
//! count, on scheduling, or on the order of `h_list`.

use std::time::Instant;

use carma_levy_core::gmm::{optimal_weighting, DynMomentFunction};
use carma_levy_core::levy::gamma_cdf;
use carma_levy_core::recovery::mean_abs_error;
use carma_levy_core::stats::{self, anderson_darling_normal, AD_NORMAL_CRITICAL_1PCT};
use carma_levy_core::{
    asymptotic_covariance, build_state_space, recover_increments, sample, simulate,
    two_stage_estimate, CarmaModel, DMatrix, DVector, GmmOptions, GmmResult, IncrementSample,
    LevySpec, RecoveryConfig, SampledSeries, SimulationOptions, StateSpaceRealization,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Stage};
use crate::io::matrix_rows;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream number of replication `rep` at sampling interval `h`.
pub fn stream_id(h: f64, rep: usize) -> u64 {
    splitmix64(h.to_bits() ^ splitmix64(rep as u64))
}

/// Generator for replication `rep` at sampling interval `h`.
pub fn replication_rng(master_seed: u64, h: f64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(h, rep));
    rng
}

/// Everything built once from a configuration and shared by all replications.
pub struct Setup {
    pub model: CarmaModel,
    pub ssr: StateSpaceRealization,
    pub levy: LevySpec,
    pub estimator: DynMomentFunction,
    pub truth: Option<Vec<f64>>,
    config: ExperimentConfig,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        for &h in &config.h_list {
            if config.euler_dt > h / 10.0 + 1e-15 {
                log::warn!(
                    "euler_dt = {} is coarser than h/10 at h = {h}; sampled values carry Euler error",
                    config.euler_dt
                );
            }
        }
        let model = config.model.build()?;
        let ssr = build_state_space(&model).stage("state space")?;
        let levy = config.levy.build()?;
        if levy.dim() != model.m() {
            return Err(HarnessError::Config(format!(
                "driver has dimension {}, model expects m = {}",
                levy.dim(),
                model.m()
            )));
        }
        let estimator = config.estimator.build()?;
        Ok(Self {
            model,
            ssr,
            levy,
            estimator,
            truth: config.levy.gamma_truth(),
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// The estimator must work on increments of the driver's dimension.
    /// Simulation and recovery do not need this.
    pub fn check_estimator(&self) -> Result<(), HarnessError> {
        if self.estimator.sample_dim() != self.model.m() {
            return Err(HarnessError::Config(format!(
                "estimator works on {}-dimensional increments, model has m = {}",
                self.estimator.sample_dim(),
                self.model.m()
            )));
        }
        Ok(())
    }

    /// Simulates replication `rep` and samples it at spacing `h`. Also returns
    /// the true unit increments of the driver.
    pub fn observe(&self, h: f64, rep: usize) -> Result<(SampledSeries, IncrementSample), HarnessError> {
        let c = &self.config;
        let n_units = c.n_units();
        let mut rng = replication_rng(c.seed, h, rep);
        let opts = SimulationOptions {
            x0: None,
            warmup: c.warmup,
        };
        let horizon = c.sim_horizon(self.ssr.lookahead());
        let path = simulate(&self.model, &self.ssr, &self.levy, horizon, c.euler_dt, &opts, &mut rng)
            .stage("simulate")?;
        let truth = path.unit_increments(n_units).stage("simulate")?;
        let series = sample(&path, h, n_units).stage("sample")?;
        Ok((series, truth))
    }

    /// Full pipeline for one replication. Estimation failures are kept in the
    /// result; earlier failures are returned as errors.
    pub fn run(&self, h: f64, rep: usize) -> Result<SingleRun, HarnessError> {
        self.check_estimator()?;
        let (series, truth) = self.observe(h, rep)?;
        let rec = recover_increments(&self.ssr, &series, &RecoveryConfig::default()).stage("recover")?;
        let recovery_error = mean_abs_error(&rec.increments, &truth).stage("recover")?;
        let ks_distance = match (&self.truth, rec.increments.dim()) {
            (Some(t), 1) => Some(stats::ks_statistic(rec.increments.as_slice(), |x| {
                gamma_cdf(x, t[0], t[1])
            })),
            _ => None,
        };
        let estimate = two_stage_estimate(&rec.increments, self.estimator.as_ref(), &GmmOptions::default());
        Ok(SingleRun {
            h,
            replication: rep,
            stream: stream_id(h, rep),
            series,
            increments: rec.increments,
            truth,
            recovery_error,
            ks_distance,
            estimate,
        })
    }
}

/// One pass through simulate, sample, recover and estimate.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub h: f64,
    pub replication: usize,
    pub stream: u64,
    pub series: SampledSeries,
    pub increments: IncrementSample,
    pub truth: IncrementSample,
    /// Mean absolute error of the recovered unit increments.
    pub recovery_error: f64,
    /// Kolmogorov distance of the recovered increments to the true Gamma law.
    pub ks_distance: Option<f64>,
    pub estimate: carma_levy_core::Result<GmmResult>,
}

/// Replication `rep` of `config` at sampling interval `h`.
pub fn run_single(config: &ExperimentConfig, h: f64, rep: usize) -> Result<SingleRun, HarnessError> {
    Setup::new(config)?.run(h, rep)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed { stage: &'static str, message: String },
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub h: f64,
    pub replication: usize,
    pub stream: u64,
    #[serde(flatten)]
    pub status: Status,
    pub theta: Option<Vec<f64>>,
    pub dropped: Option<usize>,
    pub converged: Option<bool>,
    pub recovery_error: Option<f64>,
}

impl ReplicationRow {
    fn failed(h: f64, rep: usize, stage: &'static str, message: String) -> Self {
        Self {
            h,
            replication: rep,
            stream: stream_id(h, rep),
            status: Status::Failed { stage, message },
            theta: None,
            dropped: None,
            converged: None,
            recovery_error: None,
        }
    }

    fn from_run(run: Result<SingleRun, HarnessError>, h: f64, rep: usize) -> Self {
        let run = match run {
            Ok(r) => r,
            Err(HarnessError::Numerical { stage, source }) => {
                return Self::failed(h, rep, stage, source.to_string())
            }
            Err(e) => return Self::failed(h, rep, "setup", e.to_string()),
        };
        match run.estimate {
            Ok(g) => Self {
                h,
                replication: rep,
                stream: run.stream,
                status: Status::Ok,
                theta: Some(g.theta),
                dropped: Some(g.dropped),
                converged: Some(g.converged),
                recovery_error: Some(run.recovery_error),
            },
            Err(e) => {
                let mut row = Self::failed(h, rep, "estimate", e.to_string());
                row.recovery_error = Some(run.recovery_error);
                row
            }
        }
    }
}

/// Statistics of the successful replications at one sampling interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HSummary {
    pub h: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: Vec<f64>,
    /// Elementwise standard deviation (divisor `n - 1`).
    pub std: Vec<f64>,
    /// Empirical covariance of the estimates (divisor `n - 1`).
    pub covariance: Vec<Vec<f64>>,
    /// `‖mean - truth‖` when the true parameter is known.
    pub bias_norm: Option<f64>,
    /// Asymptotic covariance of the estimator at the true parameter, divided by `N`.
    pub theoretical_covariance: Option<Vec<Vec<f64>>>,
    /// Anderson–Darling normality statistic per coordinate.
    pub anderson_darling: Option<Vec<f64>>,
    pub mean_recovery_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Consistency,
    Clt,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Consistency => "consistency",
            ExperimentKind::Clt => "clt",
        }
    }
}

/// Summary and per-replication data of an experiment, with the configuration
/// needed to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub truth: Option<Vec<f64>>,
    pub per_h: Vec<HSummary>,
    pub rows: Vec<ReplicationRow>,
}

/// `Σ/N` of the optimally weighted estimator at `theta`, if the moment
/// conditions have closed-form population moments.
fn theoretical_covariance(setup: &Setup, theta: &[f64]) -> Option<DMatrix<f64>> {
    let mf = setup.estimator.as_ref();
    let (omega, g) = mf.population_moments(theta)?;
    let (w, _) = optimal_weighting(&omega, mf.param_dim()).ok()?;
    let sigma = asymptotic_covariance(&g, &omega, &w).ok()?;
    Some(sigma / setup.config.n_units() as f64)
}

fn summarize(setup: &Setup, h: f64, rows: &[ReplicationRow]) -> HSummary {
    let thetas: Vec<DVector<f64>> = rows
        .iter()
        .filter_map(|r| r.theta.as_ref().map(|t| DVector::from_column_slice(t)))
        .collect();
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.recovery_error).collect();
    let r = setup.estimator.param_dim();
    let (mean, cov) = if thetas.is_empty() {
        (DVector::from_element(r, f64::NAN), DMatrix::from_element(r, r, f64::NAN))
    } else {
        let cov = if thetas.len() > 1 {
            stats::covariance(&thetas)
        } else {
            DMatrix::zeros(r, r)
        };
        (stats::mean(&thetas), cov)
    };
    let bias_norm = setup
        .truth
        .as_ref()
        .filter(|t| t.len() == r)
        .map(|t| (&mean - DVector::from_column_slice(t)).norm());
    let anderson_darling = (thetas.len() >= 8).then(|| {
        (0..r)
            .map(|i| anderson_darling_normal(&thetas.iter().map(|t| t[i]).collect::<Vec<_>>()))
            .collect()
    });
    HSummary {
        h,
        n_ok: thetas.len(),
        n_failed: rows.len() - thetas.len(),
        mean: mean.iter().copied().collect(),
        std: cov.diagonal().iter().map(|v| v.sqrt()).collect(),
        covariance: matrix_rows(&cov),
        bias_norm,
        theoretical_covariance: setup
            .truth
            .as_ref()
            .and_then(|t| theoretical_covariance(setup, t))
            .map(|s| matrix_rows(&s)),
        anderson_darling,
        mean_recovery_error: errors.iter().sum::<f64>() / errors.len().max(1) as f64,
    }
}

fn run_experiment(
    config: &ExperimentConfig,
    kind: ExperimentKind,
    threads: usize,
) -> Result<ExperimentReport, HarnessError> {
    let setup = Setup::new(config)?;
    setup.check_estimator()?;
    let reps = config.replications;
    let jobs: Vec<(f64, usize)> = config
        .h_list
        .iter()
        .flat_map(|&h| (0..reps).map(move |rep| (h, rep)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let started = Instant::now();
    // indexed collect keeps replication order whatever the completion order
    let rows: Vec<ReplicationRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(h, rep)| ReplicationRow::from_run(setup.run(h, rep), h, rep))
            .collect()
    });
    log::info!(
        "{} experiment: {} runs on {threads} threads in {:.2?}",
        kind.name(),
        rows.len(),
        started.elapsed()
    );

    let mut per_h = Vec::with_capacity(config.h_list.len());
    for (i, &h) in config.h_list.iter().enumerate() {
        let chunk = &rows[i * reps..(i + 1) * reps];
        let failed = chunk.iter().filter(|r| r.theta.is_none()).count();
        for row in chunk {
            if let Status::Failed { stage, message } = &row.status {
                log::warn!("h = {h}, replication {}: {stage}: {message}", row.replication);
            }
        }
        if failed * 20 > reps {
            return Err(HarnessError::Attrition {
                h,
                failed,
                total: reps,
            });
        }
        per_h.push(summarize(&setup, h, chunk));
    }
    Ok(ExperimentReport {
        kind,
        config: config.clone(),
        truth: setup.truth.clone(),
        per_h,
        rows,
    })
}

/// Estimates at every `h` in the configuration, `replications` times each.
/// `threads = 0` uses one worker per available core.
pub fn run_consistency(config: &ExperimentConfig, threads: usize) -> Result<ExperimentReport, HarnessError> {
    run_experiment(config, ExperimentKind::Consistency, threads)
}

/// Distribution of the estimator at a single `h`, compared with its
/// asymptotic covariance.
pub fn run_clt(config: &ExperimentConfig, threads: usize) -> Result<ExperimentReport, HarnessError> {
    if config.h_list.len() != 1 {
        return Err(HarnessError::Config(format!(
            "the clt experiment needs exactly one h, got {}",
            config.h_list.len()
        )));
    }
    run_experiment(config, ExperimentKind::Clt, threads)
}

/// One named pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GateOutcome {
    pub checks: Vec<GateCheck>,
}

impl GateOutcome {
    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(GateCheck {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect()
    }

    pub fn into_result(self) -> Result<GateOutcome, HarnessError> {
        if self.passed() {
            Ok(self)
        } else {
            Err(HarnessError::Gate(self.failures()))
        }
    }
}

/// Bias tolerance per coordinate at the finest `h` of a consistency sweep.
pub const CONSISTENCY_TOLERANCE: [f64; 2] = [0.15, 0.08];
/// Tolerance on the mean estimate per coordinate in the clt experiment.
pub const CLT_MEAN_TOLERANCE: [f64; 2] = [0.07, 0.03];
/// Admissible ratio band between empirical and asymptotic covariance entries.
pub const CLT_COVARIANCE_BAND: (f64, f64) = (0.5, 2.0);

impl ExperimentReport {
    pub fn gates(&self) -> GateOutcome {
        let mut out = GateOutcome::default();
        let Some(truth) = &self.truth else {
            out.check("truth", false, "the driver has no known true parameter");
            return out;
        };
        match self.kind {
            ExperimentKind::Consistency => consistency_gates(self, truth, &mut out),
            ExperimentKind::Clt => clt_gates(self, truth, &mut out),
        }
        out
    }
}

fn consistency_gates(report: &ExperimentReport, truth: &[f64], out: &mut GateOutcome) {
    let mut by_h: Vec<&HSummary> = report.per_h.iter().collect();
    by_h.sort_by(|a, b| b.h.total_cmp(&a.h));
    for w in by_h.windows(2) {
        let (coarse, fine) = (w[0].bias_norm.unwrap_or(f64::NAN), w[1].bias_norm.unwrap_or(f64::NAN));
        out.check(
            format!("bias decreases from h = {} to h = {}", w[0].h, w[1].h),
            fine < coarse,
            format!("{coarse:.4} -> {fine:.4}"),
        );
    }
    if let Some(finest) = by_h.last() {
        for (i, tol) in CONSISTENCY_TOLERANCE.iter().enumerate().take(truth.len()) {
            let dev = (finest.mean[i] - truth[i]).abs();
            out.check(
                format!("mean of coordinate {} at h = {}", i + 1, finest.h),
                dev <= *tol,
                format!("|{:.4} - {}| = {dev:.4}, tolerance {tol}", finest.mean[i], truth[i]),
            );
        }
    }
}

fn clt_gates(report: &ExperimentReport, truth: &[f64], out: &mut GateOutcome) {
    let s = &report.per_h[0];
    for (i, tol) in CLT_MEAN_TOLERANCE.iter().enumerate().take(truth.len()) {
        let dev = (s.mean[i] - truth[i]).abs();
        out.check(
            format!("mean of coordinate {}", i + 1),
            dev <= *tol,
            format!("|{:.4} - {}| = {dev:.4}, tolerance {tol}", s.mean[i], truth[i]),
        );
    }
    match &s.theoretical_covariance {
        Some(theory) => {
            let (lo, hi) = CLT_COVARIANCE_BAND;
            for (i, row) in theory.iter().enumerate() {
                for (j, &t) in row.iter().enumerate().skip(i) {
                    let e = s.covariance[i][j];
                    let ratio = e / t;
                    out.check(
                        format!("covariance entry ({}, {})", i + 1, j + 1),
                        ratio >= lo && ratio <= hi,
                        format!("empirical {e:.4e}, asymptotic {t:.4e}, ratio {ratio:.3}"),
                    );
                }
            }
        }
        None => out.check("covariance", false, "no closed-form asymptotic covariance"),
    }
    match &s.anderson_darling {
        Some(ad) => {
            let passing = ad.iter().filter(|&&a| a <= AD_NORMAL_CRITICAL_1PCT).count();
            out.check(
                "normality",
                passing >= 1,
                format!("Anderson-Darling {ad:.3?}, 1% critical value {AD_NORMAL_CRITICAL_1PCT}"),
            );
        }
        None => out.check("normality", false, "too few successful replications"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ_by_h_and_replication() {
        assert_ne!(stream_id(0.01, 0), stream_id(0.01, 1));
        assert_ne!(stream_id(0.01, 0), stream_id(0.1, 0));
        use rand::RngCore;
        let a = replication_rng(1, 0.01, 3).next_u64();
        let b = replication_rng(1, 0.01, 3).next_u64();
        let c = replication_rng(2, 0.01, 3).next_u64();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gate_outcome_collects_failures() {
        let mut g = GateOutcome::default();
        g.check("a", true, "");
        g.check("b", false, "off by one");
        assert!(!g.passed());
        assert_eq!(g.failures(), vec!["b: off by one".to_string()]);
        assert!(matches!(g.into_result(), Err(HarnessError::Gate(_))));
    }
}
