//! Experiment configuration (JSON).

use std::path::{Path, PathBuf};

use carma_levy_core::gmm::{CharFnMatching, DynMomentFunction, GammaFamily, GammaScore};
use carma_levy_core::{CarmaModel, DMatrix, DVector, JumpLaw, LevySpec};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

const GRID_TOL: f64 = 1e-9;

/// Model in controller form; `A` lists `A_1..A_p` and `B` lists `B_0..B_q`,
/// each flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub p: usize,
    pub q: usize,
    pub m: usize,
    pub d: usize,
    #[serde(rename = "A")]
    pub ar: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub ma: Vec<Vec<f64>>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<CarmaModel, HarnessError> {
        if self.ar.len() != self.p {
            return Err(cfg(format!("model.A has {} entries, p = {}", self.ar.len(), self.p)));
        }
        if self.ma.len() != self.q + 1 {
            return Err(cfg(format!("model.B has {} entries, q + 1 = {}", self.ma.len(), self.q + 1)));
        }
        let mat = |v: &Vec<f64>, rows: usize, cols: usize, name: &str| {
            if v.len() != rows * cols {
                return Err(cfg(format!("{name} needs {rows}×{cols} = {} values, got {}", rows * cols, v.len())));
            }
            Ok(DMatrix::from_row_slice(rows, cols, v))
        };
        let ar = self
            .ar
            .iter()
            .enumerate()
            .map(|(k, v)| mat(v, self.m, self.m, &format!("model.A[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let ma = self
            .ma
            .iter()
            .enumerate()
            .map(|(k, v)| mat(v, self.d, self.m, &format!("model.B[{k}]")))
            .collect::<Result<Vec<_>, _>>()?;
        CarmaModel::new(ar, ma).map_err(|e| cfg(format!("model: {e}")))
    }
}

/// Jump law of a compound Poisson driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpConfig {
    Normal { mean: f64, std_dev: f64 },
    Fixed { size: Vec<f64> },
}

/// Driving Lévy process, tagged by `"family"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevyConfig {
    /// Unit increments Gamma with scale `b` and shape `a`.
    Gamma { b: f64, a: f64 },
    BrownianDrift { drift: Vec<f64>, cov: Vec<Vec<f64>> },
    CompoundPoisson { rate: f64, jumps: JumpConfig },
    DriftOnly { drift: Vec<f64> },
}

impl LevyConfig {
    pub fn build(&self) -> Result<LevySpec, HarnessError> {
        let spec = match self {
            LevyConfig::Gamma { b, a } => LevySpec::gamma(*b, *a),
            LevyConfig::BrownianDrift { drift, cov } => {
                let m = drift.len();
                if cov.len() != m || cov.iter().any(|r| r.len() != m) {
                    return Err(cfg(format!("levy.cov must be {m}×{m}")));
                }
                let flat: Vec<f64> = cov.iter().flatten().copied().collect();
                LevySpec::brownian_drift(
                    DVector::from_vec(drift.clone()),
                    DMatrix::from_row_slice(m, m, &flat),
                )
            }
            LevyConfig::CompoundPoisson { rate, jumps } => {
                let law = match jumps {
                    JumpConfig::Normal { mean, std_dev } => JumpLaw::Normal {
                        mean: *mean,
                        std_dev: *std_dev,
                    },
                    JumpConfig::Fixed { size } => JumpLaw::Fixed(size.clone()),
                };
                LevySpec::compound_poisson(*rate, law)
            }
            LevyConfig::DriftOnly { drift } => LevySpec::drift_only(DVector::from_vec(drift.clone())),
        };
        spec.map_err(|e| cfg(format!("levy: {e}")))
    }

    /// True `(b, a)` when the driver is a Gamma subordinator.
    pub fn gamma_truth(&self) -> Option<Vec<f64>> {
        match self {
            LevyConfig::Gamma { b, a } => Some(vec![*b, *a]),
            _ => None,
        }
    }
}

/// Moment conditions used for estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    /// Gamma maximum-likelihood score.
    GammaMle,
    /// Characteristic-function matching for the Gamma family.
    Cf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u_points: Option<Vec<Vec<f64>>>,
    },
}

impl EstimatorConfig {
    pub fn build(&self) -> Result<DynMomentFunction, HarnessError> {
        Ok(match self {
            EstimatorConfig::GammaMle => Box::new(GammaScore),
            EstimatorConfig::Cf { u_points: None } => Box::new(CharFnMatching::gamma_default()),
            EstimatorConfig::Cf { u_points: Some(u) } => Box::new(
                CharFnMatching::new(GammaFamily, u.clone()).map_err(|e| cfg(format!("estimator: {e}")))?,
            ),
        })
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

/// A complete experiment description; echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub levy: LevyConfig,
    /// Observation horizon `N` in unit intervals.
    #[serde(rename = "T")]
    pub horizon: f64,
    pub euler_dt: f64,
    pub h_list: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub estimator: EstimatorConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Simulated time discarded before recording.
    #[serde(default)]
    pub warmup: f64,
}

fn cfg(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn whole(ratio: f64) -> Option<u64> {
    let n = ratio.round();
    ((ratio - n).abs() <= GRID_TOL * n.max(1.0) && n >= 0.0).then_some(n as u64)
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let c: Self = serde_json::from_str(text).map_err(|e| cfg(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Grid and count checks; model, driver and estimator are checked when built.
    pub fn validate(&self) -> Result<(), HarnessError> {
        match whole(self.horizon) {
            Some(n) if n >= 1 => {}
            _ => return Err(cfg(format!("T = {} must be a positive integer", self.horizon))),
        }
        if !(self.euler_dt > 0.0 && self.euler_dt <= 1.0) {
            return Err(cfg(format!("euler_dt = {} must lie in (0, 1]", self.euler_dt)));
        }
        if whole(1.0 / self.euler_dt).is_none() {
            return Err(cfg(format!("1/euler_dt must be an integer, euler_dt = {}", self.euler_dt)));
        }
        if whole(self.warmup / self.euler_dt).is_none() {
            return Err(cfg(format!("warmup = {} is not a multiple of euler_dt", self.warmup)));
        }
        if self.h_list.is_empty() {
            return Err(cfg("h_list is empty"));
        }
        for &h in &self.h_list {
            if !(h > 0.0 && h <= 1.0) || whole(1.0 / h).is_none() {
                return Err(cfg(format!("h = {h}: 1/h must be a positive integer")));
            }
            if whole(h / self.euler_dt).is_none() {
                return Err(cfg(format!("h = {h} is not a multiple of euler_dt = {}", self.euler_dt)));
            }
        }
        for (i, a) in self.h_list.iter().enumerate() {
            if self.h_list[..i].contains(a) {
                return Err(cfg(format!("h = {a} listed twice")));
            }
        }
        if self.replications == 0 {
            return Err(cfg("replications must be at least 1"));
        }
        Ok(())
    }

    pub fn n_units(&self) -> usize {
        self.horizon.round() as usize
    }

    /// Simulated span: the observation horizon plus one unit when forward
    /// differences look past `N`.
    pub fn sim_horizon(&self, lookahead: usize) -> f64 {
        self.n_units() as f64 + if lookahead > 0 { 1.0 } else { 0.0 }
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, h: Option<f64>, out: Option<PathBuf>) -> Result<Self, HarnessError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(h) = h {
            self.h_list = vec![h];
        }
        if let Some(o) = out {
            self.output_dir = o;
        }
        self.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STUDY: &str = r#"{
        "model": {"p": 3, "q": 1, "m": 1, "d": 1, "A": [[2.0], [1.5], [0.5]], "B": [[1.0], [1.0]]},
        "levy": {"family": "gamma", "b": 2.0, "a": 1.0},
        "T": 30, "euler_dt": 0.0005, "h_list": [0.01], "replications": 1, "seed": 7,
        "estimator": {"kind": "gamma_mle"}
    }"#;

    #[test]
    fn parses_study_config() {
        let c = ExperimentConfig::from_json(STUDY).unwrap();
        assert_eq!(c.n_units(), 30);
        assert_eq!(c.output_dir, PathBuf::from("output"));
        let model = c.model.build().unwrap();
        assert_eq!((model.p(), model.q()), (3, 1));
        assert_eq!(c.levy.gamma_truth(), Some(vec![2.0, 1.0]));
        let echo = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&echo).unwrap(), c);
    }

    #[test]
    fn rejects_bad_grids() {
        let bad = STUDY.replace("[0.01]", "[0.03]");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(HarnessError::Config(_))));
        let bad = STUDY.replace("\"T\": 30", "\"T\": 30.5");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = STUDY.replace("0.0005", "0.0003");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = STUDY.replace("\"replications\": 1", "\"replications\": 0");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = STUDY.replace("\"seed\"", "\"sead\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn other_families_parse() {
        let text = STUDY.replace(
            r#"{"family": "gamma", "b": 2.0, "a": 1.0}"#,
            r#"{"family": "compound_poisson", "rate": 2.0, "jumps": {"law": "normal", "mean": 1.0, "std_dev": 0.5}}"#,
        );
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(c.levy.build().unwrap().dim(), 1);
        assert_eq!(c.levy.gamma_truth(), None);
        let text = STUDY.replace(r#"{"kind": "gamma_mle"}"#, r#"{"kind": "cf", "u_points": [[0.5], [0.5]]}"#);
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert!(c.estimator.build().is_err());
    }
}
