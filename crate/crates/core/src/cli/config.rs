//! Run configuration: problem choice with overrides, loop settings,
//! replication count and output location.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::active::ExperimentConfig;
use crate::problems::{IdmParams, InputDistribution, Problem, TruncatedNormal, TruthMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemName {
    FourBranch,
    Multimodal,
    CutIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    StandardNormal { dim: usize },
    TruncatedNormal { dims: Vec<TruncatedNormal> },
    /// CSV file `x1,...,xd[,weight]`; relative paths resolve against the
    /// config file's directory.
    Empirical { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: ProblemName,
    /// Cut-in only: step of the high-fidelity simulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_high: Option<f64>,
    /// Cut-in only: step of the low-fidelity simulation; absent means no
    /// low-fidelity model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSpec>,
}

impl ProblemSpec {
    /// Build the problem; `base` resolves relative file paths.
    pub fn build(&self, base: &Path) -> Result<Problem, CliError> {
        let bad = |m: String| CliError::Config(format!("problem: {m}"));
        let dist = match &self.distribution {
            None => None,
            Some(DistributionSpec::StandardNormal { dim }) => {
                Some(InputDistribution::standard_normal(*dim).map_err(|e| bad(e.to_string()))?)
            }
            Some(DistributionSpec::TruncatedNormal { dims }) => {
                Some(InputDistribution::truncated(dims.clone()).map_err(|e| bad(e.to_string()))?)
            }
            Some(DistributionSpec::Empirical { path }) => {
                let p = base.join(path);
                Some(InputDistribution::from_csv_path(&p).map_err(|e| bad(format!("{}: {e}", p.display())))?)
            }
        };
        if dist.as_ref().is_some_and(|d| d.dim() != 2) {
            return Err(bad("all problems are two-dimensional".into()));
        }
        let mut problem = match self.name {
            ProblemName::FourBranch | ProblemName::Multimodal => {
                if self.dt_high.is_some() || self.dt_low.is_some() {
                    return Err(bad("dt_high/dt_low apply to cut_in only".into()));
                }
                let mut p = if self.name == ProblemName::FourBranch {
                    Problem::four_branch()
                } else {
                    Problem::multimodal()
                };
                if let Some(d) = dist {
                    p.distribution = d;
                }
                p
            }
            ProblemName::CutIn => {
                let params = IdmParams::with_dt(self.dt_high.unwrap_or(IdmParams::default().dt));
                Problem::cut_in_with(params, self.dt_low, 0.0, dist.unwrap_or_else(Problem::cut_in_distribution))
                    .map_err(|e| bad(e.to_string()))?
            }
        };
        if let Some(d) = self.delta {
            problem.delta = d;
        }
        problem.validate().map_err(|e| bad(e.to_string()))?;
        Ok(problem)
    }

    /// Ground-truth method used when the config does not name one.
    pub fn default_truth(&self) -> TruthSpec {
        match self.name {
            ProblemName::CutIn => TruthSpec {
                method: TruthMethod::Grid,
                resolution: 2000,
                seed: 0,
            },
            _ => TruthSpec {
                method: TruthMethod::Mc,
                resolution: 10_000_000,
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    pub method: TruthMethod,
    /// Points per axis for the grid, samples for Monte Carlo.
    pub resolution: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_replications() -> usize {
    1
}

fn default_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// Loop settings. `cost_high`, `cost_low` and `delta` default to the
    /// problem's values rather than the generic defaults.
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthSpec>,
    /// Relative half-width of the convergence band.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

/// A parsed configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub problem: Problem,
    /// Directory relative paths in the config resolve against.
    pub base: PathBuf,
}

impl RunConfig {
    /// Parse and validate `text`; `base` resolves relative paths (the
    /// output directory and data files).
    pub fn parse(text: &str, base: &Path) -> Result<LoadedConfig, CliError> {
        // serde_json messages end with "at line L column C"
        let diag = |e: serde_json::Error| CliError::Config(e.to_string());
        let raw: serde_json::Value = serde_json::from_str(text).map_err(diag)?;
        let mut config: RunConfig = serde_json::from_str(text).map_err(diag)?;
        let problem = config.problem.build(base)?;

        // fields the experiment section leaves out inherit from the problem
        let given = |key: &str| raw.get("experiment").and_then(|e| e.get(key)).is_some();
        let exp = &mut config.experiment;
        if !given("cost_high") {
            exp.cost_high = problem.cost_high;
        }
        if !given("cost_low") {
            exp.cost_low = problem.cost_low;
        }
        if !given("delta") {
            exp.delta = problem.delta;
        } else if config.problem.delta.is_some_and(|d| d != exp.delta) {
            return Err(CliError::Config("experiment.delta disagrees with problem.delta".into()));
        }
        // one threshold for the loop and the ground truth
        config.problem.delta = Some(exp.delta);
        let mut problem = problem;
        problem.delta = exp.delta;

        exp.validate().map_err(|e| CliError::Config(format!("experiment: {e}")))?;
        if exp.mode != crate::active::Mode::Single && problem.low.is_none() {
            return Err(CliError::Config(format!(
                "experiment.mode {:?} needs a low-fidelity model (problem.dt_low)",
                exp.mode
            )));
        }
        if config.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        if !(config.tolerance > 0.0 && config.tolerance.is_finite()) {
            return Err(CliError::Config("tolerance must be positive".into()));
        }
        if config.truth.is_none() {
            config.truth = Some(config.problem.default_truth());
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        if let Some(DistributionSpec::Empirical { path }) = &mut config.problem.distribution {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        Ok(LoadedConfig {
            config,
            problem,
            base: base.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // absolute, so the echoed effective config is location independent
        let base = std::fs::canonicalize(path)
            .ok()
            .and_then(|p| p.parent().map(Path::to_path_buf))
            .unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn truth_spec(&self) -> TruthSpec {
        self.truth.unwrap_or_else(|| self.problem.default_truth())
    }
}
