//! Problem definitions: models, costs, threshold, input distribution, domain.

pub mod benchmarks;
pub mod distribution;
pub mod idm;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Bounds;
use crate::rng::{stream, Purpose};
use crate::surrogate::Fidelity;

pub use benchmarks::{four_branch, multimodal};
pub use distribution::{InputDistribution, QuadratureGrid, TruncatedNormal, GRID_LIMIT};
pub use idm::{idm_acceleration, idm_min_range, idm_trajectory, simulation_cost, IdmParams, IdmState, ScenarioInput};

/// Deterministic model `R^d -> R`.
pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Which side of the threshold is a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `f(x) < delta`.
    Below,
    /// `f(x) > delta`.
    Above,
}

impl Orientation {
    /// Sign mapping raw outputs to the `g < delta'` convention used internally.
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Below => 1.0,
            Orientation::Above => -1.0,
        }
    }
}

#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub high: Evaluator,
    pub low: Option<Evaluator>,
    pub cost_high: f64,
    pub cost_low: f64,
    pub delta: f64,
    pub orientation: Orientation,
    pub distribution: InputDistribution,
    /// Box confining the acquisition search.
    pub domain: Bounds,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("has_low", &self.low.is_some())
            .field("cost_high", &self.cost_high)
            .field("cost_low", &self.cost_low)
            .field("delta", &self.delta)
            .field("orientation", &self.orientation)
            .field("distribution", &self.distribution)
            .field("domain", &self.domain)
            .finish()
    }
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        if !(self.cost_high > 0.0 && self.cost_high.is_finite() && self.cost_low > 0.0 && self.cost_low.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "costs must be positive and finite, got {} and {}",
                self.cost_high, self.cost_low
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidArgument("threshold must be finite".into()));
        }
        crate::error::check_dim(self.distribution.dim(), self.domain.dim())?;
        if (0..self.domain.dim()).any(|j| !(self.domain.width(j) > 0.0)) {
            return Err(Error::InvalidArgument("domain box must have positive widths".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.distribution.dim()
    }

    /// Four-branch benchmark, failure `f > 0` under `N(0, I)` on `[-5, 5]^2`.
    pub fn four_branch() -> Self {
        Self::benchmark("four_branch", Arc::new(four_branch))
    }

    /// Multi-modal benchmark, failure `f > 0` under `N(0, I)` on `[-5, 5]^2`.
    pub fn multimodal() -> Self {
        Self::benchmark("multimodal", Arc::new(multimodal))
    }

    fn benchmark(name: &str, f: Evaluator) -> Self {
        Self {
            name: name.into(),
            high: f,
            low: None,
            cost_high: 1.0,
            cost_low: 1.0,
            delta: 0.0,
            orientation: Orientation::Above,
            distribution: InputDistribution::StandardNormal { dim: 2 },
            domain: Bounds::new(vec![-5.0; 2], vec![5.0; 2]),
        }
    }

    /// Default scenario distribution: `R0 ~ TN(35, 15, [5, 90])`,
    /// `Rdot0 ~ TN(-1, 4, [-20, 10])`.
    pub fn cut_in_distribution() -> InputDistribution {
        InputDistribution::TruncatedNormal(vec![
            TruncatedNormal { mean: 35.0, sd: 15.0, lo: 5.0, hi: 90.0 },
            TruncatedNormal { mean: -1.0, sd: 4.0, lo: -20.0, hi: 10.0 },
        ])
    }

    /// Cut-in scenario: minimum range of the IDM at `dt_high`, with an
    /// optional coarser IDM as the low-fidelity model. Failure is `f < delta`.
    pub fn cut_in(dt_high: f64, dt_low: Option<f64>, delta: f64) -> Result<Self> {
        Self::cut_in_with(IdmParams::with_dt(dt_high), dt_low, delta, Self::cut_in_distribution())
    }

    pub fn cut_in_with(params: IdmParams, dt_low: Option<f64>, delta: f64, distribution: InputDistribution) -> Result<Self> {
        params.validate()?;
        crate::error::check_dim(2, distribution.dim())?;
        let model = |p: IdmParams| -> Evaluator {
            Arc::new(move |x: &[f64]| idm_min_range(&p, ScenarioInput::new(x[0], x[1])).unwrap_or(f64::NAN))
        };
        let low_params = dt_low.map(|dt| IdmParams { dt, ..params });
        if let Some(lp) = &low_params {
            lp.validate()?;
        }
        let domain = match &distribution {
            InputDistribution::TruncatedNormal(_) => distribution.bounding_box(),
            _ => {
                let b = distribution.bounding_box();
                Bounds::new(vec![b.lower[0].max(params.vehicle_length + 1.0), b.lower[1]], b.upper.clone())
            }
        };
        let p = Self {
            name: "cut_in".into(),
            high: model(params),
            low: low_params.map(model),
            cost_high: params.cost(),
            cost_low: low_params.map_or(params.cost(), |p| p.cost()),
            delta,
            orientation: Orientation::Below,
            distribution,
            domain,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn cost(&self, fidelity: Fidelity) -> f64 {
        match fidelity {
            Fidelity::High => self.cost_high,
            Fidelity::Low => self.cost_low,
        }
    }

    /// Raw model output, or an evaluation error if it is not finite.
    pub fn evaluate(&self, x: &[f64], fidelity: Fidelity) -> Result<f64> {
        let f = match fidelity {
            Fidelity::High => &self.high,
            Fidelity::Low => self.low.as_ref().ok_or_else(|| Error::Evaluation {
                x: x.to_vec(),
                reason: "problem has no low-fidelity model".into(),
            })?,
        };
        let y = f(x);
        if !y.is_finite() {
            return Err(Error::Evaluation {
                x: x.to_vec(),
                reason: format!("non-finite output {y}"),
            });
        }
        Ok(y)
    }

    /// Map a raw output to the internal `g < threshold()` convention.
    pub fn to_internal(&self, y: f64) -> f64 {
        self.orientation.sign() * y
    }

    /// Failure threshold in the internal convention.
    pub fn threshold(&self) -> f64 {
        self.orientation.sign() * self.delta
    }

    pub fn fails(&self, y: f64) -> bool {
        match self.orientation {
            Orientation::Below => y < self.delta,
            Orientation::Above => y > self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthMethod {
    Grid,
    Mc,
}

/// Reference failure probability with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub value: f64,
    pub std_error: f64,
    pub method: TruthMethod,
    /// Points per axis for the grid, samples for Monte Carlo.
    pub resolution: u64,
    pub evaluations: u64,
    pub seed: Option<u64>,
}

/// Reference failure probability of the high-fidelity model.
///
/// The grid rule integrates the failure indicator against cell masses of
/// `p_x` over the domain box and reports zero standard error; Monte Carlo
/// draws `resolution` samples from the `Mc` stream of `seed`.
pub fn ground_truth_pa(problem: &Problem, method: TruthMethod, resolution: u64, seed: u64) -> Result<GroundTruth> {
    problem.validate()?;
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    match method {
        TruthMethod::Grid => {
            let per_dim = usize::try_from(resolution).unwrap_or(usize::MAX);
            let grid = problem.distribution.quadrature(&problem.domain, per_dim)?;
            let (fail, total) = (0..grid.len())
                .into_par_iter()
                .map(|k| {
                    let (x, w) = grid.node(k);
                    if w == 0.0 {
                        return Ok::<_, Error>((0.0, 0.0));
                    }
                    let y = problem.evaluate(&x, Fidelity::High)?;
                    Ok((if problem.fails(y) { w } else { 0.0 }, w))
                })
                .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
            if !(total > 0.0) {
                return Err(Error::InvalidArgument("domain box carries no probability".into()));
            }
            Ok(GroundTruth {
                value: fail / total,
                std_error: 0.0,
                method,
                resolution,
                evaluations: grid.len(),
                seed: None,
            })
        }
        TruthMethod::Mc => {
            if resolution > GRID_LIMIT {
                return Err(Error::ResolutionGuard {
                    requested: resolution,
                    limit: GRID_LIMIT,
                });
            }
            const BLOCK: u64 = 1 << 16;
            let blocks = resolution.div_ceil(BLOCK);
            let fails = (0..blocks)
                .into_par_iter()
                .map(|b| {
                    let n = BLOCK.min(resolution - b * BLOCK) as usize;
                    let mut rng = stream(seed, Purpose::Mc);
                    rng.set_word_pos(u128::from(b) << 40);
                    let xs = problem.distribution.sample(n, &mut rng)?;
                    let mut k = 0u64;
                    for x in xs {
                        if problem.fails(problem.evaluate(&x, Fidelity::High)?) {
                            k += 1;
                        }
                    }
                    Ok::<_, Error>(k)
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            let p = fails as f64 / resolution as f64;
            Ok(GroundTruth {
                value: p,
                std_error: (p * (1.0 - p) / resolution as f64).sqrt(),
                method,
                resolution,
                evaluations: resolution,
                seed: Some(seed),
            })
        }
    }
}
