//! Budgeted adaptive sampling loops and the plug-in failure-probability estimate.
//!
//! All three modes share one loop: fit, select, evaluate, append, record,
//! until the cumulative cost reaches the budget. Internally outputs are mapped
//! to the `g < delta'` convention of the problem (see
//! [`Problem::to_internal`]); traces store raw outputs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::acquisition::{select_next_bifi, select_next_single, AcquisitionOptions, CandidateSet, Selection};
use crate::bifi::{fit_bifi_gp, fit_difference_gp, BiDataset, BiGpPosterior, KnownLowSurrogate, KnownModel};
use crate::design::latin_hypercube;
use crate::error::{Error, Result};
use crate::gp::{fit_gp, Dataset, FitOptions, GpPosterior, KernelParams};
use crate::problems::Problem;
use crate::rng::{stream, Purpose};
use crate::surrogate::{Fidelity, Surrogate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// High-fidelity model only.
    Single,
    /// Two fidelities with finite costs, joint GP.
    Bifi,
    /// Costless known low-fidelity model plus a GP on the difference.
    KnownLofi,
}

/// How a weighted point set over `p_x` is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSet {
    /// Tensor grid over the domain with cell-mass weights.
    Grid,
    /// Equal-weight draws from the input distribution.
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n_init_high: usize,
    pub n_init_low: usize,
    pub cost_high: f64,
    pub cost_low: f64,
    /// Total cost budget; with `cost_high = 1` in single mode this is the
    /// number of high-fidelity samples.
    pub budget: f64,
    pub delta: f64,
    /// Points of the set integrating the acquisition.
    pub candidate_size: usize,
    pub candidate_method: PointSet,
    /// Points of the set the failure probability is read off. Grid sizes are
    /// rounded to a whole number of nodes per axis.
    pub estimate_size: usize,
    pub estimate_method: PointSet,
    pub seed: u64,
    /// Full hyperparameter refit every this many steps; in between, the
    /// previous hyperparameters are kept.
    pub refit_every: usize,
    /// Halton restarts of the initial fit.
    pub fit_restarts: usize,
    /// Halton restarts added to the warm start on later refits.
    pub refit_restarts: usize,
    pub acquisition: AcquisitionOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Single,
            n_init_high: 8,
            n_init_low: 0,
            cost_high: 1.0,
            cost_low: 1.0,
            budget: 30.0,
            delta: 0.0,
            candidate_size: 4096,
            candidate_method: PointSet::Grid,
            estimate_size: 65_536,
            estimate_method: PointSet::Grid,
            seed: 0,
            refit_every: 1,
            fit_restarts: 10,
            refit_restarts: 2,
            acquisition: AcquisitionOptions::default(),
        }
    }
}

/// Relative slack when comparing accumulated costs with the budget.
const COST_EPS: f64 = 1e-9;

impl ExperimentConfig {
    /// Settings of `problem` (costs, threshold) with the other fields defaulted.
    pub fn for_problem(problem: &Problem) -> Self {
        Self {
            cost_high: problem.cost_high,
            cost_low: problem.cost_low,
            delta: problem.delta,
            ..Self::default()
        }
    }

    pub fn initial_cost(&self) -> f64 {
        match self.mode {
            Mode::Bifi => self.n_init_high as f64 * self.cost_high + self.n_init_low as f64 * self.cost_low,
            _ => self.n_init_high as f64 * self.cost_high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_init_high < 2 {
            return bad(format!("n_init_high must be at least 2, got {}", self.n_init_high));
        }
        if self.mode != Mode::Bifi && self.n_init_low != 0 {
            return bad("n_init_low applies to bifi mode only".into());
        }
        if !(self.cost_high > 0.0 && self.cost_high.is_finite() && self.cost_low > 0.0 && self.cost_low.is_finite()) {
            return bad("costs must be positive and finite".into());
        }
        if !self.delta.is_finite() || !self.budget.is_finite() {
            return bad("delta and budget must be finite".into());
        }
        let init = self.initial_cost();
        if self.budget < init * (1.0 - COST_EPS) {
            return bad(format!("budget {} is below the initial cost {init}", self.budget));
        }
        if self.candidate_size == 0 || self.estimate_size == 0 {
            return bad("point-set sizes must be positive".into());
        }
        if self.refit_every == 0 {
            return bad("refit_every must be at least 1".into());
        }
        let a = &self.acquisition;
        if a.restarts == 0 || a.max_iter == 0 || !(a.rel_step > 0.0) {
            return bad("acquisition restarts, max_iter and rel_step must be positive".into());
        }
        Ok(())
    }
}

/// One model evaluation. Initial-design records have `iter = 0` and no
/// benefit; `pa_estimate` is present once a surrogate has been fitted on all
/// data up to and including this record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub iter: usize,
    pub fidelity: Fidelity,
    pub x: Vec<f64>,
    /// Raw model output.
    pub y: f64,
    pub cost_total: f64,
    pub pa_estimate: Option<f64>,
    pub benefit: Option<f64>,
    pub score: Option<f64>,
}

/// Hyperparameters of the last surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalModel {
    pub kernels: Vec<KernelParams>,
    pub n_high: usize,
    pub n_low: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub mode: Mode,
    pub seed: u64,
    pub records: Vec<Record>,
    pub final_model: Option<FinalModel>,
}

impl Trace {
    fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            records: Vec::new(),
            final_model: None,
        }
    }

    /// `(cumulative cost, estimate)` pairs in cost order.
    pub fn estimates(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.pa_estimate.map(|p| (r.cost_total, p)))
            .collect()
    }

    pub fn final_estimate(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.pa_estimate)
    }

    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cost_total)
    }

    /// Evaluations of `fidelity`, initial design included.
    pub fn count(&self, fidelity: Fidelity) -> usize {
        self.records.iter().filter(|r| r.fidelity == fidelity).count()
    }

    /// Adaptive picks of `fidelity`.
    pub fn adaptive_count(&self, fidelity: Fidelity) -> usize {
        self.records.iter().filter(|r| r.iter > 0 && r.fidelity == fidelity).count()
    }

    /// First cumulative cost at which the estimate is within `tol` relative
    /// error of `truth`.
    pub fn first_cost_within(&self, truth: f64, tol: f64) -> Option<f64> {
        self.estimates()
            .into_iter()
            .find(|(_, p)| (p - truth).abs() <= tol * truth.abs())
            .map(|(c, _)| c)
    }
}

/// Loop failure with everything recorded before it.
#[derive(Debug)]
pub struct LoopError {
    pub source: Error,
    pub partial: Trace,
}

impl fmt::Display for LoopError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} evaluations)", self.source, self.partial.records.len())
    }
}

impl std::error::Error for LoopError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Plug-in estimate `sum_q w_q 1[mean(x_q) < delta]`.
pub fn estimate_pa(surrogate: &dyn Surrogate, candidates: &CandidateSet, delta: f64) -> Result<f64> {
    crate::error::check_dim(surrogate.dim(), candidates.dim())?;
    let p: f64 = candidates
        .points()
        .iter()
        .zip(candidates.weights())
        .filter(|(x, _)| surrogate.mean(x, Fidelity::High) < delta)
        .map(|(_, w)| w)
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

/// Weighted point set over `p_x` restricted to the problem domain.
pub fn build_point_set(problem: &Problem, method: PointSet, size: usize, seed: u64, purpose: Purpose) -> Result<CandidateSet> {
    match method {
        PointSet::Grid => {
            let d = problem.dim() as f64;
            let per_dim = ((size as f64).powf(1.0 / d).round() as usize).max(1);
            problem.distribution.quadrature(&problem.domain, per_dim)?.to_candidates()
        }
        PointSet::Mc => {
            let mut rng = stream(seed, purpose);
            let mut pts = problem.distribution.sample(size, &mut rng)?;
            for p in &mut pts {
                problem.domain.project(p);
            }
            CandidateSet::uniform(pts)
        }
    }
}

enum Model {
    Single(GpPosterior),
    Bifi(BiGpPosterior),
    Known(KnownLowSurrogate),
}

impl Model {
    fn surrogate(&self) -> &dyn Surrogate {
        match self {
            Model::Single(m) => m,
            Model::Bifi(m) => m,
            Model::Known(m) => m,
        }
    }

    fn log_params(&self) -> Vec<f64> {
        match self {
            Model::Single(m) => m.kernel().to_log(),
            Model::Bifi(m) => [m.low_params().to_log(), m.diff_params().to_log()].concat(),
            Model::Known(m) => m.difference().kernel().to_log(),
        }
    }

    fn kernels(&self) -> Vec<KernelParams> {
        match self {
            Model::Single(m) => vec![m.kernel().clone()],
            Model::Bifi(m) => vec![m.low_params().clone(), m.diff_params().clone()],
            Model::Known(m) => vec![m.difference().kernel().clone()],
        }
    }
}

/// Training data in the internal sign convention.
struct Data {
    high_x: Vec<Vec<f64>>,
    high_g: Vec<f64>,
    low_x: Vec<Vec<f64>>,
    low_g: Vec<f64>,
}

struct Runner<'a> {
    problem: &'a Problem,
    config: &'a ExperimentConfig,
    candidates: CandidateSet,
    estimation: CandidateSet,
    known: Option<KnownModel>,
    data: Data,
    trace: Trace,
    model: Option<Model>,
    fits: u64,
}

impl<'a> Runner<'a> {
    fn new(problem: &'a Problem, config: &'a ExperimentConfig) -> Result<Self> {
        config.validate()?;
        problem.validate()?;
        if config.mode != Mode::Single && problem.low.is_none() {
            return Err(Error::InvalidArgument(format!("{:?} mode needs a low-fidelity model", config.mode)));
        }
        let candidates = build_point_set(problem, config.candidate_method, config.candidate_size, config.seed, Purpose::Candidates)?;
        let estimation = if config.estimate_method == config.candidate_method && config.estimate_size == config.candidate_size {
            candidates.clone()
        } else {
            build_point_set(problem, config.estimate_method, config.estimate_size, config.seed, Purpose::Mc)?
        };
        let known = match config.mode {
            Mode::KnownLofi => {
                let low = problem.low.clone().expect("checked above");
                let sign = problem.orientation.sign();
                Some(Arc::new(move |x: &[f64]| sign * low(x)) as KnownModel)
            }
            _ => None,
        };
        Ok(Self {
            problem,
            config,
            candidates,
            estimation,
            known,
            data: Data {
                high_x: vec![],
                high_g: vec![],
                low_x: vec![],
                low_g: vec![],
            },
            trace: Trace::new(config.mode, config.seed),
            model: None,
            fits: 0,
        })
    }

    fn threshold(&self) -> f64 {
        self.problem.orientation.sign() * self.config.delta
    }

    /// Cumulative cost recomputed from the counts.
    fn cost_total(&self) -> f64 {
        let low = if self.config.mode == Mode::Bifi { self.data.low_x.len() as f64 * self.config.cost_low } else { 0.0 };
        self.data.high_x.len() as f64 * self.config.cost_high + low
    }

    fn evaluate(&mut self, iter: usize, x: Vec<f64>, fidelity: Fidelity, sel: Option<&Selection>) -> Result<()> {
        let y = self.problem.evaluate(&x, fidelity)?;
        let g = self.problem.to_internal(y);
        match fidelity {
            Fidelity::High => {
                self.data.high_x.push(x.clone());
                self.data.high_g.push(g);
            }
            Fidelity::Low => {
                self.data.low_x.push(x.clone());
                self.data.low_g.push(g);
            }
        }
        let cost_total = self.cost_total();
        self.trace.records.push(Record {
            iter,
            fidelity,
            x,
            y,
            cost_total,
            pa_estimate: None,
            benefit: sel.map(|s| s.value.benefit),
            score: sel.map(|s| s.value.score),
        });
        Ok(())
    }

    fn fit_options(&self, warm: Option<Vec<f64>>) -> FitOptions {
        let restarts = if warm.is_some() { self.config.refit_restarts } else { self.config.fit_restarts };
        FitOptions {
            restarts,
            seed: self.config.seed.wrapping_add(self.fits),
            warm_start: warm,
            ..FitOptions::default()
        }
    }

    fn fit(&mut self, full: bool) -> Result<()> {
        let high = Dataset::new(self.data.high_x.clone(), self.data.high_g.clone())?;
        let frozen = match (&self.model, full) {
            (Some(prev), false) => Some(match prev {
                Model::Single(m) => m.refit_frozen(high.clone()).map(Model::Single),
                Model::Bifi(m) => m.refit_frozen(self.bi_data()?).map(Model::Bifi),
                Model::Known(m) => m
                    .difference()
                    .refit_frozen(crate::bifi::difference_data(&high, m.low_model())?)
                    .map(|d| Model::Known(KnownLowSurrogate::new(d, m.low_model().clone()))),
            }),
            _ => None,
        };
        let model = match frozen {
            Some(Ok(m)) => m,
            _ => {
                let opts = self.fit_options(self.model.as_ref().map(Model::log_params));
                self.fits += 1;
                let fitted = match self.config.mode {
                    Mode::Single => fit_gp(&high, &opts).map(Model::Single),
                    Mode::Bifi => fit_bifi_gp(&self.bi_data()?, &opts).map(Model::Bifi),
                    Mode::KnownLofi => {
                        fit_difference_gp(&high, self.known.clone().expect("known-low mode"), &opts).map(Model::Known)
                    }
                };
                match (fitted, &self.model) {
                    (Ok(m), _) => m,
                    (Err(e), Some(_)) => {
                        log::warn!("refit failed ({e}); keeping previous hyperparameters");
                        return self.fit_fallback(high);
                    }
                    (Err(e), None) => return Err(e),
                }
            }
        };
        self.model = Some(model);
        Ok(())
    }

    fn fit_fallback(&mut self, high: Dataset) -> Result<()> {
        let prev = self.model.take().expect("fallback needs a previous model");
        let m = match &prev {
            Model::Single(m) => Model::Single(m.refit_frozen(high)?),
            Model::Bifi(m) => Model::Bifi(m.refit_frozen(self.bi_data()?)?),
            Model::Known(m) => Model::Known(KnownLowSurrogate::new(
                m.difference().refit_frozen(crate::bifi::difference_data(&high, m.low_model())?)?,
                m.low_model().clone(),
            )),
        };
        self.model = Some(m);
        Ok(())
    }

    fn bi_data(&self) -> Result<BiDataset> {
        BiDataset::new(
            self.data.high_x.clone(),
            self.data.high_g.clone(),
            self.data.low_x.clone(),
            self.data.low_g.clone(),
        )
    }

    fn estimate(&mut self) -> Result<()> {
        let s = self.model.as_ref().expect("fitted").surrogate();
        let p = estimate_pa(s, &self.estimation, self.threshold())?;
        if let Some(r) = self.trace.records.last_mut() {
            r.pa_estimate = Some(p);
        }
        Ok(())
    }

    fn initial_design(&mut self) -> Result<()> {
        let mut rng = stream(self.config.seed, Purpose::Init);
        let mut box_ = self.problem.distribution.bounding_box();
        for j in 0..box_.dim() {
            box_.lower[j] = box_.lower[j].max(self.problem.domain.lower[j]);
            box_.upper[j] = box_.upper[j].min(self.problem.domain.upper[j]);
        }
        let high = latin_hypercube(self.config.n_init_high, &box_, &mut rng);
        let low = if self.config.mode == Mode::Bifi {
            latin_hypercube(self.config.n_init_low, &box_, &mut rng)
        } else {
            vec![]
        };
        for x in high {
            self.evaluate(0, x, Fidelity::High, None)?;
        }
        for x in low {
            self.evaluate(0, x, Fidelity::Low, None)?;
        }
        self.fit(true)?;
        self.estimate()
    }

    fn select(&mut self) -> Result<Selection> {
        let s = self.model.as_ref().expect("fitted").surrogate();
        let mut rng = stream(self.config.seed, Purpose::Optimizer);
        rng.set_word_pos(u128::from(self.trace.records.len() as u64) << 32);
        let delta = self.threshold();
        match self.config.mode {
            Mode::Bifi => select_next_bifi(
                s,
                &self.candidates,
                delta,
                &self.problem.domain,
                (self.config.cost_high, self.config.cost_low),
                &self.config.acquisition,
                &mut rng,
            ),
            _ => {
                let mut sel = select_next_single(s, &self.candidates, delta, &self.problem.domain, &self.config.acquisition, &mut rng)?;
                sel.value = crate::acquisition::AcquisitionValue::new(sel.value.benefit, self.config.cost_high);
                Ok(sel)
            }
        }
    }

    fn run(&mut self) -> Result<()> {
        self.initial_design()?;
        let budget = self.config.budget;
        let mut iter = 0;
        while self.cost_total() < budget * (1.0 - COST_EPS) {
            iter += 1;
            let sel = self.select()?;
            log::debug!(
                "iter {iter}: {} at {:?}, benefit {:.3e}",
                sel.fidelity,
                sel.location,
                sel.value.benefit
            );
            self.evaluate(iter, sel.location.clone(), sel.fidelity, Some(&sel))?;
            self.fit(iter % self.config.refit_every == 0)?;
            self.estimate()?;
        }
        let m = self.model.as_ref().expect("fitted");
        self.trace.final_model = Some(FinalModel {
            kernels: m.kernels(),
            n_high: self.data.high_x.len(),
            n_low: self.data.low_x.len(),
        });
        Ok(())
    }
}

fn run(problem: &Problem, config: &ExperimentConfig) -> Result<Trace, LoopError> {
    let mut runner = match Runner::new(problem, config) {
        Ok(r) => r,
        Err(source) => {
            return Err(LoopError {
                source,
                partial: Trace::new(config.mode, config.seed),
            })
        }
    };
    match runner.run() {
        Ok(()) => Ok(runner.trace),
        Err(source) => Err(LoopError {
            source,
            partial: runner.trace,
        }),
    }
}

/// High-fidelity-only loop (or the known-low variant when `config.mode` is
/// `KnownLofi`), stopping once the sample cost reaches the budget.
pub fn run_single_fidelity(problem: &Problem, config: &ExperimentConfig) -> Result<Trace, LoopError> {
    if config.mode == Mode::Bifi {
        return Err(LoopError {
            source: Error::InvalidArgument("run_single_fidelity called with bifi mode".into()),
            partial: Trace::new(config.mode, config.seed),
        });
    }
    run(problem, config)
}

/// Two-fidelity loop; each step picks the fidelity with the larger benefit
/// per cost and stops once the cumulative cost reaches the budget.
pub fn run_bi_fidelity(problem: &Problem, config: &ExperimentConfig) -> Result<Trace, LoopError> {
    if config.mode != Mode::Bifi {
        return Err(LoopError {
            source: Error::InvalidArgument("run_bi_fidelity needs bifi mode".into()),
            partial: Trace::new(config.mode, config.seed),
        });
    }
    run(problem, config)
}

/// Dispatch on `config.mode`.
pub fn run_experiment(problem: &Problem, config: &ExperimentConfig) -> Result<Trace, LoopError> {
    run(problem, config)
}

/// Percentile bands of replicated estimates on a common cost axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub cost: Vec<f64>,
    pub p15: Vec<f64>,
    pub median: Vec<f64>,
    pub p85: Vec<f64>,
    pub truth: f64,
    pub tolerance: f64,
    /// First grid cost at which both the 15th and 85th percentiles lie inside
    /// `truth * (1 +- tolerance)`.
    pub convergence_cost: Option<f64>,
    /// Same for the median alone.
    pub median_convergence_cost: Option<f64>,
}

/// Linear-interpolation percentile of sorted data (`q` in `[0, 1]`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Value of a step function given by `(cost, value)` knots at `c`: the last
/// knot at or below `c`.
fn previous_value(knots: &[(f64, f64)], c: f64) -> Option<f64> {
    let tol = 1e-9 * c.abs().max(1.0);
    knots.iter().take_while(|(k, _)| *k <= c + tol).last().map(|(_, v)| *v)
}

/// Align replicated traces on a cost grid (first shared estimate to the
/// largest final cost, step = smallest cost increment) and compute
/// percentile bands and convergence costs.
pub fn summarize_replications(traces: &[Trace], truth: f64, tolerance: f64) -> Result<ReplicationSummary> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("no traces to summarize".into()));
    }
    let series: Vec<Vec<(f64, f64)>> = traces.iter().map(Trace::estimates).collect();
    if series.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidArgument("a trace has no estimates".into()));
    }
    let start = series.iter().map(|s| s[0].0).fold(f64::NEG_INFINITY, f64::max);
    let end = series.iter().map(|s| s[s.len() - 1].0).fold(f64::NEG_INFINITY, f64::max);
    let mut step = f64::INFINITY;
    for t in traces {
        let mut prev = 0.0;
        for r in &t.records {
            let inc = r.cost_total - prev;
            if inc > 1e-12 {
                step = step.min(inc);
            }
            prev = r.cost_total;
        }
    }
    let n_steps = if end > start && step.is_finite() { ((end - start) / step + 1e-9).floor() as usize } else { 0 };

    let mut out = ReplicationSummary {
        cost: vec![],
        p15: vec![],
        median: vec![],
        p85: vec![],
        truth,
        tolerance,
        convergence_cost: None,
        median_convergence_cost: None,
    };
    let inside = |v: f64| (v - truth).abs() <= tolerance * truth.abs();
    for k in 0..=n_steps {
        let c = start + k as f64 * step;
        let mut vals: Vec<f64> = series
            .iter()
            .map(|s| previous_value(s, c).expect("grid starts at the latest first estimate"))
            .collect();
        vals.sort_by(f64::total_cmp);
        let (lo, mid, hi) = (percentile(&vals, 0.15), percentile(&vals, 0.5), percentile(&vals, 0.85));
        if out.convergence_cost.is_none() && inside(lo) && inside(hi) {
            out.convergence_cost = Some(c);
        }
        if out.median_convergence_cost.is_none() && inside(mid) {
            out.median_convergence_cost = Some(c);
        }
        out.cost.push(c);
        out.p15.push(lo);
        out.median.push(mid);
        out.p85.push(hi);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Jitter, Standardization};
    use crate::optim::Bounds;
    use crate::problems::{InputDistribution, Orientation};
    use rand::RngExt;

    fn trace_from(points: &[(f64, f64)]) -> Trace {
        Trace {
            mode: Mode::Single,
            seed: 0,
            records: points
                .iter()
                .enumerate()
                .map(|(i, &(c, p))| Record {
                    iter: i,
                    fidelity: Fidelity::High,
                    x: vec![0.0],
                    y: 0.0,
                    cost_total: c,
                    pa_estimate: Some(p),
                    benefit: None,
                    score: None,
                })
                .collect(),
            final_model: None,
        }
    }

    /// Surrogate whose mean is exactly `x[0]`.
    struct Plane {
        factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
        weights: nalgebra::DVector<f64>,
    }

    impl Plane {
        fn new() -> Self {
            Self {
                factor: nalgebra::Cholesky::new(nalgebra::DMatrix::identity(1, 1)).unwrap(),
                weights: nalgebra::DVector::zeros(1),
            }
        }
    }

    impl Surrogate for Plane {
        fn dim(&self) -> usize {
            2
        }
        fn supports(&self, f: Fidelity) -> bool {
            f == Fidelity::High
        }
        fn standardization(&self) -> Standardization {
            Standardization::identity()
        }
        fn known_offset(&self, x: &[f64]) -> f64 {
            x[0]
        }
        fn prior_cov_model(&self, _: &[f64], _: Fidelity, _: &[f64], _: Fidelity) -> f64 {
            1.0
        }
        fn train_cov_model(&self, _: &[f64], _: Fidelity) -> nalgebra::DVector<f64> {
            nalgebra::DVector::zeros(1)
        }
        fn factor(&self) -> &nalgebra::Cholesky<f64, nalgebra::Dyn> {
            &self.factor
        }
        fn weights(&self) -> &nalgebra::DVector<f64> {
            &self.weights
        }
    }

    #[test]
    fn estimate_extremes() {
        let c = CandidateSet::uniform((0..50).map(|i| vec![-2.0 + 0.08 * i as f64, 0.3]).collect()).unwrap();
        let safe = GpPosterior::new(
            Dataset::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![1.0, 1.0]).unwrap(),
            KernelParams::new(1.0, vec![1.0, 1.0]).unwrap(),
            Standardization::fit(&[1.0, 1.0]),
            Jitter::Auto,
        )
        .unwrap();
        assert_eq!(estimate_pa(&safe, &c, 0.0).unwrap(), 0.0);
        assert_eq!(estimate_pa(&safe, &c, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn half_space_estimate() {
        let problem = Problem {
            name: "plane".into(),
            high: Arc::new(|x| x[0]),
            low: None,
            cost_high: 1.0,
            cost_low: 1.0,
            delta: 0.0,
            orientation: Orientation::Below,
            distribution: InputDistribution::StandardNormal { dim: 2 },
            domain: Bounds::new(vec![-5.0; 2], vec![5.0; 2]),
        };
        let c = build_point_set(&problem, PointSet::Mc, 20_000, 1, Purpose::Candidates).unwrap();
        let p = estimate_pa(&Plane::new(), &c, 0.0).unwrap();
        assert!((p - 0.5).abs() < 3.0 * (0.25f64 / 20_000.0).sqrt(), "{p}");
        let g = build_point_set(&problem, PointSet::Grid, 100 * 100, 0, Purpose::Candidates).unwrap();
        assert!((estimate_pa(&Plane::new(), &g, 0.0).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn percentile_matches_sort_oracle() {
        let mut rng = stream(8, Purpose::Mc);
        let traces: Vec<Trace> = (0..200)
            .map(|_| {
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                trace_from(&[(1.0, a), (2.0, b)])
            })
            .collect();
        let s = summarize_replications(&traces, 0.5, 0.1).unwrap();
        assert_eq!(s.cost, vec![1.0, 2.0]);
        for (k, c) in [1.0, 2.0].iter().enumerate() {
            let mut v: Vec<f64> = traces.iter().map(|t| previous_value(&t.estimates(), *c).unwrap()).collect();
            v.sort_by(f64::total_cmp);
            // order statistics with linear interpolation at (n-1) q
            let oracle = |q: f64| {
                let h = 199.0 * q;
                let i = h.floor() as usize;
                v[i] + (h - i as f64) * (v[i + 1] - v[i])
            };
            assert!((s.p15[k] - oracle(0.15)).abs() < 1e-15);
            assert!((s.median[k] - oracle(0.5)).abs() < 1e-15);
            assert!((s.p85[k] - oracle(0.85)).abs() < 1e-15);
            assert!(s.p15[k] <= s.median[k] && s.median[k] <= s.p85[k]);
        }
    }

    #[test]
    fn identical_traces_collapse_bands() {
        let t = trace_from(&[(8.0, 0.1), (9.0, 0.2), (10.0, 0.21)]);
        let s = summarize_replications(&[t.clone(), t.clone(), t], 0.2, 0.1).unwrap();
        assert_eq!(s.p15, s.median);
        assert_eq!(s.p85, s.median);
        assert_eq!(s.convergence_cost, Some(9.0));
    }

    #[test]
    fn symmetric_traces_center_on_truth() {
        let traces = vec![
            trace_from(&[(1.0, 0.3), (2.0, 0.45)]),
            trace_from(&[(1.0, 0.5), (2.0, 0.5)]),
            trace_from(&[(1.0, 0.7), (2.0, 0.55)]),
        ];
        let s = summarize_replications(&traces, 0.5, 0.05).unwrap();
        assert!(s.median.iter().all(|m| (m - 0.5).abs() < 1e-15));
        assert_eq!(s.median_convergence_cost, Some(1.0));
        assert!(summarize_replications(&[], 0.5, 0.1).is_err());
    }

    #[test]
    fn step_interpolation_holds_previous_value() {
        let a = trace_from(&[(1.0, 0.1), (1.2, 0.2), (2.2, 0.3)]);
        let s = summarize_replications(&[a], 0.3, 0.01).unwrap();
        assert_eq!(s.cost.len(), 7);
        assert_eq!(s.median[1], 0.2);
        assert_eq!(s.median[5], 0.2);
        assert_eq!(s.median[6], 0.3);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.n_init_high = 1;
        assert!(c.validate().is_err());
        c = ExperimentConfig { budget: 7.0, ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
        c = ExperimentConfig { budget: 8.0, ..ExperimentConfig::default() };
        assert!(c.validate().is_ok());
        c = ExperimentConfig { n_init_low: 3, ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
    }
}
