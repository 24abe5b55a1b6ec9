//! Variance-reduction acquisition.
//!
//! `U` integrates the standard deviation of the failure indicator
//! `1[f_h(x) < delta]` over the input distribution, discretized on a
//! [`CandidateSet`]. A hypothetical sample at `x~` of fidelity `i`, valued at
//! the current posterior mean, leaves every mean unchanged and shrinks each
//! variance by `cov(f_h(x), f_i(x~))^2 / var(f_i(x~))`; its benefit is the
//! resulting drop in `U`. The next sample maximizes benefit (per unit cost
//! when two fidelities compete).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::optim::{forward_gradient, minimize, Bounds, LbfgsOptions};
use crate::surrogate::{check_point, Fidelity, Surrogate};

/// Guard on `var(f_i(x~))`, relative to the prior variance at `x~`.
pub const RESOLVED_GUARD: f64 = 1e-10;

/// Candidates whose indicator standard deviation is below this are dropped
/// from benefit evaluations; the neglected benefit is at most this value.
const PRUNE_BELOW: f64 = 1e-10;

/// Standard normal CDF.
pub fn normal_cdf(r: f64) -> f64 {
    0.5 * libm::erfc(-r / std::f64::consts::SQRT_2)
}

/// Variance of the failure indicator under `N(mean, std^2)`: `Phi(r) (1 - Phi(r))`
/// with `r = (mean - delta) / std`.
pub fn indicator_variance(mean: f64, std: f64, delta: f64) -> Result<f64> {
    if !(std >= 0.0) {
        return Err(Error::InvalidArgument(format!("std must be nonnegative, got {std}")));
    }
    if std == 0.0 {
        if mean == delta {
            return Err(Error::DegeneratePoint);
        }
        return Ok(0.0);
    }
    let r = (mean - delta) / std;
    Ok(normal_cdf(r) * normal_cdf(-r))
}

/// Indicator standard deviation with zero-variance points contributing 0.
#[inline]
fn indicator_std(mean: f64, std: f64, delta: f64) -> f64 {
    if std <= 0.0 {
        return 0.0;
    }
    let t = normal_cdf(-((mean - delta) / std).abs());
    (t * (1.0 - t)).sqrt()
}

/// Weighted points discretizing integrals against the input distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl CandidateSet {
    /// Equal weights `1 / N`.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::weighted(points, vec![1.0; n])
    }

    /// Nonnegative weights, normalized to sum to one.
    pub fn weighted(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("candidate set must be nonempty".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let d = points[0].len();
        for p in &points {
            check_dim(d, p.len())?;
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Fictitious observation valued at the current posterior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct HypotheticalSample {
    location: Vec<f64>,
    fidelity: Fidelity,
    value: f64,
}

impl HypotheticalSample {
    pub fn at(surrogate: &dyn Surrogate, location: Vec<f64>, fidelity: Fidelity) -> Result<Self> {
        check_point(surrogate, &location, fidelity)?;
        let value = surrogate.mean(&location, fidelity);
        Ok(Self { location, fidelity, value })
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    pub fn fidelity(&self) -> Fidelity {
        self.fidelity
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// Benefit of one candidate sample and its cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionValue {
    pub benefit: f64,
    pub cost: f64,
    pub score: f64,
}

impl AcquisitionValue {
    pub fn new(benefit: f64, cost: f64) -> Self {
        Self {
            benefit,
            cost,
            score: benefit / cost,
        }
    }
}

/// Posterior variance of `f_fidelity(x~)` in model units, or an error when it
/// is below the guard.
fn guarded_variance(s: &dyn Surrogate, w: &DVector<f64>, x: &[f64], fidelity: Fidelity) -> Result<f64> {
    let prior = s.prior_cov_model(x, fidelity, x, fidelity);
    let var = prior - w.norm_squared();
    let guard = RESOLVED_GUARD * prior;
    if var <= guard {
        let sc = s.standardization().scale.powi(2);
        return Err(Error::ResolvedLocation {
            variance: var.max(0.0) * sc,
            guard: guard * sc,
        });
    }
    Ok(var)
}

/// High-fidelity mean and variance at `query` after adding `sample`.
pub fn hypothetical_update(surrogate: &dyn Surrogate, sample: &HypotheticalSample, query: &[f64]) -> Result<(f64, f64)> {
    check_point(surrogate, query, Fidelity::High)?;
    check_point(surrogate, &sample.location, sample.fidelity)?;
    let wt = surrogate.whitened(&sample.location, sample.fidelity);
    let var_t = guarded_variance(surrogate, &wt, &sample.location, sample.fidelity)?;
    let (mean, _) = surrogate.moments(query, Fidelity::High);
    let wq = surrogate.whitened(query, Fidelity::High);
    let var_q = surrogate.prior_cov_model(query, Fidelity::High, query, Fidelity::High) - wq.norm_squared();
    let c = surrogate.prior_cov_model(query, Fidelity::High, &sample.location, sample.fidelity) - wq.dot(&wt);
    let sc = surrogate.standardization().scale.powi(2);
    Ok((mean, (var_q - c * c / var_t).max(0.0) * sc))
}

/// `sum_q w_q sqrt(var(1[f_h(x_q) < delta]))`, optionally after a hypothetical sample.
///
/// This is the direct route, one posterior evaluation per candidate; the
/// optimizer uses [`AcquisitionContext`].
pub fn uncertainty(
    surrogate: &dyn Surrogate,
    candidates: &CandidateSet,
    delta: f64,
    sample: Option<&HypotheticalSample>,
) -> Result<f64> {
    check_dim(surrogate.dim(), candidates.dim())?;
    let mut u = 0.0;
    for (x, w) in candidates.points.iter().zip(&candidates.weights) {
        let (mean, var) = match sample {
            Some(z) => hypothetical_update(surrogate, z, x)?,
            None => surrogate.moments(x, Fidelity::High),
        };
        u += w * indicator_std(mean, var.sqrt(), delta);
    }
    Ok(u)
}

/// Benefit `U(D) - U(D, z~)` of a hypothetical `fidelity` sample at `location`,
/// with unit cost.
pub fn benefit(
    surrogate: &dyn Surrogate,
    candidates: &CandidateSet,
    delta: f64,
    location: &[f64],
    fidelity: Fidelity,
) -> Result<AcquisitionValue> {
    let ctx = AcquisitionContext::new(surrogate, candidates, delta)?;
    Ok(AcquisitionValue::new(ctx.benefit_at(location, fidelity)?, 1.0))
}

/// Candidate-side quantities cached for repeated benefit evaluations.
pub struct AcquisitionContext<'a> {
    surrogate: &'a dyn Surrogate,
    delta: f64,
    scale: f64,
    points: Vec<&'a [f64]>,
    weights: Vec<f64>,
    means: Vec<f64>,
    /// Posterior variances, model units.
    vars: Vec<f64>,
    /// `L^{-1} k(train, x_q)` as columns.
    whitened: DMatrix<f64>,
    /// Current indicator standard deviations.
    spread: Vec<f64>,
    u_total: f64,
    /// Largest posterior standard deviation over all candidates, data units.
    most_uncertain: Option<(usize, f64)>,
    all_points: &'a [Vec<f64>],
}

impl<'a> AcquisitionContext<'a> {
    pub fn new(surrogate: &'a dyn Surrogate, candidates: &'a CandidateSet, delta: f64) -> Result<Self> {
        check_dim(surrogate.dim(), candidates.dim())?;
        let n = surrogate.n_train();
        let st = surrogate.standardization();
        let nq = candidates.len();

        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut vars = Vec::new();
        let mut spread = Vec::new();
        let mut cols: Vec<DVector<f64>> = Vec::new();
        let mut u_total = 0.0;
        let mut most_uncertain: Option<(usize, f64)> = None;

        const CHUNK: usize = 512;
        let l = surrogate.factor().l_dirty();
        for start in (0..nq).step_by(CHUNK) {
            let end = (start + CHUNK).min(nq);
            let mut cross = DMatrix::zeros(n, end - start);
            for (c, q) in (start..end).enumerate() {
                cross.set_column(c, &surrogate.train_cov_model(&candidates.points[q], Fidelity::High));
            }
            let means_model = cross.tr_mul(surrogate.weights());
            let w = l.solve_lower_triangular(&cross).expect("cholesky factor has a positive diagonal");
            for (c, q) in (start..end).enumerate() {
                let x = candidates.points[q].as_slice();
                let col = w.column(c);
                let var = (surrogate.prior_cov_model(x, Fidelity::High, x, Fidelity::High) - col.norm_squared()).max(0.0);
                let mean = surrogate.known_offset(x) + st.to_data(means_model[c]);
                let sd = var.sqrt() * st.scale;
                if most_uncertain.is_none_or(|(_, s)| sd > s) {
                    most_uncertain = Some((q, sd));
                }
                let s = indicator_std(mean, sd, delta);
                u_total += candidates.weights[q] * s;
                if s >= PRUNE_BELOW {
                    points.push(x);
                    weights.push(candidates.weights[q]);
                    means.push(mean);
                    vars.push(var);
                    spread.push(s);
                    cols.push(col.into_owned());
                }
            }
        }
        let whitened = if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        };
        Ok(Self {
            surrogate,
            delta,
            scale: st.scale,
            points,
            weights,
            means,
            vars,
            whitened,
            spread,
            u_total,
            most_uncertain,
            all_points: candidates.points(),
        })
    }

    /// Drop the candidates with the smallest contributions `w_q s_q` while
    /// their sum stays below `fraction * U(D)`. Each benefit then changes by
    /// at most that sum.
    pub fn pruned(mut self, fraction: f64) -> Self {
        if !(fraction > 0.0) || self.points.is_empty() {
            return self;
        }
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| (self.weights[a] * self.spread[a]).total_cmp(&(self.weights[b] * self.spread[b])));
        let budget = fraction * self.u_total;
        let mut dropped = 0.0;
        let mut cut = 0;
        for &q in &order {
            dropped += self.weights[q] * self.spread[q];
            if dropped > budget {
                break;
            }
            cut += 1;
        }
        let mut keep: Vec<usize> = order[cut..].to_vec();
        keep.sort_unstable();
        self.points = keep.iter().map(|&q| self.points[q]).collect();
        self.weights = keep.iter().map(|&q| self.weights[q]).collect();
        self.means = keep.iter().map(|&q| self.means[q]).collect();
        self.vars = keep.iter().map(|&q| self.vars[q]).collect();
        self.spread = keep.iter().map(|&q| self.spread[q]).collect();
        self.whitened = self.whitened.select_columns(keep.iter());
        self
    }

    /// `U(D)` over the whole candidate set.
    pub fn uncertainty(&self) -> f64 {
        self.u_total
    }

    /// Number of candidates carrying non-negligible indicator uncertainty.
    pub fn active_len(&self) -> usize {
        self.points.len()
    }

    /// Benefit of a hypothetical `fidelity` sample at `x`, clamped at zero.
    pub fn benefit_at(&self, x: &[f64], fidelity: Fidelity) -> Result<f64> {
        check_point(self.surrogate, x, fidelity)?;
        let wt = self.surrogate.whitened(x, fidelity);
        let var_t = guarded_variance(self.surrogate, &wt, x, fidelity)?;
        if self.points.is_empty() {
            return Ok(0.0);
        }
        let proj = self.whitened.tr_mul(&wt);
        let mut drop = 0.0;
        for q in 0..self.points.len() {
            let c = self.surrogate.prior_cov_model(self.points[q], Fidelity::High, x, fidelity) - proj[q];
            let v = (self.vars[q] - c * c / var_t).max(0.0);
            let s = indicator_std(self.means[q], v.sqrt() * self.scale, self.delta);
            drop += self.weights[q] * (self.spread[q] - s);
        }
        Ok(drop.max(0.0))
    }

    fn benefit_or_zero(&self, x: &[f64], fidelity: Fidelity) -> f64 {
        self.benefit_at(x, fidelity).unwrap_or(0.0)
    }

    /// Multi-start maximization of the benefit over `domain`.
    ///
    /// Returns `None` when every start has zero benefit.
    pub fn maximize<R: Rng + ?Sized>(
        &self,
        fidelity: Fidelity,
        domain: &Bounds,
        opts: &AcquisitionOptions,
        rng: &mut R,
    ) -> Option<(Vec<f64>, f64)> {
        let mut best: Option<(Vec<f64>, f64)> = None;
        let consider = |x: Vec<f64>, b: f64, best: &mut Option<(Vec<f64>, f64)>| {
            if b > 0.0 && best.as_ref().is_none_or(|(_, bb)| b > *bb) {
                *best = Some((x, b));
            }
        };

        // screen the most uncertain candidates, keep the best as seeds
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| {
            (self.weights[b] * self.spread[b])
                .total_cmp(&(self.weights[a] * self.spread[a]))
                .then(a.cmp(&b))
        });
        let mut screened: Vec<(Vec<f64>, f64)> = order
            .iter()
            .take(opts.screen)
            .map(|&q| {
                let mut x = self.points[q].to_vec();
                domain.project(&mut x);
                let b = self.benefit_or_zero(&x, fidelity);
                (x, b)
            })
            .collect();
        screened.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut starts: Vec<Vec<f64>> = Vec::new();
        for (x, b) in screened {
            if starts.len() >= opts.n_seed.min(opts.restarts) || b <= 0.0 {
                break;
            }
            consider(x.clone(), b, &mut best);
            starts.push(x);
        }
        while starts.len() < opts.restarts {
            let u: Vec<f64> = (0..domain.dim()).map(|_| rng.random::<f64>()).collect();
            starts.push(domain.from_unit(&u));
        }

        let steps: Vec<f64> = (0..domain.dim()).map(|i| opts.rel_step * domain.width(i)).collect();
        let lopts = LbfgsOptions {
            max_iter: opts.max_iter,
            gtol: 0.0,
            ftol: 1e-8,
            ..LbfgsOptions::default()
        };
        for s in starts {
            let objective = |x: &[f64]| {
                let mut f = |p: &[f64]| -self.benefit_or_zero(p, fidelity);
                let v = f(x);
                let g = forward_gradient(&mut f, x, v, &steps, domain);
                (v, g)
            };
            let m = minimize(objective, &s, domain, &lopts);
            consider(m.x, -m.f, &mut best);
        }
        best
    }

    /// Candidate with the largest posterior standard deviation.
    pub fn most_uncertain_candidate(&self) -> Option<Vec<f64>> {
        self.most_uncertain.map(|(q, _)| self.all_points[q].clone())
    }
}

/// Settings of the benefit maximization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionOptions {
    /// Local optimizations per fidelity, seeded and random together.
    pub restarts: usize,
    /// Starts taken from the best screened candidates.
    pub n_seed: usize,
    /// Candidates screened for seeds, most uncertain first.
    pub screen: usize,
    /// Iteration cap of each local run.
    pub max_iter: usize,
    /// Finite-difference step as a fraction of the domain width.
    pub rel_step: f64,
    /// Fraction of `U(D)` that candidates may be dropped for (see
    /// [`AcquisitionContext::pruned`]).
    pub prune_fraction: f64,
}

impl Default for AcquisitionOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            n_seed: 10,
            screen: 128,
            max_iter: 50,
            rel_step: 1e-7,
            prune_fraction: 1e-3,
        }
    }
}

/// Chosen location and the benefit it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub location: Vec<f64>,
    pub fidelity: Fidelity,
    pub value: AcquisitionValue,
    /// Best value of the fidelity that lost, in bi-fidelity selection.
    pub runner_up: Option<AcquisitionValue>,
    /// True when every start had zero benefit and the most uncertain
    /// candidate was returned instead.
    pub fallback: bool,
}

fn fallback_selection(ctx: &AcquisitionContext<'_>, domain: &Bounds, cost: f64) -> Result<Selection> {
    let mut x = ctx
        .most_uncertain_candidate()
        .ok_or_else(|| Error::InvalidArgument("empty candidate set".into()))?;
    domain.project(&mut x);
    log::warn!("benefit is zero everywhere; exploring the most uncertain candidate {x:?}");
    Ok(Selection {
        location: x,
        fidelity: Fidelity::High,
        value: AcquisitionValue::new(0.0, cost),
        runner_up: None,
        fallback: true,
    })
}

/// Next high-fidelity sample: argmax of the benefit over `domain`.
pub fn select_next_single<R: Rng + ?Sized>(
    surrogate: &dyn Surrogate,
    candidates: &CandidateSet,
    delta: f64,
    domain: &Bounds,
    opts: &AcquisitionOptions,
    rng: &mut R,
) -> Result<Selection> {
    check_dim(surrogate.dim(), domain.dim())?;
    let ctx = AcquisitionContext::new(surrogate, candidates, delta)?.pruned(opts.prune_fraction);
    log::trace!("{} of {} candidates active", ctx.active_len(), candidates.len());
    match ctx.maximize(Fidelity::High, domain, opts, rng) {
        Some((x, b)) => Ok(Selection {
            location: x,
            fidelity: Fidelity::High,
            value: AcquisitionValue::new(b, 1.0),
            runner_up: None,
            fallback: false,
        }),
        None => fallback_selection(&ctx, domain, 1.0),
    }
}

/// Next sample and fidelity: per-fidelity argmax of the benefit, then the
/// larger benefit per cost. Equal scores (within 1e-12) go to high fidelity.
pub fn select_next_bifi<R: Rng + ?Sized>(
    surrogate: &dyn Surrogate,
    candidates: &CandidateSet,
    delta: f64,
    domain: &Bounds,
    costs: (f64, f64),
    opts: &AcquisitionOptions,
    rng: &mut R,
) -> Result<Selection> {
    let (c_high, c_low) = costs;
    if !(c_high > 0.0 && c_low > 0.0) {
        return Err(Error::InvalidArgument(format!("costs must be positive, got {costs:?}")));
    }
    check_dim(surrogate.dim(), domain.dim())?;
    let ctx = AcquisitionContext::new(surrogate, candidates, delta)?.pruned(opts.prune_fraction);
    let high = ctx.maximize(Fidelity::High, domain, opts, rng);
    let low = ctx.maximize(Fidelity::Low, domain, opts, rng);
    let value = |r: &Option<(Vec<f64>, f64)>, c: f64| AcquisitionValue::new(r.as_ref().map_or(0.0, |v| v.1), c);
    let (vh, vl) = (value(&high, c_high), value(&low, c_low));
    if high.is_none() && low.is_none() {
        return fallback_selection(&ctx, domain, c_high);
    }
    let pick = choose_fidelity(vh.score, vl.score);
    let (x, v, other) = match pick {
        Fidelity::High => (high.map(|h| h.0), vh, vl),
        Fidelity::Low => (low.map(|l| l.0), vl, vh),
    };
    Ok(Selection {
        location: x.expect("winning fidelity has a positive benefit"),
        fidelity: pick,
        value: v,
        runner_up: Some(other),
        fallback: false,
    })
}

/// Stage-two comparison of benefit per cost.
pub fn choose_fidelity(score_high: f64, score_low: f64) -> Fidelity {
    if score_low > score_high + 1e-12 {
        Fidelity::Low
    } else {
        Fidelity::High
    }
}

/// `KL(N(mu2, s2^2) || N(mu1, s1^2))`:
/// `ln(s1/s2) + s2^2/(2 s1^2) + (mu2-mu1)^2/(2 s1^2) - 1/2`.
pub fn gaussian_kl(mu1: f64, s1: f64, mu2: f64, s2: f64) -> Result<f64> {
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::InvalidArgument(format!("standard deviations must be positive, got {s1}, {s2}")));
    }
    let r = s2 / s1;
    Ok(-r.ln() + 0.5 * r * r + 0.5 * ((mu2 - mu1) / s1).powi(2) - 0.5)
}

/// [`gaussian_kl`] without the mean-shift term.
pub fn gaussian_kl_mean_free(s1: f64, s2: f64) -> Result<f64> {
    gaussian_kl(0.0, s1, 0.0, s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{Dataset, GpPosterior, Jitter, KernelParams, Standardization};
    use crate::rng::{stream, Purpose};

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_eq!(normal_cdf(40.0), 1.0);
        // high-precision quadrature of the density from -inf to 1
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-15);
    }

    #[test]
    fn indicator_variance_cases() {
        assert_eq!(indicator_variance(2.0, 1.0, 2.0).unwrap(), 0.25);
        let v = indicator_variance(3.0, 1.0, 0.0).unwrap();
        let p = normal_cdf(3.0);
        assert!((v - (1.0 - p) * p).abs() < 1e-12 * v);
        assert!((v - 0.001_348_076).abs() < 1e-8);
        assert_eq!(indicator_variance(1.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(indicator_variance(0.0, 0.0, 0.0), Err(Error::DegeneratePoint)));
        assert!(indicator_variance(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn candidate_weights_normalized() {
        let c = CandidateSet::weighted(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 2.0, 1.0]).unwrap();
        assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(c.weights()[1], 0.5);
        assert!(CandidateSet::uniform(vec![]).is_err());
        assert!(CandidateSet::weighted(vec![vec![0.0]], vec![-1.0]).is_err());
    }

    fn toy_gp() -> GpPosterior {
        let data = Dataset::new(vec![vec![-1.0], vec![0.2], vec![1.5]], vec![0.8, -0.3, 1.1]).unwrap();
        GpPosterior::new(data, KernelParams::new(1.0, vec![0.7]).unwrap(), Standardization::identity(), Jitter::Fixed(0.0))
            .unwrap()
    }

    #[test]
    fn hypothetical_update_at_itself_zeroes_variance() {
        let gp = toy_gp();
        let z = HypotheticalSample::at(&gp, vec![0.8], Fidelity::High).unwrap();
        let (m, v) = hypothetical_update(&gp, &z, &[0.8]).unwrap();
        assert!(v.abs() < 1e-12);
        assert_eq!(m, gp.mean(&[0.8], Fidelity::High));
        assert_eq!(z.value(), m);
    }

    #[test]
    fn hypothetical_update_far_away_is_a_no_op() {
        let gp = toy_gp();
        let z = HypotheticalSample::at(&gp, vec![50.0], Fidelity::High).unwrap();
        let q = [0.8];
        let (m, v) = hypothetical_update(&gp, &z, &q).unwrap();
        assert_eq!(m, gp.mean(&q, Fidelity::High));
        assert!((v - gp.variance(&q, Fidelity::High)).abs() < 1e-15);
    }

    #[test]
    fn hypothetical_at_training_point_is_resolved() {
        let gp = toy_gp();
        let z = HypotheticalSample::at(&gp, vec![0.2], Fidelity::High).unwrap();
        assert!(matches!(hypothetical_update(&gp, &z, &[0.0]), Err(Error::ResolvedLocation { .. })));
    }

    #[test]
    fn u_vanishes_when_indicator_is_certain() {
        // mean ~ 10 everywhere near the data with threshold far below
        let data = Dataset::new(vec![vec![0.0], vec![0.5], vec![1.0]], vec![10.0, 10.0, 10.0]).unwrap();
        let gp = GpPosterior::new(data, KernelParams::new(0.01, vec![1.0]).unwrap(), Standardization::identity(), Jitter::Auto)
            .unwrap();
        let c = CandidateSet::uniform(vec![vec![0.25], vec![0.75]]).unwrap();
        assert!(uncertainty(&gp, &c, 0.0, None).unwrap() < 1e-12);
        let b = benefit(&gp, &c, 0.0, &[0.3], Fidelity::High).unwrap();
        assert!(b.benefit < 1e-12);
    }

    #[test]
    fn u_is_one_half_on_the_threshold() {
        // prior only: mean 0, std 1 at every candidate
        let data = Dataset::new(vec![vec![100.0]], vec![0.0]).unwrap();
        let gp = GpPosterior::new(data, KernelParams::new(1.0, vec![1.0]).unwrap(), Standardization::identity(), Jitter::Auto)
            .unwrap();
        let c = CandidateSet::uniform(vec![vec![0.0], vec![1.0], vec![-3.0]]).unwrap();
        assert!((uncertainty(&gp, &c, 0.0, None).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn benefit_at_existing_sample_is_zero() {
        let gp = toy_gp();
        let c = CandidateSet::uniform((0..20).map(|i| vec![-2.0 + 0.2 * i as f64]).collect()).unwrap();
        let ctx = AcquisitionContext::new(&gp, &c, 0.5).unwrap();
        assert_eq!(ctx.benefit_at(&[0.2], Fidelity::High).unwrap_or(0.0), 0.0);
    }

    #[test]
    fn fast_benefit_matches_direct_route() {
        let gp = toy_gp();
        let c = CandidateSet::uniform((0..40).map(|i| vec![-2.5 + 0.13 * i as f64]).collect()).unwrap();
        let ctx = AcquisitionContext::new(&gp, &c, 0.4).unwrap();
        let u0 = uncertainty(&gp, &c, 0.4, None).unwrap();
        assert!((ctx.uncertainty() - u0).abs() < 1e-12);
        for x in [-1.7, -0.4, 0.6, 1.0, 2.2] {
            let z = HypotheticalSample::at(&gp, vec![x], Fidelity::High).unwrap();
            let u1 = uncertainty(&gp, &c, 0.4, Some(&z)).unwrap();
            let b = ctx.benefit_at(&[x], Fidelity::High).unwrap();
            assert!((b - (u0 - u1)).abs() < 1e-10, "{b} vs {}", u0 - u1);
            assert!(u1 <= u0 + 1e-10);
        }
    }

    #[test]
    fn tie_goes_to_high_fidelity() {
        assert_eq!(choose_fidelity(1.0, 1.0), Fidelity::High);
        assert_eq!(choose_fidelity(1.0, 1.0 + 1e-13), Fidelity::High);
        assert_eq!(choose_fidelity(1.0 / 1.0, 0.5 / 0.2), Fidelity::Low);
        assert_eq!(choose_fidelity(1.0, 0.9), Fidelity::High);
    }

    #[test]
    fn kl_reference_values() {
        assert_eq!(gaussian_kl(0.3, 1.2, 0.3, 1.2).unwrap(), 0.0);
        let v = gaussian_kl(0.0, 1.0, 0.0, 0.5).unwrap();
        assert!((v - (2f64.ln() + 0.125 - 0.5)).abs() < 1e-15);
        assert!((v - 0.318_147_180_559_945_3).abs() < 1e-12);
        assert!(gaussian_kl(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn mean_free_kl_decreases_in_s2_below_s1() {
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let s2 = i as f64 / 100.0;
            let v = gaussian_kl_mean_free(1.0, s2).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn optimizer_beats_coarse_grid() {
        let gp = toy_gp();
        let c = CandidateSet::uniform((0..200).map(|i| vec![-3.0 + 0.03 * i as f64]).collect()).unwrap();
        let domain = Bounds::new(vec![-3.0], vec![3.0]);
        let ctx = AcquisitionContext::new(&gp, &c, 0.4).unwrap();
        let grid_best = (0..=600)
            .map(|i| ctx.benefit_at(&[-3.0 + 0.01 * i as f64], Fidelity::High).unwrap_or(0.0))
            .fold(0.0, f64::max);
        // no relative pruning, so both sides see the same candidates
        let opts = AcquisitionOptions { prune_fraction: 0.0, ..Default::default() };
        let sel = select_next_single(&gp, &c, 0.4, &domain, &opts, &mut stream(1, Purpose::Optimizer)).unwrap();
        assert!(sel.value.benefit >= grid_best - 1e-6, "{} < {grid_best}", sel.value.benefit);
        assert!(domain.contains(&sel.location));
    }
}
