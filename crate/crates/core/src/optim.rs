//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! A projected L-BFGS: the two-loop recursion runs on the free variables,
//! variables pinned at a bound by the gradient are frozen for the step, and
//! the line search backtracks along the projected path.

use std::collections::VecDeque;

/// Axis-aligned box `lower[i] <= x[i] <= upper[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        debug_assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u));
        Self { lower, upper }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((xi, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*l, *u);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((xi, l), u)| *xi >= *l && *xi <= *u)
    }

    /// Map a point of the unit cube onto the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, ui)| self.lower[i] + ui * self.width(i))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub memory: usize,
    /// Stop when the projected gradient's infinity norm drops below this.
    pub gtol: f64,
    /// Stop when the relative decrease of f over one iteration drops below this.
    pub ftol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            memory: 8,
            gtol: 1e-8,
            ftol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Minimize `fg` (returning value and gradient) over `bounds` from `x0`.
///
/// Non-finite objective values are treated as infeasible: the line search
/// backtracks past them. If the start itself is non-finite the start is
/// returned with `f = +inf`.
pub fn minimize<F>(mut fg: F, x0: &[f64], bounds: &Bounds, opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let (mut f, mut g) = fg(&x);
    let mut evaluations = 1;
    if !f.is_finite() {
        return Minimum {
            x,
            f: f64::INFINITY,
            iterations: 0,
            evaluations,
        };
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let scale: f64 = (0..n).map(|i| bounds.width(i)).fold(0.0, f64::max).max(1e-300);

    while iterations < opts.max_iter {
        iterations += 1;

        let free: Vec<bool> = (0..n)
            .map(|i| {
                let at_low = x[i] <= bounds.lower[i] && g[i] > 0.0;
                let at_high = x[i] >= bounds.upper[i] && g[i] < 0.0;
                !(at_low || at_high) && bounds.width(i) > 0.0
            })
            .collect();
        let pg_norm = (0..n)
            .filter(|&i| free[i])
            .map(|i| g[i].abs())
            .fold(0.0, f64::max);
        if pg_norm <= opts.gtol {
            break;
        }

        let mut d = two_loop(&g, &history, &free);
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            history.clear();
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        }

        // first step of a fresh memory: cap the move at a tenth of the box
        let mut alpha = 1.0;
        if history.is_empty() {
            let dn = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if dn > 0.0 {
                alpha = (0.1 * scale / dn).min(1.0);
            }
        }

        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            bounds.project(&mut trial);
            let moved: f64 = trial.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if moved == 0.0 {
                break;
            }
            let (ft, gt) = fg(&trial);
            evaluations += 1;
            let decrease: f64 = trial
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((t, xi), gi)| (t - xi) * gi)
                .sum();
            if ft.is_finite() && ft <= f + 1e-4 * decrease.min(0.0) && gt.iter().all(|v| v.is_finite()) {
                accepted = Some((trial, ft, gt));
                break;
            }
            alpha *= 0.5;
        }

        let Some((xn, fnew, gn)) = accepted else {
            break;
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-12 * yy.sqrt() * s.iter().map(|v| v * v).sum::<f64>().sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let rel = (f - fnew).abs() / f.abs().max(fnew.abs()).max(1e-300);
        x = xn;
        g = gn;
        let done = rel <= opts.ftol;
        f = fnew;
        if done {
            break;
        }
    }

    Minimum {
        x,
        f,
        iterations,
        evaluations,
    }
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, free: &[bool]) -> Vec<f64> {
    let n = g.len();
    let mask = |v: &[f64]| -> Vec<f64> { (0..n).map(|i| if free[i] { v[i] } else { 0.0 }).collect() };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };

    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let s = mask(s);
        let y = mask(y);
        let a = rho * dot(&s, &q);
        for i in 0..n {
            q[i] -= a * y[i];
        }
        alphas.push((a, s, y));
    }
    if let Some((s, y, _)) = history.back() {
        let (s, y) = (mask(s), mask(y));
        let yy = dot(&y, &y);
        let sy = dot(&s, &y);
        if yy > 0.0 && sy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for ((a, s, y), (_, _, rho)) in alphas.into_iter().rev().zip(history.iter()) {
        let b = rho * dot(&y, &q);
        for i in 0..n {
            q[i] += s[i] * (a - b);
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Central-difference gradient with per-coordinate step `h[i]`, one-sided at a bound.
pub fn central_gradient<F>(f: &mut F, x: &[f64], h: &[f64], bounds: &Bounds) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let hi = h[i];
        let up = (x[i] + hi).min(bounds.upper[i]);
        let lo = (x[i] - hi).max(bounds.lower[i]);
        if up <= lo {
            continue;
        }
        p[i] = up;
        let fu = f(&p);
        p[i] = lo;
        let fl = f(&p);
        p[i] = x[i];
        g[i] = (fu - fl) / (up - lo);
    }
    g
}

/// One-sided difference gradient reusing `fx = f(x)`; steps backwards at an
/// upper bound.
pub fn forward_gradient<F>(f: &mut F, x: &[f64], fx: f64, h: &[f64], bounds: &Bounds) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let step = if x[i] + h[i] <= bounds.upper[i] { h[i] } else { -h[i] };
        if x[i] + step < bounds.lower[i] {
            continue;
        }
        p[i] = x[i] + step;
        g[i] = (f(&p) - fx) / step;
        p[i] = x[i];
    }
    g
}
