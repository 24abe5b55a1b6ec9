//! Invariants of complete active-learning runs on small budgets.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rare_al::acquisition::AcquisitionOptions;
use rare_al::active::{run_experiment, ExperimentConfig, Mode, Trace};
use rare_al::problems::{multimodal, Evaluator, Problem};
use rare_al::Fidelity;

fn small(mode: Mode, problem: &Problem) -> ExperimentConfig {
    ExperimentConfig {
        mode,
        candidate_size: 256,
        estimate_size: 1024,
        fit_restarts: 3,
        refit_restarts: 1,
        acquisition: AcquisitionOptions { restarts: 4, n_seed: 2, screen: 32, ..Default::default() },
        ..ExperimentConfig::for_problem(problem)
    }
}

fn counted(f: Evaluator, n: Arc<AtomicUsize>) -> Evaluator {
    Arc::new(move |x: &[f64]| {
        n.fetch_add(1, Ordering::SeqCst);
        f(x)
    })
}

/// Wraps both models with call counters.
fn instrument(mut p: Problem) -> (Problem, Arc<AtomicUsize>, Arc<AtomicUsize>) {
    let (nh, nl) = (Arc::new(AtomicUsize::new(0)), Arc::new(AtomicUsize::new(0)));
    p.high = counted(p.high.clone(), nh.clone());
    p.low = p.low.take().map(|f| counted(f, nl.clone()));
    (p, nh, nl)
}

fn check_trace(t: &Trace, cfg: &ExperimentConfig) {
    let init = cfg.n_init_high + if cfg.mode == Mode::Bifi { cfg.n_init_low } else { 0 };
    assert!(t.records[..init].iter().all(|r| r.iter == 0));
    let mut prev = 0.0;
    for (k, r) in t.records.iter().enumerate() {
        let c = if r.fidelity == Fidelity::High { cfg.cost_high } else { cfg.cost_low };
        assert!((r.cost_total - prev - c).abs() <= 1e-9 * r.cost_total, "record {k}: cost step");
        assert!(r.cost_total > prev);
        prev = r.cost_total;
        if k >= init {
            assert_eq!(r.iter, k - init + 1);
        }
        if let Some(p) = r.pa_estimate {
            assert!((0.0..=1.0).contains(&p), "estimate {p}");
        }
    }
    assert!(t.records.last().unwrap().pa_estimate.is_some());
    let c = t.final_cost();
    assert!(c >= cfg.budget * (1.0 - 1e-9), "stopped at {c} below budget {}", cfg.budget);
    assert!(c < cfg.budget + cfg.cost_high.max(cfg.cost_low), "overshoot {c}");
}

#[test]
fn single_fidelity_run_invariants() {
    let (problem, nh, nl) = instrument(Problem::multimodal());
    let cfg = ExperimentConfig { n_init_high: 5, budget: 9.0, seed: 3, ..small(Mode::Single, &problem) };
    let t = run_experiment(&problem, &cfg).unwrap();
    check_trace(&t, &cfg);
    assert_eq!(t.records.len(), 9);
    assert_eq!(nh.load(Ordering::SeqCst), t.count(Fidelity::High));
    assert_eq!(nl.load(Ordering::SeqCst), 0);
}

#[test]
fn bi_fidelity_run_invariants() {
    let (problem, nh, nl) = instrument(Problem::cut_in(0.2, Some(1.0), 3.0).unwrap());
    let cfg = ExperimentConfig { n_init_high: 4, n_init_low: 10, budget: 9.0, seed: 5, ..small(Mode::Bifi, &problem) };
    let t = run_experiment(&problem, &cfg).unwrap();
    check_trace(&t, &cfg);
    assert_eq!(nh.load(Ordering::SeqCst), t.count(Fidelity::High));
    assert_eq!(nl.load(Ordering::SeqCst), t.count(Fidelity::Low));
    assert_eq!(t.count(Fidelity::High) - t.adaptive_count(Fidelity::High), 4);
    assert_eq!(t.count(Fidelity::Low) - t.adaptive_count(Fidelity::Low), 10);
}

#[test]
fn known_low_run_invariants() {
    let problem = Problem::cut_in(0.2, Some(1.0), 3.0).unwrap();
    let cfg = ExperimentConfig { n_init_high: 5, budget: 8.0, seed: 1, ..small(Mode::KnownLofi, &problem) };
    let t = run_experiment(&problem, &cfg).unwrap();
    check_trace(&t, &cfg);
    assert_eq!(t.count(Fidelity::Low), 0);
}

#[test]
fn runs_are_seed_deterministic() {
    let problem = Problem::multimodal();
    let cfg = ExperimentConfig { n_init_high: 5, budget: 7.0, seed: 11, ..small(Mode::Single, &problem) };
    let a = run_experiment(&problem, &cfg).unwrap();
    let b = run_experiment(&problem, &cfg).unwrap();
    assert_eq!(a, b);
    let c = run_experiment(&problem, &ExperimentConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.records, c.records);
}

/// An uninformative cheap model should be sampled less, relative to the
/// expensive one, than a cheap model that tracks it closely.
#[test]
fn uninformative_low_fidelity_is_sampled_less() {
    let noise: Evaluator = Arc::new(|x: &[f64]| {
        let h = ((x[0] * 12.9898 + x[1] * 78.233).sin() * 43_758.545_3).fract();
        0.05 * (h - 0.5)
    });
    let close: Evaluator = Arc::new(|x: &[f64]| multimodal(x) + 0.3 * (0.4 * x[0]).sin() + 0.1 * x[1]);
    let ratio = |low: Evaluator| {
        let problem = Problem { low: Some(low), cost_low: 0.2, ..Problem::multimodal() };
        let (mut n_low, mut n_high) = (0, 0);
        for seed in 0..3 {
            let cfg = ExperimentConfig { n_init_high: 6, n_init_low: 10, budget: 14.0, seed, ..small(Mode::Bifi, &problem) };
            let t = run_experiment(&problem, &cfg).unwrap();
            n_low += t.adaptive_count(Fidelity::Low);
            n_high += t.adaptive_count(Fidelity::High);
        }
        n_low as f64 / n_high.max(1) as f64
    };
    let (uninformative, informative) = (ratio(noise), ratio(close));
    assert!(uninformative < informative, "n_l/n_h {uninformative} vs {informative}");
}
