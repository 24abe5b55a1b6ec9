//! Analytic reliability benchmarks on the plane.

use std::f64::consts::SQRT_2;

/// Multi-modal limit-state function.
pub fn multimodal(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    ((1.5 + x1).powi(2) + 4.0) * (1.5 + x2) / 20.0 - ((7.5 + 5.0 * x1) / 2.0).sin() - 2.0
}

/// Four-branch function, the negated minimum of four branches.
pub fn four_branch(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let quad = 3.0 + 0.1 * (x1 - x2).powi(2);
    let diag = (x1 + x2) / SQRT_2;
    let b = [
        quad + diag,
        quad - diag,
        (x1 - x2) + 6.0 / SQRT_2,
        (x2 - x1) + 6.0 / SQRT_2,
    ];
    -b.iter().copied().fold(f64::INFINITY, f64::min)
}
