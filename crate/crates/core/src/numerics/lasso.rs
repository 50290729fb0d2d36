//! Weighted Lasso by cyclic coordinate descent with covariance updates.
//!
//! Objective, with `W = Σ w_m`:
//!
//! ```text
//! ½·(1/W)·Σ w_m (y_m − x_m·β)²  +  λ·Σ_{j≥1} |β_j|
//! ```
//!
//! Column 0 is the intercept and is never penalized. With this scaling the
//! optimality conditions read `|c_j(β)| ≤ λ` for zero coefficients and
//! `c_j(β) = λ·sign(β_j)` otherwise, where `c_j = (1/W)·Σ w_m x_mj r_m`.

use super::wls::{dot, WlsProblem};
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit<T = f64> {
    pub coefficients: Tensor<T>,
    pub converged: bool,
    pub iterations: usize,
    pub lambda: T,
}

/// Scaled normal equations shared by the solver and the diagnostics.
fn scaled_gram<T: Real>(p: &WlsProblem<T>) -> (Vec<T>, Vec<T>) {
    let (mut gram, mut rhs) = p.normal_equations();
    let total: T = p.weights().data().iter().copied().sum();
    for v in gram.iter_mut().chain(rhs.iter_mut()) {
        *v = *v / total;
    }
    (gram, rhs)
}

/// Weighted correlations `c_j = (1/W)·Σ w_m x_mj (y_m − x_m·β)`.
fn correlations<T: Real>(gram: &[T], rhs: &[T], beta: &[T]) -> Vec<T> {
    let p = rhs.len();
    (0..p)
        .map(|j| rhs[j] - dot(&gram[j * p..(j + 1) * p], beta))
        .collect()
}

/// Smallest λ for which every non-intercept coefficient is zero.
pub fn lambda_max<T: Real>(p: &WlsProblem<T>) -> T {
    let (gram, rhs) = scaled_gram(p);
    let mut beta = vec![T::zero(); rhs.len()];
    if gram[0] > T::zero() {
        beta[0] = rhs[0] / gram[0];
    }
    correlations(&gram, &rhs, &beta)
        .into_iter()
        .skip(1)
        .fold(T::zero(), |m, c| m.max(c.abs()))
}

/// Largest KKT violation of `beta` at penalty `lambda`; zero means optimal.
///
/// The intercept contributes `|c_0|`; a zero coefficient contributes
/// `max(0, |c_j| − λ)`; a nonzero one `|c_j − λ·sign(β_j)|`.
pub fn kkt_violation<T: Real>(p: &WlsProblem<T>, beta: &[T], lambda: T) -> T {
    let (gram, rhs) = scaled_gram(p);
    let c = correlations(&gram, &rhs, beta);
    let mut worst = c[0].abs();
    for j in 1..c.len() {
        let v = if beta[j] == T::zero() {
            (c[j].abs() - lambda).max(T::zero())
        } else {
            (c[j] - lambda * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[inline]
fn soft_threshold<T: Real>(z: T, t: T) -> T {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        T::zero()
    }
}

/// Fits the weighted Lasso. Stops when the largest coefficient change in a
/// sweep drops below `tol`; hitting `max_iter` sweeps returns the current
/// iterate with `converged = false`.
pub fn lasso_fit<T: Real>(p: &WlsProblem<T>, lambda: T, tol: T, max_iter: usize) -> LassoFit<T> {
    let n = p.n_cols();
    let (gram, rhs) = scaled_gram(p);
    let lambda = lambda.max(T::zero());
    let mut beta = vec![T::zero(); n];
    // grad[j] = rhs[j] − (G β)[j], kept current after every coordinate move.
    let mut grad = rhs.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut max_change = T::zero();
        for j in 0..n {
            let gjj = gram[j * n + j];
            let old = beta[j];
            let new = if gjj <= T::zero() {
                T::zero()
            } else {
                let z = grad[j] + gjj * old;
                if j == 0 {
                    z / gjj
                } else {
                    soft_threshold(z, lambda) / gjj
                }
            };
            let delta = new - old;
            if delta != T::zero() {
                beta[j] = new;
                let row = &gram[j * n..(j + 1) * n];
                for (g, &gjk) in grad.iter_mut().zip(row) {
                    *g = *g - gjk * delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    LassoFit {
        coefficients: Tensor::from_parts_unchecked(vec![n], beta),
        converged,
        iterations,
        lambda,
    }
}
