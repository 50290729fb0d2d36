//! Shared numerical kernel: weighted least squares, weighted Lasso, sigmoid and
//! the seeded generator.

mod lasso;
mod rng;
mod wls;

pub use lasso::{lambda_max, lasso_fit, kkt_violation, LassoFit};
pub use rng::Rng;
pub use wls::{wls_solve, WlsProblem};

use crate::scalar::Real;

/// Logistic function, evaluated without overflow for large `|z|`.
pub fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}
