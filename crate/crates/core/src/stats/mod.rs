//! Numerical kernels shared by the rest of the crate: special functions,
//! the chi-square distribution, a Jacobi eigensolver, Adam, a KS test, and
//! the seeded random stream.

pub mod adam;
pub mod chi2;
pub mod ks;
pub mod linalg;
pub mod rng;
pub mod special;

pub use adam::{adam_update, AdamState, Direction};
pub use chi2::{chi2_cdf, chi2_isf_ln, chi2_ln_sf, chi2_quantile, Chi2Spec};
pub use ks::{ks_test, KsOutcome};
pub use linalg::{kron, max_eigenvalue_sym, min_eigenvalue_sym, symmetric_eigenvalues};
pub use rng::SeededRng;

/// Mean and normal-approximation 95% half-width (`1.96 * SE`).
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
