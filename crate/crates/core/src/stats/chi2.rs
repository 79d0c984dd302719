//! Chi-square distribution: CDF, quantile, and upper-tail inverse.

use super::special::{gamma_p, ln_gamma, ln_gamma_q};
use crate::error::{Error, Result};

/// A chi-square quantile request: degrees of freedom and lower-tail probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Spec {
    dof: u32,
    prob: f64,
}

impl Chi2Spec {
    pub fn new(dof: u32, prob: f64) -> Result<Self> {
        if dof < 1 {
            return Err(Error::InvalidArgument("chi-square dof must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&prob) {
            return Err(Error::InvalidArgument(format!(
                "chi-square probability must lie in [0, 1), got {prob}"
            )));
        }
        Ok(Self { dof, prob })
    }

    pub fn dof(&self) -> u32 {
        self.dof
    }

    pub fn prob(&self) -> f64 {
        self.prob
    }
}

pub fn chi2_cdf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(0.5 * dof as f64, 0.5 * x)
}

/// `ln(1 - CDF(x))`.
pub fn chi2_ln_sf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ln_gamma_q(0.5 * dof as f64, 0.5 * x)
}

pub fn chi2_pdf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return if dof == 2 { 0.5 } else { 0.0 };
    }
    let k = 0.5 * dof as f64;
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// `x` with `CDF(x) = prob`, found by a safeguarded Newton iteration.
pub fn chi2_quantile(spec: Chi2Spec) -> f64 {
    let (dof, p) = (spec.dof, spec.prob);
    if p == 0.0 {
        return 0.0;
    }
    // work on the smaller tail so that both ends stay accurate
    if p > 0.5 {
        return chi2_isf_ln(dof, (-p).ln_1p());
    }
    let (mut lo, mut hi) = (0.0, dof as f64 + 1.0);
    while chi2_cdf(hi, dof) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(x, dof) - p;
        if f.abs() <= 1e-14 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = chi2_pdf(x, dof);
        let newton = x - f / pdf;
        x = if pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    x
}

/// `x` with `ln(1 - CDF(x)) = ln_tail`; used when the tail is below machine precision.
pub fn chi2_isf_ln(dof: u32, ln_tail: f64) -> f64 {
    debug_assert!(ln_tail <= 0.0);
    if ln_tail == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, dof as f64 + 1.0);
    while chi2_ln_sf(hi, dof) > ln_tail {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let ln_sf = chi2_ln_sf(x, dof);
        let f = ln_sf - ln_tail;
        if f.abs() <= 1e-13 {
            break;
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // d/dx ln Q = -pdf / Q
        let slope = -(chi2_ln_pdf(x, dof) - ln_sf).exp();
        let newton = x - f / slope;
        x = if slope.is_finite() && slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    x
}

fn chi2_ln_pdf(x: f64, dof: u32) -> f64 {
    let k = 0.5 * dof as f64;
    (k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)
}
