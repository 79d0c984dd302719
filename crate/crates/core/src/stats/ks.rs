//! One-sample Kolmogorov–Smirnov test against a continuous CDF.

/// Result of a one-sample KS test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsOutcome {
    /// True when the sample is compatible with the reference at `level`.
    pub fn passes(&self, level: f64) -> bool {
        self.p_value > level
    }
}

pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs: Vec<f64> = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        d.max(above).max(below)
    })
}

/// Asymptotic Kolmogorov tail with Stephens' finite-sample correction.
pub fn kolmogorov_p_value(statistic: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * statistic;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if (k as i64) % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsOutcome {
    let statistic = ks_statistic(samples, cdf);
    KsOutcome { statistic, p_value: kolmogorov_p_value(statistic, samples.len()) }
}
